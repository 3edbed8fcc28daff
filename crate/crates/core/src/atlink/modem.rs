//! Modem side of the serial link: an ESP-01 stand-in that accepts the AT
//! subset and bridges a single TCP connection to the host's transport.

use super::{encode_reply, modem_parse_line, AtCommand, ModemReply, MAX_IPD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModemPhase {
    Idle,
    Joined,
    Connected,
    AwaitingPayload(usize),
}

/// What the host's transport reports back to the modem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetEvent {
    Connected,
    ConnectFailed,
    Data(Vec<u8>),
    Closed,
}

/// Requests from the modem to the host's transport.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportAction {
    Open { host: String, port: u16 },
    Send(Vec<u8>),
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModemInput<'a> {
    Command(AtCommand),
    Payload(&'a [u8]),
    Net(NetEvent),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModemOutput {
    pub serial: Vec<u8>,
    pub transport: Vec<TransportAction>,
}

impl ModemOutput {
    fn reply(&mut self, reply: ModemReply) {
        self.serial.extend(encode_reply(&reply));
    }

    fn extend(&mut self, other: ModemOutput) {
        self.serial.extend(other.serial);
        self.transport.extend(other.transport);
    }
}

#[derive(Debug, Clone)]
pub struct Modem {
    phase: ModemPhase,
    access_points: Vec<(String, String)>,
    connecting: bool,
    line: Vec<u8>,
    payload: Vec<u8>,
    /// Payload bytes accepted after a send prompt.
    pub bytes_accepted: u64,
    /// Payload bytes handed to the transport.
    pub bytes_forwarded: u64,
}

impl Modem {
    /// A modem that can join the given `(ssid, password)` networks.
    pub fn new(access_points: Vec<(String, String)>) -> Self {
        Self {
            phase: ModemPhase::Idle,
            access_points,
            connecting: false,
            line: Vec::new(),
            payload: Vec::new(),
            bytes_accepted: 0,
            bytes_forwarded: 0,
        }
    }

    pub fn phase(&self) -> ModemPhase {
        self.phase
    }

    pub fn connecting(&self) -> bool {
        self.connecting
    }

    /// Feeds raw serial bytes from the microcontroller: command lines, or
    /// payload bytes while a send is pending.
    pub fn feed_serial(&mut self, mut bytes: &[u8]) -> ModemOutput {
        let mut out = ModemOutput::default();
        while !bytes.is_empty() {
            if let ModemPhase::AwaitingPayload(want) = self.phase {
                let take = (want - self.payload.len()).min(bytes.len());
                let chunk = bytes[..take].to_vec();
                bytes = &bytes[take..];
                out.extend(self.step(ModemInput::Payload(&chunk)));
                continue;
            }
            let Some(nl) = bytes.iter().position(|&b| b == b'\n') else {
                self.line.extend_from_slice(bytes);
                break;
            };
            self.line.extend_from_slice(&bytes[..=nl]);
            bytes = &bytes[nl + 1..];
            let line = std::mem::take(&mut self.line);
            let trimmed = line
                .strip_suffix(b"\r\n")
                .or_else(|| line.strip_suffix(b"\n"))
                .unwrap_or(&line);
            if trimmed.is_empty() {
                continue;
            }
            match modem_parse_line(trimmed) {
                Ok(cmd) => out.extend(self.step(ModemInput::Command(cmd))),
                Err(_) => out.reply(ModemReply::Error),
            }
        }
        out
    }

    /// One transition of the modem state machine.
    pub fn step(&mut self, input: ModemInput<'_>) -> ModemOutput {
        let mut out = ModemOutput::default();
        match input {
            ModemInput::Command(cmd) => self.command(cmd, &mut out),
            ModemInput::Payload(bytes) => {
                let ModemPhase::AwaitingPayload(want) = self.phase else {
                    return out;
                };
                let take = (want - self.payload.len()).min(bytes.len());
                self.payload.extend_from_slice(&bytes[..take]);
                self.bytes_accepted += take as u64;
                if self.payload.len() == want {
                    let payload = std::mem::take(&mut self.payload);
                    self.bytes_forwarded += payload.len() as u64;
                    out.transport.push(TransportAction::Send(payload));
                    out.serial
                        .extend(format!("\r\nRecv {want} bytes\r\n\r\n").into_bytes());
                    out.reply(ModemReply::SendOk);
                    self.phase = ModemPhase::Connected;
                }
            }
            ModemInput::Net(event) => self.net(event, &mut out),
        }
        out
    }

    fn command(&mut self, cmd: AtCommand, out: &mut ModemOutput) {
        if self.connecting && !matches!(cmd, AtCommand::Reset) {
            out.reply(ModemReply::Error);
            return;
        }
        match (cmd, self.phase) {
            (AtCommand::Reset, phase) => {
                if matches!(
                    phase,
                    ModemPhase::Connected | ModemPhase::AwaitingPayload(_)
                ) || self.connecting
                {
                    out.transport.push(TransportAction::Close);
                }
                self.phase = ModemPhase::Idle;
                self.connecting = false;
                self.payload.clear();
                self.line.clear();
                out.serial
                    .extend(b"\r\nets Jan  8 2013,rst cause:2, boot mode:(3,7)\r\n\r\n");
                out.reply(ModemReply::Ready);
                out.reply(ModemReply::Ok);
            }
            (AtCommand::Ping, _) => out.reply(ModemReply::Ok),
            (AtCommand::JoinAp { ssid, password }, ModemPhase::Idle | ModemPhase::Joined) => {
                let known = self
                    .access_points
                    .iter()
                    .any(|(s, p)| *s == ssid && *p == password);
                if known {
                    self.phase = ModemPhase::Joined;
                    out.reply(ModemReply::WifiConnected);
                    out.reply(ModemReply::WifiGotIp);
                    out.serial.extend(b"\r\n");
                    out.reply(ModemReply::Ok);
                } else {
                    self.phase = ModemPhase::Idle;
                    out.reply(ModemReply::Error);
                }
            }
            (AtCommand::TcpStart { host, port }, ModemPhase::Joined) => {
                self.connecting = true;
                out.transport.push(TransportAction::Open { host, port });
            }
            (AtCommand::Send { length }, ModemPhase::Connected) => {
                self.phase = ModemPhase::AwaitingPayload(length);
                self.payload.clear();
                out.reply(ModemReply::Ok);
                out.reply(ModemReply::SendPrompt);
            }
            (AtCommand::Close, ModemPhase::Connected) => {
                out.transport.push(TransportAction::Close);
                self.phase = ModemPhase::Joined;
                out.reply(ModemReply::Closed);
                out.serial.extend(b"\r\n");
                out.reply(ModemReply::Ok);
            }
            _ => out.reply(ModemReply::Error),
        }
    }

    fn net(&mut self, event: NetEvent, out: &mut ModemOutput) {
        match event {
            NetEvent::Connected if self.connecting => {
                self.connecting = false;
                self.phase = ModemPhase::Connected;
                out.reply(ModemReply::Connect);
                out.serial.extend(b"\r\n");
                out.reply(ModemReply::Ok);
            }
            NetEvent::ConnectFailed if self.connecting => {
                self.connecting = false;
                out.reply(ModemReply::Error);
                out.reply(ModemReply::Closed);
            }
            NetEvent::Data(data)
                if matches!(
                    self.phase,
                    ModemPhase::Connected | ModemPhase::AwaitingPayload(_)
                ) =>
            {
                for chunk in data.chunks(MAX_IPD) {
                    out.reply(ModemReply::Ipd {
                        length: chunk.len(),
                        payload: chunk.to_vec(),
                    });
                }
            }
            NetEvent::Closed
                if matches!(
                    self.phase,
                    ModemPhase::Connected | ModemPhase::AwaitingPayload(_)
                ) =>
            {
                self.phase = ModemPhase::Joined;
                self.payload.clear();
                out.reply(ModemReply::Closed);
            }
            // Stale transport events for a link that no longer exists.
            _ => {}
        }
    }
}
