//! Firmware side of the serial link: reply tokenizer and the command
//! sequencer that turns link operations into AT exchanges.

use super::{encode_command, AtCommand, ModemReply, MAX_SEND};
use crate::wire::{parse_http_response, HttpResponse, Parsed};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Feed {
    pub replies: Vec<ModemReply>,
    pub consumed: usize,
    /// Unrecognized non-empty lines that were dropped.
    pub skipped: usize,
}

fn map_line(line: &[u8]) -> Option<ModemReply> {
    Some(match line {
        b"OK" => ModemReply::Ok,
        b"ERROR" | b"FAIL" => ModemReply::Error,
        b"ready" => ModemReply::Ready,
        b"WIFI CONNECTED" => ModemReply::WifiConnected,
        b"WIFI GOT IP" => ModemReply::WifiGotIp,
        b"CONNECT" => ModemReply::Connect,
        b"SEND OK" => ModemReply::SendOk,
        b"CLOSED" => ModemReply::Closed,
        _ => return None,
    })
}

/// Tokenizes as much of `input` as forms complete replies. Incomplete
/// trailing tokens (a partial line or a partial `+IPD` payload) are left
/// unconsumed, so feeding any chunking of a stream gives the same replies.
pub fn driver_feed(input: &[u8]) -> Feed {
    let mut feed = Feed::default();
    let mut pos = 0;
    loop {
        while matches!(input.get(pos), Some(b'\r' | b'\n')) {
            pos += 1;
        }
        let rest = &input[pos..];
        if rest.is_empty() {
            feed.consumed = pos;
            return feed;
        }
        if rest.starts_with(b"> ") {
            feed.replies.push(ModemReply::SendPrompt);
            pos += 2;
            continue;
        }
        if rest == b">" {
            feed.consumed = pos;
            return feed;
        }
        if let Some(after) = rest.strip_prefix(b"+IPD,") {
            let digits = after.iter().take_while(|b| b.is_ascii_digit()).count();
            match after.get(digits) {
                None if digits <= 5 => {
                    feed.consumed = pos;
                    return feed;
                }
                Some(b':') if (1..=5).contains(&digits) => {
                    let length: usize = std::str::from_utf8(&after[..digits])
                        .expect("digits")
                        .parse()
                        .expect("digits");
                    let start = 5 + digits + 1;
                    if rest.len() < start + length {
                        feed.consumed = pos;
                        return feed;
                    }
                    feed.replies.push(ModemReply::Ipd {
                        length,
                        payload: rest[start..start + length].to_vec(),
                    });
                    pos += start + length;
                    continue;
                }
                // Not a well-formed frame header: fall through to line handling.
                _ => {}
            }
        }
        let Some(end) = rest.windows(2).position(|w| w == b"\r\n") else {
            feed.consumed = pos;
            return feed;
        };
        match map_line(&rest[..end]) {
            Some(reply) => feed.replies.push(reply),
            None => feed.skipped += 1,
        }
        pos += end + 2;
    }
}

/// High-level operations the cart firmware asks of its link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkOp {
    /// Reset the module and wait until it is ready.
    Init,
    JoinAp {
        ssid: String,
        password: String,
    },
    Connect {
        host: String,
        port: u16,
    },
    /// One request/response exchange. Opens the TCP link first if the
    /// server closed it after the previous exchange.
    Http {
        request: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkResult {
    Ready,
    Response(HttpResponse),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DriverOutput {
    /// Bytes to write to the modem.
    pub write: Vec<u8>,
    /// Set when the current operation finished.
    pub done: Option<Result<LinkResult, String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Step {
    AwaitReady,
    AwaitOk,
    AwaitConnect,
    AwaitPrompt,
    AwaitSendOk,
    AwaitResponse,
}

#[derive(Debug, Clone)]
struct Active {
    op: LinkOp,
    step: Step,
    deadline: u64,
    /// Request bytes not yet handed to the modem.
    outgoing: Vec<u8>,
    chunk: usize,
    response: Vec<u8>,
}

/// Sequencer for one outstanding link operation at a time.
#[derive(Debug, Clone)]
pub struct Driver {
    host: String,
    port: u16,
    rx: Vec<u8>,
    active: Option<Active>,
    connected: bool,
    /// Terminal replies (OK/ERROR) still owed to abandoned commands.
    swallow: usize,
    pub skipped_lines: usize,
}

pub const INIT_TIMEOUT_MS: u64 = 3_000;
pub const JOIN_TIMEOUT_MS: u64 = 10_000;
pub const CONNECT_TIMEOUT_MS: u64 = 5_000;
pub const HTTP_TIMEOUT_MS: u64 = 5_000;

impl Driver {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        Self {
            host: host.into(),
            port,
            rx: Vec::new(),
            active: None,
            connected: false,
            swallow: 0,
            skipped_lines: 0,
        }
    }

    pub fn busy(&self) -> bool {
        self.active.is_some()
    }

    pub fn connected(&self) -> bool {
        self.connected
    }

    pub fn deadline(&self) -> Option<u64> {
        self.active.as_ref().map(|a| a.deadline)
    }

    /// Drops the current operation without reporting it.
    pub fn abort(&mut self) {
        self.active = None;
    }

    /// Begins `op`. `Init` also discards any operation in progress.
    pub fn start(&mut self, op: LinkOp, now: u64) -> DriverOutput {
        let mut out = DriverOutput::default();
        if matches!(op, LinkOp::Init) {
            self.active = None;
            self.rx.clear();
            self.swallow = 0;
            self.connected = false;
        } else if self.active.is_some() {
            out.done = Some(Err("link busy".into()));
            return out;
        }
        let (step, timeout, cmd) = match &op {
            LinkOp::Init => (Step::AwaitReady, INIT_TIMEOUT_MS, AtCommand::Reset),
            LinkOp::JoinAp { ssid, password } => (
                Step::AwaitOk,
                JOIN_TIMEOUT_MS,
                AtCommand::JoinAp {
                    ssid: ssid.clone(),
                    password: password.clone(),
                },
            ),
            LinkOp::Connect { host, port } => (
                Step::AwaitConnect,
                CONNECT_TIMEOUT_MS,
                AtCommand::TcpStart {
                    host: host.clone(),
                    port: *port,
                },
            ),
            LinkOp::Http { request } => {
                let mut active = Active {
                    op: op.clone(),
                    step: Step::AwaitConnect,
                    deadline: now + HTTP_TIMEOUT_MS,
                    outgoing: request.clone(),
                    chunk: 0,
                    response: Vec::new(),
                };
                if self.connected {
                    out.write = self.begin_send(&mut active);
                } else {
                    out.write = encode_command(&AtCommand::TcpStart {
                        host: self.host.clone(),
                        port: self.port,
                    });
                }
                self.active = Some(active);
                return out;
            }
        };
        if let LinkOp::Connect { host, port } = &op {
            self.host = host.clone();
            self.port = *port;
        }
        self.active = Some(Active {
            op,
            step,
            deadline: now + timeout,
            outgoing: Vec::new(),
            chunk: 0,
            response: Vec::new(),
        });
        out.write = encode_command(&cmd);
        out
    }

    fn begin_send(&self, active: &mut Active) -> Vec<u8> {
        active.chunk = active.outgoing.len().min(MAX_SEND);
        active.step = Step::AwaitPrompt;
        encode_command(&AtCommand::Send {
            length: active.chunk,
        })
    }

    /// Consumes bytes from the modem.
    pub fn on_serial(&mut self, bytes: &[u8], _now: u64) -> DriverOutput {
        self.rx.extend_from_slice(bytes);
        let feed = driver_feed(&self.rx);
        self.rx.drain(..feed.consumed);
        self.skipped_lines += feed.skipped;
        let mut out = DriverOutput::default();
        for reply in feed.replies {
            self.handle_reply(reply, &mut out);
        }
        out
    }

    fn finish(&mut self, out: &mut DriverOutput, result: Result<LinkResult, String>) {
        self.active = None;
        if out.done.is_none() {
            out.done = Some(result);
        }
    }

    fn handle_reply(&mut self, reply: ModemReply, out: &mut DriverOutput) {
        match reply {
            ModemReply::Connect => self.connected = true,
            ModemReply::Closed => self.connected = false,
            _ => {}
        }
        if self.swallow > 0 {
            if matches!(reply, ModemReply::Ok | ModemReply::Error) {
                self.swallow -= 1;
            }
            return;
        }
        let Some(active) = self.active.as_mut() else {
            return;
        };
        if let ModemReply::Ipd { payload, .. } = &reply {
            if matches!(active.op, LinkOp::Http { .. }) {
                active.response.extend_from_slice(payload);
            }
        }
        match (&active.step, &reply) {
            (Step::AwaitReady, ModemReply::Ready) => active.step = Step::AwaitOk,
            (Step::AwaitReady, _) => {}
            (Step::AwaitOk, ModemReply::Ok) => self.finish(out, Ok(LinkResult::Ready)),
            (Step::AwaitConnect, ModemReply::Ok) => {
                if matches!(active.op, LinkOp::Http { .. }) {
                    let mut active = self.active.take().expect("active");
                    out.write.extend(self.begin_send(&mut active));
                    self.active = Some(active);
                } else {
                    self.finish(out, Ok(LinkResult::Ready));
                }
            }
            (Step::AwaitPrompt, ModemReply::SendPrompt) => {
                let chunk: Vec<u8> = active.outgoing.drain(..active.chunk).collect();
                out.write.extend(chunk);
                active.step = Step::AwaitSendOk;
            }
            (Step::AwaitSendOk, ModemReply::SendOk) => {
                if active.outgoing.is_empty() {
                    active.step = Step::AwaitResponse;
                    self.check_response(out);
                } else {
                    let mut active = self.active.take().expect("active");
                    out.write.extend(self.begin_send(&mut active));
                    self.active = Some(active);
                }
            }
            (Step::AwaitResponse, ModemReply::Ipd { .. }) => self.check_response(out),
            (_, ModemReply::Error) => self.finish(out, Err("modem reported ERROR".into())),
            (Step::AwaitPrompt | Step::AwaitSendOk | Step::AwaitResponse, ModemReply::Closed) => {
                self.check_response(out);
                if self.active.is_some() {
                    self.finish(out, Err("connection closed before response".into()));
                }
            }
            _ => {}
        }
    }

    fn check_response(&mut self, out: &mut DriverOutput) {
        let Some(active) = self.active.as_ref() else {
            return;
        };
        if active.step != Step::AwaitResponse {
            return;
        }
        match parse_http_response(&active.response) {
            Parsed::Complete(resp, _) => self.finish(out, Ok(LinkResult::Response(resp))),
            Parsed::NeedMore => {}
            Parsed::Malformed(reason) => self.finish(out, Err(format!("bad response: {reason}"))),
        }
    }

    /// Fires the operation deadline if it has passed. A timed-out exchange
    /// closes the TCP link so a late response cannot leak into the next one.
    pub fn on_timer(&mut self, now: u64) -> DriverOutput {
        let mut out = DriverOutput::default();
        let Some(active) = &self.active else {
            return out;
        };
        if now < active.deadline {
            return out;
        }
        let op = active.op.clone();
        let step = active.step.clone();
        self.active = None;
        if step != Step::AwaitReady {
            // The abandoned command still owes a terminal reply, except when
            // it already produced one and we were waiting for data.
            if !matches!(step, Step::AwaitResponse | Step::AwaitSendOk) {
                self.swallow += 1;
            }
        }
        if matches!(op, LinkOp::Http { .. } | LinkOp::Connect { .. }) {
            out.write = encode_command(&AtCommand::Close);
            self.swallow += 1;
            self.connected = false;
        }
        out.done = Some(Err(format!("{} timed out", op_name(&op))));
        out
    }
}

fn op_name(op: &LinkOp) -> &'static str {
    match op {
        LinkOp::Init => "init",
        LinkOp::JoinAp { .. } => "join",
        LinkOp::Connect { .. } => "connect",
        LinkOp::Http { .. } => "http exchange",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn send_ok_line() {
        let feed = driver_feed(b"SEND OK\r\n");
        assert_eq!(feed.replies, vec![ModemReply::SendOk]);
        assert_eq!(feed.consumed, 9);
    }

    #[test]
    fn two_line_sequence() {
        let feed = driver_feed(b"WIFI CONNECTED\r\nWIFI GOT IP\r\n");
        assert_eq!(
            feed.replies,
            vec![ModemReply::WifiConnected, ModemReply::WifiGotIp]
        );
    }

    #[test]
    fn ipd_every_split_point() {
        let stream = b"+IPD,5:hello";
        let one_shot = driver_feed(stream);
        assert_eq!(
            one_shot.replies,
            vec![ModemReply::Ipd {
                length: 5,
                payload: b"hello".to_vec()
            }]
        );
        for split in 0..=stream.len() {
            let mut buf = stream[..split].to_vec();
            let first = driver_feed(&buf);
            buf.drain(..first.consumed);
            buf.extend_from_slice(&stream[split..]);
            let second = driver_feed(&buf);
            let mut replies = first.replies;
            replies.extend(second.replies);
            assert_eq!(replies, one_shot.replies, "split at {split}");
        }
    }

    #[test]
    fn partial_ipd_consumes_nothing() {
        let feed = driver_feed(b"OK\r\n+IPD,5:hel");
        assert_eq!(feed.replies, vec![ModemReply::Ok]);
        assert_eq!(feed.consumed, 4);
    }

    #[test]
    fn banners_are_skipped() {
        let feed = driver_feed(b"\r\nets Jan  8 2013\r\nRecv 5 bytes\r\nOK\r\n> ");
        assert_eq!(feed.replies, vec![ModemReply::Ok, ModemReply::SendPrompt]);
        assert_eq!(feed.skipped, 2);
    }

    #[test]
    fn lone_prompt_char_waits() {
        let feed = driver_feed(b">");
        assert!(feed.replies.is_empty());
        assert_eq!(feed.consumed, 0);
    }

    #[test]
    fn init_waits_for_ready_then_ok() {
        let mut d = Driver::new("184.173.163.133", 80);
        let out = d.start(LinkOp::Init, 0);
        assert_eq!(out.write, b"AT+RST\r\n");
        // A stale OK from before the reset must not complete the init.
        assert_eq!(d.on_serial(b"OK\r\n", 1).done, None);
        assert_eq!(d.on_serial(b"ready\r\n", 2).done, None);
        assert_eq!(d.on_serial(b"OK\r\n", 3).done, Some(Ok(LinkResult::Ready)));
    }

    #[test]
    fn timeout_closes_link() {
        let mut d = Driver::new("10.0.0.1", 80);
        d.start(
            LinkOp::Http {
                request: b"GET / HTTP/1.1\r\n\r\n".to_vec(),
            },
            0,
        );
        assert!(d.on_timer(10).done.is_none());
        let out = d.on_timer(HTTP_TIMEOUT_MS);
        assert_eq!(out.write, b"AT+CIPCLOSE\r\n");
        assert!(matches!(out.done, Some(Err(_))));
        assert!(!d.busy());
    }
}
