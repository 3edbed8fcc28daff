//! Emulated ESP-01 serial link.
//!
//! The firmware side ([`Driver`]) writes AT command lines and tokenizes the
//! modem's replies with [`driver_feed`]; the modem side ([`Modem`]) parses
//! command lines, tracks connection phase and bridges payload bytes to a
//! transport supplied by the host.

mod driver;
mod modem;

use std::fmt;

pub use driver::{driver_feed, Driver, DriverOutput, Feed, LinkOp, LinkResult};
pub use modem::{Modem, ModemInput, ModemOutput, ModemPhase, NetEvent, TransportAction};

/// Serial speed between the microcontroller and the Wi-Fi module.
pub const BAUD: u32 = 115_200;
/// Largest payload a single `AT+CIPSEND` may announce.
pub const MAX_SEND: usize = 2048;
/// Largest payload carried by one `+IPD` frame.
pub const MAX_IPD: usize = 1460;

/// Milliseconds needed to clock `bytes` through the serial line
/// (8N1 framing: 10 bit times per byte), rounded up.
pub fn serial_latency_ms(bytes: usize, baud: u32) -> u64 {
    let bits = bytes as u64 * 10 * 1000;
    bits.div_ceil(u64::from(baud))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtCommand {
    Ping,
    Reset,
    JoinAp { ssid: String, password: String },
    TcpStart { host: String, port: u16 },
    Send { length: usize },
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModemReply {
    Ok,
    Error,
    /// The `ready` banner printed after a reset.
    Ready,
    WifiConnected,
    WifiGotIp,
    Connect,
    SendPrompt,
    SendOk,
    Closed,
    Ipd {
        length: usize,
        payload: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Malformed(pub String);

impl fmt::Display for Malformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed AT line: {}", self.0)
    }
}

impl std::error::Error for Malformed {}

/// Dotted-quad IPv4 address check.
pub fn valid_host(host: &str) -> bool {
    host.parse::<std::net::Ipv4Addr>().is_ok()
}

fn push_quoted(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        if matches!(c, '"' | ',' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

/// Encodes one command as a CRLF-terminated line.
pub fn encode_command(cmd: &AtCommand) -> Vec<u8> {
    let mut line = String::from("AT");
    match cmd {
        AtCommand::Ping => {}
        AtCommand::Reset => line.push_str("+RST"),
        AtCommand::JoinAp { ssid, password } => {
            line.push_str("+CWJAP=");
            push_quoted(&mut line, ssid);
            line.push(',');
            push_quoted(&mut line, password);
        }
        AtCommand::TcpStart { host, port } => {
            line.push_str("+CIPSTART=\"TCP\",");
            push_quoted(&mut line, host);
            line.push_str(&format!(",{port}"));
        }
        AtCommand::Send { length } => line.push_str(&format!("+CIPSEND={length}")),
        AtCommand::Close => line.push_str("+CIPCLOSE"),
    }
    line.push_str("\r\n");
    line.into_bytes()
}

enum Param {
    Quoted(String),
    Bare(String),
}

fn split_params(text: &str) -> Result<Vec<Param>, Malformed> {
    let mut params = Vec::new();
    let mut chars = text.chars().peekable();
    loop {
        if chars.peek() == Some(&'"') {
            chars.next();
            let mut value = String::new();
            loop {
                match chars.next() {
                    None => return Err(Malformed("unterminated quote".into())),
                    Some('\\') => match chars.next() {
                        Some(c) => value.push(c),
                        None => return Err(Malformed("dangling escape".into())),
                    },
                    Some('"') => break,
                    Some(c) => value.push(c),
                }
            }
            params.push(Param::Quoted(value));
        } else {
            let mut value = String::new();
            while let Some(&c) = chars.peek() {
                if c == ',' {
                    break;
                }
                if c == '"' {
                    return Err(Malformed("stray quote".into()));
                }
                value.push(c);
                chars.next();
            }
            params.push(Param::Bare(value));
        }
        match chars.next() {
            None => return Ok(params),
            Some(',') => continue,
            Some(c) => return Err(Malformed(format!("unexpected {c:?} after parameter"))),
        }
    }
}

fn quoted(p: &Param) -> Result<&str, Malformed> {
    match p {
        Param::Quoted(s) => Ok(s),
        Param::Bare(s) => Err(Malformed(format!("expected quoted string, got {s:?}"))),
    }
}

fn number(p: &Param) -> Result<u64, Malformed> {
    match p {
        Param::Bare(s)
            if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && s.len() <= 10 =>
        {
            Ok(s.parse().expect("digits"))
        }
        _ => Err(Malformed("expected number".into())),
    }
}

/// Parses one command line (with or without its CRLF).
pub fn modem_parse_line(line: &[u8]) -> Result<AtCommand, Malformed> {
    let line = line.strip_suffix(b"\r\n").unwrap_or(line);
    let text = std::str::from_utf8(line).map_err(|_| Malformed("not utf-8".into()))?;
    if text.contains(['\r', '\n']) {
        return Err(Malformed("embedded line break".into()));
    }
    let Some(rest) = text.strip_prefix("AT") else {
        return Err(Malformed(format!("missing AT prefix in {text:?}")));
    };
    let (verb, args) = match rest.split_once('=') {
        Some((verb, args)) => (verb, Some(args)),
        None => (rest, None),
    };
    let params = args.map(split_params).transpose()?;
    let cmd = match (verb, params.as_deref()) {
        ("", None) => AtCommand::Ping,
        ("+RST", None) => AtCommand::Reset,
        ("+CIPCLOSE", None) => AtCommand::Close,
        ("+CWJAP", Some([ssid, password])) => AtCommand::JoinAp {
            ssid: quoted(ssid)?.to_string(),
            password: quoted(password)?.to_string(),
        },
        ("+CIPSTART", Some([kind, host, port])) => {
            if quoted(kind)? != "TCP" {
                return Err(Malformed("only TCP links are supported".into()));
            }
            let host = quoted(host)?.to_string();
            if !valid_host(&host) {
                return Err(Malformed(format!("bad host {host:?}")));
            }
            let port = u16::try_from(number(port)?)
                .ok()
                .filter(|p| *p > 0)
                .ok_or_else(|| Malformed("port out of range".into()))?;
            AtCommand::TcpStart { host, port }
        }
        ("+CIPSEND", Some([len])) => {
            let length = number(len)? as usize;
            if !(1..=MAX_SEND).contains(&length) {
                return Err(Malformed(format!("send length {length} out of range")));
            }
            AtCommand::Send { length }
        }
        _ => return Err(Malformed(format!("unknown command {text:?}"))),
    };
    Ok(cmd)
}

/// Encodes one modem reply the way the module prints it on the serial line.
pub fn encode_reply(reply: &ModemReply) -> Vec<u8> {
    match reply {
        ModemReply::Ok => b"OK\r\n".to_vec(),
        ModemReply::Error => b"ERROR\r\n".to_vec(),
        ModemReply::Ready => b"ready\r\n".to_vec(),
        ModemReply::WifiConnected => b"WIFI CONNECTED\r\n".to_vec(),
        ModemReply::WifiGotIp => b"WIFI GOT IP\r\n".to_vec(),
        ModemReply::Connect => b"CONNECT\r\n".to_vec(),
        ModemReply::SendPrompt => b"> ".to_vec(),
        ModemReply::SendOk => b"SEND OK\r\n".to_vec(),
        ModemReply::Closed => b"CLOSED\r\n".to_vec(),
        ModemReply::Ipd { length, payload } => {
            let mut out = format!("\r\n+IPD,{length}:").into_bytes();
            out.extend_from_slice(payload);
            out
        }
    }
}
