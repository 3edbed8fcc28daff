//! HTTP/1.1 subset framing: one message per connection turn, `Content-Length`
//! bodies only, no chunked transfer coding.

use std::fmt;
use std::str::FromStr;

/// Largest accepted head (start line plus headers plus the blank line).
pub const MAX_HEAD: usize = 8 * 1024;
/// Largest accepted body.
pub const MAX_BODY: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Put,
    Post,
    Delete,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Put => "PUT",
            Method::Post => "POST",
            Method::Delete => "DELETE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "GET" => Ok(Method::Get),
            "PUT" => Ok(Method::Put),
            "POST" => Ok(Method::Post),
            "DELETE" => Ok(Method::Delete),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub reason: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

fn find_header<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.as_str())
}

fn set_content_length(headers: &mut Vec<(String, String)>, len: usize) {
    if let Some(slot) = headers
        .iter_mut()
        .find(|(n, _)| n.eq_ignore_ascii_case("content-length"))
    {
        slot.1 = len.to_string();
    } else {
        headers.push(("Content-Length".into(), len.to_string()));
    }
}

impl HttpRequest {
    pub fn new(method: Method, path: impl Into<String>) -> Self {
        Self {
            method,
            path: path.into(),
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    /// Sets the body and keeps `Content-Length` in step with it.
    pub fn with_body(mut self, body: impl Into<Vec<u8>>) -> Self {
        self.body = body.into();
        set_content_length(&mut self.headers, self.body.len());
        self
    }

    pub fn header_value(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }

    /// Path without the query string.
    pub fn path_only(&self) -> &str {
        self.path.split_once('?').map_or(&self.path, |(p, _)| p)
    }

    /// Value of `key` in the query string, if any.
    pub fn query_param(&self, key: &str) -> Option<&str> {
        let (_, query) = self.path.split_once('?')?;
        query
            .split('&')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

impl HttpResponse {
    pub fn new(status: u16) -> Self {
        Self {
            status,
            reason: reason_phrase(status).to_string(),
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn with_body(mut self, body: impl Into<Vec<u8>>) -> Self {
        self.body = body.into();
        set_content_length(&mut self.headers, self.body.len());
        self
    }

    pub fn header_value(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }
}

pub fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        201 => "Created",
        400 => "Bad Request",
        404 => "Not Found",
        409 => "Conflict",
        500 => "Internal Server Error",
        _ => "Unknown",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed<T> {
    Complete(T, usize),
    NeedMore,
    Malformed(String),
}

impl<T> Parsed<T> {
    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Parsed<U> {
        match self {
            Parsed::Complete(v, n) => Parsed::Complete(f(v), n),
            Parsed::NeedMore => Parsed::NeedMore,
            Parsed::Malformed(r) => Parsed::Malformed(r),
        }
    }
}

struct Head<'a> {
    start_line: &'a str,
    headers: Vec<(String, String)>,
    head_len: usize,
}

fn is_token_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b"!#$%&'*+-.^_`|~".contains(&b)
}

fn parse_head(input: &[u8]) -> Result<Option<Head<'_>>, String> {
    let window = &input[..input.len().min(MAX_HEAD)];
    let Some(end) = window.windows(4).position(|w| w == b"\r\n\r\n") else {
        if input.len() >= MAX_HEAD {
            return Err("head exceeds 8 KiB".into());
        }
        return Ok(None);
    };
    let head_len = end + 4;
    let text = std::str::from_utf8(&input[..end]).map_err(|_| "head is not utf-8".to_string())?;
    let mut lines = text.split("\r\n");
    let start_line = lines.next().unwrap_or_default();
    let mut headers = Vec::new();
    for line in lines {
        let (name, value) = line
            .split_once(':')
            .ok_or_else(|| format!("header line without colon: {line:?}"))?;
        if name.is_empty() || !name.bytes().all(is_token_char) {
            return Err(format!("invalid header name {name:?}"));
        }
        let value = value.trim_matches(|c| c == ' ' || c == '\t');
        if value.bytes().any(|b| b == b'\r' || b == b'\n') {
            return Err("bare CR or LF in header value".into());
        }
        headers.push((name.to_string(), value.to_string()));
    }
    Ok(Some(Head {
        start_line,
        headers,
        head_len,
    }))
}

fn body_length(headers: &[(String, String)]) -> Result<usize, String> {
    if find_header(headers, "transfer-encoding").is_some() {
        return Err("transfer-encoding is not supported".into());
    }
    let mut length = None;
    for (name, value) in headers {
        if name.eq_ignore_ascii_case("content-length") {
            if !value.bytes().all(|b| b.is_ascii_digit()) || value.is_empty() {
                return Err(format!("non-numeric Content-Length {value:?}"));
            }
            let n: usize = value
                .parse()
                .map_err(|_| format!("Content-Length out of range {value:?}"))?;
            if length.is_some_and(|prev| prev != n) {
                return Err("conflicting Content-Length headers".into());
            }
            length = Some(n);
        }
    }
    let n = length.unwrap_or(0);
    if n > MAX_BODY {
        return Err("body exceeds 64 KiB".into());
    }
    Ok(n)
}

/// Parses one request from the front of `input`. Call again with more bytes
/// appended after a `NeedMore`.
pub fn parse_http_request(input: &[u8]) -> Parsed<HttpRequest> {
    let head = match parse_head(input) {
        Ok(Some(head)) => head,
        Ok(None) => return Parsed::NeedMore,
        Err(reason) => return Parsed::Malformed(reason),
    };
    let mut parts = head.start_line.split(' ');
    let (Some(method), Some(path), Some(version), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Parsed::Malformed(format!("bad request line {:?}", head.start_line));
    };
    let Ok(method) = method.parse::<Method>() else {
        return Parsed::Malformed(format!("unsupported method {method:?}"));
    };
    if !path.starts_with('/') || path.bytes().any(|b| b.is_ascii_whitespace() || b < 0x21) {
        return Parsed::Malformed(format!("bad request target {path:?}"));
    }
    if version != "HTTP/1.1" {
        return Parsed::Malformed(format!("unsupported version {version:?}"));
    }
    let len = match body_length(&head.headers) {
        Ok(n) => n,
        Err(reason) => return Parsed::Malformed(reason),
    };
    let total = head.head_len + len;
    if input.len() < total {
        return Parsed::NeedMore;
    }
    let path = path.to_string();
    Parsed::Complete(
        HttpRequest {
            method,
            path,
            headers: head.headers,
            body: input[head.head_len..total].to_vec(),
        },
        total,
    )
}

pub fn parse_http_response(input: &[u8]) -> Parsed<HttpResponse> {
    let head = match parse_head(input) {
        Ok(Some(head)) => head,
        Ok(None) => return Parsed::NeedMore,
        Err(reason) => return Parsed::Malformed(reason),
    };
    let mut parts = head.start_line.splitn(3, ' ');
    let (Some(version), Some(status), reason) = (parts.next(), parts.next(), parts.next()) else {
        return Parsed::Malformed(format!("bad status line {:?}", head.start_line));
    };
    if version != "HTTP/1.1" {
        return Parsed::Malformed(format!("unsupported version {version:?}"));
    }
    let status = match status.parse::<u16>() {
        Ok(s) if (100..=599).contains(&s) && status.len() == 3 => s,
        _ => return Parsed::Malformed(format!("bad status code {status:?}")),
    };
    let len = match body_length(&head.headers) {
        Ok(n) => n,
        Err(reason) => return Parsed::Malformed(reason),
    };
    let total = head.head_len + len;
    if input.len() < total {
        return Parsed::NeedMore;
    }
    Parsed::Complete(
        HttpResponse {
            status,
            reason: reason.unwrap_or_default().to_string(),
            headers: head.headers,
            body: input[head.head_len..total].to_vec(),
        },
        total,
    )
}

fn write_headers(out: &mut Vec<u8>, headers: &[(String, String)], body: &[u8]) {
    for (name, value) in headers {
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(b": ");
        out.extend_from_slice(value.as_bytes());
        out.extend_from_slice(b"\r\n");
    }
    if !body.is_empty() && find_header(headers, "content-length").is_none() {
        out.extend_from_slice(format!("Content-Length: {}\r\n", body.len()).as_bytes());
    }
    out.extend_from_slice(b"\r\n");
    out.extend_from_slice(body);
}

pub fn serialize_http_request(req: &HttpRequest) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + req.body.len());
    out.extend_from_slice(req.method.as_str().as_bytes());
    out.push(b' ');
    out.extend_from_slice(req.path.as_bytes());
    out.extend_from_slice(b" HTTP/1.1\r\n");
    write_headers(&mut out, &req.headers, &req.body);
    out
}

pub fn serialize_http_response(resp: &HttpResponse) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + resp.body.len());
    out.extend_from_slice(format!("HTTP/1.1 {} {}\r\n", resp.status, resp.reason).as_bytes());
    write_headers(&mut out, &resp.headers, &resp.body);
    out
}
