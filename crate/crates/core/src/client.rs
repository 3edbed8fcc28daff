//! Blocking HTTP client for the served store, one connection per request.

use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use crate::gate::StoreClient;
use crate::store::schema::{SeedSummary, TagSeed, UserSeed};
use crate::wire::{
    json_parse, parse_http_response, serialize_http_request, HttpRequest, HttpResponse, JsonValue,
    Method, Parsed,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{addr}: {source}")]
    Io {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("server answered {status}: {body}")]
    Status { status: u16, body: String },
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    addr: String,
    timeout: Duration,
}

impl HttpClient {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            timeout: Duration::from_secs(5),
        }
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    fn io(&self, source: std::io::Error) -> ClientError {
        ClientError::Io {
            addr: self.addr.clone(),
            source,
        }
    }

    pub fn send(&self, req: &HttpRequest) -> Result<HttpResponse, ClientError> {
        let target = self
            .addr
            .to_socket_addrs()
            .map_err(|e| self.io(e))?
            .next()
            .ok_or_else(|| self.io(std::io::ErrorKind::AddrNotAvailable.into()))?;
        let mut stream =
            TcpStream::connect_timeout(&target, self.timeout).map_err(|e| self.io(e))?;
        stream
            .set_read_timeout(Some(self.timeout))
            .map_err(|e| self.io(e))?;
        stream
            .set_write_timeout(Some(self.timeout))
            .map_err(|e| self.io(e))?;

        let mut req = req.clone();
        if req.header_value("Host").is_none() {
            req = req.header("Host", self.addr.clone());
        }
        req = req.header("Connection", "close");
        stream
            .write_all(&serialize_http_request(&req))
            .map_err(|e| self.io(e))?;

        let mut buf = Vec::new();
        let mut chunk = [0u8; 4096];
        loop {
            match parse_http_response(&buf) {
                Parsed::Complete(resp, _) => return Ok(resp),
                Parsed::Malformed(reason) => return Err(ClientError::BadResponse(reason)),
                Parsed::NeedMore => {}
            }
            let n = stream.read(&mut chunk).map_err(|e| self.io(e))?;
            if n == 0 {
                return Err(ClientError::BadResponse("connection closed early".into()));
            }
            buf.extend_from_slice(&chunk[..n]);
        }
    }

    /// Bulk-loads seed records through `POST /_seed`.
    pub fn seed(
        &self,
        users: &[UserSeed],
        tags: &[TagSeed],
        reset: bool,
    ) -> Result<SeedSummary, ClientError> {
        let body = serde_json::json!({ "users": users, "tags": tags, "reset": reset });
        let req = HttpRequest::new(Method::Post, "/_seed")
            .header("Content-Type", "application/json")
            .with_body(body.to_string().into_bytes());
        let resp = self.send(&req)?;
        if resp.status != 201 {
            return Err(ClientError::Status {
                status: resp.status,
                body: String::from_utf8_lossy(&resp.body).into_owned(),
            });
        }
        let body = json_parse(&resp.body).map_err(|e| ClientError::BadResponse(e.to_string()))?;
        let count = |key| {
            body.get(key)
                .and_then(JsonValue::as_i64)
                .and_then(|n| usize::try_from(n).ok())
                .ok_or_else(|| ClientError::BadResponse(format!("missing {key}")))
        };
        Ok(SeedSummary {
            users: count("users")?,
            tags: count("tags")?,
        })
    }
}

impl StoreClient for HttpClient {
    fn request(&mut self, req: &HttpRequest) -> Result<HttpResponse, String> {
        self.send(req).map_err(|e| e.to_string())
    }
}
