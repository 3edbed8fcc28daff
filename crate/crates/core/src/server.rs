//! The served store: REST over TCP with a snapshot written after every
//! successful write, plus optional cart-control endpoints for a browser
//! front panel.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine as _;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::cart::{Button, CartConfig, CartEvent, DirectCart, TraceEntry};
use crate::display::{frame_to_ascii, render};
use crate::store::PersistError;
use crate::store::Store;
use crate::wire::{
    parse_http_request, serialize_http_response, HttpRequest, HttpResponse, Method, Parsed,
};

pub const DEFAULT_PORT: u16 = 8084;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    pub panel: bool,
    /// Static files for the panel; `GET /` serves `index.html` from here.
    pub panel_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            data_dir: PathBuf::from("data"),
            panel: false,
            panel_dir: None,
        }
    }
}

/// One event posted to a panel cart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PanelEvent {
    PowerOn,
    SwipeCard { uid: String },
    SwipeTag { uid: String },
    Button { button: Button },
}

impl From<PanelEvent> for CartEvent {
    fn from(ev: PanelEvent) -> Self {
        match ev {
            PanelEvent::PowerOn => CartEvent::PowerOn,
            PanelEvent::SwipeCard { uid } => CartEvent::CardSwiped(uid),
            PanelEvent::SwipeTag { uid } => CartEvent::TagSwiped(uid),
            PanelEvent::Button { button } => CartEvent::Button(button),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSnapshot {
    pub cart: String,
    pub phase: String,
    pub view: String,
    pub ascii: String,
    pub pbm_base64: String,
}

struct Panel {
    started: Instant,
    carts: Mutex<BTreeMap<String, DirectCart>>,
    assets: Option<PathBuf>,
}

/// The store plus its snapshot directory.
struct Persisted {
    store: Store,
    data_dir: PathBuf,
    /// Serializes snapshot writes; held across the write and the persist.
    write_lock: Mutex<()>,
}

struct Shared {
    db: Arc<Persisted>,
    panel: Option<Panel>,
}

impl Persisted {
    /// Store request with write-through persistence.
    fn store_request(&self, req: &HttpRequest) -> HttpResponse {
        if req.method == Method::Get {
            return self.store.handle_request(req);
        }
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let resp = self.store.handle_request(req);
        if (200..300).contains(&resp.status) {
            if let Err(e) = self.store.persist(&self.data_dir) {
                warn!("snapshot failed: {e}");
                return json_error(500, "snapshot_failed", &e.to_string());
            }
        }
        resp
    }
}

fn json_error(status: u16, error: &str, reason: &str) -> HttpResponse {
    let body = serde_json::json!({ "error": error, "reason": reason });
    json_ok(status, &body)
}

fn json_ok(status: u16, body: &impl Serialize) -> HttpResponse {
    let text = serde_json::to_string(body).expect("serializable");
    HttpResponse::new(status)
        .header("Content-Type", "application/json")
        .with_body(text.into_bytes())
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind port {port}: {source}")]
    Bind { port: u16, source: io::Error },
    #[error(transparent)]
    Restore(#[from] PersistError),
    #[error("cannot create {path}: {source}")]
    DataDir { path: PathBuf, source: io::Error },
}

impl Server {
    /// Restores the store from `data_dir` and binds the port. Port 0 picks
    /// a free port.
    pub fn bind(config: &ServerConfig) -> Result<Server, ServeError> {
        std::fs::create_dir_all(&config.data_dir).map_err(|source| ServeError::DataDir {
            path: config.data_dir.clone(),
            source,
        })?;
        let store = Store::restore(&config.data_dir)?;
        let listener =
            TcpListener::bind(("127.0.0.1", config.port)).map_err(|source| ServeError::Bind {
                port: config.port,
                source,
            })?;
        let panel = config.panel.then(|| Panel {
            started: Instant::now(),
            carts: Mutex::new(BTreeMap::new()),
            assets: config.panel_dir.clone(),
        });
        Ok(Server {
            listener,
            shared: Arc::new(Shared {
                db: Arc::new(Persisted {
                    store,
                    data_dir: config.data_dir.clone(),
                    write_lock: Mutex::new(()),
                }),
                panel,
            }),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener")
    }

    /// Accepts connections forever, one thread each.
    pub fn serve(self) -> io::Result<()> {
        info!("listening on {}", self.local_addr());
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let shared = Arc::clone(&self.shared);
            thread::spawn(move || {
                if let Err(e) = handle_connection(stream, &shared) {
                    log::debug!("connection ended: {e}");
                }
            });
        }
        Ok(())
    }

    /// Runs [`Server::serve`] on a background thread.
    pub fn spawn(self) -> SocketAddr {
        let addr = self.local_addr();
        thread::spawn(move || self.serve());
        addr
    }
}

fn handle_connection(mut stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    loop {
        match parse_http_request(&buf) {
            Parsed::Complete(req, used) => {
                buf.drain(..used);
                let resp = route(shared, &req);
                stream.write_all(&serialize_http_response(&resp))?;
                let close = req
                    .header_value("Connection")
                    .is_some_and(|v| v.eq_ignore_ascii_case("close"));
                if close {
                    break;
                }
                continue;
            }
            Parsed::Malformed(reason) => {
                let resp = json_error(400, "bad_request", &reason).header("Connection", "close");
                stream.write_all(&serialize_http_response(&resp))?;
                break;
            }
            Parsed::NeedMore => {}
        }
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    let _ = stream.shutdown(Shutdown::Both);
    Ok(())
}

fn route(shared: &Shared, req: &HttpRequest) -> HttpResponse {
    let path = req.path_only();
    if let Some(panel) = &shared.panel {
        if let Some(rest) = path.strip_prefix("/carts/") {
            return panel_route(shared, panel, req, rest);
        }
        if req.method == Method::Get && (path == "/" || path.starts_with("/panel/")) {
            return static_file(panel.assets.as_deref(), path);
        }
    }
    shared.db.store_request(req)
}

fn panel_route(shared: &Shared, panel: &Panel, req: &HttpRequest, rest: &str) -> HttpResponse {
    let (id, what) = rest.split_once('/').unwrap_or((rest, ""));
    if id.is_empty()
        || !id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
    {
        return json_error(400, "bad_request", "bad cart id");
    }
    let now = panel.started.elapsed().as_millis() as u64;
    let mut carts = panel.carts.lock().unwrap_or_else(|e| e.into_inner());
    let cart = carts.entry(id.to_string()).or_insert_with(|| {
        let db = Arc::clone(&shared.db);
        let mut cart = DirectCart::with_backend(
            CartConfig::default(),
            Arc::new(move |req| db.store_request(req)),
        );
        cart.deliver(now, CartEvent::PowerOn);
        cart
    });
    cart.advance(now);
    match (req.method, what) {
        (Method::Post, "events") => {
            let event: PanelEvent = match serde_json::from_slice(&req.body) {
                Ok(ev) => ev,
                Err(e) => return json_error(400, "bad_event", &e.to_string()),
            };
            cart.deliver(now, event.into());
            json_ok(200, &snapshot(id, cart))
        }
        (Method::Get, "frame") => json_ok(200, &snapshot(id, cart)),
        (Method::Get, "frame.pbm") => HttpResponse::new(200)
            .header("Content-Type", "image/x-portable-bitmap")
            .with_body(render(cart.view()).to_pbm()),
        (Method::Get, "trace") => json_ok(200, &cart.trace().to_vec() as &Vec<TraceEntry>),
        _ => json_error(404, "not_found", "no such cart endpoint"),
    }
}

fn snapshot(id: &str, cart: &DirectCart) -> FrameSnapshot {
    let frame = render(cart.view());
    FrameSnapshot {
        cart: id.to_string(),
        phase: cart.fsm().phase().label().to_string(),
        view: cart.view().label().to_string(),
        ascii: frame_to_ascii(&frame),
        pbm_base64: base64::engine::general_purpose::STANDARD.encode(frame.to_pbm()),
    }
}

fn static_file(root: Option<&Path>, path: &str) -> HttpResponse {
    let Some(root) = root else {
        return json_error(404, "not_found", "no panel assets configured");
    };
    let rel = match path {
        "/" => "index.html",
        p => p.trim_start_matches("/panel/"),
    };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return json_error(400, "bad_request", "bad asset path");
    }
    let full = root.join(rel);
    match std::fs::read(&full) {
        Ok(bytes) => {
            let kind = match full.extension().and_then(|e| e.to_str()) {
                Some("html") => "text/html; charset=utf-8",
                Some("js") => "text/javascript",
                Some("css") => "text/css",
                Some("json") => "application/json",
                Some("svg") => "image/svg+xml",
                _ => "application/octet-stream",
            };
            HttpResponse::new(200)
                .header("Content-Type", kind)
                .with_body(bytes)
        }
        Err(_) => json_error(404, "not_found", "no such asset"),
    }
}
