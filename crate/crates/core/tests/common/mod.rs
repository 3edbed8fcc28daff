//! Strategies and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use proptest::prelude::*;

use smartcart::atlink::{AtCommand, ModemReply, MAX_IPD, MAX_SEND};
use smartcart::cart::{CartConfig, CartEvent, DirectCart, Phase};
use smartcart::store::{Store, TagSeed, UserSeed};
use smartcart::wire::{HttpRequest, HttpResponse, JsonValue, Method};

pub const USER: &str = "6C92D391";
pub const TAGS: [(&str, &str, i64); 3] = [
    ("04A1B2C3D4E5F6", "Milk", 350),
    ("04A1B2C3D4E5F7", "Bread", 120),
    ("04A1B2C3D4E5F8", "Apples", 480),
];

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn scenario_path(name: &str) -> PathBuf {
    manifest_dir().join("scenarios").join(name)
}

pub fn golden(name: &str) -> String {
    let path = manifest_dir().join("tests").join("golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn demo_users() -> Vec<UserSeed> {
    vec![UserSeed {
        uid: USER.into(),
        name: "Yerlan Berdaliyev".into(),
        cash: 5000,
    }]
}

pub fn demo_tags() -> Vec<TagSeed> {
    TAGS.iter()
        .map(|(uid, name, cost)| TagSeed {
            uid: (*uid).into(),
            name: (*name).into(),
            cost: *cost,
        })
        .collect()
}

pub fn demo_store() -> Arc<Store> {
    let store = Store::new();
    store.seed(&demo_users(), &demo_tags(), false).unwrap();
    Arc::new(store)
}

/// A cart on `store` that has booted and is waiting for a card.
pub fn ready_cart(store: &Arc<Store>) -> DirectCart {
    let mut cart = DirectCart::new(CartConfig::default(), Arc::clone(store));
    cart.deliver(0, CartEvent::PowerOn);
    cart.advance(10_000);
    assert_eq!(cart.fsm().phase(), &Phase::AwaitCard);
    cart
}

pub fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

// ---- wire ----

fn header_name() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9-]{0,15}".prop_filter("framing headers are set by the serializer", |n| {
        !n.eq_ignore_ascii_case("content-length") && !n.eq_ignore_ascii_case("transfer-encoding")
    })
}

/// Header values as they survive parsing: visible ASCII with inner spaces,
/// no surrounding whitespace.
fn header_value() -> impl Strategy<Value = String> {
    prop_oneof![Just(String::new()), "[!-~]([ -~]{0,30}[!-~])?"]
}

fn headers() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec((header_name(), header_value()), 0..6)
}

fn body() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        1 => Just(Vec::new()),
        3 => prop::collection::vec(any::<u8>(), 1..300),
    ]
}

fn with_length(mut headers: Vec<(String, String)>, body: &[u8]) -> Vec<(String, String)> {
    if !body.is_empty() {
        headers.push(("Content-Length".into(), body.len().to_string()));
    }
    headers
}

pub fn method() -> impl Strategy<Value = Method> {
    prop_oneof![
        Just(Method::Get),
        Just(Method::Put),
        Just(Method::Post),
        Just(Method::Delete)
    ]
}

/// Well-formed requests: a body always travels with its Content-Length.
pub fn http_request() -> impl Strategy<Value = HttpRequest> {
    (method(), "/[A-Za-z0-9_.~/?=&%-]{0,40}", headers(), body()).prop_map(
        |(method, path, headers, body)| HttpRequest {
            method,
            path,
            headers: with_length(headers, &body),
            body,
        },
    )
}

pub fn http_response() -> impl Strategy<Value = HttpResponse> {
    (100u16..=599, "[A-Za-z][A-Za-z ]{0,20}", headers(), body()).prop_map(
        |(status, reason, headers, body)| HttpResponse {
            status,
            reason,
            headers: with_length(headers, &body),
            body,
        },
    )
}

/// Integer-only JSON trees of bounded depth.
pub fn json_value() -> impl Strategy<Value = JsonValue> {
    let leaf = prop_oneof![
        Just(JsonValue::Null),
        any::<bool>().prop_map(JsonValue::Bool),
        any::<i64>().prop_map(JsonValue::Int),
        any::<String>().prop_map(JsonValue::Str),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(JsonValue::Array),
            prop::collection::btree_map(any::<String>(), inner, 0..6).prop_map(JsonValue::Object),
        ]
    })
}

// ---- AT link ----

/// Strings as the firmware may send them: anything without a line break.
fn at_string() -> impl Strategy<Value = String> {
    "[^\r\n]{0,24}"
}

pub fn at_command() -> impl Strategy<Value = AtCommand> {
    prop_oneof![
        Just(AtCommand::Ping),
        Just(AtCommand::Reset),
        Just(AtCommand::Close),
        (at_string(), at_string())
            .prop_map(|(ssid, password)| AtCommand::JoinAp { ssid, password }),
        (any::<[u8; 4]>(), 1u16..).prop_map(|(ip, port)| AtCommand::TcpStart {
            host: std::net::Ipv4Addr::from(ip).to_string(),
            port,
        }),
        (1usize..=MAX_SEND).prop_map(|length| AtCommand::Send { length }),
    ]
}

pub fn modem_reply() -> impl Strategy<Value = ModemReply> {
    prop_oneof![
        Just(ModemReply::Ok),
        Just(ModemReply::Error),
        Just(ModemReply::Ready),
        Just(ModemReply::WifiConnected),
        Just(ModemReply::WifiGotIp),
        Just(ModemReply::Connect),
        Just(ModemReply::SendPrompt),
        Just(ModemReply::SendOk),
        Just(ModemReply::Closed),
        prop::collection::vec(any::<u8>(), 1..=MAX_IPD.min(400)).prop_map(|payload| {
            ModemReply::Ipd {
                length: payload.len(),
                payload,
            }
        }),
    ]
}

/// Cut points for splitting a buffer of `len` bytes into chunks.
pub fn cuts(len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..=len, 0..8).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

pub fn split_at_cuts<'a>(bytes: &'a [u8], cuts: &[usize]) -> Vec<&'a [u8]> {
    let mut chunks = Vec::new();
    let mut prev = 0;
    for &c in cuts {
        chunks.push(&bytes[prev..c]);
        prev = c;
    }
    chunks.push(&bytes[prev..]);
    chunks
}

// ---- processes ----

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_smartcart")
}

pub fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

/// A `serve` child process, killed on drop.
pub struct ServeProcess {
    pub child: std::process::Child,
    pub addr: String,
}

impl ServeProcess {
    pub fn start(data_dir: &Path) -> Self {
        let port = free_port();
        let child = std::process::Command::new(bin())
            .args(["serve", "--port", &port.to_string(), "--data-dir"])
            .arg(data_dir)
            .stderr(std::process::Stdio::null())
            .spawn()
            .expect("spawn serve");
        let addr = format!("127.0.0.1:{port}");
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(10);
        while std::net::TcpStream::connect(&addr).is_err() {
            assert!(
                std::time::Instant::now() < deadline,
                "server did not come up"
            );
            std::thread::sleep(std::time::Duration::from_millis(20));
        }
        Self { child, addr }
    }

    /// Hard kill, as in a crash.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for ServeProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Serve, seed, write, kill, restart: every document must come back with
/// the body and revision a shadow map predicts. Returns the number of
/// documents compared.
pub fn persistence_round_trip(dir: &Path) -> Result<usize, String> {
    use smartcart::client::HttpClient;
    use smartcart::wire::json_parse;
    use std::collections::BTreeMap;

    let data = dir.join("data");
    let users = write_json(
        dir,
        "users.json",
        &serde_json::to_value(demo_users()).unwrap(),
    );
    let tags = write_json(
        dir,
        "tags.json",
        &serde_json::to_value(demo_tags()).unwrap(),
    );

    // path -> expected (body without _rev, rev); None for deleted.
    let mut shadow: BTreeMap<String, Option<(JsonValue, String)>> = BTreeMap::new();
    let check = |client: &HttpClient, shadow: &BTreeMap<String, Option<(JsonValue, String)>>| {
        for (path, want) in shadow {
            let resp = client
                .send(&HttpRequest::new(Method::Get, path.clone()))
                .map_err(|e| e.to_string())?;
            match want {
                None if resp.status == 404 => {}
                Some((body, rev)) if resp.status == 200 => {
                    let mut got = json_parse(&resp.body).map_err(|e| e.to_string())?;
                    let got_rev = got
                        .remove("_rev")
                        .and_then(|r| r.as_str().map(String::from));
                    if &got != body || got_rev.as_deref() != Some(rev.as_str()) {
                        return Err(format!(
                            "{path}: got {got:?} at {got_rev:?}, want {body:?} at {rev}"
                        ));
                    }
                }
                _ => return Err(format!("{path}: unexpected status {}", resp.status)),
            }
        }
        Ok::<(), String>(())
    };

    let server = ServeProcess::start(&data);
    let out = std::process::Command::new(bin())
        .args(["seed", "--addr", &server.addr, "--users"])
        .arg(&users)
        .arg("--tags")
        .arg(&tags)
        .output()
        .map_err(|e| e.to_string())?;
    let printed = String::from_utf8_lossy(&out.stdout);
    if !out.status.success() || printed.trim() != "3 tags, 1 user" {
        return Err(format!("seed printed {printed:?}, status {}", out.status));
    }
    let client = HttpClient::new(server.addr.clone());
    let get = |path: &str| -> Result<(JsonValue, String), String> {
        let resp = client
            .send(&HttpRequest::new(Method::Get, path))
            .map_err(|e| e.to_string())?;
        let mut body = json_parse(&resp.body).map_err(|e| e.to_string())?;
        let rev = body
            .remove("_rev")
            .and_then(|r| r.as_str().map(String::from))
            .ok_or("no _rev")?;
        Ok((body, rev))
    };
    let rev_of = |resp: smartcart::wire::HttpResponse| -> Result<String, String> {
        let body = json_parse(&resp.body).map_err(|e| e.to_string())?;
        body.get("rev")
            .and_then(JsonValue::as_str)
            .map(String::from)
            .ok_or_else(|| format!("status {}", resp.status))
    };

    for path in std::iter::once(format!("/users/{USER}"))
        .chain(TAGS.iter().map(|t| format!("/tags/{}", t.0)))
    {
        let (body, rev) = get(&path)?;
        if !rev.starts_with("1-") {
            return Err(format!("{path}: seeded at {rev}"));
        }
        shadow.insert(path, Some((body, rev)));
    }

    // An update, a delete and a fresh document.
    let user_path = format!("/users/{USER}");
    let (mut body, rev) = shadow[&user_path].clone().unwrap();
    body.insert("cash", 4000);
    let mut sent = body.clone();
    sent.insert("_rev", rev);
    let resp = client
        .send(
            &HttpRequest::new(Method::Put, user_path.clone())
                .with_body(sent.to_canonical_string().into_bytes()),
        )
        .map_err(|e| e.to_string())?;
    shadow.insert(user_path, Some((body, rev_of(resp)?)));

    let tag_path = format!("/tags/{}", TAGS[0].0);
    let (_, rev) = shadow[&tag_path].clone().unwrap();
    let resp = client
        .send(&HttpRequest::new(
            Method::Delete,
            format!("{tag_path}?rev={rev}"),
        ))
        .map_err(|e| e.to_string())?;
    rev_of(resp)?;
    shadow.insert(tag_path, None);

    let new_path = "/tags/04DDDDDDDDDDDD".to_string();
    let mut fresh = JsonValue::object();
    fresh.insert("_id", "04DDDDDDDDDDDD");
    fresh.insert("name", "Tea");
    fresh.insert("cost", 90);
    let resp = client
        .send(
            &HttpRequest::new(Method::Put, new_path.clone())
                .with_body(fresh.to_canonical_string().into_bytes()),
        )
        .map_err(|e| e.to_string())?;
    shadow.insert(new_path, Some((fresh, rev_of(resp)?)));

    check(&client, &shadow)?;
    server.kill();

    let server = ServeProcess::start(&data);
    let client = HttpClient::new(server.addr.clone());
    check(&client, &shadow)?;
    Ok(shadow.len())
}
