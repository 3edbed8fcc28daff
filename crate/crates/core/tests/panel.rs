mod common;

use std::time::Duration;

use smartcart::cart::SHOW_USER_MS;
use smartcart::client::HttpClient;
use smartcart::server::{FrameSnapshot, Server, ServerConfig};
use smartcart::store::PersistError;
use smartcart::wire::{HttpRequest, HttpResponse, Method};

struct Panel {
    client: HttpClient,
    _dir: tempfile::TempDir,
}

fn panel() -> Panel {
    let dir = tempfile::tempdir().unwrap();
    let assets = dir.path().join("assets");
    std::fs::create_dir(&assets).unwrap();
    std::fs::write(assets.join("index.html"), "<html>panel</html>").unwrap();
    std::fs::write(dir.path().join("secret.txt"), "nope").unwrap();
    let config = ServerConfig {
        port: 0,
        data_dir: dir.path().join("data"),
        panel: true,
        panel_dir: Some(assets),
    };
    let addr = Server::bind(&config).unwrap().spawn();
    let client = HttpClient::new(addr.to_string()).timeout(Duration::from_secs(5));
    client
        .seed(&common::demo_users(), &common::demo_tags(), false)
        .unwrap();
    Panel { client, _dir: dir }
}

impl Panel {
    fn get(&self, path: &str) -> HttpResponse {
        self.client
            .send(&HttpRequest::new(Method::Get, path))
            .unwrap()
    }

    fn post(&self, cart: &str, event: serde_json::Value) -> HttpResponse {
        let req = HttpRequest::new(Method::Post, format!("/carts/{cart}/events"))
            .header("Content-Type", "application/json")
            .with_body(event.to_string().into_bytes());
        self.client.send(&req).unwrap()
    }

    fn event(&self, cart: &str, event: serde_json::Value) -> FrameSnapshot {
        let resp = self.post(cart, event);
        assert_eq!(resp.status, 200, "{}", String::from_utf8_lossy(&resp.body));
        serde_json::from_slice(&resp.body).unwrap()
    }

    fn frame(&self, cart: &str) -> FrameSnapshot {
        let resp = self.get(&format!("/carts/{cart}/frame"));
        assert_eq!(resp.status, 200);
        serde_json::from_slice(&resp.body).unwrap()
    }
}

fn button(b: &str) -> serde_json::Value {
    serde_json::json!({"type": "button", "button": b})
}

#[test]
fn a_panel_cart_walks_through_a_session() {
    let p = panel();
    let shown = p.event(
        "c1",
        serde_json::json!({"type": "swipe_card", "uid": common::USER}),
    );
    assert_eq!(shown.view, "user");
    assert!(shown.ascii.contains("Yerlan"), "{}", shown.ascii);

    std::thread::sleep(Duration::from_millis(SHOW_USER_MS + 200));
    let prompt = p.frame("c1");
    assert_eq!(prompt.phase, "Scanning");

    // Paying for nothing changes nothing.
    let after = p.event("c1", button("pay"));
    assert_eq!(after.ascii, prompt.ascii);

    let mut last = prompt;
    for (uid, _, _) in common::TAGS {
        last = p.event("c1", serde_json::json!({"type": "swipe_tag", "uid": uid}));
    }
    assert_eq!(last.view, "items");
    assert_eq!(last.ascii, common::golden("stage7.txt"));

    let pbm = p.get("/carts/c1/frame.pbm");
    assert!(pbm.body.starts_with(b"P4\n128 64\n"));

    let trace: serde_json::Value = serde_json::from_slice(&p.get("/carts/c1/trace").body).unwrap();
    assert!(trace.as_array().is_some_and(|t| !t.is_empty()));

    // Other carts are independent.
    assert_eq!(p.frame("c2").view, "swipe_card");
}

#[test]
fn bad_requests_are_refused() {
    let p = panel();
    assert_eq!(
        p.post("c1", serde_json::json!({"type": "teleport"})).status,
        400
    );
    assert_eq!(
        p.post(
            "c1",
            serde_json::json!({"type": "button", "button": "eject"})
        )
        .status,
        400
    );
    assert_eq!(p.get("/carts/c1/nothing").status, 404);
    assert_eq!(p.get("/carts/bad%20id/frame").status, 400);
}

#[test]
fn store_and_static_files_pass_through() {
    let p = panel();
    let user = p.get(&format!("/users/{}", common::USER));
    assert_eq!(user.status, 200);
    assert!(String::from_utf8_lossy(&user.body).contains("Yerlan"));
    assert_eq!(p.get("/tags/04FFFFFFFFFFFF").status, 404);

    let index = p.get("/");
    assert_eq!(index.status, 200);
    assert_eq!(index.body, b"<html>panel</html>");
    assert_eq!(p.get("/panel/index.html").body, b"<html>panel</html>");
    assert_eq!(p.get("/panel/../secret.txt").status, 400);
    assert_eq!(p.get("/panel/missing.js").status, 404);
}

#[test]
fn panel_carts_write_through_to_disk() {
    let p = panel();
    // The session store is persisted: a restore sees the seeded user.
    let data = p._dir.path().join("data");
    let restored = smartcart::store::Store::restore(&data).map_err(|e: PersistError| e.to_string());
    assert!(restored
        .unwrap()
        .get_doc(smartcart::store::Db::Users, common::USER)
        .is_ok());
}
