//! Starts the store server on a free port with a throwaway data directory,
//! seeds it over HTTP and reads a document back.
//!
//! Pass `--panel` to also enable the cart-control endpoints and drive one
//! cart through a card swipe.

use smartcart::client::HttpClient;
use smartcart::server::{FrameSnapshot, Server, ServerConfig};
use smartcart::store::{TagSeed, UserSeed};
use smartcart::wire::{HttpRequest, Method};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let panel = std::env::args().any(|a| a == "--panel");
    let dir = std::env::temp_dir().join(format!("smartcart-live-{}", std::process::id()));
    let config = ServerConfig {
        port: 0,
        data_dir: dir.clone(),
        panel,
        panel_dir: None,
    };
    let addr = Server::bind(&config)?.spawn();
    println!("serving on {addr}, data in {}", dir.display());

    let client = HttpClient::new(addr.to_string());
    let users = [UserSeed {
        uid: "6C92D391".into(),
        name: "Yerlan Berdaliyev".into(),
        cash: 5000,
    }];
    let tags = [TagSeed {
        uid: "04A1B2C3D4E5F6".into(),
        name: "Milk".into(),
        cost: 350,
    }];
    println!("seeded: {}", client.seed(&users, &tags, true)?);

    let resp = client.send(&HttpRequest::new(Method::Get, "/users/6C92D391"))?;
    println!(
        "GET /users/6C92D391 -> {} {}",
        resp.status,
        String::from_utf8_lossy(&resp.body)
    );
    println!(
        "files: {:?}",
        std::fs::read_dir(&dir)?
            .flatten()
            .map(|e| e.file_name())
            .collect::<Vec<_>>()
    );

    if panel {
        let event = HttpRequest::new(Method::Post, "/carts/demo/events")
            .with_body(br#"{"type":"swipe_card","uid":"6C92D391"}"#.to_vec());
        let snap: FrameSnapshot = serde_json::from_slice(&client.send(&event)?.body)?;
        println!("cart {} in {}:\n{}", snap.cart, snap.phase, snap.ascii);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
