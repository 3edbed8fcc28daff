//! Two writers update the same user from the same revision. The first PUT
//! wins, the second gets 409 and must re-read before trying again.

use smartcart::store::Store;
use smartcart::wire::{json_parse, HttpRequest, JsonValue, Method};

fn put(path: &str, body: String) -> HttpRequest {
    HttpRequest::new(Method::Put, path).with_body(body.into_bytes())
}

fn rev(body: &[u8]) -> String {
    let v = json_parse(body).expect("json reply");
    let rev = v
        .get("rev")
        .or_else(|| v.get("_rev"))
        .and_then(JsonValue::as_str);
    rev.expect("reply carries a revision").to_string()
}

fn main() {
    let store = Store::new();
    let created = store.handle_request(&put(
        "/users/6C92D391",
        r#"{"cash":5000,"history":[],"name":"Yerlan"}"#.into(),
    ));
    let base = rev(&created.body);
    println!("created: {} rev {base}", created.status);

    let body = |rev: &str, cash: i64| {
        format!(r#"{{"_rev":"{rev}","cash":{cash},"history":[],"name":"Yerlan"}}"#)
    };
    let a = store.handle_request(&put("/users/6C92D391", body(&base, 4650)));
    let b = store.handle_request(&put("/users/6C92D391", body(&base, 4880)));
    println!(
        "writer A: {} {}",
        a.status,
        String::from_utf8_lossy(&a.body)
    );
    println!(
        "writer B: {} {}",
        b.status,
        String::from_utf8_lossy(&b.body)
    );

    // B re-reads and applies its change on top of A's.
    let current = store.handle_request(&HttpRequest::new(Method::Get, "/users/6C92D391"));
    let latest = rev(&current.body);
    let retry = store.handle_request(&put("/users/6C92D391", body(&latest, 4650 - 120)));
    println!("writer B retry: {} rev {}", retry.status, rev(&retry.body));

    let tag = store.handle_request(&put(
        "/tags/04A1B2C3D4E5F6",
        r#"{"cost":350,"name":"Milk"}"#.into(),
    ));
    let gone = store.handle_request(&HttpRequest::new(
        Method::Delete,
        format!("/tags/04A1B2C3D4E5F6?rev={}", rev(&tag.body)),
    ));
    let after = store.handle_request(&HttpRequest::new(Method::Get, "/tags/04A1B2C3D4E5F6"));
    println!("tag deleted: {}, then GET {}", gone.status, after.status);
    println!("conflicts so far: {}", store.conflict_count());
}
