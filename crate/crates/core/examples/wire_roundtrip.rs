//! Builds a request, serializes it, then feeds the bytes back to the
//! incremental parser a few bytes at a time.

use smartcart::wire::{
    canonical_json, json_parse, parse_http_request, serialize_http_request, HttpRequest, Method,
    Parsed,
};

fn main() {
    let body = br#"{"name":"Milk","cost":350,"_id":"04A1B2C3D4E5F6"}"#;
    let req = HttpRequest::new(Method::Put, "/tags/04A1B2C3D4E5F6")
        .header("Content-Type", "application/json")
        .with_body(body.to_vec());
    let bytes = serialize_http_request(&req);
    print!("{}", String::from_utf8_lossy(&bytes));
    println!();

    // Bytes arrive in pieces; the parser asks for more until the body is in.
    let mut buf = Vec::new();
    for chunk in bytes.chunks(16) {
        buf.extend_from_slice(chunk);
        match parse_http_request(&buf) {
            Parsed::NeedMore => println!("{:>4} bytes: need more", buf.len()),
            Parsed::Complete(parsed, used) => {
                println!(
                    "{:>4} bytes: complete, used {used}, equal to original: {}",
                    buf.len(),
                    parsed == req
                );
            }
            Parsed::Malformed(why) => println!("malformed: {why}"),
        }
    }

    let value = json_parse(body).expect("valid json");
    println!(
        "canonical: {}",
        String::from_utf8_lossy(&canonical_json(&value))
    );
    match parse_http_request(b"GET /x HTTP/1.1\r\nContent-Length: nope\r\n\r\n") {
        Parsed::Malformed(why) => println!("bad header rejected: {why}"),
        other => println!("unexpected: {other:?}"),
    }
}
