//! Drives the AT-command link driver against the modem emulator, with the
//! modem's TCP side wired straight into an in-memory store. Prints the
//! serial traffic in both directions.

use smartcart::atlink::{Driver, LinkOp, LinkResult, Modem, ModemInput, NetEvent, TransportAction};
use smartcart::store::{Store, TagSeed};
use smartcart::wire::{
    parse_http_request, serialize_http_request, serialize_http_response, HttpRequest, Method,
    Parsed,
};

fn show(dir: &str, bytes: &[u8]) {
    for line in String::from_utf8_lossy(bytes).split_inclusive('\n') {
        println!("{dir} {}", line.escape_debug());
    }
}

fn main() {
    let store = Store::new();
    let tag = TagSeed {
        uid: "04A1B2C3D4E5F6".into(),
        name: "Milk".into(),
        cost: 350,
    };
    store.seed(&[], &[tag], false).expect("seed");

    let mut driver = Driver::new("10.0.0.1", 80);
    let mut modem = Modem::new(vec![("market1".into(), "secret".into())]);
    let request = serialize_http_request(&HttpRequest::new(Method::Get, "/tags/04A1B2C3D4E5F6"));
    let ops = [
        LinkOp::Init,
        LinkOp::JoinAp {
            ssid: "market1".into(),
            password: "secret".into(),
        },
        LinkOp::Connect {
            host: "10.0.0.1".into(),
            port: 80,
        },
        LinkOp::Http { request },
    ];

    let mut server_rx = Vec::new();
    for op in ops {
        match &op {
            LinkOp::Http { request } => println!("== Http ({} request bytes)", request.len()),
            other => println!("== {other:?}"),
        }
        let mut out = driver.start(op, 0);
        loop {
            if let Some(done) = out.done.take() {
                match done {
                    Ok(LinkResult::Response(resp)) => {
                        println!("-> {} {}", resp.status, String::from_utf8_lossy(&resp.body))
                    }
                    other => println!("-> {other:?}"),
                }
                break;
            }
            show(">>", &out.write);
            let reply = modem.feed_serial(&out.write);
            let mut serial = reply.serial;
            for action in reply.transport {
                let event = match action {
                    TransportAction::Open { .. } => Some(NetEvent::Connected),
                    TransportAction::Send(bytes) => {
                        server_rx.extend(bytes);
                        match parse_http_request(&server_rx) {
                            Parsed::Complete(req, used) => {
                                server_rx.drain(..used);
                                Some(NetEvent::Data(serialize_http_response(
                                    &store.handle_request(&req),
                                )))
                            }
                            _ => None,
                        }
                    }
                    TransportAction::Close => None,
                };
                if let Some(event) = event {
                    serial.extend(modem.step(ModemInput::Net(event)).serial);
                }
            }
            show("<<", &serial);
            out = driver.on_serial(&serial, 0);
        }
    }
}
