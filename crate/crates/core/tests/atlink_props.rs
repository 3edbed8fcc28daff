mod common;

use std::collections::VecDeque;

use proptest::prelude::*;

use common::{at_command, cuts, demo_store, modem_reply, split_at_cuts, USER};
use smartcart::atlink::{
    driver_feed, encode_command, encode_reply, modem_parse_line, AtCommand, Driver, LinkOp,
    LinkResult, Modem, ModemInput, ModemPhase, ModemReply, NetEvent, TransportAction,
};
use smartcart::store::Store;
use smartcart::wire::{
    parse_http_request, serialize_http_request, serialize_http_response, HttpRequest, Method,
    Parsed,
};

/// Feeds chunks through `driver_feed` the way the firmware does: unconsumed
/// bytes carry over to the next chunk.
fn feed_chunks(chunks: &[&[u8]]) -> Vec<ModemReply> {
    let mut buf = Vec::new();
    let mut replies = Vec::new();
    for chunk in chunks {
        buf.extend_from_slice(chunk);
        let feed = driver_feed(&buf);
        replies.extend(feed.replies);
        buf.drain(..feed.consumed);
    }
    replies
}

#[test]
fn ipd_split_at_every_boundary() {
    let stream = b"+IPD,5:hello";
    let want = vec![ModemReply::Ipd {
        length: 5,
        payload: b"hello".to_vec(),
    }];
    for k in 0..=stream.len() {
        let (a, b) = stream.split_at(k);
        assert_eq!(feed_chunks(&[a, b]), want, "split at {k}");
    }
    let bytes: Vec<&[u8]> = stream.chunks(1).collect();
    assert_eq!(feed_chunks(&bytes), want, "byte by byte");
}

#[test]
fn ipd_payload_may_contain_line_breaks_and_keywords() {
    let feed = driver_feed(b"+IPD,8:OK\r\nERROR\r\nSEND OK\r\n");
    assert_eq!(
        feed.replies,
        [
            ModemReply::Ipd {
                length: 8,
                payload: b"OK\r\nERRO".to_vec()
            },
            ModemReply::SendOk,
        ]
    );
    // The leftover "R" line is noise.
    assert_eq!(feed.skipped, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn command_round_trip(cmd in at_command()) {
        let line = encode_command(&cmd);
        prop_assert!(line.ends_with(b"\r\n"));
        prop_assert_eq!(modem_parse_line(&line), Ok(cmd));
    }

    #[test]
    fn reply_stream_round_trip(replies in prop::collection::vec(modem_reply(), 0..12)) {
        let stream: Vec<u8> = replies.iter().flat_map(encode_reply).collect();
        let feed = driver_feed(&stream);
        prop_assert_eq!(feed.consumed, stream.len());
        prop_assert_eq!(feed.replies, replies);
    }
}

proptest! {
    #[test]
    fn tokenizing_ignores_chunking(
        (replies, cuts) in prop::collection::vec(modem_reply(), 0..10).prop_flat_map(|r| {
            let len = r.iter().map(|x| encode_reply(x).len()).sum();
            (Just(r), cuts(len))
        })
    ) {
        let stream: Vec<u8> = replies.iter().flat_map(encode_reply).collect();
        prop_assert_eq!(feed_chunks(&split_at_cuts(&stream, &cuts)), replies);
    }

    #[test]
    fn modem_survives_any_line(line in prop::collection::vec(any::<u8>(), 0..64)) {
        let mut modem = Modem::new(vec![("net".into(), "pw".into())]);
        let _ = modem_parse_line(&line);
        let out = modem.feed_serial(&line);
        // Garbage never reaches the network.
        prop_assert!(out.transport.iter().all(|a| !matches!(a, TransportAction::Send(_))));
    }

    /// Bytes accepted after a send prompt reach the transport unchanged and
    /// in order, however the serial stream is chunked.
    #[test]
    fn payload_is_conserved(
        payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 1..300), 1..5),
        chunk in 1usize..64,
    ) {
        let mut modem = connected_modem();
        let mut sent = Vec::new();
        let mut expected = Vec::new();
        for p in &payloads {
            let mut serial = encode_command(&AtCommand::Send { length: p.len() });
            serial.extend_from_slice(p);
            expected.extend_from_slice(p);
            for piece in serial.chunks(chunk) {
                for action in modem.feed_serial(piece).transport {
                    match action {
                        TransportAction::Send(bytes) => sent.extend(bytes),
                        other => prop_assert!(false, "unexpected {:?}", other),
                    }
                }
            }
        }
        prop_assert_eq!(modem.bytes_accepted, expected.len() as u64);
        prop_assert_eq!(modem.bytes_forwarded, modem.bytes_accepted);
        prop_assert_eq!(sent, expected);
    }

    /// No traffic leaves the modem unless a link is up.
    #[test]
    fn transport_sends_only_while_connected(inputs in prop::collection::vec(modem_input(), 0..40)) {
        let mut modem = Modem::new(vec![("net".into(), "pw".into())]);
        for input in &inputs {
            let before = modem.phase();
            let out = match input {
                Input::Command(c) => modem.step(ModemInput::Command(c.clone())),
                Input::Payload(p) => modem.step(ModemInput::Payload(p)),
                Input::Net(e) => modem.step(ModemInput::Net(e.clone())),
            };
            for action in &out.transport {
                if let TransportAction::Send(_) = action {
                    prop_assert!(matches!(before, ModemPhase::AwaitingPayload(_)), "send from {:?}", before);
                }
            }
            if out.serial.windows(5).any(|w| w == b"+IPD,") {
                prop_assert!(matches!(before, ModemPhase::Connected | ModemPhase::AwaitingPayload(_)));
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Input {
    Command(AtCommand),
    Payload(Vec<u8>),
    Net(NetEvent),
}

fn modem_input() -> impl Strategy<Value = Input> {
    prop_oneof![
        4 => prop_oneof![
            at_command(),
            Just(AtCommand::JoinAp { ssid: "net".into(), password: "pw".into() }),
            Just(AtCommand::TcpStart { host: "10.0.0.1".into(), port: 80 }),
            (1usize..8).prop_map(|length| AtCommand::Send { length }),
        ]
        .prop_map(Input::Command),
        2 => prop::collection::vec(any::<u8>(), 0..10).prop_map(Input::Payload),
        3 => prop_oneof![
            Just(NetEvent::Connected),
            Just(NetEvent::ConnectFailed),
            Just(NetEvent::Closed),
            prop::collection::vec(any::<u8>(), 1..10).prop_map(NetEvent::Data),
        ]
        .prop_map(Input::Net),
    ]
}

fn connected_modem() -> Modem {
    let mut modem = Modem::new(vec![("net".into(), "pw".into())]);
    modem.feed_serial(&encode_command(&AtCommand::JoinAp {
        ssid: "net".into(),
        password: "pw".into(),
    }));
    let out = modem.feed_serial(&encode_command(&AtCommand::TcpStart {
        host: "10.0.0.1".into(),
        port: 80,
    }));
    assert!(matches!(out.transport[..], [TransportAction::Open { .. }]));
    modem.step(ModemInput::Net(NetEvent::Connected));
    assert_eq!(modem.phase(), ModemPhase::Connected);
    modem
}

/// Driver, modem and an in-process store wired back to back. Serial writes
/// are delivered whole; the server answers each complete request and
/// keeps the connection open.
struct Bench<'a> {
    driver: Driver,
    modem: Modem,
    store: &'a Store,
    server_rx: Vec<u8>,
    open: bool,
    /// Serial bytes in flight towards the driver, delivered in `chunk`-sized pieces.
    to_driver: VecDeque<u8>,
    chunk: usize,
}

impl<'a> Bench<'a> {
    fn new(store: &'a Store, chunk: usize) -> Self {
        Self {
            driver: Driver::new("10.0.0.1", 80),
            modem: Modem::new(vec![("net".into(), "pw".into())]),
            store,
            server_rx: Vec::new(),
            open: false,
            to_driver: VecDeque::new(),
            chunk,
        }
    }

    fn run(&mut self, op: LinkOp) -> Result<LinkResult, String> {
        let out = self.driver.start(op, 0);
        let mut to_modem = out.write;
        if let Some(done) = out.done {
            return done;
        }
        for _ in 0..10_000 {
            if !to_modem.is_empty() {
                let out = self.modem.feed_serial(&std::mem::take(&mut to_modem));
                self.to_driver.extend(out.serial);
                for action in out.transport {
                    self.transport(action);
                }
            }
            if self.to_driver.is_empty() {
                continue;
            }
            let n = self.chunk.min(self.to_driver.len());
            let piece: Vec<u8> = self.to_driver.drain(..n).collect();
            let out = self.driver.on_serial(&piece, 0);
            to_modem.extend(out.write);
            if let Some(done) = out.done {
                assert!(
                    self.to_driver.is_empty(),
                    "trailing serial bytes after completion"
                );
                return done;
            }
        }
        panic!("link operation did not finish");
    }

    fn transport(&mut self, action: TransportAction) {
        let event = match action {
            TransportAction::Open { .. } => {
                self.open = true;
                NetEvent::Connected
            }
            TransportAction::Close => {
                self.open = false;
                self.server_rx.clear();
                return;
            }
            TransportAction::Send(bytes) => {
                assert!(self.open);
                self.server_rx.extend(bytes);
                match parse_http_request(&self.server_rx) {
                    Parsed::Complete(req, used) => {
                        self.server_rx.drain(..used);
                        NetEvent::Data(serialize_http_response(&self.store.handle_request(&req)))
                    }
                    Parsed::NeedMore => return,
                    Parsed::Malformed(reason) => panic!("server got a bad request: {reason}"),
                }
            }
        };
        let out = self.modem.step(ModemInput::Net(event));
        self.to_driver.extend(out.serial);
    }
}

fn bring_up(bench: &mut Bench) {
    assert_eq!(bench.run(LinkOp::Init), Ok(LinkResult::Ready));
    assert_eq!(
        bench.run(LinkOp::JoinAp {
            ssid: "net".into(),
            password: "pw".into()
        }),
        Ok(LinkResult::Ready)
    );
    assert_eq!(
        bench.run(LinkOp::Connect {
            host: "10.0.0.1".into(),
            port: 80
        }),
        Ok(LinkResult::Ready)
    );
}

#[test]
fn bridge_fetches_a_user_end_to_end() {
    let store = demo_store();
    for chunk in [1, 3, 7, 64, 4096] {
        let mut bench = Bench::new(&store, chunk);
        bring_up(&mut bench);
        let req =
            HttpRequest::new(Method::Get, format!("/users/{USER}")).header("Host", "10.0.0.1");
        let Ok(LinkResult::Response(resp)) = bench.run(LinkOp::Http {
            request: serialize_http_request(&req),
        }) else {
            panic!("no response with chunk {chunk}");
        };
        assert_eq!(resp.status, 200);
        assert!(String::from_utf8_lossy(&resp.body).contains("Yerlan Berdaliyev"));
        assert_eq!(bench.modem.bytes_accepted, bench.modem.bytes_forwarded);
    }
}

#[test]
fn bridge_carries_large_bodies_across_sends_and_ipd_frames() {
    let store = demo_store();
    let mut bench = Bench::new(&store, 97);
    bring_up(&mut bench);
    // A body bigger than one CIPSEND and one +IPD frame.
    let padding = "x".repeat(5000);
    let body = format!("{{\"_id\":\"BIG1\",\"note\":\"{padding}\"}}");
    let put = HttpRequest::new(Method::Put, "/users/BIG1").with_body(body.into_bytes());
    let Ok(LinkResult::Response(resp)) = bench.run(LinkOp::Http {
        request: serialize_http_request(&put),
    }) else {
        panic!("put failed");
    };
    assert_eq!(resp.status, 201);
    let get = HttpRequest::new(Method::Get, "/users/BIG1");
    let Ok(LinkResult::Response(resp)) = bench.run(LinkOp::Http {
        request: serialize_http_request(&get),
    }) else {
        panic!("get failed");
    };
    assert_eq!(resp.status, 200);
    assert!(resp.body.len() > 5000);
}

#[test]
fn wrong_password_fails_join() {
    let store = demo_store();
    let mut bench = Bench::new(&store, 16);
    assert_eq!(bench.run(LinkOp::Init), Ok(LinkResult::Ready));
    assert!(bench
        .run(LinkOp::JoinAp {
            ssid: "net".into(),
            password: "nope".into()
        })
        .is_err());
}

#[test]
fn driver_times_out_and_closes_the_link() {
    let mut driver = Driver::new("10.0.0.1", 80);
    let out = driver.start(
        LinkOp::Http {
            request: b"GET / HTTP/1.1\r\n\r\n".to_vec(),
        },
        0,
    );
    assert!(!out.write.is_empty());
    let deadline = driver.deadline().unwrap();
    assert!(driver.on_timer(deadline - 1).done.is_none());
    let out = driver.on_timer(deadline);
    assert!(matches!(out.done, Some(Err(_))));
    assert_eq!(modem_parse_line(&out.write), Ok(AtCommand::Close));
    assert!(!driver.busy());
}
