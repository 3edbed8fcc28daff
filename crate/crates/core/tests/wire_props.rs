mod common;

use proptest::prelude::*;

use common::{http_request, http_response, json_value};
use smartcart::wire::{
    canonical_json, json_parse, parse_http_request, parse_http_response, serialize_http_request,
    serialize_http_response, Parsed,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn request_round_trip(req in http_request()) {
        let bytes = serialize_http_request(&req);
        prop_assert_eq!(parse_http_request(&bytes), Parsed::Complete(req, bytes.len()));
    }

    #[test]
    fn response_round_trip(resp in http_response()) {
        let bytes = serialize_http_response(&resp);
        prop_assert_eq!(parse_http_response(&bytes), Parsed::Complete(resp, bytes.len()));
    }

    #[test]
    fn canonical_json_is_a_fixed_point(v in json_value()) {
        let once = canonical_json(&v);
        let back = json_parse(&once).unwrap();
        prop_assert_eq!(&back, &v);
        prop_assert_eq!(canonical_json(&back), once);
    }
}

proptest! {
    #[test]
    fn every_proper_prefix_needs_more(req in http_request()) {
        let bytes = serialize_http_request(&req);
        for k in 0..bytes.len() {
            prop_assert_eq!(parse_http_request(&bytes[..k]), Parsed::NeedMore, "prefix {}", k);
        }
    }

    #[test]
    fn trailing_bytes_are_left_alone(a in http_request(), b in http_request()) {
        let first = serialize_http_request(&a);
        let mut both = first.clone();
        both.extend(serialize_http_request(&b));
        prop_assert_eq!(parse_http_request(&both), Parsed::Complete(a, first.len()));
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_http_request(&bytes);
        let _ = parse_http_response(&bytes);
        let _ = json_parse(&bytes);
    }

    #[test]
    fn key_order_does_not_change_the_encoding(
        pairs in prop::collection::vec(("[a-z]{1,6}", any::<i64>()), 0..8)
    ) {
        let forward: String = pairs.iter().map(|(k, v)| format!("\"{k}\":{v}")).collect::<Vec<_>>().join(",");
        let reverse: String = pairs.iter().rev().map(|(k, v)| format!("\"{k}\":{v}")).collect::<Vec<_>>().join(",");
        // Later duplicates win in both, so only compare when keys are unique.
        let mut keys: Vec<_> = pairs.iter().map(|(k, _)| k).collect();
        keys.sort();
        keys.dedup();
        prop_assume!(keys.len() == pairs.len());
        let a = json_parse(format!("{{{forward}}}").as_bytes()).unwrap();
        let b = json_parse(format!("{{{reverse}}}").as_bytes()).unwrap();
        prop_assert_eq!(canonical_json(&a), canonical_json(&b));
    }
}

#[test]
fn malformed_requests_are_rejected() {
    for raw in [
        &b"BREW /pot HTTP/1.1\r\n\r\n"[..],
        b"GET /x HTTP/1.0\r\n\r\n",
        b"GET /x HTTP/1.1\r\nContent-Length: x\r\n\r\n",
        b"GET /x HTTP/1.1\r\nContent-Length: 1\r\nContent-Length: 2\r\n\r\n",
        b"GET /x HTTP/1.1\r\nTransfer-Encoding: chunked\r\n\r\n",
        b"GET x HTTP/1.1\r\n\r\n",
    ] {
        assert!(
            matches!(parse_http_request(raw), Parsed::Malformed(_)),
            "{}",
            String::from_utf8_lossy(raw)
        );
    }
}
