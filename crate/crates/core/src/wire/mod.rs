//! Byte-level formats shared by the store server, the cart client and the
//! revision digest.

pub mod http;
pub mod json;

pub use http::{
    parse_http_request, parse_http_response, serialize_http_request, serialize_http_response,
    HttpRequest, HttpResponse, Method, Parsed, MAX_BODY, MAX_HEAD,
};
pub use json::{canonical_json, json_parse, JsonError, JsonValue};
