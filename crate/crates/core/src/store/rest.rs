//! REST routing: `GET|PUT|DELETE /{db}/{docid}` plus the `POST /_seed` bulk
//! loader.

use log::debug;

use super::schema::{TagSeed, UserSeed};
use super::{Db, Revision, Store, StoreError};
use crate::wire::{json_parse, HttpRequest, HttpResponse, JsonValue, Method};

pub(crate) fn json_response(status: u16, body: &JsonValue) -> HttpResponse {
    HttpResponse::new(status)
        .header("Content-Type", "application/json")
        .with_body(body.to_canonical_string().into_bytes())
}

fn error_response(status: u16, error: &str, reason: impl Into<String>) -> HttpResponse {
    let mut body = JsonValue::object();
    body.insert("error", error);
    body.insert("reason", reason.into());
    json_response(status, &body)
}

fn from_store_error(err: StoreError) -> HttpResponse {
    match err {
        StoreError::NotFound => error_response(404, "not_found", "missing"),
        StoreError::Conflict => error_response(409, "conflict", "document update conflict"),
        other => error_response(400, "bad_request", other.to_string()),
    }
}

fn ok_body(id: &str, rev: &Revision) -> JsonValue {
    let mut body = JsonValue::object();
    body.insert("ok", true);
    body.insert("id", id);
    body.insert("rev", rev.to_string());
    body
}

impl Store {
    /// Maps one HTTP request onto the store. Never panics on client input.
    pub fn handle_request(&self, req: &HttpRequest) -> HttpResponse {
        let path = req.path_only();
        let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        let resp = match (req.method, segments.as_slice()) {
            (Method::Post, ["_seed"]) => self.handle_seed(req),
            (method, [db, id]) if !id.is_empty() => match db.parse::<Db>() {
                Ok(db) => self.handle_doc(method, db, id, req),
                Err(e) => from_store_error(e),
            },
            _ => error_response(
                400,
                "bad_request",
                format!("no route for {} {}", req.method, path),
            ),
        };
        debug!("{} {} -> {}", req.method, req.path, resp.status);
        resp
    }

    fn handle_doc(&self, method: Method, db: Db, id: &str, req: &HttpRequest) -> HttpResponse {
        match method {
            Method::Get => match self.get_doc(db, id) {
                Ok((mut body, rev)) => {
                    body.insert("_rev", rev.to_string());
                    json_response(200, &body)
                }
                Err(e) => from_store_error(e),
            },
            Method::Put => {
                let mut body = match json_parse(&req.body) {
                    Ok(body @ JsonValue::Object(_)) => body,
                    Ok(_) => return error_response(400, "bad_request", "body must be an object"),
                    Err(e) => return error_response(400, "bad_request", e.to_string()),
                };
                let base = match body.remove("_rev") {
                    None => None,
                    Some(JsonValue::Str(s)) => match s.parse::<Revision>() {
                        Ok(rev) => Some(rev),
                        Err(e) => return from_store_error(e),
                    },
                    Some(_) => return error_response(400, "bad_request", "_rev must be a string"),
                };
                match self.put_doc(db, id, body, base.as_ref()) {
                    Ok(rev) => json_response(201, &ok_body(id, &rev)),
                    Err(e) => from_store_error(e),
                }
            }
            Method::Delete => {
                let rev = match req.query_param("rev").map(str::parse::<Revision>) {
                    Some(Ok(rev)) => rev,
                    Some(Err(e)) => return from_store_error(e),
                    None => {
                        // Without a revision a live document can only conflict.
                        return match self.get_doc(db, id) {
                            Ok(_) => from_store_error(self.conflict()),
                            Err(e) => from_store_error(e),
                        };
                    }
                };
                match self.delete_doc(db, id, &rev) {
                    Ok(rev) => json_response(200, &ok_body(id, &rev)),
                    Err(e) => from_store_error(e),
                }
            }
            Method::Post => {
                error_response(400, "bad_request", "POST is not supported on documents")
            }
        }
    }

    fn handle_seed(&self, req: &HttpRequest) -> HttpResponse {
        #[derive(serde::Deserialize)]
        struct SeedRequest {
            #[serde(default)]
            users: Vec<UserSeed>,
            #[serde(default)]
            tags: Vec<TagSeed>,
            #[serde(default)]
            reset: bool,
        }
        let parsed: SeedRequest = match serde_json::from_slice(&req.body) {
            Ok(p) => p,
            Err(e) => return error_response(400, "bad_request", e.to_string()),
        };
        match self.seed(&parsed.users, &parsed.tags, parsed.reset) {
            Ok(summary) => {
                let mut body = JsonValue::object();
                body.insert("ok", true);
                body.insert("users", summary.users as i64);
                body.insert("tags", summary.tags as i64);
                json_response(201, &body)
            }
            Err(e) => from_store_error(e),
        }
    }
}
