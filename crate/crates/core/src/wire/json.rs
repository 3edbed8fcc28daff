//! Integer-only JSON with a canonical byte encoding.
//!
//! Objects are kept in a `BTreeMap`, so member names are unique and iterate in
//! bytewise ascending order, which is exactly the canonical key order.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

const MAX_DEPTH: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JsonValue {
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
    Array(Vec<JsonValue>),
    Object(BTreeMap<String, JsonValue>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed json at byte {offset}: {reason}")]
pub struct JsonError {
    pub offset: usize,
    pub reason: String,
}

impl JsonValue {
    pub fn object() -> Self {
        JsonValue::Object(BTreeMap::new())
    }

    pub fn as_object(&self) -> Option<&BTreeMap<String, JsonValue>> {
        match self {
            JsonValue::Object(map) => Some(map),
            _ => None,
        }
    }

    pub fn as_object_mut(&mut self) -> Option<&mut BTreeMap<String, JsonValue>> {
        match self {
            JsonValue::Object(map) => Some(map),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[JsonValue]> {
        match self {
            JsonValue::Array(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            JsonValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            JsonValue::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            JsonValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Member lookup; `None` for non-objects and missing keys.
    pub fn get(&self, key: &str) -> Option<&JsonValue> {
        self.as_object().and_then(|m| m.get(key))
    }

    /// Inserts a member, turning `self` into an object first if needed.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<JsonValue>) {
        if !matches!(self, JsonValue::Object(_)) {
            *self = JsonValue::object();
        }
        if let JsonValue::Object(map) = self {
            map.insert(key.into(), value.into());
        }
    }

    pub fn remove(&mut self, key: &str) -> Option<JsonValue> {
        self.as_object_mut().and_then(|m| m.remove(key))
    }

    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        write_canonical(self, &mut out);
        out
    }

    /// Converts to a `serde_json::Value` for embedding in reports.
    pub fn to_serde(&self) -> serde_json::Value {
        match self {
            JsonValue::Null => serde_json::Value::Null,
            JsonValue::Bool(b) => serde_json::Value::Bool(*b),
            JsonValue::Int(n) => serde_json::Value::from(*n),
            JsonValue::Str(s) => serde_json::Value::String(s.clone()),
            JsonValue::Array(items) => {
                serde_json::Value::Array(items.iter().map(JsonValue::to_serde).collect())
            }
            JsonValue::Object(map) => serde_json::Value::Object(
                map.iter().map(|(k, v)| (k.clone(), v.to_serde())).collect(),
            ),
        }
    }

    /// Converts from `serde_json`, rejecting non-integer numbers.
    pub fn from_serde(value: &serde_json::Value) -> Result<Self, JsonError> {
        Ok(match value {
            serde_json::Value::Null => JsonValue::Null,
            serde_json::Value::Bool(b) => JsonValue::Bool(*b),
            serde_json::Value::Number(n) => {
                JsonValue::Int(n.as_i64().ok_or_else(|| JsonError {
                    offset: 0,
                    reason: format!("non-integer number {n}"),
                })?)
            }
            serde_json::Value::String(s) => JsonValue::Str(s.clone()),
            serde_json::Value::Array(items) => JsonValue::Array(
                items
                    .iter()
                    .map(JsonValue::from_serde)
                    .collect::<Result<_, _>>()?,
            ),
            serde_json::Value::Object(map) => {
                let mut out = BTreeMap::new();
                for (k, v) in map {
                    out.insert(k.clone(), JsonValue::from_serde(v)?);
                }
                JsonValue::Object(out)
            }
        })
    }
}

impl fmt::Display for JsonValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical_string())
    }
}

impl From<bool> for JsonValue {
    fn from(b: bool) -> Self {
        JsonValue::Bool(b)
    }
}

impl From<i64> for JsonValue {
    fn from(n: i64) -> Self {
        JsonValue::Int(n)
    }
}

impl From<&str> for JsonValue {
    fn from(s: &str) -> Self {
        JsonValue::Str(s.to_string())
    }
}

impl From<String> for JsonValue {
    fn from(s: String) -> Self {
        JsonValue::Str(s)
    }
}

impl From<Vec<JsonValue>> for JsonValue {
    fn from(items: Vec<JsonValue>) -> Self {
        JsonValue::Array(items)
    }
}

impl From<BTreeMap<String, JsonValue>> for JsonValue {
    fn from(map: BTreeMap<String, JsonValue>) -> Self {
        JsonValue::Object(map)
    }
}

/// Deterministic encoding: sorted keys, no insignificant whitespace,
/// shortest decimal integers.
pub fn canonical_json(value: &JsonValue) -> Vec<u8> {
    value.to_canonical_string().into_bytes()
}

fn write_canonical(value: &JsonValue, out: &mut String) {
    match value {
        JsonValue::Null => out.push_str("null"),
        JsonValue::Bool(true) => out.push_str("true"),
        JsonValue::Bool(false) => out.push_str("false"),
        JsonValue::Int(n) => out.push_str(&n.to_string()),
        JsonValue::Str(s) => write_string(s, out),
        JsonValue::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        JsonValue::Object(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(k, out);
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
    }
}

fn write_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{08}' => out.push_str("\\b"),
            '\u{0c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

pub fn json_parse(input: &[u8]) -> Result<JsonValue, JsonError> {
    let mut parser = Parser { input, pos: 0 };
    parser.skip_ws();
    let value = parser.value(0)?;
    parser.skip_ws();
    if parser.pos != input.len() {
        return Err(parser.error("trailing characters"));
    }
    Ok(value)
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, reason: impl Into<String>) -> JsonError {
        JsonError {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(b' ' | b'\t' | b'\n' | b'\r') = self.peek() {
            self.pos += 1;
        }
    }

    fn expect_literal(&mut self, lit: &[u8], value: JsonValue) -> Result<JsonValue, JsonError> {
        if self.input[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            Ok(value)
        } else {
            Err(self.error("invalid literal"))
        }
    }

    fn value(&mut self, depth: usize) -> Result<JsonValue, JsonError> {
        if depth > MAX_DEPTH {
            return Err(self.error("nesting too deep"));
        }
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'n') => self.expect_literal(b"null", JsonValue::Null),
            Some(b't') => self.expect_literal(b"true", JsonValue::Bool(true)),
            Some(b'f') => self.expect_literal(b"false", JsonValue::Bool(false)),
            Some(b'"') => Ok(JsonValue::Str(self.string()?)),
            Some(b'[') => self.array(depth),
            Some(b'{') => self.object(depth),
            Some(b'-' | b'0'..=b'9') => self.number(),
            Some(c) => Err(self.error(format!("unexpected character {:?}", c as char))),
        }
    }

    fn array(&mut self, depth: usize) -> Result<JsonValue, JsonError> {
        self.pos += 1;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(JsonValue::Array(items));
        }
        loop {
            self.skip_ws();
            items.push(self.value(depth + 1)?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(JsonValue::Array(items));
                }
                _ => return Err(self.error("expected ',' or ']'")),
            }
        }
    }

    fn object(&mut self, depth: usize) -> Result<JsonValue, JsonError> {
        self.pos += 1;
        let mut map = BTreeMap::new();
        self.skip_ws();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(JsonValue::Object(map));
        }
        loop {
            self.skip_ws();
            if self.peek() != Some(b'"') {
                return Err(self.error("expected member name"));
            }
            let key_at = self.pos;
            let key = self.string()?;
            self.skip_ws();
            if self.peek() != Some(b':') {
                return Err(self.error("expected ':'"));
            }
            self.pos += 1;
            self.skip_ws();
            let value = self.value(depth + 1)?;
            if map.insert(key.clone(), value).is_some() {
                return Err(JsonError {
                    offset: key_at,
                    reason: format!("duplicate key {key:?}"),
                });
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(JsonValue::Object(map));
                }
                _ => return Err(self.error("expected ',' or '}'")),
            }
        }
    }

    fn number(&mut self) -> Result<JsonValue, JsonError> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while let Some(b'0'..=b'9') = self.peek() {
            self.pos += 1;
        }
        let digits = &self.input[digits_start..self.pos];
        if digits.is_empty() {
            return Err(self.error("expected digits"));
        }
        if digits.len() > 1 && digits[0] == b'0' {
            return Err(JsonError {
                offset: start,
                reason: "leading zero".into(),
            });
        }
        if let Some(b'.' | b'e' | b'E') = self.peek() {
            return Err(JsonError {
                offset: start,
                reason: "non-integer number".into(),
            });
        }
        let text = std::str::from_utf8(&self.input[start..self.pos]).expect("ascii digits");
        text.parse::<i64>()
            .map(JsonValue::Int)
            .map_err(|_| JsonError {
                offset: start,
                reason: "integer out of 64-bit range".into(),
            })
    }

    fn hex4(&mut self) -> Result<u16, JsonError> {
        let slice = self
            .input
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| self.error("truncated \\u escape"))?;
        let text = std::str::from_utf8(slice).map_err(|_| self.error("bad \\u escape"))?;
        let v = u16::from_str_radix(text, 16).map_err(|_| self.error("bad \\u escape"))?;
        self.pos += 4;
        Ok(v)
    }

    fn string(&mut self) -> Result<String, JsonError> {
        self.pos += 1;
        let mut buf: Vec<u8> = Vec::new();
        loop {
            let Some(b) = self.peek() else {
                return Err(self.error("unterminated string"));
            };
            self.pos += 1;
            match b {
                b'"' => break,
                b'\\' => {
                    let Some(esc) = self.peek() else {
                        return Err(self.error("unterminated escape"));
                    };
                    self.pos += 1;
                    let c = match esc {
                        b'"' => '"',
                        b'\\' => '\\',
                        b'/' => '/',
                        b'b' => '\u{08}',
                        b'f' => '\u{0c}',
                        b'n' => '\n',
                        b'r' => '\r',
                        b't' => '\t',
                        b'u' => {
                            let hi = self.hex4()?;
                            let code = if (0xD800..0xDC00).contains(&hi) {
                                if !self.input[self.pos..].starts_with(b"\\u") {
                                    return Err(self.error("lone high surrogate"));
                                }
                                self.pos += 2;
                                let lo = self.hex4()?;
                                if !(0xDC00..0xE000).contains(&lo) {
                                    return Err(self.error("invalid low surrogate"));
                                }
                                0x10000 + (((hi as u32) - 0xD800) << 10) + ((lo as u32) - 0xDC00)
                            } else if (0xDC00..0xE000).contains(&hi) {
                                return Err(self.error("lone low surrogate"));
                            } else {
                                hi as u32
                            };
                            char::from_u32(code).ok_or_else(|| self.error("invalid code point"))?
                        }
                        _ => return Err(self.error("invalid escape")),
                    };
                    let mut tmp = [0u8; 4];
                    buf.extend_from_slice(c.encode_utf8(&mut tmp).as_bytes());
                }
                0x00..=0x1f => return Err(self.error("control character in string")),
                _ => buf.push(b),
            }
        }
        String::from_utf8(buf).map_err(|_| self.error("invalid utf-8 in string"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(pairs: &[(&str, JsonValue)]) -> JsonValue {
        JsonValue::Object(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        )
    }

    #[test]
    fn empty_object_is_braces() {
        assert_eq!(canonical_json(&JsonValue::object()), b"{}");
    }

    #[test]
    fn keys_sorted() {
        let v = json_parse(br#"{"b":1,"a":2}"#).unwrap();
        assert_eq!(canonical_json(&v), br#"{"a":2,"b":1}"#);
    }

    #[test]
    fn user_doc_encodes_stably() {
        let text = br#"{ "_id": "6C92D391", "name": "Yerlan Berdaliyev", "cash": 5000,
            "history": [ {"at": 14000, "total": 300,
                          "items": [{"uid": "04A1B2C3", "name": "Milk", "cost": 300}]} ] }"#;
        let a = json_parse(text).unwrap();
        let b = json_parse(text).unwrap();
        assert_eq!(canonical_json(&a), canonical_json(&b));
        assert_eq!(
            a.to_canonical_string(),
            r#"{"_id":"6C92D391","cash":5000,"history":[{"at":14000,"items":[{"cost":300,"name":"Milk","uid":"04A1B2C3"}],"total":300}],"name":"Yerlan Berdaliyev"}"#
        );
    }

    #[test]
    fn parses_array_and_object() {
        assert_eq!(
            json_parse(b"[1,2,3]").unwrap(),
            JsonValue::Array(vec![1.into(), 2.into(), 3.into()])
        );
        assert_eq!(
            json_parse(br#"{"cash": 100}"#).unwrap(),
            obj(&[("cash", 100.into())])
        );
    }

    #[test]
    fn rejects_duplicates_and_fractions() {
        assert!(json_parse(br#"{"a":1,"a":2}"#).is_err());
        assert!(json_parse(b"1.5").is_err());
        assert!(json_parse(b"1e3").is_err());
        assert!(json_parse(b"01").is_err());
        assert!(json_parse(b"99999999999999999999").is_err());
        assert!(json_parse(b"[1,]").is_err());
        assert!(json_parse(b"{} x").is_err());
        assert!(json_parse(b"").is_err());
    }

    #[test]
    fn string_escapes_roundtrip() {
        let v = JsonValue::Str("a\"b\\c\n\u{1}é😀".into());
        let enc = canonical_json(&v);
        assert_eq!(json_parse(&enc).unwrap(), v);
        assert_eq!(
            json_parse(br#""\ud83d\ude00""#).unwrap(),
            JsonValue::Str("😀".into())
        );
        assert!(json_parse(br#""\ud83d""#).is_err());
    }

    #[test]
    fn deep_nesting_is_bounded() {
        let deep = "[".repeat(500) + &"]".repeat(500);
        assert!(json_parse(deep.as_bytes()).is_err());
    }

    #[test]
    fn extremes() {
        for n in [i64::MIN, i64::MAX, 0, -1] {
            let v = JsonValue::Int(n);
            assert_eq!(json_parse(&canonical_json(&v)).unwrap(), v);
        }
    }
}
