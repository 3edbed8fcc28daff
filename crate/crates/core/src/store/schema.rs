//! Typed views over the `users` and `tags` document bodies.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::wire::JsonValue;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurchasedItem {
    pub uid: String,
    pub name: String,
    pub cost: i64,
}

impl PurchasedItem {
    pub fn to_json(&self) -> JsonValue {
        let mut v = JsonValue::object();
        v.insert("uid", self.uid.as_str());
        v.insert("name", self.name.as_str());
        v.insert("cost", self.cost);
        v
    }

    fn from_json(v: &JsonValue) -> Option<Self> {
        Some(Self {
            uid: v.get("uid")?.as_str()?.to_string(),
            name: v.get("name")?.as_str()?.to_string(),
            cost: v.get("cost")?.as_i64()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurchaseRecord {
    /// Virtual time of the pay press, in milliseconds.
    pub at: i64,
    pub items: Vec<PurchasedItem>,
    pub total: i64,
}

impl PurchaseRecord {
    pub fn to_json(&self) -> JsonValue {
        let mut v = JsonValue::object();
        v.insert("at", self.at);
        v.insert(
            "items",
            JsonValue::Array(self.items.iter().map(PurchasedItem::to_json).collect()),
        );
        v.insert("total", self.total);
        v
    }

    fn from_json(v: &JsonValue) -> Option<Self> {
        Some(Self {
            at: v.get("at")?.as_i64()?,
            items: v
                .get("items")?
                .as_array()?
                .iter()
                .map(PurchasedItem::from_json)
                .collect::<Option<_>>()?,
            total: v.get("total")?.as_i64()?,
        })
    }
}

/// Body of a `users` document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserDoc {
    pub id: String,
    pub name: String,
    pub cash: i64,
    pub history: Vec<PurchaseRecord>,
}

impl UserDoc {
    pub fn from_json(v: &JsonValue) -> Option<Self> {
        let history = match v.get("history") {
            None => Vec::new(),
            Some(h) => h
                .as_array()?
                .iter()
                .map(PurchaseRecord::from_json)
                .collect::<Option<_>>()?,
        };
        Some(Self {
            id: v.get("_id")?.as_str()?.to_string(),
            name: v.get("name")?.as_str()?.to_string(),
            cash: v.get("cash")?.as_i64()?,
            history,
        })
    }

    pub fn to_json(&self) -> JsonValue {
        let mut v = JsonValue::object();
        v.insert("_id", self.id.as_str());
        v.insert("name", self.name.as_str());
        v.insert("cash", self.cash);
        v.insert(
            "history",
            JsonValue::Array(self.history.iter().map(PurchaseRecord::to_json).collect()),
        );
        v
    }

    /// Schema invariants: non-negative cash and history totals that match
    /// their items.
    pub fn is_consistent(&self) -> bool {
        self.cash >= 0
            && self
                .history
                .iter()
                .all(|r| r.total == r.items.iter().map(|i| i.cost).sum::<i64>())
    }
}

/// Body of a `tags` document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagDoc {
    pub uid: String,
    pub name: String,
    pub cost: i64,
}

impl TagDoc {
    pub fn from_json(v: &JsonValue) -> Option<Self> {
        Some(Self {
            uid: v.get("_id")?.as_str()?.to_string(),
            name: v.get("name")?.as_str()?.to_string(),
            cost: v.get("cost")?.as_i64()?,
        })
    }
}

/// Tag UIDs are 4-byte or 7-byte ISO 14443 identifiers in uppercase hex.
pub fn valid_tag_uid(uid: &str) -> bool {
    matches!(uid.len(), 8 | 14)
        && uid
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSeed {
    pub uid: String,
    pub name: String,
    pub cash: i64,
}

impl UserSeed {
    pub fn to_body(&self) -> JsonValue {
        UserDoc {
            id: self.uid.clone(),
            name: self.name.clone(),
            cash: self.cash,
            history: Vec::new(),
        }
        .to_json()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSeed {
    pub uid: String,
    pub name: String,
    pub cost: i64,
}

impl TagSeed {
    pub fn to_body(&self) -> JsonValue {
        let mut v = JsonValue::object();
        v.insert("_id", self.uid.as_str());
        v.insert("name", self.name.as_str());
        v.insert("cost", self.cost);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeedSummary {
    pub users: usize,
    pub tags: usize,
}

impl std::fmt::Display for SeedSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let plural = |n: usize| if n == 1 { "" } else { "s" };
        write!(
            f,
            "{} tag{}, {} user{}",
            self.tags,
            plural(self.tags),
            self.users,
            plural(self.users)
        )
    }
}

pub(crate) fn validate_seeds(users: &[UserSeed], tags: &[TagSeed]) -> Result<(), StoreError> {
    let mut seen = BTreeSet::new();
    for u in users {
        if !super::valid_doc_id(&u.uid) {
            return Err(StoreError::BadId(u.uid.clone()));
        }
        if u.cash < 0 {
            return Err(StoreError::BadBody(format!("negative cash for {}", u.uid)));
        }
        if !seen.insert(("users", u.uid.as_str())) {
            return Err(StoreError::BadBody(format!("duplicate user uid {}", u.uid)));
        }
    }
    for t in tags {
        if !valid_tag_uid(&t.uid) {
            return Err(StoreError::BadId(t.uid.clone()));
        }
        if t.cost < 0 {
            return Err(StoreError::BadBody(format!("negative cost for {}", t.uid)));
        }
        if !seen.insert(("tags", t.uid.as_str())) {
            return Err(StoreError::BadBody(format!("duplicate tag uid {}", t.uid)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Db, Store};

    #[test]
    fn summary_wording() {
        assert_eq!(
            SeedSummary { users: 1, tags: 3 }.to_string(),
            "3 tags, 1 user"
        );
        assert_eq!(SeedSummary::default().to_string(), "0 tags, 0 users");
    }

    #[test]
    fn seed_creates_generation_one() {
        let store = Store::new();
        let users = vec![UserSeed {
            uid: "6C92D391".into(),
            name: "Yerlan Berdaliyev".into(),
            cash: 5000,
        }];
        let tags = vec![TagSeed {
            uid: "04A1B2C3".into(),
            name: "Milk".into(),
            cost: 350,
        }];
        let summary = store.seed(&users, &tags, false).unwrap();
        assert_eq!(summary, SeedSummary { users: 1, tags: 1 });
        let (body, rev) = store.get_doc(Db::Users, "6C92D391").unwrap();
        assert_eq!(rev.generation, 1);
        let user = UserDoc::from_json(&body).unwrap();
        assert_eq!(user.name, "Yerlan Berdaliyev");
        assert!(user.history.is_empty());
        // Seeding again over live docs is rejected as a whole.
        assert_eq!(store.seed(&users, &[], false), Err(StoreError::Conflict));
        assert!(store.seed(&users, &tags, true).is_ok());
    }

    #[test]
    fn duplicate_seed_leaves_store_unchanged() {
        let store = Store::new();
        let tag = TagSeed {
            uid: "04A1B2C3".into(),
            name: "Milk".into(),
            cost: 1,
        };
        let before = store.tables_snapshot();
        assert!(store.seed(&[], &[tag.clone(), tag], false).is_err());
        assert_eq!(store.tables_snapshot(), before);
    }

    #[test]
    fn tag_uid_format() {
        assert!(valid_tag_uid("04A1B2C3"));
        assert!(valid_tag_uid("04A1B2C3D4E5F6"));
        assert!(!valid_tag_uid("04a1b2c3"));
        assert!(!valid_tag_uid("04A1B2C"));
    }

    #[test]
    fn user_doc_roundtrip() {
        let user = UserDoc {
            id: "u".into(),
            name: "n".into(),
            cash: 10,
            history: vec![PurchaseRecord {
                at: 5,
                items: vec![PurchasedItem {
                    uid: "04A1B2C3".into(),
                    name: "Milk".into(),
                    cost: 3,
                }],
                total: 3,
            }],
        };
        assert_eq!(UserDoc::from_json(&user.to_json()), Some(user.clone()));
        assert!(user.is_consistent());
    }
}
