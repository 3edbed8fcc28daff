//! Revisioned JSON document store with Cloudant-style optimistic concurrency.
//!
//! Every write names the revision it builds on; a stale or missing base
//! revision is rejected with [`StoreError::Conflict`] and leaves the store
//! untouched. Deletes leave a tombstone that keeps the revision chain alive.

mod persist;
mod rest;
pub mod schema;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use thiserror::Error;

use crate::wire::{canonical_json, JsonValue};

pub use persist::PersistError;
pub use schema::{SeedSummary, TagDoc, TagSeed, UserDoc, UserSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Db {
    Users,
    Tags,
}

impl Db {
    pub const ALL: [Db; 2] = [Db::Users, Db::Tags];

    pub fn name(self) -> &'static str {
        match self {
            Db::Users => "users",
            Db::Tags => "tags",
        }
    }
}

impl fmt::Display for Db {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Db {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, StoreError> {
        match s {
            "users" => Ok(Db::Users),
            "tags" => Ok(Db::Tags),
            other => Err(StoreError::UnknownDb(other.to_string())),
        }
    }
}

/// `{generation}-{digest}` revision token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Revision {
    pub generation: u64,
    pub digest: String,
}

impl Revision {
    pub fn for_body(generation: u64, body: &JsonValue) -> Self {
        Self {
            generation,
            digest: format!("{:016x}", fnv1a64(&canonical_json(body))),
        }
    }
}

impl fmt::Display for Revision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.generation, self.digest)
    }
}

impl FromStr for Revision {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, StoreError> {
        let bad = || StoreError::BadRevision(s.to_string());
        let (generation, digest) = s.split_once('-').ok_or_else(bad)?;
        if generation.is_empty() || !generation.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let generation: u64 = generation.parse().map_err(|_| bad())?;
        let hex_ok = digest.len() == 16
            && digest
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if generation == 0 || !hex_ok {
            return Err(bad());
        }
        Ok(Self {
            generation,
            digest: digest.to_string(),
        })
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(PRIME))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredDoc {
    pub id: String,
    pub rev: Revision,
    /// Always an object carrying `_id`; never carries `_rev`.
    pub body: JsonValue,
    pub deleted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("document not found")]
    NotFound,
    #[error("document update conflict")]
    Conflict,
    #[error("unknown database {0:?}")]
    UnknownDb(String),
    #[error("invalid document id {0:?}")]
    BadId(String),
    #[error("invalid revision {0:?}")]
    BadRevision(String),
    #[error("invalid document body: {0}")]
    BadBody(String),
}

/// Document ids travel in URL paths and in whitespace-separated snapshot
/// lines, so they are restricted to visible ASCII without `/`, `?`, `&`.
pub fn valid_doc_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 256
        && id
            .bytes()
            .all(|b| b.is_ascii_graphic() && !matches!(b, b'/' | b'?' | b'&' | b'#' | b'%'))
        && !id.starts_with('_')
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(crate) struct Tables {
    pub(crate) dbs: BTreeMap<Db, BTreeMap<String, StoredDoc>>,
}

impl Tables {
    fn table(&self, db: Db) -> Option<&BTreeMap<String, StoredDoc>> {
        self.dbs.get(&db)
    }

    fn table_mut(&mut self, db: Db) -> &mut BTreeMap<String, StoredDoc> {
        self.dbs.entry(db).or_default()
    }
}

/// Counters that are observable but not part of the persisted state.
#[derive(Debug, Default)]
pub struct StoreStats {
    pub conflicts: AtomicU64,
    pub writes: AtomicU64,
}

/// Thread-safe store. Writers serialize on one lock, which makes every
/// per-document compare-and-set atomic.
#[derive(Debug, Default)]
pub struct Store {
    tables: RwLock<Tables>,
    stats: StoreStats,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn from_tables(tables: Tables) -> Self {
        Self {
            tables: RwLock::new(tables),
            stats: StoreStats::default(),
        }
    }

    pub fn stats(&self) -> &StoreStats {
        &self.stats
    }

    /// Number of conflict rejections since this store was created.
    pub fn conflict_count(&self) -> u64 {
        self.stats.conflicts.load(Ordering::Relaxed)
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Tables> {
        self.tables.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Tables> {
        self.tables.write().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn tables_snapshot(&self) -> Tables {
        self.read().clone()
    }

    /// Latest live revision of a document.
    pub fn get_doc(&self, db: Db, id: &str) -> Result<(JsonValue, Revision), StoreError> {
        let tables = self.read();
        match tables.table(db).and_then(|t| t.get(id)) {
            Some(doc) if !doc.deleted => Ok((doc.body.clone(), doc.rev.clone())),
            _ => Err(StoreError::NotFound),
        }
    }

    /// Raw record including tombstones.
    pub fn get_record(&self, db: Db, id: &str) -> Option<StoredDoc> {
        self.read().table(db).and_then(|t| t.get(id)).cloned()
    }

    /// All records of a database in id order, tombstones included.
    pub fn records(&self, db: Db) -> Vec<StoredDoc> {
        self.read()
            .table(db)
            .map(|t| t.values().cloned().collect())
            .unwrap_or_default()
    }

    /// Live documents of a database in id order.
    pub fn live_docs(&self, db: Db) -> Vec<(String, JsonValue, Revision)> {
        self.read()
            .table(db)
            .map(|t| {
                t.values()
                    .filter(|d| !d.deleted)
                    .map(|d| (d.id.clone(), d.body.clone(), d.rev.clone()))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn conflict(&self) -> StoreError {
        self.stats.conflicts.fetch_add(1, Ordering::Relaxed);
        StoreError::Conflict
    }

    /// Compare-and-set write. `base_rev` must name the current revision when
    /// the document exists (live or tombstoned) and be absent when it is
    /// live-absent. A tombstone may also be overwritten without a base, which
    /// continues its chain at the next generation.
    pub fn put_doc(
        &self,
        db: Db,
        id: &str,
        body: JsonValue,
        base_rev: Option<&Revision>,
    ) -> Result<Revision, StoreError> {
        if !valid_doc_id(id) {
            return Err(StoreError::BadId(id.to_string()));
        }
        let mut body = body;
        let Some(map) = body.as_object_mut() else {
            return Err(StoreError::BadBody("body must be an object".into()));
        };
        map.remove("_rev");
        match map.get("_id") {
            Some(JsonValue::Str(existing)) if existing != id => {
                return Err(StoreError::BadBody("_id does not match the path".into()));
            }
            Some(JsonValue::Str(_)) | None => {}
            Some(_) => return Err(StoreError::BadBody("_id must be a string".into())),
        }
        if map.keys().any(|k| k.starts_with('_') && k != "_id") {
            return Err(StoreError::BadBody("reserved member name".into()));
        }
        map.insert("_id".into(), JsonValue::Str(id.to_string()));

        let mut tables = self.write();
        let table = tables.table_mut(db);
        let generation = match (table.get(id), base_rev) {
            (None, None) => 1,
            (None, Some(_)) => return Err(self.conflict()),
            (Some(cur), None) if cur.deleted => cur.rev.generation + 1,
            (Some(_), None) => return Err(self.conflict()),
            (Some(cur), Some(base)) if &cur.rev == base => cur.rev.generation + 1,
            (Some(_), Some(_)) => return Err(self.conflict()),
        };
        let rev = Revision::for_body(generation, &body);
        table.insert(
            id.to_string(),
            StoredDoc {
                id: id.to_string(),
                rev: rev.clone(),
                body,
                deleted: false,
            },
        );
        self.stats.writes.fetch_add(1, Ordering::Relaxed);
        Ok(rev)
    }

    /// Tombstones a live document at `rev`.
    pub fn delete_doc(&self, db: Db, id: &str, rev: &Revision) -> Result<Revision, StoreError> {
        let mut tables = self.write();
        let table = tables.table_mut(db);
        let Some(cur) = table.get_mut(id).filter(|d| !d.deleted) else {
            return Err(StoreError::NotFound);
        };
        if &cur.rev != rev {
            return Err(self.conflict());
        }
        let tombstone = tombstone_body(id);
        cur.rev = Revision::for_body(cur.rev.generation + 1, &tombstone);
        cur.body = tombstone;
        cur.deleted = true;
        self.stats.writes.fetch_add(1, Ordering::Relaxed);
        Ok(cur.rev.clone())
    }

    /// Atomic bulk load of seed records. Validation happens before any write;
    /// on error the store is unchanged.
    pub fn seed(
        &self,
        users: &[UserSeed],
        tags: &[TagSeed],
        reset: bool,
    ) -> Result<SeedSummary, StoreError> {
        schema::validate_seeds(users, tags)?;
        let mut tables = self.write();
        let mut next = if reset {
            Tables::default()
        } else {
            tables.clone()
        };
        let docs = users
            .iter()
            .map(|u| (Db::Users, u.uid.clone(), u.to_body()))
            .chain(tags.iter().map(|t| (Db::Tags, t.uid.clone(), t.to_body())));
        for (db, id, body) in docs {
            let table = next.table_mut(db);
            let generation = match table.get(&id) {
                None => 1,
                Some(cur) if cur.deleted => cur.rev.generation + 1,
                Some(_) => return Err(StoreError::Conflict),
            };
            let rev = Revision::for_body(generation, &body);
            table.insert(
                id.clone(),
                StoredDoc {
                    id,
                    rev,
                    body,
                    deleted: false,
                },
            );
        }
        *tables = next;
        Ok(SeedSummary {
            users: users.len(),
            tags: tags.len(),
        })
    }
}

fn tombstone_body(id: &str) -> JsonValue {
    let mut body = JsonValue::object();
    body.insert("_deleted", true);
    body.insert("_id", id);
    body
}
