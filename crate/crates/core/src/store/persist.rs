//! Snapshot files: one `{db}.snapshot` per database, one document per line as
//! `{id} {rev} {deleted} {canonical body}`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Db, Revision, Store, StoredDoc, Tables};
use crate::wire::json_parse;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

fn snapshot_path(dir: &Path, db: Db) -> PathBuf {
    dir.join(format!("{}.snapshot", db.name()))
}

fn encode_table(store_docs: &[StoredDoc]) -> String {
    let mut out = String::new();
    for doc in store_docs {
        out.push_str(&format!(
            "{} {} {} {}\n",
            doc.id,
            doc.rev,
            doc.deleted,
            doc.body.to_canonical_string()
        ));
    }
    out
}

fn decode_line(line: &str) -> Result<StoredDoc, String> {
    let mut parts = line.splitn(4, ' ');
    let (Some(id), Some(rev), Some(deleted), Some(body)) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err("expected 4 fields".into());
    };
    if !super::valid_doc_id(id) {
        return Err(format!("invalid id {id:?}"));
    }
    let rev: Revision = rev.parse().map_err(|e: super::StoreError| e.to_string())?;
    let deleted = match deleted {
        "true" => true,
        "false" => false,
        other => return Err(format!("invalid deleted flag {other:?}")),
    };
    let body = json_parse(body.as_bytes()).map_err(|e| e.to_string())?;
    if body.get("_id").and_then(|v| v.as_str()) != Some(id) {
        return Err("body _id does not match".into());
    }
    Ok(StoredDoc {
        id: id.to_string(),
        rev,
        body,
        deleted,
    })
}

impl Store {
    /// Writes every database snapshot, replacing earlier ones atomically per
    /// file.
    pub fn persist(&self, dir: &Path) -> Result<(), PersistError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PersistError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tables = self.tables_snapshot();
        for db in Db::ALL {
            let docs: Vec<StoredDoc> = tables
                .table(db)
                .map(|t| t.values().cloned().collect())
                .unwrap_or_default();
            let path = snapshot_path(dir, db);
            let tmp = path.with_extension("snapshot.tmp");
            let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            file.write_all(encode_table(&docs).as_bytes())
                .and_then(|_| file.sync_all())
                .map_err(io_err(&tmp))?;
            fs::rename(&tmp, &path).map_err(io_err(&path))?;
        }
        Ok(())
    }

    /// Loads the snapshots in `dir`; missing files mean empty databases.
    pub fn restore(dir: &Path) -> Result<Store, PersistError> {
        let mut tables = Tables::default();
        for db in Db::ALL {
            let path = snapshot_path(dir, db);
            let text = match fs::read_to_string(&path) {
                Ok(text) => text,
                Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                Err(source) => return Err(PersistError::Io { path, source }),
            };
            let table = tables.table_mut(db);
            let line_count = text.lines().count();
            for (idx, line) in text.lines().enumerate() {
                let corrupt = |reason: String| PersistError::Corrupt {
                    path: path.clone(),
                    line: idx + 1,
                    reason,
                };
                if idx + 1 == line_count && !text.ends_with('\n') {
                    return Err(corrupt("truncated line (missing newline)".into()));
                }
                let doc = decode_line(line).map_err(corrupt)?;
                if table.insert(doc.id.clone(), doc).is_some() {
                    return Err(corrupt("duplicate document id".into()));
                }
            }
        }
        Ok(Store::from_tables(tables))
    }
}
