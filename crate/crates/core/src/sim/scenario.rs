//! Scenario files: which carts and gates exist, link parameters, seed data
//! and the timed user actions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::link::LinkConfig;
use crate::cart::{Button, CartConfig};
use crate::store::schema::{validate_seeds, TagSeed, UserSeed};

/// Links the simulator knows how to build.
pub const LINK_NAMES: [&str; 2] = ["store", "gate"];
pub const DEFAULT_HORIZON_MS: u64 = 600_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Seed records given inline or as a path relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSource<T> {
    File(String),
    Inline(Vec<T>),
}

impl<T> Default for SeedSource<T> {
    fn default() -> Self {
        SeedSource::Inline(Vec::new())
    }
}

impl<T: Clone> SeedSource<T> {
    pub fn records(&self) -> &[T] {
        match self {
            SeedSource::Inline(v) => v,
            SeedSource::File(_) => &[],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    #[serde(default)]
    pub users: SeedSource<UserSeed>,
    #[serde(default)]
    pub tags: SeedSource<TagSeed>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WifiConfig {
    pub ssid: String,
    pub password: String,
}

impl Default for WifiConfig {
    fn default() -> Self {
        let c = CartConfig::default();
        Self {
            ssid: c.ssid,
            password: c.password,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    SwipeCard {
        uid: String,
    },
    SwipeTag {
        uid: String,
    },
    Button {
        button: Button,
    },
    GatePass {
        uid: String,
    },
    Net {
        link: String,
        field: String,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub t: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(flatten)]
    pub action: Action,
}

fn default_horizon() -> u64 {
    DEFAULT_HORIZON_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub carts: Vec<String>,
    #[serde(default)]
    pub gates: Vec<String>,
    #[serde(default)]
    pub links: BTreeMap<String, LinkConfig>,
    #[serde(default)]
    pub wifi: WifiConfig,
    #[serde(default)]
    pub seed: SeedSpec,
    /// Reject swipes of UIDs that are not in the seed data.
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_horizon")]
    pub horizon_ms: u64,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn new(carts: &[&str]) -> Self {
        Self {
            name: String::new(),
            carts: carts.iter().map(|c| c.to_string()).collect(),
            gates: Vec::new(),
            links: BTreeMap::new(),
            wifi: WifiConfig::default(),
            seed: SeedSpec::default(),
            strict: false,
            horizon_ms: DEFAULT_HORIZON_MS,
            events: Vec::new(),
        }
    }

    pub fn users(&self) -> &[UserSeed] {
        self.seed.users.records()
    }

    pub fn tags(&self) -> &[TagSeed] {
        self.seed.tags.records()
    }

    pub fn link(&self, name: &str) -> LinkConfig {
        self.links.get(name).cloned().unwrap_or_default()
    }

    pub fn cart_config(&self) -> CartConfig {
        CartConfig {
            ssid: self.wifi.ssid.clone(),
            password: self.wifi.password.clone(),
            ..CartConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let carts: BTreeSet<&str> = self.carts.iter().map(String::as_str).collect();
        if carts.len() != self.carts.len() {
            return Err(invalid("carts", "duplicate cart id"));
        }
        if carts.contains("") {
            return Err(invalid("carts", "empty cart id"));
        }
        let gates: BTreeSet<&str> = self.gates.iter().map(String::as_str).collect();
        if gates.len() != self.gates.len() {
            return Err(invalid("gates", "duplicate gate lane"));
        }
        for (name, cfg) in &self.links {
            if !LINK_NAMES.contains(&name.as_str()) {
                return Err(invalid(format!("links.{name}"), "unknown link"));
            }
            cfg.validate()
                .map_err(|e| invalid(format!("links.{name}"), e))?;
        }
        validate_seeds(self.users(), self.tags()).map_err(|e| invalid("seed", e.to_string()))?;
        let users: BTreeSet<&str> = self.users().iter().map(|u| u.uid.as_str()).collect();
        let tags: BTreeSet<&str> = self.tags().iter().map(|t| t.uid.as_str()).collect();

        for (i, ev) in self.events.iter().enumerate() {
            let field = |f: &str| format!("events[{i}].{f}");
            let target = ev.target.as_deref();
            let known = |set: &BTreeSet<&str>, what: &str| match target {
                Some(t) if set.contains(t) => Ok(()),
                Some(t) => Err(invalid(field("target"), format!("undeclared {what} {t:?}"))),
                None => Err(invalid(field("target"), "missing")),
            };
            match &ev.action {
                Action::SwipeCard { uid } => {
                    known(&carts, "cart")?;
                    if self.strict && !users.contains(uid.as_str()) {
                        return Err(invalid(field("uid"), format!("{uid} is not a seeded user")));
                    }
                }
                Action::SwipeTag { uid } => {
                    known(&carts, "cart")?;
                    if self.strict && !tags.contains(uid.as_str()) {
                        return Err(invalid(field("uid"), format!("{uid} is not a seeded tag")));
                    }
                }
                Action::Button { .. } => known(&carts, "cart")?,
                Action::GatePass { uid } => {
                    known(&gates, "gate")?;
                    if self.strict && !tags.contains(uid.as_str()) {
                        return Err(invalid(field("uid"), format!("{uid} is not a seeded tag")));
                    }
                }
                Action::Net {
                    link,
                    field: f,
                    value,
                } => {
                    if !LINK_NAMES.contains(&link.as_str()) {
                        return Err(invalid(field("link"), format!("unknown link {link:?}")));
                    }
                    self.link(link)
                        .set(f, *value)
                        .map_err(|e| invalid(field("field"), e))?;
                }
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Format {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Reads a seed file: a JSON array of records.
pub fn load_seed_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ScenarioError> {
    parse_json(path, &read(path)?)
}

fn resolve<T: DeserializeOwned>(
    source: &mut SeedSource<T>,
    base: &Path,
) -> Result<(), ScenarioError> {
    if let SeedSource::File(rel) = source {
        let records = load_seed_file(&base.join(rel.as_str()))?;
        *source = SeedSource::Inline(records);
    }
    Ok(())
}

/// Parses scenario text. Seed paths are resolved against `base`.
pub fn parse_scenario(text: &str, origin: &Path, base: &Path) -> Result<Scenario, ScenarioError> {
    let mut scenario: Scenario = parse_json(origin, text)?;
    resolve(&mut scenario.seed.users, base)?;
    resolve(&mut scenario.seed.tags, base)?;
    if scenario.name.is_empty() {
        scenario.name = origin
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario(&text, path, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        parse_scenario(text, Path::new("inline.json"), Path::new("."))
    }

    #[test]
    fn minimal_scenario() {
        let s = parse(r#"{"carts":["c1"],"events":[]}"#).unwrap();
        assert_eq!(s.carts, ["c1"]);
        assert_eq!(s.horizon_ms, DEFAULT_HORIZON_MS);
        assert_eq!(s.name, "inline");
    }

    #[test]
    fn events_parse_with_flattened_actions() {
        let s = parse(
            r#"{"carts":["c1"],"gates":["exit"],
                "events":[
                  {"t":1,"target":"c1","action":"swipe_card","uid":"6C92D391"},
                  {"t":2,"target":"c1","action":"button","button":"down"},
                  {"t":3,"target":"exit","action":"gate_pass","uid":"04A1B2C3D4E5F6"},
                  {"t":4,"action":"net","link":"store","field":"drop","value":1}
                ]}"#,
        )
        .unwrap();
        assert_eq!(
            s.events[1].action,
            Action::Button {
                button: Button::Down
            }
        );
        assert_eq!(
            s.events[3].action,
            Action::Net {
                link: "store".into(),
                field: "drop".into(),
                value: 1.0
            }
        );
    }

    #[test]
    fn undeclared_cart_is_rejected() {
        let err = parse(
            r#"{"carts":["c1"],"events":[{"t":0,"target":"c2","action":"swipe_card","uid":"A"}]}"#,
        )
        .unwrap_err();
        assert!(
            matches!(err, ScenarioError::Invalid { ref field, .. } if field == "events[0].target"),
            "{err}"
        );
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse("{\n  \"carts\": [\"c1\",]\n}").unwrap_err();
        assert!(
            matches!(err, ScenarioError::Format { line: 2, .. }),
            "{err}"
        );
        assert!(parse(r#"{"carts":[],"bogus":1}"#).is_err());
    }

    #[test]
    fn strict_mode_checks_uids() {
        let text = r#"{"carts":["c1"],"strict":true,
            "seed":{"users":[{"uid":"6C92D391","name":"A","cash":1}],"tags":[]},
            "events":[{"t":0,"target":"c1","action":"swipe_tag","uid":"04A1B2C3D4E5F6"}]}"#;
        assert!(parse(text).is_err());
        assert!(parse(&text.replace("\"strict\":true", "\"strict\":false")).is_ok());
    }

    #[test]
    fn bad_links_are_rejected() {
        assert!(parse(r#"{"carts":[],"links":{"radio":{}}}"#).is_err());
        assert!(parse(r#"{"carts":[],"links":{"store":{"drop":2.0}}}"#).is_err());
        assert!(parse(r#"{"carts":[],"links":{"store":{"drop":1.0}}}"#).is_ok());
    }
}
