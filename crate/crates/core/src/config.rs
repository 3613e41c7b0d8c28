//! Run configuration: one JSON document holding the registry, the fiber
//! economies, the base-space path, solver settings and scenario parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::duty::{self, DutyError, MaximRegistry, RegistryConfig};
use crate::economy::{AgentConfig, Fiber, FiberConfig};
use crate::equilibrium::SolverSettings;
use crate::scenarios::{SugarMarketConfig, VeblenProbeConfig};
use crate::topology::{BaseSpace, OpenFamily};
use crate::transition::{BasePath, GenerationProfile, PathStepConfig, ProfileConfig};

/// A JSON object read as an ordered list of entries. Unlike a map type it
/// keeps repeated keys, so duplicate declarations can be reported.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedMap<V>(pub Vec<(String, V)>);

impl<V> Default for OrderedMap<V> {
    fn default() -> Self {
        OrderedMap(Vec::new())
    }
}

impl<V> OrderedMap<V> {
    pub fn iter(&self) -> impl Iterator<Item = (&String, &V)> {
        self.0.iter().map(|(k, v)| (k, v))
    }

    pub fn get(&self, key: &str) -> Option<&V> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.0.iter().map(|(k, _)| k)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<V: Serialize> Serialize for OrderedMap<V> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.0.iter().map(|(k, v)| (k, v)))
    }
}

impl<'de, V: Deserialize<'de>> Deserialize<'de> for OrderedMap<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor<V>(PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for EntriesVisitor<V> {
            type Value = OrderedMap<V>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, V>()? {
                    entries.push((k, v));
                }
                Ok(OrderedMap(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor(PhantomData))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyConfig {
    #[serde(default)]
    pub fibers: OrderedMap<FiberConfig>,
    #[serde(default)]
    pub agents: Vec<AgentConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Open sets to verify, each a list of base-point ids. Absent means the
    /// discrete topology.
    #[serde(default)]
    pub family: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub sugar: Option<SugarMarketConfig>,
    #[serde(default)]
    pub veblen: Option<VeblenProbeConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default)]
    pub svg: bool,
}

fn default_out_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            svg: false,
        }
    }
}

/// The raw document as written on disk.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub registry: RegistryConfig,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub economy: EconomyConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub path: Vec<PathStepConfig>,
    #[serde(default)]
    pub profile: Option<ProfileConfig>,
    #[serde(default)]
    pub scenarios: ScenarioSection,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A configuration whose cross references have all been resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub registry: MaximRegistry,
    pub base: Option<BaseSpace>,
    pub family: Option<OpenFamily>,
    pub fibers: BTreeMap<String, Fiber>,
    pub path: Option<BasePath>,
    pub profile: Option<GenerationProfile>,
    /// SHA-256 of the source text.
    pub digest: String,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.raw.seed
    }

    pub fn fiber(&self, y_id: &str) -> Option<&Fiber> {
        self.fibers.get(y_id)
    }

    pub fn agents(&self) -> &[AgentConfig] {
        &self.raw.economy.agents
    }

    pub fn solver(&self) -> &SolverSettings {
        &self.raw.solver
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} validation error(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<ValidationIssue>),
}

impl From<DutyError> for ValidationIssue {
    fn from(err: DutyError) -> Self {
        let path = match &err {
            DutyError::DuplicateMaxim { path, .. }
            | DutyError::UnknownReference { path, .. }
            | DutyError::MalformedSpec { path, .. } => path.clone(),
            DutyError::UnknownMaxim(_) | DutyError::UnknownBundle(_) => "registry".into(),
        };
        ValidationIssue {
            path,
            message: err.to_string(),
        }
    }
}

pub fn parse_and_validate(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text)
}

/// Parses and validates a configuration document. Validation gathers every
/// issue it can find before failing.
pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let digest = crate::output::sha256_hex(text.as_bytes());
    validate(raw, digest)
}

fn issue(path: impl Into<String>, message: impl Into<String>) -> ValidationIssue {
    ValidationIssue {
        path: path.into(),
        message: message.into(),
    }
}

pub fn validate(raw: RawConfig, digest: String) -> Result<RunConfig, ConfigError> {
    let mut issues = Vec::new();

    let registry = match duty::load_registry(&raw.registry) {
        Ok(r) => Some(r),
        Err(e) => {
            issues.push(e.into());
            None
        }
    };

    raw.solver.validate("solver", &mut issues);

    let mut base = None;
    let mut family = None;
    let mut fibers = BTreeMap::new();
    let mut path = None;
    let mut profile = None;

    if let Some(registry) = &registry {
        let ids: Vec<String> = registry.bundles().iter().map(|b| b.id.clone()).collect();
        if !ids.is_empty() {
            match BaseSpace::new(ids) {
                Ok(b) => base = Some(b),
                Err(e) => issues.push(issue("registry.bundles", e.to_string())),
            }
        }

        if let (Some(b), Some(sets)) = (&base, &raw.topology.family) {
            match OpenFamily::from_named(b, sets) {
                Ok(f) => family = Some(f),
                Err(e) => issues.push(issue("topology.family", e.to_string())),
            }
        }

        for (y_id, fc) in raw.economy.fibers.iter() {
            let at = format!("economy.fibers.{y_id}");
            if fibers.contains_key(y_id) {
                issues.push(issue(&at, "fiber declared twice"));
                continue;
            }
            match Fiber::from_config(y_id, fc, registry) {
                Ok(f) => {
                    fibers.insert(y_id.clone(), f);
                }
                Err(errs) => issues.extend(errs.into_iter().map(|m| issue(&at, m))),
            }
        }

        let mut seen = Vec::new();
        for (i, agent) in raw.economy.agents.iter().enumerate() {
            let at = format!("economy.agents[{i}]");
            if seen.contains(&agent.id) {
                issues.push(issue(&at, format!("agent id `{}` declared twice", agent.id)));
            }
            seen.push(agent.id.clone());
            agent.validate(&at, registry, &mut issues);
        }

        if !raw.path.is_empty() {
            if let Some(b) = &base {
                match BasePath::build(&raw.path, b) {
                    Ok(p) => {
                        for (i, (_, y)) in p.steps().iter().enumerate() {
                            if !fibers.contains_key(y) && !raw.economy.fibers.keys().any(|k| k == y) {
                                issues.push(issue(
                                    format!("path[{i}]"),
                                    format!("no fiber configured for base point `{y}`"),
                                ));
                            }
                        }
                        if let Some(pc) = &raw.profile {
                            match GenerationProfile::from_config(pc, p.len()) {
                                Ok(g) => profile = Some(g),
                                Err(e) => issues.push(issue("profile", e.to_string())),
                            }
                        }
                        path = Some(p);
                    }
                    Err(e) => issues.push(issue("path", e.to_string())),
                }
            } else {
                issues.push(issue("path", "path given but no bundles declared"));
            }
        }
    }

    if let Some(sugar) = &raw.scenarios.sugar {
        if let Err(e) = sugar.validate() {
            issues.push(issue("scenarios.sugar", e.to_string()));
        }
    }
    if let Some(veblen) = &raw.scenarios.veblen {
        veblen.validate("scenarios.veblen", &fibers, &raw.economy.agents, &mut issues);
    }

    if !issues.is_empty() {
        return Err(ConfigError::Validation(issues));
    }
    Ok(RunConfig {
        raw,
        registry: registry.expect("registry present when no issues"),
        base,
        family,
        fibers,
        path,
        profile,
        digest,
    })
}
