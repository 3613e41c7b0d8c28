//! Maxims, their split into perfect and imperfect duties, and the compilation
//! of perfect-duty bundles into feasibility constraints on the extended
//! consumption space.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::OrderedMap;
use crate::economy::ExtendedBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DutyError {
    #[error("maxim `{id}` is declared more than once (at {path})")]
    DuplicateMaxim { id: String, path: String },
    #[error("unknown reference `{id}` at {path}")]
    UnknownReference { id: String, path: String },
    #[error("malformed duty spec at {path}: {reason}")]
    MalformedSpec { path: String, reason: String },
    #[error("unknown maxim `{0}`")]
    UnknownMaxim(String),
    #[error("unknown duty bundle `{0}`")]
    UnknownBundle(String),
}

/// One coordinate of the extended consumption space, addressed by name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Good(String),
    Duty(String),
}

impl Dimension {
    pub fn id(&self) -> &str {
        match self {
            Dimension::Good(id) | Dimension::Duty(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PerfectDutyKind {
    /// The good may not be held at all.
    Forbid { good: String },
    /// The named good or imperfect duty must reach at least `level`.
    RequireMin { dimension: Dimension, level: f64 },
    /// `amount` numéraire units are paid out of income before anything else.
    PriorClaim { amount: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfectDutySpec {
    pub id: String,
    pub kind: PerfectDutyKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImperfectDutyDef {
    /// Maxim id.
    pub id: String,
    /// Catalog id of the duty dimension this maxim fills.
    pub duty: String,
    /// Position in the e-vector of the full catalog.
    pub index: usize,
    pub unit: String,
    pub normalization_cap: Option<f64>,
}

impl ImperfectDutyDef {
    /// Fulfilment of a raw level on the 0-1 scale, when a cap is configured.
    pub fn normalized(&self, raw: f64) -> Option<f64> {
        self.normalization_cap.map(|cap| (raw / cap).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    Perfect(PerfectDutySpec),
    Imperfect(ImperfectDutyDef),
}

impl Classification {
    pub fn is_perfect(&self) -> bool {
        matches!(self, Classification::Perfect(_))
    }

    pub fn is_imperfect(&self) -> bool {
        matches!(self, Classification::Imperfect(_))
    }
}

/// A point of the base space: the set of perfect duties in force in one regime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DutyBundle {
    pub id: String,
    pub label: String,
    pub active: BTreeSet<String>,
}

// ---------------------------------------------------------------------------
// Configuration tree

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryConfig {
    #[serde(default)]
    pub goods: Vec<String>,
    #[serde(default)]
    pub imperfect_duties: Vec<String>,
    #[serde(default)]
    pub maxims: OrderedMap<MaximConfig>,
    #[serde(default)]
    pub bundles: OrderedMap<BundleConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaximConfig {
    pub class: String,
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub active: Vec<String>,
}

// ---------------------------------------------------------------------------
// Registry

#[derive(Debug, Clone, PartialEq)]
pub struct MaximRegistry {
    goods: Vec<String>,
    duties: Vec<String>,
    entries: BTreeMap<String, Classification>,
    bundles: Vec<DutyBundle>,
}

impl MaximRegistry {
    pub fn goods(&self) -> &[String] {
        &self.goods
    }

    pub fn imperfect_duties(&self) -> &[String] {
        &self.duties
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Classification)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Bundles in declaration order.
    pub fn bundles(&self) -> &[DutyBundle] {
        &self.bundles
    }

    pub fn bundle(&self, id: &str) -> Result<&DutyBundle, DutyError> {
        self.bundles
            .iter()
            .find(|b| b.id == id)
            .ok_or_else(|| DutyError::UnknownBundle(id.to_string()))
    }

    pub fn is_good(&self, id: &str) -> bool {
        self.goods.iter().any(|g| g == id)
    }

    pub fn is_duty(&self, id: &str) -> bool {
        self.duties.iter().any(|d| d == id)
    }

    pub fn classify(&self, maxim_id: &str) -> Result<&Classification, DutyError> {
        self.entries
            .get(maxim_id)
            .ok_or_else(|| DutyError::UnknownMaxim(maxim_id.to_string()))
    }

    pub fn perfect(&self) -> impl Iterator<Item = &PerfectDutySpec> {
        self.entries.values().filter_map(|c| match c {
            Classification::Perfect(p) => Some(p),
            Classification::Imperfect(_) => None,
        })
    }

    pub fn imperfect(&self) -> impl Iterator<Item = &ImperfectDutyDef> {
        self.entries.values().filter_map(|c| match c {
            Classification::Imperfect(d) => Some(d),
            Classification::Perfect(_) => None,
        })
    }
}

fn param_f64(params: &BTreeMap<String, serde_json::Value>, key: &str, path: &str) -> Result<f64, DutyError> {
    let value = params
        .get(key)
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| DutyError::MalformedSpec {
            path: format!("{path}.params.{key}"),
            reason: "expected a number".into(),
        })?;
    if !value.is_finite() || value < 0.0 {
        return Err(DutyError::MalformedSpec {
            path: format!("{path}.params.{key}"),
            reason: format!("must be finite and non-negative, got {value}"),
        });
    }
    Ok(value)
}

fn param_str<'a>(
    params: &'a BTreeMap<String, serde_json::Value>,
    key: &str,
    path: &str,
) -> Result<Option<&'a str>, DutyError> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => v.as_str().map(Some).ok_or_else(|| DutyError::MalformedSpec {
            path: format!("{path}.params.{key}"),
            reason: "expected a string".into(),
        }),
    }
}

/// Builds a registry from the `registry` section of a run configuration.
///
/// Classification is read verbatim; nothing here decides whether a maxim is
/// universalizable.
pub fn load_registry(config: &RegistryConfig) -> Result<MaximRegistry, DutyError> {
    let mut goods = Vec::with_capacity(config.goods.len());
    for (i, g) in config.goods.iter().enumerate() {
        if goods.contains(g) || config.imperfect_duties.contains(g) {
            return Err(DutyError::MalformedSpec {
                path: format!("registry.goods[{i}]"),
                reason: format!("dimension id `{g}` declared twice"),
            });
        }
        goods.push(g.clone());
    }
    let mut duties = Vec::with_capacity(config.imperfect_duties.len());
    for (i, d) in config.imperfect_duties.iter().enumerate() {
        if duties.contains(d) {
            return Err(DutyError::MalformedSpec {
                path: format!("registry.imperfect_duties[{i}]"),
                reason: format!("dimension id `{d}` declared twice"),
            });
        }
        duties.push(d.clone());
    }

    let mut entries = BTreeMap::new();
    let mut filled: BTreeMap<usize, String> = BTreeMap::new();
    for (id, maxim) in config.maxims.iter() {
        let path = format!("registry.maxims.{id}");
        if entries.contains_key(id) {
            return Err(DutyError::DuplicateMaxim { id: id.clone(), path });
        }
        let classification = match maxim.class.as_str() {
            "perfect" => {
                let kind = match maxim.kind.as_deref() {
                    Some("forbid") => {
                        let good = param_str(&maxim.params, "good", &path)?.ok_or_else(|| {
                            DutyError::MalformedSpec {
                                path: format!("{path}.params.good"),
                                reason: "missing".into(),
                            }
                        })?;
                        if !goods.iter().any(|g| g == good) {
                            return Err(DutyError::UnknownReference {
                                id: good.to_string(),
                                path: format!("{path}.params.good"),
                            });
                        }
                        PerfectDutyKind::Forbid {
                            good: good.to_string(),
                        }
                    }
                    Some("require_min") => {
                        let dim = param_str(&maxim.params, "dimension", &path)?.ok_or_else(|| {
                            DutyError::MalformedSpec {
                                path: format!("{path}.params.dimension"),
                                reason: "missing".into(),
                            }
                        })?;
                        let dimension = if goods.iter().any(|g| g == dim) {
                            Dimension::Good(dim.to_string())
                        } else if duties.iter().any(|d| d == dim) {
                            Dimension::Duty(dim.to_string())
                        } else {
                            return Err(DutyError::UnknownReference {
                                id: dim.to_string(),
                                path: format!("{path}.params.dimension"),
                            });
                        };
                        let level = param_f64(&maxim.params, "level", &path)?;
                        PerfectDutyKind::RequireMin { dimension, level }
                    }
                    Some("prior_claim") => {
                        let amount = param_f64(&maxim.params, "amount", &path)?;
                        PerfectDutyKind::PriorClaim { amount }
                    }
                    other => {
                        return Err(DutyError::MalformedSpec {
                            path: format!("{path}.kind"),
                            reason: format!("expected forbid, require_min or prior_claim, got {other:?}"),
                        })
                    }
                };
                Classification::Perfect(PerfectDutySpec {
                    id: id.clone(),
                    kind,
                    description: maxim.description.clone(),
                })
            }
            "imperfect" => {
                let duty = param_str(&maxim.params, "duty", &path)?.unwrap_or(id.as_str());
                let index =
                    duties
                        .iter()
                        .position(|d| d == duty)
                        .ok_or_else(|| DutyError::UnknownReference {
                            id: duty.to_string(),
                            path: format!("{path}.params.duty"),
                        })?;
                if let Some(prev) = filled.insert(index, id.clone()) {
                    return Err(DutyError::MalformedSpec {
                        path,
                        reason: format!("duty `{duty}` is already filled by maxim `{prev}`"),
                    });
                }
                let unit = param_str(&maxim.params, "unit", &path)?
                    .unwrap_or("units")
                    .to_string();
                let normalization_cap = match maxim.params.get("cap") {
                    None | Some(serde_json::Value::Null) => None,
                    Some(_) => {
                        let cap = param_f64(&maxim.params, "cap", &path)?;
                        if cap <= 0.0 {
                            return Err(DutyError::MalformedSpec {
                                path: format!("{path}.params.cap"),
                                reason: "normalization cap must be strictly positive".into(),
                            });
                        }
                        Some(cap)
                    }
                };
                Classification::Imperfect(ImperfectDutyDef {
                    id: id.clone(),
                    duty: duty.to_string(),
                    index,
                    unit,
                    normalization_cap,
                })
            }
            other => {
                return Err(DutyError::MalformedSpec {
                    path: format!("{path}.class"),
                    reason: format!("expected `perfect` or `imperfect`, got `{other}`"),
                })
            }
        };
        entries.insert(id.clone(), classification);
    }

    // Each catalogued duty dimension must be filled by exactly one maxim.
    for (j, duty) in duties.iter().enumerate() {
        if !filled.contains_key(&j) {
            return Err(DutyError::MalformedSpec {
                path: format!("registry.imperfect_duties[{j}]"),
                reason: format!("no imperfect maxim fills duty `{duty}`"),
            });
        }
    }

    let mut bundles: Vec<DutyBundle> = Vec::new();
    for (id, b) in config.bundles.iter() {
        let path = format!("registry.bundles.{id}");
        if bundles.iter().any(|x| &x.id == id) {
            return Err(DutyError::MalformedSpec {
                path,
                reason: format!("bundle `{id}` declared twice"),
            });
        }
        let mut active = BTreeSet::new();
        for (i, m) in b.active.iter().enumerate() {
            match entries.get(m) {
                Some(Classification::Perfect(_)) => {
                    active.insert(m.clone());
                }
                Some(Classification::Imperfect(_)) => {
                    return Err(DutyError::MalformedSpec {
                        path: format!("{path}.active[{i}]"),
                        reason: format!("`{m}` is an imperfect duty; bundles hold perfect duties"),
                    })
                }
                None => {
                    return Err(DutyError::UnknownReference {
                        id: m.clone(),
                        path: format!("{path}.active[{i}]"),
                    })
                }
            }
        }
        bundles.push(DutyBundle {
            id: id.clone(),
            label: b.label.clone(),
            active,
        });
    }

    Ok(MaximRegistry {
        goods,
        duties,
        entries,
        bundles,
    })
}

pub fn classify<'a>(registry: &'a MaximRegistry, maxim_id: &str) -> Result<&'a Classification, DutyError> {
    registry.classify(maxim_id)
}

// ---------------------------------------------------------------------------
// Constraints

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Predicate {
    /// Coordinate must be exactly zero.
    EqualsZero(Dimension),
    /// Coordinate must be at least the level.
    AtLeast(Dimension, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourcedPredicate {
    pub source: String,
    pub predicate: Predicate,
}

/// The executable form of a duty bundle.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConstraintSet {
    pub predicates: Vec<SourcedPredicate>,
    pub prior_claim_total: f64,
}

impl ConstraintSet {
    pub fn unconstrained() -> Self {
        Self::default()
    }

    pub fn is_forbidden(&self, good: &str) -> bool {
        self.predicates
            .iter()
            .any(|p| matches!(&p.predicate, Predicate::EqualsZero(Dimension::Good(g)) if g == good))
    }

    /// Largest lower bound imposed on a dimension (0 when unconstrained).
    pub fn lower_bound(&self, dim: &Dimension) -> f64 {
        self.predicates
            .iter()
            .filter_map(|p| match &p.predicate {
                Predicate::AtLeast(d, level) if d == dim => Some(*level),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    /// Every named target that must exist in a fiber using this set.
    pub fn targets(&self) -> impl Iterator<Item = &Dimension> {
        self.predicates.iter().map(|p| match &p.predicate {
            Predicate::EqualsZero(d) | Predicate::AtLeast(d, _) => d,
        })
    }

    /// Evaluates the predicate conjunction on a point laid out by `goods` and
    /// `duties`. A target absent from the layout reads as quantity zero.
    pub fn holds(&self, goods: &[String], duties: &[String], point: &ExtendedBundle) -> bool {
        let read = |dim: &Dimension| -> f64 {
            match dim {
                Dimension::Good(g) => goods
                    .iter()
                    .position(|x| x == g)
                    .and_then(|i| point.x.get(i).copied())
                    .unwrap_or(0.0),
                Dimension::Duty(d) => duties
                    .iter()
                    .position(|x| x == d)
                    .and_then(|i| point.e.get(i).copied())
                    .unwrap_or(0.0),
            }
        };
        self.predicates.iter().all(|p| match &p.predicate {
            Predicate::EqualsZero(d) => read(d) == 0.0,
            Predicate::AtLeast(d, level) => read(d) >= *level,
        })
    }
}

/// Compiles a bundle's active perfect duties into predicates and a single
/// income deduction. Predicates follow the sorted order of the active ids.
pub fn compile_constraints(
    bundle: &DutyBundle,
    registry: &MaximRegistry,
) -> Result<ConstraintSet, DutyError> {
    let mut set = ConstraintSet::default();
    for id in &bundle.active {
        let spec = match registry.entries.get(id) {
            Some(Classification::Perfect(spec)) => spec,
            _ => {
                return Err(DutyError::UnknownReference {
                    id: id.clone(),
                    path: format!("bundle {}", bundle.id),
                })
            }
        };
        match &spec.kind {
            PerfectDutyKind::Forbid { good } => set.predicates.push(SourcedPredicate {
                source: spec.id.clone(),
                predicate: Predicate::EqualsZero(Dimension::Good(good.clone())),
            }),
            PerfectDutyKind::RequireMin { dimension, level } => set.predicates.push(SourcedPredicate {
                source: spec.id.clone(),
                predicate: Predicate::AtLeast(dimension.clone(), *level),
            }),
            PerfectDutyKind::PriorClaim { amount } => set.prior_claim_total += amount,
        }
    }
    Ok(set)
}
