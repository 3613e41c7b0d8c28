//! Paths through the base space, generational duty weights, and the
//! equilibrium trace obtained by solving each step's fiber in turn.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::{AgentConfig, Economy, ExtendedBundle, Fiber};
use crate::equilibrium::{
    duty_expenditure_share, solve, trade_volume, EquilibriumError, EquilibriumResult, SolverSettings,
};
use crate::topology::{projection, BaseSpace, TotalPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransitionError {
    #[error("path is empty")]
    EmptyPath,
    #[error("time must increase strictly along the path (step {index}: {t} after {prev})")]
    NonMonotoneTime { index: usize, prev: i64, t: i64 },
    #[error("unknown base point `{0}`")]
    UnknownBasePoint(String),
    #[error("no fiber configured for base point `{0}`")]
    MissingFiber(String),
    #[error("invalid generation profile: {0}")]
    InvalidProfile(String),
    #[error("step {index} ({y_id}): {source}")]
    Step {
        index: usize,
        y_id: String,
        source: EquilibriumError,
    },
}

impl TransitionError {
    pub fn is_non_convergence(&self) -> bool {
        matches!(
            self,
            TransitionError::Step {
                source: EquilibriumError::NoConvergence(_),
                ..
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathStepConfig {
    pub t: i64,
    pub y: String,
}

/// Steps `(t, y_id)` with strictly increasing `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasePath {
    steps: Vec<(i64, String)>,
}

impl BasePath {
    pub fn build(steps: &[PathStepConfig], base: &BaseSpace) -> Result<Self, TransitionError> {
        if steps.is_empty() {
            return Err(TransitionError::EmptyPath);
        }
        for (i, s) in steps.iter().enumerate() {
            if base.index(&s.y).is_err() {
                return Err(TransitionError::UnknownBasePoint(s.y.clone()));
            }
            if i > 0 && s.t <= steps[i - 1].t {
                return Err(TransitionError::NonMonotoneTime {
                    index: i,
                    prev: steps[i - 1].t,
                    t: s.t,
                });
            }
        }
        Ok(BasePath {
            steps: steps.iter().map(|s| (s.t, s.y.clone())).collect(),
        })
    }

    pub fn steps(&self) -> &[(i64, String)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn y_sequence(&self) -> Vec<String> {
        self.steps.iter().map(|(_, y)| y.clone()).collect()
    }
}

/// `λ_t = λ_max · (1 − s_t)` from a scarcity index per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub lambda_max: f64,
    pub scarcity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationProfile {
    pub lambda_max: f64,
    pub scarcity: Vec<f64>,
}

impl GenerationProfile {
    pub fn new(lambda_max: f64, scarcity: Vec<f64>) -> Result<Self, TransitionError> {
        if !(lambda_max.is_finite() && lambda_max >= 0.0) {
            return Err(TransitionError::InvalidProfile(format!(
                "lambda_max must be finite and non-negative, got {lambda_max}"
            )));
        }
        if let Some((i, s)) = scarcity
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(TransitionError::InvalidProfile(format!(
                "scarcity[{i}] = {s} is outside [0, 1]"
            )));
        }
        Ok(GenerationProfile { lambda_max, scarcity })
    }

    pub fn from_config(config: &ProfileConfig, steps: usize) -> Result<Self, TransitionError> {
        if config.scarcity.len() != steps {
            return Err(TransitionError::InvalidProfile(format!(
                "{} scarcity values for {steps} path steps",
                config.scarcity.len()
            )));
        }
        GenerationProfile::new(config.lambda_max, config.scarcity.clone())
    }

    /// The same weight at every step.
    pub fn constant(lambda: f64, steps: usize) -> Result<Self, TransitionError> {
        GenerationProfile::new(lambda, vec![0.0; steps])
    }

    pub fn lambda(&self, step: usize) -> f64 {
        self.lambda_max * (1.0 - self.scarcity[step])
    }

    pub fn lambdas(&self) -> Vec<f64> {
        (0..self.scarcity.len()).map(|i| self.lambda(i)).collect()
    }
}

/// A quantity held before a transition that has no market afterwards.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrandedGood {
    pub agent: String,
    pub good: String,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CarryReport {
    pub endowments: BTreeMap<String, Vec<f64>>,
    pub stranded: Vec<StrandedGood>,
}

/// Moves allocations into the next fiber's goods by name. A good forbidden
/// in the previous fiber was never traded, so its owner still holds what they
/// entered with (`held`). Holdings of goods the next fiber does not list, or
/// forbids, are reported as stranded; duty levels are flows and do not carry.
pub fn carry_endowment(
    prev: &BTreeMap<String, ExtendedBundle>,
    held: &BTreeMap<String, Vec<f64>>,
    prev_fiber: &Fiber,
    next_fiber: &Fiber,
) -> CarryReport {
    let mut report = CarryReport::default();
    for (agent, bundle) in prev {
        let mut next = vec![0.0; next_fiber.n()];
        for (i, g) in prev_fiber.goods.iter().enumerate() {
            let q = if prev_fiber.is_forbidden(i) {
                held.get(agent).map_or(0.0, |h| h[i])
            } else {
                bundle.x[i]
            };
            let slot = next_fiber.good_index(g);
            if let Some(j) = slot {
                next[j] = q;
            }
            let open = slot.is_some_and(|j| !next_fiber.is_forbidden(j));
            if !open && q > 0.0 {
                log::warn!(
                    "{agent}: {q} of `{g}` stranded moving from {} to {}",
                    prev_fiber.y_id,
                    next_fiber.y_id
                );
                report.stranded.push(StrandedGood {
                    agent: agent.clone(),
                    good: g.clone(),
                    quantity: q,
                });
            }
        }
        report.endowments.insert(agent.clone(), next);
    }
    report
}

/// One solved step of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub t: i64,
    pub y_id: String,
    pub lambda: f64,
    /// Endowments the step started from, by agent id.
    pub endowments: BTreeMap<String, Vec<f64>>,
    pub stranded: Vec<StrandedGood>,
    pub goods: Vec<String>,
    pub duties: Vec<String>,
    pub result: EquilibriumResult,
    /// Gross market volume per good.
    pub volume: Vec<f64>,
    pub duty_share: f64,
}

impl TraceRecord {
    pub fn allocations(&self) -> BTreeMap<String, ExtendedBundle> {
        self.result.allocations.iter().cloned().collect()
    }

    pub fn volume_of(&self, good: &str) -> Option<f64> {
        self.goods.iter().position(|g| g == good).map(|i| self.volume[i])
    }

    /// The record as a point of the total space, for projection.
    pub fn total_point(&self) -> TotalPoint {
        let bundle = self
            .result
            .allocations
            .first()
            .map(|(_, b)| b.clone())
            .unwrap_or_else(|| ExtendedBundle::zeros(self.goods.len(), self.duties.len()));
        TotalPoint {
            base: self.y_id.clone(),
            bundle,
        }
    }
}

/// Goods positions after a step. Duty payments and prior claims are
/// recurring flows, so the numéraire they absorbed stays with the payer and a
/// repeated fiber reproduces its equilibrium.
fn positions(record: &TraceRecord, fiber: &Fiber) -> BTreeMap<String, ExtendedBundle> {
    let p = &record.result.prices;
    let claim = fiber.constraints.prior_claim_total;
    record
        .result
        .allocations
        .iter()
        .map(|(id, b)| {
            let mut b = b.clone();
            let duty_spend: f64 = p.duties().iter().zip(&b.e).map(|(q, e)| q * e).sum();
            b.x[0] += duty_spend / p.as_slice()[0] + claim;
            (id.clone(), b)
        })
        .collect()
}

/// Solves each step's fiber in order, starting from the configured
/// endowments and carrying allocations forward.
pub fn run_path(
    fibers: &BTreeMap<String, Fiber>,
    templates: &[AgentConfig],
    path: &BasePath,
    profile: Option<&GenerationProfile>,
    settings: &SolverSettings,
) -> Result<Vec<TraceRecord>, TransitionError> {
    if let Some(p) = profile {
        if p.scarcity.len() != path.len() {
            return Err(TransitionError::InvalidProfile(format!(
                "{} scarcity values for {} path steps",
                p.scarcity.len(),
                path.len()
            )));
        }
    }
    let mut trace: Vec<TraceRecord> = Vec::with_capacity(path.len());
    let mut prev: Option<(&Fiber, &TraceRecord)> = None;
    for (index, (t, y_id)) in path.steps().iter().enumerate() {
        let fiber = fibers
            .get(y_id)
            .ok_or_else(|| TransitionError::MissingFiber(y_id.clone()))?;
        let at = |source: EquilibriumError| TransitionError::Step {
            index,
            y_id: y_id.clone(),
            source,
        };
        let (endowments, stranded) = match &prev {
            None => (
                templates
                    .iter()
                    .map(|a| (a.id.clone(), a.instantiate(fiber).endowment))
                    .collect(),
                Vec::new(),
            ),
            Some((prev_fiber, record)) => {
                let report = carry_endowment(
                    &positions(record, prev_fiber),
                    &record.endowments,
                    prev_fiber,
                    fiber,
                );
                (report.endowments, report.stranded)
            }
        };
        let lambda = profile.map(|p| p.lambda(index));
        let economy =
            Economy::from_templates(fiber, templates, Some(&endowments), lambda).map_err(|e| at(e.into()))?;
        let result = solve(&economy, settings).map_err(at)?;
        let volume = (0..fiber.n())
            .map(|g| trade_volume(&economy, &result, g))
            .collect();
        let duty_share = duty_expenditure_share(&economy, &result);
        let record = TraceRecord {
            step: index,
            t: *t,
            y_id: y_id.clone(),
            lambda: lambda.unwrap_or_else(|| economy.agents.first().map_or(0.0, |a| a.lambda)),
            endowments,
            stranded,
            goods: fiber.goods.clone(),
            duties: fiber.duties.clone(),
            volume,
            duty_share,
            result,
        };
        trace.push(record);
        prev = trace.last().map(|r| (fiber, r));
    }
    Ok(trace)
}

pub fn project_trace(trace: &[TraceRecord]) -> Vec<String> {
    trace
        .iter()
        .map(|r| projection(&r.total_point()).to_string())
        .collect()
}
