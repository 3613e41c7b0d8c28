//! Own-price demand curve for one imperfect duty, looking for stretches where
//! demand rises with price.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::ValidationIssue;
use crate::economy::{demand, Agent, AgentConfig, EconomyError, Fiber};
use crate::equilibrium::PriceVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VeblenProbeConfig {
    pub fiber: String,
    pub agent: String,
    pub duty: String,
    /// Swept price range in numéraire units, evaluated at `points` evenly
    /// spaced prices.
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    101
}

impl VeblenProbeConfig {
    pub fn validate(
        &self,
        at: &str,
        fibers: &BTreeMap<String, Fiber>,
        agents: &[AgentConfig],
        issues: &mut Vec<ValidationIssue>,
    ) {
        let mut push = |field: &str, message: String| {
            issues.push(ValidationIssue {
                path: format!("{at}.{field}"),
                message,
            })
        };
        match fibers.get(&self.fiber) {
            None => push("fiber", format!("unknown fiber `{}`", self.fiber)),
            Some(f) if f.duty_index(&self.duty).is_none() => push(
                "duty",
                format!("fiber `{}` has no duty `{}`", self.fiber, self.duty),
            ),
            Some(_) => {}
        }
        if !agents.iter().any(|a| a.id == self.agent) {
            push("agent", format!("unknown agent `{}`", self.agent));
        }
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite()) {
            push("lo", format!("need 0 < lo < hi, got [{}, {}]", self.lo, self.hi));
        }
        if self.points < 2 {
            push("points", "need at least two sweep points".into());
        }
    }

    pub fn sweep(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.lo + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandCurve {
    /// `(price, demanded level)` per sweep point.
    pub points: Vec<(f64, f64)>,
    /// Maximal price intervals on which demand strictly increases.
    pub increasing: Vec<(f64, f64)>,
}

/// Relative change below which neighbouring demands count as equal.
pub const RISE_THRESHOLD: f64 = 1e-12;

fn rises(a: f64, b: f64) -> bool {
    b - a > RISE_THRESHOLD * a.abs().max(b.abs()).max(1.0)
}

/// Maximal runs of strictly increasing values, as index pairs.
pub fn increasing_segments(values: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for k in 1..values.len() {
        if rises(values[k - 1], values[k]) {
            start.get_or_insert(k - 1);
        } else if let Some(s) = start.take() {
            out.push((s, k - 1));
        }
    }
    if let Some(s) = start {
        out.push((s, values.len() - 1));
    }
    out
}

/// Demand for duty `duty` at each price in `sweep`, goods at unit prices and
/// other duties at their configured prices.
pub fn veblen_demand_curve(
    agent: &Agent,
    fiber: &Fiber,
    duty: usize,
    sweep: &[f64],
) -> Result<DemandCurve, EconomyError> {
    if duty >= fiber.l() {
        return Err(EconomyError::Invalid(format!("duty index {duty} out of range")));
    }
    let base = fiber.unit_prices();
    let mut points = Vec::with_capacity(sweep.len());
    for &price in sweep {
        let mut p = base.as_slice().to_vec();
        p[fiber.n() + duty] = price;
        let prices = PriceVector::new(p, fiber.n())?;
        points.push((price, demand(agent, &prices, fiber)?.e[duty]));
    }
    let levels: Vec<f64> = points.iter().map(|(_, e)| *e).collect();
    let increasing = increasing_segments(&levels)
        .into_iter()
        .map(|(a, b)| (points[a].0, points[b].0))
        .collect();
    Ok(DemandCurve { points, increasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duty::ConstraintSet;
    use crate::economy::UtilitySpec;

    fn setup(theta: f64) -> (Agent, Fiber) {
        let fiber = Fiber::new(
            "y",
            vec!["m".into()],
            vec!["charity".into()],
            vec![1.0],
            ConstraintSet::default(),
        )
        .unwrap();
        let agent = Agent {
            id: "v".into(),
            endowment: vec![10.0],
            utility: UtilitySpec::veblen(vec![1.0], vec![1.0], vec![0.5]),
            lambda: 1.0,
            theta,
        };
        (agent, fiber)
    }

    #[test]
    fn segments() {
        assert_eq!(increasing_segments(&[3.0, 2.0, 2.0, 1.0]), vec![]);
        assert_eq!(
            increasing_segments(&[1.0, 2.0, 3.0, 2.0, 4.0]),
            vec![(0, 2), (3, 4)]
        );
    }

    #[test]
    fn ordinary_duty_has_no_rising_segment() {
        let (a, f) = setup(0.0);
        let sweep: Vec<f64> = (1..=40).map(|k| 0.1 * k as f64).collect();
        let c = veblen_demand_curve(&a, &f, 0, &sweep).unwrap();
        assert!(c.increasing.is_empty(), "{:?}", c.increasing);
    }

    #[test]
    fn strong_status_motive_rises() {
        let (a, f) = setup(5.0);
        let sweep: Vec<f64> = (1..=40).map(|k| 0.1 * k as f64).collect();
        let c = veblen_demand_curve(&a, &f, 0, &sweep).unwrap();
        assert!(!c.increasing.is_empty());
    }

    #[test]
    fn zero_premium_matches_ordinary_curve() {
        let (plain, f) = setup(0.0);
        for k in 1..=40 {
            let p = 0.1 * k as f64;
            let (mut showy, _) = setup(5.0);
            showy.utility.reference_premium = vec![p];
            let a = veblen_demand_curve(&plain, &f, 0, &[p]).unwrap().points[0].1;
            let b = veblen_demand_curve(&showy, &f, 0, &[p]).unwrap().points[0].1;
            assert!((a - b).abs() <= 1e-9 * (1.0 + a), "p={p}: {a} vs {b}");
        }
    }
}
