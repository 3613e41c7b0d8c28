//! An ethically differentiated sugar market with exogenous prices.
//!
//! Consumers are fixed for the whole run. A consumer is ethically minded when
//! its rank position `(i + 0.5) / N` lies below the ethical share φ, so the
//! minded set grows with φ. Each minded consumer draws a premium it is
//! willing to pay from `U[0, w_max]` once per seed, and buys the ethical
//! variant in a period when that premium covers `p_E − p_C`. The ethical
//! producer exits after `k` consecutive periods below the viability share.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SugarError {
    #[error("invalid sugar configuration: {0}")]
    Invalid(String),
    #[error("survival is not monotone in the ethical share: survives at {survives}, fails at {fails}")]
    NonMonotoneSurvival { survives: f64, fails: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SugarMarketConfig {
    #[serde(default = "default_population")]
    pub population: usize,
    /// Share of ethically minded consumers.
    #[serde(default = "default_phi")]
    pub phi: f64,
    /// Upper end of the willingness-to-pay premium distribution.
    #[serde(default = "one")]
    pub w_max: f64,
    #[serde(default = "default_p_ethical")]
    pub p_ethical: f64,
    #[serde(default = "one")]
    pub p_conventional: f64,
    /// First period charged the post-shock conventional price.
    #[serde(default = "default_shock_period")]
    pub shock_period: usize,
    #[serde(default = "default_shock_price")]
    pub shock_p_conventional: f64,
    #[serde(default = "default_viability")]
    pub viability: f64,
    #[serde(default = "default_exit_after")]
    pub exit_after: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Falls back to the run seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_population() -> usize {
    10_000
}
fn default_phi() -> f64 {
    0.73
}
fn one() -> f64 {
    1.0
}
fn default_p_ethical() -> f64 {
    1.25
}
fn default_shock_period() -> usize {
    10
}
fn default_shock_price() -> f64 {
    0.65
}
fn default_viability() -> f64 {
    0.03
}
fn default_exit_after() -> usize {
    3
}
fn default_horizon() -> usize {
    30
}

impl Default for SugarMarketConfig {
    fn default() -> Self {
        SugarMarketConfig {
            population: default_population(),
            phi: default_phi(),
            w_max: one(),
            p_ethical: default_p_ethical(),
            p_conventional: one(),
            shock_period: default_shock_period(),
            shock_p_conventional: default_shock_price(),
            viability: default_viability(),
            exit_after: default_exit_after(),
            horizon: default_horizon(),
            seed: None,
        }
    }
}

impl SugarMarketConfig {
    pub fn validate(&self) -> Result<(), SugarError> {
        let bad = |m: String| Err(SugarError::Invalid(m));
        if self.population == 0 {
            return bad("population must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.phi) {
            return bad(format!("phi = {} is outside [0, 1]", self.phi));
        }
        for (name, v) in [
            ("w_max", self.w_max),
            ("p_ethical", self.p_ethical),
            ("p_conventional", self.p_conventional),
            ("shock_p_conventional", self.shock_p_conventional),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.viability > 0.0 && self.viability < 1.0) {
            return bad(format!("viability = {} is outside (0, 1)", self.viability));
        }
        if self.exit_after == 0 {
            return bad("exit_after must be positive".into());
        }
        if self.horizon == 0 || self.shock_period > self.horizon {
            return bad(format!(
                "shock period {} must not exceed horizon {}",
                self.shock_period, self.horizon
            ));
        }
        Ok(())
    }

    pub fn price_conventional(&self, period: usize) -> f64 {
        if period >= self.shock_period {
            self.shock_p_conventional
        } else {
            self.p_conventional
        }
    }

    pub fn premium(&self, period: usize) -> f64 {
        self.p_ethical - self.price_conventional(period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub shares: Vec<f64>,
    pub survived: bool,
    pub collapse_period: Option<usize>,
    pub critical_mass: Option<CriticalMass>,
}

/// Willingness-to-pay premium per minded consumer, in rank order.
fn premiums(config: &SugarMarketConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.population as f64;
    let minded = (0..config.population)
        .take_while(|&i| (i as f64 + 0.5) / n < config.phi)
        .count();
    (0..minded).map(|_| rng.gen::<f64>() * config.w_max).collect()
}

/// Share of the population buying ethical at `premium`.
pub fn ethical_share(config: &SugarMarketConfig, seed: u64, premium: f64) -> f64 {
    let buyers = premiums(config, config.seed.unwrap_or(seed))
        .iter()
        .filter(|&&w| w >= premium)
        .count();
    buyers as f64 / config.population as f64
}

pub fn run_sugar(config: &SugarMarketConfig, seed: u64) -> ScenarioReport {
    let seed = config.seed.unwrap_or(seed);
    let wtp = premiums(config, seed);
    let mut shares = Vec::with_capacity(config.horizon);
    let mut below = 0;
    let mut collapse_period = None;
    for t in 0..config.horizon {
        if collapse_period.is_some() {
            shares.push(0.0);
            continue;
        }
        let premium = config.premium(t);
        let buyers = wtp.iter().filter(|&&w| w >= premium).count();
        let share = buyers as f64 / config.population as f64;
        shares.push(share);
        below = if share < config.viability { below + 1 } else { 0 };
        if below >= config.exit_after {
            collapse_period = Some(t);
        }
    }
    ScenarioReport {
        shares,
        survived: collapse_period.is_none(),
        collapse_period,
        critical_mass: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalMass {
    /// Smallest surviving share found, `None` when nothing survives.
    pub phi_star: Option<f64>,
    /// Coarse scan `(φ, survived)` used to check monotonicity.
    pub scan: Vec<(f64, bool)>,
    pub bracket: Option<(f64, f64)>,
    pub iterations: usize,
}

pub const COARSE_SCAN_POINTS: usize = 21;

/// Survival threshold in φ, by coarse scan then bisection.
pub fn estimate_critical_mass(
    config: &SugarMarketConfig,
    seed: u64,
    tol: f64,
) -> Result<CriticalMass, SugarError> {
    config.validate()?;
    if !(tol > 0.0) {
        return Err(SugarError::Invalid(format!(
            "bisection tolerance must be positive, got {tol}"
        )));
    }
    let survives = |phi: f64| {
        run_sugar(
            &SugarMarketConfig {
                phi,
                ..config.clone()
            },
            seed,
        )
        .survived
    };
    let scan: Vec<(f64, bool)> = (0..COARSE_SCAN_POINTS)
        .map(|k| {
            let phi = k as f64 / (COARSE_SCAN_POINTS - 1) as f64;
            (phi, survives(phi))
        })
        .collect();
    if let Some(first) = scan.iter().position(|(_, s)| *s) {
        if let Some((fails, _)) = scan[first..].iter().find(|(_, s)| !*s) {
            return Err(SugarError::NonMonotoneSurvival {
                survives: scan[first].0,
                fails: *fails,
            });
        }
    }
    let Some(first) = scan.iter().position(|(_, s)| *s) else {
        return Ok(CriticalMass {
            phi_star: None,
            scan,
            bracket: None,
            iterations: 0,
        });
    };
    if first == 0 {
        return Ok(CriticalMass {
            phi_star: Some(0.0),
            bracket: Some((0.0, 0.0)),
            scan,
            iterations: 0,
        });
    }
    let (mut lo, mut hi) = (scan[first - 1].0, scan[first].0);
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if survives(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(CriticalMass {
        phi_star: Some(hi),
        bracket: Some((lo, hi)),
        scan,
        iterations,
    })
}
