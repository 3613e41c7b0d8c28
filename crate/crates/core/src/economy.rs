//! Fiber economies: the goods and imperfect-duty coordinates attached to one
//! base point, the agents trading there, their utilities and their demand over
//! the duty-feasible budget set.
//!
//! Imperfect duties are priced like goods. Fulfilling one unit of duty `j`
//! costs `p_e[j]` numéraire units, paid to a counterparty outside the
//! exchange economy (a charity, a cause). Prior claims are paid the same way.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ValidationIssue;
use crate::duty::{compile_constraints, ConstraintSet, Dimension, MaximRegistry};
use crate::equilibrium::PriceVector;
use crate::preferences::{axiom1_utility, PreferenceError};

/// Shift inside `ln(x + ε)` keeping utilities finite at the zero boundary.
pub const BOUNDARY_EPS: f64 = 1e-9;

const BISECTION_ITERS: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconomyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("negative or non-finite input in {0}")]
    NegativeInput(String),
    #[error("price of `{0}` must be strictly positive")]
    NonPositivePrice(String),
    #[error("duty-feasible set of agent `{agent}` is empty: {reason}")]
    InfeasibleDutySet { agent: String, reason: String },
    #[error("demand search for agent `{agent}` did not converge after {iterations} iterations")]
    NoConvergence { agent: String, iterations: usize },
    #[error("no agent holds a positive endowment of good `{0}`")]
    UnsupportedGood(String),
    #[error("numéraire `{0}` may not be forbidden")]
    NumeraireForbidden(String),
    #[error("invalid economy: {0}")]
    Invalid(String),
}

impl From<PreferenceError> for EconomyError {
    fn from(e: PreferenceError) -> Self {
        EconomyError::NegativeInput(e.to_string())
    }
}

/// A point `(x, e)` of the extended consumption space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedBundle {
    pub x: Vec<f64>,
    pub e: Vec<f64>,
}

impl ExtendedBundle {
    pub fn new(x: Vec<f64>, e: Vec<f64>) -> Self {
        ExtendedBundle { x, e }
    }

    pub fn zeros(n: usize, l: usize) -> Self {
        ExtendedBundle {
            x: vec![0.0; n],
            e: vec![0.0; l],
        }
    }

    /// Reassembles a bundle from a flat coordinate slice, goods first.
    pub fn from_flat(coords: &[f64], n: usize) -> Self {
        ExtendedBundle {
            x: coords[..n].to_vec(),
            e: coords[n..].to_vec(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.len(), self.e.len())
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().chain(self.e.iter()).copied()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.coords().collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.coords().all(|v| v.is_finite() && v >= 0.0)
    }

    /// Componentwise `self ≥ other`.
    pub fn dominates(&self, other: &ExtendedBundle) -> bool {
        self.coords().zip(other.coords()).all(|(a, b)| a >= b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityFamily {
    #[default]
    CobbDouglasExtended,
    #[serde(alias = "veblen")]
    VeblenPriceDependent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    pub family: UtilityFamily,
    /// Weights over goods.
    pub alpha: Vec<f64>,
    /// Weights over imperfect duties.
    pub beta: Vec<f64>,
    /// Per-duty reference price; the status term rewards paying above it.
    pub reference_premium: Vec<f64>,
}

impl UtilitySpec {
    pub fn cobb_douglas(alpha: Vec<f64>, beta: Vec<f64>) -> Self {
        let l = beta.len();
        UtilitySpec {
            family: UtilityFamily::CobbDouglasExtended,
            alpha,
            beta,
            reference_premium: vec![0.0; l],
        }
    }

    pub fn veblen(alpha: Vec<f64>, beta: Vec<f64>, reference_premium: Vec<f64>) -> Self {
        UtilitySpec {
            family: UtilityFamily::VeblenPriceDependent,
            alpha,
            beta,
            reference_premium,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    /// Goods only; imperfect duties are never endowed.
    pub endowment: Vec<f64>,
    pub utility: UtilitySpec,
    /// Weight on imperfect duties relative to inclinations.
    pub lambda: f64,
    /// Strength of the conspicuous-ethics status term.
    pub theta: f64,
}

impl Agent {
    pub fn cobb_douglas(id: &str, endowment: Vec<f64>, alpha: Vec<f64>) -> Self {
        Agent {
            id: id.to_string(),
            endowment,
            utility: UtilitySpec::cobb_douglas(alpha, Vec::new()),
            lambda: 0.0,
            theta: 0.0,
        }
    }

    pub fn utility(&self, bundle: &ExtendedBundle, prices: &PriceVector) -> Result<f64, EconomyError> {
        let n = bundle.x.len();
        utility_value(
            &self.utility,
            self.lambda,
            self.theta,
            bundle,
            &prices.as_slice()[n.min(prices.len())..],
        )
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    pub goods: Vec<String>,
    #[serde(default)]
    pub duties: Vec<String>,
    /// Price of one unit of each imperfect duty, in numéraire units. Default 1.
    #[serde(default)]
    pub duty_prices: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    #[serde(default)]
    pub family: UtilityFamily,
    #[serde(default)]
    pub alpha: BTreeMap<String, f64>,
    #[serde(default)]
    pub beta: BTreeMap<String, f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub p_bar: BTreeMap<String, f64>,
}

fn one() -> f64 {
    1.0
}

/// An agent described by names, instantiated per fiber.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: String,
    #[serde(default)]
    pub endowment: BTreeMap<String, f64>,
    pub utility: UtilityConfig,
}

fn check_weights(
    map: &BTreeMap<String, f64>,
    at: &str,
    known: impl Fn(&str) -> bool,
    kind: &str,
    issues: &mut Vec<ValidationIssue>,
) {
    for (k, v) in map {
        if !known(k) {
            issues.push(ValidationIssue {
                path: format!("{at}.{k}"),
                message: format!("unknown {kind} `{k}`"),
            });
        }
        if !v.is_finite() || *v < 0.0 {
            issues.push(ValidationIssue {
                path: format!("{at}.{k}"),
                message: format!("must be finite and non-negative, got {v}"),
            });
        }
    }
}

impl AgentConfig {
    pub fn validate(&self, at: &str, registry: &MaximRegistry, issues: &mut Vec<ValidationIssue>) {
        check_weights(
            &self.endowment,
            &format!("{at}.endowment"),
            |k| registry.is_good(k),
            "good",
            issues,
        );
        let u = &self.utility;
        check_weights(
            &u.alpha,
            &format!("{at}.utility.alpha"),
            |k| registry.is_good(k),
            "good",
            issues,
        );
        check_weights(
            &u.beta,
            &format!("{at}.utility.beta"),
            |k| registry.is_duty(k),
            "imperfect duty",
            issues,
        );
        check_weights(
            &u.p_bar,
            &format!("{at}.utility.p_bar"),
            |k| registry.is_duty(k),
            "imperfect duty",
            issues,
        );
        if u.alpha.values().sum::<f64>() <= 0.0 {
            issues.push(ValidationIssue {
                path: format!("{at}.utility.alpha"),
                message: "goods weights must sum to a positive value".into(),
            });
        }
        for (name, v) in [("lambda", u.lambda), ("theta", u.theta)] {
            if !v.is_finite() || v < 0.0 {
                issues.push(ValidationIssue {
                    path: format!("{at}.utility.{name}"),
                    message: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
    }

    /// Lays the agent out over `fiber`, using the configured endowment.
    pub fn instantiate(&self, fiber: &Fiber) -> Agent {
        let endowment = fiber
            .goods
            .iter()
            .map(|g| self.endowment.get(g).copied().unwrap_or(0.0))
            .collect();
        self.instantiate_with(fiber, endowment)
    }

    pub fn instantiate_with(&self, fiber: &Fiber, endowment: Vec<f64>) -> Agent {
        let u = &self.utility;
        let pick = |map: &BTreeMap<String, f64>, ids: &[String]| -> Vec<f64> {
            ids.iter().map(|k| map.get(k).copied().unwrap_or(0.0)).collect()
        };
        Agent {
            id: self.id.clone(),
            endowment,
            utility: UtilitySpec {
                family: u.family,
                alpha: pick(&u.alpha, &fiber.goods),
                beta: pick(&u.beta, &fiber.duties),
                reference_premium: pick(&u.p_bar, &fiber.duties),
            },
            lambda: u.lambda,
            theta: u.theta,
        }
    }
}

// ---------------------------------------------------------------------------
// Fiber

/// The economy attached to one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct Fiber {
    pub y_id: String,
    pub goods: Vec<String>,
    pub duties: Vec<String>,
    /// Configured price of each duty, in numéraire units.
    pub duty_prices: Vec<f64>,
    pub constraints: ConstraintSet,
    forbidden: Vec<bool>,
    lower: Vec<f64>,
}

impl Fiber {
    pub fn new(
        y_id: &str,
        goods: Vec<String>,
        duties: Vec<String>,
        duty_prices: Vec<f64>,
        constraints: ConstraintSet,
    ) -> Result<Self, EconomyError> {
        if goods.is_empty() {
            return Err(EconomyError::Invalid(format!("fiber `{y_id}` has no goods")));
        }
        if duty_prices.len() != duties.len() {
            return Err(EconomyError::DimensionMismatch {
                expected: format!("{} duty prices", duties.len()),
                got: duty_prices.len().to_string(),
            });
        }
        if let Some(j) = duty_prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(EconomyError::NonPositivePrice(duties[j].clone()));
        }
        for target in constraints.targets() {
            let present = match target {
                Dimension::Good(g) => goods.contains(g),
                Dimension::Duty(d) => duties.contains(d),
            };
            if !present {
                return Err(EconomyError::Invalid(format!(
                    "constraint target `{}` is not a coordinate of fiber `{y_id}`",
                    target.id()
                )));
            }
        }
        let forbidden = goods.iter().map(|g| constraints.is_forbidden(g)).collect();
        let lower = goods
            .iter()
            .map(|g| constraints.lower_bound(&Dimension::Good(g.clone())))
            .chain(
                duties
                    .iter()
                    .map(|d| constraints.lower_bound(&Dimension::Duty(d.clone()))),
            )
            .collect();
        Ok(Fiber {
            y_id: y_id.to_string(),
            goods,
            duties,
            duty_prices,
            constraints,
            forbidden,
            lower,
        })
    }

    /// A fiber without duties or constraints.
    pub fn plain(y_id: &str, goods: &[&str]) -> Self {
        Fiber::new(
            y_id,
            goods.iter().map(|s| s.to_string()).collect(),
            Vec::new(),
            Vec::new(),
            ConstraintSet::unconstrained(),
        )
        .expect("plain fiber is valid")
    }

    /// Builds the fiber for base point `y_id`, collecting every problem found.
    pub fn from_config(
        y_id: &str,
        config: &FiberConfig,
        registry: &MaximRegistry,
    ) -> Result<Self, Vec<String>> {
        let mut errs = Vec::new();
        for g in &config.goods {
            if !registry.is_good(g) {
                errs.push(format!("unknown good `{g}`"));
            }
        }
        for d in &config.duties {
            if !registry.is_duty(d) {
                errs.push(format!("unknown imperfect duty `{d}`"));
            }
        }
        for (d, p) in &config.duty_prices {
            if !config.duties.contains(d) {
                errs.push(format!("price given for duty `{d}` not in this fiber"));
            }
            if !(p.is_finite() && *p > 0.0) {
                errs.push(format!("price of duty `{d}` must be positive, got {p}"));
            }
        }
        let constraints = match registry.bundle(y_id) {
            Ok(bundle) => match compile_constraints(bundle, registry) {
                Ok(c) => Some(c),
                Err(e) => {
                    errs.push(e.to_string());
                    None
                }
            },
            Err(e) => {
                errs.push(e.to_string());
                None
            }
        };
        if !errs.is_empty() {
            return Err(errs);
        }
        let duty_prices = config
            .duties
            .iter()
            .map(|d| config.duty_prices.get(d).copied().unwrap_or(1.0))
            .collect();
        Fiber::new(
            y_id,
            config.goods.clone(),
            config.duties.clone(),
            duty_prices,
            constraints.expect("checked above"),
        )
        .map_err(|e| vec![e.to_string()])
    }

    pub fn n(&self) -> usize {
        self.goods.len()
    }

    pub fn l(&self) -> usize {
        self.duties.len()
    }

    pub fn dim(&self) -> usize {
        self.n() + self.l()
    }

    pub fn good_index(&self, id: &str) -> Option<usize> {
        self.goods.iter().position(|g| g == id)
    }

    pub fn duty_index(&self, id: &str) -> Option<usize> {
        self.duties.iter().position(|d| d == id)
    }

    pub fn is_forbidden(&self, good: usize) -> bool {
        self.forbidden[good]
    }

    /// Lower bound on each flat coordinate, goods first.
    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    /// Goods whose market is open (not forbidden).
    pub fn active_goods(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&i| !self.forbidden[i])
    }

    /// Full price vector for the given goods prices. Duty prices are quoted
    /// in numéraire units, so they scale with the first goods price.
    pub fn prices(&self, goods_prices: &[f64]) -> Result<PriceVector, EconomyError> {
        if goods_prices.len() != self.n() {
            return Err(EconomyError::DimensionMismatch {
                expected: format!("{} goods prices", self.n()),
                got: goods_prices.len().to_string(),
            });
        }
        let mut p = goods_prices.to_vec();
        let unit = goods_prices.first().copied().unwrap_or(1.0);
        p.extend(self.duty_prices.iter().map(|d| d * unit));
        PriceVector::new(p, self.n())
    }

    /// All goods at price one, duties at their configured prices.
    pub fn unit_prices(&self) -> PriceVector {
        self.prices(&vec![1.0; self.n()]).expect("unit prices are valid")
    }

    pub fn holds(&self, bundle: &ExtendedBundle) -> bool {
        self.constraints.holds(&self.goods, &self.duties, bundle)
    }
}

// ---------------------------------------------------------------------------
// Budget, utility, demand

fn check_dims(agent: &Agent, prices: &PriceVector, fiber: &Fiber) -> Result<(), EconomyError> {
    let mismatch = |what: &str, expected: usize, got: usize| EconomyError::DimensionMismatch {
        expected: format!("{expected} {what}"),
        got: got.to_string(),
    };
    if prices.len() != fiber.dim() {
        return Err(mismatch("prices", fiber.dim(), prices.len()));
    }
    if agent.endowment.len() != fiber.n() {
        return Err(mismatch("endowment entries", fiber.n(), agent.endowment.len()));
    }
    if agent.utility.alpha.len() != fiber.n() {
        return Err(mismatch("goods weights", fiber.n(), agent.utility.alpha.len()));
    }
    if agent.utility.beta.len() != fiber.l() || agent.utility.reference_premium.len() != fiber.l() {
        return Err(mismatch("duty weights", fiber.l(), agent.utility.beta.len()));
    }
    Ok(())
}

/// Market value of the endowment net of prior claims, which are denominated
/// in the numéraire. Endowments of forbidden goods have no buyer and carry no
/// value.
pub fn disposable_income(agent: &Agent, prices: &PriceVector, fiber: &Fiber) -> f64 {
    let p = prices.as_slice();
    let wealth: f64 = fiber.active_goods().map(|i| p[i] * agent.endowment[i]).sum();
    wealth - p[0] * fiber.constraints.prior_claim_total
}

fn cost(prices: &PriceVector, bundle: &ExtendedBundle) -> f64 {
    prices
        .as_slice()
        .iter()
        .zip(bundle.coords())
        .map(|(p, q)| p * q)
        .sum()
}

/// Whether `candidate` is affordable after prior claims and satisfies every
/// perfect-duty predicate of the fiber.
pub fn feasible(
    agent: &Agent,
    prices: &PriceVector,
    fiber: &Fiber,
    candidate: &ExtendedBundle,
) -> Result<bool, EconomyError> {
    check_dims(agent, prices, fiber)?;
    if candidate.dims() != (fiber.n(), fiber.l()) {
        return Err(EconomyError::DimensionMismatch {
            expected: format!("({}, {})", fiber.n(), fiber.l()),
            got: format!("{:?}", candidate.dims()),
        });
    }
    if !candidate.is_nonnegative() {
        return Ok(false);
    }
    let income = disposable_income(agent, prices, fiber);
    let spend = cost(prices, candidate);
    let slack = 1e-12 * income.abs().max(1.0);
    Ok(spend <= income + slack && fiber.holds(candidate))
}

/// Evaluates an agent's utility at `(x, e)`. `duty_prices` is only read by the
/// price-dependent family.
pub fn utility_value(
    spec: &UtilitySpec,
    lambda: f64,
    theta: f64,
    bundle: &ExtendedBundle,
    duty_prices: &[f64],
) -> Result<f64, EconomyError> {
    let base = axiom1_utility(&bundle.x, &bundle.e, &spec.alpha, &spec.beta, lambda)?;
    match spec.family {
        UtilityFamily::CobbDouglasExtended => Ok(base),
        UtilityFamily::VeblenPriceDependent => {
            if duty_prices.len() != bundle.e.len() {
                return Err(EconomyError::DimensionMismatch {
                    expected: format!("{} duty prices", bundle.e.len()),
                    got: duty_prices.len().to_string(),
                });
            }
            let mut status = 0.0;
            for (j, (&e, &p)) in bundle.e.iter().zip(duty_prices).enumerate() {
                if !(p > 0.0) {
                    return Err(EconomyError::NonPositivePrice(format!("duty #{j}")));
                }
                status += e * (p - spec.reference_premium[j]);
            }
            Ok(base + theta * status)
        }
    }
}

/// Marginal structure of one coordinate: utility slope `w / (q + c) + s`.
struct Coordinate {
    price: f64,
    weight: f64,
    shift: f64,
    slope: f64,
    lower: f64,
}

impl Coordinate {
    /// Optimal quantity when the marginal utility of income is `mu`.
    fn quantity(&self, mu: f64) -> f64 {
        let denom = mu * self.price - self.slope;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        if self.weight > 0.0 {
            (self.weight / denom - self.shift).max(self.lower)
        } else {
            self.lower
        }
    }

    fn extra_spend(&self, mu: f64) -> f64 {
        self.price * (self.quantity(mu) - self.lower)
    }
}

/// Utility-maximizing bundle over the duty-feasible budget set.
///
/// Forbidden goods are held at zero and lower bounds are respected. The
/// problem is concave and separable, so the optimum is found on the marginal
/// utility of income `μ`: every free coordinate equates its marginal utility
/// to `μ·p`, and `μ` is pinned by the budget. Without a status term the final
/// `μ` is recomputed in closed form on the optimal active set, which gives the
/// familiar expenditure shares on disposable income.
pub fn demand(agent: &Agent, prices: &PriceVector, fiber: &Fiber) -> Result<ExtendedBundle, EconomyError> {
    check_dims(agent, prices, fiber)?;
    let p = prices.as_slice();
    let n = fiber.n();
    let spec = &agent.utility;
    if spec
        .alpha
        .iter()
        .chain(&spec.beta)
        .any(|w| !w.is_finite() || *w < 0.0)
        || !(agent.lambda >= 0.0)
        || !(agent.theta >= 0.0)
    {
        return Err(EconomyError::NegativeInput(format!(
            "utility of agent `{}`",
            agent.id
        )));
    }
    if agent.endowment.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(EconomyError::NegativeInput(format!(
            "endowment of agent `{}`",
            agent.id
        )));
    }

    let lower = fiber.lower_bounds();
    for (i, &lo) in lower.iter().enumerate().take(n) {
        if fiber.is_forbidden(i) && lo > 0.0 {
            return Err(EconomyError::InfeasibleDutySet {
                agent: agent.id.clone(),
                reason: format!("`{}` is both forbidden and required", fiber.goods[i]),
            });
        }
    }

    let veblen = spec.family == UtilityFamily::VeblenPriceDependent;
    let mut coords: Vec<Option<Coordinate>> = Vec::with_capacity(fiber.dim());
    for i in 0..n {
        coords.push((!fiber.is_forbidden(i)).then(|| Coordinate {
            price: p[i],
            weight: spec.alpha[i],
            shift: BOUNDARY_EPS,
            slope: 0.0,
            lower: lower[i],
        }));
    }
    for j in 0..fiber.l() {
        let price = p[n + j];
        let slope = if veblen {
            agent.theta * (price - spec.reference_premium[j])
        } else {
            0.0
        };
        coords.push(Some(Coordinate {
            price,
            weight: agent.lambda * spec.beta[j],
            shift: 1.0,
            slope,
            lower: lower[n + j],
        }));
    }

    let income = disposable_income(agent, prices, fiber);
    let committed: f64 = coords.iter().flatten().map(|c| c.price * c.lower).sum();
    let budget = income - committed;
    let tol = 1e-12 * income.abs().max(1.0);
    if income < -tol || budget < -tol {
        return Err(EconomyError::InfeasibleDutySet {
            agent: agent.id.clone(),
            reason: format!("disposable income {income} cannot cover required spending {committed}"),
        });
    }

    let lower_point = || -> Vec<f64> {
        coords
            .iter()
            .map(|c| c.as_ref().map_or(0.0, |c| c.lower))
            .collect()
    };
    if budget <= tol {
        return Ok(ExtendedBundle::from_flat(&lower_point(), n));
    }

    let active: Vec<&Coordinate> = coords.iter().flatten().collect();
    let floor = active.iter().map(|c| c.slope / c.price).fold(0.0_f64, f64::max);
    let unbounded_at_floor = active
        .iter()
        .any(|c| c.weight > 0.0 && c.slope / c.price >= floor);
    let spend = |mu: f64| -> f64 { active.iter().map(|c| c.extra_spend(mu)).sum() };

    if !unbounded_at_floor && active.iter().all(|c| c.weight == 0.0 && c.slope <= 0.0) {
        // Utility is flat over the feasible set; take the smallest point.
        return Ok(ExtendedBundle::from_flat(&lower_point(), n));
    }

    // Linear coordinates sitting exactly at the floor can absorb any residual.
    let floor_spend = if unbounded_at_floor {
        f64::INFINITY
    } else {
        active
            .iter()
            .filter(|c| c.slope / c.price < floor)
            .map(|c| c.extra_spend(floor))
            .sum()
    };
    if floor_spend < budget {
        let mut q: Vec<f64> = coords
            .iter()
            .map(|c| match c {
                Some(c) if c.slope / c.price < floor => c.quantity(floor),
                Some(c) => c.lower,
                None => 0.0,
            })
            .collect();
        let absorber = coords
            .iter()
            .rposition(|c| matches!(c, Some(c) if c.weight == 0.0 && c.slope / c.price >= floor))
            .ok_or_else(|| {
                EconomyError::Invalid(format!(
                    "agent `{}` has no coordinate that can absorb its budget",
                    agent.id
                ))
            })?;
        let c = coords[absorber].as_ref().expect("absorber is active");
        q[absorber] += (budget - floor_spend) / c.price;
        return Ok(ExtendedBundle::from_flat(&q, n));
    }

    // Bracket μ* in (floor, hi].
    let mut lo = floor;
    let mut hi = if floor > 0.0 { floor * 2.0 } else { 1.0 };
    let mut guard = 0;
    while spend(hi) > budget {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(EconomyError::NoConvergence {
                agent: agent.id.clone(),
                iterations: guard,
            });
        }
    }
    // spend(floor) is unbounded or at least the budget, so `lo` may start there.
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if spend(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut mu = hi;

    if active.iter().all(|c| c.slope == 0.0) {
        // Closed form on the free set: Σ_F w / μ = budget + Σ_F p (c + lb).
        let free: Vec<&&Coordinate> = active
            .iter()
            .filter(|c| c.weight > 0.0 && c.weight / (mu * c.price) - c.shift > c.lower)
            .collect();
        let weights: f64 = free.iter().map(|c| c.weight).sum();
        let offset: f64 = free.iter().map(|c| c.price * (c.shift + c.lower)).sum();
        let exact = weights / (budget + offset);
        let consistent = active.iter().all(|c| {
            let interior = c.weight > 0.0 && c.weight / (exact * c.price) - c.shift > c.lower;
            interior == free.iter().any(|f| std::ptr::eq(**f, *c))
        });
        if exact.is_finite() && exact > 0.0 && consistent {
            mu = exact;
        }
    }

    let mut q: Vec<f64> = coords
        .iter()
        .map(|c| c.as_ref().map_or(0.0, |c| c.quantity(mu)))
        .collect();
    if q.iter().any(|v| !v.is_finite()) {
        return Err(EconomyError::NoConvergence {
            agent: agent.id.clone(),
            iterations: BISECTION_ITERS,
        });
    }

    // Put the rounding residual on the largest free expenditure.
    let spent: f64 = coords
        .iter()
        .zip(&q)
        .filter_map(|(c, v)| c.as_ref().map(|c| c.price * (v - c.lower)))
        .sum();
    let residual = budget - spent;
    if residual != 0.0 {
        let target = coords
            .iter()
            .zip(&q)
            .enumerate()
            .filter_map(|(k, (c, v))| c.as_ref().map(|c| (k, c.price * (v - c.lower), c.price)))
            .filter(|(_, s, _)| *s > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k, _, price)) = target {
            q[k] = (q[k] + residual / price).max(coords[k].as_ref().map_or(0.0, |c| c.lower));
        }
    }
    Ok(ExtendedBundle::from_flat(&q, n))
}

/// A fiber together with the agents trading in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    pub fiber: Fiber,
    pub agents: Vec<Agent>,
}

impl Economy {
    pub fn new(fiber: Fiber, agents: Vec<Agent>) -> Result<Self, EconomyError> {
        if agents.is_empty() {
            return Err(EconomyError::Invalid("economy has no agents".into()));
        }
        let probe = fiber.unit_prices();
        for a in &agents {
            check_dims(a, &probe, &fiber)?;
            if a.endowment.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(EconomyError::NegativeInput(format!(
                    "endowment of agent `{}`",
                    a.id
                )));
            }
        }
        if fiber.is_forbidden(0) {
            return Err(EconomyError::NumeraireForbidden(fiber.goods[0].clone()));
        }
        for i in fiber.active_goods() {
            if !agents.iter().any(|a| a.endowment[i] > 0.0) {
                return Err(EconomyError::UnsupportedGood(fiber.goods[i].clone()));
            }
        }
        Ok(Economy { fiber, agents })
    }

    /// Instantiates configured agents over `fiber`, optionally overriding
    /// endowments (by agent id) and the duty weight.
    pub fn from_templates(
        fiber: &Fiber,
        templates: &[AgentConfig],
        endowments: Option<&BTreeMap<String, Vec<f64>>>,
        lambda: Option<f64>,
    ) -> Result<Self, EconomyError> {
        let agents = templates
            .iter()
            .map(|t| {
                let mut agent = match endowments {
                    Some(map) => t.instantiate_with(
                        fiber,
                        map.get(&t.id).cloned().unwrap_or_else(|| vec![0.0; fiber.n()]),
                    ),
                    None => t.instantiate(fiber),
                };
                if let Some(l) = lambda {
                    agent.lambda = l;
                }
                agent
            })
            .collect();
        Economy::new(fiber.clone(), agents)
    }

    pub fn total_endowment(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.fiber.n()];
        for a in &self.agents {
            for (t, w) in total.iter_mut().zip(&a.endowment) {
                *t += w;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duty::{Predicate, SourcedPredicate};

    fn prices(p: &[f64], n: usize) -> PriceVector {
        PriceVector::new(p.to_vec(), n).unwrap()
    }

    fn forbid_second() -> Fiber {
        Fiber::new(
            "y",
            vec!["a".into(), "b".into()],
            vec![],
            vec![],
            ConstraintSet {
                predicates: vec![SourcedPredicate {
                    source: "ban".into(),
                    predicate: Predicate::EqualsZero(Dimension::Good("b".into())),
                }],
                prior_claim_total: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn budget_identity_is_feasible() {
        let fiber = Fiber::plain("y", &["a", "b"]);
        let agent = Agent::cobb_douglas("i", vec![1.0, 0.0], vec![0.5, 0.5]);
        let p = prices(&[1.0, 1.0], 2);
        let c = ExtendedBundle::new(vec![0.5, 0.5], vec![]);
        assert!(feasible(&agent, &p, &fiber, &c).unwrap());
        let over = ExtendedBundle::new(vec![0.6, 0.5], vec![]);
        assert!(!feasible(&agent, &p, &fiber, &over).unwrap());
        let wrong = ExtendedBundle::new(vec![0.6], vec![]);
        assert!(matches!(
            feasible(&agent, &p, &fiber, &wrong),
            Err(EconomyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn forbidden_good_is_infeasible() {
        let fiber = forbid_second();
        let agent = Agent::cobb_douglas("i", vec![1.0, 0.0], vec![0.5, 0.5]);
        let p = prices(&[1.0, 1.0], 2);
        let c = ExtendedBundle::new(vec![0.1, 0.1], vec![]);
        assert!(!feasible(&agent, &p, &fiber, &c).unwrap());
    }

    #[test]
    fn prior_claim_reduces_income() {
        let constraints = ConstraintSet {
            predicates: vec![],
            prior_claim_total: 500.0,
        };
        let fiber = Fiber::new(
            "y",
            vec!["money".into()],
            vec!["charity".into()],
            vec![1.0],
            constraints,
        )
        .unwrap();
        let mut agent = Agent::cobb_douglas("donor", vec![1000.0], vec![1.0]);
        agent.utility.beta = vec![1.0];
        agent.utility.reference_premium = vec![0.0];
        let p = fiber.unit_prices();
        let costing = |c: f64| ExtendedBundle::new(vec![0.0], vec![c]);
        assert!(!feasible(&agent, &p, &fiber, &costing(600.0)).unwrap());
        assert!(feasible(&agent, &p, &fiber, &costing(500.0)).unwrap());
    }

    #[test]
    fn equal_shares_demand() {
        let fiber = Fiber::plain("y", &["a", "b"]);
        let agent = Agent::cobb_douglas("i", vec![1.0, 0.0], vec![0.5, 0.5]);
        let d = demand(&agent, &prices(&[1.0, 1.0], 2), &fiber).unwrap();
        assert!(
            (d.x[0] - 0.5).abs() < 1e-12 && (d.x[1] - 0.5).abs() < 1e-12,
            "{d:?}"
        );
    }

    #[test]
    fn forbid_moves_all_income_to_remaining_good() {
        let fiber = forbid_second();
        let agent = Agent::cobb_douglas("i", vec![1.0, 0.0], vec![0.5, 0.5]);
        let d = demand(&agent, &prices(&[1.0, 1.0], 2), &fiber).unwrap();
        assert_eq!(d.x[1], 0.0);
        assert!((d.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_good_one_duty_interior() {
        // u = ln(x + ε) + ln(1 + e), x + e = 2  ⇒  x = 1.5, e = 0.5 (up to ε).
        let fiber = Fiber::new(
            "y",
            vec!["m".into()],
            vec!["d".into()],
            vec![1.0],
            ConstraintSet::default(),
        )
        .unwrap();
        let agent = Agent {
            id: "i".into(),
            endowment: vec![2.0],
            utility: UtilitySpec::cobb_douglas(vec![1.0], vec![1.0]),
            lambda: 1.0,
            theta: 0.0,
        };
        let d = demand(&agent, &fiber.unit_prices(), &fiber).unwrap();
        assert!((d.x[0] - 1.5).abs() < 1e-8, "{d:?}");
        assert!((d.e[0] - 0.5).abs() < 1e-8, "{d:?}");
        assert!((d.x[0] + d.e[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn prior_claim_beyond_income_is_infeasible() {
        let fiber = Fiber::new(
            "y",
            vec!["m".into()],
            vec![],
            vec![],
            ConstraintSet {
                predicates: vec![],
                prior_claim_total: 800.0,
            },
        )
        .unwrap();
        let agent = Agent::cobb_douglas("i", vec![500.0], vec![1.0]);
        assert!(matches!(
            demand(&agent, &fiber.unit_prices(), &fiber),
            Err(EconomyError::InfeasibleDutySet { .. })
        ));
    }

    #[test]
    fn veblen_reduces_to_goods_utility() {
        let spec = UtilitySpec::veblen(vec![0.5, 0.5], vec![1.0], vec![2.0]);
        let b = ExtendedBundle::new(vec![1.0, 2.0], vec![0.0]);
        let goods_only = 0.5 * (1.0 + BOUNDARY_EPS).ln() + 0.5 * (2.0 + BOUNDARY_EPS).ln();
        assert!((utility_value(&spec, 0.0, 3.0, &b, &[2.0]).unwrap() - goods_only).abs() < 1e-15);
        let b = ExtendedBundle::new(vec![1.0, 2.0], vec![4.0]);
        let at_reference = utility_value(&spec, 1.0, 3.0, &b, &[2.0]).unwrap();
        let cd = utility_value(
            &UtilitySpec::cobb_douglas(vec![0.5, 0.5], vec![1.0]),
            1.0,
            0.0,
            &b,
            &[2.0],
        )
        .unwrap();
        assert_eq!(at_reference, cd);
        assert!(matches!(
            utility_value(&spec, 1.0, 1.0, &b, &[0.0]),
            Err(EconomyError::NonPositivePrice(_))
        ));
    }

    #[test]
    fn unsupported_good_is_reported() {
        let fiber = Fiber::plain("y", &["a", "b"]);
        let agent = Agent::cobb_douglas("i", vec![1.0, 0.0], vec![0.5, 0.5]);
        assert_eq!(
            Economy::new(fiber, vec![agent]),
            Err(EconomyError::UnsupportedGood("b".into()))
        );
    }
}
