//! Walrasian equilibria of a fiber economy.
//!
//! Excess demand is computed over goods. Imperfect duties are supplied
//! perfectly elastically at their configured price, so their excess demand is
//! identically zero; the money spent on them, like prior claims, leaves the
//! economy as numéraire and shows up in the numéraire's excess demand. With
//! that accounting every agent exhausts its budget and Walras' law holds
//! exactly.
//!
//! The first good is the numéraire with price one. Solvers move only the
//! prices of the other goods whose markets are open.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ValidationIssue;
use crate::economy::{demand, Economy, EconomyError, ExtendedBundle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error(transparent)]
    Economy(#[from] EconomyError),
    #[error("invalid prices: {0}")]
    InvalidPrices(String),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("tâtonnement did not converge: residual {:.3e} after {} iterations", .0.residual, .0.iterations)]
    NoConvergence(Box<EquilibriumResult>),
    #[error("grid oracle supports at most {max} free prices, economy has {got}")]
    DimensionTooLarge { got: usize, max: usize },
    #[error("Jacobian is singular at the equilibrium (|det| = {det:.3e})")]
    SingularJacobian { det: f64 },
}

/// Strictly positive prices over goods followed by imperfect duties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceVector {
    p: Vec<f64>,
    goods: usize,
}

impl PriceVector {
    pub fn new(p: Vec<f64>, goods: usize) -> Result<Self, EconomyError> {
        if goods == 0 || goods > p.len() {
            return Err(EconomyError::DimensionMismatch {
                expected: format!("at least {goods} prices with one good"),
                got: p.len().to_string(),
            });
        }
        if let Some(i) = p.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(EconomyError::NonPositivePrice(format!("coordinate {i}")));
        }
        Ok(PriceVector { p, goods })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn goods(&self) -> &[f64] {
        &self.p[..self.goods]
    }

    pub fn duties(&self) -> &[f64] {
        &self.p[self.goods..]
    }

    /// Rescaled so the numéraire costs one.
    pub fn normalized(&self) -> Self {
        let unit = self.p[0];
        PriceVector {
            p: self.p.iter().map(|v| v / unit).collect(),
            goods: self.goods,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        PriceVector {
            p: self.p.iter().map(|v| v * k).collect(),
            goods: self.goods,
        }
    }

    pub fn dot(&self, z: &[f64]) -> f64 {
        self.p.iter().zip(z).map(|(a, b)| a * b).sum()
    }
}

/// Anything with an aggregate excess demand over goods prices. Lets the
/// solvers and oracles run on test economies outside the built-in families.
pub trait ExcessDemand {
    /// Number of goods, the numéraire included.
    fn goods(&self) -> usize;

    /// Goods whose markets are open.
    fn active_goods(&self) -> Vec<usize> {
        (0..self.goods()).collect()
    }

    /// Excess demand over goods at the given goods prices.
    fn excess(&self, goods_prices: &[f64]) -> Result<Vec<f64>, EquilibriumError>;

    /// Quantity scale of the economy, used to size residual bands.
    fn scale(&self) -> f64 {
        1.0
    }

    /// Prices the solvers adjust: open markets other than the numéraire.
    fn free_goods(&self) -> Vec<usize> {
        self.active_goods().into_iter().filter(|&i| i != 0).collect()
    }
}

impl ExcessDemand for Economy {
    fn goods(&self) -> usize {
        self.fiber.n()
    }

    fn active_goods(&self) -> Vec<usize> {
        self.fiber.active_goods().collect()
    }

    fn excess(&self, goods_prices: &[f64]) -> Result<Vec<f64>, EquilibriumError> {
        let prices = self.fiber.prices(goods_prices)?;
        let z = excess_demand(self, &prices)?;
        Ok(z[..self.fiber.n()].to_vec())
    }

    fn scale(&self) -> f64 {
        self.total_endowment().into_iter().fold(0.0, f64::max).max(1e-12)
    }
}

/// Numéraire units leaving the economy for one agent's duties and claims.
fn outflow(economy: &Economy, prices: &PriceVector, bundle: &ExtendedBundle) -> f64 {
    let duty_spend: f64 = prices.duties().iter().zip(&bundle.e).map(|(p, e)| p * e).sum();
    duty_spend / prices.as_slice()[0] + economy.fiber.constraints.prior_claim_total
}

/// Aggregate excess demand over goods followed by duties (always zero).
pub fn excess_demand(economy: &Economy, prices: &PriceVector) -> Result<Vec<f64>, EquilibriumError> {
    let fiber = &economy.fiber;
    if prices.len() != fiber.dim() || prices.goods().len() != fiber.n() {
        return Err(EquilibriumError::InvalidPrices(format!(
            "expected {} goods and {} duties",
            fiber.n(),
            fiber.l()
        )));
    }
    let mut z = vec![0.0; fiber.dim()];
    for agent in &economy.agents {
        let d = demand(agent, prices, fiber)?;
        for i in fiber.active_goods() {
            z[i] += d.x[i] - agent.endowment[i];
        }
        z[0] += outflow(economy, prices, &d);
    }
    Ok(z)
}

fn residual(z: &[f64], active: &[usize]) -> f64 {
    active.iter().map(|&i| z[i].abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_step() -> f64 {
    0.1
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    10_000
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            step: default_step(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

impl SolverSettings {
    pub fn validate(&self, at: &str, issues: &mut Vec<ValidationIssue>) {
        for (name, v) in [("step", self.step), ("tol", self.tol)] {
            if !(v.is_finite() && v > 0.0) {
                issues.push(ValidationIssue {
                    path: format!("{at}.{name}"),
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        if self.max_iter == 0 {
            issues.push(ValidationIssue {
                path: format!("{at}.max_iter"),
                message: "must be positive".into(),
            });
        }
    }

    fn check(&self) -> Result<(), EquilibriumError> {
        let mut issues = Vec::new();
        self.validate("solver", &mut issues);
        match issues.first() {
            Some(i) => Err(EquilibriumError::InvalidSettings(i.to_string())),
            None => Ok(()),
        }
    }
}

/// One tâtonnement iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub residual: f64,
    /// `p · z` at this iterate.
    pub walras: f64,
    /// `|p| · |z|`, the scale `walras` is judged against.
    pub walras_scale: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumIndex {
    Plus,
    Minus,
    Undefined,
}

impl EquilibriumIndex {
    pub fn value(self) -> Option<i8> {
        match self {
            EquilibriumIndex::Plus => Some(1),
            EquilibriumIndex::Minus => Some(-1),
            EquilibriumIndex::Undefined => None,
        }
    }
}

/// Outcome of a price search on a generic excess-demand model.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSearch {
    pub prices: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterateRecord>,
}

fn record(prices: &[f64], z: &[f64], step: f64, active: &[usize]) -> IterateRecord {
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    IterateRecord {
        residual: residual(z, active),
        walras: prices.iter().zip(z).map(|(p, q)| p * q).sum(),
        walras_scale: norm(prices) * norm(z),
        step,
    }
}

/// `p ← normalize(p + step · z)` over the open markets, normalized so the
/// open prices average one. Closed markets keep their relative price.
///
/// A price may fall at most by half in one step. Whenever the residual grows
/// the step is halved; the best iterate seen is returned with the numéraire
/// at one.
pub fn tatonnement<M: ExcessDemand + ?Sized>(
    model: &M,
    start: &[f64],
    settings: &SolverSettings,
) -> Result<PriceSearch, EquilibriumError> {
    settings.check()?;
    if start.len() != model.goods() || start.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(EquilibriumError::InvalidPrices(format!("{start:?}")));
    }
    let active = model.active_goods();
    let normalize = |p: &mut Vec<f64>| {
        let mean = active.iter().map(|&i| p[i]).sum::<f64>() / active.len() as f64;
        p.iter_mut().for_each(|v| *v /= mean);
    };
    let mut p = start.to_vec();
    normalize(&mut p);
    let mut z = model.excess(&p)?;
    let mut step = settings.step;
    let mut history = vec![record(&p, &z, step, &active)];
    let mut current = history[0].residual;
    let mut best = (p.clone(), current);
    let mut iterations = 0;

    while current > settings.tol && iterations < settings.max_iter {
        let mut next = p.clone();
        for &i in &active {
            next[i] = (p[i] + step * z[i]).max(0.5 * p[i]);
        }
        normalize(&mut next);
        let z_next = model.excess(&next)?;
        let r = residual(&z_next, &active);
        if r > current {
            step *= 0.5;
        }
        p = next;
        z = z_next;
        current = r;
        iterations += 1;
        history.push(record(&p, &z, step, &active));
        if current < best.1 {
            best = (p.clone(), current);
        }
    }

    let (mut prices, residual) = best;
    let unit = prices[0];
    prices.iter_mut().for_each(|v| *v /= unit);
    Ok(PriceSearch {
        converged: residual <= settings.tol,
        prices,
        residual,
        iterations,
        history,
    })
}

/// Prices, allocations and diagnostics at one fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub fiber: String,
    pub prices: PriceVector,
    /// Agent id and final bundle, in the economy's agent order.
    pub allocations: Vec<(String, ExtendedBundle)>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub index: EquilibriumIndex,
    pub history: Vec<IterateRecord>,
}

impl EquilibriumResult {
    pub fn allocation(&self, agent: &str) -> Option<&ExtendedBundle> {
        self.allocations
            .iter()
            .find(|(id, _)| id == agent)
            .map(|(_, b)| b)
    }

    pub fn price_ratio(&self, good: usize) -> f64 {
        self.prices.as_slice()[good] / self.prices.as_slice()[0]
    }
}

/// Tâtonnement on a fiber economy. A run that exhausts its iterations is
/// returned as [`EquilibriumError::NoConvergence`] carrying the best iterate.
pub fn solve_tatonnement(
    economy: &Economy,
    start: &PriceVector,
    settings: &SolverSettings,
) -> Result<EquilibriumResult, EquilibriumError> {
    let search = tatonnement(economy, start.goods(), settings)?;
    let prices = economy.fiber.prices(&search.prices)?;
    let allocations = economy
        .agents
        .iter()
        .map(|a| Ok((a.id.clone(), demand(a, &prices, &economy.fiber)?)))
        .collect::<Result<Vec<_>, EconomyError>>()?;
    let index = if search.converged {
        match equilibrium_index(economy, &search.prices) {
            Ok(i) => i,
            Err(EquilibriumError::SingularJacobian { .. }) => EquilibriumIndex::Undefined,
            Err(e) => return Err(e),
        }
    } else {
        EquilibriumIndex::Undefined
    };
    let result = EquilibriumResult {
        fiber: economy.fiber.y_id.clone(),
        prices,
        allocations,
        residual: search.residual,
        iterations: search.iterations,
        converged: search.converged,
        index,
        history: search.history,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(EquilibriumError::NoConvergence(Box::new(result)))
    }
}

/// Starts from unit goods prices with the default settings.
pub fn solve(economy: &Economy, settings: &SolverSettings) -> Result<EquilibriumResult, EquilibriumError> {
    solve_tatonnement(economy, &economy.fiber.unit_prices(), settings)
}

/// Gross quantity of `good` bought in the market: `Σ max(x − ω, 0)`.
pub fn trade_volume(economy: &Economy, result: &EquilibriumResult, good: usize) -> f64 {
    economy
        .agents
        .iter()
        .filter_map(|a| {
            result
                .allocation(&a.id)
                .map(|b| (b.x[good] - a.endowment[good]).max(0.0))
        })
        .sum()
}

/// Share of aggregate disposable income spent on imperfect duties.
pub fn duty_expenditure_share(economy: &Economy, result: &EquilibriumResult) -> f64 {
    let p = &result.prices;
    let mut duty = 0.0;
    let mut income = 0.0;
    for a in &economy.agents {
        income += crate::economy::disposable_income(a, p, &economy.fiber);
        if let Some(b) = result.allocation(&a.id) {
            duty += p.duties().iter().zip(&b.e).map(|(q, e)| q * e).sum::<f64>();
        }
    }
    if income > 0.0 {
        duty / income
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Index

pub const INDEX_FD_STEP: f64 = 1e-5;
pub const SINGULARITY_THRESHOLD: f64 = 1e-8;

/// Central-difference Jacobian of excess demand over the free prices.
pub fn free_jacobian<M: ExcessDemand + ?Sized>(
    model: &M,
    prices: &[f64],
) -> Result<DMatrix<f64>, EquilibriumError> {
    let free = model.free_goods();
    let k = free.len();
    let mut jac = DMatrix::zeros(k, k);
    for (col, &j) in free.iter().enumerate() {
        let h = INDEX_FD_STEP.min(0.5 * prices[j]);
        let mut up = prices.to_vec();
        let mut down = prices.to_vec();
        up[j] += h;
        down[j] -= h;
        let zu = model.excess(&up)?;
        let zd = model.excess(&down)?;
        for (row, &i) in free.iter().enumerate() {
            jac[(row, col)] = (zu[i] - zd[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Sign of `det(−J)` for the excess-demand Jacobian with the numéraire row
/// and column removed.
pub fn equilibrium_index<M: ExcessDemand + ?Sized>(
    model: &M,
    prices: &[f64],
) -> Result<EquilibriumIndex, EquilibriumError> {
    let jac = free_jacobian(model, prices)?;
    let k = jac.nrows();
    if k == 0 {
        return Ok(EquilibriumIndex::Plus);
    }
    let det = (-jac.clone()).determinant();
    let scale = jac.iter().fold(1.0_f64, |m, v| m.max(v.abs())).powi(k as i32);
    if !det.is_finite() || det.abs() < SINGULARITY_THRESHOLD * scale {
        return Err(EquilibriumError::SingularJacobian { det });
    }
    Ok(if det > 0.0 {
        EquilibriumIndex::Plus
    } else {
        EquilibriumIndex::Minus
    })
}

// ---------------------------------------------------------------------------
// Grid oracle

pub const MAX_ORACLE_DIMS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    /// Points per free price.
    pub resolution: usize,
    /// Price range, log-spaced.
    pub lo: f64,
    pub hi: f64,
    /// Largest accepted residual, relative to the economy's quantity scale.
    pub band: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid {
            resolution: 400,
            lo: 0.01,
            hi: 100.0,
            band: 0.05,
        }
    }
}

impl OracleGrid {
    pub fn level(&self, k: usize) -> f64 {
        let t = k as f64 / (self.resolution - 1) as f64;
        (self.lo.ln() + t * (self.hi.ln() - self.lo.ln())).exp()
    }

    /// Ratio between neighbouring grid prices.
    pub fn step_ratio(&self) -> f64 {
        (self.hi / self.lo).powf(1.0 / (self.resolution - 1) as f64)
    }
}

/// Exhaustive scan of a log-spaced price grid. Returns the interior local
/// minima of the excess-demand residual that lie inside the band, as goods
/// price vectors with the numéraire at one.
pub fn solve_grid_oracle<M: ExcessDemand + ?Sized>(
    model: &M,
    grid: &OracleGrid,
) -> Result<Vec<Vec<f64>>, EquilibriumError> {
    let free = model.free_goods();
    let k = free.len();
    if k > MAX_ORACLE_DIMS {
        return Err(EquilibriumError::DimensionTooLarge {
            got: k,
            max: MAX_ORACLE_DIMS,
        });
    }
    if grid.resolution < 10 || !(grid.lo > 0.0 && grid.hi > grid.lo) || !(grid.band > 0.0) {
        return Err(EquilibriumError::InvalidSettings(format!("{grid:?}")));
    }
    let active = model.active_goods();
    let r = grid.resolution;
    let total = r.pow(k as u32);
    let unravel = |mut idx: usize| -> Vec<usize> {
        let mut out = vec![0; k];
        for slot in out.iter_mut().rev() {
            *slot = idx % r;
            idx /= r;
        }
        out
    };
    let prices_at = |cell: &[usize]| -> Vec<f64> {
        let mut p = vec![1.0; model.goods()];
        for (&g, &c) in free.iter().zip(cell) {
            p[g] = grid.level(c);
        }
        p
    };

    let mut norms = Vec::with_capacity(total);
    for idx in 0..total {
        let z = model.excess(&prices_at(&unravel(idx)))?;
        norms.push(residual(&z, &active));
    }
    if k == 0 {
        return Ok(if norms[0] <= grid.band * model.scale() {
            vec![prices_at(&[])]
        } else {
            Vec::new()
        });
    }

    let band = grid.band * model.scale();
    let mut found = Vec::new();
    for idx in 0..total {
        let cell = unravel(idx);
        if cell.iter().any(|&c| c == 0 || c == r - 1) || norms[idx] > band {
            continue;
        }
        let mut is_min = true;
        for offset in 0..3usize.pow(k as u32) {
            let mut o = offset;
            let mut neighbour = 0;
            let mut centre = true;
            for &c in &cell {
                let d = o % 3;
                o /= 3;
                centre &= d == 1;
                neighbour = neighbour * r + (c + d - 1);
            }
            if centre {
                continue;
            }
            // Ties go to the earlier cell so a flat minimum is reported once.
            if norms[neighbour] < norms[idx] || (norms[neighbour] == norms[idx] && neighbour < idx) {
                is_min = false;
                break;
            }
        }
        if is_min {
            found.push(prices_at(&cell));
        }
    }
    Ok(found)
}

/// Damped Newton refinement on the free prices, working in log prices.
pub fn refine<M: ExcessDemand + ?Sized>(
    model: &M,
    guess: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PriceSearch, EquilibriumError> {
    let active = model.active_goods();
    let free = model.free_goods();
    let mut p: Vec<f64> = guess.iter().map(|v| v / guess[0]).collect();
    let mut z = model.excess(&p)?;
    let mut history = vec![record(&p, &z, 1.0, &active)];
    let mut current = history[0].residual;
    let mut iterations = 0;
    while current > tol && iterations < max_iter {
        let jac = free_jacobian(model, &p)?;
        let rhs = nalgebra::DVector::from_iterator(free.len(), free.iter().map(|&i| -z[i]));
        let Some(delta) = jac.lu().solve(&rhs) else {
            break;
        };
        let mut damping = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut next = p.clone();
            for (d, &i) in delta.iter().zip(&free) {
                // Multiplicative update keeps prices positive.
                next[i] = p[i] * (damping * d / p[i]).clamp(-2.0, 2.0).exp();
            }
            let z_next = model.excess(&next)?;
            let r = residual(&z_next, &active);
            if r < current {
                p = next;
                z = z_next;
                current = r;
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        iterations += 1;
        history.push(record(&p, &z, damping, &active));
        if !accepted {
            break;
        }
    }
    Ok(PriceSearch {
        converged: current <= tol,
        prices: p,
        residual: current,
        iterations,
        history,
    })
}

/// A refined equilibrium with its index.
#[derive(Debug, Clone, PartialEq)]
pub struct LocatedEquilibrium {
    pub prices: Vec<f64>,
    pub residual: f64,
    pub index: EquilibriumIndex,
}

/// Grid-oracle candidates, each refined by Newton and deduplicated.
pub fn locate_equilibria<M: ExcessDemand + ?Sized>(
    model: &M,
    grid: &OracleGrid,
    tol: f64,
) -> Result<Vec<LocatedEquilibrium>, EquilibriumError> {
    let mut out: Vec<LocatedEquilibrium> = Vec::new();
    for guess in solve_grid_oracle(model, grid)? {
        let search = refine(model, &guess, tol, 100)?;
        if !search.converged {
            continue;
        }
        let duplicate = out.iter().any(|e| {
            e.prices
                .iter()
                .zip(&search.prices)
                .all(|(a, b)| (a / b).ln().abs() < 1e-6)
        });
        if duplicate {
            continue;
        }
        let index = match equilibrium_index(model, &search.prices) {
            Ok(i) => i,
            Err(EquilibriumError::SingularJacobian { .. }) => EquilibriumIndex::Undefined,
            Err(e) => return Err(e),
        };
        out.push(LocatedEquilibrium {
            prices: search.prices,
            residual: search.residual,
            index,
        });
    }
    Ok(out)
}
