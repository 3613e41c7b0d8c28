//! Independent oracles and instance generators shared by the integration
//! tests. Nothing here calls the solver it is used to check.
#![allow(dead_code)]

use ethical_fibers::economy::{Agent, Economy, Fiber};
use ethical_fibers::equilibrium::{EquilibriumError, ExcessDemand};
use ethical_fibers::preferences::{ChoiceGrid, PreferenceRelation};
use ethical_fibers::ExtendedBundle;
use rand::Rng;

// ---------------------------------------------------------------------------
// Exchange economies

/// Closed-form equilibrium of a two-good Cobb-Douglas exchange economy.
///
/// With `a_i = α_i1 / (α_i1 + α_i2)` and `p = p₂/p₁`, clearing good one gives
/// `Σ a_i (ω_i1 + p ω_i2) = Σ ω_i1`. Returns `p` and each agent's bundle.
pub fn cd_two_good(alpha: &[[f64; 2]], endow: &[[f64; 2]]) -> (f64, Vec<[f64; 2]>) {
    let a: Vec<f64> = alpha.iter().map(|v| v[0] / (v[0] + v[1])).collect();
    let num: f64 = endow.iter().zip(&a).map(|(w, ai)| w[0] - ai * w[0]).sum();
    let den: f64 = endow.iter().zip(&a).map(|(w, ai)| ai * w[1]).sum();
    let p = num / den;
    let alloc = endow
        .iter()
        .zip(&a)
        .map(|(w, ai)| {
            let m = w[0] + p * w[1];
            [ai * m, (1.0 - ai) * m / p]
        })
        .collect();
    (p, alloc)
}

pub fn cd_economy(alpha: &[[f64; 2]], endow: &[[f64; 2]]) -> Economy {
    let agents = alpha
        .iter()
        .zip(endow)
        .enumerate()
        .map(|(i, (a, w))| Agent::cobb_douglas(&format!("a{i}"), w.to_vec(), a.to_vec()))
        .collect();
    Economy::new(Fiber::plain("y", &["x1", "x2"]), agents).unwrap()
}

/// A random two-agent, two-good Cobb-Douglas economy whose equilibrium
/// price ratio stays well inside `[0.05, 20]`.
pub fn random_cd(rng: &mut impl Rng) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    loop {
        let agents = rng.gen_range(2..=3);
        let alpha: Vec<[f64; 2]> = (0..agents)
            .map(|_| {
                let a = rng.gen_range(0.1..0.9);
                [a, 1.0 - a]
            })
            .collect();
        let endow: Vec<[f64; 2]> = (0..agents)
            .map(|_| [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)])
            .collect();
        if endow.iter().map(|w| w[0]).sum::<f64>() < 0.2 || endow.iter().map(|w| w[1]).sum::<f64>() < 0.2 {
            continue;
        }
        let (p, _) = cd_two_good(&alpha, &endow);
        if (0.05..20.0).contains(&p) {
            return (alpha, endow);
        }
    }
}

/// One-good-against-numéraire economy with aggregate excess demand
/// `z(p) = r(1 − p) + p^{8/9} − p^{1/9}` for the second good. With
/// `r = 2^{8/9} − 2^{1/9}` it has equilibria at `p ∈ {1/2, 1, 2}` with
/// indices `+1, −1, +1`.
pub struct ThreeEquilibria {
    pub r: f64,
}

impl ThreeEquilibria {
    pub fn regular() -> Self {
        ThreeEquilibria {
            r: 2f64.powf(8.0 / 9.0) - 2f64.powf(1.0 / 9.0),
        }
    }

    /// `z'(1) = 7/9 − r`, so `r` just above `7/9` puts a near-degenerate
    /// equilibrium at `p = 1`.
    pub fn near_singular() -> Self {
        ThreeEquilibria { r: 7.0 / 9.0 + 1e-10 }
    }

    pub fn z(&self, p: f64) -> f64 {
        self.r * (1.0 - p) + p.powf(8.0 / 9.0) - p.powf(1.0 / 9.0)
    }
}

impl ExcessDemand for ThreeEquilibria {
    fn goods(&self) -> usize {
        2
    }

    fn excess(&self, p: &[f64]) -> Result<Vec<f64>, EquilibriumError> {
        let z1 = self.z(p[1] / p[0]);
        Ok(vec![-p[1] * z1 / p[0], z1])
    }
}

// ---------------------------------------------------------------------------
// Topology

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    MissingEmpty,
    MissingWhole,
    Union(u32, u32),
    Intersection(u32, u32),
}

/// All-pairs check of the open-set axioms on a family of bitmask sets.
pub fn brute_topology(family: &[u32], m: usize) -> Vec<Violation> {
    let full = (1u32 << m) - 1;
    let has = |s: u32| family.contains(&s);
    let mut out = Vec::new();
    if !has(0) {
        out.push(Violation::MissingEmpty);
    }
    if !has(full) {
        out.push(Violation::MissingWhole);
    }
    for &a in family {
        for &b in family {
            if !has(a | b) {
                out.push(Violation::Union(a, b));
            }
            if !has(a & b) {
                out.push(Violation::Intersection(a, b));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Preferences

pub fn random_grid(rng: &mut impl Rng, n: usize) -> ChoiceGrid {
    let mut pts: Vec<ExtendedBundle> = Vec::with_capacity(n);
    while pts.len() < n {
        let b = ExtendedBundle::new(
            vec![rng.gen_range(0..30) as f64, rng.gen_range(0..30) as f64],
            vec![rng.gen_range(0..5) as f64],
        );
        if !pts.contains(&b) {
            pts.push(b);
        }
    }
    ChoiceGrid::new(pts).unwrap()
}

/// Matrix form of a relation, for the brute-force checks.
pub fn matrix(rel: &PreferenceRelation) -> Vec<Vec<bool>> {
    let n = rel.len();
    (0..n)
        .map(|a| (0..n).map(|b| rel.holds(a, b)).collect())
        .collect()
}

pub fn brute_reflexive(r: &[Vec<bool>]) -> bool {
    (0..r.len()).all(|a| r[a][a])
}

pub fn brute_complete(r: &[Vec<bool>]) -> bool {
    let n = r.len();
    (0..n).all(|a| (0..n).all(|b| r[a][b] || r[b][a]))
}

pub fn brute_transitive(r: &[Vec<bool>]) -> bool {
    let n = r.len();
    (0..n).all(|a| (0..n).all(|b| (0..n).all(|c| !(r[a][b] && r[b][c]) || r[a][c])))
}

pub fn brute_monotone(r: &[Vec<bool>], pts: &[ExtendedBundle]) -> bool {
    let ge = |a: &ExtendedBundle, b: &ExtendedBundle| a.coords().zip(b.coords()).all(|(u, v)| u >= v);
    let n = r.len();
    (0..n).all(|a| (0..n).all(|b| a == b || !ge(&pts[a], &pts[b]) || r[a][b]))
}

/// Weak order from random utility levels with deliberate ties.
pub fn random_weak_order(rng: &mut impl Rng, n: usize) -> PreferenceRelation {
    let grid = random_grid(rng, n);
    let levels = rng.gen_range(1..=n.max(1));
    let values: Vec<usize> = (0..n).map(|_| rng.gen_range(0..levels)).collect();
    PreferenceRelation::from_fn(grid, |a, b| values[a] >= values[b])
}
