//! Preference relations over finite grids of extended bundles.
//!
//! Rows of a relation are stored as bitsets, so the transitivity check costs
//! `O(n³ / 64)` and relations on a few hundred points are cheap to verify.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::{ExtendedBundle, BOUNDARY_EPS};

pub const MAX_GRID_POINTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreferenceError {
    #[error("relation is not complete: points {0} and {1} are incomparable")]
    NotComplete(usize, usize),
    #[error("relation is not transitive: {0} ≽ {1} ≽ {2} but not {0} ≽ {2}")]
    NotTransitive(usize, usize, usize),
    #[error("utility is not finite at grid point {0}")]
    NonFiniteValue(usize),
    #[error("negative or non-finite input: {0}")]
    NegativeInput(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid relation: {0}")]
    InvalidRelation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceGrid {
    points: Vec<ExtendedBundle>,
    resolution: usize,
    goods: usize,
    duties: usize,
}

impl ChoiceGrid {
    pub fn new(points: Vec<ExtendedBundle>) -> Result<Self, PreferenceError> {
        if points.len() > MAX_GRID_POINTS {
            return Err(PreferenceError::InvalidGrid(format!(
                "{} points exceeds the limit of {MAX_GRID_POINTS}",
                points.len()
            )));
        }
        let (goods, duties) = points.first().map_or((0, 0), ExtendedBundle::dims);
        for (i, p) in points.iter().enumerate() {
            if p.dims() != (goods, duties) {
                return Err(PreferenceError::InvalidGrid(format!(
                    "point {i} has dimensions {:?}, expected {:?}",
                    p.dims(),
                    (goods, duties)
                )));
            }
            if !p.is_nonnegative() {
                return Err(PreferenceError::InvalidGrid(format!(
                    "point {i} has a negative or non-finite coordinate"
                )));
            }
            if points[..i].contains(p) {
                return Err(PreferenceError::InvalidGrid(format!("point {i} is repeated")));
            }
        }
        Ok(ChoiceGrid {
            points,
            resolution: 0,
            goods,
            duties,
        })
    }

    /// Every combination of `resolution` evenly spaced levels in `[0, upper]`
    /// on each of the `goods + duties` coordinates.
    pub fn regular(
        goods: usize,
        duties: usize,
        resolution: usize,
        upper: f64,
    ) -> Result<Self, PreferenceError> {
        let dims = goods + duties;
        let total = resolution
            .checked_pow(dims as u32)
            .filter(|&t| t <= MAX_GRID_POINTS)
            .ok_or_else(|| PreferenceError::InvalidGrid(format!("{resolution}^{dims} points is too many")))?;
        if resolution < 1 || !(upper > 0.0) {
            return Err(PreferenceError::InvalidGrid(
                "resolution must be positive and upper > 0".into(),
            ));
        }
        let level = |k: usize| {
            if resolution == 1 {
                0.0
            } else {
                upper * k as f64 / (resolution - 1) as f64
            }
        };
        let mut points = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut coords = vec![0.0; dims];
            for c in coords.iter_mut().rev() {
                *c = level(idx % resolution);
                idx /= resolution;
            }
            points.push(ExtendedBundle::from_flat(&coords, goods));
        }
        let mut grid = ChoiceGrid::new(points)?;
        grid.resolution = resolution;
        Ok(grid)
    }

    pub fn points(&self) -> &[ExtendedBundle] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points per dimension for regular grids, 0 otherwise.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn dims(&self) -> usize {
        self.goods + self.duties
    }
}

/// Fixed-width bitset row.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Row(Vec<u64>);

impl Row {
    fn new(len: usize) -> Self {
        Row(vec![0; len.div_ceil(64)])
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize, v: bool) {
        let mask = 1u64 << (i % 64);
        if v {
            self.0[i / 64] |= mask;
        } else {
            self.0[i / 64] &= !mask;
        }
    }

    fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    /// First index set in `self` but not in `other`.
    fn first_outside(&self, other: &Row) -> Option<usize> {
        self.0.iter().zip(&other.0).enumerate().find_map(|(w, (a, b))| {
            let diff = a & !b;
            (diff != 0).then(|| w * 64 + diff.trailing_zeros() as usize)
        })
    }

    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + t)
            })
        })
    }
}

/// A binary relation `a ≽ b` on the points of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRelation {
    grid: ChoiceGrid,
    rows: Vec<Row>,
}

impl PreferenceRelation {
    /// The empty relation.
    pub fn empty(grid: ChoiceGrid) -> Self {
        let n = grid.len();
        PreferenceRelation {
            rows: vec![Row::new(n); n],
            grid,
        }
    }

    pub fn from_fn(grid: ChoiceGrid, mut holds: impl FnMut(usize, usize) -> bool) -> Self {
        let mut rel = PreferenceRelation::empty(grid);
        let n = rel.len();
        for a in 0..n {
            for b in 0..n {
                if holds(a, b) {
                    rel.rows[a].set(b, true);
                }
            }
        }
        rel
    }

    /// Builds the relation from listed pairs `(a, b)` meaning `a ≽ b`.
    pub fn from_pairs(grid: ChoiceGrid, pairs: &[(usize, usize)]) -> Result<Self, PreferenceError> {
        let mut rel = PreferenceRelation::empty(grid);
        let n = rel.len();
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(PreferenceError::InvalidRelation(format!(
                    "pair ({a}, {b}) is out of range for {n} points"
                )));
            }
            rel.rows[a].set(b, true);
        }
        Ok(rel)
    }

    pub fn grid(&self) -> &ChoiceGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn holds(&self, a: usize, b: usize) -> bool {
        self.rows[a].get(b)
    }

    pub fn set(&mut self, a: usize, b: usize, value: bool) {
        self.rows[a].set(b, value);
    }

    /// Listed pairs `a ≽ b` in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(a, row)| row.ones().map(move |b| (a, b)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    Reflexivity,
    Completeness,
    Transitivity,
    Monotonicity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Witness {
    Point(usize),
    Pair(usize, usize),
    Triple(usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxiomReport {
    pub axiom: Axiom,
    pub passed: bool,
    pub witness: Option<Witness>,
}

impl AxiomReport {
    fn new(axiom: Axiom, witness: Option<Witness>) -> Self {
        AxiomReport {
            axiom,
            passed: witness.is_none(),
            witness,
        }
    }
}

pub fn check_reflexive(rel: &PreferenceRelation) -> AxiomReport {
    let w = (0..rel.len()).find(|&a| !rel.holds(a, a)).map(Witness::Point);
    AxiomReport::new(Axiom::Reflexivity, w)
}

/// Every pair, the diagonal included, must be ranked one way or the other.
pub fn check_complete(rel: &PreferenceRelation) -> AxiomReport {
    let n = rel.len();
    let w = (0..n)
        .flat_map(|a| (a..n).map(move |b| (a, b)))
        .find(|&(a, b)| !rel.holds(a, b) && !rel.holds(b, a))
        .map(|(a, b)| Witness::Pair(a, b));
    AxiomReport::new(Axiom::Completeness, w)
}

/// The witness is the lexicographically first violating triple.
pub fn check_transitive(rel: &PreferenceRelation) -> AxiomReport {
    let mut witness = None;
    'outer: for (a, row_a) in rel.rows.iter().enumerate() {
        for b in row_a.ones() {
            if let Some(c) = rel.rows[b].first_outside(row_a) {
                witness = Some(Witness::Triple(a, b, c));
                break 'outer;
            }
        }
    }
    AxiomReport::new(Axiom::Transitivity, witness)
}

/// Weak monotonicity: a componentwise larger bundle is weakly preferred.
pub fn check_monotone(rel: &PreferenceRelation) -> AxiomReport {
    let pts = rel.grid.points();
    let n = rel.len();
    let w = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .find(|&(a, b)| a != b && pts[a].dominates(&pts[b]) && !rel.holds(a, b))
        .map(|(a, b)| Witness::Pair(a, b));
    AxiomReport::new(Axiom::Monotonicity, w)
}

pub fn check_all(rel: &PreferenceRelation) -> Vec<AxiomReport> {
    vec![
        check_reflexive(rel),
        check_complete(rel),
        check_transitive(rel),
        check_monotone(rel),
    ]
}

/// Integer ranks representing a complete, transitive relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrdinalUtility {
    ranks: Vec<u32>,
    /// Indifference classes from worst to best; members in grid order.
    classes: Vec<Vec<usize>>,
}

impl OrdinalUtility {
    pub fn rank(&self, point: usize) -> u32 {
        self.ranks[point]
    }

    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn values(&self) -> BTreeMap<usize, f64> {
        self.ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| (i, f64::from(r)))
            .collect()
    }
}

/// Ranks each point by the indifference class it falls in.
///
/// For a total preorder, `a ≽ b` exactly when `a` weakly beats at least as
/// many points as `b`, so the size of each row orders the classes.
pub fn construct_ordinal_utility(rel: &PreferenceRelation) -> Result<OrdinalUtility, PreferenceError> {
    if let Some(Witness::Pair(a, b)) = check_complete(rel).witness {
        return Err(PreferenceError::NotComplete(a, b));
    }
    if let Some(Witness::Triple(a, b, c)) = check_transitive(rel).witness {
        return Err(PreferenceError::NotTransitive(a, b, c));
    }
    let scores: Vec<u32> = rel.rows.iter().map(Row::count).collect();
    let mut distinct = scores.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let ranks: Vec<u32> = scores
        .iter()
        .map(|s| distinct.binary_search(s).expect("score present") as u32)
        .collect();
    let mut classes = vec![Vec::new(); distinct.len()];
    for (i, &r) in ranks.iter().enumerate() {
        classes[r as usize].push(i);
    }
    Ok(OrdinalUtility { ranks, classes })
}

/// The relation `a ≽ b ⇔ u(a) ≥ u(b)`.
pub fn induced_relation(
    utility: impl Fn(&ExtendedBundle) -> f64,
    grid: ChoiceGrid,
) -> Result<PreferenceRelation, PreferenceError> {
    let values: Vec<f64> = grid.points().iter().map(&utility).collect();
    induced_from_values(&values, grid)
}

pub fn induced_from_values(values: &[f64], grid: ChoiceGrid) -> Result<PreferenceRelation, PreferenceError> {
    if values.len() != grid.len() {
        return Err(PreferenceError::InvalidRelation(format!(
            "{} values for {} points",
            values.len(),
            grid.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(PreferenceError::NonFiniteValue(i));
    }
    Ok(PreferenceRelation::from_fn(grid, |a, b| values[a] >= values[b]))
}

/// Shortfall on perfect duties together with the utility of inclinations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceProfile {
    pub perfect_shortfall: f64,
    pub inclination_utility: f64,
}

/// Perfect duties first: a smaller shortfall always wins, and only equal
/// shortfalls fall through to ordinary utility. `Greater` means `a ≻ b`.
pub fn lexicographic_compare(a: &ComplianceProfile, b: &ComplianceProfile) -> Ordering {
    b.perfect_shortfall.total_cmp(&a.perfect_shortfall).then_with(|| {
        match a.inclination_utility.partial_cmp(&b.inclination_utility) {
            Some(o) => o,
            None => a.inclination_utility.total_cmp(&b.inclination_utility),
        }
    })
}

/// `Σ α_i ln(x_i + ε) + λ Σ β_j ln(1 + e_j)`.
pub fn axiom1_utility(
    x: &[f64],
    e: &[f64],
    alpha: &[f64],
    beta: &[f64],
    lambda: f64,
) -> Result<f64, PreferenceError> {
    if x.len() != alpha.len() || e.len() != beta.len() {
        return Err(PreferenceError::InvalidWeights(format!(
            "{} goods weights for {} goods, {} duty weights for {} duties",
            alpha.len(),
            x.len(),
            beta.len(),
            e.len()
        )));
    }
    if alpha.iter().chain(beta).any(|w| !w.is_finite() || *w < 0.0) {
        return Err(PreferenceError::InvalidWeights(
            "weights must be non-negative".into(),
        ));
    }
    if !alpha.iter().chain(beta).any(|w| *w > 0.0) {
        return Err(PreferenceError::InvalidWeights(
            "at least one weight must be positive".into(),
        ));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(PreferenceError::NegativeInput(format!("lambda = {lambda}")));
    }
    if let Some(v) = x.iter().chain(e).find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(PreferenceError::NegativeInput(format!("coordinate {v}")));
    }
    let goods: f64 = alpha
        .iter()
        .zip(x)
        .map(|(a, q)| a * (q + BOUNDARY_EPS).ln())
        .sum();
    let duties: f64 = beta.iter().zip(e).map(|(b, q)| b * q.ln_1p()).sum();
    Ok(goods + lambda * duties)
}

// ---------------------------------------------------------------------------
// Relation files

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityFileSpec {
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub lambda: f64,
}

/// A relation as stored on disk: a list of points and either explicit pairs
/// `[a, b]` meaning `a ≽ b`, or a utility to induce the relation from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationFile {
    pub points: Vec<Vec<f64>>,
    /// Leading coordinates that are goods; the rest are duties. Defaults to all.
    #[serde(default)]
    pub goods: Option<usize>,
    #[serde(default)]
    pub pairs: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub utility: Option<UtilityFileSpec>,
}

impl RelationFile {
    pub fn into_relation(self) -> Result<PreferenceRelation, PreferenceError> {
        let dims = self.points.first().map_or(0, Vec::len);
        let goods = self.goods.unwrap_or(dims);
        if goods > dims {
            return Err(PreferenceError::InvalidGrid(format!(
                "{goods} goods declared for {dims}-dimensional points"
            )));
        }
        let bundles = self
            .points
            .iter()
            .map(|p| {
                if p.len() != dims {
                    Err(PreferenceError::InvalidGrid("points differ in length".into()))
                } else {
                    Ok(ExtendedBundle::from_flat(p, goods))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let grid = ChoiceGrid::new(bundles)?;
        match (self.pairs, self.utility) {
            (Some(pairs), None) => PreferenceRelation::from_pairs(grid, &pairs),
            (None, Some(u)) => {
                let mut values = Vec::with_capacity(grid.len());
                for p in grid.points() {
                    values.push(axiom1_utility(&p.x, &p.e, &u.alpha, &u.beta, u.lambda)?);
                }
                induced_from_values(&values, grid)
            }
            _ => Err(PreferenceError::InvalidRelation(
                "give exactly one of `pairs` or `utility`".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> ChoiceGrid {
        ChoiceGrid::new(
            (0..n)
                .map(|i| ExtendedBundle::new(vec![i as f64], vec![]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sum_utility_on_3x3_grid_is_rational() {
        let grid = ChoiceGrid::regular(2, 0, 3, 2.0).unwrap();
        assert_eq!(grid.len(), 9);
        let rel = induced_relation(|b| b.x[0] + b.x[1], grid).unwrap();
        for r in check_all(&rel) {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn incomparable_pair_is_witnessed() {
        let mut rel = induced_relation(|b| b.x[0], line(4)).unwrap();
        rel.set(1, 3, false);
        rel.set(3, 1, false);
        assert_eq!(check_complete(&rel).witness, Some(Witness::Pair(1, 3)));
    }

    #[test]
    fn cycle_breaks_transitivity() {
        // 0 ≻ 1 ≻ 2 ≻ 0
        let rel = PreferenceRelation::from_pairs(line(3), &[(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (2, 0)])
            .unwrap();
        assert!(check_complete(&rel).passed);
        assert_eq!(check_transitive(&rel).witness, Some(Witness::Triple(0, 1, 2)));
        assert_eq!(
            construct_ordinal_utility(&rel),
            Err(PreferenceError::NotTransitive(0, 1, 2))
        );
    }

    #[test]
    fn zero_loving_relation_is_not_monotone() {
        let grid = ChoiceGrid::regular(1, 1, 2, 1.0).unwrap();
        let zero = grid
            .points()
            .iter()
            .position(|p| p.coords().all(|c| c == 0.0))
            .unwrap();
        let rel = PreferenceRelation::from_fn(grid, |a, b| a == zero || b != zero);
        let report = check_monotone(&rel);
        assert!(!report.passed);
        let Some(Witness::Pair(a, b)) = report.witness else {
            panic!()
        };
        assert_eq!(b, zero);
        assert_ne!(a, zero);
    }

    #[test]
    fn chain_ranks() {
        // a ≻ b ≻ c with a, b, c at indices 0, 1, 2
        let grid = line(3);
        let rel = PreferenceRelation::from_fn(grid, |a, b| a <= b);
        let u = construct_ordinal_utility(&rel).unwrap();
        assert_eq!(u.ranks(), &[2, 1, 0]);
    }

    #[test]
    fn total_indifference_is_constant() {
        let rel = induced_relation(|_| 3.0, line(5)).unwrap();
        let u = construct_ordinal_utility(&rel).unwrap();
        assert!(u.ranks().iter().all(|&r| r == 0));
        assert_eq!(u.classes(), &[vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn induced_relation_rejects_nan() {
        assert_eq!(
            induced_relation(|b| if b.x[0] == 2.0 { f64::NAN } else { 0.0 }, line(3)),
            Err(PreferenceError::NonFiniteValue(2))
        );
        let two = ChoiceGrid::new(vec![
            ExtendedBundle::new(vec![0.0], vec![]),
            ExtendedBundle::new(vec![1.0], vec![]),
        ])
        .unwrap();
        let rel = induced_relation(|b| b.x[0], two).unwrap();
        assert!(rel.holds(1, 0) && !rel.holds(0, 1));
    }

    #[test]
    fn repaying_the_debt_dominates_the_larger_donation() {
        let u = |donation: f64| (1.0 + donation).ln();
        let repay = ComplianceProfile {
            perfect_shortfall: 0.0,
            inclination_utility: u(500.0),
        };
        let skip = ComplianceProfile {
            perfect_shortfall: 500.0,
            inclination_utility: u(1000.0),
        };
        assert_eq!(lexicographic_compare(&repay, &skip), Ordering::Greater);
        assert_eq!(lexicographic_compare(&skip, &repay), Ordering::Less);
        assert_eq!(lexicographic_compare(&repay, &repay), Ordering::Equal);
        let better = ComplianceProfile {
            inclination_utility: u(600.0),
            ..repay
        };
        assert_eq!(lexicographic_compare(&better, &repay), Ordering::Greater);
    }

    #[test]
    fn materialist_ignores_duties() {
        let a = axiom1_utility(&[1.0, 2.0], &[0.0], &[0.5, 0.5], &[1.0], 0.0).unwrap();
        let b = axiom1_utility(&[1.0, 2.0], &[7.0], &[0.5, 0.5], &[1.0], 0.0).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            axiom1_utility(&[-1.0], &[], &[1.0], &[], 1.0),
            Err(PreferenceError::NegativeInput(_))
        ));
        assert!(matches!(
            axiom1_utility(&[1.0], &[], &[0.0], &[], 1.0),
            Err(PreferenceError::InvalidWeights(_))
        ));
    }

    #[test]
    fn grid_limits() {
        assert!(ChoiceGrid::regular(2, 2, 11, 1.0).is_err());
        let p = ExtendedBundle::new(vec![1.0], vec![]);
        assert!(ChoiceGrid::new(vec![p.clone(), p]).is_err());
        assert!(ChoiceGrid::new(vec![ExtendedBundle::new(vec![-1.0], vec![])]).is_err());
    }
}
