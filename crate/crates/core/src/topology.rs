//! The base space of duty regimes with its finite topologies, the product
//! with the extended consumption space, slices over single base points and
//! the projection back onto the base.
//!
//! Open sets of the base are bitmasks over at most 16 points. On the fiber
//! side, open boxes are taken relative to the closed orthant, so an interval
//! starting at zero includes zero.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::economy::{ExtendedBundle, Fiber};

pub const MAX_BASE_POINTS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("base space has {0} points; at most {MAX_BASE_POINTS} can be enumerated")]
    BaseTooLarge(usize),
    #[error("base space is empty")]
    EmptyBase,
    #[error("base point `{0}` is listed twice")]
    DuplicatePoint(String),
    #[error("unknown base point `{0}`")]
    UnknownBasePoint(String),
    #[error("bundle has dimensions {got:?}, fiber expects {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid basis element: {0}")]
    InvalidBasis(String),
}

/// Bitmask over base points; bit `i` is `points[i]`.
pub type BaseSet = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BaseSpace {
    points: Vec<String>,
}

impl BaseSpace {
    pub fn new(points: Vec<String>) -> Result<Self, TopologyError> {
        if points.is_empty() {
            return Err(TopologyError::EmptyBase);
        }
        if points.len() > MAX_BASE_POINTS {
            return Err(TopologyError::BaseTooLarge(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            if points[..i].contains(p) {
                return Err(TopologyError::DuplicatePoint(p.clone()));
            }
        }
        Ok(BaseSpace { points })
    }

    /// `y1, …, ym`.
    pub fn numbered(m: usize) -> Result<Self, TopologyError> {
        BaseSpace::new((1..=m).map(|i| format!("y{i}")).collect())
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn full(&self) -> BaseSet {
        ((1u64 << self.m()) - 1) as BaseSet
    }

    pub fn index(&self, id: &str) -> Result<usize, TopologyError> {
        self.points
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| TopologyError::UnknownBasePoint(id.to_string()))
    }

    pub fn set_of(&self, ids: &[String]) -> Result<BaseSet, TopologyError> {
        ids.iter().try_fold(0, |acc, id| Ok(acc | 1 << self.index(id)?))
    }

    pub fn names(&self, set: BaseSet) -> Vec<&str> {
        self.points
            .iter()
            .enumerate()
            .filter(|(i, _)| set >> i & 1 == 1)
            .map(|(_, p)| p.as_str())
            .collect()
    }
}

/// A collection of subsets of the base, candidate open sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpenFamily {
    sets: BTreeSet<BaseSet>,
}

impl OpenFamily {
    pub fn from_masks(sets: impl IntoIterator<Item = BaseSet>) -> Self {
        OpenFamily {
            sets: sets.into_iter().collect(),
        }
    }

    pub fn from_named(base: &BaseSpace, sets: &[Vec<String>]) -> Result<Self, TopologyError> {
        let masks = sets
            .iter()
            .map(|s| base.set_of(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OpenFamily::from_masks(masks))
    }

    pub fn indiscrete(base: &BaseSpace) -> Self {
        OpenFamily::from_masks([0, base.full()])
    }

    pub fn sets(&self) -> impl Iterator<Item = BaseSet> + '_ {
        self.sets.iter().copied()
    }

    pub fn contains(&self, set: BaseSet) -> bool {
        self.sets.contains(&set)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// The power set of the base: every subset is open.
pub fn discrete_topology(base: &BaseSpace) -> OpenFamily {
    OpenFamily::from_masks(0..=base.full())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TopologyWitness {
    MissingEmpty,
    MissingWhole,
    OutsideBase(BaseSet),
    UnionNotOpen(BaseSet, BaseSet),
    IntersectionNotOpen(BaseSet, BaseSet),
    /// The preimage of this open set failed to match its basis element.
    PreimageNotOpen(BaseSet),
}

impl fmt::Display for TopologyWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyWitness::MissingEmpty => write!(f, "empty set missing"),
            TopologyWitness::MissingWhole => write!(f, "whole space missing"),
            TopologyWitness::OutsideBase(s) => write!(f, "set {s:#b} leaves the base"),
            TopologyWitness::UnionNotOpen(a, b) => {
                write!(f, "union of {a:#b} and {b:#b} = {:#b} is not open", a | b)
            }
            TopologyWitness::IntersectionNotOpen(a, b) => {
                write!(f, "intersection of {a:#b} and {b:#b} = {:#b} is not open", a & b)
            }
            TopologyWitness::PreimageNotOpen(u) => write!(f, "preimage of {u:#b} is not open"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub open_sets: usize,
    /// Pairs, preimages or probes examined, depending on the check.
    pub checked: usize,
    pub witness: Option<TopologyWitness>,
}

/// Checks the open-set axioms. For a finite family, closure under pairwise
/// unions and intersections gives closure under all finite ones, and every
/// union is finite.
pub fn verify_topology_axioms(family: &OpenFamily, base: &BaseSpace) -> VerificationReport {
    let full = base.full();
    let report = |checked, witness: Option<TopologyWitness>| VerificationReport {
        passed: witness.is_none(),
        open_sets: family.len(),
        checked,
        witness,
    };
    if let Some(s) = family.sets().find(|s| s & !full != 0) {
        return report(0, Some(TopologyWitness::OutsideBase(s)));
    }
    if !family.contains(0) {
        return report(0, Some(TopologyWitness::MissingEmpty));
    }
    if !family.contains(full) {
        return report(0, Some(TopologyWitness::MissingWhole));
    }
    let sets: Vec<BaseSet> = family.sets().collect();
    let mut checked = 0;
    for (i, &a) in sets.iter().enumerate() {
        for &b in &sets[i + 1..] {
            checked += 1;
            if !family.contains(a | b) {
                return report(checked, Some(TopologyWitness::UnionNotOpen(a, b)));
            }
            if !family.contains(a & b) {
                return report(checked, Some(TopologyWitness::IntersectionNotOpen(a, b)));
            }
        }
    }
    report(checked, None)
}

/// A point of the total space: a base point with a bundle in its fiber.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalPoint {
    pub base: String,
    pub bundle: ExtendedBundle,
}

/// The projection onto the base.
pub fn projection(point: &TotalPoint) -> &str {
    &point.base
}

/// The layer `{y} × D_y` of the total space.
#[derive(Debug, Clone, Copy)]
pub struct FiberView<'a> {
    base_point: &'a str,
    fiber: &'a Fiber,
}

impl<'a> FiberView<'a> {
    pub fn base_point(&self) -> &'a str {
        self.base_point
    }

    pub fn fiber(&self) -> &'a Fiber {
        self.fiber
    }

    pub fn point(&self, bundle: ExtendedBundle) -> Result<TotalPoint, TopologyError> {
        let expected = (self.fiber.n(), self.fiber.l());
        if bundle.dims() != expected {
            return Err(TopologyError::DimensionMismatch {
                expected,
                got: bundle.dims(),
            });
        }
        Ok(TotalPoint {
            base: self.base_point.to_string(),
            bundle,
        })
    }

    pub fn contains(&self, point: &TotalPoint) -> bool {
        point.base == self.base_point
            && point.bundle.dims() == (self.fiber.n(), self.fiber.l())
            && point.bundle.is_nonnegative()
    }
}

pub fn slice<'a>(base: &BaseSpace, y_id: &'a str, fiber: &'a Fiber) -> Result<FiberView<'a>, TopologyError> {
    base.index(y_id)?;
    Ok(FiberView {
        base_point: y_id,
        fiber,
    })
}

/// Interval `(lo, hi)` of the half line, including `lo` when it is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, TopologyError> {
        if !(lo >= 0.0 && lo < hi) || lo.is_nan() || hi.is_nan() {
            return Err(TopologyError::InvalidBasis(format!("interval ({lo}, {hi})")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn half_line() -> Self {
        Interval {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo == 0.0 { v >= 0.0 } else { v > self.lo };
        above && v < self.hi
    }
}

/// A basic open set `U × V` of the product topology.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductBasisElement {
    pub base_part: BaseSet,
    pub fiber_part: Vec<Interval>,
}

impl ProductBasisElement {
    pub fn new(base_part: BaseSet, fiber_part: Vec<Interval>) -> Self {
        ProductBasisElement {
            base_part,
            fiber_part,
        }
    }

    pub fn contains(&self, base: &BaseSpace, point: &TotalPoint) -> bool {
        let Ok(i) = base.index(&point.base) else {
            return false;
        };
        let coords: Vec<f64> = point.bundle.flat();
        self.base_part >> i & 1 == 1
            && coords.len() == self.fiber_part.len()
            && coords.iter().zip(&self.fiber_part).all(|(v, iv)| iv.contains(*v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContinuityReport {
    pub passed: bool,
    pub preimages_checked: usize,
    /// Basis elements used to cover the preimages.
    pub basis_elements: usize,
    pub probes: usize,
    pub witness: Option<TopologyWitness>,
}

/// Certifies that `π⁻¹(U) = U × D` is a basic open set for every open `U`.
///
/// Each preimage is written as the single basis element `U × ℝ₊^d`, and
/// membership in it is compared with `π(p) ∈ U` on probe points drawn from
/// every layer: the origin, each unit vector, and the all-ones bundle.
pub fn projection_continuous(
    base: &BaseSpace,
    family: &OpenFamily,
    fiber_dims: (usize, usize),
) -> ContinuityReport {
    let axioms = verify_topology_axioms(family, base);
    if !axioms.passed {
        return ContinuityReport {
            passed: false,
            preimages_checked: 0,
            basis_elements: 0,
            probes: 0,
            witness: axioms.witness,
        };
    }
    let (n, l) = fiber_dims;
    let d = n + l;
    let mut fiber_probes = vec![vec![0.0; d], vec![1.0; d]];
    for k in 0..d {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        fiber_probes.push(v);
    }
    let mut probes = 0;
    let mut basis_elements = 0;
    for (checked, u) in family.sets().enumerate() {
        let element = ProductBasisElement::new(u, vec![Interval::half_line(); d]);
        if u != 0 {
            basis_elements += 1;
        }
        for y in base.points() {
            for coords in &fiber_probes {
                let p = TotalPoint {
                    base: y.clone(),
                    bundle: ExtendedBundle::from_flat(coords, n),
                };
                probes += 1;
                let in_preimage = base.index(projection(&p)).is_ok_and(|i| u >> i & 1 == 1);
                if in_preimage != element.contains(base, &p) || !family.contains(element.base_part) {
                    return ContinuityReport {
                        passed: false,
                        preimages_checked: checked + 1,
                        basis_elements,
                        probes,
                        witness: Some(TopologyWitness::PreimageNotOpen(u)),
                    };
                }
            }
        }
    }
    ContinuityReport {
        passed: true,
        preimages_checked: family.len(),
        basis_elements,
        probes,
        witness: None,
    }
}
