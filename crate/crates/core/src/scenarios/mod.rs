//! Packaged experiments.

pub mod slavery;
pub mod sugar;
pub mod veblen;

pub use slavery::{run_constraints_only, run_slavery_eras};
pub use sugar::{
    estimate_critical_mass, ethical_share, run_sugar, CriticalMass, ScenarioReport, SugarError,
    SugarMarketConfig,
};
pub use veblen::{increasing_segments, veblen_demand_curve, DemandCurve, VeblenProbeConfig};
