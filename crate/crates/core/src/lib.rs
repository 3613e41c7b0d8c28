//! Exchange economies over a finite space of duty regimes.
//!
//! Each base point `y` names a bundle of perfect duties. Over it sits a fiber:
//! goods and imperfect-duty coordinates, agents with log utilities, and the
//! hard constraints the bundle compiles to. The crate solves each fiber's
//! Walrasian equilibrium, traces equilibria along paths of regimes, and runs
//! packaged scenarios on top.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod duty;
pub mod economy;
pub mod equilibrium;
pub mod output;
pub mod preferences;
pub mod scenarios;
pub mod topology;
pub mod transition;

pub use config::{parse_and_validate, parse_str, RunConfig};
pub use economy::{demand, Agent, Economy, ExtendedBundle, Fiber};
pub use equilibrium::{
    excess_demand, solve, solve_tatonnement, EquilibriumResult, PriceVector, SolverSettings,
};
