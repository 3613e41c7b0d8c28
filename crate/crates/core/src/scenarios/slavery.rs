//! The three-era path: a regime where the slave-grown good trades freely, one
//! that adds a positive duty, and one that forbids the good.

use crate::config::RunConfig;
use crate::transition::{run_path, GenerationProfile, TraceRecord, TransitionError};

/// Runs the configured path with its generation profile.
pub fn run_slavery_eras(config: &RunConfig) -> Result<Vec<TraceRecord>, TransitionError> {
    let path = config.path.as_ref().ok_or(TransitionError::EmptyPath)?;
    run_path(
        &config.fibers,
        config.agents(),
        path,
        config.profile.as_ref(),
        config.solver(),
    )
}

/// The same path with `λ` held at `lambda` in every era, isolating the effect
/// of the constraints.
pub fn run_constraints_only(config: &RunConfig, lambda: f64) -> Result<Vec<TraceRecord>, TransitionError> {
    let path = config.path.as_ref().ok_or(TransitionError::EmptyPath)?;
    let profile = GenerationProfile::constant(lambda, path.len())?;
    run_path(
        &config.fibers,
        config.agents(),
        path,
        Some(&profile),
        config.solver(),
    )
}
