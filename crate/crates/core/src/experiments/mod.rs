//! Monte Carlo and numerical experiments on the model.
//!
//! Every report embeds the parameters and base seed that produced it, and
//! serializes to JSON.

mod decay;
mod fixation;
mod ladder;
mod survival;
mod window;

pub use decay::{
    algebraic_decay, decay_comparison, large_population_distance, ComparisonSample, DecayComparison, DecayCurve,
    DecayOptions, DecaySample, DistanceAtK, LargePopulationReport,
};
pub use fixation::{estimate_fixation, estimate_fixation_from, FixationEstimate};
pub use ladder::{ladder, LadderSchedule, Rung};
pub use survival::{survival_scaling, survival_scaling_from, ScalingAtK, SurvivalScalingReport};
pub use window::{mutation_window, MutationWindowReport, DEFAULT_RATIO_THRESHOLD};

use crate::model::{ModelParams, PopCount};

/// Resident `aa` population at its equilibrium plus one `aA` mutant.
pub fn resident_with_mutant(p: &ModelParams) -> PopCount {
    PopCount::new((p.nbar_a() * p.k_f64()).round() as u64, 1, 0)
}

/// `K^{-1/4+α}`, the lowest level of the survival ladder.
pub fn ladder_floor(k: u64, alpha: f64) -> f64 {
    (k as f64).powf(-0.25 + alpha)
}
