use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnalysisParams, ModelParams, PopCount};
use crate::ssa::{run_replicas, RecordMode, StopSpec};
use crate::stats::BinomialEstimate;

use super::resident_with_mutant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationEstimate {
    pub params: ModelParams,
    pub analysis: AnalysisParams,
    pub base_seed: u64,
    pub init: PopCount,
    pub replicas: u64,
    pub successes: u64,
    pub estimate: f64,
    pub std_error: f64,
    /// `Δ/f`.
    pub target: f64,
}

impl FixationEstimate {
    pub fn binomial(&self) -> BinomialEstimate {
        BinomialEstimate::new(self.successes, self.replicas)
    }
}

/// Fraction of replicas in which the mutant lineage reaches density `δ`
/// before dying out, starting from the resident equilibrium plus one `aA`.
pub fn estimate_fixation(
    p: &ModelParams,
    a: &AnalysisParams,
    replicas: u64,
    base_seed: u64,
) -> Result<FixationEstimate> {
    estimate_fixation_from(p, a, resident_with_mutant(p), replicas, base_seed)
}

pub fn estimate_fixation_from(
    p: &ModelParams,
    a: &AnalysisParams,
    init: PopCount,
    replicas: u64,
    base_seed: u64,
) -> Result<FixationEstimate> {
    let p = p.validate()?;
    if p.mu != 0.0 {
        return Err(Error::InvalidParams("fixation estimates require mu = 0".into()));
    }
    if replicas < 1 {
        return Err(Error::InvalidParams("replicas must be >= 1".into()));
    }
    let stop = StopSpec::fixation(a.delta_fix);
    let results = run_replicas(&p, init, &stop, base_seed, 0, replicas, RecordMode::StopsOnly, false)?;
    let successes = results.iter().filter(|r| r.record.fixed()).count() as u64;
    let b = BinomialEstimate::new(successes, replicas);
    Ok(FixationEstimate {
        params: p,
        analysis: *a,
        base_seed,
        init,
        replicas,
        successes,
        estimate: b.estimate,
        std_error: b.std_error,
        target: p.fixation_target(),
    })
}
