use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnalysisParams, ModelParams, PopCount};
use crate::ssa::{run_replicas, RecordMode, StopSpec, StoppingRecord};
use crate::stats::{linear_fit, median, quantile, BinomialEstimate, LinearFit};

use super::{ladder_floor, resident_with_mutant};

/// Fewer conditioned replicas than this marks a carrying capacity unreliable.
pub const MIN_CONDITIONED: u64 = 10;

/// Replicas per thread in each parallel batch. Results do not depend on it:
/// fixing runs are taken in replica order.
const BATCH_PER_THREAD: u64 = 4;

/// Safety cap on simulated time per replica.
const T_CAP: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingAtK {
    #[serde(rename = "K")]
    pub k: u64,
    pub replicas_run: u64,
    /// Replicas conditioned on `τ_δ^mut < τ_0^mut`.
    pub conditioned: u64,
    pub fixation: BinomialEstimate,
    /// `K^{-1/4+α}`.
    pub lower_level: f64,
    pub tau_eps_hit: Vec<f64>,
    pub tau_sur: Vec<f64>,
    pub median_tau_eps_hit: Option<f64>,
    pub median_tau_sur: Option<f64>,
    pub iqr_tau_sur: Option<(f64, f64)>,
    /// Fraction of conditioned replicas whose `aa` population died out before
    /// `n_aA` reached the lower level; those use the extinction time instead.
    pub flagged_fraction: f64,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalScalingReport {
    pub params: ModelParams,
    pub analysis: AnalysisParams,
    pub base_seed: u64,
    pub replicas_per_k: u64,
    pub per_k: Vec<ScalingAtK>,
    /// Least-squares slope of `ln median τ_sur` on `ln K`; needs three
    /// distinct `K` with positive medians.
    pub sur_slope: Option<LinearFit>,
    /// Least-squares fit of median `τ^hit_ε` on `ln K`.
    pub eps_hit_fit: Option<LinearFit>,
    pub notes: Vec<String>,
}

/// Survival time of the heterozygote conditioned on fixation, across
/// carrying capacities.
pub fn survival_scaling(
    p: &ModelParams,
    a: &AnalysisParams,
    ks: &[u64],
    replicas_per_k: u64,
    base_seed: u64,
) -> Result<SurvivalScalingReport> {
    survival_scaling_from(p, a, ks, replicas_per_k, base_seed, resident_with_mutant)
}

pub fn survival_scaling_from(
    p: &ModelParams,
    a: &AnalysisParams,
    ks: &[u64],
    replicas_per_k: u64,
    base_seed: u64,
    init: impl Fn(&ModelParams) -> PopCount,
) -> Result<SurvivalScalingReport> {
    if !(a.alpha > 0.0 && a.alpha < 0.25) {
        return Err(Error::InvalidParams("alpha must lie in (0, 1/4)".into()));
    }
    if ks.iter().any(|&k| k < 100) {
        return Err(Error::InvalidParams("every K must be >= 100".into()));
    }
    if replicas_per_k < 1 {
        return Err(Error::InvalidParams("replicas_per_k must be >= 1".into()));
    }
    let mut per_k = Vec::with_capacity(ks.len());
    let mut notes = Vec::new();
    for &k in ks {
        let pk = ModelParams { k, ..*p }.validate()?;
        let row = scaling_at_k(&pk, a, replicas_per_k, base_seed, init(&pk))?;
        if row.lower_level >= a.eps {
            notes.push(format!(
                "K={k}: K^(-1/4+alpha) = {:.4} is not below eps = {}; tau_sur is not a descent time here",
                row.lower_level, a.eps
            ));
        }
        if row.unreliable {
            notes.push(format!("K={k}: only {} conditioned replicas", row.conditioned));
        }
        per_k.push(row);
    }

    let mut distinct: Vec<u64> = ks.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let sur_slope = if distinct.len() >= 3 {
        let pts: Vec<(f64, f64)> = per_k
            .iter()
            .filter_map(|r| r.median_tau_sur.map(|m| ((r.k as f64).ln(), m)))
            .collect();
        if pts.len() == per_k.len() && pts.iter().all(|(_, m)| *m > 0.0) {
            let xs: Vec<f64> = pts.iter().map(|(x, _)| *x).collect();
            let ys: Vec<f64> = pts.iter().map(|(_, m)| m.ln()).collect();
            linear_fit(&xs, &ys)
        } else {
            notes.push("median tau_sur missing or non-positive for some K; no log-log slope".into());
            None
        }
    } else {
        None
    };
    let eps_hit_fit = if distinct.len() >= 2 {
        let pts: Vec<(f64, f64)> = per_k
            .iter()
            .filter_map(|r| r.median_tau_eps_hit.map(|m| ((r.k as f64).ln(), m)))
            .collect();
        let xs: Vec<f64> = pts.iter().map(|(x, _)| *x).collect();
        let ys: Vec<f64> = pts.iter().map(|(_, m)| *m).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };

    Ok(SurvivalScalingReport {
        params: *p,
        analysis: *a,
        base_seed,
        replicas_per_k,
        per_k,
        sur_slope,
        eps_hit_fit,
        notes,
    })
}

fn scaling_at_k(
    p: &ModelParams,
    a: &AnalysisParams,
    wanted: u64,
    base_seed: u64,
    init: PopCount,
) -> Result<ScalingAtK> {
    let lower = ladder_floor(p.k, a.alpha);
    let stop = StopSpec {
        track_recessive_loss: true,
        ..StopSpec::survival(a.delta_fix, vec![a.eps, lower]).with_t_max(T_CAP)
    };
    // Streams are indexed by replica only, so K enters through the seed.
    let seed = base_seed ^ p.k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // Enough attempts for `wanted` successes at a fixation probability
    // well below Δ/f.
    let batch = BATCH_PER_THREAD * rayon::current_num_threads() as u64;
    let max_runs = (wanted as f64 / (0.25 * p.fixation_target())).ceil() as u64 + batch;

    let mut conditioned: Vec<StoppingRecord> = Vec::new();
    let mut run = 0u64;
    let mut fixed = 0u64;
    while (conditioned.len() as u64) < wanted && run < max_runs {
        let results = run_replicas(p, init, &stop, seed, run, batch, RecordMode::StopsOnly, false)?;
        for r in results {
            if (conditioned.len() as u64) >= wanted {
                break;
            }
            run += 1;
            if r.record.fixed() {
                fixed += 1;
                conditioned.push(r.record);
            }
        }
    }

    let mut tau_eps = Vec::new();
    let mut tau_sur = Vec::new();
    let mut flagged = 0u64;
    for rec in &conditioned {
        let eps_hit = rec.hit_time(a.eps);
        let mut low_hit = rec.hit_time(lower);
        if let (Some(lost), Some(low)) = (rec.tau_aa_lost, low_hit) {
            if lost < low {
                flagged += 1;
                low_hit = Some(lost);
            }
        }
        if let Some(e) = eps_hit {
            tau_eps.push(e);
            if let Some(l) = low_hit {
                tau_sur.push(l - e);
            }
        }
    }
    let n = conditioned.len() as u64;
    Ok(ScalingAtK {
        k: p.k,
        replicas_run: run,
        conditioned: n,
        fixation: BinomialEstimate::new(fixed, run),
        lower_level: lower,
        median_tau_eps_hit: median(&tau_eps),
        median_tau_sur: median(&tau_sur),
        iqr_tau_sur: quantile(&tau_sur, 0.25).zip(quantile(&tau_sur, 0.75)),
        tau_eps_hit: tau_eps,
        tau_sur,
        flagged_fraction: if n == 0 { 0.0 } else { flagged as f64 / n as f64 },
        unreliable: n < MIN_CONDITIONED,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_k_has_no_slope() {
        let p = ModelParams::default();
        let a = AnalysisParams::default();
        let r = survival_scaling(&p, &a, &[200], 3, 5).unwrap();
        assert!(r.sur_slope.is_none());
        assert!(r.eps_hit_fit.is_none());
        let row = &r.per_k[0];
        assert_eq!(row.conditioned, 3);
        assert!(row.unreliable);
        assert_eq!(row.tau_eps_hit.len(), 3);
        assert!(row.median_tau_eps_hit.unwrap() > 0.0);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<SurvivalScalingReport>(&json).unwrap(), r);
    }

    #[test]
    fn rejects_small_k() {
        let r = survival_scaling(&ModelParams::default(), &AnalysisParams::default(), &[50], 3, 5);
        assert!(r.is_err());
    }
}
