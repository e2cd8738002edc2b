use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnalysisParams, ModelParams};

pub const DEFAULT_RATIO_THRESHOLD: f64 = 0.1;

/// Where `1/(Kμ)` sits between `ln K` and `K^{1/4-α}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationWindowReport {
    #[serde(rename = "K")]
    pub k: u64,
    pub mu: f64,
    pub alpha: f64,
    pub threshold: f64,
    /// `ln K / (1/(Kμ))`.
    pub r1: Option<f64>,
    /// `(1/(Kμ)) / K^{1/4-α}`.
    pub r2: Option<f64>,
    pub left_ok: bool,
    pub right_ok: bool,
    pub pass: bool,
    /// `1/(f n̄_A K μ)`.
    pub first_mutation_time: Option<f64>,
    pub note: Option<String>,
}

pub fn mutation_window(
    p: &ModelParams,
    a: &AnalysisParams,
    k: u64,
    mu: f64,
    threshold: f64,
) -> Result<MutationWindowReport> {
    let p = ModelParams { k, mu, ..*p }.validate()?;
    if !(threshold > 0.0) {
        return Err(Error::InvalidParams("ratio threshold must be positive".into()));
    }
    let kf = p.k_f64();
    if mu == 0.0 {
        return Ok(MutationWindowReport {
            k,
            mu,
            alpha: a.alpha,
            threshold,
            r1: None,
            r2: None,
            left_ok: false,
            right_ok: false,
            pass: false,
            first_mutation_time: None,
            note: Some("no mutation; window vacuous".into()),
        });
    }
    let scale = 1.0 / (kf * mu);
    let r1 = kf.ln() / scale;
    let r2 = scale / kf.powf(0.25 - a.alpha);
    let left_ok = r1 < threshold;
    let right_ok = r2 < threshold;
    Ok(MutationWindowReport {
        k,
        mu,
        alpha: a.alpha,
        threshold,
        r1: Some(r1),
        r2: Some(r2),
        left_ok,
        right_ok,
        pass: left_ok && right_ok,
        first_mutation_time: Some(1.0 / (p.f * p.nbar_big_a() * kf * mu)),
        note: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(k: u64, mu: f64) -> MutationWindowReport {
        mutation_window(&ModelParams::default(), &AnalysisParams::default(), k, mu, DEFAULT_RATIO_THRESHOLD).unwrap()
    }

    #[test]
    fn k_ln_k_violates_left() {
        let k = 10_000u64;
        let kf = k as f64;
        let r = run(k, 1.0 / (kf * kf.ln()));
        assert!((r.r1.unwrap() - 1.0).abs() < 1e-12);
        assert!(!r.left_ok && !r.pass);
    }

    #[test]
    fn arithmetic_at_large_k() {
        let kf = 1e6f64;
        let r = run(1_000_000, kf.powf(-1.125));
        assert!((r.r1.unwrap() - kf.ln() * kf.powf(-0.125)).abs() < 1e-12);
        assert!((r.r2.unwrap() - kf.powf(0.125 - 0.2)).abs() < 1e-12);
        let t = r.first_mutation_time.unwrap();
        assert!((t - kf.powf(0.125) / 12.0).abs() < 1e-9);
    }

    #[test]
    fn zero_mu_is_vacuous() {
        let r = run(1000, 0.0);
        assert_eq!(r.note.as_deref(), Some("no mutation; window vacuous"));
        assert!(r.r1.is_none());
    }
}
