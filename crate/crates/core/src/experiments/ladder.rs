use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derived, AnalysisParams, ModelParams};

use super::ladder_floor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub index: u32,
    /// `x^i ε`.
    pub level: f64,
    /// `C_l/(x^i ε)`.
    pub time_lower: f64,
    /// `C_u/(x^i ε)`.
    pub time_upper: f64,
}

/// Geometric levels `x^i ε` from `ε` down to the floor `K^{-1/4+α}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSchedule {
    pub params: ModelParams,
    pub analysis: AnalysisParams,
    pub x: f64,
    pub i_max: u32,
    pub floor: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub rungs: Vec<Rung>,
    /// `(C x/(1-x))(K^{1/4-α} - 1/ε)` for `C = C_l, C_u`.
    pub total: (f64, f64),
    /// Per-rung times summed over the descents `i = 0 .. i_max - 1`.
    pub rung_sum: (f64, f64),
    /// The closed form with `K^{1/4-α}` replaced by `1/level_{i_max}`; equals
    /// `rung_sum` up to roundoff.
    pub total_at_last_level: (f64, f64),
}

pub fn ladder(p: &ModelParams, a: &AnalysisParams, k: u64, c_lower: f64, c_upper: f64) -> Result<LadderSchedule> {
    let p = ModelParams { k, ..*p }.validate()?;
    let a = a.validate(&p)?;
    if !(c_lower > 0.0 && c_lower <= c_upper && c_upper.is_finite()) {
        return Err(Error::InvalidParams("need 0 < C_l <= C_u".into()));
    }
    let x = derived(&p, &a).x_ladder;
    let floor = ladder_floor(k, a.alpha);
    let i_max = -(a.eps / floor).ln() / x.ln();
    if i_max < 0.0 {
        return Err(Error::InvalidParams(format!(
            "eps = {} is below the ladder floor K^(-1/4+alpha) = {floor:.6}; no rungs",
            a.eps
        )));
    }
    let i_max = i_max.floor() as u32;
    let rungs: Vec<Rung> = (0..=i_max)
        .map(|i| {
            let level = x.powi(i as i32) * a.eps;
            Rung { index: i, level, time_lower: c_lower / level, time_upper: c_upper / level }
        })
        .collect();
    let descents = &rungs[..rungs.len() - 1];
    let rung_sum = (
        descents.iter().map(|r| r.time_lower).sum(),
        descents.iter().map(|r| r.time_upper).sum(),
    );
    let geo = x / (1.0 - x);
    let span = 1.0 / floor - 1.0 / a.eps;
    let last = rungs[rungs.len() - 1].level;
    let span_last = 1.0 / last - 1.0 / a.eps;
    Ok(LadderSchedule {
        params: p,
        analysis: a,
        x,
        i_max,
        floor,
        c_lower,
        c_upper,
        rungs,
        total: (c_lower * geo * span, c_upper * geo * span),
        rung_sum,
        total_at_last_level: (c_lower * geo * span_last, c_upper * geo * span_last),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ladder_at_small_k() {
        let r = ladder(&ModelParams::default(), &AnalysisParams::default(), 10_000, 1.0, 2.0);
        assert!(r.unwrap_err().to_string().contains("no rungs"));
    }

    #[test]
    fn geometric_levels_above_floor() {
        let s = ladder(&ModelParams::default(), &AnalysisParams::default(), 100_000_000, 1.0, 2.0).unwrap();
        // ln(0.05 · 1e8^0.2) / ln(sqrt(4.3/4.2))
        let want = (0.05f64 * 1e8f64.powf(0.2)).ln() / (4.3f64 / 4.2).sqrt().ln();
        assert_eq!(s.i_max, want.floor() as u32);
        for w in s.rungs.windows(2) {
            assert!((w[1].level / w[0].level - s.x).abs() < 1e-14);
        }
        assert!(s.rungs.last().unwrap().level >= s.floor);
        let rel = (s.rung_sum.0 - s.total_at_last_level.0).abs() / s.rung_sum.0;
        assert!(rel < 1e-10);
    }
}
