//! First-passage analytics for 1-D birth-death chains and linear branching
//! processes.
//!
//! A chain on `{lo, ..., hi}` steps up with probability `p(k)` and down with
//! `q(k) = 1 − p(k)`. The probability of reaching `hi` before `lo` from `z` is
//! the equilibrium potential
//!
//! ```text
//! h(z) = Σ_{n=lo+1}^{z} w_n / Σ_{n=lo+1}^{hi} w_n,   w_n = Π_{k=lo+1}^{n−1} q(k)/p(k)
//! ```
//!
//! The products are accumulated in log space.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssa::replica_rng;
use crate::stats::BinomialEstimate;

/// Largest chain accepted by [`hitting_oracle`].
pub const ORACLE_MAX_STATES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub lo: i64,
    pub hi: i64,
    /// `up[k - lo - 1]` is the up-step probability at interior state `k`.
    up: Vec<f64>,
    /// Forces the step out of `lo` upward. [`hitting_probability`] at `lo`
    /// then gives the chance that one excursion reaches `hi` before returning.
    pub reflect_at_lo: bool,
}

impl ChainSpec {
    pub fn from_fn(lo: i64, hi: i64, up_prob: impl Fn(i64) -> f64) -> Result<Self> {
        if hi <= lo {
            return Err(Error::InvalidChain(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        let up: Vec<f64> = (lo + 1..hi).map(up_prob).collect();
        if let Some((i, p)) = up.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::InvalidChain(format!(
                "up probability {p} at state {} is outside (0, 1)",
                lo + 1 + i as i64
            )));
        }
        Ok(Self {
            lo,
            hi,
            up,
            reflect_at_lo: false,
        })
    }

    pub fn symmetric(lo: i64, hi: i64) -> Self {
        Self::from_fn(lo, hi, |_| 0.5).expect("constant 1/2 is a valid chain")
    }

    pub fn reflecting(mut self) -> Self {
        self.reflect_at_lo = true;
        self
    }

    pub fn up_prob(&self, k: i64) -> f64 {
        self.up[(k - self.lo - 1) as usize]
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check_state(&self, z: i64) -> Result<()> {
        if z < self.lo || z > self.hi {
            return Err(Error::InvalidChain(format!(
                "state {z} outside [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// `ln w_n` for `n = lo+1 ..= hi`.
    fn log_weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.up.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for &p in &self.up {
            acc += (1.0 - p).ln() - p.ln();
            out.push(acc);
        }
        out
    }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn scaled_weights(spec: &ChainSpec) -> Vec<f64> {
    let logw = spec.log_weights();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logw.into_iter().map(|l| (l - max).exp()).collect()
}

/// Probability of reaching `hi` before `lo` from `z`.
pub fn hitting_probability(spec: &ChainSpec, z: i64) -> Result<f64> {
    spec.check_state(z)?;
    if z == spec.hi {
        return Ok(1.0);
    }
    let z = if z == spec.lo {
        if !spec.reflect_at_lo {
            return Ok(0.0);
        }
        spec.lo + 1
    } else {
        z
    };
    let w = scaled_weights(spec);
    let upto = (z - spec.lo) as usize;
    let num = pairwise_sum(&w[..upto]);
    let den = pairwise_sum(&w);
    Ok((num / den).clamp(0.0, 1.0))
}

/// `h(z)` for every `z` in `lo ..= hi`.
pub fn hitting_table(spec: &ChainSpec) -> Vec<(i64, f64)> {
    let w = scaled_weights(spec);
    let den = pairwise_sum(&w);
    let mut out = Vec::with_capacity(spec.len());
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    let first = if spec.reflect_at_lo { w[0] / den } else { 0.0 };
    out.push((spec.lo, first));
    for (i, wi) in w.iter().enumerate() {
        // Neumaier summation of the prefix
        let t = acc + wi;
        if acc.abs() >= wi.abs() {
            comp += (acc - t) + wi;
        } else {
            comp += (wi - t) + acc;
        }
        acc = t;
        let z = spec.lo + 1 + i as i64;
        let h = if z == spec.hi { 1.0 } else { ((acc + comp) / den).clamp(0.0, 1.0) };
        out.push((z, h));
    }
    out
}

/// Solves the harmonic boundary-value problem
/// `h(k) = p(k) h(k+1) + q(k) h(k−1)`, `h(lo) = 0`, `h(hi) = 1` directly.
pub fn hitting_oracle(spec: &ChainSpec, z: i64) -> Result<f64> {
    spec.check_state(z)?;
    let states = (spec.hi - spec.lo) as usize;
    if states > ORACLE_MAX_STATES {
        return Err(Error::ChainTooLarge {
            states,
            limit: ORACLE_MAX_STATES,
        });
    }
    let h = solve_harmonic(spec);
    let z = if z == spec.lo && spec.reflect_at_lo {
        spec.lo + 1
    } else {
        z
    };
    Ok(h[(z - spec.lo) as usize])
}

/// Thomas algorithm on the interior unknowns; returns `h(lo ..= hi)`.
///
/// Row `i` reads `-q h(i-1) + (p + q) h(i) - p h(i+1) = 0`. Elimination leaves
/// `h(i) = a_i h(i+1)`; the pivot `1 - q a_{i-1}` is carried as
/// `p + q (1 - a_{i-1})` so the sweep never subtracts.
fn solve_harmonic(spec: &ChainSpec) -> Vec<f64> {
    let m = spec.up.len();
    let mut h = vec![0.0; m + 2];
    h[m + 1] = 1.0;
    let mut ratio = vec![0.0; m];
    let mut one_minus = 1.0;
    for (i, &p) in spec.up.iter().enumerate() {
        let q = 1.0 - p;
        let pivot = p + q * one_minus;
        ratio[i] = p / pivot;
        one_minus = q * one_minus / pivot;
    }
    for i in (0..m).rev() {
        h[i + 1] = ratio[i] * h[i + 2];
    }
    h
}

/// Linear birth-death process: each individual gives birth at rate `b` and
/// dies at rate `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingParams {
    pub b: f64,
    pub d: f64,
    pub n0: u64,
}

impl BranchingParams {
    pub fn validate(self) -> Result<Self> {
        if !(self.b >= 0.0 && self.d >= 0.0) || self.n0 < 1 {
            return Err(Error::InvalidParams("branching needs b, d >= 0 and n0 >= 1".into()));
        }
        Ok(self)
    }
}

/// Probability that the lineage never dies out: `1 − (d/b)^n0`, zero when `b ≤ d`.
pub fn branching_survival(bp: &BranchingParams) -> f64 {
    if bp.b <= bp.d || bp.b == 0.0 {
        return 0.0;
    }
    (1.0 - (bp.d / bp.b).powf(bp.n0 as f64)).max(0.0)
}

/// `P(T_0 ≤ t)` for `n0` independent lines of descent.
pub fn extinction_cdf(bp: &BranchingParams, t: f64) -> Result<f64> {
    let bp = bp.validate()?;
    if bp.b == bp.d {
        return Err(Error::CriticalBranching);
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParams("t must be >= 0".into()));
    }
    let (b, d) = (bp.b, bp.d);
    let r = b - d;
    let single = if r > 0.0 {
        // d(1 − e^{−rt}) / (b − d e^{−rt})
        let decay = (-r * t).exp();
        d * -(-r * t).exp_m1() / (b - d * decay)
    } else {
        // same expression multiplied through by e^{rt} ≤ 1
        let grow = (r * t).exp();
        d * -(r * t).exp_m1() / (d - b * grow)
    };
    Ok(single.clamp(0.0, 1.0).powf(bp.n0 as f64))
}

/// Exact simulation of the linear process until extinction or time `t`.
pub fn simulate_linear<R: Rng + ?Sized>(bp: &BranchingParams, t: f64, rng: &mut R) -> (bool, f64) {
    let mut n = bp.n0;
    let mut clock = 0.0;
    let per_capita = bp.b + bp.d;
    if per_capita == 0.0 {
        return (false, t);
    }
    while n > 0 {
        let rate = per_capita * n as f64;
        let wait = rng.sample::<f64, _>(Exp1) / rate;
        if clock + wait > t {
            return (false, t);
        }
        clock += wait;
        if rng.random::<f64>() * per_capita < bp.b {
            n += 1;
        } else {
            n -= 1;
        }
    }
    (true, clock)
}

/// Monte Carlo estimate of `P(T_0 ≤ t)`.
pub fn extinction_monte_carlo(
    bp: &BranchingParams,
    t: f64,
    replicas: u64,
    base_seed: u64,
) -> Result<BinomialEstimate> {
    let bp = bp.validate()?;
    let extinct = (0..replicas)
        .into_par_iter()
        .filter(|&i| simulate_linear(&bp, t, &mut replica_rng(base_seed, i)).0)
        .count() as u64;
    Ok(BinomialEstimate::new(extinct, replicas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_is_linear() {
        let spec = ChainSpec::symmetric(0, 40);
        for z in 0..=40 {
            let h = hitting_probability(&spec, z).unwrap();
            assert!((h - z as f64 / 40.0).abs() < 1e-12, "z={z} h={h}");
        }
    }

    #[test]
    fn boundaries_are_absorbing() {
        let spec = ChainSpec::from_fn(-3, 9, |k| 0.3 + 0.01 * k as f64).unwrap();
        assert_eq!(hitting_probability(&spec, -3).unwrap(), 0.0);
        assert_eq!(hitting_probability(&spec, 9).unwrap(), 1.0);
        assert!(hitting_probability(&spec, 10).is_err());
    }

    #[test]
    fn reflection_gives_excursion_probability() {
        let spec = ChainSpec::from_fn(0, 20, |_| 0.45).unwrap();
        let h1 = hitting_probability(&spec, 1).unwrap();
        let refl = spec.clone().reflecting();
        assert_eq!(hitting_probability(&refl, 0).unwrap(), h1);
        assert!((hitting_oracle(&refl, 0).unwrap() - h1).abs() < 1e-12);
        assert_eq!(hitting_table(&refl)[0].1, h1);
    }

    #[test]
    fn downward_drift_lowers_the_potential() {
        let (k, c0) = (1000.0, 2.0);
        let spec = ChainSpec::from_fn(0, 100, |s| 0.5 - c0 * s as f64 / k).unwrap();
        for z in 1..100 {
            let h = hitting_oracle(&spec, z).unwrap();
            assert!(h < z as f64 / 100.0);
            assert!((h - hitting_probability(&spec, z).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn long_chain_does_not_overflow() {
        // q/p = 9 per step: products reach 9^4998
        let spec = ChainSpec::from_fn(0, 5000, |_| 0.1).unwrap();
        let h = hitting_probability(&spec, 4999).unwrap();
        assert!(h.is_finite() && h > 0.0 && h < 1.0);
        assert!((h - hitting_oracle(&spec, 4999).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn table_matches_pointwise() {
        let spec = ChainSpec::from_fn(2, 60, |k| 0.2 + 0.6 * ((k as f64) * 0.37).sin().abs()).unwrap();
        for (z, h) in hitting_table(&spec) {
            assert!((h - hitting_probability(&spec, z).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_size_limit() {
        let spec = ChainSpec::symmetric(0, 20_000);
        assert!(matches!(hitting_oracle(&spec, 5), Err(Error::ChainTooLarge { .. })));
    }

    #[test]
    fn invalid_chains() {
        assert!(ChainSpec::from_fn(5, 5, |_| 0.5).is_err());
        assert!(ChainSpec::from_fn(0, 5, |_| 1.0).is_err());
    }

    #[test]
    fn branching_survival_values() {
        let bp = |b, d, n0| BranchingParams { b, d, n0 };
        assert_eq!(branching_survival(&bp(4.0, 1.0, 1)), 0.75);
        assert_eq!(branching_survival(&bp(2.0, 2.0, 3)), 0.0);
        assert_eq!(branching_survival(&bp(4.0, 1.0, 2)), 0.9375);
        assert_eq!(branching_survival(&bp(0.0, 1.0, 1)), 0.0);
    }

    #[test]
    fn extinction_cdf_values() {
        let bp = BranchingParams { b: 4.0, d: 1.0, n0: 1 };
        assert_eq!(extinction_cdf(&bp, 0.0).unwrap(), 0.0);
        let v = extinction_cdf(&bp, 1.0).unwrap();
        assert!((v - 0.240_547_268_736_607_1).abs() < 1e-12, "{v}");
        assert!((extinction_cdf(&bp, 1e4).unwrap() - 0.25).abs() < 1e-15);
        let sub = BranchingParams { b: 1.0, d: 4.0, n0: 3 };
        assert!((extinction_cdf(&sub, 1e4).unwrap() - 1.0).abs() < 1e-12);
        let crit = BranchingParams { b: 1.0, d: 1.0, n0: 1 };
        assert!(matches!(extinction_cdf(&crit, 1.0), Err(Error::CriticalBranching)));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn chain() -> impl Strategy<Value = ChainSpec> {
        (-50i64..50, 2i64..200)
            .prop_flat_map(|(lo, len)| {
                (Just(lo), Just(lo + len), prop::collection::vec(0.05f64..0.95, (len - 1) as usize))
            })
            .prop_map(|(lo, hi, ps)| ChainSpec::from_fn(lo, hi, |k| ps[(k - lo - 1) as usize]).unwrap())
    }

    proptest! {
        #[test]
        fn potential_agrees_with_linear_solve(spec in chain()) {
            for z in spec.lo..=spec.hi {
                let a = hitting_probability(&spec, z).unwrap();
                let b = hitting_oracle(&spec, z).unwrap();
                prop_assert!((a - b).abs() <= 1e-10, "z={} {} vs {}", z, a, b);
            }
        }

        #[test]
        fn potential_is_monotone(spec in chain(), bump in 0.0f64..0.04) {
            let table = hitting_table(&spec);
            for w in table.windows(2) {
                prop_assert!(w[1].1 >= w[0].1 - 1e-15);
            }
            let raised = ChainSpec::from_fn(spec.lo, spec.hi, |k| spec.up_prob(k) + bump).unwrap();
            for z in spec.lo..=spec.hi {
                let a = hitting_probability(&spec, z).unwrap();
                let b = hitting_probability(&raised, z).unwrap();
                prop_assert!(b >= a - 1e-12);
            }
        }

        #[test]
        fn extinction_cdf_monotone(b in 0.1f64..5.0, d in 0.1f64..5.0, t in 0.0f64..10.0, dt in 0.0f64..5.0) {
            prop_assume!((b - d).abs() > 1e-3);
            let bp = BranchingParams { b, d, n0: 1 };
            let f0 = extinction_cdf(&bp, t).unwrap();
            let f1 = extinction_cdf(&bp, t + dt).unwrap();
            prop_assert!(f1 >= f0 - 1e-12);
            let more_death = BranchingParams { d: d + 0.5, ..bp };
            if (b - d - 0.5).abs() > 1e-3 {
                prop_assert!(extinction_cdf(&more_death, t).unwrap() >= f0 - 1e-12);
            }
            let more_birth = BranchingParams { b: b + 0.5, ..bp };
            if (b + 0.5 - d).abs() > 1e-3 {
                prop_assert!(extinction_cdf(&more_birth, t).unwrap() <= f0 + 1e-12);
            }
            if b > d {
                let limit = extinction_cdf(&bp, 1e6).unwrap();
                prop_assert!((limit - (1.0 - branching_survival(&bp))).abs() < 1e-9);
            }
        }
    }
}
