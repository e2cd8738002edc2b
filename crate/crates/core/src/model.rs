//! Demographic parameters, population state and the closed-form rates of the
//! two-allele Mendelian birth-death model with a dominant fitter allele `A`.
//!
//! `aA` and `AA` individuals share the phenotype of `A`: same fertility `f`,
//! same natural death `D`. Homozygous `aa` carries an extra death rate `Δ`.
//! Competition `c` is identical between all genotype pairs and scaled by `1/K`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Demographic parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-capita fertility.
    pub f: f64,
    /// Natural death rate of `aA` and `AA`.
    #[serde(rename = "D")]
    pub d: f64,
    /// Extra death rate of `aa`.
    pub delta: f64,
    /// Competition coefficient.
    pub c: f64,
    /// Carrying-capacity scale.
    #[serde(rename = "K")]
    pub k: u64,
    /// Mutation probability per birth event.
    pub mu: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            f: 4.0,
            d: 1.0,
            delta: 0.3,
            c: 1.0,
            k: 1000,
            mu: 0.0,
        }
    }
}

impl ModelParams {
    /// Checks every parameter invariant and returns the parameters unchanged.
    /// The first violated invariant is reported.
    pub fn validate(self) -> Result<Self> {
        let bad = |what: &str| Err(Error::InvalidParams(what.to_string()));
        let all_finite = [self.f, self.d, self.delta, self.c, self.mu]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("parameters must be finite");
        }
        if self.f <= 0.0 {
            return bad("f must be > 0");
        }
        if self.d < 0.0 {
            return bad("D must be >= 0");
        }
        if self.c <= 0.0 {
            return bad("c must be > 0");
        }
        if self.k < 1 {
            return bad("K must be >= 1");
        }
        if self.f - self.d <= 0.0 {
            return bad("f-D must be > 0");
        }
        if self.delta <= 0.0 {
            return bad("delta must be > 0");
        }
        if self.f - self.d - self.delta <= 0.0 {
            return bad("f-D-delta must be > 0 (non-positive equilibrium)");
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad("mu must lie in [0, 1]");
        }
        Ok(self)
    }

    pub fn k_f64(&self) -> f64 {
        self.k as f64
    }

    /// Equilibrium density of a monomorphic `aa` population.
    pub fn nbar_a(&self) -> f64 {
        (self.f - self.d - self.delta) / self.c
    }

    /// Equilibrium density of a monomorphic `AA` population.
    pub fn nbar_big_a(&self) -> f64 {
        (self.f - self.d) / self.c
    }

    /// Limit fixation probability of a single `aA` mutant, `Δ/f`.
    pub fn fixation_target(&self) -> f64 {
        self.delta / self.f
    }
}

/// Knobs used by the analysis layer: ladder start `ε`, ladder exponent `ϑ`,
/// scaling slack `α`, fixation threshold `δ` and decay-bound slack `ϱ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub eps: f64,
    pub theta: f64,
    pub alpha: f64,
    pub delta_fix: f64,
    pub rho: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            eps: 0.05,
            theta: 0.2,
            alpha: 0.05,
            delta_fix: 0.1,
            rho: 0.6,
        }
    }
}

impl AnalysisParams {
    pub fn validate(self, p: &ModelParams) -> Result<Self> {
        let bad = |what: &str| Err(Error::InvalidParams(what.to_string()));
        if !(self.eps > 0.0 && self.eps < p.delta / 2.0) {
            return bad("eps must satisfy 0 < eps < delta/2");
        }
        if !(self.theta > p.delta / 2.0 && self.theta < p.delta) {
            return bad("theta must satisfy delta/2 < theta < delta");
        }
        if !(self.alpha > 0.0 && self.alpha < 0.25) {
            return bad("alpha must lie in (0, 1/4)");
        }
        if !(self.rho > 0.0 && self.rho < p.f * p.delta) {
            return bad("rho must satisfy 0 < rho < f*delta");
        }
        if !(self.delta_fix > 0.0 && self.delta_fix < p.nbar_big_a()) {
            return bad("delta_fix must satisfy 0 < delta_fix < nbar_A");
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Genotype {
    /// `aa`
    Recessive,
    /// `aA`
    Heterozygote,
    /// `AA`
    Dominant,
}

impl Genotype {
    pub const ALL: [Genotype; 3] = [
        Genotype::Recessive,
        Genotype::Heterozygote,
        Genotype::Dominant,
    ];
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Genotype::Recessive => "aa",
            Genotype::Heterozygote => "aA",
            Genotype::Dominant => "AA",
        })
    }
}

/// Integer genotype counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PopCount {
    #[serde(rename = "N_aa")]
    pub aa: u64,
    #[serde(rename = "N_aA")]
    pub a_a: u64,
    #[serde(rename = "N_AA")]
    pub big_aa: u64,
}

impl PopCount {
    pub const EMPTY: PopCount = PopCount {
        aa: 0,
        a_a: 0,
        big_aa: 0,
    };

    pub fn new(aa: u64, a_a: u64, big_aa: u64) -> Self {
        Self { aa, a_a, big_aa }
    }

    pub fn total(&self) -> u64 {
        self.aa + self.a_a + self.big_aa
    }

    pub fn is_extinct(&self) -> bool {
        self.total() == 0
    }

    /// Number of `A` alleles, `2 N_AA + N_aA`.
    pub fn mutant_alleles(&self) -> u64 {
        2 * self.big_aa + self.a_a
    }

    pub fn get(&self, g: Genotype) -> u64 {
        match g {
            Genotype::Recessive => self.aa,
            Genotype::Heterozygote => self.a_a,
            Genotype::Dominant => self.big_aa,
        }
    }

    pub fn get_mut(&mut self, g: Genotype) -> &mut u64 {
        match g {
            Genotype::Recessive => &mut self.aa,
            Genotype::Heterozygote => &mut self.a_a,
            Genotype::Dominant => &mut self.big_aa,
        }
    }

    /// Rescaled densities `N/K`.
    pub fn density(&self, k: u64) -> PopDensity {
        let k = k as f64;
        PopDensity {
            x: self.aa as f64 / k,
            y: self.a_a as f64 / k,
            z: self.big_aa as f64 / k,
        }
    }

    /// Relative frequency of `A` alleles, `(N_AA + N_aA/2) / N_tot`.
    pub fn allele_frequency(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyPopulation);
        }
        Ok((self.big_aa as f64 + 0.5 * self.a_a as f64) / total as f64)
    }

    /// Rate at which mutations arise in the `AA` subpopulation,
    /// `μ f p_A N_AA`.
    pub fn aa_mutation_rate(&self, p: &ModelParams) -> Result<f64> {
        Ok(p.mu * p.f * self.allele_frequency()? * self.big_aa as f64)
    }
}

impl fmt::Display for PopCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(aa={}, aA={}, AA={})", self.aa, self.a_a, self.big_aa)
    }
}

/// Densities of `aa`, `aA`, `AA`, in the state ordering of the deterministic system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PopDensity {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PopDensity {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn sum(&self) -> f64 {
        self.x + self.y + self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            z: a[2],
        }
    }

    /// Rounds to the nearest integer counts at scale `k`.
    pub fn to_counts(&self, k: u64) -> PopCount {
        let k = k as f64;
        let r = |v: f64| (v * k).round().max(0.0) as u64;
        PopCount::new(r(self.x), r(self.y), r(self.z))
    }

    pub fn max_abs_diff(&self, other: &PopDensity) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

/// Per-genotype birth and death propensities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateBundle {
    pub b_aa: f64,
    #[serde(rename = "b_aA")]
    pub b_a_a: f64,
    #[serde(rename = "b_AA")]
    pub b_big_aa: f64,
    pub d_aa: f64,
    #[serde(rename = "d_aA")]
    pub d_a_a: f64,
    #[serde(rename = "d_AA")]
    pub d_big_aa: f64,
}

impl RateBundle {
    pub fn compute(n: &PopCount, p: &ModelParams) -> Self {
        let (b_aa, b_a_a, b_big_aa) = birth_rates(n, p);
        let (d_aa, d_a_a, d_big_aa) = death_rates(n, p);
        Self {
            b_aa,
            b_a_a,
            b_big_aa,
            d_aa,
            d_a_a,
            d_big_aa,
        }
    }

    /// Rates in the fixed event order used by the simulator:
    /// births `aa, aA, AA`, then deaths `aa, aA, AA`.
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.b_aa,
            self.b_a_a,
            self.b_big_aa,
            self.d_aa,
            self.d_a_a,
            self.d_big_aa,
        ]
    }

    pub fn birth_total(&self) -> f64 {
        self.b_aa + self.b_a_a + self.b_big_aa
    }

    pub fn death_total(&self) -> f64 {
        self.d_aa + self.d_a_a + self.d_big_aa
    }

    pub fn total(&self) -> f64 {
        self.birth_total() + self.death_total()
    }
}

/// Mendelian birth rates under uniform random mating.
///
/// With `p_a = (N_aa + N_aA/2)/N` the three rates are the Hardy-Weinberg
/// split `f N (p_a², 2 p_a p_A, p_A²)`. The empty population has all rates zero.
pub fn birth_rates(n: &PopCount, p: &ModelParams) -> (f64, f64, f64) {
    let total = n.total();
    if total == 0 {
        return (0.0, 0.0, 0.0);
    }
    let total = total as f64;
    let a_alleles = n.aa as f64 + 0.5 * n.a_a as f64;
    let big_a_alleles = n.big_aa as f64 + 0.5 * n.a_a as f64;
    (
        p.f * a_alleles * a_alleles / total,
        2.0 * p.f * a_alleles * big_a_alleles / total,
        p.f * big_a_alleles * big_a_alleles / total,
    )
}

/// Natural death plus logistic competition, with the extra `Δ` on `aa`.
pub fn death_rates(n: &PopCount, p: &ModelParams) -> (f64, f64, f64) {
    let sigma = n.total() as f64 / p.k_f64();
    let pressure = p.d + p.c * sigma;
    (
        n.aa as f64 * (pressure + p.delta),
        n.a_a as f64 * pressure,
        n.big_aa as f64 * pressure,
    )
}

/// Jump rates of the total population and of the `A`-allele count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumRates {
    pub b_sigma: f64,
    pub d_sigma: f64,
    pub b_mutant: f64,
    pub d_mutant: f64,
}

pub fn sum_and_mutant_rates(n: &PopCount, p: &ModelParams) -> SumRates {
    let total = n.total() as f64;
    let sigma = total / p.k_f64();
    let mutant = n.mutant_alleles() as f64;
    SumRates {
        b_sigma: p.f * total,
        d_sigma: p.d * total + p.c * total * sigma + p.delta * n.aa as f64,
        b_mutant: p.f * mutant,
        d_mutant: mutant * (p.d + p.c * sigma),
    }
}

/// Closed-form derived quantities at the given parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub nbar_a: f64,
    #[serde(rename = "nbar_A")]
    pub nbar_big_a: f64,
    /// Invasion fitness of `aA` or `AA` in a resident `aa` population.
    pub s_mut_in_res: f64,
    /// Invasion fitness of `aa` in a resident `AA` population.
    pub s_res_in_mut: f64,
    pub gamma_delta: f64,
    pub x_ladder: f64,
    pub pfix: f64,
    pub h1: f64,
    pub h2: f64,
    pub flow_coeff: f64,
}

pub fn derived(p: &ModelParams, a: &AnalysisParams) -> DerivedQuantities {
    let nbar_a = p.nbar_a();
    let nbar_big_a = p.nbar_big_a();
    let (f, d, delta) = (p.f, p.d, p.delta);
    DerivedQuantities {
        nbar_a,
        nbar_big_a,
        s_mut_in_res: f - d - p.c * nbar_a,
        s_res_in_mut: f - d - delta - p.c * nbar_big_a,
        gamma_delta: (f + delta / 2.0) / (4.0 * nbar_big_a * (f + delta)),
        x_ladder: ((f + a.theta) / (f + delta)).sqrt(),
        pfix: delta / f,
        h1: center_manifold_h1(p),
        h2: f / (4.0 * nbar_big_a * (f + delta)),
        flow_coeff: f * delta / (2.0 * nbar_big_a * (f + delta)),
    }
}

/// Coefficient of `ỹ²` in the first (translated `z + y + D/(D+Δ) x`)
/// component of the center manifold at `(0, 0, n̄_A)`.
///
/// Along the manifold the sum process balances `Σ(f - D - cΣ) = Δx` to second
/// order, which pins `Σ - n̄_A = -Δ x / (f - D)` with `x = h2 ỹ²`.
pub(crate) fn center_manifold_h1(p: &ModelParams) -> f64 {
    let nbar = p.nbar_big_a();
    -p.f * p.delta / (4.0 * nbar * (p.f - p.d) * (p.d + p.delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    fn defaults() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn accepts_defaults() {
        let p = ModelParams {
            k: 1000,
            ..defaults()
        };
        assert_eq!(p.validate().unwrap(), p);
    }

    #[test]
    fn rejects_zero_growth() {
        let p = ModelParams {
            f: 1.0,
            d: 1.0,
            delta: 0.0,
            ..defaults()
        };
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("f-D must be > 0"), "{err}");
    }

    #[test]
    fn rejects_nonpositive_aa_equilibrium() {
        let p = ModelParams {
            delta: 3.5,
            ..defaults()
        };
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("f-D-delta must be > 0"), "{err}");
    }

    #[test]
    fn rejects_bad_mu_and_nan() {
        assert!(ModelParams { mu: 1.5, ..defaults() }.validate().is_err());
        assert!(ModelParams { f: f64::NAN, ..defaults() }.validate().is_err());
    }

    #[test]
    fn analysis_ordering() {
        let p = defaults();
        assert!(AnalysisParams::default().validate(&p).is_ok());
        let bad = AnalysisParams {
            eps: 0.2,
            ..Default::default()
        };
        assert!(bad.validate(&p).is_err());
        let bad = AnalysisParams {
            rho: 1.2,
            ..Default::default()
        };
        assert!(bad.validate(&p).is_err());
    }

    #[test]
    fn derived_values_at_defaults() {
        let q = derived(&defaults(), &AnalysisParams::default());
        assert!((q.nbar_a - 2.7).abs() < 1e-12);
        assert!((q.nbar_big_a - 3.0).abs() < 1e-12);
        assert!((q.s_mut_in_res - 0.3).abs() < 1e-12);
        assert!((q.s_res_in_mut + 0.3).abs() < 1e-12);
        assert!((q.pfix - 0.075).abs() < 1e-15);
        assert!((q.x_ladder - 0.988_303_691_203_524_6).abs() < 1e-12);
        assert!((q.h2 - 4.0 / (12.0 * 4.3)).abs() < 1e-15);
        assert!((q.flow_coeff - 1.2 / 25.8).abs() < 1e-15);
        // (f + Δ/2) / (4 n̄_A (f + Δ)) = 4.15 / 51.6
        assert!((q.gamma_delta - 4.15 / 51.6).abs() < 1e-15);
        // -1.2 / (12 * 3 * 1.3)
        assert!((q.h1 + 0.025_641_025_641_025_64).abs() < 1e-12);
    }

    #[test]
    fn birth_rate_examples() {
        let p = ModelParams { f: 1.0, ..defaults() };
        assert_eq!(birth_rates(&PopCount::new(2, 2, 0), &p), (2.25, 1.5, 0.25));
        assert_eq!(birth_rates(&PopCount::new(1, 0, 1), &p), (0.5, 1.0, 0.5));
        let p2 = ModelParams { f: 2.0, ..defaults() };
        assert_eq!(birth_rates(&PopCount::new(0, 0, 5), &p2), (0.0, 0.0, 10.0));
        assert_eq!(birth_rates(&PopCount::EMPTY, &p2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn death_rate_examples() {
        let p = defaults();
        assert_eq!(death_rates(&PopCount::EMPTY, &p), (0.0, 0.0, 0.0));
        let k = p.k;
        let n = PopCount::new(2700 * k / 1000, 0, 0);
        let (d_aa, _, _) = death_rates(&n, &p);
        assert!(rel_close(d_aa, 4.0 * n.aa as f64, 1e-12));
        let n = PopCount::new(0, 0, 3 * k);
        let (_, _, d_big) = death_rates(&n, &p);
        assert!(rel_close(d_big, 3.0 * k as f64 * 4.0, 1e-12));
    }

    #[test]
    fn sum_rates_examples() {
        let p = defaults();
        let n = PopCount::new(0, 7, 11);
        let s = sum_and_mutant_rates(&n, &p);
        let sigma = 18.0 / p.k_f64();
        assert!(rel_close(s.d_sigma, 18.0 * (p.d + p.c * sigma), 1e-14));
        let s = sum_and_mutant_rates(&PopCount::new(0, 1, 0), &p);
        assert_eq!(s.b_mutant, 4.0);
        let n = PopCount::new(17, 5, 3);
        let r = RateBundle::compute(&n, &p);
        let s = sum_and_mutant_rates(&n, &p);
        assert!(rel_close(r.birth_total(), s.b_sigma, 1e-14));
        assert!(rel_close(r.death_total(), s.d_sigma, 1e-14));
        // mutant process: births of A alleles come from aA and AA births
        assert!(rel_close(s.d_mutant, r.d_a_a + 2.0 * r.d_big_aa, 1e-14));
    }

    #[test]
    fn allele_frequency_examples() {
        assert_eq!(PopCount::new(1, 2, 1).allele_frequency().unwrap(), 0.5);
        assert_eq!(PopCount::new(0, 0, 9).allele_frequency().unwrap(), 1.0);
        assert!((PopCount::new(3, 2, 5).allele_frequency().unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(
            PopCount::EMPTY.allele_frequency(),
            Err(Error::EmptyPopulation)
        ));
    }

    #[test]
    fn aa_mutation_rate_at_monomorphic_aa() {
        let p = ModelParams { mu: 1e-3, ..defaults() };
        let n = PopCount::new(0, 0, 3000);
        let r = n.aa_mutation_rate(&p).unwrap();
        assert!(rel_close(r, 1e-3 * 4.0 * 3000.0, 1e-14));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn state() -> impl Strategy<Value = PopCount> {
        (0u64..100_000, 0u64..100_000, 0u64..100_000)
            .prop_filter("nonempty", |(a, b, c)| a + b + c > 0)
            .prop_map(|(a, b, c)| PopCount::new(a, b, c))
    }

    proptest! {
        #[test]
        fn birth_conservation_and_hardy_weinberg(n in state(), f in 0.1f64..10.0) {
            let p = ModelParams { f, ..ModelParams::default() };
            let (baa, bha, b_big) = birth_rates(&n, &p);
            let total = f * n.total() as f64;
            prop_assert!(((baa + bha + b_big) - total).abs() <= 1e-12 * total);
            let pa = (n.aa as f64 + 0.5 * n.a_a as f64) / n.total() as f64;
            prop_assert!((baa / total - pa * pa).abs() <= 1e-12);
            prop_assert!((bha / total - 2.0 * pa * (1.0 - pa)).abs() <= 1e-12);
            prop_assert!((b_big / total - (1.0 - pa) * (1.0 - pa)).abs() <= 1e-12);
        }

        #[test]
        fn genotype_swap_symmetry(n in state()) {
            // Δ = 0 makes the model symmetric in a <-> A
            let p = ModelParams { delta: 0.0, ..ModelParams::default() };
            let swapped = PopCount::new(n.big_aa, n.a_a, n.aa);
            let b = birth_rates(&n, &p);
            let bs = birth_rates(&swapped, &p);
            let d = death_rates(&n, &p);
            let ds = death_rates(&swapped, &p);
            prop_assert!((b.0 - bs.2).abs() <= 1e-9 * b.0.max(1.0));
            prop_assert!((b.2 - bs.0).abs() <= 1e-9 * b.2.max(1.0));
            prop_assert_eq!(d.0, ds.2);
            prop_assert_eq!(d.2, ds.0);
        }

        #[test]
        fn derived_is_finite(f in 1.0f64..10.0, dfrac in 0.05f64..0.5, delfrac in 0.05f64..0.9) {
            let d = f * dfrac;
            let delta = (f - d) * delfrac;
            let p = ModelParams { f, d, delta, ..ModelParams::default() }.validate().unwrap();
            let a = AnalysisParams { eps: delta / 4.0, theta: 0.75 * delta, ..AnalysisParams::default() };
            let q = derived(&p, &a);
            for v in [q.nbar_a, q.nbar_big_a, q.gamma_delta, q.x_ladder, q.pfix, q.h2, q.flow_coeff] {
                prop_assert!(v.is_finite() && v > 0.0);
            }
            prop_assert!(q.x_ladder < 1.0);
            prop_assert!(q.h1.is_finite() && q.h1 < 0.0);
        }
    }
}
