//! Large-population limit of the birth-death process.
//!
//! With `u = x + y/2` and `v = z + y/2` the `a`- and `A`-allele densities and
//! `Σ = x + y + z`, the vector field is
//!
//! ```text
//! ẋ = f u²/Σ     − x (D + Δ + cΣ)
//! ẏ = 2f u v/Σ   − y (D + cΣ)
//! ż = f v²/Σ     − z (D + cΣ)
//! ```
//!
//! It has an unstable fixed point at `(n̄_a, 0, 0)` and a non-hyperbolic stable
//! fixed point at `(0, 0, n̄_A)` with one zero eigenvalue, along which the
//! heterozygote density decays like `1/t`.

mod dopri;
mod eigen;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use dopri::{DenseStep, Tolerance};
pub use eigen::{cubic_roots, eigenvalues, Mat3, Spectrum};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PopDensity};

/// Densities below this magnitude are rounded to zero after each step.
pub const CLAMP_EPS: f64 = 1e-14;

/// Phenotype of the heterozygote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dominance {
    /// `aA` has the phenotype of `AA`.
    #[default]
    Dominant,
    /// `aA` is intermediate: its extra death rate is `Δ/2`.
    Codominant,
}

/// The deterministic vector field at fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorField {
    pub params: ModelParams,
    pub dominance: Dominance,
}

impl VectorField {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            dominance: Dominance::Dominant,
        }
    }

    pub fn codominant(params: ModelParams) -> Self {
        Self {
            params,
            dominance: Dominance::Codominant,
        }
    }

    fn het_extra_death(&self) -> f64 {
        match self.dominance {
            Dominance::Dominant => 0.0,
            Dominance::Codominant => 0.5 * self.params.delta,
        }
    }

    pub fn eval(&self, s: &[f64; 3]) -> [f64; 3] {
        let ModelParams { f, d, delta, c, .. } = self.params;
        let [x, y, z] = *s;
        let sigma = x + y + z;
        if sigma <= 0.0 {
            return [0.0; 3];
        }
        let u = x + 0.5 * y;
        let v = z + 0.5 * y;
        let press = d + c * sigma;
        [
            f * u * u / sigma - x * (press + delta),
            2.0 * f * u * v / sigma - y * (press + self.het_extra_death()),
            f * v * v / sigma - z * press,
        ]
    }

    /// Analytic Jacobian; row `i` holds the partial derivatives of component `i`.
    pub fn jacobian(&self, s: &[f64; 3]) -> Mat3 {
        let ModelParams { f, d, delta, c, .. } = self.params;
        let [x, y, z] = *s;
        let sigma = x + y + z;
        let u = x + 0.5 * y;
        let v = z + 0.5 * y;
        let du = [1.0, 0.5, 0.0];
        let dv = [0.0, 0.5, 1.0];
        let press = d + c * sigma;
        let s2 = sigma * sigma;
        let own = [press + delta, press + self.het_extra_death(), press];
        let state = [x, y, z];
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            jac[0][j] = f * (2.0 * u * du[j] / sigma - u * u / s2);
            jac[1][j] = 2.0 * f * ((du[j] * v + u * dv[j]) / sigma - u * v / s2);
            jac[2][j] = f * (2.0 * v * dv[j] / sigma - v * v / s2);
        }
        for i in 0..3 {
            jac[i][i] -= own[i];
            for j in 0..3 {
                jac[i][j] -= state[i] * c;
            }
        }
        jac
    }
}

/// Right-hand side of the dominant-allele system; zero at `Σ = 0`.
pub fn rhs(s: &PopDensity, p: &ModelParams) -> PopDensity {
    PopDensity::from_array(VectorField::new(*p).eval(&s.to_array()))
}

/// Central finite differences of [`rhs`] with step `h`.
pub fn jacobian_numeric(point: &PopDensity, p: &ModelParams, h: f64) -> Mat3 {
    jacobian_numeric_of(&VectorField::new(*p), &point.to_array(), h)
}

pub fn jacobian_numeric_of(field: &VectorField, point: &[f64; 3], h: f64) -> Mat3 {
    let mut jac = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut plus = *point;
        let mut minus = *point;
        plus[j] += h;
        minus[j] -= h;
        let fp = field.eval(&plus);
        let fm = field.eval(&minus);
        for i in 0..3 {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Closed-form Jacobian at `(n̄_a, 0, 0)`.
pub fn jacobian_at_aa(p: &ModelParams) -> Mat3 {
    let (f, d, del) = (p.f, p.d, p.delta);
    [
        [-f + d + del, -f + d + del, -2.0 * f + d + del],
        [0.0, del, 2.0 * f],
        [0.0, 0.0, -f + del],
    ]
}

/// Closed-form Jacobian at `(0, 0, n̄_A)`.
pub fn jacobian_at_big_aa(p: &ModelParams) -> Mat3 {
    let (f, d, del) = (p.f, p.d, p.delta);
    [
        [-f - del, 0.0, 0.0],
        [2.0 * f, 0.0, 0.0],
        [-2.0 * f + d, -f + d, -f + d],
    ]
}

/// Integrated trajectory with dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub init: PopDensity,
    pub t0: f64,
    steps: Vec<DenseStep>,
}

impl OdeTrajectory {
    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(self.t0, |s| s.t1())
    }

    pub fn final_state(&self) -> PopDensity {
        self.steps
            .last()
            .map_or(self.init, |s| PopDensity::from_array(s.end()))
    }

    pub fn steps(&self) -> &[DenseStep] {
        &self.steps
    }

    /// State at time `t`, clamped to the integrated range.
    pub fn at(&self, t: f64) -> PopDensity {
        if self.steps.is_empty() || t <= self.t0 {
            return self.init;
        }
        if t >= self.t_end() {
            return self.final_state();
        }
        let i = self.steps.partition_point(|s| s.t1() < t);
        let v = self.steps[i].eval(t);
        PopDensity::from_array(v.map(|c| c.max(0.0)))
    }

    /// States at `t0, t0 + dt, ...` up to the end of integration.
    pub fn sample(&self, dt: f64) -> Vec<(f64, PopDensity)> {
        let n = ((self.t_end() - self.t0) / dt).floor() as usize;
        (0..=n)
            .map(|i| {
                let t = self.t0 + i as f64 * dt;
                (t, self.at(t))
            })
            .collect()
    }

    /// Accepted step endpoints, including the initial state.
    pub fn nodes(&self) -> Vec<(f64, PopDensity)> {
        std::iter::once((self.t0, self.init))
            .chain(
                self.steps
                    .iter()
                    .map(|s| (s.t1(), PopDensity::from_array(s.end()))),
            )
            .collect()
    }

    /// First time the heterozygote density falls to `level`, located inside the
    /// bracketing step by bisection on the dense output.
    pub fn first_time_y_below(&self, level: f64) -> Option<f64> {
        if self.init.y <= level {
            return Some(self.t0);
        }
        let step = self.steps.iter().find(|s| s.end()[1] <= level)?;
        let (mut lo, mut hi) = (step.t0, step.t1());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if step.eval(mid)[1] > level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi.abs().max(1.0) {
                break;
            }
        }
        Some(hi)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, dt: Option<f64>) -> Result<()> {
        writeln!(w, "t,x_aa,y_aA,z_AA")?;
        let rows = match dt {
            Some(dt) => self.sample(dt),
            None => self.nodes(),
        };
        for (t, s) in rows {
            writeln!(w, "{},{},{},{}", t, s.x, s.y, s.z)?;
        }
        Ok(())
    }
}

fn clamp(v: [f64; 3]) -> [f64; 3] {
    v.map(|c| if c < CLAMP_EPS { 0.0 } else { c })
}

fn check_init(init: &PopDensity) -> Result<()> {
    let a = init.to_array();
    if a.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::Numerical("initial densities must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Integrates `field` from `init` at time `t0` to `t_end`, stopping early once
/// `stop` holds after an accepted step.
pub fn integrate_field<S>(
    field: &VectorField,
    init: PopDensity,
    t0: f64,
    t_end: f64,
    tol: Tolerance,
    mut stop: S,
) -> Result<OdeTrajectory>
where
    S: FnMut(f64, &PopDensity) -> bool,
{
    check_init(&init)?;
    if !(t_end > t0) {
        return Err(Error::Numerical("t_end must exceed the start time".into()));
    }
    let steps = dopri::integrate(
        |s| field.eval(s),
        clamp,
        t0,
        init.to_array(),
        t_end,
        tol,
        |t, y| stop(t, &PopDensity::from_array(*y)),
    )?;
    Ok(OdeTrajectory { init, t0, steps })
}

/// Integrates the dominant-allele system on `[0, t_end]`.
pub fn integrate(p: &ModelParams, init: PopDensity, t_end: f64, tol: Tolerance) -> Result<OdeTrajectory> {
    integrate_field(&VectorField::new(*p), init, 0.0, t_end, tol, |_, _| false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    StableDegenerate,
    Stable,
    Unstable,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub point: PopDensity,
    /// Max-norm of the vector field at the point.
    pub residual: f64,
    pub jacobian: Mat3,
    /// Ascending.
    pub eigenvalues: [f64; 3],
    pub classification: Stability,
}

fn classify(ev: &[f64; 3], zero_tol: f64) -> Stability {
    if ev.iter().any(|&l| l > zero_tol) {
        Stability::Unstable
    } else if ev.iter().all(|&l| l < -zero_tol) {
        Stability::Stable
    } else if ev.iter().filter(|l| l.abs() <= zero_tol).count() == 1 {
        Stability::StableDegenerate
    } else {
        Stability::Other
    }
}

fn report(field: &VectorField, point: PopDensity, jacobian: Mat3) -> Result<FixedPointReport> {
    let r = field.eval(&point.to_array());
    let residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eigenvalues = eigenvalues(&jacobian)
        .real()
        .ok_or_else(|| Error::Numerical("complex spectrum at a fixed point".into()))?;
    Ok(FixedPointReport {
        point,
        residual,
        jacobian,
        eigenvalues,
        classification: classify(&eigenvalues, 1e-9),
    })
}

/// Reports for `(n̄_a, 0, 0)` and `(0, 0, n̄_A)`, eigenvalues from the
/// characteristic polynomial of the closed-form Jacobians.
pub fn fixed_points(p: &ModelParams) -> Result<(FixedPointReport, FixedPointReport)> {
    let field = VectorField::new(*p);
    Ok((
        report(&field, PopDensity::new(p.nbar_a(), 0.0, 0.0), jacobian_at_aa(p))?,
        report(&field, PopDensity::new(0.0, 0.0, p.nbar_big_a()), jacobian_at_big_aa(p))?,
    ))
}

/// Eigenvalues of the two fixed points in closed form, ascending.
pub fn closed_form_eigenvalues(p: &ModelParams) -> ([f64; 3], [f64; 3]) {
    let (f, d, del) = (p.f, p.d, p.delta);
    let mut at_aa = [-(f - d - del), del, -(f - del)];
    let mut at_big = [-f - del, 0.0, -(f - d)];
    at_aa.sort_by(|a, b| a.total_cmp(b));
    at_big.sort_by(|a, b| a.total_cmp(b));
    (at_aa, at_big)
}

/// Quadratic approximation of the center manifold at `(0, 0, n̄_A)`.
///
/// In coordinates `(z̃, ỹ, x̃) = T (z − n̄_A, y, x)` the manifold is
/// `z̃ = h1 ỹ²`, `x̃ = h2 ỹ²` and the flow on it is `ỹ' = −flow_coeff ỹ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterManifoldModel {
    pub h1: f64,
    pub h2: f64,
    pub flow_coeff: f64,
    pub transform: Mat3,
}

impl CenterManifoldModel {
    /// Center-manifold coordinates `(z̃, ỹ, x̃)` of a density.
    pub fn coordinates(&self, s: &PopDensity, nbar_big_a: f64) -> [f64; 3] {
        let v = [s.z - nbar_big_a, s.y, s.x];
        let t = &self.transform;
        [
            t[0][0] * v[0] + t[0][1] * v[1] + t[0][2] * v[2],
            t[1][0] * v[0] + t[1][1] * v[1] + t[1][2] * v[2],
            t[2][0] * v[0] + t[2][1] * v[1] + t[2][2] * v[2],
        ]
    }
}

pub fn center_manifold(p: &ModelParams) -> Result<CenterManifoldModel> {
    let p = p.validate()?;
    let (f, d, del) = (p.f, p.d, p.delta);
    let nbar = p.nbar_big_a();
    Ok(CenterManifoldModel {
        h1: crate::model::center_manifold_h1(&p),
        h2: f / (4.0 * nbar * (f + del)),
        flow_coeff: f * del / (2.0 * nbar * (f + del)),
        transform: [
            [1.0, 1.0, d / (d + del)],
            [0.0, 1.0, 2.0 * f / (f + del)],
            [0.0, 0.0, 1.0],
        ],
    })
}

/// Lower and upper `1/t` envelopes for the heterozygote density `t` time
/// units after it has decayed to `eps`, with slack `rho < fΔ`.
pub fn decay_bounds(p: &ModelParams, eps: f64, rho: f64, t: f64) -> Result<(f64, f64)> {
    let fd = p.f * p.delta;
    if !(rho > 0.0 && rho < fd) {
        return Err(Error::InvalidParams(format!("rho must satisfy 0 < rho < f*delta = {fd}")));
    }
    if !(eps > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParams("decay bounds need eps > 0 and t >= 0".into()));
    }
    let scale = 2.0 * p.nbar_big_a() * (p.f + p.delta);
    let lower = scale / ((fd + rho) * t + scale / eps);
    let upper = scale / ((fd - rho) * t + scale / eps);
    Ok((lower, upper))
}
