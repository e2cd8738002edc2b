use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnalysisParams, ModelParams, PopCount, PopDensity};
use crate::ode::{decay_bounds, integrate_field, OdeTrajectory, Tolerance, VectorField};
use crate::ssa::{replica_rng, RecordMode, Simulator, StopReason, StopSpec};
use crate::stats::{linear_fit, median, quantile, LinearFit};

use super::resident_with_mutant;

/// Initial mutant density for the deterministic runs.
const ODE_SEED_DENSITY: f64 = 0.1;
/// Upper end of the integration window; the stop predicate ends it earlier.
const ODE_T_MAX: f64 = 1e8;
/// Points in the log-spaced tail fits.
const TAIL_POINTS: usize = 200;
/// Attempts before giving up on finding a fixing replica.
const MAX_ATTEMPTS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    /// Time since the bound clock was started.
    pub t: f64,
    pub y: f64,
    pub lower: f64,
    pub upper: f64,
}

impl DecaySample {
    pub fn inside(&self, slack: f64) -> bool {
        self.y >= self.lower - slack && self.y <= self.upper + slack
    }
}

/// Deterministic heterozygote decay checked against the `1/t` envelopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub params: ModelParams,
    pub eps: f64,
    pub rho: f64,
    pub y_stop: f64,
    /// First time after the peak at which `y = ε`.
    pub t_restart: f64,
    pub t_stop: f64,
    pub samples: Vec<DecaySample>,
    pub inside_fraction: f64,
    /// Fit of `ln y` on `ln(t − t_restart)` for `y ∈ [y_stop, 10 y_stop]`.
    pub tail_loglog: Option<LinearFit>,
    /// Fit of `ln y` on `t` over the same window.
    pub tail_semilog: Option<LinearFit>,
    /// Same semilog fit for the co-dominant variant, which decays exponentially.
    pub codominant_semilog: Option<LinearFit>,
}

/// Integrates from `(n̄_a − 0.1, 0.1, 0)` until `y ≤ ε/100` and compares every
/// accepted step after the restart with `decay_bounds(ε, ϱ)`.
pub fn algebraic_decay(p: &ModelParams, eps: f64, rho: f64) -> Result<DecayCurve> {
    let p = p.validate()?;
    if !(eps > 0.0 && eps < ODE_SEED_DENSITY) {
        return Err(Error::InvalidParams(format!("eps must lie in (0, {ODE_SEED_DENSITY})")));
    }
    decay_bounds(&p, eps, rho, 0.0)?;
    let y_stop = eps / 100.0;
    let tol = Tolerance::default();

    let traj = run_to(&VectorField::new(p), &p, y_stop, tol)?;
    let t_restart = restart_time(&traj, eps)
        .ok_or_else(|| Error::Numerical("y never decayed to eps".into()))?;
    let t_stop = traj.t_end();
    let mut samples = Vec::new();
    for (t, s) in traj.nodes() {
        if t < t_restart {
            continue;
        }
        let (lower, upper) = decay_bounds(&p, eps, rho, t - t_restart)?;
        samples.push(DecaySample { t: t - t_restart, y: s.y, lower, upper });
    }
    // accepted steps carry the integrator's relative error
    let inside = samples.iter().filter(|s| s.inside(tol.rtol * eps)).count();
    let inside_fraction = inside as f64 / samples.len().max(1) as f64;

    let (tail_loglog, tail_semilog) = tail_fits(&traj, t_restart, y_stop);
    let codom = run_to(&VectorField::codominant(p), &p, y_stop, tol)?;
    let codominant_semilog = restart_time(&codom, eps).and_then(|t0| tail_fits(&codom, t0, y_stop).1);

    Ok(DecayCurve {
        params: p,
        eps,
        rho,
        y_stop,
        t_restart,
        t_stop,
        samples,
        inside_fraction,
        tail_loglog,
        tail_semilog,
        codominant_semilog,
    })
}

fn run_to(field: &VectorField, p: &ModelParams, y_stop: f64, tol: Tolerance) -> Result<OdeTrajectory> {
    let init = PopDensity::new(p.nbar_a() - ODE_SEED_DENSITY, ODE_SEED_DENSITY, 0.0);
    let mut peaked = false;
    let mut last = init.y;
    integrate_field(field, init, 0.0, ODE_T_MAX, tol, |_, s| {
        peaked |= s.y < last;
        last = s.y;
        peaked && s.y <= y_stop
    })
}

/// First crossing of `eps` on the decreasing branch of `y`.
fn restart_time(traj: &OdeTrajectory, eps: f64) -> Option<f64> {
    let nodes = traj.nodes();
    let peak = nodes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.y.total_cmp(&b.1 .1.y))?
        .0;
    let t_peak = nodes[peak].0;
    if nodes[peak].1.y <= eps {
        return Some(t_peak);
    }
    let step = traj
        .steps()
        .iter()
        .find(|s| s.t0 >= t_peak && s.end()[1] <= eps)?;
    let (mut lo, mut hi) = (step.t0, step.t1());
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if step.eval(mid)[1] > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

fn tail_fits(traj: &OdeTrajectory, t_restart: f64, y_stop: f64) -> (Option<LinearFit>, Option<LinearFit>) {
    let Some(t_hi) = traj.first_time_y_below(y_stop) else {
        return (None, None);
    };
    let Some(t_lo) = first_below_after(traj, 10.0 * y_stop, t_restart) else {
        return (None, None);
    };
    let (a, b) = ((t_lo - t_restart).ln(), (t_hi - t_restart).ln());
    let mut log_t = Vec::with_capacity(TAIL_POINTS);
    let mut t_lin = Vec::with_capacity(TAIL_POINTS);
    let mut log_y = Vec::with_capacity(TAIL_POINTS);
    for i in 0..TAIL_POINTS {
        let u = a + (b - a) * i as f64 / (TAIL_POINTS - 1) as f64;
        let t = t_restart + u.exp();
        let y = traj.at(t).y;
        if y <= 0.0 {
            continue;
        }
        log_t.push(u);
        t_lin.push(t);
        log_y.push(y.ln());
    }
    (linear_fit(&log_t, &log_y), linear_fit(&t_lin, &log_y))
}

fn first_below_after(traj: &OdeTrajectory, level: f64, after: f64) -> Option<f64> {
    let step = traj.steps().iter().find(|s| s.t0 >= after && s.end()[1] <= level)?;
    let (mut lo, mut hi) = (step.t0, step.t1());
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if step.eval(mid)[1] > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayOptions {
    /// Sampling interval.
    pub dt: f64,
    /// Length of the compared window after `τ^hit_ε`.
    pub horizon: f64,
    /// Additive slack on the bracket, in units of `K^{-1/2}`.
    pub margin: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self { dt: 1.0, horizon: 500.0, margin: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSample {
    /// Time since `τ^hit_ε`.
    pub t: f64,
    pub y_ode: f64,
    pub y_stochastic: f64,
    /// Bracket at `t - bound_start`; `None` before the bound clock starts.
    pub bounds: Option<(f64, f64)>,
}

/// One fixing stochastic path against the ODE restarted from the matched state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayComparison {
    pub params: ModelParams,
    pub analysis: AnalysisParams,
    pub options: DecayOptions,
    pub base_seed: u64,
    /// Replica index of the first fixing path.
    pub replica: u64,
    pub tau_delta_mut: f64,
    pub tau_eps_hit: f64,
    pub matched: PopCount,
    /// Matched `n_aA`, used in place of `ε` in the bracket.
    pub y0: f64,
    /// First time the ODE is back at `y0` on its decreasing branch. The
    /// matched state is off the center manifold, so `y` may first rise.
    pub bound_start: f64,
    pub samples: Vec<ComparisonSample>,
    /// Fractions over the samples with a bracket.
    pub ode_inside_fraction: f64,
    pub stochastic_inside_fraction: f64,
    /// Without the `K^{-1/2}` slack.
    pub stochastic_strict_fraction: f64,
    /// Sup-norm distance between the two paths over all samples.
    pub sup_distance: f64,
}

pub fn decay_comparison(
    p: &ModelParams,
    a: &AnalysisParams,
    k: u64,
    base_seed: u64,
    opts: DecayOptions,
) -> Result<DecayComparison> {
    if k < 1000 {
        return Err(Error::InvalidParams("decay comparison needs K >= 1000".into()));
    }
    let p = ModelParams { k, ..*p }.validate()?;
    let a = a.validate(&p)?;
    if !(opts.dt > 0.0 && opts.horizon >= opts.dt && opts.margin >= 0.0) {
        return Err(Error::InvalidParams("need dt > 0, horizon >= dt, margin >= 0".into()));
    }
    let init = resident_with_mutant(&p);
    let stop = StopSpec::survival(a.delta_fix, vec![a.eps]);

    let mut found = None;
    for replica in 0..MAX_ATTEMPTS {
        let mut sim = Simulator::new(p, init, replica_rng(base_seed, replica));
        let (_, rec) = sim.run(&stop, RecordMode::StopsOnly, base_seed, replica)?;
        if rec.reason == StopReason::LevelsHit {
            found = Some((sim, rec, replica));
            break;
        }
    }
    let (mut sim, rec, replica) =
        found.ok_or_else(|| Error::Numerical("no fixing replica found".into()))?;
    let tau_eps_hit = rec.t_end;
    let matched = sim.state();
    let start = matched.density(k);
    let y0 = start.y.max(1.0 / p.k_f64());

    let tol = Tolerance::default();
    let ode = integrate_field(&VectorField::new(p), start, 0.0, opts.horizon, tol, |_, _| false)?;
    let bound_start = restart_time(&ode, y0).unwrap_or(0.0).max(0.0);
    let n = (opts.horizon / opts.dt).floor() as usize;
    let slack = opts.margin / p.k_f64().sqrt();
    let mut samples = Vec::with_capacity(n + 1);
    let mut sup: f64 = 0.0;
    for i in 0..=n {
        let t = i as f64 * opts.dt;
        if i > 0 {
            while sim.advance_until(tau_eps_hit + t).is_some() {}
        }
        let det = ode.at(t);
        let sto = sim.state().density(k);
        sup = sup.max(det.max_abs_diff(&sto));
        let bounds = if t >= bound_start {
            Some(decay_bounds(&p, y0, a.rho, t - bound_start)?)
        } else {
            None
        };
        samples.push(ComparisonSample { t, y_ode: det.y, y_stochastic: sto.y, bounds });
    }
    let bracketed: Vec<&ComparisonSample> = samples.iter().filter(|s| s.bounds.is_some()).collect();
    let frac = |pick: &dyn Fn(&ComparisonSample) -> f64, s: f64| {
        let inside = bracketed
            .iter()
            .filter(|c| {
                let (lo, hi) = c.bounds.unwrap();
                let y = pick(c);
                y >= lo - s && y <= hi + s
            })
            .count();
        inside as f64 / bracketed.len().max(1) as f64
    };
    Ok(DecayComparison {
        params: p,
        analysis: a,
        options: opts,
        base_seed,
        replica,
        tau_delta_mut: rec.tau_delta_mut.unwrap_or(0.0),
        tau_eps_hit,
        matched,
        y0,
        bound_start,
        ode_inside_fraction: frac(&|c| c.y_ode, tol.rtol * y0),
        stochastic_inside_fraction: frac(&|c| c.y_stochastic, slack),
        stochastic_strict_fraction: frac(&|c| c.y_stochastic, 0.0),
        samples,
        sup_distance: sup,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceAtK {
    #[serde(rename = "K")]
    pub k: u64,
    pub init: PopCount,
    pub distances: Vec<f64>,
    pub median: f64,
    pub q90: f64,
    pub fraction_below: f64,
}

/// Sup-norm distance between stochastic density paths and the ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargePopulationReport {
    pub params: ModelParams,
    pub base_seed: u64,
    pub mutant_density: f64,
    pub horizon: f64,
    pub threshold: f64,
    pub per_k: Vec<DistanceAtK>,
    /// Median and 90% quantile both strictly decrease along `per_k`.
    pub decreasing: bool,
}

/// Starts every replica from `(n̄_a − δ0, δ0, 0)` rounded to counts and the ODE
/// from the same rounded densities, then records `sup_t |n(t) − φ(t)|_∞` over
/// `[0, horizon]`. The sup is taken at event times, on both sides of each jump.
pub fn large_population_distance(
    p: &ModelParams,
    ks: &[u64],
    replicas: u64,
    base_seed: u64,
    mutant_density: f64,
    horizon: f64,
    threshold: f64,
) -> Result<LargePopulationReport> {
    if replicas < 1 || !(horizon > 0.0) {
        return Err(Error::InvalidParams("need replicas >= 1 and horizon > 0".into()));
    }
    let mut per_k = Vec::with_capacity(ks.len());
    for &k in ks {
        let pk = ModelParams { k, ..*p }.validate()?;
        if !(mutant_density > 0.0 && mutant_density < pk.nbar_a()) {
            return Err(Error::InvalidParams("mutant density must lie in (0, nbar_a)".into()));
        }
        let kf = pk.k_f64();
        let init = PopCount::new(
            ((pk.nbar_a() - mutant_density) * kf).round() as u64,
            (mutant_density * kf).round() as u64,
            0,
        );
        let ode = integrate_field(
            &VectorField::new(pk),
            init.density(k),
            0.0,
            horizon,
            Tolerance::default(),
            |_, _| false,
        )?;
        let seed = base_seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let distances: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| sup_distance(&pk, init, &ode, horizon, seed, r))
            .collect();
        let below = distances.iter().filter(|&&d| d < threshold).count();
        per_k.push(DistanceAtK {
            k,
            init,
            median: median(&distances).unwrap_or(f64::NAN),
            q90: quantile(&distances, 0.9).unwrap_or(f64::NAN),
            fraction_below: below as f64 / replicas as f64,
            distances,
        });
    }
    let decreasing = per_k
        .windows(2)
        .all(|w| w[1].median < w[0].median && w[1].q90 < w[0].q90);
    Ok(LargePopulationReport {
        params: *p,
        base_seed,
        mutant_density,
        horizon,
        threshold,
        per_k,
        decreasing,
    })
}

fn sup_distance(p: &ModelParams, init: PopCount, ode: &OdeTrajectory, horizon: f64, seed: u64, replica: u64) -> f64 {
    let k = p.k;
    let mut sim = Simulator::new(*p, init, replica_rng(seed, replica));
    let mut sup = init.density(k).max_abs_diff(&ode.init);
    let mut before = init;
    while let Some(e) = sim.advance_until(horizon) {
        let det = ode.at(e.time);
        let after = sim.state();
        sup = sup
            .max(before.density(k).max_abs_diff(&det))
            .max(after.density(k).max_abs_diff(&det));
        before = after;
    }
    sup.max(before.density(k).max_abs_diff(&ode.at(horizon)))
}
