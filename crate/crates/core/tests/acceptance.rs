//! Acceptance suite. Each test prints one `PASS` or `FAIL` line and then
//! asserts on the same condition.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use diploid_sim::chains::{
    branching_survival, extinction_cdf, extinction_monte_carlo, hitting_oracle, hitting_probability,
    BranchingParams, ChainSpec,
};
use diploid_sim::experiments::{
    algebraic_decay, estimate_fixation, large_population_distance, mutation_window, survival_scaling,
    SurvivalScalingReport, DEFAULT_RATIO_THRESHOLD,
};
use diploid_sim::model::{birth_rates, AnalysisParams, ModelParams, PopCount};
use diploid_sim::ode::{closed_form_eigenvalues, fixed_points, jacobian_at_aa, jacobian_at_big_aa, jacobian_numeric};
use diploid_sim::ssa::{replica_rng, simulate, RecordMode, Simulator, StopSpec};
use diploid_sim::PopDensity;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn defaults(k: u64) -> ModelParams {
    ModelParams { k, ..ModelParams::default() }
}

#[test]
fn criterion_1_fixation_probability() {
    let p = defaults(2000);
    let a = AnalysisParams::default();
    let est = estimate_fixation(&p, &a, 10_000, 20_240_101).unwrap();
    assert_eq!(est.init, PopCount::new(5400, 1, 0));
    let err = (est.estimate - 0.075).abs();
    let pass = err <= 0.02;
    report(
        1,
        "fixation probability",
        pass,
        format!("estimate {:.4} +- {:.4} over {} replicas, target 0.075", est.estimate, est.std_error, est.replicas),
    );
    assert!(pass);
}

#[test]
fn criterion_2_fixed_point_analysis() {
    let p = ModelParams::default();
    let (aa, big) = fixed_points(&p).unwrap();
    let (want_aa, want_big) = closed_form_eigenvalues(&p);
    let (f, d, del) = (p.f, p.d, p.delta);
    let mut listed_aa = [-(f - d - del), del, -(f - del)];
    let mut listed_big = [-f - del, 0.0, -(f - d)];
    listed_aa.sort_by(f64::total_cmp);
    listed_big.sort_by(f64::total_cmp);
    let mut eig_err: f64 = 0.0;
    for i in 0..3 {
        eig_err = eig_err
            .max((aa.eigenvalues[i] - listed_aa[i]).abs())
            .max((big.eigenvalues[i] - listed_big[i]).abs())
            .max((want_aa[i] - listed_aa[i]).abs())
            .max((want_big[i] - listed_big[i]).abs());
    }
    let num_aa = jacobian_numeric(&PopDensity::new(p.nbar_a(), 0.0, 0.0), &p, 1e-6);
    let num_big = jacobian_numeric(&PopDensity::new(0.0, 0.0, p.nbar_big_a()), &p, 1e-6);
    let (ca, cb) = (jacobian_at_aa(&p), jacobian_at_big_aa(&p));
    let mut jac_err: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            jac_err = jac_err.max((num_aa[i][j] - ca[i][j]).abs()).max((num_big[i][j] - cb[i][j]).abs());
        }
    }
    let pass = eig_err <= 1e-8 && jac_err <= 1e-6;
    report(
        2,
        "fixed-point analysis",
        pass,
        format!("max eigenvalue error {eig_err:.2e}, max Jacobian entry error {jac_err:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_algebraic_decay() {
    let p = ModelParams::default();
    let c = algebraic_decay(&p, 0.05, p.f * p.delta / 2.0).unwrap();
    let slope = c.tail_loglog.map(|f| f.slope).unwrap_or(f64::NAN);
    let codom_r2 = c.codominant_semilog.map(|f| f.r_squared).unwrap_or(f64::NAN);
    let dom_r2 = c.tail_semilog.map(|f| f.r_squared).unwrap_or(f64::NAN);
    let pass = c.inside_fraction == 1.0 && (slope + 1.0).abs() <= 0.05;
    report(
        3,
        "algebraic decay",
        pass,
        format!(
            "{} samples after restart at t={:.3}, inside fraction {}, tail log-log slope {slope:.4}; \
             semilog R^2 dominant {dom_r2:.4} vs co-dominant {codom_r2:.6}",
            c.samples.len(),
            c.t_restart,
            c.inside_fraction
        ),
    );
    assert!(pass);
    assert!(codom_r2 >= 0.99, "co-dominant tail is not exponential");
}

#[test]
fn criterion_4_large_population_limit() {
    let p = ModelParams::default();
    let r = large_population_distance(&p, &[1000, 10_000], 100, 4_004, 0.1, 20.0, 0.05).unwrap();
    let big = &r.per_k[1];
    let pass = r.decreasing && big.fraction_below >= 0.9;
    let rows: Vec<String> = r
        .per_k
        .iter()
        .map(|d| format!("K={} median {:.4} q90 {:.4} below 0.05: {:.2}", d.k, d.median, d.q90, d.fraction_below))
        .collect();
    report(4, "large-population approximation", pass, rows.join("; "));
    assert!(pass);
}

fn scaling() -> &'static SurvivalScalingReport {
    static REPORT: OnceLock<SurvivalScalingReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        survival_scaling(
            &ModelParams::default(),
            &AnalysisParams::default(),
            &[1_000, 10_000, 100_000],
            50,
            5_005,
        )
        .unwrap()
    })
}

#[test]
fn criterion_5_survival_time_scaling() {
    let r = scaling();
    let medians: Vec<Option<f64>> = r.per_k.iter().map(|s| s.median_tau_sur).collect();
    let increasing = medians
        .windows(2)
        .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b > a));
    let enough = r.per_k.iter().all(|s| s.conditioned >= 50);
    let slope = r.sur_slope.map(|f| f.slope);
    let pass = enough && increasing && slope.is_some_and(|s| (0.1..=0.4).contains(&s));
    let rows: Vec<String> = r
        .per_k
        .iter()
        .map(|s| {
            format!(
                "K={} n={} floor {:.4} median tau_sur {:?} flagged {:.2}",
                s.k, s.conditioned, s.lower_level, s.median_tau_sur, s.flagged_fraction
            )
        })
        .collect();
    report(
        5,
        "survival-time scaling",
        pass,
        format!("{}; slope {:?}; notes {:?}", rows.join("; "), slope, r.notes),
    );
    assert!(pass);
}

#[test]
fn criterion_6_invasion_time() {
    let r = scaling();
    let fit = r.eps_hit_fit;
    let pass = fit.is_some_and(|f| f.slope > 0.0 && f.r_squared >= 0.9);
    let meds: Vec<String> = r
        .per_k
        .iter()
        .map(|s| format!("K={} median tau_eps_hit {:.2}", s.k, s.median_tau_eps_hit.unwrap_or(f64::NAN)))
        .collect();
    report(
        6,
        "invasion time",
        pass,
        format!(
            "{}; slope on ln K {:.3}, R^2 {:.4}",
            meds.join("; "),
            fit.map_or(f64::NAN, |f| f.slope),
            fit.map_or(f64::NAN, |f| f.r_squared)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_chain_analytics() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut oracle_err: f64 = 0.0;
    for _ in 0..100 {
        let lo = rng.random_range(-100i64..100);
        let hi = lo + rng.random_range(2i64..=200);
        let ps: Vec<f64> = (lo + 1..hi).map(|_| rng.random_range(0.05..0.95)).collect();
        let spec = ChainSpec::from_fn(lo, hi, |k| ps[(k - lo - 1) as usize]).unwrap();
        for z in lo..=hi {
            let d = (hitting_probability(&spec, z).unwrap() - hitting_oracle(&spec, z).unwrap()).abs();
            oracle_err = oracle_err.max(d);
        }
    }
    let sym = ChainSpec::symmetric(0, 150);
    let sym_err = (0..=150)
        .map(|z| (hitting_probability(&sym, z).unwrap() - z as f64 / 150.0).abs())
        .fold(0.0, f64::max);

    let bp = BranchingParams { b: 4.0, d: 1.0, n0: 1 };
    let cdf = extinction_cdf(&bp, 1.0).unwrap();
    let direct = (1.0 - (-3.0f64).exp()) / (4.0 - (-3.0f64).exp());
    let mc = extinction_monte_carlo(&bp, 1.0, 50_000, 7_007).unwrap();
    let limit = extinction_cdf(&bp, 1e3).unwrap();
    let pass = oracle_err <= 1e-10
        && sym_err <= 1e-12
        && (cdf - direct).abs() <= 1e-12
        && (cdf - 0.240545).abs() <= 5e-6
        && mc.covers(cdf, 3.0)
        && (limit - 0.25).abs() <= 1e-12
        && (limit - (1.0 - branching_survival(&bp))).abs() <= 1e-12;
    report(
        7,
        "chain analytics",
        pass,
        format!(
            "oracle error {oracle_err:.2e}, symmetric error {sym_err:.2e}, cdf(1) {cdf:.6}, \
             Monte Carlo {:.5} +- {:.5}, limit {limit}",
            mc.estimate, mc.std_error
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_structural_invariants() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000_000 {
        let n = PopCount::new(rng.random_range(0..5000), rng.random_range(0..5000), rng.random_range(0..5000));
        let (baa, ba_a, bbig) = birth_rates(&n, &p);
        let total = n.total() as f64;
        let scale = (p.f * total).max(1.0);
        worst = worst.max((baa + ba_a + bbig - p.f * total).abs() / scale);
        if total > 0.0 {
            let u = n.aa as f64 + n.a_a as f64 / 2.0;
            let v = n.big_aa as f64 + n.a_a as f64 / 2.0;
            let (qa, qb) = (u / total, v / total);
            let fb = p.f * total;
            worst = worst
                .max((baa - fb * qa * qa).abs() / scale)
                .max((ba_a - 2.0 * fb * qa * qb).abs() / scale)
                .max((bbig - fb * qb * qb).abs() / scale);
        }
    }

    let k = defaults(500);
    let stop = StopSpec::fixation(0.1).with_t_max(50.0);
    let init = PopCount::new(1350, 1, 0);
    let same = (0..20).all(|r| {
        let a = simulate(&k, init, &stop, 42, r, RecordMode::StopsOnly).unwrap().1.to_json().unwrap();
        let b = simulate(&k, init, &stop, 42, r, RecordMode::StopsOnly).unwrap().1.to_json().unwrap();
        a == b
    });

    let mut foreign = 0u64;
    for (i, start) in [PopCount::new(1350, 0, 0), PopCount::new(0, 0, 1500)].into_iter().enumerate() {
        let mut sim = Simulator::new(k, start, replica_rng(99, i as u64));
        for _ in 0..1_000_000 {
            if sim.advance().is_none() {
                break;
            }
            let n = sim.state();
            let bad = if start.aa > 0 { n.a_a + n.big_aa } else { n.aa + n.a_a };
            foreign += bad;
        }
    }
    let pass = worst <= 1e-12 && same && foreign == 0;
    report(
        8,
        "structural invariants",
        pass,
        format!("birth identities max relative error {worst:.2e}, deterministic records {same}, foreign genotypes {foreign}"),
    );
    assert!(pass);
}

#[test]
fn criterion_9_mutation_window() {
    let p = ModelParams::default();
    let a = AnalysisParams::default();
    let k = 1_000_000u64;
    let kf = k as f64;
    let inside = mutation_window(&p, &a, k, kf.powf(-9.0 / 8.0), DEFAULT_RATIO_THRESHOLD).unwrap();
    let left = mutation_window(&p, &a, k, 1.0 / (kf * kf.ln()), DEFAULT_RATIO_THRESHOLD).unwrap();
    let pass = inside.pass && !left.left_ok;
    report(
        9,
        "mutation window",
        pass,
        format!(
            "mu=K^-9/8: r1 {:.4} r2 {:.4}; mu=1/(K ln K): r1 {:.4} left violated {}",
            inside.r1.unwrap(),
            inside.r2.unwrap(),
            left.r1.unwrap(),
            !left.left_ok
        ),
    );
    assert!(pass);
}
