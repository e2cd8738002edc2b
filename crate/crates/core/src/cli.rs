//! Command-line front end.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::chains::{hitting_table, ChainSpec};
use crate::config::{parse_config, Experiment, Overrides, RecordKind, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    algebraic_decay, decay_comparison, estimate_fixation_from, ladder, ladder_floor, mutation_window,
    resident_with_mutant, survival_scaling_from, DecayOptions,
};
use crate::model::PopDensity;
use crate::ode::{center_manifold, fixed_points, integrate_field, Tolerance, VectorField};
use crate::ssa::{simulate, RecordMode, StopSpec};

#[derive(Debug, Parser)]
#[command(name = "diploid-sim", version, about = "Dominant-allele invasion in a diploid birth-death population")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One exact trajectory: CSV path plus JSON stopping record.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Until::Fixation)]
        until: Until,
    },
    /// Deterministic trajectory, fixed points and center manifold.
    Ode {
        #[command(flatten)]
        common: Common,
        /// Initial `aA` density; the rest starts as `aa`.
        #[arg(long, default_value_t = 0.1)]
        mutant_density: f64,
        #[arg(long, default_value_t = 200.0)]
        t_end: f64,
        /// Co-dominant contrast variant.
        #[arg(long)]
        codominant: bool,
    },
    /// Fixation probability of a single `aA` mutant.
    Fixation {
        #[command(flatten)]
        common: Common,
    },
    /// Heterozygote survival time across carrying capacities.
    Survival {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
        ks: Vec<u64>,
    },
    /// Heterozygote decay against the `1/t` bracket.
    Decay {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500.0)]
        horizon: f64,
        #[arg(long, default_value_t = 10.0)]
        margin: f64,
    },
    /// Stopping-time ladder and predicted decay times.
    Ladder {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        c_lower: f64,
        #[arg(long, default_value_t = 1.0)]
        c_upper: f64,
    },
    /// Hitting probabilities of a birth-death chain as CSV.
    Chain(ChainArgs),
    /// Where `1/(Kμ)` sits inside the mutation window.
    Window {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = crate::experiments::DEFAULT_RATIO_THRESHOLD)]
        threshold: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Until {
    /// `τ_δ^mut` or `τ_0^mut`.
    Fixation,
    /// Through fixation until `n_aA` falls below `ε` and `K^{-1/4+α}`.
    Hit,
    /// First mutation birth.
    Mutation,
    /// Only `--t-max`.
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecordArg {
    Events,
    Sampled,
    Stops,
}

impl From<RecordArg> for RecordKind {
    fn from(r: RecordArg) -> Self {
        match r {
            RecordArg::Events => RecordKind::Events,
            RecordArg::Sampled => RecordKind::Sampled,
            RecordArg::Stops => RecordKind::Stops,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long = "D")]
    pub d: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long = "K")]
    pub k: Option<u64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta_fix: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long, value_enum)]
    pub record: Option<RecordArg>,
    /// Sampling interval for `--record sampled`.
    #[arg(long)]
    pub dt: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            f: self.f,
            d: self.d,
            delta: self.delta,
            c: self.c,
            k: self.k,
            mu: self.mu,
            eps: self.eps,
            theta: self.theta,
            alpha: self.alpha,
            delta_fix: self.delta_fix,
            rho: self.rho,
            seed: self.seed,
            replicas: self.replicas,
            t_max: self.t_max,
            record: self.record.map(Into::into),
            dt: self.dt,
        }
    }

    fn resolve(&self, e: Experiment) -> Result<RunConfig> {
        parse_config(e, self.config.as_deref(), &self.overrides(), self.out.clone())
    }
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 0)]
    pub lo: i64,
    #[arg(long)]
    pub hi: i64,
    /// Constant up-step probability.
    #[arg(long, conflicts_with = "drift")]
    pub p: Option<f64>,
    /// Drifted chain `p(k) = 1/2 - C0 k / K`.
    #[arg(long)]
    pub drift: Option<f64>,
    #[arg(long = "K", default_value_t = 1000)]
    pub k: u64,
    /// Reflect at `lo` instead of absorbing.
    #[arg(long)]
    pub reflect: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Output<'a, T: Serialize> {
    config: &'a RunConfig,
    report: &'a T,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(cfg: &RunConfig, name: &str, report: &T) -> Result<PathBuf> {
    let mut w = create(&cfg.out, name)?;
    serde_json::to_writer_pretty(&mut w, &Output { config: cfg, report })?;
    writeln!(w)?;
    w.flush()?;
    Ok(cfg.out.join(name))
}

fn header<W: Write>(w: &mut W, cfg: &RunConfig) -> Result<()> {
    for line in cfg.to_lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

fn record_mode(cfg: &RunConfig) -> RecordMode {
    match cfg.record {
        RecordKind::Events => RecordMode::Events,
        RecordKind::Sampled => RecordMode::Sampled { dt: cfg.dt },
        RecordKind::Stops => RecordMode::StopsOnly,
    }
}

fn replicas(cfg: &RunConfig, default: u64) -> u64 {
    cfg.replicas.unwrap_or(default)
}

/// Runs a parsed command and returns the files written.
pub fn dispatch(cmd: &Command) -> Result<Vec<PathBuf>> {
    match cmd {
        Command::Simulate { common, until } => {
            let cfg = common.resolve(Experiment::Simulate)?;
            let (p, a) = (cfg.model, cfg.analysis);
            let mut stop = match until {
                Until::Fixation => StopSpec::fixation(a.delta_fix),
                Until::Hit => StopSpec {
                    track_recessive_loss: true,
                    ..StopSpec::survival(a.delta_fix, vec![a.eps, ladder_floor(p.k, a.alpha)])
                },
                Until::Mutation => StopSpec { stop_at_mutation: true, ..StopSpec::default() },
                Until::Time => {
                    if cfg.t_max.is_none() {
                        return Err(Error::Config("--until time needs --t-max".into()));
                    }
                    StopSpec::default()
                }
            };
            stop.t_max = cfg.t_max;
            let init = cfg.init.unwrap_or_else(|| resident_with_mutant(&p));
            let (traj, rec) = simulate(&p, init, &stop, cfg.seed, 0, record_mode(&cfg))?;
            let mut w = create(&cfg.out, "trajectory.csv")?;
            header(&mut w, &cfg)?;
            traj.write_csv(&mut w)?;
            w.flush()?;
            let json = write_json(&cfg, "record.json", &rec)?;
            Ok(vec![cfg.out.join("trajectory.csv"), json])
        }
        Command::Ode { common, mutant_density, t_end, codominant } => {
            let cfg = common.resolve(Experiment::Ode)?;
            let p = cfg.model;
            let init = match cfg.init {
                Some(n) => n.density(p.k),
                None => {
                    if !(*mutant_density >= 0.0 && *mutant_density <= p.nbar_a()) {
                        return Err(Error::Config("mutant density must lie in [0, nbar_a]".into()));
                    }
                    PopDensity::new(p.nbar_a() - mutant_density, *mutant_density, 0.0)
                }
            };
            let field = if *codominant { VectorField::codominant(p) } else { VectorField::new(p) };
            let traj = integrate_field(&field, init, 0.0, *t_end, Tolerance::default(), |_, _| false)?;
            let mut w = create(&cfg.out, "ode.csv")?;
            header(&mut w, &cfg)?;
            traj.write_csv(&mut w, Some(cfg.dt.min(*t_end)))?;
            w.flush()?;

            #[derive(Serialize)]
            struct OdeReport {
                init: PopDensity,
                t_end: f64,
                codominant: bool,
                final_state: PopDensity,
                fixed_points: (crate::ode::FixedPointReport, crate::ode::FixedPointReport),
                center_manifold: crate::ode::CenterManifoldModel,
            }
            let report = OdeReport {
                init,
                t_end: *t_end,
                codominant: *codominant,
                final_state: traj.final_state(),
                fixed_points: fixed_points(&p)?,
                center_manifold: center_manifold(&p)?,
            };
            let json = write_json(&cfg, "ode.json", &report)?;
            Ok(vec![cfg.out.join("ode.csv"), json])
        }
        Command::Fixation { common } => {
            let cfg = common.resolve(Experiment::Fixation)?;
            let init = cfg.init.unwrap_or_else(|| resident_with_mutant(&cfg.model));
            let est = estimate_fixation_from(&cfg.model, &cfg.analysis, init, replicas(&cfg, 1000), cfg.seed)?;
            Ok(vec![write_json(&cfg, "fixation.json", &est)?])
        }
        Command::Survival { common, ks } => {
            let cfg = common.resolve(Experiment::Survival)?;
            let fixed_init = cfg.init;
            let r = survival_scaling_from(&cfg.model, &cfg.analysis, ks, replicas(&cfg, 50), cfg.seed, |p| {
                fixed_init.unwrap_or_else(|| resident_with_mutant(p))
            })?;
            Ok(vec![write_json(&cfg, "survival.json", &r)?])
        }
        Command::Decay { common, horizon, margin } => {
            let cfg = common.resolve(Experiment::Decay)?;
            let opts = DecayOptions { dt: cfg.dt, horizon: *horizon, margin: *margin };
            let cmp = decay_comparison(&cfg.model, &cfg.analysis, cfg.model.k, cfg.seed, opts)?;
            let curve = algebraic_decay(&cfg.model, cfg.analysis.eps, cfg.model.f * cfg.model.delta / 2.0)?;
            let mut w = create(&cfg.out, "decay.csv")?;
            header(&mut w, &cfg)?;
            writeln!(w, "t,y_ode,y_ssa,lower,upper")?;
            for s in &cmp.samples {
                match s.bounds {
                    Some((lo, hi)) => writeln!(w, "{},{},{},{},{}", s.t, s.y_ode, s.y_stochastic, lo, hi)?,
                    None => writeln!(w, "{},{},{},,", s.t, s.y_ode, s.y_stochastic)?,
                }
            }
            w.flush()?;
            let a = write_json(&cfg, "decay.json", &cmp)?;
            let b = write_json(&cfg, "algebraic_decay.json", &curve)?;
            Ok(vec![cfg.out.join("decay.csv"), a, b])
        }
        Command::Ladder { common, c_lower, c_upper } => {
            let cfg = common.resolve(Experiment::Ladder)?;
            let s = ladder(&cfg.model, &cfg.analysis, cfg.model.k, *c_lower, *c_upper)?;
            Ok(vec![write_json(&cfg, "ladder.json", &s)?])
        }
        Command::Chain(args) => run_chain(args),
        Command::Window { common, threshold } => {
            let cfg = common.resolve(Experiment::Window)?;
            let r = mutation_window(&cfg.model, &cfg.analysis, cfg.model.k, cfg.model.mu, *threshold)?;
            Ok(vec![write_json(&cfg, "window.json", &r)?])
        }
    }
}

fn run_chain(args: &ChainArgs) -> Result<Vec<PathBuf>> {
    if args.hi <= args.lo {
        return Err(Error::InvalidChain("need hi > lo".into()));
    }
    let spec = match (args.p, args.drift) {
        (Some(p), None) => ChainSpec::from_fn(args.lo, args.hi, |_| p)?,
        (None, Some(c0)) => {
            let k = args.k as f64;
            ChainSpec::from_fn(args.lo, args.hi, |z| 0.5 - c0 * z as f64 / k)?
        }
        (None, None) => ChainSpec::symmetric(args.lo, args.hi),
        (Some(_), Some(_)) => return Err(Error::Config("--p and --drift are exclusive".into())),
    };
    let spec = if args.reflect { spec.reflecting() } else { spec };
    let mut w = create(&args.out, "chain.csv")?;
    writeln!(w, "# lo = {}", args.lo)?;
    writeln!(w, "# hi = {}", args.hi)?;
    match (args.p, args.drift) {
        (Some(p), _) => writeln!(w, "# p = {p}")?,
        (_, Some(c0)) => writeln!(w, "# drift = {c0}\n# K = {}", args.k)?,
        _ => writeln!(w, "# p = 0.5")?,
    }
    writeln!(w, "# reflect = {}", args.reflect)?;
    writeln!(w, "z,h")?;
    for (z, h) in hitting_table(&spec) {
        writeln!(w, "{z},{h}")?;
    }
    w.flush()?;
    Ok(vec![args.out.join("chain.csv")])
}

/// Parses `args`, runs the command and reports written files on stdout.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
