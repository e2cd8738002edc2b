//! Flat `key = value` run configuration.
//!
//! ```text
//! # resident aa, one aA mutant
//! f = 4
//! D = 1
//! delta = 0.3
//! c = 1
//! K = 1000
//! mu = 0
//! eps = 0.05
//! ```
//!
//! Blank lines and `#` comments are ignored. Command-line flags override file
//! values. The six model keys are required; analysis keys fall back to their
//! defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnalysisParams, ModelParams, PopCount};

pub const MODEL_KEYS: [&str; 6] = ["f", "D", "delta", "c", "K", "mu"];
pub const ANALYSIS_KEYS: [&str; 5] = ["eps", "theta", "alpha", "delta_fix", "rho"];
pub const RUN_KEYS: [&str; 8] = [
    "seed", "replicas", "t_max", "record", "dt", "init_aa", "init_aA", "init_AA",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Events,
    Sampled,
    Stops,
}

impl FromStr for RecordKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "events" => Ok(Self::Events),
            "sampled" => Ok(Self::Sampled),
            "stops" => Ok(Self::Stops),
            other => Err(Error::Config(format!(
                "record must be events, sampled or stops, got {other}"
            ))),
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Events => "events",
            Self::Sampled => "sampled",
            Self::Stops => "stops",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Simulate,
    Ode,
    Fixation,
    Survival,
    Decay,
    Ladder,
    Chain,
    Window,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Ode => "ode",
            Self::Fixation => "fixation",
            Self::Survival => "survival",
            Self::Decay => "decay",
            Self::Ladder => "ladder",
            Self::Chain => "chain",
            Self::Window => "window",
        }
    }
}

/// Values given on the command line. `None` leaves the file value in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub f: Option<f64>,
    pub d: Option<f64>,
    pub delta: Option<f64>,
    pub c: Option<f64>,
    pub k: Option<u64>,
    pub mu: Option<f64>,
    pub eps: Option<f64>,
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub delta_fix: Option<f64>,
    pub rho: Option<f64>,
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub t_max: Option<f64>,
    pub record: Option<RecordKind>,
    pub dt: Option<f64>,
}

/// Everything a subcommand needs, validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub model: ModelParams,
    pub analysis: AnalysisParams,
    pub seed: u64,
    pub replicas: Option<u64>,
    pub t_max: Option<f64>,
    pub record: RecordKind,
    /// Sampling interval for `record = sampled`.
    pub dt: f64,
    pub init: Option<PopCount>,
    pub out: PathBuf,
}

impl RunConfig {
    /// The configuration as `key = value` lines, suitable for a file header.
    pub fn to_lines(&self) -> Vec<String> {
        let m = &self.model;
        let a = &self.analysis;
        let mut v = vec![
            format!("experiment = {}", self.experiment.name()),
            format!("f = {}", m.f),
            format!("D = {}", m.d),
            format!("delta = {}", m.delta),
            format!("c = {}", m.c),
            format!("K = {}", m.k),
            format!("mu = {}", m.mu),
            format!("eps = {}", a.eps),
            format!("theta = {}", a.theta),
            format!("alpha = {}", a.alpha),
            format!("delta_fix = {}", a.delta_fix),
            format!("rho = {}", a.rho),
            format!("seed = {}", self.seed),
            format!("record = {}", self.record),
            format!("dt = {}", self.dt),
        ];
        if let Some(r) = self.replicas {
            v.push(format!("replicas = {r}"));
        }
        if let Some(t) = self.t_max {
            v.push(format!("t_max = {t}"));
        }
        if let Some(n) = self.init {
            v.push(format!("init_aa = {}", n.aa));
            v.push(format!("init_aA = {}", n.a_a));
            v.push(format!("init_AA = {}", n.big_aa));
        }
        v
    }
}

/// Parses `key = value` lines, rejecting unknown and repeated keys.
pub fn parse_str(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !is_known(key) {
            return Err(Error::Config(format!("unknown key: {key}")));
        }
        if value.is_empty() {
            return Err(Error::Config(format!("empty value for key: {key}")));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Config(format!("duplicate key: {key}")));
        }
    }
    Ok(out)
}

pub fn parse_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_str(&text)
}

fn is_known(key: &str) -> bool {
    MODEL_KEYS.contains(&key) || ANALYSIS_KEYS.contains(&key) || RUN_KEYS.contains(&key)
}

fn value<T: FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    file.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Config(format!("cannot parse {key} = {v}")))
        })
        .transpose()
}

fn required<T: FromStr>(file: &BTreeMap<String, String>, key: &str, flag: Option<T>) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => value(file, key)?.ok_or_else(|| Error::Config(format!("missing required key: {key}"))),
    }
}

fn optional<T: FromStr>(file: &BTreeMap<String, String>, key: &str, flag: Option<T>) -> Result<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => value(file, key),
    }
}

/// Merges file values and flags, then validates.
pub fn resolve(
    experiment: Experiment,
    file: &BTreeMap<String, String>,
    flags: &Overrides,
    out: PathBuf,
) -> Result<RunConfig> {
    let model = ModelParams {
        f: required(file, "f", flags.f)?,
        d: required(file, "D", flags.d)?,
        delta: required(file, "delta", flags.delta)?,
        c: required(file, "c", flags.c)?,
        k: required(file, "K", flags.k)?,
        mu: required(file, "mu", flags.mu)?,
    }
    .validate()?;
    let def = AnalysisParams::default();
    let analysis = AnalysisParams {
        eps: optional(file, "eps", flags.eps)?.unwrap_or(def.eps),
        theta: optional(file, "theta", flags.theta)?.unwrap_or(def.theta),
        alpha: optional(file, "alpha", flags.alpha)?.unwrap_or(def.alpha),
        delta_fix: optional(file, "delta_fix", flags.delta_fix)?.unwrap_or(def.delta_fix),
        rho: optional(file, "rho", flags.rho)?.unwrap_or(def.rho),
    }
    .validate(&model)?;

    let init = match (
        value::<u64>(file, "init_aa")?,
        value::<u64>(file, "init_aA")?,
        value::<u64>(file, "init_AA")?,
    ) {
        (None, None, None) => None,
        (Some(aa), Some(a_a), Some(big)) => Some(PopCount::new(aa, a_a, big)),
        _ => {
            return Err(Error::Config(
                "init_aa, init_aA and init_AA must be given together".into(),
            ))
        }
    };
    let replicas = optional(file, "replicas", flags.replicas)?;
    if replicas == Some(0) {
        return Err(Error::Config("replicas must be >= 1".into()));
    }
    let t_max = optional(file, "t_max", flags.t_max)?;
    if let Some(t) = t_max {
        if !(t > 0.0) {
            return Err(Error::Config("t_max must be > 0".into()));
        }
    }
    let dt = optional(file, "dt", flags.dt)?.unwrap_or(1.0);
    if !(dt > 0.0) {
        return Err(Error::Config("dt must be > 0".into()));
    }
    Ok(RunConfig {
        experiment,
        model,
        analysis,
        seed: optional(file, "seed", flags.seed)?.unwrap_or(0),
        replicas,
        t_max,
        record: optional(file, "record", flags.record)?.unwrap_or(RecordKind::Events),
        dt,
        init,
        out,
    })
}

/// Reads `path` if given and applies `flags` on top.
pub fn parse_config(
    experiment: Experiment,
    path: Option<&Path>,
    flags: &Overrides,
    out: PathBuf,
) -> Result<RunConfig> {
    let file = match path {
        Some(p) => parse_file(p)?,
        None => BTreeMap::new(),
    };
    resolve(experiment, &file, flags, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "f = 4\nD = 1\ndelta = 0.3\nc = 1\nK = 1000\nmu = 0\n";

    fn run(text: &str, flags: &Overrides) -> Result<RunConfig> {
        resolve(Experiment::Simulate, &parse_str(text)?, flags, PathBuf::from("out"))
    }

    #[test]
    fn minimal_file_gets_analysis_defaults() {
        let cfg = run(MINIMAL, &Overrides::default()).unwrap();
        assert_eq!(cfg.model, ModelParams::default());
        assert_eq!(cfg.analysis, AnalysisParams::default());
        assert_eq!(cfg.record, RecordKind::Events);
    }

    #[test]
    fn flags_override_file() {
        let flags = Overrides { k: Some(5000), ..Overrides::default() };
        assert_eq!(run(MINIMAL, &flags).unwrap().model.k, 5000);
    }

    #[test]
    fn unknown_and_missing_keys() {
        let err = run(&format!("{MINIMAL}fertility = 4\n"), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("unknown key: fertility"));
        let err = run("f = 4\nD = 1\ndelta = 0.3\nc = 1\nmu = 0\n", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("missing required key: K"));
    }

    #[test]
    fn validation_errors_pass_through() {
        let err = run(&MINIMAL.replace("D = 1", "D = 4"), &Overrides::default()).unwrap_err();
        assert_eq!(err.to_string(), "invalid parameters: f-D must be > 0");
    }

    #[test]
    fn comments_and_init() {
        let text = format!("# header\n{MINIMAL}init_aa = 10 # trailing\ninit_aA = 1\ninit_AA = 0\n");
        let cfg = run(&text, &Overrides::default()).unwrap();
        assert_eq!(cfg.init, Some(PopCount::new(10, 1, 0)));
        let bad = format!("{MINIMAL}init_aa = 10\n");
        assert!(run(&bad, &Overrides::default()).is_err());
    }

    #[test]
    fn header_lines_reparse() {
        let cfg = run(MINIMAL, &Overrides { seed: Some(9), ..Overrides::default() }).unwrap();
        let body: String = cfg
            .to_lines()
            .into_iter()
            .filter(|l| !l.starts_with("experiment"))
            .map(|l| l + "\n")
            .collect();
        let again = run(&body, &Overrides::default()).unwrap();
        assert_eq!(again, cfg);
    }
}
