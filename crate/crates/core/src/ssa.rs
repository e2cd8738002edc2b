//! Exact event-by-event simulation of the three-genotype birth-death process.
//!
//! Each step draws an exponential waiting time from the total propensity and
//! selects one of six events (births `aa, aA, AA`, deaths `aa, aA, AA`, in that
//! fixed order) with a single uniform draw against the cumulative rates. When
//! `μ > 0` a birth is flagged as a mutation with probability `μ`; the newborn
//! carries a new allele, is not added to any of the three counts, and only the
//! first such time `τ_1` is recorded.
//!
//! Stopping conditions are checked on integer counts after every event:
//!
//! - `τ_δ^mut`: `2 N_AA + N_aA ≥ δK`
//! - `τ_0^mut`: `2 N_AA + N_aA = 0`
//! - `τ_η^hit`: `N_aA ≤ floor(ηK)`, armed once `τ_δ^mut` has fired
//! - `τ_1`: first mutation birth
//! - extinction and a hard time cap

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::de::Deserializer;
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{birth_rates, death_rates, Genotype, ModelParams, PopCount};

/// Random stream owned by one replica.
pub type SimRng = ChaCha8Rng;

/// Independent stream for replica `replica` of an experiment seeded with
/// `base_seed`. Replicas share the key and differ in the ChaCha stream id.
pub fn replica_rng(base_seed: u64, replica: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replica);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Birth(Genotype),
    Death(Genotype),
    MutationBirth,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Birth(g) => write!(f, "Birth{g}"),
            EventKind::Death(g) => write!(f, "Death{g}"),
            EventKind::MutationBirth => f.write_str("MutationBirth"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
}

const EVENT_ORDER: [EventKind; 6] = [
    EventKind::Birth(Genotype::Recessive),
    EventKind::Birth(Genotype::Heterozygote),
    EventKind::Birth(Genotype::Dominant),
    EventKind::Death(Genotype::Recessive),
    EventKind::Death(Genotype::Heterozygote),
    EventKind::Death(Genotype::Dominant),
];

/// Propensities in the fixed selection order.
#[inline]
pub fn event_weights(n: &PopCount, p: &ModelParams) -> [f64; 6] {
    let (b0, b1, b2) = birth_rates(n, p);
    let (d0, d1, d2) = death_rates(n, p);
    [b0, b1, b2, d0, d1, d2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub wait: f64,
    pub kind: EventKind,
    pub next: PopCount,
}

/// One exact Gillespie step from `state`.
pub fn step<R: Rng + ?Sized>(state: &PopCount, p: &ModelParams, rng: &mut R) -> Result<StepOutcome> {
    if state.is_extinct() {
        return Err(Error::Extinct);
    }
    let w = event_weights(state, p);
    let total: f64 = w.iter().sum();
    let wait = rng.sample::<f64, _>(Exp1) / total;
    let mut kind = select(&w, total, rng.random::<f64>());
    if p.mu > 0.0 && matches!(kind, EventKind::Birth(_)) && rng.random::<f64>() < p.mu {
        kind = EventKind::MutationBirth;
    }
    let mut next = *state;
    apply(&mut next, kind);
    Ok(StepOutcome { wait, kind, next })
}

#[inline]
fn select(w: &[f64; 6], total: f64, u: f64) -> EventKind {
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &wi) in w.iter().enumerate() {
        if wi > 0.0 {
            acc += wi;
            last_positive = i;
            if target < acc {
                return EVENT_ORDER[i];
            }
        }
    }
    // u * total rounded up past the cumulative sum
    EVENT_ORDER[last_positive]
}

#[inline]
fn apply(n: &mut PopCount, kind: EventKind) {
    match kind {
        EventKind::Birth(g) => *n.get_mut(g) += 1,
        EventKind::Death(g) => *n.get_mut(g) -= 1,
        EventKind::MutationBirth => {}
    }
}

/// Which stopping times are tracked and which of them end the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopSpec {
    /// Mutant density `δ` defining `τ_δ^mut`; `None` disables it.
    pub fixation_threshold: Option<f64>,
    pub stop_at_fixation: bool,
    pub track_mutant_loss: bool,
    pub stop_at_mutant_loss: bool,
    /// Levels `η` of `τ_η^hit`, armed after `τ_δ^mut`.
    pub hit_levels: Vec<f64>,
    /// End the run once every hit level has been reached.
    pub stop_when_levels_hit: bool,
    pub stop_at_mutation: bool,
    pub t_max: Option<f64>,
    pub stop_on_extinction: bool,
    /// Record the first time `N_aa = 0` after `τ_δ^mut`.
    #[serde(default)]
    pub track_recessive_loss: bool,
}

impl Default for StopSpec {
    fn default() -> Self {
        Self {
            fixation_threshold: None,
            stop_at_fixation: false,
            track_mutant_loss: false,
            stop_at_mutant_loss: false,
            hit_levels: Vec::new(),
            stop_when_levels_hit: false,
            stop_at_mutation: false,
            t_max: None,
            stop_on_extinction: true,
            track_recessive_loss: false,
        }
    }
}

impl StopSpec {
    /// Runs until the mutant lineage reaches `δ` or dies out.
    pub fn fixation(delta: f64) -> Self {
        Self {
            fixation_threshold: Some(delta),
            stop_at_fixation: true,
            track_mutant_loss: true,
            stop_at_mutant_loss: true,
            ..Self::default()
        }
    }

    /// Runs through fixation until `n_aA` has dropped below every level, or
    /// the mutant lineage is lost first.
    pub fn survival(delta: f64, levels: Vec<f64>) -> Self {
        Self {
            fixation_threshold: Some(delta),
            stop_at_fixation: false,
            track_mutant_loss: true,
            stop_at_mutant_loss: true,
            hit_levels: levels,
            stop_when_levels_hit: true,
            ..Self::default()
        }
    }

    /// Only a time cap.
    pub fn until(t_max: f64) -> Self {
        Self {
            t_max: Some(t_max),
            ..Self::default()
        }
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = Some(t_max);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidStop(m.to_string()));
        if let Some(d) = self.fixation_threshold {
            if !(d > 0.0 && d.is_finite()) {
                return bad("fixation threshold must be positive");
            }
        }
        if self.hit_levels.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return bad("hit levels must be positive");
        }
        if !self.hit_levels.is_empty() && self.fixation_threshold.is_none() {
            return bad("hit levels are armed by tau_delta_mut; set a fixation threshold");
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return bad("t_max must be positive");
            }
        }
        if self.stop_at_mutant_loss && !self.track_mutant_loss {
            return bad("stop_at_mutant_loss requires track_mutant_loss");
        }
        let terminates = (self.stop_at_fixation && self.fixation_threshold.is_some())
            || self.stop_at_mutant_loss
            || (self.stop_when_levels_hit && !self.hit_levels.is_empty())
            || self.stop_at_mutation
            || self.t_max.is_some()
            || self.stop_on_extinction;
        if !terminates {
            return bad("no terminating condition enabled");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MutantFixed,
    MutantLost,
    LevelsHit,
    Mutation,
    TimeCap,
    Extinct,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MutantFixed => "mutant-fixed",
            StopReason::MutantLost => "mutant-lost",
            StopReason::LevelsHit => "levels-hit",
            StopReason::Mutation => "mutation",
            StopReason::TimeCap => "time-cap",
            StopReason::Extinct => "extinct",
        })
    }
}

/// First time `n_aA ≤ level` after `τ_δ^mut`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitTime {
    pub level: f64,
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    pub tau_delta_mut: Option<f64>,
    pub tau_0_mut: Option<f64>,
    #[serde(serialize_with = "ser_hits", deserialize_with = "de_hits")]
    pub tau_hit: Vec<HitTime>,
    pub tau_1: Option<f64>,
    pub t_end: f64,
    pub reason: StopReason,
    pub seed: u64,
    pub replica: u64,
    pub final_state: PopCount,
    pub events: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_aa_lost: Option<f64>,
}

fn ser_hits<S: Serializer>(hits: &[HitTime], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut m = s.serialize_map(Some(hits.len()))?;
    for h in hits {
        m.serialize_entry(&h.level.to_string(), &h.time)?;
    }
    m.end()
}

fn de_hits<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<HitTime>, D::Error> {
    let raw = BTreeMap::<String, Option<f64>>::deserialize(d)?;
    let mut hits = raw
        .into_iter()
        .map(|(k, time)| {
            k.parse::<f64>()
                .map(|level| HitTime { level, time })
                .map_err(serde::de::Error::custom)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    hits.sort_by(|a, b| b.level.total_cmp(&a.level));
    Ok(hits)
}

impl StoppingRecord {
    pub fn hit_time(&self, level: f64) -> Option<f64> {
        self.tau_hit
            .iter()
            .find(|h| h.level == level)
            .and_then(|h| h.time)
    }

    pub fn fixed(&self) -> bool {
        self.tau_delta_mut.is_some()
    }

    /// `τ^hit_lower − τ^hit_upper`; the survival time when `upper = ε` and
    /// `lower = K^{-1/4+α}`. Negative when the `lower` level sits above `upper`.
    pub fn time_between(&self, upper: f64, lower: f64) -> Option<f64> {
        Some(self.hit_time(lower)? - self.hit_time(upper)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordMode {
    /// Every state change.
    Events,
    /// State at `0, dt, 2dt, ...`, piecewise constant between events.
    Sampled { dt: f64 },
    /// Initial state, the state at each stopping time, and the final state.
    StopsOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mode: RecordMode,
    pub points: Vec<(f64, PopCount)>,
}

impl Trajectory {
    fn new(mode: RecordMode) -> Self {
        Self {
            mode,
            points: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, n: PopCount) {
        match self.points.last_mut() {
            Some(last) if last.0 == t => last.1 = n,
            _ => self.points.push((t, n)),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// State in force at time `t` (piecewise constant, right-continuous).
    pub fn state_at(&self, t: f64) -> Option<PopCount> {
        let idx = self.points.partition_point(|(s, _)| *s <= t);
        idx.checked_sub(1).map(|i| self.points[i].1)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,N_aa,N_aA,N_AA")?;
        for (t, n) in &self.points {
            writeln!(w, "{},{},{},{}", t, n.aa, n.a_a, n.big_aa)?;
        }
        Ok(())
    }
}

/// Integer thresholds derived from a [`StopSpec`] at scale `K`.
#[derive(Debug, Clone)]
struct Thresholds {
    fixation: Option<u64>,
    levels: Vec<u64>,
}

impl Thresholds {
    fn new(stop: &StopSpec, k: u64) -> Self {
        let k = k as f64;
        Self {
            // 2N_AA + N_aA ≥ δK  ⇔  2N_AA + N_aA ≥ ceil(δK)
            fixation: stop.fixation_threshold.map(|d| (d * k).ceil() as u64),
            // n_aA ≤ η  ⇔  N_aA ≤ floor(ηK)
            levels: stop.hit_levels.iter().map(|&l| (l * k).floor() as u64).collect(),
        }
    }
}

/// A single running simulation: owns its state, clock and random stream.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ModelParams,
    state: PopCount,
    time: f64,
    events: u64,
    rng: SimRng,
}

impl Simulator {
    pub fn new(params: ModelParams, init: PopCount, rng: SimRng) -> Self {
        Self {
            params,
            state: init,
            time: 0.0,
            events: 0,
            rng,
        }
    }

    pub fn state(&self) -> PopCount {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Advances by one event. Returns `None` on an extinct population.
    #[inline]
    pub fn advance(&mut self) -> Option<Event> {
        let out = step(&self.state, &self.params, &mut self.rng).ok()?;
        self.time += out.wait;
        self.state = out.next;
        self.events += 1;
        Some(Event {
            kind: out.kind,
            time: self.time,
        })
    }

    /// Draws the next event without committing it when it would land after
    /// `t_limit`. The state is left unchanged and the clock is set to `t_limit`
    /// in that case; memorylessness makes the discarded draw harmless.
    pub fn advance_until(&mut self, t_limit: f64) -> Option<Event> {
        let out = step(&self.state, &self.params, &mut self.rng).ok()?;
        if self.time + out.wait > t_limit {
            self.time = t_limit;
            return None;
        }
        self.time += out.wait;
        self.state = out.next;
        self.events += 1;
        Some(Event {
            kind: out.kind,
            time: self.time,
        })
    }

    /// Runs until a terminating condition of `stop` fires.
    pub fn run(
        &mut self,
        stop: &StopSpec,
        mode: RecordMode,
        seed: u64,
        replica: u64,
    ) -> Result<(Trajectory, StoppingRecord)> {
        stop.validate()?;
        if let RecordMode::Sampled { dt } = mode {
            if !(dt > 0.0) {
                return Err(Error::InvalidStop("sampling interval must be positive".into()));
            }
        }
        let th = Thresholds::new(stop, self.params.k);
        let mut rec = StoppingRecord {
            tau_delta_mut: None,
            tau_0_mut: None,
            tau_hit: stop
                .hit_levels
                .iter()
                .map(|&level| HitTime { level, time: None })
                .collect(),
            tau_1: None,
            t_end: self.time,
            reason: StopReason::TimeCap,
            seed,
            replica,
            final_state: self.state,
            events: 0,
            tau_aa_lost: None,
        };
        let mut traj = Trajectory::new(mode);
        let mut next_sample = self.time;
        let start_events = self.events;
        traj.push(self.time, self.state);
        if let RecordMode::Sampled { dt } = mode {
            next_sample += dt;
        }

        let mut reason = self.check(stop, &th, &mut rec, &mut traj, None);
        while reason.is_none() {
            if self.state.is_extinct() {
                reason = Some(StopReason::Extinct);
                break;
            }
            let before = self.state;
            let event = match stop.t_max {
                Some(t_max) => self.advance_until(t_max),
                None => self.advance(),
            };
            let Some(event) = event else {
                // time cap reached before the next event
                if let RecordMode::Sampled { dt } = mode {
                    while next_sample <= self.time {
                        traj.push(next_sample, before);
                        next_sample += dt;
                    }
                }
                reason = Some(StopReason::TimeCap);
                break;
            };
            match mode {
                RecordMode::Events => {
                    if event.kind != EventKind::MutationBirth {
                        traj.push(event.time, self.state);
                    }
                }
                RecordMode::Sampled { dt } => {
                    while next_sample < event.time {
                        traj.push(next_sample, before);
                        next_sample += dt;
                    }
                }
                RecordMode::StopsOnly => {}
            }
            reason = self.check(stop, &th, &mut rec, &mut traj, Some(event));
        }

        let reason = reason.unwrap_or(StopReason::TimeCap);
        rec.reason = reason;
        rec.t_end = self.time;
        rec.final_state = self.state;
        rec.events = self.events - start_events;
        match mode {
            RecordMode::Events | RecordMode::StopsOnly => traj.push(self.time, self.state),
            RecordMode::Sampled { .. } => {}
        }
        Ok((traj, rec))
    }

    fn check(
        &self,
        stop: &StopSpec,
        th: &Thresholds,
        rec: &mut StoppingRecord,
        traj: &mut Trajectory,
        event: Option<Event>,
    ) -> Option<StopReason> {
        let t = self.time;
        let n = self.state;
        let mut hit_any = false;
        let mut reason = None;

        if matches!(event, Some(e) if e.kind == EventKind::MutationBirth) && rec.tau_1.is_none() {
            rec.tau_1 = Some(t);
            hit_any = true;
            if stop.stop_at_mutation {
                reason = reason.or(Some(StopReason::Mutation));
            }
        }
        let mutants = n.mutant_alleles();
        if let Some(fix) = th.fixation {
            if rec.tau_delta_mut.is_none() && mutants >= fix {
                rec.tau_delta_mut = Some(t);
                hit_any = true;
                if stop.stop_at_fixation {
                    reason = reason.or(Some(StopReason::MutantFixed));
                }
            }
        }
        if stop.track_mutant_loss && rec.tau_0_mut.is_none() && mutants == 0 {
            rec.tau_0_mut = Some(t);
            hit_any = true;
            if stop.stop_at_mutant_loss {
                reason = reason.or(Some(StopReason::MutantLost));
            }
        }
        if rec.tau_delta_mut.is_some() && !rec.tau_hit.is_empty() {
            for (h, &level) in rec.tau_hit.iter_mut().zip(&th.levels) {
                if h.time.is_none() && n.a_a <= level {
                    h.time = Some(t);
                    hit_any = true;
                }
            }
            if stop.track_recessive_loss && rec.tau_aa_lost.is_none() && n.aa == 0 {
                rec.tau_aa_lost = Some(t);
            }
            if stop.stop_when_levels_hit && rec.tau_hit.iter().all(|h| h.time.is_some()) {
                reason = reason.or(Some(StopReason::LevelsHit));
            }
        }
        if n.is_extinct() && stop.stop_on_extinction {
            reason = reason.or(Some(StopReason::Extinct));
        }
        if hit_any && traj.mode == RecordMode::StopsOnly {
            traj.push(t, n);
        }
        reason
    }
}

/// Runs one replica from `init`, seeded by `(base_seed, replica)`.
pub fn simulate(
    p: &ModelParams,
    init: PopCount,
    stop: &StopSpec,
    base_seed: u64,
    replica: u64,
    mode: RecordMode,
) -> Result<(Trajectory, StoppingRecord)> {
    let p = p.validate()?;
    if init.is_extinct() && !stop.stop_on_extinction {
        return Err(Error::InvalidStop(
            "empty initial population requires extinction detection".into(),
        ));
    }
    let mut sim = Simulator::new(p, init, replica_rng(base_seed, replica));
    sim.run(stop, mode, base_seed, replica)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaResult {
    pub trajectory: Option<Trajectory>,
    pub record: StoppingRecord,
}

/// Runs replicas `first .. first + count` in parallel. Output is ordered by
/// replica index and independent of scheduling.
pub fn run_replicas(
    p: &ModelParams,
    init: PopCount,
    stop: &StopSpec,
    base_seed: u64,
    first: u64,
    count: u64,
    mode: RecordMode,
    keep_trajectories: bool,
) -> Result<Vec<ReplicaResult>> {
    stop.validate()?;
    (first..first + count)
        .into_par_iter()
        .map(|i| {
            let (traj, record) = simulate(p, init, stop, base_seed, i, mode)?;
            Ok(ReplicaResult {
                trajectory: keep_trajectories.then_some(traj),
                record,
            })
        })
        .collect()
}
