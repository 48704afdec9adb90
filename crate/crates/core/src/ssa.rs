//! Exact stochastic simulation (Gillespie direct method).
//!
//! A [`Simulator`] binds a network to a [`SimConfig`] and precomputes, for
//! every reaction, the list of reactions whose propensity can change when it
//! fires. Trajectories are streamed to [`Observer`]s; nothing is stored unless
//! an observer stores it.

use std::io::Write;

use rand_core::RngCore;
use rayon::prelude::*;
use thiserror::Error;

use crate::crn::{CountVector, Crn, CrnError, SpeciesTable};
use crate::rng::{self, TrialRng};
use crate::scalar::{Real, Scalar};

/// Event ceiling applied when the caller leaves `max_events` unbounded.
pub const DEFAULT_EVENT_CEILING: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub volume: T,
    pub max_time: Option<T>,
    pub max_events: Option<u64>,
    pub seed: u64,
    /// Species whose counts decide the outcome. When set, a run stops as
    /// [`StopReason::Settled`] once no reaction can change them any more.
    pub watched: Option<Vec<usize>>,
}

impl<T: Real> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            volume: T::one(),
            max_time: None,
            max_events: None,
            seed: 0,
            watched: None,
        }
    }
}

impl<T: Real> SimConfig<T> {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn event_limit(&self) -> u64 {
        self.max_events.unwrap_or(DEFAULT_EVENT_CEILING)
    }
}

/// One fired reaction and the sojourn time spent in the state it left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEvent<T> {
    pub sojourn: T,
    pub reaction: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    /// No reaction is applicable; the sojourn in the final state is infinite.
    Terminal,
    /// Other reactions may still fire, but every reaction that changes a
    /// watched species is blocked by a shortfall of watched species, so the
    /// watched counts are final.
    Settled,
    TimeExhausted,
    EventCeiling,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Terminal => "terminal",
            StopReason::Settled => "settled",
            StopReason::TimeExhausted => "time-exhausted",
            StopReason::EventCeiling => "event-ceiling",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    pub final_state: CountVector,
    pub stop: StopReason,
    pub events: u64,
    /// Simulated time at which the run stopped.
    pub time: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step<T> {
    Fired(TrajectoryEvent<T>),
    Terminal,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Crn(#[from] CrnError),
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

/// Streaming consumer of a trajectory.
pub trait Observer<T> {
    fn start(&mut self, _initial: &CountVector) {}

    /// Called after each event with the cumulative time and the new state.
    fn event(&mut self, time: T, event: &TrajectoryEvent<T>, state: &CountVector);

    fn finish(&mut self, _outcome: &Outcome<T>) {}
}

impl<T> Observer<T> for () {
    fn event(&mut self, _: T, _: &TrajectoryEvent<T>, _: &CountVector) {}
}

impl<T, O: Observer<T> + ?Sized> Observer<T> for &mut O {
    fn start(&mut self, initial: &CountVector) {
        (**self).start(initial)
    }

    fn event(&mut self, time: T, event: &TrajectoryEvent<T>, state: &CountVector) {
        (**self).event(time, event, state)
    }

    fn finish(&mut self, outcome: &Outcome<T>) {
        (**self).finish(outcome)
    }
}

impl<T: Copy, A: Observer<T>, B: Observer<T>> Observer<T> for (A, B) {
    fn start(&mut self, initial: &CountVector) {
        self.0.start(initial);
        self.1.start(initial);
    }

    fn event(&mut self, time: T, event: &TrajectoryEvent<T>, state: &CountVector) {
        self.0.event(time, event, state);
        self.1.event(time, event, state);
    }

    fn finish(&mut self, outcome: &Outcome<T>) {
        self.0.finish(outcome);
        self.1.finish(outcome);
    }
}

impl<T: Copy> Observer<T> for [&mut dyn Observer<T>] {
    fn start(&mut self, initial: &CountVector) {
        self.iter_mut().for_each(|o| o.start(initial));
    }

    fn event(&mut self, time: T, event: &TrajectoryEvent<T>, state: &CountVector) {
        self.iter_mut().for_each(|o| o.event(time, event, state));
    }

    fn finish(&mut self, outcome: &Outcome<T>) {
        self.iter_mut().for_each(|o| o.finish(outcome));
    }
}

/// Writes one tab-separated line per event: cumulative time, reaction index,
/// then every species count in table order. The header starts with `#`.
pub struct TrajectoryDump<W: Write> {
    out: W,
    header: String,
    error: Option<std::io::Error>,
}

impl<W: Write> TrajectoryDump<W> {
    pub fn new(out: W, species: &SpeciesTable) -> Self {
        let mut header = String::from("#time\treaction");
        for name in species.names() {
            header.push('\t');
            header.push_str(name);
        }
        Self {
            out,
            header,
            error: None,
        }
    }

    fn record(&mut self, result: std::io::Result<()>) {
        if let (Err(e), None) = (result, &self.error) {
            self.error = Some(e);
        }
    }

    pub fn into_inner(mut self) -> std::io::Result<W> {
        let flushed = self.out.flush();
        self.record(flushed);
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.out),
        }
    }
}

impl<T: Real, W: Write> Observer<T> for TrajectoryDump<W> {
    fn start(&mut self, _initial: &CountVector) {
        let result = writeln!(self.out, "{}", self.header);
        self.record(result);
    }

    fn event(&mut self, time: T, event: &TrajectoryEvent<T>, state: &CountVector) {
        let mut line = format!("{:?}\t{}", time, event.reaction);
        for c in state.iter() {
            line.push('\t');
            line.push_str(&c.to_string());
        }
        let result = writeln!(self.out, "{line}");
        self.record(result);
    }
}

/// Output of one Monte Carlo trial.
#[derive(Debug, Clone)]
pub struct TrialResult<O, T> {
    pub observer: O,
    pub initial_state: CountVector,
    pub outcome: Outcome<T>,
}

/// Sum of all propensities (the exit rate of the current state).
pub fn total_rate<T: Real>(crn: &Crn<T>, state: &CountVector, volume: T) -> Result<T, CrnError> {
    check_dim(crn, state)?;
    let mut total = T::zero();
    for i in 0..crn.reactions().len() {
        total = total + crn.propensity(i, state, &volume)?;
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(CrnError::NumericOverflow {
            reaction: crn.reactions().len().saturating_sub(1),
        })
    }
}

/// One direct-method step from `state`, computed from scratch.
pub fn step<T: Real, R: RngCore + ?Sized>(
    crn: &Crn<T>,
    state: &mut CountVector,
    volume: T,
    rng: &mut R,
) -> Result<Step<T>, CrnError> {
    let config = SimConfig {
        volume,
        ..SimConfig::default()
    };
    Simulator::new(crn, config).step(state, rng)
}

pub(crate) type SettleGuards = Vec<(usize, Vec<(usize, u64)>)>;

/// Reactions that change a watched species, each with its watched reactant requirements.
pub(crate) fn settle_guards<T: Scalar>(crn: &Crn<T>, watched: &[usize]) -> SettleGuards {
    crn.reactions()
        .iter()
        .enumerate()
        .filter(|(_, r)| watched.iter().any(|&s| r.net_effect()[s] != 0))
        .map(|(j, r)| {
            let guard = r
                .reactant_terms()
                .iter()
                .copied()
                .filter(|(s, _)| watched.contains(s))
                .collect();
            (j, guard)
        })
        .collect()
}

pub(crate) fn guards_settled(guards: &SettleGuards, state: &CountVector) -> bool {
    guards
        .iter()
        .all(|(_, guard)| guard.iter().any(|&(s, need)| state[s] < need))
}

fn check_dim<T: Real>(crn: &Crn<T>, state: &CountVector) -> Result<(), CrnError> {
    if state.dim() == crn.species().len() {
        Ok(())
    } else {
        Err(CrnError::DimensionMismatch {
            expected: crn.species().len(),
            found: state.dim(),
        })
    }
}

/// Exponential sojourn with rate `total`: `-ln(u) / total`, `u` uniform on (0, 1).
#[inline]
fn sample_sojourn<T: Real, R: RngCore + ?Sized>(total: T, rng: &mut R) -> T {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    T::from_f64(-u.ln()) / total
}

/// Picks reaction `j` with probability `props[j] / total`.
#[inline]
fn select<T: Real, R: RngCore + ?Sized>(props: &[T], total: T, rng: &mut R) -> usize {
    let target = T::from_f64(rng::unit_open_closed(rng)) * total;
    let mut cumulative = T::zero();
    let mut last_positive = 0;
    for (j, &p) in props.iter().enumerate() {
        if p > T::zero() {
            cumulative = cumulative + p;
            last_positive = j;
            if cumulative >= target {
                return j;
            }
        }
    }
    // Rounding left the cumulative sum a hair below the target.
    last_positive
}

/// Direct-method simulator for one network and configuration.
#[derive(Debug, Clone)]
pub struct Simulator<'a, T> {
    crn: &'a Crn<T>,
    config: SimConfig<T>,
    scaled_rates: Vec<T>,
    dependents: Vec<Vec<usize>>,
    /// For each reaction that changes a watched species: its watched reactant requirements.
    watch_guards: Option<SettleGuards>,
}

impl<'a, T: Real> Simulator<'a, T> {
    pub fn new(crn: &'a Crn<T>, config: SimConfig<T>) -> Self {
        let reactions = crn.reactions();
        let scaled_rates = reactions
            .iter()
            .map(|r| r.volume_scaled_rate(&config.volume))
            .collect();
        // Reaction i depends on reaction j if j changes a species i consumes.
        let dependents = reactions
            .iter()
            .map(|fired| {
                (0..reactions.len())
                    .filter(|&i| {
                        reactions[i]
                            .reactant_terms()
                            .iter()
                            .any(|&(s, _)| fired.net_effect()[s] != 0)
                    })
                    .collect()
            })
            .collect();
        let watch_guards = config.watched.as_ref().map(|watched| settle_guards(crn, watched));
        Self {
            crn,
            config,
            scaled_rates,
            dependents,
            watch_guards,
        }
    }

    /// True when the watched counts can never change again from `state`:
    /// only reactions that change watched species can alter them, and each
    /// such reaction lacks a watched reactant.
    pub fn is_settled(&self, state: &CountVector) -> bool {
        self.watch_guards.as_ref().is_some_and(|g| guards_settled(g, state))
    }

    fn touches_watched(&self, reaction: usize) -> bool {
        self.watch_guards
            .as_ref()
            .is_some_and(|g| g.iter().any(|&(j, _)| j == reaction))
    }

    pub fn crn(&self) -> &Crn<T> {
        self.crn
    }

    pub fn config(&self) -> &SimConfig<T> {
        &self.config
    }

    /// Reactions whose propensity must be recomputed after `reaction` fires.
    pub fn dependents(&self, reaction: usize) -> &[usize] {
        &self.dependents[reaction]
    }

    #[inline]
    fn propensity(&self, j: usize, state: &CountVector) -> T {
        self.scaled_rates[j] * self.crn.reaction(j).combinations(state)
    }

    fn checked_total(&self, props: &[T]) -> Result<T, CrnError> {
        let total = props.iter().fold(T::zero(), |acc, &p| acc + p);
        if total.is_finite() {
            return Ok(total);
        }
        let reaction = props.iter().position(|p| !p.is_finite()).unwrap_or(0);
        Err(CrnError::NumericOverflow { reaction })
    }

    pub fn propensities(&self, state: &CountVector) -> Vec<T> {
        (0..self.crn.reactions().len())
            .map(|j| self.propensity(j, state))
            .collect()
    }

    pub fn step<R: RngCore + ?Sized>(&self, state: &mut CountVector, rng: &mut R) -> Result<Step<T>, CrnError> {
        check_dim(self.crn, state)?;
        let props = self.propensities(state);
        let total = self.checked_total(&props)?;
        if total == T::zero() {
            return Ok(Step::Terminal);
        }
        let sojourn = sample_sojourn(total, rng);
        let reaction = select(&props, total, rng);
        self.crn.reaction(reaction).apply_in_place(state);
        Ok(Step::Fired(TrajectoryEvent { sojourn, reaction }))
    }

    /// Runs one trajectory until it is terminal or a configured limit is hit.
    pub fn simulate<R, O>(&self, initial: CountVector, rng: &mut R, observer: &mut O) -> Result<Outcome<T>, SimError>
    where
        R: RngCore + ?Sized,
        O: Observer<T> + ?Sized,
    {
        check_dim(self.crn, &initial)?;
        let limit = self.config.event_limit();
        let mut state = initial;
        let mut props = self.propensities(&state);
        let mut time = T::zero();
        let mut events = 0u64;
        let mut settled = self.is_settled(&state);
        observer.start(&state);
        let stop = loop {
            let total = self.checked_total(&props)?;
            if total == T::zero() {
                break StopReason::Terminal;
            }
            if settled {
                break StopReason::Settled;
            }
            if events >= limit {
                break StopReason::EventCeiling;
            }
            let sojourn = sample_sojourn(total, rng);
            if let Some(max_time) = self.config.max_time {
                if time + sojourn > max_time {
                    time = max_time;
                    break StopReason::TimeExhausted;
                }
            }
            let reaction = select(&props, total, rng);
            self.crn.reaction(reaction).apply_in_place(&mut state);
            for &i in &self.dependents[reaction] {
                props[i] = self.propensity(i, &state);
            }
            if self.touches_watched(reaction) {
                settled = self.is_settled(&state);
            }
            time = time + sojourn;
            events += 1;
            observer.event(time, &TrajectoryEvent { sojourn, reaction }, &state);
        };
        let outcome = Outcome {
            final_state: state,
            stop,
            events,
            time,
        };
        observer.finish(&outcome);
        Ok(outcome)
    }

    /// Runs `trial_count` independent trials. Trial `j` draws its initial state
    /// and its trajectory from `rng::trial_rng(config.seed, j)`, so results are
    /// returned in trial order and do not depend on `workers` (0 = all cores).
    pub fn run_trials<O, S, F>(
        &self,
        trial_count: usize,
        workers: usize,
        sampler: S,
        factory: F,
    ) -> Result<Vec<TrialResult<O, T>>, SimError>
    where
        O: Observer<T> + Send,
        S: Fn(&mut TrialRng) -> CountVector + Sync,
        F: Fn(usize) -> O + Sync,
    {
        let run = |j: usize| -> Result<TrialResult<O, T>, SimError> {
            let mut rng = rng::trial_rng(self.config.seed, j as u64);
            let initial_state = sampler(&mut rng);
            let mut observer = factory(j);
            let outcome = self
                .simulate(initial_state.clone(), &mut rng, &mut observer)
                .map_err(|e| SimError::Trial {
                    trial: j,
                    source: Box::new(e),
                })?;
            Ok(TrialResult {
                observer,
                initial_state,
                outcome,
            })
        };
        match workers {
            1 => (0..trial_count).map(run).collect(),
            0 => (0..trial_count).into_par_iter().map(run).collect(),
            n => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SimError::Pool(e.to_string()))?
                .install(|| (0..trial_count).into_par_iter().map(run).collect()),
        }
    }
}
