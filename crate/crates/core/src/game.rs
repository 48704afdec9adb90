//! Multi-player CRN games: composition, utilities, Monte Carlo expected
//! utility and α-robustness against a profile of opponents.
//!
//! Players are identified with strategies (networks) plus an initial-state
//! distribution and a utility. Species are matched across players by name,
//! which is how catalysts couple otherwise separate networks.

use std::collections::{BTreeSet, HashMap};

use rand_core::RngCore;
use thiserror::Error;

use crate::crn::{CountVector, Crn, Reaction, SpeciesTable};
use crate::rng::{self, uniform_inclusive};
use crate::scalar::Real;
use crate::ssa::{Observer, Outcome, SimConfig, SimError, Simulator, StopReason, TrajectoryEvent};
use crate::stats::{wilson, Interval};

#[derive(Debug, Error)]
pub enum GameError {
    #[error("a game needs at least one player")]
    EmptyProfile,
    #[error("player {player}: unknown species `{species}`")]
    UnknownSpecies { player: usize, species: String },
    #[error("player {player}: initial distribution has {found} species, strategy has {expected}")]
    InitialDimension { player: usize, expected: usize, found: usize },
    #[error("player index {0} out of range")]
    NoSuchPlayer(usize),
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Distribution of one species' initial count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountDistribution {
    Constant(u64),
    /// Uniform over `lo..=hi`.
    Uniform { lo: u64, hi: u64 },
}

impl CountDistribution {
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            CountDistribution::Constant(c) => c,
            CountDistribution::Uniform { lo, hi } => uniform_inclusive(rng, lo, hi),
        }
    }
}

/// Random initial state `ξ_i` of one player, over that player's own species.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitialDistribution {
    Deterministic(CountVector),
    IndependentPerSpecies(Vec<CountDistribution>),
}

impl InitialDistribution {
    /// `ε`: probability one on the empty vector.
    pub fn trivial() -> Self {
        InitialDistribution::Deterministic(CountVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialDistribution::Deterministic(v) => v.dim(),
            InitialDistribution::IndependentPerSpecies(d) => d.len(),
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> CountVector {
        match self {
            InitialDistribution::Deterministic(v) => v.clone(),
            InitialDistribution::IndependentPerSpecies(d) => {
                d.iter().map(|c| c.sample(rng)).collect::<Vec<_>>().into()
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            InitialDistribution::Deterministic(_) => true,
            InitialDistribution::IndependentPerSpecies(d) => {
                d.iter().all(|c| matches!(c, CountDistribution::Constant(_)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UtilitySpec {
    /// Utility 0 on every trajectory.
    Indifferent,
    /// Utility 1 iff the initially larger of `x`, `y` ends holding the whole
    /// `x + y` population in a terminal state (either, on a tie).
    TakeoverSuccess { x: String, y: String },
}

impl UtilitySpec {
    pub fn takeover(x: &str, y: &str) -> Self {
        UtilitySpec::TakeoverSuccess {
            x: x.to_owned(),
            y: y.to_owned(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Player<T> {
    pub name: String,
    pub strategy: Crn<T>,
    pub initial: InitialDistribution,
    pub utility: UtilitySpec,
}

impl<T: Real> Player<T> {
    pub fn new(name: impl Into<String>, strategy: Crn<T>, initial: InitialDistribution, utility: UtilitySpec) -> Self {
        Self {
            name: name.into(),
            strategy,
            initial,
            utility,
        }
    }

    /// Plays `(∅, ∅)` from `ε` and is indifferent to the outcome.
    pub fn trivial(name: impl Into<String>) -> Self {
        Self::new(name, Crn::empty(), InitialDistribution::trivial(), UtilitySpec::Indifferent)
    }

    pub fn with_initial(&self, initial: InitialDistribution) -> Self {
        Self {
            initial,
            ..self.clone()
        }
    }
}

/// A utility with species resolved against the composed table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedUtility {
    Indifferent,
    Takeover { x: usize, y: usize },
}

/// Utility of a trajectory from its endpoints and stop reason.
pub fn evaluate_utility(
    utility: ResolvedUtility,
    initial: &CountVector,
    final_state: &CountVector,
    stop: StopReason,
) -> f64 {
    match utility {
        ResolvedUtility::Indifferent => 0.0,
        ResolvedUtility::Takeover { x, y } => {
            takeover_value(initial[x], initial[y], final_state[x], final_state[y], stop)
        }
    }
}

fn takeover_value(x0: u64, y0: u64, x: u64, y: u64, stop: StopReason) -> f64 {
    if !matches!(stop, StopReason::Terminal | StopReason::Settled) {
        return 0.0;
    }
    let total = x0 + y0;
    let success = match x0.cmp(&y0) {
        std::cmp::Ordering::Greater => x == total,
        std::cmp::Ordering::Less => y == total,
        std::cmp::Ordering::Equal => x == total || y == total,
    };
    if success {
        1.0
    } else {
        0.0
    }
}

/// Streaming utility evaluation; keeps only the tracked counts.
#[derive(Debug, Clone)]
pub struct UtilityObserver {
    utility: ResolvedUtility,
    start: (u64, u64),
    current: (u64, u64),
    value: Option<f64>,
    stop: Option<StopReason>,
}

impl UtilityObserver {
    pub fn new(utility: ResolvedUtility) -> Self {
        Self {
            utility,
            start: (0, 0),
            current: (0, 0),
            value: None,
            stop: None,
        }
    }

    fn tracked(&self, state: &CountVector) -> (u64, u64) {
        match self.utility {
            ResolvedUtility::Indifferent => (0, 0),
            ResolvedUtility::Takeover { x, y } => (state[x], state[y]),
        }
    }

    /// Utility of the observed trajectory; `None` before it finished.
    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn stop(&self) -> Option<StopReason> {
        self.stop
    }
}

impl<T> Observer<T> for UtilityObserver {
    fn start(&mut self, initial: &CountVector) {
        self.start = self.tracked(initial);
        self.current = self.start;
    }

    fn event(&mut self, _time: T, _event: &TrajectoryEvent<T>, state: &CountVector) {
        self.current = self.tracked(state);
    }

    fn finish(&mut self, outcome: &Outcome<T>) {
        self.stop = Some(outcome.stop);
        self.value = Some(match self.utility {
            ResolvedUtility::Indifferent => 0.0,
            ResolvedUtility::Takeover { .. } => {
                let ((x0, y0), (x, y)) = (self.start, self.current);
                takeover_value(x0, y0, x, y, outcome.stop)
            }
        });
    }
}

/// The composed network `N_σ` together with the players that produced it.
#[derive(Debug, Clone)]
pub struct ComposedGame<T> {
    players: Vec<Player<T>>,
    crn: Crn<T>,
    embeddings: Vec<Vec<usize>>,
    utilities: Vec<ResolvedUtility>,
    volume: T,
}

/// Unions the players' species (by name) and reactions (as a set of triples).
///
/// The union itself cannot fail; errors come only from resolving utility
/// species and checking initial-distribution dimensions.
pub fn compose<T: Real>(players: Vec<Player<T>>, volume: T) -> Result<ComposedGame<T>, GameError> {
    if players.is_empty() {
        return Err(GameError::EmptyProfile);
    }
    let mut species = SpeciesTable::new();
    let embeddings: Vec<Vec<usize>> = players
        .iter()
        .map(|p| p.strategy.species().names().iter().map(|n| species.insert(n)).collect())
        .collect();
    let dim = species.len();

    let mut reactions: Vec<Reaction<T>> = Vec::new();
    let mut index: HashMap<(CountVector, CountVector), Vec<usize>> = HashMap::new();
    for (player, map) in players.iter().zip(&embeddings) {
        for r in player.strategy.reactions() {
            let embedded = r.embed(map, dim);
            let key = (embedded.reactants().clone(), embedded.products().clone());
            let bucket = index.entry(key).or_default();
            if bucket.iter().any(|&j| reactions[j].rate() == embedded.rate()) {
                continue;
            }
            bucket.push(reactions.len());
            reactions.push(embedded);
        }
    }
    let crn = Crn::from_unique_reactions(species, reactions).expect("reactions deduplicated");

    let mut utilities = Vec::with_capacity(players.len());
    for (i, p) in players.iter().enumerate() {
        if p.initial.dim() != p.strategy.species().len() {
            return Err(GameError::InitialDimension {
                player: i,
                expected: p.strategy.species().len(),
                found: p.initial.dim(),
            });
        }
        utilities.push(match &p.utility {
            UtilitySpec::Indifferent => ResolvedUtility::Indifferent,
            UtilitySpec::TakeoverSuccess { x, y } => {
                let lookup = |name: &str| {
                    crn.species().index_of(name).ok_or_else(|| GameError::UnknownSpecies {
                        player: i,
                        species: name.to_owned(),
                    })
                };
                ResolvedUtility::Takeover {
                    x: lookup(x)?,
                    y: lookup(y)?,
                }
            }
        });
    }

    Ok(ComposedGame {
        players,
        crn,
        embeddings,
        utilities,
        volume,
    })
}

impl<T: Real> ComposedGame<T> {
    pub fn crn(&self) -> &Crn<T> {
        &self.crn
    }

    pub fn players(&self) -> &[Player<T>] {
        &self.players
    }

    /// Position in the composed table of each of player `i`'s species.
    pub fn embedding(&self, player: usize) -> &[usize] {
        &self.embeddings[player]
    }

    pub fn utility(&self, player: usize) -> Result<ResolvedUtility, GameError> {
        self.utilities.get(player).copied().ok_or(GameError::NoSuchPlayer(player))
    }

    pub fn volume(&self) -> T {
        self.volume
    }

    /// Draws every `ξ_i` independently and sums their embeddings.
    pub fn sample_initial_state<R: RngCore + ?Sized>(&self, rng: &mut R) -> CountVector {
        let mut state = self.crn.zero_state();
        for (player, map) in self.players.iter().zip(&self.embeddings) {
            let local = player.initial.sample(rng);
            for (i, &g) in map.iter().enumerate() {
                state[g] += local[i];
            }
        }
        state
    }
}

/// Split of one player's species into private species `A_i` and catalysts `C_i`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CatalyticPartition {
    pub private: BTreeSet<String>,
    pub catalysts: BTreeSet<String>,
}

impl CatalyticPartition {
    pub fn new<'a>(private: impl IntoIterator<Item = &'a str>, catalysts: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            private: private.into_iter().map(str::to_owned).collect(),
            catalysts: catalysts.into_iter().map(str::to_owned).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalyticViolation {
    /// A species of the player's strategy is in neither set.
    Uncovered { player: usize, species: String },
    /// `species ∈ A_i ∩ A_j`.
    SharedPrivate { species: String, players: (usize, usize) },
    /// A declared catalyst has nonzero net change in one of the player's reactions.
    CatalystChanged { player: usize, reaction: usize, species: String },
    MissingPartition { player: usize },
}

/// Checks the catalytic-game conditions; an empty violation list means valid.
pub fn validate_catalytic<T: Real>(
    players: &[Player<T>],
    partitions: &[CatalyticPartition],
) -> Result<(), Vec<CatalyticViolation>> {
    let mut violations = Vec::new();
    for (i, player) in players.iter().enumerate() {
        let Some(part) = partitions.get(i) else {
            violations.push(CatalyticViolation::MissingPartition { player: i });
            continue;
        };
        let table = player.strategy.species();
        for name in table.names() {
            if !part.private.contains(name) && !part.catalysts.contains(name) {
                violations.push(CatalyticViolation::Uncovered {
                    player: i,
                    species: name.clone(),
                });
            }
        }
        for (j, reaction) in player.strategy.reactions().iter().enumerate() {
            for c in &part.catalysts {
                if let Some(s) = table.index_of(c) {
                    if reaction.net_effect()[s] != 0 {
                        violations.push(CatalyticViolation::CatalystChanged {
                            player: i,
                            reaction: j,
                            species: c.clone(),
                        });
                    }
                }
            }
        }
    }
    for i in 0..partitions.len().min(players.len()) {
        for j in i + 1..partitions.len().min(players.len()) {
            for s in partitions[i].private.intersection(&partitions[j].private) {
                violations.push(CatalyticViolation::SharedPrivate {
                    species: s.clone(),
                    players: (i, j),
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Simulation and reporting settings for Monte Carlo estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig<T> {
    pub seed: u64,
    pub max_time: Option<T>,
    pub max_events: Option<u64>,
    /// Worker threads; 0 uses every core. Never affects results.
    pub workers: usize,
    /// Two-sided confidence level for Wilson intervals.
    pub confidence: f64,
}

impl<T: Real> Default for EstimateConfig<T> {
    fn default() -> Self {
        Self {
            seed: 0,
            max_time: None,
            max_events: None,
            workers: 0,
            confidence: 0.99,
        }
    }
}

impl<T: Real> EstimateConfig<T> {
    fn sim_config(&self, volume: T, seed: u64, utility: ResolvedUtility) -> SimConfig<T> {
        let watched = match utility {
            ResolvedUtility::Indifferent => vec![],
            ResolvedUtility::Takeover { x, y } => vec![x, y],
        };
        SimConfig {
            volume,
            max_time: self.max_time,
            max_events: self.max_events,
            seed,
            watched: Some(watched),
        }
    }
}

/// Monte Carlo estimate of one player's expected utility.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityEstimate {
    pub trials: u64,
    pub mean: f64,
    pub interval: Interval,
    /// Trials with utility 1.
    pub successes: u64,
    /// Trials stopped by a time or event limit (scored 0 by takeover utilities).
    pub truncated: u64,
    pub seed: u64,
    /// Per-trial utilities in trial order.
    pub utilities: Vec<f64>,
}

/// Estimates `U_i(σ, ξ)` from `trials` independent trajectories.
pub fn estimate_expected_utility<T: Real>(
    game: &ComposedGame<T>,
    player: usize,
    trials: usize,
    config: &EstimateConfig<T>,
) -> Result<UtilityEstimate, GameError> {
    if trials == 0 {
        return Err(GameError::NoTrials);
    }
    let utility = game.utility(player)?;
    let sim = Simulator::new(game.crn(), config.sim_config(game.volume(), config.seed, utility));
    let results = sim.run_trials(
        trials,
        config.workers,
        |rng| game.sample_initial_state(rng),
        |_| UtilityObserver::new(utility),
    )?;
    let utilities: Vec<f64> = results
        .iter()
        .map(|t| t.observer.value().expect("observer finished"))
        .collect();
    let truncated = results
        .iter()
        .filter(|t| !matches!(t.outcome.stop, StopReason::Terminal | StopReason::Settled))
        .count() as u64;
    let successes = utilities.iter().filter(|&&u| u == 1.0).count() as u64;
    let n = trials as u64;
    let mean = utilities.iter().sum::<f64>() / trials as f64;
    let interval = match utility {
        ResolvedUtility::Indifferent => Interval::point(0.0),
        ResolvedUtility::Takeover { .. } => wilson(successes, n, config.confidence),
    };
    Ok(UtilityEstimate {
        trials: n,
        mean,
        interval,
        successes,
        truncated,
        seed: config.seed,
        utilities,
    })
}

/// One setting of player 1's initial distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub initial: InitialDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub point: f64,
    pub interval: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "PASS",
            Verdict::Fails => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub label: String,
    /// Player 1 against the given opponents.
    pub with: Option<UtilityEstimate>,
    /// Player 1 against trivial opponents from `ε`.
    pub without: Option<UtilityEstimate>,
    /// Defined only when the baseline's lower confidence bound is positive.
    pub ratio: Option<RatioEstimate>,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub conditions: Vec<ConditionResult>,
    /// Smallest defined point ratio: the estimate of α.
    pub min_ratio: Option<f64>,
    pub alpha: Option<f64>,
    pub verdict: Option<Verdict>,
    pub trials: usize,
    pub seed: u64,
    pub paired: bool,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessConfig<T> {
    pub estimate: EstimateConfig<T>,
    pub trials: usize,
    pub volume: T,
    /// Reuse the treatment arm's trial seeds for the baseline arm.
    pub paired: bool,
}

fn ratio(with: &UtilityEstimate, without: &UtilityEstimate, paired: bool) -> Option<RatioEstimate> {
    if without.interval.lo <= 0.0 {
        return None;
    }
    let point = with.mean / without.mean;
    // Coupled arms that agree trial by trial carry no sampling error in the ratio.
    let interval = if paired && with.utilities == without.utilities {
        Interval::point(point)
    } else {
        Interval {
            lo: with.interval.lo / without.interval.hi,
            hi: with.interval.hi / without.interval.lo,
        }
    };
    Some(RatioEstimate { point, interval })
}

fn verdict_for(ratio: Option<RatioEstimate>, alpha: f64) -> Verdict {
    match ratio {
        Some(r) if r.interval.lo >= alpha => Verdict::Holds,
        Some(r) if r.interval.hi < alpha => Verdict::Fails,
        _ => Verdict::Inconclusive,
    }
}

/// Compares player 1's expected utility against `opponents` with its expected
/// utility against trivial opponents, once per condition.
///
/// Condition `c` uses stream seed `stream_seed(seed, [c, 0])` for the
/// treatment arm and `[c, 1]` for the baseline (or `[c, 0]` when paired).
pub fn estimate_robustness<T: Real>(
    player1: &Player<T>,
    opponents: &[Player<T>],
    conditions: &[Condition],
    alpha: Option<f64>,
    config: &RobustnessConfig<T>,
) -> Result<RobustnessReport, GameError> {
    if config.trials == 0 {
        return Err(GameError::NoTrials);
    }
    let master = config.estimate.seed;
    let mut results = Vec::with_capacity(conditions.len());
    for (ci, condition) in conditions.iter().enumerate() {
        let p1 = player1.with_initial(condition.initial.clone());
        let with_seed = rng::stream_seed(master, &[ci as u64, 0]);
        let without_seed = if config.paired {
            with_seed
        } else {
            rng::stream_seed(master, &[ci as u64, 1])
        };
        let arm = |others: Vec<Player<T>>, seed: u64| -> Result<UtilityEstimate, GameError> {
            let mut profile = vec![p1.clone()];
            profile.extend(others);
            let game = compose(profile, config.volume)?;
            let est = EstimateConfig {
                seed,
                ..config.estimate.clone()
            };
            estimate_expected_utility(&game, 0, config.trials, &est)
        };
        let trivial = (0..opponents.len())
            .map(|i| Player::trivial(format!("trivial-{}", i + 1)))
            .collect();
        let outcome = arm(opponents.to_vec(), with_seed).and_then(|w| Ok((w, arm(trivial, without_seed)?)));
        results.push(match outcome {
            Ok((with, without)) => {
                let r = ratio(&with, &without, config.paired);
                ConditionResult {
                    label: condition.label.clone(),
                    ratio: r,
                    verdict: alpha.map(|a| verdict_for(r, a)),
                    with: Some(with),
                    without: Some(without),
                    error: None,
                }
            }
            Err(e) => ConditionResult {
                label: condition.label.clone(),
                with: None,
                without: None,
                ratio: None,
                verdict: alpha.map(|_| Verdict::Inconclusive),
                error: Some(e.to_string()),
            },
        });
    }
    let min_ratio = results
        .iter()
        .filter_map(|c| c.ratio.map(|r| r.point))
        .reduce(f64::min);
    let verdict = alpha.map(|_| {
        let verdicts: Vec<Verdict> = results.iter().filter_map(|c| c.verdict).collect();
        if verdicts.contains(&Verdict::Fails) {
            Verdict::Fails
        } else if !verdicts.is_empty() && verdicts.iter().all(|&v| v == Verdict::Holds) {
            Verdict::Holds
        } else {
            Verdict::Inconclusive
        }
    });
    Ok(RobustnessReport {
        conditions: results,
        min_ratio,
        alpha,
        verdict,
        trials: config.trials,
        seed: master,
        paired: config.paired,
        confidence: config.estimate.confidence,
    })
}
