//! Stochastic chemical reaction network games.
//!
//! Networks are simulated under stochastic mass-action kinetics with the exact
//! direct-method SSA, composed into multi-player games, and scored by Monte
//! Carlo estimates of each player's expected utility. A small exact CTMC solver
//! provides ground truth for small instances.
//!
//! The numeric core is generic over [`Scalar`]: simulation runs on any [`Real`]
//! (`f32`, `f64`), and the oracle additionally accepts [`Exact`] rationals.

pub mod crn;
pub mod game;
pub mod oracle;
pub mod parser;
pub mod rng;
pub mod scalar;
pub mod ssa;
pub mod stats;

pub use crn::{CountVector, Crn, CrnBuilder, CrnError, Reaction, SpeciesTable};
pub use game::{
    compose, estimate_expected_utility, estimate_robustness, validate_catalytic, ComposedGame, Condition,
    EstimateConfig, GameError, InitialDistribution, Player, RobustnessConfig, RobustnessReport, UtilitySpec,
    Verdict,
};
pub use oracle::{absorption_probabilities, enumerate, enumerate_settled, Absorption, OracleError, StateSpace};
pub use parser::{CrnDocument, ParseError};
pub use scalar::{Exact, Real, Scalar};
pub use ssa::{Observer, Outcome, SimConfig, SimError, Simulator, StopReason, TrajectoryEvent};

/// Double-precision network, the default for simulation.
pub type Crn64 = Crn<f64>;
/// Network with exact rational rate constants, for the oracle.
pub type ExactCrn = Crn<Exact>;
pub type Simulator64<'a> = Simulator<'a, f64>;
pub type Player64 = Player<f64>;
