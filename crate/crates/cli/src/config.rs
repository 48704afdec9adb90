//! Experiment definitions: TOML (or JSON) files naming the players' networks,
//! their initial counts and utilities, and an optional difference sweep.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crngame_core::game::CountDistribution;
use crngame_core::{parser, Condition, CrnDocument, InitialDistribution, Player64, UtilitySpec};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub sweep: Option<SweepSection>,
    #[serde(rename = "player", default)]
    pub players: Vec<PlayerSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub seed: u64,
    pub trials: usize,
    pub volume: f64,
    pub threads: usize,
    pub confidence: f64,
    pub max_time: Option<f64>,
    pub max_events: Option<u64>,
    /// Reuse treatment-arm seeds in the baseline arm.
    pub paired: bool,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 1000,
            volume: 1.0,
            threads: 0,
            confidence: 0.99,
            max_time: None,
            max_events: None,
            paired: false,
            alpha: None,
            out: None,
            svg: None,
        }
    }
}

/// `x = (n + d) / 2`, `y = (n - d) / 2` for `d` in `d_start..=d_end` by `d_step`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub x: String,
    pub y: String,
    pub n: u64,
    pub d_start: i64,
    pub d_end: i64,
    pub d_step: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSection {
    pub name: Option<String>,
    pub crn: PathBuf,
    #[serde(default)]
    pub utility: UtilityConfig,
    #[serde(default)]
    pub init: BTreeMap<String, InitValue>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityConfig {
    #[default]
    Indifferent,
    Takeover { x: String, y: String },
}

/// A constant count or an inclusive `[lo, hi]` range drawn uniformly per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum InitValue {
    Constant(u64),
    Range([u64; 2]),
}

impl ExperimentFile {
    pub fn parse(text: &str, json: bool) -> Result<Self, String> {
        if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }
}

/// Run settings after command-line overrides.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub trials: usize,
    pub volume: f64,
    pub threads: usize,
    pub confidence: f64,
    pub max_time: Option<f64>,
    pub max_events: Option<u64>,
    pub paired: bool,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub n: u64,
    /// Accepted differences with their conditions, in sweep order.
    pub conditions: Vec<(i64, Condition)>,
    /// Differences dropped because `n + d` is odd.
    pub rejected: Vec<i64>,
}

#[derive(Debug)]
pub struct Experiment {
    pub settings: Settings,
    pub players: Vec<Player64>,
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub volume: Option<f64>,
    pub max_time: Option<f64>,
    pub max_events: Option<u64>,
    pub confidence: Option<f64>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub paired: bool,
}

fn bad(msg: impl Into<String>) -> Failure {
    Failure::config(msg)
}

/// Reads a `.crn` file; errors carry the file name and position.
pub fn load_crn(path: &Path) -> Result<CrnDocument<f64>, Failure> {
    let bytes = std::fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    parser::parse_bytes(&bytes).map_err(|e| bad(format!("{}:{e}", path.display())))
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Experiment, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let file = ExperimentFile::parse(&text, json).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve(file, base, overrides)
}

pub fn resolve(file: ExperimentFile, base: &Path, o: &Overrides) -> Result<Experiment, Failure> {
    let e = file.experiment;
    let settings = Settings {
        seed: o.seed.unwrap_or(e.seed),
        trials: e.trials,
        volume: o.volume.unwrap_or(e.volume),
        threads: o.threads.unwrap_or(e.threads),
        confidence: o.confidence.unwrap_or(e.confidence),
        max_time: o.max_time.or(e.max_time),
        max_events: o.max_events.or(e.max_events),
        paired: o.paired || e.paired,
        alpha: o.alpha.or(e.alpha),
        out: o.out.clone().or_else(|| e.out.map(|p| base.join(p))),
        svg: o.svg.clone().or_else(|| e.svg.map(|p| base.join(p))),
    };
    check_settings(&settings)?;
    if file.players.is_empty() {
        return Err(bad("experiment needs at least one [[player]]"));
    }

    let mut players = Vec::with_capacity(file.players.len());
    for (i, p) in file.players.iter().enumerate() {
        let name = p.name.clone().unwrap_or_else(|| format!("player-{}", i + 1));
        let doc = load_crn(&base.join(&p.crn))?;
        let initial = initial_distribution(&doc, &p.init).map_err(|m| bad(format!("player `{name}`: {m}")))?;
        let utility = match &p.utility {
            UtilityConfig::Indifferent => UtilitySpec::Indifferent,
            UtilityConfig::Takeover { x, y } => {
                for s in [x, y] {
                    if doc.crn.species().index_of(s).is_none() {
                        return Err(bad(format!("player `{name}`: utility species `{s}` not in its network")));
                    }
                }
                UtilitySpec::takeover(x, y)
            }
        };
        players.push(Player64::new(name, doc.crn, initial, utility));
    }

    let sweep = match file.sweep {
        Some(s) => Some(build_sweep(&s, &players[0])?),
        None => None,
    };
    Ok(Experiment {
        settings,
        players,
        sweep,
    })
}

fn check_settings(s: &Settings) -> Result<(), Failure> {
    if s.trials == 0 {
        return Err(bad("trials must be at least 1"));
    }
    if !(s.confidence > 0.0 && s.confidence < 1.0) {
        return Err(bad(format!("confidence must lie in (0, 1), got {}", s.confidence)));
    }
    if !(s.volume > 0.0 && s.volume.is_finite()) {
        return Err(bad(format!("volume must be positive and finite, got {}", s.volume)));
    }
    if let Some(t) = s.max_time {
        if t.is_nan() || t < 0.0 {
            return Err(bad(format!("max_time must be nonnegative, got {t}")));
        }
    }
    if let Some(a) = s.alpha {
        if !(0.0..=1.0).contains(&a) {
            return Err(bad(format!("alpha must lie in [0, 1], got {a}")));
        }
    }
    Ok(())
}

fn initial_distribution(
    doc: &CrnDocument<f64>,
    overrides: &BTreeMap<String, InitValue>,
) -> Result<InitialDistribution, String> {
    let mut counts: Vec<CountDistribution> = doc
        .initial_state()
        .iter()
        .map(|&c| CountDistribution::Constant(c))
        .collect();
    for (species, value) in overrides {
        let i = doc
            .crn
            .species()
            .index_of(species)
            .ok_or_else(|| format!("init for unknown species `{species}`"))?;
        counts[i] = match *value {
            InitValue::Constant(c) => CountDistribution::Constant(c),
            InitValue::Range([lo, hi]) if lo <= hi => CountDistribution::Uniform { lo, hi },
            InitValue::Range([lo, hi]) => return Err(format!("init range for `{species}` is empty: [{lo}, {hi}]")),
        };
    }
    Ok(InitialDistribution::IndependentPerSpecies(counts))
}

fn build_sweep(s: &SweepSection, player1: &Player64) -> Result<Sweep, Failure> {
    if s.d_step == 0 {
        return Err(bad("sweep d_step must be positive"));
    }
    if s.d_end < s.d_start {
        return Err(bad("sweep d_end is below d_start"));
    }
    let table = player1.strategy.species();
    let index = |name: &str| {
        table
            .index_of(name)
            .ok_or_else(|| bad(format!("sweep species `{name}` not in the first player's network")))
    };
    let (xi, yi) = (index(&s.x)?, index(&s.y)?);
    if xi == yi {
        return Err(bad("sweep x and y must differ"));
    }
    let base = match &player1.initial {
        InitialDistribution::IndependentPerSpecies(v) => v.clone(),
        InitialDistribution::Deterministic(v) => v.iter().map(|&c| CountDistribution::Constant(c)).collect(),
    };
    let n = s.n as i64;
    let mut conditions = Vec::new();
    let mut rejected = Vec::new();
    let mut d = s.d_start;
    while d <= s.d_end {
        if d.abs() > n {
            return Err(bad(format!("sweep difference {d} exceeds n = {n}")));
        }
        if (n + d).rem_euclid(2) != 0 {
            rejected.push(d);
        } else {
            let mut counts = base.clone();
            counts[xi] = CountDistribution::Constant(((n + d) / 2) as u64);
            counts[yi] = CountDistribution::Constant(((n - d) / 2) as u64);
            conditions.push((
                d,
                Condition {
                    label: format!("d={d}"),
                    initial: InitialDistribution::IndependentPerSpecies(counts),
                },
            ));
        }
        d += s.d_step as i64;
    }
    if conditions.is_empty() {
        return Err(bad(format!("no sweep condition has n + d even (n = {n})")));
    }
    Ok(Sweep {
        n: s.n,
        conditions,
        rejected,
    })
}
