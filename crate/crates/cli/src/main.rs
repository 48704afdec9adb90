//! `crngame`: simulate CRN games, sweep initial conditions and check
//! α-robustness from the command line.

mod config;
mod plot;
mod report;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crngame_core::game::ResolvedUtility;
use crngame_core::oracle::{self, DEFAULT_STATE_CAP};
use crngame_core::rng::trial_rng;
use crngame_core::ssa::TrajectoryDump;
use crngame_core::{
    compose, estimate_robustness, parser, ComposedGame, Condition, CountVector, EstimateConfig, Exact,
    InitialDistribution, Player64, RobustnessConfig, Scalar, SimConfig, Simulator, UtilitySpec, Verdict,
};

use config::{Experiment, Overrides};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_FAIL: u8 = 3;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "crngame", version, about = "Stochastic CRN games: simulation, sweeps and robustness")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trials (0 = all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Volume V in the mass-action propensities.
    #[arg(long, global = true)]
    volume: Option<f64>,
    /// Stop each trajectory at this simulated time.
    #[arg(long, global = true)]
    max_time: Option<f64>,
    /// Stop each trajectory after this many events.
    #[arg(long, global = true)]
    max_events: Option<u64>,
    /// Output path (CSV, trajectory dump or canonical text).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// SVG plot path.
    #[arg(long, global = true)]
    svg: Option<PathBuf>,
    /// Confidence level for intervals, in (0, 1).
    #[arg(long, global = true)]
    confidence: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trajectory of the composition of the given networks.
    Simulate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Initial counts, `NAME=COUNT[,NAME=COUNT...]`; overrides file `init` lines.
        #[arg(long = "init", value_name = "NAME=COUNT")]
        init: Vec<String>,
        /// Stop once these species can no longer change, `X,Y`.
        #[arg(long, value_name = "SPECIES")]
        watch: Option<String>,
    },
    /// Success frequency with and without opponents over a difference sweep.
    Sweep { config: PathBuf },
    /// Per-condition robustness ratios and a verdict for `--alpha`.
    Robustness {
        config: PathBuf,
        /// Required lower bound on every ratio; exit 3 if any condition falls short.
        #[arg(long)]
        alpha: Option<f64>,
        /// Reuse treatment-arm seeds for the baseline arm.
        #[arg(long)]
        paired: bool,
    },
    /// Exact absorption probability on the reachable state space.
    Oracle {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Initial counts, `NAME=COUNT[,NAME=COUNT...]`; overrides file `init` lines.
        #[arg(long = "init", value_name = "NAME=COUNT")]
        init: Vec<String>,
        /// Additional initial state to solve from (repeatable).
        #[arg(long = "state", value_name = "NAME=COUNT,...")]
        states: Vec<String>,
        /// Success: `X` ends holding the whole `X + Y` population.
        #[arg(long, value_name = "X,Y", conflicts_with = "majority")]
        takeover: Option<String>,
        /// Success: the initial majority of `X`, `Y` takes over (either on a tie).
        #[arg(long, value_name = "X,Y")]
        majority: Option<String>,
        /// Solve in exact rational arithmetic.
        #[arg(long)]
        exact: bool,
        /// Give up if more states than this are reachable.
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: usize,
    },
    /// Print a network file in canonical form.
    Fmt {
        file: PathBuf,
        /// Exit 1 if the file is not already canonical.
        #[arg(long)]
        check: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let g = &cli.global;
    if let Some(c) = g.confidence {
        if !(c > 0.0 && c < 1.0) {
            return Err(Failure::config(format!("--confidence must lie in (0, 1), got {c}")));
        }
    }
    match cli.command {
        Command::Simulate { files, init, watch } => simulate(g, &files, &init, watch.as_deref()),
        Command::Sweep { config } => sweep(g, &config),
        Command::Robustness { config, alpha, paired } => robustness(g, &config, alpha, paired),
        Command::Oracle {
            files,
            init,
            states,
            takeover,
            majority,
            exact,
            cap,
        } => {
            let predicate = match (takeover, majority) {
                (Some(s), None) => Predicate::Takeover(split_pair(&s)?),
                (None, Some(s)) => Predicate::Majority(split_pair(&s)?),
                _ => return Err(Failure::config("oracle needs --takeover X,Y or --majority X,Y")),
            };
            oracle_cmd(g, &files, &init, &states, &predicate, exact, cap)
        }
        Command::Fmt { file, check } => fmt(g, &file, check),
    }
}

fn overrides(g: &Global) -> Overrides {
    Overrides {
        seed: g.seed,
        threads: g.threads,
        volume: g.volume,
        max_time: g.max_time,
        max_events: g.max_events,
        confidence: g.confidence,
        out: g.out.clone(),
        svg: g.svg.clone(),
        alpha: None,
        paired: false,
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::runtime(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::runtime(e.to_string()))
        }
    }
}

/// Parses `A=1,B=2` into pairs.
fn parse_assignments(specs: &[String]) -> Result<Vec<(String, u64)>, Failure> {
    let mut out = Vec::new();
    for spec in specs {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, count) = part
                .split_once('=')
                .ok_or_else(|| Failure::config(format!("expected NAME=COUNT, got `{part}`")))?;
            let count = count
                .trim()
                .parse::<u64>()
                .map_err(|_| Failure::config(format!("bad count in `{part}`")))?;
            out.push((name.trim().to_owned(), count));
        }
    }
    Ok(out)
}

fn split_pair(s: &str) -> Result<(String, String), Failure> {
    match s.split(',').map(str::trim).collect::<Vec<_>>()[..] {
        [x, y] if !x.is_empty() && !y.is_empty() => Ok((x.to_owned(), y.to_owned())),
        _ => Err(Failure::config(format!("expected two species `X,Y`, got `{s}`"))),
    }
}

/// Composes each file as an indifferent player; initial state is the sum of
/// the files' `init` lines.
fn compose_files(files: &[PathBuf], volume: f64) -> Result<(ComposedGame<f64>, CountVector), Failure> {
    let mut players = Vec::with_capacity(files.len());
    for f in files {
        let doc = config::load_crn(f)?;
        let initial = InitialDistribution::Deterministic(doc.initial_state());
        players.push(Player64::new(f.display().to_string(), doc.crn, initial, UtilitySpec::Indifferent));
    }
    let game = compose(players, volume).map_err(|e| Failure::config(e.to_string()))?;
    // Deterministic initial distributions ignore the generator.
    let state = game.sample_initial_state(&mut trial_rng(0, 0));
    Ok((game, state))
}

fn assign(game: &ComposedGame<f64>, state: &mut CountVector, pairs: &[(String, u64)]) -> Result<(), Failure> {
    for (name, count) in pairs {
        let i = species_index(game, name)?;
        state[i] = *count;
    }
    Ok(())
}

fn species_index(game: &ComposedGame<f64>, name: &str) -> Result<usize, Failure> {
    game.crn()
        .species()
        .index_of(name)
        .ok_or_else(|| Failure::config(format!("unknown species `{name}`")))
}

fn format_state(game: &ComposedGame<f64>, state: &CountVector) -> String {
    game.crn()
        .species()
        .names()
        .iter()
        .zip(state.iter())
        .map(|(n, c)| format!("{n}={c}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn simulate(g: &Global, files: &[PathBuf], init: &[String], watch: Option<&str>) -> Result<u8, Failure> {
    let volume = g.volume.unwrap_or(1.0);
    let (game, mut state) = compose_files(files, volume)?;
    assign(&game, &mut state, &parse_assignments(init)?)?;
    let watched = match watch {
        Some(w) => Some(
            w.split(',')
                .map(|s| species_index(&game, s.trim()))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let seed = g.seed.unwrap_or(0);
    let config = SimConfig {
        volume,
        max_time: g.max_time,
        max_events: g.max_events,
        seed,
        watched,
    };
    let sim = Simulator::new(game.crn(), config);
    let mut rng = trial_rng(seed, 0);
    let outcome = match &g.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            let mut dump = TrajectoryDump::new(std::io::BufWriter::new(file), game.crn().species());
            let out = sim
                .simulate(state, &mut rng, &mut dump)
                .map_err(|e| Failure::runtime(e.to_string()))?;
            dump.into_inner()
                .and_then(|mut w| w.flush())
                .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            out
        }
        None => sim
            .simulate(state, &mut rng, &mut ())
            .map_err(|e| Failure::runtime(e.to_string()))?,
    };
    println!("state: {}", format_state(&game, &outcome.final_state));
    println!("stop: {}", outcome.stop.as_str());
    println!("events: {}", outcome.events);
    println!("time: {:e}", outcome.time);
    Ok(0)
}

fn load_experiment(g: &Global, path: &Path, alpha: Option<f64>, paired: bool) -> Result<Experiment, Failure> {
    let mut o = overrides(g);
    o.alpha = alpha;
    o.paired = paired;
    config::load(path, &o)
}

fn run_report(exp: &Experiment, conditions: &[Condition]) -> Result<crngame_core::RobustnessReport, Failure> {
    let s = &exp.settings;
    let config = RobustnessConfig {
        estimate: EstimateConfig {
            seed: s.seed,
            max_time: s.max_time,
            max_events: s.max_events,
            workers: s.threads,
            confidence: s.confidence,
        },
        trials: s.trials,
        volume: s.volume,
        paired: s.paired,
    };
    estimate_robustness(&exp.players[0], &exp.players[1..], conditions, s.alpha, &config)
        .map_err(|e| Failure::runtime(e.to_string()))
}

fn sweep(g: &Global, path: &Path) -> Result<u8, Failure> {
    let exp = load_experiment(g, path, None, false)?;
    let sweep = exp
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::config(format!("{}: no [sweep] section", path.display())))?;
    let conditions: Vec<Condition> = sweep.conditions.iter().map(|(_, c)| c.clone()).collect();
    let report = run_report(&exp, &conditions)?;
    let csv = report::sweep_csv(sweep, &exp.settings, &report);
    write_output(exp.settings.out.as_deref(), &csv)?;
    if let Some(svg) = &exp.settings.svg {
        let picture = plot::render(&csv).map_err(Failure::runtime)?;
        write_output(Some(svg), &picture)?;
    }
    Ok(0)
}

fn robustness(g: &Global, path: &Path, alpha: Option<f64>, paired: bool) -> Result<u8, Failure> {
    let exp = load_experiment(g, path, alpha, paired)?;
    let (conditions, rejected) = match &exp.sweep {
        Some(s) => (s.conditions.iter().map(|(_, c)| c.clone()).collect(), s.rejected.clone()),
        None => (
            vec![Condition {
                label: "base".to_owned(),
                initial: exp.players[0].initial.clone(),
            }],
            Vec::new(),
        ),
    };
    let report = run_report(&exp, &conditions)?;
    let csv = report::robustness_csv(&exp.settings, &rejected, &report);
    write_output(exp.settings.out.as_deref(), &csv)?;
    println!("{}", report::robustness_summary(&report));
    Ok(if report.verdict == Some(Verdict::Fails) {
        EXIT_FAIL
    } else {
        0
    })
}

enum Predicate {
    Takeover((String, String)),
    Majority((String, String)),
}

/// Probability with 12 significant digits.
fn significant12(p: f64) -> String {
    if p == 0.0 || !p.is_finite() {
        return format!("{p:.11}");
    }
    let decimals = (11 - p.abs().log10().floor() as i64).max(0) as usize;
    format!("{p:.decimals$}")
}

fn oracle_cmd(
    g: &Global,
    files: &[PathBuf],
    init: &[String],
    states: &[String],
    predicate: &Predicate,
    exact: bool,
    cap: usize,
) -> Result<u8, Failure> {
    let volume = g.volume.unwrap_or(1.0);
    let (game, mut base) = compose_files(files, volume)?;
    assign(&game, &mut base, &parse_assignments(init)?)?;
    let mut starts = Vec::new();
    if states.is_empty() {
        starts.push(base);
    } else {
        for s in states {
            let mut state = base.clone();
            assign(&game, &mut state, &parse_assignments(std::slice::from_ref(s))?)?;
            starts.push(state);
        }
    }
    let ((xn, yn), majority) = match predicate {
        Predicate::Takeover(p) => (p, false),
        Predicate::Majority(p) => (p, true),
    };
    let (x, y) = (species_index(&game, xn)?, species_index(&game, yn)?);
    let utility = ResolvedUtility::Takeover { x, y };

    let mut out = String::new();
    for start in &starts {
        let total = start[x] + start[y];
        let success = |s: &CountVector| {
            if majority {
                crngame_core::game::evaluate_utility(utility, start, s, crngame_core::StopReason::Terminal) == 1.0
            } else {
                s[x] == total && s[y] == 0
            }
        };
        let fail = |e: oracle::OracleError| match e {
            oracle::OracleError::TooLarge { cap } => Failure::runtime(format!(
                "reachable state space exceeds {cap} states; estimate with `crngame simulate` or `sweep` instead"
            )),
            other => Failure::runtime(other.to_string()),
        };
        let (p, exact_text) = if exact {
            let crn = game
                .crn()
                .map_rates(|k| Exact::parse_decimal(&k.to_decimal()).expect("finite rate"))
                .map_err(|e| Failure::runtime(e.to_string()))?;
            let v = Exact::parse_decimal(&volume.to_decimal())
                .ok_or_else(|| Failure::config("volume must be finite"))?;
            let space = oracle::enumerate_settled(&crn, start, &v, cap, &[x, y]).map_err(fail)?;
            let p = oracle::absorption_probabilities(&space, success).map_err(fail)?.initial();
            (Scalar::to_f64(&p), Some(p.to_string()))
        } else {
            let space = oracle::enumerate_settled(game.crn(), start, &volume, cap, &[x, y]).map_err(fail)?;
            let p = oracle::absorption_probabilities(&space, success).map_err(fail)?.initial();
            (p, None)
        };
        out.push_str(&significant12(p));
        out.push('\t');
        out.push_str(&format_state(&game, start));
        if let Some(t) = exact_text {
            out.push('\t');
            out.push_str(&t);
        }
        out.push('\n');
    }
    write_output(g.out.as_deref(), &out)?;
    Ok(0)
}

fn fmt(g: &Global, file: &Path, check: bool) -> Result<u8, Failure> {
    let bytes = std::fs::read(file).map_err(|e| Failure::config(format!("{}: {e}", file.display())))?;
    let doc = parser::parse_bytes::<f64>(&bytes).map_err(|e| Failure::config(format!("{}:{e}", file.display())))?;
    let canonical = parser::serialize(&doc);
    if check {
        if bytes != canonical.as_bytes() {
            eprintln!("{}: not in canonical form", file.display());
            return Ok(EXIT_USAGE);
        }
        return Ok(0);
    }
    write_output(g.out.as_deref(), &canonical)?;
    Ok(0)
}
