//! The `tadsim` command line: scenario runs, paired radius comparisons, the
//! suicidal-attacker check, the regression suite and Riccati dumps.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;

use tadsim_core::riccati::solve;
use tadsim_core::scenarios::{self, run_case_logged, RegressionOutcome};
use tadsim_core::{
    build_matrices, run_paired_delay, run_suicidal_check, run_with, Interaction, OptimizerSettings, PlayerId,
    Profile, Radius, ScenarioConfig, TerminationKind, TerminationRecord, TimeGrid, TrajectoryLog,
};

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const VALIDATION: u8 = 1;
    pub const NUMERICAL: u8 = 2;

    fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: Self::VALIDATION,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<tadsim_core::Error> for CliError {
    fn from(e: tadsim_core::Error) -> Self {
        let code = if e.is_numerical() {
            Self::NUMERICAL
        } else {
            Self::VALIDATION
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::validation(format!("{}: {e}", path.display()))
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "tadsim", version, about = "Target-attacker-defender games with limited observations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Fail with exit code 2 when the consistency optimizer misses its tolerance.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

/// Where the scenario comes from, plus dotted-key overrides.
#[derive(Debug, Args)]
pub struct Source {
    /// Scenario JSON, or an events.json sidecar from an earlier run.
    #[arg(long, required_unless_present = "scenario", conflicts_with = "scenario")]
    pub config: Option<PathBuf>,

    /// Name of a shipped scenario.
    #[arg(long)]
    pub scenario: Option<String>,

    /// Override a config entry, e.g. `--set lambda=0` or `--set visibility_radii.d3=0.6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write its artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "limited", value_parser = parse_profile)]
        profile: Profile,
        #[arg(long)]
        out: PathBuf,
        /// Also write riccati.csv.
        #[arg(long)]
        dump_riccati: bool,
    },
    /// Compare two limited runs that differ in one visibility radius.
    Paired {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = parse_player)]
        player: PlayerId,
        /// Replacement radius (a number or `inf`).
        #[arg(long, value_parser = parse_radius)]
        zeta: Radius,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Additional randomized pairs drawn from `--seed`.
        #[arg(long, default_value_t = 0)]
        trials: usize,
    },
    /// Check the straight-line behaviour of a suicidal attacker.
    SuicidalCheck {
        #[command(flatten)]
        source: Source,
    },
    /// Run the shipped regression scenarios against their expected outcomes.
    Regress {
        #[arg(long, default_value = "vi")]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Time tolerance; defaults to the manifest value.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Write the Riccati solution on the whole grid as CSV.
    DumpRiccati {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: tadsim_core::Error| e.to_string())
}

fn parse_player(s: &str) -> Result<PlayerId, String> {
    s.parse().map_err(|e: tadsim_core::Error| e.to_string())
}

fn parse_radius(s: &str) -> Result<Radius, String> {
    match s {
        "inf" | "infinity" | "unbounded" => Ok(Radius::Unbounded),
        _ => s
            .parse::<f64>()
            .map(Radius::Finite)
            .map_err(|_| format!("expected a number or `inf`, got `{s}`")),
    }
}

/// Parses, defaults, overrides and validates a scenario.
///
/// A sidecar written by `run` is accepted as well; its `config` member is
/// the effective configuration of that run.
pub fn load_config(path: &Path, overrides: &[String]) -> CliResult<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    load_config_str(&text, overrides)
}

pub fn load_config_str(text: &str, overrides: &[String]) -> CliResult<ScenarioConfig> {
    let mut doc: Value =
        serde_json::from_str(text).map_err(|e| CliError::validation(format!("malformed config: {e}")))?;
    if let Some(inner) = doc.get("config").filter(|_| doc.get("termination").is_some()) {
        doc = inner.clone();
    }
    let base = parse_doc(&doc)?;
    if overrides.is_empty() {
        return Ok(base);
    }
    let effective = base.to_json_value();
    for spec in overrides {
        apply_override(&mut doc, &effective, spec)?;
    }
    parse_doc(&doc)
}

fn parse_doc(doc: &Value) -> CliResult<ScenarioConfig> {
    Ok(ScenarioConfig::from_json(&doc.to_string())?)
}

/// Sets `key=value` in `doc`. The key must name an entry of the effective
/// configuration; missing intermediate entries are filled from it.
pub fn apply_override(doc: &mut Value, effective: &Value, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| CliError::validation(format!("override `{spec}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));

    let mut node = doc;
    let mut reference = effective;
    for segment in key.split('.') {
        let unknown = || CliError::validation(format!("unknown config key `{key}`"));
        reference = match reference {
            Value::Object(m) => m.get(segment).ok_or_else(unknown)?,
            Value::Array(a) => segment.parse::<usize>().ok().and_then(|i| a.get(i)).ok_or_else(unknown)?,
            _ => return Err(unknown()),
        };
        node = match node {
            Value::Object(m) => m.entry(segment).or_insert_with(|| reference.clone()),
            Value::Array(a) => {
                let i: usize = segment.parse().map_err(|_| unknown())?;
                a.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *node = value;
    Ok(())
}

fn resolve(source: &Source) -> CliResult<ScenarioConfig> {
    match (&source.config, &source.scenario) {
        (Some(path), _) => load_config(path, &source.overrides),
        (None, Some(name)) => {
            let text = scenarios::source(name).ok_or_else(|| {
                let known: Vec<_> = scenarios::names().collect();
                CliError::validation(format!("unknown scenario `{name}` (one of {})", known.join(", ")))
            })?;
            load_config_str(text, &source.overrides)
        }
        (None, None) => Err(CliError::validation("either --config or --scenario is required")),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Writes trajectory.csv, events.json and diagnostics.csv into `dir`.
pub fn write_artifacts(dir: &Path, cfg: &ScenarioConfig, log: &TrajectoryLog) -> CliResult<()> {
    create_dir(dir)?;
    log.write_csv(create(&dir.join("trajectory.csv"))?)?;
    write_json(&dir.join("events.json"), &log.sidecar(cfg))?;
    log.write_diagnostics_csv(create(&dir.join("diagnostics.csv"))?)?;
    Ok(())
}

fn write_riccati(dir: &Path, cfg: &ScenarioConfig) -> CliResult<()> {
    create_dir(dir)?;
    let mats = build_matrices(cfg)?;
    let sol = solve(&mats, TimeGrid::from_config(cfg))?;
    sol.write_csv(create(&dir.join("riccati.csv"))?)?;
    Ok(())
}

fn describe(t: &TerminationRecord) -> String {
    match t.kind {
        TerminationKind::Interception(p) => format!("interception by {p} at t = {:.3}", t.time),
        TerminationKind::Capture => format!("capture at t = {:.3}", t.time),
        TerminationKind::HorizonExpired => format!("horizon expired at t = {:.3}", t.time),
    }
}

fn settings(cli: &Cli) -> OptimizerSettings {
    OptimizerSettings {
        strict: cli.strict,
        ..OptimizerSettings::default()
    }
}

/// Caps the rayon pool at `TADSIM_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("TADSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::validation(format!("TADSIM_THREADS must be a positive integer, got `{value}`")))?;
    // A pool installed earlier in the same process stays in place.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Executes a parsed command line. `Ok(false)` means the command ran but its
/// check did not hold.
pub fn execute(cli: &Cli) -> CliResult<bool> {
    configure_threads()?;
    let settings = settings(cli);
    match &cli.command {
        Command::Run {
            source,
            profile,
            out,
            dump_riccati,
        } => {
            let cfg = resolve(source)?;
            let log = run_with(&cfg, *profile, &settings)?;
            write_artifacts(out, &cfg, &log)?;
            if *dump_riccati {
                write_riccati(out, &cfg)?;
            }
            let unconverged = log.diagnostics.iter().filter(|d| !d.converged).count();
            println!("{}", describe(&log.termination));
            println!("{} transition events, {unconverged} unconverged optimizer nodes", log.events.len());
            Ok(true)
        }
        Command::Paired {
            source,
            player,
            zeta,
            out,
            trials,
        } => {
            let cfg = resolve(source)?;
            let (report, log_a, log_b) = run_paired_delay(&cfg, *player, *zeta, &settings)?;
            if let Some(dir) = out {
                write_artifacts(&dir.join("a"), &cfg, &log_a)?;
                write_artifacts(&dir.join("b"), &cfg.with_visibility_radius(*player, *zeta)?, &log_b)?;
                write_json(&dir.join("delay.json"), &serde_json::to_value(&report).expect("json serializes"))?;
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("json serializes"));
            let mut ok = report.identical_before_first_edge;
            if *trials > 0 {
                let broken = random_pairs(&cfg, *trials, cli.seed, &settings)?;
                println!("{trials} randomized pairs (seed {}): {broken} differ before the first edge", cli.seed);
                ok &= broken == 0;
            }
            Ok(ok)
        }
        Command::SuicidalCheck { source } => {
            let cfg = resolve(source)?;
            let report = run_suicidal_check(&cfg, &settings)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("json serializes"));
            let straight = report.max_cross <= report.cross_tolerance && report.max_attacker_cross <= report.cross_tolerance;
            Ok(straight && report.max_state_deviation <= 1e-8)
        }
        Command::Regress { suite, out, tolerance } => {
            if suite != "vi" {
                return Err(CliError::validation(format!("unknown suite `{suite}` (available: vi)")));
            }
            let manifest = scenarios::manifest();
            let tol = tolerance.unwrap_or(manifest.tolerance);
            let results: Vec<(RegressionOutcome, TrajectoryLog)> = manifest
                .cases
                .par_iter()
                .map(|case| run_case_logged(case, tol, &settings))
                .collect::<tadsim_core::Result<_>>()?;
            if let Some(dir) = out {
                for (o, log) in &results {
                    write_artifacts(&dir.join(&o.case.name), &scenarios::by_name(&o.case.scenario)?, log)?;
                }
            }
            print!("{}", regression_table(results.iter().map(|(o, _)| o), tol));
            Ok(results.iter().all(|(o, _)| o.passed()))
        }
        Command::DumpRiccati { source, out } => {
            let cfg = resolve(source)?;
            write_riccati(out, &cfg)?;
            Ok(true)
        }
    }
}

pub fn regression_table<'a>(outcomes: impl Iterator<Item = &'a RegressionOutcome>, tolerance: f64) -> String {
    let mut s = format!(
        "{:<22} {:<18} {:>9} {:<18} {:>9} {:>7}  result\n",
        "case", "expected", "t", "observed", "t", "|dt|"
    );
    let mut total = 0;
    let mut passed = 0;
    for o in outcomes {
        let expected = match o.case.player {
            Some(p) => format!("{:?} {p}", o.case.kind),
            None => format!("{:?}", o.case.kind),
        };
        let observed = match o.termination.kind {
            TerminationKind::Interception(p) => format!("Interception {p}"),
            other => format!("{other:?}"),
        };
        let verdict = match (o.outcome_ok, o.time_ok) {
            (true, true) => "PASS",
            (false, _) => "FAIL (outcome)",
            (true, false) => "FAIL (time)",
        };
        s.push_str(&format!(
            "{:<22} {:<18} {:>9.3} {:<18} {:>9.3} {:>7.3}  {verdict}\n",
            o.case.name,
            expected,
            o.case.time,
            observed,
            o.termination.time,
            (o.termination.time - o.case.time).abs()
        ));
        total += 1;
        passed += usize::from(o.passed());
    }
    s.push_str(&format!("{passed}/{total} within tolerance {tolerance}\n"));
    s
}

/// Runs `trials` paired comparisons with random players and radii and counts
/// the pairs whose team controls differ before either first edge.
fn random_pairs(cfg: &ScenarioConfig, trials: usize, seed: u64, settings: &OptimizerSettings) -> CliResult<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<PlayerId> = (1..=cfg.n).map(PlayerId::Defender).collect();
    if cfg.interaction == Interaction::I2 {
        candidates.push(PlayerId::Target);
    }
    let jobs: Vec<(PlayerId, Radius)> = (0..trials)
        .map(|_| {
            let p = candidates[rng.random_range(0..candidates.len())];
            let floor = match p {
                PlayerId::Defender(i) => cfg.defender_capture_radii[i - 1],
                _ => 0.0,
            };
            (p, Radius::Finite(floor + rng.random_range(0.05..4.0)))
        })
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(p, r)| run_paired_delay(cfg, p, r, settings).map(|(rep, _, _)| rep))
        .collect::<tadsim_core::Result<Vec<_>>>()?;
    Ok(reports.iter().filter(|r| !r.identical_before_first_edge).count())
}
