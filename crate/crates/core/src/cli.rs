//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 other runtime failure, 2 verification failure,
//! 3 solver non-convergence, 4 configuration error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_and_validate, ConfigError, RunConfig};
use crate::economy::Economy;
use crate::equilibrium::{duty_expenditure_share, solve, EquilibriumError, EquilibriumResult};
use crate::output::{line_chart, num, Manifest, Series, Table};
use crate::preferences::{check_all, construct_ordinal_utility, RelationFile, Witness};
use crate::scenarios::{estimate_critical_mass, run_slavery_eras, run_sugar, veblen_demand_curve};
use crate::topology::{discrete_topology, projection_continuous, verify_topology_axioms, TopologyWitness};
use crate::transition::{TraceRecord, TransitionError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_VERIFICATION: u8 = 2;
pub const EXIT_NO_CONVERGENCE: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;

pub const CRITICAL_MASS_TOL: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(
    name = "ethical-fibers",
    version,
    about = "Duty-constrained exchange economies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overriding the config's `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify the base-space topology and continuity of the projection.
    CheckTopology(ConfigArgs),
    /// Check the preference axioms of a relation file.
    CheckPreferences {
        #[arg(long)]
        relation: PathBuf,
    },
    /// Solve the equilibrium of one fiber, or of every fiber.
    Solve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        fiber: Option<String>,
    },
    /// Solve each step of the configured path.
    Trace {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Duty-expenditure share of one fiber over a range of duty weights.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        fiber: String,
        #[arg(long, default_value_t = 0.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    Sugar {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        estimate_critical_mass: bool,
    },
    Slavery(ConfigArgs),
    Veblen(ConfigArgs),
}

/// A failed command: exit code and message for standard error.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_RUNTIME, e.to_string())
    }
}

impl From<EquilibriumError> for Failure {
    fn from(e: EquilibriumError) -> Self {
        let code = match e {
            EquilibriumError::NoConvergence(_) => EXIT_NO_CONVERGENCE,
            _ => EXIT_RUNTIME,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<TransitionError> for Failure {
    fn from(e: TransitionError) -> Self {
        let code = if e.is_non_convergence() {
            EXIT_NO_CONVERGENCE
        } else {
            EXIT_RUNTIME
        };
        Failure::new(code, e.to_string())
    }
}

/// What a successful command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Printed to standard output.
    pub stdout: String,
    /// Files written, relative names inside the output directory.
    pub files: Vec<(String, String)>,
    /// Verification or convergence failure still worth reporting.
    pub code: u8,
}

struct Run {
    started: Instant,
    command: String,
    config: RunConfig,
    out_dir: PathBuf,
}

impl Run {
    fn load(command: &str, args: &ConfigArgs) -> Result<Self, Failure> {
        let config = parse_and_validate(&args.config)?;
        let out_dir = args
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&config.raw.output.dir));
        Ok(Run {
            started: Instant::now(),
            command: command.into(),
            config,
            out_dir,
        })
    }

    fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Writes the outcome's files and the manifest into the output directory.
    fn finish(self, outcome: Outcome) -> Result<Outcome, Failure> {
        let dir = &self.out_dir;
        std::fs::create_dir_all(dir)?;
        for (name, text) in &outcome.files {
            std::fs::write(dir.join(name), text)?;
        }
        let manifest = Manifest {
            command: self.command.clone(),
            config_sha256: self.config.digest.clone(),
            seed: self.config.seed(),
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_ms: self.started.elapsed().as_millis(),
            outputs: outcome.files.iter().map(|(n, _)| n.clone()).collect(),
        };
        manifest.write(&dir.join("manifest.json"))?;
        Ok(outcome)
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(outcome.code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn dispatch(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::CheckTopology(args) => {
            let run = Run::load("check-topology", args)?;
            let outcome = check_topology(run.config())?;
            run.finish(outcome)
        }
        Command::CheckPreferences { relation } => check_preferences(relation),
        Command::Solve { cfg, fiber } => {
            let run = Run::load("solve", cfg)?;
            let outcome = solve_fibers(run.config(), fiber.as_deref())?;
            run.finish(outcome)
        }
        Command::Trace { cfg, svg } => {
            let run = Run::load("trace", cfg)?;
            let outcome = trace(run.config(), svg.as_deref())?;
            run.finish(outcome)
        }
        Command::Scenario(ScenarioCommand::Sugar {
            cfg,
            estimate_critical_mass,
        }) => {
            let run = Run::load("scenario sugar", cfg)?;
            let outcome = sugar(run.config(), *estimate_critical_mass)?;
            run.finish(outcome)
        }
        Command::Scenario(ScenarioCommand::Slavery(cfg)) => {
            let run = Run::load("scenario slavery", cfg)?;
            let outcome = slavery(run.config())?;
            run.finish(outcome)
        }
        Command::Scenario(ScenarioCommand::Veblen(cfg)) => {
            let run = Run::load("scenario veblen", cfg)?;
            let outcome = veblen(run.config())?;
            run.finish(outcome)
        }
        Command::Sweep {
            cfg,
            fiber,
            lambda_min,
            lambda_max,
            steps,
        } => {
            let run = Run::load("sweep", cfg)?;
            let outcome = sweep(run.config(), fiber, *lambda_min, *lambda_max, *steps)?;
            run.finish(outcome)
        }
    }
}

fn witness_text(w: &Option<TopologyWitness>) -> String {
    w.map(|w| w.to_string()).unwrap_or_default()
}

pub fn check_topology(config: &RunConfig) -> Result<Outcome, Failure> {
    let base = config
        .base
        .as_ref()
        .ok_or_else(|| Failure::new(EXIT_CONFIG, "no duty bundles declared; base space is empty"))?;
    let family = config.family.clone().unwrap_or_else(|| discrete_topology(base));
    let axioms = verify_topology_axioms(&family, base);
    let mut table = Table::new(&["check", "fiber", "passed", "open_sets", "checked", "witness"]);
    table.push([
        "axioms".to_string(),
        String::new(),
        axioms.passed.to_string(),
        axioms.open_sets.to_string(),
        axioms.checked.to_string(),
        witness_text(&axioms.witness),
    ]);
    let mut passed = axioms.passed;
    for (y, fiber) in &config.fibers {
        let c = projection_continuous(base, &family, (fiber.n(), fiber.l()));
        passed &= c.passed;
        table.push([
            "projection".to_string(),
            y.clone(),
            c.passed.to_string(),
            family.len().to_string(),
            c.probes.to_string(),
            witness_text(&c.witness),
        ]);
    }
    let csv = table.to_csv();
    Ok(Outcome {
        stdout: csv.clone(),
        files: vec![("topology.csv".into(), csv)],
        code: if passed { EXIT_OK } else { EXIT_VERIFICATION },
    })
}

fn witness_cell(w: &Option<Witness>) -> String {
    match w {
        None => String::new(),
        Some(Witness::Point(a)) => a.to_string(),
        Some(Witness::Pair(a, b)) => format!("{a} {b}"),
        Some(Witness::Triple(a, b, c)) => format!("{a} {b} {c}"),
    }
}

pub fn check_preferences(path: &Path) -> Result<Outcome, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("cannot read {}: {e}", path.display())))?;
    let file: RelationFile = serde_json::from_str(&text)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    let rel = file
        .into_relation()
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let reports = check_all(&rel);
    let mut table = Table::new(&["axiom", "passed", "witness"]);
    for r in &reports {
        table.push([
            serde_json::to_value(r.axiom)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            r.passed.to_string(),
            witness_cell(&r.witness),
        ]);
    }
    let mut stdout = table.to_csv();
    let mut code = EXIT_VERIFICATION;
    if let Ok(utility) = construct_ordinal_utility(&rel) {
        code = EXIT_OK;
        let mut ranks = Table::new(&["point", "coordinates", "rank"]);
        for (i, p) in rel.grid().points().iter().enumerate() {
            let coords: Vec<String> = p.coords().map(num).collect();
            ranks.push([i.to_string(), coords.join(" "), utility.rank(i).to_string()]);
        }
        stdout.push('\n');
        stdout.push_str(&ranks.to_csv());
    }
    Ok(Outcome {
        stdout,
        files: Vec::new(),
        code,
    })
}

fn economy_for(config: &RunConfig, y: &str) -> Result<Economy, Failure> {
    let fiber = config
        .fiber(y)
        .ok_or_else(|| Failure::new(EXIT_CONFIG, format!("unknown fiber `{y}`")))?;
    Economy::from_templates(fiber, config.agents(), None, None)
        .map_err(|e| Failure::new(EXIT_RUNTIME, format!("fiber {y}: {e}")))
}

fn index_cell(r: &EquilibriumResult) -> String {
    r.index
        .value()
        .map(|v| v.to_string())
        .unwrap_or_else(|| "undefined".into())
}

/// Long-format rows `fiber,section,agent,dimension,value` for one result.
pub fn equilibrium_rows(table: &mut Table, economy: &Economy, r: &EquilibriumResult) {
    let fiber = &economy.fiber;
    let names: Vec<&String> = fiber.goods.iter().chain(&fiber.duties).collect();
    for (name, p) in names.iter().zip(r.prices.as_slice()) {
        table.push([
            r.fiber.clone(),
            "price".into(),
            String::new(),
            name.to_string(),
            num(*p),
        ]);
    }
    for (agent, b) in &r.allocations {
        for (name, q) in names.iter().zip(b.coords()) {
            table.push([
                r.fiber.clone(),
                "allocation".into(),
                agent.clone(),
                name.to_string(),
                num(q),
            ]);
        }
    }
    for (k, v) in [
        ("residual", num(r.residual)),
        ("iterations", r.iterations.to_string()),
        ("converged", r.converged.to_string()),
        ("index", index_cell(r)),
        ("duty_share", num(duty_expenditure_share(economy, r))),
    ] {
        table.push([r.fiber.clone(), "summary".into(), String::new(), k.to_string(), v]);
    }
}

pub fn solve_fibers(config: &RunConfig, only: Option<&str>) -> Result<Outcome, Failure> {
    let ids: Vec<String> = match only {
        Some(y) => vec![y.to_string()],
        None => config.fibers.keys().cloned().collect(),
    };
    if ids.is_empty() {
        return Err(Failure::new(EXIT_CONFIG, "no fibers configured"));
    }
    let mut table = Table::new(&["fiber", "section", "agent", "dimension", "value"]);
    let mut code = EXIT_OK;
    let mut messages = Vec::new();
    for y in &ids {
        let economy = economy_for(config, y)?;
        let result = match solve(&economy, config.solver()) {
            Ok(r) => r,
            Err(EquilibriumError::NoConvergence(best)) => {
                code = EXIT_NO_CONVERGENCE;
                messages.push(format!("fiber {y}: no convergence, residual {:e}", best.residual));
                *best
            }
            Err(e) => return Err(Failure::new(EXIT_RUNTIME, format!("fiber {y}: {e}"))),
        };
        equilibrium_rows(&mut table, &economy, &result);
    }
    for m in messages {
        log::error!("{m}");
    }
    let csv = table.to_csv();
    Ok(Outcome {
        stdout: csv.clone(),
        files: vec![("solve.csv".into(), csv)],
        code,
    })
}

/// Per-(step, agent, dimension) rows of a trace.
pub fn trace_table(trace: &[TraceRecord]) -> Table {
    let mut table = Table::new(&[
        "step",
        "t",
        "y",
        "agent",
        "dimension",
        "kind",
        "endowment",
        "allocation",
    ]);
    for r in trace {
        for (agent, b) in &r.result.allocations {
            let endow = r.endowments.get(agent);
            for (i, g) in r.goods.iter().enumerate() {
                let w = endow.and_then(|e| e.get(i)).copied().unwrap_or(0.0);
                table.push([
                    r.step.to_string(),
                    r.t.to_string(),
                    r.y_id.clone(),
                    agent.clone(),
                    g.clone(),
                    "good".into(),
                    num(w),
                    num(b.x[i]),
                ]);
            }
            for (j, d) in r.duties.iter().enumerate() {
                table.push([
                    r.step.to_string(),
                    r.t.to_string(),
                    r.y_id.clone(),
                    agent.clone(),
                    d.clone(),
                    "duty".into(),
                    "0".into(),
                    num(b.e[j]),
                ]);
            }
        }
    }
    table
}

/// One row per step.
pub fn trace_summary(trace: &[TraceRecord]) -> Table {
    let mut table = Table::new(&[
        "step",
        "t",
        "y",
        "lambda",
        "duty_share",
        "residual",
        "iterations",
        "index",
        "stranded",
    ]);
    for r in trace {
        table.push([
            r.step.to_string(),
            r.t.to_string(),
            r.y_id.clone(),
            num(r.lambda),
            num(r.duty_share),
            num(r.result.residual),
            r.result.iterations.to_string(),
            index_cell(&r.result),
            num(r.stranded.iter().map(|s| s.quantity).sum()),
        ]);
    }
    table
}

pub fn trace_volumes(trace: &[TraceRecord]) -> Table {
    let mut table = Table::new(&["step", "y", "good", "volume", "price"]);
    for r in trace {
        for (i, g) in r.goods.iter().enumerate() {
            table.push([
                r.step.to_string(),
                r.y_id.clone(),
                g.clone(),
                num(r.volume[i]),
                num(r.result.prices.as_slice()[i]),
            ]);
        }
    }
    table
}

fn trace_chart(trace: &[TraceRecord]) -> String {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in trace {
        for (agent, b) in &r.result.allocations {
            let names = r.goods.iter().chain(&r.duties);
            for (name, q) in names.zip(b.coords()) {
                series
                    .entry(format!("{agent}:{name}"))
                    .or_default()
                    .push((r.t as f64, q));
            }
        }
    }
    let series: Vec<Series> = series
        .into_iter()
        .map(|(name, points)| Series { name, points })
        .collect();
    line_chart("Equilibrium allocations along the path", "t", "quantity", &series)
}

fn trace_outcome(trace: &[TraceRecord], svg: Option<&Path>, prefix: &str) -> Result<Outcome, Failure> {
    let rows = trace_table(trace).to_csv();
    let summary = trace_summary(trace).to_csv();
    let volumes = trace_volumes(trace).to_csv();
    if let Some(path) = svg {
        std::fs::write(path, trace_chart(trace))?;
    }
    Ok(Outcome {
        stdout: summary.clone(),
        files: vec![
            (format!("{prefix}.csv"), rows),
            (format!("{prefix}_summary.csv"), summary),
            (format!("{prefix}_volumes.csv"), volumes),
        ],
        code: EXIT_OK,
    })
}

pub fn trace(config: &RunConfig, svg: Option<&Path>) -> Result<Outcome, Failure> {
    if config.path.is_none() {
        return Err(Failure::new(EXIT_CONFIG, "config has no path"));
    }
    let records = run_slavery_eras(config)?;
    let mut outcome = trace_outcome(&records, svg, "trace")?;
    if config.raw.output.svg && svg.is_none() {
        outcome.files.push(("trace.svg".into(), trace_chart(&records)));
    }
    Ok(outcome)
}

pub fn slavery(config: &RunConfig) -> Result<Outcome, Failure> {
    if config.path.is_none() {
        return Err(Failure::new(EXIT_CONFIG, "config has no path"));
    }
    let records = run_slavery_eras(config)?;
    let mut outcome = trace_outcome(&records, None, "slavery")?;
    if config.raw.output.svg {
        outcome.files.push(("slavery.svg".into(), trace_chart(&records)));
    }
    Ok(outcome)
}

pub fn sugar(config: &RunConfig, critical_mass: bool) -> Result<Outcome, Failure> {
    let cfg = config
        .raw
        .scenarios
        .sugar
        .clone()
        .ok_or_else(|| Failure::new(EXIT_CONFIG, "config has no scenarios.sugar section"))?;
    let seed = cfg.seed.unwrap_or(config.seed());
    let mut report = run_sugar(&cfg, seed);
    if critical_mass {
        report.critical_mass = Some(
            estimate_critical_mass(&cfg, seed, CRITICAL_MASS_TOL)
                .map_err(|e| Failure::new(EXIT_VERIFICATION, e.to_string()))?,
        );
    }
    let phi_star = report
        .critical_mass
        .as_ref()
        .map(|c| c.phi_star.map(num).unwrap_or_else(|| "none".into()))
        .unwrap_or_default();
    let mut table = Table::new(&[
        "period",
        "p_conventional",
        "premium",
        "share",
        "survived",
        "collapse_period",
        "phi_star",
    ]);
    for (t, share) in report.shares.iter().enumerate() {
        table.push([
            t.to_string(),
            num(cfg.price_conventional(t)),
            num(cfg.premium(t)),
            num(*share),
            report.survived.to_string(),
            report.collapse_period.map(|c| c.to_string()).unwrap_or_default(),
            phi_star.clone(),
        ]);
    }
    let csv = table.to_csv();
    let mut files = vec![("sugar.csv".to_string(), csv.clone())];
    if let Some(cm) = &report.critical_mass {
        let mut scan = Table::new(&["phi", "survived"]);
        for (phi, s) in &cm.scan {
            scan.push([num(*phi), s.to_string()]);
        }
        files.push(("sugar_scan.csv".into(), scan.to_csv()));
    }
    if config.raw.output.svg {
        let points = report
            .shares
            .iter()
            .enumerate()
            .map(|(t, s)| (t as f64, *s))
            .collect();
        files.push((
            "sugar.svg".into(),
            line_chart(
                "Ethical market share",
                "period",
                "share",
                &[Series {
                    name: "share".into(),
                    points,
                }],
            ),
        ));
    }
    Ok(Outcome {
        stdout: csv,
        files,
        code: EXIT_OK,
    })
}

pub fn veblen(config: &RunConfig) -> Result<Outcome, Failure> {
    let probe = config
        .raw
        .scenarios
        .veblen
        .clone()
        .ok_or_else(|| Failure::new(EXIT_CONFIG, "config has no scenarios.veblen section"))?;
    let fiber = config.fiber(&probe.fiber).expect("validated");
    let template = config
        .agents()
        .iter()
        .find(|a| a.id == probe.agent)
        .expect("validated");
    let agent = template.instantiate(fiber);
    let duty = fiber.duty_index(&probe.duty).expect("validated");
    let curve = veblen_demand_curve(&agent, fiber, duty, &probe.sweep())
        .map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string()))?;
    let mut table = Table::new(&["price", "demand", "increasing"]);
    for &(p, e) in &curve.points {
        let inside = curve.increasing.iter().any(|&(a, b)| a <= p && p <= b);
        table.push([num(p), num(e), inside.to_string()]);
    }
    let csv = table.to_csv();
    let mut segments = Table::new(&["from", "to"]);
    for &(a, b) in &curve.increasing {
        segments.push([num(a), num(b)]);
    }
    let mut files = vec![
        ("veblen.csv".to_string(), csv.clone()),
        ("veblen_segments.csv".to_string(), segments.to_csv()),
    ];
    if config.raw.output.svg {
        files.push((
            "veblen.svg".into(),
            line_chart(
                "Own-price demand for the duty",
                "price",
                "demand",
                &[Series {
                    name: probe.duty.clone(),
                    points: curve.points.clone(),
                }],
            ),
        ));
    }
    Ok(Outcome {
        stdout: csv,
        files,
        code: EXIT_OK,
    })
}

pub fn sweep(config: &RunConfig, y: &str, lo: f64, hi: f64, steps: usize) -> Result<Outcome, Failure> {
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) || steps < 2 {
        return Err(Failure::new(
            EXIT_CONFIG,
            format!("need 0 <= lambda-min <= lambda-max and at least 2 steps, got [{lo}, {hi}] x {steps}"),
        ));
    }
    let fiber = config
        .fiber(y)
        .ok_or_else(|| Failure::new(EXIT_CONFIG, format!("unknown fiber `{y}`")))?;
    let mut table = Table::new(&["lambda", "duty_share", "residual", "converged"]);
    let mut code = EXIT_OK;
    for k in 0..steps {
        let lambda = lo + (hi - lo) * k as f64 / (steps - 1) as f64;
        let economy = Economy::from_templates(fiber, config.agents(), None, Some(lambda))
            .map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string()))?;
        let result = match solve(&economy, config.solver()) {
            Ok(r) => r,
            Err(EquilibriumError::NoConvergence(best)) => {
                code = EXIT_NO_CONVERGENCE;
                *best
            }
            Err(e) => return Err(e.into()),
        };
        table.push([
            num(lambda),
            num(duty_expenditure_share(&economy, &result)),
            num(result.residual),
            result.converged.to_string(),
        ]);
    }
    let csv = table.to_csv();
    Ok(Outcome {
        stdout: csv.clone(),
        files: vec![("sweep.csv".into(), csv)],
        code,
    })
}
