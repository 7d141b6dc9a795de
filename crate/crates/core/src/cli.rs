//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 validation failure, 2 configuration error,
//! 3 scenario error, 4 grid truncation above the mass budget.

use crate::balance::{self, weibull_closed_form, BalanceQuery, ProbabilityTriple, MASS_BUDGET};
use crate::dist::DistributionSpec;
use crate::montecarlo::{self, MIN_ESTIMATE_SAMPLES};
use crate::results::{write_results, Cell, Metadata, OutputFormat, ResultTable};
use crate::scenario::{fixtures, parse_scenario, Scenario};
use crate::validate::{self, ValidateError, ValidateOptions, DEFAULT_SWEEP_LEVELS};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    ValidationFailed = 1,
    Config = 2,
    Scenario = 3,
    MassBudget = 4,
}

#[derive(Debug, Parser)]
#[command(
    name = "storage-balance",
    version,
    about = "Storage self-sufficiency analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Seeded trajectory plus ensemble statistics of the storage level.
    Simulate(RunArgs),
    /// Grid probabilities of deficit / overflow / self-sufficiency at --s-prev.
    Analyze(RunArgs),
    /// Closed form and Monte Carlo probabilities across battery levels.
    Sweep(RunArgs),
    /// Gate every analytic probability against Monte Carlo.
    Validate(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file, or `builtin:<name>` for a bundled fixture.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo samples (or trajectories for simulate).
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long, default_value_t = balance::DEFAULT_CELLS)]
    grid_cells: usize,
    /// Probability mass kept when discretizing continuous distributions.
    #[arg(long, default_value_t = balance::DEFAULT_COVERAGE)]
    coverage: f64,
    #[arg(long, allow_hyphen_values = true)]
    s_prev: Option<f64>,
    /// Comma-separated battery levels.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Analyze,
    Sweep,
    Validate,
}

/// Validated command-line settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub scenario_path: PathBuf,
    pub seed: u64,
    pub n: u64,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
    pub grid_cells: usize,
    pub coverage: f64,
    pub s_prev: Option<f64>,
    pub levels: Option<Vec<f64>>,
}

struct Failure {
    status: ExitStatus,
    message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        status: ExitStatus::Config,
        message: message.into(),
    }
}

fn scenario_error(message: impl Into<String>) -> Failure {
    Failure {
        status: ExitStatus::Scenario,
        message: message.into(),
    }
}

impl RunConfig {
    fn from_args(command: CommandKind, a: RunArgs) -> Result<Self, Failure> {
        let scenario_path = a
            .scenario
            .ok_or_else(|| config_error("--scenario is required"))?;
        let format: OutputFormat = a.format.parse().map_err(|e| config_error(format!("{e}")))?;
        if a.n == 0 {
            return Err(config_error("--n must be at least 1"));
        }
        if a.grid_cells < 2 {
            return Err(config_error("--grid-cells must be at least 2"));
        }
        if !(a.coverage > 0.5 && a.coverage < 1.0) {
            return Err(config_error("--coverage must lie in (0.5, 1)"));
        }
        if matches!(
            command,
            CommandKind::Simulate | CommandKind::Analyze | CommandKind::Sweep
        ) && a.out.is_none()
        {
            return Err(config_error("--out is required for this command"));
        }
        match command {
            CommandKind::Analyze if a.s_prev.is_none() => {
                return Err(config_error("analyze needs --s-prev"))
            }
            CommandKind::Sweep if a.n < MIN_ESTIMATE_SAMPLES => {
                return Err(config_error(format!(
                    "sweep needs --n of at least {MIN_ESTIMATE_SAMPLES}"
                )))
            }
            _ => {}
        }
        if let Some(levels) = &a.levels {
            if levels.is_empty() || levels.iter().any(|l| !l.is_finite()) {
                return Err(config_error("--levels must be a nonempty list of numbers"));
            }
        }
        Ok(Self {
            command,
            scenario_path,
            seed: a.seed,
            n: a.n,
            output_path: a.out,
            format,
            grid_cells: a.grid_cells,
            coverage: a.coverage,
            s_prev: a.s_prev,
            levels: a.levels,
        })
    }

    fn load_scenario(&self) -> Result<Scenario, Failure> {
        let raw = self.scenario_path.to_string_lossy();
        let text = match raw.strip_prefix("builtin:") {
            Some(name) => fixtures::bundled(name)
                .ok_or_else(|| config_error(format!("no bundled scenario named `{name}`")))?
                .to_owned(),
            None => std::fs::read_to_string(&self.scenario_path).map_err(|e| {
                config_error(format!("cannot read {}: {e}", self.scenario_path.display()))
            })?,
        };
        parse_scenario(&text).map_err(|e| scenario_error(format!("{}: {e}", raw)))
    }

    fn check_level(&self, scenario: &Scenario, level: f64) -> Result<(), Failure> {
        scenario
            .storage
            .check_level(level)
            .map_err(|e| config_error(e.to_string()))
    }

    fn metadata(&self, scenario: &Scenario) -> Metadata {
        Metadata::new(scenario.name.clone(), self.seed, self.n)
            .with("energy_unit", scenario.energy_unit)
    }
}

fn write_table(path: &Path, table: &ResultTable, format: OutputFormat) -> Result<(), Failure> {
    let bytes = write_results(table, format).map_err(|e| config_error(e.to_string()))?;
    std::fs::write(path, bytes)
        .map_err(|e| config_error(format!("cannot write {}: {e}", path.display())))
}

/// `out.csv` → `out_ensemble.csv`.
pub fn ensemble_path(out: &Path, format: OutputFormat) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    let ext = out.extension().map_or_else(
        || format.extension().to_owned(),
        |e| e.to_string_lossy().into_owned(),
    );
    out.with_file_name(format!("{stem}_ensemble.{ext}"))
}

fn run_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<ExitStatus, Failure> {
    let scenario = cfg.load_scenario()?;
    let path = cfg.output_path.as_deref().expect("checked in from_args");

    let traj = montecarlo::simulate_trajectory(&scenario, cfg.seed, 0);
    let mut table = ResultTable::new(
        [
            "step",
            "generation",
            "demand",
            "balance",
            "level",
            "spill",
            "deficit",
        ],
        cfg.metadata(&scenario)
            .with("s_init", scenario.storage.s_init())
            .with("trajectory_index", 0),
    );
    for (t, r) in traj.steps.iter().enumerate() {
        let flow = r.flow.expect("simulated trajectories carry flows");
        table
            .push_row(vec![
                Cell::Int(t as i64 + 1),
                Cell::Real(flow.generation),
                Cell::Real(flow.demand),
                Cell::Real(r.balance),
                Cell::Real(r.level),
                Cell::Real(r.spill),
                Cell::Real(r.deficit),
            ])
            .expect("row width matches");
    }
    write_table(path, &table, cfg.format)?;

    let stats = montecarlo::simulate_ensemble(&scenario, cfg.n, cfg.seed)
        .map_err(|e| config_error(e.to_string()))?;
    let mut ens = ResultTable::new(
        [
            "step",
            "level_mean",
            "level_min",
            "level_q05",
            "level_q25",
            "level_q50",
            "level_q75",
            "level_q95",
            "level_max",
            "balance_mean",
            "p_spill",
            "p_deficit",
        ],
        cfg.metadata(&scenario)
            .with("s_init", scenario.storage.s_init()),
    );
    for st in &stats.steps {
        let mut row = vec![
            Cell::Int(st.step as i64),
            Cell::Real(st.level_mean),
            Cell::Real(st.level_min),
        ];
        row.extend(st.level_quantiles.iter().map(|q| Cell::Real(*q)));
        row.extend([
            Cell::Real(st.level_max),
            Cell::Real(st.balance_mean),
            Cell::Prob(st.spill_frequency),
            Cell::Prob(st.deficit_frequency),
        ]);
        ens.push_row(row).expect("row width matches");
    }
    let ens_path = ensemble_path(path, cfg.format);
    write_table(&ens_path, &ens, cfg.format)?;

    let _ = writeln!(
        out,
        "simulate: {} steps, {} trajectories, seed {}; final level {:.4} {}\nwrote {} and {}",
        scenario.horizon(),
        cfg.n,
        cfg.seed,
        traj.final_level(),
        scenario.energy_unit,
        path.display(),
        ens_path.display()
    );
    Ok(ExitStatus::Ok)
}

fn run_analyze(cfg: &RunConfig, out: &mut dyn Write) -> Result<ExitStatus, Failure> {
    let scenario = cfg.load_scenario()?;
    let s_prev = cfg.s_prev.expect("checked in from_args");
    cfg.check_level(&scenario, s_prev)?;
    let q =
        BalanceQuery::new(s_prev, &scenario.storage).map_err(|e| config_error(e.to_string()))?;

    let mut table = ResultTable::new(
        [
            "step",
            "s_prev",
            "p_deficit",
            "p_overflow",
            "p_self",
            "p_not_self",
            "truncated_mass",
        ],
        cfg.metadata(&scenario)
            .with("grid_cells", cfg.grid_cells)
            .with("mass_budget", MASS_BUDGET),
    );
    let mut over_budget = Vec::new();
    for (i, st) in scenario.steps.iter().enumerate() {
        let grid = balance::balance_grid(&st.generation, &st.demand, cfg.grid_cells, cfg.coverage)
            .map_err(|e| config_error(e.to_string()))?;
        let t = balance::self_sufficiency(&grid, &q);
        if !grid.within_budget() {
            over_budget.push(i + 1);
        }
        table
            .push_row(vec![
                Cell::Int(i as i64 + 1),
                Cell::Real(s_prev),
                Cell::Prob(t.p_deficit),
                Cell::Prob(t.p_overflow),
                Cell::Prob(t.p_self),
                Cell::Prob(t.p_not_self()),
                Cell::Prob(grid.truncated_mass()),
            ])
            .expect("row width matches");
        let _ = writeln!(
            out,
            "step {}: p_deficit={:.6} p_overflow={:.6} p_self={:.6} p_not_self={:.6}",
            i + 1,
            t.p_deficit,
            t.p_overflow,
            t.p_self,
            t.p_not_self()
        );
    }
    write_table(
        cfg.output_path.as_deref().expect("checked"),
        &table,
        cfg.format,
    )?;
    if over_budget.is_empty() {
        Ok(ExitStatus::Ok)
    } else {
        Err(Failure {
            status: ExitStatus::MassBudget,
            message: format!("grid truncation exceeds {MASS_BUDGET:e} at steps {over_budget:?}"),
        })
    }
}

fn run_sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<ExitStatus, Failure> {
    let scenario = cfg.load_scenario()?;
    let storage = &scenario.storage;
    let levels = cfg
        .levels
        .clone()
        .unwrap_or_else(|| storage.even_levels(DEFAULT_SWEEP_LEVELS));
    for &l in &levels {
        cfg.check_level(&scenario, l)?;
    }
    let first = &scenario.steps[0];
    let known_generation = match (&first.generation, &first.demand) {
        (DistributionSpec::Deterministic { value }, DistributionSpec::Weibull { .. }) => {
            Some(*value)
        }
        _ => None,
    };
    let grid = match known_generation {
        Some(_) => None,
        None => Some(
            balance::balance_grid(
                &first.generation,
                &first.demand,
                cfg.grid_cells,
                cfg.coverage,
            )
            .map_err(|e| config_error(e.to_string()))?,
        ),
    };

    let mut table = ResultTable::new(
        [
            "level",
            "p_A_analytic",
            "p_B_analytic",
            "p_self_analytic",
            "p_A_mc",
            "p_B_mc",
            "p_self_mc",
            "ci_halfwidth",
        ],
        cfg.metadata(&scenario).with(
            "analytic",
            if known_generation.is_some() {
                "closed_form"
            } else {
                "grid"
            },
        ),
    );
    let mut disagreements = 0;
    for &level in &levels {
        let analytic: ProbabilityTriple = match (known_generation, &grid) {
            (Some(g), _) => weibull_closed_form(g, level, storage, &first.demand)
                .map_err(|e| config_error(e.to_string()))?,
            (None, Some(grid)) => {
                let q =
                    BalanceQuery::new(level, storage).map_err(|e| config_error(e.to_string()))?;
                balance::self_sufficiency(grid, &q)
            }
            (None, None) => unreachable!(),
        };
        let mc = montecarlo::estimate_self_sufficiency(
            &first.generation,
            &first.demand,
            storage,
            level,
            cfg.n,
            cfg.seed,
        )
        .map_err(|e| config_error(e.to_string()))?;
        disagreements += usize::from(!mc.covers(&analytic));
        let mut row = vec![Cell::Real(level)];
        row.extend(analytic.as_array().map(Cell::Prob));
        row.extend(mc.as_array().map(|e| Cell::Prob(e.p_hat)));
        row.push(Cell::Prob(mc.max_halfwidth()));
        table.push_row(row).expect("row width matches");
    }
    let path = cfg.output_path.as_deref().expect("checked");
    write_table(path, &table, cfg.format)?;
    let _ = writeln!(
        out,
        "sweep: {} levels, n={}, seed={}; {} level(s) outside the Monte Carlo interval; wrote {}",
        levels.len(),
        cfg.n,
        cfg.seed,
        disagreements,
        path.display()
    );
    Ok(ExitStatus::Ok)
}

fn run_validate(
    cfg: &RunConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ExitStatus, Failure> {
    let scenario = cfg.load_scenario()?;
    if let Some(levels) = &cfg.levels {
        for &l in levels {
            cfg.check_level(&scenario, l)?;
        }
    }
    let opts = ValidateOptions {
        n: cfg.n,
        seed: cfg.seed,
        grid_cells: cfg.grid_cells,
        coverage: cfg.coverage,
        levels: cfg.levels.clone(),
    };
    let report = match validate::validate(&scenario, &opts) {
        Ok(r) => r,
        Err(e @ ValidateError::MassBudget { .. }) => {
            return Err(Failure {
                status: ExitStatus::MassBudget,
                message: e.to_string(),
            })
        }
        Err(e) => return Err(config_error(e.to_string())),
    };
    finish_validation(cfg, &scenario, &report, out, err)
}

/// Writes the report and maps it to an exit status.
fn finish_validation(
    cfg: &RunConfig,
    scenario: &Scenario,
    report: &validate::ValidationReport,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ExitStatus, Failure> {
    if let Some(path) = &cfg.output_path {
        let mut table = ResultTable::new(
            [
                "context",
                "method",
                "step",
                "level",
                "quantity",
                "analytic",
                "mc",
                "tolerance",
                "pass",
            ],
            cfg.metadata(scenario)
                .with("caveat", report.caveat.as_deref().unwrap_or("none")),
        );
        for c in &report.checks {
            table
                .push_row(vec![
                    Cell::Text(c.context.to_owned()),
                    Cell::Text(c.method.label().to_owned()),
                    Cell::Int(c.step as i64),
                    Cell::Real(c.level),
                    Cell::Text(c.quantity.to_owned()),
                    Cell::Prob(c.analytic),
                    Cell::Prob(c.mc),
                    Cell::Prob(c.tolerance),
                    Cell::Bool(c.pass),
                ])
                .expect("row width matches");
        }
        write_table(path, &table, cfg.format)?;
    }
    if let Some(caveat) = &report.caveat {
        let _ = writeln!(err, "warning: {caveat}");
    }
    let failed: Vec<_> = report.failures().collect();
    let _ = writeln!(
        out,
        "validate: {} checks, {} outside the Monte Carlo interval (n={}, seed={}){}",
        report.checks.len(),
        failed.len(),
        report.n,
        report.seed,
        if report.caveat.is_some() {
            " [caveat: n too small]"
        } else {
            ""
        }
    );
    if report.passed() {
        return Ok(ExitStatus::Ok);
    }
    for c in &failed {
        let _ = writeln!(
            err,
            "FAIL {} {} step={} level={} {}: analytic={:.9} mc={:.9} tolerance={:.3e}",
            c.context,
            c.method.label(),
            c.step,
            c.level,
            c.quantity,
            c.analytic,
            c.mc,
            c.tolerance
        );
    }
    Ok(ExitStatus::ValidationFailed)
}

/// Runs the validate command with a replacement closed form. Exposed so a
/// deliberately broken closed form can be pushed through the real gate.
pub fn run_validate_with(
    args: &[&str],
    closed_form: validate::ClosedForm,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> ExitStatus {
    let cli = match Cli::try_parse_from(
        std::iter::once("storage-balance")
            .chain(["validate"])
            .chain(args.iter().copied()),
    ) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return ExitStatus::Config;
        }
    };
    let Command::Validate(a) = cli.command else {
        unreachable!()
    };
    let result = RunConfig::from_args(CommandKind::Validate, a).and_then(|cfg| {
        let scenario = cfg.load_scenario()?;
        let opts = ValidateOptions {
            n: cfg.n,
            seed: cfg.seed,
            grid_cells: cfg.grid_cells,
            coverage: cfg.coverage,
            levels: cfg.levels.clone(),
        };
        let report = validate::validate_scenario(&scenario, &opts, closed_form)
            .map_err(|e| config_error(e.to_string()))?;
        finish_validation(&cfg, &scenario, &report, out, err)
    });
    settle(result, err)
}

fn settle(result: Result<ExitStatus, Failure>, err: &mut dyn Write) -> ExitStatus {
    match result {
        Ok(s) => s,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.status
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    ExitStatus::Ok
                }
                _ => {
                    let _ = write!(err, "{e}");
                    ExitStatus::Config
                }
            };
        }
    };
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Analyze(a) => (CommandKind::Analyze, a),
        Command::Sweep(a) => (CommandKind::Sweep, a),
        Command::Validate(a) => (CommandKind::Validate, a),
    };
    let result = RunConfig::from_args(kind, args).and_then(|cfg| match cfg.command {
        CommandKind::Simulate => run_simulate(&cfg, out),
        CommandKind::Analyze => run_analyze(&cfg, out),
        CommandKind::Sweep => run_sweep(&cfg, out),
        CommandKind::Validate => run_validate(&cfg, out, err),
    });
    settle(result, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exit(args: &[&str]) -> ExitStatus {
        run(
            std::iter::once("storage-balance").chain(args.iter().copied()),
            &mut Vec::new(),
            &mut Vec::new(),
        )
    }

    #[test]
    fn config_errors_exit_two() {
        assert_eq!(
            exit(&["analyze", "--out", "x.csv", "--s-prev", "0"]),
            ExitStatus::Config
        );
        assert_eq!(exit(&["frobnicate"]), ExitStatus::Config);
        assert_eq!(
            exit(&[
                "analyze",
                "--scenario",
                "builtin:fig2_battery",
                "--out",
                "x.csv"
            ]),
            ExitStatus::Config
        );
        assert_eq!(
            exit(&[
                "simulate",
                "--scenario",
                "builtin:fig2_battery",
                "--out",
                "x.csv",
                "--format",
                "xml"
            ]),
            ExitStatus::Config
        );
        assert_eq!(
            exit(&["validate", "--scenario", "builtin:nope"]),
            ExitStatus::Config
        );
        assert_eq!(
            exit(&[
                "validate",
                "--scenario",
                "builtin:fig2_battery",
                "--grid-cells",
                "1"
            ]),
            ExitStatus::Config
        );
    }

    #[test]
    fn ensemble_sibling_path() {
        assert_eq!(
            ensemble_path(Path::new("/tmp/run/traj.csv"), OutputFormat::Csv),
            PathBuf::from("/tmp/run/traj_ensemble.csv")
        );
        assert_eq!(
            ensemble_path(Path::new("traj"), OutputFormat::Json),
            PathBuf::from("traj_ensemble.json")
        );
    }
}
