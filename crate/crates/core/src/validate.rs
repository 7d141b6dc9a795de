//! Analytic results checked against Monte Carlo frequencies.

use crate::balance::{self, weibull_closed_form, BalanceError, BalanceQuery, ProbabilityTriple};
use crate::dist::DistributionSpec;
use crate::montecarlo::{
    count_outcomes, estimates_from_counts, EstimateTriple, MIN_ESTIMATE_SAMPLES,
};
use crate::scenario::{Scenario, StepSpec};
use crate::storage::StorageSpec;
use thiserror::Error;

/// Signature of [`weibull_closed_form`]; swappable so a broken closed form
/// can be fed through the same gate.
pub type ClosedForm =
    fn(f64, f64, &StorageSpec, &DistributionSpec) -> Result<ProbabilityTriple, BalanceError>;

/// Levels used for the sweep when none are given.
pub const DEFAULT_SWEEP_LEVELS: usize = 51;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidateError {
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error("balance grid for step {step} truncates {truncated:e} of mass, above the budget")]
    MassBudget { step: usize, truncated: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub n: u64,
    pub seed: u64,
    pub grid_cells: usize,
    pub coverage: f64,
    /// Sweep levels; `None` means [`DEFAULT_SWEEP_LEVELS`] even levels.
    pub levels: Option<Vec<f64>>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            n: 100_000,
            seed: 0,
            grid_cells: balance::DEFAULT_CELLS,
            coverage: balance::DEFAULT_COVERAGE,
            levels: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Grid,
    ClosedForm,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Grid => "grid",
            Self::ClosedForm => "closed_form",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// `step` for per-step checks at the initial level, `sweep` for the
    /// level sweep over the first step.
    pub context: &'static str,
    pub method: Method,
    pub step: usize,
    pub level: f64,
    pub quantity: &'static str,
    pub analytic: f64,
    pub mc: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub n: u64,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Set when `n` is too small for the interval to mean anything; the
    /// report then never fails.
    pub caveat: Option<String>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn passed(&self) -> bool {
        self.caveat.is_some() || self.checks.iter().all(|c| c.pass)
    }
}

fn closed_form_applies(step: &StepSpec) -> Option<f64> {
    match (&step.generation, &step.demand) {
        (DistributionSpec::Deterministic { value }, DistributionSpec::Weibull { .. }) => {
            Some(*value)
        }
        _ => None,
    }
}

fn compare(
    out: &mut Vec<Check>,
    context: &'static str,
    method: Method,
    step: usize,
    level: f64,
    analytic: &ProbabilityTriple,
    mc: &EstimateTriple,
) {
    const NAMES: [&str; 3] = ["p_deficit", "p_overflow", "p_self"];
    for ((quantity, p), est) in NAMES
        .into_iter()
        .zip(analytic.as_array())
        .zip(mc.as_array())
    {
        out.push(Check {
            context,
            method,
            step,
            level,
            quantity,
            analytic: p,
            mc: est.p_hat,
            tolerance: est.tolerance_for(p),
            pass: est.covers(p),
        });
    }
}

/// Compares every analytic probability the scenario admits with a seeded
/// Monte Carlo estimate.
///
/// Each step is checked at the initial storage level with the grid (and the
/// closed form when generation is known and demand is Weibull). The first
/// step is then swept over battery levels, using the closed form when it
/// applies and the grid otherwise.
pub fn validate_scenario(
    scenario: &Scenario,
    opts: &ValidateOptions,
    closed_form: ClosedForm,
) -> Result<ValidationReport, ValidateError> {
    let storage = &scenario.storage;
    let mut checks = Vec::new();
    let mut grids = Vec::with_capacity(scenario.horizon());

    for (i, st) in scenario.steps.iter().enumerate() {
        let grid =
            balance::balance_grid(&st.generation, &st.demand, opts.grid_cells, opts.coverage)?;
        if !grid.within_budget() {
            return Err(ValidateError::MassBudget {
                step: i + 1,
                truncated: grid.truncated_mass(),
            });
        }
        let level = storage.s_init();
        let q = BalanceQuery::new(level, storage)?;
        let mc = estimates_from_counts(count_outcomes(
            &st.generation,
            &st.demand,
            &q,
            opts.n,
            opts.seed,
        ));
        compare(
            &mut checks,
            "step",
            Method::Grid,
            i + 1,
            level,
            &balance::self_sufficiency(&grid, &q),
            &mc,
        );
        if let Some(g) = closed_form_applies(st) {
            let exact = closed_form(g, level, storage, &st.demand)?;
            compare(
                &mut checks,
                "step",
                Method::ClosedForm,
                i + 1,
                level,
                &exact,
                &mc,
            );
        }
        grids.push(grid);
    }

    let levels = opts
        .levels
        .clone()
        .unwrap_or_else(|| storage.even_levels(DEFAULT_SWEEP_LEVELS));
    let first = &scenario.steps[0];
    for level in levels {
        let q = BalanceQuery::new(level, storage)?;
        let mc = estimates_from_counts(count_outcomes(
            &first.generation,
            &first.demand,
            &q,
            opts.n,
            opts.seed,
        ));
        match closed_form_applies(first) {
            Some(g) => {
                let exact = closed_form(g, level, storage, &first.demand)?;
                compare(
                    &mut checks,
                    "sweep",
                    Method::ClosedForm,
                    1,
                    level,
                    &exact,
                    &mc,
                );
            }
            None => {
                let t = balance::self_sufficiency(&grids[0], &q);
                compare(&mut checks, "sweep", Method::Grid, 1, level, &t, &mc);
            }
        }
    }

    let caveat = (opts.n < MIN_ESTIMATE_SAMPLES).then(|| {
        format!(
            "n = {} is below {MIN_ESTIMATE_SAMPLES}; confidence intervals are too wide for a meaningful gate",
            opts.n
        )
    });
    Ok(ValidationReport {
        n: opts.n,
        seed: opts.seed,
        checks,
        caveat,
    })
}

/// The gate as normally run.
pub fn validate(
    scenario: &Scenario,
    opts: &ValidateOptions,
) -> Result<ValidationReport, ValidateError> {
    validate_scenario(scenario, opts, weibull_closed_form)
}
