//! Seeded Monte Carlo estimates used as the reference for the analytic
//! balance probabilities.
//!
//! Work is split into fixed-size blocks, each drawing from its own
//! `(seed, block)` stream, so results are identical whatever the thread
//! count. Trajectory `i` of an ensemble always uses stream `(seed, i)`.

use crate::balance::{weibull_closed_form, BalanceError, BalanceQuery, ProbabilityTriple};
use crate::dist::DistributionSpec;
use crate::rng::{stream, SimRng};
use crate::scenario::Scenario;
use crate::storage::{self, Flow, StorageError, StorageSpec, Trajectory};
use rayon::prelude::*;
use thiserror::Error;

/// Samples per independent block in [`estimate_self_sufficiency`].
const BLOCK: u64 = 1 << 16;
/// Trajectories per block in [`simulate_ensemble`].
const TRAJECTORY_BLOCK: usize = 1024;
/// Smallest sample count accepted by [`estimate_self_sufficiency`].
pub const MIN_ESTIMATE_SAMPLES: u64 = 1000;
/// Number of standard errors in a confidence half-width.
pub const CI_SIGMAS: f64 = 3.0;
/// Probability levels reported for the storage level distribution.
pub const LEVEL_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("sample count {n} below the minimum of {min}")]
    TooFewSamples { n: u64, min: u64 },
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

/// Frequency estimate with a normal-approximation half-width of
/// [`CI_SIGMAS`] standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityEstimate {
    pub p_hat: f64,
    pub ci_halfwidth: f64,
    pub hits: u64,
    pub n: u64,
}

impl ProbabilityEstimate {
    pub fn from_counts(hits: u64, n: u64) -> Self {
        let p_hat = hits as f64 / n as f64;
        Self {
            p_hat,
            ci_halfwidth: CI_SIGMAS * (p_hat * (1.0 - p_hat) / n as f64).sqrt(),
            hits,
            n,
        }
    }

    /// Half-width of the band an exact probability `p` must fall in: the
    /// larger of the estimate's own half-width and the one implied by `p`.
    /// The second term keeps the check meaningful when `p_hat` is 0 or 1.
    pub fn tolerance_for(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let implied = CI_SIGMAS * (p * (1.0 - p) / self.n as f64).sqrt();
        self.ci_halfwidth.max(implied) + 1e-12
    }

    pub fn covers(&self, p: f64) -> bool {
        (p - self.p_hat).abs() <= self.tolerance_for(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateTriple {
    pub deficit: ProbabilityEstimate,
    pub overflow: ProbabilityEstimate,
    pub self_sufficient: ProbabilityEstimate,
}

impl EstimateTriple {
    pub fn as_array(&self) -> [ProbabilityEstimate; 3] {
        [self.deficit, self.overflow, self.self_sufficient]
    }

    pub fn covers(&self, exact: &ProbabilityTriple) -> bool {
        self.as_array()
            .iter()
            .zip(exact.as_array())
            .all(|(e, p)| e.covers(p))
    }

    pub fn max_halfwidth(&self) -> f64 {
        self.as_array()
            .iter()
            .map(|e| e.ci_halfwidth)
            .fold(0.0, f64::max)
    }
}

/// Counts `[deficit, overflow, self-sufficient]` outcomes of `n` draws of
/// `B = G − D` against the storage window seen from `s_prev`.
///
/// No lower bound on `n`; callers that need a meaningful interval go
/// through [`estimate_self_sufficiency`].
pub fn count_outcomes(
    gen: &DistributionSpec,
    dem: &DistributionSpec,
    query: &BalanceQuery<'_>,
    n: u64,
    seed: u64,
) -> [u64; 3] {
    let lo = query.deficit_threshold();
    let hi = query.overflow_threshold();
    let blocks = n.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream(seed, block);
            let len = BLOCK.min(n - block * BLOCK);
            let mut counts = [0u64; 3];
            for _ in 0..len {
                let g = gen.sample(&mut rng);
                let d = dem.sample(&mut rng);
                let b = g - d;
                let slot = if b <= lo {
                    0
                } else if b > hi {
                    1
                } else {
                    2
                };
                counts[slot] += 1;
            }
            counts
        })
        .reduce(|| [0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
}

pub fn estimates_from_counts(counts: [u64; 3]) -> EstimateTriple {
    let n = counts.iter().sum();
    EstimateTriple {
        deficit: ProbabilityEstimate::from_counts(counts[0], n),
        overflow: ProbabilityEstimate::from_counts(counts[1], n),
        self_sufficient: ProbabilityEstimate::from_counts(counts[2], n),
    }
}

/// Frequency estimates of deficit, overflow and self-sufficiency for one
/// step starting at `s_prev`.
pub fn estimate_self_sufficiency(
    gen: &DistributionSpec,
    dem: &DistributionSpec,
    storage: &StorageSpec,
    s_prev: f64,
    n: u64,
    seed: u64,
) -> Result<EstimateTriple, McError> {
    if n < MIN_ESTIMATE_SAMPLES {
        return Err(McError::TooFewSamples {
            n,
            min: MIN_ESTIMATE_SAMPLES,
        });
    }
    let query = BalanceQuery::new(s_prev, storage)?;
    Ok(estimates_from_counts(count_outcomes(
        gen, dem, &query, n, seed,
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub level: f64,
    pub analytic: ProbabilityTriple,
    pub mc: EstimateTriple,
}

impl SweepRow {
    pub fn agrees(&self) -> bool {
        self.mc.covers(&self.analytic)
    }
}

/// Closed form and Monte Carlo estimate side by side for each battery
/// level, with a known generation and Weibull demand. Every level reuses
/// `seed`, so rows share their random numbers.
pub fn sweep_battery_levels(
    gen_value: f64,
    dem: &DistributionSpec,
    storage: &StorageSpec,
    levels: &[f64],
    n: u64,
    seed: u64,
) -> Result<Vec<SweepRow>, McError> {
    let gen = DistributionSpec::deterministic(gen_value)
        .map_err(|_| BalanceError::NegativeGeneration(gen_value))?;
    for &level in levels {
        storage.check_level(level)?;
    }
    levels
        .iter()
        .map(|&level| {
            Ok(SweepRow {
                level,
                analytic: weibull_closed_form(gen_value, level, storage, dem)?,
                mc: estimate_self_sufficiency(&gen, dem, storage, level, n, seed)?,
            })
        })
        .collect()
}

/// One realization of the scenario drawn from stream `(seed, index)`.
pub fn simulate_trajectory(scenario: &Scenario, seed: u64, index: u64) -> Trajectory {
    let mut rng = stream(seed, index);
    let flows = draw_flows(scenario, &mut rng);
    storage::evolve_flows(&scenario.storage, &flows)
        .expect("sampled flows are finite and start inside the window")
}

fn draw_flows(scenario: &Scenario, rng: &mut SimRng) -> Vec<Flow> {
    scenario
        .steps
        .iter()
        .map(|s| {
            let generation = s.generation.sample(rng);
            let demand = s.demand.sample(rng);
            Flow { generation, demand }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    /// 1-based step index.
    pub step: usize,
    pub level_mean: f64,
    pub level_min: f64,
    pub level_max: f64,
    /// Values at [`LEVEL_QUANTILES`], nearest-rank.
    pub level_quantiles: [f64; 5],
    pub balance_mean: f64,
    /// Fraction of trajectories with spill > 0 at this step.
    pub spill_frequency: f64,
    /// Fraction of trajectories with deficit > 0 at this step.
    pub deficit_frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub seed: u64,
    pub n_trajectories: u64,
    pub steps: Vec<StepStats>,
}

struct BlockAccumulator {
    // levels[t] holds this block's levels at step t
    levels: Vec<Vec<f64>>,
    level_sum: Vec<f64>,
    balance_sum: Vec<f64>,
    spills: Vec<u64>,
    deficits: Vec<u64>,
}

/// Runs `n` trajectories of `scenario` and summarizes each step.
pub fn simulate_ensemble(scenario: &Scenario, n: u64, seed: u64) -> Result<EnsembleStats, McError> {
    if n == 0 {
        return Err(McError::TooFewSamples { n, min: 1 });
    }
    let horizon = scenario.horizon();
    let blocks: Vec<BlockAccumulator> = (0..n)
        .step_by(TRAJECTORY_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + TRAJECTORY_BLOCK as u64).min(n);
            let mut acc = BlockAccumulator {
                levels: vec![Vec::with_capacity((end - start) as usize); horizon],
                level_sum: vec![0.0; horizon],
                balance_sum: vec![0.0; horizon],
                spills: vec![0; horizon],
                deficits: vec![0; horizon],
            };
            for i in start..end {
                let traj = simulate_trajectory(scenario, seed, i);
                for (t, rec) in traj.steps.iter().enumerate() {
                    acc.levels[t].push(rec.level);
                    acc.level_sum[t] += rec.level;
                    acc.balance_sum[t] += rec.balance;
                    acc.spills[t] += u64::from(rec.spill > 0.0);
                    acc.deficits[t] += u64::from(rec.deficit > 0.0);
                }
            }
            acc
        })
        .collect();

    let nf = n as f64;
    let steps = (0..horizon)
        .map(|t| {
            let mut levels: Vec<f64> = blocks
                .iter()
                .flat_map(|b| b.levels[t].iter().copied())
                .collect();
            levels.sort_by(f64::total_cmp);
            let level_sum: f64 = blocks.iter().map(|b| b.level_sum[t]).sum();
            let balance_sum: f64 = blocks.iter().map(|b| b.balance_sum[t]).sum();
            let spills: u64 = blocks.iter().map(|b| b.spills[t]).sum();
            let deficits: u64 = blocks.iter().map(|b| b.deficits[t]).sum();
            StepStats {
                step: t + 1,
                level_mean: level_sum / nf,
                level_min: levels[0],
                level_max: levels[levels.len() - 1],
                level_quantiles: LEVEL_QUANTILES.map(|p| nearest_rank(&levels, p)),
                balance_mean: balance_sum / nf,
                spill_frequency: spills as f64 / nf,
                deficit_frequency: deficits as f64 / nf,
            }
        })
        .collect();

    Ok(EnsembleStats {
        seed,
        n_trajectories: n,
        steps,
    })
}

fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
