//! Distribution of the step balance `B = G − D` and the probabilities that
//! storage can absorb it.
//!
//! Densities are carried on uniform grids. A grid either spreads each cell's
//! mass uniformly over `[origin + i·step, origin + (i+1)·step)` or, for
//! degenerate inputs, keeps it as an atom at `origin + i·step`. Differences
//! of independent grids are computed by discrete cross-correlation; for two
//! uniform grids each product cell is a triangle of width `2·step`, split
//! into its two halves, which keeps cell masses and the mean exact.

use crate::dist::{DistError, DistributionSpec};
use crate::storage::{StorageError, StorageSpec};
use thiserror::Error;

/// Grid cells used when nothing else is requested.
pub const DEFAULT_CELLS: usize = 4096;
/// Probability mass kept when discretizing a continuous distribution.
pub const DEFAULT_COVERAGE: f64 = 1.0 - 1e-8;
/// Largest truncated mass a balance grid may carry before results are
/// considered out of budget.
pub const MASS_BUDGET: f64 = 1e-6;

const STEP_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BalanceError {
    #[error("cell count {0} must be at least 2")]
    InvalidCells(usize),
    #[error("coverage {0} must lie in (0.5, 1)")]
    InvalidCoverage(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("grid steps differ ({gen} vs {dem}) and cannot be resampled exactly")]
    StepMismatch { gen: f64, dem: f64 },
    #[error("interval lower bound {lo} exceeds upper bound {hi}")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("closed form needs a Weibull demand, got {0}")]
    NotWeibull(&'static str),
    #[error("generation {0} must be finite and >= 0")]
    NegativeGeneration(f64),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// Mass spread evenly over the cell.
    Uniform,
    /// Mass concentrated at the cell's left edge.
    Atom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    origin: f64,
    step: f64,
    kind: CellKind,
    masses: Vec<f64>,
    // prefix[i] = sum of masses[..i]
    prefix: Vec<f64>,
}

impl DensityGrid {
    pub fn new(
        origin: f64,
        step: f64,
        kind: CellKind,
        masses: Vec<f64>,
    ) -> Result<Self, BalanceError> {
        if masses.is_empty() {
            return Err(BalanceError::InvalidGrid("masses must be nonempty"));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(BalanceError::InvalidGrid("step must be finite and > 0"));
        }
        if !origin.is_finite() {
            return Err(BalanceError::InvalidGrid("origin must be finite"));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(BalanceError::InvalidGrid("masses must be finite and >= 0"));
        }
        let mut prefix = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for m in &masses {
            acc += m;
            prefix.push(acc);
        }
        if acc > 1.0 + 1e-9 {
            return Err(BalanceError::InvalidGrid("total mass exceeds 1"));
        }
        Ok(Self {
            origin,
            step,
            kind,
            masses,
            prefix,
        })
    }

    /// Single atom of unit mass at `value`.
    pub fn point(value: f64) -> Result<Self, BalanceError> {
        Self::new(value, 1.0, CellKind::Atom, vec![1.0])
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Width covered by the cells.
    pub fn span(&self) -> f64 {
        self.step * self.masses.len() as f64
    }

    pub fn total_mass(&self) -> f64 {
        self.prefix[self.masses.len()]
    }

    /// Probability lost to tail truncation.
    pub fn truncated_mass(&self) -> f64 {
        (1.0 - self.total_mass()).max(0.0)
    }

    pub fn within_budget(&self) -> bool {
        self.truncated_mass() <= MASS_BUDGET
    }

    fn location(&self, i: usize) -> f64 {
        let offset = match self.kind {
            CellKind::Uniform => 0.5,
            CellKind::Atom => 0.0,
        };
        self.origin + (i as f64 + offset) * self.step
    }

    /// Mean of the represented mass, normalized by the total mass.
    pub fn mean(&self) -> f64 {
        let s: f64 = self
            .masses
            .iter()
            .enumerate()
            .map(|(i, m)| m * self.location(i))
            .sum();
        s / self.total_mass()
    }

    /// Grid mass in `(−∞, x]`, interpolating linearly inside uniform cells.
    pub fn mass_up_to(&self, x: f64) -> f64 {
        let n = self.masses.len();
        if x == f64::INFINITY {
            return self.total_mass();
        }
        if x == f64::NEG_INFINITY || x.is_nan() {
            return 0.0;
        }
        let pos = (x - self.origin) / self.step;
        match self.kind {
            CellKind::Uniform => {
                if pos <= 0.0 {
                    0.0
                } else if pos >= n as f64 {
                    self.total_mass()
                } else {
                    let i = pos.floor() as usize;
                    self.prefix[i] + self.masses[i] * (pos - i as f64)
                }
            }
            CellKind::Atom => {
                if pos < -1.0 {
                    return 0.0;
                }
                // count atoms whose exact position is <= x
                let mut count = (pos.floor().max(-1.0) + 1.0).min(n as f64) as usize;
                while count > 0 && self.origin + (count - 1) as f64 * self.step > x {
                    count -= 1;
                }
                while count < n && self.origin + count as f64 * self.step <= x {
                    count += 1;
                }
                self.prefix[count]
            }
        }
    }

    /// Re-bins a uniform grid onto a coarser `step`, moving mass by overlap.
    pub fn resample(&self, step: f64) -> Result<Self, BalanceError> {
        if self.kind != CellKind::Uniform || step.is_nan() || step < self.step {
            return Err(BalanceError::StepMismatch {
                gen: self.step,
                dem: step,
            });
        }
        let cells = (self.span() / step).ceil().max(1.0) as usize;
        let mut out = vec![0.0; cells];
        for (i, &m) in self.masses.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let a = i as f64 * self.step;
            let b = a + self.step;
            let first = ((a / step).floor() as usize).min(cells - 1);
            let last = ((b / step).ceil() as usize).clamp(first + 1, cells);
            for (j, slot) in out.iter_mut().enumerate().take(last).skip(first) {
                let lo = a.max(j as f64 * step);
                let hi = if j + 1 == cells {
                    b
                } else {
                    b.min((j + 1) as f64 * step)
                };
                if hi > lo {
                    *slot += m * (hi - lo) / self.step;
                }
            }
        }
        Self::new(self.origin, step, CellKind::Uniform, out)
    }
}

fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= STEP_RTOL * a.max(b)
}

/// `out[i + j] += g[i] · d[m − 1 − j]`: index `k` is the lag `i − j + m − 1`.
fn cross_correlate(g: &[f64], d: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.len() + d.len() - 1];
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        for (jr, &dj) in d.iter().rev().enumerate() {
            out[i + jr] += gi * dj;
        }
    }
    out
}

/// Discretizes `spec` onto `cells` cells.
///
/// Continuous specs cover the central `coverage` probability with
/// `mass_i = cdf(right_i) − cdf(left_i)`. Deterministic specs become a single
/// atom; empirical specs a normalized histogram (or an atom when all samples
/// coincide).
pub fn discretize(
    spec: &DistributionSpec,
    cells: usize,
    coverage: f64,
) -> Result<DensityGrid, BalanceError> {
    if cells < 2 {
        return Err(BalanceError::InvalidCells(cells));
    }
    if !(coverage > 0.5 && coverage < 1.0) {
        return Err(BalanceError::InvalidCoverage(coverage));
    }
    match spec {
        DistributionSpec::Deterministic { value } => DensityGrid::point(*value),
        DistributionSpec::Empirical { samples } => {
            let (lo, hi) = (samples.min(), samples.max());
            if lo == hi {
                return DensityGrid::point(lo);
            }
            let step = (hi - lo) / cells as f64;
            let weight = 1.0 / samples.len() as f64;
            let mut masses = vec![0.0; cells];
            for &s in samples.as_slice() {
                let i = (((s - lo) / step).floor() as usize).min(cells - 1);
                masses[i] += weight;
            }
            DensityGrid::new(lo, step, CellKind::Uniform, masses)
        }
        DistributionSpec::LogNormal { .. } | DistributionSpec::Weibull { .. } => {
            let tail = 0.5 * (1.0 - coverage);
            let lo = spec.quantile(tail)?;
            let hi = spec.quantile(1.0 - tail)?;
            let step = (hi - lo) / cells as f64;
            let edge = |i: usize| {
                if i == cells {
                    hi
                } else {
                    lo + i as f64 * step
                }
            };
            let mut prev = spec.cdf(lo);
            let masses = (1..=cells)
                .map(|i| {
                    let c = spec.cdf(edge(i));
                    let m = (c - prev).max(0.0);
                    prev = c;
                    m
                })
                .collect();
            DensityGrid::new(lo, step, CellKind::Uniform, masses)
        }
    }
}

/// Grid for `B = G − D` with `G` and `D` independent.
pub fn difference_density(
    gen: &DensityGrid,
    dem: &DensityGrid,
) -> Result<DensityGrid, BalanceError> {
    use CellKind::{Atom, Uniform};

    let (og, od) = (gen.origin, dem.origin);
    let single = |g: &DensityGrid| g.kind == Atom && g.len() == 1;

    match (gen.kind, dem.kind) {
        (Uniform, Uniform) => {
            let (g, d) = if same_step(gen.step, dem.step) {
                (gen.clone(), dem.clone())
            } else if gen.step > dem.step {
                (gen.clone(), dem.resample(gen.step)?)
            } else {
                (gen.resample(dem.step)?, dem.clone())
            };
            if !same_step(g.step, d.step) {
                return Err(BalanceError::StepMismatch {
                    gen: g.step,
                    dem: d.step,
                });
            }
            let h = g.step;
            let corr = cross_correlate(&g.masses, &d.masses);
            let mut masses = vec![0.0; corr.len() + 1];
            for (k, c) in corr.iter().enumerate() {
                masses[k] += 0.5 * c;
                masses[k + 1] += 0.5 * c;
            }
            DensityGrid::new(og - od - d.len() as f64 * h, h, Uniform, masses)
        }
        (Atom, Uniform) => {
            if !(single(gen) || same_step(gen.step, dem.step)) {
                return Err(BalanceError::StepMismatch {
                    gen: gen.step,
                    dem: dem.step,
                });
            }
            let h = dem.step;
            let masses = cross_correlate(&gen.masses, &dem.masses);
            DensityGrid::new(og - od - dem.len() as f64 * h, h, Uniform, masses)
        }
        (Uniform, Atom) => {
            if !(single(dem) || same_step(gen.step, dem.step)) {
                return Err(BalanceError::StepMismatch {
                    gen: gen.step,
                    dem: dem.step,
                });
            }
            let h = gen.step;
            let masses = cross_correlate(&gen.masses, &dem.masses);
            DensityGrid::new(og - od - (dem.len() - 1) as f64 * h, h, Uniform, masses)
        }
        (Atom, Atom) => {
            let h = if single(dem) {
                gen.step
            } else if single(gen) || same_step(gen.step, dem.step) {
                dem.step
            } else {
                return Err(BalanceError::StepMismatch {
                    gen: gen.step,
                    dem: dem.step,
                });
            };
            let masses = cross_correlate(&gen.masses, &dem.masses);
            DensityGrid::new(og - od - (dem.len() - 1) as f64 * h, h, Atom, masses)
        }
    }
}

/// Discretizes both specs and returns the grid of their difference.
pub fn balance_grid(
    gen: &DistributionSpec,
    dem: &DistributionSpec,
    cells: usize,
    coverage: f64,
) -> Result<DensityGrid, BalanceError> {
    difference_density(
        &discretize(gen, cells, coverage)?,
        &discretize(dem, cells, coverage)?,
    )
}

/// `Pr[lo < B ≤ hi]` from the grid; infinite bounds are allowed.
pub fn interval_probability(b: &DensityGrid, lo: f64, hi: f64) -> Result<f64, BalanceError> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(BalanceError::InvalidInterval { lo, hi });
    }
    let p = b.mass_up_to(hi) - b.mass_up_to(lo);
    Ok(p.clamp(0.0, b.total_mass()))
}

/// Storage level before the step, checked against its window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceQuery<'a> {
    s_prev: f64,
    storage: &'a StorageSpec,
}

impl<'a> BalanceQuery<'a> {
    pub fn new(s_prev: f64, storage: &'a StorageSpec) -> Result<Self, BalanceError> {
        storage.check_level(s_prev)?;
        Ok(Self { s_prev, storage })
    }

    pub fn s_prev(&self) -> f64 {
        self.s_prev
    }

    pub fn storage(&self) -> &StorageSpec {
        self.storage
    }

    /// `S_min − s_prev`: balances at or below this leave a deficit.
    pub fn deficit_threshold(&self) -> f64 {
        self.storage.s_min() - self.s_prev
    }

    /// `S_max − s_prev`: balances above this overflow.
    pub fn overflow_threshold(&self) -> f64 {
        self.storage.s_max() - self.s_prev
    }
}

/// Deficit (A), overflow (B) and self-sufficiency probabilities for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityTriple {
    pub p_deficit: f64,
    pub p_overflow: f64,
    pub p_self: f64,
}

impl ProbabilityTriple {
    pub fn p_not_self(&self) -> f64 {
        1.0 - self.p_self
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p_deficit, self.p_overflow, self.p_self]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Grid evaluation of the deficit / overflow / self-sufficient split.
///
/// `p_self` absorbs nothing of the truncated tail mass: the three values sum
/// to `b.total_mass()`.
pub fn self_sufficiency(b: &DensityGrid, q: &BalanceQuery<'_>) -> ProbabilityTriple {
    let total = b.total_mass();
    let p_deficit = b.mass_up_to(q.deficit_threshold()).clamp(0.0, total);
    let p_overflow = (total - b.mass_up_to(q.overflow_threshold())).clamp(0.0, total);
    ProbabilityTriple {
        p_deficit,
        p_overflow,
        p_self: (total - p_deficit - p_overflow).max(0.0),
    }
}

/// Closed form for a known generation `g_next` and Weibull demand.
///
/// Deficit: `D > g_next + s_prev − S_min`; overflow: `D < g_next + s_prev − S_max`.
pub fn weibull_closed_form(
    g_next: f64,
    s_prev: f64,
    storage: &StorageSpec,
    dem: &DistributionSpec,
) -> Result<ProbabilityTriple, BalanceError> {
    let DistributionSpec::Weibull {
        scale_lambda,
        shape_k,
    } = *dem
    else {
        return Err(BalanceError::NotWeibull(dem.kind()));
    };
    if !(g_next.is_finite() && g_next >= 0.0) {
        return Err(BalanceError::NegativeGeneration(g_next));
    }
    storage.check_level(s_prev)?;

    let x_a = g_next + s_prev - storage.s_min();
    let x_b = g_next + s_prev - storage.s_max();
    let p_deficit = if x_a <= 0.0 {
        1.0
    } else {
        (-(x_a / scale_lambda).powf(shape_k)).exp()
    };
    let p_overflow = if x_b <= 0.0 {
        0.0
    } else {
        -(-(x_b / scale_lambda).powf(shape_k)).exp_m1()
    };
    Ok(ProbabilityTriple {
        p_deficit,
        p_overflow,
        p_self: 1.0 - p_deficit - p_overflow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weibull() -> DistributionSpec {
        DistributionSpec::weibull(2.0, 5.0).unwrap()
    }

    fn det(v: f64) -> DistributionSpec {
        DistributionSpec::deterministic(v).unwrap()
    }

    fn battery(s_init: f64) -> StorageSpec {
        StorageSpec::new(0.0, 5.0, s_init).unwrap()
    }

    fn grid(spec: &DistributionSpec) -> DensityGrid {
        discretize(spec, DEFAULT_CELLS, DEFAULT_COVERAGE).unwrap()
    }

    #[test]
    fn discretize_argument_checks() {
        assert!(matches!(
            discretize(&weibull(), 1, 0.99),
            Err(BalanceError::InvalidCells(1))
        ));
        assert!(matches!(
            discretize(&weibull(), 8, 0.5),
            Err(BalanceError::InvalidCoverage(_))
        ));
        assert!(discretize(&weibull(), 8, 1.0).is_err());
    }

    #[test]
    fn deterministic_is_single_atom() {
        for cells in [2, 17, 4096] {
            let g = discretize(&det(2.0), cells, 0.9).unwrap();
            assert_eq!(g.len(), 1);
            assert_eq!(g.origin(), 2.0);
            assert_eq!(g.masses(), &[1.0]);
        }
    }

    #[test]
    fn weibull_grid_keeps_coverage() {
        let g = discretize(&weibull(), 4096, 1.0 - 1e-8).unwrap();
        assert!(g.total_mass() >= 1.0 - 1e-8, "{}", 1.0 - g.total_mass());
        assert!(g.within_budget());
        let w = weibull();
        let tail = 0.5 * (1.0 - (1.0 - 1e-8));
        assert_eq!(g.origin(), w.quantile(tail).unwrap());
        assert!((g.origin() + g.span() - w.quantile(1.0 - tail).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cell_masses_are_cdf_differences() {
        let w = weibull();
        let g = discretize(&w, 64, 0.999).unwrap();
        for i in [0, 10, 40, 63] {
            let left = g.origin() + i as f64 * g.step();
            let right = left + g.step();
            assert!((g.masses()[i] - (w.cdf(right) - w.cdf(left))).abs() < 1e-12);
        }
    }

    #[test]
    fn lognormal_grid_mean() {
        let g = grid(&DistributionSpec::lognormal(0.0, 1.0).unwrap());
        assert!((g.mean() - 0.5f64.exp()).abs() < 1e-3, "{}", g.mean());
    }

    #[test]
    fn empirical_histogram() {
        let e = DistributionSpec::empirical(vec![1.0, 2.0, 3.0, 3.0]).unwrap();
        let g = discretize(&e, 4, 0.99).unwrap();
        assert_eq!(g.kind(), CellKind::Uniform);
        assert_eq!(g.masses(), &[0.25, 0.0, 0.25, 0.5]);
        assert_eq!(g.total_mass(), 1.0);
        let same = DistributionSpec::empirical(vec![1.5, 1.5]).unwrap();
        assert_eq!(
            discretize(&same, 4, 0.99).unwrap(),
            DensityGrid::point(1.5).unwrap()
        );
    }

    #[test]
    fn iid_difference_is_symmetric() {
        for spec in [weibull(), DistributionSpec::lognormal(0.0, 1.0).unwrap()] {
            let g = grid(&spec);
            let b = difference_density(&g, &g).unwrap();
            let p = interval_probability(&b, f64::NEG_INFINITY, 0.0).unwrap();
            assert!((p - 0.5).abs() < 1e-3, "{p}");
            assert!(b.mean().abs() < 2.0 * b.step());
        }
    }

    #[test]
    fn deterministic_minus_weibull() {
        let b = difference_density(&grid(&det(2.0)), &grid(&weibull())).unwrap();
        let p = interval_probability(&b, f64::NEG_INFINITY, 0.0).unwrap();
        assert!((p - (-1.0f64).exp()).abs() < 1e-3, "{p}");
        // reflection is exact up to the interpolation within the boundary cell
        assert!((p - (-1.0f64).exp()).abs() < 1e-6, "{p}");
    }

    #[test]
    fn deterministic_difference() {
        let b = difference_density(&grid(&det(3.0)), &grid(&det(1.25))).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.origin(), 1.75);
        assert_eq!(b.kind(), CellKind::Atom);
    }

    #[test]
    fn difference_mass_and_mean() {
        let gen = DistributionSpec::lognormal_from_moments(1.25, 1.0).unwrap();
        let dem = weibull();
        let (gg, dg) = (grid(&gen), grid(&dem));
        let b = difference_density(&gg, &dg).unwrap();
        assert!((b.total_mass() - gg.total_mass() * dg.total_mass()).abs() < 1e-12);
        assert!(b.total_mass() >= 1.0 - 2.0 * MASS_BUDGET);
        let diff = b.mean() - (gg.mean() - dg.mean());
        assert!(diff.abs() <= 2.0 * b.step(), "{diff}");
        // against closed-form means, allowing for the discarded tails
        assert!((b.mean() - (gen.mean() - dem.mean())).abs() < 1e-3);
    }

    #[test]
    fn uniform_difference_origin() {
        let g = DensityGrid::new(1.0, 0.5, CellKind::Uniform, vec![0.5, 0.5]).unwrap();
        let d = DensityGrid::new(0.0, 0.5, CellKind::Uniform, vec![1.0]).unwrap();
        let b = difference_density(&g, &d).unwrap();
        // G ~ U[1, 2), D ~ U[0, 0.5): B spans (0.5, 2)
        assert_eq!(b.origin(), 0.5);
        assert_eq!(b.masses(), &[0.25, 0.5, 0.25]);
        assert!((b.mean() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn mismatched_atom_lattice_is_rejected() {
        let a = DensityGrid::new(0.0, 0.3, CellKind::Atom, vec![0.5, 0.5]).unwrap();
        let u = DensityGrid::new(0.0, 0.5, CellKind::Uniform, vec![1.0]).unwrap();
        assert!(matches!(
            difference_density(&a, &u),
            Err(BalanceError::StepMismatch { .. })
        ));
    }

    #[test]
    fn resample_preserves_mass_and_mean() {
        let g = discretize(&weibull(), 1000, 0.9999).unwrap();
        let r = g.resample(g.step() * 2.7).unwrap();
        assert!((r.total_mass() - g.total_mass()).abs() < 1e-12);
        assert!((r.mean() - g.mean()).abs() < r.step());
    }

    #[test]
    fn interval_probability_basics() {
        let b = difference_density(&grid(&weibull()), &grid(&weibull())).unwrap();
        assert_eq!(interval_probability(&b, 0.3, 0.3).unwrap(), 0.0);
        let all = interval_probability(&b, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert_eq!(all, b.total_mass());
        let left = interval_probability(&b, -0.4, 0.1).unwrap();
        let right = interval_probability(&b, 0.1, 0.7).unwrap();
        let whole = interval_probability(&b, -0.4, 0.7).unwrap();
        assert!((left + right - whole).abs() < 1e-14);
        assert!(matches!(
            interval_probability(&b, 1.0, 0.0),
            Err(BalanceError::InvalidInterval { .. })
        ));
    }

    #[test]
    fn atom_interval_convention() {
        let b = DensityGrid::point(0.0).unwrap();
        assert_eq!(interval_probability(&b, -1.0, 0.0).unwrap(), 1.0);
        assert_eq!(interval_probability(&b, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn self_sufficiency_examples() {
        let s = battery(0.0);
        let zero = DensityGrid::point(0.0).unwrap();
        let mid = self_sufficiency(&zero, &BalanceQuery::new(2.5, &s).unwrap());
        assert_eq!(mid.as_array(), [0.0, 0.0, 1.0]);

        let plus_one = DensityGrid::point(1.0).unwrap();
        let full = self_sufficiency(&plus_one, &BalanceQuery::new(5.0, &s).unwrap());
        assert_eq!(full.p_overflow, 1.0);

        let b = balance_grid(&det(2.0), &weibull(), DEFAULT_CELLS, DEFAULT_COVERAGE).unwrap();
        let t = self_sufficiency(&b, &BalanceQuery::new(0.0, &s).unwrap());
        assert!((t.p_deficit - 0.367879).abs() < 1e-3);
        assert!((t.p_deficit + t.p_overflow + t.p_self - b.total_mass()).abs() < 1e-9);
    }

    #[test]
    fn query_rejects_out_of_window() {
        let s = battery(0.0);
        assert!(BalanceQuery::new(-0.1, &s).is_err());
        assert!(BalanceQuery::new(5.1, &s).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let s = battery(0.0);
        let w = weibull();
        let t0 = weibull_closed_form(2.0, 0.0, &s, &w).unwrap();
        assert!((t0.p_deficit - 0.367879).abs() < 1e-6);
        assert_eq!(t0.p_overflow, 0.0);

        let t4 = weibull_closed_form(2.0, 4.0, &s, &w).unwrap();
        assert!((t4.p_overflow - 0.030767).abs() < 1e-6);
        assert!(t4.p_deficit < 1e-100);

        let t5 = weibull_closed_form(2.0, 5.0, &s, &w).unwrap();
        assert!((t5.p_overflow - 0.632121).abs() < 1e-6);

        let empty = weibull_closed_form(0.0, 0.0, &s, &w).unwrap();
        assert_eq!((empty.p_deficit, empty.p_self), (1.0, 0.0));
    }

    #[test]
    fn closed_form_errors() {
        let s = battery(0.0);
        assert!(matches!(
            weibull_closed_form(2.0, 0.0, &s, &det(1.0)),
            Err(BalanceError::NotWeibull("deterministic"))
        ));
        assert!(matches!(
            weibull_closed_form(-1.0, 0.0, &s, &weibull()),
            Err(BalanceError::NegativeGeneration(_))
        ));
        assert!(matches!(
            weibull_closed_form(1.0, 6.0, &s, &weibull()),
            Err(BalanceError::Storage(_))
        ));
    }

    #[test]
    fn closed_form_monotone_and_disjoint() {
        let s = battery(0.0);
        let w = DistributionSpec::weibull(1.3, 0.8).unwrap();
        let mut prev: Option<ProbabilityTriple> = None;
        for lv in s.even_levels(201) {
            let t = weibull_closed_form(0.7, lv, &s, &w).unwrap();
            assert!(t.p_deficit + t.p_overflow <= 1.0);
            assert!(t.as_array().iter().all(|p| (0.0..=1.0).contains(p)));
            if let Some(p) = prev {
                assert!(t.p_deficit <= p.p_deficit);
                assert!(t.p_overflow >= p.p_overflow);
            }
            prev = Some(t);
        }
    }

    #[test]
    fn grid_matches_closed_form_sweep() {
        let s = battery(0.0);
        let b = balance_grid(&det(2.0), &weibull(), DEFAULT_CELLS, DEFAULT_COVERAGE).unwrap();
        for lv in s.even_levels(11) {
            let grid = self_sufficiency(&b, &BalanceQuery::new(lv, &s).unwrap());
            let exact = weibull_closed_form(2.0, lv, &s, &weibull()).unwrap();
            assert!(grid.max_abs_diff(&exact) < 1e-3, "level {lv}");
        }
    }

    #[test]
    fn refinement_is_stable() {
        let s = battery(0.0);
        let gen = DistributionSpec::lognormal_from_moments(1.25, 1.0).unwrap();
        let dem = DistributionSpec::lognormal_from_moments(1.6, 0.9).unwrap();
        let coarse = balance_grid(&gen, &dem, DEFAULT_CELLS, DEFAULT_COVERAGE).unwrap();
        let fine = balance_grid(&gen, &dem, 2 * DEFAULT_CELLS, DEFAULT_COVERAGE).unwrap();
        for lv in [0.0, 1.0, 2.5, 4.0, 5.0] {
            let q = BalanceQuery::new(lv, &s).unwrap();
            let d = self_sufficiency(&coarse, &q).max_abs_diff(&self_sufficiency(&fine, &q));
            assert!(d < 1e-3, "level {lv}: {d}");
        }
    }
}
