//! Clamped storage recursion.
//!
//! `S(t) = min(S_max, max(S(t−1) + B(t), S_min))`, with the part of the balance
//! that does not fit recorded as spill (above `S_max`) or deficit (below
//! `S_min`).

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StorageError {
    #[error("invalid storage spec: {rule} (s_min={s_min}, s_max={s_max}, s_init={s_init})")]
    InvalidSpec {
        rule: &'static str,
        s_min: f64,
        s_max: f64,
        s_init: f64,
    },
    #[error("storage level {level} outside window [{s_min}, {s_max}]")]
    LevelOutsideWindow { level: f64, s_min: f64, s_max: f64 },
    #[error("balance {0} is not finite")]
    NonFiniteBalance(f64),
}

/// Storage window `[s_min, s_max]` plus the level before the first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageSpec {
    s_min: f64,
    s_max: f64,
    s_init: f64,
}

impl StorageSpec {
    pub fn new(s_min: f64, s_max: f64, s_init: f64) -> Result<Self, StorageError> {
        let fail = |rule| StorageError::InvalidSpec {
            rule,
            s_min,
            s_max,
            s_init,
        };
        if !(s_min.is_finite() && s_max.is_finite() && s_init.is_finite()) {
            return Err(fail("all levels must be finite"));
        }
        if s_min < 0.0 {
            return Err(fail("S_min >= 0"));
        }
        if s_max <= s_min {
            return Err(fail("S_max > S_min"));
        }
        if !(s_min..=s_max).contains(&s_init) {
            return Err(fail("S_min <= s_init <= S_max"));
        }
        Ok(Self {
            s_min,
            s_max,
            s_init,
        })
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn s_init(&self) -> f64 {
        self.s_init
    }

    pub fn capacity(&self) -> f64 {
        self.s_max - self.s_min
    }

    /// Same window, different starting level.
    pub fn with_initial(&self, s_init: f64) -> Result<Self, StorageError> {
        Self::new(self.s_min, self.s_max, s_init)
    }

    pub fn check_level(&self, level: f64) -> Result<(), StorageError> {
        if (self.s_min..=self.s_max).contains(&level) {
            Ok(())
        } else {
            Err(StorageError::LevelOutsideWindow {
                level,
                s_min: self.s_min,
                s_max: self.s_max,
            })
        }
    }

    /// `count` evenly spaced levels from `s_min` to `s_max` inclusive.
    pub fn even_levels(&self, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![self.s_min],
            _ => {
                let last = (count - 1) as f64;
                (0..count)
                    .map(|i| {
                        if i == count - 1 {
                            self.s_max
                        } else {
                            self.s_min + self.capacity() * (i as f64 / last)
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub s_next: f64,
    /// Surplus that could not be stored.
    pub spill: f64,
    /// Demand that could not be served from storage.
    pub deficit: f64,
}

pub fn step(s_prev: f64, balance: f64, spec: &StorageSpec) -> Result<StepResult, StorageError> {
    spec.check_level(s_prev)?;
    if !balance.is_finite() {
        return Err(StorageError::NonFiniteBalance(balance));
    }
    let unclamped = s_prev + balance;
    Ok(if unclamped > spec.s_max {
        StepResult {
            s_next: spec.s_max,
            spill: unclamped - spec.s_max,
            deficit: 0.0,
        }
    } else if unclamped < spec.s_min {
        StepResult {
            s_next: spec.s_min,
            spill: 0.0,
            deficit: spec.s_min - unclamped,
        }
    } else {
        StepResult {
            s_next: unclamped,
            spill: 0.0,
            deficit: 0.0,
        }
    })
}

/// Realized generation and demand behind a balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub generation: f64,
    pub demand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Present when the trajectory was driven by generation/demand pairs.
    pub flow: Option<Flow>,
    pub balance: f64,
    pub level: f64,
    pub spill: f64,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub s_init: f64,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_level(&self) -> f64 {
        self.steps.last().map_or(self.s_init, |r| r.level)
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|r| r.level)
    }
}

fn fold_steps(
    spec: &StorageSpec,
    items: impl IntoIterator<Item = (Option<Flow>, f64)>,
) -> Result<Trajectory, StorageError> {
    let mut level = spec.s_init;
    let mut steps = Vec::new();
    for (flow, balance) in items {
        let r = step(level, balance, spec)?;
        level = r.s_next;
        steps.push(StepRecord {
            flow,
            balance,
            level,
            spill: r.spill,
            deficit: r.deficit,
        });
    }
    Ok(Trajectory {
        s_init: spec.s_init,
        steps,
    })
}

/// Folds [`step`] over `balances` starting from `spec.s_init()`.
pub fn evolve(spec: &StorageSpec, balances: &[f64]) -> Result<Trajectory, StorageError> {
    fold_steps(spec, balances.iter().map(|&b| (None, b)))
}

/// Like [`evolve`], with `B(t) = G(t) − D(t)` computed from realized flows.
pub fn evolve_flows(spec: &StorageSpec, flows: &[Flow]) -> Result<Trajectory, StorageError> {
    fold_steps(
        spec,
        flows.iter().map(|f| (Some(*f), f.generation - f.demand)),
    )
}
