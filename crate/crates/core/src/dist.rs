//! One-step random quantities for generation and demand.
//!
//! Every variant describes a nonnegative energy amount. Continuous variants
//! (log-normal, Weibull) expose a density; the degenerate and empirical
//! variants only expose cumulative and quantile evaluation.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::gamma;
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityDomain(f64),
    #[error("{0} distributions have no density")]
    UnsupportedVariant(&'static str),
}

fn positive(name: &'static str, value: f64) -> Result<f64, DistError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(DistError::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

fn nonnegative(name: &'static str, value: f64) -> Result<f64, DistError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(DistError::InvalidParameter {
            name,
            value,
            reason: "must be finite and >= 0",
        })
    }
}

/// Sorted, nonempty list of nonnegative observations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSamples(Vec<f64>);

impl EmpiricalSamples {
    pub fn new(mut samples: Vec<f64>) -> Result<Self, DistError> {
        if samples.is_empty() {
            return Err(DistError::InvalidParameter {
                name: "samples",
                value: f64::NAN,
                reason: "list must be nonempty",
            });
        }
        for &s in &samples {
            nonnegative("samples", s)?;
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self(samples))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0[0]
    }

    pub fn max(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

/// Tagged description of a one-step random energy quantity.
///
/// Build values through the checked constructors; the variant fields are
/// public for matching but the constructors are the only place parameters
/// are validated.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    /// `ln X ~ N(mu, sigma²)`.
    LogNormal { mu: f64, sigma: f64 },
    /// `F(y) = 1 − exp(−(y/λ)^k)` on `y ≥ 0`.
    Weibull { scale_lambda: f64, shape_k: f64 },
    /// Point mass, used for perfectly forecast generation.
    Deterministic { value: f64 },
    /// Uniform draw from stored observations.
    Empirical { samples: EmpiricalSamples },
}

impl DistributionSpec {
    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self, DistError> {
        if !mu.is_finite() {
            return Err(DistError::InvalidParameter {
                name: "mu",
                value: mu,
                reason: "must be finite",
            });
        }
        Ok(Self::LogNormal {
            mu,
            sigma: positive("sigma", sigma)?,
        })
    }

    pub fn weibull(scale_lambda: f64, shape_k: f64) -> Result<Self, DistError> {
        Ok(Self::Weibull {
            scale_lambda: positive("scale", scale_lambda)?,
            shape_k: positive("shape", shape_k)?,
        })
    }

    pub fn deterministic(value: f64) -> Result<Self, DistError> {
        Ok(Self::Deterministic {
            value: nonnegative("value", value)?,
        })
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self, DistError> {
        Ok(Self::Empirical {
            samples: EmpiricalSamples::new(samples)?,
        })
    }

    /// Log-normal whose first two moments are `mean` and `variance`.
    ///
    /// `sigma² = ln(1 + variance/mean²)`, `mu = ln(mean) − sigma²/2`.
    pub fn lognormal_from_moments(mean: f64, variance: f64) -> Result<Self, DistError> {
        let mean = positive("mean", mean)?;
        let variance = positive("variance", variance)?;
        let sigma2 = (variance / (mean * mean)).ln_1p();
        Self::lognormal(mean.ln() - 0.5 * sigma2, sigma2.sqrt())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::LogNormal { .. } => "lognormal",
            Self::Weibull { .. } => "weibull",
            Self::Deterministic { .. } => "deterministic",
            Self::Empirical { .. } => "empirical",
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Self::LogNormal { .. } | Self::Weibull { .. })
    }

    /// Draws one value. Weibull uses inverse transform, log-normal a
    /// standard normal transform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
            Self::Weibull {
                scale_lambda,
                shape_k,
            } => {
                // u in [0, 1), so 1 − u in (0, 1] and the log stays finite
                let u: f64 = rng.random();
                scale_lambda * (-(-u).ln_1p()).powf(shape_k.recip())
            }
            Self::Deterministic { value } => *value,
            Self::Empirical { samples } => samples.0[rng.random_range(0..samples.len())],
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return 0.0;
        }
        match self {
            Self::LogNormal { mu, sigma } => {
                if x == 0.0 {
                    0.0
                } else {
                    0.5 * erfc(-(x.ln() - mu) / (sigma * SQRT_2))
                }
            }
            Self::Weibull {
                scale_lambda,
                shape_k,
            } => -(-(x / scale_lambda).powf(*shape_k)).exp_m1(),
            Self::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Empirical { samples } => {
                let below = samples.0.partition_point(|&s| s <= x);
                below as f64 / samples.len() as f64
            }
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64, DistError> {
        match self {
            Self::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    return Ok(0.0);
                }
                let z = (x.ln() - mu) / sigma;
                Ok((-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt()))
            }
            Self::Weibull {
                scale_lambda,
                shape_k,
            } => {
                if x < 0.0 {
                    return Ok(0.0);
                }
                let r = x / scale_lambda;
                Ok(shape_k / scale_lambda * r.powf(shape_k - 1.0) * (-r.powf(*shape_k)).exp())
            }
            Self::Deterministic { .. } => Err(DistError::UnsupportedVariant("deterministic")),
            Self::Empirical { .. } => Err(DistError::UnsupportedVariant("empirical")),
        }
    }

    /// Inverse cumulative. For the discrete variants returns the smallest
    /// `x` with `cdf(x) >= p`.
    pub fn quantile(&self, p: f64) -> Result<f64, DistError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistError::ProbabilityDomain(p));
        }
        Ok(match self {
            Self::LogNormal { mu, sigma } => (mu - sigma * SQRT_2 * erfc_inv(2.0 * p)).exp(),
            Self::Weibull {
                scale_lambda,
                shape_k,
            } => scale_lambda * (-(-p).ln_1p()).powf(shape_k.recip()),
            Self::Deterministic { value } => *value,
            Self::Empirical { samples } => {
                let n = samples.len();
                let rank = (p * n as f64).ceil() as usize;
                samples.0[rank.clamp(1, n) - 1]
            }
        })
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Self::Weibull {
                scale_lambda,
                shape_k,
            } => scale_lambda * gamma(1.0 + shape_k.recip()),
            Self::Deterministic { value } => *value,
            Self::Empirical { samples } => samples.0.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                s2.exp_m1() * (2.0 * mu + s2).exp()
            }
            Self::Weibull {
                scale_lambda,
                shape_k,
            } => {
                let g1 = gamma(1.0 + shape_k.recip());
                let g2 = gamma(1.0 + 2.0 / shape_k);
                scale_lambda * scale_lambda * (g2 - g1 * g1)
            }
            Self::Deterministic { .. } => 0.0,
            Self::Empirical { samples } => {
                let m = self.mean();
                samples.0.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / samples.len() as f64
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn weibull_2_5() -> DistributionSpec {
        DistributionSpec::weibull(2.0, 5.0).unwrap()
    }

    fn std_lognormal() -> DistributionSpec {
        DistributionSpec::lognormal(0.0, 1.0).unwrap()
    }

    /// Composite Simpson rule, independent of the cdf implementation.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
        let n = intervals + intervals % 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    fn sample_moments(spec: &DistributionSpec, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = stream(seed, 0);
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for i in 0..n {
            let x = spec.sample(&mut rng);
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        (mean, m2 / (n - 1) as f64)
    }

    #[test]
    fn rejects_nonpositive_weibull_parameters() {
        assert!(DistributionSpec::weibull(-2.0, 5.0).is_err());
        assert!(DistributionSpec::weibull(2.0, -5.0).is_err());
        assert!(DistributionSpec::weibull(2.0, 0.0).is_err());
        assert!(DistributionSpec::lognormal(0.0, 0.0).is_err());
        assert!(DistributionSpec::deterministic(-0.1).is_err());
        assert!(DistributionSpec::empirical(vec![]).is_err());
        assert!(DistributionSpec::empirical(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn deterministic_is_degenerate() {
        let d = DistributionSpec::deterministic(2.0).unwrap();
        let mut rng = stream(1, 0);
        assert_eq!(d.sample(&mut rng), 2.0);
        assert_eq!(d.cdf(2.0), 1.0);
        assert_eq!(d.cdf(1.999), 0.0);
        assert_eq!(d.quantile(0.5).unwrap(), 2.0);
        assert!(matches!(d.pdf(2.0), Err(DistError::UnsupportedVariant(_))));
    }

    #[test]
    fn cdf_vanishes_below_zero() {
        let specs = [
            weibull_2_5(),
            std_lognormal(),
            DistributionSpec::deterministic(0.0).unwrap(),
            DistributionSpec::empirical(vec![0.0, 1.0]).unwrap(),
        ];
        for s in &specs {
            assert_eq!(s.cdf(-1.0), 0.0, "{}", s.kind());
        }
    }

    #[test]
    fn weibull_cdf_at_scale() {
        let expected = 1.0 - (-1.0f64).exp();
        assert!((weibull_2_5().cdf(2.0) - expected).abs() < 1e-15);
        assert!((expected - 0.632121).abs() < 1e-6);
    }

    #[test]
    fn weibull_cdf_matches_frequency() {
        let w = weibull_2_5();
        let mut rng = stream(11, 0);
        let n = 200_000;
        let hits = (0..n).filter(|_| w.sample(&mut rng) <= 2.0).count();
        let p = 1.0 - (-1.0f64).exp();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn weibull_pdf_integrates_to_one() {
        let w = weibull_2_5();
        assert_eq!(w.pdf(0.0).unwrap(), 0.0);
        let total = simpson(|x| w.pdf(x).unwrap(), 0.0, 10.0, 20_000);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn lognormal_pdf_half_mass_at_median() {
        let ln = std_lognormal();
        // integrate from a point where the left tail is negligible (< 1e-12)
        let half = simpson(|x| ln.pdf(x).unwrap(), 1e-4, 1.0, 200_000);
        let tail = 0.5 * erfc(-(1e-4f64).ln() / SQRT_2);
        assert!((half + tail - 0.5).abs() < 1e-6, "{half}");
        let total = simpson(|x| ln.pdf(x).unwrap(), 1e-4, 400.0, 2_000_000);
        assert!((total + tail - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn quantile_examples() {
        let w = weibull_2_5();
        let p = 1.0 - (-1.0f64).exp();
        assert!((w.quantile(p).unwrap() - 2.0).abs() < 1e-12);
        assert!((std_lognormal().quantile(0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            w.quantile(0.0),
            Err(DistError::ProbabilityDomain(_))
        ));
        assert!(matches!(
            w.quantile(1.0),
            Err(DistError::ProbabilityDomain(_))
        ));
        assert!(w.quantile(f64::NAN).is_err());
    }

    #[test]
    fn empirical_cdf_and_quantile() {
        let e = DistributionSpec::empirical(vec![3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(e.cdf(0.5), 0.0);
        assert_eq!(e.cdf(2.0), 0.75);
        assert_eq!(e.cdf(3.0), 1.0);
        assert_eq!(e.quantile(0.25).unwrap(), 1.0);
        assert_eq!(e.quantile(0.26).unwrap(), 2.0);
        assert_eq!(e.quantile(0.99).unwrap(), 3.0);
        assert_eq!(e.mean(), 2.0);
    }

    #[test]
    fn moment_conversion_formulas() {
        let spec = DistributionSpec::lognormal_from_moments(1.25, 1.0).unwrap();
        let DistributionSpec::LogNormal { mu, sigma } = spec else {
            panic!("expected log-normal")
        };
        // sigma² = ln(1.64), mu = ln(1.25) − ln(1.64)/2
        assert!((sigma - 0.703346).abs() < 1e-6, "{sigma}");
        assert!((mu - (-0.024205)).abs() < 1e-6, "{mu}");
        assert!((spec.mean() - 1.25).abs() < 1e-12);
        assert!((spec.variance() - 1.0).abs() < 1e-12);

        let tiny = DistributionSpec::lognormal_from_moments(1.0, 1e-12).unwrap();
        let DistributionSpec::LogNormal { mu, sigma } = tiny else {
            unreachable!()
        };
        assert!(sigma < 1e-5 && mu.abs() < 1e-11);

        assert!(DistributionSpec::lognormal_from_moments(0.0, 1.0).is_err());
        assert!(DistributionSpec::lognormal_from_moments(1.0, 0.0).is_err());
    }

    #[test]
    fn weibull_mean_closed_form() {
        assert!((weibull_2_5().mean() - 1.836_34).abs() < 1e-5);
    }

    #[test]
    fn sample_means_match_closed_forms() {
        let n = 1_000_000;
        for (spec, target) in [
            (weibull_2_5(), 1.8363),
            (std_lognormal(), 1.6487),
            (
                DistributionSpec::lognormal_from_moments(2.19, 1.125).unwrap(),
                2.19,
            ),
        ] {
            let (mean, var) = sample_moments(&spec, n, 7);
            assert!(
                (mean - target).abs() < 0.01 * target,
                "{} {mean}",
                spec.kind()
            );
            // law of large numbers at 3 standard errors
            let se = (spec.variance() / n as f64).sqrt();
            assert!(
                (mean - spec.mean()).abs() < 3.0 * se,
                "{} {mean}",
                spec.kind()
            );
            assert!(var > 0.0);
        }
    }

    #[test]
    fn identical_seeds_identical_draws() {
        let spec = std_lognormal();
        let a: Vec<f64> = {
            let mut r = stream(42, 3);
            (0..100).map(|_| spec.sample(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = stream(42, 3);
            (0..100).map(|_| spec.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn cdf_bounded_and_monotone(x in -5.0f64..50.0, dx in 0.0f64..10.0,
                                    lambda in 0.1f64..10.0, k in 0.2f64..10.0,
                                    mu in -2.0f64..2.0, sigma in 0.05f64..2.0) {
            for spec in [DistributionSpec::weibull(lambda, k).unwrap(),
                         DistributionSpec::lognormal(mu, sigma).unwrap()] {
                let a = spec.cdf(x);
                let b = spec.cdf(x + dx);
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!((0.0..=1.0).contains(&b));
                prop_assert!(a <= b);
            }
        }

        #[test]
        fn quantile_round_trip(p in 1e-6f64..(1.0 - 1e-6),
                               lambda in 0.1f64..10.0, k in 0.2f64..10.0,
                               mu in -2.0f64..2.0, sigma in 0.05f64..2.0) {
            for spec in [DistributionSpec::weibull(lambda, k).unwrap(),
                         DistributionSpec::lognormal(mu, sigma).unwrap()] {
                let x = spec.quantile(p).unwrap();
                prop_assert!((spec.cdf(x) - p).abs() <= 1e-9, "{} p={} x={}", spec.kind(), p, x);
            }
        }
    }
}
