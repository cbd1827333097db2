//! Scaling-law relations used by the accounting rules.
//!
//! * Chinchilla-style loss/compute conversion in ratio form: a loss ratio `r` needs
//!   `r^(-1/alpha)` times the training compute.
//! * Compute-optimal inference per request, `k * sqrt(C)`.
//! * Conversion of inference compute above the optimum into equivalent training compute
//!   through a piecewise-linear anchor table per capability domain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::{ComputeAmount, OomValue};
use crate::ledger::{CapabilityDomain, InferenceProfile};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid scaling config: {0}")]
    InvalidConfig(String),
}

/// `(excess inference OOMs, training-equivalent OOMs)` breakpoints. Flat after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound = "")]
pub struct AnchorTable<F: Scalar = f64>(Vec<(F, F)>);

impl<F: Scalar> AnchorTable<F> {
    pub fn new(points: Vec<(F, F)>) -> Result<Self, ScalingError> {
        let table = Self(points);
        table.validate()?;
        Ok(table)
    }

    fn from_f64(points: &[(f64, f64)]) -> Self {
        Self(
            points
                .iter()
                .map(|&(x, y)| (F::lit(x), F::lit(y)))
                .collect(),
        )
    }

    /// Two anchors: about 2 OOM of training compute recovered by 2-3 OOM of extra
    /// inference, flat afterwards.
    pub fn general_default() -> Self {
        Self::from_f64(&[(0.0, 0.0), (2.5, 2.0)])
    }

    /// Math and coding keep improving: 5-6 OOM of extra inference recovers 3-4 OOM.
    pub fn mathcoding_default() -> Self {
        Self::from_f64(&[(0.0, 0.0), (2.5, 2.0), (5.5, 3.5)])
    }

    /// Repeated-sampling preset: 10x more samples is worth about 5x training compute,
    /// over four orders of magnitude of samples.
    pub fn repeated_sampling() -> Self {
        let per_oom = 5f64.log10();
        Self::from_f64(&[(0.0, 0.0), (4.0, 4.0 * per_oom)])
    }

    pub fn points(&self) -> &[(F, F)] {
        &self.0
    }

    /// Last anchor's value; the curve never exceeds it.
    pub fn plateau(&self) -> F {
        self.0.last().map(|p| p.1).unwrap_or_else(F::zero)
    }

    pub fn validate(&self) -> Result<(), ScalingError> {
        let first = self
            .0
            .first()
            .ok_or_else(|| ScalingError::InvalidConfig("anchor table is empty".into()))?;
        if first.0 != F::zero() || first.1 != F::zero() {
            return Err(ScalingError::InvalidConfig(
                "first anchor must be (0, 0)".into(),
            ));
        }
        for pair in self.0.windows(2) {
            let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
            if !(x1.is_finite() && y1.is_finite()) || x1 <= x0 || y1 <= y0 {
                return Err(ScalingError::InvalidConfig(format!(
                    "anchors must be strictly increasing in both coordinates: ({x0}, {y0}) -> ({x1}, {y1})"
                )));
            }
            // Slopes of 2 or more would let extra training compute lower the adjusted total
            // (the optimum moves by half an OOM per training OOM).
            if (y1 - y0) / (x1 - x0) >= F::lit(2.0) {
                return Err(ScalingError::InvalidConfig(format!(
                    "anchor segment ({x0}, {y0}) -> ({x1}, {y1}) has slope >= 2"
                )));
            }
        }
        Ok(())
    }

    /// Piecewise-linear interpolation, clamped to the plateau.
    pub fn evaluate(&self, excess: F) -> F {
        let pts = &self.0;
        if excess <= F::zero() || pts.len() < 2 {
            return F::zero();
        }
        for pair in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
            if excess <= x1 {
                return y0 + (y1 - y0) * (excess - x0) / (x1 - x0);
            }
        }
        self.plateau()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[serde(bound = "")]
pub struct ScalingConfig<F: Scalar = f64> {
    /// Exponent of the loss/compute power law.
    pub loss_compute_exponent: F,
    /// Run-to-run standard deviation of the loss (relative).
    pub loss_noise_std: F,
    /// Loss ratio needed to call an improvement detectable.
    pub confidence_loss_ratio: F,
    /// `k` in `I_opt = k * sqrt(C)`.
    pub inference_optimal_coefficient: F,
    pub general_anchors: AnchorTable<F>,
    pub mathcoding_anchors: AnchorTable<F>,
}

impl<F: Scalar> Default for ScalingConfig<F> {
    fn default() -> Self {
        Self {
            loss_compute_exponent: F::lit(0.15),
            loss_noise_std: F::lit(0.01),
            confidence_loss_ratio: F::lit(0.98),
            inference_optimal_coefficient: F::lit(0.1),
            general_anchors: AnchorTable::general_default(),
            mathcoding_anchors: AnchorTable::mathcoding_default(),
        }
    }
}

impl<F: Scalar> ScalingConfig<F> {
    /// Default constants with both domains on the repeated-sampling anchor table.
    pub fn repeated_sampling() -> Self {
        Self {
            general_anchors: AnchorTable::repeated_sampling(),
            mathcoding_anchors: AnchorTable::repeated_sampling(),
            ..Self::default()
        }
    }

    /// A two-sigma improvement over the configured loss noise, `1 - 2 * sigma`.
    pub fn two_sigma_loss_ratio(&self) -> F {
        F::one() - F::lit(2.0) * self.loss_noise_std
    }

    pub fn anchors(&self, domain: CapabilityDomain) -> &AnchorTable<F> {
        match domain {
            CapabilityDomain::General => &self.general_anchors,
            CapabilityDomain::MathCoding => &self.mathcoding_anchors,
        }
    }

    pub fn validate(&self) -> Result<(), ScalingError> {
        let positive = |name: &str, v: F| {
            if v.is_finite() && v > F::zero() {
                Ok(())
            } else {
                Err(ScalingError::InvalidConfig(format!(
                    "{name} must be > 0, got {v}"
                )))
            }
        };
        positive("loss_compute_exponent", self.loss_compute_exponent)?;
        positive("loss_noise_std", self.loss_noise_std)?;
        positive("confidence_loss_ratio", self.confidence_loss_ratio)?;
        positive(
            "inference_optimal_coefficient",
            self.inference_optimal_coefficient,
        )?;
        if self.confidence_loss_ratio > F::one() {
            return Err(ScalingError::InvalidConfig(format!(
                "confidence_loss_ratio must be <= 1, got {}",
                self.confidence_loss_ratio
            )));
        }
        self.general_anchors.validate()?;
        self.mathcoding_anchors.validate()?;

        // Both curves are linear between the union of breakpoints and flat beyond, so
        // checking the breakpoints covers every excess value.
        let xs = self
            .general_anchors
            .points()
            .iter()
            .chain(self.mathcoding_anchors.points())
            .map(|p| p.0);
        for x in xs {
            if self.mathcoding_anchors.evaluate(x) < self.general_anchors.evaluate(x) {
                return Err(ScalingError::InvalidConfig(format!(
                    "math/coding anchors fall below general anchors at excess {x}"
                )));
            }
        }
        Ok(())
    }
}

/// Training-compute multiplier needed to reach loss ratio `r`: `r^(-1/exponent)`.
pub fn compute_multiplier_for_loss_ratio<F: Scalar>(
    r: F,
    cfg: &ScalingConfig<F>,
) -> Result<F, ScalingError> {
    if !(r > F::zero() && r <= F::one()) {
        return Err(ScalingError::Domain(format!(
            "loss ratio must be in (0, 1], got {r}"
        )));
    }
    Ok(r.powf(-F::one() / cfg.loss_compute_exponent))
}

/// Loss ratio reached by multiplying training compute by `m`: `m^(-exponent)`.
pub fn loss_ratio_for_multiplier<F: Scalar>(
    m: F,
    cfg: &ScalingConfig<F>,
) -> Result<F, ScalingError> {
    if !(m >= F::one() && m.is_finite()) {
        return Err(ScalingError::Domain(format!(
            "compute multiplier must be >= 1, got {m}"
        )));
    }
    Ok(m.powf(-cfg.loss_compute_exponent))
}

/// Smallest fine-tuning compute, as a fraction of training compute, whose loss effect is
/// distinguishable from noise.
pub fn min_detectable_finetune_fraction<F: Scalar>(
    cfg: &ScalingConfig<F>,
) -> Result<F, ScalingError> {
    cfg.validate()?;
    Ok(compute_multiplier_for_loss_ratio(cfg.confidence_loss_ratio, cfg)? - F::one())
}

/// Per-request inference compute of a compute-optimally trained model, `k * sqrt(C)`.
pub fn compute_optimal_inference<F: Scalar>(
    training: ComputeAmount<F>,
    cfg: &ScalingConfig<F>,
) -> Result<ComputeAmount<F>, ScalingError> {
    if training.is_zero() {
        return Err(ScalingError::Domain("training compute must be > 0".into()));
    }
    let l = cfg.inference_optimal_coefficient.log10() + F::lit(0.5) * training.log10();
    ComputeAmount::from_log10(l).map_err(|e| ScalingError::Domain(e.to_string()))
}

/// OOMs of `actual` above `optimal`, clamped at zero.
pub fn excess_inference_ooms<F: Scalar>(
    actual: ComputeAmount<F>,
    optimal: ComputeAmount<F>,
) -> OomValue<F> {
    if actual.is_zero() || optimal.is_zero() {
        return OomValue::zero();
    }
    let d = actual.log10() - optimal.log10();
    OomValue::new(if d > F::zero() { d } else { F::zero() }).unwrap_or_else(|_| OomValue::zero())
}

pub fn training_equivalent_ooms<F: Scalar>(
    excess: OomValue<F>,
    domain: CapabilityDomain,
    cfg: &ScalingConfig<F>,
) -> OomValue<F> {
    OomValue::new(cfg.anchors(domain).evaluate(excess.get())).unwrap_or_else(|_| OomValue::zero())
}

/// Training compute scaled by the training-equivalent of any above-optimal inference.
pub fn inference_adjusted_compute<F: Scalar>(
    training: ComputeAmount<F>,
    profile: Option<&InferenceProfile<F>>,
    cfg: &ScalingConfig<F>,
) -> Result<ComputeAmount<F>, ScalingError> {
    Ok(training.scale_ooms(inference_training_equivalent(training, profile, cfg)?.get()))
}

/// Training-equivalent OOMs contributed by `profile` on a model trained with `training`.
pub fn inference_training_equivalent<F: Scalar>(
    training: ComputeAmount<F>,
    profile: Option<&InferenceProfile<F>>,
    cfg: &ScalingConfig<F>,
) -> Result<OomValue<F>, ScalingError> {
    let Some(profile) = profile else {
        return Ok(OomValue::zero());
    };
    let optimal = compute_optimal_inference(training, cfg)?;
    let excess = excess_inference_ooms(profile.per_request_compute, optimal);
    Ok(training_equivalent_ooms(
        excess,
        profile.capability_domain,
        cfg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type C = ComputeAmount<f64>;

    fn cfg() -> ScalingConfig<f64> {
        ScalingConfig::default()
    }

    fn c(s: &str) -> C {
        s.parse().unwrap()
    }

    fn oom(v: f64) -> OomValue<f64> {
        OomValue::new(v).unwrap()
    }

    // Oracle: direct evaluation of r^(-1/alpha) written out with exp/ln.
    fn multiplier_oracle(r: f64, alpha: f64) -> f64 {
        (-(r.ln()) / alpha).exp()
    }

    #[test]
    fn loss_ratio_multiplier_examples() {
        let m = compute_multiplier_for_loss_ratio(0.98, &cfg()).unwrap();
        assert!((m - 1.1442).abs() < 1e-3);
        assert!((m - multiplier_oracle(0.98, 0.15)).abs() < 1e-12);
        assert_eq!(compute_multiplier_for_loss_ratio(1.0, &cfg()).unwrap(), 1.0);
        let m99 = compute_multiplier_for_loss_ratio(0.99, &cfg()).unwrap();
        assert!((m99 - 1.0693).abs() < 1e-3);
        assert!(compute_multiplier_for_loss_ratio(0.0, &cfg()).is_err());
        assert!(compute_multiplier_for_loss_ratio(1.01, &cfg()).is_err());
        assert!(compute_multiplier_for_loss_ratio(-0.5, &cfg()).is_err());
    }

    #[test]
    fn multiplier_loss_ratio_examples() {
        assert!((loss_ratio_for_multiplier(1.1442, &cfg()).unwrap() - 0.98).abs() < 1e-3);
        assert_eq!(loss_ratio_for_multiplier(1.0, &cfg()).unwrap(), 1.0);
        let r = loss_ratio_for_multiplier(1.15, &cfg()).unwrap();
        assert!((r - 0.9793).abs() < 1e-3);
        assert!(r <= 0.98);
        assert!(loss_ratio_for_multiplier(0.99, &cfg()).is_err());
    }

    #[test]
    fn min_detectable_fraction_examples() {
        assert!((min_detectable_finetune_fraction(&cfg()).unwrap() - 0.144).abs() < 1e-3);
        let no_gain = ScalingConfig {
            confidence_loss_ratio: 1.0,
            ..cfg()
        };
        assert_eq!(min_detectable_finetune_fraction(&no_gain).unwrap(), 0.0);
        let steeper = ScalingConfig {
            loss_compute_exponent: 0.3,
            ..cfg()
        };
        let f = min_detectable_finetune_fraction(&steeper).unwrap();
        assert!((f - 0.0697).abs() < 1e-3);
        assert!((f - (multiplier_oracle(0.98, 0.3) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn default_ratio_is_two_sigma() {
        assert!((cfg().two_sigma_loss_ratio() - cfg().confidence_loss_ratio).abs() < 1e-12);
    }

    #[test]
    fn optimal_inference_examples() {
        assert_eq!(
            compute_optimal_inference(c("1e24"), &cfg())
                .unwrap()
                .log10(),
            11.0
        );
        assert_eq!(
            compute_optimal_inference(c("1e22"), &cfg())
                .unwrap()
                .log10(),
            10.0
        );
        assert_eq!(
            compute_optimal_inference(c("1e26"), &cfg())
                .unwrap()
                .log10(),
            12.0
        );
        assert!(compute_optimal_inference(C::zero(), &cfg()).is_err());
    }

    #[test]
    fn excess_examples() {
        assert_eq!(excess_inference_ooms(c("1e14"), c("1e11")).get(), 3.0);
        assert_eq!(excess_inference_ooms(c("1e11"), c("1e11")).get(), 0.0);
        assert_eq!(excess_inference_ooms(c("1e9"), c("1e11")).get(), 0.0);
    }

    #[test]
    fn training_equivalent_examples() {
        use CapabilityDomain::*;
        assert_eq!(
            training_equivalent_ooms(oom(3.0), General, &cfg()).get(),
            2.0
        );
        assert_eq!(
            training_equivalent_ooms(oom(0.0), General, &cfg()).get(),
            0.0
        );
        assert_eq!(
            training_equivalent_ooms(oom(0.0), MathCoding, &cfg()).get(),
            0.0
        );
        assert!((training_equivalent_ooms(oom(1.25), General, &cfg()).get() - 1.0).abs() < 1e-12);
        assert_eq!(
            training_equivalent_ooms(oom(5.5), MathCoding, &cfg()).get(),
            3.5
        );
        assert_eq!(
            training_equivalent_ooms(oom(10.0), General, &cfg()).get(),
            2.0
        );
        assert_eq!(
            training_equivalent_ooms(oom(10.0), MathCoding, &cfg()).get(),
            3.5
        );
    }

    #[test]
    fn inference_adjusted_examples() {
        let general = |s: &str| InferenceProfile {
            per_request_compute: c(s),
            capability_domain: CapabilityDomain::General,
        };
        let out = inference_adjusted_compute(c("1e24"), Some(&general("1e14")), &cfg()).unwrap();
        assert!((out.log10() - 26.0).abs() < 1e-12);
        let out = inference_adjusted_compute(c("1e24"), Some(&general("1e11")), &cfg()).unwrap();
        assert_eq!(out.log10(), 24.0);
        let out = inference_adjusted_compute(c("1e24"), None, &cfg()).unwrap();
        assert_eq!(out.log10(), 24.0);
        let math = InferenceProfile {
            per_request_compute: c("10^15.5"),
            capability_domain: CapabilityDomain::MathCoding,
        };
        let out = inference_adjusted_compute(c("1e22"), Some(&math), &cfg()).unwrap();
        assert!((out.log10() - 25.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(ScalingConfig::<f64>::repeated_sampling().validate().is_ok());
        let bad_first = ScalingConfig {
            general_anchors: AnchorTable(vec![(0.5, 0.0), (2.5, 2.0)]),
            ..cfg()
        };
        assert!(bad_first.validate().is_err());
        let not_increasing = ScalingConfig {
            general_anchors: AnchorTable(vec![(0.0, 0.0), (2.5, 2.0), (2.0, 3.0)]),
            ..cfg()
        };
        assert!(not_increasing.validate().is_err());
        let dominated = ScalingConfig {
            general_anchors: AnchorTable(vec![(0.0, 0.0), (2.5, 2.4)]),
            ..cfg()
        };
        assert!(dominated.validate().is_err());
        let ratio_above_one = ScalingConfig {
            confidence_loss_ratio: 1.2,
            ..cfg()
        };
        assert!(ratio_above_one.validate().is_err());
        assert!(AnchorTable::new(vec![(0.0, 0.0), (1.0, 2.5)]).is_err());
    }

    #[test]
    fn works_in_f32() {
        let cfg32 = ScalingConfig::<f32>::default();
        let f = min_detectable_finetune_fraction(&cfg32).unwrap();
        assert!((f - 0.144).abs() < 1e-3);
        let c32: ComputeAmount<f32> = "1e24".parse().unwrap();
        let opt = compute_optimal_inference(c32, &cfg32).unwrap();
        assert!((opt.log10() - 11.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn multiplier_round_trip(m in 1.0f64..100.0) {
            let r = loss_ratio_for_multiplier(m, &cfg()).unwrap();
            let back = compute_multiplier_for_loss_ratio(r, &cfg()).unwrap();
            prop_assert!((back / m - 1.0).abs() < 1e-9);
        }

        #[test]
        fn multiplier_strictly_decreasing(a in 0.01f64..1.0, b in 0.01f64..1.0) {
            prop_assume!(a < b);
            let ma = compute_multiplier_for_loss_ratio(a, &cfg()).unwrap();
            let mb = compute_multiplier_for_loss_ratio(b, &cfg()).unwrap();
            prop_assert!(ma > mb);
        }

        #[test]
        fn optimal_inference_is_half_log(l in 2.0f64..30.0) {
            let opt = compute_optimal_inference(C::from_log10(l).unwrap(), &cfg()).unwrap();
            prop_assert!((opt.log10() - 0.1f64.log10() - 0.5 * l).abs() < 1e-12);
        }
    }

    #[test]
    fn equivalent_is_monotone_dominated_and_plateaus() {
        use CapabilityDomain::*;
        let cfg = cfg();
        let mut prev = (0.0, 0.0);
        for i in 0..=2000 {
            let x = i as f64 * 0.005;
            let g = training_equivalent_ooms(oom(x), General, &cfg).get();
            let m = training_equivalent_ooms(oom(x), MathCoding, &cfg).get();
            assert!(g >= prev.0 && m >= prev.1, "non-monotone at {x}");
            assert!(m >= g, "math/coding below general at {x}");
            if x >= 2.5 {
                assert_eq!(g, 2.0);
            }
            if x >= 5.5 {
                assert_eq!(m, 3.5);
            }
            prev = (g, m);
        }
    }
}
