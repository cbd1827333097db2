//! Log-domain compute quantities, money amounts and order-of-magnitude values.
//!
//! A [`ComputeAmount`] stores the base-10 logarithm of an operation count so that
//! quantities from a single operation up to 1e30 and beyond can be added, scaled and
//! compared without overflow. The additive identity (zero operations) is carried as a
//! logarithm of negative infinity and is the only amount below one operation.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComputeError {
    #[error("compute must be finite, got {0}")]
    NotFinite(String),
    #[error("compute must be zero or at least one operation, got {0}")]
    BelowOneOperation(String),
    #[error("cannot parse compute value {0:?}")]
    Parse(String),
    #[error("money amount must be finite and non-negative, got {0}")]
    InvalidMoney(f64),
    #[error("order-of-magnitude value must be finite and non-negative, got {0}")]
    InvalidOoms(String),
}

/// Non-negative operation count (FLOP and OP are treated as one unit).
#[derive(Clone, Copy, PartialEq)]
pub struct ComputeAmount<F: Scalar = f64> {
    log10_flop: F,
}

impl<F: Scalar> ComputeAmount<F> {
    pub fn zero() -> Self {
        Self {
            log10_flop: F::neg_infinity(),
        }
    }

    /// Builds an amount from its base-10 logarithm; the logarithm must be finite and `>= 0`.
    pub fn from_log10(log10_flop: F) -> Result<Self, ComputeError> {
        if !log10_flop.is_finite() {
            return Err(ComputeError::NotFinite(format!("1e{log10_flop}")));
        }
        if log10_flop < F::zero() {
            return Err(ComputeError::BelowOneOperation(format!("1e{log10_flop}")));
        }
        Ok(Self { log10_flop })
    }

    pub fn from_flop(flop: F) -> Result<Self, ComputeError> {
        if flop.is_zero() {
            return Ok(Self::zero());
        }
        if !flop.is_finite() {
            return Err(ComputeError::NotFinite(flop.to_string()));
        }
        if flop < F::one() {
            return Err(ComputeError::BelowOneOperation(flop.to_string()));
        }
        Ok(Self {
            log10_flop: flop.log10(),
        })
    }

    /// Base-10 logarithm of the operation count; negative infinity for zero.
    pub fn log10(&self) -> F {
        self.log10_flop
    }

    pub fn is_zero(&self) -> bool {
        self.log10_flop == F::neg_infinity()
    }

    /// Linear operation count. Overflows to infinity for `F = f32` above ~3.4e38.
    pub fn flop(&self) -> F {
        if self.is_zero() {
            F::zero()
        } else {
            F::lit(10.0).powf(self.log10_flop)
        }
    }

    /// Multiplies by `10^ooms`, saturating at one operation. Zero stays zero.
    pub fn scale_ooms(&self, ooms: F) -> Self {
        if self.is_zero() {
            return *self;
        }
        let l = self.log10_flop + ooms;
        Self {
            log10_flop: if l < F::zero() { F::zero() } else { l },
        }
    }

    /// Multiplies by a positive factor, saturating at one operation.
    pub fn scale(&self, factor: F) -> Self {
        debug_assert!(factor > F::zero());
        self.scale_ooms(factor.log10())
    }

    /// `self / other` in the linear domain.
    pub fn ratio(&self, other: &Self) -> F {
        match (self.is_zero(), other.is_zero()) {
            (true, _) => F::zero(),
            (false, true) => F::infinity(),
            (false, false) => F::lit(10.0).powf(self.log10_flop - other.log10_flop),
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other.log10_flop > self.log10_flop {
            other
        } else {
            self
        }
    }

    /// Shortest textual form that parses back to the identical logarithm.
    ///
    /// Plain scientific notation is preferred (`"9.9e25"`); logarithms that no decimal
    /// operation count reproduces exactly are written as `"10^25.5"`.
    pub fn canonical_string(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let l = self.log10_flop.to_f64_lossless();
        let flop = 10f64.powf(l);
        if flop.is_finite() {
            for precision in 0..17 {
                let candidate = format!("{flop:.precision$e}");
                if let Ok(parsed) = candidate.parse::<Self>() {
                    if parsed.log10_flop == self.log10_flop {
                        return candidate;
                    }
                }
            }
        }
        format!("10^{l}")
    }

    pub fn cast<G: Scalar>(&self) -> ComputeAmount<G> {
        if self.is_zero() {
            ComputeAmount::zero()
        } else {
            ComputeAmount {
                log10_flop: G::from_f64_nearest(self.log10_flop.to_f64_lossless()),
            }
        }
    }
}

impl<F: Scalar> Default for ComputeAmount<F> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<F: Scalar> PartialOrd for ComputeAmount<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.log10_flop.partial_cmp(&other.log10_flop)
    }
}

/// Linear-domain sum computed as `max + log10(1 + 10^(min - max))`.
impl<F: Scalar> Add for ComputeAmount<F> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        if rhs.is_zero() {
            return self;
        }
        if self.is_zero() {
            return rhs;
        }
        let (hi, lo) = if self.log10_flop >= rhs.log10_flop {
            (self.log10_flop, rhs.log10_flop)
        } else {
            (rhs.log10_flop, self.log10_flop)
        };
        let ln10 = F::lit(std::f64::consts::LN_10);
        let tail = ((lo - hi) * ln10).exp().ln_1p() / ln10;
        Self {
            log10_flop: hi + tail,
        }
    }
}

impl<F: Scalar> std::iter::Sum for ComputeAmount<F> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl<F: Scalar> fmt::Debug for ComputeAmount<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComputeAmount({})", self.canonical_string())
    }
}

/// Report form `a.bce±NN`, e.g. `1.00e+26`.
impl<F: Scalar> fmt::Display for ComputeAmount<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0.00e+00");
        }
        let l = self.log10_flop.to_f64_lossless();
        let mut exponent = l.floor();
        let mut mantissa = (10f64.powf(l - exponent) * 100.0).round() / 100.0;
        if mantissa >= 10.0 {
            mantissa /= 10.0;
            exponent += 1.0;
        }
        write!(f, "{mantissa:.2}e{:+03}", exponent as i64)
    }
}

/// Accepts decimal strings (`"9.9e25"`, `"150000"`, `"0"`) and log form (`"10^25.5"`).
impl<F: Scalar> FromStr for ComputeAmount<F> {
    type Err = ComputeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(exp) = s.strip_prefix("10^") {
            let l: f64 = exp
                .parse()
                .map_err(|_| ComputeError::Parse(s.to_string()))?;
            return Self::from_log10(F::from_f64_nearest(l));
        }
        let v: f64 = s.parse().map_err(|_| ComputeError::Parse(s.to_string()))?;
        if v.is_nan() || v.is_infinite() {
            return Err(ComputeError::NotFinite(s.to_string()));
        }
        if v == 0.0 {
            return Ok(Self::zero());
        }
        if v < 1.0 {
            return Err(ComputeError::BelowOneOperation(s.to_string()));
        }
        Self::from_log10(F::from_f64_nearest(v.log10()))
    }
}

impl<F: Scalar> Serialize for ComputeAmount<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical_string())
    }
}

impl<'de, F: Scalar> Deserialize<'de> for ComputeAmount<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ComputeVisitor<F>(std::marker::PhantomData<F>);

        impl<F: Scalar> Visitor<'_> for ComputeVisitor<F> {
            type Value = ComputeAmount<F>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an operation count as a string (\"9.9e25\") or number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                ComputeAmount::from_flop(F::from_f64_nearest(v)).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }
        }

        deserializer.deserialize_any(ComputeVisitor(std::marker::PhantomData))
    }
}

/// Non-negative US dollar amount.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct MoneyAmount {
    usd: f64,
}

impl MoneyAmount {
    pub fn new(usd: f64) -> Result<Self, ComputeError> {
        if usd.is_finite() && usd >= 0.0 {
            Ok(Self { usd })
        } else {
            Err(ComputeError::InvalidMoney(usd))
        }
    }

    pub fn usd(&self) -> f64 {
        self.usd
    }
}

impl fmt::Display for MoneyAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.usd)
    }
}

impl<'de> Deserialize<'de> for MoneyAmount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let usd = f64::deserialize(deserializer)?;
        MoneyAmount::new(usd).map_err(de::Error::custom)
    }
}

/// Orders of magnitude (factors of ten), `>= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize)]
#[serde(transparent)]
#[serde(bound = "")]
pub struct OomValue<F: Scalar = f64>(F);

impl<F: Scalar> OomValue<F> {
    pub fn new(ooms: F) -> Result<Self, ComputeError> {
        if ooms.is_finite() && ooms >= F::zero() {
            Ok(Self(ooms))
        } else {
            Err(ComputeError::InvalidOoms(ooms.to_string()))
        }
    }

    pub fn zero() -> Self {
        Self(F::zero())
    }

    pub fn get(&self) -> F {
        self.0
    }
}

impl<'de, F: Scalar> Deserialize<'de> for OomValue<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = F::deserialize(deserializer)?;
        OomValue::new(v).map_err(de::Error::custom)
    }
}
