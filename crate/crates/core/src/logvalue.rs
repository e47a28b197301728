//! Sign plus natural logarithm of magnitude.
//!
//! Determinants and partition functions in this crate routinely exceed the
//! `f64` range (`I_0(J)` alone grows like `e^J`), so they travel as
//! `LogValue`s and are exponentiated only on demand.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Div, Mul};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    sign: i8,
    ln_magnitude: f64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        sign: 0,
        ln_magnitude: f64::NEG_INFINITY,
    };
    pub const ONE: LogValue = LogValue {
        sign: 1,
        ln_magnitude: 0.0,
    };

    /// Builds a value from its parts. A zero sign forces `ln_magnitude = -inf`
    /// and a `-inf` magnitude forces a zero sign.
    pub fn new(sign: i8, ln_magnitude: f64) -> Self {
        if sign == 0 || ln_magnitude == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            LogValue {
                sign: sign.signum(),
                ln_magnitude,
            }
        }
    }

    /// Positive value `e^{ln}`.
    pub fn from_ln(ln: f64) -> Self {
        Self::new(1, ln)
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self::new(if x > 0.0 { 1 } else { -1 }, x.abs().ln())
        }
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn ln_magnitude(&self) -> f64 {
        self.ln_magnitude
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// `sign · e^{ln}`; may overflow to `±inf` or underflow to 0.
    pub fn value(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.ln_magnitude.exp()
        }
    }

    pub fn abs(&self) -> Self {
        Self::new(self.sign.abs(), self.ln_magnitude)
    }

    pub fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Self::ONE;
        }
        if self.is_zero() {
            return Self::ZERO;
        }
        let sign = if n % 2 == 0 { 1 } else { self.sign };
        Self::new(sign, self.ln_magnitude * f64::from(n))
    }

    /// `sqrt(|x|)`.
    pub fn sqrt_abs(&self) -> Self {
        Self::new(self.sign.abs(), 0.5 * self.ln_magnitude)
    }

    /// Relative difference `|a - b| / max(|a|, |b|)` computed without
    /// leaving the log domain when both carry the same sign.
    pub fn rel_diff(&self, other: &LogValue) -> f64 {
        match (self.sign, other.sign) {
            (0, 0) => 0.0,
            (0, _) | (_, 0) => 1.0,
            (a, b) if a != b => 2.0,
            _ => {
                let d = (self.ln_magnitude - other.ln_magnitude).abs();
                -(-d).exp_m1()
            }
        }
    }
}

impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        LogValue::new(self.sign * rhs.sign, self.ln_magnitude + rhs.ln_magnitude)
    }
}

impl Div for LogValue {
    type Output = LogValue;
    fn div(self, rhs: LogValue) -> LogValue {
        assert!(!rhs.is_zero(), "LogValue division by zero");
        LogValue::new(self.sign * rhs.sign, self.ln_magnitude - rhs.ln_magnitude)
    }
}

impl PartialOrd for LogValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                0 => Some(Ordering::Equal),
                1 => self.ln_magnitude.partial_cmp(&other.ln_magnitude),
                _ => other.ln_magnitude.partial_cmp(&self.ln_magnitude),
            },
            ord => Some(ord),
        }
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            0 => write!(f, "0"),
            1 => write!(f, "exp({})", self.ln_magnitude),
            _ => write!(f, "-exp({})", self.ln_magnitude),
        }
    }
}

/// `ln Σ_i e^{x_i}` with the max shifted out.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln Σ_i w_i e^{x_i}` for non-negative weights.
pub fn log_sum_exp_weighted(terms: &[(f64, f64)]) -> f64 {
    let max = terms
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(_, x)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms
        .iter()
        .map(|(w, x)| w * (x - max).exp())
        .sum::<f64>()
        .ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_invariant() {
        let z = LogValue::new(1, f64::NEG_INFINITY);
        assert_eq!(z.sign(), 0);
        let z = LogValue::new(0, 3.0);
        assert_eq!(z.ln_magnitude(), f64::NEG_INFINITY);
        assert!(LogValue::from_f64(0.0).is_zero());
    }

    #[test]
    fn arithmetic() {
        let a = LogValue::from_f64(-2.0);
        let b = LogValue::from_f64(8.0);
        assert!(((a * b).value() + 16.0).abs() < 1e-12);
        assert!(((b / a).value() + 4.0).abs() < 1e-12);
        assert!((a.powi(3).value() + 8.0).abs() < 1e-12);
        assert!((b.sqrt_abs().value() - 8f64.sqrt()).abs() < 1e-12);
        assert!(a < b);
        assert!(LogValue::from_f64(-5.0) < LogValue::from_f64(-1.0));
    }

    #[test]
    fn lse_handles_huge_terms() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let w = log_sum_exp_weighted(&[(0.5, 800.0), (0.5, 800.0), (0.0, 900.0)]);
        assert!((w - 800.0).abs() < 1e-12);
    }

    #[test]
    fn rel_diff_in_log_domain() {
        let a = LogValue::from_ln(5000.0);
        let b = LogValue::from_ln(5000.0 + 1e-10);
        assert!(a.rel_diff(&b) < 1.1e-10);
    }
}
