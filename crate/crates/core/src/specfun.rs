//! Exponentially scaled modified Bessel functions of integer order and the
//! generalized Bessel functions `I^{(1,K)}_ν`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Integer Bessel order; negative orders are allowed.
pub type BesselOrder = i64;

/// Dimensionless couplings `J_1..J_K` (`J_n` multiplies the `n`-th harmonic
/// with weight `1/n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CouplingVector(Vec<f64>);

impl CouplingVector {
    pub fn new(j: Vec<f64>) -> Result<Self> {
        if j.is_empty() {
            return Err(invalid("coupling vector must have K >= 1 entries"));
        }
        if let Some(bad) = j.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!("couplings must be finite and non-negative, got {bad}")));
        }
        Ok(CouplingVector(j))
    }

    pub fn single(j: f64) -> Result<Self> {
        Self::new(vec![j])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Harmonic coefficients `h_n = J_n / n` of the exponent `Σ h_n cos nθ`.
    pub fn harmonics(&self) -> Vec<f64> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, j)| j / (i + 1) as f64)
            .collect()
    }

    /// `Σ_n J_n / n`, the log of the scale factor removed from scaled values.
    pub fn ln_scale(&self) -> f64 {
        self.harmonics().iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for CouplingVector {
    type Error = crate::Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CouplingVector> for Vec<f64> {
    fn from(c: CouplingVector) -> Vec<f64> {
        c.0
    }
}

fn check_argument(x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(invalid(format!("Bessel argument must be finite, got {x}")));
    }
    if x < 0.0 {
        return Err(invalid(format!("Bessel argument must be non-negative, got {x}")));
    }
    if x > 1e6 {
        return Err(invalid(format!("Bessel argument {x} exceeds 1e6")));
    }
    Ok(())
}

/// `e^{-x} I_ν(x)` for integer `ν` and `0 ≤ x ≤ 10^6`.
pub fn bessel_i_scaled(nu: BesselOrder, x: f64) -> Result<f64> {
    check_argument(x)?;
    let n = nu.unsigned_abs() as usize;
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if x <= 2.0 {
        return Ok(series(n, x));
    }
    if x >= 30.0 && x > 2.0 * n as f64 {
        return Ok(upward(n, x)[n]);
    }
    Ok(miller(n, x)[n])
}

/// `e^{-x} I_k(x)` for `k = 0..=kmax`.
pub fn bessel_i_scaled_orders(kmax: usize, x: f64) -> Result<Vec<f64>> {
    check_argument(x)?;
    if x == 0.0 {
        let mut v = vec![0.0; kmax + 1];
        v[0] = 1.0;
        return Ok(v);
    }
    if x <= 2.0 {
        return Ok((0..=kmax).map(|k| series(k, x)).collect());
    }
    if x >= 30.0 && x > 2.0 * kmax as f64 {
        return Ok(upward(kmax, x));
    }
    Ok(miller(kmax, x))
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn series(n: usize, x: f64) -> f64 {
    let ln_lead = n as f64 * (0.5 * x).ln() - ln_factorial(n) - x;
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..500 {
        term *= q / (m as f64 * (m + n) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    (ln_lead + sum.ln()).exp()
}

/// Hankel expansion of `e^{-x} I_ν(x)` for large `x`.
fn asymptotic(nu: usize, x: f64) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

fn upward(kmax: usize, x: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(kmax + 1);
    v.push(asymptotic(0, x));
    if kmax >= 1 {
        v.push(asymptotic(1, x));
    }
    for k in 1..kmax {
        let next = v[k - 1] - (2.0 * k as f64 / x) * v[k];
        v.push(next);
    }
    v
}

fn miller(kmax: usize, x: f64) -> Vec<f64> {
    use crate::mp::{ln_scaled_bessel_estimate, negligible_order};
    let tail = ln_scaled_bessel_estimate(kmax as f64, x).min(0.0);
    let start = negligible_order(x, kmax + 2, 40.0 - tail) + 8;
    let mut ys = vec![0.0; start + 2];
    ys[start] = 1e-280;
    for k in (1..=start).rev() {
        ys[k - 1] = ys[k + 1] + (2.0 * k as f64 / x) * ys[k];
        if ys[k - 1] > 1e250 {
            for y in ys[k - 1..].iter_mut() {
                *y *= 1e-250;
            }
        }
    }
    let norm = ys[0] + 2.0 * ys[1..].iter().rev().sum::<f64>();
    ys.truncate(kmax + 1);
    for y in ys.iter_mut() {
        *y /= norm;
    }
    ys
}

/// Trapezoid node count `max(256, 2^⌈log2(8(|ν| + ⌈Σ⌉))⌉)`.
pub(crate) fn trapezoid_nodes(nu: i64, coupling_sum: f64) -> usize {
    let want = 8 * (nu.unsigned_abs() as usize + coupling_sum.abs().ceil() as usize);
    want.next_power_of_two().max(256)
}

/// Fourier coefficients `d = 0..=dmax` of `exp{Σ_n h_n cos nθ}` divided by
/// `exp{Σ_n |h_n|}`, by the equally spaced rule on `[0, 2π)`.
pub(crate) fn cosine_symbol_coefficients(h: &[f64], dmax: usize) -> Vec<f64> {
    let spread: f64 = h.iter().map(|v| v.abs()).sum();
    let m = trapezoid_nodes(dmax as i64, spread);
    let step = 2.0 * std::f64::consts::PI / m as f64;
    let half = m / 2;
    let cos_table: Vec<f64> = (0..m).map(|j| (step * j as f64).cos()).collect();
    let cos_at = |j: usize| cos_table[j % m];
    let samples: Vec<f64> = (0..=half)
        .map(|j| {
            h.iter()
                .enumerate()
                .map(|(i, hn)| hn * cos_at((i + 1) * j) - hn.abs())
                .sum::<f64>()
                .exp()
        })
        .collect();
    (0..=dmax)
        .map(|d| {
            let s: f64 = (0..m)
                .map(|j| samples[if j <= half { j } else { m - j }] * cos_table[(d * j) % m])
                .sum();
            s / m as f64
        })
        .collect()
}

/// Scaled generalized Bessel function
/// `e^{-Σ J_n/n} (1/2π)∫ e^{iνθ} exp{Σ_n (J_n/n) cos nθ} dθ`.
pub fn generalized_bessel(nu: BesselOrder, j: &CouplingVector) -> Result<f64> {
    let d = nu.unsigned_abs() as usize;
    Ok(generalized_bessel_orders(d, j)?[d])
}

/// Scaled `I^{(1,K)}_ν` for `ν = 0..=numax` from one grid.
pub fn generalized_bessel_orders(numax: usize, j: &CouplingVector) -> Result<Vec<f64>> {
    if j.k() == 1 {
        return bessel_i_scaled_orders(numax, j.as_slice()[0]);
    }
    Ok(cosine_symbol_coefficients(&j.harmonics(), numax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_gauss_kronrod;
    use proptest::prelude::*;

    fn series_oracle(n: usize, x: f64) -> f64 {
        // Σ_m (x/2)^{2m+n} / (m!(m+n)!) e^{-x}, summed term by term
        let mut term = (0.5 * x).powi(n as i32);
        for k in 1..=n {
            term /= k as f64;
        }
        let mut s = 0.0;
        for m in 0..300 {
            s += term;
            term *= 0.25 * x * x / ((m + 1) as f64 * (m + 1 + n) as f64);
        }
        s * (-x).exp()
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_i_scaled(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_i_scaled(3, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_i_scaled(-2, 1.5).unwrap(), bessel_i_scaled(2, 1.5).unwrap());
    }

    #[test]
    fn i0_at_one() {
        let oracle = series_oracle(0, 1.0);
        let v = bessel_i_scaled(0, 1.0).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.465_759_607_593_640_3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(bessel_i_scaled(0, -1.0).is_err());
        assert!(bessel_i_scaled(0, f64::NAN).is_err());
        assert!(bessel_i_scaled(0, f64::INFINITY).is_err());
        assert!(bessel_i_scaled(0, 2e6).is_err());
        assert!(CouplingVector::new(vec![]).is_err());
        assert!(CouplingVector::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn regimes_agree_with_series() {
        for &x in &[0.5, 1.9, 2.1, 7.0, 20.0, 29.0, 31.0, 45.0] {
            for n in [0usize, 1, 2, 5, 10, 14] {
                let want = series_oracle(n, x);
                let got = bessel_i_scaled(n as i64, x).unwrap();
                assert!(((got - want) / want).abs() < 1e-12, "n={n} x={x} {got} {want}");
            }
        }
    }

    #[test]
    fn orders_match_single_calls() {
        for &x in &[0.7, 5.0, 80.0, 400.0] {
            let v = bessel_i_scaled_orders(30, x).unwrap();
            for (k, vk) in v.iter().enumerate() {
                let s = bessel_i_scaled(k as i64, x).unwrap();
                assert!(((vk - s) / s).abs() < 1e-12, "k={k} x={x}");
            }
        }
    }

    #[test]
    fn large_argument_against_miller() {
        for &x in &[50.0, 300.0, 5000.0] {
            let up = upward(20, x);
            let mi = miller(20, x);
            for k in 0..=20 {
                assert!(((up[k] - mi[k]) / mi[k]).abs() < 1e-12, "k={k} x={x}");
            }
        }
        let v = bessel_i_scaled(0, 1e6).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI * 1e6).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn recurrence_in_scaled_form() {
        for &x in &[0.5, 1.0, 5.0, 50.0] {
            for nu in -20i64..=20 {
                let lo = bessel_i_scaled(nu - 1, x).unwrap();
                let hi = bessel_i_scaled(nu + 1, x).unwrap();
                let mid = bessel_i_scaled(nu, x).unwrap();
                let rhs = 2.0 * nu as f64 / x * mid;
                let scale = lo.abs().max(hi.abs());
                assert!(((lo - hi) - rhs).abs() <= 1e-10 * scale, "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn generating_function_normalization() {
        for &x in &[0.1, 1.0, 10.0, 50.0] {
            let v = bessel_i_scaled_orders(200, x).unwrap();
            let s = v[0] + 2.0 * v[1..].iter().sum::<f64>();
            assert!((s - 1.0).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn generalized_reduces_to_bessel() {
        for &j in &[0.0, 0.4, 3.0, 12.0] {
            let c = CouplingVector::single(j).unwrap();
            assert_eq!(generalized_bessel(0, &c).unwrap(), bessel_i_scaled(0, j).unwrap());
            let c2 = CouplingVector::new(vec![j, 0.0]).unwrap();
            let a = generalized_bessel(3, &c2).unwrap();
            let b = bessel_i_scaled(3, j).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn second_harmonic_selection() {
        // With weight 1/n the second harmonic of J_2 has amplitude J_2/2.
        for &j in &[0.5, 1.0, 5.0] {
            let c = CouplingVector::new(vec![0.0, j]).unwrap();
            assert!(generalized_bessel(3, &c).unwrap().abs() < 1e-15);
            let want = bessel_i_scaled(1, j / 2.0).unwrap();
            assert!((generalized_bessel(2, &c).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn kth_harmonic_selection() {
        for k in 2..=5usize {
            for &j in &[0.3, 2.0, 5.0] {
                let mut v = vec![0.0; k];
                v[k - 1] = k as f64 * j;
                let c = CouplingVector::new(v).unwrap();
                let vals = generalized_bessel_orders(24, &c).unwrap();
                for (nu, got) in vals.iter().enumerate() {
                    let want = if nu % k == 0 {
                        bessel_i_scaled((nu / k) as i64, j).unwrap()
                    } else {
                        0.0
                    };
                    assert!((got - want).abs() < 1e-12, "k={k} nu={nu} j={j}");
                }
            }
        }
    }

    #[test]
    fn generalized_against_adaptive_quadrature() {
        let c = CouplingVector::new(vec![1.0, 0.5]).unwrap();
        let got = generalized_bessel(1, &c).unwrap();
        let scale = c.ln_scale();
        let f = |th: f64| (th.cos() + 0.25 * (2.0 * th).cos() - scale).exp() * th.cos();
        let (v, _) = adaptive_gauss_kronrod(&f, 0.0, std::f64::consts::PI, 1e-14, 1e-15).unwrap();
        let want = v / std::f64::consts::PI;
        assert!((got - want).abs() < 1e-12, "{got} {want}");
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(nu in -60i64..60, x in 0.0f64..2000.0) {
            let a = bessel_i_scaled(nu, x).unwrap();
            let b = bessel_i_scaled(-nu, x).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn monotone_in_order(nu in 0i64..40, x in 0.01f64..300.0) {
            let a = bessel_i_scaled(nu, x).unwrap();
            let b = bessel_i_scaled(nu + 1, x).unwrap();
            prop_assert!(b <= a * (1.0 + 1e-12));
        }
    }
}
