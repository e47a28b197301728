//! Multiprecision kernels and determinants.
//!
//! A Toeplitz matrix built from the Fourier coefficients of a positive symbol
//! whose logarithm spans `2s` has condition number up to `e^{2s}`. Once that
//! exceeds what `f64` can absorb, every kernel entry and the LU factorization
//! are carried at `precision_bits(s, n)` bits instead.

use std::cell::RefCell;
use std::f64::consts::LN_2;

use astro_float::{BigFloat, Consts, RoundingMode};

use crate::logvalue::LogValue;

const RM: RoundingMode = RoundingMode::ToEven;
const GUARD_BITS: usize = 64;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constant cache"));
}

fn with_consts<R>(f: impl FnOnce(&mut Consts) -> R) -> R {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

/// Working precision for an `n × n` determinant whose symbol has log-spread
/// `2·spread`: enough for the condition number plus ~40 nats of margin.
pub fn precision_bits(spread: f64, n: usize) -> usize {
    let nats = 2.0 * spread.max(0.0) + (n.max(1) as f64).ln() + 40.0;
    let bits = (nats / LN_2).ceil() as usize;
    bits.div_ceil(64).max(2) * 64
}

/// Whether an `f64` factorization of such a matrix keeps ~1e-11 relative accuracy.
pub fn f64_suffices(spread: f64, n: usize) -> bool {
    2.0 * spread + (n.max(1) as f64).ln() <= 10.7
}

/// `ln(e^{-x} I_k(x))` from the uniform (Debye) asymptotic form, used only to
/// decide where coefficients become negligible.
pub(crate) fn ln_scaled_bessel_estimate(k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let r = (k * k + x * x).sqrt();
    r - k * (k / x).asinh() - x - 0.5 * (2.0 * std::f64::consts::PI * r).ln()
}

/// Smallest order `m ≥ from` at which `e^{-x} I_m(x) < e^{-nats}`.
pub(crate) fn negligible_order(x: f64, from: usize, nats: f64) -> usize {
    let mut m = from.max(1);
    while ln_scaled_bessel_estimate(m as f64, x) > -nats {
        m += (m / 8).max(4);
    }
    m
}

pub(crate) fn big(x: f64, p: usize) -> BigFloat {
    BigFloat::from_f64(x, p)
}

fn big_u(k: usize, p: usize) -> BigFloat {
    BigFloat::from_u64(k as u64, p)
}

/// Sign, binary exponent and leading 64 mantissa bits as `f64` in `[0.5, 1)`.
fn decompose(x: &BigFloat) -> Option<(i8, i64, f64)> {
    if x.is_zero() {
        return None;
    }
    let digits = x.mantissa_digits()?;
    let top = *digits.last()?;
    let e = i64::from(x.exponent()?);
    let frac = top as f64 / 2f64.powi(64);
    let sign = if x.is_negative() { -1 } else { 1 };
    Some((sign, e, frac))
}

pub(crate) fn to_log_value(x: &BigFloat) -> LogValue {
    match decompose(x) {
        None => LogValue::ZERO,
        Some((sign, e, frac)) => LogValue::new(sign, e as f64 * LN_2 + frac.ln()),
    }
}

pub(crate) fn to_f64(x: &BigFloat) -> f64 {
    match decompose(x) {
        None => 0.0,
        Some((sign, e, frac)) => {
            f64::from(sign) * frac * 2f64.powi(e.clamp(-1100, 1100) as i32)
        }
    }
}

fn sum_all(terms: impl Iterator<Item = BigFloat>, p: usize) -> BigFloat {
    terms.fold(BigFloat::from_u64(0, p), |acc, t| acc.add(&t, p, RM))
}

/// `e^{-x} I_k(x)` for `k = 0..=kmax` by Miller's backward recurrence,
/// normalized with `I_0 + 2 Σ I_k = e^x`.
pub fn bessel_scaled_orders(kmax: usize, x: f64, p: usize) -> Vec<BigFloat> {
    let w = p + GUARD_BITS;
    let mut out: Vec<BigFloat> = (0..=kmax).map(|_| big(0.0, p)).collect();
    if x == 0.0 {
        out[0] = big(1.0, p);
        return out;
    }
    let start = negligible_order(x, kmax + 2, p as f64 * LN_2 + 30.0) + 8;
    let two_over_x = big(2.0, w).div(&big(x, w), w, RM);
    let mut ys: Vec<BigFloat> = vec![big(0.0, w); start + 2];
    ys[start] = big(1.0, w);
    for k in (1..=start).rev() {
        let t = two_over_x.mul(&big_u(k, w), w, RM).mul(&ys[k], w, RM);
        ys[k - 1] = ys[k + 1].add(&t, w, RM);
    }
    let tail = sum_all(ys[1..=start].iter().cloned(), w);
    let norm = ys[0].add(&tail.mul(&big(2.0, w), w, RM), w, RM);
    let inv = big(1.0, w).div(&norm, w, RM);
    for (k, o) in out.iter_mut().enumerate() {
        *o = ys[k].mul(&inv, p, RM);
    }
    out
}

/// Coefficients `c_d`, `d = 0..=dmax`, of `exp{Σ_n h_n cos nθ}` divided by
/// `exp{Σ_n |h_n|}`, by convolving the Bessel expansions of each factor.
pub fn symbol_coefficients(h: &[f64], dmax: usize, p: usize) -> Vec<BigFloat> {
    let w = p + GUARD_BITS;
    let nats = w as f64 * LN_2 + 30.0;
    // (step n, one-sided factor coefficients) for every active harmonic.
    let factors: Vec<(usize, Vec<BigFloat>)> = h
        .iter()
        .enumerate()
        .filter(|(_, hn)| **hn != 0.0)
        .map(|(i, hn)| {
            let x = hn.abs();
            let m = negligible_order(x, 1, nats);
            let mut c = bessel_scaled_orders(m, x, w);
            if *hn < 0.0 {
                for (k, ck) in c.iter_mut().enumerate() {
                    if k % 2 == 1 {
                        *ck = ck.neg();
                    }
                }
            }
            (i + 1, c)
        })
        .collect();

    let mut remaining: usize = factors.iter().map(|(n, c)| n * (c.len() - 1)).sum();
    let mut acc: Vec<BigFloat> = vec![big(0.0, w); dmax + remaining + 1];
    acc[0] = big(1.0, w);
    let at = |v: &[BigFloat], d: i64| -> Option<BigFloat> { v.get(d.unsigned_abs() as usize).cloned() };

    for (n, c) in &factors {
        remaining -= n * (c.len() - 1);
        let range = dmax + remaining;
        let mut next = Vec::with_capacity(range + 1);
        for d in 0..=range as i64 {
            let mut s = big(0.0, w);
            for (m, cm) in c.iter().enumerate() {
                let shift = (*n * m) as i64;
                if let Some(a) = at(&acc, d - shift) {
                    s = s.add(&cm.mul(&a, w, RM), w, RM);
                }
                if m > 0 {
                    if let Some(a) = at(&acc, d + shift) {
                        s = s.add(&cm.mul(&a, w, RM), w, RM);
                    }
                }
            }
            next.push(s);
        }
        acc = next;
    }
    acc.truncate(dmax + 1);
    acc.resize(dmax + 1, big(0.0, w));
    acc.into_iter().map(|mut v| {
        v.set_precision(p, RM).expect("precision");
        v
    }).collect()
}

/// `cos(π j / l)` for `j = 0..2l`.
fn cos_table(l: usize, p: usize) -> Vec<BigFloat> {
    with_consts(|cc| {
        let pi = cc.pi(p, RM);
        (0..2 * l)
            .map(|j| {
                let arg = pi.mul(&big_u(j, p), p, RM).div(&big_u(l, p), p, RM);
                arg.cos(p, RM, cc)
            })
            .collect()
    })
}

/// Periodic kernel `g(d) = (1/L) Σ_q cos(k_q d) exp{Σ_n h_n (cos n k_q − 1)}`
/// for `d = 0..L`, with `k_q = 2π(q + τ)/L`, `τ = 1/2` when `half_shift`.
/// The result carries the scale `exp{−Σ|h_n|}` like the infinite-lattice one.
pub fn periodic_kernel(h: &[f64], l: usize, half_shift: bool, p: usize) -> Vec<BigFloat> {
    let w = p + GUARD_BITS;
    let table = cos_table(l, w);
    let shift = usize::from(half_shift);
    let spread: f64 = h.iter().map(|x| x.abs()).sum();
    let hs: Vec<BigFloat> = h.iter().map(|x| big(*x, w)).collect();
    let minus_spread = big(-spread, w);
    let weights: Vec<BigFloat> = with_consts(|cc| {
        (0..l)
            .map(|q| {
                let j = 2 * q + shift;
                let mut e = minus_spread.clone();
                for (i, hn) in hs.iter().enumerate() {
                    if hn.is_zero() {
                        continue;
                    }
                    let idx = ((i + 1) * j) % (2 * l);
                    e = e.add(&hn.mul(&table[idx], w, RM), w, RM);
                }
                e.exp(w, RM, cc)
            })
            .collect()
    });
    let inv_l = big(1.0, w).div(&big_u(l, w), w, RM);
    (0..l)
        .map(|d| {
            let s = sum_all(
                weights.iter().enumerate().map(|(q, wq)| {
                    let idx = (d * (2 * q + shift)) % (2 * l);
                    wq.mul(&table[idx], w, RM)
                }),
                w,
            );
            s.mul(&inv_l, p, RM)
        })
        .collect()
}

/// `|x| > |y|`. `abs_cmp` alone can rank an exact zero above small values.
fn abs_greater(x: &BigFloat, y: &BigFloat) -> bool {
    match (x.is_zero(), y.is_zero()) {
        (true, _) => false,
        (false, true) => true,
        _ => x.abs_cmp(y).unwrap_or(0) > 0,
    }
}

/// `ln|det|` and sign of a square matrix by LU with partial pivoting.
pub fn log_det(mut a: Vec<Vec<BigFloat>>, p: usize) -> LogValue {
    let n = a.len();
    let mut sign: i8 = 1;
    let mut ln = 0.0;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if abs_greater(&a[r][col], &a[piv][col]) {
                piv = r;
            }
        }
        if a[piv][col].is_zero() {
            return LogValue::ZERO;
        }
        if piv != col {
            a.swap(piv, col);
            sign = -sign;
        }
        let pv = to_log_value(&a[col][col]);
        sign *= pv.sign();
        ln += pv.ln_magnitude();
        let inv = big(1.0, p).div(&a[col][col], p, RM);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest.iter_mut() {
            if row[col].is_zero() {
                continue;
            }
            let f = row[col].mul(&inv, p, RM);
            for c in col + 1..n {
                let t = f.mul(&pivot_row[c], p, RM);
                row[c] = row[c].sub(&t, p, RM);
            }
        }
    }
    LogValue::new(sign, ln)
}

/// Complex number as a pair of multiprecision reals.
#[derive(Debug, Clone)]
pub struct BigComplex {
    pub re: BigFloat,
    pub im: BigFloat,
}

impl BigComplex {
    fn zero(p: usize) -> Self {
        BigComplex {
            re: big(0.0, p),
            im: big(0.0, p),
        }
    }

    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    fn norm_sqr(&self, p: usize) -> BigFloat {
        self.re
            .mul(&self.re, p, RM)
            .add(&self.im.mul(&self.im, p, RM), p, RM)
    }

    fn mul(&self, o: &Self, p: usize) -> Self {
        BigComplex {
            re: self
                .re
                .mul(&o.re, p, RM)
                .sub(&self.im.mul(&o.im, p, RM), p, RM),
            im: self
                .re
                .mul(&o.im, p, RM)
                .add(&self.im.mul(&o.re, p, RM), p, RM),
        }
    }

    fn sub(&self, o: &Self, p: usize) -> Self {
        BigComplex {
            re: self.re.sub(&o.re, p, RM),
            im: self.im.sub(&o.im, p, RM),
        }
    }

    fn inv(&self, p: usize) -> Self {
        let d = self.norm_sqr(p);
        BigComplex {
            re: self.re.div(&d, p, RM),
            im: self.im.neg().div(&d, p, RM),
        }
    }

    /// Natural log of the modulus and the argument, in `f64`.
    pub fn ln_abs_arg(&self) -> (f64, f64) {
        let er = decompose(&self.re).map(|(_, e, _)| e);
        let ei = decompose(&self.im).map(|(_, e, _)| e);
        let shift = match (er, ei) {
            (None, None) => return (f64::NEG_INFINITY, 0.0),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (Some(a), Some(b)) => a.max(b),
        };
        let scaled = |x: &BigFloat| match decompose(x) {
            None => 0.0,
            Some((s, e, f)) => f64::from(s) * f * 2f64.powi((e - shift).max(-1100) as i32),
        };
        let (re, im) = (scaled(&self.re), scaled(&self.im));
        (shift as f64 * LN_2 + re.hypot(im).ln(), im.atan2(re))
    }

    pub fn to_f64(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(to_f64(&self.re), to_f64(&self.im))
    }
}

/// Log-modulus and phase of a complex determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexLog {
    pub ln_abs: f64,
    pub arg: f64,
}

pub fn complex_log_det(mut a: Vec<Vec<BigComplex>>, p: usize) -> ComplexLog {
    let n = a.len();
    let mut ln_abs = 0.0;
    let mut arg = 0.0;
    for col in 0..n {
        let norms: Vec<BigFloat> = (col..n).map(|r| a[r][col].norm_sqr(p)).collect();
        let mut best = 0;
        for (i, v) in norms.iter().enumerate().skip(1) {
            if abs_greater(v, &norms[best]) {
                best = i;
            }
        }
        let piv = col + best;
        if a[piv][col].is_zero() {
            return ComplexLog {
                ln_abs: f64::NEG_INFINITY,
                arg: 0.0,
            };
        }
        if piv != col {
            a.swap(piv, col);
            arg += std::f64::consts::PI;
        }
        let (l, t) = a[col][col].ln_abs_arg();
        ln_abs += l;
        arg += t;
        let inv = a[col][col].inv(p);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest.iter_mut() {
            if row[col].is_zero() {
                continue;
            }
            let f = row[col].mul(&inv, p);
            for c in col + 1..n {
                let t = f.mul(&pivot_row[c], p);
                row[c] = row[c].sub(&t, p);
            }
        }
    }
    ComplexLog {
        ln_abs,
        arg: arg.rem_euclid(2.0 * std::f64::consts::PI),
    }
}

/// `e^{-Re z} I_k(z)` for `k = 0..=kmax` by the equally spaced θ-rule on
/// `(1/2π)∫ cos(kθ) e^{z cos θ} dθ`, `Re z ≥ 0`.
pub fn complex_bessel_scaled_orders(kmax: usize, zr: f64, zi: f64, p: usize) -> Vec<BigComplex> {
    let w = p + GUARD_BITS;
    let modulus = zr.hypot(zi);
    let m = complex_rule_nodes(kmax, modulus, zr, p);
    let half = m / 2;
    let (cos_th, samples) = with_consts(|cc| {
        let pi = cc.pi(w, RM);
        let cos_th: Vec<BigFloat> = (0..m)
            .map(|j| {
                let arg = pi.mul(&big_u(2 * j, w), w, RM).div(&big_u(m, w), w, RM);
                arg.cos(w, RM, cc)
            })
            .collect();
        let bzr = big(zr, w);
        let bzi = big(zi, w);
        let samples: Vec<BigComplex> = (0..=half)
            .map(|j| {
                let c = &cos_th[j];
                let modulus = bzr.mul(&c.sub(&big(1.0, w), w, RM), w, RM).exp(w, RM, cc);
                let phase = bzi.mul(c, w, RM);
                BigComplex {
                    re: modulus.mul(&phase.cos(w, RM, cc), w, RM),
                    im: modulus.mul(&phase.sin(w, RM, cc), w, RM),
                }
            })
            .collect();
        (cos_th, samples)
    });
    let inv_m = big(1.0, w).div(&big_u(m, w), w, RM);
    (0..=kmax)
        .map(|k| {
            let mut acc = BigComplex::zero(w);
            for j in 0..m {
                let s = &samples[if j <= half { j } else { m - j }];
                let c = &cos_th[(k * j) % m];
                acc.re = acc.re.add(&s.re.mul(c, w, RM), w, RM);
                acc.im = acc.im.add(&s.im.mul(c, w, RM), w, RM);
            }
            BigComplex {
                re: acc.re.mul(&inv_m, p, RM),
                im: acc.im.mul(&inv_m, p, RM),
            }
        })
        .collect()
}

/// Node count for the complex θ-rule: the default grid size, enlarged until
/// aliasing from order `m − kmax` is below the working precision.
pub(crate) fn complex_rule_nodes(kmax: usize, modulus: f64, re: f64, p: usize) -> usize {
    let base = crate::specfun::trapezoid_nodes(kmax as i64, modulus);
    let nats = p as f64 * LN_2 + (modulus - re) + 30.0;
    let need = kmax + negligible_order(modulus, 1, nats);
    base.max(need.next_power_of_two())
}
