//! Single-particle kernels `g(d)` generated by a cosine symbol, and
//! determinants of matrices `[g(x_r − y_s)]` built from them.
//!
//! A symbol `exp{h_0 + Σ_n h_n cos nθ}` covers the spin chain (`h_n = J_n/n`)
//! and any even fermionic dispersion (`h_n = −β c_n`). Kernel tables are
//! stored divided by `exp{h_0 + Σ|h_n|}`; determinants add `n·ln_scale` back.

use astro_float::BigFloat;

use crate::error::{invalid, Result};
use crate::logvalue::LogValue;
use crate::{linalg, mp, specfun};

#[derive(Debug, Clone, PartialEq)]
pub struct CosineSymbol {
    pub offset: f64,
    pub harmonics: Vec<f64>,
}

impl CosineSymbol {
    pub fn new(offset: f64, harmonics: Vec<f64>) -> Result<Self> {
        if !offset.is_finite() || harmonics.iter().any(|h| !h.is_finite()) {
            return Err(invalid("symbol coefficients must be finite"));
        }
        Ok(CosineSymbol { offset, harmonics })
    }

    /// `Σ|h_n|`: half the log-range of the symbol.
    pub fn spread(&self) -> f64 {
        self.harmonics.iter().map(|h| h.abs()).sum()
    }

    pub fn ln_scale(&self) -> f64 {
        self.offset + self.spread()
    }

    pub fn is_trivial(&self) -> bool {
        self.harmonics.iter().all(|h| *h == 0.0)
    }
}

/// Momentum grid: the continuum, or `k_q = 2π(q + τ)/L` with `τ ∈ {0, 1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    Continuum,
    Periodic { l: usize, half_shift: bool },
}

#[derive(Debug, Clone)]
enum Values {
    Double(Vec<f64>),
    Multi { values: Vec<BigFloat>, bits: usize },
}

/// Scaled kernel `g(d)/exp{ln_scale}` for `0 ≤ d ≤ dmax` (`g` is even in `d`).
#[derive(Debug, Clone)]
pub struct KernelTable {
    values: Values,
    ln_scale: f64,
}

impl KernelTable {
    /// Builds the table with enough precision for determinants up to `n × n`.
    pub fn build(symbol: &CosineSymbol, grid: Grid, dmax: usize, n: usize) -> Self {
        let spread = symbol.spread();
        let values = if mp::f64_suffices(spread, n) {
            Values::Double(double_table(symbol, grid, dmax))
        } else {
            let bits = mp::precision_bits(spread, n);
            Values::Multi {
                values: multi_table(symbol, grid, dmax, bits),
                bits,
            }
        };
        KernelTable {
            values,
            ln_scale: symbol.ln_scale(),
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            Values::Double(v) => v.len(),
            Values::Multi { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ln_scale(&self) -> f64 {
        self.ln_scale
    }

    pub fn is_multiprecision(&self) -> bool {
        matches!(self.values, Values::Multi { .. })
    }

    /// Scaled `g(d)` as `f64`.
    pub fn scaled(&self, d: i64) -> f64 {
        let i = d.unsigned_abs() as usize;
        match &self.values {
            Values::Double(v) => v[i],
            Values::Multi { values, .. } => mp::to_f64(&values[i]),
        }
    }

    /// Unscaled `g(d)` in log form.
    pub fn value(&self, d: i64) -> LogValue {
        let i = d.unsigned_abs() as usize;
        let v = match &self.values {
            Values::Double(v) => LogValue::from_f64(v[i]),
            Values::Multi { values, .. } => mp::to_log_value(&values[i]),
        };
        v * LogValue::from_ln(self.ln_scale)
    }

    /// Multiplies `g(±d)` by `1 + delta`. Used to test failure detection.
    pub fn perturb(&mut self, d: usize, delta: f64) {
        match &mut self.values {
            Values::Double(v) => v[d] *= 1.0 + delta,
            Values::Multi { values, bits } => {
                let f = mp::big(1.0 + delta, *bits);
                values[d] = values[d].mul(&f, *bits, astro_float::RoundingMode::ToEven);
            }
        }
    }

    /// `det[g(x_r − y_s)]` including the scale factor.
    pub fn det(&self, rows: &[i64], cols: &[i64]) -> LogValue {
        let n = rows.len();
        assert_eq!(n, cols.len());
        let scaled = match &self.values {
            Values::Double(v) => {
                let m: Vec<f64> = rows
                    .iter()
                    .flat_map(|r| cols.iter().map(move |c| v[(r - c).unsigned_abs() as usize]))
                    .collect();
                linalg::log_det(m, n)
            }
            Values::Multi { values, bits } => {
                let m: Vec<Vec<BigFloat>> = rows
                    .iter()
                    .map(|r| {
                        cols.iter()
                            .map(|c| values[(r - c).unsigned_abs() as usize].clone())
                            .collect()
                    })
                    .collect();
                mp::log_det(m, *bits)
            }
        };
        scaled * LogValue::from_ln(n as f64 * self.ln_scale)
    }

    /// Toeplitz determinant `det_{0≤j,k<n}[g(j − k)]`.
    pub fn toeplitz_det(&self, n: usize) -> LogValue {
        let idx: Vec<i64> = (0..n as i64).collect();
        self.det(&idx, &idx)
    }
}

fn table_len(grid: Grid, dmax: usize) -> usize {
    match grid {
        Grid::Continuum => dmax + 1,
        Grid::Periodic { l, .. } => (dmax + 1).min(l),
    }
}

fn double_table(symbol: &CosineSymbol, grid: Grid, dmax: usize) -> Vec<f64> {
    let h = &symbol.harmonics;
    if symbol.is_trivial() {
        let mut v = vec![0.0; table_len(grid, dmax)];
        v[0] = 1.0;
        return v;
    }
    match grid {
        Grid::Continuum => {
            let active = h.iter().rposition(|x| *x != 0.0).map_or(0, |i| i + 1);
            if active == 1 {
                let x = h[0].abs();
                let mut v = specfun::bessel_i_scaled_orders(dmax, x).expect("finite coupling");
                if h[0] < 0.0 {
                    for (k, vk) in v.iter_mut().enumerate() {
                        if k % 2 == 1 {
                            *vk = -*vk;
                        }
                    }
                }
                v
            } else {
                specfun::cosine_symbol_coefficients(h, dmax)
            }
        }
        Grid::Periodic { l, half_shift } => {
            let spread = symbol.spread();
            let tau = if half_shift { 0.5 } else { 0.0 };
            let ks: Vec<f64> = (0..l)
                .map(|q| 2.0 * std::f64::consts::PI * (q as f64 + tau) / l as f64)
                .collect();
            let weights: Vec<f64> = ks
                .iter()
                .map(|k| {
                    let e: f64 = h
                        .iter()
                        .enumerate()
                        .map(|(i, hn)| hn * ((i + 1) as f64 * k).cos())
                        .sum();
                    (e - spread).exp()
                })
                .collect();
            (0..=dmax.min(l - 1))
                .map(|d| {
                    ks.iter()
                        .zip(&weights)
                        .map(|(k, w)| w * (d as f64 * k).cos())
                        .sum::<f64>()
                        / l as f64
                })
                .collect()
        }
    }
}

fn multi_table(symbol: &CosineSymbol, grid: Grid, dmax: usize, bits: usize) -> Vec<BigFloat> {
    if symbol.is_trivial() {
        let mut v = vec![mp::big(0.0, bits); table_len(grid, dmax)];
        v[0] = mp::big(1.0, bits);
        return v;
    }
    match grid {
        Grid::Continuum => mp::symbol_coefficients(&symbol.harmonics, dmax, bits),
        Grid::Periodic { l, half_shift } => {
            let mut v = mp::periodic_kernel(&symbol.harmonics, l, half_shift, bits);
            v.truncate(dmax + 1);
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_and_multi_tables_agree() {
        let sym = CosineSymbol::new(0.0, vec![1.3, -0.7, 0.2]).unwrap();
        for grid in [
            Grid::Continuum,
            Grid::Periodic { l: 11, half_shift: false },
            Grid::Periodic { l: 12, half_shift: true },
        ] {
            let d = double_table(&sym, grid, 10);
            let m = multi_table(&sym, grid, 10, 192);
            for (a, b) in d.iter().zip(&m) {
                assert!((a - mp::to_f64(b)).abs() < 1e-15, "{grid:?}");
            }
        }
    }

    #[test]
    fn precision_switch_preserves_determinants() {
        // Spread 4.5 sits just under the f64 threshold for n = 4.
        let sym = CosineSymbol::new(0.0, vec![4.5]).unwrap();
        let fast = KernelTable::build(&sym, Grid::Continuum, 4, 4);
        assert!(!fast.is_multiprecision());
        let slow = KernelTable {
            values: Values::Multi {
                values: multi_table(&sym, Grid::Continuum, 4, 256),
                bits: 256,
            },
            ln_scale: sym.ln_scale(),
        };
        let a = fast.toeplitz_det(4);
        let b = slow.toeplitz_det(4);
        assert!(a.rel_diff(&b) < 1e-11, "{a} {b}");
    }

    #[test]
    fn offset_enters_scale() {
        let sym = CosineSymbol::new(-2.0, vec![0.0]).unwrap();
        let t = KernelTable::build(&sym, Grid::Continuum, 3, 3);
        assert!((t.value(0).ln_magnitude() + 2.0).abs() < 1e-15);
        assert!((t.toeplitz_det(3).ln_magnitude() + 6.0).abs() < 1e-14);
    }
}
