//! Gross–Witten–Wadia and multi-coupling unitary matrix models: finite-N
//! partition functions as Toeplitz determinants, the planar solution, the
//! saddle-point entropy `s(a)`, and the temperature map `a(T)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{CosineSymbol, Grid, KernelTable};
use crate::logvalue::LogValue;
use crate::specfun::CouplingVector;

/// Couplings closer than this to `a = 1` are treated as critical.
pub const CRITICAL_WINDOW: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwwParams {
    pub n: usize,
    pub sigma: f64,
}

impl GwwParams {
    pub fn new(n: usize, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("matrix rank N must be >= 1"));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(invalid(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(GwwParams { n, sigma })
    }

    /// `J = N σ`.
    pub fn coupling(&self) -> f64 {
        self.n as f64 * self.sigma
    }
}

/// `ln Z_N(Nσ) = ln det[I_{j−k}(Nσ)]`.
pub fn gww_log_partition(p: GwwParams) -> Result<LogValue> {
    multi_coupling_log_partition(p.n, &CouplingVector::single(p.coupling())?)
}

/// `ln ∮dU exp{Σ_n (J_n/2n) Tr(Uⁿ + U⁻ⁿ)} = ln det[I^{(1,K)}_{j−k}(J)]`.
pub fn multi_coupling_log_partition(n: usize, j: &CouplingVector) -> Result<LogValue> {
    if n == 0 {
        return Err(invalid("matrix rank N must be >= 1"));
    }
    let sym = CosineSymbol::new(0.0, j.harmonics())?;
    Ok(KernelTable::build(&sym, Grid::Continuum, n - 1, n).toeplitz_det(n))
}

/// Planar GWW free energy `F(σ) = lim (1/N²) ln Z_N(Nσ)`.
pub fn planar_free_energy(sigma: f64) -> Result<f64> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(free_energy(sigma))
}

fn free_energy(sigma: f64) -> f64 {
    let s = sigma.abs();
    if s <= 1.0 {
        0.25 * s * s
    } else {
        s - 0.5 * s.ln() - 0.75
    }
}

/// `F′(σ)`.
pub fn planar_free_energy_derivative(sigma: f64) -> f64 {
    let s = sigma.abs();
    let d = if s <= 1.0 { 0.5 * s } else { 1.0 - 0.5 / s };
    d.copysign(sigma)
}

/// `σ²/(4a) − F(σ)`, minimized by the saddle.
pub fn effective_action(sigma: f64, a: f64) -> f64 {
    sigma * sigma / (4.0 * a) - free_energy(sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Ungapped,
    Gapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarResult {
    pub sigma_star: f64,
    pub free_energy: f64,
    pub entropy_density: f64,
    pub phase: Phase,
}

fn check_a(a: f64) -> Result<()> {
    if !a.is_finite() || a <= 0.0 {
        return Err(invalid(format!("coupling a must be finite and > 0, got {a}")));
    }
    Ok(())
}

/// Gapped root of `σ² − 2aσ + a = 0`.
fn gapped_root(a: f64) -> f64 {
    a + (a * a - a).max(0.0).sqrt()
}

/// Saddle of `σ²/(4a) − F(σ)` and the entropy density `s = F(σ*) − σ*²/(4a)`.
pub fn saddle_entropy(a: f64) -> Result<PlanarResult> {
    check_a(a)?;
    if (a - 1.0).abs() <= CRITICAL_WINDOW {
        return Ok(PlanarResult {
            sigma_star: 1.0,
            free_energy: 0.25,
            entropy_density: 0.0,
            phase: Phase::Gapped,
        });
    }
    if a < 1.0 {
        return Ok(PlanarResult {
            sigma_star: 0.0,
            free_energy: 0.0,
            entropy_density: 0.0,
            phase: Phase::Ungapped,
        });
    }
    let s = gapped_root(a);
    Ok(PlanarResult {
        sigma_star: s,
        free_energy: free_energy(s),
        entropy_density: -effective_action(s, a),
        phase: Phase::Gapped,
    })
}

/// Entropy density with a source `ε` shifting the argument of `F`:
/// `max_σ [F(σ + ε) − σ²/(4a)]`.
pub fn sourced_entropy(a: f64, eps: f64) -> Result<f64> {
    check_a(a)?;
    // Stationary points in τ = σ + ε on each branch of F′.
    let mut candidates = vec![free_energy(eps)];
    let disc = (2.0 * a + eps).powi(2) - 4.0 * a;
    if disc >= 0.0 {
        for tau in [0.5 * (2.0 * a + eps + disc.sqrt()), 0.5 * (2.0 * a + eps - disc.sqrt())] {
            if tau >= 1.0 {
                candidates.push(free_energy(tau) - (tau - eps).powi(2) / (4.0 * a));
            }
        }
    }
    if (a - 1.0).abs() > CRITICAL_WINDOW {
        let tau = eps / (1.0 - a);
        if tau.abs() <= 1.0 {
            candidates.push(free_energy(tau) - (tau - eps).powi(2) / (4.0 * a));
        }
    }
    Ok(candidates.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Normalized Polyakov loop `F′(σ*)`: zero below the transition.
pub fn planar_polyakov(a: f64) -> Result<f64> {
    let r = saddle_entropy(a)?;
    Ok(match r.phase {
        Phase::Ungapped => 0.0,
        Phase::Gapped => planar_free_energy_derivative(r.sigma_star),
    })
}

/// `a(T) = 2(3e^{1/2T} − 1)/(e^{1/2T} − 1)³`.
pub fn a_of_t(t: f64) -> Result<f64> {
    if !t.is_finite() || t <= 0.0 {
        return Err(invalid(format!("temperature must be finite and > 0, got {t}")));
    }
    let x = 0.5 / t;
    let y = (-x).exp();
    let one_minus_y = -(-x).exp_m1();
    Ok(2.0 * y * y * (3.0 - y) / one_minus_y.powi(3))
}

/// Inverse of [`a_of_t`] by bracketed bisection.
pub fn t_of_a(a: f64) -> Result<f64> {
    check_a(a)?;
    let f = |t: f64| a_of_t(t).expect("positive temperature") - a;
    let (mut lo, mut hi) = (0.1, 1.0);
    while f(lo) > 0.0 {
        lo *= 0.5;
        if lo < 1e-4 {
            return Err(invalid(format!("a = {a} is below the representable range of a(T)")));
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(invalid(format!("a = {a} is above the representable range of a(T)")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() < f(hi).abs() { lo } else { hi })
}

/// Hawking–Page temperature, the root of `a(T) = 1`.
pub fn hawking_page_temperature() -> f64 {
    t_of_a(1.0).expect("a = 1 is in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperaturePoint {
    pub t: f64,
    pub a: f64,
}

impl TemperaturePoint {
    pub fn from_t(t: f64) -> Result<Self> {
        Ok(TemperaturePoint { t, a: a_of_t(t)? })
    }

    pub fn from_a(a: f64) -> Result<Self> {
        Ok(TemperaturePoint { t: t_of_a(a)?, a })
    }
}

/// `(1/N²) ln Z_N(Nσ)` extrapolated to `N → ∞` by a polynomial in `1/N²`
/// through all the given ranks (Neville at zero).
pub fn planar_extrapolation(sigma: f64, ranks: &[usize]) -> Result<f64> {
    if ranks.len() < 2 {
        return Err(invalid("extrapolation needs at least two ranks"));
    }
    let xs: Vec<f64> = ranks.iter().map(|n| 1.0 / (*n as f64).powi(2)).collect();
    let mut ys = ranks
        .iter()
        .map(|n| Ok(gww_log_partition(GwwParams::new(*n, sigma)?)?.ln_magnitude() / (*n as f64).powi(2)))
        .collect::<Result<Vec<f64>>>()?;
    let m = ys.len();
    for level in 1..m {
        for i in 0..m - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            ys[i] = (xj * ys[i] - xi * ys[i + 1]) / (xj - xi);
        }
    }
    Ok(ys[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::bessel_i_scaled;
    use proptest::prelude::*;

    fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = hi - g * (hi - lo);
            let d = lo + g * (hi - lo);
            if f(c) < f(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn small_rank_partitions() {
        for &j in &[0.3, 1.0, 4.0] {
            let i0 = bessel_i_scaled(0, j).unwrap();
            let i1 = bessel_i_scaled(1, j).unwrap();
            let z1 = gww_log_partition(GwwParams { n: 1, sigma: j }).unwrap();
            assert!((z1.ln_magnitude() - (i0.ln() + j)).abs() < 1e-14);
            let z2 = gww_log_partition(GwwParams { n: 2, sigma: j / 2.0 }).unwrap();
            assert!((z2.ln_magnitude() - ((i0 * i0 - i1 * i1).ln() + 2.0 * j)).abs() < 1e-13);
        }
    }

    #[test]
    fn multi_coupling_reductions() {
        let z = multi_coupling_log_partition(5, &CouplingVector::new(vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(z, LogValue::ONE);
        let a = multi_coupling_log_partition(6, &CouplingVector::single(3.0).unwrap()).unwrap();
        let b = gww_log_partition(GwwParams { n: 6, sigma: 0.5 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn free_energy_branches() {
        assert_eq!(planar_free_energy(0.0).unwrap(), 0.0);
        let lo = 0.25;
        let hi = 1.0 - 0.5 * 1f64.ln() - 0.75;
        assert_eq!(planar_free_energy(1.0).unwrap(), lo);
        assert!((lo - hi).abs() < 1e-15);
        let h = 1e-6;
        let d1 = |s: f64| planar_free_energy_derivative(s);
        assert!((d1(1.0 - h) - d1(1.0 + h)).abs() < 1e-5);
        let d2 = |s: f64| (d1(s + h) - d1(s - h)) / (2.0 * h);
        assert!((d2(1.0 - 2.0 * h) - d2(1.0 + 2.0 * h)).abs() < 1e-4);
        assert!(planar_free_energy(-1.0).is_err());
    }

    #[test]
    fn saddle_values() {
        let r = saddle_entropy(0.5).unwrap();
        assert_eq!((r.phase, r.sigma_star, r.entropy_density), (Phase::Ungapped, 0.0, 0.0));
        let r = saddle_entropy(1.0).unwrap();
        assert_eq!((r.phase, r.sigma_star, r.entropy_density), (Phase::Gapped, 1.0, 0.0));
        let r = saddle_entropy(2.0).unwrap();
        assert!((r.sigma_star - (2.0 + 2f64.sqrt())).abs() < 1e-14);
        assert!((r.sigma_star - 3.414214).abs() < 1e-6);
        assert!((r.entropy_density - 0.593131).abs() < 5e-6);
        assert!((r.entropy_density - 0.593_133_192_536_79).abs() < 1e-13);
        let gs = golden_section_min(|s| effective_action(s, 2.0), 1.0, 10.0);
        assert!((gs - r.sigma_star).abs() < 1e-6);
        assert!(saddle_entropy(0.0).is_err());
        assert!(saddle_entropy(-1.0).is_err());
    }

    #[test]
    fn saddle_optimality_and_monotonicity() {
        let mut last = 0.0;
        let mut a = 1.01;
        while a <= 5.0 + 1e-9 {
            let r = saddle_entropy(a).unwrap();
            let s0 = effective_action(r.sigma_star, a);
            assert!(effective_action(r.sigma_star + 1e-4, a) > s0);
            assert!(effective_action(r.sigma_star - 1e-4, a) > s0);
            assert!(r.entropy_density > 0.0 && r.entropy_density > last, "a={a}");
            assert!(r.sigma_star > 1.0);
            last = r.entropy_density;
            a += 0.01;
        }
    }

    #[test]
    fn first_order_signature() {
        let s = |a: f64| saddle_entropy(a).unwrap().entropy_density;
        let h = 1e-3;
        assert!(s(1.0 + h) > 0.0 && s(1.0 + h) < 1e-2);
        let left = (s(1.0) - s(1.0 - h)) / h;
        let right = (s(1.0 + 2.0 * h) - s(1.0 + h)) / h;
        assert_eq!(left, 0.0);
        assert!(right > 0.05, "right slope {right}");
    }

    #[test]
    fn polyakov_values() {
        assert_eq!(planar_polyakov(0.5).unwrap(), 0.0);
        let p = planar_polyakov(2.0).unwrap();
        assert!((p - (1.0 - 0.5 / (2.0 + 2f64.sqrt()))).abs() < 1e-15);
        assert!((p - 0.853553).abs() < 1e-6);
        let h = 1e-5;
        let fd = (sourced_entropy(2.0, h).unwrap() - sourced_entropy(2.0, -h).unwrap()) / (2.0 * h);
        assert!((fd - p).abs() < 1e-6, "{fd} {p}");
        assert!((sourced_entropy(2.0, 0.0).unwrap() - saddle_entropy(2.0).unwrap().entropy_density).abs() < 1e-15);
        let fd = (sourced_entropy(0.5, h).unwrap() - sourced_entropy(0.5, -h).unwrap()) / (2.0 * h);
        assert!(fd.abs() < 1e-6);
        let mut last = 0.0;
        for a in [1.5, 3.0, 10.0, 1e3, 1e6] {
            let p = planar_polyakov(a).unwrap();
            assert!(p > last && p < 1.0);
            last = p;
        }
    }

    #[test]
    fn temperature_map() {
        let thp = hawking_page_temperature();
        assert!((thp - 0.38).abs() < 0.005, "{thp}");
        assert!(a_of_t(0.05).unwrap() < 1e-3);
        assert!((a_of_t(0.38).unwrap() - 1.003).abs() < 1e-3);
        assert!(a_of_t(0.0).is_err());
        assert!(t_of_a(-1.0).is_err());
    }

    #[test]
    fn szego_growth() {
        for &sigma in &[0.5, 2.0] {
            let n = 96;
            let v = gww_log_partition(GwwParams { n, sigma }).unwrap().ln_magnitude() / (n * n) as f64;
            let f = planar_free_energy(sigma).unwrap();
            assert!((v - f).abs() < 2e-3, "sigma={sigma} {v} {f}");
        }
    }

    proptest! {
        #[test]
        fn a_of_t_round_trip(a in 1e-3f64..50.0) {
            let t = t_of_a(a).unwrap();
            prop_assert!((a_of_t(t).unwrap() - a).abs() < 1e-12 * a);
        }

        #[test]
        fn a_increasing(t in 0.02f64..5.0) {
            prop_assert!(a_of_t(t * 1.001).unwrap() > a_of_t(t).unwrap());
        }

        #[test]
        fn toeplitz_positive(n in 1usize..12, sigma in 0.0f64..5.0) {
            let z = gww_log_partition(GwwParams { n, sigma }).unwrap();
            prop_assert_eq!(z.sign(), 1);
        }
    }
}
