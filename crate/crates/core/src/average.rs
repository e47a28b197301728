//! Gaussian coupling averages of echoes, evaluated in log domain.
//!
//! The measure `(J dJ / 2a) e^{−J²/4a}` on `J ≥ 0` is normalized and has
//! `⟨J²⟩ = 4a`. In the gapped phase the integrand peaks near `J ≈ Nσ*(a)`,
//! far outside the bare Gaussian, so the integration range is located by a
//! coarse scan of the log-integrand before the Gauss–Legendre refinement.

use std::f64::consts::PI;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{self, ChainSpec, Lattice};
use crate::error::{invalid, Error, Result};
use crate::gww;
use crate::logvalue::{log_sum_exp, LogValue};
use crate::mp;
use crate::quadrature::{adaptive_gauss_kronrod, log_integrate};
use crate::specfun::CouplingVector;

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_NODES: usize = 4096;
pub const MU_FLOOR: f64 = 1e-6;

/// Support of the integrand extends to where it falls this many e-folds below the peak.
const SUPPORT_NATS: f64 = 50.0;
/// The range end must sit at least this far below the peak.
const BOUNDARY_NATS: f64 = 30.0;
const SCAN_POINTS: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageParams {
    pub a_modulus: f64,
    pub a_phase: f64,
    pub quad_rel_tol: f64,
    pub max_nodes: usize,
}

impl AverageParams {
    pub fn real(a: f64) -> Result<Self> {
        Self::complex(a, 0.0)
    }

    pub fn complex(a_modulus: f64, a_phase: f64) -> Result<Self> {
        let p = AverageParams {
            a_modulus,
            a_phase,
            quad_rel_tol: DEFAULT_REL_TOL,
            max_nodes: DEFAULT_MAX_NODES,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Result<Self> {
        self.quad_rel_tol = tol;
        self.validate()?;
        Ok(self)
    }

    pub fn with_max_nodes(mut self, max_nodes: usize) -> Self {
        self.max_nodes = max_nodes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a_modulus.is_finite() || self.a_modulus <= 0.0 {
            return Err(invalid(format!("a must be finite and > 0, got {}", self.a_modulus)));
        }
        if !(self.a_phase > -PI && self.a_phase <= PI) {
            return Err(invalid(format!("phase must lie in (-pi, pi], got {}", self.a_phase)));
        }
        if !(self.quad_rel_tol > 0.0 && self.quad_rel_tol <= 1e-3) {
            return Err(invalid(format!("tolerance must lie in (0, 1e-3], got {}", self.quad_rel_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedParams {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl NestedParams {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !a.is_finite() || a <= 0.0 {
            return Err(invalid(format!("a must be finite and > 0, got {a}")));
        }
        if !b.is_finite() || b <= 0.0 {
            return Err(invalid(format!("b must be finite and > 0, got {b}")));
        }
        if n == 0 {
            return Err(invalid("N must be >= 1"));
        }
        Ok(NestedParams { a, b, n })
    }

    /// Standard deviation of the μ-Gaussian, `√(2b)/N`.
    pub fn width(&self) -> f64 {
        (2.0 * self.b).sqrt() / self.n as f64
    }

    /// `[μ_min, μ_max]`: ±8 widths, clipped at `MU_FLOOR`.
    pub fn mu_range(&self) -> Result<(f64, f64)> {
        let w = self.width();
        let lo = (self.a - 8.0 * w).max(MU_FLOOR);
        let hi = self.a + 8.0 * w;
        if hi <= lo || hi <= MU_FLOOR {
            return Err(Error::DegenerateRange(format!("mu in [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }

    fn ln_weight(&self, mu: f64) -> f64 {
        let n2 = (self.n * self.n) as f64;
        -n2 * (mu - self.a).powi(2) / (4.0 * self.b) - mu.ln()
    }
}

/// `J ↦ ln f(J)` with an optional estimate of how far out the integrand reaches.
pub struct EchoFunction<'a> {
    f: Box<dyn Fn(f64) -> Result<LogValue> + Sync + 'a>,
    range_hint: Option<f64>,
}

impl<'a> EchoFunction<'a> {
    pub fn new(f: impl Fn(f64) -> Result<LogValue> + Sync + 'a) -> Self {
        EchoFunction {
            f: Box::new(f),
            range_hint: None,
        }
    }

    /// Upper end of the range the integrand is expected to need, e.g. `N(σ* + 2)`.
    pub fn with_range_hint(mut self, j_max: f64) -> Self {
        self.range_hint = Some(j_max);
        self
    }

    pub fn eval(&self, j: f64) -> Result<LogValue> {
        (self.f)(j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averaged {
    pub value: LogValue,
    /// Relative change between the last two refinements.
    pub error_estimate: f64,
    pub nodes: usize,
    /// Location of the largest integrand sample.
    pub peak_j: f64,
    pub j_max: f64,
}

impl Averaged {
    pub fn ln(&self) -> f64 {
        self.value.ln_magnitude()
    }

    fn exact(value: LogValue) -> Self {
        Averaged {
            value,
            error_estimate: 0.0,
            nodes: 0,
            peak_j: 0.0,
            j_max: 0.0,
        }
    }
}

/// Records the first error raised inside a parallel integrand.
struct ErrorSlot(Mutex<Option<Error>>);

impl ErrorSlot {
    fn new() -> Self {
        ErrorSlot(Mutex::new(None))
    }

    fn ln(&self, v: Result<LogValue>) -> f64 {
        match v {
            Ok(v) => {
                if v.sign() < 0 {
                    self.set(Error::InvalidArgument("echo function returned a negative value".into()));
                    f64::NAN
                } else {
                    v.ln_magnitude()
                }
            }
            Err(e) => {
                self.set(e);
                f64::NAN
            }
        }
    }

    fn set(&self, e: Error) {
        let mut g = self.0.lock().expect("error slot");
        if g.is_none() {
            *g = Some(e);
        }
    }

    fn check(&self) -> Result<()> {
        match self.0.lock().expect("error slot").take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// `ln ∫_0^{j_max} e^{g(J)} dJ` for a unimodal-ish log-integrand: scan, clip
/// to the support, check the far boundary, refine by panel doubling.
fn integrate_support<G>(g: &G, mut j_max: f64, tol: f64, max_nodes: usize) -> Result<Averaged>
where
    G: Fn(f64) -> f64 + Sync,
{
    for _ in 0..12 {
        let grid: Vec<f64> = (1..=SCAN_POINTS).map(|i| j_max * i as f64 / SCAN_POINTS as f64).collect();
        let vals: Vec<f64> = grid.par_iter().map(|j| g(*j)).collect();
        if vals.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("integrand is NaN".into()));
        }
        let (ip, peak) = vals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        if peak == f64::NEG_INFINITY {
            return Err(Error::ZeroNormalization("integrand vanishes on the whole range".into()));
        }
        if vals[SCAN_POINTS - 1] > peak - BOUNDARY_NATS {
            j_max *= 1.5;
            continue;
        }
        let cut = peak - SUPPORT_NATS;
        let lo = (0..ip).rev().find(|&i| vals[i] < cut).map_or(0.0, |i| grid[i]);
        let hi = (ip..SCAN_POINTS).find(|&i| vals[i] < cut).map_or(j_max, |i| grid[i]);
        let r = log_integrate(g, lo, hi, tol, max_nodes, 4)?;
        return Ok(Averaged {
            value: LogValue::from_ln(r.ln_value),
            error_estimate: r.rel_error,
            nodes: r.nodes,
            peak_j: r.peak_x,
            j_max,
        });
    }
    Err(Error::DegenerateRange(format!(
        "integrand still within {BOUNDARY_NATS} e-folds of its peak at J = {j_max}"
    )))
}

fn ln_measure(j: f64, a: f64) -> f64 {
    (j / (2.0 * a)).ln() - j * j / (4.0 * a)
}

/// `ln ∫_0^∞ (J dJ/2a) e^{−J²/4a} f(J)`.
pub fn gaussian_average(f: &EchoFunction<'_>, p: &AverageParams) -> Result<Averaged> {
    p.validate()?;
    if p.a_phase != 0.0 {
        return Err(invalid("gaussian_average takes a real coupling; use complex_temperature_average"));
    }
    let a = p.a_modulus;
    let slot = ErrorSlot::new();
    let g = |j: f64| {
        if j <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ln_measure(j, a) + slot.ln(f.eval(j))
    };
    let j_max = f.range_hint.unwrap_or(0.0).max(8.0 * (2.0 * a).sqrt());
    let r = integrate_support(&g, j_max, p.quad_rel_tol, p.max_nodes);
    slot.check()?;
    r
}

/// Which chain the echo is taken on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChainKind {
    /// Nearest-neighbour chain with coupling `J`.
    Xx { lattice: Lattice },
    /// `J_n = profile[n−1] · J`.
    Generalized { lattice: Lattice, profile: Vec<f64> },
}

impl ChainKind {
    pub fn xx(lattice: Lattice) -> Self {
        ChainKind::Xx { lattice }
    }

    pub fn lattice(&self) -> Lattice {
        match self {
            ChainKind::Xx { lattice } | ChainKind::Generalized { lattice, .. } => *lattice,
        }
    }

    pub fn spec(&self, j: f64) -> Result<ChainSpec> {
        match self {
            ChainKind::Xx { lattice } => ChainSpec::xx(*lattice, j),
            ChainKind::Generalized { lattice, profile } => {
                ChainSpec::new(*lattice, CouplingVector::new(profile.iter().map(|r| r * j).collect())?)
            }
        }
    }
}

/// `N(σ*(a) + 2)`: past the gapped-phase peak by a margin of `2N`.
pub fn range_hint(n: usize, a: f64) -> f64 {
    let s = gww::saddle_entropy(a).map(|r| r.sigma_star).unwrap_or(0.0);
    n as f64 * (s + 2.0)
}

/// `ln √L̂_N(J)`.
pub fn sqrt_echo(kind: &ChainKind, n: usize, j: f64) -> Result<LogValue> {
    Ok(chain::normalized_echo(&kind.spec(j)?, n)?.sqrt_abs())
}

/// `ln √L̂^×_N(J)` with the impurity displaced by `p`.
pub fn sqrt_impurity_echo(kind: &ChainKind, n: usize, p: usize, j: f64) -> Result<LogValue> {
    Ok(chain::impurity_echo(&kind.spec(j)?, n, p)?.sqrt_abs())
}

/// `ln ⟨√L̂_N⟩_{2a}`.
pub fn averaged_echo(n: usize, p: &AverageParams, kind: &ChainKind) -> Result<Averaged> {
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    if n == 1 {
        return Ok(Averaged::exact(LogValue::ONE));
    }
    let f = EchoFunction::new(|j| sqrt_echo(kind, n, j)).with_range_hint(range_hint(n, p.a_modulus));
    gaussian_average(&f, p)
}

/// Impurity and plain averages and the Polyakov ratio built from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyakovValue {
    pub plain: Averaged,
    pub impurity: Averaged,
    /// `⟨√L̂^×⟩ / ⟨√L̂⟩ / N`.
    pub ratio: f64,
}

/// `P = ⟨√L̂^×_N⟩_{2a} / ⟨√L̂_N⟩_{2a} / N`. Since `G^×_N / G_N = ⟨Tr U⟩` in the
/// matrix model, dividing by `N` gives the normalized loop `⟨Tr U⟩/N`.
pub fn polyakov_ratio(n: usize, p: &AverageParams, kind: &ChainKind, shift: usize) -> Result<PolyakovValue> {
    if n < 2 {
        return Err(invalid("the Polyakov ratio needs N >= 2"));
    }
    let plain = averaged_echo(n, p, kind)?;
    let f = EchoFunction::new(|j| sqrt_impurity_echo(kind, n, shift, j)).with_range_hint(range_hint(n, p.a_modulus));
    let impurity = gaussian_average(&f, p)?;
    if plain.value.is_zero() {
        return Err(Error::ZeroNormalization("plain average vanishes".into()));
    }
    let ratio = (impurity.ln() - plain.ln()).exp() / n as f64;
    Ok(PolyakovValue { plain, impurity, ratio })
}

/// `ln` of the K-fold average of `√L̂` over independent couplings
/// `J_n` with parameters `a_n`, on the infinite chain.
pub fn multi_gaussian_average(n: usize, a_vec: &[f64], tol: f64) -> Result<Averaged> {
    let k = a_vec.len();
    if k == 0 {
        return Err(invalid("need at least one coupling"));
    }
    if k > 3 {
        return Err(Error::CostGuard {
            what: "number of averaged couplings K",
            value: k,
            limit: 3,
        });
    }
    if a_vec.iter().any(|a| !a.is_finite() || *a <= 0.0) {
        return Err(invalid("all a_n must be finite and > 0"));
    }
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    if n == 1 {
        return Ok(Averaged::exact(LogValue::ONE));
    }
    let slot = ErrorSlot::new();
    let ln_f = |js: &[f64]| -> f64 {
        let c = match CouplingVector::new(js.to_vec()) {
            Ok(c) => c,
            Err(e) => {
                slot.set(e);
                return f64::NAN;
            }
        };
        let spec = ChainSpec::new(Lattice::Infinite, c);
        slot.ln(spec.and_then(|s| Ok(chain::normalized_echo(&s, n)?.sqrt_abs())))
    };
    let ln_joint = |js: &[f64]| -> f64 {
        let m: f64 = js.iter().zip(a_vec).map(|(j, a)| if *j <= 0.0 { f64::NEG_INFINITY } else { ln_measure(*j, *a) }).sum();
        if m == f64::NEG_INFINITY {
            m
        } else {
            m + ln_f(js)
        }
    };

    // Support box by coordinate scans through the running maximum.
    let mut center: Vec<f64> = a_vec.iter().map(|a| (2.0 * a).sqrt()).collect();
    let mut boxes: Vec<(f64, f64)> = vec![(0.0, 0.0); k];
    for _round in 0..2 {
        for axis in 0..k {
            let a = a_vec[axis];
            let mut j_max = range_hint(n, a).max(8.0 * (2.0 * a).sqrt());
            let base = center.clone();
            let line = |x: f64| {
                let mut js = base.clone();
                js[axis] = x;
                ln_joint(&js)
            };
            let r = scan_line(&line, &mut j_max)?;
            slot.check()?;
            center[axis] = r.0;
            boxes[axis] = (r.1, r.2);
        }
    }

    let mut per_axis = 16usize;
    let mut prev: Option<f64> = None;
    loop {
        let total = per_axis.pow(k as u32);
        if total > 64 * 64 * 64 {
            return Err(Error::NonConvergence {
                nodes: total,
                estimate: f64::NAN,
            });
        }
        let axes: Vec<Vec<(f64, f64)>> = boxes
            .iter()
            .map(|(lo, hi)| crate::quadrature::composite_nodes(*lo, *hi, per_axis / crate::quadrature::PANEL_ORDER))
            .collect();
        let points: Vec<(Vec<f64>, f64)> = (0..total)
            .map(|mut idx| {
                let mut js = Vec::with_capacity(k);
                let mut w = 1.0;
                for axis in &axes {
                    let (x, wx) = axis[idx % per_axis];
                    idx /= per_axis;
                    js.push(x);
                    w *= wx;
                }
                (js, w)
            })
            .collect();
        let terms: Vec<f64> = points.par_iter().map(|(js, w)| w.ln() + ln_joint(js)).collect();
        slot.check()?;
        let ln_value = log_sum_exp(&terms);
        if let Some(p) = prev {
            let err = -(-(ln_value - p).abs()).exp_m1();
            if err <= tol {
                let (ip, _) = terms
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
                return Ok(Averaged {
                    value: LogValue::from_ln(ln_value),
                    error_estimate: err,
                    nodes: total,
                    peak_j: points[ip].0[0],
                    j_max: boxes[0].1,
                });
            }
        }
        prev = Some(ln_value);
        per_axis *= 2;
    }
}

/// Scans `g` on `(0, j_max]`; returns (argmax, support low, support high),
/// growing `j_max` until the end is far below the peak.
fn scan_line<G: Fn(f64) -> f64 + Sync>(g: &G, j_max: &mut f64) -> Result<(f64, f64, f64)> {
    for _ in 0..12 {
        let grid: Vec<f64> = (1..=SCAN_POINTS).map(|i| *j_max * i as f64 / SCAN_POINTS as f64).collect();
        let vals: Vec<f64> = grid.par_iter().map(|j| g(*j)).collect();
        let (ip, peak) = vals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        if !peak.is_finite() {
            return Err(Error::ZeroNormalization("integrand vanishes on the scan line".into()));
        }
        if vals[SCAN_POINTS - 1] > peak - BOUNDARY_NATS {
            *j_max *= 1.5;
            continue;
        }
        let cut = peak - SUPPORT_NATS;
        let lo = (0..ip).rev().find(|&i| vals[i] < cut).map_or(0.0, |i| grid[i]);
        let hi = (ip..SCAN_POINTS).find(|&i| vals[i] < cut).map_or(*j_max, |i| grid[i]);
        return Ok((grid[ip], lo, hi));
    }
    Err(Error::DegenerateRange("scan line never left the peak region".into()))
}

/// `ln ∫ (dμ/μ) e^{−N²(μ−a)²/4b}`, the normalization of the nested average.
pub fn nested_normalization(p: &NestedParams) -> Result<f64> {
    let (lo, hi) = p.mu_range()?;
    // In t = ln μ the 1/μ factor is absorbed by dμ = μ dt.
    let g = |t: f64| p.ln_weight(t.exp()) + t;
    Ok(log_integrate(&g, lo.ln(), hi.ln(), 1e-13, 1 << 14, 4)?.ln_value)
}

/// Effective measure of the nested average after the μ-integral:
/// `ln ∫ (dμ/μ) e^{−N²(μ−a)²/4b} (J/2μ) e^{−J²/4μ}`.
fn nested_ln_measure(p: &NestedParams, lo: f64, hi: f64, j: f64) -> f64 {
    let g = |t: f64| {
        let mu = t.exp();
        p.ln_weight(mu) + ln_measure(j, mu) + t
    };
    match log_integrate(&g, lo.ln(), hi.ln(), 1e-12, 1 << 14, 2) {
        Ok(r) => r.ln_value,
        Err(_) => f64::NAN,
    }
}

/// `ln ∫ (dμ/μ) e^{−N²(μ−a)²/4b} ⟨f⟩_{2μ}`, unnormalized; subtract
/// [`nested_normalization`] to compare with a single average.
pub fn nested_average_of(f: &EchoFunction<'_>, p: &NestedParams, tol: f64) -> Result<Averaged> {
    let (lo, hi) = p.mu_range()?;
    let slot = ErrorSlot::new();
    let g = |j: f64| {
        if j <= 0.0 {
            return f64::NEG_INFINITY;
        }
        nested_ln_measure(p, lo, hi, j) + slot.ln(f.eval(j))
    };
    let j_max = f.range_hint.unwrap_or(0.0).max(8.0 * (2.0 * hi).sqrt());
    let r = integrate_support(&g, j_max, tol, DEFAULT_MAX_NODES);
    slot.check()?;
    r
}

/// Nested average of `√L̂_N` on the chain `kind`.
pub fn nested_average(p: &NestedParams, kind: &ChainKind, tol: f64) -> Result<Averaged> {
    let n = p.n;
    let (_, hi) = p.mu_range()?;
    if n == 1 {
        return Ok(Averaged::exact(LogValue::from_ln(nested_normalization(p)?)));
    }
    let f = EchoFunction::new(|j| sqrt_echo(kind, n, j)).with_range_hint(range_hint(n, hi));
    nested_average_of(&f, p, tol)
}

/// `ln L̂_N(z) = 2 ln|det[I_{j−k}(z)] / I_0(z)|` at complex `z`, infinite chain.
pub fn complex_echo(n: usize, zr: f64, zi: f64) -> Result<LogValue> {
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    if zr < 0.0 {
        return Err(invalid("complex coupling needs Re z >= 0"));
    }
    if n == 1 {
        return Ok(LogValue::ONE);
    }
    let modulus = zr.hypot(zi);
    let bits = mp::precision_bits(modulus, n) + 64;
    let entries = mp::complex_bessel_scaled_orders(n - 1, zr, zi, bits);
    let (ln_i0, _) = entries[0].ln_abs_arg();
    if ln_i0 == f64::NEG_INFINITY {
        return Err(Error::ZeroNormalization("I_0(z) vanishes".into()));
    }
    let m: Vec<Vec<mp::BigComplex>> = (0..n)
        .map(|r| (0..n).map(|c| entries[r.abs_diff(c)].clone()).collect())
        .collect();
    let det = mp::complex_log_det(m, bits);
    // The scale e^{Re z} cancels between det (power N) and I_0 up to N − 1 factors.
    let ln = 2.0 * (det.ln_abs + (n as f64 - 1.0) * zr - ln_i0);
    Ok(LogValue::from_ln(ln))
}

/// `ln ⟨L̂_N(e^{−iφ/2} J)⟩_{2|a|}` (an average of `L̂`, not of `√L̂`).
pub fn complex_temperature_average(n: usize, p: &AverageParams) -> Result<Averaged> {
    p.validate()?;
    if p.a_phase.abs() >= PI {
        return Err(invalid("complex temperature needs |phi| < pi"));
    }
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    if n == 1 {
        return Ok(Averaged::exact(LogValue::ONE));
    }
    let (s, c) = (-0.5 * p.a_phase).sin_cos();
    let f = EchoFunction::new(move |j| complex_echo(n, c * j, s * j))
        .with_range_hint(range_hint(n, 2.0 * p.a_modulus));
    let real = AverageParams { a_phase: 0.0, ..*p };
    gaussian_average(&f, &real)
}

/// Seeded Monte-Carlo estimate of `⟨f⟩_{2a}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub value: LogValue,
    /// Standard error of the mean relative to the mean.
    pub rel_std_error: f64,
    pub samples: usize,
}

/// Samples `J = √(−4a ln U)`, which has density `(J/2a) e^{−J²/4a}`.
pub fn monte_carlo_average(f: &EchoFunction<'_>, a: f64, samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    if !a.is_finite() || a <= 0.0 {
        return Err(invalid("a must be finite and > 0"));
    }
    if samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let js: Vec<f64> = (0..samples)
        .map(|_| {
            let u: f64 = 1.0 - rng.gen::<f64>();
            (-4.0 * a * u.ln()).sqrt()
        })
        .collect();
    let slot = ErrorSlot::new();
    let lns: Vec<f64> = js.par_iter().map(|j| slot.ln(f.eval(*j))).collect();
    slot.check()?;
    let ln_mean = log_sum_exp(&lns) - (samples as f64).ln();
    let ln_second = log_sum_exp(&lns.iter().map(|v| 2.0 * v).collect::<Vec<_>>()) - (samples as f64).ln();
    let var_rel = ((ln_second - 2.0 * ln_mean).exp() - 1.0).max(0.0);
    Ok(MonteCarloEstimate {
        value: LogValue::from_ln(ln_mean),
        rel_std_error: (var_rel / (samples - 1) as f64).sqrt(),
        samples,
    })
}

/// Independent adaptive check of [`nested_normalization`].
pub fn nested_normalization_adaptive(p: &NestedParams) -> Result<f64> {
    let (lo, hi) = p.mu_range()?;
    let shift = p.ln_weight(p.a.max(lo));
    let f = |mu: f64| (p.ln_weight(mu) - shift).exp();
    let (v, _) = adaptive_gauss_kronrod(&f, lo, hi, 0.0, 1e-13)?;
    Ok(v.ln() + shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> EchoFunction<'static> {
        EchoFunction::new(|_| Ok(LogValue::ONE))
    }

    #[test]
    fn measure_normalization_and_moment() {
        for &a in &[1e-3, 0.1, 1.0, 3.7, 10.0] {
            let p = AverageParams::real(a).unwrap();
            let z = gaussian_average(&one(), &p).unwrap();
            assert!(z.ln().abs() < 1e-12, "a={a} {}", z.ln());
            let f = EchoFunction::new(|j| Ok(LogValue::from_f64(j * j)));
            let m = gaussian_average(&f, &p).unwrap().value.value();
            assert!(((m - 4.0 * a) / (4.0 * a)).abs() < 1e-10, "a={a} {m}");
        }
    }

    #[test]
    fn params_validation() {
        assert!(AverageParams::real(0.0).is_err());
        assert!(AverageParams::complex(1.0, -PI).is_err());
        assert!(AverageParams::real(1.0).unwrap().with_tolerance(1e-2).is_err());
        assert!(NestedParams::new(1.0, 0.0, 4).is_err());
    }

    #[test]
    fn trivial_echo_averages() {
        let p = AverageParams::real(2.0).unwrap();
        let kind = ChainKind::xx(Lattice::Infinite);
        assert_eq!(averaged_echo(1, &p, &kind).unwrap().value, LogValue::ONE);
        let c = AverageParams::complex(2.0, 0.7).unwrap();
        assert_eq!(complex_temperature_average(1, &c).unwrap().value, LogValue::ONE);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let f = EchoFunction::new(|j: f64| Ok(LogValue::from_ln(40.0 * (5.0 * j).sin())));
        let p = AverageParams::real(1.0).unwrap().with_max_nodes(64);
        assert!(matches!(gaussian_average(&f, &p), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn low_phase_bounded() {
        let p = AverageParams::real(0.5).unwrap();
        let kind = ChainKind::xx(Lattice::Infinite);
        let r8 = averaged_echo(8, &p, &kind).unwrap().ln();
        let r16 = averaged_echo(16, &p, &kind).unwrap().ln();
        assert!(r8.abs() < 1.0 && r16.abs() < 1.0);
        assert!(r16 / r8 < 1.6);
        assert!((r8 - 0.093302228910510).abs() < 1e-9, "{r8}");
        assert!((r16 - 0.093302252912013).abs() < 1e-9, "{r16}");
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let f = EchoFunction::new(|j| Ok(LogValue::from_f64(j * j)));
        let mc = monte_carlo_average(&f, 1.5, 20000, 7).unwrap();
        let v = mc.value.value();
        assert!((v - 6.0).abs() < 5.0 * mc.rel_std_error * 6.0, "{v} ± {}", mc.rel_std_error);
        let again = monte_carlo_average(&f, 1.5, 20000, 7).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn nested_normalization_cross_check() {
        let p = NestedParams::new(1.0, 0.5, 8).unwrap();
        let a = nested_normalization(&p).unwrap();
        let b = nested_normalization_adaptive(&p).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} {b}");
        let z = nested_average_of(&one(), &p, 1e-10).unwrap();
        assert!((z.ln() - a).abs() < 1e-9, "{} {a}", z.ln());
    }

    #[test]
    fn nested_range_degenerate() {
        let p = NestedParams::new(1e-9, 1e-20, 8).unwrap();
        assert!(matches!(p.mu_range(), Err(Error::DegenerateRange(_))));
    }

    #[test]
    fn complex_echo_reduces_to_real() {
        for &j in &[0.5, 3.0, 9.0] {
            let c = complex_echo(4, j, 0.0).unwrap();
            let r = chain::normalized_echo(&ChainSpec::xx(Lattice::Infinite, j).unwrap(), 4).unwrap();
            assert!(c.rel_diff(&r) < 1e-12, "{c} {r}");
        }
    }
}
