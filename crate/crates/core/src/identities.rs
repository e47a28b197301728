//! Checks of the determinant identities behind the spin-chain mapping.
//!
//! Every check compares two independent evaluations of the same quantity and
//! returns an [`IdentityReport`]. Large determinants are compared in log form
//! with an explicit sign check. The default grids live in a versioned
//! [`Manifest`] so audit reports can be regenerated exactly.
//!
//! Convention for the K-th neighbour coupling: a hop of strength `J` over `K`
//! sites enters the symbol as `(J_K/K) cos Kθ` with `J_K = K·J`, so
//! `I^{(1,K)}_{Kμ}(0,…,0,K·J) = I_μ(J)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{self, fermion_amplitude, psi0, ChainSpec, DispersionModel, Lattice};
use crate::error::{invalid, Error, Result};
use crate::kernel::{CosineSymbol, Grid, KernelTable};
use crate::logvalue::LogValue;
use crate::specfun::{bessel_i_scaled, generalized_bessel_orders, CouplingVector};

pub const MANIFEST_VERSION: &str = "hpchain-identities/1";

pub const PROP_BESSEL_TOL: f64 = 1e-12;
pub const DET_ID_TOL: f64 = 1e-9;
pub const SPIN_FACTORIZATION_TOL: f64 = 1e-10;
pub const FERMION_TOL_INFINITE: f64 = 1e-9;
pub const FERMION_TOL_FINITE: f64 = 1e-6;
pub const HEINE_SZEGO_TOL: f64 = 1e-8;

/// Largest `K·N` accepted by [`check_det_identity`].
pub const MAX_DET_SIZE: usize = 24;
/// Largest rank for the eigenvalue-angle brute force.
pub const MAX_BRUTE_FORCE_RANK: usize = 3;
/// Node budget `M^N` of the eigenvalue-angle quadrature.
pub const BRUTE_FORCE_BUDGET: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IdentityId {
    PropBessel,
    DetIdK2,
    DetIdGeneralK,
    FermionEquivalence,
    HeineSzego,
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IdentityId::PropBessel => "PROP_BESSEL",
            IdentityId::DetIdK2 => "DET_ID_K2",
            IdentityId::DetIdGeneralK => "DET_ID_GENERAL_K",
            IdentityId::FermionEquivalence => "FERMION_EQUIVALENCE",
            IdentityId::HeineSzego => "HEINE_SZEGO",
        };
        f.write_str(s)
    }
}

/// One `(K, N, J)` tuple. For the Bessel property `n` is the order `ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub n: usize,
    pub j: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Lattice>,
}

impl GridPoint {
    fn new(k: usize, n: usize, j: Vec<f64>) -> Self {
        GridPoint { k, n, j, lattice: None }
    }

    fn on(mut self, lattice: Lattice) -> Self {
        self.lattice = Some(lattice);
        self
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "K={} N={} J={:?}", self.k, self.n, self.j)?;
        if let Some(l) = self.lattice {
            write!(f, " L={l}")?;
        }
        Ok(())
    }
}

/// A grid point whose two sides disagree beyond tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub point: GridPoint,
    pub lhs: String,
    pub rhs: String,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToleranceKind {
    Absolute,
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity_id: IdentityId,
    pub parameter_grid: Vec<GridPoint>,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub tolerance_kind: ToleranceKind,
    pub passed: bool,
    pub failures: Vec<Failure>,
}

/// Per-point comparison before aggregation.
struct Comparison {
    point: GridPoint,
    lhs: LogValue,
    rhs: LogValue,
    tol: f64,
}

impl Comparison {
    fn abs_error(&self) -> f64 {
        (self.lhs.value() - self.rhs.value()).abs()
    }

    /// Under an absolute tolerance, points whose exact side is below the
    /// tolerance are left out of the relative error.
    fn rel_error(&self, kind: ToleranceKind) -> f64 {
        if kind == ToleranceKind::Absolute && (self.rhs.is_zero() || self.rhs.ln_magnitude() < self.tol.ln()) {
            return 0.0;
        }
        self.lhs.rel_diff(&self.rhs)
    }
}

fn report(id: IdentityId, kind: ToleranceKind, tol: f64, rows: Vec<Comparison>) -> IdentityReport {
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut failures = Vec::new();
    for c in &rows {
        let (abs, rel) = (c.abs_error(), c.rel_error(kind));
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
        let err = match kind {
            ToleranceKind::Absolute => abs,
            ToleranceKind::Relative => rel,
        };
        if !(err < c.tol) {
            failures.push(Failure {
                point: c.point.clone(),
                lhs: c.lhs.to_string(),
                rhs: c.rhs.to_string(),
                error: err,
            });
        }
    }
    IdentityReport {
        identity_id: id,
        parameter_grid: rows.into_iter().map(|c| c.point).collect(),
        max_abs_error: max_abs,
        max_rel_error: max_rel,
        tolerance: tol,
        tolerance_kind: kind,
        passed: failures.is_empty(),
        failures,
    }
}

/// Test hook: multiplies kernel entry `g(offset)` on the left-hand side of
/// every check by `1 + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub offset: usize,
    pub delta: f64,
}

fn perturbed(mut t: KernelTable, p: Option<Perturbation>) -> KernelTable {
    if let Some(p) = p {
        if p.offset < t.len() {
            t.perturb(p.offset, p.delta);
        }
    }
    t
}

fn check_j(j: f64) -> Result<()> {
    if !j.is_finite() || j < 0.0 {
        return Err(invalid(format!("J must be finite and >= 0, got {j}")));
    }
    Ok(())
}

/// `(0, …, 0, K·J)`.
fn kth_neighbour(k: usize, j: f64) -> Result<CouplingVector> {
    let mut v = vec![0.0; k];
    v[k - 1] = k as f64 * j;
    CouplingVector::new(v)
}

/// `I^{(1,K)}_ν(0,…,0,K·J)` is `I_{ν/K}(J)` when `K | ν` and zero otherwise,
/// for `0 ≤ ν ≤ nu_max`. Compared on scaled values.
pub fn check_prop_bessel(nu_max: usize, j_grid: &[f64], k: usize) -> Result<IdentityReport> {
    prop_bessel(nu_max, j_grid, &[k], None)
}

fn prop_bessel(nu_max: usize, j_grid: &[f64], ks: &[usize], perturb: Option<Perturbation>) -> Result<IdentityReport> {
    if nu_max > 32 {
        return Err(invalid(format!("nu_max must be <= 32, got {nu_max}")));
    }
    if j_grid.is_empty() || ks.is_empty() {
        return Err(invalid("empty parameter grid"));
    }
    let mut rows = Vec::new();
    for &k in ks {
        if !(2..=5).contains(&k) {
            return Err(invalid(format!("K must lie in 2..=5, got {k}")));
        }
        for &j in j_grid {
            check_j(j)?;
            let mut lhs = generalized_bessel_orders(nu_max, &kth_neighbour(k, j)?)?;
            if let Some(p) = perturb {
                if p.offset <= nu_max {
                    lhs[p.offset] *= 1.0 + p.delta;
                }
            }
            for (nu, l) in lhs.iter().enumerate() {
                let rhs = if nu % k == 0 {
                    bessel_i_scaled((nu / k) as i64, j)?
                } else {
                    0.0
                };
                rows.push(Comparison {
                    point: GridPoint::new(k, nu, vec![j]),
                    lhs: LogValue::from_f64(*l),
                    rhs: LogValue::from_f64(rhs),
                    tol: PROP_BESSEL_TOL,
                });
            }
        }
    }
    Ok(report(IdentityId::PropBessel, ToleranceKind::Absolute, PROP_BESSEL_TOL, rows))
}

/// `det_{KN}[I^{(1,K)}_{j−k}(0,…,0,K·J)] = (det_N[I_{j−k}(J)])^K`.
pub fn check_det_identity(k: usize, n: usize, j: f64) -> Result<IdentityReport> {
    det_identity(&[(k, n, j)], None)
}

fn det_comparison(k: usize, n: usize, j: f64, perturb: Option<Perturbation>) -> Result<Comparison> {
    if k == 0 || n == 0 {
        return Err(invalid("K and N must be >= 1"));
    }
    if k * n > MAX_DET_SIZE {
        return Err(Error::CostGuard {
            what: "determinant size K*N",
            value: k * n,
            limit: MAX_DET_SIZE,
        });
    }
    check_j(j)?;
    if j > 5.0 {
        return Err(invalid(format!("J must be <= 5, got {j}")));
    }
    let size = k * n;
    let big = CosineSymbol::new(0.0, kth_neighbour(k, j)?.harmonics())?;
    let lhs = perturbed(KernelTable::build(&big, Grid::Continuum, size - 1, size), perturb).toeplitz_det(size);
    let small = CosineSymbol::new(0.0, vec![j])?;
    let rhs = KernelTable::build(&small, Grid::Continuum, n - 1, n).toeplitz_det(n).powi(k as i32);
    Ok(Comparison {
        point: GridPoint::new(k, n, vec![j]),
        lhs,
        rhs,
        tol: DET_ID_TOL,
    })
}

/// The displayed `N = 1, K = 2` case written out entry by entry:
/// `I_0^{(1,2)}² − I_{−1}^{(1,2)} I_1^{(1,2)} = I_0(J)²`.
fn two_by_two(j: f64, perturb: Option<Perturbation>) -> Result<Comparison> {
    let mut g = generalized_bessel_orders(1, &kth_neighbour(2, j)?)?;
    if let Some(p) = perturb {
        if p.offset <= 1 {
            g[p.offset] *= 1.0 + p.delta;
        }
    }
    let lhs = g[0] * g[0] - g[1] * g[1];
    let i0 = bessel_i_scaled(0, j)?;
    Ok(Comparison {
        point: GridPoint::new(2, 1, vec![j]),
        lhs: LogValue::from_f64(lhs),
        rhs: LogValue::from_f64(i0 * i0),
        tol: DET_ID_TOL,
    })
}

fn det_identity(points: &[(usize, usize, f64)], perturb: Option<Perturbation>) -> Result<IdentityReport> {
    if points.is_empty() {
        return Err(invalid("empty parameter grid"));
    }
    let rows = points
        .par_iter()
        .map(|&(k, n, j)| det_comparison(k, n, j, perturb))
        .collect::<Result<Vec<_>>>()?;
    let id = if points.iter().all(|p| p.0 == 2) {
        IdentityId::DetIdK2
    } else {
        IdentityId::DetIdGeneralK
    };
    Ok(report(id, ToleranceKind::Relative, DET_ID_TOL, rows))
}

/// Spin-chain route for `K = 2`: the return amplitude of `2N` adjacent spins
/// on the chain with `J_1 = 0, J_2 = 2J` against the square of the
/// nearest-neighbour amplitude of `N` spins, both from `chain::amplitude`.
pub fn check_spin_factorization(n_grid: &[usize], j_grid: &[f64]) -> Result<IdentityReport> {
    spin_factorization(n_grid, j_grid, None)
}

fn spin_factorization(n_grid: &[usize], j_grid: &[f64], perturb: Option<Perturbation>) -> Result<IdentityReport> {
    if n_grid.is_empty() || j_grid.is_empty() {
        return Err(invalid("empty parameter grid"));
    }
    let mut rows = Vec::new();
    for &n in n_grid {
        if n == 0 || 2 * n > MAX_DET_SIZE {
            return Err(invalid(format!("N must lie in 1..={}, got {n}", MAX_DET_SIZE / 2)));
        }
        for &j in j_grid {
            check_j(j)?;
            let wide = ChainSpec::new(Lattice::Infinite, CouplingVector::new(vec![0.0, 2.0 * j])?)?;
            let s2 = psi0(2 * n, Lattice::Infinite)?;
            let lhs = match perturb {
                None => chain::amplitude(&wide, &s2, &s2)?,
                Some(_) => perturbed(wide.kernel(2 * n, 2 * n - 1), perturb).toeplitz_det(2 * n),
            };
            let near = ChainSpec::xx(Lattice::Infinite, j)?;
            let s1 = psi0(n, Lattice::Infinite)?;
            let rhs = chain::amplitude(&near, &s1, &s1)?.powi(2);
            rows.push(Comparison {
                point: GridPoint::new(2, n, vec![j]).on(Lattice::Infinite),
                lhs,
                rhs,
                tol: SPIN_FACTORIZATION_TOL,
            });
        }
    }
    Ok(report(IdentityId::DetIdK2, ToleranceKind::Relative, SPIN_FACTORIZATION_TOL, rows))
}

/// Spin-chain amplitude of `N` adjacent spins against the free-fermion
/// amplitude with the dispersion of the Jordan–Wigner image.
pub fn check_fermion_equivalence(k: usize, n: usize, lattice: Lattice, j_vec: &[f64]) -> Result<IdentityReport> {
    fermion_equivalence(&[FermionCase::new(n, lattice, j_vec.to_vec())], Some(k), None)
}

fn fermion_comparison(case: &FermionCase, perturb: Option<Perturbation>) -> Result<Comparison> {
    let c = CouplingVector::new(case.j.clone())?;
    let k = c.k();
    if k > 3 {
        return Err(invalid(format!("K must be <= 3, got {k}")));
    }
    let n = case.n;
    if let Lattice::Finite(l) = case.lattice {
        if l < 4 * n {
            return Err(invalid(format!("finite ring needs L >= 4N, got L = {l}, N = {n}")));
        }
    }
    let spec = ChainSpec::new(case.lattice, c.clone())?;
    let s = psi0(n, case.lattice)?;
    let lhs = match perturb {
        None => chain::amplitude(&spec, &s, &s)?,
        Some(_) => perturbed(spec.kernel(n, n - 1), perturb).toeplitz_det(n),
    };
    let rhs = fermion_amplitude(&DispersionModel::from_couplings(&c), n, case.lattice, 1.0)?;
    let tol = match case.lattice {
        Lattice::Infinite => FERMION_TOL_INFINITE,
        Lattice::Finite(_) => FERMION_TOL_FINITE,
    };
    Ok(Comparison {
        point: GridPoint::new(k, n, case.j.clone()).on(case.lattice),
        lhs,
        rhs,
        tol,
    })
}

fn fermion_equivalence(
    cases: &[FermionCase],
    expect_k: Option<usize>,
    perturb: Option<Perturbation>,
) -> Result<IdentityReport> {
    if cases.is_empty() {
        return Err(invalid("empty parameter grid"));
    }
    if let Some(k) = expect_k {
        if let Some(c) = cases.iter().find(|c| c.j.len() != k) {
            return Err(invalid(format!("K = {k} but J has {} entries", c.j.len())));
        }
    }
    let rows = cases
        .par_iter()
        .map(|c| fermion_comparison(c, perturb))
        .collect::<Result<Vec<_>>>()?;
    let tol = if cases.iter().any(|c| c.lattice != Lattice::Infinite) {
        FERMION_TOL_FINITE
    } else {
        FERMION_TOL_INFINITE
    };
    Ok(report(IdentityId::FermionEquivalence, ToleranceKind::Relative, tol, rows))
}

/// `(1/N!) ∮ Π dθ_i/2π |Δ(e^{iθ})|² Π f(θ_i)` with `f = exp{Σ h_n cos nθ}`
/// by the product trapezoid rule, doubling `M` until the relative change is
/// below `1e-13`. Returns the log of the integral and of `⟨Σ cos θ_i⟩`.
pub fn weyl_integral(n: usize, harmonics: &[f64]) -> Result<(LogValue, f64)> {
    if n == 0 || n > MAX_BRUTE_FORCE_RANK {
        return Err(invalid(format!("brute force needs 1 <= N <= {MAX_BRUTE_FORCE_RANK}, got {n}")));
    }
    let spread: f64 = harmonics.iter().map(|h| h.abs()).sum();
    let mut m = 16usize;
    let mut prev: Option<f64> = None;
    loop {
        if m.pow(n as u32) > BRUTE_FORCE_BUDGET {
            return Err(Error::CostGuard {
                what: "eigenvalue-angle quadrature nodes",
                value: m.pow(n as u32),
                limit: BRUTE_FORCE_BUDGET,
            });
        }
        let (z, tr) = weyl_sum(n, harmonics, spread, m);
        if let Some(p) = prev {
            if ((z - p) / z).abs() < 1e-13 {
                let factorial: f64 = (1..=n).map(|i| i as f64).product();
                let ln = (z / factorial).ln() + n as f64 * spread;
                return Ok((LogValue::from_ln(ln), tr / z));
            }
        }
        prev = Some(z);
        m *= 2;
    }
}

/// Mean over the `M^N` grid of `|Δ|² Π f/e^{spread}`, and of the same
/// weighted by `Σ cos θ_i`.
fn weyl_sum(n: usize, h: &[f64], spread: f64, m: usize) -> (f64, f64) {
    let step = 2.0 * std::f64::consts::PI / m as f64;
    let angles: Vec<f64> = (0..m).map(|i| step * i as f64).collect();
    let weight: Vec<f64> = angles
        .iter()
        .map(|t| {
            let e: f64 = h.iter().enumerate().map(|(i, hn)| hn * ((i + 1) as f64 * t).cos()).sum();
            (e - spread).exp()
        })
        .collect();
    let total = m.pow(n as u32);
    let parts: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|first| {
            let mut z = 0.0;
            let mut tr = 0.0;
            let inner = total / m;
            let mut idx = vec![0usize; n];
            for rest in 0..inner {
                idx[0] = first;
                let mut r = rest;
                for slot in idx.iter_mut().skip(1) {
                    *slot = r % m;
                    r /= m;
                }
                let mut v: f64 = idx.iter().map(|i| weight[*i]).product();
                for a in 0..n {
                    for b in a + 1..n {
                        // |e^{iθ_a} − e^{iθ_b}|² = 2 − 2cos(θ_a − θ_b)
                        v *= 2.0 - 2.0 * (angles[idx[a]] - angles[idx[b]]).cos();
                    }
                }
                z += v;
                tr += v * idx.iter().map(|i| angles[*i].cos()).sum::<f64>();
            }
            (z, tr)
        })
        .collect();
    // Summed in index order so results do not depend on thread scheduling.
    let (z, tr) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (z / total as f64, tr / total as f64)
}

/// Toeplitz determinant of `I_{j−k}(J)` against the eigenvalue-angle
/// integral, for `N ≤ n_max`.
pub fn check_heine_szego(n_max: usize, j_grid: &[f64]) -> Result<IdentityReport> {
    heine_szego(n_max, j_grid, None)
}

fn heine_szego(n_max: usize, j_grid: &[f64], perturb: Option<Perturbation>) -> Result<IdentityReport> {
    if n_max == 0 || n_max > MAX_BRUTE_FORCE_RANK {
        return Err(invalid(format!("brute force needs 1 <= N <= {MAX_BRUTE_FORCE_RANK}, got {n_max}")));
    }
    if j_grid.is_empty() {
        return Err(invalid("empty parameter grid"));
    }
    let mut rows = Vec::new();
    for n in 1..=n_max {
        for &j in j_grid {
            check_j(j)?;
            let sym = CosineSymbol::new(0.0, vec![j])?;
            let lhs = perturbed(KernelTable::build(&sym, Grid::Continuum, n - 1, n), perturb).toeplitz_det(n);
            let (rhs, _) = weyl_integral(n, &[j])?;
            rows.push(Comparison {
                point: GridPoint::new(1, n, vec![j]),
                lhs,
                rhs,
                tol: HEINE_SZEGO_TOL,
            });
        }
    }
    Ok(report(IdentityId::HeineSzego, ToleranceKind::Relative, HEINE_SZEGO_TOL, rows))
}

/// `G^×_N / G_N` on the infinite nearest-neighbour chain (impurity shift 1)
/// and `⟨Tr U⟩` of the GWW integral at the same `J`, by brute force.
pub fn impurity_ratio_vs_trace(n: usize, j: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(invalid("the impurity ratio needs N >= 2"));
    }
    let spec = ChainSpec::xx(Lattice::Infinite, j)?;
    let s = psi0(n, Lattice::Infinite)?;
    let x = chain::psi_impurity(n, Lattice::Infinite, 1)?;
    let ratio = chain::amplitude(&spec, &x, &s)? / chain::amplitude(&spec, &s, &s)?;
    let (_, trace) = weyl_integral(n, &[j])?;
    Ok((ratio.value(), trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FermionCase {
    pub n: usize,
    pub lattice: Lattice,
    pub j: Vec<f64>,
}

impl FermionCase {
    pub fn new(n: usize, lattice: Lattice, j: Vec<f64>) -> Self {
        FermionCase { n, lattice, j }
    }
}

/// Frozen parameter grids for the full audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub prop_bessel_nu_max: usize,
    pub prop_bessel_k: Vec<usize>,
    pub prop_bessel_j: Vec<f64>,
    /// `(K, N, J)` for the determinant identity.
    pub det_points: Vec<(usize, usize, f64)>,
    pub spin_factorization_n: Vec<usize>,
    pub spin_factorization_j: Vec<f64>,
    pub fermion_cases: Vec<FermionCase>,
    pub heine_szego_n_max: usize,
    pub heine_szego_j: Vec<f64>,
}

impl Default for Manifest {
    fn default() -> Self {
        let js = [0.0, 0.5, 1.0, 2.0, 5.0];
        let mut det_points = Vec::new();
        for k in 2..=6usize {
            for n in 1..=MAX_DET_SIZE / k {
                for &j in &js {
                    det_points.push((k, n, j));
                }
            }
        }
        let mut fermion_cases = Vec::new();
        for j in [vec![0.0], vec![1.0], vec![2.5], vec![1.0, 0.8], vec![0.5, 2.0], vec![1.0, 0.8, 0.5]] {
            for n in [1usize, 2, 4, 8] {
                fermion_cases.push(FermionCase::new(n, Lattice::Infinite, j.clone()));
                fermion_cases.push(FermionCase::new(n, Lattice::Finite(64), j.clone()));
            }
        }
        Manifest {
            version: MANIFEST_VERSION.to_string(),
            prop_bessel_nu_max: 32,
            prop_bessel_k: vec![2, 3, 4, 5],
            prop_bessel_j: js.to_vec(),
            det_points,
            spin_factorization_n: vec![1, 2, 3, 4, 6, 8],
            spin_factorization_j: vec![0.0, 0.5, 1.0, 2.0],
            fermion_cases,
            heine_szego_n_max: 3,
            heine_szego_j: vec![0.5, 1.0, 2.0],
        }
    }
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(invalid(format!(
                "manifest version {} is not {MANIFEST_VERSION}",
                self.version
            )));
        }
        if self.prop_bessel_k.is_empty()
            || self.prop_bessel_j.is_empty()
            || self.det_points.is_empty()
            || self.spin_factorization_n.is_empty()
            || self.spin_factorization_j.is_empty()
            || self.fermion_cases.is_empty()
            || self.heine_szego_j.is_empty()
        {
            return Err(invalid("empty parameter grid"));
        }
        Ok(())
    }
}

/// Runs every identity family of `manifest`, optionally with a perturbed
/// kernel entry on the left-hand sides.
pub fn run_manifest(manifest: &Manifest, perturb: Option<Perturbation>) -> Result<Vec<IdentityReport>> {
    manifest.validate()?;
    let (k2, general): (Vec<_>, Vec<_>) = manifest.det_points.iter().partition(|p| p.0 == 2);
    let mut k2_report = det_identity(&k2, perturb)?;
    let printed = two_by_two_rows(&manifest.prop_bessel_j, perturb)?;
    merge(&mut k2_report, printed);
    let spin = spin_factorization(&manifest.spin_factorization_n, &manifest.spin_factorization_j, perturb)?;
    merge(&mut k2_report, spin);
    let mut out = vec![prop_bessel(
        manifest.prop_bessel_nu_max,
        &manifest.prop_bessel_j,
        &manifest.prop_bessel_k,
        perturb,
    )?];
    out.push(k2_report);
    if !general.is_empty() {
        out.push(det_identity(&general, perturb)?);
    }
    out.push(fermion_equivalence(&manifest.fermion_cases, None, perturb)?);
    out.push(heine_szego(manifest.heine_szego_n_max, &manifest.heine_szego_j, perturb)?);
    Ok(out)
}

fn two_by_two_rows(j_grid: &[f64], perturb: Option<Perturbation>) -> Result<IdentityReport> {
    let rows = j_grid.iter().map(|j| two_by_two(*j, perturb)).collect::<Result<Vec<_>>>()?;
    Ok(report(IdentityId::DetIdK2, ToleranceKind::Relative, DET_ID_TOL, rows))
}

/// Folds `extra` into `base`; pass/fail is already decided per point.
fn merge(base: &mut IdentityReport, extra: IdentityReport) {
    base.parameter_grid.extend(extra.parameter_grid);
    base.max_abs_error = base.max_abs_error.max(extra.max_abs_error);
    base.max_rel_error = base.max_rel_error.max(extra.max_rel_error);
    base.failures.extend(extra.failures);
    base.passed = base.failures.is_empty();
}

/// Fixed-width summary, one line per report, followed by any failures.
pub fn render_table(reports: &[IdentityReport]) -> String {
    let mut s = format!(
        "{:<20} {:>6} {:>12} {:>12} {:>9} {:>6}\n",
        "identity", "points", "max_abs", "max_rel", "tol", "status"
    );
    for r in reports {
        s.push_str(&format!(
            "{:<20} {:>6} {:>12.3e} {:>12.3e} {:>9.0e} {:>6}\n",
            r.identity_id.to_string(),
            r.parameter_grid.len(),
            r.max_abs_error,
            r.max_rel_error,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        ));
    }
    for r in reports {
        for f in &r.failures {
            s.push_str(&format!(
                "  {} at {}: lhs = {}, rhs = {}, error = {:.3e}\n",
                r.identity_id, f.point, f.lhs, f.rhs, f.error
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prop_bessel_examples() {
        let g = generalized_bessel_orders(4, &kth_neighbour(2, 1.0).unwrap()).unwrap();
        assert!(g[1].abs() < 1e-15);
        assert!((g[4] - bessel_i_scaled(2, 1.0).unwrap()).abs() < 1e-15);
        let g = generalized_bessel_orders(0, &kth_neighbour(3, 0.0).unwrap()).unwrap();
        assert_eq!(g[0], 1.0);
        for k in 2..=5 {
            let r = check_prop_bessel(32, &[0.0, 0.5, 1.0, 2.0, 5.0], k).unwrap();
            assert!(r.passed, "{}", render_table(&[r]));
        }
    }

    #[test]
    fn det_identity_examples() {
        let r = check_det_identity(3, 4, 2.0).unwrap();
        assert!(r.passed && r.max_rel_error < 1e-9, "{r:?}");
        for k in 1..=6 {
            let r = check_det_identity(k, 2, 0.0).unwrap();
            assert_eq!(r.max_rel_error, 0.0);
        }
        let c = two_by_two(1.3, None).unwrap();
        assert!(c.abs_error() < 1e-15);
        assert!(check_det_identity(5, 5, 1.0).is_err());
        assert!(check_det_identity(2, 2, 6.0).is_err());
    }

    #[test]
    fn spin_route_agrees_with_bessel_route() {
        let r = check_spin_factorization(&[1, 2, 3, 5], &[0.5, 1.0, 3.0]).unwrap();
        assert!(r.passed, "{}", render_table(&[r]));
    }

    #[test]
    fn fermion_examples() {
        let r = check_fermion_equivalence(2, 4, Lattice::Finite(64), &[1.0, 0.8]).unwrap();
        assert!(r.passed && r.max_rel_error < 1e-6, "{r:?}");
        let r = check_fermion_equivalence(1, 4, Lattice::Infinite, &[1.7]).unwrap();
        assert!(r.max_rel_error < 1e-13);
        let r = check_fermion_equivalence(2, 3, Lattice::Infinite, &[0.0, 0.0]).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert!(check_fermion_equivalence(1, 4, Lattice::Finite(12), &[1.0]).is_err());
        assert!(check_fermion_equivalence(2, 4, Lattice::Infinite, &[1.0]).is_err());
    }

    #[test]
    fn heine_szego_small_cases() {
        // N = 2, J = 1 expands to I_0² − I_1².
        let (z, _) = weyl_integral(2, &[1.0]).unwrap();
        let i0 = bessel_i_scaled(0, 1.0).unwrap() * 1f64.exp();
        let i1 = bessel_i_scaled(1, 1.0).unwrap() * 1f64.exp();
        assert!((z.value() - (i0 * i0 - i1 * i1)).abs() < 1e-13);
        let (z, _) = weyl_integral(1, &[1.0]).unwrap();
        assert!((z.value() - i0).abs() < 1e-14);
        let r = check_heine_szego(3, &[0.5, 1.0, 2.0]).unwrap();
        assert!(r.passed, "{}", render_table(&[r]));
        assert!(weyl_integral(4, &[1.0]).is_err());
    }

    #[test]
    fn impurity_ratio_is_trace_of_u() {
        for n in 2..=3 {
            for j in [0.5, 1.0, 2.0] {
                let (ratio, trace) = impurity_ratio_vs_trace(n, j).unwrap();
                assert!((ratio - trace).abs() < 1e-10 * trace, "n={n} j={j} {ratio} {trace}");
            }
        }
    }

    #[test]
    fn manifest_passes_and_perturbation_fails() {
        let m = Manifest::default();
        let reports = run_manifest(&m, None).unwrap();
        assert_eq!(reports.len(), 5);
        assert!(reports.iter().all(|r| r.passed), "{}", render_table(&reports));
        let bad = run_manifest(&m, Some(Perturbation { offset: 0, delta: 1e-6 })).unwrap();
        assert!(bad.iter().all(|r| !r.passed), "{}", render_table(&bad));
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let m = Manifest::default();
        let s = serde_json::to_string(&m).unwrap();
        let back: Manifest = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let mut empty = m.clone();
        empty.det_points.clear();
        assert!(run_manifest(&empty, None).is_err());
    }
}
