//! Thermal Loschmidt amplitudes of XX-type chains.
//!
//! All couplings are dimensionless (`J_n = J̃_n / T̃`). The single-particle
//! kernel is normalized so that `g_{j,k} = δ_{j,k}` at zero coupling, and
//! N-particle amplitudes are determinants of that kernel.
//!
//! On a finite ring the N-particle amplitude of the spin chain uses momenta
//! `k_q = 2π(q + τ)/L` with `τ = ((N − 1) mod 2)/2`: moving a down spin across
//! the boundary is a fermion hop that picks up `(−1)^{N−1}` under the
//! Jordan–Wigner map. Fermionic models (see [`fermion`]) use `τ = 0`.

pub mod ed;
pub mod fermion;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{CosineSymbol, Grid, KernelTable};
use crate::logvalue::LogValue;
use crate::specfun::CouplingVector;

pub use ed::{ed_oracle_echo, ed_oracle_echo_with, Statistics};
pub use fermion::{fermion_amplitude, DispersionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lattice {
    Finite(usize),
    Infinite,
}

impl Lattice {
    pub fn size(&self) -> Option<usize> {
        match self {
            Lattice::Finite(l) => Some(*l),
            Lattice::Infinite => None,
        }
    }
}

impl std::fmt::Display for Lattice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lattice::Finite(l) => write!(f, "{l}"),
            Lattice::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    lattice: Lattice,
    couplings: CouplingVector,
}

impl ChainSpec {
    pub fn new(lattice: Lattice, couplings: CouplingVector) -> Result<Self> {
        if let Lattice::Finite(l) = lattice {
            if l <= 2 * couplings.k() {
                return Err(invalid(format!(
                    "ring of L = {l} sites needs L > 2K = {}",
                    2 * couplings.k()
                )));
            }
        }
        Ok(ChainSpec { lattice, couplings })
    }

    /// Nearest-neighbour XX chain.
    pub fn xx(lattice: Lattice, j: f64) -> Result<Self> {
        Self::new(lattice, CouplingVector::single(j)?)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn couplings(&self) -> &CouplingVector {
        &self.couplings
    }

    pub fn k(&self) -> usize {
        self.couplings.k()
    }

    /// Same chain with all couplings multiplied by `factor`.
    pub fn with_couplings_scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.lattice, self.couplings.scaled(factor)?)
    }

    pub(crate) fn symbol(&self) -> CosineSymbol {
        CosineSymbol {
            offset: 0.0,
            harmonics: self.couplings.harmonics(),
        }
    }

    /// Momentum grid seen by an `n`-particle amplitude.
    pub(crate) fn grid(&self, n: usize) -> Grid {
        match self.lattice {
            Lattice::Infinite => Grid::Continuum,
            Lattice::Finite(l) => Grid::Periodic {
                l,
                half_shift: n % 2 == 0,
            },
        }
    }

    pub(crate) fn kernel(&self, n: usize, dmax: usize) -> KernelTable {
        KernelTable::build(&self.symbol(), self.grid(n), dmax, n)
    }
}

/// Ordered positions of the down spins (equivalently, fermions).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupationState {
    sites: Vec<usize>,
}

impl OccupationState {
    pub fn new(sites: Vec<usize>, lattice: Lattice) -> Result<Self> {
        if sites.is_empty() {
            return Err(invalid("a state needs at least one particle"));
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("sites must be strictly increasing"));
        }
        if let Lattice::Finite(l) = lattice {
            if sites.len() >= l {
                return Err(invalid(format!("N = {} must be below L = {l}", sites.len())));
            }
            if sites.iter().any(|s| *s >= l) {
                return Err(invalid(format!("sites must lie in [0, {l})")));
            }
        }
        Ok(OccupationState { sites })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    /// Cyclic translation by `offset` on a ring of `l` sites.
    pub fn translated(&self, offset: usize, l: usize) -> Result<Self> {
        let mut s: Vec<usize> = self.sites.iter().map(|x| (x + offset) % l).collect();
        s.sort_unstable();
        Self::new(s, Lattice::Finite(l))
    }

    fn positions(&self) -> Vec<i64> {
        self.sites.iter().map(|s| *s as i64).collect()
    }
}

/// `{0, 1, …, N−1}`.
pub fn psi0(n: usize, lattice: Lattice) -> Result<OccupationState> {
    if n == 0 {
        return Err(invalid("N must be positive"));
    }
    OccupationState::new((0..n).collect(), lattice)
}

/// `{0, …, N−2} ∪ {N−1+p}`: the last particle displaced by `p ≥ 1`.
pub fn psi_impurity(n: usize, lattice: Lattice, p: usize) -> Result<OccupationState> {
    if n < 2 {
        return Err(invalid("an impurity state needs N >= 2"));
    }
    if p == 0 {
        return Err(invalid("impurity shift p must be >= 1"));
    }
    if let Lattice::Finite(l) = lattice {
        if n - 1 + p >= l {
            return Err(invalid(format!("shift p = {p} puts site {} outside L = {l}", n - 1 + p)));
        }
    }
    let mut sites: Vec<usize> = (0..n - 1).collect();
    sites.push(n - 1 + p);
    OccupationState::new(sites, lattice)
}

fn check_site(spec: &ChainSpec, s: usize) -> Result<()> {
    match spec.lattice {
        Lattice::Finite(l) if s >= l => Err(invalid(format!("site {s} outside ring of {l}"))),
        _ => Ok(()),
    }
}

/// Single-particle kernel `g_{j,k}`, with `g_{j,k} = δ_{j,k}` at zero coupling.
pub fn propagator(spec: &ChainSpec, j: usize, k: usize) -> Result<f64> {
    check_site(spec, j)?;
    check_site(spec, k)?;
    let d = j.abs_diff(k);
    Ok(spec.kernel(1, d).value(d as i64).value())
}

fn check_state(spec: &ChainSpec, s: &OccupationState) -> Result<()> {
    OccupationState::new(s.sites.clone(), spec.lattice).map(|_| ())
}

/// `det[g_{x_r, y_s}]` with `x = out`, `y = inn`.
pub fn amplitude(spec: &ChainSpec, inn: &OccupationState, out: &OccupationState) -> Result<LogValue> {
    if inn.n() != out.n() {
        return Err(Error::SizeMismatch {
            left: inn.n(),
            right: out.n(),
        });
    }
    check_state(spec, inn)?;
    check_state(spec, out)?;
    let rows = out.positions();
    let cols = inn.positions();
    let dmax = rows
        .iter()
        .flat_map(|r| cols.iter().map(move |c| (r - c).unsigned_abs() as usize))
        .max()
        .unwrap_or(0);
    Ok(spec.kernel(inn.n(), dmax).det(&rows, &cols))
}

/// `G_1 = g_{0,0}`.
pub fn single_particle_return(spec: &ChainSpec) -> LogValue {
    spec.kernel(1, 0).value(0)
}

/// `L̂_N = |G_N / G_1|²`.
pub fn normalized_echo(spec: &ChainSpec, n: usize) -> Result<LogValue> {
    let s = psi0(n, spec.lattice)?;
    echo_ratio(spec, &s, &s)
}

/// `L̂^×_N = |G^×_N / G_1|²` with the impurity displaced by `p`.
pub fn impurity_echo(spec: &ChainSpec, n: usize, p: usize) -> Result<LogValue> {
    let inn = psi_impurity(n, spec.lattice, p)?;
    let out = psi0(n, spec.lattice)?;
    echo_ratio(spec, &inn, &out)
}

fn echo_ratio(spec: &ChainSpec, inn: &OccupationState, out: &OccupationState) -> Result<LogValue> {
    let g1 = single_particle_return(spec);
    if g1.is_zero() {
        return Err(Error::ZeroNormalization("G_1 vanishes".into()));
    }
    let g = amplitude(spec, inn, out)?;
    Ok((g / g1).abs().powi(2))
}
