//! Free fermions with an even dispersion `ε(k) = Σ_{n=0}^{K} c_n cos(nk)`.

use serde::{Deserialize, Serialize};

use super::{psi0, Lattice};
use crate::error::{invalid, Result};
use crate::kernel::{CosineSymbol, Grid, KernelTable};
use crate::logvalue::LogValue;
use crate::specfun::CouplingVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionModel {
    coefficients: Vec<f64>,
}

impl DispersionModel {
    /// `coefficients[n]` multiplies `cos(nk)`; entry 0 is the constant.
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(invalid("dispersion needs finite coefficients c_0..c_K"));
        }
        Ok(DispersionModel { coefficients })
    }

    /// Dispersion of the Jordan–Wigner image of the K-neighbour chain:
    /// `ε(k) = −Σ_n (−1)^n (J_n/n) cos(nk)`.
    pub fn from_couplings(j: &CouplingVector) -> Self {
        let mut c = vec![0.0];
        c.extend(j.harmonics().iter().enumerate().map(|(i, h)| {
            let n = i + 1;
            if n % 2 == 0 {
                -h
            } else {
                *h
            }
        }));
        DispersionModel { coefficients: c }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn epsilon(&self, k: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(n, c)| c * (n as f64 * k).cos())
            .sum()
    }

    fn boltzmann_symbol(&self, beta: f64) -> CosineSymbol {
        CosineSymbol {
            offset: -beta * self.coefficients[0],
            harmonics: self.coefficients[1..].iter().map(|c| -beta * c).collect(),
        }
    }
}

/// `⟨ψ₀|e^{−β H}|ψ₀⟩` for `N` adjacent fermions: the Slater determinant of
/// `(1/L) Σ_q e^{ik(j−j′)} e^{−β ε_k}` with `k = 2πq/L` (an integral when `L`
/// is infinite).
pub fn fermion_amplitude(model: &DispersionModel, n: usize, lattice: Lattice, beta: f64) -> Result<LogValue> {
    if !beta.is_finite() {
        return Err(invalid("beta must be finite"));
    }
    let state = psi0(n, lattice)?;
    let grid = match lattice {
        Lattice::Infinite => Grid::Continuum,
        Lattice::Finite(l) => Grid::Periodic { l, half_shift: false },
    };
    let sym = model.boltzmann_symbol(beta);
    let table = KernelTable::build(&sym, grid, n.saturating_sub(1), n);
    Ok(table.toeplitz_det(state.n()))
}
