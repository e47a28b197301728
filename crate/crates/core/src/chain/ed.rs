//! Exact diagonalization in a fixed-magnetization sector.
//!
//! `H = −Σ_n (J_n / 2n) Σ_j (σ⁺_j σ⁻_{j+n} + h.c.)` on a ring, with
//! `J_n` already divided by the temperature. Returns `⟨out|e^{−H}|inn⟩`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{ChainSpec, Lattice, OccupationState};
use crate::error::{invalid, Error, Result};

/// Largest sector dimension the oracle accepts.
pub const MAX_SECTOR_DIM: usize = 10_000;
pub const MAX_SITES: usize = 14;

/// Exchange statistics of the hopping term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistics {
    /// Plain spin flips: every hop has amplitude `−J_n/2n`.
    Spin,
    /// Jordan–Wigner strings: a hop between sites `a < b` carries `(−1)` per
    /// occupied site strictly between them in the linear order, and hops
    /// across the boundary carry `(−1)^{N−1}`, the twist of the determinant.
    JordanWigner,
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Spin-statistics oracle.
pub fn ed_oracle_echo(spec: &ChainSpec, inn: &OccupationState, out: &OccupationState) -> Result<f64> {
    ed_oracle_echo_with(spec, inn, out, Statistics::Spin)
}

pub fn ed_oracle_echo_with(
    spec: &ChainSpec,
    inn: &OccupationState,
    out: &OccupationState,
    stats: Statistics,
) -> Result<f64> {
    let l = match spec.lattice() {
        Lattice::Finite(l) => l,
        Lattice::Infinite => return Err(invalid("exact diagonalization needs a finite ring")),
    };
    if l > MAX_SITES {
        return Err(Error::CostGuard {
            what: "ring size L",
            value: l,
            limit: MAX_SITES,
        });
    }
    let n = inn.n();
    if out.n() != n {
        return Err(Error::SizeMismatch { left: n, right: out.n() });
    }
    let dim = binomial(l, n);
    if dim > MAX_SECTOR_DIM {
        return Err(Error::CostGuard {
            what: "sector dimension",
            value: dim,
            limit: MAX_SECTOR_DIM,
        });
    }
    let mask = |s: &OccupationState| s.sites().iter().fold(0u32, |m, x| m | (1 << x));
    let basis: Vec<u32> = (0u32..(1 << l)).filter(|b| b.count_ones() as usize == n).collect();
    let index = |b: u32| basis.binary_search(&b).expect("state in sector");
    let i_in = index(mask(inn));
    let i_out = index(mask(out));

    if spec.couplings().is_zero() {
        return Ok(if i_in == i_out { 1.0 } else { 0.0 });
    }

    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (col, &b) in basis.iter().enumerate() {
        for (ni, jn) in spec.couplings().as_slice().iter().enumerate() {
            if *jn == 0.0 {
                continue;
            }
            let hop = ni + 1;
            let amp = -jn / (2.0 * hop as f64);
            for j in 0..l {
                let t = (j + hop) % l;
                // Move a particle j -> t; the reverse direction is covered by
                // the Hermitian transpose when the loop reaches the target state.
                if b & (1 << j) == 0 || b & (1 << t) != 0 {
                    continue;
                }
                let nb = (b & !(1 << j)) | (1 << t);
                let sign = match stats {
                    Statistics::Spin => 1.0,
                    Statistics::JordanWigner => {
                        let (lo, hi) = (j.min(t), j.max(t));
                        let between = (lo + 1..hi).filter(|s| b & (1 << s) != 0).count();
                        let boundary = if j + hop >= l { n - 1 } else { 0 };
                        if (between + boundary) % 2 == 1 {
                            -1.0
                        } else {
                            1.0
                        }
                    }
                };
                let row = index(nb);
                h[(row, col)] += amp * sign;
                h[(col, row)] += amp * sign;
            }
        }
    }
    let eig = SymmetricEigen::new(h);
    let shift = eig.eigenvalues.min();
    let sum: f64 = (0..dim)
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            (shift - eig.eigenvalues[k]).exp() * v[i_out] * v[i_in]
        })
        .sum();
    Ok(sum * (-shift).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{amplitude, psi0, psi_impurity};
    use crate::specfun::CouplingVector;

    #[test]
    fn single_magnon_closed_form() {
        for &j in &[0.3, 1.0, 2.5] {
            let spec = ChainSpec::xx(Lattice::Finite(4), j).unwrap();
            let s = psi0(1, spec.lattice()).unwrap();
            let got = ed_oracle_echo(&spec, &s, &s).unwrap();
            let want: f64 = (0..4)
                .map(|q| (j * (std::f64::consts::FRAC_PI_2 * q as f64).cos()).exp())
                .sum::<f64>()
                / 4.0;
            assert!((got - want).abs() < 1e-14 * want);
        }
    }

    #[test]
    fn zero_coupling_overlaps() {
        let spec = ChainSpec::xx(Lattice::Finite(8), 0.0).unwrap();
        let a = psi0(3, spec.lattice()).unwrap();
        let b = psi_impurity(3, spec.lattice(), 1).unwrap();
        assert_eq!(ed_oracle_echo(&spec, &a, &a).unwrap(), 1.0);
        assert_eq!(ed_oracle_echo(&spec, &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn cost_guards() {
        let spec = ChainSpec::xx(Lattice::Finite(16), 1.0).unwrap();
        let s = psi0(2, spec.lattice()).unwrap();
        assert!(matches!(ed_oracle_echo(&spec, &s, &s), Err(Error::CostGuard { .. })));
        let inf = ChainSpec::xx(Lattice::Infinite, 1.0).unwrap();
        let s = psi0(2, Lattice::Infinite).unwrap();
        assert!(ed_oracle_echo(&inf, &s, &s).is_err());
    }

    #[test]
    fn nearest_neighbour_matches_determinant() {
        let spec = ChainSpec::xx(Lattice::Finite(10), 1.5).unwrap();
        let s = psi0(3, spec.lattice()).unwrap();
        let ed = ed_oracle_echo(&spec, &s, &s).unwrap();
        let det = amplitude(&spec, &s, &s).unwrap().value();
        assert!(((ed - det) / ed).abs() < 1e-10, "{ed} {det}");
        for n in 1..=4 {
            let spec = ChainSpec::xx(Lattice::Finite(8), 2.0).unwrap();
            let a = psi0(n, spec.lattice()).unwrap();
            let ed = ed_oracle_echo(&spec, &a, &a).unwrap();
            let det = amplitude(&spec, &a, &a).unwrap().value();
            assert!(((ed - det) / ed).abs() < 1e-10, "n={n} {ed} {det}");
        }
    }

    #[test]
    fn impurity_amplitude_matches_determinant() {
        let spec = ChainSpec::xx(Lattice::Finite(12), 1.0).unwrap();
        for n in 2..=4 {
            let a = psi0(n, spec.lattice()).unwrap();
            let b = psi_impurity(n, spec.lattice(), 2).unwrap();
            let ed = ed_oracle_echo(&spec, &b, &a).unwrap();
            let det = amplitude(&spec, &b, &a).unwrap().value();
            assert!(((ed - det) / ed).abs() < 1e-10, "n={n} {ed} {det}");
        }
    }

    #[test]
    fn fermionic_statistics_match_determinant_for_longer_range() {
        for l in [8usize, 10] {
            for n in 1..=4 {
                let spec = ChainSpec::new(Lattice::Finite(l), CouplingVector::new(vec![1.0, 1.0]).unwrap()).unwrap();
                let a = psi0(n, spec.lattice()).unwrap();
                let ed = ed_oracle_echo_with(&spec, &a, &a, Statistics::JordanWigner).unwrap();
                let det = amplitude(&spec, &a, &a).unwrap().value();
                assert!(((ed - det) / ed).abs() < 1e-10, "l={l} n={n} {ed} {det}");
            }
        }
    }
}
