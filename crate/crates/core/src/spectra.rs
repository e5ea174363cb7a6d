//! Dressed states of the undriven system in the one- and two-excitation
//! manifolds, and closed-form blockade conditions.
//!
//! Energies are measured from `N` times the common atom/cavity frequency
//! (zero detuning), in MHz.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigen-decomposition of one excitation manifold in the collective basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpectrum {
    pub excitation_number: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Labels of the collective basis the eigenvectors are expressed in.
    pub basis_labels: Vec<String>,
    /// `eigenvectors[k][b]` is the amplitude of basis state `b` in the
    /// eigenvector of `eigenvalues[k]`. The largest-magnitude component is
    /// non-negative.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Block of the undriven Hamiltonian in the collective basis
/// `{|gg,N⟩, |+,N-1⟩, |ee,N-2⟩, |−,N-1⟩}` (states that do not exist for the
/// given `N` are omitted).
pub fn manifold_block(g0: f64, u_vdw: f64, n_excitation: usize) -> Result<(DMatrix<f64>, Vec<String>)> {
    let s2 = std::f64::consts::SQRT_2;
    match n_excitation {
        1 => {
            // |gg,1>, |+,0>, |-,0>
            let m = DMatrix::from_row_slice(3, 3, &[
                0.0, s2 * g0, 0.0,
                s2 * g0, 0.0, 0.0,
                0.0, 0.0, 0.0,
            ]);
            Ok((m, vec!["|gg,1>".into(), "|+,0>".into(), "|-,0>".into()]))
        }
        2 => {
            // |gg,2>, |+,1>, |ee,0>, |-,1>
            let m = DMatrix::from_row_slice(4, 4, &[
                0.0, 2.0 * g0, 0.0, 0.0,
                2.0 * g0, 0.0, s2 * g0, 0.0,
                0.0, s2 * g0, u_vdw, 0.0,
                0.0, 0.0, 0.0, 0.0,
            ]);
            Ok((
                m,
                vec!["|gg,2>".into(), "|+,1>".into(), "|ee,0>".into(), "|-,1>".into()],
            ))
        }
        n => Err(Error::UnsupportedExcitation(n)),
    }
}

/// Diagonalizes the symmetric (bright) block of manifold `N`: for `N = 1`
/// the pair `{|gg,1⟩, |+,0⟩}` coupled by `√2 g₀`; for `N = 2` the triple
/// `{|gg,2⟩, |+,1⟩, |ee,0⟩}` with couplings `2g₀`, `√2 g₀` and diagonal
/// `(0, 0, U)`. The antisymmetric state `|−,N-1⟩` is checked to be
/// decoupled and left out.
pub fn manifold_spectrum(g0: f64, u_vdw: f64, n_excitation: usize) -> Result<ManifoldSpectrum> {
    let (full, labels) = manifold_block(g0, u_vdw, n_excitation)?;
    let dark = full.nrows() - 1;
    for b in 0..dark {
        if full[(dark, b)] != 0.0 || full[(b, dark)] != 0.0 {
            return Err(Error::InvalidParams(
                "antisymmetric state couples to the symmetric sector".into(),
            ));
        }
    }
    let block = full.view((0, 0), (dark, dark)).into_owned();
    let eig = block.symmetric_eigen();
    let mut order: Vec<usize> = (0..dark).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = order
        .iter()
        .map(|&k| fix_phase(eig.eigenvectors.column(k).into_owned()))
        .collect();
    Ok(ManifoldSpectrum {
        excitation_number: n_excitation,
        eigenvalues,
        basis_labels: labels[..dark].to_vec(),
        eigenvectors,
    })
}

fn fix_phase(v: DVector<f64>) -> Vec<f64> {
    let v = v.normalize();
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
    let sign = if v[imax] < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| x * sign).collect()
}

/// Δ_A = -U/3: the two paths to |gg,2⟩ through |ee,0⟩ and |gg,1⟩ interfere
/// destructively when their detunings are opposite, `U + 2Δ = -Δ`.
pub fn magic_detuning(u_vdw: f64) -> f64 {
    -u_vdw / 3.0
}

/// Δ_A = -U/2: two-photon resonance of |ee,0⟩ (`2Δ + U = 0`).
pub fn antiblockade_detuning(u_vdw: f64) -> f64 {
    -u_vdw / 2.0
}

/// U = 3√2 g₀, where the magic detuning coincides with the lower
/// one-excitation dressed state at -√2 g₀.
pub fn overlap_vdw(g0: f64) -> f64 {
    3.0 * std::f64::consts::SQRT_2 * g0
}
