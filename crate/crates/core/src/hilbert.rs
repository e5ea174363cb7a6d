//! Truncated composite space: cavity Fock levels ⊗ atom 1 ⊗ atom 2.
//!
//! Basis ordering is fixed everywhere in the crate:
//! `index = fock * 4 + atom1 * 2 + atom2`, with atomic code `g = 0`, `e = 1`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Number of atoms in the model. Fixed.
pub const N_ATOMS: usize = 2;
/// Dimension of the two-atom space.
pub const ATOM_DIM: usize = 4;

/// Single-atom level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    G = 0,
    E = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceSpec {
    n_max: usize,
}

impl SpaceSpec {
    /// Cavity truncated to Fock levels `0..n_max`. Requires `n_max >= 3` so
    /// that third-order correlations are representable.
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 3 {
            return Err(Error::InvalidSpace(format!(
                "n_max must be at least 3, got {n_max}"
            )));
        }
        Ok(Self { n_max })
    }

    /// Like [`SpaceSpec::new`] but accepts `n_max = 2`, for small analytic
    /// checks where third-order statistics are not needed.
    pub fn toy(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::InvalidSpace(format!(
                "n_max must be at least 2, got {n_max}"
            )));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn n_atoms(&self) -> usize {
        N_ATOMS
    }

    /// Composite dimension `4 * n_max`.
    pub fn dim(&self) -> usize {
        ATOM_DIM * self.n_max
    }

    pub fn index(&self, fock: usize, atom1: Level, atom2: Level) -> usize {
        debug_assert!(fock < self.n_max);
        fock * ATOM_DIM + (atom1 as usize) * 2 + atom2 as usize
    }

    /// Inverse of [`SpaceSpec::index`].
    pub fn decompose(&self, index: usize) -> (usize, Level, Level) {
        let fock = index / ATOM_DIM;
        let level = |bit: usize| if bit == 0 { Level::G } else { Level::E };
        (fock, level((index >> 1) & 1), level(index & 1))
    }

    pub fn basis_vector(&self, fock: usize, atom1: Level, atom2: Level) -> DVector<C64> {
        let mut v = DVector::zeros(self.dim());
        v[self.index(fock, atom1, atom2)] = C64::new(1.0, 0.0);
        v
    }

    /// Human-readable label of a basis state, e.g. `|eg,1>`.
    pub fn label(&self, index: usize) -> String {
        let (n, a1, a2) = self.decompose(index);
        let c = |l: Level| if l == Level::G { 'g' } else { 'e' };
        format!("|{}{},{}>", c(a1), c(a2), n)
    }
}

/// Complex square matrix on the composite space.
///
/// Stored dense; at the largest truncation used (`n_max = 30`) the matrices
/// are 120 x 120.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(mat: DMatrix<C64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "operator must be square");
        Self { mat }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn dagger(&self) -> Self {
        Self::from_matrix(self.mat.adjoint())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_matrix(self.mat.scale(factor))
    }

    pub fn scale_complex(&self, factor: C64) -> Self {
        Self::from_matrix(&self.mat * factor)
    }

    /// Entrywise Hermiticity check, `|A_ij - conj(A_ji)| <= tol`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator::from_matrix(&self.mat * &other.mat - &other.mat * &self.mat)
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.mat * v
    }

    /// `<u|A|v>`.
    pub fn element(&self, u: &DVector<C64>, v: &DVector<C64>) -> C64 {
        u.dotc(&(&self.mat * v))
    }

    /// Ascending eigenvalues of the Hermitian part.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.mat)
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_zero(&self) -> bool {
        self.mat.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    /// Nonzero entries as `(row, col, value)`.
    pub fn nonzeros(&self) -> Vec<(usize, usize, C64)> {
        let n = self.dim();
        let mut out = Vec::new();
        // column-major walk matches nalgebra storage
        for j in 0..n {
            for i in 0..n {
                let z = self.mat[(i, j)];
                if z.re != 0.0 || z.im != 0.0 {
                    out.push((i, j, z));
                }
            }
        }
        out
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::from_matrix(&self.mat + &rhs.mat)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator::from_matrix(self.mat + rhs.mat)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.mat += &rhs.mat;
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::from_matrix(&self.mat - &rhs.mat)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator::from_matrix(self.mat - rhs.mat)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator::from_matrix(&self.mat * &rhs.mat)
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator::from_matrix(self.mat * rhs.mat)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<f64> for Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(rhs)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(-1.0)
    }
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let n = m.nrows();
    let h = faer::Mat::<C64>::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    h.self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("Hermitian eigenvalue solver converges")
}

/// `A ⊗ B` for dense complex matrices.
fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

fn single_atom_lowering() -> DMatrix<C64> {
    // sigma_- = |g><e| with g = 0, e = 1
    let mut s = DMatrix::zeros(2, 2);
    s[(Level::G as usize, Level::E as usize)] = C64::new(1.0, 0.0);
    s
}

fn fock_annihilation(n_max: usize) -> DMatrix<C64> {
    let mut a = DMatrix::zeros(n_max, n_max);
    for m in 0..n_max - 1 {
        a[(m, m + 1)] = C64::new(((m + 1) as f64).sqrt(), 0.0);
    }
    a
}

/// Cavity annihilation operator `a ⊗ I ⊗ I`.
pub fn annihilation(spec: SpaceSpec) -> Operator {
    let id2 = DMatrix::<C64>::identity(2, 2);
    Operator::from_matrix(kron(&kron(&fock_annihilation(spec.n_max()), &id2), &id2))
}

pub fn creation(spec: SpaceSpec) -> Operator {
    annihilation(spec).dagger()
}

/// Photon number `a†a`.
pub fn number(spec: SpaceSpec) -> Operator {
    let a = annihilation(spec);
    &a.dagger() * &a
}

/// Lowering operator of atom `j` (1-based).
pub fn sigma_minus(spec: SpaceSpec, j: usize) -> Result<Operator> {
    let id_f = DMatrix::<C64>::identity(spec.n_max(), spec.n_max());
    let id2 = DMatrix::<C64>::identity(2, 2);
    let s = single_atom_lowering();
    let m = match j {
        1 => kron(&kron(&id_f, &s), &id2),
        2 => kron(&kron(&id_f, &id2), &s),
        _ => return Err(Error::InvalidAtomIndex(j)),
    };
    Ok(Operator::from_matrix(m))
}

pub fn sigma_plus(spec: SpaceSpec, j: usize) -> Result<Operator> {
    Ok(sigma_minus(spec, j)?.dagger())
}

/// Excited-state projector `σ₊σ₋` of atom `j`.
pub fn excitation(spec: SpaceSpec, j: usize) -> Result<Operator> {
    let sm = sigma_minus(spec, j)?;
    Ok(&sm.dagger() * &sm)
}

/// Collective spin operators of the atom pair.
#[derive(Debug, Clone)]
pub struct CollectiveOps {
    pub j_plus: Operator,
    pub j_minus: Operator,
    /// Half-sum of the single-atom Pauli-z operators, eigenvalues -1, 0, +1.
    pub j_z: Operator,
}

/// `J₊ = (σ₊⁽¹⁾ + σ₊⁽²⁾)/√2`, `J₋ = J₊†`, `J_z = (σ_z⁽¹⁾ + σ_z⁽²⁾)/2 = n₁ + n₂ - 1`.
pub fn collective_ops(spec: SpaceSpec) -> CollectiveOps {
    let sp1 = sigma_plus(spec, 1).expect("atom 1");
    let sp2 = sigma_plus(spec, 2).expect("atom 2");
    let j_plus = (&sp1 + &sp2).scale(std::f64::consts::FRAC_1_SQRT_2);
    let j_minus = j_plus.dagger();
    let n1 = excitation(spec, 1).expect("atom 1");
    let n2 = excitation(spec, 2).expect("atom 2");
    let j_z = &(&n1 + &n2) - &Operator::identity(spec.dim());
    CollectiveOps {
        j_plus,
        j_minus,
        j_z,
    }
}

/// Symmetric single-excitation state `|+,n> = (|eg,n> + |ge,n>)/√2`.
pub fn symmetric_state(spec: SpaceSpec, fock: usize) -> DVector<C64> {
    (spec.basis_vector(fock, Level::E, Level::G) + spec.basis_vector(fock, Level::G, Level::E))
        .scale(std::f64::consts::FRAC_1_SQRT_2)
}

/// Antisymmetric single-excitation state `|-,n> = (|eg,n> - |ge,n>)/√2`.
pub fn antisymmetric_state(spec: SpaceSpec, fock: usize) -> DVector<C64> {
    (spec.basis_vector(fock, Level::E, Level::G) - spec.basis_vector(fock, Level::G, Level::E))
        .scale(std::f64::consts::FRAC_1_SQRT_2)
}
