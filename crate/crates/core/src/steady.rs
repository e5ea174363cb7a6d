//! Steady state of the Liouvillian by shifted inverse power iteration, the
//! photon-statistics observables, and an explicit Runge-Kutta integrator
//! used as an independent check of the solver.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::MatMut;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eigenvalues, Level, SpaceSpec};
use crate::model::Liouvillian;
use crate::C64;

/// Default inverse-power shift (MHz).
pub const DEFAULT_SHIFT: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Mean photon number below which g2 and g3 are reported as undefined.
pub const G2_FLOOR: f64 = 1e-12;
/// Oracle step bound: `dt * ‖L‖∞` must stay below this.
pub const ORACLE_STABILITY_BOUND: f64 = 0.1;

const SHIFT_RETRIES: usize = 3;
/// Extra inverse-power iterations after the residual target is met. The
/// residual bounds the error only up to the spectral gap, which the dark
/// antisymmetric states make as small as 2γ.
const POLISH_ITERATIONS: usize = 2;

/// Hermitian, unit-trace, positive semidefinite state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    /// Wraps a matrix after checking Hermiticity (1e-10), trace (1e-10) and
    /// positivity (smallest eigenvalue >= -1e-8).
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        let rho = Self { mat };
        rho.check()?;
        Ok(rho)
    }

    pub fn from_matrix_unchecked(mat: DMatrix<C64>) -> Self {
        Self { mat }
    }

    pub fn check(&self) -> Result<()> {
        if self.mat.nrows() != self.mat.ncols() {
            return Err(Error::InvalidState("matrix is not square".into()));
        }
        let herm = self.hermiticity_defect();
        if herm > 1e-10 {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = self.mat.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min = self.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn pure(state: &DVector<C64>) -> Result<Self> {
        let psi = state.normalize();
        Self::new(&psi * psi.adjoint())
    }

    /// `|gg, n⟩⟨gg, n|`.
    pub fn fock(spec: SpaceSpec, n: usize) -> Self {
        let mut m = DMatrix::zeros(spec.dim(), spec.dim());
        let i = spec.index(n, Level::G, Level::G);
        m[(i, i)] = C64::new(1.0, 0.0);
        Self { mat: m }
    }

    /// Coherent cavity state with amplitude `alpha`, atoms in `|gg⟩`,
    /// truncated to the space and renormalized.
    pub fn coherent(spec: SpaceSpec, alpha: C64) -> Result<Self> {
        let mut psi = DVector::zeros(spec.dim());
        let mut coeff = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
        for n in 0..spec.n_max() {
            if n > 0 {
                coeff *= alpha / (n as f64).sqrt();
            }
            psi[spec.index(n, Level::G, Level::G)] = coeff;
        }
        Self::pure(&psi)
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

    /// Column-stacked vectorization.
    pub fn to_vec(&self) -> Vec<C64> {
        self.mat.as_slice().to_vec()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Ascending eigenvalues of the Hermitian part.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.mat)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// `½ ‖ρ - σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        trace_norm(&(&self.mat - &other.mat)) / 2.0
    }

    /// Diagonal of the reduced cavity state, `P(n)` for `n < n_max`.
    pub fn photon_distribution(&self, spec: SpaceSpec) -> Vec<f64> {
        (0..spec.n_max())
            .map(|n| {
                (0..4)
                    .map(|s| self.mat[(n * 4 + s, n * 4 + s)].re)
                    .sum()
            })
            .collect()
    }
}

/// Trace norm of a Hermitian matrix (sum of absolute eigenvalues).
pub fn trace_norm(m: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum()
}

/// Photon statistics of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// ⟨a†a⟩.
    pub mean_photon: f64,
    /// g⁽²⁾(0); `None` when ⟨a†a⟩ is below [`G2_FLOOR`].
    pub g2: Option<f64>,
    /// g⁽³⁾(0); `None` when ⟨a†a⟩ is below [`G2_FLOOR`].
    pub g3: Option<f64>,
}

/// `⟨a†a⟩`, `g2 = ⟨a†²a²⟩/⟨a†a⟩²`, `g3 = ⟨a†³a³⟩/⟨a†a⟩³`.
///
/// The normally ordered moments are diagonal in the Fock basis with
/// eigenvalue `n!/(n-k)!`, so only the diagonal of `ρ` is read. Fails if any
/// trace has an imaginary part above 1e-9.
pub fn observables(rho: &DensityMatrix, spec: SpaceSpec) -> Result<Observables> {
    if rho.dim() != spec.dim() {
        return Err(Error::InvalidState(format!(
            "state dimension {} does not match space dimension {}",
            rho.dim(),
            spec.dim()
        )));
    }
    let mut moments = [C64::new(0.0, 0.0); 3];
    for i in 0..spec.dim() {
        let n = (i / 4) as f64;
        let p = rho.matrix()[(i, i)];
        moments[0] += p * n;
        moments[1] += p * (n * (n - 1.0));
        moments[2] += p * (n * (n - 1.0) * (n - 2.0));
    }
    for (k, m) in moments.iter().enumerate() {
        if m.im.abs() > 1e-9 {
            return Err(Error::InvalidState(format!(
                "moment of order {} has imaginary part {:e}",
                k + 1,
                m.im
            )));
        }
    }
    let mean = moments[0].re;
    let (g2, g3) = if mean > G2_FLOOR {
        (
            Some(moments[1].re / (mean * mean)),
            Some(moments[2].re / (mean * mean * mean)),
        )
    } else {
        (None, None)
    };
    Ok(Observables {
        mean_photon: mean,
        g2,
        g3,
    })
}

#[derive(Debug, Clone)]
pub struct SteadyOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub shift: f64,
    /// Starting vector (column-stacked); defaults to the maximally mixed state.
    pub start: Option<Vec<C64>>,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            shift: DEFAULT_SHIFT,
            start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadySolution {
    pub rho: DensityMatrix,
    /// `‖L vec(ρ)‖ / ‖vec(ρ)‖` of the returned state.
    pub residual: f64,
    pub iterations: usize,
    /// Shift actually used (after any retries).
    pub shift: f64,
}

fn sequential_faer() {
    static INIT: Once = Once::new();
    INIT.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn relative_residual(l: &Liouvillian, v: &[C64]) -> f64 {
    vec_norm(&l.apply(v)) / vec_norm(v)
}

/// Reshape, divide by the trace, Hermitize.
fn to_density(v: &[C64], d: usize) -> Option<DMatrix<C64>> {
    let m = DMatrix::from_column_slice(d, d, v);
    let tr = m.trace();
    if tr.norm() == 0.0 || !tr.is_finite() {
        return None;
    }
    let m = m / tr;
    let mut h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let tr = h.trace();
    h /= tr;
    Some(h)
}

/// Steady state with default shift: `‖L vec(ρ)‖/‖vec(ρ)‖ < tol`.
pub fn steady_state(l: &Liouvillian, tol: f64, max_iter: usize) -> Result<DensityMatrix> {
    let opts = SteadyOptions {
        tol,
        max_iter,
        ..SteadyOptions::default()
    };
    Ok(solve_steady(l, &opts)?.rho)
}

/// Inverse power iteration on `L - σI`, which converges to the eigenvector of
/// the eigenvalue closest to `σ`, i.e. the zero mode. The sparse LU
/// factorization is computed once per shift and reused for every iteration.
/// A singular or non-finite factorization is retried with `σ` scaled by 10.
pub fn solve_steady(l: &Liouvillian, opts: &SteadyOptions) -> Result<SteadySolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParams(format!("tol must be > 0, got {}", opts.tol)));
    }
    sequential_faer();
    let d = l.hilbert_dim();
    let n = d * d;
    let start: Vec<C64> = match &opts.start {
        Some(s) if s.len() == n => s.clone(),
        Some(s) => {
            return Err(Error::InvalidParams(format!(
                "start vector has length {}, expected {n}",
                s.len()
            )))
        }
        None => {
            let mut v = vec![C64::new(0.0, 0.0); n];
            for i in 0..d {
                v[i + d * i] = C64::new(1.0 / d as f64, 0.0);
            }
            v
        }
    };

    let mut shift = opts.shift;
    let mut last_msg = String::new();
    for _ in 0..=SHIFT_RETRIES {
        let a = l.matrix().to_faer_shifted(C64::new(-shift, 0.0))?;
        let lu = match a.sp_lu() {
            Ok(lu) => lu,
            Err(e) => {
                last_msg = format!("{e:?}");
                shift *= 10.0;
                continue;
            }
        };
        let mut x = start.clone();
        let nrm = vec_norm(&x);
        x.iter_mut().for_each(|z| *z /= nrm);
        let mut residual = f64::INFINITY;
        let mut singular = false;
        let mut converged_at: Option<usize> = None;
        for it in 1..=opts.max_iter + POLISH_ITERATIONS {
            lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
            let nrm = vec_norm(&x);
            if !nrm.is_finite() || nrm == 0.0 {
                singular = true;
                last_msg = "non-finite solve".into();
                break;
            }
            x.iter_mut().for_each(|z| *z /= nrm);
            if converged_at.is_none() && it > opts.max_iter {
                break;
            }
            let Some(rho) = to_density(&x, d) else {
                continue;
            };
            residual = relative_residual(l, rho.as_slice());
            if residual < opts.tol && converged_at.is_none() {
                converged_at = Some(it);
            }
            if converged_at.is_some_and(|c| it >= c + POLISH_ITERATIONS && residual < opts.tol) {
                return Ok(SteadySolution {
                    rho: DensityMatrix::from_matrix_unchecked(rho),
                    residual,
                    iterations: converged_at.unwrap(),
                    shift,
                });
            }
        }
        if !singular {
            return Err(Error::NonConvergence {
                iterations: opts.max_iter,
                residual,
            });
        }
        shift *= 10.0;
    }
    Err(Error::SingularFactorization {
        shift,
        msg: last_msg,
    })
}

/// Integrates `vec(dρ/dt) = L vec(ρ)` with classical fourth-order Runge-Kutta
/// at a fixed step no larger than `dt`. Requires `dt * ‖L‖∞ < 0.1` and checks
/// that the trace drifts by less than 1e-8.
pub fn time_evolve_oracle(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "need dt > 0 and t_final >= 0, got dt = {dt}, t_final = {t_final}"
        )));
    }
    let scale = l.matrix().norm_inf();
    let product = dt * scale;
    if product >= ORACLE_STABILITY_BOUND {
        return Err(Error::Stability {
            dt,
            scale,
            product,
            bound: ORACLE_STABILITY_BOUND,
        });
    }
    let d = l.hilbert_dim();
    if rho0.dim() != d {
        return Err(Error::InvalidState("initial state dimension mismatch".into()));
    }
    let steps = (t_final / dt).ceil() as usize;
    let mut y = rho0.to_vec();
    if steps > 0 {
        let h = t_final / steps as f64;
        let m = l.matrix();
        let n = y.len();
        let zero = C64::new(0.0, 0.0);
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
            (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
        for _ in 0..steps {
            m.mul_vec_into(&y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + k1[i] * (h / 2.0);
            }
            m.mul_vec_into(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + k2[i] * (h / 2.0);
            }
            m.mul_vec_into(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + k3[i] * h;
            }
            m.mul_vec_into(&tmp, &mut k4);
            for i in 0..n {
                y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
        }
    }
    let out = DMatrix::from_column_slice(d, d, &y);
    let drift = (out.trace() - rho0.trace()).norm();
    if drift >= 1e-8 {
        return Err(Error::InvalidState(format!("trace drift {drift:e} during integration")));
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}
