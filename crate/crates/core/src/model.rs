//! System parameters, Hamiltonians, jump operators and the Liouvillian.
//!
//! Rates and detunings are plain frequencies in MHz (ħ = 1); times are in µs.
//! Density matrices are vectorized by stacking columns,
//! `vec(ρ)[i + D*j] = ρ[i, j]`, so `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{self, Entry};
use crate::error::{Error, Result};
use crate::hilbert::{self, Operator, SpaceSpec};
use crate::sparse::CsrMatrix;
use crate::C64;

fn default_dissipator_count() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Atom-cavity coupling g₀ (MHz), identical for both atoms.
    pub g0: f64,
    /// Drive Rabi frequency η (MHz), applied to both atoms in phase.
    pub eta: f64,
    /// Cavity decay parameter κ (MHz); the field decays at 2κ.
    pub kappa: f64,
    /// Atomic decay parameter γ (MHz); each atom decays at 2γ.
    pub gamma: f64,
    /// Van der Waals shift of |ee⟩ (MHz).
    pub u_vdw: f64,
    /// Atomic detuning Δ_A = ω_A - ω_d (MHz).
    pub delta_a: f64,
    /// Cavity detuning Δ_cav = ω_cav - ω_d (MHz).
    pub delta_cav: f64,
    /// Cavity Fock truncation (levels 0..n_max).
    pub n_max: usize,
    /// Number of identical cavity dissipators. 1 is the physical model; 2
    /// reproduces a literal per-atom sum over the cavity term.
    #[serde(default = "default_dissipator_count")]
    pub cavity_dissipator_count: usize,
}

/// Names accepted by [`SystemParams::get`] / [`SystemParams::set`] and in
/// config files, in serialization order.
pub const PARAM_NAMES: [&str; 9] = [
    "g0",
    "eta",
    "kappa",
    "gamma",
    "u_vdw",
    "delta_a",
    "delta_cav",
    "n_max",
    "cavity_dissipator_count",
];

impl Default for SystemParams {
    fn default() -> Self {
        Self::default_paper()
    }
}

impl SystemParams {
    /// g₀ = 5, η = 1, κ = 3, γ = 0.005 MHz, cavity truncated at 30 levels,
    /// resonant atoms and cavity, no vdW shift.
    pub fn default_paper() -> Self {
        Self {
            g0: 5.0,
            eta: 1.0,
            kappa: 3.0,
            gamma: 0.005,
            u_vdw: 0.0,
            delta_a: 0.0,
            delta_cav: 0.0,
            n_max: 30,
            cavity_dissipator_count: 1,
        }
    }

    /// Sets Δ_A and Δ_cav together.
    pub fn with_detuning(mut self, delta: f64) -> Self {
        self.delta_a = delta;
        self.delta_cav = delta;
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("g0", self.g0),
            ("eta", self.eta),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("u_vdw", self.u_vdw),
            ("delta_a", self.delta_a),
            ("delta_cav", self.delta_cav),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite, got {v}")));
            }
        }
        // g0 = 0 is accepted for the bare-cavity limit
        let nonneg = [
            ("g0", self.g0),
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("u_vdw", self.u_vdw),
        ];
        for (name, v) in nonneg {
            if v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if self.cavity_dissipator_count == 0 {
            return Err(Error::InvalidParams(
                "cavity_dissipator_count must be >= 1".into(),
            ));
        }
        SpaceSpec::new(self.n_max)?;
        Ok(())
    }

    pub fn space(&self) -> Result<SpaceSpec> {
        SpaceSpec::new(self.n_max)
    }

    /// Largest frequency scale of the problem, used to bound time steps.
    pub fn max_rate(&self) -> f64 {
        [
            self.g0,
            self.kappa,
            self.gamma,
            self.eta,
            self.delta_a.abs(),
            self.delta_cav.abs(),
            self.u_vdw,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Every frequency multiplied by `factor` (time units scale inversely).
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            g0: self.g0 * factor,
            eta: self.eta * factor,
            kappa: self.kappa * factor,
            gamma: self.gamma * factor,
            u_vdw: self.u_vdw * factor,
            delta_a: self.delta_a * factor,
            delta_cav: self.delta_cav * factor,
            ..self.clone()
        }
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "g0" => self.g0,
            "eta" => self.eta,
            "kappa" => self.kappa,
            "gamma" => self.gamma,
            "u_vdw" => self.u_vdw,
            "delta_a" => self.delta_a,
            "delta_cav" => self.delta_cav,
            "n_max" => self.n_max as f64,
            "cavity_dissipator_count" => self.cavity_dissipator_count as f64,
            _ => return Err(Error::UnknownKey(name.to_string())),
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidParams(format!("{name} must be a non-negative integer, got {v}")))
            }
        };
        match name {
            "g0" => self.g0 = value,
            "eta" => self.eta = value,
            "kappa" => self.kappa = value,
            "gamma" => self.gamma = value,
            "u_vdw" => self.u_vdw = value,
            "delta_a" => self.delta_a = value,
            "delta_cav" => self.delta_cav = value,
            "n_max" => self.n_max = as_count(value)?,
            "cavity_dissipator_count" => self.cavity_dissipator_count = as_count(value)?,
            _ => return Err(Error::UnknownKey(name.to_string())),
        }
        Ok(())
    }

    /// Applies one `key = value` entry. Returns `Ok(false)` if the key is not
    /// a parameter name, leaving the decision to the caller.
    pub fn apply_entry(&mut self, entry: &Entry) -> Result<bool> {
        if !PARAM_NAMES.contains(&entry.key.as_str()) {
            return Ok(false);
        }
        if entry.key == "n_max" || entry.key == "cavity_dissipator_count" {
            let v = config::parse_usize(entry)?;
            self.set(&entry.key, v as f64)?;
        } else {
            let v = config::parse_f64(entry)?;
            self.set(&entry.key, v)?;
        }
        Ok(true)
    }

    /// Parses a `key = value` file. Missing keys keep their
    /// [`SystemParams::default_paper`] values; unknown keys are an error.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut p = Self::default_paper();
        let mut seen = std::collections::HashSet::new();
        for entry in config::parse_entries(text)? {
            if !seen.insert(entry.key.clone()) {
                return Err(Error::Config {
                    line: entry.line,
                    msg: format!("duplicate key `{}`", entry.key),
                });
            }
            if !p.apply_entry(&entry)? {
                return Err(Error::UnknownKey(entry.key));
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        self.write_kv(&mut s);
        s
    }

    pub(crate) fn write_kv(&self, s: &mut String) {
        for name in PARAM_NAMES {
            let v = self.get(name).expect("known name");
            if name == "n_max" || name == "cavity_dissipator_count" {
                writeln!(s, "{name} = {}", v as usize).unwrap();
            } else {
                writeln!(s, "{name} = {}", config::fmt_f64(v)).unwrap();
            }
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }
}

/// Dissipation channel of a quantum jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Cavity,
    Atom1,
    Atom2,
}

impl Channel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Cavity => "cavity",
            Channel::Atom1 => "atom1",
            Channel::Atom2 => "atom2",
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cavity" => Ok(Channel::Cavity),
            "atom1" => Ok(Channel::Atom1),
            "atom2" => Ok(Channel::Atom2),
            _ => Err(Error::InvalidParams(format!("unknown channel `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub channel: Channel,
    pub op: Operator,
}

/// `H = Δ_cav a†a + Δ_A (n₁+n₂) + g₀ Σⱼ (a†σ₋ʲ + aσ₊ʲ) + U n₁n₂ + η Σⱼ (σ₊ʲ + σ₋ʲ)`.
pub fn hamiltonian(p: &SystemParams) -> Result<Operator> {
    p.validate()?;
    let spec = p.space()?;
    Ok(hamiltonian_in(spec, p))
}

/// Same as [`hamiltonian`] on an explicit space, without parameter checks.
pub fn hamiltonian_in(spec: SpaceSpec, p: &SystemParams) -> Operator {
    let a = hilbert::annihilation(spec);
    let ad = a.dagger();
    let n_cav = &ad * &a;
    let mut h = n_cav.scale(p.delta_cav);
    let mut n_atoms = Vec::with_capacity(2);
    for j in 1..=2 {
        let sm = hilbert::sigma_minus(spec, j).expect("valid atom");
        let sp = sm.dagger();
        let nj = &sp * &sm;
        h += &nj.scale(p.delta_a);
        h += &(&(&ad * &sm) + &(&a * &sp)).scale(p.g0);
        h += &(&sp + &sm).scale(p.eta);
        n_atoms.push(nj);
    }
    h += &(&n_atoms[0] * &n_atoms[1]).scale(p.u_vdw);
    h
}

/// Collective form
/// `H′ = Δ_cav a†a + Δ_A J_z + √2 g₀ (aJ₊ + a†J₋) + √2 η (J₊ + J₋) + (U/2)(1 + J_z) J_z`.
///
/// With `J_z = n₁ + n₂ - 1` this equals `hamiltonian(p) - Δ_A·I`.
pub fn collective_hamiltonian(p: &SystemParams) -> Result<Operator> {
    p.validate()?;
    let spec = p.space()?;
    let ops = hilbert::collective_ops(spec);
    let a = hilbert::annihilation(spec);
    let ad = a.dagger();
    let id = Operator::identity(spec.dim());
    let s2 = std::f64::consts::SQRT_2;
    let mut h = (&ad * &a).scale(p.delta_cav);
    h += &ops.j_z.scale(p.delta_a);
    h += &(&(&a * &ops.j_plus) + &(&ad * &ops.j_minus)).scale(s2 * p.g0);
    h += &(&ops.j_plus + &ops.j_minus).scale(s2 * p.eta);
    h += &(&(&id + &ops.j_z) * &ops.j_z).scale(p.u_vdw / 2.0);
    Ok(h)
}

/// Jump operators `√(2κ)·a` (times the dissipator count) and `√(2γ)·σ₋ʲ`.
pub fn jump_operators(p: &SystemParams) -> Result<Vec<JumpOperator>> {
    p.validate()?;
    let spec = p.space()?;
    Ok(jump_operators_in(spec, p))
}

pub fn jump_operators_in(spec: SpaceSpec, p: &SystemParams) -> Vec<JumpOperator> {
    let cavity_rate = 2.0 * p.kappa * p.cavity_dissipator_count as f64;
    let atom_amp = (2.0 * p.gamma).sqrt();
    vec![
        JumpOperator {
            channel: Channel::Cavity,
            op: hilbert::annihilation(spec).scale(cavity_rate.sqrt()),
        },
        JumpOperator {
            channel: Channel::Atom1,
            op: hilbert::sigma_minus(spec, 1).expect("atom 1").scale(atom_amp),
        },
        JumpOperator {
            channel: Channel::Atom2,
            op: hilbert::sigma_minus(spec, 2).expect("atom 2").scale(atom_amp),
        },
    ]
}

/// Dense evaluation of `-i[H,ρ] + Σ_c (cρc† - ½{c†c, ρ})`.
pub fn lindblad_rhs(h: &Operator, jumps: &[JumpOperator], rho: &DMatrix<C64>) -> DMatrix<C64> {
    let i = C64::new(0.0, 1.0);
    let hm = h.matrix();
    let mut out = (hm * rho - rho * hm) * (-i);
    for j in jumps {
        let c = j.op.matrix();
        let cd = c.adjoint();
        let cdc = &cd * c;
        out += c * rho * &cd - (&cdc * rho + rho * &cdc) * C64::new(0.5, 0.0);
    }
    out
}

/// Sparse superoperator `L` with `vec(dρ/dt) = L vec(ρ)`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    matrix: CsrMatrix,
}

impl Liouvillian {
    /// `L = I⊗K + K̄⊗I + Σ_c c̄⊗c` with `K = -iH - ½ Σ_c c†c`, which expands to
    /// `-i(I⊗H - Hᵀ⊗I) + Σ_c [c̄⊗c - ½ I⊗c†c - ½ (c†c)ᵀ⊗I]` for Hermitian `H`.
    pub fn from_parts(h: &Operator, jumps: &[JumpOperator]) -> Self {
        let d = h.dim();
        let i = C64::new(0.0, 1.0);
        let mut k = h.scale_complex(-i);
        for j in jumps {
            let cdc = &j.op.dagger() * &j.op;
            k += &cdc.scale(-0.5);
        }
        let k_nz = k.nonzeros();
        let mut triplets = Vec::with_capacity(2 * d * k_nz.len());
        for col in 0..d {
            // I ⊗ K acts on the row index of ρ within each column block
            for &(r, c, v) in &k_nz {
                triplets.push((r + d * col, c + d * col, v));
            }
        }
        for &(r, c, v) in &k_nz {
            // K̄ ⊗ I acts on the column index of ρ
            for row in 0..d {
                triplets.push((row + d * r, row + d * c, v.conj()));
            }
        }
        for j in jumps {
            let nz = j.op.nonzeros();
            for &(r1, c1, v1) in &nz {
                for &(r2, c2, v2) in &nz {
                    triplets.push((r2 + d * r1, c2 + d * c1, v1.conj() * v2));
                }
            }
        }
        Self {
            dim: d,
            matrix: CsrMatrix::from_triplets(d * d, d * d, triplets),
        }
    }

    /// Hilbert-space dimension `D` (the superoperator is `D² x D²`).
    pub fn hilbert_dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn apply(&self, vec_rho: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(vec_rho)
    }

    /// Applies `L` to a density matrix and returns `dρ/dt`.
    pub fn apply_matrix(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let v = self.matrix.mul_vec(rho.as_slice());
        DMatrix::from_column_slice(self.dim, self.dim, &v)
    }

    /// `‖vec(I)ᴴ L‖ / max|L_ij|`; zero for an exactly trace-preserving map.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut id = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            id[i + d * i] = C64::new(1.0, 0.0);
        }
        let row = self.matrix.left_mul_vec(&id);
        let norm = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        norm / self.matrix.max_abs().max(f64::MIN_POSITIVE)
    }
}

/// Liouvillian of the full model.
pub fn liouvillian(p: &SystemParams) -> Result<Liouvillian> {
    let h = hamiltonian(p)?;
    let jumps = jump_operators(p)?;
    Ok(Liouvillian::from_parts(&h, &jumps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Level::{E, G};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> SystemParams {
        SystemParams {
            u_vdw: 13.0,
            delta_a: -2.5,
            delta_cav: 1.5,
            n_max: 4,
            ..SystemParams::default_paper()
        }
    }

    fn sorted_eigs(op: &Operator) -> Vec<f64> {
        let mut e: Vec<f64> = op
            .matrix()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    fn random_density(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        let m = DMatrix::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let h = &m + m.adjoint();
        let tr = h.trace();
        // unit trace, Hermitian (not necessarily positive)
        let mut h = h;
        for i in 0..d {
            h[(i, i)] -= tr / C64::new(d as f64, 0.0);
            h[(i, i)] += C64::new(1.0 / d as f64, 0.0);
        }
        h
    }

    #[test]
    fn default_preset_values() {
        let p = SystemParams::default_paper();
        assert_eq!((p.g0, p.eta, p.kappa, p.gamma, p.n_max), (5.0, 1.0, 3.0, 0.005, 30));
        assert_eq!(p.delta_a, p.delta_cav);
        assert_eq!(p.cavity_dissipator_count, 1);
        p.validate().unwrap();
    }

    #[test]
    fn validation_errors() {
        let mut p = small();
        p.kappa = 0.0;
        assert!(p.validate().is_err());
        let mut p = small();
        p.gamma = -1.0;
        assert!(p.validate().is_err());
        let mut p = small();
        p.n_max = 2;
        assert!(p.validate().is_err());
        let mut p = small();
        p.eta = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn matrix_elements() {
        let p = small();
        let s = p.space().unwrap();
        let h = hamiltonian(&p).unwrap();
        let ee0 = s.index(0, E, E);
        assert!((h.get(ee0, ee0).re - (2.0 * p.delta_a + p.u_vdw)).abs() < 1e-14);
        let gg1 = s.index(1, G, G);
        let eg0 = s.index(0, E, G);
        assert!((h.get(gg1, eg0).re - p.g0).abs() < 1e-14);
        assert!(h.is_hermitian(1e-12));
    }

    #[test]
    fn undriven_resonant_spectrum_bottom() {
        let p = SystemParams {
            eta: 0.0,
            ..SystemParams::default_paper()
        };
        let e = sorted_eigs(&hamiltonian(&p).unwrap());
        // lowest levels come from the Fock ladder; check the one-excitation
        // dressed pair and the dark states at zero
        let target = -std::f64::consts::SQRT_2 * 5.0;
        assert!(e.iter().any(|x| (x - target).abs() < 1e-9));
        assert!(e.iter().filter(|x| x.abs() < 1e-9).count() >= 2);
    }

    #[test]
    fn collective_form_is_identity_shift() {
        for p in [small(), SystemParams { u_vdw: 0.0, delta_a: 3.0, ..small() }] {
            let h = hamiltonian(&p).unwrap();
            let hc = collective_hamiltonian(&p).unwrap();
            let diff = &hc - &h;
            let expected = Operator::identity(h.dim()).scale(-p.delta_a);
            assert!((diff.matrix() - expected.matrix()).norm() < 1e-12);
            let e1 = sorted_eigs(&h);
            let e2 = sorted_eigs(&hc);
            let dev = e1
                .iter()
                .zip(&e2)
                .map(|(a, b)| (a - (b + p.delta_a)).abs())
                .fold(0.0, f64::max);
            assert!(dev < 1e-10, "{dev}");
        }
    }

    #[test]
    fn undriven_collective_conserves_excitations() {
        let p = SystemParams { eta: 0.0, ..small() };
        let s = p.space().unwrap();
        let hc = collective_hamiltonian(&p).unwrap();
        let total = &(&hilbert::number(s) + &hilbert::excitation(s, 1).unwrap())
            + &hilbert::excitation(s, 2).unwrap();
        assert!(hc.commutator(&total).max_abs() < 1e-12);
    }

    #[test]
    fn vdw_only_touches_doubly_excited_diagonal() {
        let p = small();
        let s = p.space().unwrap();
        let h0 = hamiltonian(&p).unwrap();
        let h1 = hamiltonian(&SystemParams { u_vdw: p.u_vdw + 2.75, ..p.clone() }).unwrap();
        let pair = &hilbert::excitation(s, 1).unwrap() * &hilbert::excitation(s, 2).unwrap();
        assert!(((&h1 - &h0).matrix() - pair.scale(2.75).matrix()).norm() < 1e-12);
    }

    #[test]
    fn jump_operator_prefactors() {
        let p = small();
        let jumps = jump_operators(&p).unwrap();
        assert_eq!(jumps.len(), 3);
        let s = p.space().unwrap();
        let one = s.basis_vector(1, G, G);
        let zero = s.basis_vector(0, G, G);
        let amp = jumps[0].op.element(&zero, &one).re;
        assert!((amp - 6f64.sqrt()).abs() < 1e-14);
        assert!((amp - 2.449).abs() < 1e-3);
        let p0 = SystemParams { gamma: 0.0, ..small() };
        let jumps = jump_operators(&p0).unwrap();
        assert!(jumps[1].op.is_zero() && jumps[2].op.is_zero());
    }

    #[test]
    fn lindblad_map_is_traceless() {
        let p = small();
        let h = hamiltonian(&p).unwrap();
        let jumps = jump_operators(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let rho = random_density(h.dim(), &mut rng);
            let d = lindblad_rhs(&h, &jumps, &rho);
            assert!(d.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn superoperator_matches_dense_map() {
        let p = small();
        let h = hamiltonian(&p).unwrap();
        let jumps = jump_operators(&p).unwrap();
        let l = Liouvillian::from_parts(&h, &jumps);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let rho = random_density(h.dim(), &mut rng);
            let dense = lindblad_rhs(&h, &jumps, &rho);
            let sparse = l.apply_matrix(&rho);
            assert!((dense - sparse).norm() < 1e-11);
        }
    }

    #[test]
    fn trace_preservation() {
        let l = liouvillian(&small()).unwrap();
        assert!(l.trace_defect() < 1e-10);
        let l = liouvillian(&SystemParams { n_max: 10, u_vdw: 40.0, ..SystemParams::default_paper() }).unwrap();
        assert!(l.trace_defect() < 1e-10);
    }

    #[test]
    fn linear_in_dissipation_rates() {
        let base = small();
        let at = |kappa: f64, gamma: f64| {
            liouvillian(&SystemParams { kappa, gamma, ..base.clone() }).unwrap()
        };
        let l1 = at(1.0, 0.1);
        let l2 = at(2.0, 0.1);
        let l3 = at(3.0, 0.1);
        let g2 = at(1.0, 0.2);
        let g3 = at(1.0, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<C64> = (0..l1.matrix().ncols())
            .map(|_| C64::new(rng.random(), rng.random()))
            .collect();
        let v = |l: &Liouvillian| DVector::from_vec(l.apply(&x));
        assert!((v(&l3) - v(&l2) * C64::new(2.0, 0.0) + v(&l1)).norm() < 1e-10);
        assert!((v(&g3) - v(&g2) * C64::new(2.0, 0.0) + v(&l1)).norm() < 1e-10);
    }

    #[test]
    fn damped_cavity_coherence_eigenvalue() {
        // n_max = 2, no drive, no atomic decay: the |gg,0><gg,1| coherence
        // decays at kappa, the |gg,1><gg,1| population at 2 kappa
        let s = SpaceSpec::toy(2).unwrap();
        let p = SystemParams {
            eta: 0.0,
            gamma: 0.0,
            g0: 0.0,
            delta_a: 0.0,
            delta_cav: 0.0,
            n_max: 2,
            ..SystemParams::default_paper()
        };
        let h = hamiltonian_in(s, &p);
        let jumps = jump_operators_in(s, &p);
        let l = Liouvillian::from_parts(&h, &jumps);
        let d = s.dim();
        let g0 = s.index(0, G, G);
        let g1 = s.index(1, G, G);
        let check = |v: Vec<C64>, lambda: f64| {
            let lv = l.apply(&v);
            let dev = lv.iter().zip(&v).map(|(a, b)| (a - b * lambda).norm()).fold(0.0, f64::max);
            assert!(dev < 1e-12, "eigenvalue {lambda}: deviation {dev}");
        };
        // population difference |1><1| - |0><0| decays at 2 kappa
        let mut v = vec![C64::new(0.0, 0.0); d * d];
        v[g1 + d * g1] = C64::new(1.0, 0.0);
        v[g0 + d * g0] = C64::new(-1.0, 0.0);
        check(v, -2.0 * p.kappa);
        // coherence |0><1| decays at kappa
        let mut v = vec![C64::new(0.0, 0.0); d * d];
        v[g0 + d * g1] = C64::new(1.0, 0.0);
        check(v, -p.kappa);
        // vacuum is stationary
        let mut v = vec![C64::new(0.0, 0.0); d * d];
        v[g0 + d * g0] = C64::new(1.0, 0.0);
        check(v, 0.0);
    }

    #[test]
    fn kv_roundtrip_and_unknown_keys() {
        let p = small();
        let text = p.to_kv_string();
        let q = SystemParams::from_kv_str(&text).unwrap();
        assert_eq!(p, q);
        let err = SystemParams::from_kv_str("g0 = 5\nkapa = 3\n").unwrap_err();
        assert!(matches!(err, Error::UnknownKey(k) if k == "kapa"));
        let err = SystemParams::from_kv_str("g0 = 5\ng0 = 6\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
    }

    #[test]
    fn json_roundtrip_and_unknown_keys() {
        let p = small();
        let q = SystemParams::from_json_str(&p.to_json_string()).unwrap();
        assert_eq!(p, q);
        let mut v: serde_json::Value = serde_json::from_str(&p.to_json_string()).unwrap();
        v["kapa"] = serde_json::json!(3.0);
        assert!(SystemParams::from_json_str(&v.to_string()).is_err());
    }
}
