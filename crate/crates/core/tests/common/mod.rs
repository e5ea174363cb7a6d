#![allow(dead_code)]

use cqed_vdw::mcwf::{ClickRecord, TrajectoryEngine, TrajectoryOptions};
use cqed_vdw::model::{self, SystemParams};
use cqed_vdw::steady::{self, Observables, SteadyOptions};
use cqed_vdw::DensityMatrix;
use rayon::prelude::*;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Default parameters at truncation `n_max`, with `U` and a common detuning.
pub fn point(n_max: usize, u_vdw: f64, delta: f64) -> SystemParams {
    let mut p = SystemParams::default_paper().with_n_max(n_max);
    p.u_vdw = u_vdw;
    p.with_detuning(delta)
}

pub fn steady_rho(p: &SystemParams) -> DensityMatrix {
    let l = model::liouvillian(p).unwrap();
    steady::solve_steady(&l, &SteadyOptions::default()).unwrap().rho
}

pub fn steady_obs(p: &SystemParams) -> Observables {
    steady::observables(&steady_rho(p), p.space().unwrap()).unwrap()
}

/// Trajectories on streams `first..first + count` of `seed`, in order.
pub fn trajectories(
    p: &SystemParams,
    first: u64,
    count: u64,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> Vec<ClickRecord> {
    let engine = TrajectoryEngine::new(p).unwrap();
    (first..first + count)
        .into_par_iter()
        .map(|k| {
            let opts = TrajectoryOptions {
                trajectory: k,
                ..TrajectoryOptions::new(t_max, dt, seed)
            };
            engine.run(&opts).unwrap().record
        })
        .collect()
}

pub fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One-sample Kolmogorov-Smirnov test against the CDF `cdf`. Returns the
/// statistic and the asymptotic p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let mut d = 0.0_f64;
    for (i, &xi) in x.iter().enumerate() {
        let f = cdf(xi);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    (d, kolmogorov_q(lambda))
}

/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2k²λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as usize % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
