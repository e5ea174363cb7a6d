//! Quantum-jump (Monte Carlo wave-function) trajectories and burst
//! classification of the recorded cavity clicks.
//!
//! Between jumps the unnormalized state evolves under
//! `H_eff = H - (i/2) Σ_c c†c`, integrated with fixed-step RK4. A uniform
//! threshold `r` is drawn; the first step where `‖ψ‖² <= r` triggers a jump,
//! timed by linear interpolation of the norm inside the step. The channel is
//! chosen with probability proportional to `‖cψ‖²`.
//!
//! Each trajectory draws from its own ChaCha8 stream, selected by the
//! trajectory index under a shared master seed, so ensembles are identical
//! however they are scheduled.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Level, SpaceSpec};
use crate::model::{self, Channel, JumpOperator, SystemParams};
use crate::sparse::CsrMatrix;
use crate::C64;

/// Name of the generator recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = trajectory index";
/// Upper bound on `dt * max_rate`.
pub const STEP_BOUND: f64 = 0.05;

/// `dt = 0.001 / max(g0, κ, γ, η, |Δ_A|, |Δ_cav|, U)`.
pub fn default_dt(p: &SystemParams) -> f64 {
    0.001 / p.max_rate()
}

/// Burst window `1/(2κ)`, the cavity field correlation time.
pub fn default_window(p: &SystemParams) -> f64 {
    1.0 / (2.0 * p.kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub time: f64,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    /// Strictly increasing in time, all within `[0, t_max]`.
    pub clicks: Vec<Click>,
    pub t_max: f64,
    pub dt: f64,
    pub seed: u64,
    pub trajectory: u64,
    pub params: SystemParams,
}

impl ClickRecord {
    pub fn count(&self, channel: Channel) -> usize {
        self.clicks.iter().filter(|c| c.channel == channel).count()
    }

    pub fn cavity_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.clicks.iter().filter(|c| c.channel == Channel::Cavity).map(|c| c.time)
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryOptions {
    pub t_max: f64,
    pub dt: f64,
    pub seed: u64,
    /// Selects the RNG stream.
    pub trajectory: u64,
    /// Initial state; `|gg,0⟩` when `None`.
    pub initial: Option<DVector<C64>>,
    /// Accumulate the normalized projector `|ψ⟩⟨ψ|` every this many steps
    /// once `t >= sample_after`.
    pub sample_every: Option<usize>,
    pub sample_after: f64,
}

impl TrajectoryOptions {
    pub fn new(t_max: f64, dt: f64, seed: u64) -> Self {
        Self {
            t_max,
            dt,
            seed,
            trajectory: 0,
            initial: None,
            sample_every: None,
            sample_after: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutput {
    pub record: ClickRecord,
    /// Time-averaged `|ψ⟩⟨ψ|/⟨ψ|ψ⟩` when sampling was requested.
    pub mean_state: Option<DMatrix<C64>>,
    pub samples: usize,
}

/// Precomputed generator `-i H_eff` and jump operators for one parameter set.
#[derive(Debug, Clone)]
pub struct TrajectoryEngine {
    params: SystemParams,
    spec: SpaceSpec,
    generator: CsrMatrix,
    jumps: Vec<(Channel, CsrMatrix)>,
}

fn to_csr(op: &crate::hilbert::Operator) -> CsrMatrix {
    CsrMatrix::from_triplets(op.dim(), op.dim(), op.nonzeros())
}

impl TrajectoryEngine {
    pub fn new(p: &SystemParams) -> Result<Self> {
        let h = model::hamiltonian(p)?;
        let jumps = model::jump_operators(p)?;
        Ok(Self::from_parts(p, &h, &jumps))
    }

    fn from_parts(p: &SystemParams, h: &crate::hilbert::Operator, jumps: &[JumpOperator]) -> Self {
        let spec = p.space().expect("validated");
        let i = C64::new(0.0, 1.0);
        let mut heff = h.clone();
        for j in jumps {
            let cdc = &j.op.dagger() * &j.op;
            heff = &heff - &cdc.scale_complex(i * 0.5);
        }
        let generator = to_csr(&heff.scale_complex(-i));
        let jumps = jumps
            .iter()
            .filter(|j| !j.op.is_zero())
            .map(|j| (j.channel, to_csr(&j.op)))
            .collect();
        Self {
            params: p.clone(),
            spec,
            generator,
            jumps,
        }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn run(&self, opts: &TrajectoryOptions) -> Result<TrajectoryOutput> {
        if !(opts.t_max > 0.0) || !opts.t_max.is_finite() {
            return Err(Error::InvalidParams(format!("t_max must be > 0, got {}", opts.t_max)));
        }
        let scale = self.params.max_rate();
        let product = opts.dt * scale;
        if !(opts.dt > 0.0) || product >= STEP_BOUND {
            return Err(Error::Stability {
                dt: opts.dt,
                scale,
                product,
                bound: STEP_BOUND,
            });
        }
        let d = self.spec.dim();
        let zero = C64::new(0.0, 0.0);
        let mut psi: Vec<C64> = match &opts.initial {
            Some(v) if v.len() == d => {
                let n = v.norm();
                v.iter().map(|z| z / n).collect()
            }
            Some(v) => {
                return Err(Error::InvalidParams(format!(
                    "initial state has length {}, expected {d}",
                    v.len()
                )))
            }
            None => {
                let mut v = vec![zero; d];
                v[self.spec.index(0, Level::G, Level::G)] = C64::new(1.0, 0.0);
                v
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(opts.trajectory);
        let mut draw = || loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };

        let steps = (opts.t_max / opts.dt).ceil() as usize;
        let h = opts.t_max / steps as f64;
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
            (vec![zero; d], vec![zero; d], vec![zero; d], vec![zero; d], vec![zero; d]);
        let mut jumped = vec![zero; d];
        let mut weights = vec![0.0; self.jumps.len()];
        let mut mean_state = opts.sample_every.map(|_| DMatrix::<C64>::zeros(d, d));
        let mut samples = 0usize;

        let mut clicks = Vec::new();
        let mut threshold = draw();
        let mut norm_prev = psi.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let g = &self.generator;
        for step in 0..steps {
            let t0 = step as f64 * h;
            g.mul_vec_into(&psi, &mut k1);
            for i in 0..d {
                tmp[i] = psi[i] + k1[i] * (h / 2.0);
            }
            g.mul_vec_into(&tmp, &mut k2);
            for i in 0..d {
                tmp[i] = psi[i] + k2[i] * (h / 2.0);
            }
            g.mul_vec_into(&tmp, &mut k3);
            for i in 0..d {
                tmp[i] = psi[i] + k3[i] * h;
            }
            g.mul_vec_into(&tmp, &mut k4);
            for i in 0..d {
                psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
            let mut norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>();
            if !norm.is_finite() {
                return Err(Error::NormUnderflow(t0 + h));
            }
            if norm <= threshold {
                let frac = ((norm_prev - threshold) / (norm_prev - norm)).clamp(0.0, 1.0);
                let t_jump = t0 + h * frac;
                let mut total = 0.0;
                for (w, (_, c)) in weights.iter_mut().zip(&self.jumps) {
                    c.mul_vec_into(&psi, &mut jumped);
                    *w = jumped.iter().map(|z| z.norm_sqr()).sum::<f64>();
                    total += *w;
                }
                if total > 0.0 {
                    let pick = draw() * total;
                    let mut acc = 0.0;
                    let mut chosen = self.jumps.len() - 1;
                    for (k, w) in weights.iter().enumerate() {
                        acc += w;
                        if pick <= acc && *w > 0.0 {
                            chosen = k;
                            break;
                        }
                    }
                    let (channel, op) = &self.jumps[chosen];
                    op.mul_vec_into(&psi, &mut jumped);
                    let n = jumped.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    for i in 0..d {
                        psi[i] = jumped[i] / n;
                    }
                    clicks.push(Click {
                        time: t_jump,
                        channel: *channel,
                    });
                    norm = 1.0;
                }
                threshold = draw();
            } else if norm < 1e-50 {
                // rescale state and threshold together; the crossing test is
                // unchanged
                let s = norm.sqrt();
                psi.iter_mut().for_each(|z| *z /= s);
                threshold /= norm;
                norm = 1.0;
            }
            norm_prev = norm;

            if let (Some(every), Some(acc)) = (opts.sample_every, mean_state.as_mut()) {
                if (step + 1) % every == 0 && t0 + h >= opts.sample_after {
                    let v = DVector::from_column_slice(&psi);
                    let p = v.norm_squared();
                    *acc += (&v * v.adjoint()) / C64::new(p, 0.0);
                    samples += 1;
                }
            }
        }
        let mean_state = mean_state.map(|m| if samples > 0 { m / C64::new(samples as f64, 0.0) } else { m });
        Ok(TrajectoryOutput {
            record: ClickRecord {
                clicks,
                t_max: opts.t_max,
                dt: opts.dt,
                seed: opts.seed,
                trajectory: opts.trajectory,
                params: self.params.clone(),
            },
            mean_state,
            samples,
        })
    }
}

/// One trajectory from `|gg,0⟩` on stream 0 of `seed`.
pub fn run_trajectory(p: &SystemParams, t_max: f64, dt: f64, seed: u64) -> Result<ClickRecord> {
    let engine = TrajectoryEngine::new(p)?;
    Ok(engine.run(&TrajectoryOptions::new(t_max, dt, seed))?.record)
}

/// `n_traj` independent trajectories (streams `0..n_traj` of `seed`),
/// dispatched on the current rayon pool and returned in trajectory order.
pub fn run_ensemble(
    p: &SystemParams,
    n_traj: usize,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<ClickRecord>> {
    let engine = TrajectoryEngine::new(p)?;
    (0..n_traj as u64)
        .into_par_iter()
        .map(|k| {
            let opts = TrajectoryOptions {
                trajectory: k,
                ..TrajectoryOptions::new(t_max, dt, seed)
            };
            engine.run(&opts).map(|o| o.record)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionEvent {
    pub start_time: f64,
    /// Number of cavity clicks in the burst.
    pub multiplicity: usize,
}

/// Groups cavity clicks into bursts: a click joins the current burst when it
/// follows the previous click by at most `window`, otherwise it opens a new
/// one. Atomic clicks are ignored.
pub fn classify_bursts(rec: &ClickRecord, window: f64) -> Result<Vec<EmissionEvent>> {
    if !(window > 0.0) {
        return Err(Error::InvalidParams(format!("window must be > 0, got {window}")));
    }
    Ok(group_times(rec.cavity_times(), window))
}

fn group_times(times: impl Iterator<Item = f64>, window: f64) -> Vec<EmissionEvent> {
    let mut events: Vec<EmissionEvent> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for t in times {
        match events.last_mut() {
            Some(ev) if t - last <= window => ev.multiplicity += 1,
            _ => events.push(EmissionEvent {
                start_time: t,
                multiplicity: 1,
            }),
        }
        last = t;
    }
    events
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionStats {
    pub n_events: usize,
    pub fraction_single: f64,
    pub fraction_pair: f64,
    pub fraction_multi: f64,
    /// Cavity clicks per µs.
    pub cavity_click_rate: f64,
    /// Emission events per µs.
    pub event_rate: f64,
}

impl EmissionStats {
    /// Binomial standard error of a fraction estimated from `n_events`.
    pub fn standard_error(&self, fraction: f64) -> f64 {
        if self.n_events == 0 {
            return f64::INFINITY;
        }
        (fraction * (1.0 - fraction) / self.n_events as f64).sqrt()
    }
}

/// Fractions of bursts with multiplicity 1, 2 and ≥3, and rates over the
/// observation time `t_max` (the summed duration when events come from
/// several trajectories).
pub fn emission_stats(events: &[EmissionEvent], t_max: f64) -> EmissionStats {
    let n = events.len();
    let single = events.iter().filter(|e| e.multiplicity == 1).count();
    let pair = events.iter().filter(|e| e.multiplicity == 2).count();
    let clicks: usize = events.iter().map(|e| e.multiplicity).sum();
    let (fs, fp, fm) = if n > 0 {
        let fs = single as f64 / n as f64;
        let fp = pair as f64 / n as f64;
        (fs, fp, (n - single - pair) as f64 / n as f64)
    } else {
        (0.0, 0.0, 0.0)
    };
    let rate = |k: usize| if t_max > 0.0 { k as f64 / t_max } else { 0.0 };
    EmissionStats {
        n_events: n,
        fraction_single: fs,
        fraction_pair: fp,
        fraction_multi: fm,
        cavity_click_rate: rate(clicks),
        event_rate: rate(n),
    }
}

/// Classifies every record and pools the events; rates use the summed
/// duration.
pub fn ensemble_stats(records: &[ClickRecord], window: f64) -> Result<EmissionStats> {
    let mut events = Vec::new();
    let mut total_time = 0.0;
    for r in records {
        events.extend(classify_bursts(r, window)?);
        total_time += r.t_max;
    }
    Ok(emission_stats(&events, total_time))
}

/// Mean photon number estimated from the cavity click rate, `rate / 2κ_eff`,
/// per trajectory.
pub fn photon_number_estimates(records: &[ClickRecord]) -> Vec<f64> {
    records
        .iter()
        .map(|r| {
            let decay = 2.0 * r.params.kappa * r.params.cavity_dissipator_count as f64;
            r.count(Channel::Cavity) as f64 / (decay * r.t_max)
        })
        .collect()
}

/// Writes one row per click: `trajectory_id,time_us,channel`.
pub fn write_clicks_csv<W: Write>(records: &[ClickRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trajectory_id", "time_us", "channel"])?;
    for r in records {
        for c in &r.clicks {
            w.write_record([r.trajectory.to_string(), format!("{:?}", c.time), c.channel.as_str().to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV written by [`write_clicks_csv`] as `(trajectory, click)`.
pub fn read_clicks_csv<R: std::io::Read>(input: R) -> Result<Vec<(u64, Click)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let bad = |what: &str| Error::InvalidParams(format!("bad click row {row:?}: {what}"));
        let traj: u64 = row.get(0).ok_or_else(|| bad("missing id"))?.parse().map_err(|_| bad("id"))?;
        let time: f64 = row.get(1).ok_or_else(|| bad("missing time"))?.parse().map_err(|_| bad("time"))?;
        let channel: Channel = row.get(2).ok_or_else(|| bad("missing channel"))?.parse()?;
        out.push((traj, Click { time, channel }));
    }
    Ok(out)
}

/// JSON sidecar describing a click CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickMetadata {
    pub params: SystemParams,
    pub seed: u64,
    pub dt: f64,
    pub t_max: f64,
    pub window: f64,
    pub n_trajectories: usize,
    pub rng: String,
    pub basis: String,
    pub stats: EmissionStats,
}

pub fn write_click_files(
    records: &[ClickRecord],
    meta: &ClickMetadata,
    csv_path: &Path,
) -> Result<std::path::PathBuf> {
    let f = std::fs::File::create(csv_path)?;
    write_clicks_csv(records, std::io::BufWriter::new(f))?;
    let json_path = csv_path.with_extension("json");
    std::fs::write(&json_path, serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(json_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(times: &[f64]) -> ClickRecord {
        ClickRecord {
            clicks: times.iter().map(|&t| Click { time: t, channel: Channel::Cavity }).collect(),
            t_max: 10.0,
            dt: 1e-3,
            seed: 0,
            trajectory: 0,
            params: SystemParams::default_paper(),
        }
    }

    #[test]
    fn chaining_definition() {
        let ev = classify_bursts(&record(&[1.0, 1.01, 5.0]), 0.1).unwrap();
        assert_eq!(
            ev,
            vec![
                EmissionEvent { start_time: 1.0, multiplicity: 2 },
                EmissionEvent { start_time: 5.0, multiplicity: 1 }
            ]
        );
        // chaining follows the previous click, not the burst start
        let ev = classify_bursts(&record(&[1.0, 1.08, 1.16, 1.24]), 0.1).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].multiplicity, 4);
    }

    #[test]
    fn empty_and_limits() {
        assert!(classify_bursts(&record(&[]), 0.1).unwrap().is_empty());
        let times = [0.5, 0.7, 0.71, 3.0, 9.9];
        let tiny = classify_bursts(&record(&times), 1e-9).unwrap();
        assert_eq!(tiny.len(), times.len());
        let wide = classify_bursts(&record(&times), 10.0).unwrap();
        assert_eq!(wide.len(), 1);
        assert_eq!(wide[0].multiplicity, times.len());
        assert!(classify_bursts(&record(&times), 0.0).is_err());
    }

    #[test]
    fn atomic_clicks_are_ignored() {
        let mut r = record(&[1.0, 2.0]);
        r.clicks.insert(1, Click { time: 1.05, channel: Channel::Atom1 });
        let ev = classify_bursts(&r, 0.1).unwrap();
        assert_eq!(ev.len(), 2);
    }

    #[test]
    fn stats_fractions() {
        let ev: Vec<EmissionEvent> = [1, 1, 1, 2]
            .iter()
            .enumerate()
            .map(|(i, &m)| EmissionEvent { start_time: i as f64, multiplicity: m })
            .collect();
        let s = emission_stats(&ev, 10.0);
        assert_eq!(s.n_events, 4);
        assert_eq!(s.fraction_single, 0.75);
        assert_eq!(s.fraction_pair, 0.25);
        assert_eq!(s.fraction_multi, 0.0);
        assert_eq!(s.cavity_click_rate, 0.5);
        assert_eq!(s.event_rate, 0.4);
        let s = emission_stats(&[EmissionEvent { start_time: 0.0, multiplicity: 5 }], 1.0);
        assert_eq!(s.fraction_multi, 1.0);
        let sum = s.fraction_single + s.fraction_pair + s.fraction_multi;
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(emission_stats(&[], 1.0).n_events, 0);
    }

    #[test]
    fn undriven_never_clicks() {
        let p = SystemParams { eta: 0.0, n_max: 4, ..SystemParams::default_paper() };
        let dt = 0.01 / p.max_rate();
        for seed in 0..3 {
            let r = run_trajectory(&p, 20.0, dt, seed).unwrap();
            assert!(r.clicks.is_empty());
        }
    }

    #[test]
    fn step_bound_enforced() {
        let p = SystemParams { n_max: 4, ..SystemParams::default_paper() };
        assert!(matches!(run_trajectory(&p, 1.0, 0.05 / p.max_rate(), 1), Err(Error::Stability { .. })));
        assert!(run_trajectory(&p, 0.0, default_dt(&p), 1).is_err());
    }

    #[test]
    fn deterministic_and_increasing() {
        let p = SystemParams { n_max: 4, ..SystemParams::default_paper() }
            .with_detuning(std::f64::consts::SQRT_2 * 5.0);
        let dt = 0.02 / p.max_rate();
        let a = run_trajectory(&p, 30.0, dt, 7).unwrap();
        let b = run_trajectory(&p, 30.0, dt, 7).unwrap();
        assert_eq!(a, b);
        assert!(!a.clicks.is_empty());
        assert!(a.clicks.windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.clicks.iter().all(|c| c.time >= 0.0 && c.time <= a.t_max));
        let c = run_trajectory(&p, 30.0, dt, 8).unwrap();
        assert_ne!(a.clicks, c.clicks);
    }

    #[test]
    fn csv_roundtrip() {
        let p = SystemParams { n_max: 4, ..SystemParams::default_paper() }
            .with_detuning(std::f64::consts::SQRT_2 * 5.0);
        let recs = run_ensemble(&p, 3, 10.0, 0.02 / p.max_rate(), 3).unwrap();
        let mut buf = Vec::new();
        write_clicks_csv(&recs, &mut buf).unwrap();
        let rows = read_clicks_csv(&buf[..]).unwrap();
        let expected: Vec<(u64, Click)> =
            recs.iter().flat_map(|r| r.clicks.iter().map(move |c| (r.trajectory, *c))).collect();
        assert_eq!(rows, expected);
    }
}
