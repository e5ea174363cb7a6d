use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cqed_vdw::config::fmt_f64;
use cqed_vdw::mcwf::{self, ClickMetadata};
use cqed_vdw::spectra;
use cqed_vdw::steady::{self, SteadyOptions};
use cqed_vdw::sweep::{self, PresetFile, SweepSpec, TrajectorySpec};
use cqed_vdw::{model, Error, Result, SystemParams};

#[derive(Parser, Debug)]
#[command(name = "cqed-vdw", version = sweep::build_version(), about = "Two-atom cavity QED with van der Waals interaction")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (key = value, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output file (output directory for `presets`).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads for sweeps and trajectory ensembles.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Trajectory RNG seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Burst coincidence window in µs.
    #[arg(long, global = true, value_name = "US")]
    window: Option<f64>,

    /// Cavity truncation override.
    #[arg(long, global = true, value_name = "N")]
    nmax: Option<usize>,

    /// Parameter override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a parameter sweep from a config file.
    Sweep,
    /// Steady-state observables at one parameter point.
    Steady,
    /// Dressed-state energies of the one- and two-excitation manifolds.
    Spectrum,
    /// Quantum-jump trajectories and burst statistics.
    Traj,
    /// Write the figure preset config files.
    Presets {
        /// fig2, fig3cd, fig4, fig5ab, fig5cd or all.
        name: String,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_solver_failure() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidParams("--threads must be >= 1".into()));
        }
    }
    if let Some(w) = cli.window {
        if !(w > 0.0) {
            return Err(Error::InvalidParams(format!("--window must be > 0, got {w}")));
        }
    }
    match &cli.command {
        Command::Sweep => cmd_sweep(cli),
        Command::Steady => cmd_steady(cli),
        Command::Spectrum => cmd_spectrum(cli),
        Command::Traj => cmd_traj(cli),
        Command::Presets { name } => cmd_presets(cli, name),
    }
}

fn apply_sets(p: &mut SystemParams, sets: &[String]) -> Result<()> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidParams(format!("--set expects KEY=VALUE, got `{s}`")))?;
        let entry = cqed_vdw::config::Entry {
            line: 0,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        };
        if !p.apply_entry(&entry)? {
            return Err(Error::UnknownKey(entry.key));
        }
    }
    Ok(())
}

fn load_params(cli: &Cli) -> Result<SystemParams> {
    let mut p = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            if path.extension().is_some_and(|e| e == "json") {
                SystemParams::from_json_str(&text)?
            } else {
                SystemParams::from_kv_str(&text)?
            }
        }
        None => SystemParams::default_paper(),
    };
    apply_sets(&mut p, &cli.set)?;
    if let Some(n) = cli.nmax {
        p.n_max = n;
    }
    p.validate()?;
    Ok(p)
}

fn pool(cli: &Cli) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        b = b.num_threads(t);
    }
    b.build()
        .map_err(|e| Error::InvalidParams(format!("cannot build thread pool: {e}")))
}

/// Writes to `--out` or stdout.
fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("sweep needs --config PATH".into()))?;
    let mut spec = SweepSpec::from_path(path)?;
    apply_sets(&mut spec.params, &cli.set)?;
    if let Some(n) = cli.nmax {
        spec.override_n_max(n);
    }
    spec.validate()?;
    let result = pool(cli)?.install(|| sweep::run_sweep(&spec))?;
    let json = cli.format == Format::Json;
    let out = cli
        .out
        .clone()
        .or_else(|| spec.output.as_ref().map(|o| config_relative(path, o)));
    match out {
        Some(data) => {
            let meta = result.write_files(&data, json)?;
            eprintln!(
                "{} points ({} failed) in {:.1} s -> {}, {}",
                result.points.len(),
                result.failed(),
                result.wall_seconds,
                data.display(),
                meta.display()
            );
        }
        None if json => println!("{}", result.points_json()),
        None => result.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

/// Output paths in a sweep file are relative to the file.
fn config_relative(config: &Path, out: &str) -> PathBuf {
    let o = Path::new(out);
    if o.is_absolute() {
        return o.to_path_buf();
    }
    config.parent().map(|d| d.join(o)).unwrap_or_else(|| o.to_path_buf())
}

fn cmd_steady(cli: &Cli) -> Result<()> {
    let p = load_params(cli)?;
    let start = Instant::now();
    let l = model::liouvillian(&p)?;
    let sol = steady::solve_steady(&l, &SteadyOptions::default())?;
    let obs = steady::observables(&sol.rho, p.space()?)?;
    let seconds = start.elapsed().as_secs_f64();
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_else(|| "NaN".into());
    let text = match cli.format {
        Format::Json => {
            serde_json::to_string_pretty(&json!({
                "params": p,
                "observables": obs,
                "residual": sol.residual,
                "iterations": sol.iterations,
                "shift": sol.shift,
                "seconds": seconds,
                "version": sweep::build_version(),
            }))? + "\n"
        }
        Format::Csv => {
            let mut s = String::new();
            writeln!(s, "mean_photon = {}", fmt_f64(obs.mean_photon)).unwrap();
            writeln!(s, "g2 = {}", opt(obs.g2)).unwrap();
            writeln!(s, "g3 = {}", opt(obs.g3)).unwrap();
            writeln!(s, "residual = {}", fmt_f64(sol.residual)).unwrap();
            writeln!(s, "iterations = {}", sol.iterations).unwrap();
            s
        }
    };
    emit(cli, &text)
}

fn cmd_spectrum(cli: &Cli) -> Result<()> {
    let p = load_params(cli)?;
    let m1 = spectra::manifold_spectrum(p.g0, p.u_vdw, 1)?;
    let m2 = spectra::manifold_spectrum(p.g0, p.u_vdw, 2)?;
    let text = match cli.format {
        Format::Json => {
            serde_json::to_string_pretty(&json!({
                "g0": p.g0,
                "u_vdw": p.u_vdw,
                "manifolds": [m1, m2],
                "magic_detuning": spectra::magic_detuning(p.u_vdw),
                "antiblockade_detuning": spectra::antiblockade_detuning(p.u_vdw),
                "overlap_vdw": spectra::overlap_vdw(p.g0),
            }))? + "\n"
        }
        Format::Csv => {
            let mut s = String::from("manifold,index,energy_mhz\n");
            for m in [&m1, &m2] {
                for (k, e) in m.eigenvalues.iter().enumerate() {
                    writeln!(s, "{},{},{}", m.excitation_number, k, fmt_f64(*e)).unwrap();
                }
            }
            s
        }
    };
    emit(cli, &text)
}

fn cmd_traj(cli: &Cli) -> Result<()> {
    let mut spec = match &cli.config {
        Some(path) => TrajectorySpec::from_path(path)?,
        None => TrajectorySpec::default(),
    };
    apply_sets(&mut spec.params, &cli.set)?;
    if let Some(n) = cli.nmax {
        spec.params.n_max = n;
    }
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(w) = cli.window {
        spec.window = Some(w);
    }
    spec.validate()?;
    let (dt, window) = (spec.dt(), spec.window());
    let records = pool(cli)?
        .install(|| mcwf::run_ensemble(&spec.params, spec.trajectories, spec.t_max, dt, spec.seed))?;
    let stats = mcwf::ensemble_stats(&records, window)?;
    let meta = ClickMetadata {
        params: spec.params.clone(),
        seed: spec.seed,
        dt,
        t_max: spec.t_max,
        window,
        n_trajectories: spec.trajectories,
        rng: mcwf::RNG_NAME.to_string(),
        basis: "index = fock * 4 + atom1 * 2 + atom2, g = 0, e = 1".to_string(),
        stats,
    };
    match (&cli.out, cli.format) {
        (Some(path), Format::Csv) => {
            mcwf::write_click_files(&records, &meta, path)?;
        }
        (Some(path), Format::Json) => {
            std::fs::write(path, serde_json::to_string_pretty(&json!({"meta": meta, "records": records}))? + "\n")?;
        }
        (None, Format::Csv) => mcwf::write_clicks_csv(&records, std::io::stdout().lock())?,
        (None, Format::Json) => println!("{}", serde_json::to_string_pretty(&json!({"meta": meta, "records": records}))?),
    }
    eprintln!(
        "{} events: single {:.4}, pair {:.4}, multi {:.4}; cavity clicks {:.4}/us",
        stats.n_events, stats.fraction_single, stats.fraction_pair, stats.fraction_multi, stats.cavity_click_rate
    );
    Ok(())
}

fn cmd_presets(cli: &Cli, name: &str) -> Result<()> {
    let names: Vec<&str> = if name == "all" {
        sweep::PRESET_NAMES.to_vec()
    } else {
        vec![name]
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    for n in names {
        for file in sweep::preset(n)? {
            let (ext, text) = match cli.format {
                Format::Json => ("json", file.to_json_string() + "\n"),
                Format::Csv => ("cfg", file.to_kv_string()),
            };
            let path = dir.join(format!("{}.{ext}", file.stem()));
            std::fs::write(&path, text)?;
            let kind = match file {
                PresetFile::Sweep(_) => "sweep",
                PresetFile::Trajectories(_) => "traj",
            };
            println!("{}\t{kind}", path.display());
        }
    }
    Ok(())
}
