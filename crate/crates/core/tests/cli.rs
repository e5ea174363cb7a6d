use std::path::Path;
use std::process::{Command, Output};

use cqed_vdw::sweep::{SweepSpec, TrajectorySpec};

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqed-vdw"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn kv(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn unknown_flags_and_commands_exit_one_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["steady", "--bogus"][..], &["frobnicate"][..], &[][..]] {
        let o = cli(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"), "{args:?}");
    }
    let o = cli(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "kappa = 3\nkapa = 2\n").unwrap();
    for args in [
        &["steady", "--set", "kappa=-1"][..],
        &["steady", "--config", "bad.cfg"][..],
        &["steady", "--config", "missing.cfg"][..],
        &["steady", "--set", "nope=1"][..],
        &["steady", "--nmax", "2"][..],
        &["presets", "fig9"][..],
        &["sweep"][..],
        &["traj", "--window", "0"][..],
    ] {
        let o = cli(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn steady_prints_observables() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("magic.cfg"),
        "# magic detuning at U = 8 g0\nu_vdw = 40\ndelta_a = -40/3\ndelta_cav = -40/3\nn_max = 10\n",
    )
    .unwrap();
    let o = cli(&["steady", "--config", "magic.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let p = SystemParams::from_kv_str(&std::fs::read_to_string(dir.path().join("magic.cfg")).unwrap()).unwrap();
    let l = cqed_vdw::model::liouvillian(&p).unwrap();
    let rho = cqed_vdw::steady::steady_state(&l, 1e-10, 200).unwrap();
    let obs = cqed_vdw::steady::observables(&rho, p.space().unwrap()).unwrap();
    assert_eq!(kv(&text, "mean_photon"), obs.mean_photon);
    assert_eq!(kv(&text, "g2"), obs.g2.unwrap());
    assert_eq!(kv(&text, "g3"), obs.g3.unwrap());

    let o = cli(&["steady", "--config", "magic.cfg", "--format", "json"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["observables"]["g2"].as_f64().unwrap(), obs.g2.unwrap());

    // magic point blockades more strongly than the upper dressed state
    let o = cli(
        &["steady", "--config", "magic.cfg", "--set", "delta_a=7.0710678118654755", "--set", "delta_cav=7.0710678118654755"],
        dir.path(),
    );
    assert!(kv(&stdout(&o), "g2") > obs.g2.unwrap());
}

use cqed_vdw::SystemParams;

#[test]
fn spectrum_lists_manifolds() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["spectrum", "--set", "u_vdw=40"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("manifold,index,energy_mhz\n1,0,-7.07"));
    let o = cli(&["spectrum", "--format", "json"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["manifolds"][1]["eigenvalues"].as_array().unwrap().len(), 3);
}

#[test]
fn traj_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = cli(&["traj", "--seed", "7"], dir.path());
    let b = cli(&["traj", "--seed", "7"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("trajectory_id,time_us,channel\n"));
    let c = cli(&["traj", "--seed", "8", "--threads", "1"], dir.path());
    assert_ne!(a.stdout, c.stdout);

    let o = cli(&["traj", "--seed", "7", "--out", "clicks.csv", "--window", "0.2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("clicks.csv")).unwrap(), a.stdout);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("clicks.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["window"], 0.2);
}

#[test]
fn presets_round_trip_and_sweep_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["presets", "all", "--out", "cfg"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let cfg = dir.path().join("cfg");
    for name in ["fig2", "fig4", "fig4_overlap", "fig5ab"] {
        let text = std::fs::read_to_string(cfg.join(format!("{name}.cfg"))).unwrap();
        let s = SweepSpec::from_kv_str(&text).unwrap();
        assert_eq!(s.name, name);
        assert_eq!(SweepSpec::from_kv_str(&s.to_kv_string()).unwrap(), s);
    }
    for name in ["fig3c", "fig3d", "fig5c", "fig5d"] {
        let text = std::fs::read_to_string(cfg.join(format!("{name}.cfg"))).unwrap();
        let t = TrajectorySpec::from_kv_str(&text).unwrap();
        assert_eq!(TrajectorySpec::from_kv_str(&t.to_kv_string()).unwrap(), t);
    }
    let o = cli(&["presets", "fig5ab", "--out", "json", "--format", "json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("json/fig5ab.json")).unwrap();
    assert_eq!(SweepSpec::from_json_str(&text).unwrap(), cqed_vdw::sweep::fig5ab());

    std::fs::write(
        dir.path().join("small.cfg"),
        "name = small\nn_max = 4\naxis = delta_a -10 10 9\nderive.delta_cav = delta_a\noutput = small.csv\n",
    )
    .unwrap();
    let o = cli(&["sweep", "--config", "small.cfg", "--threads", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let serial = std::fs::read(dir.path().join("small.csv")).unwrap();
    assert!(dir.path().join("small.meta.json").exists());
    let o = cli(&["sweep", "--config", "small.cfg", "--threads", "3", "--out", "par.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("par.csv")).unwrap(), serial);
    assert_eq!(String::from_utf8(serial).unwrap().lines().count(), 10);

    let o = cli(&["sweep", "--config", "small.cfg", "--nmax", "5", "--format", "json", "--out", "p.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 9);
    assert_eq!(v[0]["n_max_used"], 5);
}
