use std::fs;
use std::path::Path;
use std::process::Command;

use trapfield::environment::{build_environment, TailLaw};
use trapfield::fields::hydro_ensemble;
use trapfield::harness::{report_convergence, run_experiment, ExperimentConfig, RunManifest, Table};
use trapfield::{Profile, TestFunction};

const SMALL_HYDRO: &str = "kind = \"hydro-density\"\nseed = 5\nd = 1\nbeta = 0.5\nn = [4, 6]\ntimes = [0.1, 0.3]\nreplicas = 6\nbox_factor = 2\n";

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv") || n.ends_with(".svg") || n.ends_with(".toml"))
        .collect();
    names.sort();
    names
}

#[test]
fn runs_reproduce_byte_for_byte() {
    let cfg = config(SMALL_HYDRO);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_experiment(&cfg, a.path()).unwrap();
    let mb = run_experiment(&cfg, b.path()).unwrap();
    let names = csv_files(a.path());
    assert!(names.contains(&"summary.csv".to_string()));
    assert_eq!(names, csv_files(b.path()));
    for name in &names {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert_eq!(ma.seeds, mb.seeds);
    assert_eq!(ma.config_hash, mb.config_hash);
}

#[test]
fn manifest_records_the_run() {
    let cfg = config(SMALL_HYDRO);
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&cfg, dir.path()).unwrap();
    let back = RunManifest::read(dir.path()).unwrap();
    assert_eq!(back.config_hash, cfg.hash().unwrap());
    assert_eq!(back.config_hash.len(), 64);
    assert_eq!(back.master_seed, 5);
    assert_eq!(back.checks.len(), m.checks.len());
    for out in &back.outputs {
        assert!(dir.path().join(out).exists(), "{out}");
    }
    let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(text.starts_with("# trapfield hydro-density v1\n"));
    assert!(fs::read_to_string(dir.path().join("gaps.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn zero_initial_profile_gives_zero_fields() {
    let env = build_environment(1, 8, TailLaw::new(0.5).unwrap(), 3).unwrap();
    let f = TestFunction::triangle(&[0.0], 1.0).unwrap();
    let ens = hydro_ensemble(&env, 0.3, 4.0, &[0.0, 0.5], &f, &Profile::constant(0.0).unwrap(), 5, 9).unwrap();
    for r in ens.records.iter().flatten() {
        assert_eq!(r.x_pair, 0.0);
        assert_eq!(r.z_pair, 0.0);
    }
    assert_eq!(ens.events, 0);
}

#[test]
fn report_needs_two_scales_and_matching_configs() {
    let one = tempfile::tempdir().unwrap();
    let cfg = config(&SMALL_HYDRO.replace("n = [4, 6]", "n = [4]"));
    run_experiment(&cfg, one.path()).unwrap();
    assert!(report_convergence(&[one.path()]).is_err());

    let two = tempfile::tempdir().unwrap();
    run_experiment(&config(&SMALL_HYDRO.replace("n = [4, 6]", "n = [6]")), two.path()).unwrap();
    let report = report_convergence(&[one.path(), two.path()]).unwrap();
    assert_eq!(report.trends.len(), 2);
    let out = tempfile::tempdir().unwrap();
    report.write(out.path()).unwrap();
    let table = Table::parse(&fs::read_to_string(out.path().join("convergence.csv")).unwrap()).unwrap();
    assert_eq!(table.floats("n").unwrap().len(), 4);

    let other = tempfile::tempdir().unwrap();
    run_experiment(&config(&SMALL_HYDRO.replace("beta = 0.5", "beta = 0.7")), other.path()).unwrap();
    assert!(report_convergence(&[one.path(), other.path()]).is_err());
}

#[test]
fn configs_reject_unknown_fields_and_bad_values() {
    assert!(ExperimentConfig::from_toml("kind = \"env-tail\"\nseed = 1\nbogus = 2\n").is_err());
    assert!(ExperimentConfig::from_toml("kind = \"env-tail\"\n").is_err());
    let mut cfg = config("kind = \"env-tail\"\nseed = 1\n");
    cfg.beta = 1.5;
    assert!(cfg.validate().is_err());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trapfield"))
}

#[test]
fn cli_run_with_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    fs::write(&cfg_path, SMALL_HYDRO).unwrap();
    let out = dir.path().join("out");
    let status = cli()
        .args(["--seed", "42", "run"])
        .arg(&cfg_path)
        .arg("-o")
        .arg(&out)
        .env("TRAPFIELD_THREADS", "1")
        .status()
        .unwrap();
    // 2 signals a failed statistical check, which still writes every output
    assert!(matches!(status.code(), Some(0) | Some(2)));
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.master_seed, 42);
}

#[test]
fn cli_subcommands_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let env_path = dir.path().join("env.json");
    let ok = cli().args(["--seed", "3", "env", "-L", "4", "-o"]).arg(&env_path).status().unwrap();
    assert!(ok.success());
    let env = trapfield::Environment::from_json(&fs::read_to_string(&env_path).unwrap()).unwrap();
    assert_eq!(env.num_sites(), 9);

    let out = cli().args(["ips", "-L", "3", "--n", "3", "--t", "0.05"]).output().unwrap();
    assert!(out.status.success());
    let table = Table::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 7);

    let duality = dir.path().join("duality");
    let ok = cli().args(["duality", "--cases", "10", "-o"]).arg(&duality).status().unwrap();
    assert!(ok.success());
    assert!(duality.join("duality.csv").exists());

    let bad = cli().args(["run", "/nonexistent/config.toml"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn cli_report_over_two_runs() {
    let dir = tempfile::tempdir().unwrap();
    for (name, n) in [("a", 4), ("b", 6)] {
        let p = dir.path().join(format!("{name}.toml"));
        fs::write(&p, SMALL_HYDRO.replace("n = [4, 6]", &format!("n = [{n}]"))).unwrap();
        let ok = cli().arg("run").arg(&p).arg("-o").arg(dir.path().join(name)).status().unwrap();
        assert!(matches!(ok.code(), Some(0) | Some(2)));
    }
    let report = dir.path().join("report");
    let out = cli()
        .arg("report")
        .arg(dir.path().join("a"))
        .arg(dir.path().join("b"))
        .arg("-o")
        .arg(&report)
        .output()
        .unwrap();
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
    assert!(report.join("convergence.csv").exists());
    assert!(report.join("convergence.svg").exists());
}
