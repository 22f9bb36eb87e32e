//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Select criteria with
//! `TRAPFIELD_ACCEPTANCE=1,4,9`; all run by default.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use trapfield::duality::run_battery;
use trapfield::environment::{build_on, TailLaw};
use trapfield::exclusion::check_detailed_balance;
use trapfield::fields::{decomposition_diagnostics, hydro_ensemble};
use trapfield::fractional::simulate_fk;
use trapfield::harness::{msd_slope, report_convergence, run_experiment, ExperimentConfig, RunManifest, Table};
use trapfield::numeric::gamma;
use trapfield::rng::stream_rng;
use trapfield::stats::Running;
use trapfield::walker::MsdPoint;
use trapfield::{Environment, Geometry, Profile, Result, TestFunction};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).expect("acceptance config is valid")
}

fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunManifest> {
    let m = run_experiment(cfg, dir)?;
    for c in m.checks.iter().filter(|c| !c.pass) {
        eprintln!("    failed check {}: {}", c.name, c.detail);
    }
    for f in &m.failures {
        eprintln!("    replica failure {}: {}", f.label, f.error);
    }
    Ok(m)
}

fn failed_checks(m: &RunManifest) -> usize {
    m.checks.iter().filter(|c| !c.pass).count() + m.failures.len()
}

fn duality_certification() -> Result<Outcome> {
    let res = run_battery(200, 101)?;
    let pass = res.duality_passed() == res.duality.len() && res.max_gap() <= 1e-10;
    outcome(pass, format!("{} relations, max gap {:.2e}", res.duality.len(), res.max_gap()))
}

fn reversibility() -> Result<Outcome> {
    let law = TailLaw::new(0.5)?;
    let geometries = [Geometry::chain(2, false)?, Geometry::chain(3, false)?, Geometry::torus(1, 1)?];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for g in &geometries {
        let sites = g.num_sites();
        for code in 0..3usize.pow(sites as u32) {
            let alpha: Vec<u64> = (0..sites).map(|i| (code / 3usize.pow(i as u32) % 3) as u64 + 1).collect();
            let env = Environment::from_alpha(*g, law, alpha)?;
            for &rho in &[0.25, 0.5, 0.75] {
                for &a in &[0.0, 0.5, 1.0] {
                    worst = worst.max(check_detailed_balance(&env, a, rho)?);
                    count += 1;
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("{count} systems, worst relative defect {worst:.2e}"))
}

fn variance_bound() -> Result<Outcome> {
    let res = run_battery(200, 303)?;
    let exact_ok = res.min_slack() >= -1e-10;
    let env = build_on(Geometry::chain(40, true)?, TailLaw::new(0.5)?, 3031)?;
    let f = TestFunction::triangle(&[0.0], 1.0)?;
    let rho0 = Profile::bump(TestFunction::squared_cosine(&[0.0], 1.5)?, 0.2, 0.6)?;
    let times = [0.25, 0.5, 1.0];
    let ens = hydro_ensemble(&env, 0.0, 10.0, &times, &f, &rho0, 400, 3032)?;
    let mut mc_ok = true;
    let mut ratios = Vec::new();
    for (k, reference) in ens.references.iter().enumerate() {
        let (r, se) = decomposition_diagnostics(&ens.records[k], reference).variance_ratio;
        mc_ok &= r <= 1.0 + 4.0 * se;
        ratios.push(format!("{r:.3}+-{se:.3}"));
    }
    outcome(
        exact_ok && mc_ok,
        format!("exact min slack {:.2e}; Monte Carlo ratios [{}]", res.min_slack(), ratios.join(", ")),
    )
}

fn fractional_solver(dir: &Path) -> Result<Outcome> {
    let mut failed = 0;
    for (i, beta) in [0.3, 0.5, 0.8].iter().enumerate() {
        let cfg = config(&format!(
            "kind = \"fke-validate\"\nseed = {}\nbeta = {beta}\n[fke]\nsamples = 1000000\n",
            400 + i
        ));
        failed += failed_checks(&run(&cfg, &dir.join(format!("fke-{beta}")))?);
    }
    outcome(failed == 0, format!("beta in {{0.3, 0.5, 0.8}}, {failed} failed checks"))
}

fn fk_moments() -> Result<Outcome> {
    let samples = 100_000;
    let times: Vec<f64> = (0..=4).map(|k| 10f64.powf(-1.0 + 0.5 * k as f64)).collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for (bi, &beta) in [0.5, 0.8].iter().enumerate() {
        for d in [1usize, 2] {
            let mut points = Vec::new();
            for (ti, &t) in times.iter().enumerate() {
                let mut rng = stream_rng(500, &format!("fk/{bi}/{d}"), ti as u64);
                let sq: Running = (0..samples)
                    .map(|_| simulate_fk(beta, d, t, &mut rng).map(|p| p.iter().map(|c| c * c).sum::<f64>()))
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .collect();
                let oracle = d as f64 * t.powf(beta) / gamma(1.0 + beta);
                ok &= sq.estimate().within(oracle, 4.0);
                points.push(MsdPoint {
                    t,
                    msd: sq.mean(),
                    se: sq.std_error(),
                });
            }
            let slope = msd_slope(&points);
            ok &= (slope - beta).abs() <= 0.05;
            notes.push(format!("beta={beta} d={d} slope {slope:.4}"));
        }
    }
    outcome(ok, notes.join(", "))
}

fn fin_exponent(dir: &Path) -> Result<Outcome> {
    let cfg = config("kind = \"fin-msd\"\nseed = 600\nbeta = 0.5\ntimes = [10, 31.6, 100, 316, 1000]\n");
    let m = run(&cfg, &dir.join("fin"))?;
    let detail = m.checks.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join("; ");
    outcome(failed_checks(&m) == 0, detail)
}

fn hydro_desk_check(dir: &Path) -> Result<Outcome> {
    let cfg = config("kind = \"hydro-density\"\nseed = 700\nd = 1\nbeta = 0.5\nn = [10, 20, 40]\nreplicas = 60\n");
    let out = dir.join("density");
    let m = run(&cfg, &out)?;
    let summary = Table::parse(&std::fs::read_to_string(out.join("summary.csv"))?)?;
    let (n, t) = (summary.floats("n")?, summary.floats("t")?);
    let (r, se) = (summary.floats("spread_ratio")?, summary.floats("spread_ratio_se")?);
    // the variance scaled by n^{d/beta} must stay put across n
    let mut spread_ok = true;
    for i in 0..n.len() {
        let base = (0..n.len()).find(|&j| t[j] == t[i]).expect("same t");
        spread_ok &= r[i] <= 1.0 + 4.0 * se[i];
        spread_ok &= (r[i] - r[base]).abs() <= 4.0 * (se[i] * se[i] + se[base] * se[base]).sqrt();
    }
    let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = r.iter().cloned().fold(0.0, f64::max);
    outcome(
        failed_checks(&m) == 0 && spread_ok,
        format!("{} checks, {} failed; scaled spread in [{lo:.3}, {hi:.3}]", m.checks.len(), failed_checks(&m)),
    )
}

fn homogenization(dir: &Path) -> Result<Outcome> {
    let runs = [
        (
            "d1",
            "kind = \"hydro-frequency\"\nseed = 800\nd = 1\nbeta = 0.5\nn = [10, 20, 40]\nreplicas = 20\nenvironments = 2\n",
        ),
        (
            "d2",
            "kind = \"hydro-frequency\"\nseed = 801\nd = 2\nbeta = 0.9\nn = [10, 20, 40]\nbox_factor = 2\nreplicas = 1\nenvironments = 16\nips_environments = 6\n",
        ),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (label, text) in runs {
        let out = dir.join(label);
        let m = run(&config(text), &out)?;
        ok &= m.failures.is_empty();
        let report = report_convergence(&[&out])?;
        ok &= report.trend_holds();
        let gaps = report.table.floats("gap")?;
        let ns = report.table.floats("n")?;
        let first = ns.iter().cloned().fold(f64::INFINITY, f64::min);
        let last = ns.iter().cloned().fold(0.0, f64::max);
        let worst_at = |n0: f64| {
            ns.iter()
                .zip(&gaps)
                .filter(|(n, _)| **n == n0)
                .map(|(_, g)| *g)
                .fold(0.0, f64::max)
        };
        notes.push(format!(
            "{label}: max gap {:.2e} at n={first}, {:.2e} at n={last}, trend {}",
            worst_at(first),
            worst_at(last),
            if report.trend_holds() { "holds" } else { "broken" }
        ));
    }
    outcome(ok, notes.join("; "))
}

fn environment_law(dir: &Path) -> Result<Outcome> {
    let cfg = config(
        "kind = \"env-tail\"\nseed = 900\nd = 1\nbeta = 0.5\nn = [10, 30, 100]\nreplicas = 10000\n\
         [[test_functions]]\nkind = \"triangle\"\ncenter = [0.0]\nradius = 1.0\n",
    );
    let out = dir.join("env");
    let m = run(&cfg, &out)?;
    let table = Table::parse(&std::fs::read_to_string(out.join("env_tail.csv"))?)?;
    let gap = table.floats("gap")?;
    let se = table.floats("se")?;
    let exact_gap = table.floats("exact_gap")?;
    let exact_down = exact_gap.windows(2).all(|w| w[1].abs() < w[0].abs());
    let k = gap.len() - 1;
    let mc_down = gap[k].abs() <= gap[0].abs() + 2.0 * (se[0] * se[0] + se[k] * se[k]).sqrt();
    let exact_gaps: Vec<String> = exact_gap.iter().map(|g| format!("{:.2e}", g.abs())).collect();
    let mc_gaps: Vec<String> = gap.iter().map(|g| format!("{:.2e}", g.abs())).collect();
    outcome(
        failed_checks(&m) == 0 && exact_down && mc_down,
        format!("exact gaps [{}], Monte Carlo gaps [{}]", exact_gaps.join(", "), mc_gaps.join(", ")),
    )
}

fn main() -> ExitCode {
    let selected: Option<Vec<usize>> = std::env::var("TRAPFIELD_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let dir = tempfile::tempdir().expect("temporary directory");
    let root = dir.path();
    type Criterion<'a> = (&'a str, Box<dyn Fn() -> Result<Outcome> + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("duality certification", Box::new(duality_certification)),
        ("reversibility", Box::new(reversibility)),
        ("variance bound", Box::new(variance_bound)),
        ("fractional solver consistency", Box::new(|| fractional_solver(root))),
        ("FK moments", Box::new(fk_moments)),
        ("FIN exponent", Box::new(|| fin_exponent(root))),
        ("hydrodynamic desk check", Box::new(|| hydro_desk_check(root))),
        ("frequency-field homogenization", Box::new(|| homogenization(root))),
        ("environment law", Box::new(|| environment_law(root))),
    ];
    let mut all = true;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= pass;
        println!("{} {id}. {name} ({secs:.1} s): {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
