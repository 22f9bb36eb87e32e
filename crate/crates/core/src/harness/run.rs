use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::output::{num, Chart, Check, ReplicaFailure, ReplicaSeed, RunManifest, Series, Table};
use crate::duality::run_battery;
use crate::environment::{
    build_environment, laplace_functional_w, laplace_functional_wn_exact, pair, rescaled_measure, Environment,
    TestFunction,
};
use crate::error::{Error, Result};
use crate::fields::{decomposition_diagnostics, field_rows, hydro_ensemble, theta_n, HydroEnsemble};
use crate::fractional::{
    build_fin_chain, fin_msd, fin_semigroup, fke_solve_l1, fke_spectral, fke_subordination, mittag_leffler,
    sample_inverse_subordinator, simulate_fk, Grid,
};
use crate::lattice::Geometry;
use crate::numeric::{gamma, linear_fit};
use crate::profile::Profile;
use crate::rng::{derive_seed, stream_rng};
use crate::stats::{Estimate, Running};
use crate::walker::{msd_curve, solve_one_particle_forward, MsdPoint};

/// Artifacts of one experiment before they are written.
struct Artifacts {
    tables: Vec<(String, Table)>,
    charts: Vec<(String, Chart)>,
    seeds: Vec<ReplicaSeed>,
    failures: Vec<ReplicaFailure>,
    checks: Vec<Check>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts {
            tables: Vec::new(),
            charts: Vec::new(),
            seeds: Vec::new(),
            failures: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn seed(&mut self, master: u64, label: &str, index: u64) -> u64 {
        let seed = derive_seed(master, label, index);
        self.seeds.push(ReplicaSeed {
            label: format!("{label}/{index}"),
            seed,
        });
        seed
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail,
        });
    }

    fn fail(&mut self, label: String, err: &Error) {
        self.failures.push(ReplicaFailure {
            label,
            error: err.to_string(),
        });
    }
}

/// Runs one experiment and writes its CSV, SVG, config copy and manifest
/// into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut art = Artifacts::new();
    match config.kind {
        ExperimentKind::EnvTail => env_tail(config, &mut art)?,
        ExperimentKind::WalkerMsd => walker_msd(config, &mut art)?,
        ExperimentKind::DualityBattery => duality_battery(config, &mut art)?,
        ExperimentKind::HydroDensity | ExperimentKind::HydroFrequency => hydro(config, &mut art)?,
        ExperimentKind::FkeValidate => fke_validate(config, &mut art)?,
        ExperimentKind::FinMsd => fin_experiment(config, &mut art)?,
    }
    let mut outputs = vec!["config.toml".to_string()];
    fs::write(out_dir.join("config.toml"), config.to_toml()?)?;
    for (name, table) in &art.tables {
        table.write(&out_dir.join(name))?;
        outputs.push(name.clone());
    }
    for (name, chart) in &art.charts {
        chart.write(&out_dir.join(name))?;
        outputs.push(name.clone());
    }
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        kind: config.kind.name().into(),
        config_hash: config.hash()?,
        code_version: env!("CARGO_PKG_VERSION").into(),
        master_seed: config.seed,
        seeds: art.seeds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs,
        failures: art.failures,
        checks: art.checks,
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Default output directory for a config.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .output
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs").join(config.kind.name()))
}

/// Half-width covering the support of every test function at scale `n`.
fn support_half_width(fs: &[TestFunction], n: f64) -> usize {
    let reach = fs
        .iter()
        .map(|f| f.radius + f.center.iter().fold(0.0f64, |m, c| m.max(c.abs())))
        .fold(0.0, f64::max);
    (reach * n).ceil() as usize + 1
}

fn env_tail(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let law = cfg.law()?;
    let fs = cfg.test_functions_or_default()?;
    let mut table = Table::new(
        "env-tail",
        &["n", "f", "estimate", "se", "exact_n", "limit", "gap", "exact_gap"],
    );
    let mut chart = Chart::new("Laplace functional of W^n", "n", "|E exp(-<W^n|f>) - limit|").log_log();
    for (fi, f) in fs.iter().enumerate() {
        let limit = laplace_functional_w(f, cfg.beta)?;
        let mut mc_series = Vec::new();
        let mut exact_series = Vec::new();
        let mut errs = Vec::new();
        for (ni, &n) in cfg.n.iter().enumerate() {
            let base = art.seed(cfg.seed, &format!("env-tail/f{fi}"), ni as u64);
            let hw = support_half_width(&fs, n);
            let vals = (0..cfg.replicas)
                .into_par_iter()
                .map(|r| {
                    let env = build_environment(cfg.d, hw, law, derive_seed(base, "environment", r))?;
                    Ok((-pair(&rescaled_measure(&env, n)?, f)).exp())
                })
                .collect::<Result<Vec<f64>>>()?;
            let est = vals.iter().copied().collect::<Running>().estimate();
            let exact = laplace_functional_wn_exact(f, n, cfg.beta)?;
            table.push(vec![
                num(n),
                fi.to_string(),
                num(est.mean),
                num(est.se),
                num(exact),
                num(limit),
                num(est.mean - limit),
                num(exact - limit),
            ]);
            mc_series.push((n, (est.mean - limit).abs()));
            errs.push(est.se);
            exact_series.push((n, (exact - limit).abs()));
        }
        let last = mc_series.last().map(|p| p.1).unwrap_or(0.0);
        let last_se = errs.last().copied().unwrap_or(0.0);
        art.check(
            &format!("f{fi}: agreement at largest n"),
            last <= 0.02 * limit + 3.0 * last_se,
            format!("gap {last:.3e}, 2% of limit {:.3e}, se {last_se:.2e}", 0.02 * limit),
        );
        chart.series.push(Series {
            label: format!("f{fi} Monte Carlo"),
            points: mc_series,
            errors: None,
        });
        chart.series.push(Series {
            label: format!("f{fi} exact"),
            points: exact_series,
            errors: None,
        });
    }
    art.tables.push(("env_tail.csv".into(), table));
    art.charts.push(("env_tail.svg".into(), chart));
    Ok(())
}

/// Log-log slope of an MSD curve over the points with positive time.
pub fn msd_slope(points: &[MsdPoint]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.t > 0.0 && p.msd > 0.0)
        .map(|p| (p.t.ln(), p.msd.ln()))
        .unzip();
    linear_fit(&x, &y).0
}

fn msd_table(schema: &str, points: &[MsdPoint]) -> Table {
    let mut t = Table::new(schema, &["t", "msd", "se"]);
    for p in points {
        t.push(vec![num(p.t), num(p.msd), num(p.se)]);
    }
    t
}

fn msd_chart(title: &str, points: &[MsdPoint]) -> Chart {
    let mut c = Chart::new(title, "t", "mean squared displacement").log_log();
    c.series.push(Series {
        label: "msd".into(),
        points: points.iter().map(|p| (p.t, p.msd)).collect(),
        errors: None,
    });
    c
}

fn walker_msd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let hw = cfg.half_width.unwrap_or(200);
    let geometry = Geometry::torus(cfg.d, hw)?;
    let seed = art.seed(cfg.seed, "walker-msd", 0);
    let points = msd_curve(geometry, cfg.law()?, cfg.a, &cfg.times, cfg.replicas, seed)?;
    let slope = msd_slope(&points);
    art.check("log-log slope", slope.is_finite(), format!("slope {slope:.4}"));
    art.tables.push(("walker_msd.csv".into(), msd_table("walker-msd", &points)));
    art.charts.push(("walker_msd.svg".into(), msd_chart("walker MSD", &points)));
    Ok(())
}

/// `D_eff` such that `E|X^n_t|^2 ~ 2 d D_eff t^beta / Gamma(1 + beta)` for the
/// rescaled walker, fitted over the macroscopic `times` (annealed).
pub fn estimate_d_eff(
    geometry: Geometry,
    cfg: &ExperimentConfig,
    n: f64,
    times: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let theta = theta_n(n, cfg.d, cfg.beta)?;
    let physical: Vec<f64> = times.iter().map(|t| t * theta).collect();
    let pts = msd_curve(geometry, cfg.law()?, cfg.a, &physical, replicas, seed)?;
    let k = 2.0 * cfg.d as f64 / gamma(1.0 + cfg.beta);
    let per_time: Running = pts
        .iter()
        .zip(times)
        .filter(|(_, &t)| t > 0.0)
        .map(|(p, &t)| p.msd / (n * n) / (k * t.powf(cfg.beta)))
        .collect();
    Ok((per_time.mean(), per_time.std_error()))
}

fn duality_battery(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let seed = art.seed(cfg.seed, "duality-battery", 0);
    let res = run_battery(cfg.replicas, seed)?;
    let mut t = Table::new("duality", &["case", "relation", "lhs", "rhs", "abs_gap", "pass"]);
    for (i, r) in res.duality.iter().enumerate() {
        t.push(vec![
            (i / 2).to_string(),
            r.relation.clone(),
            num(r.lhs),
            num(r.rhs),
            num(r.abs_gap),
            r.pass.to_string(),
        ]);
    }
    let mut v = Table::new("variance-bound", &["case", "lhs", "rhs", "slack", "pass"]);
    for (i, r) in res.variance.iter().enumerate() {
        v.push(vec![i.to_string(), num(r.lhs), num(r.rhs), num(r.slack), r.pass.to_string()]);
    }
    art.check(
        "duality relations",
        res.duality_passed() == res.duality.len(),
        format!("{}/{} pass, max gap {:.2e}", res.duality_passed(), res.duality.len(), res.max_gap()),
    );
    art.check(
        "variance bound",
        res.variance_passed() == res.variance.len(),
        format!("{}/{} pass, min slack {:.2e}", res.variance_passed(), res.variance.len(), res.min_slack()),
    );
    art.tables.push(("duality.csv".into(), t));
    art.tables.push(("variance_bound.csv".into(), v));
    Ok(())
}

/// Reference `n^{-d} sum_x (P_t rho_0)(x/n) f(x/n)` for the frequency field.
///
/// In one dimension `P_t` is the speed-measure chain on the atoms of `W^n`;
/// otherwise it is the fractional kinetics semigroup with diffusion constant
/// `d_eff`, solved spectrally on the torus of the lattice.
pub fn frequency_reference(
    env: &Environment,
    n: f64,
    times: &[f64],
    f: &TestFunction,
    rho0: &Profile,
    d_eff: f64,
    grid_nodes: usize,
) -> Result<Vec<f64>> {
    let d = env.dim();
    let sites = env.num_sites();
    let pos: Vec<[f64; 3]> = (0..sites).map(|x| env.geometry.position(x, n)).collect();
    let weights: Vec<f64> = pos.iter().map(|p| f.eval(&p[..d])).collect();
    let norm = n.powi(-(d as i32));
    if d == 1 {
        let measure = rescaled_measure(env, n)?;
        let chain = build_fin_chain(&measure)?;
        let g: Vec<f64> = chain.x.iter().map(|&x| rho0.eval(&[x])).collect();
        return times
            .iter()
            .map(|&t| {
                let v = fin_semigroup(&chain, &g, t, 0)?.values;
                Ok(norm
                    * pos
                        .iter()
                        .zip(&weights)
                        .map(|(p, w)| w * v[chain.nearest(p[0])])
                        .sum::<f64>())
            })
            .collect();
    }
    let period = env.geometry.side() as f64 / n;
    let grid = Grid::new(d, grid_nodes, period)?;
    let rho = grid.sample(rho0);
    times
        .iter()
        .map(|&t| {
            let v = fke_spectral(&grid, env.beta(), d_eff, &rho, t)?;
            Ok(norm
                * pos
                    .iter()
                    .zip(&weights)
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(p, w)| w * grid.interpolate(&v, &p[..d]))
                    .sum::<f64>())
        })
        .collect()
}

/// Exact mean of `<Z^n_t|f>` from the one-particle semigroup.
pub fn frequency_duality_mean(
    env: &Environment,
    a: f64,
    n: f64,
    times: &[f64],
    f: &TestFunction,
    rho0: &Profile,
) -> Result<Vec<f64>> {
    Ok(pair_profiles(env, n, f, &evolve_profile(env, a, n, times, rho0)?))
}

/// `rho0` at the sites, pushed forward by the rescaled one-particle semigroup.
fn evolve_profile(env: &Environment, a: f64, n: f64, times: &[f64], rho0: &Profile) -> Result<Vec<Vec<f64>>> {
    let d = env.dim();
    let rho: Vec<f64> = (0..env.num_sites())
        .map(|x| rho0.eval(&env.geometry.position(x, n)[..d]))
        .collect();
    solve_one_particle_forward(env, a, n, times, &rho)
}

fn pair_profiles(env: &Environment, n: f64, f: &TestFunction, evolved: &[Vec<f64>]) -> Vec<f64> {
    let d = env.dim();
    let norm = n.powi(-(d as i32));
    evolved
        .iter()
        .map(|v| {
            norm * (0..env.num_sites())
                .map(|x| f.eval(&env.geometry.position(x, n)[..d]) * v[x])
                .sum::<f64>()
        })
        .collect()
}

/// Fraction of the evolved excess `P_t rho_0 - floor` outside the inner half
/// of the box (`max_i |x_i| > L/2`); `floor` is the minimum of `rho_0`, which
/// the semigroup leaves in place.
fn boundary_mass(env: &Environment, evolved: &[Vec<f64>], floor: f64) -> Vec<f64> {
    let d = env.dim();
    let hw = env.geometry.half_width().unwrap_or(env.geometry.side() / 2) as f64;
    let outer: Vec<bool> = (0..env.num_sites())
        .map(|x| env.geometry.coords(x)[..d].iter().any(|&c| c.abs() as f64 > hw / 2.0))
        .collect();
    evolved
        .iter()
        .map(|v| {
            let total: f64 = v.iter().map(|m| (m - floor).max(0.0)).sum();
            let out: f64 = v
                .iter()
                .zip(&outer)
                .filter(|(_, &o)| o)
                .map(|(m, _)| (m - floor).max(0.0))
                .sum();
            if total > 0.0 {
                out / total
            } else {
                0.0
            }
        })
        .collect()
}

/// Per-environment values for one `(n, f, t)`; `(mean, se)` pairs.
/// `ips` is `None` for environments without IPS replicas.
struct EnvPoint {
    reference: f64,
    duality_mean: f64,
    boundary_mass: f64,
    ips: Option<IpsPoint>,
}

struct IpsPoint {
    field: (f64, f64),
    variance_ratio: (f64, f64),
    spread_ratio: (f64, f64),
}

/// Mean over environments. With one environment the within-environment
/// error is kept; otherwise the spread across environments is used.
fn pool(values: &[(f64, f64)]) -> (f64, f64) {
    if values.len() == 1 {
        return values[0];
    }
    let r: Running = values.iter().map(|v| v.0).collect();
    (r.mean(), r.std_error())
}

fn hydro(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let frequency = cfg.kind == ExperimentKind::HydroFrequency;
    let law = cfg.law()?;
    let fs = cfg.test_functions_or_default()?;
    let rho0 = cfg.rho0_or_default()?;
    let k_env = cfg.environments;
    let mut summary = Table::new(
        cfg.kind.name(),
        &[
            "n",
            "t",
            "f",
            "field",
            "field_se",
            "reference",
            "gap",
            "gap_se",
            "duality_mean",
            "variance_ratio",
            "variance_ratio_se",
            "spread_ratio",
            "spread_ratio_se",
            "boundary_mass",
            "d_eff",
            "environments",
        ],
    );
    let mut per_env = Table::new(
        "environments",
        &["n", "environment", "t", "f", "field", "field_se", "reference", "duality_mean", "boundary_mass"],
    );
    let mut replicas = Table::new("replicas", &["n", "environment", "f", "t", "replica", "x_pair", "z_pair"]);
    for (ni, &n) in cfg.n.iter().enumerate() {
        let hw = cfg.half_width_for(n);
        let d_eff = if frequency && cfg.d > 1 {
            match cfg.fke.d_eff {
                Some(v) => v,
                None => {
                    let s = art.seed(cfg.seed, "d-eff", ni as u64);
                    let geometry = Geometry::torus(cfg.d, hw)?;
                    estimate_d_eff(geometry, cfg, n, &cfg.times, cfg.fke.walkers, s)?.0
                }
            }
        } else {
            1.0
        };
        // points[fi][k] collects one entry per environment
        let mut points: Vec<Vec<Vec<EnvPoint>>> = fs.iter().map(|_| cfg.times.iter().map(|_| Vec::new()).collect()).collect();
        for e in 0..k_env {
            let index = ni as u64 * k_env + e;
            let env_seed = art.seed(cfg.seed, "environment", index);
            let env = match build_environment(cfg.d, hw, law, env_seed) {
                Ok(env) => env,
                Err(err) => {
                    art.fail(format!("n={n} env{e}"), &err);
                    continue;
                }
            };
            let evolved = match evolve_profile(&env, cfg.a, n, &cfg.times, &rho0) {
                Ok(v) => v,
                Err(err) => {
                    art.fail(format!("n={n} env{e}"), &err);
                    continue;
                }
            };
            let floor = (0..env.num_sites())
                .map(|x| rho0.eval(&env.geometry.position(x, n)[..cfg.d]))
                .fold(f64::INFINITY, f64::min);
            let boundary = boundary_mass(&env, &evolved, floor);
            let with_ips = !frequency || e < cfg.ips_environments.unwrap_or(k_env);
            for (fi, f) in fs.iter().enumerate() {
                let freq_ref = if frequency {
                    Some((
                        frequency_reference(&env, n, &cfg.times, f, &rho0, d_eff, cfg.fke.nodes)?,
                        pair_profiles(&env, n, f, &evolved),
                    ))
                } else {
                    None
                };
                if !with_ips {
                    let (r, dm) = freq_ref.expect("frequency run");
                    for (k, &t) in cfg.times.iter().enumerate() {
                        per_env.push(vec![
                            num(n),
                            e.to_string(),
                            num(t),
                            fi.to_string(),
                            String::new(),
                            String::new(),
                            num(r[k]),
                            num(dm[k]),
                            num(boundary[k]),
                        ]);
                        points[fi][k].push(EnvPoint { reference: r[k], duality_mean: dm[k], boundary_mass: boundary[k], ips: None });
                    }
                    continue;
                }
                let seed = art.seed(cfg.seed, &format!("hydro/f{fi}"), index);
                let ens: HydroEnsemble = match hydro_ensemble(&env, cfg.a, n, &cfg.times, f, &rho0, cfg.replicas, seed) {
                    Ok(ens) => ens,
                    Err(err) => {
                        art.fail(format!("n={n} env{e} f{fi}"), &err);
                        continue;
                    }
                };
                for (k, reference) in ens.references.iter().enumerate() {
                    let dec = decomposition_diagnostics(&ens.records[k], reference);
                    let (field, reference_value, duality_mean) = match &freq_ref {
                        Some((r, dm)) => {
                            let z: Running = ens.records[k].iter().map(|r| r.z_pair).collect();
                            (z.estimate(), r[k], dm[k])
                        }
                        None => (dec.field, reference.mean_reference, reference.mean_reference),
                    };
                    per_env.push(vec![
                        num(n),
                        e.to_string(),
                        num(reference.t),
                        fi.to_string(),
                        num(field.mean),
                        num(field.se),
                        num(reference_value),
                        num(duality_mean),
                        num(boundary[k]),
                    ]);
                    points[fi][k].push(EnvPoint {
                        reference: reference_value,
                        duality_mean,
                        boundary_mass: boundary[k],
                        ips: Some(IpsPoint {
                            field: (field.mean, field.se),
                            variance_ratio: dec.variance_ratio,
                            spread_ratio: dec.spread_ratio,
                        }),
                    });
                }
                for (t, rep, x, z) in field_rows(&ens) {
                    replicas.push(vec![num(n), e.to_string(), fi.to_string(), num(t), rep.to_string(), num(x), num(z)]);
                }
            }
        }
        for (fi, per_f) in points.iter().enumerate() {
            for (k, pts) in per_f.iter().enumerate() {
                let ips: Vec<(&EnvPoint, &IpsPoint)> = pts.iter().filter_map(|p| p.ips.as_ref().map(|i| (p, i))).collect();
                if ips.is_empty() {
                    continue;
                }
                let t = cfg.times[k];
                let m = pts.len() as f64;
                let field = pool(&ips.iter().map(|(_, i)| i.field).collect::<Vec<_>>());
                // exact duality-mean gap over every environment plus the IPS
                // deviation from the duality mean where replicas were run
                let exact = pool(&pts.iter().map(|p| (p.duality_mean - p.reference, 0.0)).collect::<Vec<_>>());
                let noise = pool(&ips.iter().map(|(p, i)| (i.field.0 - p.duality_mean, i.field.1)).collect::<Vec<_>>());
                let gap = (exact.0 + noise.0, exact.1.hypot(noise.1));
                let reference = pts.iter().map(|p| p.reference).sum::<f64>() / m;
                let duality_mean = pts.iter().map(|p| p.duality_mean).sum::<f64>() / m;
                let boundary = pts.iter().map(|p| p.boundary_mass).sum::<f64>() / m;
                let vr = pool(&ips.iter().map(|(_, i)| i.variance_ratio).collect::<Vec<_>>());
                let sr = pool(&ips.iter().map(|(_, i)| i.spread_ratio).collect::<Vec<_>>());
                summary.push(vec![
                    num(n),
                    num(t),
                    fi.to_string(),
                    num(field.0),
                    num(field.1),
                    num(reference),
                    num(gap.0),
                    num(gap.1),
                    num(duality_mean),
                    num(vr.0),
                    num(vr.1),
                    num(sr.0),
                    num(sr.1),
                    num(boundary),
                    if frequency && cfg.d > 1 { num(d_eff) } else { String::new() },
                    pts.len().to_string(),
                ]);
                if !frequency {
                    let z = Estimate { mean: gap.0, se: gap.1, n: ips.len() as u64 }.z_score(0.0);
                    art.check(&format!("n={n} t={t} f{fi}: mean identity"), z <= 3.0, format!("z = {z:.2}"));
                    art.check(
                        &format!("n={n} t={t} f{fi}: variance bound"),
                        vr.0 <= 1.0 + 4.0 * vr.1,
                        format!("ratio {:.3} +- {:.3}", vr.0, vr.1),
                    );
                }
            }
        }
    }
    art.charts.push(("gaps.svg".into(), gap_chart(&summary, cfg.kind.name())?));
    art.tables.push(("summary.csv".into(), summary));
    art.tables.push(("environments.csv".into(), per_env));
    art.tables.push(("replicas.csv".into(), replicas));
    Ok(())
}

/// `|field - reference|` against `n`, one series per `(t, f)`.
pub(crate) fn gap_chart(summary: &Table, title: &str) -> Result<Chart> {
    let ns = summary.floats("n")?;
    let ts = summary.floats("t")?;
    let fs = summary.floats("f")?;
    let gaps = summary.floats("gap")?;
    let ses = summary.floats("gap_se")?;
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for (t, f) in ts.iter().zip(&fs) {
        if !keys.contains(&(*t, *f)) {
            keys.push((*t, *f));
        }
    }
    let mut chart = Chart::new(&format!("{title}: gap to reference"), "n", "|field - reference|");
    chart.log_x = true;
    for (t, f) in keys {
        let idx: Vec<usize> = (0..ns.len()).filter(|&i| ts[i] == t && fs[i] == f).collect();
        chart.series.push(Series {
            label: format!("t={t} f{f}"),
            points: idx.iter().map(|&i| (ns[i], gaps[i].abs())).collect(),
            errors: Some(idx.iter().map(|&i| ses[i]).collect()),
        });
    }
    Ok(chart)
}

/// Projection of node values onto `cos(k x_1)`, averaged over other axes.
pub fn cosine_amplitude(grid: &Grid, values: &[f64], k: f64) -> f64 {
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v * (k * grid.position(i)[0]).cos();
    }
    2.0 * acc / values.len() as f64
}

fn fke_validate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let s = &cfg.fke;
    let beta = cfg.beta;
    let d_eff = s.d_eff.unwrap_or(1.0);
    let rho0 = match &cfg.rho0 {
        Some(p) => p.clone(),
        None => Profile::cosine(0.5, 0.5, 1.0)?,
    };
    let grid = Grid::new(cfg.d, s.nodes, s.period)?;
    let rho = grid.sample(&rho0);
    let t_max = cfg.times.iter().cloned().fold(0.0, f64::max);
    let steps = (t_max / s.dt).round() as usize;
    let sol = fke_solve_l1(&grid, beta, d_eff, &rho, s.dt, steps, s.mode)?;
    let (lo, hi) = rho.iter().fold((f64::MAX, f64::MIN), |a, &v| (a.0.min(v), a.1.max(v)));
    let m0 = sol.mass(0);
    let max_mass_defect = (0..=steps).map(|k| (sol.mass(k) - m0).abs() / m0.abs().max(1e-300)).fold(0.0, f64::max);
    let principle = sol.values.iter().flatten().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12);
    art.check("mass conservation", max_mass_defect <= 1e-10, format!("max relative defect {max_mass_defect:.2e}"));
    art.check("maximum principle", principle, format!("range [{lo}, {hi}]"));

    let mut probes = Table::new(
        "fke-probes",
        &["t", "x", "l1", "spectral", "subordination", "subordination_se"],
    );
    let mut worst_z: f64 = 0.0;
    for (ti, &t) in cfg.times.iter().enumerate() {
        let step = (t / s.dt).round() as usize;
        let spec = fke_spectral(&grid, beta, d_eff, &rho, t)?;
        for (pi, x) in s.probes.iter().enumerate() {
            if x.len() != cfg.d {
                return Err(Error::param("probes", "dimension differs from d"));
            }
            let seed = art.seed(cfg.seed, "fke-subordination", (ti * s.probes.len() + pi) as u64);
            let mc = fke_subordination(&rho0, beta, d_eff, t, x, s.samples, seed)?;
            let l1 = sol.at(step, x);
            let sp = grid.interpolate(&spec, x);
            // discretization error of L1 estimated by its distance to the spectral solution
            let tol = 3.0 * mc.se + (l1 - sp).abs() + 1e-12;
            worst_z = worst_z.max((mc.mean - l1).abs() / tol * 3.0);
            probes.push(vec![num(t), format!("{x:?}"), num(l1), num(sp), num(mc.mean), num(mc.se)]);
        }
    }
    art.check(
        "subordination vs L1",
        worst_z <= 3.0,
        format!("worst normalized gap {worst_z:.2} (3 = edge of band)"),
    );

    if let Profile::Cosine {
        amplitude, wavenumber, ..
    } = rho0
    {
        let mut modes = Table::new("fke-mode", &["t", "l1_amplitude", "oracle", "error"]);
        let mut worst: f64 = 0.0;
        let mut series = Vec::new();
        for step in 0..=steps {
            let t = step as f64 * s.dt;
            let amp = cosine_amplitude(&grid, &sol.values[step], wavenumber);
            let oracle = amplitude * mittag_leffler(beta, -d_eff * wavenumber * wavenumber * t.powf(beta))?;
            if cfg.times.iter().any(|&x| (x - t).abs() < 0.5 * s.dt) {
                worst = worst.max((amp - oracle).abs());
                modes.push(vec![num(t), num(amp), num(oracle), num(amp - oracle)]);
            }
            series.push((t, amp - oracle));
        }
        art.check("Fourier mode", worst <= 1e-3, format!("max error {worst:.2e} at the recorded times"));
        let mut c = Chart::new("L1 mode error", "t", "amplitude - oracle");
        c.series.push(Series {
            label: format!("beta={beta}"),
            points: series,
            errors: None,
        });
        art.tables.push(("fke_mode.csv".into(), modes));
        art.charts.push(("fke_mode.svg".into(), c));
    }

    // Laplace transform of the inverse subordinator and FK moments
    let mut lap = Table::new("inverse-subordinator", &["lambda", "t", "estimate", "se", "oracle"]);
    let mut fk = Table::new("fk-moments", &["t", "msd", "se", "oracle"]);
    let mut lap_ok = true;
    let mut fk_ok = true;
    for (i, &t) in [0.5, 1.0, 2.0].iter().enumerate() {
        let seed = art.seed(cfg.seed, "inverse-subordinator", i as u64);
        let mut rng = stream_rng(seed, "draws", 0);
        let draws: Vec<f64> = (0..s.samples)
            .map(|_| sample_inverse_subordinator(beta.min(0.999_999), t, &mut rng))
            .collect::<Result<_>>()?;
        for &lambda in &[0.5, 1.0, 2.0] {
            let est = draws.iter().map(|s| (-lambda * s).exp()).collect::<Running>().estimate();
            let oracle = mittag_leffler(beta, -lambda * t.powf(beta))?;
            lap_ok &= est.within(oracle, 4.0);
            lap.push(vec![num(lambda), num(t), num(est.mean), num(est.se), num(oracle)]);
        }
        let mut rng = stream_rng(seed, "fk", 0);
        let sq: Running = (0..s.samples)
            .map(|_| simulate_fk(beta.min(0.999_999), cfg.d, t, &mut rng).map(|p| p.iter().map(|c| c * c).sum::<f64>()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .collect();
        let oracle = cfg.d as f64 * t.powf(beta) / gamma(1.0 + beta);
        fk_ok &= sq.estimate().within(oracle, 4.0);
        fk.push(vec![num(t), num(sq.mean()), num(sq.std_error()), num(oracle)]);
    }
    art.check("inverse subordinator Laplace transform", lap_ok, "4 SE at 9 points".into());
    art.check("FK second moment", fk_ok, "4 SE at 3 times".into());

    let mut sol_table = Table::new("fke-solution", &["t", "x", "value"]);
    for &t in &cfg.times {
        let step = (t / s.dt).round() as usize;
        for i in 0..grid.nodes() {
            let p = grid.position(i);
            sol_table.push(vec![num(t), format!("{:?}", &p[..cfg.d]), num(sol.values[step][i])]);
        }
    }
    art.tables.push(("fke_probes.csv".into(), probes));
    art.tables.push(("fke_solution.csv".into(), sol_table));
    art.tables.push(("inverse_subordinator.csv".into(), lap));
    art.tables.push(("fk_moments.csv".into(), fk));
    Ok(())
}

fn fin_experiment(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let s = &cfg.fin;
    let seed = art.seed(cfg.seed, "fin-msd", 0);
    let points = fin_msd(cfg.beta, &cfg.times, s.environments, s.paths, s.eps, s.half_width, seed)?;
    let slope = msd_slope(&points);
    let target = 2.0 * cfg.beta / (1.0 + cfg.beta);
    art.check(
        "FIN exponent",
        (slope - target).abs() <= 0.1,
        format!("slope {slope:.4}, target {target:.4}"),
    );
    art.tables.push(("fin_msd.csv".into(), msd_table("fin-msd", &points)));
    art.charts.push(("fin_msd.svg".into(), msd_chart("FIN chain MSD", &points)));
    Ok(())
}
