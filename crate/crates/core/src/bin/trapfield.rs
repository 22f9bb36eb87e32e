use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trapfield::environment::{build_environment, TailLaw};
use trapfield::exclusion::{sample_binomial_profile, IpsSimulator};
use trapfield::fields::theta_n;
use trapfield::harness::{
    num, output_dir, report_convergence, run_experiment, ExperimentConfig, ExperimentKind, FinSettings, FkeSettings,
    RunManifest, Table,
};
use trapfield::rng::{derive_seed, rng_from_seed};
use trapfield::{Profile, Result};

/// Interacting trap models: simulators, duality oracles and fractional references.
#[derive(Parser)]
#[command(name = "trapfield", version)]
struct Cli {
    /// Master seed; overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Model {
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    a: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a trap environment and write it as JSON.
    Env {
        #[command(flatten)]
        model: Model,
        /// Lattice half-width.
        #[arg(long = "half-width", short = 'L', default_value_t = 20)]
        half_width: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Annealed mean squared displacement of the trap walker.
    Walk {
        #[command(flatten)]
        model: Model,
        #[arg(long = "half-width", short = 'L', default_value_t = 200)]
        half_width: usize,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        replicas: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Simulate the exclusion process from a constant-density binomial state.
    Ips {
        #[command(flatten)]
        model: Model,
        #[arg(long = "half-width", short = 'L', default_value_t = 20)]
        half_width: usize,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        /// Scale used for the time change `t theta_n`.
        #[arg(long, default_value_t = 10.0)]
        n: f64,
        /// Macroscopic time.
        #[arg(long, default_value_t = 0.1)]
        t: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Randomized battery of the duality relations and the variance bound.
    Duality {
        #[arg(long, default_value_t = 200)]
        cases: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Hydrodynamic ensemble of the density or frequency field.
    Fields {
        #[command(flatten)]
        model: Model,
        #[arg(long, value_delimiter = ',', default_value = "10,20")]
        n: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        replicas: u64,
        /// Independent environments per n.
        #[arg(long, default_value_t = 1)]
        environments: u64,
        /// Pair the frequency field instead of the density field.
        #[arg(long)]
        frequency: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Validate the fractional kinetics solvers.
    Fke {
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        d_eff: f64,
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 20_000)]
        samples: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Annealed MSD of the one-dimensional FIN chain.
    Fin {
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_value = "10,31.6,100,316,1000")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        environments: u64,
        #[arg(long, default_value_t = 200)]
        paths: u64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run an experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Convergence report over hydrodynamic runs at several n.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, short, default_value = "report")]
        out: PathBuf,
    },
}

fn base_config(kind: ExperimentKind, seed: u64) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!("kind = \"{}\"\nseed = {seed}\n", kind.name())).expect("minimal config is valid")
}

fn finish(cfg: ExperimentConfig, out: Option<PathBuf>) -> Result<bool> {
    let dir = out.unwrap_or_else(|| output_dir(&cfg));
    let manifest = run_experiment(&cfg, &dir)?;
    print_manifest(&manifest, &dir);
    Ok(manifest.passed())
}

fn print_manifest(m: &RunManifest, dir: &std::path::Path) {
    println!("{} -> {} ({:.1} s)", m.kind, dir.display(), m.wall_clock_seconds);
    for c in &m.checks {
        println!("  [{}] {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    for f in &m.failures {
        println!("  [error] {}: {}", f.label, f.error);
    }
}

fn run(cli: Cli) -> Result<bool> {
    let seed = cli.seed.unwrap_or(1);
    match cli.command {
        Command::Env { model, half_width, out } => {
            let env = build_environment(model.d, half_width, TailLaw::new(model.beta)?, seed)?;
            let json = env.to_json()?;
            match out {
                Some(p) => fs::write(&p, json + "\n")?,
                None => println!("{json}"),
            }
            eprintln!(
                "{} sites, total depth {}, max depth {}",
                env.num_sites(),
                env.total_depth(),
                env.alpha().iter().max().copied().unwrap_or(0)
            );
            Ok(true)
        }
        Command::Walk {
            model,
            half_width,
            times,
            replicas,
            out,
        } => {
            let mut cfg = base_config(ExperimentKind::WalkerMsd, seed);
            cfg.d = model.d;
            cfg.beta = model.beta;
            cfg.a = model.a;
            cfg.half_width = Some(half_width);
            cfg.times = times;
            cfg.replicas = replicas;
            finish(cfg, out)
        }
        Command::Ips {
            model,
            half_width,
            rho,
            n,
            t,
            out,
        } => {
            let env = build_environment(model.d, half_width, TailLaw::new(model.beta)?, derive_seed(seed, "environment", 0))?;
            let mut rng = rng_from_seed(derive_seed(seed, "ips", 0));
            let eta0 = sample_binomial_profile(&env, &Profile::constant(rho)?, n, &mut rng)?;
            let mut sim = IpsSimulator::new(&env, model.a, &eta0)?;
            sim.advance_to(t * theta_n(n, model.d, model.beta)?, u64::MAX, &mut rng)?;
            let mut table = Table::new("ips-state", &["site", "alpha", "eta0", "eta"]);
            for x in 0..env.num_sites() {
                table.push(vec![
                    x.to_string(),
                    env.alpha_at(x).to_string(),
                    eta0.counts[x].to_string(),
                    sim.counts()[x].to_string(),
                ]);
            }
            match out {
                Some(p) => table.write(&p)?,
                None => print!("{}", table.render()),
            }
            eprintln!("{} events up to physical time {}", sim.events(), sim.time());
            Ok(true)
        }
        Command::Duality { cases, out } => {
            let mut cfg = base_config(ExperimentKind::DualityBattery, seed);
            cfg.replicas = cases;
            finish(cfg, out)
        }
        Command::Fields {
            model,
            n,
            times,
            replicas,
            environments,
            frequency,
            out,
        } => {
            let kind = if frequency {
                ExperimentKind::HydroFrequency
            } else {
                ExperimentKind::HydroDensity
            };
            let mut cfg = base_config(kind, seed);
            cfg.d = model.d;
            cfg.beta = model.beta;
            cfg.a = model.a;
            cfg.n = n;
            cfg.times = times;
            cfg.replicas = replicas;
            cfg.environments = environments;
            cfg.validate()?;
            finish(cfg, out)
        }
        Command::Fke {
            beta,
            d_eff,
            nodes,
            dt,
            times,
            samples,
            out,
        } => {
            let mut cfg = base_config(ExperimentKind::FkeValidate, seed);
            cfg.beta = beta;
            cfg.times = times;
            cfg.fke = FkeSettings {
                nodes,
                dt,
                d_eff: Some(d_eff),
                samples,
                ..FkeSettings::default()
            };
            cfg.validate()?;
            finish(cfg, out)
        }
        Command::Fin {
            beta,
            times,
            environments,
            paths,
            eps,
            out,
        } => {
            let mut cfg = base_config(ExperimentKind::FinMsd, seed);
            cfg.beta = beta;
            cfg.times = times;
            cfg.fin = FinSettings {
                eps,
                environments,
                paths,
                ..FinSettings::default()
            };
            cfg.validate()?;
            finish(cfg, out)
        }
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::from_toml(&fs::read_to_string(&config)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            finish(cfg, out)
        }
        Command::Report { dirs, out } => {
            let report = report_convergence(&dirs)?;
            report.write(&out)?;
            println!("{} report -> {}", report.kind.name(), out.display());
            for (t, f, ok) in &report.trends {
                println!("  [{}] t={} f{}: gap shrinks within CI", if *ok { "pass" } else { "FAIL" }, num(*t), f);
            }
            Ok(report.trend_holds())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("TRAPFIELD_THREADS") {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => eprintln!("ignoring TRAPFIELD_THREADS={v}: expected a positive integer"),
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
