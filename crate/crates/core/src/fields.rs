//! Rescaled density and frequency fields, the time scale `theta_n`, and the
//! fluctuation decomposition of the density field.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, TestFunction};
use crate::error::{Error, Result};
use crate::exclusion::{sample_binomial_profile, Configuration, IpsSimulator};
use crate::profile::Profile;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{Estimate, Running};
use crate::walker::solve_one_particle_forward;

/// Time scale: `n^{2/beta}` for `d >= 3`, `n^{2/beta} (ln n)^{1-1/beta}` for
/// `d = 2`, `n^{1+1/beta}` for `d = 1`.
pub fn theta_n(n: f64, d: usize, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param("beta", format!("{beta} not in (0, 1]")));
    }
    if !(n >= 1.0) {
        return Err(Error::param("n", "must be at least 1"));
    }
    match d {
        1 => Ok(n.powf(1.0 + 1.0 / beta)),
        2 => {
            if n <= 1.0 {
                return Err(Error::param("n", "d = 2 needs n > 1 (log n must be positive)"));
            }
            Ok(n.powf(2.0 / beta) * n.ln().powf(1.0 - 1.0 / beta))
        }
        3 => Ok(n.powf(2.0 / beta)),
        _ => Err(Error::param("d", format!("{d} not in 1..=3"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub n: f64,
    pub d: usize,
    pub beta: f64,
    pub theta_n: f64,
}

impl ScalingSpec {
    pub fn new(n: f64, d: usize, beta: f64) -> Result<Self> {
        Ok(ScalingSpec {
            n,
            d,
            beta,
            theta_n: theta_n(n, d, beta)?,
        })
    }
}

fn site_values(env: &Environment, n: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let d = env.dim();
    (0..env.num_sites())
        .map(|x| f(&env.geometry.position(x, n)[..d]))
        .collect()
}

/// `<X^n | f> = n^{-d/beta} sum_x eta(x) f(x/n)`.
pub fn density_pair(eta: &[u64], env: &Environment, n: f64, f: &TestFunction) -> f64 {
    density_pair_with(eta, env, n, |x, _| f.eval(x))
}

/// Density pairing with a site-dependent integrand `f(x/n, x)`.
pub fn density_pair_with(eta: &[u64], env: &Environment, n: f64, f: impl Fn(&[f64], usize) -> f64) -> f64 {
    let d = env.dim();
    let scale = n.powf(-(d as f64) / env.beta());
    scale
        * eta
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(x, &e)| e as f64 * f(&env.geometry.position(x, n)[..d], x))
            .sum::<f64>()
}

/// `<Z^n | f> = n^{-d} sum_x (eta(x)/alpha_x) f(x/n)`.
pub fn frequency_pair(eta: &[u64], env: &Environment, n: f64, f: &TestFunction) -> f64 {
    let d = env.dim();
    n.powi(-(d as i32))
        * eta
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(x, &e)| e as f64 / env.alpha_at(x) as f64 * f.eval(&env.geometry.position(x, n)[..d]))
            .sum::<f64>()
}

/// Riemann sum `n^{-d} sum_x g(x/n)` over the box.
pub fn riemann_sum(env: &Environment, n: f64, g: impl Fn(&[f64]) -> f64) -> f64 {
    n.powi(-(env.dim() as i32)) * site_values(env, n, g).iter().sum::<f64>()
}

/// One replica of a quenched hydrodynamic run, at one macroscopic time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: u64,
    pub t: f64,
    /// `<X^n_t | f>`
    pub x_pair: f64,
    /// `<Z^n_t | f>`
    pub z_pair: f64,
    /// `<X^n_0 | P^n_t f>`
    pub x0_pt_f: f64,
    /// `n^{-d/beta} <X^n_0 | P^n_t f^2 - (P^n_t f)^2>`
    pub bound: f64,
}

impl ReplicaRecord {
    /// `I_n = <X^n_t|f> - <X^n_0|P^n_t f>`.
    pub fn fluctuation(&self) -> f64 {
        self.x_pair - self.x0_pt_f
    }
}

/// Deterministic (given the environment) quantities at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroReference {
    pub t: f64,
    /// `<P^n_t rho_0 W^n | f>`
    pub mean_reference: f64,
    /// `<rho_0 W^n | P^n_t f>`; equal to `mean_reference` by symmetry
    pub symmetric_reference: f64,
    /// `n^{-2d/beta} sum_x alpha_x rho_0 (1 - rho_0) (P^n_t f)^2`
    pub var_ii: f64,
    /// `n^{-d/beta} <W^n | f^2>`
    pub spread_scale: f64,
    /// Values of `P^n_t f` on the sites.
    #[serde(skip)]
    pub pt_f: Vec<f64>,
}

/// Quenched ensemble of IPS runs from `Bin(alpha_x, rho_0(x/n))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HydroEnsemble {
    pub n: f64,
    pub theta_n: f64,
    pub references: Vec<HydroReference>,
    /// `records[k]` holds all replicas at `references[k].t`.
    pub records: Vec<Vec<ReplicaRecord>>,
    pub events: u64,
}

/// Exact one-particle quantities needed by [`hydro_ensemble`].
pub fn hydro_references(
    env: &Environment,
    a: f64,
    n: f64,
    times: &[f64],
    f: &TestFunction,
    rho0: &Profile,
) -> Result<Vec<HydroReference>> {
    let d = env.dim();
    let scale = n.powf(-(d as f64) / env.beta());
    let fv = site_values(env, n, |x| f.eval(x));
    let f2: Vec<f64> = fv.iter().map(|v| v * v).collect();
    let rv = site_values(env, n, |x| rho0.eval(x));
    let pf = solve_one_particle_forward(env, a, n, times, &fv)?;
    let pr = solve_one_particle_forward(env, a, n, times, &rv)?;
    let alpha: Vec<f64> = env.alpha().iter().map(|&a| a as f64).collect();
    let spread_scale = scale * scale * alpha.iter().zip(&f2).map(|(a, v)| a * v).sum::<f64>();
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut mean = 0.0;
            let mut sym = 0.0;
            let mut var_ii = 0.0;
            for x in 0..alpha.len() {
                mean += alpha[x] * pr[k][x] * fv[x];
                sym += alpha[x] * rv[x] * pf[k][x];
                var_ii += alpha[x] * rv[x] * (1.0 - rv[x]) * pf[k][x] * pf[k][x];
            }
            HydroReference {
                t,
                mean_reference: scale * mean,
                symmetric_reference: scale * sym,
                var_ii: scale * scale * var_ii,
                spread_scale,
                pt_f: pf[k].clone(),
            }
        })
        .collect())
}

/// Runs `replicas` independent IPS realizations on a fixed environment and
/// records the fields and the fluctuation terms at each macroscopic time.
#[allow(clippy::too_many_arguments)]
pub fn hydro_ensemble(
    env: &Environment,
    a: f64,
    n: f64,
    times: &[f64],
    f: &TestFunction,
    rho0: &Profile,
    replicas: u64,
    seed: u64,
) -> Result<HydroEnsemble> {
    let d = env.dim();
    let theta = theta_n(n, d, env.beta())?;
    let scale = n.powf(-(d as f64) / env.beta());
    let references = hydro_references(env, a, n, times, f, rho0)?;
    let fv = site_values(env, n, |x| f.eval(x));
    let f2: Vec<f64> = fv.iter().map(|v| v * v).collect();
    let pf2 = solve_one_particle_forward(env, a, n, times, &f2)?;
    let runs = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, "hydro", r));
            let eta0 = sample_binomial_profile(env, rho0, n, &mut rng)?;
            let mut sim = IpsSimulator::new(env, a, &eta0)?;
            let mut rows = Vec::with_capacity(times.len());
            for (k, &t) in times.iter().enumerate() {
                sim.advance_to(t * theta, u64::MAX, &mut rng)?;
                let eta = sim.counts();
                let pt = &references[k].pt_f;
                let x0_pt_f = density_pair_with(&eta0.counts, env, n, |_, x| pt[x]);
                let bound = scale * density_pair_with(&eta0.counts, env, n, |_, x| pf2[k][x] - pt[x] * pt[x]);
                rows.push(ReplicaRecord {
                    replica: r,
                    t,
                    x_pair: density_pair(eta, env, n, f),
                    z_pair: frequency_pair(eta, env, n, f),
                    x0_pt_f,
                    bound,
                });
            }
            Ok((rows, sim.events()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records = vec![Vec::with_capacity(replicas as usize); times.len()];
    let mut events = 0;
    for (rows, ev) in runs {
        events += ev;
        for (k, row) in rows.into_iter().enumerate() {
            records[k].push(row);
        }
    }
    Ok(HydroEnsemble {
        n,
        theta_n: theta,
        references,
        records,
        events,
    })
}

/// Summary of the decomposition `<X^n_t|f> = I_n + II_n + III_n + <P^n_t rho_0 W^n|f>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub t: f64,
    pub field: Estimate,
    pub i_n: Estimate,
    pub ii_n: Estimate,
    /// Identically zero for binomial initial laws.
    pub iii_n: f64,
    pub reference: f64,
    /// Sample variance of `II_n` and its standard error.
    pub var_ii: (f64, f64),
    /// Exact binomial variance of `II_n`.
    pub var_ii_oracle: f64,
    /// `mean(I_n^2) / mean(bound)` with its delta-method standard error.
    pub variance_ratio: (f64, f64),
    /// `Var(<X^n_t|f>) / (n^{-d/beta} <W^n|f^2>)` with standard error.
    pub spread_ratio: (f64, f64),
}

fn ratio_of_means(num: &[f64], den: &[f64]) -> (f64, f64) {
    let rn: Running = num.iter().copied().collect();
    let rd: Running = den.iter().copied().collect();
    let (mn, md) = (rn.mean(), rd.mean());
    if md == 0.0 {
        return if mn == 0.0 { (0.0, 0.0) } else { (f64::INFINITY, 0.0) };
    }
    let ratio = mn / md;
    let k = num.len() as f64;
    // delta method on the paired samples
    let var: f64 = num
        .iter()
        .zip(den)
        .map(|(a, b)| {
            let z = (a - ratio * b) / md;
            z * z
        })
        .sum::<f64>()
        / (k - 1.0).max(1.0);
    (ratio, (var / k).sqrt())
}

pub fn decomposition_diagnostics(records: &[ReplicaRecord], reference: &HydroReference) -> Decomposition {
    let field: Running = records.iter().map(|r| r.x_pair).collect();
    let i_n: Running = records.iter().map(|r| r.fluctuation()).collect();
    let ii: Vec<f64> = records.iter().map(|r| r.x0_pt_f - reference.symmetric_reference).collect();
    let ii_n: Running = ii.iter().copied().collect();
    let var_ii = crate::stats::variance_with_se(&ii);
    let sq: Vec<f64> = records.iter().map(|r| r.fluctuation().powi(2)).collect();
    let bounds: Vec<f64> = records.iter().map(|r| r.bound).collect();
    let variance_ratio = ratio_of_means(&sq, &bounds);
    let xs: Vec<f64> = records.iter().map(|r| r.x_pair).collect();
    let (var_x, se_x) = crate::stats::variance_with_se(&xs);
    let spread_ratio = if reference.spread_scale > 0.0 {
        (var_x / reference.spread_scale, se_x / reference.spread_scale)
    } else {
        (0.0, 0.0)
    };
    Decomposition {
        t: reference.t,
        field: field.estimate(),
        i_n: i_n.estimate(),
        ii_n: ii_n.estimate(),
        iii_n: 0.0,
        reference: reference.mean_reference,
        var_ii,
        var_ii_oracle: reference.var_ii,
        variance_ratio,
        spread_ratio,
    }
}

/// Replica values for CSV export: `(t, replica, X pair, Z pair)`.
pub fn field_rows(ensemble: &HydroEnsemble) -> Vec<(f64, u64, f64, f64)> {
    ensemble
        .records
        .iter()
        .flatten()
        .map(|r| (r.t, r.replica, r.x_pair, r.z_pair))
        .collect()
}

/// Checks `<X^n|f> <= <W^n|f>` and `0 <= <Z^n|f> <= n^{-d} sum f(x/n)`.
pub fn domination_holds(eta: &Configuration, env: &Environment, n: f64, f: &TestFunction) -> bool {
    let x = density_pair(&eta.counts, env, n, f);
    let w = density_pair(env.alpha(), env, n, f);
    let z = frequency_pair(&eta.counts, env, n, f);
    let cap = riemann_sum(env, n, |p| f.eval(p));
    let tol = 1e-12 * (w.abs() + cap.abs() + 1.0);
    x <= w + tol && z >= -tol && z <= cap + tol
}
