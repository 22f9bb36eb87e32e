//! Exact finite-state checks of the self-duality relations and of the
//! negative-dependence variance bound.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, TailLaw};
use crate::error::{Error, Result};
use crate::exclusion::{falling_factorial, Configuration, ips_rate, StateCodec};
use crate::fields::theta_n;
use crate::lattice::Geometry;
use crate::linalg::{expm_pade, SparseRows};
use crate::rng::{derive_seed, rng_from_seed};

pub const DUALITY_TOLERANCE: f64 = 1e-10;

/// Generator of the full particle system on an enumerated state space.
#[derive(Debug, Clone)]
pub struct FullGenerator {
    pub codec: StateCodec,
    pub q: SparseRows,
}

pub fn build_full_generator(env: &Environment, a: f64) -> Result<FullGenerator> {
    let codec = StateCodec::new(env)?;
    let adj = env.adjacency();
    let mut q = SparseRows::new(codec.size());
    for i in 0..codec.size() {
        let eta = codec.decode(i);
        for x in 0..eta.len() {
            for &y in adj.neighbors(x) {
                let y = y as usize;
                let r = ips_rate(env, a, &eta, x, y);
                if r > 0.0 {
                    let mut moved = eta.clone();
                    moved[x] -= 1;
                    moved[y] += 1;
                    q.add(i, codec.encode(&moved), r);
                    q.add(i, i, -r);
                }
            }
        }
    }
    Ok(FullGenerator { codec, q })
}

/// Number of configurations with each total particle number.
pub fn block_sizes(env: &Environment) -> Result<Vec<usize>> {
    let codec = StateCodec::new(env)?;
    let max: u64 = env.alpha().iter().sum();
    let mut sizes = vec![0; max as usize + 1];
    for i in 0..codec.size() {
        sizes[codec.decode(i).iter().sum::<u64>() as usize] += 1;
    }
    Ok(sizes)
}

/// Generator of `k` labelled interacting walkers.
#[derive(Debug, Clone)]
pub struct KParticleGenerator {
    pub k: usize,
    pub states: Vec<Vec<usize>>,
    pub q: SparseRows,
}

impl KParticleGenerator {
    pub fn index(&self, state: &[usize]) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// `k = 1`: BTM(a). `k = 2`: each particle jumps `x -> y` at
/// `alpha_x^{a-1} alpha_y^a (1 - #{partner at y}/alpha_y)`; pairs on a
/// single-slot site are not states.
pub fn build_kparticle_generator(env: &Environment, a: f64, k: usize) -> Result<KParticleGenerator> {
    let sites = env.num_sites();
    let states: Vec<Vec<usize>> = match k {
        1 => (0..sites).map(|x| vec![x]).collect(),
        2 => (0..sites)
            .flat_map(|x| (0..sites).map(move |y| vec![x, y]))
            .filter(|s| s[0] != s[1] || env.alpha_at(s[0]) >= 2)
            .collect(),
        _ => return Err(Error::param("k", "only one or two dual particles")),
    };
    if states.len() > crate::linalg::DENSE_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            size: states.len() as u128,
            limit: crate::linalg::DENSE_LIMIT as u128,
        });
    }
    let index = |s: &[usize]| -> usize {
        match s.len() {
            1 => s[0],
            _ => states.iter().position(|t| t == s).expect("valid state"),
        }
    };
    let adj = env.adjacency();
    let mut q = SparseRows::new(states.len());
    for (i, s) in states.iter().enumerate() {
        for p in 0..k {
            let x = s[p];
            let ax = env.alpha_at(x) as f64;
            for &y in adj.neighbors(x) {
                let y = y as usize;
                let ay = env.alpha_at(y) as f64;
                let others = (0..k).filter(|&o| o != p && s[o] == y).count() as f64;
                let r = ax.powf(a - 1.0) * ay.powf(a) * (1.0 - others / ay);
                if r > 0.0 {
                    let mut next = s.clone();
                    next[p] = y;
                    q.add(i, index(&next), r);
                    q.add(i, i, -r);
                }
            }
        }
    }
    Ok(KParticleGenerator { k, states, q })
}

/// Reversible weight `alpha_{x1} (alpha_{x2} - 1_{x1}(x2))` of a labelled state.
pub fn kparticle_weight(env: &Environment, state: &[usize]) -> f64 {
    let mut w = 1.0;
    for (i, &x) in state.iter().enumerate() {
        let before = state[..i].iter().filter(|&&z| z == x).count() as f64;
        w *= env.alpha_at(x) as f64 - before;
    }
    w
}

/// Largest relative detailed-balance violation of a generator with respect to `weights`.
pub fn reversibility_defect(q: &SparseRows, weights: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..q.dim {
        for &(j, r) in q.row(i) {
            if i == j {
                continue;
            }
            let lhs = weights[i] * r;
            let rhs = weights[j] * q.get(j, i);
            let scale = lhs.abs().max(rhs.abs());
            if scale > 0.0 {
                worst = worst.max((lhs - rhs).abs() / scale);
            }
        }
    }
    worst
}

/// Largest absolute row sum.
pub fn row_sum_defect(q: &SparseRows) -> f64 {
    (0..q.dim)
        .map(|i| q.row(i).iter().map(|e| e.1).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityCase {
    pub alpha: Vec<u64>,
    pub geometry: Geometry,
    pub a: f64,
    pub eta: Vec<u64>,
    pub sites: Vec<usize>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub relation: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub case: DualityCase,
}

impl DualityReport {
    fn new(relation: &str, lhs: f64, rhs: f64, tolerance: f64, case: DualityCase) -> Self {
        let abs_gap = (lhs - rhs).abs();
        let rel_gap = abs_gap / lhs.abs().max(rhs.abs()).max(1e-300);
        DualityReport {
            relation: relation.to_string(),
            lhs,
            rhs,
            abs_gap,
            rel_gap,
            tolerance,
            pass: abs_gap <= tolerance,
            case,
        }
    }
}

fn case_of(env: &Environment, a: f64, eta: &[u64], sites: &[usize], t: f64) -> DualityCase {
    DualityCase {
        alpha: env.alpha().to_vec(),
        geometry: env.geometry,
        a,
        eta: eta.to_vec(),
        sites: sites.to_vec(),
        t,
    }
}

/// `(e^{tL} g)(eta)` on the full state space.
fn full_expectation(gen: &FullGenerator, eta: &[u64], t: f64, g: impl Fn(&[u64]) -> f64) -> Result<f64> {
    let start = gen.codec.encode(eta);
    if t == 0.0 {
        return Ok(g(eta));
    }
    let p = expm_pade(&gen.q.to_dense()?, t)?;
    Ok((0..gen.codec.size())
        .map(|j| p[(start, j)] * g(&gen.codec.decode(j)))
        .sum())
}

fn semigroup(q: &SparseRows, t: f64) -> Result<DMatrix<f64>> {
    if t == 0.0 {
        return Ok(DMatrix::identity(q.dim, q.dim));
    }
    expm_pade(&q.to_dense()?, t)
}

/// `E_eta[eta_t(x)]` against `alpha_x sum_y p_t(x, y) eta(y)/alpha_y`.
pub fn verify_duality_one(env: &Environment, a: f64, eta: &[u64], x: usize, t: f64) -> Result<DualityReport> {
    check_case(env, eta, &[x], t)?;
    let gen = build_full_generator(env, a)?;
    verify_duality_one_with(&gen, env, a, eta, x, t)
}

fn check_case(env: &Environment, eta: &[u64], sites: &[usize], t: f64) -> Result<()> {
    Configuration::new(env, eta.to_vec())?;
    if let Some(&x) = sites.iter().find(|&&x| x >= env.num_sites()) {
        return Err(Error::param("x", format!("site {x} out of range")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("{t} must be finite and non-negative")));
    }
    Ok(())
}

fn verify_duality_one_with(
    gen: &FullGenerator,
    env: &Environment,
    a: f64,
    eta: &[u64],
    x: usize,
    t: f64,
) -> Result<DualityReport> {
    let lhs = full_expectation(gen, eta, t, |xi| xi[x] as f64)?;
    let one = build_kparticle_generator(env, a, 1)?;
    let p = semigroup(&one.q, t)?;
    let rhs = env.alpha_at(x) as f64
        * (0..env.num_sites())
            .map(|y| p[(x, y)] * eta[y] as f64 / env.alpha_at(y) as f64)
            .sum::<f64>();
    Ok(DualityReport::new(
        "one",
        lhs,
        rhs,
        DUALITY_TOLERANCE,
        case_of(env, a, eta, &[x], t),
    ))
}

/// `D(x, y) = (eta(x)/alpha_x)(eta(y) - 1_x(y))/(alpha_y - 1_x(y))`.
fn duality_two_function(env: &Environment, eta: &[u64], x: usize, y: usize) -> f64 {
    let same = f64::from(u8::from(x == y));
    (eta[x] as f64 / env.alpha_at(x) as f64) * (eta[y] as f64 - same) / (env.alpha_at(y) as f64 - same)
}

/// `E_eta[eta_t(x)(eta_t(y) - 1_x(y))]` against the two-particle dual.
pub fn verify_duality_two(
    env: &Environment,
    a: f64,
    eta: &[u64],
    x: usize,
    y: usize,
    t: f64,
) -> Result<DualityReport> {
    check_case(env, eta, &[x, y], t)?;
    let gen = build_full_generator(env, a)?;
    verify_duality_two_with(&gen, env, a, eta, x, y, t)
}

fn verify_duality_two_with(
    gen: &FullGenerator,
    env: &Environment,
    a: f64,
    eta: &[u64],
    x: usize,
    y: usize,
    t: f64,
) -> Result<DualityReport> {
    if x == y && env.alpha_at(x) == 1 {
        return Err(Error::Undefined(format!(
            "duality function has a vanishing denominator at x = y = {x} with alpha = 1"
        )));
    }
    let lhs = full_expectation(gen, eta, t, |xi| falling_factorial(xi, &[x, y]))?;
    let two = build_kparticle_generator(env, a, 2)?;
    let p = semigroup(&two.q, t)?;
    let start = two.index(&[x, y]).expect("valid pair");
    let sum: f64 = two
        .states
        .iter()
        .enumerate()
        .map(|(j, s)| p[(start, j)] * duality_two_function(env, eta, s[0], s[1]))
        .sum();
    let rhs = kparticle_weight(env, &[x, y]) * sum;
    Ok(DualityReport::new(
        "two",
        lhs,
        rhs,
        DUALITY_TOLERANCE,
        case_of(env, a, eta, &[x, y], t),
    ))
}

/// Exact `E_eta[eta_t(x_1)(eta_t(x_2) - 1_{x_1}(x_2))]` through the
/// two-particle process: `sum_y eta(y) p_t(y, x)`.
pub fn falling_factorial_exact(env: &Environment, a: f64, eta: &[u64], tuple: &[usize], t: f64) -> Result<f64> {
    let gen = build_kparticle_generator(env, a, tuple.len())?;
    let target = gen
        .index(tuple)
        .ok_or_else(|| Error::Undefined("tuple is not a valid particle state".into()))?;
    let p = semigroup(&gen.q, t)?;
    Ok(gen
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| falling_factorial(eta, s) * p[(i, target)])
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; nonnegative when the bound holds.
    pub slack: f64,
    pub pass: bool,
    pub case: DualityCase,
}

/// `E_eta[(<X_t|f> - <X_0|P_t f>)^2] <= n^{-d/beta} <X_0|P_t f^2 - (P_t f)^2>`,
/// with time measured in units of `theta_n`.
pub fn verify_variance_bound(
    env: &Environment,
    a: f64,
    eta: &[u64],
    f: &[f64],
    n: f64,
    t: f64,
) -> Result<VarianceBoundReport> {
    let gen = build_full_generator(env, a)?;
    verify_variance_bound_with(&gen, env, a, eta, f, n, t)
}

fn verify_variance_bound_with(
    gen: &FullGenerator,
    env: &Environment,
    a: f64,
    eta: &[u64],
    f: &[f64],
    n: f64,
    t: f64,
) -> Result<VarianceBoundReport> {
    let d = env.dim();
    let c = n.powf(-(d as f64) / env.beta());
    let time = t * theta_n(n, d, env.beta())?;
    let one = build_kparticle_generator(env, a, 1)?;
    let p = semigroup(&one.q, time)?;
    let fv = DVector::from_column_slice(f);
    let f2 = fv.map(|v| v * v);
    let pf = &p * &fv;
    let pf2 = &p * &f2;
    let m: f64 = c * eta.iter().zip(pf.iter()).map(|(&e, v)| e as f64 * v).sum::<f64>();
    let pairing = |xi: &[u64]| c * xi.iter().zip(f).map(|(&e, v)| e as f64 * v).sum::<f64>();
    let lhs = full_expectation(gen, eta, time, |xi| (pairing(xi) - m).powi(2))?;
    let rhs = c * c
        * eta
            .iter()
            .enumerate()
            .map(|(x, &e)| e as f64 * (pf2[x] - pf[x] * pf[x]))
            .sum::<f64>();
    let slack = rhs - lhs;
    Ok(VarianceBoundReport {
        lhs,
        rhs,
        slack,
        pass: slack >= -DUALITY_TOLERANCE,
        case: case_of(env, a, eta, &[], t),
    })
}

/// `max |e^{(s+t)Q} - e^{sQ} e^{tQ}|`.
pub fn semigroup_defect(q: &SparseRows, s: f64, t: f64) -> Result<f64> {
    let dense = q.to_dense()?;
    let whole = expm_pade(&dense, s + t)?;
    let split = expm_pade(&dense, s)? * expm_pade(&dense, t)?;
    Ok(crate::linalg::max_abs_diff(&whole, &split))
}

/// Results of a randomized battery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryResult {
    pub duality: Vec<DualityReport>,
    pub variance: Vec<VarianceBoundReport>,
}

impl BatteryResult {
    pub fn duality_passed(&self) -> usize {
        self.duality.iter().filter(|r| r.pass).count()
    }

    pub fn variance_passed(&self) -> usize {
        self.variance.iter().filter(|r| r.pass).count()
    }

    pub fn max_gap(&self) -> f64 {
        self.duality.iter().map(|r| r.abs_gap).fold(0.0, f64::max)
    }

    pub fn min_slack(&self) -> f64 {
        self.variance.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }
}

/// Draws one random small system: two or three sites, `alpha <= 3`,
/// `a` in `{0, 0.5, 1}`, `t` in `(0, 2]`, arbitrary valid `eta`.
pub fn random_case<R: Rng + ?Sized>(rng: &mut R) -> Result<(Environment, f64, Vec<u64>, f64)> {
    let geometry = match rng.random_range(0..3) {
        0 => Geometry::chain(2, false)?,
        1 => Geometry::chain(3, false)?,
        _ => Geometry::torus(1, 1)?,
    };
    let sites = geometry.num_sites();
    let alpha: Vec<u64> = (0..sites).map(|_| rng.random_range(1..=3)).collect();
    let env = Environment::from_alpha(geometry, TailLaw::new(0.5)?, alpha)?;
    let a = [0.0, 0.5, 1.0][rng.random_range(0..3)];
    let eta: Vec<u64> = env.alpha().iter().map(|&al| rng.random_range(0..=al)).collect();
    let t = 2.0 * (1.0 - rng.random::<f64>());
    Ok((env, a, eta, t))
}

/// Randomized battery of both duality relations and the variance bound.
pub fn run_battery(cases: u64, seed: u64) -> Result<BatteryResult> {
    let per_case = (0..cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, "duality-battery", i));
            let (env, a, eta, t) = random_case(&mut rng)?;
            let gen = build_full_generator(&env, a)?;
            let sites = env.num_sites();
            let x = rng.random_range(0..sites);
            let one = verify_duality_one_with(&gen, &env, a, &eta, x, t)?;
            let (x2, y2) = loop {
                let pair = (rng.random_range(0..sites), rng.random_range(0..sites));
                if pair.0 != pair.1 || env.alpha_at(pair.0) >= 2 {
                    break pair;
                }
            };
            let two = verify_duality_two_with(&gen, &env, a, &eta, x2, y2, t)?;
            let f: Vec<f64> = (0..sites).map(|_| rng.random::<f64>()).collect();
            let var = verify_variance_bound_with(&gen, &env, a, &eta, &f, 1.0, t)?;
            Ok((one, two, var))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut duality = Vec::new();
    let mut variance = Vec::new();
    for (one, two, var) in per_case {
        duality.push(one);
        duality.push(two);
        variance.push(var);
    }
    Ok(BatteryResult { duality, variance })
}
