//! The single Bouchaud trap walker BTM(a) and its constant-speed
//! representation through the random conductance chain `Y` and clock `S`.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{build_on, Environment, TailLaw};
use crate::error::{Error, Result};
use crate::fields::theta_n;
use crate::lattice::{Geometry, Step, MAX_DIM};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{Estimate, Running};

/// Default cap on the number of jumps in one path.
pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

fn check_a(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::param("a", format!("{a} not in [0, 1]")));
    }
    Ok(())
}

/// Jump rates of BTM(a) out of `x`: `alpha_x^{a-1} alpha_y^a` to each neighbour.
pub fn btm_rates(env: &Environment, a: f64, x: usize) -> Vec<(usize, f64)> {
    let ax = env.alpha_at(x) as f64;
    env.adjacency()
        .neighbors(x)
        .iter()
        .map(|&y| {
            let y = y as usize;
            (y, ax.powf(a - 1.0) * (env.alpha_at(y) as f64).powf(a))
        })
        .collect()
}

/// Per-site jump rates with totals, for either the walker or the
/// conductance chain.
#[derive(Debug, Clone)]
pub struct RateTable {
    offsets: Vec<u32>,
    targets: Vec<u32>,
    steps: Vec<Step>,
    rates: Vec<f64>,
    totals: Vec<f64>,
}

impl RateTable {
    /// BTM(a): rate `alpha_x^{a-1} alpha_y^a`.
    pub fn btm(env: &Environment, a: f64) -> Result<Self> {
        check_a(a)?;
        Ok(Self::build(env, |ax, ay| ax.powf(a - 1.0) * ay.powf(a)))
    }

    /// Random conductance chain: rate `alpha_x^a alpha_y^a`.
    pub fn conductance(env: &Environment, a: f64) -> Result<Self> {
        check_a(a)?;
        Ok(Self::build(env, |ax, ay| ax.powf(a) * ay.powf(a)))
    }

    fn build(env: &Environment, rate: impl Fn(f64, f64) -> f64) -> Self {
        let adj = env.adjacency();
        let n = env.num_sites();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut steps = Vec::new();
        let mut rates = Vec::new();
        let mut totals = Vec::with_capacity(n);
        offsets.push(0);
        for x in 0..n {
            let ax = env.alpha_at(x) as f64;
            let mut total = 0.0;
            for (&y, &step) in adj.neighbors(x).iter().zip(adj.steps(x)) {
                let r = rate(ax, env.alpha_at(y as usize) as f64);
                targets.push(y);
                steps.push(step);
                rates.push(r);
                total += r;
            }
            totals.push(total);
            offsets.push(targets.len() as u32);
        }
        RateTable {
            offsets,
            targets,
            steps,
            rates,
            totals,
        }
    }

    #[inline]
    fn range(&self, x: usize) -> std::ops::Range<usize> {
        self.offsets[x] as usize..self.offsets[x + 1] as usize
    }

    #[inline]
    pub fn total(&self, x: usize) -> f64 {
        self.totals[x]
    }

    pub fn max_total(&self) -> f64 {
        self.totals.iter().copied().fold(0.0, f64::max)
    }

    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.range(x)
            .map(move |k| (self.targets[k] as usize, self.rates[k]))
    }

    /// Chooses a neighbour of `x` with probability proportional to its rate.
    #[inline]
    fn choose<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> (usize, Step) {
        let range = self.range(x);
        let mut u = rng.random::<f64>() * self.totals[x];
        let last = range.end - 1;
        for k in range {
            u -= self.rates[k];
            if u < 0.0 || k == last {
                return (self.targets[k] as usize, self.steps[k]);
            }
        }
        unreachable!("site without neighbours has zero total rate")
    }

    /// `out = A u` for the generator of the table.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        for (x, o) in out.iter_mut().enumerate() {
            let ux = u[x];
            *o = self
                .range(x)
                .map(|k| self.rates[k] * (u[self.targets[k] as usize] - ux))
                .sum();
        }
    }

    /// Sparse generator matrix.
    pub fn generator(&self) -> crate::linalg::SparseRows {
        let n = self.totals.len();
        let mut q = crate::linalg::SparseRows::new(n);
        for x in 0..n {
            for (y, r) in self.neighbors(x) {
                q.add(x, y, r);
                q.add(x, x, -r);
            }
        }
        q
    }
}

/// Jump chain of a walker on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerPath {
    pub start: usize,
    pub horizon: f64,
    /// `(jump time, site entered)`, strictly increasing in time.
    pub events: Vec<(f64, usize)>,
}

impl WalkerPath {
    pub fn site_at(&self, t: f64) -> usize {
        let k = self.events.partition_point(|e| e.0 <= t);
        if k == 0 {
            self.start
        } else {
            self.events[k - 1].1
        }
    }

    pub fn end_site(&self) -> usize {
        self.events.last().map_or(self.start, |e| e.1)
    }
}

/// Path of the conductance chain `Y` with the clock `S` at each jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockPath {
    pub start: usize,
    /// `(Y time, site entered, S at that time)`.
    pub events: Vec<(f64, usize, f64)>,
    /// Final `Y` time and clock value.
    pub end_time: f64,
    pub end_clock: f64,
}

impl ClockPath {
    /// The walker `X_t = Y_{S^{-1}(t)}` on `[0, end_clock]`.
    pub fn time_change(&self) -> WalkerPath {
        WalkerPath {
            start: self.start,
            horizon: self.end_clock,
            events: self.events.iter().map(|&(_, y, s)| (s, y)).collect(),
        }
    }
}

/// Exact event-driven simulation of BTM(a) from `x0` up to `horizon`.
pub fn simulate_btm<R: Rng + ?Sized>(
    env: &Environment,
    a: f64,
    x0: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<WalkerPath> {
    let table = RateTable::btm(env, a)?;
    simulate_with(&table, x0, horizon, DEFAULT_EVENT_CAP, rng)
}

pub fn simulate_with<R: Rng + ?Sized>(
    table: &RateTable,
    x0: usize,
    horizon: f64,
    cap: u64,
    rng: &mut R,
) -> Result<WalkerPath> {
    let mut events = Vec::new();
    let mut x = x0;
    let mut t = 0.0;
    loop {
        let total = table.total(x);
        if total == 0.0 {
            break;
        }
        t += rng.sample::<f64, _>(Exp1) / total;
        if t > horizon {
            break;
        }
        if events.len() as u64 >= cap {
            return Err(Error::EventCap {
                cap,
                time_reached: t,
                horizon,
            });
        }
        x = table.choose(x, rng).0;
        events.push((t, x));
    }
    Ok(WalkerPath {
        start: x0,
        horizon,
        events,
    })
}

/// Simulates `Y` until the clock `S = int alpha_{Y_s} ds` reaches `horizon`.
pub fn simulate_rcm_clock<R: Rng + ?Sized>(
    env: &Environment,
    a: f64,
    x0: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<ClockPath> {
    let table = RateTable::conductance(env, a)?;
    let mut events = Vec::new();
    let mut y = x0;
    let (mut time, mut clock) = (0.0, 0.0);
    loop {
        let total = table.total(y);
        let alpha = env.alpha_at(y) as f64;
        let hold = if total == 0.0 {
            f64::INFINITY
        } else {
            rng.sample::<f64, _>(Exp1) / total
        };
        if clock + alpha * hold > horizon {
            let rest = (horizon - clock) / alpha;
            return Ok(ClockPath {
                start: x0,
                events,
                end_time: time + rest,
                end_clock: horizon,
            });
        }
        if events.len() as u64 >= DEFAULT_EVENT_CAP {
            return Err(Error::EventCap {
                cap: DEFAULT_EVENT_CAP,
                time_reached: clock,
                horizon,
            });
        }
        time += hold;
        clock += alpha * hold;
        y = table.choose(y, rng).0;
        events.push((time, y, clock));
    }
}

/// Recomputes the clock values of a walker path read as a time-changed `Y`:
/// `Y`-sojourns are the `X`-sojourns divided by `alpha`.
pub fn reintegrate_clock(env: &Environment, path: &WalkerPath) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(path.events.len());
    let (mut prev_t, mut site, mut y_time) = (0.0, path.start, 0.0);
    for &(t, next) in &path.events {
        y_time += (t - prev_t) / env.alpha_at(site) as f64;
        out.push((y_time, t));
        prev_t = t;
        site = next;
    }
    out
}

/// Sites and unwrapped displacements at increasing observation times.
pub fn observe<R: Rng + ?Sized>(
    table: &RateTable,
    x0: usize,
    times: &[f64],
    cap: u64,
    rng: &mut R,
) -> Result<Vec<(usize, [i64; MAX_DIM])>> {
    let mut out = Vec::with_capacity(times.len());
    let mut x = x0;
    let mut disp = [0i64; MAX_DIM];
    let mut jumps = 0u64;
    let mut next_jump = f64::INFINITY;
    if table.total(x) > 0.0 {
        next_jump = rng.sample::<f64, _>(Exp1) / table.total(x);
    }
    for &obs in times {
        while next_jump <= obs {
            let t = next_jump;
            jumps += 1;
            if jumps > cap {
                return Err(Error::EventCap {
                    cap,
                    time_reached: t,
                    horizon: obs,
                });
            }
            let (y, step) = table.choose(x, rng);
            disp[step.axis as usize] += i64::from(step.sign);
            x = y;
            let total = table.total(x);
            next_jump = if total > 0.0 {
                t + rng.sample::<f64, _>(Exp1) / total
            } else {
                f64::INFINITY
            };
        }
        out.push((x, disp));
    }
    Ok(out)
}

/// Monte Carlo estimate of `P^n_t g(x/n) = E_x[g(X_{t theta_n}/n)]`.
pub fn estimate_semigroup(
    env: &Environment,
    a: f64,
    n: f64,
    t: f64,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: usize,
    replicas: u64,
    seed: u64,
) -> Result<Estimate> {
    if replicas == 0 {
        return Err(Error::param("replicas", "need at least one replica"));
    }
    let d = env.dim();
    if t == 0.0 {
        return Ok(Estimate::exact(g(&env.geometry.position(x, n)[..d])));
    }
    let table = RateTable::btm(env, a)?;
    let horizon = t * theta_n(n, d, env.beta())?;
    let values = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, "semigroup", r));
            let obs = observe(&table, x, &[horizon], DEFAULT_EVENT_CAP, &mut rng)?;
            Ok(g(&env.geometry.position(obs[0].0, n)[..d]))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().collect::<Running>().estimate())
}

/// Dormand-Prince 5(4) integration of `du/dt = A u` with output at the
/// requested (physical) times.
pub fn evolve_backward(table: &RateTable, u0: &[f64], times: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    const A2: [f64; 1] = [0.2];
    const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
    const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
    const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
    const A6: [f64; 5] = [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ];
    const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    const MAX_STEPS: u64 = 20_000_000;
    let n = u0.len();
    let mut u = u0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut unew = vec![0.0; n];
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let rate = table.max_total().max(1e-300);
    let mut h = (1.0 / rate).min(times.iter().copied().fold(0.0, f64::max).max(1e-12));
    table.apply(&u, &mut k[0]);
    let mut steps = 0u64;
    for &target in times {
        if target < t {
            return Err(Error::param("times", "observation times must be non-decreasing"));
        }
        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Stiffness(format!(
                    "explicit integration needed more than {MAX_STEPS} steps (max exit rate {rate:e}); use a smaller box or time horizon"
                )));
            }
            let last = t + h >= target;
            let hh = if last { target - t } else { h };
            let stages: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
            for (s, coeffs) in stages.iter().enumerate() {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, c) in coeffs.iter().enumerate() {
                        acc += c * k[j][i];
                    }
                    tmp[i] = u[i] + hh * acc;
                }
                let (_, rest) = k.split_at_mut(s + 1);
                table.apply(&tmp, &mut rest[0]);
            }
            for i in 0..n {
                let mut acc = 0.0;
                for (j, b) in B.iter().enumerate() {
                    acc += b * k[j][i];
                }
                unew[i] = u[i] + hh * acc;
            }
            let (_, rest) = k.split_at_mut(6);
            table.apply(&unew, &mut rest[0]);
            let mut err = 0.0f64;
            for i in 0..n {
                let mut e = 0.0;
                for (j, c) in E.iter().enumerate() {
                    e += c * k[j][i];
                }
                let scale = tol + tol * u[i].abs().max(unew[i].abs());
                err = err.max((hh * e).abs() / scale);
            }
            if err <= 1.0 {
                t = if last { target } else { t + hh };
                std::mem::swap(&mut u, &mut unew);
                k.swap(0, 6);
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !(last && err <= 1.0) {
                h = hh * factor;
            }
        }
        out.push(u.clone());
    }
    Ok(out)
}

/// `P^n_t rho_0` on every site for macroscopic times `t`, by adaptive
/// explicit integration of the backward equation at tolerance `1e-8`.
pub fn solve_one_particle_forward(
    env: &Environment,
    a: f64,
    n: f64,
    times: &[f64],
    initial: &[f64],
) -> Result<Vec<Vec<f64>>> {
    const SITE_CAP: usize = 200_000;
    if env.num_sites() > SITE_CAP {
        return Err(Error::StateSpaceTooLarge {
            size: env.num_sites() as u128,
            limit: SITE_CAP as u128,
        });
    }
    let theta = theta_n(n, env.dim(), env.beta())?;
    let table = RateTable::btm(env, a)?;
    let physical: Vec<f64> = times.iter().map(|t| t * theta).collect();
    evolve_backward(&table, initial, &physical, 1e-8)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsdPoint {
    pub t: f64,
    pub msd: f64,
    pub se: f64,
}

/// Annealed mean squared displacement: a fresh environment per replica on
/// `geometry`, walker started at the origin, unwrapped displacement.
pub fn msd_curve(
    geometry: Geometry,
    law: TailLaw,
    a: f64,
    times: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<MsdPoint>> {
    let samples = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = build_on(geometry, law, derive_seed(seed, "msd-env", r))?;
            let table = RateTable::btm(&env, a)?;
            let mut rng = rng_from_seed(derive_seed(seed, "msd-walk", r));
            let obs = observe(&table, env.geometry.origin(), times, DEFAULT_EVENT_CAP, &mut rng)?;
            Ok(obs
                .iter()
                .map(|(_, d)| d.iter().map(|&c| (c * c) as f64).sum::<f64>())
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let r: Running = samples.iter().map(|s| s[i]).collect();
            MsdPoint {
                t,
                msd: r.mean(),
                se: r.std_error(),
            }
        })
        .collect())
}
