//! Partial exclusion process SEP(alpha) of BTM(a) walkers.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::numeric::ln_gamma;
use crate::profile::Profile;
use crate::stats::{Estimate, Running};

/// Largest state space the enumeration routines accept.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Particle counts `eta(x)`, `0 <= eta(x) <= alpha_x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub counts: Vec<u64>,
}

impl Configuration {
    pub fn new(env: &Environment, counts: Vec<u64>) -> Result<Self> {
        let c = Configuration { counts };
        c.validate(env)?;
        Ok(c)
    }

    pub fn empty(env: &Environment) -> Self {
        Configuration {
            counts: vec![0; env.num_sites()],
        }
    }

    pub fn full(env: &Environment) -> Self {
        Configuration {
            counts: env.alpha().to_vec(),
        }
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        if self.counts.len() != env.num_sites() {
            return Err(Error::param("eta", "length does not match the environment"));
        }
        if let Some(x) = (0..self.counts.len()).find(|&x| self.counts[x] > env.alpha_at(x)) {
            return Err(Error::param(
                "eta",
                format!("eta({x}) = {} exceeds alpha = {}", self.counts[x], env.alpha_at(x)),
            ));
        }
        Ok(())
    }

    pub fn particles(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `eta(x) alpha_x^{a-1} alpha_y^a (1 - eta(y)/alpha_y)`.
pub fn ips_rate(env: &Environment, a: f64, eta: &[u64], x: usize, y: usize) -> f64 {
    let (ax, ay) = (env.alpha_at(x) as f64, env.alpha_at(y) as f64);
    eta[x] as f64 * ax.powf(a - 1.0) * ay.powf(a) * (1.0 - eta[y] as f64 / ay)
}

/// Binary tree of partial sums over per-site rates. Parents are recomputed
/// from their children on every update, so no rounding drift accumulates.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(values: &[f64]) -> Self {
        let leaves = values.len().next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + values.len()].copy_from_slice(values);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        SumTree { leaves, nodes }
    }

    #[inline]
    fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    fn set(&mut self, i: usize, v: f64) {
        let mut k = i + self.leaves;
        self.nodes[k] = v;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative range contains `u` in `[0, total)`.
    #[inline]
    fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if u < left || self.nodes[2 * k + 1] == 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

/// Exact Gillespie simulator for SEP(alpha).
pub struct IpsSimulator<'e> {
    env: &'e Environment,
    /// `alpha_x^{a-1} alpha_y^a` per directed edge, in adjacency order.
    base: Vec<f64>,
    offsets: Vec<usize>,
    eta: Vec<u64>,
    tree: SumTree,
    time: f64,
    events: u64,
}

impl<'e> IpsSimulator<'e> {
    pub fn new(env: &'e Environment, a: f64, eta0: &Configuration) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::param("a", format!("{a} not in [0, 1]")));
        }
        eta0.validate(env)?;
        let adj = env.adjacency();
        let mut base = Vec::new();
        let mut offsets = vec![0];
        for x in 0..env.num_sites() {
            let ax = env.alpha_at(x) as f64;
            for &y in adj.neighbors(x) {
                base.push(ax.powf(a - 1.0) * (env.alpha_at(y as usize) as f64).powf(a));
            }
            offsets.push(base.len());
        }
        let mut sim = IpsSimulator {
            env,
            base,
            offsets,
            eta: eta0.counts.clone(),
            tree: SumTree::new(&[]),
            time: 0.0,
            events: 0,
        };
        let rates: Vec<f64> = (0..env.num_sites()).map(|x| sim.site_rate(x)).collect();
        sim.tree = SumTree::new(&rates);
        Ok(sim)
    }

    #[inline]
    fn site_rate(&self, x: usize) -> f64 {
        if self.eta[x] == 0 {
            return 0.0;
        }
        let nbrs = self.env.adjacency().neighbors(x);
        let mut total = 0.0;
        for (k, &y) in nbrs.iter().enumerate() {
            let y = y as usize;
            let free = 1.0 - self.eta[y] as f64 / self.env.alpha_at(y) as f64;
            total += self.base[self.offsets[x] + k] * free;
        }
        self.eta[x] as f64 * total
    }

    fn refresh(&mut self, x: usize) {
        let r = self.site_rate(x);
        self.tree.set(x, r);
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn counts(&self) -> &[u64] {
        &self.eta
    }

    pub fn configuration(&self) -> Configuration {
        Configuration {
            counts: self.eta.clone(),
        }
    }

    /// Runs until `horizon`, stopping with an error after `cap` total events.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, horizon: f64, cap: u64, rng: &mut R) -> Result<()> {
        loop {
            let total = self.tree.total();
            if total <= 0.0 {
                self.time = self.time.max(horizon);
                return Ok(());
            }
            let dt = rng.sample::<f64, _>(Exp1) / total;
            if self.time + dt > horizon {
                // memoryless: the residual clock is redrawn on the next call
                self.time = horizon;
                return Ok(());
            }
            if self.events >= cap {
                return Err(Error::EventCap {
                    cap,
                    time_reached: self.time,
                    horizon,
                });
            }
            self.time += dt;
            let x = self.tree.find(rng.random::<f64>() * total).min(self.env.num_sites() - 1);
            let y = self.pick_target(x, rng);
            self.eta[x] -= 1;
            self.eta[y] += 1;
            self.events += 1;
            let adj = self.env.adjacency();
            self.refresh(x);
            self.refresh(y);
            for &z in adj.neighbors(x) {
                self.refresh(z as usize);
            }
            for &z in adj.neighbors(y) {
                self.refresh(z as usize);
            }
        }
    }

    fn pick_target<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let nbrs = self.env.adjacency().neighbors(x);
        let weights: Vec<f64> = nbrs
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                let y = y as usize;
                self.base[self.offsets[x] + k] * (1.0 - self.eta[y] as f64 / self.env.alpha_at(y) as f64)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = nbrs[0] as usize;
        for (w, &y) in weights.iter().zip(nbrs) {
            if *w > 0.0 {
                last = y as usize;
                u -= w;
                if u < 0.0 {
                    return y as usize;
                }
            }
        }
        last
    }
}

/// Observation times (physical units) for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSchedule {
    pub times: Vec<f64>,
    pub event_cap: u64,
}

impl EventSchedule {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::param("times", "must be non-negative and non-decreasing"));
        }
        Ok(EventSchedule {
            times,
            event_cap: 500_000_000,
        })
    }
}

/// Snapshots of the process at the scheduled times.
pub fn simulate_ips<R: Rng + ?Sized>(
    env: &Environment,
    a: f64,
    eta0: &Configuration,
    schedule: &EventSchedule,
    rng: &mut R,
) -> Result<Vec<Configuration>> {
    let mut sim = IpsSimulator::new(env, a, eta0)?;
    let mut out = Vec::with_capacity(schedule.times.len());
    for &t in &schedule.times {
        sim.advance_to(t, schedule.event_cap, rng)?;
        out.push(sim.configuration());
    }
    Ok(out)
}

/// Independent `Binomial(alpha_x, rho0(x/n))` occupation numbers.
pub fn sample_binomial_profile<R: Rng + ?Sized>(
    env: &Environment,
    rho0: &Profile,
    n: f64,
    rng: &mut R,
) -> Result<Configuration> {
    rho0.validate()?;
    let d = env.dim();
    let counts = (0..env.num_sites())
        .map(|x| {
            let p = rho0.eval(&env.geometry.position(x, n)[..d]).clamp(0.0, 1.0);
            let alpha = env.alpha_at(x);
            if p == 0.0 {
                Ok(0)
            } else if p == 1.0 {
                Ok(alpha)
            } else {
                Binomial::new(alpha, p)
                    .map(|b| b.sample(rng))
                    .map_err(|e| Error::param("rho0", e.to_string()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Configuration { counts })
}

/// Mixed-radix codec over `prod_x {0, .., alpha_x}` in canonical site order.
#[derive(Debug, Clone)]
pub struct StateCodec {
    radices: Vec<u64>,
    size: usize,
}

impl StateCodec {
    pub fn new(env: &Environment) -> Result<Self> {
        let radices: Vec<u64> = env.alpha().iter().map(|a| a + 1).collect();
        let size = radices
            .iter()
            .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128))
            .unwrap_or(u128::MAX);
        if size > ENUMERATION_LIMIT {
            return Err(Error::StateSpaceTooLarge {
                size,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(StateCodec {
            radices,
            size: size as usize,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn encode(&self, eta: &[u64]) -> usize {
        eta.iter()
            .zip(&self.radices)
            .fold(0usize, |acc, (&e, &r)| acc * r as usize + e as usize)
    }

    pub fn decode(&self, mut index: usize) -> Vec<u64> {
        let mut eta = vec![0; self.radices.len()];
        for (e, &r) in eta.iter_mut().zip(&self.radices).rev() {
            *e = (index % r as usize) as u64;
            index /= r as usize;
        }
        eta
    }
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `nu_rho(eta) = prod_x Bin(alpha_x, rho)(eta(x))`.
pub fn binomial_product_weight(env: &Environment, rho: f64, eta: &[u64]) -> f64 {
    eta.iter()
        .zip(env.alpha())
        .map(|(&e, &a)| {
            let pow = |p: f64, k: u64| if k == 0 { 1.0 } else { p.powi(k as i32) };
            ln_binomial(a, e).exp() * pow(rho, e) * pow(1.0 - rho, a - e)
        })
        .product()
}

/// Largest relative violation of
/// `nu_rho(eta) r(eta, eta^{xy}) = nu_rho(eta^{xy}) r(eta^{xy}, eta)` over every
/// transition of the enumerated state space.
pub fn check_detailed_balance(env: &Environment, a: f64, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::param("rho", "must lie in [0, 1]"));
    }
    let codec = StateCodec::new(env)?;
    let adj = env.adjacency();
    let mut worst = 0.0f64;
    for idx in 0..codec.size() {
        let eta = codec.decode(idx);
        let w = binomial_product_weight(env, rho, &eta);
        for x in 0..eta.len() {
            for &y in adj.neighbors(x) {
                let y = y as usize;
                let forward = ips_rate(env, a, &eta, x, y);
                if forward == 0.0 {
                    continue;
                }
                let mut moved = eta.clone();
                moved[x] -= 1;
                moved[y] += 1;
                let backward = ips_rate(env, a, &moved, y, x);
                let lhs = w * forward;
                let rhs = binomial_product_weight(env, rho, &moved) * backward;
                let scale = lhs.abs().max(rhs.abs());
                if scale > 0.0 {
                    worst = worst.max((lhs - rhs).abs() / scale);
                }
            }
        }
    }
    Ok(worst)
}

/// `eta(x_1)(eta(x_2) - 1_{x_1}(x_2))(eta(x_3) - 1_{x_1}(x_3) - 1_{x_2}(x_3))`.
pub fn falling_factorial(eta: &[u64], tuple: &[usize]) -> f64 {
    let mut value = 1.0;
    for (k, &x) in tuple.iter().enumerate() {
        let repeats = tuple[..k].iter().filter(|&&z| z == x).count() as f64;
        value *= eta[x] as f64 - repeats;
    }
    value
}

/// Monte Carlo estimate of `E[eta(x)]`-type falling factorial moments.
pub fn falling_factorial_moment(snapshots: &[Configuration], tuple: &[usize]) -> Result<Estimate> {
    if tuple.is_empty() || tuple.len() > 3 {
        return Err(Error::param("tuple", "length must be 1, 2 or 3"));
    }
    Ok(snapshots
        .iter()
        .map(|c| falling_factorial(&c.counts, tuple))
        .collect::<Running>()
        .estimate())
}
