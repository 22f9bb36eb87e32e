use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{sample_ppp_w, PointMeasure};
use crate::error::{Error, Result};
use crate::linalg::{expm_action_uniformized, SparseRows};
use crate::rng::stream_rng;
use crate::stats::Running;
use crate::walker::MsdPoint;

/// Largest chain handled by uniformization.
const EXACT_SIZE_LIMIT: usize = 10_000;
/// Largest `rate * t` handled by uniformization.
const EXACT_WORK_LIMIT: f64 = 1e6;
const MC_PATHS: u64 = 4096;
const FIN_EVENT_CAP: u64 = 2_000_000_000;

/// Birth-death chain on the atoms of a one-dimensional measure, generator
/// `d/dW d/dx` with reflecting ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinChain {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub rp: Vec<f64>,
    pub rm: Vec<f64>,
}

pub fn build_fin_chain(measure: &PointMeasure) -> Result<FinChain> {
    if measure.d != 1 {
        return Err(Error::param("measure", "the FIN chain is one-dimensional"));
    }
    let pts = measure.sorted_1d();
    if pts.len() < 2 {
        return Err(Error::param("measure", "need at least two distinct atoms"));
    }
    if pts.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::param("measure", "atom weights must be positive"));
    }
    let m = pts.len();
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let v: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    for i in 0..m {
        if i + 1 < m {
            rp[i] = 1.0 / (v[i] * (x[i + 1] - x[i]));
        }
        if i > 0 {
            rm[i] = 1.0 / (v[i] * (x[i] - x[i - 1]));
        }
    }
    Ok(FinChain { x, v, rp, rm })
}

impl FinChain {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn generator(&self) -> SparseRows {
        let m = self.len();
        let mut q = SparseRows::new(m);
        for i in 0..m {
            if i + 1 < m {
                q.add(i, i + 1, self.rp[i]);
            }
            if i > 0 {
                q.add(i, i - 1, self.rm[i]);
            }
            q.add(i, i, -(self.rp[i] + self.rm[i]));
        }
        q
    }

    pub fn max_rate(&self) -> f64 {
        self.rp.iter().zip(&self.rm).map(|(a, b)| a + b).fold(0.0, f64::max)
    }

    /// Index of the atom closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let i = self.x.partition_point(|&y| y < x);
        match i {
            0 => 0,
            i if i == self.len() => i - 1,
            i => {
                if x - self.x[i - 1] <= self.x[i] - x {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// `max_i |v_i r_i^+ - v_{i+1} r_{i+1}^-|`.
    pub fn balance_defect(&self) -> f64 {
        (0..self.len() - 1)
            .map(|i| (self.v[i] * self.rp[i] - self.v[i + 1] * self.rm[i + 1]).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinMode {
    Uniformization,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinSemigroup {
    pub values: Vec<f64>,
    pub mode: FinMode,
}

/// `exp(t G) g` on the atoms. Uniformization when the chain is small
/// enough, otherwise a Monte Carlo average over paths from each atom.
pub fn fin_semigroup(chain: &FinChain, g: &[f64], t: f64, seed: u64) -> Result<FinSemigroup> {
    if g.len() != chain.len() {
        return Err(Error::param("g", "length does not match the chain"));
    }
    if !(t >= 0.0) {
        return Err(Error::param("t", "must be non-negative"));
    }
    if t == 0.0 {
        return Ok(FinSemigroup {
            values: g.to_vec(),
            mode: FinMode::Uniformization,
        });
    }
    if chain.len() <= EXACT_SIZE_LIMIT && chain.max_rate() * t <= EXACT_WORK_LIMIT {
        return Ok(FinSemigroup {
            values: expm_action_uniformized(&chain.generator(), t, g, 1e-14),
            mode: FinMode::Uniformization,
        });
    }
    let values = (0..chain.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, "fin-semigroup", i as u64);
            let mut acc = Running::new();
            for _ in 0..MC_PATHS {
                let end = simulate_fin(chain, i, &[t], &mut rng)?[0];
                acc.push(g[end]);
            }
            Ok(acc.mean())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FinSemigroup {
        values,
        mode: FinMode::MonteCarlo,
    })
}

/// Atom indices occupied at the increasing `times`, starting from `start`.
pub fn simulate_fin<R: Rng + ?Sized>(chain: &FinChain, start: usize, times: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    if start >= chain.len() {
        return Err(Error::param("start", "not an atom index"));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut i = start;
    let mut t = 0.0;
    let mut events = 0u64;
    for &target in times {
        loop {
            let total = chain.rp[i] + chain.rm[i];
            let hold = rng.sample::<f64, _>(Exp1) / total;
            if t + hold > target {
                // memoryless: discard the overshoot and resample from `target`
                t = target;
                break;
            }
            t += hold;
            events += 1;
            if events > FIN_EVENT_CAP {
                return Err(Error::EventCap {
                    cap: FIN_EVENT_CAP,
                    time_reached: t,
                    horizon: target,
                });
            }
            i = if rng.random::<f64>() * total < chain.rp[i] { i + 1 } else { i - 1 };
        }
        out.push(i);
    }
    Ok(out)
}

/// Annealed mean squared displacement of the FIN chain: `environments`
/// truncated measures on `[-half_width, half_width]`, `paths` walks each
/// from the atom nearest the origin. Standard errors come from the spread of
/// per-environment means.
pub fn fin_msd(
    beta: f64,
    times: &[f64],
    environments: u64,
    paths: u64,
    eps: f64,
    half_width: f64,
    seed: u64,
) -> Result<Vec<MsdPoint>> {
    if environments < 2 || paths == 0 {
        return Err(Error::param("environments", "need at least two environments and one path"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::param("times", "must be non-negative and increasing"));
    }
    let per_env = (0..environments)
        .into_par_iter()
        .map(|e| {
            let mut rng = stream_rng(seed, "fin-env", e);
            let measure = sample_ppp_w(beta, 1, half_width, eps, &mut rng)?;
            let chain = build_fin_chain(&measure)?;
            let start = chain.nearest(0.0);
            let x0 = chain.x[start];
            let mut sums = vec![0.0; times.len()];
            let mut walk = stream_rng(seed, "fin-walk", e);
            for _ in 0..paths {
                let pos = simulate_fin(&chain, start, times, &mut walk)?;
                for (s, &i) in sums.iter_mut().zip(&pos) {
                    let dx = chain.x[i] - x0;
                    *s += dx * dx;
                }
            }
            Ok(sums.into_iter().map(|s| s / paths as f64).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let r: Running = per_env.iter().map(|m| m[k]).collect();
            MsdPoint {
                t,
                msd: r.mean(),
                se: r.std_error(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Atom;
    use crate::rng::rng_from_seed;

    fn measure(points: &[(f64, f64)]) -> PointMeasure {
        let mut m = PointMeasure::empty(1, 10.0);
        for &(x, w) in points {
            m.atoms.push(Atom {
                x: [x, 0.0, 0.0],
                weight: w,
            });
        }
        m
    }

    #[test]
    fn two_atoms() {
        let c = build_fin_chain(&measure(&[(1.5, 0.5), (0.0, 2.0)])).unwrap();
        assert_eq!(c.x, vec![0.0, 1.5]);
        assert!((c.rp[0] - 1.0 / (2.0 * 1.5)).abs() < 1e-15);
        assert!((c.rm[1] - 1.0 / (0.5 * 1.5)).abs() < 1e-15);
        assert_eq!(c.rm[0], 0.0);
        assert_eq!(c.rp[1], 0.0);
    }

    #[test]
    fn duplicates_merge_and_balance_is_exact() {
        let c = build_fin_chain(&measure(&[(0.0, 1.0), (0.3, 0.2), (0.0, 0.5), (1.0, 0.7)])).unwrap();
        assert_eq!(c.len(), 3);
        assert!((c.v[0] - 1.5).abs() < 1e-15);
        assert!(c.balance_defect() < 1e-14);
        let q = c.generator();
        for i in 0..c.len() {
            let s: f64 = q.row(i).iter().map(|e| e.1).sum();
            assert!(s.abs() < 1e-12);
        }
        assert!(build_fin_chain(&measure(&[(0.0, 1.0)])).is_err());
    }

    #[test]
    fn lebesgue_chain_is_discrete_heat() {
        let h = 0.05;
        let pts: Vec<(f64, f64)> = (-200..=200).map(|i| (i as f64 * h, h)).collect();
        let c = build_fin_chain(&measure(&pts)).unwrap();
        for i in 1..c.len() - 1 {
            assert!((c.rp[i] - 1.0 / (h * h)).abs() < 1e-9);
            assert!((c.rm[i] - 1.0 / (h * h)).abs() < 1e-9);
        }
        // d/dW d/dx with W = Leb is the Laplacian: cos(x) decays as exp(-t)
        let g: Vec<f64> = c.x.iter().map(|x| x.cos()).collect();
        let t = 0.5;
        let out = fin_semigroup(&c, &g, t, 0).unwrap();
        assert_eq!(out.mode, FinMode::Uniformization);
        for i in [150, 200, 250] {
            let want = (-t).exp() * c.x[i].cos();
            assert!((out.values[i] - want).abs() < 1e-3, "{} vs {want}", out.values[i]);
        }
    }

    #[test]
    fn semigroup_basics() {
        let c = build_fin_chain(&measure(&[(0.0, 1.0), (0.4, 0.2), (1.0, 0.7), (1.2, 0.1)])).unwrap();
        let g = vec![0.0, 1.0, -2.0, 0.5];
        assert_eq!(fin_semigroup(&c, &g, 0.0, 0).unwrap().values, g);
        let ones = fin_semigroup(&c, &[1.0; 4], 3.0, 0).unwrap();
        assert!(ones.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let out = fin_semigroup(&c, &g, 0.7, 0).unwrap();
        assert!(out.values.iter().all(|v| v.abs() <= 2.0 + 1e-12));
    }

    #[test]
    fn simulation_matches_semigroup() {
        let c = build_fin_chain(&measure(&[(0.0, 1.0), (0.4, 0.2), (1.0, 0.7), (1.2, 0.1)])).unwrap();
        let g = vec![0.0, 1.0, -2.0, 0.5];
        let exact = fin_semigroup(&c, &g, 0.8, 0).unwrap().values[1];
        let mut rng = rng_from_seed(5);
        let r: Running = (0..40_000)
            .map(|_| g[simulate_fin(&c, 1, &[0.8], &mut rng).unwrap()[0]])
            .collect();
        assert!(r.estimate().within(exact, 4.0), "{:?} vs {exact}", r.estimate());
    }

    #[test]
    fn msd_starts_at_zero() {
        let pts = fin_msd(0.5, &[0.0, 1.0], 3, 5, 0.1, 20.0, 1).unwrap();
        assert_eq!(pts[0].msd, 0.0);
        assert!(pts[1].msd > 0.0);
    }
}
