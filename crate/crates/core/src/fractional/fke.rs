use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::mittag_leffler::mittag_leffler;
use super::stable::sample_inverse_subordinator;
use crate::environment::TestFunction;
use crate::error::{Error, Result};
use crate::lattice::MAX_DIM;
use crate::numeric::{gamma, integrate_with_breaks};
use crate::profile::Profile;
use crate::rng::stream_rng;
use crate::stats::{Estimate, Running};

/// Periodic grid with `m` nodes per axis on `[-period/2, period/2)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub m: usize,
    pub period: f64,
}

impl Grid {
    pub fn new(d: usize, m: usize, period: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::param("d", format!("{d} not in 1..=3")));
        }
        if m < 2 {
            return Err(Error::param("m", "need at least two nodes per axis"));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::param("period", "must be positive"));
        }
        Ok(Grid { d, m, period })
    }

    pub fn h(&self) -> f64 {
        self.period / self.m as f64
    }

    pub fn nodes(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    fn index_coords(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut c = [0; MAX_DIM];
        let mut r = idx;
        for ci in c.iter_mut().take(self.d) {
            *ci = r % self.m;
            r /= self.m;
        }
        c
    }

    pub fn position(&self, idx: usize) -> [f64; MAX_DIM] {
        let c = self.index_coords(idx);
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.d {
            x[i] = -0.5 * self.period + c[i] as f64 * self.h();
        }
        x
    }

    pub fn sample(&self, profile: &Profile) -> Vec<f64> {
        (0..self.nodes())
            .map(|i| profile.eval(&self.position(i)[..self.d]))
            .collect()
    }

    /// Multilinear periodic interpolation of node values at `x`.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let h = self.h();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for i in 0..self.d {
            let s = (x[i] + 0.5 * self.period) / h;
            let fl = s.floor();
            frac[i] = s - fl;
            base[i] = (fl as i64).rem_euclid(self.m as i64) as usize;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.d) {
            let mut w = 1.0;
            let mut idx = 0;
            let mut stride = 1;
            for i in 0..self.d {
                let up = (corner >> i) & 1 == 1;
                w *= if up { frac[i] } else { 1.0 - frac[i] };
                idx += ((base[i] + usize::from(up)) % self.m) * stride;
                stride *= self.m;
            }
            acc += w * values[idx];
        }
        acc
    }

    /// Folded frequency index of each axis, sorted; equal keys share the
    /// discrete Laplacian eigenvalue.
    fn mode_key(&self, idx: usize) -> [usize; MAX_DIM] {
        let c = self.index_coords(idx);
        let mut k = [0; MAX_DIM];
        for i in 0..self.d {
            k[i] = c[i].min(self.m - c[i]);
        }
        k[..self.d].sort_unstable();
        k
    }

    /// Eigenvalue of the centred second-difference `-Laplacian`.
    fn discrete_eigenvalue(&self, key: &[usize; MAX_DIM]) -> f64 {
        let h = self.h();
        key[..self.d]
            .iter()
            .map(|&k| {
                let s = (PI * k as f64 / self.m as f64).sin();
                4.0 / (h * h) * s * s
            })
            .sum()
    }

    /// `|k|^2` of the continuum Fourier mode.
    fn continuum_eigenvalue(&self, key: &[usize; MAX_DIM]) -> f64 {
        key[..self.d]
            .iter()
            .map(|&k| {
                let w = 2.0 * PI * k as f64 / self.period;
                w * w
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Mode {
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkeSolution {
    pub grid: Grid,
    pub dt: f64,
    pub times: Vec<f64>,
    /// Node values at each recorded time.
    pub values: Vec<Vec<f64>>,
}

impl FkeSolution {
    pub fn at(&self, step: usize, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values[step], x)
    }

    pub fn mass(&self, step: usize) -> f64 {
        self.values[step].iter().sum::<f64>() * self.grid.h().powi(self.grid.d as i32)
    }
}

fn l1_weights(beta: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|j| {
            let j = j as f64;
            (j + 1.0).powf(1.0 - beta) - j.powf(1.0 - beta)
        })
        .collect()
}

/// Scalar L1 recursion for `D^beta u = -lambda u`, `u_0 = 1`.
pub(crate) fn l1_amplification(beta: f64, lambda: f64, dt: f64, steps: usize, mode: L1Mode) -> Vec<f64> {
    let b = l1_weights(beta, steps);
    let mu = gamma(2.0 - beta) * dt.powf(beta);
    let mut u = Vec::with_capacity(steps + 1);
    u.push(1.0);
    for n in 0..steps {
        // memory: sum_{j=1}^{n} b_j (u^{n+1-j} - u^{n-j})
        let mut memory = 0.0;
        for j in 1..=n {
            memory += b[j] * (u[n + 1 - j] - u[n - j]);
        }
        let next = match mode {
            L1Mode::Implicit => (u[n] - memory) / (1.0 + mu * lambda),
            L1Mode::Explicit => u[n] - memory - mu * lambda * u[n],
        };
        u.push(next);
    }
    u
}

fn fft_nd(grid: &Grid, data: &mut [Complex<f64>], inverse: bool) {
    let m = grid.m;
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    let mut line = vec![Complex::new(0.0, 0.0); m];
    let stride_count = grid.nodes() / m;
    for axis in 0..grid.d {
        let stride = m.pow(axis as u32);
        for line_id in 0..stride_count {
            let lo = line_id % stride;
            let hi = line_id / stride;
            let base = lo + hi * stride * m;
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[base + i * stride] = *v;
            }
        }
    }
    if inverse {
        let scale = 1.0 / grid.nodes() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Largest `mu D lambda_max` for which the explicit L1 step keeps positive
/// coefficients.
pub(crate) fn explicit_bound(beta: f64) -> f64 {
    2.0 - 2f64.powf(1.0 - beta)
}

/// L1 scheme for `D^beta rho = D_eff Laplacian rho` on a periodic grid,
/// centred differences in space, all steps `0..=steps` returned.
pub fn fke_solve_l1(
    grid: &Grid,
    beta: f64,
    d_eff: f64,
    rho0: &[f64],
    dt: f64,
    steps: usize,
    mode: L1Mode,
) -> Result<FkeSolution> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param("beta", format!("{beta} not in (0, 1]")));
    }
    if !(d_eff > 0.0) || !(dt > 0.0) {
        return Err(Error::param("dt", "time step and D_eff must be positive"));
    }
    if rho0.len() != grid.nodes() {
        return Err(Error::param("rho0", "length does not match the grid"));
    }
    let nodes = grid.nodes();
    let mut keys: BTreeMap<[usize; MAX_DIM], usize> = BTreeMap::new();
    let mode_of: Vec<usize> = (0..nodes)
        .map(|i| {
            let k = grid.mode_key(i);
            let next = keys.len();
            *keys.entry(k).or_insert(next)
        })
        .collect();
    let mut lambdas = vec![0.0; keys.len()];
    for (k, &i) in &keys {
        lambdas[i] = d_eff * grid.discrete_eigenvalue(k);
    }
    if mode == L1Mode::Explicit {
        let mu = gamma(2.0 - beta) * dt.powf(beta);
        let worst = lambdas.iter().cloned().fold(0.0, f64::max) * mu;
        if worst > explicit_bound(beta) {
            return Err(Error::Stiffness(format!(
                "explicit L1 step needs mu*D*lambda_max <= {:.4}, got {worst:.4}",
                explicit_bound(beta)
            )));
        }
    }
    let amps: Vec<Vec<f64>> = lambdas
        .par_iter()
        .map(|&l| l1_amplification(beta, l, dt, steps, mode))
        .collect();
    let mut hat: Vec<Complex<f64>> = rho0.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_nd(grid, &mut hat, false);
    let values = (0..=steps)
        .map(|n| {
            let mut buf: Vec<Complex<f64>> = hat
                .iter()
                .zip(&mode_of)
                .map(|(c, &k)| c * amps[k][n])
                .collect();
            fft_nd(grid, &mut buf, true);
            buf.iter().map(|c| c.re).collect()
        })
        .collect();
    Ok(FkeSolution {
        grid: *grid,
        dt,
        times: (0..=steps).map(|n| n as f64 * dt).collect(),
        values,
    })
}

/// Exact solution of the periodic continuum problem restricted to the grid's
/// Fourier modes: each mode is damped by `E_beta(-D |k|^2 t^beta)`.
pub fn fke_spectral(grid: &Grid, beta: f64, d_eff: f64, rho0: &[f64], t: f64) -> Result<Vec<f64>> {
    if rho0.len() != grid.nodes() {
        return Err(Error::param("rho0", "length does not match the grid"));
    }
    let mut cache: BTreeMap<[usize; MAX_DIM], f64> = BTreeMap::new();
    let mut hat: Vec<Complex<f64>> = rho0.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_nd(grid, &mut hat, false);
    for (i, c) in hat.iter_mut().enumerate() {
        let key = grid.mode_key(i);
        let damp = match cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = mittag_leffler(beta, -d_eff * grid.continuum_eigenvalue(&key) * t.powf(beta))?;
                cache.insert(key, v);
                v
            }
        };
        *c *= damp;
    }
    fft_nd(grid, &mut hat, true);
    Ok(hat.iter().map(|c| c.re).collect())
}

/// `exp(-z) I_0(z)` for `z >= 0`.
pub(crate) fn bessel_i0_scaled(z: f64) -> f64 {
    if z < 15.0 {
        let q = 0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-z).exp()
    } else {
        // I_0(z) e^{-z} sqrt(2 pi z) ~ sum ((2k-1)!!)^2 / (k! (8z)^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..30 {
            let kf = k as f64;
            let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * z);
            if next > term {
                break;
            }
            term = next;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum / (2.0 * PI * z).sqrt()
    }
}

fn bump_heat(f: &TestFunction, var: f64, x: &[f64]) -> Result<f64> {
    let d = f.dim();
    let r = f.radius;
    let sigma = var.sqrt();
    if sigma < 1e-9 * r {
        return Ok(f.eval(x));
    }
    let big_r = f
        .center
        .iter()
        .zip(x)
        .map(|(c, xi)| (xi - c) * (xi - c))
        .sum::<f64>()
        .sqrt();
    let norm = (2.0 * PI * var).sqrt();
    let mut breaks = vec![0.0, r];
    for s in [big_r - 3.0 * sigma, big_r, big_r + 3.0 * sigma] {
        if s > 0.0 && s < r {
            breaks.push(s);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let g = |rho: f64| f.radial(rho);
    let mut integrand: Box<dyn FnMut(f64) -> f64> = match d {
        1 => Box::new(|rho: f64| {
            g(rho) * ((-(big_r - rho).powi(2) / (2.0 * var)).exp() + (-(big_r + rho).powi(2) / (2.0 * var)).exp())
                / norm
        }),
        2 => Box::new(|rho: f64| {
            g(rho) * rho / var * (-(big_r - rho).powi(2) / (2.0 * var)).exp() * bessel_i0_scaled(big_r * rho / var)
        }),
        _ => {
            if big_r < 1e-12 * r {
                Box::new(|rho: f64| {
                    g(rho) * 4.0 * PI * rho * rho * (-rho * rho / (2.0 * var)).exp() / (norm * norm * norm)
                })
            } else {
                Box::new(|rho: f64| {
                    g(rho) * rho / big_r
                        * ((-(big_r - rho).powi(2) / (2.0 * var)).exp() - (-(big_r + rho).powi(2) / (2.0 * var)).exp())
                        / norm
                })
            }
        }
    };
    Ok(integrate_with_breaks(&mut integrand, &breaks, 1e-13, 1e-11)?.value)
}

/// `(exp(s Laplacian) rho0)(x)` on `R^d`; `s` already includes the
/// diffusion constant.
pub fn heat_semigroup(profile: &Profile, s: f64, x: &[f64]) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::param("s", "heat time must be non-negative"));
    }
    match profile {
        Profile::Constant { value } => Ok(*value),
        Profile::Cosine {
            mean,
            amplitude,
            wavenumber,
        } => Ok(mean + amplitude * (-wavenumber * wavenumber * s).exp() * (wavenumber * x[0]).cos()),
        Profile::Bump { f, base, amplitude } => {
            if x.len() != f.dim() {
                return Err(Error::param("x", "dimension does not match the bump"));
            }
            Ok(base + amplitude * bump_heat(f, 2.0 * s, x)?)
        }
    }
}

/// `E[(exp(D_eff s Laplacian) rho0)(x)]` with `s = V^{-1}(t)`.
pub fn fke_subordination(
    rho0: &Profile,
    beta: f64,
    d_eff: f64,
    t: f64,
    x: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Estimate> {
    if t == 0.0 {
        return Ok(Estimate::exact(rho0.eval(x)));
    }
    if beta == 1.0 {
        return Ok(Estimate::exact(heat_semigroup(rho0, d_eff * t, x)?));
    }
    if let Profile::Constant { value } = rho0 {
        return Ok(Estimate::exact(*value));
    }
    const CHUNK: u64 = 1024;
    let chunks = samples.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, "fke-subordination", c);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut vals = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let s = sample_inverse_subordinator(beta, t, &mut rng)?;
                vals.push(heat_semigroup(rho0, d_eff * s, x)?);
            }
            Ok(vals)
        })
        .collect::<Result<Vec<_>>>()?;
    let r: Running = parts.into_iter().flatten().collect();
    Ok(r.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine_grid(m: usize) -> (Grid, Profile) {
        (Grid::new(1, m, 2.0 * PI).unwrap(), Profile::cosine(0.5, 0.4, 1.0).unwrap())
    }

    #[test]
    fn constants_stay_constant() {
        let g = Grid::new(2, 8, 4.0).unwrap();
        let rho = vec![0.3; g.nodes()];
        let sol = fke_solve_l1(&g, 0.5, 1.0, &rho, 0.01, 20, L1Mode::Implicit).unwrap();
        for v in &sol.values {
            assert!(v.iter().all(|x| (x - 0.3).abs() < 1e-14));
        }
        let p = Profile::constant(0.3).unwrap();
        assert_eq!(fke_subordination(&p, 0.5, 1.0, 1.0, &[0.0], 10, 1).unwrap().mean, 0.3);
    }

    #[test]
    fn fourier_mode_follows_mittag_leffler() {
        let (g, p) = cosine_grid(64);
        let rho = g.sample(&p);
        let dt = 1e-3;
        let sol = fke_solve_l1(&g, 0.5, 1.0, &rho, dt, 1000, L1Mode::Implicit).unwrap();
        let i0 = g.m / 2; // node at x = 0
        for &n in &[500, 1000] {
            let t = n as f64 * dt;
            let amp = sol.values[n][i0] - 0.5;
            let want = 0.4 * mittag_leffler(0.5, -t.sqrt()).unwrap();
            assert!((amp - want).abs() < 1e-3, "t={t}: {amp} vs {want}");
        }
    }

    #[test]
    fn unit_order_is_backward_euler() {
        let (g, p) = cosine_grid(16);
        let rho = g.sample(&p);
        let dt = 0.01;
        let sol = fke_solve_l1(&g, 1.0, 1.0, &rho, dt, 50, L1Mode::Implicit).unwrap();
        let h = g.h();
        let lam = 4.0 / (h * h) * (PI / 16.0).sin().powi(2);
        for (n, v) in sol.values.iter().enumerate() {
            let amp = (1.0 + dt * lam).powi(-(n as i32));
            for (i, x) in v.iter().enumerate() {
                let want = 0.5 + 0.4 * amp * g.position(i)[0].cos();
                assert!((x - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn maximum_principle_and_mass() {
        let g = Grid::new(1, 64, 8.0).unwrap();
        let p = Profile::bump(TestFunction::triangle(&[0.0], 1.0).unwrap(), 0.1, 0.8).unwrap();
        let rho = g.sample(&p);
        let (lo, hi) = rho.iter().fold((f64::MAX, f64::MIN), |a, &v| (a.0.min(v), a.1.max(v)));
        let sol = fke_solve_l1(&g, 0.3, 1.0, &rho, 0.01, 200, L1Mode::Implicit).unwrap();
        let m0 = sol.mass(0);
        for (n, v) in sol.values.iter().enumerate() {
            assert!(v.iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12));
            assert!((sol.mass(n) - m0).abs() <= 1e-10 * m0);
        }
    }

    #[test]
    fn explicit_mode_checks_stability() {
        let (g, p) = cosine_grid(16);
        let rho = g.sample(&p);
        assert!(matches!(
            fke_solve_l1(&g, 0.5, 1.0, &rho, 0.1, 5, L1Mode::Explicit),
            Err(Error::Stiffness(_))
        ));
        let a = fke_solve_l1(&g, 0.5, 1.0, &rho, 1e-4, 200, L1Mode::Explicit).unwrap();
        let b = fke_solve_l1(&g, 0.5, 1.0, &rho, 1e-4, 200, L1Mode::Implicit).unwrap();
        let gap = a.values[200].iter().zip(&b.values[200]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-3);
    }

    #[test]
    fn spectral_reference_matches_mode() {
        let (g, p) = cosine_grid(32);
        let rho = g.sample(&p);
        let v = fke_spectral(&g, 0.7, 0.5, &rho, 2.0).unwrap();
        let damp = mittag_leffler(0.7, -0.5 * 2f64.powf(0.7)).unwrap();
        for (i, x) in v.iter().enumerate() {
            assert!((x - (0.5 + 0.4 * damp * g.position(i)[0].cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_bessel() {
        // I_0(1) = 1.2660658777520082, I_0(20) = 4.355828255955353e7
        assert!((bessel_i0_scaled(0.0) - 1.0).abs() < 1e-16);
        assert!((bessel_i0_scaled(1.0) * 1f64.exp() - 1.266_065_877_752_008_2).abs() < 1e-14);
        let want = 4.355_828_255_955_353e7 * (-20f64).exp();
        assert!((bessel_i0_scaled(20.0) - want).abs() < 1e-13 * want);
        let a = bessel_i0_scaled(14.999_999);
        let b = bessel_i0_scaled(15.000_001);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn heat_of_bumps_conserves_mass_and_smooths() {
        for d in 1..=3 {
            let center = vec![0.0; d];
            let f = TestFunction::squared_cosine(&center, 1.0).unwrap();
            let p = Profile::bump(f.clone(), 0.0, 1.0).unwrap();
            let at0 = heat_semigroup(&p, 0.0, &center).unwrap();
            assert!((at0 - 1.0).abs() < 1e-12);
            let v = heat_semigroup(&p, 0.05, &center).unwrap();
            assert!(v < 1.0 && v > 0.5, "d={d}: {v}");
        }
        // mass in d=1 by quadrature of the evolved profile
        let f = TestFunction::triangle(&[0.0], 1.0).unwrap();
        let p = Profile::bump(f, 0.0, 1.0).unwrap();
        let mass = crate::numeric::integrate(|x| heat_semigroup(&p, 0.3, &[x]).unwrap(), -8.0, 8.0, 1e-11, 1e-10)
            .unwrap()
            .value;
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn heat_in_two_dims_matches_grid_solution() {
        // e^{s Laplacian} on a wide periodic grid approximates the free-space kernel
        let g = Grid::new(2, 64, 8.0).unwrap();
        let f = TestFunction::squared_cosine(&[0.0, 0.0], 1.0).unwrap();
        let p = Profile::bump(f, 0.0, 1.0).unwrap();
        let rho = g.sample(&p);
        let s = 0.1;
        let spec = fke_spectral(&g, 1.0, 1.0, &rho, s).unwrap();
        for &(i, j) in &[(32usize, 32usize), (36, 32), (40, 36)] {
            let idx = i + g.m * j;
            let x = g.position(idx);
            let exact = heat_semigroup(&p, s, &x[..2]).unwrap();
            assert!((spec[idx] - exact).abs() < 1e-4, "{} vs {exact}", spec[idx]);
        }
    }

    #[test]
    fn subordination_agrees_with_l1() {
        let (g, p) = cosine_grid(64);
        let rho = g.sample(&p);
        let dt = 2e-3;
        let sol = fke_solve_l1(&g, 0.6, 1.0, &rho, dt, 500, L1Mode::Implicit).unwrap();
        let x = [0.7];
        let mc = fke_subordination(&p, 0.6, 1.0, 1.0, &x, 20_000, 11).unwrap();
        let l1 = sol.at(500, &x);
        assert!((mc.mean - l1).abs() < 4.0 * mc.se + 2e-3, "{mc:?} vs {l1}");
    }
}
