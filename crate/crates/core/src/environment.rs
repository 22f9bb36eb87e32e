//! Quenched trap environments, rescaled atomic measures and test functions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Adjacency, Geometry, MAX_DIM};
use crate::numeric::{gamma, integrate, integrate_with_breaks};
use crate::rng::{counter_uniform, STREAM_ENVIRONMENT};

/// Tail law `P(alpha > m) = m^{-beta}` of the ceiling-Pareto trap depths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailLaw {
    pub beta: f64,
    #[serde(default = "one")]
    pub min_value: u64,
}

fn one() -> u64 {
    1
}

impl TailLaw {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::param("beta", format!("{beta} not in (0, 1)")));
        }
        Ok(TailLaw { beta, min_value: 1 })
    }

    /// Exact `P(alpha > u)` under the ceiling construction.
    pub fn tail(&self, u: f64) -> f64 {
        if u < 1.0 {
            1.0
        } else {
            u.floor().powf(-self.beta)
        }
    }

    /// Exact `E[min(alpha, cap)] = sum_{m < cap} P(alpha > m)`.
    pub fn truncated_mean(&self, cap: u64) -> f64 {
        1.0 + (1..cap).map(|m| (m as f64).powf(-self.beta)).sum::<f64>()
    }

    /// `E[exp(-s alpha)] = e^{-s} - (1 - e^{-s}) Li_beta(e^{-s})`.
    pub fn laplace(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 1.0;
        }
        1.0 - one_minus_laplace(self.beta, s)
    }
}

/// `1 - E[exp(-s alpha)] = (1 - e^{-s})(1 + Li_beta(e^{-s}))`, accurate for small `s`.
pub fn one_minus_laplace(beta: f64, s: f64) -> f64 {
    -(-s).exp_m1() * (1.0 + polylog_exp(beta, s))
}

/// `Li_beta(e^{-s}) = sum_{k>=1} e^{-sk} k^{-beta}` for `s > 0`: direct sum of
/// the head plus an Euler-Maclaurin tail built on the incomplete gamma function.
pub fn polylog_exp(beta: f64, s: f64) -> f64 {
    const HEAD: usize = 64;
    let mut total = 0.0;
    for k in 1..HEAD {
        let k = k as f64;
        total += (-s * k).exp() * k.powf(-beta);
    }
    let x = HEAD as f64;
    let g = (-s * x).exp() * x.powf(-beta);
    if g == 0.0 {
        return total;
    }
    let h1 = -s - beta / x;
    let h2 = beta / (x * x);
    let h3 = -2.0 * beta / (x * x * x);
    let g1 = g * h1;
    let g3 = g * (h1 * h1 * h1 + 3.0 * h1 * h2 + h3);
    let a = 1.0 - beta;
    let integral = s.powf(-a) * gamma(a) * statrs::function::gamma::gamma_ur(a, s * x);
    total + integral + 0.5 * g - g1 / 12.0 + g3 / 720.0
}

/// `ceil(u^{-1/beta})`, saturating at `u64::MAX`.
pub fn sample_alpha(law: &TailLaw, u: f64) -> Result<u64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidVariate(u));
    }
    let v = u.powf(-1.0 / law.beta).ceil();
    Ok((v as u64).max(law.min_value))
}

/// Compactly supported bump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpKind {
    /// `max(0, 1 - r/R)`
    Triangle,
    /// `cos^2(pi r / 2R)` on `r < R`
    SquaredCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: BumpKind,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl TestFunction {
    pub fn new(kind: BumpKind, center: &[f64], radius: f64) -> Result<Self> {
        let f = TestFunction {
            kind,
            center: center.to_vec(),
            radius,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn triangle(center: &[f64], radius: f64) -> Result<Self> {
        Self::new(BumpKind::Triangle, center, radius)
    }

    pub fn squared_cosine(center: &[f64], radius: f64) -> Result<Self> {
        Self::new(BumpKind::SquaredCosine, center, radius)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("radius", "must be positive and finite"));
        }
        if !(1..=MAX_DIM).contains(&self.center.len()) {
            return Err(Error::param("center", "dimension must be 1, 2 or 3"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Profile as a function of the distance to the center.
    #[inline]
    pub fn radial(&self, r: f64) -> f64 {
        if r >= self.radius {
            return 0.0;
        }
        let q = r / self.radius;
        match self.kind {
            BumpKind::Triangle => 1.0 - q,
            BumpKind::SquaredCosine => {
                let c = (0.5 * std::f64::consts::PI * q).cos();
                c * c
            }
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = self
            .center
            .iter()
            .zip(x)
            .map(|(c, xi)| (xi - c) * (xi - c))
            .sum();
        self.radial(r2.sqrt())
    }

    pub fn sup_norm(&self) -> f64 {
        1.0
    }

    /// `int_{R^d} f(x)^p dx` by radial quadrature.
    pub fn power_integral(&self, p: f64) -> Result<f64> {
        let d = self.dim();
        let sphere = match d {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        };
        let r = integrate(
            |rho: f64| self.radial(rho).powf(p) * rho.powi(d as i32 - 1),
            0.0,
            self.radius,
            1e-13,
            1e-12,
        )?;
        Ok(sphere * r.value)
    }
}

/// Quenched integer trap depths on a finite box.
#[derive(Debug, Clone)]
pub struct Environment {
    pub geometry: Geometry,
    pub law: TailLaw,
    pub seed: u64,
    alpha: Vec<u64>,
    adjacency: Adjacency,
}

#[derive(Serialize, Deserialize)]
struct EnvironmentFile {
    d: usize,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    l: Option<usize>,
    beta: f64,
    seed: u64,
    periodic: bool,
    geometry: Geometry,
    alpha: Vec<u64>,
}

impl Environment {
    /// Environment with explicit depths, used for the small exact oracles.
    pub fn from_alpha(geometry: Geometry, law: TailLaw, alpha: Vec<u64>) -> Result<Self> {
        geometry.validate()?;
        if alpha.len() != geometry.num_sites() {
            return Err(Error::param(
                "alpha",
                format!("{} depths for {} sites", alpha.len(), geometry.num_sites()),
            ));
        }
        if alpha.iter().any(|&a| a < 1) {
            return Err(Error::param("alpha", "trap depths must be at least 1"));
        }
        Ok(Environment {
            adjacency: geometry.adjacency(),
            geometry,
            law,
            seed: 0,
            alpha,
        })
    }

    pub fn alpha(&self) -> &[u64] {
        &self.alpha
    }

    #[inline]
    pub fn alpha_at(&self, site: usize) -> u64 {
        self.alpha[site]
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn num_sites(&self) -> usize {
        self.alpha.len()
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn beta(&self) -> f64 {
        self.law.beta
    }

    pub fn total_depth(&self) -> f64 {
        self.alpha.iter().map(|&a| a as f64).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EnvironmentFile {
            d: self.dim(),
            l: self.geometry.half_width(),
            beta: self.law.beta,
            seed: self.seed,
            periodic: self.geometry.is_periodic(),
            geometry: self.geometry,
            alpha: self.alpha.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: EnvironmentFile = serde_json::from_str(s)?;
        let mut env = Environment::from_alpha(file.geometry, TailLaw::new(file.beta)?, file.alpha)?;
        env.seed = file.seed;
        Ok(env)
    }
}

/// I.i.d. ceiling-Pareto depths on the torus `[-L, L]^d`, one counter-based
/// stream draw per site.
pub fn build_environment(d: usize, half_width: usize, law: TailLaw, seed: u64) -> Result<Environment> {
    let geometry = Geometry::torus(d, half_width)?;
    build_on(geometry, law, seed)
}

/// As [`build_environment`] on an arbitrary geometry.
pub fn build_on(geometry: Geometry, law: TailLaw, seed: u64) -> Result<Environment> {
    TailLaw::new(law.beta)?;
    geometry.validate()?;
    let alpha = (0..geometry.num_sites())
        .map(|site| sample_alpha(&law, counter_uniform(seed, STREAM_ENVIRONMENT, site as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut env = Environment::from_alpha(geometry, law, alpha)?;
    env.seed = seed;
    Ok(env)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: [f64; MAX_DIM],
    pub weight: f64,
}

/// Finite atomic measure `sum_i v_i delta_{x_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMeasure {
    pub d: usize,
    /// Atoms lie in `[-extent, extent]^d`.
    pub extent: f64,
    pub atoms: Vec<Atom>,
    /// Expected mass per unit volume of the atoms dropped by truncation
    /// (zero for measures that are not truncated).
    pub omitted_density: f64,
}

impl PointMeasure {
    pub fn empty(d: usize, extent: f64) -> Self {
        PointMeasure {
            d,
            extent,
            atoms: Vec::new(),
            omitted_density: 0.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Upper bound on `E<omitted atoms | f>` for `f` with the given sup norm,
    /// taken over the whole box.
    pub fn truncation_bias_bound(&self, sup_norm: f64) -> f64 {
        sup_norm * (2.0 * self.extent).powi(self.d as i32) * self.omitted_density
    }

    /// Atoms sorted by the first coordinate with coincident locations merged.
    pub fn sorted_1d(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.atoms.iter().map(|a| (a.x[0], a.weight)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for (x, w) in pts {
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => out.push((x, w)),
            }
        }
        out
    }
}

/// `W^n = n^{-d/beta} sum_x alpha_x delta_{x/n}`.
pub fn rescaled_measure(env: &Environment, n: f64) -> Result<PointMeasure> {
    if !(n >= 1.0) {
        return Err(Error::param("n", "scale must be at least 1"));
    }
    let d = env.dim();
    let scale = n.powf(-(d as f64) / env.beta());
    let atoms = (0..env.num_sites())
        .map(|s| Atom {
            x: env.geometry.position(s, n),
            weight: env.alpha_at(s) as f64 * scale,
        })
        .collect();
    let extent = (env.geometry.side() / 2) as f64 / n;
    Ok(PointMeasure {
        d,
        extent,
        atoms,
        omitted_density: 0.0,
    })
}

/// Poisson point process with intensity `beta v^{-1-beta} dv dx` on
/// `[-L, L]^d`, keeping atoms with weight at least `eps`.
///
/// Atoms are produced in decreasing weight order from the arrival times
/// `G_i` of a unit Poisson process, `v_i = (G_i / |box|)^{-1/beta}`, so for a
/// fixed random stream a smaller `eps` only appends atoms.
pub fn sample_ppp_w<R: Rng + ?Sized>(
    beta: f64,
    d: usize,
    half_width: f64,
    eps: f64,
    rng: &mut R,
) -> Result<PointMeasure> {
    TailLaw::new(beta)?;
    if !(eps > 0.0) {
        return Err(Error::param("eps", "truncation level must be positive"));
    }
    if !(1..=MAX_DIM).contains(&d) || !(half_width > 0.0) {
        return Err(Error::param("box", "need d in 1..=3 and L > 0"));
    }
    let volume = (2.0 * half_width).powi(d as i32);
    let mut atoms = Vec::new();
    let mut arrival = 0.0;
    loop {
        let u: f64 = rng.random();
        arrival += -(1.0 - u).ln();
        let v = (arrival / volume).powf(-1.0 / beta);
        if v < eps {
            break;
        }
        let mut x = [0.0; MAX_DIM];
        for xi in x.iter_mut().take(d) {
            *xi = half_width * (2.0 * rng.random::<f64>() - 1.0);
        }
        atoms.push(Atom { x, weight: v });
    }
    Ok(PointMeasure {
        d,
        extent: half_width,
        atoms,
        omitted_density: beta * eps.powf(1.0 - beta) / (1.0 - beta),
    })
}

/// `<nu | f> = sum_i v_i f(x_i)`.
pub fn pair(measure: &PointMeasure, f: &TestFunction) -> f64 {
    measure
        .atoms
        .iter()
        .map(|a| a.weight * f.eval(&a.x[..measure.d]))
        .sum()
}

/// Same pairing with an arbitrary function of position.
pub fn pair_with(measure: &PointMeasure, f: impl Fn(&[f64]) -> f64) -> f64 {
    measure
        .atoms
        .iter()
        .map(|a| a.weight * f(&a.x[..measure.d]))
        .sum()
}

/// `E[exp(-<W|f>)] = exp(-Gamma(1 - beta) int f^beta dx)` for the limiting
/// Poisson measure.
pub fn laplace_functional_w(f: &TestFunction, beta: f64) -> Result<f64> {
    TailLaw::new(beta)?;
    Ok((-gamma(1.0 - beta) * f.power_integral(beta)?).exp())
}

/// As [`laplace_functional_w`] for `c f`.
pub fn laplace_functional_w_scaled(f: &TestFunction, scale: f64, beta: f64) -> Result<f64> {
    TailLaw::new(beta)?;
    Ok((-gamma(1.0 - beta) * scale.powf(beta) * f.power_integral(beta)?).exp())
}

/// One-dimensional Laplace functional for a general nonnegative `g` on
/// `[a, b]` with the given break points.
pub fn laplace_functional_w_1d(
    mut g: impl FnMut(f64) -> f64,
    breaks: &[f64],
    beta: f64,
) -> Result<f64> {
    TailLaw::new(beta)?;
    let mut h = |x: f64| g(x).max(0.0).powf(beta);
    let r = integrate_with_breaks(&mut h, breaks, 1e-13, 1e-12)?;
    Ok((-gamma(1.0 - beta) * r.value).exp())
}

/// Exact `E[exp(-<W^n|f>)]` over the environment law, for an infinite
/// lattice: the product over sites of the one-site Laplace transforms.
pub fn laplace_functional_wn_exact(f: &TestFunction, n: f64, beta: f64) -> Result<f64> {
    let law = TailLaw::new(beta)?;
    let d = f.dim();
    let scale = n.powf(-(d as f64) / beta);
    let reach = ((f.radius + f.center.iter().fold(0.0f64, |m, c| m.max(c.abs()))) * n).ceil() as i64 + 1;
    let mut log_sum = 0.0;
    let mut idx = vec![-reach; d];
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 / n).collect();
        let s = scale * f.eval(&x);
        if s > 0.0 {
            log_sum += (-one_minus_laplace(law.beta, s)).ln_1p();
        }
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(log_sum.exp());
            }
            idx[axis] += 1;
            if idx[axis] <= reach {
                break;
            }
            idx[axis] = -reach;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn alpha_examples() {
        let law = TailLaw::new(0.5).unwrap();
        assert_eq!(sample_alpha(&law, 0.25).unwrap(), 16);
        assert_eq!(sample_alpha(&law, 0.999).unwrap(), 2);
        assert!(matches!(sample_alpha(&law, 0.0), Err(Error::InvalidVariate(_))));
        assert!(matches!(sample_alpha(&law, 1.0), Err(Error::InvalidVariate(_))));
        assert!((law.tail(10.0) - 10f64.powf(-0.5)).abs() < 1e-15);
        assert_eq!(law.tail(0.5), 1.0);
    }

    #[test]
    fn environment_is_reproducible() {
        let law = TailLaw::new(0.5).unwrap();
        let a = build_environment(1, 2, law, 7).unwrap();
        let b = build_environment(1, 2, law, 7).unwrap();
        assert_eq!(a.alpha().len(), 5);
        assert_eq!(a.alpha(), b.alpha());
        let c = build_environment(1, 2, law, 8).unwrap();
        assert_ne!(a.alpha(), c.alpha());
        let round = Environment::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(round.alpha(), a.alpha());
        assert_eq!(round.seed, 7);
    }

    #[test]
    fn rescaled_measure_examples() {
        let law = TailLaw::new(0.5).unwrap();
        let env = Environment::from_alpha(Geometry::chain(1, false).unwrap(), law, vec![3]).unwrap();
        let w1 = rescaled_measure(&env, 1.0).unwrap();
        assert_eq!(w1.atoms.len(), 1);
        assert_eq!(w1.atoms[0].weight, 3.0);
        assert_eq!(w1.atoms[0].x[0], 0.0);
        let w2 = rescaled_measure(&env, 2.0).unwrap();
        assert_eq!(w2.atoms[0].weight, 0.75);
    }

    #[test]
    fn pair_examples() {
        let f = TestFunction::triangle(&[0.0], 1.0).unwrap();
        let mut m = PointMeasure::empty(1, 5.0);
        assert_eq!(pair(&m, &f), 0.0);
        m.atoms.push(Atom { x: [0.0; 3], weight: 2.0 });
        assert_eq!(pair(&m, &f), 2.0);
        m.atoms[0] = Atom { x: [0.5, 0.0, 0.0], weight: 1.0 };
        m.atoms.push(Atom { x: [3.0, 0.0, 0.0], weight: 5.0 });
        assert_eq!(pair(&m, &f), f.eval(&[0.5]));
    }

    #[test]
    fn bumps_are_compact_and_continuous() {
        for f in [
            TestFunction::triangle(&[0.2, -0.1], 0.7).unwrap(),
            TestFunction::squared_cosine(&[0.2, -0.1], 0.7).unwrap(),
        ] {
            assert_eq!(f.eval(&[0.2, -0.1]), 1.0);
            assert_eq!(f.eval(&[0.9, -0.1]), 0.0);
            assert!(f.eval(&[0.2 + 0.7 - 1e-9, -0.1]) < 1e-8);
        }
    }

    #[test]
    fn power_integrals_closed_form() {
        // int (1 - |x|/r)^p dx = 2r/(1+p) on the line
        let f = TestFunction::triangle(&[0.3], 1.5).unwrap();
        assert!((f.power_integral(0.5).unwrap() - 3.0 / 1.5).abs() < 1e-10);
        // int cos^2 = r on the line
        let g = TestFunction::squared_cosine(&[0.0], 2.0).unwrap();
        assert!((g.power_integral(1.0).unwrap() - 2.0).abs() < 1e-10);
        // triangle in the plane: 2 pi r^2 / ((p+1)(p+2))
        let h = TestFunction::triangle(&[0.0, 0.0], 1.0).unwrap();
        let want = 2.0 * std::f64::consts::PI / (1.5 * 2.5);
        assert!((h.power_integral(0.5).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn laplace_functional_of_indicator() {
        let (a, beta) = (2.0, 0.5);
        let got = laplace_functional_w_1d(|x| if (0.0..1.0).contains(&x) { a } else { 0.0 }, &[0.0, 1.0], beta)
            .unwrap();
        assert!((got - (-gamma(1.0 - beta) * a.powf(beta)).exp()).abs() < 1e-12);
        // direct double integral of (1 - e^{-va}) beta v^{-1-beta}, substituting v = w^{-1/beta}
        let inner = integrate(
            |w: f64| if w <= 0.0 { 0.0 } else { 1.0 - (-a * w.powf(-1.0 / beta)).exp() },
            0.0,
            1e4,
            1e-10,
            1e-10,
        )
        .unwrap()
        .value;
        let tail = beta * a * 1e4f64.powf(1.0 - 1.0 / beta) / (1.0 / beta - 1.0) / beta;
        assert!(((-(inner + tail)).exp() - got).abs() < 1e-6);
        let zero = TestFunction::triangle(&[0.0], 1.0).unwrap();
        assert_eq!(laplace_functional_w_scaled(&zero, 0.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn polylog_matches_direct_sum() {
        for &(beta, s) in &[(0.5, 0.3), (0.3, 0.05), (0.8, 2.0), (0.5, 1e-3)] {
            let mut direct = 0.0;
            let mut k = 1.0f64;
            loop {
                let term = (-s * k).exp() * k.powf(-beta);
                direct += term;
                if term < 1e-18 {
                    break;
                }
                k += 1.0;
            }
            let got = polylog_exp(beta, s);
            assert!((got - direct).abs() < 1e-11 * direct.max(1.0), "{beta} {s}: {got} vs {direct}");
        }
    }

    #[test]
    fn one_site_laplace_matches_pmf_sum() {
        let law = TailLaw::new(0.5).unwrap();
        let s = 0.4;
        let direct: f64 = (2..20_000u64)
            .map(|m| (-s * m as f64).exp() * (((m - 1) as f64).powf(-0.5) - (m as f64).powf(-0.5)))
            .sum();
        assert!((law.laplace(s) - direct).abs() < 1e-12);
    }

    #[test]
    fn exact_wn_laplace_approaches_limit() {
        let f = TestFunction::triangle(&[0.0], 1.0).unwrap();
        let limit = laplace_functional_w(&f, 0.5).unwrap();
        assert!((limit - 0.094_111_8).abs() < 5e-7, "{limit}");
        let gaps: Vec<f64> = [10.0, 30.0, 100.0]
            .iter()
            .map(|&n| (laplace_functional_wn_exact(&f, n, 0.5).unwrap() - limit).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
        assert!(gaps[2] < 0.02 * limit);
    }

    #[test]
    fn ppp_expected_count_and_coupling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let reps = 4000;
        let mut total = 0usize;
        for _ in 0..reps {
            total += sample_ppp_w(0.5, 1, 1.0, 0.01, &mut rng).unwrap().atoms.len();
        }
        let mean = total as f64 / reps as f64;
        // Poisson(20): se of the mean ~ 0.07
        assert!((mean - 20.0).abs() < 0.3, "{mean}");
        let coarse = sample_ppp_w(0.5, 2, 3.0, 0.1, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9)).unwrap();
        let fine = sample_ppp_w(0.5, 2, 3.0, 0.01, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(fine.atoms.len() >= coarse.atoms.len());
        assert_eq!(&fine.atoms[..coarse.atoms.len()], &coarse.atoms[..]);
    }
}
