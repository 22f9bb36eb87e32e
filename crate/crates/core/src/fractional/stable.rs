use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::lattice::MAX_DIM;

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::param("beta", format!("{beta} not in (0, 1)")));
    }
    Ok(())
}

/// One-sided stable variable with `E[exp(-lambda V)] = exp(-lambda^beta)`
/// (Kanter's representation).
pub fn sample_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> Result<f64> {
    check_beta(beta)?;
    let u = PI * (1.0 - rng.random::<f64>());
    let w: f64 = rng.sample(Exp1);
    let a = (beta * u).sin() / u.sin().powf(1.0 / beta);
    let b = (((1.0 - beta) * u).sin() / w).powf((1.0 - beta) / beta);
    Ok(a * b)
}

/// `V^{-1}(t) = (t / V)^beta` by self-similarity.
pub fn sample_inverse_subordinator<R: Rng + ?Sized>(beta: f64, t: f64, rng: &mut R) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::param("t", "must be non-negative"));
    }
    let v = sample_stable(beta, rng)?;
    Ok(inverse_from_stable(beta, t, v))
}

#[inline]
pub(crate) fn inverse_from_stable(beta: f64, t: f64, v: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        (t / v).powf(beta)
    }
}

/// `FK(t) = B(V^{-1}(t))` for a standard Brownian motion `B` in `R^d`.
pub fn simulate_fk<R: Rng + ?Sized>(beta: f64, d: usize, t: f64, rng: &mut R) -> Result<[f64; MAX_DIM]> {
    if !(1..=MAX_DIM).contains(&d) {
        return Err(Error::param("d", format!("{d} not in 1..=3")));
    }
    let s = sample_inverse_subordinator(beta, t, rng)?;
    let sd = s.sqrt();
    let mut out = [0.0; MAX_DIM];
    for x in out.iter_mut().take(d) {
        *x = sd * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(out)
}
