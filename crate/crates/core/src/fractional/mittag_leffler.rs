use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::{integrate_with_breaks, ln_gamma, CompensatedSum};

/// Largest series term allowed: `ln_gamma` is good to about `1e-13`
/// relative, so the alternating sum stays within `1e-11`.
const SERIES_MAX_TERM: f64 = 10.0;

/// `E_beta(z)` for `0 < beta <= 1` and `z <= 0`, to about `1e-10` absolute.
///
/// The power series is used while its largest term is moderate; past that
/// point cancellation sets in and the real-line integral representation
/// takes over.
pub fn mittag_leffler(beta: f64, z: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param("beta", format!("{beta} not in (0, 1]")));
    }
    if !(z <= 0.0) {
        return Err(Error::param("z", "only the negative half-line is supported"));
    }
    if beta == 1.0 {
        return Ok(z.exp());
    }
    let x = -z;
    if x == 0.0 {
        return Ok(1.0);
    }
    if series_max_term(beta, x) <= SERIES_MAX_TERM {
        ml_series(beta, z)
    } else {
        ml_integral(beta, z)
    }
}

fn series_max_term(beta: f64, x: f64) -> f64 {
    // the log of the largest term is close to x^{1/beta}
    if x.powf(1.0 / beta) > 100.0 {
        return f64::INFINITY;
    }
    let ln_x = x.ln();
    let mut best = f64::NEG_INFINITY;
    let mut k = 0.0;
    loop {
        let lt = k * ln_x - ln_gamma(beta * k + 1.0);
        if lt < best && k > 2.0 {
            return best.exp();
        }
        best = best.max(lt);
        k += 1.0;
    }
}

/// Power series `sum_k z^k / Gamma(beta k + 1)` with compensated summation.
pub fn ml_series(beta: f64, z: f64) -> Result<f64> {
    let x = -z;
    if x == 0.0 {
        return Ok(1.0);
    }
    let ln_x = x.ln();
    let mut sum = CompensatedSum::new();
    let mut peak = f64::NEG_INFINITY;
    for k in 0..20_000u32 {
        let kf = f64::from(k);
        let lt = kf * ln_x - ln_gamma(beta * kf + 1.0);
        peak = peak.max(lt);
        let term = lt.exp();
        sum.add(if k % 2 == 0 { term } else { -term });
        if lt < peak && term < 1e-18 {
            return Ok(sum.value());
        }
    }
    Err(Error::Numerical {
        context: "Mittag-Leffler series",
        achieved: f64::NAN,
        target: 1e-18,
    })
}

/// `E_beta(-x) = sin(beta pi)/(beta pi) int_0^inf exp(-(x u)^{1/beta}) / (u^2 + 2u cos(beta pi) + 1) du`,
/// with `[1, inf)` folded onto `(0, 1]`.
pub fn ml_integral(beta: f64, z: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::param("beta", "integral form needs 0 < beta < 1"));
    }
    let x = -z;
    let c = (beta * PI).cos();
    let p = 1.0 / beta;
    let denom = |u: f64| u * u + 2.0 * u * c + 1.0;
    let mut near = |u: f64| (-(x * u).powf(p)).exp() / denom(u);
    let mut far = |w: f64| {
        if w == 0.0 {
            0.0
        } else {
            (-(x / w).powf(p)).exp() / denom(w)
        }
    };
    let mut breaks = vec![0.0, 1.0];
    for s in [1.0 / x, 10.0 / x, (-c).max(0.0)] {
        if s > 0.0 && s < 1.0 {
            breaks.push(s);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let a = integrate_with_breaks(&mut near, &breaks, 1e-15, 1e-13)?;
    let b = integrate_with_breaks(&mut far, &breaks, 1e-15, 1e-13)?;
    Ok((beta * PI).sin() / (beta * PI) * (a.value + b.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{gamma, integrate};

    /// `exp(x^2) erfc(x) = 2/sqrt(pi) int_0^inf exp(-s^2 - 2 x s) ds`, by quadrature.
    fn scaled_erfc(x: f64) -> f64 {
        let r = integrate(|s| (-s * s - 2.0 * x * s).exp(), 0.0, 9.0, 1e-16, 1e-14).unwrap();
        2.0 / PI.sqrt() * r.value
    }

    #[test]
    fn reference_values() {
        assert_eq!(mittag_leffler(0.4, 0.0).unwrap(), 1.0);
        assert!((mittag_leffler(1.0, -1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let got = mittag_leffler(0.5, -1.0).unwrap();
        assert!((got - scaled_erfc(1.0)).abs() < 1e-12, "{got}");
        assert!((got - 0.427_583_6).abs() < 1e-7);
    }

    #[test]
    fn half_order_erfc_identity_on_a_range() {
        for &x in &[0.01f64, 0.3, 2.0, 4.9, 5.1, 8.0, 20.0, 100.0] {
            let want = scaled_erfc(x);
            let got = mittag_leffler(0.5, -x).unwrap();
            assert!((got - want).abs() < 1e-10, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn series_and_integral_agree_at_the_seam() {
        for &beta in &[0.2, 0.3, 0.5, 0.8, 0.95] {
            for &x in &[0.5, 2.0, 5.0] {
                if series_max_term(beta, x) > SERIES_MAX_TERM {
                    continue;
                }
                let s = ml_series(beta, -x).unwrap();
                let i = ml_integral(beta, -x).unwrap();
                assert!((s - i).abs() < 1e-10, "beta={beta} x={x}: {s} vs {i}");
            }
        }
    }

    #[test]
    fn large_argument_asymptotics() {
        // E_beta(-x) ~ 1/(x Gamma(1-beta))
        let (beta, x) = (0.3, 1e6);
        let got = mittag_leffler(beta, -x).unwrap();
        let want = 1.0 / (x * gamma(1.0 - beta));
        assert!((got - want).abs() / want < 1e-5);
    }

    #[test]
    fn monotone_and_bounded() {
        for &beta in &[0.3, 0.5, 0.8] {
            let mut prev = 1.0;
            for i in 0..1000 {
                let z = -(i as f64) * 0.05;
                let v = mittag_leffler(beta, z).unwrap();
                assert!(v > 0.0 && v <= 1.0);
                assert!(v <= prev + 1e-13, "beta={beta} z={z}");
                prev = v;
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(mittag_leffler(1.5, -1.0).is_err());
        assert!(mittag_leffler(0.5, 1.0).is_err());
    }
}
