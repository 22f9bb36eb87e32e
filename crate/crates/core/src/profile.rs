//! Macroscopic density profiles `rho_0` with values in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::environment::TestFunction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `base + amplitude * f(x)`
    Bump {
        f: TestFunction,
        #[serde(default)]
        base: f64,
        amplitude: f64,
    },
    /// `mean + amplitude * cos(k x_1)`
    Cosine {
        mean: f64,
        amplitude: f64,
        wavenumber: f64,
    },
}

impl Profile {
    pub fn constant(value: f64) -> Result<Self> {
        let p = Profile::Constant { value };
        p.validate()?;
        Ok(p)
    }

    pub fn bump(f: TestFunction, base: f64, amplitude: f64) -> Result<Self> {
        let p = Profile::Bump { f, base, amplitude };
        p.validate()?;
        Ok(p)
    }

    pub fn cosine(mean: f64, amplitude: f64, wavenumber: f64) -> Result<Self> {
        let p = Profile::Cosine {
            mean,
            amplitude,
            wavenumber,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks that the profile takes values in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range();
        if !(lo >= 0.0 && hi <= 1.0) {
            return Err(Error::param(
                "rho0",
                format!("profile range [{lo}, {hi}] is not inside [0, 1]"),
            ));
        }
        if let Profile::Bump { f, .. } = self {
            f.validate()?;
        }
        Ok(())
    }

    /// Exact range of the profile.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Profile::Constant { value } => (value, value),
            Profile::Bump {
                base, amplitude, ..
            } => {
                let top = base + amplitude;
                (base.min(top), base.max(top))
            }
            Profile::Cosine {
                mean, amplitude, ..
            } => (mean - amplitude.abs(), mean + amplitude.abs()),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Bump { f, base, amplitude } => base + amplitude * f.eval(x),
            Profile::Cosine {
                mean,
                amplitude,
                wavenumber,
            } => mean + amplitude * (wavenumber * x[0]).cos(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.range() == (0.0, 0.0)
    }
}
