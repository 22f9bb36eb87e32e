use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::{TailLaw, TestFunction};
use crate::error::{Error, Result};
use crate::fractional::L1Mode;
use crate::profile::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    EnvTail,
    WalkerMsd,
    DualityBattery,
    HydroDensity,
    HydroFrequency,
    FkeValidate,
    FinMsd,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::EnvTail => "env-tail",
            ExperimentKind::WalkerMsd => "walker-msd",
            ExperimentKind::DualityBattery => "duality-battery",
            ExperimentKind::HydroDensity => "hydro-density",
            ExperimentKind::HydroFrequency => "hydro-frequency",
            ExperimentKind::FkeValidate => "fke-validate",
            ExperimentKind::FinMsd => "fin-msd",
        }
    }
}

/// Fractional solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FkeSettings {
    /// Nodes per axis.
    pub nodes: usize,
    /// Side of the periodic box.
    pub period: f64,
    pub dt: f64,
    pub mode: L1Mode,
    /// Diffusion constant; estimated from walker runs when absent.
    pub d_eff: Option<f64>,
    /// Annealed walkers per `n` for the `d_eff` estimate.
    pub walkers: u64,
    /// Probe points for the subordination cross-check.
    pub probes: Vec<Vec<f64>>,
    pub samples: u64,
}

impl Default for FkeSettings {
    fn default() -> Self {
        FkeSettings {
            nodes: 64,
            period: 2.0 * std::f64::consts::PI,
            dt: 1e-3,
            mode: L1Mode::Implicit,
            d_eff: None,
            walkers: 2000,
            probes: vec![vec![0.0], vec![0.5], vec![1.0], vec![2.0], vec![3.0]],
            samples: 20_000,
        }
    }
}

/// FIN chain settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinSettings {
    pub eps: f64,
    pub half_width: f64,
    pub environments: u64,
    pub paths: u64,
}

impl Default for FinSettings {
    fn default() -> Self {
        FinSettings {
            eps: 0.01,
            half_width: 1000.0,
            environments: 50,
            paths: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default = "default_n")]
    pub n: Vec<f64>,
    /// Lattice half-width as a multiple of `n`.
    #[serde(default = "default_box_factor")]
    pub box_factor: f64,
    /// Fixed lattice half-width; overrides `box_factor`.
    #[serde(default)]
    pub half_width: Option<usize>,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default)]
    pub test_functions: Vec<TestFunction>,
    #[serde(default)]
    pub rho0: Option<Profile>,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    /// Independent environments per `n` in hydrodynamic runs.
    #[serde(default = "default_environments")]
    pub environments: u64,
    /// Environments per `n` that also get IPS replicas in frequency runs.
    /// The others contribute only the exact duality mean. All when omitted.
    #[serde(default)]
    pub ips_environments: Option<u64>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub fke: FkeSettings,
    #[serde(default)]
    pub fin: FinSettings,
}

fn default_d() -> usize {
    1
}
fn default_beta() -> f64 {
    0.5
}
fn default_n() -> Vec<f64> {
    vec![10.0, 20.0, 40.0]
}
fn default_box_factor() -> f64 {
    4.0
}
fn default_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_replicas() -> u64 {
    100
}
fn default_environments() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::param("d", format!("{} not in 1..=3", self.d)));
        }
        TailLaw::new(self.beta)?;
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::param("a", "must lie in [0, 1]"));
        }
        if self.n.iter().any(|&n| !(n >= 1.0)) {
            return Err(Error::param("n", "scales must be at least 1"));
        }
        if self.times.iter().any(|&t| !(t >= 0.0)) || self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("times", "must be non-negative and increasing"));
        }
        if !(self.box_factor > 0.0) {
            return Err(Error::param("box_factor", "must be positive"));
        }
        for f in &self.test_functions {
            f.validate()?;
            if f.dim() != self.d {
                return Err(Error::param("test_functions", "dimension differs from d"));
            }
        }
        if let Some(p) = &self.rho0 {
            p.validate()?;
        }
        if self.replicas == 0 {
            return Err(Error::param("replicas", "must be positive"));
        }
        if self.environments == 0 {
            return Err(Error::param("environments", "must be positive"));
        }
        if let Some(k) = self.ips_environments {
            if k == 0 || k > self.environments {
                return Err(Error::param("ips_environments", "must be in 1..=environments"));
            }
        }
        Ok(())
    }

    pub fn law(&self) -> Result<TailLaw> {
        TailLaw::new(self.beta)
    }

    pub fn half_width_for(&self, n: f64) -> usize {
        self.half_width
            .unwrap_or_else(|| (self.box_factor * n).ceil().max(1.0) as usize)
    }

    pub fn test_functions_or_default(&self) -> Result<Vec<TestFunction>> {
        if self.test_functions.is_empty() {
            Ok(vec![TestFunction::triangle(&vec![0.0; self.d], 1.0)?])
        } else {
            Ok(self.test_functions.clone())
        }
    }

    pub fn rho0_or_default(&self) -> Result<Profile> {
        match &self.rho0 {
            Some(p) => Ok(p.clone()),
            None => Profile::bump(TestFunction::squared_cosine(&vec![0.0; self.d], 1.5)?, 0.2, 0.6),
        }
    }

    /// SHA-256 of the canonical JSON form: keys sorted at every level, so
    /// the hash ignores field order in the source file.
    pub fn hash(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let canonical = canonical_json(&value);
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", Value::String((*k).clone()), canonical_json(&map[*k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}
