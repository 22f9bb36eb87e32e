use std::fs;
use std::path::Path;

use super::config::{ExperimentConfig, ExperimentKind};
use super::output::{num, Chart, Table};
use super::run::gap_chart;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub kind: ExperimentKind,
    pub table: Table,
    pub chart: Chart,
    /// Per `(t, f)`: whether the gap at the largest `n` is no larger than at
    /// the smallest, up to two combined standard errors.
    pub trends: Vec<(f64, usize, bool)>,
}

impl ConvergenceReport {
    pub fn trend_holds(&self) -> bool {
        self.trends.iter().all(|t| t.2)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.table.write(&dir.join("convergence.csv"))?;
        self.chart.write(&dir.join("convergence.svg"))?;
        Ok(())
    }
}

/// Fields that must agree for runs to be comparable.
fn comparable(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    a.kind == b.kind
        && a.d == b.d
        && a.beta == b.beta
        && a.a == b.a
        && a.times == b.times
        && a.test_functions == b.test_functions
        && a.rho0 == b.rho0
}

/// Combines hydrodynamic runs over several `n` into one gap table.
pub fn report_convergence<P: AsRef<Path>>(dirs: &[P]) -> Result<ConvergenceReport> {
    let mut first: Option<ExperimentConfig> = None;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut columns = Vec::new();
    for dir in dirs {
        let dir = dir.as_ref();
        let cfg = ExperimentConfig::from_toml(&fs::read_to_string(dir.join("config.toml"))?)?;
        if !matches!(cfg.kind, ExperimentKind::HydroDensity | ExperimentKind::HydroFrequency) {
            return Err(Error::Config(format!(
                "{}: convergence reports need hydro-density or hydro-frequency runs",
                dir.display()
            )));
        }
        match &first {
            Some(f) if !comparable(f, &cfg) => {
                return Err(Error::Config(format!("{}: config does not match the first run", dir.display())));
            }
            Some(_) => {}
            None => first = Some(cfg),
        }
        let table = Table::parse(&fs::read_to_string(dir.join("summary.csv"))?)?;
        columns = table.columns.clone();
        rows.extend(table.rows);
    }
    let cfg = first.ok_or_else(|| Error::Config("no run directories given".into()))?;
    let mut summary = Table {
        schema: cfg.kind.name().into(),
        columns,
        rows,
    };
    let mut ns = summary.floats("n")?;
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if ns.len() < 2 {
        return Err(Error::Config("a convergence report needs at least two values of n".into()));
    }
    let ncol = summary.column("n").expect("n column");
    summary.rows.sort_by(|a, b| {
        a[ncol]
            .parse::<f64>()
            .unwrap_or(0.0)
            .total_cmp(&b[ncol].parse::<f64>().unwrap_or(0.0))
    });
    let t = summary.floats("t")?;
    let f = summary.floats("f")?;
    let n = summary.floats("n")?;
    let gap = summary.floats("gap")?;
    let se = summary.floats("gap_se")?;
    let mut out = Table::new(
        "convergence",
        &["t", "f", "n", "gap", "ci95", "variance_ratio", "variance_ratio_se"],
    );
    let vr = summary.floats("variance_ratio")?;
    let vr_se = summary.floats("variance_ratio_se")?;
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for i in 0..t.len() {
        if !keys.contains(&(t[i], f[i])) {
            keys.push((t[i], f[i]));
        }
    }
    let mut trends = Vec::new();
    for &(tk, fk) in &keys {
        let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] == tk && f[i] == fk).collect();
        for &i in &idx {
            out.push(vec![num(tk), num(fk), num(n[i]), num(gap[i].abs()), num(1.96 * se[i]), num(vr[i]), num(vr_se[i])]);
        }
        let (a, b) = (idx[0], idx[idx.len() - 1]);
        let ok = gap[b].abs() <= gap[a].abs() + 2.0 * (se[a] * se[a] + se[b] * se[b]).sqrt();
        trends.push((tk, fk as usize, ok));
    }
    let chart = gap_chart(&summary, cfg.kind.name())?;
    Ok(ConvergenceReport {
        kind: cfg.kind,
        table: out,
        chart,
        trends,
    })
}
