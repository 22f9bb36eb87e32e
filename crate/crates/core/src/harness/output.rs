use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Version of the CSV layouts written by the harness.
pub const CSV_VERSION: u32 = 1;

/// In-memory CSV table; the first line of the file is
/// `# trapfield <schema> v<version>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &str, columns: &[&str]) -> Self {
        Table {
            schema: schema.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8");
        format!("# trapfield {} v{CSV_VERSION}\n{body}", self.schema)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Table> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        let schema = header
            .strip_prefix("# trapfield ")
            .and_then(|rest| rest.rsplit_once(' '))
            .map(|(s, _)| s.to_string())
            .ok_or_else(|| crate::Error::Config("missing trapfield CSV header line".into()))?;
        let bad = |e: csv::Error| crate::Error::Config(format!("malformed CSV: {e}"));
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let columns = r.headers().map_err(bad)?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()).map_err(bad))
            .collect::<Result<_>>()?;
        Ok(Table { schema, columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .column(name)
            .ok_or_else(|| crate::Error::Config(format!("no column {name}")))?;
        self.rows
            .iter()
            .map(|r| r[i].parse::<f64>().map_err(|e| crate::Error::Config(format!("{name}: {e}"))))
            .collect()
    }
}

/// Shortest round-trip formatting.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional symmetric error bars.
    pub errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    /// Line chart with one `<g class="series">` per series.
    pub fn render(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
                if (self.log_x && x <= 0.0) || (self.log_y && y <= 0.0) || !x.is_finite() || !y.is_finite() {
                    continue;
                }
                xs.push(tx(x));
                ys.push(ty(y));
                if e > 0.0 && !self.log_y {
                    ys.push(y - e);
                    ys.push(y + e);
                }
            }
        }
        let bounds = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-300 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = bounds(&xs);
        let (y0, y1) = bounds(&ys);
        let pw = w - left - right;
        let ph = h - top - bottom;
        let px = |x: f64| left + (tx(x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| top + ph - (ty(y) - y0) / (y1 - y0) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            left + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let gx = x0 + f * (x1 - x0);
            let gy = y0 + f * (y1 - y0);
            let lx = if self.log_x { 10f64.powf(gx) } else { gx };
            let ly = if self.log_y { 10f64.powf(gy) } else { gy };
            let sx = left + f * pw;
            let sy = top + ph - f * ph;
            let _ = writeln!(
                s,
                "<text x=\"{sx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
                top + ph + 16.0,
                tick(lx)
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                left - 6.0,
                sy + 4.0,
                tick(ly)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            left + pw / 2.0,
            h - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, ser) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(s, "<g class=\"series\" stroke=\"{color}\" fill=\"{color}\">");
            let pts: Vec<(usize, f64, f64)> = ser
                .points
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    p.0.is_finite() && p.1.is_finite() && !(self.log_x && p.0 <= 0.0) && !(self.log_y && p.1 <= 0.0)
                })
                .map(|(k, p)| (k, px(p.0), py(p.1)))
                .collect();
            if pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", p.1, p.2)).collect();
                let _ = writeln!(s, "<polyline fill=\"none\" stroke-width=\"1.5\" points=\"{}\"/>", path.join(" "));
            }
            for &(k, x, y) in &pts {
                let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\"/>");
                if let Some(err) = &ser.errors {
                    let (xv, yv) = ser.points[k];
                    if err[k] > 0.0 && !self.log_y {
                        let _ = writeln!(
                            s,
                            "<line x1=\"{x:.2}\" x2=\"{x:.2}\" y1=\"{:.2}\" y2=\"{:.2}\"/>",
                            py(yv - err[k]),
                            py(yv + err[k])
                        );
                    }
                    let _ = xv;
                }
            }
            let ly = top + 12.0 + 16.0 * i as f64;
            let lx = left + pw + 12.0;
            let _ = writeln!(s, "<rect x=\"{lx}\" y=\"{}\" width=\"12\" height=\"3\"/>", ly - 4.0);
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{ly}\" stroke=\"none\" fill=\"black\">{}</text>",
                lx + 16.0,
                escape(&ser.label)
            );
            let _ = writeln!(s, "</g>");
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

/// One criterion-style check reported by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSeed {
    pub label: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaFailure {
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub code_version: String,
    pub master_seed: u64,
    pub seeds: Vec<ReplicaSeed>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub failures: Vec<ReplicaFailure>,
    pub checks: Vec<Check>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new("demo", &["a", "b,c"]);
        t.push(vec![num(0.1), "x\"y".into()]);
        t.push(vec![num(2.0), "plain".into()]);
        let text = t.render();
        assert!(text.starts_with("# trapfield demo v1\n"));
        let back = Table::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.floats("a").unwrap(), vec![0.1, 2.0]);
    }

    #[test]
    fn chart_has_one_group_per_series() {
        let mut c = Chart::new("t", "x", "y").log_log();
        for k in 0..3 {
            c.series.push(Series {
                label: format!("s{k}"),
                points: vec![(1.0, 1.0 + k as f64), (10.0, 5.0), (0.0, 1.0)],
                errors: None,
            });
        }
        let svg = c.render();
        assert_eq!(svg.matches("<g class=\"series\"").count(), 3);
        assert!(svg.starts_with("<svg"));
        assert!(!svg.contains("NaN"));
    }
}
