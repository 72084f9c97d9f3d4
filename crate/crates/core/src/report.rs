//! Result tables: the per-cell CSV, mean ± std summary and gain tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Baseline;
use crate::error::{Error, Result};
use crate::eval::gains;

/// One evaluated (client, baseline, split seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub client: String,
    pub baseline: String,
    pub seed: usize,
    /// Split fractions as percentages, e.g. `10/10/80`.
    pub split: String,
    pub f1_micro: f64,
    /// Selected `C` (freeze), step count (finetune) or round (supervised).
    pub selected_strength_or_steps: String,
}

/// Comparisons reported as percentage gains `(a - b) / b`.
pub const GAIN_PAIRS: [(Baseline, Baseline); 5] = [
    (Baseline::FedSelfFreeze, Baseline::NoFedSelfFreeze),
    (Baseline::FedSelfFinetune, Baseline::NoFedSelfFinetune),
    (Baseline::FedSelfFreeze, Baseline::FedSup),
    (Baseline::FedSelfFinetune, Baseline::FedSup),
    (Baseline::FedSelfFinetune, Baseline::NoFedSup),
];

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Concatenates result files, dropping exact duplicate cells, in a stable
/// order (baseline, client, seed).
pub fn merge_records(paths: &[&Path]) -> Result<Vec<EvalRecord>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_records(p)?);
    }
    sort_records(&mut all);
    all.dedup();
    Ok(all)
}

pub fn sort_records(records: &mut [EvalRecord]) {
    let order = |name: &str| {
        Baseline::ALL
            .iter()
            .position(|b| b.name() == name)
            .unwrap_or(usize::MAX)
    };
    records.sort_by(|a, b| {
        (order(&a.baseline), &a.baseline, a.seed, &a.client)
            .cmp(&(order(&b.baseline), &b.baseline, b.seed, &b.client))
            .then(a.f1_micro.total_cmp(&b.f1_micro))
    });
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n.max(1) as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

/// `(baseline, client) -> mean ± std` over seeds, in first-appearance
/// client order.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub clients: Vec<String>,
    pub baselines: Vec<String>,
    pub cells: BTreeMap<(String, String), MeanStd>,
}

pub fn summarize(records: &[EvalRecord]) -> Summary {
    let mut clients: Vec<String> = Vec::new();
    let mut baselines: Vec<String> = Vec::new();
    let mut values: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        if !clients.contains(&r.client) {
            clients.push(r.client.clone());
        }
        if !baselines.contains(&r.baseline) {
            baselines.push(r.baseline.clone());
        }
        values
            .entry((r.baseline.clone(), r.client.clone()))
            .or_default()
            .push(r.f1_micro);
    }
    let order = |name: &String| Baseline::ALL.iter().position(|b| b.name() == name).unwrap_or(usize::MAX);
    baselines.sort_by_key(order);
    let cells = values.into_iter().map(|(k, v)| (k, MeanStd::of(&v))).collect();
    Summary {
        clients,
        baselines,
        cells,
    }
}

impl Summary {
    pub fn mean(&self, baseline: &str, client: &str) -> Option<f64> {
        self.cells
            .get(&(baseline.to_string(), client.to_string()))
            .map(|m| m.mean)
    }

    /// Per-client gains of `a` over `b` on the seed means, or `None` when
    /// either baseline is missing for some client.
    pub fn gains(&self, a: &str, b: &str) -> Option<(Vec<f64>, f64)> {
        let am: Option<Vec<f64>> = self.clients.iter().map(|c| self.mean(a, c)).collect();
        let bm: Option<Vec<f64>> = self.clients.iter().map(|c| self.mean(b, c)).collect();
        Some(gains(&am?, &bm?))
    }

    /// Markdown table, baselines as rows, clients as columns.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "| baseline |");
        for c in &self.clients {
            let _ = write!(s, " {c} |");
        }
        s.push('\n');
        s.push_str("|---|");
        s.push_str(&"---|".repeat(self.clients.len()));
        s.push('\n');
        for b in &self.baselines {
            let _ = write!(s, "| {b} |");
            for c in &self.clients {
                match self.cells.get(&(b.clone(), c.clone())) {
                    Some(m) => {
                        let _ = write!(s, " {:.2} ± {:.2} |", 100.0 * m.mean, 100.0 * m.std);
                    }
                    None => s.push_str(" n/a |"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn gains_markdown(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "| comparison |");
        for c in &self.clients {
            let _ = write!(s, " {c} |");
        }
        s.push_str(" avg |\n|---|");
        s.push_str(&"---|".repeat(self.clients.len() + 1));
        s.push('\n');
        for (a, b) in GAIN_PAIRS {
            let Some((per, avg)) = self.gains(a.name(), b.name()) else {
                continue;
            };
            let _ = write!(s, "| {a} vs {b} |");
            for g in per {
                let _ = write!(s, " {g:+.2}% |");
            }
            let _ = writeln!(s, " {avg:+.2}% |");
        }
        s
    }

    pub fn write_gains_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["a", "b", "client", "gain_percent"])?;
        for (a, b) in GAIN_PAIRS {
            let Some((per, avg)) = self.gains(a.name(), b.name()) else {
                continue;
            };
            for (c, g) in self.clients.iter().zip(per) {
                w.write_record([a.name(), b.name(), c, &g.to_string()])?;
            }
            w.write_record([a.name(), b.name(), "avg", &avg.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes `results.csv`, `summary.md` and `gains.csv` into `dir`.
pub fn write_report(dir: &Path, records: &[EvalRecord], failures: &[String]) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    write_records(&dir.join("results.csv"), records)?;
    let summary = summarize(records);
    let mut md = String::from("# Results\n\nF1-micro (%) on test, mean ± std over split seeds.\n\n");
    md.push_str(&summary.to_markdown());
    md.push_str("\n## Gains\n\n");
    md.push_str(&summary.gains_markdown());
    if !failures.is_empty() {
        md.push_str("\n## Failed cells\n\n");
        for f in failures {
            let _ = writeln!(md, "- {f}");
        }
    }
    std::fs::write(dir.join("summary.md"), md)?;
    summary.write_gains_csv(&dir.join("gains.csv"))?;
    Ok(summary)
}
