//! Accuracy, recall and precision from a confusion matrix.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{AdiError, Result};

/// Rows are reference classes, columns are hypotheses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(AdiError::invalid("confusion matrix must be square and non-empty"));
        }
        Ok(Self {
            k,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, reference: usize, hypothesis: usize) -> u64 {
        self.counts[reference * self.k + hypothesis]
    }

    pub fn add(&mut self, reference: usize, hypothesis: usize) {
        self.counts[reference * self.k + hypothesis] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn row_total(&self, c: usize) -> u64 {
        (0..self.k).map(|j| self.get(c, j)).sum()
    }

    pub fn col_total(&self, c: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, c)).sum()
    }

    /// Per-class recall; `None` for classes absent from the reference.
    pub fn recalls(&self) -> Vec<Option<f64>> {
        (0..self.k)
            .map(|c| {
                let n = self.row_total(c);
                (n > 0).then(|| self.get(c, c) as f64 / n as f64)
            })
            .collect()
    }

    /// Per-class precision; 0 for classes never hypothesized.
    pub fn precisions(&self) -> Vec<f64> {
        (0..self.k)
            .map(|c| {
                let n = self.col_total(c);
                if n == 0 {
                    log::debug!("class {c} never hypothesized; precision counted as 0");
                    0.0
                } else {
                    self.get(c, c) as f64 / n as f64
                }
            })
            .collect()
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(AdiError::invalid(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= num_classes || l >= num_classes {
            return Err(AdiError::invalid(format!(
                "class index outside 0..{num_classes}"
            )));
        }
        cm.add(l, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

impl FromStr for Averaging {
    type Err = AdiError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "macro" => Ok(Self::Macro),
            "micro" => Ok(Self::Micro),
            _ => Err(AdiError::invalid(format!("unknown averaging `{s}` (macro|micro)"))),
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Macro => "macro",
            Self::Micro => "micro",
        })
    }
}

/// Percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub acc: f64,
    pub rcl: f64,
    pub prc: f64,
}

/// Macro recall averages over classes present in the reference; macro
/// precision averages over all classes. Micro averaging of single-label
/// predictions makes both equal to accuracy.
pub fn metrics(cm: &ConfusionMatrix, avg: Averaging) -> Metrics {
    let total = cm.total();
    let acc = if total == 0 {
        0.0
    } else {
        100.0 * cm.trace() as f64 / total as f64
    };
    match avg {
        Averaging::Micro => Metrics {
            acc,
            rcl: acc,
            prc: acc,
        },
        Averaging::Macro => {
            let recalls: Vec<f64> = cm.recalls().into_iter().flatten().collect();
            let rcl = if recalls.is_empty() {
                0.0
            } else {
                100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64
            };
            let prc = 100.0 * cm.precisions().iter().sum::<f64>() / cm.num_classes() as f64;
            Metrics { acc, rcl, prc }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = AdiError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Self::Tsv),
            "markdown" | "md" => Ok(Self::Markdown),
            _ => Err(AdiError::invalid(format!("unknown report format `{s}`"))),
        }
    }
}

/// One row per named system, columns ACC, RCL, PRC with two decimals.
pub fn report(rows: &[(String, Metrics)], format: ReportFormat) -> String {
    let mut s = String::new();
    match format {
        ReportFormat::Tsv => {
            s.push_str("system\tacc\trcl\tprc\n");
            for (name, m) in rows {
                writeln!(s, "{name}\t{:.2}\t{:.2}\t{:.2}", m.acc, m.rcl, m.prc).unwrap();
            }
        }
        ReportFormat::Markdown => {
            s.push_str("| System | ACC | RCL | PRC |\n|---|---:|---:|---:|\n");
            for (name, m) in rows {
                writeln!(s, "| {name} | {:.2} | {:.2} | {:.2} |", m.acc, m.rcl, m.prc).unwrap();
            }
        }
    }
    s
}
