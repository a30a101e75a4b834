//! Report tables (CSV and aligned text), histogram data and provenance
//! headers. Every number is printed with a fixed precision so reruns on the
//! same inputs give identical bytes.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::PrimeId;
use crate::error::{Error, Result};
use crate::extraction::ExtractionReport;
use crate::linalg::Matrix;
use crate::stats::{CorrelationMatrix, MetricSummary, VarianceDecomposition};
use crate::tucker::{RankSweepResult, StabilityReport, TuckerModel};

pub const HISTOGRAM_BINS: usize = 60;

/// Reference band for chance-level Jaccard between unrelated descriptions.
pub const RANDOM_JACCARD_BAND: (f64, f64) = (0.01, 0.05);

/// Config hash and input digests stamped on every report file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    /// Input artifact name → SHA-256 hex.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn header(&self, comment: &str) -> String {
        let mut out = format!("{comment} config_hash: {}\n", self.config_hash);
        for (name, digest) in &self.inputs {
            let _ = writeln!(out, "{comment} input {name}: sha256 {digest}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        Self {
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// Column-aligned plain text with the title above and notes below.
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.headers[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                let pad = w - cell.chars().count();
                if i == 0 {
                    s.push_str(cell);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str(&" ".repeat(pad));
                    s.push_str(cell);
                }
            }
            s.trim_end().to_string()
        };
        let mut out = format!("{}\n", self.title);
        let head = line(&self.headers);
        let _ = writeln!(out, "{head}");
        let _ = writeln!(out, "{}", "-".repeat(head.chars().count()));
        for r in &self.rows {
            let _ = writeln!(out, "{}", line(r));
        }
        for n in &self.notes {
            let _ = writeln!(out, "{n}");
        }
        out
    }
}

pub fn fmt(x: f64, places: usize) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x.is_nan() {
        return "nan".into();
    }
    let s = format!("{x:.places$}");
    // Avoid "-0.000".
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.3e}")
    } else {
        fmt(p, 4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    /// Values outside `[lo, hi]`.
    pub outside: usize,
}

/// Equal-width bins over `[lo, hi]`; the last bin is closed on the right.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bins == 0 || hi.partial_cmp(&lo) != Some(Ordering::Greater) {
        return Err(Error::InvalidInput(format!(
            "histogram needs bins > 0 and lo < hi, got {bins}, [{lo}, {hi}]"
        )));
    }
    let mut counts = vec![0usize; bins];
    let mut outside = 0;
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if !(v >= lo && v <= hi) {
            outside += 1;
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram {
        lo,
        hi,
        counts,
        outside,
    })
}

impl Histogram {
    pub fn table(&self, title: &str) -> Table {
        let mut t = Table::new(title, &["bin_lo", "bin_hi", "count"]);
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        for (i, c) in self.counts.iter().enumerate() {
            let a = self.lo + width * i as f64;
            t.push(vec![fmt(a, 6), fmt(a + width, 6), c.to_string()]);
        }
        t
    }
}

/// Drift of each metric below the 0.5 threshold.
pub fn drift_table(rows: &[MetricSummary], mu0: f64) -> Table {
    let mut t = Table::new(
        format!("Affordance drift per metric (H0: mean >= {mu0})"),
        &[
            "metric", "n", "mean", "sd", "ci_lo", "ci_hi", "t", "p_t", "p_perm", "cohens_d",
        ],
    );
    for r in rows {
        t.push(vec![
            r.metric.to_string(),
            r.n.to_string(),
            fmt(r.mean, 4),
            fmt(r.sd, 4),
            fmt(r.ci.lo, 4),
            fmt(r.ci.hi, 4),
            fmt(r.t.statistic, 2),
            fmt_p(r.t.p_value),
            fmt_p(r.permutation.p_value),
            r.cohens_d.map_or("n/a".into(), |d| fmt(d, 2)),
        ]);
    }
    if let Some(r) = rows.first() {
        t.notes.push(format!(
            "CI: {:.0}% percentile bootstrap, {} iterations, seed {}; p_perm: sign-flip test, {} iterations.",
            r.ci.level * 100.0,
            r.ci.iterations,
            r.ci.seed,
            r.ci.iterations
        ));
    }
    t.notes.push(format!(
        "Reference band for unrelated texts: Jaccard {:.2} to {:.2}.",
        RANDOM_JACCARD_BAND.0, RANDOM_JACCARD_BAND.1
    ));
    t
}

pub fn variance_table(rows: &[VarianceDecomposition<f64>]) -> Table {
    let mut t = Table::new(
        "Within-prime (across seeds) vs cross-prime (within seed) similarity",
        &[
            "temperature",
            "within_sim",
            "cross_sim",
            "var_ratio",
            "eta_sq",
            "within_pairs",
            "cross_pairs",
        ],
    );
    for r in rows {
        t.push(vec![
            fmt(r.temperature, 1),
            fmt(r.within_sim, 3),
            fmt(r.cross_sim, 3),
            fmt(r.var_ratio, 1),
            fmt(r.eta_sq, 3),
            r.within_pairs.to_string(),
            r.cross_pairs.to_string(),
        ]);
    }
    t.notes
        .push("var_ratio = (1 - cross_sim) / (1 - within_sim); eta_sq summed over embedding dimensions.".into());
    t
}

pub fn correlation_table(m: &CorrelationMatrix) -> Table {
    let mut headers = vec!["metric"];
    headers.extend(m.metrics.iter().map(|x| x.as_str()));
    let mut t = Table::new(
        format!("Pearson correlation between metrics ({} matched pairs)", m.n_rows),
        &headers,
    );
    let k = m.metrics.len();
    for (i, a) in m.metrics.iter().enumerate() {
        let mut row = vec![a.to_string()];
        row.extend((0..k).map(|j| fmt(m.r[i * k + j], 3)));
        t.push(row);
    }
    t
}

pub fn extraction_table(r: &ExtractionReport) -> Table {
    let mut t = Table::new("Extraction outcome", &["item", "count"]);
    t.push(vec!["attempted".into(), r.attempted.to_string()]);
    t.push(vec!["valid".into(), r.valid.to_string()]);
    for (reason, n) in &r.failures {
        t.push(vec![format!("excluded: {reason}"), n.to_string()]);
    }
    t.push(vec![
        "missing optional fields".into(),
        r.missing_optional_fields.to_string(),
    ]);
    t.push(vec!["images".into(), r.images.to_string()]);
    t.push(vec![
        "images with all primes".into(),
        r.complete_coverage.len().to_string(),
    ]);
    if let Some(c) = r.reference {
        t.notes.push(format!(
            "Coverage counted at seed {} and temperature {}.",
            c.seed, c.temperature
        ));
    }
    t.notes.push(format!(
        "Exclusion share: {} of {} responses.",
        r.failure_count(),
        r.attempted
    ));
    t
}

pub fn loadings_table(loadings: &Matrix<f64>, primes: &[PrimeId], title: &str) -> Table {
    let names: Vec<String> = (1..=loadings.cols()).map(|c| format!("dim{c}")).collect();
    let mut headers = vec!["prime", "label"];
    headers.extend(names.iter().map(String::as_str));
    let mut t = Table::new(title, &headers);
    for (r, p) in primes.iter().enumerate() {
        let mut row = vec![p.to_string(), p.label().to_string()];
        row.extend((0..loadings.cols()).map(|c| fmt(loadings[(r, c)], 2)));
        t.push(row);
    }
    t.notes
        .push("Signs fixed so each column's largest-magnitude entry is positive.".into());
    t
}

pub fn decomposition_table(model: &TuckerModel<f64>, shares: &[f64]) -> Table {
    let mut t = Table::new("Tucker decomposition summary", &["item", "value"]);
    t.push(vec![
        "ranks".into(),
        format!("{},{},{}", model.ranks[0], model.ranks[1], model.ranks[2]),
    ]);
    t.push(vec!["explained_variance".into(), fmt(model.explained_variance, 4)]);
    t.push(vec!["iterations".into(), model.iterations.to_string()]);
    t.push(vec!["converged".into(), model.converged.to_string()]);
    for (j, s) in shares.iter().enumerate() {
        t.push(vec![format!("context dim{} share", j + 1), fmt(*s, 4)]);
    }
    t.notes
        .push("explained_variance = 1 - ||T - T_hat||_F / ||T||_F.".into());
    t.notes.push(
        "Shares are each context slice's fraction of the core's squared norm (one reading of per-factor variance)."
            .into(),
    );
    t
}

pub fn stability_table(r: &StabilityReport<f64>, primes: &[PrimeId]) -> Table {
    let dims = r.phi_mean.len();
    let mut t = Table::new(
        format!(
            "Bootstrap stability ({} iterations, {} skipped, seed {})",
            r.iterations, r.skipped, r.seed
        ),
        &["prime", "label", "dim", "reference", "mean", "ci_lo", "ci_hi"],
    );
    for (row, p) in primes.iter().enumerate() {
        for c in 0..dims {
            let i = row * dims + c;
            t.push(vec![
                p.to_string(),
                p.label().to_string(),
                format!("dim{}", c + 1),
                fmt(r.reference[i], 3),
                fmt(r.loading_mean[i], 3),
                fmt(r.loading_lo[i], 3),
                fmt(r.loading_hi[i], 3),
            ]);
        }
    }
    for c in 0..dims {
        t.notes.push(format!(
            "dim{}: mean phi {}, phi > {} in {}% of iterations, max-|loading| prime unchanged in {}%.",
            c + 1,
            fmt(r.phi_mean[c], 3),
            r.phi_threshold,
            fmt(r.phi_fraction_above[c] * 100.0, 1),
            fmt(r.argmax_agreement[c] * 100.0, 1)
        ));
    }
    t
}

pub fn rank_sweep_table(r: &RankSweepResult<f64>) -> Table {
    let mut t = Table::new("Explained variance by Tucker rank", &["ranks", "explained_variance"]);
    for e in &r.entries {
        t.push(vec![
            format!("{},{},{}", e.ranks[0], e.ranks[1], e.ranks[2]),
            fmt(e.explained_variance, 4),
        ]);
    }
    t
}

/// Named report files, rendered with a provenance header.
#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub files: BTreeMap<String, String>,
}

impl ReportBundle {
    /// Adds `<stem>.csv` and `<stem>.txt` for `table`.
    pub fn add_table(&mut self, stem: &str, table: &Table, provenance: &Provenance) -> Result<()> {
        self.files
            .insert(format!("{stem}.csv"), provenance.header("#") + &table.to_csv()?);
        self.files
            .insert(format!("{stem}.txt"), provenance.header("#") + "\n" + &table.to_text());
        Ok(())
    }

    /// Concatenation of every text table, in file-name order.
    pub fn summary_text(&self, provenance: &Provenance) -> String {
        let mut out = provenance.header("#");
        for (name, body) in &self.files {
            if let Some(stem) = name.strip_suffix(".txt") {
                let _ = write!(out, "\n[{stem}]\n");
                out.push_str(
                    body.lines()
                        .filter(|l| !l.starts_with('#'))
                        .collect::<Vec<_>>()
                        .join("\n")
                        .trim_start(),
                );
                out.push('\n');
            }
        }
        out
    }

    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
