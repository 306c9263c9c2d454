//! Aggregation of trial reports into misdetection and detection-rate tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::engine::TrialReport;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no UEs to aggregate at x={x} for {label}")]
    EmptyGroup { x: f64, label: String },
    #[error("trial has no UEs, detection percentage is undefined")]
    NoUes,
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub x: f64,
    pub label: String,
    pub value: f64,
    /// Half-width of the 95% interval, in the units of `value`.
    pub ci: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn push(&mut self, x: f64, label: impl Into<String>, value: f64, ci: f64) {
        self.rows.push(MetricsRow { x, label: label.into(), value, ci });
    }

    pub fn extend(&mut self, other: MetricsTable) {
        self.rows.extend(other.rows);
    }

    /// Rows ordered by x, then label.
    pub fn sorted(mut self) -> Self {
        self.rows.sort_by(|a, b| a.x.total_cmp(&b.x).then_with(|| a.label.cmp(&b.label)));
        self
    }

    pub fn get(&self, x: f64, label: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.x == x && r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut rows: Vec<&MetricsRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.x.total_cmp(&b.x).then_with(|| a.label.cmp(&b.label)));
        let mut out = String::from("x,label,value,ci\n");
        for r in rows {
            writeln!(out, "{},{},{},{}", sig6(r.x), r.label, sig6(r.value), sig6(r.ci)).unwrap();
        }
        out
    }

    /// One whitespace-separated `x value ci` block per label, gnuplot style.
    pub fn to_dat(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> = BTreeMap::new();
        for r in &self.clone().sorted().rows {
            let block = out.entry(r.label.clone()).or_insert_with(|| format!("# {}\n# x value ci\n", r.label));
            writeln!(block, "{} {} {}", sig6(r.x), sig6(r.value), sig6(r.ci)).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        std::fs::write(path, self.to_csv()).map_err(|source| MetricsError::Io { path: path.display().to_string(), source })
    }
}

/// Rounds to six significant digits and prints the shortest form of the result.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Wilson score interval for `k` successes in `n` trials: `(lower, upper)`.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    assert!(n > 0 && k <= n);
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn wilson_halfwidth(k: u64, n: u64) -> f64 {
    let (lo, hi) = wilson_interval(k, n);
    (hi - lo) / 2.0
}

/// Detected and considered UE counts for one (x, label) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectionCounts {
    pub detected: u64,
    pub considered: u64,
}

impl DetectionCounts {
    /// With `threshold_only`, UEs that never obtained a usable measurement
    /// (no receive beam) are left out, so only threshold failures count as misses.
    pub fn from_reports(reports: &[TrialReport], threshold_only: bool) -> Self {
        let mut c = DetectionCounts::default();
        for u in reports.iter().flat_map(|r| &r.per_ue) {
            if threshold_only && !u.locked {
                continue;
            }
            c.considered += 1;
            c.detected += u64::from(u.detected);
        }
        c
    }

    pub fn add(&mut self, other: DetectionCounts) {
        self.detected += other.detected;
        self.considered += other.considered;
    }

    pub fn missed(&self) -> u64 {
        self.considered - self.detected
    }
}

pub struct CountGroup {
    pub x: f64,
    pub label: String,
    pub counts: DetectionCounts,
}

fn check(g: &CountGroup) -> Result<(), MetricsError> {
    if g.counts.considered == 0 {
        return Err(MetricsError::EmptyGroup { x: g.x, label: g.label.clone() });
    }
    Ok(())
}

/// Misdetection probability per group with its Wilson half-width.
pub fn pmd_table(groups: &[CountGroup]) -> Result<MetricsTable, MetricsError> {
    let mut t = MetricsTable::default();
    for g in groups {
        check(g)?;
        let pmd = g.counts.missed() as f64 / g.counts.considered as f64;
        t.push(g.x, g.label.clone(), pmd, wilson_halfwidth(g.counts.missed(), g.counts.considered));
    }
    Ok(t.sorted())
}

/// Detection percentage per group, computed as the complement of the PMD.
pub fn detection_pct_table(groups: &[CountGroup]) -> Result<MetricsTable, MetricsError> {
    let pmd = pmd_table(groups)?;
    let mut t = MetricsTable::default();
    for r in pmd.rows {
        t.push(r.x, r.label, 100.0 * (1.0 - r.value), 100.0 * r.ci);
    }
    Ok(t)
}

fn groups_of(groups: &[(f64, String, &[TrialReport])], threshold_only: bool) -> Vec<CountGroup> {
    groups
        .iter()
        .map(|(x, label, reports)| CountGroup {
            x: *x,
            label: label.clone(),
            counts: DetectionCounts::from_reports(reports, threshold_only),
        })
        .collect()
}

/// PMD per (ring distance, strategy) group of reports.
pub fn pmd_vs_distance(groups: &[(f64, String, &[TrialReport])], threshold_only: bool) -> Result<MetricsTable, MetricsError> {
    pmd_table(&groups_of(groups, threshold_only))
}

pub fn detection_pct_vs_distance(
    groups: &[(f64, String, &[TrialReport])],
    threshold_only: bool,
) -> Result<MetricsTable, MetricsError> {
    detection_pct_table(&groups_of(groups, threshold_only))
}

/// Per-trial cumulative detection percentage after cycles `1..=n_cycles`.
pub fn trial_pct_curve(report: &TrialReport, n_cycles: usize) -> Result<Vec<f64>, MetricsError> {
    let n = report.per_ue.len();
    if n == 0 {
        return Err(MetricsError::NoUes);
    }
    Ok((1..=n_cycles).map(|k| 100.0 * report.total_after_cycle(k) as f64 / n as f64).collect())
}

/// Running mean and variance of the per-trial detection percentage at each cycle.
#[derive(Debug, Clone)]
pub struct CycleAccumulator {
    n: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl CycleAccumulator {
    pub fn new(n_cycles: usize) -> Self {
        CycleAccumulator { n: 0, sum: vec![0.0; n_cycles], sum_sq: vec![0.0; n_cycles] }
    }

    pub fn add(&mut self, report: &TrialReport) -> Result<(), MetricsError> {
        let curve = trial_pct_curve(report, self.sum.len())?;
        self.n += 1;
        for (k, v) in curve.into_iter().enumerate() {
            self.sum[k] += v;
            self.sum_sq[k] += v * v;
        }
        Ok(())
    }

    /// Rows `(k, label, mean %, 95% normal-approximation half-width)`.
    pub fn table(&self, label: &str) -> MetricsTable {
        let mut t = MetricsTable::default();
        let n = self.n as f64;
        for k in 0..self.sum.len() {
            let mean = self.sum[k] / n;
            let ci = if self.n > 1 {
                let var = ((self.sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0);
                Z95 * (var / n).sqrt()
            } else {
                0.0
            };
            t.push((k + 1) as f64, label, mean, ci);
        }
        t
    }
}

/// Mean detection percentage per cycle for each labelled batch.
pub fn detection_pct_vs_cycle(batches: &[(String, &[TrialReport])], n_cycles: usize) -> Result<MetricsTable, MetricsError> {
    let mut t = MetricsTable::default();
    for (label, reports) in batches {
        let mut acc = CycleAccumulator::new(n_cycles);
        for r in *reports {
            acc.add(r)?;
        }
        t.extend(acc.table(label));
    }
    Ok(t.sorted())
}
