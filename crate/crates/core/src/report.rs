//! Report bundles and the plain-text table formats.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{PelletClass, SizeReport};
use crate::config::Provenance;
use crate::dataset::{ImageStats, SplitAssignment};
use crate::error::{Error, Result};
use crate::metrics::{MatchReport, PixelMetrics};

/// Everything a run reports; absent sections are omitted from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matching: Option<MatchReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel: Option<PixelMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<SizeReport>,
}

impl ReportBundle {
    pub fn new(provenance: Provenance) -> Self {
        ReportBundle {
            provenance,
            matching: None,
            pixel: None,
            sizes: None,
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub const STATS_HEADER: &str = "id,nice,ugly,big,joint,l_mean,l_std";

/// One row per image. Floats use the shortest round-tripping form.
pub fn stats_to_csv(stats: &[ImageStats]) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for st in stats {
        let f = st.fractions;
        let _ = writeln!(s, "{},{},{},{},{},{},{}", st.id, f[0], f[1], f[2], f[3], st.l_mean, st.l_std);
    }
    s
}

pub fn stats_from_csv(text: &str, path: &Path) -> Result<Vec<ImageStats>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == STATS_HEADER => {}
        other => {
            return Err(Error::format(
                path,
                format!("expected header {STATS_HEADER:?}, found {:?}", other.unwrap_or("")),
            ))
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 7 {
                return Err(Error::format(path, format!("row {}: expected 7 columns, found {}", i + 1, cols.len())));
            }
            let num = |k: usize| -> Result<f64> {
                cols[k]
                    .parse()
                    .map_err(|_| Error::format(path, format!("row {}: bad number {:?}", i + 1, cols[k])))
            };
            Ok(ImageStats {
                id: cols[0].to_string(),
                fractions: [num(1)?, num(2)?, num(3)?, num(4)?],
                l_mean: num(5)?,
                l_std: num(6)?,
            })
        })
        .collect()
}

/// Two tab-separated columns: image id and `train` or `test`, in input order.
pub fn split_manifest(stats: &[ImageStats], split: &SplitAssignment) -> String {
    let mut s = String::new();
    for st in stats {
        let side = if split.test_ids.contains(&st.id) { "test" } else { "train" };
        let _ = writeln!(s, "{}\t{}", st.id, side);
    }
    s
}

/// Histogram table: one row per measured class and bin.
pub fn size_report_csv(report: &SizeReport) -> String {
    let mut s = String::from("class,bin_lo_mm,bin_hi_mm,count\n");
    for class in &report.measured_classes {
        let Some(sizes) = report.classes.get(class) else { continue };
        for (k, n) in sizes.histogram.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                class.name(),
                report.bin_edges_mm[k],
                report.bin_edges_mm[k + 1],
                n
            );
        }
    }
    s
}

/// Instance counts of every foreground class.
pub fn class_counts(report: &SizeReport) -> Vec<(PelletClass, u64)> {
    PelletClass::FOREGROUND
        .iter()
        .map(|c| (*c, report.classes.get(c).map_or(0, |s| s.count)))
        .collect()
}
