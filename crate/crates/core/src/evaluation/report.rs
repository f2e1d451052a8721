//! The audit report document and its per-figure companions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::histogram::HistogramPair;
use super::svg::{histogram_chart, line_chart};
use super::{DetectionCurve, SpearmanMatrix, TheoryCheck};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub detection_accuracy: String,
    pub error_reduction_rate: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            detection_accuracy: "precision of the top ceil(t*E) ranked ids, E = injected error count".into(),
            error_reduction_rate:
                "(E_before - E_after) / E_before over surviving ids; removed errors count as resolved".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainSummary {
    pub seeds: Vec<u64>,
    pub baseline_accuracy: f64,
    pub removed_accuracy: Option<f64>,
    pub rectified_accuracy: Option<f64>,
    pub removed_delta: Option<f64>,
    pub rectified_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedHistograms {
    pub name: String,
    pub histograms: HistogramPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AuditReport {
    pub conventions: Conventions,
    pub detection_curves: Vec<DetectionCurve>,
    pub random_baseline: Option<DetectionCurve>,
    pub error_reduction_rate: Option<f64>,
    pub retrain: Option<RetrainSummary>,
    pub spearman: Option<SpearmanMatrix>,
    pub similarity_histograms: Vec<NamedHistograms>,
    pub norm_histograms: Option<HistogramPair>,
    pub theory: Option<TheoryCheck>,
}

impl AuditReport {
    /// Structural invariants of a well-formed report.
    pub fn validate(&self) -> Result<()> {
        for c in self.detection_curves.iter().chain(&self.random_baseline) {
            if c.points.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::validation(format!("curve {} has non-increasing t", c.method)));
            }
            if c.points.iter().any(|p| !(0.0..=1.0).contains(&p.1)) {
                return Err(Error::validation(format!(
                    "curve {} has accuracy outside [0, 1]",
                    c.method
                )));
            }
        }
        if let Some(s) = &self.spearman {
            let k = s.methods.len();
            if s.matrix.len() != k || s.matrix.iter().any(|r| r.len() != k) {
                return Err(Error::validation("spearman matrix is not square"));
            }
            for i in 0..k {
                if s.matrix[i][i].is_none_or(|v| (v - 1.0).abs() > 1e-9) {
                    return Err(Error::validation("spearman diagonal is not 1"));
                }
                for j in 0..k {
                    let close = match (s.matrix[i][j], s.matrix[j][i]) {
                        (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
                        (None, None) => true,
                        _ => false,
                    };
                    if !close {
                        return Err(Error::validation("spearman matrix is not symmetric"));
                    }
                }
            }
        }
        for h in self
            .similarity_histograms
            .iter()
            .map(|n| &n.histograms)
            .chain(&self.norm_histograms)
        {
            for side in [&h.first, &h.second] {
                if side.counts.iter().sum::<u64>() != side.total {
                    return Err(Error::validation("histogram counts do not sum to total"));
                }
            }
        }
        Ok(())
    }

    /// Write `report.json` plus CSV and SVG companions into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::format(format!("report serialization: {e}")))?;
        std::fs::write(dir.join("report.json"), json + "\n")?;

        let curves: Vec<&DetectionCurve> = self.detection_curves.iter().chain(&self.random_baseline).collect();
        if !curves.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("detection_curves.csv"))?;
            w.write_record(["method", "t", "accuracy"])?;
            for c in &curves {
                for (t, a) in &c.points {
                    w.write_record([c.method.clone(), format!("{t:?}"), format!("{a:?}")])?;
                }
            }
            w.flush()?;
            let series: Vec<(&str, &[(f64, f64)])> = curves
                .iter()
                .map(|c| (c.method.as_str(), c.points.as_slice()))
                .collect();
            std::fs::write(
                dir.join("detection_curves.svg"),
                line_chart("Error detection accuracy", "t", "accuracy", &series),
            )?;
        }

        for named in &self.similarity_histograms {
            write_histogram_csv(&dir.join(format!("similarity_{}.csv", named.name)), &named.histograms)?;
            std::fs::write(
                dir.join(format!("similarity_{}.svg", named.name)),
                histogram_chart(
                    &format!("Similarity of corrupted examples ({})", named.name),
                    "similarity",
                    &named.histograms,
                ),
            )?;
        }
        if let Some(h) = &self.norm_histograms {
            write_histogram_csv(&dir.join("feature_norms.csv"), h)?;
            std::fs::write(
                dir.join("feature_norms.svg"),
                histogram_chart("Penultimate feature L2 norms", "norm", h),
            )?;
        }
        Ok(())
    }
}

fn write_histogram_csv(path: &Path, pair: &HistogramPair) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "bin", "lo", "hi", "count"])?;
    for (label, h) in [(&pair.first_label, &pair.first), (&pair.second_label, &pair.second)] {
        let edges = h.bin_edges();
        for (b, c) in h.counts.iter().enumerate() {
            w.write_record([
                label.clone(),
                b.to_string(),
                format!("{:?}", edges[b]),
                format!("{:?}", edges[b + 1]),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
