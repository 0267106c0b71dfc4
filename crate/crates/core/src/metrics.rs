//! Forecast scoring: RMSE/MAE plus thresholded categorical skill scores
//! (CSI, POD, FAR) over the pollution threshold, with the per-city,
//! per-leadtime aggregation protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::numerics::Tensor;

/// Pollution threshold in μg/m³; values strictly above it count as polluted.
pub const POLLUTION_THRESHOLD: f64 = 75.0;

/// Leadtimes (hours) reported in the standard breakdown.
pub const STANDARD_LEADTIMES_H: [usize; 7] = [3, 12, 24, 36, 48, 60, 72];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_negatives: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_negatives
    }

    fn add(&mut self, other: &ConfusionCounts) {
        self.hits += other.hits;
        self.misses += other.misses;
        self.false_alarms += other.false_alarms;
        self.correct_negatives += other.correct_negatives;
    }
}

/// How categorical scores were aggregated across cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalMode {
    /// Counts pooled globally before computing the ratios (default).
    Pooled,
    /// Ratios computed per (city, leadtime) cell, then averaged.
    PerCell,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeadtimeMetrics {
    pub leadtime_h: usize,
    pub rmse: f64,
    pub mae: f64,
    pub csi: f64,
    pub pod: f64,
    pub far: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub csi: f64,
    pub pod: f64,
    pub far: f64,
    pub categorical_mode: CategoricalMode,
    /// Cells whose categorical ratios hit a zero-denominator convention.
    pub degenerate_cells: usize,
    /// Breakdown per forecast step (3h per step), all leadtimes.
    pub per_leadtime: Vec<LeadtimeMetrics>,
}

impl MetricsReport {
    /// The breakdown restricted to the standard leadtimes present.
    pub fn standard_breakdown(&self) -> Vec<&LeadtimeMetrics> {
        self.per_leadtime
            .iter()
            .filter(|l| STANDARD_LEADTIMES_H.contains(&l.leadtime_h))
            .collect()
    }
}

/// RMSE and MAE over all entries of equally shaped tensors in physical
/// units.
pub fn rmse_mae(pred: &Tensor, truth: &Tensor) -> Result<(f64, f64)> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            op: "rmse_mae",
            lhs: pred.shape().to_vec(),
            rhs: truth.shape().to_vec(),
        });
    }
    if pred.numel() == 0 {
        return Err(Error::InvalidShape {
            op: "rmse_mae",
            shape: pred.shape().to_vec(),
            reason: "empty input".into(),
        });
    }
    let n = pred.numel() as f64;
    let mut sq = 0.0;
    let mut ab = 0.0;
    for (p, t) in pred.data().iter().zip(truth.data()) {
        let r = p - t;
        sq += r * r;
        ab += r.abs();
    }
    Ok(((sq / n).sqrt(), ab / n))
}

/// Binarizes both inputs at the threshold (strict `>`; a value exactly at
/// the threshold counts as clean air) and tallies the confusion counts.
pub fn binarize_and_count(pred: &Tensor, truth: &Tensor, threshold: f64) -> Result<ConfusionCounts> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            op: "binarize_and_count",
            lhs: pred.shape().to_vec(),
            rhs: truth.shape().to_vec(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (p, t) in pred.data().iter().zip(truth.data()) {
        match (*p > threshold, *t > threshold) {
            (true, true) => c.hits += 1,
            (false, true) => c.misses += 1,
            (true, false) => c.false_alarms += 1,
            (false, false) => c.correct_negatives += 1,
        }
    }
    Ok(c)
}

/// CSI, POD, FAR from confusion counts.
///
/// Zero-denominator conventions: POD is 1 when there was nothing to detect,
/// FAR is 0 when nothing was flagged, CSI is 1 when all three counts are
/// zero. Returns whether any convention fired.
pub fn csi_pod_far(c: &ConfusionCounts) -> ((f64, f64, f64), bool) {
    let (h, m, f) = (c.hits as f64, c.misses as f64, c.false_alarms as f64);
    let mut degenerate = false;
    let csi = if h + m + f > 0.0 {
        h / (h + m + f)
    } else {
        degenerate = true;
        1.0
    };
    let pod = if h + m > 0.0 {
        h / (h + m)
    } else {
        degenerate = true;
        1.0
    };
    let far = if h + f > 0.0 {
        f / (h + f)
    } else {
        degenerate = true;
        0.0
    };
    ((csi, pod, far), degenerate)
}

/// Aggregates windowed forecasts `[S, T, N]` (S forecast windows, T
/// leadtime steps, N cities) against matching truths, in physical units.
///
/// Continuous metrics are computed per (city, leadtime) cell over the S
/// windows and averaged uniformly over cells; categorical counts are pooled
/// before the ratios (or averaged per cell when `mode` says so).
pub fn aggregate_report(
    pred: &Tensor,
    truth: &Tensor,
    threshold: f64,
    mode: CategoricalMode,
) -> Result<MetricsReport> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            op: "aggregate_report",
            lhs: pred.shape().to_vec(),
            rhs: truth.shape().to_vec(),
        });
    }
    if pred.shape().len() != 3 || pred.numel() == 0 {
        return Err(Error::InvalidShape {
            op: "aggregate_report",
            shape: pred.shape().to_vec(),
            reason: "expected non-empty [windows, leadtimes, cities]".into(),
        });
    }
    let (s_len, t_len, n) = (pred.shape()[0], pred.shape()[1], pred.shape()[2]);
    let pd = pred.data();
    let td = truth.data();
    let cell = |w: usize, t: usize, i: usize| (w * t_len + t) * n + i;

    let mut degenerate_cells = 0usize;
    let mut rmse_sum = 0.0;
    let mut mae_sum = 0.0;
    let mut pooled = ConfusionCounts::default();
    let mut per_cell_cat = (0.0, 0.0, 0.0);
    let mut per_leadtime = Vec::with_capacity(t_len);

    for t in 0..t_len {
        let mut lt_rmse = 0.0;
        let mut lt_mae = 0.0;
        let mut lt_pooled = ConfusionCounts::default();
        let mut lt_per_cell = (0.0, 0.0, 0.0);
        for i in 0..n {
            let mut sq = 0.0;
            let mut ab = 0.0;
            let mut counts = ConfusionCounts::default();
            for w in 0..s_len {
                let (p, y) = (pd[cell(w, t, i)], td[cell(w, t, i)]);
                let r = p - y;
                sq += r * r;
                ab += r.abs();
                match (p > threshold, y > threshold) {
                    (true, true) => counts.hits += 1,
                    (false, true) => counts.misses += 1,
                    (true, false) => counts.false_alarms += 1,
                    (false, false) => counts.correct_negatives += 1,
                }
            }
            let cell_rmse = (sq / s_len as f64).sqrt();
            let cell_mae = ab / s_len as f64;
            lt_rmse += cell_rmse;
            lt_mae += cell_mae;
            rmse_sum += cell_rmse;
            mae_sum += cell_mae;
            lt_pooled.add(&counts);
            let ((ccsi, cpod, cfar), deg) = csi_pod_far(&counts);
            if deg {
                degenerate_cells += 1;
            }
            lt_per_cell.0 += ccsi;
            lt_per_cell.1 += cpod;
            lt_per_cell.2 += cfar;
            per_cell_cat.0 += ccsi;
            per_cell_cat.1 += cpod;
            per_cell_cat.2 += cfar;
        }
        pooled.add(&lt_pooled);
        let (csi, pod, far) = match mode {
            CategoricalMode::Pooled => csi_pod_far(&lt_pooled).0,
            CategoricalMode::PerCell => (
                lt_per_cell.0 / n as f64,
                lt_per_cell.1 / n as f64,
                lt_per_cell.2 / n as f64,
            ),
        };
        per_leadtime.push(LeadtimeMetrics {
            leadtime_h: (t + 1) * 3,
            rmse: lt_rmse / n as f64,
            mae: lt_mae / n as f64,
            csi,
            pod,
            far,
        });
    }

    let cells = (t_len * n) as f64;
    let (csi, pod, far) = match mode {
        CategoricalMode::Pooled => csi_pod_far(&pooled).0,
        CategoricalMode::PerCell => (
            per_cell_cat.0 / cells,
            per_cell_cat.1 / cells,
            per_cell_cat.2 / cells,
        ),
    };
    Ok(MetricsReport {
        rmse: rmse_sum / cells,
        mae: mae_sum / cells,
        csi,
        pod,
        far,
        categorical_mode: mode,
        degenerate_cells,
        per_leadtime,
    })
}

/// One row of an experiment summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub dataset: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

pub fn write_metrics_csv(path: &std::path::Path, rows: &[MetricRow]) -> Result<()> {
    let mut out = String::from("model,dataset,metric,mean,std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model, r.dataset, r.metric, r.mean, r.std
        ));
    }
    fsio::atomic_write(path, out.as_bytes())
}

pub fn write_metrics_json(path: &std::path::Path, rows: &[MetricRow]) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(rows).expect("metric rows serialize");
    bytes.push(b'\n');
    fsio::atomic_write(path, &bytes)
}

/// Per-leadtime curve data for external plotting.
pub fn write_per_leadtime_csv(path: &std::path::Path, report: &MetricsReport) -> Result<()> {
    let mut out = String::from("leadtime_h,rmse,mae,csi,pod,far\n");
    for l in &report.per_leadtime {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            l.leadtime_h, l.rmse, l.mae, l.csi, l.pod, l.far
        ));
    }
    fsio::atomic_write(path, out.as_bytes())
}
