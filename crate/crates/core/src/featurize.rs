//! Feature assembly: node panels (meteorology + cyclic time-of-day and
//! day-of-week encodings), edge panels (wind/advection features per directed
//! edge), and train-range standardization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geograph::GraphTopology;
use crate::numerics::Tensor;

/// Seconds between consecutive panel rows (3 hours).
pub const STEP_SECONDS: i64 = 10_800;

/// Physical clamp range for concentrations, in μg/m³.
pub const PM25_MIN: f64 = 0.0;
pub const PM25_MAX: f64 = 500.0;

/// Meteorological node features, in panel column order.
pub const METEO_FEATURES: [&str; 8] = [
    "pbl_height",
    "k_index",
    "u_wind",
    "v_wind",
    "temp_2m",
    "rel_humidity",
    "precipitation",
    "surface_pressure",
];

/// Temporal node features appended after the meteorological block.
pub const TEMPORAL_FEATURES: [&str; 4] = ["sin_hour", "cos_hour", "sin_weekday", "cos_weekday"];

pub const EDGE_FEATURES: [&str; 5] = [
    "wind_speed_kmh",
    "dist_km",
    "wind_dir_deg",
    "edge_dir_deg",
    "advection_s",
];

pub const PBL_COL: usize = 0;
pub const U_WIND_COL: usize = 2;
pub const V_WIND_COL: usize = 3;
pub const NODE_FEATURE_COUNT: usize = METEO_FEATURES.len() + TEMPORAL_FEATURES.len();
pub const EDGE_FEATURE_COUNT: usize = EDGE_FEATURES.len();

/// Interpretation of the wind direction angle β.
///
/// `Toward` treats β as the direction the air moves toward, so wind blowing
/// from source to sink gives α ≈ 0 and maximal advection. `From` is the
/// meteorological "blowing from" convention, which flips β by 180°.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindConvention {
    #[default]
    Toward,
    From,
}

impl std::str::FromStr for WindConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toward" => Ok(Self::Toward),
            "from" => Ok(Self::From),
            other => Err(Error::Config(format!(
                "wind_convention must be `toward` or `from`, got `{other}`"
            ))),
        }
    }
}

/// Time-major node features `[T, N, p]` with their timestamps.
#[derive(Debug, Clone)]
pub struct NodePanel {
    pub values: Tensor,
    pub feature_names: Vec<String>,
    pub timestamps: Vec<i64>,
}

impl NodePanel {
    pub fn n_steps(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_nodes(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn at(&self, t: usize, node: usize, feature: usize) -> f64 {
        let (n, p) = (self.n_nodes(), self.values.shape()[2]);
        self.values.data()[t * n * p + node * p + feature]
    }

    /// The raw meteorological block `[T, N, 8]` (drops the temporal columns).
    pub fn meteo_block(&self) -> Tensor {
        let (t_len, n) = (self.n_steps(), self.n_nodes());
        let w = METEO_FEATURES.len();
        let mut out = vec![0.0; t_len * n * w];
        for t in 0..t_len {
            for i in 0..n {
                for f in 0..w {
                    out[(t * n + i) * w + f] = self.at(t, i, f);
                }
            }
        }
        Tensor::new(vec![t_len, n, w], out).expect("meteo shape")
    }
}

/// Time-major edge features `[T, M, q]`, rows in topology edge order.
#[derive(Debug, Clone)]
pub struct EdgePanel {
    pub values: Tensor,
    pub feature_names: Vec<String>,
}

impl EdgePanel {
    pub fn n_steps(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_edges(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Cyclic encoding of UTC hour-of-day and day-of-week:
/// `[sin_h, cos_h, sin_d, cos_d]` with Monday as weekday zero.
pub fn temporal_encoding(timestamp: i64) -> [f64; 4] {
    let secs_of_day = timestamp.rem_euclid(86_400);
    let hour = secs_of_day as f64 / 3_600.0;
    // 1970-01-01 was a Thursday; shift so Monday maps to 0.
    let days = timestamp.div_euclid(86_400);
    let weekday = (days + 3).rem_euclid(7) as f64;
    let th = 2.0 * std::f64::consts::PI * hour / 24.0;
    let td = 2.0 * std::f64::consts::PI * weekday / 7.0;
    [th.sin(), th.cos(), td.sin(), td.cos()]
}

/// Assembles the full `[T, N, 12]` node panel from raw meteorology
/// (`[T, N, 8]`, column order per [`METEO_FEATURES`]) plus temporal
/// encodings derived from `t0` at 3-hour spacing.
pub fn build_node_panel(meteo: &Tensor, t0: i64) -> Result<NodePanel> {
    let shape = meteo.shape();
    if shape.len() != 3 || shape[2] != METEO_FEATURES.len() {
        return Err(Error::InvalidShape {
            op: "build_node_panel",
            shape: shape.to_vec(),
            reason: format!("expected [T, N, {}]", METEO_FEATURES.len()),
        });
    }
    let (t_len, n, p_in) = (shape[0], shape[1], shape[2]);
    let p_out = NODE_FEATURE_COUNT;
    let timestamps: Vec<i64> = (0..t_len).map(|t| t0 + t as i64 * STEP_SECONDS).collect();
    let src = meteo.data();
    let mut out = vec![0.0; t_len * n * p_out];
    for t in 0..t_len {
        let enc = temporal_encoding(timestamps[t]);
        for i in 0..n {
            let s = t * n * p_in + i * p_in;
            let d = t * n * p_out + i * p_out;
            out[d..d + p_in].copy_from_slice(&src[s..s + p_in]);
            out[d + p_in..d + p_out].copy_from_slice(&enc);
        }
    }
    let feature_names = METEO_FEATURES
        .iter()
        .chain(TEMPORAL_FEATURES.iter())
        .map(|s| s.to_string())
        .collect();
    Ok(NodePanel {
        values: Tensor::new(vec![t_len, n, p_out], out)?,
        feature_names,
        timestamps,
    })
}

/// Wind-derived edge quantities: speed (km/h), flow direction β (degrees
/// clockwise from north), and the advection coefficient
/// `S = max(0, speed/d · cos α)` where `α = |γ − β|` folded into [0°, 180°].
pub fn advection_coefficient(
    u_ms: f64,
    v_ms: f64,
    dist_km: f64,
    edge_bearing_deg: f64,
    convention: WindConvention,
) -> Result<(f64, f64, f64)> {
    if dist_km <= 0.0 {
        return Err(Error::NonPositive {
            what: "edge distance",
            value: dist_km,
        });
    }
    let speed_kmh = 3.6 * (u_ms * u_ms + v_ms * v_ms).sqrt();
    // atan2(east, north) gives the direction the air moves toward; the
    // meteorological convention reports where it blows from, 180° away.
    let mut wind_dir = u_ms.atan2(v_ms).to_degrees().rem_euclid(360.0);
    if convention == WindConvention::From {
        wind_dir = (wind_dir + 180.0).rem_euclid(360.0);
    }
    let mut alpha = (edge_bearing_deg - wind_dir).rem_euclid(360.0);
    if alpha > 180.0 {
        alpha = 360.0 - alpha;
    }
    let s = (speed_kmh / dist_km * alpha.to_radians().cos()).max(0.0);
    Ok((speed_kmh, wind_dir, s))
}

/// Builds the `[T, M, 5]` edge panel from the raw node panel's wind columns.
/// Each directed edge uses its source node's wind.
pub fn build_edge_panel(
    node_panel_raw: &NodePanel,
    topology: &GraphTopology,
    convention: WindConvention,
) -> Result<EdgePanel> {
    if node_panel_raw.n_nodes() != topology.n_nodes() {
        return Err(Error::NodeCountMismatch {
            topo_nodes: topology.n_nodes(),
            panel_nodes: node_panel_raw.n_nodes(),
        });
    }
    let t_len = node_panel_raw.n_steps();
    let m = topology.n_edges();
    let q = EDGE_FEATURE_COUNT;
    let mut out = vec![0.0; t_len * m * q];
    for t in 0..t_len {
        for (e, &(src, _dst)) in topology.edges.iter().enumerate() {
            let u = node_panel_raw.at(t, src, U_WIND_COL);
            let v = node_panel_raw.at(t, src, V_WIND_COL);
            let dist = topology.dist_km[e];
            let bearing = topology.bearing_deg[e];
            let (speed, wdir, s) = advection_coefficient(u, v, dist, bearing, convention)?;
            let d = t * m * q + e * q;
            out[d] = speed;
            out[d + 1] = dist;
            out[d + 2] = wdir;
            out[d + 3] = bearing;
            out[d + 4] = s;
        }
    }
    Ok(EdgePanel {
        values: Tensor::new(vec![t_len, m, q], out)?,
        feature_names: EDGE_FEATURES.iter().map(|s| s.to_string()).collect(),
    })
}

/// Per-feature standardization statistics, fit on the training range only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub node_mean: Vec<f64>,
    pub node_std: Vec<f64>,
    pub edge_mean: Vec<f64>,
    pub edge_std: Vec<f64>,
    pub pm_mean: f64,
    pub pm_std: f64,
    /// Features whose variance was zero on the training range; their std was
    /// pinned to 1.
    pub zero_variance: Vec<String>,
}

impl Standardizer {
    /// Fits on the rows whose time index lies in any of `train_ranges`
    /// (half-open index ranges).
    pub fn fit(
        node_panel: &NodePanel,
        edge_panel: &EdgePanel,
        pm25: &Tensor,
        train_ranges: &[std::ops::Range<usize>],
    ) -> Result<Self> {
        if train_ranges.is_empty() || train_ranges.iter().all(|r| r.is_empty()) {
            return Err(Error::InvalidSplit {
                split: "train".into(),
                reason: "empty training range for standardizer fit".into(),
            });
        }
        let t_total = node_panel.n_steps();
        for r in train_ranges {
            if r.end > t_total {
                return Err(Error::InvalidSplit {
                    split: "train".into(),
                    reason: format!("range {}..{} outside panel of {} steps", r.start, r.end, t_total),
                });
            }
        }

        let mut zero_variance = Vec::new();
        let (node_mean, node_std) = stats_over_panel(
            node_panel.values.data(),
            node_panel.n_nodes(),
            NODE_FEATURE_COUNT,
            train_ranges,
            &node_panel.feature_names,
            &mut zero_variance,
        );
        let (edge_mean, edge_std) = stats_over_panel(
            edge_panel.values.data(),
            edge_panel.n_edges(),
            EDGE_FEATURE_COUNT,
            train_ranges,
            &edge_panel.feature_names,
            &mut zero_variance,
        );
        let n = pm25.shape()[1];
        let pm_names = vec!["pm25".to_string()];
        let (pm_mean, pm_std) = stats_over_panel(
            pm25.data(),
            n,
            1,
            train_ranges,
            &pm_names,
            &mut zero_variance,
        );
        Ok(Self {
            node_mean,
            node_std,
            edge_mean,
            edge_std,
            pm_mean: pm_mean[0],
            pm_std: pm_std[0],
            zero_variance,
        })
    }

    fn apply(values: &Tensor, mean: &[f64], std: &[f64]) -> Tensor {
        let width = mean.len();
        let mut out = values.to_vec();
        for row in out.chunks_exact_mut(width) {
            for ((x, m), s) in row.iter_mut().zip(mean).zip(std) {
                *x = (*x - m) / s;
            }
        }
        Tensor::new(values.shape().to_vec(), out).expect("same shape")
    }

    pub fn apply_node_panel(&self, panel: &NodePanel) -> NodePanel {
        NodePanel {
            values: Self::apply(&panel.values, &self.node_mean, &self.node_std),
            feature_names: panel.feature_names.clone(),
            timestamps: panel.timestamps.clone(),
        }
    }

    pub fn apply_edge_panel(&self, panel: &EdgePanel) -> EdgePanel {
        EdgePanel {
            values: Self::apply(&panel.values, &self.edge_mean, &self.edge_std),
            feature_names: panel.feature_names.clone(),
        }
    }

    /// Standardizes concentrations (any shape).
    pub fn apply_pm25(&self, pm25: &Tensor) -> Tensor {
        let out: Vec<f64> = pm25
            .data()
            .iter()
            .map(|&x| (x - self.pm_mean) / self.pm_std)
            .collect();
        Tensor::new(pm25.shape().to_vec(), out).expect("same shape")
    }

    /// Maps standardized predictions back to μg/m³, clamped to [0, 500].
    pub fn invert_prediction(&self, pred: &Tensor) -> Tensor {
        let out: Vec<f64> = pred
            .data()
            .iter()
            .map(|&x| (self.pm_std * x + self.pm_mean).clamp(PM25_MIN, PM25_MAX))
            .collect();
        Tensor::new(pred.shape().to_vec(), out).expect("same shape")
    }
}

/// Two-pass mean/std (population) over the rows of a `[T, rows, width]`
/// panel restricted to the given time ranges. Zero-variance features get
/// std 1 and are recorded.
fn stats_over_panel(
    data: &[f64],
    rows: usize,
    width: usize,
    ranges: &[std::ops::Range<usize>],
    names: &[String],
    zero_variance: &mut Vec<String>,
) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; width];
    let mut count = 0usize;
    for r in ranges {
        for t in r.clone() {
            let base = t * rows * width;
            for row in 0..rows {
                for f in 0..width {
                    mean[f] += data[base + row * width + f];
                }
            }
            count += rows;
        }
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    let mut var = vec![0.0; width];
    for r in ranges {
        for t in r.clone() {
            let base = t * rows * width;
            for row in 0..rows {
                for f in 0..width {
                    let d = data[base + row * width + f] - mean[f];
                    var[f] += d * d;
                }
            }
        }
    }
    let std: Vec<f64> = var
        .iter()
        .enumerate()
        .map(|(f, &v)| {
            let s = (v / count as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                zero_variance.push(names[f].clone());
                1.0
            }
        })
        .collect();
    (mean, std)
}
