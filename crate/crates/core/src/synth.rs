//! Synthetic world generator and independent reference implementations.
//!
//! The generator places cities in a bounding box, raises Gaussian mountains
//! on an elevation grid, synthesizes weather (AR(1) winds, a diurnal
//! boundary-layer cycle, sparse rain events, smooth nuisance features), and
//! evolves concentrations with a known advection-diffusion recurrence on the
//! gated graph: local retention scaled by boundary-layer dilution and wet
//! scavenging, wind-driven exchange along edges, and a diurnal emission term,
//! clamped to the physical range.
//!
//! The brute-force functions re-implement the model's spatial aggregation and
//! rollout with plain per-node loops and no shared tensor machinery; they are
//! the oracles the fast paths are checked against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{
    build_edge_panel, build_node_panel, EdgePanel, NodePanel, WindConvention,
    EDGE_FEATURE_COUNT, PM25_MAX, PM25_MIN,
};
use crate::geograph::{build_adjacency, City, ElevationGrid, GraphTopology};
use crate::model::{GraphView, ModelSpec, Pm25GnnParams};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mountain {
    pub lat: f64,
    pub lon: f64,
    pub height_m: f64,
    pub radius_deg: f64,
}

/// Generator settings. The defaults produce a 12-city, 180-day world sized
/// so that a full train/validate/test experiment runs in minutes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_cities: usize,
    /// Bounding box south-west corner and spans, in degrees.
    pub lat0: f64,
    pub lon0: f64,
    pub lat_span: f64,
    pub lon_span: f64,
    pub n_timesteps: usize,
    /// Epoch of the first step.
    pub t0: i64,
    /// Transport gain κ applied to the edge exchange term.
    pub transport_gain: f64,
    /// Baseline retention per step, before dilution effects.
    pub decay_base: f64,
    /// Mean emission rate (μg/m³ per step) and diurnal amplitude in [0,1].
    pub emission_base: f64,
    pub emission_amp: f64,
    /// Regional wind regime: mean components (m/s) and AR(1) noise scale.
    pub wind_u_mean: f64,
    pub wind_v_mean: f64,
    pub wind_noise: f64,
    pub mountains: Vec<Mountain>,
    /// Graph gating used when building the world's topology.
    pub d_theta_km: f64,
    pub m_theta_m: f64,
    pub ridge_samples: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_cities: 12,
            lat0: 30.0,
            lon0: 110.0,
            lat_span: 4.0,
            lon_span: 4.0,
            n_timesteps: 1440,
            t0: 1_420_070_400, // 2015-01-01T00:00:00Z
            transport_gain: 0.15,
            decay_base: 0.975,
            emission_base: 6.0,
            emission_amp: 0.5,
            wind_u_mean: 3.0,
            wind_v_mean: 0.5,
            wind_noise: 1.2,
            mountains: vec![
                Mountain {
                    lat: 31.2,
                    lon: 111.4,
                    height_m: 1800.0,
                    radius_deg: 0.35,
                },
                Mountain {
                    lat: 29.3,
                    lon: 112.6,
                    height_m: 1500.0,
                    radius_deg: 0.30,
                },
            ],
            d_theta_km: 300.0,
            m_theta_m: 1200.0,
            ridge_samples: 32,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cities < 2 {
            return Err(Error::OutOfRange {
                what: "n_cities",
                range: "[2, ...)",
                value: self.n_cities as f64,
            });
        }
        if self.transport_gain < 0.0 {
            return Err(Error::OutOfRange {
                what: "transport_gain",
                range: "[0, ...)",
                value: self.transport_gain,
            });
        }
        if !(0.0..=1.0).contains(&self.decay_base) {
            return Err(Error::OutOfRange {
                what: "decay_base",
                range: "[0, 1]",
                value: self.decay_base,
            });
        }
        Ok(())
    }
}

/// Parses a mountain list of the form `lat,lon,height_m,radius_deg;...`.
pub fn parse_mountains(s: &str) -> Result<Vec<Mountain>> {
    let mut out = Vec::new();
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let nums: Vec<f64> = part
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad mountain entry `{part}`")))
            })
            .collect::<Result<_>>()?;
        if nums.len() != 4 {
            return Err(Error::Config(format!(
                "mountain entry `{part}` needs lat,lon,height_m,radius_deg"
            )));
        }
        out.push(Mountain {
            lat: nums[0],
            lon: nums[1],
            height_m: nums[2],
            radius_deg: nums[3],
        });
    }
    Ok(out)
}

/// Everything one generated world provides.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub cities: Vec<City>,
    pub grid: ElevationGrid,
    pub topology: GraphTopology,
    /// Raw (unstandardized) node panel including temporal encodings.
    pub panel: NodePanel,
    /// Raw edge panel on the world's topology.
    pub edge_panel: EdgePanel,
    /// Concentrations `[T, N]` in μg/m³.
    pub pm25: Tensor,
}

/// Retention multiplier from boundary-layer depth and precipitation:
/// deeper mixing layers dilute more, rain scavenges. Decreasing in both.
pub fn dilution_factor(pbl_m: f64, precip_m: f64) -> f64 {
    let sig = 1.0 / (1.0 + ((pbl_m - 800.0) / 200.0).exp());
    (0.9 + 0.1 * sig) * (1.0 - 0.3 * (precip_m * 1000.0).min(1.0))
}

/// One step of the ground-truth recurrence:
/// `x'_i = clamp(decay_i·x_i + κ·(Σ_in s·x_src − Σ_out s·x_i) + e_i, 0, 500)`.
pub fn transport_step(
    x: &[f64],
    edges: &[(usize, usize)],
    s: &[f64],
    decay: &[f64],
    emission: &[f64],
    kappa: f64,
) -> Vec<f64> {
    let mut flux = vec![0.0; x.len()];
    for (e, &(src, dst)) in edges.iter().enumerate() {
        let moved = s[e] * x[src];
        flux[dst] += moved;
        flux[src] -= moved;
    }
    (0..x.len())
        .map(|i| (decay[i] * x[i] + kappa * flux[i] + emission[i]).clamp(PM25_MIN, PM25_MAX))
        .collect()
}

/// Generates the full world. Fails if the gated graph ends up with no edges.
pub fn generate_world(cfg: &SynthConfig) -> Result<SynthWorld> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Elevation grid covering the box with a margin.
    let margin = 0.5;
    let cell = 0.05;
    let nrows = ((cfg.lat_span + 2.0 * margin) / cell).ceil() as usize + 1;
    let ncols = ((cfg.lon_span + 2.0 * margin) / cell).ceil() as usize + 1;
    let glat0 = cfg.lat0 - margin;
    let glon0 = cfg.lon0 - margin;
    let mut heights = vec![0.0; nrows * ncols];
    for r in 0..nrows {
        for c in 0..ncols {
            let lat = glat0 + r as f64 * cell;
            let lon = glon0 + c as f64 * cell;
            let mut h = 0.0;
            for m in &cfg.mountains {
                let d2 = (lat - m.lat).powi(2) + (lon - m.lon).powi(2);
                h += m.height_m * (-d2 / (2.0 * m.radius_deg * m.radius_deg)).exp();
            }
            heights[r * ncols + c] = h;
        }
    }
    let grid = ElevationGrid::new(glat0, glon0, cell, cell, nrows, ncols, heights)?;

    let cities: Vec<City> = (0..cfg.n_cities)
        .map(|i| {
            let lat = cfg.lat0 + rng.random_range(0.0..1.0) * cfg.lat_span;
            let lon = cfg.lon0 + rng.random_range(0.0..1.0) * cfg.lon_span;
            let altitude = grid.height_at(lat, lon).expect("city inside grid");
            City {
                id: i,
                name: format!("city_{i:02}"),
                lat,
                lon,
                altitude,
            }
        })
        .collect();

    let topology = build_adjacency(
        &cities,
        &grid,
        cfg.d_theta_km,
        cfg.m_theta_m,
        cfg.ridge_samples,
    )?;
    if topology.n_edges() == 0 {
        return Err(Error::WorldDisconnected);
    }

    let (t_len, n) = (cfg.n_timesteps, cfg.n_cities);
    let meteo_cols = crate::featurize::METEO_FEATURES.len();

    // Per-city AR(1) states and emission profiles.
    let ar = 0.92;
    let mut u: Vec<f64> = (0..n).map(|_| cfg.wind_u_mean + rng.random_range(-1.0..1.0)).collect();
    let mut v: Vec<f64> = (0..n).map(|_| cfg.wind_v_mean + rng.random_range(-1.0..1.0)).collect();
    let mut pbl_noise = vec![0.0f64; n];
    let mut kidx: Vec<f64> = (0..n).map(|_| 25.0 + rng.random_range(-5.0..5.0)).collect();
    let mut temp: Vec<f64> = (0..n).map(|_| 288.0 + rng.random_range(-4.0..4.0)).collect();
    let mut rh: Vec<f64> = (0..n).map(|_| 60.0 + rng.random_range(-10.0..10.0)).collect();
    let mut press: Vec<f64> = (0..n).map(|_| 101_000.0 + rng.random_range(-300.0..300.0)).collect();
    let mut rain_left = vec![0usize; n];
    let mut rain_rate = vec![0.0f64; n];
    let emission_base: Vec<f64> = (0..n)
        .map(|_| cfg.emission_base * rng.random_range(0.5..1.5))
        .collect();

    let mut meteo = vec![0.0; t_len * n * meteo_cols];
    for t in 0..t_len {
        let ts = cfg.t0 + t as i64 * crate::featurize::STEP_SECONDS;
        let hour = ts.rem_euclid(86_400) as f64 / 3600.0;
        for i in 0..n {
            u[i] = cfg.wind_u_mean
                + ar * (u[i] - cfg.wind_u_mean)
                + cfg.wind_noise * rng.random_range(-1.0..1.0);
            v[i] = cfg.wind_v_mean
                + ar * (v[i] - cfg.wind_v_mean)
                + cfg.wind_noise * rng.random_range(-1.0..1.0);
            pbl_noise[i] = 0.97 * pbl_noise[i] + rng.random_range(-25.0..25.0);
            let pbl = (800.0
                + 400.0 * (2.0 * std::f64::consts::PI * (hour - 8.0) / 24.0).sin()
                + pbl_noise[i])
                .max(50.0);
            kidx[i] = 25.0 + 0.95 * (kidx[i] - 25.0) + rng.random_range(-1.0..1.0);
            temp[i] = 288.0 + 0.97 * (temp[i] - 288.0) + rng.random_range(-0.5..0.5);
            rh[i] = (60.0 + 0.95 * (rh[i] - 60.0) + rng.random_range(-2.0..2.0)).clamp(5.0, 100.0);
            press[i] = 101_000.0 + 0.97 * (press[i] - 101_000.0) + rng.random_range(-40.0..40.0);
            if rain_left[i] == 0 && rng.random_range(0.0..1.0) < 0.025 {
                rain_left[i] = rng.random_range(3..12);
                rain_rate[i] = rng.random_range(0.0008..0.006);
            }
            let precip = if rain_left[i] > 0 {
                rain_left[i] -= 1;
                rain_rate[i]
            } else {
                0.0
            };
            let base = (t * n + i) * meteo_cols;
            meteo[base] = pbl;
            meteo[base + 1] = kidx[i];
            meteo[base + 2] = u[i];
            meteo[base + 3] = v[i];
            meteo[base + 4] = temp[i];
            meteo[base + 5] = rh[i];
            meteo[base + 6] = precip;
            meteo[base + 7] = press[i];
        }
    }
    let meteo = Tensor::new(vec![t_len, n, meteo_cols], meteo)?;
    let panel = build_node_panel(&meteo, cfg.t0)?;
    let edge_panel = build_edge_panel(&panel, &topology, WindConvention::Toward)?;

    // Concentrations evolved by the ground-truth recurrence; the transition
    // into step t uses the weather (and advection) of step t.
    let s_col = |t: usize, e: usize| {
        edge_panel.values.data()[(t * topology.n_edges() + e) * EDGE_FEATURE_COUNT + 4]
    };
    let mut pm = vec![0.0; t_len * n];
    for i in 0..n {
        pm[i] = (emission_base[i] / (1.0 - cfg.decay_base * 0.93)).clamp(PM25_MIN, PM25_MAX);
    }
    let emission_at = |i: usize, ts: i64| {
        let hour = ts.rem_euclid(86_400) as f64 / 3600.0;
        emission_base[i]
            * (1.0
                + cfg.emission_amp
                    * (2.0 * std::f64::consts::PI * (hour - 6.0) / 24.0).sin())
    };
    for t in 1..t_len {
        let ts = cfg.t0 + t as i64 * crate::featurize::STEP_SECONDS;
        let prev = pm[(t - 1) * n..t * n].to_vec();
        let decay: Vec<f64> = (0..n)
            .map(|i| {
                let pbl = panel.at(t, i, 0);
                let precip = panel.at(t, i, 6);
                cfg.decay_base * dilution_factor(pbl, precip)
            })
            .collect();
        let emission: Vec<f64> = (0..n).map(|i| emission_at(i, ts)).collect();
        let s: Vec<f64> = (0..topology.n_edges()).map(|e| s_col(t, e)).collect();
        let next = transport_step(
            &prev,
            &topology.edges,
            &s,
            &decay,
            &emission,
            cfg.transport_gain,
        );
        pm[t * n..(t + 1) * n].copy_from_slice(&next);
    }

    Ok(SynthWorld {
        cities,
        grid,
        topology,
        panel,
        edge_panel,
        pm25: Tensor::new(vec![t_len, n], pm)?,
    })
}

// ---------------------------------------------------------------------------
// Brute-force oracles
// ---------------------------------------------------------------------------

fn dot_row(row: &[f64], w: &[f64], col: usize, out_dim: usize) -> f64 {
    row.iter()
        .enumerate()
        .map(|(k, &x)| x * w[k * out_dim + col])
        .sum()
}

/// Plain-loop affine layer on one row: `row · W + b`.
fn affine_row(row: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let out_dim = b.numel();
    (0..out_dim)
        .map(|c| dot_row(row, w.data(), c, out_dim) + b.data()[c])
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Edge network Ψ on one concatenated `[ξ_src, ξ_dst, q]` row.
fn psi_row(params: &Pm25GnnParams, xi_src: &[f64], xi_dst: &[f64], q: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(xi_src.len() + xi_dst.len() + q.len());
    row.extend_from_slice(xi_src);
    row.extend_from_slice(xi_dst);
    row.extend_from_slice(q);
    let hidden: Vec<f64> = affine_row(&row, &params.psi1.w, &params.psi1.b)
        .into_iter()
        .map(sigmoid)
        .collect();
    affine_row(&hidden, &params.psi2.w, &params.psi2.b)
}

/// Reference spatial aggregation with explicit per-node loops: for each node,
/// Ψ over incoming edges minus Ψ over outgoing ones, then Φ. No scatter
/// primitives, no tape.
pub fn bruteforce_spatial(
    xi: &Tensor,
    q_t: &Tensor,
    graph: &GraphView,
    params: &Pm25GnnParams,
    no_export: bool,
) -> Tensor {
    let n = graph.n_nodes;
    let xi_dim = xi.shape()[1];
    let q_dim = q_t.shape().get(1).copied().unwrap_or(0);
    let e_dim = params.psi2.b.numel();
    let z_dim = params.phi.b.numel();

    let mut in_edges = vec![Vec::new(); n];
    let mut out_edges = vec![Vec::new(); n];
    for (e, (&s, &d)) in graph.src.iter().zip(graph.dst.iter()).enumerate() {
        out_edges[s].push(e);
        in_edges[d].push(e);
    }
    let xi_row = |i: usize| &xi.data()[i * xi_dim..(i + 1) * xi_dim];
    let q_row = |e: usize| &q_t.data()[e * q_dim..(e + 1) * q_dim];

    let mut out = vec![0.0; n * z_dim];
    for i in 0..n {
        let mut agg = vec![0.0; e_dim];
        for &e in &in_edges[i] {
            let src = graph.src[e];
            let val = psi_row(params, xi_row(src), xi_row(i), q_row(e));
            for (a, v) in agg.iter_mut().zip(&val) {
                *a += v;
            }
        }
        if !no_export {
            for &e in &out_edges[i] {
                let dst = graph.dst[e];
                let val = psi_row(params, xi_row(i), xi_row(dst), q_row(e));
                for (a, v) in agg.iter_mut().zip(&val) {
                    *a -= v;
                }
            }
        }
        let zeta = affine_row(&agg, &params.phi.w, &params.phi.b);
        out[i * z_dim..(i + 1) * z_dim].copy_from_slice(&zeta);
    }
    Tensor::new(vec![n, z_dim], out).expect("oracle shape")
}

/// Reference rollout: the plain-loop transliteration of the forecast
/// procedure (zero hidden state, previous prediction fed forward, per-step
/// readout appended to the output list). Uses [`bruteforce_spatial`] and
/// scalar GRU math only.
pub fn bruteforce_rollout(
    x0: &Tensor,
    p_panel: &Tensor,
    q_panel: &Tensor,
    graph: &GraphView,
    params: &Pm25GnnParams,
    spec: &ModelSpec,
) -> Tensor {
    let t_len = p_panel.shape()[0];
    let n = graph.n_nodes;
    let p_dim = p_panel.shape()[2];
    let q_dim = q_panel.shape()[2];
    let m = graph.n_edges();
    let h_dim = spec.h_dim;

    let mut h = vec![vec![0.0f64; h_dim]; n];
    let mut x_prev: Vec<f64> = x0.data().to_vec();
    let mut output = Vec::with_capacity(t_len * n);
    for t in 0..t_len {
        // ξ rows for this step.
        let mut xi = vec![0.0; n * (1 + p_dim)];
        for i in 0..n {
            xi[i * (1 + p_dim)] = x_prev[i];
            let src = &p_panel.data()[(t * n + i) * p_dim..(t * n + i + 1) * p_dim];
            xi[i * (1 + p_dim) + 1..(i + 1) * (1 + p_dim)].copy_from_slice(src);
            if spec.drop_pbl {
                xi[i * (1 + p_dim) + 1 + crate::featurize::PBL_COL] = 0.0;
            }
        }
        let xi_t = Tensor::new(vec![n, 1 + p_dim], xi.clone()).expect("xi shape");
        let q_t = Tensor::new(
            vec![m, q_dim],
            q_panel.data()[t * m * q_dim..(t + 1) * m * q_dim].to_vec(),
        )
        .expect("q shape");
        let zeta = bruteforce_spatial(&xi_t, &q_t, graph, params, spec.no_export);

        for i in 0..n {
            let mut x_row = Vec::with_capacity(1 + p_dim + spec.z_dim);
            x_row.extend_from_slice(&xi[i * (1 + p_dim)..(i + 1) * (1 + p_dim)]);
            x_row.extend_from_slice(&zeta.data()[i * spec.z_dim..(i + 1) * spec.z_dim]);
            let mut cat = h[i].clone();
            cat.extend_from_slice(&x_row);
            let z: Vec<f64> = affine_row(&cat, &params.wz.w, &params.wz.b)
                .into_iter()
                .map(sigmoid)
                .collect();
            let r: Vec<f64> = affine_row(&cat, &params.wr.w, &params.wr.b)
                .into_iter()
                .map(sigmoid)
                .collect();
            let mut cat_r: Vec<f64> = r.iter().zip(&h[i]).map(|(ri, hi)| ri * hi).collect();
            cat_r.extend_from_slice(&x_row);
            let h_tilde: Vec<f64> = affine_row(&cat_r, &params.wh.w, &params.wh.b)
                .into_iter()
                .map(f64::tanh)
                .collect();
            for k in 0..h_dim {
                h[i][k] = h[i][k] - z[k] * h[i][k] + z[k] * h_tilde[k];
            }
            let y = affine_row(&h[i], &params.omega.w, &params.omega.b)[0];
            x_prev[i] = y;
        }
        output.extend_from_slice(&x_prev);
    }
    Tensor::new(vec![t_len, n, 1], output).expect("rollout shape")
}
