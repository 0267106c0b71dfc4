//! Directed city graph construction: great-circle distances, terrain ridge
//! heights sampled from an elevation grid, and the distance/ridge-gated
//! adjacency.
//!
//! A pair of cities is linked (in both directions) when their great-circle
//! distance is strictly below `d_theta_km` and no ridge higher than
//! `m_theta_m` above the higher endpoint blocks the segment between them.
//! The gates are strict: a pair exactly at threshold is not connected.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Default gate thresholds: 300 km distance, 1200 m ridge.
pub const DEFAULT_D_THETA_KM: f64 = 300.0;
pub const DEFAULT_M_THETA_M: f64 = 1200.0;

/// Interior sample count used to approximate the ridge supremum.
pub const DEFAULT_RIDGE_SAMPLES: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct City {
    pub id: usize,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub altitude: f64,
}

pub fn validate_cities(cities: &[City]) -> Result<()> {
    if cities.is_empty() {
        return Err(Error::EmptyCityList);
    }
    for (i, c) in cities.iter().enumerate() {
        if c.id != i {
            return Err(Error::Config(format!(
                "city ids must be dense 0..{}; found id {} at row {}",
                cities.len() - 1,
                c.id,
                i
            )));
        }
        if !(-90.0..=90.0).contains(&c.lat) {
            return Err(Error::OutOfRange {
                what: "latitude",
                range: "[-90, 90]",
                value: c.lat,
            });
        }
        if !(-180.0..=180.0).contains(&c.lon) {
            return Err(Error::OutOfRange {
                what: "longitude",
                range: "[-180, 180]",
                value: c.lon,
            });
        }
    }
    Ok(())
}

/// Regular lat/lon elevation raster, row-major, registered at grid nodes:
/// `heights[r*ncols + c]` is the altitude at `(lat0 + r*dlat, lon0 + c*dlon)`.
#[derive(Debug, Clone)]
pub struct ElevationGrid {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nrows: usize,
    pub ncols: usize,
    pub heights: Vec<f64>,
}

impl ElevationGrid {
    pub fn new(
        lat0: f64,
        lon0: f64,
        dlat: f64,
        dlon: f64,
        nrows: usize,
        ncols: usize,
        heights: Vec<f64>,
    ) -> Result<Self> {
        if dlat <= 0.0 || dlon <= 0.0 {
            return Err(Error::NonPositive {
                what: "grid cell size",
                value: dlat.min(dlon),
            });
        }
        if nrows * ncols != heights.len() {
            return Err(Error::InvalidShape {
                op: "elevation_grid",
                shape: vec![nrows, ncols],
                reason: format!("{} height values", heights.len()),
            });
        }
        Ok(Self {
            lat0,
            lon0,
            dlat,
            dlon,
            nrows,
            ncols,
            heights,
        })
    }

    /// Bilinear interpolation at a point; errors outside the bounding box.
    pub fn height_at(&self, lat: f64, lon: f64) -> Result<f64> {
        let u = (lat - self.lat0) / self.dlat;
        let v = (lon - self.lon0) / self.dlon;
        let umax = (self.nrows - 1) as f64;
        let vmax = (self.ncols - 1) as f64;
        // Tolerate boundary roundoff only.
        let tol = 1e-9;
        if u < -tol || u > umax + tol || v < -tol || v > vmax + tol {
            return Err(Error::PointOutsideGrid { lat, lon });
        }
        let u = u.clamp(0.0, umax);
        let v = v.clamp(0.0, vmax);
        let r0 = (u.floor() as usize).min(self.nrows.saturating_sub(2));
        let c0 = (v.floor() as usize).min(self.ncols.saturating_sub(2));
        let (r1, c1) = (
            (r0 + 1).min(self.nrows - 1),
            (c0 + 1).min(self.ncols - 1),
        );
        let fu = u - r0 as f64;
        let fv = v - c0 as f64;
        let h = |r: usize, c: usize| self.heights[r * self.ncols + c];
        Ok(h(r0, c0) * (1.0 - fu) * (1.0 - fv)
            + h(r1, c0) * fu * (1.0 - fv)
            + h(r0, c1) * (1.0 - fu) * fv
            + h(r1, c1) * fu * fv)
    }
}

/// Immutable directed city graph. Paired directed edges are stored explicitly
/// (`(i,j)` and `(j,i)` both appear); distances and initial bearings are
/// per directed edge, parallel to `edges`.
#[derive(Debug, Clone)]
pub struct GraphTopology {
    pub cities: Arc<Vec<City>>,
    pub edges: Vec<(usize, usize)>,
    pub dist_km: Vec<f64>,
    pub bearing_deg: Vec<f64>,
    /// Edge ids grouped by destination node.
    pub in_edges: Vec<Vec<usize>>,
    /// Edge ids grouped by source node.
    pub out_edges: Vec<Vec<usize>>,
    pub d_theta_km: f64,
    pub m_theta_m: f64,
}

impl GraphTopology {
    pub fn n_nodes(&self) -> usize {
        self.cities.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Histogram of total degree (in + out) keyed by degree value.
    pub fn degree_histogram(&self) -> Vec<(usize, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for i in 0..self.n_nodes() {
            let deg = self.in_edges[i].len() + self.out_edges[i].len();
            *counts.entry(deg).or_insert(0usize) += 1;
        }
        counts.into_iter().collect()
    }
}

pub fn haversine_km(a: &City, b: &City) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let s = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * s.sqrt().asin()
}

/// Initial great-circle bearing from `a` to `b`, clockwise from north in
/// `[0, 360)`.
pub fn bearing_deg(a: &City, b: &City) -> Result<f64> {
    if a.lat == b.lat && a.lon == b.lon {
        return Err(Error::CoincidentPoints {
            lat: a.lat,
            lon: a.lon,
        });
    }
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    Ok(y.atan2(x).to_degrees().rem_euclid(360.0))
}

/// Highest terrain between two cities relative to the higher endpoint.
///
/// Samples `n_samples` evenly spaced interior points of the (lat,lon)
/// segment, bilinearly interpolated on the grid, and subtracts the larger
/// endpoint altitude (taken from the city records). Negative means the
/// terrain between the cities stays below both endpoints.
pub fn ridge_height(
    grid: &ElevationGrid,
    a: &City,
    b: &City,
    n_samples: usize,
) -> Result<f64> {
    assert!(n_samples >= 2, "ridge_height needs at least 2 samples");
    let endpoint_max = a.altitude.max(b.altitude);
    let mut highest = f64::NEG_INFINITY;
    for k in 1..=n_samples {
        let t = k as f64 / (n_samples + 1) as f64;
        let lat = a.lat + t * (b.lat - a.lat);
        let lon = a.lon + t * (b.lon - a.lon);
        highest = highest.max(grid.height_at(lat, lon)?);
    }
    Ok(highest - endpoint_max)
}

/// Builds the gated adjacency. Both gates are strict Heaviside tests:
/// an edge pair exists iff `dist < d_theta_km` and `ridge < m_theta_m`.
pub fn build_adjacency(
    cities: &[City],
    grid: &ElevationGrid,
    d_theta_km: f64,
    m_theta_m: f64,
    ridge_samples: usize,
) -> Result<GraphTopology> {
    validate_cities(cities)?;
    let n = cities.len();
    let mut edges = Vec::new();
    let mut dist = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = haversine_km(&cities[i], &cities[j]);
            if d >= d_theta_km {
                continue;
            }
            let m = ridge_height(grid, &cities[i], &cities[j], ridge_samples)?;
            if m >= m_theta_m {
                continue;
            }
            edges.push((i, j));
            dist.push(d);
            edges.push((j, i));
            dist.push(d);
        }
    }
    let mut bearing = Vec::with_capacity(edges.len());
    for &(s, d) in &edges {
        bearing.push(bearing_deg(&cities[s], &cities[d])?);
    }
    let mut in_edges = vec![Vec::new(); n];
    let mut out_edges = vec![Vec::new(); n];
    for (eid, &(s, d)) in edges.iter().enumerate() {
        out_edges[s].push(eid);
        in_edges[d].push(eid);
    }
    Ok(GraphTopology {
        cities: Arc::new(cities.to_vec()),
        edges,
        dist_km: dist,
        bearing_deg: bearing,
        in_edges,
        out_edges,
        d_theta_km,
        m_theta_m,
    })
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Reads `nodes.csv` (header: id,name,lat,lon,altitude).
pub fn read_cities(path: &Path) -> Result<Vec<City>> {
    let display = path.display().to_string();
    if !path.exists() {
        return Err(Error::MissingFile { path: display });
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: display.clone(),
        source: e,
    })?;
    let mut cities = Vec::new();
    for rec in rdr.deserialize::<City>() {
        cities.push(rec.map_err(|e| Error::Csv {
            path: display.clone(),
            source: e,
        })?);
    }
    validate_cities(&cities)?;
    Ok(cities)
}

pub fn write_cities(path: &Path, cities: &[City]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for c in cities {
        wtr.serialize(c).map_err(|e| Error::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    let bytes = wtr.into_inner().expect("csv writer into_inner");
    fsio::atomic_write(path, &bytes)
}

/// Reads `elevation.grid`: a text header `lat0 lon0 dlat dlon nrows ncols`
/// followed by `nrows` lines of `ncols` space-separated heights in meters.
pub fn read_grid(path: &Path) -> Result<ElevationGrid> {
    let display = path.display().to_string();
    let text = fsio::read_string(path)?;
    let bad = |reason: &str| Error::ShapeHeaderInconsistency {
        path: display.clone(),
        reason: reason.to_string(),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(bad("header must be `lat0 lon0 dlat dlon nrows ncols`"));
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad("bad header number"));
    let parse_u = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header count"));
    let (lat0, lon0) = (parse_f(fields[0])?, parse_f(fields[1])?);
    let (dlat, dlon) = (parse_f(fields[2])?, parse_f(fields[3])?);
    let (nrows, ncols) = (parse_u(fields[4])?, parse_u(fields[5])?);
    let mut heights = Vec::with_capacity(nrows * ncols);
    for (r, line) in lines.enumerate() {
        if r >= nrows {
            if line.trim().is_empty() {
                continue;
            }
            return Err(bad("more rows than the header declares"));
        }
        for tok in line.split_whitespace() {
            heights.push(tok.parse::<f64>().map_err(|_| bad("bad height value"))?);
        }
    }
    if heights.len() != nrows * ncols {
        return Err(bad(&format!(
            "expected {} heights, found {}",
            nrows * ncols,
            heights.len()
        )));
    }
    ElevationGrid::new(lat0, lon0, dlat, dlon, nrows, ncols, heights)
}

pub fn write_grid(path: &Path, grid: &ElevationGrid) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {} {} {} {}\n",
        grid.lat0, grid.lon0, grid.dlat, grid.dlon, grid.nrows, grid.ncols
    ));
    for r in 0..grid.nrows {
        let row: Vec<String> = grid.heights[r * grid.ncols..(r + 1) * grid.ncols]
            .iter()
            .map(|h| format!("{h}"))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fsio::atomic_write(path, out.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphJson {
    d_theta_km: f64,
    m_theta_m: f64,
    edges: Vec<(usize, usize)>,
    dist_km: Vec<f64>,
}

/// Writes `graph.json` with thresholds, directed edge list and per-edge
/// distances.
pub fn write_graph_json(path: &Path, topo: &GraphTopology) -> Result<()> {
    let g = GraphJson {
        d_theta_km: topo.d_theta_km,
        m_theta_m: topo.m_theta_m,
        edges: topo.edges.clone(),
        dist_km: topo.dist_km.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&g).expect("graph json");
    bytes.push(b'\n');
    fsio::atomic_write(path, &bytes)
}
