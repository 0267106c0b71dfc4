//! Date-range split definitions and their resolution to timestep indices.
//!
//! `splits.json` holds named lists of `[start, end)` UTC timestamps; a split
//! may consist of several disjoint intervals (e.g. one heating season per
//! year). Index resolution is inclusive of the start instant and exclusive
//! of the end.

use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

use super::DatasetManifest;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<(String, String)>,
    pub validate: Vec<(String, String)>,
    pub test: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<Range<usize>>,
    pub validate: Vec<Range<usize>>,
    pub test: Vec<Range<usize>>,
}

impl SplitIndices {
    pub fn ranges(&self, split: &str) -> &[Range<usize>] {
        match split {
            "train" => &self.train,
            "validate" => &self.validate,
            "test" => &self.test,
            other => panic!("unknown split {other}"),
        }
    }
}

/// Accepts RFC 3339 timestamps or bare `YYYY-MM-DD` dates (midnight UTC).
pub fn parse_utc(s: &str) -> Result<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc).timestamp());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp());
    }
    Err(Error::Config(format!(
        "cannot parse `{s}` as an ISO-8601 UTC date or datetime"
    )))
}

fn resolve_one(
    name: &str,
    intervals: &[(String, String)],
    t0: i64,
    step: i64,
    n_steps: usize,
) -> Result<Vec<Range<usize>>> {
    if intervals.is_empty() {
        return Err(Error::InvalidSplit {
            split: name.into(),
            reason: "no intervals".into(),
        });
    }
    let mut out = Vec::new();
    for (start_s, end_s) in intervals {
        let start = parse_utc(start_s)?;
        let end = parse_utc(end_s)?;
        if end <= start {
            return Err(Error::InvalidSplit {
                split: name.into(),
                reason: format!("interval [{start_s}, {end_s}) is empty or reversed"),
            });
        }
        // First index with timestamp >= start; first index with ts >= end.
        let lo = ((start - t0) + step - 1).div_euclid(step).max(0) as usize;
        let hi = (((end - t0) + step - 1).div_euclid(step).max(0) as usize).min(n_steps);
        if lo >= hi {
            return Err(Error::InvalidSplit {
                split: name.into(),
                reason: format!("interval [{start_s}, {end_s}) covers no timesteps"),
            });
        }
        if hi > n_steps || lo >= n_steps {
            return Err(Error::InvalidSplit {
                split: name.into(),
                reason: format!("interval [{start_s}, {end_s}) is outside the dataset"),
            });
        }
        out.push(lo..hi);
    }
    Ok(out)
}

/// Maps epoch intervals to timestep index ranges and checks the splits are
/// inside the dataset and pairwise disjoint.
pub fn resolve_splits(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<SplitIndices> {
    let (t0, step, n) = (manifest.t0, manifest.step_seconds, manifest.n_timesteps);
    let idx = SplitIndices {
        train: resolve_one("train", &spec.train, t0, step, n)?,
        validate: resolve_one("validate", &spec.validate, t0, step, n)?,
        test: resolve_one("test", &spec.test, t0, step, n)?,
    };
    // Disjointness across every pair of resolved ranges.
    let mut all: Vec<(&str, &Range<usize>)> = Vec::new();
    for (name, ranges) in [
        ("train", &idx.train),
        ("validate", &idx.validate),
        ("test", &idx.test),
    ] {
        for r in ranges {
            all.push((name, r));
        }
    }
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let (a, b) = (all[i].1, all[j].1);
            if a.start < b.end && b.start < a.end {
                return Err(Error::InvalidSplit {
                    split: format!("{}/{}", all[i].0, all[j].0),
                    reason: format!("index ranges {a:?} and {b:?} overlap"),
                });
            }
        }
    }
    Ok(idx)
}

pub fn read_splits_json(path: &Path) -> Result<SplitSpec> {
    let text = fsio::read_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn write_splits_json(path: &Path, spec: &SplitSpec) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(spec).expect("split spec serialize");
    bytes.push(b'\n');
    fsio::atomic_write(path, &bytes)
}
