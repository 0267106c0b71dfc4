//! Dataset directory format, checkpoint persistence, and split resolution.
//!
//! A dataset directory holds `manifest.json`, `nodes.csv`, `elevation.grid`,
//! `meteo.knt` (`[T,N,8]` raw meteorology) and `pm25.knt` (`[T,N]` μg/m³).
//! The manifest records shapes, the time axis, feature names and per-file
//! SHA-256 checksums, verified on load.

mod checkpoint;
mod knt;
mod splits;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use knt::{knt_bytes, parse_knt, read_knt, write_knt, KntDtype};
pub use splits::{
    parse_utc, read_splits_json, resolve_splits, write_splits_json, SplitIndices, SplitSpec,
};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featurize::{METEO_FEATURES, STEP_SECONDS};
use crate::fsio;
use crate::geograph::{self, City, ElevationGrid};
use crate::numerics::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const NODES_FILE: &str = "nodes.csv";
pub const GRID_FILE: &str = "elevation.grid";
pub const METEO_FILE: &str = "meteo.knt";
pub const PM25_FILE: &str = "pm25.knt";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n_cities: usize,
    pub n_timesteps: usize,
    /// Epoch of the first timestep (UTC).
    pub t0: i64,
    /// Always 10800 (3-hour interval).
    pub step_seconds: i64,
    pub node_features: Vec<String>,
    pub checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub cities: Vec<City>,
    pub grid: ElevationGrid,
    /// Raw meteorology `[T, N, 8]`.
    pub meteo: Tensor,
    /// Raw concentrations `[T, N]`.
    pub pm25: Tensor,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes a complete dataset directory with checksummed files.
pub fn save_dataset(
    dir: &Path,
    name: &str,
    cities: &[City],
    grid: &ElevationGrid,
    meteo: &Tensor,
    pm25: &Tensor,
    t0: i64,
    dtype: KntDtype,
) -> Result<()> {
    let shape = meteo.shape();
    if shape.len() != 3 || shape[2] != METEO_FEATURES.len() {
        return Err(Error::InvalidShape {
            op: "save_dataset",
            shape: shape.to_vec(),
            reason: format!("meteo must be [T, N, {}]", METEO_FEATURES.len()),
        });
    }
    let (t_len, n) = (shape[0], shape[1]);
    if pm25.shape() != [t_len, n] || cities.len() != n {
        return Err(Error::InvalidShape {
            op: "save_dataset",
            shape: pm25.shape().to_vec(),
            reason: "meteo, pm25 and city list disagree on sizes".into(),
        });
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    geograph::write_cities(&dir.join(NODES_FILE), cities)?;
    geograph::write_grid(&dir.join(GRID_FILE), grid)?;
    write_knt(&dir.join(METEO_FILE), meteo, dtype)?;
    write_knt(&dir.join(PM25_FILE), pm25, dtype)?;

    let mut checksums = BTreeMap::new();
    for file in [NODES_FILE, GRID_FILE, METEO_FILE, PM25_FILE] {
        let bytes = fsio::read_bytes(&dir.join(file))?;
        checksums.insert(file.to_string(), sha256_hex(&bytes));
    }
    let manifest = DatasetManifest {
        name: name.to_string(),
        n_cities: n,
        n_timesteps: t_len,
        t0,
        step_seconds: STEP_SECONDS,
        node_features: METEO_FEATURES.iter().map(|s| s.to_string()).collect(),
        checksums,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serialize");
    bytes.push(b'\n');
    fsio::atomic_write(&dir.join(MANIFEST_FILE), &bytes)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fsio::read_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

/// Loads and validates a dataset directory: checksums, declared shapes, and
/// the 3-hour step contract.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    if manifest.step_seconds != STEP_SECONDS {
        return Err(Error::ManifestMismatch {
            path: dir.join(MANIFEST_FILE).display().to_string(),
            reason: format!(
                "step_seconds must be {STEP_SECONDS}, found {}",
                manifest.step_seconds
            ),
        });
    }
    for file in [NODES_FILE, GRID_FILE, METEO_FILE, PM25_FILE] {
        let path = dir.join(file);
        let bytes = fsio::read_bytes(&path)?;
        let actual = sha256_hex(&bytes);
        match manifest.checksums.get(file) {
            Some(expected) if *expected == actual => {}
            Some(expected) => {
                return Err(Error::ChecksumMismatch {
                    path: path.display().to_string(),
                    expected: expected.clone(),
                    actual,
                })
            }
            None => {
                return Err(Error::ManifestMismatch {
                    path: path.display().to_string(),
                    reason: "file missing from manifest checksums".into(),
                })
            }
        }
    }

    let cities = geograph::read_cities(&dir.join(NODES_FILE))?;
    if cities.len() != manifest.n_cities {
        return Err(Error::ManifestMismatch {
            path: dir.join(NODES_FILE).display().to_string(),
            reason: format!(
                "manifest declares {} cities, file has {}",
                manifest.n_cities,
                cities.len()
            ),
        });
    }
    let grid = geograph::read_grid(&dir.join(GRID_FILE))?;
    let meteo = read_knt(&dir.join(METEO_FILE))?;
    let pm25 = read_knt(&dir.join(PM25_FILE))?;
    let expect_meteo = [
        manifest.n_timesteps,
        manifest.n_cities,
        METEO_FEATURES.len(),
    ];
    if meteo.shape() != expect_meteo {
        return Err(Error::ManifestMismatch {
            path: dir.join(METEO_FILE).display().to_string(),
            reason: format!(
                "expected shape {:?}, found {:?}",
                expect_meteo,
                meteo.shape()
            ),
        });
    }
    if pm25.shape() != [manifest.n_timesteps, manifest.n_cities] {
        return Err(Error::ManifestMismatch {
            path: dir.join(PM25_FILE).display().to_string(),
            reason: format!("pm25 shape {:?} disagrees with manifest", pm25.shape()),
        });
    }
    Ok(Dataset {
        manifest,
        cities,
        grid,
        meteo,
        pm25,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_world, SynthConfig};

    fn small_world() -> (SynthConfig, crate::synth::SynthWorld) {
        let mut cfg = SynthConfig::default();
        cfg.n_cities = 5;
        cfg.n_timesteps = 40;
        (cfg.clone(), generate_world(&cfg).unwrap())
    }

    fn meteo_block(panel: &crate::featurize::NodePanel) -> Tensor {
        let (t_len, n) = (panel.n_steps(), panel.n_nodes());
        let w = METEO_FEATURES.len();
        let mut out = vec![0.0; t_len * n * w];
        for t in 0..t_len {
            for i in 0..n {
                for f in 0..w {
                    out[(t * n + i) * w + f] = panel.at(t, i, f);
                }
            }
        }
        Tensor::new(vec![t_len, n, w], out).unwrap()
    }

    #[test]
    fn dataset_round_trip_is_bitwise() {
        let (cfg, world) = small_world();
        let dir = tempfile::tempdir().unwrap();
        let meteo = meteo_block(&world.panel);
        save_dataset(
            dir.path(),
            "roundtrip",
            &world.cities,
            &world.grid,
            &meteo,
            &world.pm25,
            cfg.t0,
            KntDtype::F64,
        )
        .unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.manifest.n_cities, 5);
        assert_eq!(ds.manifest.step_seconds, STEP_SECONDS);
        assert!(ds
            .meteo
            .data()
            .iter()
            .zip(meteo.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(ds
            .pm25
            .data()
            .iter()
            .zip(world.pm25.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(ds.cities.len(), world.cities.len());
        assert_eq!(ds.grid.heights, world.grid.heights);
    }

    #[test]
    fn corrupted_tensor_is_a_checksum_error() {
        let (cfg, world) = small_world();
        let dir = tempfile::tempdir().unwrap();
        let meteo = meteo_block(&world.panel);
        save_dataset(dir.path(), "x", &world.cities, &world.grid, &meteo, &world.pm25, cfg.t0, KntDtype::F64)
            .unwrap();
        // Flip one byte in the pm25 payload.
        let path = dir.path().join(PM25_FILE);
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn manifest_city_count_mismatch_refused() {
        let (cfg, world) = small_world();
        let dir = tempfile::tempdir().unwrap();
        let meteo = meteo_block(&world.panel);
        save_dataset(dir.path(), "x", &world.cities, &world.grid, &meteo, &world.pm25, cfg.t0, KntDtype::F64)
            .unwrap();
        // Rewrite nodes.csv with one city dropped, fixing its checksum so the
        // count check itself is exercised.
        let nodes = dir.path().join(NODES_FILE);
        geograph::write_cities(&nodes, &world.cities[..4]).unwrap();
        let mut manifest = read_manifest(dir.path()).unwrap();
        let bytes = std::fs::read(&nodes).unwrap();
        manifest
            .checksums
            .insert(NODES_FILE.into(), sha256_hex(&bytes));
        let mut out = serde_json::to_vec_pretty(&manifest).unwrap();
        out.push(b'\n');
        std::fs::write(dir.path().join(MANIFEST_FILE), out).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::ManifestMismatch { .. })
        ));
    }

    #[test]
    fn missing_file_is_distinct() {
        let (cfg, world) = small_world();
        let dir = tempfile::tempdir().unwrap();
        let meteo = meteo_block(&world.panel);
        save_dataset(dir.path(), "x", &world.cities, &world.grid, &meteo, &world.pm25, cfg.t0, KntDtype::F64)
            .unwrap();
        std::fs::remove_file(dir.path().join(METEO_FILE)).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::MissingFile { .. })
        ));
    }
}
