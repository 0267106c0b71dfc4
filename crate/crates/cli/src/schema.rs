//! The configuration schema: one table drives file parsing, validation,
//! CLI override flags, and the defaults shown in `--help`.
//!
//! Config files are flat `key = value` text with `#` comments and dotted
//! section prefixes (`train.lr = 5e-4`). CLI flags of the same dotted name
//! override file values.

use std::collections::BTreeMap;
use std::path::Path;

use plumecast::error::{Error, Result};
use plumecast::featurize::WindConvention;
use plumecast::model::{ModelKind, ModelSpec};
use plumecast::synth::{parse_mountains, SynthConfig};
use plumecast::train::{DataConfig, Precision, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    UInt,
    Float,
    Bool,
    Text,
}

pub struct KeySpec {
    pub key: &'static str,
    pub kind: KeyKind,
    pub default: &'static str,
    pub help: &'static str,
}

pub const SCHEMA: &[KeySpec] = &[
    KeySpec { key: "train.epochs", kind: KeyKind::UInt, default: "50", help: "Epoch cap for one training run" },
    KeySpec { key: "train.lr", kind: KeyKind::Float, default: "5e-4", help: "RMSprop learning rate" },
    KeySpec { key: "train.batch_size", kind: KeyKind::UInt, default: "8", help: "Samples per optimizer step" },
    KeySpec { key: "train.horizon_steps", kind: KeyKind::UInt, default: "24", help: "Forecast window length in 3h steps" },
    KeySpec { key: "train.patience", kind: KeyKind::UInt, default: "5", help: "Early-stopping patience in epochs" },
    KeySpec { key: "train.seed", kind: KeyKind::UInt, default: "0", help: "Shuffle seed (repeats offset it)" },
    KeySpec { key: "train.alpha", kind: KeyKind::Float, default: "0.99", help: "RMSprop accumulator decay" },
    KeySpec { key: "train.eps", kind: KeyKind::Float, default: "1e-8", help: "RMSprop denominator epsilon" },
    KeySpec { key: "train.precision", kind: KeyKind::Text, default: "f64", help: "Artifact storage dtype (f32|f64); compute is f64" },
    KeySpec { key: "train.repeats", kind: KeyKind::UInt, default: "1", help: "Repeats per model in experiments/ablations" },
    KeySpec { key: "train.jobs", kind: KeyKind::UInt, default: "1", help: "Worker threads for independent runs" },
    KeySpec { key: "model.kind", kind: KeyKind::Text, default: "pm25gnn", help: "pm25gnn|mlp|gru|lstm|nodesfc_gru" },
    KeySpec { key: "model.e_dim", kind: KeyKind::UInt, default: "32", help: "Edge representation width" },
    KeySpec { key: "model.z_dim", kind: KeyKind::UInt, default: "32", help: "Spatial correlation width" },
    KeySpec { key: "model.h_dim", kind: KeyKind::UInt, default: "64", help: "Recurrent hidden width" },
    KeySpec { key: "model.psi_hidden", kind: KeyKind::UInt, default: "32", help: "Edge MLP hidden width" },
    KeySpec { key: "model.drop_pbl", kind: KeyKind::Bool, default: "false", help: "Ablation: zero the PBL-height feature" },
    KeySpec { key: "model.no_export", kind: KeyKind::Bool, default: "false", help: "Ablation: drop the export term" },
    KeySpec { key: "model.seed", kind: KeyKind::UInt, default: "0", help: "Parameter init seed (repeats offset it)" },
    KeySpec { key: "graph.d_theta_km", kind: KeyKind::Float, default: "300", help: "Distance gate threshold (km)" },
    KeySpec { key: "graph.m_theta_m", kind: KeyKind::Float, default: "1200", help: "Ridge gate threshold (m)" },
    KeySpec { key: "graph.ridge_samples", kind: KeyKind::UInt, default: "32", help: "Interior samples for the ridge supremum" },
    KeySpec { key: "features.wind_convention", kind: KeyKind::Text, default: "toward", help: "Wind direction convention (toward|from)" },
    KeySpec { key: "metrics.per_cell_categorical", kind: KeyKind::Bool, default: "false", help: "Average CSI/POD/FAR per cell instead of pooling" },
    KeySpec { key: "synth.seed", kind: KeyKind::UInt, default: "0", help: "World generator seed" },
    KeySpec { key: "synth.n_cities", kind: KeyKind::UInt, default: "12", help: "Number of cities" },
    KeySpec { key: "synth.lat0", kind: KeyKind::Float, default: "30", help: "Box south edge (deg)" },
    KeySpec { key: "synth.lon0", kind: KeyKind::Float, default: "110", help: "Box west edge (deg)" },
    KeySpec { key: "synth.lat_span", kind: KeyKind::Float, default: "4", help: "Box latitude span (deg)" },
    KeySpec { key: "synth.lon_span", kind: KeyKind::Float, default: "4", help: "Box longitude span (deg)" },
    KeySpec { key: "synth.n_timesteps", kind: KeyKind::UInt, default: "1440", help: "Timesteps (3h each)" },
    KeySpec { key: "synth.t0", kind: KeyKind::Text, default: "2015-01-01", help: "First timestep (UTC date or RFC3339)" },
    KeySpec { key: "synth.kappa", kind: KeyKind::Float, default: "0.15", help: "Transport gain" },
    KeySpec { key: "synth.decay_base", kind: KeyKind::Float, default: "0.975", help: "Baseline retention per step" },
    KeySpec { key: "synth.emission_base", kind: KeyKind::Float, default: "6", help: "Mean emission per step (μg/m³)" },
    KeySpec { key: "synth.emission_amp", kind: KeyKind::Float, default: "0.5", help: "Diurnal emission amplitude [0,1]" },
    KeySpec { key: "synth.wind_u", kind: KeyKind::Float, default: "3", help: "Mean eastward wind (m/s)" },
    KeySpec { key: "synth.wind_v", kind: KeyKind::Float, default: "0.5", help: "Mean northward wind (m/s)" },
    KeySpec { key: "synth.wind_noise", kind: KeyKind::Float, default: "1.2", help: "AR(1) wind noise scale (m/s)" },
    KeySpec { key: "synth.mountains", kind: KeyKind::Text, default: "31.2,111.4,1800,0.35;29.3,112.6,1500,0.30", help: "Mountains as lat,lon,height_m,radius_deg;..." },
    KeySpec { key: "synth.name", kind: KeyKind::Text, default: "synth", help: "Dataset name written to the manifest" },
];

/// Effective configuration: defaults, overlaid by a config file, overlaid by
/// CLI flags. Unknown keys are rejected at every layer.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn spec_for(key: &str) -> Result<&'static KeySpec> {
    SCHEMA
        .iter()
        .find(|s| s.key == key)
        .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))
}

fn check_value(spec: &KeySpec, value: &str) -> Result<()> {
    let ok = match spec.kind {
        KeyKind::UInt => value.parse::<u64>().is_ok(),
        KeyKind::Float => value.parse::<f64>().is_ok(),
        KeyKind::Bool => matches!(value, "true" | "false"),
        KeyKind::Text => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "key `{}` expects a {:?} value, got `{value}`",
            spec.key, spec.kind
        )))
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = SCHEMA
            .iter()
            .map(|s| (s.key.to_string(), s.default.to_string()))
            .collect();
        Self { values }
    }
}

impl RunConfig {
    /// Parses a `key = value` file over the defaults.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let spec = spec_for(key)?;
        check_value(spec, value)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(|s| s.as_str()).unwrap_or_else(|| {
            panic!("key `{key}` missing from schema defaults");
        })
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.str(key).parse().expect("validated uint")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.u64(key) as usize
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.str(key).parse().expect("validated float")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.str(key) == "true"
    }

    /// Full effective key/value map for `run_meta.json`.
    pub fn snapshot(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn training_config(&self) -> Result<TrainingConfig> {
        let cfg = TrainingConfig {
            epochs: self.usize("train.epochs"),
            lr: self.f64("train.lr"),
            batch_size: self.usize("train.batch_size"),
            horizon_steps: self.usize("train.horizon_steps"),
            patience: self.usize("train.patience"),
            seed: self.u64("train.seed"),
            rmsprop_alpha: self.f64("train.alpha"),
            rmsprop_eps: self.f64("train.eps"),
            precision: self.str("train.precision").parse::<Precision>()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec {
            kind: self.str("model.kind").parse::<ModelKind>()?,
            e_dim: self.usize("model.e_dim"),
            z_dim: self.usize("model.z_dim"),
            h_dim: self.usize("model.h_dim"),
            psi_hidden: self.usize("model.psi_hidden"),
            drop_pbl: self.bool("model.drop_pbl"),
            no_export: self.bool("model.no_export"),
            seed: self.u64("model.seed"),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn data_config(&self) -> Result<DataConfig> {
        Ok(DataConfig {
            d_theta_km: self.f64("graph.d_theta_km"),
            m_theta_m: self.f64("graph.m_theta_m"),
            ridge_samples: self.usize("graph.ridge_samples"),
            wind_convention: self
                .str("features.wind_convention")
                .parse::<WindConvention>()?,
        })
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let cfg = SynthConfig {
            seed: self.u64("synth.seed"),
            n_cities: self.usize("synth.n_cities"),
            lat0: self.f64("synth.lat0"),
            lon0: self.f64("synth.lon0"),
            lat_span: self.f64("synth.lat_span"),
            lon_span: self.f64("synth.lon_span"),
            n_timesteps: self.usize("synth.n_timesteps"),
            t0: plumecast::dataio::parse_utc(self.str("synth.t0"))?,
            transport_gain: self.f64("synth.kappa"),
            decay_base: self.f64("synth.decay_base"),
            emission_base: self.f64("synth.emission_base"),
            emission_amp: self.f64("synth.emission_amp"),
            wind_u_mean: self.f64("synth.wind_u"),
            wind_v_mean: self.f64("synth.wind_v"),
            wind_noise: self.f64("synth.wind_noise"),
            mountains: parse_mountains(self.str("synth.mountains"))?,
            d_theta_km: self.f64("graph.d_theta_km"),
            m_theta_m: self.f64("graph.m_theta_m"),
            ridge_samples: self.usize("graph.ridge_samples"),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_key() {
        let cfg = RunConfig::default();
        for s in SCHEMA {
            assert!(!cfg.str(s.key).is_empty() || s.kind == KeyKind::Text);
        }
        assert_eq!(cfg.usize("train.epochs"), 50);
        assert_eq!(cfg.f64("train.lr"), 5e-4);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("train.nope", "1").is_err());
        assert!(cfg.set("train.epochs", "abc").is_err());
        assert!(cfg.set("train.epochs", "10").is_ok());
    }

    #[test]
    fn file_parsing_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# comment\ntrain.lr = 1e-3  # inline\n\nmodel.kind = gru\n",
        )
        .unwrap();
        let mut cfg = RunConfig::default();
        cfg.load_file(&path).unwrap();
        assert_eq!(cfg.f64("train.lr"), 1e-3);
        assert_eq!(cfg.model_spec().unwrap().kind.name(), "gru");
    }

    #[test]
    fn bad_lines_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "train.lr 1e-3\n").unwrap();
        let mut cfg = RunConfig::default();
        assert!(cfg.load_file(&path).is_err());
    }

    #[test]
    fn typed_builders_resolve() {
        let cfg = RunConfig::default();
        assert!(cfg.training_config().is_ok());
        assert!(cfg.model_spec().is_ok());
        assert!(cfg.data_config().is_ok());
        let synth = cfg.synth_config().unwrap();
        assert_eq!(synth.n_cities, 12);
        assert_eq!(synth.mountains.len(), 2);
    }
}
