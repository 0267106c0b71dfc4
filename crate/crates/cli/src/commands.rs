//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use plumecast::dataio::{
    load_checkpoint, load_dataset, read_splits_json, save_checkpoint, save_dataset,
    write_splits_json, Checkpoint, KntDtype, SplitSpec, CHECKPOINT_VERSION,
};
use plumecast::error::{Error, Result};
use plumecast::geograph::{build_adjacency, read_cities, read_grid, write_graph_json};
use plumecast::metrics::{
    write_metrics_csv, write_metrics_json, write_per_leadtime_csv, CategoricalMode, MetricRow,
};
use plumecast::model::ModelKind;
use plumecast::synth::generate_world;
use plumecast::train::{
    self, evaluate_on_split, prepare, prepare_with_standardizer, run_experiment, train_model,
    write_history_csv, Precision, Sample, METRIC_NAMES,
};

use crate::schema::RunConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.knc";

fn write_run_meta(out_dir: &Path, command: &str, cfg: &RunConfig, started: Instant) -> Result<()> {
    let meta = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "checkpoint_format": CHECKPOINT_VERSION,
        "seed": cfg.u64("train.seed"),
        "config": cfg.snapshot(),
        "wall_seconds": started.elapsed().as_secs_f64(),
    });
    let path = out_dir.join("run_meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("run meta") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

pub fn cmd_build_graph(
    nodes: &Path,
    elevation: &Path,
    d_theta_km: f64,
    m_theta_m: f64,
    ridge_samples: usize,
    out: &Path,
) -> Result<()> {
    let cities = read_cities(nodes)?;
    let grid = read_grid(elevation)?;
    let topo = build_adjacency(&cities, &grid, d_theta_km, m_theta_m, ridge_samples)?;
    write_graph_json(out, &topo)?;
    println!(
        "graph: {} nodes, {} directed edges -> {}",
        topo.n_nodes(),
        topo.n_edges(),
        out.display()
    );
    println!("degree histogram (degree: cities):");
    for (deg, count) in topo.degree_histogram() {
        println!("  {deg:>4}: {count}");
    }
    if topo.n_edges() == 0 {
        println!("warning: thresholds admit no edges; the graph is empty");
    }
    Ok(())
}

pub fn cmd_gen_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let synth_cfg = cfg.synth_config()?;
    let training = cfg.training_config()?;
    let world = generate_world(&synth_cfg)?;
    ensure_dir(out)?;
    let dtype = match training.precision {
        Precision::F32 => KntDtype::F32,
        Precision::F64 => KntDtype::F64,
    };
    save_dataset(
        out,
        cfg.str("synth.name"),
        &world.cities,
        &world.grid,
        &world.panel.meteo_block(),
        &world.pm25,
        synth_cfg.t0,
        dtype,
    )?;

    // Companion 2:1:1 split file over the generated range.
    let t = synth_cfg.n_timesteps;
    let stamp = |i: usize| {
        chrono::DateTime::from_timestamp(
            synth_cfg.t0 + i as i64 * plumecast::featurize::STEP_SECONDS,
            0,
        )
        .expect("valid timestamp")
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    };
    let split = SplitSpec {
        train: vec![(stamp(0), stamp(t / 2))],
        validate: vec![(stamp(t / 2), stamp(t * 3 / 4))],
        test: vec![(stamp(t * 3 / 4), stamp(t))],
    };
    write_splits_json(&out.join("splits.json"), &split)?;

    println!(
        "synthetic world: {} cities, {} directed edges, {} steps -> {}",
        synth_cfg.n_cities,
        world.topology.n_edges(),
        synth_cfg.n_timesteps,
        out.display()
    );
    write_run_meta(out, "gen-synth", cfg, started)
}

pub fn cmd_train(
    data: &Path,
    splits: &Path,
    model_override: Option<&str>,
    cfg: &RunConfig,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let mut cfg = cfg.clone();
    if let Some(kind) = model_override {
        cfg.set("model.kind", kind)?;
    }
    let dataset = load_dataset(data)?;
    let split_spec = read_splits_json(splits)?;
    let data_cfg = cfg.data_config()?;
    let training = cfg.training_config()?;
    let spec = cfg.model_spec()?;
    let prep = prepare(&dataset, &split_spec, &data_cfg)?;

    let outcome = train_model(&spec, &prep, &training)?;
    ensure_dir(out)?;
    let meta = Checkpoint {
        version: CHECKPOINT_VERSION,
        model_spec: spec.clone(),
        n_base: prep.n_nodes(),
        standardizer: prep.standardizer.clone(),
        train_config: training.clone(),
        data_config: data_cfg,
        best_val_loss: outcome.best_val_loss,
        best_train_loss: outcome.best_train_loss,
        best_epoch: outcome.history.best_epoch,
        tensor_names: vec![],
    };
    save_checkpoint(&out.join(CHECKPOINT_FILE), &meta, &outcome.params)?;
    write_history_csv(&out.join("history.csv"), &outcome.history)?;
    let run_metrics = serde_json::json!({
        "model": spec.kind.name(),
        "seed": spec.seed,
        "epochs_run": outcome.history.epochs.len(),
        "best_epoch": outcome.history.best_epoch,
        "best_train_loss": outcome.best_train_loss,
        "best_val_loss": outcome.best_val_loss,
        "parameters": plumecast::model::count_params(&spec, prep.n_nodes())?,
    });
    let text = serde_json::to_string_pretty(&run_metrics).expect("metrics json") + "\n";
    std::fs::write(out.join("metrics.json"), text)
        .map_err(|e| Error::io(out.display().to_string(), e))?;

    println!(
        "trained {} for {} epochs (best epoch {}, val loss {:.4}) -> {}",
        spec.kind.name(),
        outcome.history.epochs.len(),
        outcome.history.best_epoch,
        outcome.best_val_loss,
        out.join(CHECKPOINT_FILE).display()
    );
    write_run_meta(out, "train", &cfg, started)
}

pub fn cmd_evaluate(
    data: &Path,
    splits: &Path,
    checkpoint: &Path,
    cfg: &RunConfig,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let dataset = load_dataset(data)?;
    let split_spec = read_splits_json(splits)?;
    let (meta, params) = load_checkpoint(checkpoint)?;
    let prep = prepare_with_standardizer(
        &dataset,
        Some(&split_spec),
        &meta.data_config,
        &meta.standardizer,
    )?;
    let mode = if cfg.bool("metrics.per_cell_categorical") {
        CategoricalMode::PerCell
    } else {
        CategoricalMode::Pooled
    };
    let (test_loss, report) = evaluate_on_split(
        &meta.model_spec,
        &params,
        &prep,
        "test",
        &meta.train_config,
        mode,
    )?;

    ensure_dir(out)?;
    let model = meta.model_spec.kind.name().to_string();
    let values = [
        meta.best_train_loss,
        meta.best_val_loss,
        test_loss,
        report.rmse,
        report.mae,
        report.csi,
        report.pod,
        report.far,
    ];
    let rows: Vec<MetricRow> = METRIC_NAMES
        .iter()
        .zip(values)
        .map(|(metric, mean)| MetricRow {
            model: model.clone(),
            dataset: prep.dataset_name.clone(),
            metric: metric.to_string(),
            mean,
            std: 0.0,
        })
        .collect();
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    write_metrics_json(&out.join("metrics.json"), &rows)?;
    write_per_leadtime_csv(&out.join("per_leadtime.csv"), &report)?;

    println!("test metrics for {model} on {}:", prep.dataset_name);
    for (metric, value) in METRIC_NAMES.iter().zip(values) {
        println!("  {metric:<14} {value:.4}");
    }
    println!(
        "categorical mode: {:?}; degenerate cells: {}",
        report.categorical_mode, report.degenerate_cells
    );
    write_run_meta(out, "evaluate", cfg, started)
}

pub fn cmd_predict(
    data: &Path,
    checkpoint: &Path,
    start: &str,
    cfg: &RunConfig,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let dataset = load_dataset(data)?;
    let (meta, params) = load_checkpoint(checkpoint)?;
    let prep = prepare_with_standardizer(&dataset, None, &meta.data_config, &meta.standardizer)?;

    let manifest = &dataset.manifest;
    let start_index: usize = match start.parse::<usize>() {
        Ok(i) => i,
        Err(_) => {
            let ts = plumecast::dataio::parse_utc(start)?;
            let off = ts - manifest.t0;
            if off < 0 || off % manifest.step_seconds != 0 {
                return Err(Error::Config(format!(
                    "start `{start}` is not aligned to the dataset's 3h grid"
                )));
            }
            (off / manifest.step_seconds) as usize
        }
    };
    let horizon = meta.train_config.horizon_steps;
    if start_index + horizon >= manifest.n_timesteps {
        return Err(Error::Config(format!(
            "start index {start_index} needs {horizon} future steps but the dataset ends at {}",
            manifest.n_timesteps
        )));
    }

    let samples = [Sample { start: start_index }];
    let (pred, _truth) = train::predict_windows(
        &meta.model_spec,
        &params,
        &prep,
        &samples,
        &meta.train_config,
    )?;

    ensure_dir(out)?;
    let n = prep.n_nodes();
    let mut csv = String::from("city_id,leadtime_h,pm25_ugm3\n");
    for city in 0..n {
        for tau in 0..horizon {
            let v = pred.data()[tau * n + city];
            csv.push_str(&format!("{},{},{}\n", city, (tau + 1) * 3, v));
        }
    }
    let path = out.join("forecast.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(path.display().to_string(), e))?;
    println!(
        "forecast for start index {start_index} ({} cities x {horizon} leadtimes) -> {}",
        n,
        path.display()
    );
    write_run_meta(out, "predict", cfg, started)
}

pub fn cmd_ablate(data: &Path, splits: &Path, cfg: &RunConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let dataset = load_dataset(data)?;
    let split_spec = read_splits_json(splits)?;
    let data_cfg = cfg.data_config()?;
    let training = cfg.training_config()?;
    let base = cfg.model_spec()?;
    if base.kind != ModelKind::Pm25Gnn || base.drop_pbl || base.no_export {
        return Err(Error::Config(
            "ablate requires model.kind = pm25gnn with no ablation flags preset".into(),
        ));
    }
    let prep = prepare(&dataset, &split_spec, &data_cfg)?;

    let mut no_pbl = base.clone();
    no_pbl.drop_pbl = true;
    let mut no_export = base.clone();
    no_export.no_export = true;
    let specs = vec![
        ("pm25gnn".to_string(), base),
        ("no_pbl_height".to_string(), no_pbl),
        ("no_export".to_string(), no_export),
    ];
    let repeats = cfg.usize("train.repeats");
    let jobs = cfg.usize("train.jobs");
    let table = run_experiment(&specs, &prep, &training, repeats, jobs)?;

    ensure_dir(out)?;
    let rows = table.metric_rows();
    write_metrics_csv(&out.join("ablation.csv"), &rows)?;
    write_metrics_json(&out.join("metrics.json"), &rows)?;
    print!("{}", table.render());
    write_run_meta(out, "ablate", cfg, started)
}
