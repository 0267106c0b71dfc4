//! Sample generation, the training loop (RMSprop with early stopping), and
//! experiment orchestration.
//!
//! Training minimizes the standardized-space squared error of full
//! autoregressive rollouts: every step consumes the previous prediction,
//! never the observation. Mini-batches are realized by stacking sample
//! windows into a block-diagonal replicated graph, so one tape covers the
//! whole batch and the loss is automatically the per-sample average.

use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, SplitIndices, SplitSpec};
use crate::error::{Error, Result};
use crate::featurize::{
    build_edge_panel, build_node_panel, EdgePanel, NodePanel, Standardizer, WindConvention,
    EDGE_FEATURE_COUNT, NODE_FEATURE_COUNT,
};
use crate::fsio;
use crate::geograph::{build_adjacency, GraphTopology};
use crate::metrics::{aggregate_report, CategoricalMode, MetricRow, MetricsReport};
use crate::model::{forward, GraphView, ModelParams, ModelSpec};
use crate::numerics::{
    backward, mse_loss, rmsprop_step, RmspropConfig, RmspropState, Tape, Tensor,
};

/// On-disk float width for artifacts a run writes. Computation is always
/// f64; this only selects the serialization dtype for datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::Config(format!(
                "precision must be `f32` or `f64`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub horizon_steps: usize,
    pub patience: usize,
    /// Shuffle seed; experiment repeats offset it.
    pub seed: u64,
    pub rmsprop_alpha: f64,
    pub rmsprop_eps: f64,
    pub precision: Precision,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 5e-4,
            batch_size: 8,
            horizon_steps: 24,
            patience: 5,
            seed: 0,
            rmsprop_alpha: 0.99,
            rmsprop_eps: 1e-8,
            precision: Precision::F64,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps < 1 {
            return Err(Error::OutOfRange {
                what: "horizon_steps",
                range: "[1, ...)",
                value: self.horizon_steps as f64,
            });
        }
        if self.lr < 0.0 {
            return Err(Error::NonPositive {
                what: "learning rate",
                value: self.lr,
            });
        }
        if self.patience < 1 {
            return Err(Error::OutOfRange {
                what: "patience",
                range: "[1, ...)",
                value: self.patience as f64,
            });
        }
        if self.batch_size < 1 {
            return Err(Error::OutOfRange {
                what: "batch_size",
                range: "[1, ...)",
                value: self.batch_size as f64,
            });
        }
        Ok(())
    }
}

/// Graph and feature-engineering knobs applied when preparing a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub d_theta_km: f64,
    pub m_theta_m: f64,
    pub ridge_samples: usize,
    pub wind_convention: WindConvention,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            d_theta_km: crate::geograph::DEFAULT_D_THETA_KM,
            m_theta_m: crate::geograph::DEFAULT_M_THETA_M,
            ridge_samples: crate::geograph::DEFAULT_RIDGE_SAMPLES,
            wind_convention: WindConvention::Toward,
        }
    }
}

/// One forecast window: features and truth cover `start+1 ..= start+horizon`,
/// with the observation at `start` as the rollout seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub start: usize,
}

/// Enumerates every valid start index (stride 1). Windows never cross an
/// interval boundary; an interval shorter than `horizon + 1` is an error.
pub fn make_samples(ranges: &[Range<usize>], horizon: usize) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for r in ranges {
        if r.len() < horizon + 1 {
            return Err(Error::RangeTooShort {
                len: r.len(),
                horizon,
            });
        }
        out.extend((r.start..r.end - horizon).map(|start| Sample { start }));
    }
    Ok(out)
}

/// A dataset with its graph built, features assembled and standardized on
/// the training range, ready for training and evaluation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub topology: GraphTopology,
    pub graph: GraphView,
    /// Standardized panels.
    pub node_panel: NodePanel,
    pub edge_panel: EdgePanel,
    /// Standardized and raw concentrations `[T, N]`.
    pub pm_std: Tensor,
    pub pm_raw: Tensor,
    pub standardizer: Standardizer,
    pub splits: SplitIndices,
    pub dataset_name: String,
}

impl Prepared {
    pub fn n_nodes(&self) -> usize {
        self.topology.n_nodes()
    }
}

/// Builds graph, panels and the train-range standardizer for a dataset.
pub fn prepare(dataset: &Dataset, split_spec: &SplitSpec, data_cfg: &DataConfig) -> Result<Prepared> {
    let splits = crate::dataio::resolve_splits(&dataset.manifest, split_spec)?;
    assemble(dataset, data_cfg, splits, None)
}

/// Like [`prepare`] but reuses a previously fit standardizer (from a
/// checkpoint), so no training range is needed. Without a split spec the
/// whole time axis is exposed as the train range.
pub fn prepare_with_standardizer(
    dataset: &Dataset,
    split_spec: Option<&SplitSpec>,
    data_cfg: &DataConfig,
    standardizer: &Standardizer,
) -> Result<Prepared> {
    let splits = match split_spec {
        Some(s) => crate::dataio::resolve_splits(&dataset.manifest, s)?,
        None => SplitIndices {
            train: vec![0..dataset.manifest.n_timesteps],
            validate: vec![],
            test: vec![],
        },
    };
    assemble(dataset, data_cfg, splits, Some(standardizer.clone()))
}

fn assemble(
    dataset: &Dataset,
    data_cfg: &DataConfig,
    splits: SplitIndices,
    standardizer: Option<Standardizer>,
) -> Result<Prepared> {
    let topology = build_adjacency(
        &dataset.cities,
        &dataset.grid,
        data_cfg.d_theta_km,
        data_cfg.m_theta_m,
        data_cfg.ridge_samples,
    )?;
    let raw_panel = build_node_panel(&dataset.meteo, dataset.manifest.t0)?;
    let raw_edges = build_edge_panel(&raw_panel, &topology, data_cfg.wind_convention)?;
    let standardizer = match standardizer {
        Some(s) => s,
        None => Standardizer::fit(&raw_panel, &raw_edges, &dataset.pm25, &splits.train)?,
    };
    let node_panel = standardizer.apply_node_panel(&raw_panel);
    let edge_panel = standardizer.apply_edge_panel(&raw_edges);
    let pm_std = standardizer.apply_pm25(&dataset.pm25);
    let graph = GraphView::from_topology(&topology);
    Ok(Prepared {
        topology,
        graph,
        node_panel,
        edge_panel,
        pm_std,
        pm_raw: dataset.pm25.clone(),
        standardizer,
        splits,
        dataset_name: dataset.manifest.name.clone(),
    })
}

/// Stacked batch tensors for a set of samples: `x0 [B*N,1]`,
/// `P [T,B*N,p]`, `Q [T,B*M,q]`, truth `[T,B*N]` (standardized).
fn build_batch(prep: &Prepared, samples: &[Sample], horizon: usize) -> (Tensor, Tensor, Tensor, Tensor) {
    let b = samples.len();
    let n = prep.n_nodes();
    let m = prep.graph.n_edges();
    let p = NODE_FEATURE_COUNT;
    let q = EDGE_FEATURE_COUNT;
    let node_data = prep.node_panel.values.data();
    let edge_data = prep.edge_panel.values.data();
    let pm = prep.pm_std.data();

    let mut x0 = vec![0.0; b * n];
    for (bi, s) in samples.iter().enumerate() {
        x0[bi * n..(bi + 1) * n].copy_from_slice(&pm[s.start * n..(s.start + 1) * n]);
    }
    let mut p_batch = vec![0.0; horizon * b * n * p];
    let mut q_batch = vec![0.0; horizon * b * m * q];
    let mut truth = vec![0.0; horizon * b * n];
    for tau in 0..horizon {
        for (bi, s) in samples.iter().enumerate() {
            let t_src = s.start + 1 + tau;
            let dst_p = (tau * b + bi) * n * p;
            p_batch[dst_p..dst_p + n * p]
                .copy_from_slice(&node_data[t_src * n * p..(t_src + 1) * n * p]);
            let dst_q = (tau * b + bi) * m * q;
            q_batch[dst_q..dst_q + m * q]
                .copy_from_slice(&edge_data[t_src * m * q..(t_src + 1) * m * q]);
            let dst_y = (tau * b + bi) * n;
            truth[dst_y..dst_y + n].copy_from_slice(&pm[t_src * n..(t_src + 1) * n]);
        }
    }
    (
        Tensor::new(vec![b * n, 1], x0).expect("x0 shape"),
        Tensor::new(vec![horizon, b * n, p], p_batch).expect("p shape"),
        Tensor::new(vec![horizon, b * m, q], q_batch).expect("q shape"),
        Tensor::new(vec![horizon, b * n], truth).expect("truth shape"),
    )
}

/// Average standardized loss of `params` over the given samples (no tape).
pub fn evaluate_loss(
    spec: &ModelSpec,
    params: &ModelParams,
    prep: &Prepared,
    samples: &[Sample],
    cfg: &TrainingConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(cfg.batch_size.max(1)) {
        let (x0, p, q, truth) = build_batch(prep, chunk, cfg.horizon_steps);
        let graph = prep.graph.replicate(chunk.len());
        let pred = forward(spec, params, &x0, &p, &q, &graph)?;
        let pred2 = pred.reshape(vec![cfg.horizon_steps, chunk.len() * prep.n_nodes()])?;
        total += mse_loss(&pred2, &truth)?.item() * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub best_val_loss: f64,
    /// Train loss of the epoch whose parameters were kept.
    pub best_train_loss: f64,
}

/// Trains one model: shuffled mini-batches under RMSprop, validation each
/// epoch, early stopping with best-weights restore. Deterministic given the
/// spec seed (init) and config seed (shuffle order).
pub fn train_model(
    spec: &ModelSpec,
    prep: &Prepared,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    let started = Instant::now();
    let mut train_samples = make_samples(&prep.splits.train, cfg.horizon_steps)?;
    let val_samples = make_samples(&prep.splits.validate, cfg.horizon_steps)?;

    let mut params = ModelParams::init(spec, prep.n_nodes())?;
    let mut opt_state = RmspropState::new(&params.tensors());
    let opt_cfg = RmspropConfig {
        lr: cfg.lr,
        alpha: cfg.rmsprop_alpha,
        eps: cfg.rmsprop_eps,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, ModelParams)> = None;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        train_samples.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in train_samples.chunks(cfg.batch_size) {
            let (x0, p, q, truth) = build_batch(prep, chunk, cfg.horizon_steps);
            let graph = prep.graph.replicate(chunk.len());
            let tape = Tape::new();
            let watched = params.watch(&tape);
            let pred = forward(spec, &watched, &x0, &p, &q, &graph)?;
            let pred2 = pred.reshape(vec![cfg.horizon_steps, chunk.len() * prep.n_nodes()])?;
            let loss = mse_loss(&pred2, &truth)?;
            let loss_val = loss.item();
            if !loss_val.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    sample: chunk[0].start,
                });
            }
            loss_sum += loss_val * chunk.len() as f64;
            if cfg.lr > 0.0 {
                let grads = backward(&loss)?;
                let watched_tensors = watched.tensors();
                let grad_tensors: Vec<Tensor> = watched_tensors
                    .iter()
                    .map(|t| grads.get(t))
                    .collect::<Result<_>>()?;
                let grad_refs: Vec<&Tensor> = grad_tensors.iter().collect();
                let updated =
                    rmsprop_step(&params.tensors(), &grad_refs, &mut opt_state, &opt_cfg)?;
                params.replace_tensors(updated);
            }
        }
        let train_loss = loss_sum / train_samples.len() as f64;
        let val_loss = evaluate_loss(spec, &params, prep, &val_samples, cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, sample: 0 });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        let improved = best.as_ref().is_none_or(|(bv, _, _, _)| val_loss < *bv);
        if improved {
            best = Some((val_loss, train_loss, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_val_loss, best_train_loss, best_epoch, best_params) =
        best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        history: TrainHistory {
            epochs: history,
            best_epoch,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
        best_val_loss,
        best_train_loss,
    })
}

/// Test-split evaluation: standardized loss plus the physical-units report
/// over every test window.
pub fn evaluate_on_split(
    spec: &ModelSpec,
    params: &ModelParams,
    prep: &Prepared,
    split: &str,
    cfg: &TrainingConfig,
    mode: CategoricalMode,
) -> Result<(f64, MetricsReport)> {
    let samples = make_samples(prep.splits.ranges(split), cfg.horizon_steps)?;
    let loss = evaluate_loss(spec, params, prep, &samples, cfg)?;
    let (pred, truth) = predict_windows(spec, params, prep, &samples, cfg)?;
    let report = aggregate_report(&pred, &truth, crate::metrics::POLLUTION_THRESHOLD, mode)?;
    Ok((loss, report))
}

/// Runs the model over each window and returns physical-units predictions
/// and truths, both `[S, T, N]`.
pub fn predict_windows(
    spec: &ModelSpec,
    params: &ModelParams,
    prep: &Prepared,
    samples: &[Sample],
    cfg: &TrainingConfig,
) -> Result<(Tensor, Tensor)> {
    let n = prep.n_nodes();
    let t_len = cfg.horizon_steps;
    let mut pred_all = vec![0.0; samples.len() * t_len * n];
    let mut truth_all = vec![0.0; samples.len() * t_len * n];
    let raw = prep.pm_raw.data();
    let mut window = 0usize;
    for chunk in samples.chunks(cfg.batch_size.max(1)) {
        let (x0, p, q, _) = build_batch(prep, chunk, t_len);
        let graph = prep.graph.replicate(chunk.len());
        let pred = forward(spec, params, &x0, &p, &q, &graph)?;
        let inverted = prep.standardizer.invert_prediction(&pred);
        // pred layout: [T, B*N]; re-slice into [S, T, N].
        for (bi, s) in chunk.iter().enumerate() {
            for tau in 0..t_len {
                let src = (tau * chunk.len() + bi) * n;
                let dst = ((window + bi) * t_len + tau) * n;
                pred_all[dst..dst + n].copy_from_slice(&inverted.data()[src..src + n]);
                let t_src = (s.start + 1 + tau) * n;
                truth_all[dst..dst + n].copy_from_slice(&raw[t_src..t_src + n]);
            }
        }
        window += chunk.len();
    }
    Ok((
        Tensor::new(vec![samples.len(), t_len, n], pred_all)?,
        Tensor::new(vec![samples.len(), t_len, n], truth_all)?,
    ))
}

/// The metric row set reported per model.
pub const METRIC_NAMES: [&str; 8] = [
    "Train_Loss",
    "Validate_Loss",
    "Test_Loss",
    "RMSE",
    "MAE",
    "CSI",
    "POD",
    "FAR",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub model: String,
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub dataset: String,
    pub models: Vec<String>,
    pub runs: Vec<RunMetrics>,
}

impl ExperimentTable {
    /// Mean and population standard deviation of one metric for one model.
    pub fn mean_std(&self, model: &str, metric: &str) -> (f64, f64) {
        let mi = METRIC_NAMES
            .iter()
            .position(|m| *m == metric)
            .expect("known metric");
        let vals: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.model == model)
            .map(|r| r.values[mi])
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    pub fn metric_rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        for model in &self.models {
            for metric in METRIC_NAMES {
                let (mean, std) = self.mean_std(model, metric);
                rows.push(MetricRow {
                    model: model.clone(),
                    dataset: self.dataset.clone(),
                    metric: metric.to_string(),
                    mean,
                    std,
                });
            }
        }
        rows
    }

    /// Plain-text table: one row per metric, one `mean ± std` column per
    /// model.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<14}", "Metric"));
        for m in &self.models {
            out.push_str(&format!("{m:>24}"));
        }
        out.push('\n');
        for metric in METRIC_NAMES {
            out.push_str(&format!("{metric:<14}"));
            for model in &self.models {
                let (mean, std) = self.mean_std(model, metric);
                out.push_str(&format!("{:>24}", format!("{mean:.4} ± {std:.4}")));
            }
            out.push('\n');
        }
        out
    }
}

/// Trains each labeled spec `n_repeats` times (seeds `base .. base+n`),
/// evaluates on the test split, and tabulates mean ± std for the whole
/// metric row set. Independent runs fan out over at most `jobs` worker
/// threads; results are identical regardless of `jobs`.
pub fn run_experiment(
    specs: &[(String, ModelSpec)],
    prep: &Prepared,
    cfg: &TrainingConfig,
    n_repeats: usize,
    jobs: usize,
) -> Result<ExperimentTable> {
    assert!(n_repeats >= 1, "n_repeats must be at least 1");
    let mut tasks = Vec::new();
    for (label, spec) in specs {
        for rep in 0..n_repeats {
            let mut s = spec.clone();
            s.seed = spec.seed + rep as u64;
            let mut c = cfg.clone();
            c.seed = cfg.seed + rep as u64;
            tasks.push((label.clone(), s, c));
        }
    }

    let results = run_tasks(prep, &tasks, jobs.max(1))?;
    Ok(ExperimentTable {
        dataset: prep.dataset_name.clone(),
        models: specs.iter().map(|(label, _)| label.clone()).collect(),
        runs: results,
    })
}

fn run_one(
    prep: &Prepared,
    label: &str,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
) -> Result<RunMetrics> {
    let outcome = train_model(spec, prep, cfg)?;
    let (test_loss, report) =
        evaluate_on_split(spec, &outcome.params, prep, "test", cfg, CategoricalMode::Pooled)?;
    Ok(RunMetrics {
        model: label.to_string(),
        seed: spec.seed,
        values: vec![
            outcome.best_train_loss,
            outcome.best_val_loss,
            test_loss,
            report.rmse,
            report.mae,
            report.csi,
            report.pod,
            report.far,
        ],
    })
}

fn run_tasks(
    prep: &Prepared,
    tasks: &[(String, ModelSpec, TrainingConfig)],
    jobs: usize,
) -> Result<Vec<RunMetrics>> {
    if jobs <= 1 || tasks.len() <= 1 {
        return tasks
            .iter()
            .map(|(l, s, c)| run_one(prep, l, s, c))
            .collect();
    }
    let mut results: Vec<Option<Result<RunMetrics>>> = Vec::new();
    results.resize_with(tasks.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results_mx = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= tasks.len() {
                    break;
                }
                let out = run_one(prep, &tasks[i].0, &tasks[i].1, &tasks[i].2);
                results_mx.lock().unwrap()[i] = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("task completed"))
        .collect()
}

/// Writes `history.csv` (epoch, train_loss, val_loss).
pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in &history.epochs {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
    }
    fsio::atomic_write(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{load_dataset, save_dataset, KntDtype};
    use crate::model::ModelKind;
    use crate::synth::{generate_world, SynthConfig};

    fn small_prepared(n_timesteps: usize) -> Prepared {
        let mut cfg = SynthConfig::default();
        cfg.n_cities = 5;
        cfg.n_timesteps = n_timesteps;
        cfg.lat_span = 2.0;
        cfg.lon_span = 2.0;
        cfg.mountains.clear();
        let world = generate_world(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(
            dir.path(),
            "small",
            &world.cities,
            &world.grid,
            &world.panel.meteo_block(),
            &world.pm25,
            cfg.t0,
            KntDtype::F64,
        )
        .unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        // 60/20/20 by index -> epoch boundaries.
        let at = |i: usize| {
            let ts = cfg.t0 + (i as i64) * crate::featurize::STEP_SECONDS;
            chrono::DateTime::from_timestamp(ts, 0)
                .unwrap()
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        };
        let (a, b) = (n_timesteps * 6 / 10, n_timesteps * 8 / 10);
        let spec = SplitSpec {
            train: vec![(at(0), at(a))],
            validate: vec![(at(a), at(b))],
            test: vec![(at(b), at(n_timesteps))],
        };
        prepare(&ds, &spec, &DataConfig::default()).unwrap()
    }

    fn tiny_train_cfg() -> TrainingConfig {
        TrainingConfig {
            epochs: 3,
            lr: 2e-3,
            batch_size: 4,
            horizon_steps: 6,
            patience: 3,
            seed: 1,
            ..TrainingConfig::default()
        }
    }

    fn tiny_spec(kind: ModelKind, seed: u64) -> ModelSpec {
        ModelSpec {
            kind,
            e_dim: 8,
            z_dim: 8,
            h_dim: 12,
            psi_hidden: 8,
            drop_pbl: false,
            no_export: false,
            seed,
        }
    }

    #[test]
    fn sample_counting() {
        assert_eq!(make_samples(&[0..25], 24).unwrap().len(), 1);
        assert_eq!(make_samples(&[0..100], 24).unwrap().len(), 76);
        assert!(matches!(
            make_samples(&[0..24], 24),
            Err(Error::RangeTooShort { .. })
        ));
    }

    #[test]
    fn samples_never_leak_outside_their_range() {
        let ranges = vec![3..40, 55..90];
        let horizon = 12;
        for s in make_samples(&ranges, horizon).unwrap() {
            let inside = ranges
                .iter()
                .any(|r| s.start >= r.start && s.start + horizon < r.end);
            assert!(inside, "sample at {} leaks", s.start);
        }
    }

    #[test]
    fn batch_loss_equals_hand_loop() {
        let prep = small_prepared(120);
        let cfg = tiny_train_cfg();
        let spec = tiny_spec(ModelKind::Pm25Gnn, 3);
        let params = ModelParams::init(&spec, prep.n_nodes()).unwrap();
        let samples = [Sample { start: 2 }, Sample { start: 10 }, Sample { start: 31 }];
        let (x0, p, q, truth) = build_batch(&prep, &samples, cfg.horizon_steps);
        let graph = prep.graph.replicate(samples.len());
        let pred = forward(&spec, &params, &x0, &p, &q, &graph).unwrap();
        let pred2 = pred
            .reshape(vec![cfg.horizon_steps, samples.len() * prep.n_nodes()])
            .unwrap();
        let loss = mse_loss(&pred2, &truth).unwrap().item();

        // Hand loop: average over samples of (1/T)(1/N) sum of squares.
        let mut hand = 0.0;
        for (bi, _s) in samples.iter().enumerate() {
            let mut per_sample = 0.0;
            for tau in 0..cfg.horizon_steps {
                for i in 0..prep.n_nodes() {
                    let idx = (tau * samples.len() + bi) * prep.n_nodes() + i;
                    let r = pred2.data()[idx] - truth.data()[idx];
                    per_sample += r * r;
                }
            }
            hand += per_sample / (cfg.horizon_steps * prep.n_nodes()) as f64;
        }
        hand /= samples.len() as f64;
        assert!((loss - hand).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let prep = small_prepared(120);
        let mut cfg = tiny_train_cfg();
        cfg.lr = 0.0;
        cfg.epochs = 2;
        let spec = tiny_spec(ModelKind::Mlp, 4);
        let init = ModelParams::init(&spec, prep.n_nodes()).unwrap();
        let outcome = train_model(&spec, &prep, &cfg).unwrap();
        for (a, b) in init.tensors().iter().zip(outcome.params.tensors()) {
            assert_eq!(a.data(), b.data());
        }
        let h = &outcome.history.epochs;
        assert_eq!(h.len(), 2);
        // Equal up to batch summation order (the shuffle regroups batches).
        assert!((h[0].train_loss - h[1].train_loss).abs() < 1e-12 * h[0].train_loss);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let prep = small_prepared(120);
        let cfg = tiny_train_cfg();
        let spec = tiny_spec(ModelKind::Gru, 5);
        let a = train_model(&spec, &prep, &cfg).unwrap();
        let b = train_model(&spec, &prep, &cfg).unwrap();
        for (x, y) in a.params.tensors().iter().zip(b.params.tensors()) {
            assert!(x
                .data()
                .iter()
                .zip(y.data())
                .all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        assert_eq!(a.best_val_loss, b.best_val_loss);
    }

    #[test]
    fn training_reduces_loss() {
        let prep = small_prepared(160);
        let mut cfg = tiny_train_cfg();
        cfg.epochs = 8;
        cfg.lr = 3e-3;
        let spec = tiny_spec(ModelKind::Pm25Gnn, 6);
        let outcome = train_model(&spec, &prep, &cfg).unwrap();
        let first = outcome.history.epochs.first().unwrap().train_loss;
        let best = outcome
            .history
            .epochs
            .iter()
            .map(|e| e.train_loss)
            .fold(f64::INFINITY, f64::min);
        assert!(best < first, "no improvement: first {first}, best {best}");
    }

    #[test]
    fn early_stopping_restores_best_epoch_parameters() {
        let prep = small_prepared(140);
        let mut cfg = tiny_train_cfg();
        // A destabilizing learning rate so validation worsens after an
        // early best.
        cfg.lr = 0.5;
        cfg.epochs = 12;
        cfg.patience = 2;
        let spec = tiny_spec(ModelKind::Gru, 7);
        let outcome = train_model(&spec, &prep, &cfg).unwrap();
        let h = &outcome.history.epochs;
        let best_recorded = h
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(outcome.best_val_loss, best_recorded);
        assert_eq!(
            h[outcome.history.best_epoch].val_loss,
            outcome.best_val_loss
        );
        // Returned parameters reproduce the best validation loss exactly.
        let val_samples = make_samples(&prep.splits.validate, cfg.horizon_steps).unwrap();
        let revalidated =
            evaluate_loss(&spec, &outcome.params, &prep, &val_samples, &cfg).unwrap();
        assert_eq!(revalidated, outcome.best_val_loss);
        // The manufactured curve actually got worse at some point.
        assert!(h.iter().any(|e| e.val_loss > outcome.best_val_loss));
    }

    #[test]
    fn experiment_table_shape_and_zero_std_for_single_repeat() {
        let prep = small_prepared(120);
        let mut cfg = tiny_train_cfg();
        cfg.epochs = 2;
        let specs = vec![
            ("mlp".to_string(), tiny_spec(ModelKind::Mlp, 0)),
            ("gru".to_string(), tiny_spec(ModelKind::Gru, 0)),
        ];
        let table = run_experiment(&specs, &prep, &cfg, 1, 1).unwrap();
        assert_eq!(table.runs.len(), 2);
        let rows = table.metric_rows();
        assert_eq!(rows.len(), 2 * METRIC_NAMES.len());
        assert!(rows.iter().all(|r| r.std == 0.0));
        let rendered = table.render();
        assert!(rendered.contains("RMSE") && rendered.contains("±"));
        for r in &rows {
            assert!(r.mean.is_finite(), "{}/{} not finite", r.model, r.metric);
        }
    }

    #[test]
    fn parallel_jobs_match_serial_results() {
        let prep = small_prepared(120);
        let mut cfg = tiny_train_cfg();
        cfg.epochs = 2;
        let specs = vec![("mlp".to_string(), tiny_spec(ModelKind::Mlp, 1))];
        let serial = run_experiment(&specs, &prep, &cfg, 2, 1).unwrap();
        let parallel = run_experiment(&specs, &prep, &cfg, 2, 4).unwrap();
        for (a, b) in serial.runs.iter().zip(&parallel.runs) {
            assert_eq!(a.seed, b.seed);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn batched_forward_equals_per_sample_forward() {
        let prep = small_prepared(120);
        let cfg = tiny_train_cfg();
        for kind in [ModelKind::Pm25Gnn, ModelKind::NodesFcGru, ModelKind::Gru] {
            let spec = tiny_spec(kind, 11);
            let params = ModelParams::init(&spec, prep.n_nodes()).unwrap();
            let samples = [Sample { start: 3 }, Sample { start: 20 }, Sample { start: 41 }];
            let (x0, p, q, _) = build_batch(&prep, &samples, cfg.horizon_steps);
            let graph = prep.graph.replicate(samples.len());
            let batched = forward(&spec, &params, &x0, &p, &q, &graph).unwrap();
            let n = prep.n_nodes();
            for (bi, s) in samples.iter().enumerate() {
                let (x0s, ps, qs, _) = build_batch(&prep, &[*s], cfg.horizon_steps);
                let single = forward(&spec, &params, &x0s, &ps, &qs, &prep.graph).unwrap();
                for tau in 0..cfg.horizon_steps {
                    for i in 0..n {
                        let b = batched.data()[(tau * samples.len() + bi) * n + i];
                        let u = single.data()[tau * n + i];
                        assert_eq!(b.to_bits(), u.to_bits(), "{kind} batch mismatch");
                    }
                }
            }
        }
    }

    #[test]
    fn history_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let history = TrainHistory {
            epochs: vec![
                EpochStats { epoch: 0, train_loss: 1.0, val_loss: 1.1 },
                EpochStats { epoch: 1, train_loss: 0.8, val_loss: 0.9 },
            ],
            best_epoch: 1,
            wall_seconds: 2.5,
        };
        write_history_csv(&path, &history).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_loss\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
