//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (`--nocapture` to see them).
//!
//! The two training-based criteria share one cached benchmark run: the
//! synthetic world at its default configuration, 2:1:1 date splits, three
//! seeds per model, 50-epoch cap with early stopping.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plumecast::dataio::{
    load_checkpoint, load_dataset, save_checkpoint, save_dataset, Checkpoint, KntDtype,
    SplitSpec, CHECKPOINT_VERSION,
};
use plumecast::featurize::{
    advection_coefficient, WindConvention, EDGE_FEATURE_COUNT, NODE_FEATURE_COUNT,
};
use plumecast::geograph::{build_adjacency, ridge_height, City, ElevationGrid};
use plumecast::metrics::{binarize_and_count, csi_pod_far, rmse_mae, ConfusionCounts};
use plumecast::model::{
    forward, rollout, spatial_step, GraphView, ModelKind, ModelParams, ModelSpec,
};
use plumecast::numerics::{grad_check, mse_loss, Tensor};
use plumecast::synth::{bruteforce_rollout, bruteforce_spatial, generate_world, SynthConfig};
use plumecast::train::{
    evaluate_on_split, make_samples, predict_windows, prepare, run_experiment, train_model,
    DataConfig, ExperimentTable, Precision, Sample, TrainingConfig,
};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn small_dims(kind: ModelKind, seed: u64) -> ModelSpec {
    ModelSpec {
        kind,
        e_dim: 6,
        z_dim: 5,
        h_dim: 7,
        psi_hidden: 6,
        drop_pbl: false,
        no_export: false,
        seed,
    }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, max_edges: usize) -> GraphView {
    let mut edges = Vec::new();
    for _ in 0..max_edges {
        let s = rng.random_range(0..n);
        let d = rng.random_range(0..n);
        if s != d && !edges.contains(&(s, d)) {
            edges.push((s, d));
        }
    }
    GraphView::new(n, &edges).unwrap()
}

// -------------------------------------------------------------------------
// Criterion 1: autodiff vs finite differences for every model kind.
// -------------------------------------------------------------------------
#[test]
fn criterion_01_gradient_correctness_all_models() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 5;
    let t_len = 3;
    let graph = random_graph(&mut rng, n, 12);
    assert!(graph.n_edges() <= 12);
    let x0 = rand_tensor(&mut rng, &[n, 1]);
    let p_panel = rand_tensor(&mut rng, &[t_len, n, NODE_FEATURE_COUNT]);
    let q_panel = rand_tensor(&mut rng, &[t_len, graph.n_edges(), EDGE_FEATURE_COUNT]);
    let truth = rand_tensor(&mut rng, &[t_len, n, 1]);

    for kind in ModelKind::ALL {
        let spec = small_dims(kind, 300 + kind.name().len() as u64);
        let base = ModelParams::init(&spec, n).unwrap();
        let seed: Vec<Tensor> = base.tensors().into_iter().cloned().collect();
        let f = |ps: &[Tensor]| {
            let mut m = base.clone();
            m.replace_tensors(ps.to_vec());
            let pred = forward(&spec, &m, &x0, &p_panel, &q_panel, &graph)?;
            mse_loss(&pred, &truth)
        };
        // eps 1e-4 balances truncation against f64 cancellation noise: at
        // 1e-5 the difference quotient bottoms out near 1e-12 absolute,
        // which dominates entries whose true gradient is ~1e-8.
        let err = grad_check(f, &seed, 1e-4).unwrap();
        assert!(
            err < 1e-5,
            "criterion 1 FAIL: {kind} gradient error {err:.3e} >= 1e-5"
        );
        println!("  {kind}: {} params, max rel err {err:.3e}", base.count());
    }
    let dt = started.elapsed().as_secs_f64();
    assert!(dt < 60.0, "criterion 1 FAIL: took {dt:.1}s >= 60s");
    println!("PASS criterion 1: gradients match finite differences (<1e-5) for all 5 models in {dt:.1}s");
}

// -------------------------------------------------------------------------
// Criterion 2: scatter-based spatial step vs brute-force oracle.
// -------------------------------------------------------------------------
#[test]
fn criterion_02_spatial_step_oracle_equivalence() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=20);
        let max_edges = rng.random_range(0..=60);
        let graph = random_graph(&mut rng, n, max_edges);
        let spec = small_dims(ModelKind::Pm25Gnn, seed);
        let params = match ModelParams::init(&spec, n).unwrap() {
            ModelParams::Pm25Gnn(p) => p,
            _ => unreachable!(),
        };
        let xi = rand_tensor(&mut rng, &[n, 1 + NODE_FEATURE_COUNT]);
        let q = rand_tensor(&mut rng, &[graph.n_edges(), EDGE_FEATURE_COUNT]);
        for no_export in [false, true] {
            let fast = spatial_step(&xi, &q, &graph, &params, no_export).unwrap();
            let slow = bruteforce_spatial(&xi, &q, &graph, &params, no_export);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                let d = (a - b).abs();
                worst = worst.max(d);
                assert!(
                    d < 1e-12,
                    "criterion 2 FAIL: seed {seed} no_export={no_export}: |{a} - {b}| = {d:.3e}"
                );
            }
        }
    }
    let dt = started.elapsed().as_secs_f64();
    assert!(dt < 30.0, "criterion 2 FAIL: took {dt:.1}s >= 30s");
    println!("PASS criterion 2: scatter == brute force on 100 instances (worst |Δ| {worst:.3e}) in {dt:.1}s");
}

// -------------------------------------------------------------------------
// Criterion 3: rollout vs the loop-transliteration oracle.
// -------------------------------------------------------------------------
#[test]
fn criterion_03_rollout_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let n = 5;
    let edges = [
        (0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (3, 4), (4, 3), (4, 0), (0, 4),
    ];
    let graph = GraphView::new(n, &edges).unwrap();
    let spec = small_dims(ModelKind::Pm25Gnn, 34);
    let params = match ModelParams::init(&spec, n).unwrap() {
        ModelParams::Pm25Gnn(p) => p,
        _ => unreachable!(),
    };
    let x0 = rand_tensor(&mut rng, &[n, 1]);
    let p_panel = rand_tensor(&mut rng, &[24, n, NODE_FEATURE_COUNT]);
    let q_panel = rand_tensor(&mut rng, &[24, graph.n_edges(), EDGE_FEATURE_COUNT]);

    let fast = rollout(&x0, &p_panel, &q_panel, &graph, &params, &spec).unwrap();
    let slow = bruteforce_rollout(&x0, &p_panel, &q_panel, &graph, &params, &spec);
    let mut worst: f64 = 0.0;
    for (a, b) in fast.data().iter().zip(slow.data()) {
        let d = (a - b).abs();
        worst = worst.max(d);
        assert!(d < 1e-12, "criterion 3 FAIL: |{a} - {b}| = {d:.3e}");
    }
    let dt = started.elapsed().as_secs_f64();
    assert!(dt < 10.0, "criterion 3 FAIL: took {dt:.1}s >= 10s");
    println!("PASS criterion 3: rollout == oracle at T=24, N=5 (worst |Δ| {worst:.3e}) in {dt:.2}s");
}

// -------------------------------------------------------------------------
// Criterion 4: advection coefficient hand values.
// -------------------------------------------------------------------------
#[test]
fn criterion_04_advection_hand_values() {
    // Wind along the edge: 10 m/s = 36 km/h over 100 km.
    let (speed, _, s) =
        advection_coefficient(10.0, 0.0, 100.0, 90.0, WindConvention::Toward).unwrap();
    assert!((speed - 36.0).abs() < 1e-12);
    assert!((s - 0.36).abs() < 1e-12, "criterion 4 FAIL: S = {s}");

    let (_, _, s90) =
        advection_coefficient(0.0, 10.0, 100.0, 90.0, WindConvention::Toward).unwrap();
    assert!(s90.abs() < 1e-12, "criterion 4 FAIL: perpendicular S = {s90}");

    let (_, _, s180) =
        advection_coefficient(-10.0, 0.0, 100.0, 90.0, WindConvention::Toward).unwrap();
    assert!(s180.abs() < 1e-12, "criterion 4 FAIL: opposing S = {s180}");
    println!("PASS criterion 4: S(α=0)=0.36, S(α=90°)=0, S(α=180°)=0 within 1e-12");
}

// -------------------------------------------------------------------------
// Criterion 5: distance/ridge gating with a designed ridge.
// -------------------------------------------------------------------------
#[test]
fn criterion_05_adjacency_gating() {
    let city = |id: usize, lon: f64| City {
        id,
        name: format!("c{id}"),
        lat: 0.0,
        lon,
        altitude: 0.0,
    };
    let flat = ElevationGrid::new(-1.0, -1.0, 0.05, 0.05, 41, 121, vec![0.0; 41 * 121]).unwrap();

    // ~350 km apart on flat terrain: disconnected.
    let far = vec![city(0, 0.0), city(1, 3.15)];
    assert_eq!(
        build_adjacency(&far, &flat, 300.0, 1200.0, 32).unwrap().n_edges(),
        0,
        "criterion 5 FAIL: distance gate"
    );

    // ~100 km apart on flat terrain: connected both ways.
    let near = vec![city(0, 0.0), city(1, 0.9)];
    assert_eq!(
        build_adjacency(&near, &flat, 300.0, 1200.0, 32).unwrap().edges,
        vec![(0, 1), (1, 0)],
        "criterion 5 FAIL: flat 100 km should connect"
    );

    // Wide gaussian ridge centered on the segment midpoint.
    let designed = |peak: f64| {
        let mut g =
            ElevationGrid::new(-1.0, -1.0, 0.02, 0.02, 101, 151, vec![0.0; 101 * 151]).unwrap();
        for r in 0..g.nrows {
            for c in 0..g.ncols {
                let lat = g.lat0 + r as f64 * g.dlat;
                let lon = g.lon0 + c as f64 * g.dlon;
                let d2 = lat * lat + (lon - 0.45) * (lon - 0.45);
                g.heights[r * g.ncols + c] = peak * (-d2 / (2.0 * 0.2 * 0.2)).exp();
            }
        }
        g
    };
    let ridge_est = ridge_height(&designed(1500.0), &near[0], &near[1], 32).unwrap();
    let rel = (ridge_est - 1500.0).abs() / 1500.0;
    assert!(
        rel < 0.05,
        "criterion 5 FAIL: ridge estimate {ridge_est:.1} off designed 1500 by {:.1}%",
        rel * 100.0
    );
    assert_eq!(
        build_adjacency(&near, &designed(1500.0), 300.0, 1200.0, 32).unwrap().n_edges(),
        0,
        "criterion 5 FAIL: 1500 m ridge should block"
    );
    assert_eq!(
        build_adjacency(&near, &designed(1000.0), 300.0, 1200.0, 32).unwrap().n_edges(),
        2,
        "criterion 5 FAIL: 1000 m ridge should pass"
    );
    println!(
        "PASS criterion 5: gates at 300 km / 1200 m; ridge estimate {ridge_est:.1} m within {:.2}% of designed 1500 m",
        rel * 100.0
    );
}

// -------------------------------------------------------------------------
// Criterion 6: metric hand-checks and algebraic bounds.
// -------------------------------------------------------------------------
#[test]
fn criterion_06_metrics_hand_checks() {
    // RMSE/MAE worked example: residuals [3, -4].
    let (rmse, mae) = rmse_mae(
        &Tensor::new(vec![2], vec![13.0, 16.0]).unwrap(),
        &Tensor::new(vec![2], vec![10.0, 20.0]).unwrap(),
    )
    .unwrap();
    assert!((rmse - (12.5f64).sqrt()).abs() < 1e-12, "criterion 6 FAIL: rmse {rmse}");
    assert!((mae - 3.5).abs() < 1e-12, "criterion 6 FAIL: mae {mae}");

    // Confusion worked examples.
    let c = binarize_and_count(
        &Tensor::new(vec![2], vec![80.0, 70.0]).unwrap(),
        &Tensor::new(vec![2], vec![80.0, 70.0]).unwrap(),
        75.0,
    )
    .unwrap();
    assert_eq!((c.hits, c.misses, c.false_alarms, c.correct_negatives), (1, 0, 0, 1));
    let ((csi, pod, far), _) = csi_pod_far(&ConfusionCounts {
        hits: 2,
        misses: 1,
        false_alarms: 1,
        correct_negatives: 0,
    });
    assert_eq!(csi, 0.5);
    assert!((pod - 2.0 / 3.0).abs() < 1e-15 && (far - 1.0 / 3.0).abs() < 1e-15);

    // Algebraic bounds over 10,000 random counts.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..10_000 {
        let counts = ConfusionCounts {
            hits: rng.random_range(0..200),
            misses: rng.random_range(0..200),
            false_alarms: rng.random_range(0..200),
            correct_negatives: rng.random_range(0..200),
        };
        if counts.hits + counts.misses == 0 || counts.hits + counts.false_alarms == 0 {
            continue;
        }
        let ((csi, pod, far), _) = csi_pod_far(&counts);
        assert!(csi <= pod + 1e-15, "criterion 6 FAIL at case {i}");
        assert!(csi <= 1.0 - far + 1e-15, "criterion 6 FAIL at case {i}");
    }
    println!("PASS criterion 6: worked examples exact; CSI ≤ POD and CSI ≤ 1−FAR over 10,000 cases");
}

// -------------------------------------------------------------------------
// Shared benchmark run for criteria 7 and 8.
// -------------------------------------------------------------------------
struct BenchOutcome {
    main: ExperimentTable,
    ablations: ExperimentTable,
    wall_main_s: f64,
}

fn bench_spec(kind: ModelKind, drop_pbl: bool, no_export: bool) -> ModelSpec {
    ModelSpec {
        kind,
        e_dim: 16,
        z_dim: 16,
        h_dim: 32,
        psi_hidden: 16,
        drop_pbl,
        no_export,
        seed: 0,
    }
}

fn benchmark() -> &'static BenchOutcome {
    static BENCH: OnceLock<BenchOutcome> = OnceLock::new();
    BENCH.get_or_init(|| {
        let cfg = SynthConfig::default();
        let world = generate_world(&cfg).expect("default world generates");
        let dir = tempfile::tempdir().expect("tempdir");
        save_dataset(
            dir.path(),
            "synth-benchmark",
            &world.cities,
            &world.grid,
            &world.panel.meteo_block(),
            &world.pm25,
            cfg.t0,
            KntDtype::F64,
        )
        .expect("save dataset");
        let dataset = load_dataset(dir.path()).expect("load dataset");
        let stamp = |i: usize| {
            chrono::DateTime::from_timestamp(cfg.t0 + i as i64 * 10_800, 0)
                .unwrap()
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        };
        let split = SplitSpec {
            train: vec![(stamp(0), stamp(720))],
            validate: vec![(stamp(720), stamp(1080))],
            test: vec![(stamp(1080), stamp(1440))],
        };
        let prep = prepare(&dataset, &split, &DataConfig::default()).expect("prepare");
        let train_cfg = TrainingConfig::default();

        let main_specs = vec![
            ("pm25gnn".to_string(), bench_spec(ModelKind::Pm25Gnn, false, false)),
            ("gru".to_string(), bench_spec(ModelKind::Gru, false, false)),
            ("mlp".to_string(), bench_spec(ModelKind::Mlp, false, false)),
        ];
        let t = Instant::now();
        let main = run_experiment(&main_specs, &prep, &train_cfg, 3, 1).expect("main experiment");
        let wall_main_s = t.elapsed().as_secs_f64();

        let ablation_specs = vec![
            ("no_pbl_height".to_string(), bench_spec(ModelKind::Pm25Gnn, true, false)),
            ("no_export".to_string(), bench_spec(ModelKind::Pm25Gnn, false, true)),
        ];
        let ablations =
            run_experiment(&ablation_specs, &prep, &train_cfg, 3, 1).expect("ablation experiment");

        BenchOutcome {
            main,
            ablations,
            wall_main_s,
        }
    })
}

// -------------------------------------------------------------------------
// Criterion 7: directional model ordering on the synthetic benchmark.
// -------------------------------------------------------------------------
#[test]
fn criterion_07_directional_model_ordering() {
    let bench = benchmark();
    let (gnn, _) = bench.main.mean_std("pm25gnn", "RMSE");
    let (gru, _) = bench.main.mean_std("gru", "RMSE");
    let (mlp, _) = bench.main.mean_std("mlp", "RMSE");
    println!("{}", bench.main.render());
    assert!(
        gnn < gru && gru < mlp,
        "criterion 7 FAIL: RMSE ordering pm25gnn {gnn:.3} < gru {gru:.3} < mlp {mlp:.3} violated"
    );
    let margin = (gru - gnn) / gru;
    assert!(
        margin >= 0.05,
        "criterion 7 FAIL: pm25gnn beats gru by {:.1}% < 5%",
        margin * 100.0
    );
    assert!(
        bench.wall_main_s < 1800.0,
        "criterion 7 FAIL: took {:.0}s >= 30 min",
        bench.wall_main_s
    );
    println!(
        "PASS criterion 7: test RMSE pm25gnn {gnn:.3} < gru {gru:.3} < mlp {mlp:.3} (margin {:.1}%), 9 runs in {:.0}s",
        margin * 100.0,
        bench.wall_main_s
    );
}

// -------------------------------------------------------------------------
// Criterion 8: ablations never beat the full model.
// -------------------------------------------------------------------------
#[test]
fn criterion_08_ablations_degrade_performance() {
    let bench = benchmark();
    let (full, _) = bench.main.mean_std("pm25gnn", "RMSE");
    let (no_pbl, _) = bench.ablations.mean_std("no_pbl_height", "RMSE");
    let (no_export, _) = bench.ablations.mean_std("no_export", "RMSE");
    println!("{}", bench.ablations.render());
    assert!(
        no_pbl >= full,
        "criterion 8 FAIL: no_pbl_height RMSE {no_pbl:.3} < full {full:.3}"
    );
    assert!(
        no_export >= full,
        "criterion 8 FAIL: no_export RMSE {no_export:.3} < full {full:.3}"
    );
    println!(
        "PASS criterion 8: mean test RMSE full {full:.3} ≤ no_pbl_height {no_pbl:.3} and ≤ no_export {no_export:.3} (3 seeds)"
    );
}

// -------------------------------------------------------------------------
// Criterion 9: determinism and persistence.
// -------------------------------------------------------------------------
#[test]
fn criterion_09_determinism_and_persistence() {
    // Small world for the double-training check.
    let mut cfg = SynthConfig::default();
    cfg.n_cities = 5;
    cfg.n_timesteps = 140;
    cfg.lat_span = 2.0;
    cfg.lon_span = 2.0;
    cfg.mountains.clear();
    let world = generate_world(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(
        dir.path(),
        "determinism",
        &world.cities,
        &world.grid,
        &world.panel.meteo_block(),
        &world.pm25,
        cfg.t0,
        KntDtype::F64,
    )
    .unwrap();
    let dataset = load_dataset(dir.path()).unwrap();

    // Dataset round trip is bitwise.
    let dir2 = tempfile::tempdir().unwrap();
    save_dataset(
        dir2.path(),
        "determinism",
        &dataset.cities,
        &dataset.grid,
        &dataset.meteo,
        &dataset.pm25,
        cfg.t0,
        KntDtype::F64,
    )
    .unwrap();
    for f in ["meteo.knt", "pm25.knt"] {
        let a = std::fs::read(dir.path().join(f)).unwrap();
        let b = std::fs::read(dir2.path().join(f)).unwrap();
        assert_eq!(a, b, "criterion 9 FAIL: {f} not bitwise stable");
    }

    let stamp = |i: usize| {
        chrono::DateTime::from_timestamp(cfg.t0 + i as i64 * 10_800, 0)
            .unwrap()
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    };
    let split = SplitSpec {
        train: vec![(stamp(0), stamp(84))],
        validate: vec![(stamp(84), stamp(112))],
        test: vec![(stamp(112), stamp(140))],
    };
    let prep = prepare(&dataset, &split, &DataConfig::default()).unwrap();
    let spec = {
        let mut s = small_dims(ModelKind::Pm25Gnn, 9);
        s.e_dim = 8;
        s
    };
    let train_cfg = TrainingConfig {
        epochs: 3,
        horizon_steps: 8,
        batch_size: 4,
        seed: 9,
        ..TrainingConfig::default()
    };

    // Same seed -> bit-identical parameters.
    let a = train_model(&spec, &prep, &train_cfg).unwrap();
    let b = train_model(&spec, &prep, &train_cfg).unwrap();
    for ((_, x), (_, y)) in a.params.named_tensors().iter().zip(b.params.named_tensors()) {
        assert!(
            x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits()),
            "criterion 9 FAIL: same-seed training differs"
        );
    }

    // Save -> load -> bit-identical forecasts.
    let ckpt_path = dir.path().join("model.knc");
    let meta = Checkpoint {
        version: CHECKPOINT_VERSION,
        model_spec: spec.clone(),
        n_base: prep.n_nodes(),
        standardizer: prep.standardizer.clone(),
        train_config: train_cfg.clone(),
        data_config: DataConfig::default(),
        best_val_loss: a.best_val_loss,
        best_train_loss: a.best_train_loss,
        best_epoch: a.history.best_epoch,
        tensor_names: vec![],
    };
    save_checkpoint(&ckpt_path, &meta, &a.params).unwrap();
    let (_, reloaded) = load_checkpoint(&ckpt_path).unwrap();
    let samples = [Sample { start: 112 }, Sample { start: 120 }];
    let (pred_before, _) =
        predict_windows(&spec, &a.params, &prep, &samples, &train_cfg).unwrap();
    let (pred_after, _) =
        predict_windows(&spec, &reloaded, &prep, &samples, &train_cfg).unwrap();
    assert!(
        pred_before
            .data()
            .iter()
            .zip(pred_after.data())
            .all(|(u, v)| u.to_bits() == v.to_bits()),
        "criterion 9 FAIL: forecasts differ after checkpoint round trip"
    );
    println!("PASS criterion 9: same-seed training, checkpoint round trip and dataset round trip all bit-identical");
}

// -------------------------------------------------------------------------
// Criterion 10: standardization round trip and clamping.
// -------------------------------------------------------------------------
#[test]
fn criterion_10_standardization_round_trip() {
    let mut cfg = SynthConfig::default();
    cfg.n_cities = 4;
    cfg.n_timesteps = 120;
    cfg.mountains.clear();
    let world = generate_world(&cfg).unwrap();
    let std = plumecast::featurize::Standardizer::fit(
        &world.panel,
        &world.edge_panel,
        &world.pm25,
        &[0..80],
    )
    .unwrap();

    let mut worst: f64 = 0.0;
    for k in 0..=1000 {
        let x = 0.5 * k as f64; // 0, 0.5, ..., 500
        let t = Tensor::new(vec![1], vec![x]).unwrap();
        let back = std.invert_prediction(&std.apply_pm25(&t)).data()[0];
        worst = worst.max((back - x).abs());
        assert!(
            (back - x).abs() < 1e-9,
            "criterion 10 FAIL: round trip of {x} drifted to {back}"
        );
    }
    let over = Tensor::new(vec![1], vec![(612.0 - std.pm_mean) / std.pm_std]).unwrap();
    assert_eq!(
        std.invert_prediction(&over).data()[0],
        500.0,
        "criterion 10 FAIL: 612 should clamp to 500"
    );
    let under = Tensor::new(vec![1], vec![(-80.0 - std.pm_mean) / std.pm_std]).unwrap();
    assert_eq!(
        std.invert_prediction(&under).data()[0],
        0.0,
        "criterion 10 FAIL: negative should clamp to 0"
    );
    println!("PASS criterion 10: invert∘apply identity on [0,500] (worst drift {worst:.2e}); clamps exact");
}

// -------------------------------------------------------------------------
// Criterion 11: optional real-data hook (not CI-gated).
// -------------------------------------------------------------------------
#[test]
fn criterion_11_real_data_hook() {
    let Some(dir) = std::env::var_os("KNOWAIR_DIR") else {
        println!("SKIP criterion 11: set KNOWAIR_DIR to a KnowAir-format dataset directory to run the real-data hook");
        return;
    };
    let dir = std::path::PathBuf::from(dir);
    let dataset = load_dataset(&dir).expect("real dataset loads");
    let split = plumecast::dataio::read_splits_json(&dir.join("splits.json"))
        .expect("dataset-1 style splits.json present");
    let prep = prepare(&dataset, &split, &DataConfig::default()).unwrap();
    let spec = bench_spec(ModelKind::Mlp, false, false);
    let cfg = TrainingConfig {
        epochs: 1,
        ..TrainingConfig::default()
    };
    let outcome = train_model(&spec, &prep, &cfg).unwrap();
    let (test_loss, report) = evaluate_on_split(
        &spec,
        &outcome.params,
        &prep,
        "test",
        &cfg,
        plumecast::metrics::CategoricalMode::Pooled,
    )
    .unwrap();
    // The full metric row set is available; headline parity with published
    // full-scale results is out of desk scope.
    assert!(test_loss.is_finite());
    assert!(report.rmse.is_finite() && report.csi.is_finite());
    println!(
        "PASS criterion 11: real-data evaluation emitted the full metric row set (RMSE {:.2})",
        report.rmse
    );
}

// -------------------------------------------------------------------------
// Supporting check: the metric row set itself (used by criteria 7/8/11).
// -------------------------------------------------------------------------
#[test]
fn experiment_tables_carry_the_full_row_set() {
    let expected = [
        "Train_Loss",
        "Validate_Loss",
        "Test_Loss",
        "RMSE",
        "MAE",
        "CSI",
        "POD",
        "FAR",
    ];
    assert_eq!(plumecast::train::METRIC_NAMES, expected);
    // make_samples window arithmetic backing the 72 h / 24-step protocol.
    assert_eq!(make_samples(&[0..25], 24).unwrap().len(), 1);
    let _ = Precision::F64;
}
