//! End-to-end runs of the `plumecast` binary on a scaled-down world:
//! generate -> build-graph -> train -> evaluate -> predict -> ablate,
//! plus the exit-code contract and output determinism.

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plumecast"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Tiny world + fast training settings shared by the pipeline tests.
fn gen_args<'a>(data: &'a str) -> Vec<&'a str> {
    vec![
        "gen-synth",
        "--synth.n_cities",
        "5",
        "--synth.n_timesteps",
        "160",
        "--synth.lat_span",
        "2",
        "--synth.lon_span",
        "2",
        "--synth.mountains",
        "",
        "--out",
        data,
    ]
}

const FAST_TRAIN: &[&str] = &[
    "--train.epochs",
    "2",
    "--train.horizon_steps",
    "6",
    "--train.batch_size",
    "4",
    "--model.e_dim",
    "6",
    "--model.z_dim",
    "6",
    "--model.h_dim",
    "8",
    "--model.psi_hidden",
    "6",
];

#[test]
fn full_pipeline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data_s = data.to_str().unwrap();

    assert_ok(&run(&gen_args(data_s)));
    for f in [
        "manifest.json",
        "nodes.csv",
        "elevation.grid",
        "meteo.knt",
        "pm25.knt",
        "splits.json",
        "run_meta.json",
    ] {
        assert!(data.join(f).exists(), "{f} missing");
    }

    // Graph export with a degree histogram.
    let graph_out = tmp.path().join("graph.json");
    let out = run(&[
        "build-graph",
        "--nodes",
        data.join("nodes.csv").to_str().unwrap(),
        "--elevation",
        data.join("elevation.grid").to_str().unwrap(),
        "--out",
        graph_out.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("degree histogram"));
    let graph: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&graph_out).unwrap()).unwrap();
    let edges = graph["edges"].as_array().unwrap();
    assert!(!edges.is_empty());
    assert_eq!(edges.len(), graph["dist_km"].as_array().unwrap().len());

    // Train a small model.
    let splits = data.join("splits.json");
    let run_dir = tmp.path().join("run");
    let splits_s = splits.to_str().unwrap().to_string();
    let run_dir_s = run_dir.to_str().unwrap().to_string();
    let mut args = vec![
        "train",
        "--data",
        data_s,
        "--splits",
        &splits_s,
        "--model",
        "pm25gnn",
        "--out",
        &run_dir_s,
    ];
    args.extend_from_slice(FAST_TRAIN);
    assert_ok(&run(&args));
    let ckpt = run_dir.join("checkpoint.knc");
    assert!(ckpt.exists());
    assert!(run_dir.join("history.csv").exists());
    assert!(run_dir.join("metrics.json").exists());
    assert!(run_dir.join("run_meta.json").exists());
    let history = std::fs::read_to_string(run_dir.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss\n"));

    // Evaluate emits the full metric row set.
    let eval_dir = tmp.path().join("eval");
    assert_ok(&run(&[
        "evaluate",
        "--data",
        data_s,
        "--splits",
        splits.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]));
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    for metric in [
        "Train_Loss",
        "Validate_Loss",
        "Test_Loss",
        "RMSE",
        "MAE",
        "CSI",
        "POD",
        "FAR",
    ] {
        assert!(metrics.contains(metric), "missing {metric}");
    }
    let leadtime = std::fs::read_to_string(eval_dir.join("per_leadtime.csv")).unwrap();
    assert!(leadtime.starts_with("leadtime_h,rmse,mae,csi,pod,far\n"));

    // Predict one window; horizon 6 -> leadtimes 3..18 per city.
    let pred_dir = tmp.path().join("pred");
    assert_ok(&run(&[
        "predict",
        "--data",
        data_s,
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--start",
        "10",
        "--out",
        pred_dir.to_str().unwrap(),
    ]));
    let forecast = std::fs::read_to_string(pred_dir.join("forecast.csv")).unwrap();
    let mut lines = forecast.lines();
    assert_eq!(lines.next().unwrap(), "city_id,leadtime_h,pm25_ugm3");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5 * 6);
    assert!(rows[0].starts_with("0,3,"));
    assert!(rows[6].starts_with("1,3,"));
    let leadtimes: Vec<i64> = rows[..6]
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(leadtimes, vec![3, 6, 9, 12, 15, 18]);
}

#[test]
fn predict_emits_24_leadtimes_at_default_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data_s = data.to_str().unwrap();
    let mut gen = gen_args(data_s);
    // Long enough for a 24-step horizon.
    gen[4] = "200";
    assert_ok(&run(&gen));

    let run_dir = tmp.path().join("run");
    let splits_s = data.join("splits.json").to_str().unwrap().to_string();
    let run_dir_s = run_dir.to_str().unwrap().to_string();
    let args = vec![
        "train",
        "--data",
        data_s,
        "--splits",
        &splits_s,
        "--model",
        "mlp",
        "--out",
        &run_dir_s,
        "--train.epochs",
        "1",
        "--model.h_dim",
        "8",
        "--train.batch_size",
        "8",
    ];
    assert_ok(&run(&args));

    let pred_dir = tmp.path().join("pred");
    assert_ok(&run(&[
        "predict",
        "--data",
        data_s,
        "--checkpoint",
        run_dir.join("checkpoint.knc").to_str().unwrap(),
        "--start",
        "2015-01-02T00:00:00Z",
        "--out",
        pred_dir.to_str().unwrap(),
    ]));
    let forecast = std::fs::read_to_string(pred_dir.join("forecast.csv")).unwrap();
    let rows: Vec<&str> = forecast.lines().skip(1).collect();
    assert_eq!(rows.len(), 5 * 24, "24 rows per city");
    let city0: Vec<i64> = rows[..24]
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(city0, (1..=24).map(|k| 3 * k).collect::<Vec<i64>>());
}

#[test]
fn ablate_emits_three_variant_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data_s = data.to_str().unwrap();
    assert_ok(&run(&gen_args(data_s)));

    let out_dir = tmp.path().join("ablate");
    let splits_s = data.join("splits.json").to_str().unwrap().to_string();
    let out_s = out_dir.to_str().unwrap().to_string();
    let mut args = vec![
        "ablate",
        "--data",
        data_s,
        "--splits",
        &splits_s,
        "--out",
        &out_s,
    ];
    args.extend_from_slice(FAST_TRAIN);
    let out = run(&args);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    for col in ["pm25gnn", "no_pbl_height", "no_export"] {
        assert!(stdout.contains(col), "missing column {col}");
    }
    let csv = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    assert!(csv.contains("no_pbl_height") && csv.contains("no_export"));
}

#[test]
fn exit_codes_follow_the_error_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data_s = data.to_str().unwrap();
    assert_ok(&run(&gen_args(data_s)));

    // Missing elevation file: config class, exit 2, message names the path.
    let out = run(&[
        "build-graph",
        "--nodes",
        data.join("nodes.csv").to_str().unwrap(),
        "--elevation",
        "/nonexistent/elevation.grid",
        "--out",
        tmp.path().join("g.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/elevation.grid"));

    // Unknown config key: exit 2.
    let conf = tmp.path().join("bad.conf");
    std::fs::write(&conf, "train.bogus = 1\n").unwrap();
    let out = run(&[
        "gen-synth",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Corrupt tensor payload: data class, exit 3.
    let pm = data.join("pm25.knt");
    let mut bytes = std::fs::read(&pm).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&pm, bytes).unwrap();
    let out = run(&[
        "train",
        "--data",
        data_s,
        "--splits",
        data.join("splits.json").to_str().unwrap(),
        "--out",
        tmp.path().join("r").to_str().unwrap(),
        "--train.epochs",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn zero_distance_threshold_warns_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_ok(&run(&gen_args(data.to_str().unwrap())));
    let out = run(&[
        "build-graph",
        "--nodes",
        data.join("nodes.csv").to_str().unwrap(),
        "--elevation",
        data.join("elevation.grid").to_str().unwrap(),
        "--d-theta",
        "0",
        "--out",
        tmp.path().join("g.json").to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("warning"));
}

#[test]
fn identical_invocations_produce_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_ok(&run(&gen_args(a.to_str().unwrap())));
    assert_ok(&run(&gen_args(b.to_str().unwrap())));
    for f in ["manifest.json", "nodes.csv", "elevation.grid", "meteo.knt", "pm25.knt"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between identical runs");
    }
}

#[test]
fn help_lists_config_keys_with_defaults() {
    let out = run(&["train", "--help"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "--train.lr",
        "[default: 5e-4]",
        "--model.kind",
        "[default: pm25gnn]",
        "--graph.d_theta_km",
        "[default: 300]",
    ] {
        assert!(text.contains(needle), "help missing {needle}");
    }
}
