//! Command-line driver: graph building, synthetic data generation,
//! training, evaluation, prediction, and the ablation sweep.
//!
//! Exit codes: 0 success, 2 configuration error (bad flags, missing input
//! paths, invalid config keys), 3 data error (corrupt or inconsistent
//! files), 4 training abort (non-finite loss).

mod commands;
mod schema;

use std::path::Path;

use clap::{Arg, ArgMatches, Command};

use plumecast::error::{ErrorClass, Result};
use schema::{RunConfig, SCHEMA};

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .help(help)
        .required(true)
}

/// Adds `--config` plus one override flag per schema key, so `--help`
/// documents every setting with its default from the same table the parser
/// validates against.
fn with_config_flags(mut cmd: Command) -> Command {
    cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key = value config file (flags override it)"),
    );
    for s in SCHEMA {
        cmd = cmd.arg(
            Arg::new(s.key)
                .long(s.key)
                .value_name("VALUE")
                .help(format!("{} [default: {}]", s.help, s.default)),
        );
    }
    cmd
}

fn cli() -> Command {
    Command::new("plumecast")
        .about("Terrain-aware graph forecasting of PM2.5 transport")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("build-graph")
                .about("Build the distance/ridge-gated city graph and write graph.json")
                .arg(path_arg("nodes", "nodes.csv (id,name,lat,lon,altitude)"))
                .arg(path_arg("elevation", "elevation.grid raster"))
                .arg(
                    Arg::new("d-theta")
                        .long("d-theta")
                        .value_name("KM")
                        .default_value("300")
                        .help("Distance gate threshold in km"),
                )
                .arg(
                    Arg::new("m-theta")
                        .long("m-theta")
                        .value_name("M")
                        .default_value("1200")
                        .help("Ridge gate threshold in m"),
                )
                .arg(
                    Arg::new("ridge-samples")
                        .long("ridge-samples")
                        .value_name("N")
                        .default_value("32")
                        .help("Interior samples for the ridge supremum"),
                )
                .arg(path_arg("out", "Output graph.json path")),
        )
        .subcommand(
            with_config_flags(
                Command::new("gen-synth")
                    .about("Generate a synthetic advection-diffusion dataset directory"),
            )
            .arg(path_arg("out", "Output dataset directory")),
        )
        .subcommand(
            with_config_flags(Command::new("train").about("Train one model and checkpoint it"))
                .arg(path_arg("data", "Dataset directory"))
                .arg(path_arg("splits", "splits.json"))
                .arg(
                    Arg::new("model")
                        .long("model")
                        .value_name("KIND")
                        .help("Model kind override (pm25gnn|mlp|gru|lstm|nodesfc_gru)"),
                )
                .arg(path_arg("out", "Run output directory")),
        )
        .subcommand(
            with_config_flags(
                Command::new("evaluate")
                    .about("Score a checkpoint on the test split (full metric row set)"),
            )
            .arg(path_arg("data", "Dataset directory"))
            .arg(path_arg("splits", "splits.json"))
            .arg(path_arg("checkpoint", "Checkpoint file"))
            .arg(path_arg("out", "Run output directory")),
        )
        .subcommand(
            with_config_flags(
                Command::new("predict")
                    .about("Forecast one 72h window from a checkpoint and write forecast.csv"),
            )
            .arg(path_arg("data", "Dataset directory"))
            .arg(path_arg("checkpoint", "Checkpoint file"))
            .arg(
                Arg::new("start")
                    .long("start")
                    .value_name("INDEX|TIMESTAMP")
                    .required(true)
                    .help("Window start: timestep index or UTC timestamp"),
            )
            .arg(path_arg("out", "Run output directory")),
        )
        .subcommand(
            with_config_flags(
                Command::new("ablate")
                    .about("Train full / no-PBL / no-export variants with shared seeds"),
            )
            .arg(path_arg("data", "Dataset directory"))
            .arg(path_arg("splits", "splits.json"))
            .arg(path_arg("out", "Run output directory")),
        )
}

fn resolve_config(matches: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = matches.get_one::<String>("config") {
        cfg.load_file(Path::new(path))?;
    }
    for s in SCHEMA {
        if let Some(v) = matches.get_one::<String>(s.key) {
            cfg.set(s.key, v)?;
        }
    }
    Ok(cfg)
}

fn parse_flag<T: std::str::FromStr>(matches: &ArgMatches, name: &str) -> Result<T> {
    let raw = matches.get_one::<String>(name).expect("defaulted flag");
    raw.parse::<T>()
        .map_err(|_| plumecast::Error::Config(format!("bad value `{raw}` for --{name}")))
}

fn dispatch(matches: &ArgMatches) -> Result<()> {
    match matches.subcommand() {
        Some(("build-graph", m)) => {
            let path = |k: &str| Path::new(m.get_one::<String>(k).unwrap().as_str());
            commands::cmd_build_graph(
                path("nodes"),
                path("elevation"),
                parse_flag::<f64>(m, "d-theta")?,
                parse_flag::<f64>(m, "m-theta")?,
                parse_flag::<usize>(m, "ridge-samples")?,
                path("out"),
            )
        }
        Some(("gen-synth", m)) => {
            let cfg = resolve_config(m)?;
            commands::cmd_gen_synth(&cfg, Path::new(m.get_one::<String>("out").unwrap()))
        }
        Some(("train", m)) => {
            let cfg = resolve_config(m)?;
            commands::cmd_train(
                Path::new(m.get_one::<String>("data").unwrap()),
                Path::new(m.get_one::<String>("splits").unwrap()),
                m.get_one::<String>("model").map(|s| s.as_str()),
                &cfg,
                Path::new(m.get_one::<String>("out").unwrap()),
            )
        }
        Some(("evaluate", m)) => {
            let cfg = resolve_config(m)?;
            commands::cmd_evaluate(
                Path::new(m.get_one::<String>("data").unwrap()),
                Path::new(m.get_one::<String>("splits").unwrap()),
                Path::new(m.get_one::<String>("checkpoint").unwrap()),
                &cfg,
                Path::new(m.get_one::<String>("out").unwrap()),
            )
        }
        Some(("predict", m)) => {
            let cfg = resolve_config(m)?;
            commands::cmd_predict(
                Path::new(m.get_one::<String>("data").unwrap()),
                Path::new(m.get_one::<String>("checkpoint").unwrap()),
                m.get_one::<String>("start").unwrap(),
                &cfg,
                Path::new(m.get_one::<String>("out").unwrap()),
            )
        }
        Some(("ablate", m)) => {
            let cfg = resolve_config(m)?;
            commands::cmd_ablate(
                Path::new(m.get_one::<String>("data").unwrap()),
                Path::new(m.get_one::<String>("splits").unwrap()),
                &cfg,
                Path::new(m.get_one::<String>("out").unwrap()),
            )
        }
        _ => unreachable!("subcommand required"),
    }
}

fn main() {
    let matches = cli().get_matches();
    if let Err(e) = dispatch(&matches) {
        eprintln!("error: {e}");
        let code = match e.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Training => 4,
        };
        std::process::exit(code);
    }
}
