use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rolpv_cli::{
    cmd_evaluate, cmd_fit_lpv, cmd_fit_projection, cmd_generate, cmd_pipeline, cmd_simulate, io, CliError,
    CliResult, InitialCondition, PipelineConfig, ReportPaths,
};

#[derive(Parser)]
#[command(name = "rolpv", version, about = "Learn reduced-order LPV models from trajectory data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Log progress of each stage.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for all artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the system and write training, holdout and validation data.
    Generate(RunArgs),
    /// Fit the state projection on the training data.
    FitProjection(RunArgs),
    /// Fit the LPV-NN on the projected training data.
    FitLpv(RunArgs),
    /// Simulate a saved model for an input sequence.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Input CSV with columns u0, u1, ...
        #[arg(long, conflicts_with = "data")]
        input: Option<PathBuf>,
        /// Dataset CSV: its inputs drive the model and its first state gives z0.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Initial reduced state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "x0")]
        z0: Option<Vec<f64>>,
        /// Initial full state, encoded with the model's projection.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, default_value = "trajectory.csv")]
        output: PathBuf,
    },
    /// Score a saved model on validation data.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Model file; defaults to the configured one in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Validation dataset; defaults to the configured one.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run generate, fit-projection, fit-lpv and evaluate in sequence.
    Pipeline(RunArgs),
}

fn load_config(args: &RunArgs) -> CliResult<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            io::require(path, "configuration file")?;
            PipelineConfig::load(path)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(args) => print_json(&cmd_generate(&load_config(&args)?, &args.out)?),
        Command::FitProjection(args) => print_json(&cmd_fit_projection(&load_config(&args)?, &args.out)?),
        Command::FitLpv(args) => print_json(&cmd_fit_lpv(&load_config(&args)?, &args.out)?),
        Command::Simulate {
            model,
            input,
            data,
            z0,
            x0,
            output,
        } => {
            let (inputs, first_state) = match (input, data) {
                (Some(path), None) => (read_inputs(&path)?, None),
                (None, Some(path)) => {
                    let d = io::read_dataset(&path, "dataset CSV")?;
                    let x = d.records.first().map(|r| r.x.clone());
                    (d.inputs(), x)
                }
                _ => {
                    return Err(CliError::Config {
                        field: "simulate".into(),
                        message: "give exactly one of --input or --data".into(),
                    })
                }
            };
            let init = match (z0, x0, first_state) {
                (Some(z), _, _) => InitialCondition::Reduced(z),
                (None, Some(x), _) | (None, None, Some(x)) => InitialCondition::Full(x),
                (None, None, None) => InitialCondition::Zero,
            };
            let sim = cmd_simulate(&model, &inputs, &init, &output)?;
            println!("simulated {} steps into {}", sim.y.len(), output.display());
        }
        Command::Evaluate { run, model, data } => {
            let cfg = load_config(&run)?;
            let o = &cfg.outputs;
            let model = model.unwrap_or_else(|| o.resolve(&run.out, &o.model));
            let data = data.unwrap_or_else(|| o.resolve(&run.out, &o.validation));
            let paths: ReportPaths = cfg.report_paths(&run.out);
            let report = cmd_evaluate(&model, &data, &paths)?;
            print!("{report}");
        }
        Command::Pipeline(args) => {
            let summary = cmd_pipeline(&load_config(&args)?, &args.out)?;
            println!("J1 = {:e}, LPV loss = {:e}", summary.projection.j1, summary.lpv.loss);
            print!("{}", summary.report);
        }
    }
    Ok(())
}

fn read_inputs(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    io::require(path, "input CSV")?;
    io::read_inputs(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
