use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use warpbench::pipeline::{
    run_design_pipeline, run_eval_pipeline, run_train_pipeline, ExperimentConfig, PipelineError, RunOutcome,
};
use warpbench::serve::{serve_http, McpServer, Recommender, ServeConfig, Transport};

#[derive(Parser)]
#[command(
    name = "warpbench",
    version,
    about = "Recommender-system experiments from a TOML config"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `reporting.output`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `tuning.workers`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Tune every model, evaluate the winners and write all artifacts.
    Train(RunArgs),
    /// Train each model once with its fixed parameters.
    Design(RunArgs),
    /// Evaluate saved checkpoints without training.
    Eval(RunArgs),
    /// Serve checkpoints over REST or MCP stdio.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(o) = &args.output {
        cfg.reporting.output = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.tuning.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(outcome: &RunOutcome) -> u8 {
    for f in &outcome.failures {
        eprintln!(
            "failed: {} [{}] {}",
            if f.model.is_empty() { "run" } else { &f.model },
            f.stage,
            f.error
        );
    }
    for (name, r) in &outcome.reports {
        let cells: Vec<String> = r
            .accuracy
            .iter()
            .map(|m| format!("{}={:.4}", m.label(), m.mean))
            .collect();
        println!("{name}\t{}", cells.join("\t"));
    }
    println!("artifacts: {}", outcome.output.display());
    outcome.exit_code() as u8
}

fn serve(config: &Path) -> Result<(), (u8, String)> {
    let cfg = ServeConfig::from_file(config).map_err(|e| (1, e.to_string()))?;
    let core = Arc::new(Recommender::from_config(&cfg).map_err(|e| {
        let code = if matches!(e, warpbench::serve::ServeError::Config(_)) {
            1
        } else {
            2
        };
        (code, e.to_string())
    })?);
    match cfg.transport {
        Transport::Stdio => {
            let server = McpServer::new(core, &cfg.protocol_version);
            let stdin = std::io::stdin().lock();
            server
                .run(stdin, std::io::stdout().lock())
                .map_err(|e| (2, e.to_string()))
        }
        Transport::Http => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| (2, e.to_string()))?;
            rt.block_on(serve_http(core, &cfg.bind)).map_err(|e| (2, e.to_string()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let run = |args: &RunArgs,
               f: fn(
        &ExperimentConfig,
        &[&dyn warpbench::pipeline::PipelineHook],
    ) -> Result<RunOutcome, PipelineError>| {
        match load(args).and_then(|cfg| f(&cfg, &[])) {
            Ok(o) => ExitCode::from(report(&o)),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        }
    };
    match &cli.command {
        Command::Train(a) => run(a, run_train_pipeline),
        Command::Design(a) => run(a, run_design_pipeline),
        Command::Eval(a) => run(a, run_eval_pipeline),
        Command::Serve { config } => match serve(config) {
            Ok(()) => ExitCode::SUCCESS,
            Err((code, msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(code)
            }
        },
    }
}
