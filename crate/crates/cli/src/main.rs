//! `tripkg` command-line pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::error;
use tripkg::config::{BaselineMethod, PipelineConfig};
use tripkg::evaluation::EvalReport;
use tripkg::pipeline::{synth, Pipeline};
use tripkg::ErrorCategory;

#[derive(Parser, Debug)]
#[command(version, about = "Potential-destination discovery on trip knowledge graphs")]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overrides `paths.output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split trips into windows, profile individuals and select targets.
    Ingest,
    /// Build the trip knowledge graph of the targets.
    BuildGraph,
    /// Train the embedding.
    Train,
    /// Rank each target's unobserved zones.
    Rank,
    /// Evaluate the rankings against the future window.
    Evaluate,
    /// Run and evaluate reference rankers.
    Baseline {
        /// Methods to run; defaults to `baselines.methods` from the config.
        #[arg(long = "method", value_parser = parse_method)]
        methods: Vec<BaselineMethod>,
    },
    /// Generate a synthetic population and a config that runs on it.
    Synth {
        /// Destination directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Every stage in order, then the configured baselines.
    Run,
}

fn parse_method(s: &str) -> Result<BaselineMethod, String> {
    BaselineMethod::parse(s).map_err(|e| e.to_string())
}

fn load_config(cli: &Cli, required: bool) -> Result<PipelineConfig> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None if required => {
            return Err(tripkg::Error::Config("--config is required for this command".into()).into());
        }
        None => PipelineConfig::default(),
    };
    let mut cfg = cfg.with_seed(cli.seed);
    if let Some(dir) = &cli.output_dir {
        cfg.paths.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_reports(reports: &[EvalReport]) {
    println!("method\trho\tD_f\tD_c(k)");
    for r in reports {
        let rho = r.spearman_rho.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"));
        let dc: Vec<String> = r.concentration.iter().map(|(k, v)| format!("{k}:{v:.4}")).collect();
        println!("{}\t{}\t{}\t{}", r.method, rho, r.confusion_degree, dc.join(" "));
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    if let Command::Synth { out } = &cli.command {
        let cfg = load_config(cli, false)?;
        let path = synth(&cfg, &cfg.synth, out)?;
        println!("{}", path.display());
        return Ok(());
    }
    let pipeline = Pipeline::new(load_config(cli, true)?)?;
    match &cli.command {
        Command::Ingest => {
            let s = pipeline.ingest()?;
            println!("{} individuals, {} targets", s.individuals, s.targets);
        }
        Command::BuildGraph => {
            let s = pipeline.build_graph()?;
            println!("{} entities, {} relations, {} triples", s.entities, s.relations, s.triples);
        }
        Command::Train => {
            let s = pipeline.train()?;
            println!("{} epochs, model {}", s.epochs_run, s.model_sha256);
        }
        Command::Rank => {
            let n = pipeline.rank()?;
            println!("{n} individuals ranked");
        }
        Command::Evaluate => print_reports(&pipeline.evaluate()?),
        Command::Baseline { methods } => {
            let methods = if methods.is_empty() {
                pipeline.config().baselines.methods.clone()
            } else {
                methods.clone()
            };
            let reports = methods
                .into_iter()
                .map(|m| pipeline.baseline(m))
                .collect::<tripkg::Result<Vec<_>>>()?;
            print_reports(&reports);
        }
        Command::Run => print_reports(&pipeline.run_all()?),
        Command::Synth { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<tripkg::Error>().map(tripkg::Error::category) {
        Some(ErrorCategory::Config) => 2,
        Some(ErrorCategory::Data) => 3,
        Some(ErrorCategory::Runtime) | None => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            error!("{err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
