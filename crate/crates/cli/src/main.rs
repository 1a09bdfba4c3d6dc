use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dbn_ids_cli::commands::{
    cmd_evaluate, cmd_gradcheck, cmd_preprocess, cmd_sweep, cmd_train, format_gradcheck, gradcheck_verdict, EvalSource, BUNDLE_FILE,
};
use dbn_ids_cli::{CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dbn-ids", version, about = "Deep belief network intrusion detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, merge, split and transform the data; write splits and the pipeline artifact.
    Preprocess(Common),
    /// Balance the training split and train the configured model.
    Train(Common),
    /// Evaluate a trained bundle.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Bundle to load [default: <out>/model.dbnb].
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Preprocessed split to score.
        #[arg(long, default_value = "test", conflicts_with = "input")]
        split: String,
        /// Raw flow CSV to push through the bundle's pipeline instead of a split.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train one model per balancing strategy and compare them.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Strategies to compare [default: the config's sweep list].
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> CliResult<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Preprocess(common) => {
            let (cfg, out) = resolve(&common)?;
            print!("{}", cmd_preprocess(&cfg, &out)?);
        }
        Command::Train(common) => {
            let (cfg, out) = resolve(&common)?;
            let summary = cmd_train(&cfg, &out)?;
            println!("validation:\n{}", summary.validation);
            println!("bundle written to {}", summary.bundle_path.display());
        }
        Command::Evaluate {
            common,
            bundle,
            split,
            input,
        } => {
            let (_, out) = resolve(&common)?;
            let bundle = bundle.unwrap_or_else(|| out.join(BUNDLE_FILE));
            let source = match input {
                Some(path) => EvalSource::RawCsv(path),
                None => EvalSource::Split(split),
            };
            print!("{}", cmd_evaluate(&bundle, &source, &out)?);
        }
        Command::Sweep { common, strategies } => {
            let (cfg, out) = resolve(&common)?;
            let strategies = if strategies.is_empty() {
                cfg.sweep.strategies.clone()
            } else {
                strategies
            };
            print!("{}", cmd_sweep(&cfg, &strategies, &out)?.to_tsv());
        }
        Command::Gradcheck { config, seed, out } => {
            let cfg = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let seed = seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let out = out.or(cfg.map(|c| c.output_dir));
            let cases = cmd_gradcheck(seed, out.as_deref())?;
            print!("{}", format_gradcheck(&cases));
            gradcheck_verdict(&cases)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            e.to_exit_code()
        }
    }
}
