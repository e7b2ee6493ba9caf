use std::path::PathBuf;
use std::process::ExitCode;

use basket2vec::cli::{cmd_compare, cmd_eval, cmd_prepare, cmd_train, EvalArgs, PrepareArgs, RunConfig};
use basket2vec::corpus::FileFormat;
use basket2vec::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "basket2vec", version, about = "Item embeddings for basket completion")]
struct Cli {
    /// Worker threads for evaluation (training itself is single-threaded).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a basket file and write its train/test split.
    Prepare {
        dataset: PathBuf,
        #[arg(long, default_value = "whitespace")]
        format: FileFormat,
        #[arg(long)]
        skip_id_column: bool,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; writes checkpoints, a log and a frozen config.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. `--set objective=gan_mixed`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate the models of a run's checkpoint on its test split.
    Eval {
        run_dir: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long)]
        exclude_context: bool,
    },
    /// Tabulate evaluation reports, given as NAME=PATH.
    Compare {
        #[arg(required = true)]
        reports: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> basket2vec::Result<()> {
    match cli.command {
        Command::Prepare {
            dataset,
            format,
            skip_id_column,
            test_fraction,
            seed,
            out,
        } => {
            let summary = cmd_prepare(&PrepareArgs {
                dataset,
                format,
                skip_id_column,
                test_fraction,
                seed,
                out,
            })?;
            print!("{}", summary.to_text());
        }
        Command::Train { config, overrides } => {
            let config = RunConfig::load(config.as_deref(), &overrides)?;
            let summary = cmd_train(&config)?;
            println!("run written to {}", summary.output_dir.display());
            print!("{}", summary.generator.to_text());
            if let Some(d) = &summary.discriminator {
                print!("{}", d.to_text());
            }
        }
        Command::Eval {
            run_dir,
            checkpoint,
            ks,
            exclude_context,
        } => {
            let reports = cmd_eval(&EvalArgs {
                run_dir,
                checkpoint,
                ks,
                exclude_context,
            })?;
            for r in reports {
                print!("{}", r.to_text());
            }
        }
        Command::Compare {
            reports,
            resamples,
            seed,
        } => {
            let pairs = reports
                .iter()
                .map(|s| match s.split_once('=') {
                    Some((name, path)) => Ok((name.to_owned(), PathBuf::from(path))),
                    None => Err(Error::InvalidInput(format!("expected NAME=PATH, got {s:?}"))),
                })
                .collect::<basket2vec::Result<Vec<_>>>()?;
            print!("{}", cmd_compare(&pairs, resamples, seed)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
    {
        log::warn!("thread pool: {e}");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
