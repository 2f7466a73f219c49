use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heartformer::cli::{run_command, RunConfig};

/// Point cloud completion of cardiac anatomy from sparse slice contours.
#[derive(Parser)]
#[command(name = "heartformer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `key = value` settings file; `run.txt` of an earlier run works too.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = automatic).
    #[arg(long)]
    threads: Option<usize>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset split.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of records.
        #[arg(long)]
        n: Option<usize>,
        /// Misalignment level, `uniform`, or five weights.
        #[arg(long)]
        levels: Option<String>,
    },
    /// Train a model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train_data: Option<String>,
        #[arg(long)]
        val_data: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<String>,
    },
    /// Complete one sparse cloud.
    Complete {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<String>,
        /// Sparse input (.lpc or .ply).
        #[arg(long)]
        input: Option<String>,
        /// Also write a PLY file.
        #[arg(long)]
        ply: bool,
    },
    /// Score predictions against ground truth, per misalignment level.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<String>,
        /// Comma-separated dataset directories.
        #[arg(long)]
        data: Option<String>,
        /// model, replicate or gt.
        #[arg(long)]
        predictor: Option<String>,
    },
}

fn put<T: ToString>(flags: &mut BTreeMap<String, String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        flags.insert(key.to_string(), v.to_string());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut flags = BTreeMap::new();
    let (name, common) = match cli.command {
        Command::Generate { common, n, levels } => {
            put(&mut flags, "gen.n", n);
            put(&mut flags, "gen.levels", levels);
            ("generate", common)
        }
        Command::Train {
            common,
            train_data,
            val_data,
            epochs,
            resume,
        } => {
            put(&mut flags, "data.train", train_data);
            put(&mut flags, "data.val", val_data);
            put(&mut flags, "train.epochs", epochs);
            put(&mut flags, "resume", resume);
            ("train", common)
        }
        Command::Complete {
            common,
            checkpoint,
            input,
            ply,
        } => {
            put(&mut flags, "checkpoint", checkpoint);
            put(&mut flags, "input", input);
            put(&mut flags, "ply", ply.then_some(true));
            ("complete", common)
        }
        Command::Evaluate {
            common,
            checkpoint,
            data,
            predictor,
        } => {
            put(&mut flags, "checkpoint", checkpoint);
            put(&mut flags, "data", data);
            put(&mut flags, "predictor", predictor);
            ("evaluate", common)
        }
    };
    put(&mut flags, "seed", common.seed);
    put(&mut flags, "threads", common.threads);
    for kv in &common.set {
        match kv.split_once('=') {
            Some((k, v)) => {
                flags.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                eprintln!("error: --set expects KEY=VALUE, got {kv:?}");
                return ExitCode::from(2);
            }
        }
    }
    let result = RunConfig::resolve(common.config.as_deref(), &flags)
        .and_then(|mut config| run_command(name, &mut config, &common.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
