use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcpg_core::agents::{Algorithm, Trainer};
use dcpg_core::analysis::{stiffness_csv, stiffness_sweep, value_bias_csv, DESK_LEVEL_COUNTS};
use dcpg_core::harness::run::{parse_value_bias, VALUE_BIAS_FILE};
use dcpg_core::harness::suite::DESK_VALUE_BIAS_EPISODES;
use dcpg_core::harness::{
    evaluate, resume, run, run_suite, Preset, RunError, Split, SuiteSpec, TrainConfig,
    DEFAULT_EVAL_EPISODES, EXIT_INVALID_CONFIG,
};

#[derive(Parser)]
#[command(name = "dcpg", version, about = "Train and analyze PPO, PPG, DCPG and DDCPG agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file, or the name of a preset.
    #[arg(long)]
    config: Option<String>,
    /// Preset the config file is applied on top of.
    #[arg(long, default_value = "desk")]
    preset: Preset,
    /// Algorithm, e.g. ppo, ppg, dcpg, ddcpg.
    #[arg(long)]
    algo: Option<Algorithm>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Environment-step budget.
    #[arg(long)]
    total_steps: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on the train or test levels.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value_t = DEFAULT_EVAL_EPISODES)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the result as JSON here as well as printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of algorithms and seeds and aggregate their scores.
    Suite {
        /// Suite file with a `[suite]` section.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Value-network stiffness against the number of training levels.
    AnalyzeStiffness {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated, strictly ascending level counts.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
    /// Predicted against empirical initial-state value over training.
    AnalyzeValueBias {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DESK_VALUE_BIAS_EPISODES)]
        episodes: u32,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(e) => e.exit_code() as u8,
            CliError::Io { .. } => 1,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Preset, then config file, then `DCPG_*` environment, then flags.
fn load_config(args: &ConfigArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &args.config {
        Some(c) if !Path::new(c).exists() && c.parse::<Preset>().is_ok() => {
            TrainConfig::preset(c.parse().expect("checked"))
        }
        Some(c) => TrainConfig::parse_onto(&TrainConfig::preset(args.preset), &read(Path::new(c))?)
            .map_err(RunError::from)?,
        None => TrainConfig::preset(args.preset),
    };
    cfg = cfg.apply_overrides(std::env::vars()).map_err(RunError::from)?;
    if let Some(a) = args.algo {
        cfg.run.algorithm = a;
    }
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = args.total_steps {
        cfg.run.total_steps = t;
    }
    cfg.validate().map_err(RunError::from)?;
    Ok(cfg)
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, out, resume: from } => {
            let record = match from {
                Some(ckpt) => resume(&ckpt, &out)?,
                None => run(&load_config(&config)?, &out)?,
            };
            println!("{} rollouts, metrics in {}", record.rollouts, record.metrics_path.display());
        }
        Command::Evaluate {
            checkpoint,
            split,
            episodes,
            seed,
            out,
        } => {
            let bytes = fs::read(&checkpoint).map_err(|source| CliError::Io {
                path: checkpoint.clone(),
                source,
            })?;
            let trainer = Trainer::from_checkpoint(&bytes).map_err(RunError::from)?;
            let result = evaluate(&trainer, split, episodes, seed).map_err(RunError::from)?;
            println!("{split:?} mean {:.4} std {:.4} over {} episodes", result.mean, result.std, result.episodes);
            if let Some(path) = out {
                write(&path, &serde_json::to_string_pretty(&result).expect("result serializes"))?;
            }
        }
        Command::Suite {
            config,
            out,
            parallelism,
        } => {
            let spec = SuiteSpec::parse(&read(&config)?).map_err(RunError::from)?;
            let outcome = run_suite(&spec, &out, parallelism)?;
            println!("{} cells run, {} reused", outcome.executed, outcome.skipped);
            if let Some(table) = &outcome.table {
                for row in &table.rows {
                    println!(
                        "{:<10} test {:>8.3}  ppo-normalized {:>7.2}%",
                        row.algorithm, row.test_return_mean, row.ppo_normalized_test
                    );
                }
            }
            for f in &outcome.failures {
                eprintln!("failed: {}: {}", f.cell, f.error);
            }
        }
        Command::AnalyzeStiffness { config, out, levels } => {
            let cfg = load_config(&config)?;
            let levels = levels.unwrap_or_else(|| DESK_LEVEL_COUNTS.to_vec());
            let reports = stiffness_sweep(&cfg, cfg.run.algorithm, &levels).map_err(RunError::from)?;
            let csv = stiffness_csv(&reports);
            write(&out.join("stiffness.csv"), &csv)?;
            print!("{csv}");
        }
        Command::AnalyzeValueBias { config, out, episodes } => {
            let mut cfg = load_config(&config)?;
            cfg.run.value_bias_episodes = episodes;
            run(&cfg, &out)?;
            let points = parse_value_bias(&read(&out.join(VALUE_BIAS_FILE))?);
            print!("{}", value_bias_csv(&points));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
