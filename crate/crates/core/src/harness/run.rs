use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agents::{TrainError, Trainer};
use crate::analysis::{num, value_bias_csv, value_bias_probe, ValueBiasPoint};

use super::config::{ConfigError, TrainConfig};
use super::metrics::MetricsWriter;

pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

pub const METRICS_FILE: &str = "metrics.csv";
pub const RECORD_FILE: &str = "run.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const VALUE_BIAS_FILE: &str = "value_bias.csv";
pub const STIFFNESS_TRACE_FILE: &str = "stiffness_trace.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: String,
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: RunStatus,
    pub rollouts: u64,
    pub metrics_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

impl RunRecord {
    pub fn load(out_dir: &Path) -> Option<RunRecord> {
        let text = fs::read_to_string(out_dir.join(RECORD_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Train(TrainError::Config(_)) => EXIT_INVALID_CONFIG,
            RunError::Train(TrainError::Divergence { .. }) => EXIT_DIVERGED,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), RunError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Trains `cfg` from scratch into `out_dir`.
pub fn run(cfg: &TrainConfig, out_dir: &Path) -> Result<RunRecord, RunError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let trainer = Trainer::new(cfg.clone())?;
    let metrics = out_dir.join(METRICS_FILE);
    let writer = MetricsWriter::create(&metrics).map_err(io_err(&metrics))?;
    drive(trainer, writer, Vec::new(), out_dir)
}

/// Continues a run from `checkpoint`, keeping the metrics rows written
/// before it was taken.
pub fn resume(checkpoint: &Path, out_dir: &Path) -> Result<RunRecord, RunError> {
    let bytes = fs::read(checkpoint).map_err(io_err(checkpoint))?;
    let trainer = Trainer::from_checkpoint(&bytes)?;
    let metrics = out_dir.join(METRICS_FILE);
    let writer = MetricsWriter::resume(&metrics, trainer.rollouts_done() as usize).map_err(io_err(&metrics))?;
    let bias_path = out_dir.join(VALUE_BIAS_FILE);
    let bias = match fs::read_to_string(&bias_path) {
        Ok(text) => parse_value_bias(&text)
            .into_iter()
            .filter(|p| p.num_steps <= trainer.num_steps())
            .collect(),
        Err(_) => Vec::new(),
    };
    drive(trainer, writer, bias, out_dir)
}

/// Reads the rows of a value-bias CSV; `episodes` is not stored and reads as 0.
pub fn parse_value_bias(text: &str) -> Vec<ValueBiasPoint> {
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let mut f = l.split(',');
            Some(ValueBiasPoint {
                num_steps: f.next()?.parse().ok()?,
                true_value_mean: f.next()?.parse().ok()?,
                predicted_value_mean: f.next()?.parse().ok()?,
                episodes: 0,
            })
        })
        .collect()
}

fn checkpoint_path(out_dir: &Path, rollout: u64) -> PathBuf {
    out_dir.join("checkpoints").join(format!("rollout_{rollout:06}.ckpt"))
}

fn drive(
    mut trainer: Trainer,
    mut writer: MetricsWriter,
    mut bias: Vec<ValueBiasPoint>,
    out_dir: &Path,
) -> Result<RunRecord, RunError> {
    let cfg = trainer.config().clone();
    write(&out_dir.join(CONFIG_FILE), cfg.to_text())?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let mut record = RunRecord {
        config: cfg.to_text(),
        config_hash: cfg.hash(),
        started_unix: now(),
        finished_unix: None,
        status: RunStatus::Running,
        rollouts: trainer.rollouts_done(),
        metrics_path: metrics_path.clone(),
        checkpoints: Vec::new(),
    };
    let record_path = out_dir.join(RECORD_FILE);
    let save_record = |r: &RunRecord| write(&record_path, serde_json::to_string_pretty(r).expect("record serializes"));
    save_record(&record)?;
    let bias_interval = match cfg.run.value_bias_interval {
        0 => cfg.phasic.n_pi as u64,
        n => n,
    };
    while !trainer.is_finished() {
        let row = match trainer.step_rollout() {
            Ok(row) => row,
            Err(e) => {
                record.status = RunStatus::Diverged;
                record.rollouts = trainer.rollouts_done();
                record.finished_unix = Some(now());
                save_record(&record)?;
                return Err(e.into());
            }
        };
        writer.write(&row).map_err(io_err(&metrics_path))?;
        let done = trainer.rollouts_done();
        if cfg.run.value_bias_episodes > 0 && done % bias_interval == 0 {
            bias.push(value_bias_probe(&trainer, cfg.run.value_bias_episodes as usize).map_err(TrainError::from)?);
            write(&out_dir.join(VALUE_BIAS_FILE), value_bias_csv(&bias))?;
        }
        if cfg.run.checkpoint_interval > 0 && done % cfg.run.checkpoint_interval == 0 {
            let path = checkpoint_path(out_dir, done);
            let dir = path.parent().unwrap();
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            write(&path, trainer.save_checkpoint())?;
            record.checkpoints.push(path);
        }
        record.rollouts = done;
    }
    let final_path = out_dir.join(FINAL_CHECKPOINT);
    write(&final_path, trainer.save_checkpoint())?;
    record.checkpoints.push(final_path);
    if cfg.run.stiffness_batch > 0 {
        let mut trace = String::from("num_steps,mean_stiffness,pairs\n");
        for s in trainer.stiffness_samples() {
            trace.push_str(&format!("{},{},{}\n", s.num_steps, num(s.stiffness.mean), s.stiffness.pairs));
        }
        write(&out_dir.join(STIFFNESS_TRACE_FILE), trace)?;
    }
    record.status = RunStatus::Completed;
    record.finished_unix = Some(now());
    save_record(&record)?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Algorithm;
    use crate::envsuite::Family;
    use crate::harness::config::Preset;

    fn tiny() -> TrainConfig {
        let mut c = TrainConfig::preset(Preset::Desk);
        c.run.algorithm = Algorithm::Dcpg;
        c.env.family = Family::ChainWalk;
        c.env.n_envs = 2;
        c.env.n_test_envs = 2;
        c.ppo.rollout_steps = 8;
        c.ppo.minibatches = 2;
        c.phasic.n_pi = 2;
        c.phasic.e_aux = 1;
        c.phasic.aux_minibatches = 2;
        c.network.encoder_hidden = vec![8];
        c.run.total_steps = 16 * 4;
        c
    }

    #[test]
    fn zero_steps_gives_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.run.total_steps = 0;
        let rec = run(&c, dir.path()).unwrap();
        assert_eq!(rec.status, RunStatus::Completed);
        let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(RunRecord::load(dir.path()).unwrap().config_hash, c.hash());
    }

    #[test]
    fn value_bias_and_checkpoints_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.run.value_bias_episodes = 2;
        c.run.checkpoint_interval = 2;
        let rec = run(&c, dir.path()).unwrap();
        assert_eq!(rec.checkpoints.len(), 3);
        let bias = fs::read_to_string(dir.path().join(VALUE_BIAS_FILE)).unwrap();
        assert_eq!(parse_value_bias(&bias).len(), 2);
    }

    #[test]
    fn divergence_maps_to_exit_code() {
        let e = RunError::Train(TrainError::Divergence {
            rollout: 3,
            detail: "x".into(),
        });
        assert_eq!(e.exit_code(), EXIT_DIVERGED);
        let e = RunError::Config(ConfigError::Invalid {
            field: "ppo.gamma".into(),
            message: "x".into(),
        });
        assert_eq!(e.exit_code(), EXIT_INVALID_CONFIG);
    }
}
