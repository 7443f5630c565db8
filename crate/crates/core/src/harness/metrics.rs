use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::agents::MetricsRow;
use crate::analysis::num;

pub const METRICS_COLUMNS: [&str; 11] = [
    "num_steps",
    "train_episode_rewards_mean",
    "test_episode_rewards_mean",
    "policy_loss",
    "value_loss",
    "c_pi",
    "c_v",
    "dynamics_loss",
    "entropy",
    "predicted_init_value",
    "empirical_init_return",
];

pub fn metrics_header() -> String {
    METRICS_COLUMNS.join(",")
}

pub fn metrics_line(row: &MetricsRow) -> String {
    let values = [
        row.train_episode_rewards_mean,
        row.test_episode_rewards_mean,
        row.policy_loss,
        row.value_loss,
        row.c_pi,
        row.c_v,
        row.dynamics_loss,
        row.entropy,
        row.predicted_init_value,
        row.empirical_init_return,
    ];
    let mut line = row.num_steps.to_string();
    for v in values {
        line.push(',');
        line.push_str(&num(v));
    }
    line
}

/// Appends one flushed line per rollout.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    /// Starts a new file holding only the header.
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", metrics_header())?;
        out.flush()?;
        Ok(Self { out })
    }

    /// Keeps the header and the first `rows` data lines of an existing file
    /// and continues after them.
    pub fn resume(path: &Path, rows: usize) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(metrics_header().as_str()) {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "metrics header does not match"));
        }
        let kept: Vec<&str> = lines.take(rows).collect();
        if kept.len() != rows {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("metrics file has {} rows, checkpoint expects {rows}", kept.len()),
            ));
        }
        let mut body = metrics_header();
        body.push('\n');
        for l in kept {
            body.push_str(l);
            body.push('\n');
        }
        fs::write(path, body)?;
        Ok(Self {
            out: BufWriter::new(OpenOptions::new().append(true).open(path)?),
        })
    }

    pub fn write(&mut self, row: &MetricsRow) -> io::Result<()> {
        writeln!(self.out, "{}", metrics_line(row))?;
        self.out.flush()
    }
}
