use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Final returns of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub algorithm: String,
    /// Environment family the run trained on.
    pub env: String,
    pub seed: u64,
    pub train_return: f64,
    pub test_return: f64,
}

/// Aggregates of one algorithm over environments and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub algorithm: String,
    pub runs: usize,
    pub train_return_mean: f64,
    pub test_return_mean: f64,
    /// `100 * mean(variant) / mean(baseline)` per environment, averaged.
    pub ppo_normalized_train: f64,
    pub ppo_normalized_test: f64,
    /// Mean and interquartile mean of min-max normalized test returns (NaN
    /// without bounds).
    pub min_max_mean: f64,
    pub min_max_iqm: f64,
    /// `P(X > Y) + P(X = Y) / 2` of test returns against the baseline.
    pub probability_of_improvement: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub baseline: String,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn row(&self, algorithm: &str) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScoreError {
    #[error("no `{baseline}` runs for environment `{env}` to normalize against")]
    MissingBaseline { baseline: String, env: String },
    #[error("baseline `{baseline}` has zero mean return on `{env}`")]
    ZeroBaseline { baseline: String, env: String },
    #[error("no min-max bounds for environment `{0}`")]
    MissingBounds(String),
    #[error("no runs to aggregate")]
    Empty,
}

pub const BASELINE: &str = "ppo";

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean of the middle half: `floor(n / 4)` values trimmed from each end.
pub fn interquartile_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = v.len() / 4;
    mean(&v[cut..v.len() - cut])
}

/// `P(X > Y) + P(X = Y) / 2` over all pairs `(x, y)`.
pub fn probability_of_improvement(x: &[f64], y: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in x {
        for &b in y {
            wins += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (x.len() * y.len()) as f64
}

/// Scores every algorithm against the PPO baseline. Per-environment `(min,
/// max)` bounds enable the min-max columns. Runs are sorted first, so the
/// result does not depend on input order.
pub fn score_aggregate(
    runs: &[RunScore],
    bounds: Option<&BTreeMap<String, (f64, f64)>>,
) -> Result<ScoreTable, ScoreError> {
    if runs.is_empty() {
        return Err(ScoreError::Empty);
    }
    let mut sorted = runs.to_vec();
    sorted.sort_by(|a, b| {
        (&a.algorithm, &a.env, a.seed)
            .cmp(&(&b.algorithm, &b.env, b.seed))
            .then(a.test_return.total_cmp(&b.test_return))
            .then(a.train_return.total_cmp(&b.train_return))
    });
    // algorithm -> env -> runs
    let mut grid: BTreeMap<&str, BTreeMap<&str, Vec<&RunScore>>> = BTreeMap::new();
    for r in &sorted {
        grid.entry(&r.algorithm).or_default().entry(&r.env).or_default().push(r);
    }
    let baseline = grid.get(BASELINE);
    let mut rows = Vec::new();
    for (&alg, envs) in &grid {
        let mut norm_train = Vec::new();
        let mut norm_test = Vec::new();
        let mut min_max = Vec::new();
        let mut improvement = Vec::new();
        let mut all_train = Vec::new();
        let mut all_test = Vec::new();
        for (&env, rs) in envs {
            let train: Vec<f64> = rs.iter().map(|r| r.train_return).collect();
            let test: Vec<f64> = rs.iter().map(|r| r.test_return).collect();
            let missing = || ScoreError::MissingBaseline {
                baseline: BASELINE.into(),
                env: env.into(),
            };
            let base = baseline.and_then(|b| b.get(env)).ok_or_else(missing)?;
            let base_train: Vec<f64> = base.iter().map(|r| r.train_return).collect();
            let base_test: Vec<f64> = base.iter().map(|r| r.test_return).collect();
            for (xs, bs, out) in [(&train, &base_train, &mut norm_train), (&test, &base_test, &mut norm_test)] {
                let b = mean(bs);
                if b == 0.0 {
                    return Err(ScoreError::ZeroBaseline {
                        baseline: BASELINE.into(),
                        env: env.into(),
                    });
                }
                out.push(100.0 * (mean(xs) / b));
            }
            improvement.push(probability_of_improvement(&test, &base_test));
            if let Some(bounds) = bounds {
                let &(lo, hi) = bounds.get(env).ok_or_else(|| ScoreError::MissingBounds(env.into()))?;
                min_max.extend(test.iter().map(|x| (x - lo) / (hi - lo)));
            }
            all_train.extend(train);
            all_test.extend(test);
        }
        let (mm_mean, mm_iqm) = if min_max.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (mean(&min_max), interquartile_mean(&min_max))
        };
        rows.push(ScoreRow {
            algorithm: alg.into(),
            runs: all_test.len(),
            train_return_mean: mean(&all_train),
            test_return_mean: mean(&all_test),
            ppo_normalized_train: mean(&norm_train),
            ppo_normalized_test: mean(&norm_test),
            min_max_mean: mm_mean,
            min_max_iqm: mm_iqm,
            probability_of_improvement: mean(&improvement),
        });
    }
    Ok(ScoreTable {
        baseline: BASELINE.into(),
        rows,
    })
}
