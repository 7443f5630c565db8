use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{Algorithm, Trainer};
use crate::analysis::{
    score_aggregate, scores_csv, stiffness_csv, stiffness_sweep, value_bias_csv, RunScore,
    ScoreTable, StiffnessReport, ValueBiasPoint, DESK_STIFFNESS_BATCH,
};
use crate::envsuite::Family;

use super::config::{ConfigError, Preset, TrainConfig};
use super::evaluate::{evaluate, EvalResult, Split};
use super::run::{parse_value_bias, run, RunError, RunRecord, RunStatus, FINAL_CHECKPOINT, VALUE_BIAS_FILE};

pub const WARNINGS_FILE: &str = "warnings.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const EVAL_FILE: &str = "eval.json";
/// Episodes per value-bias probe when a suite requests the probe.
pub const DESK_VALUE_BIAS_EPISODES: u32 = 20;

/// Grid of (algorithm, seed) cells plus the analyses to run on them.
///
/// The file uses the config format. A `[suite]` section holds `preset`,
/// `algorithms`, `seeds`, and optionally `stiffness_levels`,
/// `stiffness_algorithms` and `value_bias`; every other section overrides
/// the base config of each cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteSpec {
    pub base: TrainConfig,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub stiffness_levels: Vec<usize>,
    pub stiffness_algorithms: Vec<Algorithm>,
    pub value_bias: Vec<Algorithm>,
}

fn list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|e: T::Err| ConfigError::BadValue {
                origin: format!("line {line}"),
                field: format!("suite.{key}"),
                value: s.to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

impl SuiteSpec {
    pub fn parse(text: &str) -> Result<SuiteSpec, ConfigError> {
        let mut preset = Preset::Desk;
        let mut algorithms = Vec::new();
        let mut seeds = Vec::new();
        let mut stiffness_levels = Vec::new();
        let mut stiffness_algorithms = Vec::new();
        let mut value_bias = Vec::new();
        let mut rest = String::new();
        let mut in_suite = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.starts_with('[') {
                in_suite = line == "[suite]";
            }
            if !in_suite {
                rest.push_str(raw);
                rest.push('\n');
                continue;
            }
            rest.push('\n');
            if line.is_empty() || line == "[suite]" {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "preset" => {
                    preset = value.parse().map_err(|message| ConfigError::BadValue {
                        origin: format!("line {line_no}"),
                        field: "suite.preset".into(),
                        value: value.into(),
                        message,
                    })?
                }
                "algorithms" => algorithms = list(line_no, key, value)?,
                "seeds" => seeds = list(line_no, key, value)?,
                "stiffness_levels" => stiffness_levels = list(line_no, key, value)?,
                "stiffness_algorithms" => stiffness_algorithms = list(line_no, key, value)?,
                "value_bias" => value_bias = list(line_no, key, value)?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line: line_no,
                        section: "suite".into(),
                        key: key.into(),
                    })
                }
            }
        }
        let base = TrainConfig::parse_onto(&TrainConfig::preset(preset), &rest)?;
        if algorithms.is_empty() || seeds.is_empty() {
            return Err(ConfigError::Invalid {
                field: "suite".into(),
                message: "needs at least one algorithm and one seed".into(),
            });
        }
        Ok(SuiteSpec {
            base,
            algorithms,
            seeds,
            stiffness_levels,
            stiffness_algorithms,
            value_bias,
        })
    }

    /// Config of one cell.
    pub fn cell_config(&self, algorithm: Algorithm, seed: u64) -> TrainConfig {
        let mut cfg = self.base.clone();
        cfg.run.algorithm = algorithm;
        cfg.run.seed = seed;
        if self.value_bias.contains(&algorithm) && cfg.run.value_bias_episodes == 0 {
            cfg.run.value_bias_episodes = DESK_VALUE_BIAS_EPISODES;
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutcome {
    pub table: Option<ScoreTable>,
    pub executed: usize,
    pub skipped: usize,
    pub failures: Vec<CellFailure>,
    pub stiffness: BTreeMap<Algorithm, Vec<StiffnessReport>>,
}

#[derive(Serialize, Deserialize)]
struct CellEval {
    config_hash: String,
    train: EvalResult,
    test: EvalResult,
}

#[derive(Serialize, Deserialize)]
struct SweepCache {
    hash: String,
    reports: Vec<StiffnessReport>,
}

fn cell_name(algorithm: Algorithm, seed: u64) -> String {
    format!("{algorithm}_seed{seed}")
}

fn family_name(f: Family) -> &'static str {
    f.as_str()
}

/// Runs `f` over `items` on up to `workers` threads, preserving order.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every item ran")).collect()
}

enum CellResult {
    Done { score: RunScore, executed: bool },
    Failed(CellFailure),
}

fn run_cell(spec: &SuiteSpec, out: &Path, algorithm: Algorithm, seed: u64) -> CellResult {
    let cfg = spec.cell_config(algorithm, seed);
    let name = cell_name(algorithm, seed);
    let dir = out.join("cells").join(&name);
    let hash = cfg.hash();
    let eval_path = dir.join(EVAL_FILE);
    let cached = RunRecord::load(&dir)
        .filter(|r| r.status == RunStatus::Completed && r.config_hash == hash)
        .and_then(|_| fs::read_to_string(&eval_path).ok())
        .and_then(|t| serde_json::from_str::<CellEval>(&t).ok())
        .filter(|e| e.config_hash == hash);
    let score = |e: &CellEval| RunScore {
        algorithm: algorithm.to_string(),
        env: family_name(cfg.env.family).into(),
        seed,
        train_return: e.train.mean,
        test_return: e.test.mean,
    };
    if let Some(e) = cached {
        return CellResult::Done {
            score: score(&e),
            executed: false,
        };
    }
    let attempt = || -> Result<CellEval, RunError> {
        run(&cfg, &dir)?;
        let bytes = fs::read(dir.join(FINAL_CHECKPOINT)).map_err(|source| RunError::Io {
            path: dir.join(FINAL_CHECKPOINT),
            source,
        })?;
        let trainer = Trainer::from_checkpoint(&bytes)?;
        let episodes = cfg.run.eval_episodes as usize;
        let e = CellEval {
            config_hash: hash.clone(),
            train: evaluate(&trainer, Split::Train, episodes, seed)?,
            test: evaluate(&trainer, Split::Test, episodes, seed)?,
        };
        fs::write(&eval_path, serde_json::to_string_pretty(&e).expect("eval serializes"))
            .map_err(|source| RunError::Io {
                path: eval_path.clone(),
                source,
            })?;
        Ok(e)
    };
    match attempt() {
        Ok(e) => CellResult::Done {
            score: score(&e),
            executed: true,
        },
        Err(e) => CellResult::Failed(CellFailure {
            cell: name,
            error: e.to_string(),
        }),
    }
}

fn sweep_hash(spec: &SuiteSpec, algorithm: Algorithm) -> String {
    let mut h = Sha256::new();
    h.update(spec.base.hash());
    h.update(algorithm.as_str());
    for n in &spec.stiffness_levels {
        h.update(n.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn mean_value_bias(series: &[Vec<ValueBiasPoint>]) -> Vec<ValueBiasPoint> {
    let mut by_step: BTreeMap<u64, Vec<&ValueBiasPoint>> = BTreeMap::new();
    for s in series {
        for p in s {
            by_step.entry(p.num_steps).or_default().push(p);
        }
    }
    by_step
        .into_iter()
        .map(|(num_steps, ps)| {
            let n = ps.len() as f64;
            ValueBiasPoint {
                num_steps,
                true_value_mean: ps.iter().map(|p| p.true_value_mean).sum::<f64>() / n,
                predicted_value_mean: ps.iter().map(|p| p.predicted_value_mean).sum::<f64>() / n,
                episodes: ps.iter().map(|p| p.episodes).sum(),
            }
        })
        .collect()
}

fn read_value_bias(path: &Path) -> Vec<ValueBiasPoint> {
    fs::read_to_string(path).map(|t| parse_value_bias(&t)).unwrap_or_default()
}

/// Runs every cell (skipping those already complete with a matching config
/// hash), scores them, and writes the analysis CSVs under `out`.
pub fn run_suite(spec: &SuiteSpec, out: &Path, parallelism: usize) -> Result<SuiteOutcome, RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let cells: Vec<(Algorithm, u64)> = spec
        .algorithms
        .iter()
        .flat_map(|&a| spec.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = parallel_map(&cells, parallelism, |&(a, s)| run_cell(spec, out, a, s));
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    let (mut executed, mut skipped) = (0, 0);
    for r in results {
        match r {
            CellResult::Done { score, executed: ran } => {
                if ran {
                    executed += 1;
                } else {
                    skipped += 1;
                }
                scores.push(score);
            }
            CellResult::Failed(f) => failures.push(f),
        }
    }

    let table = match score_aggregate(&scores, Some(&default_bounds())) {
        Ok(t) => {
            let path = out.join(SCORES_FILE);
            fs::write(&path, scores_csv(&t)).map_err(io(&path))?;
            Some(t)
        }
        Err(e) => {
            failures.push(CellFailure {
                cell: "scores".into(),
                error: e.to_string(),
            });
            None
        }
    };

    let analysis = out.join("analysis");
    for &alg in &spec.value_bias {
        let series: Vec<Vec<ValueBiasPoint>> = spec
            .seeds
            .iter()
            .map(|&s| read_value_bias(&out.join("cells").join(cell_name(alg, s)).join(VALUE_BIAS_FILE)))
            .filter(|s| !s.is_empty())
            .collect();
        if series.is_empty() {
            continue;
        }
        let dir = analysis.join(alg.as_str());
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let path = dir.join(VALUE_BIAS_FILE);
        fs::write(&path, value_bias_csv(&mean_value_bias(&series))).map_err(io(&path))?;
    }

    let mut stiffness = BTreeMap::new();
    if !spec.stiffness_levels.is_empty() {
        let sweeps = parallel_map(&spec.stiffness_algorithms, parallelism, |&alg| {
            let dir = analysis.join(alg.as_str());
            let cache_path = dir.join("stiffness.json");
            let hash = sweep_hash(spec, alg);
            if let Some(c) = fs::read_to_string(&cache_path)
                .ok()
                .and_then(|t| serde_json::from_str::<SweepCache>(&t).ok())
                .filter(|c| c.hash == hash)
            {
                return Ok((alg, c.reports));
            }
            let mut base = spec.base.clone();
            if base.run.stiffness_batch == 0 {
                base.run.stiffness_batch = DESK_STIFFNESS_BATCH;
            }
            let reports = stiffness_sweep(&base, alg, &spec.stiffness_levels).map_err(|e| (alg, e.to_string()))?;
            let _ = fs::create_dir_all(&dir);
            let _ = fs::write(dir.join("stiffness.csv"), stiffness_csv(&reports));
            let cache = SweepCache {
                hash,
                reports: reports.clone(),
            };
            let _ = fs::write(&cache_path, serde_json::to_string_pretty(&cache).expect("cache serializes"));
            Ok((alg, reports))
        });
        for s in sweeps {
            match s {
                Ok((alg, reports)) => {
                    stiffness.insert(alg, reports);
                }
                Err((alg, error)) => failures.push(CellFailure {
                    cell: format!("stiffness_{alg}"),
                    error,
                }),
            }
        }
    }

    let warnings = out.join(WARNINGS_FILE);
    if failures.is_empty() {
        let _ = fs::remove_file(&warnings);
    } else {
        fs::write(&warnings, serde_json::to_string_pretty(&failures).expect("failures serialize"))
            .map_err(io(&warnings))?;
    }
    Ok(SuiteOutcome {
        table,
        executed,
        skipped,
        failures,
        stiffness,
    })
}

/// Min-max bounds of each family's undiscounted return.
pub fn default_bounds() -> BTreeMap<String, (f64, f64)> {
    BTreeMap::from([
        (Family::ChainWalk.as_str().to_string(), (0.0, 1.0)),
        (Family::PaletteGrid.as_str().to_string(), (0.0, 10.0)),
    ])
}

/// Cells of a suite directory, for inspection.
pub fn cell_dir(out: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    out.join("cells").join(cell_name(algorithm, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = "\
[suite]
preset = desk
algorithms = ppo, dcpg
seeds = 0, 1
value_bias = dcpg

[env]
family = chain_walk
chain_length = 2
n_envs = 2
n_test_envs = 2
[ppo]
rollout_steps = 8
minibatches = 2
[phasic]
n_pi = 2
e_aux = 1
aux_minibatches = 2
[network]
encoder_hidden = 8
[run]
total_steps = 32
eval_episodes = 3
";

    #[test]
    fn parse_spec() {
        let s = SuiteSpec::parse(SPEC).unwrap();
        assert_eq!(s.algorithms, vec![Algorithm::Ppo, Algorithm::Dcpg]);
        assert_eq!(s.seeds, vec![0, 1]);
        assert_eq!(s.base.env.family, Family::ChainWalk);
        assert_eq!(s.cell_config(Algorithm::Dcpg, 1).run.value_bias_episodes, DESK_VALUE_BIAS_EPISODES);
        assert_eq!(s.cell_config(Algorithm::Ppo, 1).run.value_bias_episodes, 0);
        let bad = SPEC.replace("seeds = 0, 1", "seeds = 0, x");
        assert!(matches!(SuiteSpec::parse(&bad), Err(ConfigError::BadValue { .. })));
        let unknown = SPEC.replace("value_bias", "valu_bias");
        assert!(matches!(SuiteSpec::parse(&unknown), Err(ConfigError::UnknownKey { line: 5, .. })));
    }

    #[test]
    fn suite_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SuiteSpec::parse(SPEC).unwrap();
        let first = run_suite(&spec, dir.path(), 2).unwrap();
        assert_eq!((first.executed, first.skipped), (4, 0));
        assert!(first.failures.is_empty(), "{:?}", first.failures);
        let table = first.table.unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.row("ppo").unwrap().ppo_normalized_test, 100.0);
        assert!(dir.path().join("analysis/dcpg/value_bias.csv").exists());
        let csv = fs::read_to_string(dir.path().join(SCORES_FILE)).unwrap();
        let second = run_suite(&spec, dir.path(), 2).unwrap();
        assert_eq!((second.executed, second.skipped), (0, 4));
        assert_eq!(fs::read_to_string(dir.path().join(SCORES_FILE)).unwrap(), csv);
    }

    #[test]
    fn partial_failures_produce_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SuiteSpec::parse(SPEC).unwrap();
        // A file where a cell directory should be makes that cell fail.
        fs::create_dir_all(dir.path().join("cells")).unwrap();
        fs::write(cell_dir(dir.path(), Algorithm::Dcpg, 1), "x").unwrap();
        let out = run_suite(&spec, dir.path(), 1).unwrap();
        assert_eq!(out.failures.len(), 1, "{:?}", out.failures);
        assert!(out.failures[0].error.contains("exists"));
        assert_eq!(out.failures[0].cell, "dcpg_seed1");
        assert_eq!(out.table.unwrap().row("dcpg").unwrap().runs, 1);
        let manifest = fs::read_to_string(dir.path().join(WARNINGS_FILE)).unwrap();
        assert!(manifest.contains("dcpg_seed1"));
    }
}
