//! Run configuration: flat `key = value` text grouped under `[section]`
//! headers, `#` comments, presets, environment overrides and hashing.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::agents::Algorithm;
use crate::diffnet::Activation;
use crate::envsuite::{EnvParams, Family, LevelSplit};

/// Prefix for environment variable overrides: `DCPG_<SECTION>_<KEY>`.
pub const ENV_PREFIX: &str = "DCPG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub total_steps: u64,
    /// Rollouts between checkpoints; 0 keeps only the final one.
    pub checkpoint_interval: u64,
    pub eval_episodes: u32,
    /// States per stiffness measurement; 0 disables the measurement.
    pub stiffness_batch: usize,
    /// Rollouts between stiffness measurements; 0 means once per phase cycle.
    pub stiffness_interval: u64,
    /// Episodes per value-bias probe; 0 disables the probe.
    pub value_bias_episodes: u32,
    /// Rollouts between value-bias probes; 0 means once per phase cycle.
    pub value_bias_interval: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub family: Family,
    pub n_envs: usize,
    pub n_test_envs: usize,
    pub n_train_levels: usize,
    pub n_test_levels: usize,
    pub test_level_offset: u64,
    pub grid_size: usize,
    pub layout_pool: usize,
    pub time_limit: u32,
    pub goal_reward: f32,
    pub chain_length: usize,
    pub chain_time_limit: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoSection {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub rollout_steps: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub clip_eps: f64,
    pub value_coef: f64,
    pub reward_norm: bool,
    pub learning_rate: f64,
    pub adam_eps: f64,
    /// Global gradient norm cap per optimizer group; 0 disables clipping.
    pub max_grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasicSection {
    pub n_pi: usize,
    pub e_pi: usize,
    pub e_v: usize,
    pub e_aux: usize,
    pub beta_pi: f64,
    /// Auxiliary minibatches per epoch for every stored rollout.
    pub aux_minibatches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSection {
    pub beta_v: f64,
    pub beta_f: f64,
    pub eta: f64,
    /// Inverse-term weight when forward and inverse use two discriminators.
    pub eta_fi: f64,
    pub gamma_prime: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub encoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub activation: Activation,
}

/// Every hyperparameter of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub run: RunSection,
    pub env: EnvSection,
    pub ppo: PpoSection,
    pub phasic: PhasicSection,
    pub regularization: RegularizationSection,
    pub network: NetworkSection,
}

const SECTIONS: [&str; 6] = ["run", "env", "ppo", "phasic", "regularization", "network"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" | "desk_preset" => Ok(Preset::Desk),
            "paper" | "paper_preset" => Ok(Preset::Paper),
            other => Err(format!("unknown preset `{other}` (expected desk or paper)")),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{section}.{key}`")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: unknown section `[{section}]`")]
    UnknownSection { line: usize, section: String },
    #[error("{origin}: bad value `{value}` for `{field}`: {message}")]
    BadValue {
        origin: String,
        field: String,
        value: String,
        message: String,
    },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl TrainConfig {
    /// Desk scale runs in minutes on one core; paper scale keeps the
    /// published hyperparameter tables.
    pub fn preset(preset: Preset) -> Self {
        let desk = TrainConfig {
            run: RunSection {
                algorithm: Algorithm::Dcpg,
                seed: 0,
                total_steps: 500_000,
                checkpoint_interval: 0,
                eval_episodes: 100,
                stiffness_batch: 0,
                stiffness_interval: 0,
                value_bias_episodes: 0,
                value_bias_interval: 0,
            },
            env: EnvSection {
                family: Family::PaletteGrid,
                n_envs: 8,
                n_test_envs: 8,
                n_train_levels: 20,
                n_test_levels: 10,
                test_level_offset: 100_000,
                grid_size: 7,
                layout_pool: 8,
                time_limit: 64,
                goal_reward: 10.0,
                chain_length: 8,
                chain_time_limit: 16,
            },
            ppo: PpoSection {
                gamma: 0.999,
                gae_lambda: 0.95,
                rollout_steps: 64,
                epochs: 3,
                minibatches: 8,
                entropy_coef: 0.01,
                clip_eps: 0.2,
                value_coef: 0.5,
                reward_norm: true,
                learning_rate: 5e-4,
                adam_eps: 1e-5,
                max_grad_norm: 0.5,
            },
            phasic: PhasicSection {
                n_pi: 8,
                e_pi: 1,
                e_v: 1,
                e_aux: 6,
                beta_pi: 1.0,
                aux_minibatches: 16,
            },
            regularization: RegularizationSection {
                beta_v: 1.0,
                beta_f: 1.0,
                eta: 0.5,
                eta_fi: 1.0,
                gamma_prime: 0.995,
                alpha: 0.05,
            },
            network: NetworkSection {
                encoder_hidden: vec![64, 64],
                discriminator_hidden: vec![64, 64],
                activation: Activation::Relu,
            },
        };
        match preset {
            Preset::Desk => desk,
            Preset::Paper => {
                let mut c = desk;
                c.run.total_steps = 25_000_000;
                c.env.n_envs = 64;
                c.env.n_test_envs = 64;
                c.env.n_train_levels = 200;
                c.env.n_test_levels = 1000;
                c.ppo.rollout_steps = 256;
                c.phasic.n_pi = 32;
                c.network.encoder_hidden = vec![256, 256];
                c.network.discriminator_hidden = vec![256, 256];
                c
            }
        }
    }

    pub fn env_params(&self) -> EnvParams {
        EnvParams {
            grid_size: self.env.grid_size,
            layout_pool: self.env.layout_pool,
            time_limit: self.env.time_limit,
            goal_reward: self.env.goal_reward,
            chain_length: self.env.chain_length,
            chain_time_limit: self.env.chain_time_limit,
        }
    }

    pub fn level_split(&self) -> LevelSplit {
        LevelSplit::standard(
            self.env.n_train_levels,
            self.env.n_test_levels,
            self.env.test_level_offset,
        )
        .expect("validated config has a disjoint split")
    }

    /// Environment steps per rollout.
    pub fn rollout_size(&self) -> u64 {
        (self.ppo.rollout_steps * self.env.n_envs) as u64
    }

    pub fn total_rollouts(&self) -> u64 {
        self.run.total_steps / self.rollout_size()
    }

    /// Discount used for advantages and value targets.
    pub fn advantage_gamma(&self) -> f64 {
        if self.run.algorithm == Algorithm::PpgDr {
            self.regularization.gamma_prime
        } else {
            self.ppo.gamma
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(field, format!("{v} is outside [0, 1]")))
            }
        };
        let non_negative = |field: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("{v} must be finite and non-negative")))
            }
        };
        let positive = |field: &str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(invalid(field, "must be at least 1"))
            }
        };
        unit("ppo.gamma", self.ppo.gamma)?;
        unit("ppo.gae_lambda", self.ppo.gae_lambda)?;
        unit("regularization.gamma_prime", self.regularization.gamma_prime)?;
        if !(self.ppo.clip_eps > 0.0 && self.ppo.clip_eps.is_finite()) {
            return Err(invalid("ppo.clip_eps", "must be positive"));
        }
        for (f, v) in [
            ("ppo.entropy_coef", self.ppo.entropy_coef),
            ("ppo.value_coef", self.ppo.value_coef),
            ("ppo.learning_rate", self.ppo.learning_rate),
            ("ppo.max_grad_norm", self.ppo.max_grad_norm),
            ("phasic.beta_pi", self.phasic.beta_pi),
            ("regularization.beta_v", self.regularization.beta_v),
            ("regularization.beta_f", self.regularization.beta_f),
            ("regularization.eta", self.regularization.eta),
            ("regularization.eta_fi", self.regularization.eta_fi),
            ("regularization.alpha", self.regularization.alpha),
        ] {
            non_negative(f, v)?;
        }
        if !(self.ppo.adam_eps > 0.0) {
            return Err(invalid("ppo.adam_eps", "must be positive"));
        }
        for (f, v) in [
            ("env.n_envs", self.env.n_envs),
            ("env.n_test_envs", self.env.n_test_envs),
            ("env.n_train_levels", self.env.n_train_levels),
            ("env.layout_pool", self.env.layout_pool),
            ("env.chain_length", self.env.chain_length),
            ("ppo.rollout_steps", self.ppo.rollout_steps),
            ("ppo.epochs", self.ppo.epochs),
            ("ppo.minibatches", self.ppo.minibatches),
            ("phasic.n_pi", self.phasic.n_pi),
            ("phasic.e_pi", self.phasic.e_pi),
            ("phasic.e_v", self.phasic.e_v),
            ("phasic.e_aux", self.phasic.e_aux),
            ("phasic.aux_minibatches", self.phasic.aux_minibatches),
        ] {
            positive(f, v)?;
        }
        if self.env.grid_size < 4 {
            return Err(invalid("env.grid_size", "must be at least 4"));
        }
        if self.env.time_limit == 0 || self.env.chain_time_limit == 0 {
            return Err(invalid("env.time_limit", "time limits must be at least 1"));
        }
        if self.ppo.minibatches > self.rollout_size() as usize {
            return Err(invalid("ppo.minibatches", "more minibatches than samples per rollout"));
        }
        if self.phasic.aux_minibatches > self.rollout_size() as usize {
            return Err(invalid(
                "phasic.aux_minibatches",
                "more minibatches than samples per rollout",
            ));
        }
        if self.run.algorithm.dynamics().is_some() && self.rollout_size() < 2 {
            return Err(invalid("ppo.rollout_steps", "dynamics learning needs two samples"));
        }
        if self.network.encoder_hidden.is_empty() || self.network.encoder_hidden.contains(&0) {
            return Err(invalid("network.encoder_hidden", "needs at least one non-zero layer"));
        }
        if self.network.discriminator_hidden.contains(&0) {
            return Err(invalid("network.discriminator_hidden", "layer widths must be non-zero"));
        }
        let train_end = self.env.n_train_levels as u64;
        if self.env.n_test_levels > 0 && self.env.test_level_offset < train_end {
            return Err(invalid(
                "env.test_level_offset",
                format!("test seeds must start at or after {train_end} to stay disjoint"),
            ));
        }
        Ok(())
    }

    /// Parses config text on top of `base`. Every key must already exist.
    pub fn parse_onto(base: &TrainConfig, text: &str) -> Result<TrainConfig, ConfigError> {
        let mut tree = to_tree(base);
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::UnknownSection {
                        line: line_no,
                        section: name.to_string(),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let (sec, key) = match (key.split_once('.'), &section) {
                (Some((s, k)), _) => (s.to_string(), k.to_string()),
                (None, Some(s)) => (s.clone(), key.to_string()),
                (None, None) => {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        message: format!("key `{key}` appears before any section header"),
                    })
                }
            };
            set_field(&mut tree, &sec, &key, value, &format!("line {line_no}")).map_err(
                |e| match e {
                    SetError::UnknownKey => ConfigError::UnknownKey {
                        line: line_no,
                        section: sec.clone(),
                        key: key.clone(),
                    },
                    SetError::Bad(e) => e,
                },
            )?;
        }
        let config = from_tree(tree)?;
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<TrainConfig, ConfigError> {
        Self::parse_onto(&TrainConfig::default(), text)
    }

    /// Applies `DCPG_<SECTION>_<KEY>` overrides from `vars`.
    pub fn apply_overrides<I, K, V>(&self, vars: I) -> Result<TrainConfig, ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut tree = to_tree(self);
        let prefix = format!("{ENV_PREFIX}_");
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.as_ref()
                    .strip_prefix(&prefix)
                    .map(|rest| (rest.to_ascii_lowercase(), v.as_ref().to_string()))
            })
            .collect();
        pairs.sort();
        for (name, value) in pairs {
            let sec = SECTIONS
                .iter()
                .find(|s| name.starts_with(&format!("{s}_")))
                .ok_or_else(|| invalid(&name, "override names no known section"))?;
            let key = &name[sec.len() + 1..];
            let origin = format!("environment {ENV_PREFIX}_{}", name.to_ascii_uppercase());
            set_field(&mut tree, sec, key, &value, &origin).map_err(|e| match e {
                SetError::UnknownKey => invalid(&format!("{sec}.{key}"), format!("unknown key in {origin}")),
                SetError::Bad(e) => e,
            })?;
        }
        let config = from_tree(tree)?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical text form: sections in fixed order, keys sorted.
    pub fn to_text(&self) -> String {
        let tree = to_tree(self);
        let mut out = String::new();
        for sec in SECTIONS {
            out.push_str(&format!("[{sec}]\n"));
            if let Some(Value::Object(fields)) = tree.get(sec) {
                let mut keys: Vec<&String> = fields.keys().collect();
                keys.sort();
                for k in keys {
                    out.push_str(&format!("{k} = {}\n", render(&fields[k])));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

fn to_tree(config: &TrainConfig) -> Map<String, Value> {
    match serde_json::to_value(config).expect("config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("config is a struct"),
    }
}

fn from_tree(tree: Map<String, Value>) -> Result<TrainConfig, ConfigError> {
    fn section<T: DeserializeOwned>(tree: &Map<String, Value>, name: &str) -> Result<T, ConfigError> {
        serde_json::from_value(tree[name].clone()).map_err(|e| invalid(name, e.to_string()))
    }
    Ok(TrainConfig {
        run: section(&tree, "run")?,
        env: section(&tree, "env")?,
        ppo: section(&tree, "ppo")?,
        phasic: section(&tree, "phasic")?,
        regularization: section(&tree, "regularization")?,
        network: section(&tree, "network")?,
    })
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(render).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn typed<T: DeserializeOwned>(v: Value) -> Result<(), String> {
    serde_json::from_value::<T>(v).map(|_| ()).map_err(|e| e.to_string())
}

enum SetError {
    UnknownKey,
    Bad(ConfigError),
}

/// Parses `raw` according to the JSON type of the current value.
fn set_field(
    tree: &mut Map<String, Value>,
    section: &str,
    key: &str,
    raw: &str,
    origin: &str,
) -> Result<(), SetError> {
    let fields = match tree.get_mut(section) {
        Some(Value::Object(f)) => f,
        _ => return Err(SetError::UnknownKey),
    };
    let current = fields.get(key).ok_or(SetError::UnknownKey)?;
    let bad = |message: String| {
        SetError::Bad(ConfigError::BadValue {
            origin: origin.to_string(),
            field: format!("{section}.{key}"),
            value: raw.to_string(),
            message,
        })
    };
    let parsed = match current {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad("expected true or false".into()))?),
        Value::Number(n) if n.is_f64() => {
            let x: f64 = raw.parse().map_err(|_| bad("expected a number".into()))?;
            serde_json::Number::from_f64(x)
                .map(Value::Number)
                .ok_or_else(|| bad("must be finite".into()))?
        }
        Value::Number(_) => {
            let x: u64 = raw
                .parse()
                .map_err(|_| bad("expected a non-negative integer".into()))?;
            Value::from(x)
        }
        Value::Array(_) => {
            let items: Result<Vec<u64>, _> = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse::<u64>)
                .collect();
            Value::from(items.map_err(|_| bad("expected comma-separated integers".into()))?)
        }
        _ => Value::String(raw.to_string()),
    };
    // Type-check against the section so unknown enum names fail here.
    let mut probe = fields.clone();
    probe.insert(key.to_string(), parsed.clone());
    let probe = Value::Object(probe);
    let check = match section {
        "run" => typed::<RunSection>(probe),
        "env" => typed::<EnvSection>(probe),
        "ppo" => typed::<PpoSection>(probe),
        "phasic" => typed::<PhasicSection>(probe),
        "regularization" => typed::<RegularizationSection>(probe),
        _ => typed::<NetworkSection>(probe),
    };
    check.map_err(bad)?;
    fields.insert(key.to_string(), parsed);
    Ok(())
}
