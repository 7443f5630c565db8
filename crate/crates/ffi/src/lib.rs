//! C interface to the trainer and the standalone numerical routines.
//!
//! Every function returns a [`DcpgStatus`]. On failure the message is kept
//! per thread and read with [`dcpg_last_error`]. Handles are opaque and
//! owned by the caller until passed to the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use dcpg_core::agents::{TrainError, Trainer};
use dcpg_core::analysis::stiffness;
use dcpg_core::harness::config::ENV_PREFIX;
use dcpg_core::harness::{evaluate, ConfigError, Preset, Split, TrainConfig};
use dcpg_core::rollout::gae;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DcpgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    Diverged = 3,
    InvalidArgument = 4,
    Io = 5,
    Finished = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DcpgPreset {
    Desk = 0,
    Paper = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DcpgSplit {
    Train = 0,
    Test = 1,
}

/// One row of training metrics; unavailable values are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DcpgMetrics {
    pub num_steps: u64,
    pub train_episode_rewards_mean: f64,
    pub test_episode_rewards_mean: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub c_pi: f64,
    pub c_v: f64,
    pub dynamics_loss: f64,
    pub entropy: f64,
    pub predicted_init_value: f64,
    pub empirical_init_return: f64,
}

/// Opaque training configuration.
pub struct DcpgConfig {
    inner: TrainConfig,
}

/// Opaque trainer.
pub struct DcpgTrainer {
    inner: Trainer,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

fn fail(status: DcpgStatus, message: impl Into<String>) -> DcpgStatus {
    set_error(message);
    status
}

fn train_status(e: &TrainError) -> DcpgStatus {
    match e {
        TrainError::Config(_) => DcpgStatus::InvalidConfig,
        TrainError::Divergence { .. } => DcpgStatus::Diverged,
        TrainError::Finished => DcpgStatus::Finished,
        TrainError::Checkpoint(_) => DcpgStatus::Io,
        _ => DcpgStatus::Internal,
    }
}

fn config_status(e: ConfigError) -> DcpgStatus {
    fail(DcpgStatus::InvalidConfig, e.to_string())
}

/// Runs `f`, turning a panic into [`DcpgStatus::Internal`].
fn guard(f: impl FnOnce() -> DcpgStatus) -> DcpgStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(DcpgStatus::Internal, "internal panic"))
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, DcpgStatus> {
    if s.is_null() {
        return Err(fail(DcpgStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(DcpgStatus::InvalidArgument, "string is not UTF-8"))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(DcpgStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dcpg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a configuration from a preset.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dcpg_config_preset(preset: DcpgPreset, out: *mut *mut DcpgConfig) -> DcpgStatus {
    guard(|| {
        non_null!(out);
        let p = match preset {
            DcpgPreset::Desk => Preset::Desk,
            DcpgPreset::Paper => Preset::Paper,
        };
        *out = Box::into_raw(Box::new(DcpgConfig {
            inner: TrainConfig::preset(p),
        }));
        DcpgStatus::Ok
    })
}

/// Parses config text on top of the desk preset.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dcpg_config_parse(source: *const c_char, out: *mut *mut DcpgConfig) -> DcpgStatus {
    guard(|| {
        non_null!(out);
        let s = try_ffi!(text(source));
        match TrainConfig::parse(s) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DcpgConfig { inner }));
                DcpgStatus::Ok
            }
            Err(e) => config_status(e),
        }
    })
}

/// Sets one key, named `section.key`, from its text form.
///
/// # Safety
/// `config` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn dcpg_config_set(
    config: *mut DcpgConfig,
    key: *const c_char,
    value: *const c_char,
) -> DcpgStatus {
    guard(|| {
        non_null!(config);
        let (k, v) = (try_ffi!(text(key)), try_ffi!(text(value)));
        let Some((section, field)) = k.split_once('.') else {
            return fail(DcpgStatus::InvalidArgument, format!("key `{k}` is not `section.key`"));
        };
        let var = format!("{ENV_PREFIX}_{section}_{field}").to_ascii_uppercase();
        match (*config).inner.apply_overrides([(var, v)]) {
            Ok(c) => {
                (*config).inner = c;
                DcpgStatus::Ok
            }
            Err(e) => config_status(e),
        }
    })
}

/// Writes the hex config hash (64 characters plus NUL) into `out`.
///
/// # Safety
/// `config` must come from this library and `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dcpg_config_hash(config: *const DcpgConfig, out: *mut c_char, len: usize) -> DcpgStatus {
    guard(|| {
        non_null!(config, out);
        let hash = (*config).inner.hash();
        if len < hash.len() + 1 {
            return fail(DcpgStatus::InvalidArgument, format!("buffer needs {} bytes", hash.len() + 1));
        }
        ptr::copy_nonoverlapping(hash.as_ptr().cast::<c_char>(), out, hash.len());
        *out.add(hash.len()) = 0;
        DcpgStatus::Ok
    })
}

/// # Safety
/// `config` must come from this library (or be null) and not be used after.
#[no_mangle]
pub unsafe extern "C" fn dcpg_config_free(config: *mut DcpgConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Builds a trainer; the configuration is copied.
///
/// # Safety
/// `config` must come from this library and `out` be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dcpg_trainer_new(config: *const DcpgConfig, out: *mut *mut DcpgTrainer) -> DcpgStatus {
    guard(|| {
        non_null!(config, out);
        match Trainer::new((*config).inner.clone()) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DcpgTrainer { inner }));
                DcpgStatus::Ok
            }
            Err(e) => fail(train_status(&e), e.to_string()),
        }
    })
}

/// Collects one rollout and runs its updates. `metrics` may be null.
///
/// # Safety
/// `trainer` must come from this library; `metrics` must be null or valid
/// for a write.
#[no_mangle]
pub unsafe extern "C" fn dcpg_trainer_step(trainer: *mut DcpgTrainer, metrics: *mut DcpgMetrics) -> DcpgStatus {
    guard(|| {
        non_null!(trainer);
        match (*trainer).inner.step_rollout() {
            Ok(r) => {
                if !metrics.is_null() {
                    *metrics = DcpgMetrics {
                        num_steps: r.num_steps,
                        train_episode_rewards_mean: r.train_episode_rewards_mean,
                        test_episode_rewards_mean: r.test_episode_rewards_mean,
                        policy_loss: r.policy_loss,
                        value_loss: r.value_loss,
                        c_pi: r.c_pi,
                        c_v: r.c_v,
                        dynamics_loss: r.dynamics_loss,
                        entropy: r.entropy,
                        predicted_init_value: r.predicted_init_value,
                        empirical_init_return: r.empirical_init_return,
                    };
                }
                DcpgStatus::Ok
            }
            Err(e) => fail(train_status(&e), e.to_string()),
        }
    })
}

/// Non-zero once the configured step budget is spent; 0 for a null handle.
///
/// # Safety
/// `trainer` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dcpg_trainer_is_finished(trainer: *const DcpgTrainer) -> i32 {
    if trainer.is_null() {
        return 0;
    }
    i32::from((*trainer).inner.is_finished())
}

/// Environment steps taken so far.
///
/// # Safety
/// `trainer` must come from this library and `out` be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dcpg_trainer_num_steps(trainer: *const DcpgTrainer, out: *mut u64) -> DcpgStatus {
    guard(|| {
        non_null!(trainer, out);
        *out = (*trainer).inner.num_steps();
        DcpgStatus::Ok
    })
}

/// Mean undiscounted return over `episodes` episodes on a level split.
///
/// # Safety
/// `trainer` must come from this library and `mean` be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dcpg_trainer_evaluate(
    trainer: *const DcpgTrainer,
    split: DcpgSplit,
    episodes: usize,
    seed: u64,
    mean: *mut f64,
) -> DcpgStatus {
    guard(|| {
        non_null!(trainer, mean);
        let split = match split {
            DcpgSplit::Train => Split::Train,
            DcpgSplit::Test => Split::Test,
        };
        match evaluate(&(*trainer).inner, split, episodes, seed) {
            Ok(r) => {
                *mean = r.mean;
                DcpgStatus::Ok
            }
            Err(TrainError::State(m)) => fail(DcpgStatus::InvalidArgument, m),
            Err(e) => fail(train_status(&e), e.to_string()),
        }
    })
}

/// Writes a checkpoint file.
///
/// # Safety
/// `trainer` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dcpg_trainer_save(trainer: *const DcpgTrainer, path: *const c_char) -> DcpgStatus {
    guard(|| {
        non_null!(trainer);
        let p = try_ffi!(text(path));
        match std::fs::write(Path::new(p), (*trainer).inner.save_checkpoint()) {
            Ok(()) => DcpgStatus::Ok,
            Err(e) => fail(DcpgStatus::Io, format!("{p}: {e}")),
        }
    })
}

/// Restores a trainer from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dcpg_trainer_load(path: *const c_char, out: *mut *mut DcpgTrainer) -> DcpgStatus {
    guard(|| {
        non_null!(out);
        let p = try_ffi!(text(path));
        let bytes = match std::fs::read(Path::new(p)) {
            Ok(b) => b,
            Err(e) => return fail(DcpgStatus::Io, format!("{p}: {e}")),
        };
        match Trainer::from_checkpoint(&bytes) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DcpgTrainer { inner }));
                DcpgStatus::Ok
            }
            Err(e) => fail(train_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `trainer` must come from this library (or be null) and not be used after.
#[no_mangle]
pub unsafe extern "C" fn dcpg_trainer_free(trainer: *mut DcpgTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

/// Generalized advantage estimation over a time-major `steps x envs`
/// rollout. `dones` holds 0 or 1 per transition, `bootstrap` one value per
/// environment. Writes `steps * envs` advantages and targets.
///
/// # Safety
/// Every array must hold the element count stated above.
#[no_mangle]
pub unsafe extern "C" fn dcpg_gae(
    rewards: *const f64,
    values: *const f64,
    dones: *const u8,
    bootstrap: *const f64,
    steps: usize,
    envs: usize,
    gamma: f64,
    lambda: f64,
    advantages: *mut f64,
    targets: *mut f64,
) -> DcpgStatus {
    guard(|| {
        non_null!(rewards, values, dones, bootstrap, advantages, targets);
        let n = steps * envs;
        if n == 0 {
            return fail(DcpgStatus::InvalidArgument, "rollout is empty");
        }
        let d: Vec<bool> = slice::from_raw_parts(dones, n).iter().map(|&x| x != 0).collect();
        match gae(
            slice::from_raw_parts(rewards, n),
            slice::from_raw_parts(values, n),
            &d,
            slice::from_raw_parts(bootstrap, envs),
            gamma,
            lambda,
        ) {
            Ok((a, t)) => {
                slice::from_raw_parts_mut(advantages, n).copy_from_slice(&a);
                slice::from_raw_parts_mut(targets, n).copy_from_slice(&t);
                DcpgStatus::Ok
            }
            Err(e) => fail(DcpgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Gradient stiffness (clamped cosine) of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must hold `len` elements and `out` be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dcpg_stiffness(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> DcpgStatus {
    guard(|| {
        non_null!(a, b, out);
        match stiffness(slice::from_raw_parts(a, len), slice::from_raw_parts(b, len)) {
            Some(s) => {
                *out = s;
                DcpgStatus::Ok
            }
            None => fail(DcpgStatus::InvalidArgument, "stiffness is undefined for a zero vector"),
        }
    })
}
