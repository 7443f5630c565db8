use std::ffi::{CStr, CString};
use std::ptr;

use dcpg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dcpg_last_error()) }.to_string_lossy().into_owned()
}

fn tiny_config() -> *mut DcpgConfig {
    let text = CString::new(
        "[run]\nalgorithm = dcpg\ntotal_steps = 64\neval_episodes = 2\n\
         [env]\nfamily = chain_walk\nchain_length = 3\nn_envs = 2\nn_test_envs = 2\n\
         [ppo]\nrollout_steps = 8\nminibatches = 2\n\
         [phasic]\nn_pi = 2\ne_aux = 1\naux_minibatches = 2\n\
         [network]\nencoder_hidden = 8\n",
    )
    .unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dcpg_config_parse(text.as_ptr(), &mut cfg) }, DcpgStatus::Ok, "{}", last_error());
    cfg
}

#[test]
fn train_save_load_evaluate() {
    let cfg = tiny_config();
    let mut trainer = ptr::null_mut();
    unsafe {
        assert_eq!(dcpg_trainer_new(cfg, &mut trainer), DcpgStatus::Ok);
        let mut m = DcpgMetrics::default();
        while dcpg_trainer_is_finished(trainer) == 0 {
            assert_eq!(dcpg_trainer_step(trainer, &mut m), DcpgStatus::Ok, "{}", last_error());
        }
        assert_eq!(m.num_steps, 64);
        assert_eq!(dcpg_trainer_step(trainer, ptr::null_mut()), DcpgStatus::Finished);
        assert!(!last_error().is_empty());

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("t.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(dcpg_trainer_save(trainer, path.as_ptr()), DcpgStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(dcpg_trainer_load(path.as_ptr(), &mut loaded), DcpgStatus::Ok);
        let mut steps = 0;
        assert_eq!(dcpg_trainer_num_steps(loaded, &mut steps), DcpgStatus::Ok);
        assert_eq!(steps, 64);

        let (mut a, mut b) = (f64::NAN, f64::NAN);
        assert_eq!(dcpg_trainer_evaluate(trainer, DcpgSplit::Test, 4, 7, &mut a), DcpgStatus::Ok);
        assert_eq!(dcpg_trainer_evaluate(loaded, DcpgSplit::Test, 4, 7, &mut b), DcpgStatus::Ok);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(dcpg_trainer_evaluate(loaded, DcpgSplit::Train, 0, 7, &mut b), DcpgStatus::InvalidArgument);

        let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(dcpg_trainer_load(missing.as_ptr(), &mut none), DcpgStatus::Io);
        assert!(none.is_null());

        dcpg_trainer_free(trainer);
        dcpg_trainer_free(loaded);
        dcpg_config_free(cfg);
    }
}

#[test]
fn config_errors_and_hash() {
    let cfg = tiny_config();
    unsafe {
        let mut h1 = [0 as std::ffi::c_char; 65];
        assert_eq!(dcpg_config_hash(cfg, h1.as_mut_ptr(), h1.len()), DcpgStatus::Ok);
        let key = CString::new("ppo.gamma").unwrap();
        let val = CString::new("0.9").unwrap();
        assert_eq!(dcpg_config_set(cfg, key.as_ptr(), val.as_ptr()), DcpgStatus::Ok);
        let mut h2 = [0 as std::ffi::c_char; 65];
        assert_eq!(dcpg_config_hash(cfg, h2.as_mut_ptr(), h2.len()), DcpgStatus::Ok);
        assert_ne!(CStr::from_ptr(h1.as_ptr()), CStr::from_ptr(h2.as_ptr()));
        assert_eq!(CStr::from_ptr(h1.as_ptr()).to_bytes().len(), 64);
        assert_eq!(dcpg_config_hash(cfg, h2.as_mut_ptr(), 10), DcpgStatus::InvalidArgument);

        let bad = CString::new("1.5").unwrap();
        assert_eq!(dcpg_config_set(cfg, key.as_ptr(), bad.as_ptr()), DcpgStatus::InvalidConfig);
        assert!(last_error().contains("ppo.gamma"), "{}", last_error());
        let unknown = CString::new("ppo.gama").unwrap();
        assert_eq!(dcpg_config_set(cfg, unknown.as_ptr(), val.as_ptr()), DcpgStatus::InvalidConfig);
        let flat = CString::new("gamma").unwrap();
        assert_eq!(dcpg_config_set(cfg, flat.as_ptr(), val.as_ptr()), DcpgStatus::InvalidArgument);

        let text = CString::new("[ppo]\ngamma = 2\n").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(dcpg_config_parse(text.as_ptr(), &mut out), DcpgStatus::InvalidConfig);
        assert!(out.is_null());
        assert_eq!(dcpg_config_parse(ptr::null(), &mut out), DcpgStatus::NullPointer);
        assert_eq!(dcpg_config_preset(DcpgPreset::Paper, ptr::null_mut()), DcpgStatus::NullPointer);
        assert_eq!(dcpg_config_preset(DcpgPreset::Paper, &mut out), DcpgStatus::Ok);
        dcpg_config_free(out);
        dcpg_config_free(cfg);
        dcpg_config_free(ptr::null_mut());
        dcpg_trainer_free(ptr::null_mut());
    }
}

#[test]
fn gae_matches_hand_computation() {
    // Two steps, one environment, episode ends after the first step.
    let rewards = [1.0, 2.0];
    let values = [0.5, 0.25];
    let dones = [1u8, 0];
    let bootstrap = [4.0];
    let (mut adv, mut tgt) = ([0.0; 2], [0.0; 2]);
    let status = unsafe {
        dcpg_gae(
            rewards.as_ptr(),
            values.as_ptr(),
            dones.as_ptr(),
            bootstrap.as_ptr(),
            2,
            1,
            0.5,
            0.5,
            adv.as_mut_ptr(),
            tgt.as_mut_ptr(),
        )
    };
    assert_eq!(status, DcpgStatus::Ok);
    assert_eq!(adv, [0.5, 2.0 + 0.5 * 4.0 - 0.25]);
    assert_eq!(tgt, [1.0, 4.0]);
    let status = unsafe {
        dcpg_gae(
            rewards.as_ptr(),
            values.as_ptr(),
            dones.as_ptr(),
            bootstrap.as_ptr(),
            2,
            1,
            1.5,
            0.5,
            adv.as_mut_ptr(),
            tgt.as_mut_ptr(),
        )
    };
    assert_eq!(status, DcpgStatus::InvalidArgument);
}

#[test]
fn stiffness_of_vectors() {
    let (a, b, z) = ([1.0, 0.0], [2.0, 0.0], [0.0, 0.0]);
    let mut out = 0.0;
    unsafe {
        assert_eq!(dcpg_stiffness(a.as_ptr(), b.as_ptr(), 2, &mut out), DcpgStatus::Ok);
        assert_eq!(out, 1.0);
        assert_eq!(dcpg_stiffness(a.as_ptr(), z.as_ptr(), 2, &mut out), DcpgStatus::InvalidArgument);
        assert_eq!(dcpg_stiffness(ptr::null(), b.as_ptr(), 2, &mut out), DcpgStatus::NullPointer);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/dcpg.h");
    for name in [
        "dcpg_last_error",
        "dcpg_config_preset",
        "dcpg_config_parse",
        "dcpg_config_set",
        "dcpg_config_hash",
        "dcpg_config_free",
        "dcpg_trainer_new",
        "dcpg_trainer_step",
        "dcpg_trainer_is_finished",
        "dcpg_trainer_num_steps",
        "dcpg_trainer_evaluate",
        "dcpg_trainer_save",
        "dcpg_trainer_load",
        "dcpg_trainer_free",
        "dcpg_gae",
        "dcpg_stiffness",
        "typedef struct DcpgTrainer DcpgTrainer",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
