use crate::diffnet::Real;

use super::RolloutError;

/// Generalized advantage estimation over a time-major `T x B` rollout.
///
/// `dones[t * B + b]` marks that the transition at step `t` ended the
/// episode, so neither the next value nor later residuals leak across it.
/// `bootstrap[b]` is `V(s_T)` for the state following the final step.
/// Returns `(advantages, targets)` with `targets = advantages + values`.
pub fn gae<T: Real>(
    rewards: &[T],
    values: &[T],
    dones: &[bool],
    bootstrap: &[T],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<T>, Vec<T>), RolloutError> {
    for (name, c) in [("gamma", gamma), ("lambda", lambda)] {
        if !(0.0..=1.0).contains(&c) {
            return Err(RolloutError::BadCoefficient(name, c));
        }
    }
    let b = bootstrap.len();
    if b == 0 {
        return Err(RolloutError::LengthMismatch {
            what: "bootstrap",
            expected: 1,
            got: 0,
        });
    }
    let n = rewards.len();
    if n % b != 0 {
        return Err(RolloutError::LengthMismatch {
            what: "rewards",
            expected: n.div_ceil(b) * b,
            got: n,
        });
    }
    for (what, len) in [("values", values.len()), ("dones", dones.len())] {
        if len != n {
            return Err(RolloutError::LengthMismatch {
                what,
                expected: n,
                got: len,
            });
        }
    }
    let steps = n / b;
    let g = T::lit(gamma);
    let gl = T::lit(gamma * lambda);
    let mut adv = vec![T::zero(); n];
    let mut last = vec![T::zero(); b];
    for t in (0..steps).rev() {
        for e in 0..b {
            let i = t * b + e;
            let next_value = if t + 1 == steps {
                bootstrap[e]
            } else {
                values[i + b]
            };
            let live = if dones[i] { T::zero() } else { T::one() };
            let delta = rewards[i] + g * next_value * live - values[i];
            last[e] = delta + gl * live * last[e];
            adv[i] = last[e];
        }
    }
    let targets = adv.iter().zip(values).map(|(&a, &v)| a + v).collect();
    Ok((adv, targets))
}

/// Standardizes to zero mean and unit standard deviation (population std,
/// `1e-8` added to the denominator).
pub fn normalize_advantages(adv: &mut [f32]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().map(|&a| a as f64).sum::<f64>() / n;
    let var = adv.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for a in adv.iter_mut() {
        *a = ((*a as f64 - mean) * scale) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct double sum `A_t = sum_l (gamma lambda)^l delta_{t+l}`, with the
    /// sum cut at the first episode end.
    fn brute_force(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: &[f64],
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let b = bootstrap.len();
        let steps = rewards.len() / b;
        let delta = |t: usize, e: usize| {
            let i = t * b + e;
            let next = if t + 1 == steps { bootstrap[e] } else { values[i + b] };
            let live = if dones[i] { 0.0 } else { 1.0 };
            rewards[i] + gamma * next * live - values[i]
        };
        let mut out = vec![0.0; rewards.len()];
        for e in 0..b {
            for t in 0..steps {
                let mut acc = 0.0;
                for l in 0..steps - t {
                    acc += (gamma * lambda).powi(l as i32) * delta(t + l, e);
                    if dones[(t + l) * b + e] {
                        break;
                    }
                }
                out[t * b + e] = acc;
            }
        }
        out
    }

    #[test]
    fn zero_rewards_and_values_give_zero() {
        let (a, r) = gae(&[0.0f64; 6], &[0.0; 6], &[false; 6], &[0.0; 2], 0.99, 0.95).unwrap();
        assert!(a.iter().chain(&r).all(|&x| x == 0.0));
    }

    #[test]
    fn lambda_zero_is_td_residual() {
        let r = [1.0f64, -0.5, 2.0, 0.25];
        let v = [0.3, 0.1, -0.4, 0.9];
        let d = [false, true, false, false];
        let (a, _) = gae(&r, &v, &d, &[0.7], 0.9, 0.0).unwrap();
        let expect = [
            1.0 + 0.9 * 0.1 - 0.3,
            -0.5 - 0.1,
            2.0 + 0.9 * 0.9 + 0.4,
            0.25 + 0.9 * 0.7 - 0.9,
        ];
        for (x, y) in a.iter().zip(expect) {
            assert_eq!(*x, y);
        }
    }

    #[test]
    fn three_step_hand_case() {
        let r = [1.0f64, 0.0, 1.0];
        let v = [0.5, 0.2, 0.1];
        let (a, t) = gae(&r, &v, &[false; 3], &[0.0], 0.9, 0.8).unwrap();
        let oracle = brute_force(&r, &v, &[false; 3], &[0.0], 0.9, 0.8);
        for i in 0..3 {
            assert!((a[i] - oracle[i]).abs() < 1e-10);
            assert_eq!(t[i], a[i] + v[i]);
        }
        // delta = [0.68, -0.11, 0.9]; gamma lambda = 0.72
        assert!((a[2] - 0.9).abs() < 1e-12);
        assert!((a[1] - (-0.11 + 0.72 * 0.9)).abs() < 1e-12);
        assert!((a[0] - (0.68 + 0.72 * (-0.11 + 0.72 * 0.9))).abs() < 1e-12);
    }

    #[test]
    fn lambda_one_single_episode_is_discounted_return_minus_value() {
        let gamma = 0.97;
        let r = [0.0f64, 1.0, 0.0, 3.0, -1.0];
        let v = [0.2, -0.3, 0.5, 0.1, 0.4];
        let mut d = [false; 5];
        d[4] = true;
        let (a, _) = gae(&r, &v, &d, &[123.0], gamma, 1.0).unwrap();
        for t in 0..5 {
            let ret: f64 = (t..5).map(|k| gamma.powi((k - t) as i32) * r[k]).sum();
            assert!((a[t] - (ret - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn length_and_coefficient_errors() {
        assert!(matches!(
            gae(&[0.0f32; 4], &[0.0; 3], &[false; 4], &[0.0], 0.9, 0.9),
            Err(RolloutError::LengthMismatch { what: "values", .. })
        ));
        assert!(matches!(
            gae(&[0.0f32; 3], &[0.0; 3], &[false; 3], &[0.0, 0.0], 0.9, 0.9),
            Err(RolloutError::LengthMismatch { what: "rewards", .. })
        ));
        assert!(gae(&[0.0f32], &[0.0], &[false], &[0.0], 1.5, 0.9).is_err());
    }

    #[test]
    fn advantage_normalization() {
        let mut a = vec![1.0f32, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        let mean: f32 = a.iter().sum::<f32>() / 4.0;
        let var: f32 = a.iter().map(|x| (x - mean).powi(2)).sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            steps in 1usize..16,
            envs in 1usize..4,
            gamma in 0.0f64..=1.0,
            lambda in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = steps * envs;
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
            let boot: Vec<f64> = (0..envs).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, t) = gae(&r, &v, &d, &boot, gamma, lambda).unwrap();
            let oracle = brute_force(&r, &v, &d, &boot, gamma, lambda);
            for i in 0..n {
                prop_assert!((a[i] - oracle[i]).abs() < 1e-10);
                prop_assert_eq!(t[i], a[i] + v[i]);
            }
        }
    }
}
