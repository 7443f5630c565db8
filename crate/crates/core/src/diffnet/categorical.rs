//! Categorical distribution over a single row of logits.

use rand::Rng;

use super::Real;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CategoricalError {
    #[error("non-finite logit at index {0}")]
    NonFinite(usize),
    #[error("empty logits")]
    Empty,
    #[error("action {action} out of range for {actions} actions")]
    ActionOutOfRange { action: usize, actions: usize },
}

fn check<T: Real>(logits: &[T]) -> Result<(), CategoricalError> {
    if logits.is_empty() {
        return Err(CategoricalError::Empty);
    }
    match logits.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(CategoricalError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Log-softmax with max subtraction.
pub fn log_softmax<T: Real>(logits: &[T]) -> Result<Vec<T>, CategoricalError> {
    check(logits)?;
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    Ok(logits.iter().map(|&z| z - lse).collect())
}

/// Probabilities, normalized in 64-bit so they sum to one at `T` precision.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>, CategoricalError> {
    check(logits)?;
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max).as_f64();
    let exps: Vec<f64> = logits.iter().map(|z| (z.as_f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| T::lit(e / total)).collect())
}

pub fn log_prob<T: Real>(logits: &[T], action: usize) -> Result<T, CategoricalError> {
    if action >= logits.len() {
        return Err(CategoricalError::ActionOutOfRange {
            action,
            actions: logits.len(),
        });
    }
    Ok(log_softmax(logits)?[action])
}

pub fn entropy<T: Real>(logits: &[T]) -> Result<T, CategoricalError> {
    let lp = log_softmax(logits)?;
    Ok(-lp.iter().map(|&l| l.exp() * l).sum::<T>())
}

/// `KL(p || q)` where `p` and `q` are given as logits.
pub fn kl_divergence<T: Real>(p_logits: &[T], q_logits: &[T]) -> Result<T, CategoricalError> {
    let lp = log_softmax(p_logits)?;
    let lq = log_softmax(q_logits)?;
    Ok(lp
        .iter()
        .zip(&lq)
        .map(|(&a, &b)| a.exp() * (a - b))
        .sum::<T>())
}

/// Inverse-CDF sample driven by one uniform draw from `rng`.
pub fn sample<T: Real, R: Rng + ?Sized>(logits: &[T], rng: &mut R) -> Result<usize, CategoricalError> {
    let probs = softmax(logits)?;
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p.as_f64();
        if u < cum {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_entropy_is_ln_k() {
        for k in 1..8 {
            let h = entropy(&vec![0.3f64; k]).unwrap();
            assert!((h - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_of_identical_is_zero() {
        let z = [0.1f64, -2.0, 3.0];
        assert_eq!(kl_divergence(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn kl_two_action_case() {
        let p = [0.7f64.ln(), 0.3f64.ln()];
        let q = [0.0f64, 0.0];
        let oracle = 0.7 * (0.7f64 / 0.5).ln() + 0.3 * (0.3f64 / 0.5).ln();
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((kl - oracle).abs() < 1e-12);
        assert!((kl - 0.0823).abs() < 1e-4);
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(
            softmax(&[0.0f32, f32::NAN]),
            Err(CategoricalError::NonFinite(1))
        );
        assert_eq!(
            entropy(&[f64::INFINITY]),
            Err(CategoricalError::NonFinite(0))
        );
    }

    #[test]
    fn near_one_hot_has_near_zero_entropy() {
        let h = entropy(&[60.0f64, 0.0, 0.0]).unwrap();
        assert!(h < 1e-20);
    }

    #[test]
    fn sampling_is_seeded() {
        let z = [0.2f32, 0.5, -0.1, 1.0];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32).map(|_| sample(&z, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    proptest! {
        #[test]
        fn probs_sum_to_one(z in proptest::collection::vec(-20.0f32..20.0, 1..10)) {
            let s: f32 = softmax(&z).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }

        #[test]
        fn shift_invariance(z in proptest::collection::vec(-10.0f64..10.0, 2..8), c in -50.0f64..50.0) {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            prop_assert!((entropy(&z).unwrap() - entropy(&shifted).unwrap()).abs() < 1e-9);
            prop_assert!(kl_divergence(&z, &shifted).unwrap().abs() < 1e-9);
            let p = softmax(&z).unwrap();
            let q = softmax(&shifted).unwrap();
            let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            prop_assert_eq!(argmax(&p), argmax(&q));
        }

        #[test]
        fn kl_and_entropy_non_negative(
            a in proptest::collection::vec(-5.0f64..5.0, 3),
            b in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            prop_assert!(kl_divergence(&a, &b).unwrap() >= -1e-12);
            prop_assert!(entropy(&a).unwrap() >= 0.0);
        }
    }
}
