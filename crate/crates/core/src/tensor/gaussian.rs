//! Tanh-squashed diagonal Gaussian used by the SAC actor.

use crate::error::{check_len, Error, Result};

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Sampled actions are kept this far inside (−1, 1).
pub const ACTION_CLAMP: f64 = 1.0 - 1e-6;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2: f64 = core::f64::consts::LN_2;

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// `log(1 − tanh(u)²)` without cancellation for large |u|.
#[inline]
pub(crate) fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

pub fn clamp_log_std(log_std: f64) -> f64 {
    log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// Log-density of a tanh-squashed Gaussian at `action`, including the
/// change-of-variables correction. `log_std` is clamped to
/// [`LOG_STD_MIN`, `LOG_STD_MAX`].
pub fn gaussian_tanh_logprob(mean: &[f64], log_std: &[f64], action: &[f64]) -> Result<f64> {
    check_len("logprob log_std", mean.len(), log_std.len())?;
    check_len("logprob action", mean.len(), action.len())?;
    let mut total = 0.0;
    for i in 0..mean.len() {
        let a = action[i];
        if !(a.abs() < 1.0) {
            return Err(Error::ActionOutOfRange(a));
        }
        let ls = clamp_log_std(log_std[i]);
        let u = libm::atanh(a);
        let z = (u - mean[i]) / libm::exp(ls);
        total += -0.5 * z * z - ls - HALF_LOG_2PI - log_one_minus_tanh_sq(u);
    }
    Ok(total)
}

/// One reparameterised draw `a = tanh(mean + std·z)` given the noise `z`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SquashedDraw {
    pub action: f64,
    pub log_prob: f64,
    pub std: f64,
}

#[inline]
pub(crate) fn squashed_draw(mean: f64, raw_log_std: f64, z: f64) -> SquashedDraw {
    let ls = clamp_log_std(raw_log_std);
    let std = libm::exp(ls);
    let pre_tanh = mean + std * z;
    let action = libm::tanh(pre_tanh).clamp(-ACTION_CLAMP, ACTION_CLAMP);
    let log_prob = -0.5 * z * z - ls - HALF_LOG_2PI - log_one_minus_tanh_sq(pre_tanh);
    SquashedDraw {
        action,
        log_prob,
        std,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_origin() {
        let lp = gaussian_tanh_logprob(&[0.0], &[0.0], &[0.0]).unwrap();
        assert!((lp + 0.91894).abs() < 1e-5);
    }

    #[test]
    fn symmetric_actions_have_equal_density() {
        for a in [0.1, 0.5, 0.9, 0.999] {
            let p = gaussian_tanh_logprob(&[0.0, 0.0], &[-0.3, 0.4], &[a, -a]).unwrap();
            let q = gaussian_tanh_logprob(&[0.0, 0.0], &[-0.3, 0.4], &[-a, a]).unwrap();
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn density_decreases_away_from_mean_in_pre_tanh_space() {
        // Scan |atanh(a) − mean| upward with fixed std; the Gaussian term
        // dominates once std is small relative to the Jacobian's curvature.
        let mean = 0.2;
        let mut last = f64::INFINITY;
        for k in 0..40 {
            let u = mean + 0.05 * k as f64;
            let lp = gaussian_tanh_logprob(&[mean], &[-2.0], &[libm::tanh(u)]).unwrap();
            assert!(lp < last, "step {k}: {lp} !< {last}");
            last = lp;
        }
    }

    #[test]
    fn boundary_actions_are_errors() {
        assert_eq!(
            gaussian_tanh_logprob(&[0.0], &[0.0], &[1.0]).unwrap_err(),
            Error::ActionOutOfRange(1.0)
        );
        assert!(gaussian_tanh_logprob(&[0.0], &[0.0], &[-1.5]).is_err());
    }

    #[test]
    fn draw_log_prob_matches_density() {
        let d = squashed_draw(0.3, -0.7, 0.8);
        let lp = gaussian_tanh_logprob(&[0.3], &[-0.7], &[d.action]).unwrap();
        assert!((lp - d.log_prob).abs() < 1e-9);
    }

    #[test]
    fn stable_jacobian_term() {
        for u in [-20.0, -3.0, 0.0, 0.5, 4.0, 25.0] {
            let direct = libm::log(1.0 - libm::tanh(u) * libm::tanh(u));
            let stable = log_one_minus_tanh_sq(u);
            if direct.is_finite() && u.abs() < 10.0 {
                assert!((direct - stable).abs() < 1e-9);
            }
            assert!(stable.is_finite());
        }
    }
}
