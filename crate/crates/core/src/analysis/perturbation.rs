//! Per-motion perturbation size measures used as imperceptibility proxies.

use super::AnalysisError;
use crate::motion::{bone_lengths, difference_rows, Motion, Skeleton, DOF};
use crate::Scalar;

fn check_pair<T: Scalar>(original: &Motion<T>, adversarial: &Motion<T>) -> Result<(), AnalysisError> {
    if original.frame_count() != adversarial.frame_count() {
        return Err(AnalysisError::Input(format!(
            "{} has {} frames, {} has {}",
            original.id(),
            original.frame_count(),
            adversarial.id(),
            adversarial.frame_count()
        )));
    }
    Ok(())
}

/// Largest per-frame relative change of the bone-length vector,
/// `max_i |Bl(q_hat_i) - Bl(q_i)| / |Bl(q_i)|`.
pub fn max_relative_bone_change<T: Scalar>(
    original: &Motion<T>,
    adversarial: &Motion<T>,
    skeleton: &Skeleton,
) -> Result<f64, AnalysisError> {
    check_pair(original, adversarial)?;
    let mut worst: f64 = 0.0;
    for i in 0..original.frame_count() {
        let a = bone_lengths(original.frame(i), skeleton)?.lengths;
        let b = bone_lengths(adversarial.frame(i), skeleton)?.lengths;
        let (mut diff, mut norm) = (0.0, 0.0);
        for (x, y) in a.iter().zip(&b) {
            diff += (y.as_f64() - x.as_f64()).powi(2);
            norm += x.as_f64().powi(2);
        }
        if norm > 0.0 {
            worst = worst.max((diff / norm).sqrt());
        }
    }
    Ok(worst)
}

/// `sum_t |gamma * (accel(q)_t - accel(q_hat)_t)|^2` with second forward
/// differences.
pub fn weighted_acceleration_deviation<T: Scalar>(
    original: &Motion<T>,
    adversarial: &Motion<T>,
    gamma: &[f64],
) -> Result<f64, AnalysisError> {
    check_pair(original, adversarial)?;
    if gamma.len() != DOF {
        return Err(AnalysisError::Input(format!("gamma has {} entries, expected {DOF}", gamma.len())));
    }
    let delta: Vec<f64> = original
        .frames()
        .iter()
        .zip(adversarial.frames())
        .map(|(a, b)| a.as_f64() - b.as_f64())
        .collect();
    let acc = difference_rows(&delta, DOF, 2);
    Ok(acc.iter().enumerate().map(|(i, d)| (gamma[i % DOF] * d).powi(2)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{clean_sample, SampleParams};
    use crate::motion::standard_skeleton;

    fn sample() -> Motion<f64> {
        clean_sample(2, SampleParams { phase: 0.3, amplitude: 1.0 }, 12, 30.0).unwrap()
    }

    #[test]
    fn uniform_scaling_changes_bones_by_its_factor() {
        let q = sample();
        let scaled = q.with_frames(q.frames().iter().map(|v| v * 1.01).collect()).unwrap();
        let r = max_relative_bone_change(&q, &scaled, standard_skeleton()).unwrap();
        assert!((r - 0.01).abs() < 1e-12);
        assert_eq!(max_relative_bone_change(&q, &q, standard_skeleton()).unwrap(), 0.0);
    }

    #[test]
    fn linear_drift_has_no_acceleration() {
        let q = sample();
        let drift: Vec<f64> = q.frames().iter().enumerate().map(|(i, v)| v + 0.01 * (i / DOF) as f64).collect();
        let a = q.with_frames(drift).unwrap();
        let gamma = vec![1.0; DOF];
        assert!(weighted_acceleration_deviation(&q, &a, &gamma).unwrap() < 1e-24);
        // a single-frame bump of 0.1 in one DoF: second differences 0.1, -0.2, 0.1
        let mut bumped = q.frames().to_vec();
        bumped[5 * DOF + 4] += 0.1;
        let b = q.with_frames(bumped).unwrap();
        let want = 0.04f64.powi(2) * (0.01 + 0.04 + 0.01);
        let mut gamma = vec![0.0; DOF];
        gamma[4] = 0.04;
        assert!((weighted_acceleration_deviation(&q, &b, &gamma).unwrap() - want).abs() < 1e-15);
    }
}
