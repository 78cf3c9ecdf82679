//! Joint displacement statistics and their correlation with the clean
//! motion's per-joint speed and acceleration.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::motion::{difference_rows, standard_skeleton, Motion, DOF, JOINT_COUNT};
use crate::Scalar;

/// Per joint, the Euclidean norm of its displacement over all frames.
pub fn joint_displacements<T: Scalar>(original: &Motion<T>, adversarial: &Motion<T>) -> Result<Vec<f64>, AnalysisError> {
    if original.frames().len() != adversarial.frames().len() {
        return Err(AnalysisError::Input(format!(
            "{} has {} frames, {} has {}",
            original.id(),
            original.frame_count(),
            adversarial.id(),
            adversarial.frame_count()
        )));
    }
    let mut sq = vec![0.0; JOINT_COUNT];
    for (i, (a, b)) in original.frames().iter().zip(adversarial.frames()).enumerate() {
        let d = b.as_f64() - a.as_f64();
        sq[(i % DOF) / 3] += d * d;
    }
    Ok(sq.into_iter().map(f64::sqrt).collect())
}

/// Per joint, the mean over frames of the norm of its order-`order` forward
/// difference (order 1: speed, order 2: acceleration, both per frame).
pub fn joint_motion_profile<T: Scalar>(motion: &Motion<T>, order: usize) -> Vec<f64> {
    let data: Vec<f64> = motion.frames().iter().map(|v| v.as_f64()).collect();
    let diff = difference_rows(&data, DOF, order);
    let rows = diff.len() / DOF;
    let mut acc = vec![0.0; JOINT_COUNT];
    for row in diff.chunks_exact(DOF) {
        for (j, a) in acc.iter_mut().enumerate() {
            let v = &row[3 * j..3 * j + 3];
            *a += (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        }
    }
    acc.into_iter().map(|a| if rows == 0 { 0.0 } else { a / rows as f64 }).collect()
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleProfile {
    pub id: String,
    pub label: Option<usize>,
    pub displacement: Vec<f64>,
    pub speed: Vec<f64>,
    pub acceleration: Vec<f64>,
}

/// Correlation maps over an attacked sample set. Entry `[i][j]` of
/// `disp_vel` correlates joint `i`'s displacement with joint `j`'s clean
/// speed across samples; `None` marks an undefined correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub sample_count: usize,
    pub joint_names: Vec<String>,
    pub disp_disp: Vec<Vec<Option<f64>>>,
    pub disp_vel: Vec<Vec<Option<f64>>>,
    pub disp_acc: Vec<Vec<Option<f64>>>,
    pub displacement_mean: Vec<f64>,
    /// Population standard deviation.
    pub displacement_std: Vec<f64>,
    pub samples: Vec<SampleProfile>,
}

impl CorrelationReport {
    /// Mean of the defined diagonal and off-diagonal entries of a map.
    pub fn diagonal_contrast(map: &[Vec<Option<f64>>]) -> (Option<f64>, Option<f64>) {
        let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let mut diag = Vec::new();
        let mut off = Vec::new();
        for (i, row) in map.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    if i == j { diag.push(*v) } else { off.push(*v) }
                }
            }
        }
        (mean(diag), mean(off))
    }
}

fn column(samples: &[SampleProfile], f: impl Fn(&SampleProfile) -> &Vec<f64>, j: usize) -> Vec<f64> {
    samples.iter().map(|s| f(s)[j]).collect()
}

fn cross_map(samples: &[SampleProfile], other: impl Fn(&SampleProfile) -> &Vec<f64> + Copy) -> Vec<Vec<Option<f64>>> {
    (0..JOINT_COUNT)
        .map(|i| {
            let di = column(samples, |s| &s.displacement, i);
            (0..JOINT_COUNT).map(|j| pearson(&di, &column(samples, other, j))).collect()
        })
        .collect()
}

/// `pairs` holds `(original, adversarial)` motions.
pub fn pearson_correlation_maps<T: Scalar>(pairs: &[(&Motion<T>, &Motion<T>)]) -> Result<CorrelationReport, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::Input("no attacked samples to analyze".into()));
    }
    let samples = pairs
        .iter()
        .map(|(q, a)| {
            Ok(SampleProfile {
                id: a.id().to_string(),
                label: q.label(),
                displacement: joint_displacements(q, a)?,
                speed: joint_motion_profile(q, 1),
                acceleration: joint_motion_profile(q, 2),
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let n = samples.len() as f64;
    let displacement_mean: Vec<f64> = (0..JOINT_COUNT)
        .map(|j| samples.iter().map(|s| s.displacement[j]).sum::<f64>() / n)
        .collect();
    let displacement_std = (0..JOINT_COUNT)
        .map(|j| {
            let m = displacement_mean[j];
            (samples.iter().map(|s| (s.displacement[j] - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    Ok(CorrelationReport {
        sample_count: samples.len(),
        joint_names: standard_skeleton().joint_names().to_vec(),
        disp_disp: cross_map(&samples, |s| &s.displacement),
        disp_vel: cross_map(&samples, |s| &s.speed),
        disp_acc: cross_map(&samples, |s| &s.acceleration),
        displacement_mean,
        displacement_std,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn motion(frames: Vec<f64>) -> Motion<f64> {
        Motion::new("m", 30.0, Some(0), frames).unwrap()
    }

    #[test]
    fn pearson_extremes() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &x), Some(1.0));
        assert_eq!(pearson(&x, &neg), Some(-1.0));
        assert_eq!(pearson(&x, &[3.0; 4]), None);
        assert_eq!(pearson(&[1.0], &[2.0]), None);
    }

    #[test]
    fn single_offset_displacement() {
        let q = motion(vec![0.5; 8 * DOF]);
        let mut a = q.frames().to_vec();
        a[3 * DOF + 3 * 7 + 1] += 0.1;
        let d = joint_displacements(&q, &q.with_frames(a).unwrap()).unwrap();
        for (j, v) in d.iter().enumerate() {
            if j == 7 {
                assert!((v - 0.1).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(joint_displacements(&q, &q).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_velocity_profile() {
        // joint 0 moves 0.03 m per frame along x: speed 0.03, acceleration 0
        let frames: Vec<f64> = (0..10 * DOF).map(|i| if i % DOF == 0 { 0.03 * (i / DOF) as f64 } else { 0.0 }).collect();
        let m = motion(frames);
        let s = joint_motion_profile(&m, 1);
        let a = joint_motion_profile(&m, 2);
        assert!((s[0] - 0.03).abs() < 1e-12 && s[1] == 0.0);
        assert!(a[0].abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(pearson_correlation_maps::<f64>(&[]).is_err());
    }
}
