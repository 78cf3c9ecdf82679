//! Skeletal motion data model.
//!
//! A [`Motion`] is `M` frames of 25 stacked 3D joint positions (75 DoFs per
//! frame, joint-major: joint 0 x,y,z, joint 1 x,y,z, ...) in meters.

mod io;
mod skeleton;

pub use io::{load_motion, load_motion_document, save_motion, save_motion_document, MotionDocument, MOTION_FORMAT_VERSION};
pub use skeleton::{standard_skeleton, Bone, Skeleton, SKELETON_FORMAT_VERSION};

use thiserror::Error;

use crate::Scalar;

pub const JOINT_COUNT: usize = 25;
pub const BONE_COUNT: usize = 24;
pub const DOF: usize = 3 * JOINT_COUNT;
/// Shortest motion that still has a 4th-order forward difference.
pub const MIN_FRAMES: usize = 8;
pub const MAX_DIFF_ORDER: usize = 4;

pub const SPINAL_WEIGHT: f64 = 0.04;
pub const OTHER_WEIGHT: f64 = 0.02;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("invalid motion{}: {reason}", frame.map(|f| format!(" (frame {f})")).unwrap_or_default())]
    InvalidMotion { frame: Option<usize>, reason: String },
    #[error("unsupported difference order {order} for a {frames}-frame motion")]
    UnsupportedOrder { order: usize, frames: usize },
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MotionError {
    fn invalid(frame: Option<usize>, reason: impl Into<String>) -> Self {
        MotionError::InvalidMotion {
            frame,
            reason: reason.into(),
        }
    }
}

/// A labeled sequence of poses on the standard skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion<T> {
    id: String,
    fps: f64,
    label: Option<usize>,
    frames: Vec<T>,
}

impl<T: Scalar> Motion<T> {
    /// `frames` is the row-major `M x 75` coordinate buffer.
    pub fn new(
        id: impl Into<String>,
        fps: f64,
        label: Option<usize>,
        frames: Vec<T>,
    ) -> Result<Self, MotionError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(MotionError::invalid(None, format!("fps must be positive, got {fps}")));
        }
        if frames.len() % DOF != 0 {
            return Err(MotionError::invalid(
                Some(frames.len() / DOF),
                format!("buffer length {} is not a multiple of {DOF}", frames.len()),
            ));
        }
        let m = frames.len() / DOF;
        if m < MIN_FRAMES {
            return Err(MotionError::invalid(None, format!("{m} frames, need at least {MIN_FRAMES}")));
        }
        if let Some(i) = frames.iter().position(|v| !v.is_finite()) {
            return Err(MotionError::invalid(
                Some(i / DOF),
                format!("non-finite coordinate at dof {}", i % DOF),
            ));
        }
        Ok(Self {
            id: id.into(),
            fps,
            label,
            frames,
        })
    }

    pub fn from_rows(
        id: impl Into<String>,
        fps: f64,
        label: Option<usize>,
        rows: &[Vec<T>],
    ) -> Result<Self, MotionError> {
        if let Some(i) = rows.iter().position(|r| r.len() != DOF) {
            return Err(MotionError::invalid(
                Some(i),
                format!("frame has {} values, expected {DOF}", rows[i].len()),
            ));
        }
        Self::new(id, fps, label, rows.concat())
    }

    /// Same metadata, new coordinates.
    pub fn with_frames(&self, frames: Vec<T>) -> Result<Self, MotionError> {
        if frames.len() != self.frames.len() {
            return Err(MotionError::invalid(
                None,
                format!("replacement buffer has {} values, expected {}", frames.len(), self.frames.len()),
            ));
        }
        Self::new(self.id.clone(), self.fps, self.label, frames)
    }

    pub fn cast<U: Scalar>(&self) -> Motion<U> {
        Motion {
            id: self.id.clone(),
            fps: self.fps,
            label: self.label,
            frames: self.frames.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn set_label(&mut self, label: Option<usize>) {
        self.label = label;
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len() / DOF
    }

    pub fn frames(&self) -> &[T] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[T] {
        &self.frames[i * DOF..(i + 1) * DOF]
    }

    pub fn joint(&self, frame: usize, joint: usize) -> [T; 3] {
        let o = frame * DOF + 3 * joint;
        [self.frames[o], self.frames[o + 1], self.frames[o + 2]]
    }

    pub fn into_frames(self) -> Vec<T> {
        self.frames
    }
}

/// Order-`n` forward differences of a motion, `(M - n) x 75`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSequence<T> {
    pub order: usize,
    pub values: Vec<T>,
}

impl<T> DerivativeSequence<T> {
    pub fn rows(&self) -> usize {
        self.values.len() / DOF
    }
}

/// Per-bone lengths of one frame, in bone order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneLengthFrame<T> {
    pub lengths: Vec<T>,
}

/// Euclidean length of every bone of `skeleton` in one `3 * joints` frame.
pub fn bone_lengths<T: Scalar>(frame: &[T], skeleton: &Skeleton) -> Result<BoneLengthFrame<T>, MotionError> {
    if frame.len() != skeleton.dof() {
        return Err(MotionError::invalid(
            None,
            format!("frame has {} values, skeleton needs {}", frame.len(), skeleton.dof()),
        ));
    }
    if let Some(i) = frame.iter().position(|v| !v.is_finite()) {
        return Err(MotionError::invalid(None, format!("non-finite coordinate at dof {i}")));
    }
    let lengths = skeleton
        .bones()
        .iter()
        .map(|b| {
            let (c, p) = (3 * b.child, 3 * b.parent);
            (0..3)
                .map(|k| {
                    let d = frame[c + k] - frame[p + k];
                    d * d
                })
                .sum::<T>()
                .sqrt()
        })
        .collect();
    Ok(BoneLengthFrame { lengths })
}

/// Applies the first difference `x[t+1] - x[t]` `order` times to a row-major
/// `rows x cols` buffer. Returns `(rows - order) x cols` values.
pub fn difference_rows<T: Scalar>(data: &[T], cols: usize, order: usize) -> Vec<T> {
    let mut cur = data.to_vec();
    for _ in 0..order {
        let rows = cur.len() / cols;
        if rows == 0 {
            break;
        }
        cur = (0..(rows - 1) * cols).map(|i| cur[i + cols] - cur[i]).collect();
    }
    cur
}

/// Positional forward differences (not scaled by fps).
pub fn forward_difference<T: Scalar>(motion: &Motion<T>, order: usize) -> Result<DerivativeSequence<T>, MotionError> {
    let m = motion.frame_count();
    if order > MAX_DIFF_ORDER || m <= order {
        return Err(MotionError::UnsupportedOrder { order, frames: m });
    }
    Ok(DerivativeSequence {
        order,
        values: difference_rows(motion.frames(), DOF, order),
    })
}

/// Per-DoF weights for an arbitrary joint count: the 3 DoFs of each joint in
/// `spinal` get `spinal_weight`, the rest `other_weight`.
pub fn joint_weights_for<T: Scalar>(joint_count: usize, spinal: &[usize], spinal_weight: T, other_weight: T) -> Vec<T> {
    (0..3 * joint_count)
        .map(|d| if spinal.contains(&(d / 3)) { spinal_weight } else { other_weight })
        .collect()
}

pub fn joint_weight_vector<T: Scalar>(skeleton: &Skeleton, spinal_weight: T, other_weight: T) -> Vec<T> {
    joint_weights_for(skeleton.joint_count(), skeleton.spinal_joints(), spinal_weight, other_weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn motion_from_fn(m: usize, f: impl Fn(usize, usize) -> f64) -> Motion<f64> {
        let frames = (0..m * DOF).map(|i| f(i / DOF, i % DOF)).collect();
        Motion::new("t", 30.0, None, frames).unwrap()
    }

    #[test]
    fn unit_bone_length() {
        let s = standard_skeleton();
        let mut frame = vec![0.0; DOF];
        frame[3] = 2.0; // joint 1 at (2,0,0); bone 0 is (1, 0)
        let bl = bone_lengths(&frame, s).unwrap();
        assert_eq!(s.bones()[0], Bone { child: 1, parent: 0 });
        assert_eq!(bl.lengths[0], 2.0);
    }

    #[test]
    fn coincident_joints_have_zero_length() {
        let bl = bone_lengths(&[0.0f64; DOF], standard_skeleton()).unwrap();
        assert_eq!(bl.lengths, vec![0.0; BONE_COUNT]);
    }

    #[test]
    fn bone_lengths_match_naive_oracle() {
        let s = standard_skeleton();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let frame: Vec<f64> = (0..DOF).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bl = bone_lengths(&frame, s).unwrap();
            for (k, b) in s.bones().iter().enumerate() {
                let dx = frame[3 * b.child] - frame[3 * b.parent];
                let dy = frame[3 * b.child + 1] - frame[3 * b.parent + 1];
                let dz = frame[3 * b.child + 2] - frame[3 * b.parent + 2];
                let naive = (dx * dx + dy * dy + dz * dz).sqrt();
                assert!((bl.lengths[k] - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bone_lengths_reject_non_finite() {
        let mut frame = vec![0.0; DOF];
        frame[10] = f64::NAN;
        assert!(matches!(
            bone_lengths(&frame, standard_skeleton()),
            Err(MotionError::InvalidMotion { .. })
        ));
    }

    #[test]
    fn constant_motion_has_zero_velocity() {
        let m = motion_from_fn(10, |_, d| d as f64 * 0.1);
        let d1 = forward_difference(&m, 1).unwrap();
        assert_eq!(d1.rows(), 9);
        assert!(d1.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_ramp_differences() {
        let m = motion_from_fn(12, |t, _| 3.0 * t as f64);
        assert!(forward_difference(&m, 1).unwrap().values.iter().all(|&v| v == 3.0));
        assert!(forward_difference(&m, 2).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_second_difference_is_two() {
        let m = motion_from_fn(16, |t, _| (t * t) as f64);
        let d2 = forward_difference(&m, 2).unwrap();
        assert_eq!(d2.rows(), 14);
        assert!(d2.values.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn order_zero_is_verbatim_and_bad_orders_fail() {
        let m = motion_from_fn(8, |t, d| (t * 100 + d) as f64);
        assert_eq!(forward_difference(&m, 0).unwrap().values, m.frames());
        assert!(forward_difference(&m, 4).is_ok());
        assert!(matches!(
            forward_difference(&m, 5),
            Err(MotionError::UnsupportedOrder { order: 5, frames: 8 })
        ));
    }

    #[test]
    fn joint_weights() {
        let s = standard_skeleton();
        let w = joint_weight_vector(s, SPINAL_WEIGHT, OTHER_WEIGHT);
        assert_eq!(w.len(), DOF);
        assert!(w[..15].iter().all(|&v| v == 0.04));
        assert!(w[15..].iter().all(|&v| v == 0.02));
        let only_root = joint_weights_for(25, &[0], 0.04, 0.02);
        assert!(only_root[..3].iter().all(|&v| v == 0.04));
        assert!(only_root[3..].iter().all(|&v| v == 0.02));
        assert!(joint_weight_vector(s, 1.0, 1.0).iter().all(|&v| v == 1.0));
        assert!(joint_weights_for(25, &[], 0.5, 0.25).iter().all(|&v| v == 0.25));
    }

    #[test]
    fn motion_validation() {
        assert!(Motion::<f64>::new("a", 30.0, None, vec![0.0; 7 * DOF]).is_err());
        assert!(Motion::<f64>::new("a", 0.0, None, vec![0.0; 8 * DOF]).is_err());
        assert!(Motion::<f64>::new("a", 30.0, None, vec![0.0; 8 * DOF - 1]).is_err());
        let mut frames = vec![0.0; 9 * DOF];
        frames[5 * DOF + 4] = f64::INFINITY;
        match Motion::new("a", 30.0, None, frames) {
            Err(MotionError::InvalidMotion { frame: Some(5), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    fn rigid(frame: &[f64], angles: (f64, f64, f64), shift: [f64; 3]) -> Vec<f64> {
        let rot = nalgebra::Rotation3::from_euler_angles(angles.0, angles.1, angles.2);
        frame
            .chunks(3)
            .flat_map(|p| {
                let v = rot * nalgebra::Vector3::new(p[0], p[1], p[2]);
                [v.x + shift[0], v.y + shift[1], v.z + shift[2]]
            })
            .collect()
    }

    proptest! {
        #[test]
        fn bone_lengths_rigid_invariant(
            seed in any::<u64>(),
            a in -3.2f64..3.2, b in -1.5f64..1.5, c in -3.2f64..3.2,
            sx in -5.0f64..5.0, sy in -5.0f64..5.0, sz in -5.0f64..5.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frame: Vec<f64> = (0..DOF).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = standard_skeleton();
            let before = bone_lengths(&frame, s).unwrap();
            let after = bone_lengths(&rigid(&frame, (a, b, c), [sx, sy, sz]), s).unwrap();
            for (x, y) in before.lengths.iter().zip(&after.lengths) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn difference_annihilates_low_degree_polynomials(
            order in 1usize..=4,
            coeffs in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            // degree order-1 polynomial in t, different per DoF
            let m = motion_from_fn(12, |t, d| {
                let t = t as f64;
                (0..order).map(|k| coeffs[k] * (1.0 + d as f64 * 0.01) * t.powi(k as i32)).sum()
            });
            let diff = forward_difference(&m, order).unwrap();
            for v in diff.values {
                prop_assert!(v.abs() < 1e-9);
            }
        }

        #[test]
        fn difference_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, order in 0usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q: Vec<f64> = (0..10 * DOF).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..10 * DOF).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = q.iter().zip(&r).map(|(x, y)| a * x + b * y).collect();
            let dq = difference_rows(&q, DOF, order);
            let dr = difference_rows(&r, DOF, order);
            let dm = difference_rows(&mix, DOF, order);
            for i in 0..dm.len() {
                prop_assert!((dm[i] - (a * dq[i] + b * dr[i])).abs() < 1e-12);
            }
        }
    }
}
