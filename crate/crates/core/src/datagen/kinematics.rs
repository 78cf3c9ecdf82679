//! Forward kinematics on the standard skeleton's rest pose.

use nalgebra::{Rotation3, Vector3};

use crate::motion::{standard_skeleton, DOF, JOINT_COUNT};

/// Rest-pose offset of every joint from its parent (root: world position),
/// meters, y up, facing +z, character's left on +x.
pub(crate) const REST_OFFSETS: [[f64; 3]; JOINT_COUNT] = [
    [0.0, 0.95, 0.0],   // pelvis
    [0.0, 0.12, 0.0],   // spine
    [0.0, 0.15, 0.0],   // chest
    [0.0, 0.20, 0.0],   // neck
    [0.0, 0.12, 0.0],   // head
    [0.04, 0.16, 0.0],  // left_clavicle
    [0.14, 0.0, 0.0],   // left_shoulder
    [0.0, -0.28, 0.0],  // left_elbow
    [0.0, -0.25, 0.0],  // left_wrist
    [-0.04, 0.16, 0.0], // right_clavicle
    [-0.14, 0.0, 0.0],  // right_shoulder
    [0.0, -0.28, 0.0],  // right_elbow
    [0.0, -0.25, 0.0],  // right_wrist
    [0.10, -0.06, 0.0], // left_hip
    [0.0, -0.42, 0.0],  // left_knee
    [0.0, -0.40, 0.0],  // left_ankle
    [0.0, -0.05, 0.10], // left_foot
    [-0.10, -0.06, 0.0],
    [0.0, -0.42, 0.0],
    [0.0, -0.40, 0.0],
    [0.0, -0.05, 0.10],
    [0.0, -0.08, 0.0], // left_hand
    [0.0, -0.08, 0.0], // right_hand
    [0.0, 0.0, 0.07],  // left_toe
    [0.0, 0.0, 0.07],  // right_toe
];

/// Root placement plus one local rotation per joint. A joint's rotation
/// turns the offsets of all of its descendants.
#[derive(Debug, Clone)]
pub(crate) struct Pose {
    pub root_shift: Vector3<f64>,
    pub root_rotation: Rotation3<f64>,
    pub local: [Rotation3<f64>; JOINT_COUNT],
}

impl Pose {
    pub fn rest() -> Self {
        Self {
            root_shift: Vector3::zeros(),
            root_rotation: Rotation3::identity(),
            local: [Rotation3::identity(); JOINT_COUNT],
        }
    }

    pub fn rotate(&mut self, joint: usize, r: Rotation3<f64>) {
        self.local[joint] = self.local[joint] * r;
    }

    /// World joint positions, joint-major.
    pub fn positions(&self) -> [f64; DOF] {
        let skeleton = standard_skeleton();
        let mut global = [Rotation3::identity(); JOINT_COUNT];
        let mut pos = [Vector3::zeros(); JOINT_COUNT];
        // Parents precede children in the standard skeleton.
        for j in 0..JOINT_COUNT {
            let offset = Vector3::from(REST_OFFSETS[j]);
            match skeleton.parent(j) {
                None => {
                    global[j] = self.root_rotation * self.local[j];
                    pos[j] = offset + self.root_shift;
                }
                Some(p) => {
                    global[j] = global[p] * self.local[j];
                    pos[j] = pos[p] + global[p] * offset;
                }
            }
        }
        let mut out = [0.0; DOF];
        for (j, p) in pos.iter().enumerate() {
            out[3 * j..3 * j + 3].copy_from_slice(p.as_slice());
        }
        out
    }
}

pub(crate) fn rx(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), a)
}

pub(crate) fn ry(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), a)
}

pub(crate) fn rz(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::bone_lengths;

    #[test]
    fn rest_pose_height_and_bones() {
        let p = Pose::rest().positions();
        let head_y = p[3 * 4 + 1];
        assert!((head_y - 1.54).abs() < 1e-12);
        let lengths = bone_lengths(&p, standard_skeleton()).unwrap().lengths;
        for (k, b) in standard_skeleton().bones().iter().enumerate() {
            let o = REST_OFFSETS[b.child];
            let expected = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt();
            assert!((lengths[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rotations_preserve_bone_lengths() {
        let rest = bone_lengths(&Pose::rest().positions(), standard_skeleton()).unwrap();
        let mut pose = Pose::rest();
        for j in 0..JOINT_COUNT {
            pose.rotate(j, rx(0.3 * j as f64) * ry(0.1) * rz(-0.2 * j as f64));
        }
        pose.root_shift = Vector3::new(1.0, 0.5, -2.0);
        let moved = bone_lengths(&pose.positions(), standard_skeleton()).unwrap();
        for (a, b) in rest.lengths.iter().zip(&moved.lengths) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn left_abduction_moves_arm_outward() {
        let mut pose = Pose::rest();
        pose.rotate(6, rz(1.2));
        let p = pose.positions();
        let rest = Pose::rest().positions();
        assert!(p[3 * 8] > rest[3 * 8] + 0.2);
    }
}
