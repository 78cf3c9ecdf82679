//! Joint topology of the skeletons motions are expressed on.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MotionError;

const STD25_JSON: &str = include_str!("../../assets/skeleton_std25.json");

/// Directed bone from a child joint to its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bone {
    pub child: usize,
    pub parent: usize,
}

/// A rooted joint tree.
///
/// Bones are listed in child-index order, one per non-root joint.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    id: String,
    name: String,
    joint_names: Vec<String>,
    parents: Vec<Option<usize>>,
    bones: Vec<Bone>,
    spinal_joints: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkeletonFile {
    format_version: u32,
    name: String,
    skeleton_id: String,
    joint_names: Vec<String>,
    parents: Vec<i64>,
    spinal_joints: Vec<usize>,
}

// Field order matters: the checksum is taken over this exact serialization.
#[derive(Serialize)]
struct CanonicalTopology<'a> {
    joint_names: &'a [String],
    parents: &'a [i64],
    spinal_joints: &'a [usize],
}

pub const SKELETON_FORMAT_VERSION: u32 = 1;

impl Skeleton {
    /// Builds and validates a skeleton. `parents[j] == None` marks the root.
    pub fn new(
        name: impl Into<String>,
        joint_names: Vec<String>,
        parents: Vec<Option<usize>>,
        spinal_joints: Vec<usize>,
    ) -> Result<Self, MotionError> {
        let n = parents.len();
        let bad = |reason: String| Err(MotionError::InvalidSkeleton(reason));
        if n < 2 {
            return bad(format!("need at least 2 joints, got {n}"));
        }
        if joint_names.len() != n {
            return bad(format!("{} joint names for {n} joints", joint_names.len()));
        }
        let roots = parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return bad(format!("expected exactly one root, found {roots}"));
        }
        for (j, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return bad(format!("joint {j} has out-of-range parent {p}"));
                }
            }
        }
        // Every joint must reach the root in fewer than n hops.
        for start in 0..n {
            let mut j = start;
            let mut hops = 0;
            while let Some(p) = parents[j] {
                j = p;
                hops += 1;
                if hops >= n {
                    return bad(format!("cycle through joint {start}"));
                }
            }
        }
        if spinal_joints.is_empty() {
            return bad("spinal joint set is empty".into());
        }
        let mut spinal = spinal_joints;
        spinal.sort_unstable();
        spinal.dedup();
        if let Some(&j) = spinal.iter().find(|&&j| j >= n) {
            return bad(format!("spinal joint {j} out of range"));
        }
        let bones = parents
            .iter()
            .enumerate()
            .filter_map(|(child, p)| p.map(|parent| Bone { child, parent }))
            .collect();
        let mut skeleton = Self {
            id: String::new(),
            name: name.into(),
            joint_names,
            parents,
            bones,
            spinal_joints: spinal,
        };
        skeleton.id = format!("{}-{}", skeleton.name, skeleton.checksum());
        Ok(skeleton)
    }

    fn raw_parents(&self) -> Vec<i64> {
        self.parents
            .iter()
            .map(|p| p.map_or(-1, |p| p as i64))
            .collect()
    }

    fn checksum(&self) -> String {
        let parents = self.raw_parents();
        let canon = serde_json::to_string(&CanonicalTopology {
            joint_names: &self.joint_names,
            parents: &parents,
            spinal_joints: &self.spinal_joints,
        })
        .expect("topology serializes");
        let digest = Sha256::digest(canon.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Parses a skeleton definition file and verifies its `skeleton_id`.
    pub fn from_json_str(text: &str) -> Result<Self, MotionError> {
        let file: SkeletonFile =
            serde_json::from_str(text).map_err(|e| MotionError::InvalidSkeleton(e.to_string()))?;
        if file.format_version != SKELETON_FORMAT_VERSION {
            return Err(MotionError::InvalidSkeleton(format!(
                "unsupported skeleton format version {}",
                file.format_version
            )));
        }
        let parents = file
            .parents
            .iter()
            .map(|&p| match p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(MotionError::InvalidSkeleton(format!("bad parent index {p}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let skeleton = Self::new(file.name, file.joint_names, parents, file.spinal_joints)?;
        if skeleton.id != file.skeleton_id {
            return Err(MotionError::InvalidSkeleton(format!(
                "skeleton_id {} does not match topology checksum {}",
                file.skeleton_id, skeleton.id
            )));
        }
        Ok(skeleton)
    }

    pub fn to_json_string(&self) -> String {
        let file = SkeletonFile {
            format_version: SKELETON_FORMAT_VERSION,
            name: self.name.clone(),
            skeleton_id: self.id.clone(),
            joint_names: self.joint_names.clone(),
            parents: self.raw_parents(),
            spinal_joints: self.spinal_joints.clone(),
        };
        serde_json::to_string_pretty(&file).expect("skeleton serializes")
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn dof(&self) -> usize {
        3 * self.parents.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn spinal_joints(&self) -> &[usize] {
        &self.spinal_joints
    }

    pub fn is_spinal(&self, joint: usize) -> bool {
        self.spinal_joints.binary_search(&joint).is_ok()
    }

    /// Symmetric normalization `D^-1/2 (A + I) D^-1/2` of the bone adjacency,
    /// row-major `joint_count x joint_count`.
    pub fn normalized_adjacency(&self) -> Vec<f64> {
        let n = self.joint_count();
        let mut a = vec![0.0; n * n];
        for j in 0..n {
            a[j * n + j] = 1.0;
        }
        for b in &self.bones {
            a[b.child * n + b.parent] = 1.0;
            a[b.parent * n + b.child] = 1.0;
        }
        let inv_sqrt_deg: Vec<f64> = (0..n)
            .map(|i| 1.0 / a[i * n..(i + 1) * n].iter().sum::<f64>().sqrt())
            .collect();
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
            }
        }
        a
    }
}

/// The toolkit's fixed 25-joint, 24-bone skeleton.
///
/// Joints 0-4 run pelvis to head and form the spinal set; 5-8 and 9-12 are
/// the left and right arm chains, 13-16 and 17-20 the leg chains, and 21-24
/// the hand and toe end sites.
pub fn standard_skeleton() -> &'static Skeleton {
    static STD: OnceLock<Skeleton> = OnceLock::new();
    STD.get_or_init(|| Skeleton::from_json_str(STD25_JSON).expect("shipped skeleton file is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_skeleton_shape() {
        let s = standard_skeleton();
        assert_eq!(s.joint_count(), 25);
        assert_eq!(s.bones().len(), 24);
        assert_eq!(s.spinal_joints(), &[0, 1, 2, 3, 4]);
        for j in 1..25 {
            assert!(s.parent(j).unwrap() < j, "joint {j}");
        }
        assert_eq!(s.parent(0), None);
        assert_eq!(s.id(), "std25-e19de8eaa7afb24b");
    }

    #[test]
    fn json_round_trip_keeps_id() {
        let s = standard_skeleton();
        let back = Skeleton::from_json_str(&s.to_json_string()).unwrap();
        assert_eq!(&back, s);
    }

    #[test]
    fn tampered_checksum_rejected() {
        let text = standard_skeleton()
            .to_json_string()
            .replace("\"right_toe\"", "\"right_toes\"");
        assert!(matches!(
            Skeleton::from_json_str(&text),
            Err(MotionError::InvalidSkeleton(_))
        ));
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("j{i}")).collect()
    }

    #[test]
    fn rejects_two_roots_and_cycles() {
        assert!(Skeleton::new("t", names(3), vec![None, None, Some(0)], vec![0]).is_err());
        assert!(Skeleton::new("t", names(3), vec![None, Some(2), Some(1)], vec![0]).is_err());
        assert!(Skeleton::new("t", names(3), vec![None, Some(0), Some(1)], vec![]).is_err());
        assert!(Skeleton::new("t", names(3), vec![None, Some(0), Some(1)], vec![3]).is_err());
    }

    #[test]
    fn adjacency_is_symmetric_with_positive_diagonal() {
        let s = standard_skeleton();
        let a = s.normalized_adjacency();
        let n = s.joint_count();
        for i in 0..n {
            assert!(a[i * n + i] > 0.0);
            for j in 0..n {
                assert!((a[i * n + j] - a[j * n + i]).abs() < 1e-15);
            }
        }
        // pelvis: self + spine + two hips -> degree 4
        assert!((a[0] - 0.25).abs() < 1e-15);
    }
}
