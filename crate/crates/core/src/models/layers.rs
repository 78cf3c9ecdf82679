//! Parameter-free and graph layers shared by the architectures.

use crate::autograd::{Graph, Tensor, Var};
use crate::motion::{standard_skeleton, DOF, JOINT_COUNT};
use crate::Scalar;

use super::ModelError;

/// Bone vectors `child - parent` of the standard skeleton:
/// `(B, M, 75) -> (B, M, 72)`. No parameters; gradients reach the joints.
pub fn bones_layer<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<Var, ModelError> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 || shape[2] != DOF {
        return Err(ModelError::Input(format!("bones layer expects (batch, frames, {DOF}), got {shape:?}")));
    }
    let (b, m) = (shape[0], shape[1]);
    let bones = standard_skeleton().bones();
    let children: Vec<usize> = bones.iter().map(|bn| bn.child).collect();
    let parents: Vec<usize> = bones.iter().map(|bn| bn.parent).collect();
    let joints = g.reshape(x, &[b, m, JOINT_COUNT, 3])?;
    let c = g.gather(joints, 2, &children)?;
    let p = g.gather(joints, 2, &parents)?;
    let d = g.sub(c, p)?;
    Ok(g.reshape(d, &[b, m, 3 * bones.len()])?)
}

/// Per-frame graph convolutions `H' = relu(A H W)` for each weight in
/// `weights`, starting from `H = x` viewed as `(joints, 3)` per frame.
///
/// `adjacency` is the row-major `joints x joints` propagation matrix.
/// Returns `(B, M, joints * width_last)`, joint-major.
pub fn graph_conv_stack<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    adjacency: &[f64],
    joints: usize,
    weights: &[Var],
) -> Result<Var, ModelError> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 || shape[2] != 3 * joints {
        return Err(ModelError::Input(format!(
            "graph convolution expects (batch, frames, {}), got {shape:?}",
            3 * joints
        )));
    }
    if adjacency.len() != joints * joints {
        return Err(ModelError::Input(format!(
            "adjacency has {} entries for {joints} joints",
            adjacency.len()
        )));
    }
    let (b, m) = (shape[0], shape[1]);
    let n = b * m;
    let a = g.constant(Tensor::new(vec![joints, joints], adjacency.iter().map(|&v| T::of(v)).collect())?);
    let h = g.reshape(x, &[n, joints, 3])?;
    let h = g.permute(h, &[1, 0, 2])?;
    let mut h = g.reshape(h, &[joints, n * 3])?;
    let mut width = 3;
    for &w in weights {
        let out = g.shape(w)[1];
        let mixed = g.matmul(a, h)?;
        let rows = g.reshape(mixed, &[joints * n, width])?;
        let z = g.matmul(rows, w)?;
        let z = g.relu(z);
        h = g.reshape(z, &[joints, n * out])?;
        width = out;
    }
    let h = g.reshape(h, &[joints, n, width])?;
    let h = g.permute(h, &[1, 0, 2])?;
    Ok(g.reshape(h, &[b, m, joints * width])?)
}
