//! Loss terms of the attack objective, built on an autograd graph.
//!
//! The clean motion `q` is always a constant; only the candidate `q_hat`
//! (a `(1, M, 75)` or `(M, 75)` variable) carries gradients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::autograd::{Graph, Tensor, Var};
use crate::motion::{joint_weight_vector, standard_skeleton, Skeleton, MAX_DIFF_ORDER, OTHER_WEIGHT, SPINAL_WEIGHT};
use crate::Scalar;

pub const DEFAULT_W: f64 = 0.4;
pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_BETA: [f64; MAX_DIFF_ORDER + 1] = [0.6, 0.0, 0.4, 0.0, 0.0];

/// Blend weights of the objective `w * L_c + (1 - w) * L_p`, with
/// `L_p = alpha * l_dyn + (1 - alpha) * l_bone`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptualWeights {
    pub w: f64,
    pub alpha: f64,
    /// Weight of each difference order 0..=4 in `l_dyn`.
    pub beta: [f64; MAX_DIFF_ORDER + 1],
    /// Per-DoF weights applied inside the squared norm of `l_dyn`.
    pub gamma: Vec<f64>,
}

impl Default for PerceptualWeights {
    fn default() -> Self {
        LossPreset::Full.weights(DEFAULT_W, standard_skeleton())
    }
}

impl PerceptualWeights {
    pub fn validate(&self, dof: usize) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::Config(m));
        if !(0.0..=1.0).contains(&self.w) {
            return bad(format!("w must be in [0, 1], got {}", self.w));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if self.beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad(format!("beta entries must be >= 0, got {:?}", self.beta));
        }
        let sum: f64 = self.beta.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return bad(format!("beta must sum to 1, sums to {sum}"));
        }
        if self.gamma.len() != dof {
            return bad(format!("gamma has {} entries, expected {dof}", self.gamma.len()));
        }
        if self.gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad("gamma entries must be finite and >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossPreset {
    #[default]
    Full,
    L2,
    L2Acc,
    L2Bone,
}

impl LossPreset {
    pub const ALL: [LossPreset; 4] = [LossPreset::Full, LossPreset::L2, LossPreset::L2Acc, LossPreset::L2Bone];

    pub fn name(self) -> &'static str {
        match self {
            LossPreset::Full => "full",
            LossPreset::L2 => "l2",
            LossPreset::L2Acc => "l2acc",
            LossPreset::L2Bone => "l2bone",
        }
    }

    /// The preset's perceptual weights with classification blend `w`.
    pub fn weights(self, w: f64, skeleton: &Skeleton) -> PerceptualWeights {
        let ones = vec![1.0; skeleton.dof()];
        let (alpha, beta, gamma) = match self {
            LossPreset::Full => (
                DEFAULT_ALPHA,
                DEFAULT_BETA,
                joint_weight_vector(skeleton, SPINAL_WEIGHT, OTHER_WEIGHT),
            ),
            LossPreset::L2 => (1.0, [1.0, 0.0, 0.0, 0.0, 0.0], ones),
            LossPreset::L2Acc => (1.0, DEFAULT_BETA, ones),
            LossPreset::L2Bone => (DEFAULT_ALPHA, [1.0, 0.0, 0.0, 0.0, 0.0], ones),
        };
        PerceptualWeights { w, alpha, beta, gamma }
    }
}

impl fmt::Display for LossPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossPreset {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| AttackError::Config(format!("unknown loss preset {s:?} (expected full, l2, l2acc or l2bone)")))
    }
}

fn frames_of<T: Scalar>(g: &mut Graph<T>, q_hat: Var, dof: usize) -> Result<(Var, usize), AttackError> {
    let n = g.value(q_hat).numel();
    if dof == 0 || n % dof != 0 {
        return Err(AttackError::Config(format!("candidate with {n} values is not a multiple of {dof} DoFs")));
    }
    Ok((g.reshape(q_hat, &[n / dof, dof])?, n / dof))
}

/// `(1/M) sum_i |Bl(q_i) - Bl(q_hat_i)|^2`.
pub fn bone_loss<T: Scalar>(g: &mut Graph<T>, q: &[T], q_hat: Var, skeleton: &Skeleton) -> Result<Var, AttackError> {
    let (x, m) = frames_of(g, q_hat, skeleton.dof())?;
    if q.len() != m * skeleton.dof() {
        return Err(AttackError::Config(format!("clean motion has {} values, candidate {}", q.len(), m * skeleton.dof())));
    }
    let bones = skeleton.bones();
    let nb = bones.len();
    let children: Vec<usize> = bones.iter().map(|b| b.child).collect();
    let parents: Vec<usize> = bones.iter().map(|b| b.parent).collect();
    let joints = g.reshape(x, &[m, skeleton.joint_count(), 3])?;
    let c = g.gather(joints, 1, &children)?;
    let p = g.gather(joints, 1, &parents)?;
    let d = g.sub(c, p)?;
    let sq = g.square(d);
    let len2 = g.sum_axis(sq, 2)?;
    let len = g.sqrt(len2)?;
    let clean = Tensor::from_fn(vec![m, nb], |i| {
        let (f, b) = (i / nb, &bones[i % nb]);
        let frame = &q[f * skeleton.dof()..(f + 1) * skeleton.dof()];
        (0..3)
            .map(|k| {
                let v = frame[3 * b.child + k] - frame[3 * b.parent + k];
                v * v
            })
            .sum::<T>()
            .sqrt()
    });
    let clean = g.constant(clean);
    let diff = g.sub(len, clean)?;
    let s = g.sum_squares(diff);
    Ok(g.scale(s, T::one() / T::of_usize(m)))
}

/// `sum_n beta_n |gamma (q^n - q_hat^n)|^2` over difference orders with
/// nonzero `beta_n`.
pub fn dyn_loss<T: Scalar>(g: &mut Graph<T>, q: &[T], q_hat: Var, weights: &PerceptualWeights) -> Result<Var, AttackError> {
    let dof = weights.gamma.len();
    let (x, m) = frames_of(g, q_hat, dof)?;
    if q.len() != m * dof {
        return Err(AttackError::Config(format!("clean motion has {} values, candidate {}", q.len(), m * dof)));
    }
    let clean = g.constant(Tensor::new(vec![m, dof], q.to_vec())?);
    let mut diff = g.sub(clean, x)?;
    let gamma = g.constant(Tensor::new(vec![dof], weights.gamma.iter().map(|&v| T::of(v)).collect())?);
    let mut total: Option<Var> = None;
    let mut rows = m;
    for (order, &beta) in weights.beta.iter().enumerate() {
        if order > 0 {
            if rows < 2 {
                if beta > 0.0 {
                    return Err(AttackError::Config(format!("order-{order} differences need more than {m} frames")));
                }
                break;
            }
            let later = g.slice(diff, 0, 1, rows - 1)?;
            let earlier = g.slice(diff, 0, 0, rows - 1)?;
            diff = g.sub(later, earlier)?;
            rows -= 1;
        }
        if beta == 0.0 {
            continue;
        }
        let gb = g.broadcast(gamma, &[rows, dof])?;
        let weighted = g.mul(diff, gb)?;
        let s = g.sum_squares(weighted);
        let term = g.scale(s, T::of(beta));
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    Ok(match total {
        Some(t) => t,
        None => g.constant(Tensor::scalar(T::zero())),
    })
}

/// Graph nodes of the perceptual loss and its two parts.
#[derive(Debug, Clone, Copy)]
pub struct PerceptualTerms {
    pub total: Var,
    pub dynamics: Var,
    pub bone: Var,
}

pub fn perceptual_loss<T: Scalar>(
    g: &mut Graph<T>,
    q: &[T],
    q_hat: Var,
    skeleton: &Skeleton,
    weights: &PerceptualWeights,
) -> Result<PerceptualTerms, AttackError> {
    let dynamics = dyn_loss(g, q, q_hat, weights)?;
    let bone = bone_loss(g, q, q_hat, skeleton)?;
    let a = g.scale(dynamics, T::of(weights.alpha));
    let b = g.scale(bone, T::of(1.0 - weights.alpha));
    let total = g.add(a, b)?;
    Ok(PerceptualTerms { total, dynamics, bone })
}

fn flat_logits<T: Scalar>(g: &mut Graph<T>, logits: Var) -> Result<(Var, usize), AttackError> {
    let n = g.value(logits).numel();
    if n < 2 {
        return Err(AttackError::Config(format!("need at least 2 logits, got {n}")));
    }
    Ok((g.reshape(logits, &[n])?, n))
}

/// `sum_i p_i log softmax(z_hat)_i` for a fixed distribution `p`; minimizing
/// it maximizes the cross-entropy between `p` and the candidate's prediction.
pub fn ab_loss<T: Scalar>(g: &mut Graph<T>, clean_distribution: &[T], logits_hat: Var) -> Result<Var, AttackError> {
    let (z, n) = flat_logits(g, logits_hat)?;
    if clean_distribution.len() != n {
        return Err(AttackError::Config(format!(
            "distribution has {} classes, logits {n}",
            clean_distribution.len()
        )));
    }
    let logp = g.log_softmax(z, 0)?;
    let weighted = g.mul_const(logp, Tensor::vector(clean_distribution.to_vec()))?;
    Ok(g.sum(weighted))
}

/// Negative entropy `sum_i p_i log p_i` of the candidate's prediction.
pub fn abn_loss<T: Scalar>(g: &mut Graph<T>, logits_hat: Var) -> Result<Var, AttackError> {
    let (z, _) = flat_logits(g, logits_hat)?;
    let logp = g.log_softmax(z, 0)?;
    let p = g.softmax(z, 0)?;
    let plogp = g.mul(p, logp)?;
    Ok(g.sum(plogp))
}

/// `-log softmax(z_hat)[target]`.
pub fn sa_loss<T: Scalar>(g: &mut Graph<T>, target: usize, logits_hat: Var) -> Result<Var, AttackError> {
    let (z, n) = flat_logits(g, logits_hat)?;
    if target >= n {
        return Err(AttackError::Config(format!("target class {target} out of range for {n} classes")));
    }
    let logp = g.log_softmax(z, 0)?;
    let picked = g.gather(logp, 0, &[target])?;
    let s = g.sum(picked);
    Ok(g.scale(s, -T::one()))
}

/// True when `label` is not among the `n` most probable classes. Classes
/// tied with `label` rank below it.
pub fn topn_excludes<T: Scalar>(probabilities: &[T], label: usize, n: usize) -> bool {
    let p = probabilities[label];
    probabilities.iter().filter(|&&v| v > p).count() >= n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(g: &Graph<f64>, v: Var) -> f64 {
        g.value(v).item().unwrap()
    }

    #[test]
    fn classification_losses_at_uniform_logits() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::vector(vec![0.7; 8]));
        let p = vec![0.05, 0.1, 0.2, 0.05, 0.1, 0.3, 0.1, 0.1];
        let ab = ab_loss(&mut g, &p, z).unwrap();
        let abn = abn_loss(&mut g, z).unwrap();
        let sa = sa_loss(&mut g, 3, z).unwrap();
        let l8 = 8f64.ln();
        assert!((scalar(&g, ab) + l8).abs() < 1e-12);
        assert!((scalar(&g, abn) + l8).abs() < 1e-12);
        assert!((scalar(&g, sa) - l8).abs() < 1e-12);
    }

    #[test]
    fn peaked_logits_limits() {
        let mut g = Graph::new();
        let mut prev_ab = f64::NEG_INFINITY;
        for peak in [5.0, 20.0, 80.0, 800.0] {
            let mut z = vec![0.0; 8];
            z[2] = peak;
            let z = g.constant(Tensor::vector(z));
            let mut onehot = vec![0.0; 8];
            onehot[2] = 1.0;
            let (ab, sa, abn) = (
                ab_loss(&mut g, &onehot, z).unwrap(),
                sa_loss(&mut g, 2, z).unwrap(),
                abn_loss(&mut g, z).unwrap(),
            );
            let (ab, sa, abn) = (scalar(&g, ab), scalar(&g, sa), scalar(&g, abn));
            assert!(ab <= 0.0 && ab >= prev_ab);
            assert!(sa >= 0.0 && (sa + ab).abs() < 1e-15);
            assert!(abn <= 0.0 && abn.is_finite());
            prev_ab = ab;
        }
        // fully saturated: zero entropy, 0 log 0 = 0
        let z = g.constant(Tensor::vector(vec![0.0, 1e4, 0.0]));
        let abn = abn_loss(&mut g, z).unwrap();
        assert_eq!(scalar(&g, abn), 0.0);
    }

    #[test]
    fn topn_rank_arithmetic() {
        let p = [0.4, 0.3, 0.2, 0.1];
        assert!(!topn_excludes(&p, 2, 3));
        assert!(topn_excludes(&p, 2, 2));
        assert!(!topn_excludes(&p, 0, 1));
        // a tie with the label keeps it inside
        assert!(!topn_excludes(&[0.3, 0.3, 0.4], 1, 2));
    }

    #[test]
    fn presets() {
        let s = standard_skeleton();
        let l2 = LossPreset::L2.weights(0.4, s);
        assert_eq!((l2.alpha, l2.beta), (1.0, [1.0, 0.0, 0.0, 0.0, 0.0]));
        assert!(l2.gamma.iter().all(|&v| v == 1.0));
        let acc = LossPreset::L2Acc.weights(0.4, s);
        assert_eq!((acc.alpha, acc.beta), (1.0, [0.6, 0.0, 0.4, 0.0, 0.0]));
        let bone = LossPreset::L2Bone.weights(0.4, s);
        assert_eq!((bone.alpha, bone.beta[0]), (0.3, 1.0));
        let full = PerceptualWeights::default();
        assert_eq!((full.w, full.alpha), (0.4, 0.3));
        assert_eq!(full.beta.iter().sum::<f64>(), 1.0);
        assert_eq!((full.gamma[0], full.gamma[14], full.gamma[15]), (0.04, 0.04, 0.02));
        assert!("l3".parse::<LossPreset>().is_err());
        for p in LossPreset::ALL {
            assert_eq!(p.name().parse::<LossPreset>().unwrap(), p);
            p.weights(0.4, s).validate(75).unwrap();
        }
    }

    #[test]
    fn weight_validation() {
        let mut w = PerceptualWeights::default();
        w.beta = [0.5, 0.0, 0.4, 0.0, 0.0];
        assert!(w.validate(75).is_err());
        let mut w = PerceptualWeights::default();
        w.alpha = 1.5;
        assert!(w.validate(75).is_err());
        let w = PerceptualWeights::default();
        assert!(w.validate(72).is_err());
    }
}
