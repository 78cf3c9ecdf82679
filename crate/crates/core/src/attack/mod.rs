//! Adversarial motion search.
//!
//! Starting from the clean motion, the candidate is moved by Adam on
//! `w * L_c + (1 - w) * L_p`, where `L_c` is a classification loss chosen by
//! the strategy and `L_p` penalizes changes in bone lengths and in weighted
//! positional differences of several orders.

mod batch;
mod losses;

pub use batch::{attack_all, resolve_strategy, StrategySpec};
pub use losses::{
    ab_loss, abn_loss, bone_loss, dyn_loss, perceptual_loss, sa_loss, topn_excludes, LossPreset, PerceptualTerms,
    PerceptualWeights, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_W,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{softmax, AdamConfig, AdamState, AutogradError, Graph, Tensor, Var};
use crate::models::{argmax, Classifier, ModelError};
use crate::motion::{standard_skeleton, Motion, MotionError, Skeleton};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack config: {0}")]
    Config(String),
    #[error("attack precondition: {0}")]
    Contract(String),
    #[error("attack aborted at iteration {iteration}: non-finite {what}")]
    NonFinite { iteration: usize, what: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

/// A concrete attack goal for one motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    /// Any label but the ground truth.
    Ab,
    /// Push the ground truth out of the `n` most probable classes.
    Abn { n: usize },
    /// Make `target` the predicted class.
    Sa { target: usize },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Ab => f.write_str("ab"),
            Strategy::Abn { n } => write!(f, "abn:{n}"),
            Strategy::Sa { target } => write!(f, "sa:{target}"),
        }
    }
}

/// Which distribution the AB loss pushes away from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbTarget {
    /// One-hot at the ground-truth label.
    #[default]
    Hard,
    /// The clean softmax output. Its gradient vanishes at the clean motion,
    /// so an attack started there does not move unless something else
    /// perturbs it first.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub strategy: Strategy,
    pub lr: f64,
    pub max_iters: usize,
    pub preset: LossPreset,
    pub weights: PerceptualWeights,
    pub ab_target: AbTarget,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

pub const DEFAULT_LR: f64 = 0.005;
pub const DEFAULT_MAX_ITERS: usize = 300;

impl AttackConfig {
    pub fn new(strategy: Strategy, preset: LossPreset) -> Self {
        let adam = AdamConfig::default();
        Self {
            strategy,
            lr: DEFAULT_LR,
            max_iters: DEFAULT_MAX_ITERS,
            preset,
            weights: preset.weights(DEFAULT_W, standard_skeleton()),
            ab_target: AbTarget::default(),
            seed: 0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
        }
    }

    pub fn validate(&self, class_count: usize) -> Result<(), AttackError> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(AttackError::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.max_iters == 0 {
            return Err(AttackError::Config("max_iters must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(AttackError::Config("Adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
        }
        match self.strategy {
            Strategy::Abn { n } if n == 0 || n >= class_count => {
                return Err(AttackError::Config(format!("abn:{n} needs 1 <= n < {class_count}")));
            }
            Strategy::Sa { target } if target >= class_count => {
                return Err(AttackError::Config(format!("sa target {target} >= class count {class_count}")));
            }
            _ => {}
        }
        self.weights.validate(standard_skeleton().dof())
    }
}

/// Loss values of one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub total: f64,
    pub classification: f64,
    pub perceptual: f64,
    pub dynamics: f64,
    pub bone: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult<T> {
    pub adversarial: Motion<T>,
    pub strategy: Strategy,
    pub success: bool,
    /// Adam updates performed before stopping.
    pub iterations_used: usize,
    /// Index of the returned iterate (0 is the clean motion).
    pub returned_iteration: usize,
    /// One record per evaluated iterate.
    pub loss_trace: Vec<LossRecord>,
    pub label_trace: Vec<usize>,
    /// Softmax output on the returned iterate.
    pub final_prediction: Vec<T>,
    pub final_losses: LossRecord,
    /// `q_hat - q`, row-major `M x 75`.
    pub displacement: Vec<T>,
    pub clean_label: usize,
}

impl<T: Scalar> AttackResult<T> {
    pub fn adversarial_label(&self) -> usize {
        argmax(&self.final_prediction)
    }
}

/// The classification part of the objective, fixed before iteration 0.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective<T> {
    Ab { clean: Vec<T> },
    Abn,
    Sa { target: usize },
}

impl<T: Scalar> Objective<T> {
    pub fn new(strategy: Strategy, ab_target: AbTarget, label: usize, clean_probs: &[T]) -> Self {
        match strategy {
            Strategy::Ab => Objective::Ab {
                clean: match ab_target {
                    AbTarget::Hard => (0..clean_probs.len())
                        .map(|i| if i == label { T::one() } else { T::zero() })
                        .collect(),
                    AbTarget::Soft => clean_probs.to_vec(),
                },
            },
            Strategy::Abn { .. } => Objective::Abn,
            Strategy::Sa { target } => Objective::Sa { target },
        }
    }

    pub fn classification_loss(&self, g: &mut Graph<T>, logits: Var) -> Result<Var, AttackError> {
        match self {
            Objective::Ab { clean } => ab_loss(g, clean, logits),
            Objective::Abn => abn_loss(g, logits),
            Objective::Sa { target } => sa_loss(g, *target, logits),
        }
    }
}

/// Does `probabilities` meet the strategy's goal for a motion labeled `label`?
pub fn strategy_succeeds<T: Scalar>(strategy: Strategy, probabilities: &[T], label: usize) -> bool {
    match strategy {
        Strategy::Ab => argmax(probabilities) != label,
        Strategy::Abn { n } => topn_excludes(probabilities, label, n),
        Strategy::Sa { target } => argmax(probabilities) == target,
    }
}

/// Graph nodes of the full objective.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveTerms {
    pub total: Var,
    pub classification: Var,
    pub perceptual: PerceptualTerms,
    pub logits: Var,
}

/// Builds `w * L_c + (1 - w) * L_p` for the candidate `q_hat: (1, M, 75)`.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    q: &[T],
    q_hat: Var,
    model: &Classifier<T>,
    objective: &Objective<T>,
    weights: &PerceptualWeights,
    skeleton: &Skeleton,
) -> Result<ObjectiveTerms, AttackError> {
    let logits = model.forward(g, q_hat)?;
    let classification = objective.classification_loss(g, logits)?;
    let perceptual = perceptual_loss(g, q, q_hat, skeleton, weights)?;
    let a = g.scale(classification, T::of(weights.w));
    let b = g.scale(perceptual.total, T::of(1.0 - weights.w));
    let total = g.add(a, b)?;
    Ok(ObjectiveTerms {
        total,
        classification,
        perceptual,
        logits,
    })
}

fn record<T: Scalar>(g: &Graph<T>, t: &ObjectiveTerms) -> LossRecord {
    let v = |x: Var| g.value(x).data()[0].as_f64();
    LossRecord {
        total: v(t.total),
        classification: v(t.classification),
        perceptual: v(t.perceptual.total),
        dynamics: v(t.perceptual.dynamics),
        bone: v(t.perceptual.bone),
    }
}

struct Snapshot<T> {
    iteration: usize,
    frames: Vec<T>,
    probabilities: Vec<T>,
    losses: LossRecord,
}

/// Runs one attack on a motion the model already classifies correctly.
///
/// ABN stops at the first successful iterate. AB and SA keep optimizing for
/// `max_iters` updates and return the successful iterate with the smallest
/// perceptual loss. Without any success the final iterate is returned.
pub fn attack<T: Scalar>(
    model: &Classifier<T>,
    motion: &Motion<T>,
    config: &AttackConfig,
) -> Result<AttackResult<T>, AttackError> {
    config.validate(model.class_count())?;
    let label = motion
        .label()
        .ok_or_else(|| AttackError::Contract(format!("motion {} has no label", motion.id())))?;
    let clean_logits = model.logits(motion)?;
    let clean_pred = argmax(&clean_logits);
    if clean_pred != label {
        return Err(AttackError::Contract(format!(
            "motion {} is labeled {label} but classified as {clean_pred}",
            motion.id()
        )));
    }
    if let Strategy::Sa { target } = config.strategy {
        if target == label {
            return Err(AttackError::Contract(format!("sa target {target} equals the ground truth")));
        }
    }
    let skeleton = standard_skeleton();
    let clean_probs = softmax(&clean_logits);
    let objective = Objective::new(config.strategy, config.ab_target, label, &clean_probs);
    let q = motion.frames();
    let m = motion.frame_count();
    let mut q_hat = q.to_vec();
    let mut adam = AdamState::<T>::new(
        q.len(),
        AdamConfig {
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
        },
    );
    let mut loss_trace = Vec::with_capacity(config.max_iters + 1);
    let mut label_trace = Vec::with_capacity(config.max_iters + 1);
    let mut best: Option<Snapshot<T>> = None;
    let mut last: Option<Snapshot<T>> = None;
    let mut updates = 0;

    for it in 0..=config.max_iters {
        let mut g = Graph::new();
        let x = g.variable(Tensor::new(vec![1, m, q.len() / m], q_hat.clone())?);
        let terms = total_loss(&mut g, q, x, model, &objective, &config.weights, skeleton)?;
        let losses = record(&g, &terms);
        for (what, v) in [
            ("total loss", losses.total),
            ("classification loss", losses.classification),
            ("perceptual loss", losses.perceptual),
        ] {
            if !v.is_finite() {
                return Err(AttackError::NonFinite {
                    iteration: it,
                    what: what.into(),
                });
            }
        }
        let probabilities = softmax(g.value(terms.logits).data());
        label_trace.push(argmax(&probabilities));
        loss_trace.push(losses);
        let success = strategy_succeeds(config.strategy, &probabilities, label);
        if success {
            let better = best.as_ref().is_none_or(|b| losses.perceptual < b.losses.perceptual);
            if better {
                best = Some(Snapshot {
                    iteration: it,
                    frames: q_hat.clone(),
                    probabilities: probabilities.clone(),
                    losses,
                });
            }
            if matches!(config.strategy, Strategy::Abn { .. }) {
                break;
            }
        }
        if it == config.max_iters {
            last = Some(Snapshot {
                iteration: it,
                frames: q_hat.clone(),
                probabilities,
                losses,
            });
            break;
        }
        g.backward(terms.total)?;
        let grad = g.grad(x).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); q.len()]);
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            return Err(AttackError::NonFinite {
                iteration: it,
                what: format!("gradient at dof {}", i % (q.len() / m)),
            });
        }
        if config.lr > 0.0 {
            adam.step(&mut q_hat, &grad)?;
        }
        updates += 1;
    }

    let success = best.is_some();
    let chosen = best.or(last).expect("loop records the final iterate when nothing succeeds");
    let displacement = chosen.frames.iter().zip(q).map(|(a, b)| *a - *b).collect();
    Ok(AttackResult {
        adversarial: motion.with_frames(chosen.frames)?,
        strategy: config.strategy,
        success,
        iterations_used: updates,
        returned_iteration: chosen.iteration,
        loss_trace,
        label_trace,
        final_prediction: chosen.probabilities,
        final_losses: chosen.losses,
        displacement,
        clean_label: label,
    })
}
