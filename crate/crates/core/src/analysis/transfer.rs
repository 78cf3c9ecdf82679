//! Transferability of adversarial motions from a surrogate to other models.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::attack::{attack_all, strategy_succeeds, AttackConfig, AttackResult, Strategy, StrategySpec};
use crate::autograd::softmax;
use crate::models::{Architecture, Classifier};
use crate::motion::Motion;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTransfer {
    pub target_id: String,
    pub architecture: String,
    /// Target accuracy on the clean origins of the adversarial samples.
    pub clean_accuracy: f64,
    pub success_rate: f64,
    pub successes: usize,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub surrogate_id: String,
    pub surrogate_architecture: String,
    pub strategy: String,
    pub white_box_success_rate: f64,
    pub sample_count: usize,
    pub targets: Vec<TargetTransfer>,
}

/// Does `target` fall for `adversarial` under the strategy's goal? ABN uses
/// the target's own ranking.
pub fn transfer_success<T: Scalar>(
    target: &Classifier<T>,
    adversarial: &Motion<T>,
    strategy: Strategy,
    label: usize,
) -> Result<bool, AnalysisError> {
    let probs = softmax(&target.logits(adversarial)?);
    Ok(strategy_succeeds(strategy, &probs, label))
}

/// One adversarial sample: clean origin, adversarial motion, the concrete
/// strategy it was built with and whether it fooled the surrogate.
pub struct TransferSample<'a, T> {
    pub clean: &'a Motion<T>,
    pub adversarial: &'a Motion<T>,
    pub strategy: Strategy,
    pub white_box_success: bool,
}

/// Scores prepared adversarial samples against each target.
pub fn evaluate_transfer<T: Scalar>(
    surrogate_id: &str,
    surrogate_architecture: Architecture,
    strategy: &str,
    samples: &[TransferSample<'_, T>],
    targets: &[(&str, &Classifier<T>)],
) -> Result<TransferReport, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::Input("no adversarial samples to transfer".into()));
    }
    let n = samples.len();
    let white = samples.iter().filter(|s| s.white_box_success).count();
    let mut out = Vec::with_capacity(targets.len());
    for (id, target) in targets {
        let mut correct = 0;
        let mut successes = 0;
        for s in samples {
            let label = s
                .clean
                .label()
                .ok_or_else(|| AnalysisError::Input(format!("motion {} has no label", s.clean.id())))?;
            correct += usize::from(target.predict(s.clean)? == label);
            successes += usize::from(transfer_success(target, s.adversarial, s.strategy, label)?);
        }
        out.push(TargetTransfer {
            target_id: id.to_string(),
            architecture: target.architecture().to_string(),
            clean_accuracy: correct as f64 / n as f64,
            success_rate: successes as f64 / n as f64,
            successes,
            sample_count: n,
        });
    }
    Ok(TransferReport {
        surrogate_id: surrogate_id.to_string(),
        surrogate_architecture: surrogate_architecture.to_string(),
        strategy: strategy.to_string(),
        white_box_success_rate: white as f64 / n as f64,
        sample_count: n,
        targets: out,
    })
}

/// Attacks `motions` on the surrogate, then scores every target on the
/// results. `motions` should be ones the surrogate classifies correctly.
pub fn transfer_attack<T: Scalar>(
    surrogate: (&str, &Classifier<T>),
    targets: &[(&str, &Classifier<T>)],
    motions: &[&Motion<T>],
    spec: StrategySpec,
    config: &AttackConfig,
) -> Result<(TransferReport, Vec<AttackResult<T>>), AnalysisError> {
    let (sid, smodel) = surrogate;
    if let Some((id, t)) = targets.iter().find(|(_, t)| t.class_count() != smodel.class_count()) {
        return Err(AnalysisError::Input(format!(
            "target {id} has {} classes, surrogate {sid} has {}",
            t.class_count(),
            smodel.class_count()
        )));
    }
    let results = attack_all(smodel, motions, spec, config)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let samples: Vec<TransferSample<'_, T>> = motions
        .iter()
        .zip(&results)
        .map(|(m, r)| TransferSample {
            clean: m,
            adversarial: &r.adversarial,
            strategy: r.strategy,
            white_box_success: r.success,
        })
        .collect();
    let report = evaluate_transfer(sid, smodel.architecture(), &spec.to_string(), &samples, targets)?;
    Ok((report, results))
}
