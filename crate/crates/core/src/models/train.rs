//! Supervised training with softmax cross-entropy and Adam, plus evaluation.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_tensor, Architecture, Classifier, ModelError};
use crate::autograd::{AdamConfig, AdamState, Graph, Tensor};
use crate::datagen::Dataset;
use crate::motion::Motion;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// L2 penalty coefficient on weight matrices (biases are not decayed).
    /// The synthetic classes are separable enough that weakly regularized
    /// models end up with softmax outputs within 1e-7 of one-hot, where
    /// gradient-based attacks on the log-probability barely move.
    pub weight_decay: f64,
    /// Anneal the learning rate per epoch as `lr * (1 + cos(pi * e / epochs)) / 2`.
    pub cosine_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 0.003,
            seed: 0,
            weight_decay: 0.01,
            cosine_decay: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ModelError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(ModelError::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub config: Option<TrainConfig>,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

impl TrainingMetadata {
    pub fn untrained(seed: u64) -> Self {
        Self {
            seed,
            epochs: 0,
            config: None,
            loss_history: Vec::new(),
            train_accuracy: None,
            test_accuracy: None,
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub sample_count: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate<T: Scalar>(model: &Classifier<T>, motions: &[&Motion<T>]) -> Result<Evaluation, ModelError> {
    let c = model.class_count();
    let mut confusion = vec![vec![0; c]; c];
    let mut correct = 0;
    for m in motions {
        let label = m
            .label()
            .ok_or_else(|| ModelError::Input(format!("motion {} has no label", m.id())))?;
        if label >= c {
            return Err(ModelError::Input(format!("motion {} label {label} >= class count {c}", m.id())));
        }
        let p = model.predict(m)?;
        confusion[label][p] += 1;
        correct += usize::from(p == label);
    }
    Ok(Evaluation {
        accuracy: if motions.is_empty() { 0.0 } else { correct as f64 / motions.len() as f64 },
        sample_count: motions.len(),
        confusion,
    })
}

/// Trains a freshly initialized classifier on the dataset's training split.
pub fn train<T: Scalar>(
    architecture: Architecture,
    dataset: &Dataset<T>,
    config: &TrainConfig,
) -> Result<Classifier<T>, ModelError> {
    config.validate()?;
    let train_set = dataset.train();
    if train_set.is_empty() {
        return Err(ModelError::Config("training split is empty".into()));
    }
    let class_count = dataset.class_count();
    for m in &train_set {
        match m.label() {
            Some(l) if l < class_count => {}
            other => {
                return Err(ModelError::Input(format!("motion {} has label {other:?}", m.id())));
            }
        }
    }
    let mut model = Classifier::<T>::init(architecture, class_count, config.seed)?;
    let decayed: Vec<bool> = architecture
        .parameter_shapes(class_count)
        .iter()
        .map(|(name, _)| name.ends_with(".weight"))
        .collect();
    let adam = AdamConfig::with_lr(config.lr);
    let mut states: Vec<AdamState<T>> = model.params().iter().map(|p| AdamState::new(p.numel(), adam)).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64 + 1);
        let lr = if config.cosine_decay {
            let t = epoch as f64 / config.epochs as f64;
            config.lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        } else {
            config.lr
        };
        for s in &mut states {
            s.config.lr = lr;
        }
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Motion<T>> = chunk.iter().map(|&i| train_set[i]).collect();
            let mut g = Graph::new();
            let x = g.constant(batch_tensor(&batch)?);
            let params = model.bind(&mut g, true);
            let logits = model.forward_with(&mut g, x, &params)?;
            let logp = g.log_softmax(logits, 1)?;
            let scale = -T::one() / T::of_usize(batch.len());
            let mask = Tensor::from_fn(vec![batch.len(), class_count], |i| {
                if batch[i / class_count].label() == Some(i % class_count) {
                    scale
                } else {
                    T::zero()
                }
            });
            let picked = g.mul_const(logp, mask)?;
            let loss = g.sum(picked);
            let value = g.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(ModelError::Divergence { epoch, loss: value });
            }
            total += value * batch.len() as f64;
            g.backward(loss)?;
            let wd = T::of(config.weight_decay);
            for (k, var) in params.iter().enumerate() {
                let mut grad = g.grad(*var).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); model.params()[k].numel()]);
                if decayed[k] && config.weight_decay > 0.0 {
                    for (gr, w) in grad.iter_mut().zip(model.params()[k].data()) {
                        *gr += wd * *w;
                    }
                }
                states[k].step(model.params_mut()[k].data_mut(), &grad)?;
            }
        }
        history.push(total / train_set.len() as f64);
    }

    let train_accuracy = evaluate(&model, &train_set)?.accuracy;
    let test_set = dataset.test();
    let test_accuracy = if test_set.is_empty() {
        None
    } else {
        Some(evaluate(&model, &test_set)?.accuracy)
    };
    model.metadata = TrainingMetadata {
        seed: config.seed,
        epochs: config.epochs,
        config: Some(config.clone()),
        loss_history: history,
        train_accuracy: Some(train_accuracy),
        test_accuracy,
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0; 5]), 0);
        assert_eq!(argmax(&[-1.0, -0.5]), 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn uniform_model_predicts_first_class() {
        let mut model = Classifier::<f64>::init(Architecture::FrameMlp, 3, 0).unwrap();
        let n = model.params().len();
        model.params_mut()[n - 2].data_mut().fill(0.0);
        let motions: Vec<Motion<f64>> = [0, 0, 1, 2, 2, 2]
            .iter()
            .enumerate()
            .map(|(i, &l)| Motion::new(format!("m{i}"), 30.0, Some(l), vec![0.1; 8 * 75]).unwrap())
            .collect();
        let refs: Vec<_> = motions.iter().collect();
        let e = evaluate(&model, &refs).unwrap();
        // Everything lands in class 0, so accuracy is class 0's share.
        assert!((e.accuracy - 2.0 / 6.0).abs() < 1e-15);
        let rows: Vec<usize> = e.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![2, 1, 3]);
    }
}
