//! Small differentiable action classifiers over raw joint positions.
//!
//! A [`Classifier`] maps a batch `(B, M, 75)` of motions to logits `(B, C)`.
//! Forward passes are recorded on an autograd [`Graph`] so both the training
//! loop (gradients wrt weights) and the attack (gradients wrt the input) share
//! one definition.

mod checkpoint;
mod layers;
mod train;

pub use checkpoint::{decode as decode_checkpoint, encode as encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC};
pub use layers::{bones_layer, graph_conv_stack};
pub use train::{argmax, evaluate, train, Evaluation, TrainConfig, TrainingMetadata};

use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autograd::{AutogradError, Graph, Tensor, Var};
use crate::motion::{standard_skeleton, Motion, DOF, JOINT_COUNT};
use crate::Scalar;

pub const HIDDEN: usize = 64;
pub const KERNEL: usize = 5;
pub const GCN_WIDTHS: [usize; 2] = [16, 32];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model input: {0}")]
    Input(String),
    #[error("{path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("training config: {0}")]
    Config(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    FrameMlp,
    TConvNet,
    SkelGcn,
    BoneTConvNet,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::FrameMlp,
        Architecture::TConvNet,
        Architecture::SkelGcn,
        Architecture::BoneTConvNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::FrameMlp => "frame-mlp",
            Architecture::TConvNet => "tconv",
            Architecture::SkelGcn => "skel-gcn",
            Architecture::BoneTConvNet => "bone-tconv",
        }
    }

    /// Stable numeric tag used in checkpoint headers.
    pub fn code(self) -> u32 {
        match self {
            Architecture::FrameMlp => 1,
            Architecture::TConvNet => 2,
            Architecture::SkelGcn => 3,
            Architecture::BoneTConvNet => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == code)
    }

    /// Names and shapes of the parameter tensors, in storage order.
    pub fn parameter_shapes(self, class_count: usize) -> Vec<(&'static str, Vec<usize>)> {
        let tconv = |cin: usize| {
            vec![
                ("conv1.weight", vec![KERNEL, cin, HIDDEN]),
                ("conv1.bias", vec![HIDDEN]),
                ("conv2.weight", vec![KERNEL, HIDDEN, HIDDEN]),
                ("conv2.bias", vec![HIDDEN]),
                ("head.weight", vec![HIDDEN, class_count]),
                ("head.bias", vec![class_count]),
            ]
        };
        match self {
            Architecture::FrameMlp => vec![
                ("fc1.weight", vec![DOF, HIDDEN]),
                ("fc1.bias", vec![HIDDEN]),
                ("fc2.weight", vec![HIDDEN, HIDDEN]),
                ("fc2.bias", vec![HIDDEN]),
                ("head.weight", vec![HIDDEN, class_count]),
                ("head.bias", vec![class_count]),
            ],
            Architecture::TConvNet => tconv(DOF),
            Architecture::BoneTConvNet => tconv(DOF + 3 * (JOINT_COUNT - 1)),
            Architecture::SkelGcn => vec![
                ("gc1.weight", vec![3, GCN_WIDTHS[0]]),
                ("gc2.weight", vec![GCN_WIDTHS[0], GCN_WIDTHS[1]]),
                ("head.weight", vec![JOINT_COUNT * GCN_WIDTHS[1], class_count]),
                ("head.bias", vec![class_count]),
            ],
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|a| a.name()).collect();
                ModelError::Config(format!("unknown architecture {s:?} (expected one of {})", known.join(", ")))
            })
    }
}

/// A classifier: architecture, weights and training record.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    architecture: Architecture,
    class_count: usize,
    params: Vec<Tensor<T>>,
    pub metadata: TrainingMetadata,
}

impl<T: Scalar> Classifier<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn init(architecture: Architecture, class_count: usize, seed: u64) -> Result<Self, ModelError> {
        if class_count < 2 {
            return Err(ModelError::Config(format!("class_count must be >= 2, got {class_count}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = architecture
            .parameter_shapes(class_count)
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".bias") {
                    return Tensor::zeros(shape);
                }
                let fan_out = *shape.last().expect("weights are at least 2-d");
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Tensor::from_fn(shape, |_| T::of(rng.random_range(-limit..limit)))
            })
            .collect();
        Ok(Self {
            architecture,
            class_count,
            params,
            metadata: TrainingMetadata::untrained(seed),
        })
    }

    /// Checks every tensor against the architecture's shape table.
    pub fn from_parts(
        architecture: Architecture,
        class_count: usize,
        params: Vec<Tensor<T>>,
        metadata: TrainingMetadata,
    ) -> Result<Self, ModelError> {
        let shapes = architecture.parameter_shapes(class_count);
        if shapes.len() != params.len() {
            return Err(ModelError::Config(format!(
                "{architecture} expects {} tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in shapes.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(ModelError::Config(format!("{name}: shape {:?}, expected {shape:?}", p.shape())));
            }
            if !p.is_finite() {
                return Err(ModelError::Config(format!("{name}: non-finite weight")));
            }
        }
        Ok(Self {
            architecture,
            class_count,
            params,
            metadata,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> Classifier<U> {
        Classifier {
            architecture: self.architecture,
            class_count: self.class_count,
            params: self
                .params
                .iter()
                .map(|p| Tensor::from_fn(p.shape().to_vec(), |i| U::of(p.data()[i].as_f64())))
                .collect(),
            metadata: self.metadata.clone(),
        }
    }

    /// Puts the weights on `g`, as variables when `trainable`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { g.variable(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// Logits `(B, C)` for input `x: (B, M, 75)` with weights bound as constants.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var, ModelError> {
        let params = self.bind(g, false);
        self.forward_with(g, x, &params)
    }

    pub fn forward_with(&self, g: &mut Graph<T>, x: Var, params: &[Var]) -> Result<Var, ModelError> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != DOF {
            return Err(ModelError::Input(format!(
                "expected (batch, frames, {DOF}) joint positions, got shape {shape:?}"
            )));
        }
        if shape[0] == 0 || shape[1] == 0 {
            return Err(ModelError::Input(format!("empty input of shape {shape:?}")));
        }
        let (b, m) = (shape[0], shape[1]);
        let p = params;
        let pooled = match self.architecture {
            Architecture::FrameMlp => {
                let h = g.reshape(x, &[b * m, DOF])?;
                let h = g.matmul(h, p[0])?;
                let h = g.add_bias(h, p[1])?;
                let h = g.tanh(h);
                let h = g.matmul(h, p[2])?;
                let h = g.add_bias(h, p[3])?;
                let h = g.tanh(h);
                let h = g.reshape(h, &[b, m, HIDDEN])?;
                g.mean_axis(h, 1)?
            }
            Architecture::TConvNet => temporal_conv(g, x, p)?,
            Architecture::BoneTConvNet => {
                let bones = bones_layer(g, x)?;
                let both = g.concat(&[x, bones], 2)?;
                temporal_conv(g, both, p)?
            }
            Architecture::SkelGcn => {
                let adjacency = standard_skeleton().normalized_adjacency();
                let h = graph_conv_stack(g, x, &adjacency, JOINT_COUNT, &p[..2])?;
                g.mean_axis(h, 1)?
            }
        };
        let n = p.len();
        let logits = g.matmul(pooled, p[n - 2])?;
        Ok(g.add_bias(logits, p[n - 1])?)
    }

    /// Logits of a single motion.
    pub fn logits(&self, motion: &Motion<T>) -> Result<Vec<T>, ModelError> {
        let mut g = Graph::new();
        let x = g.constant(motion_tensor(motion));
        let out = self.forward(&mut g, x)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Arg-max class, ties toward the lowest index.
    pub fn predict(&self, motion: &Motion<T>) -> Result<usize, ModelError> {
        Ok(argmax(&self.logits(motion)?))
    }
}

fn temporal_conv<T: Scalar>(g: &mut Graph<T>, x: Var, p: &[Var]) -> Result<Var, ModelError> {
    let h = g.conv1d(x, p[0])?;
    let h = g.add_bias(h, p[1])?;
    let h = g.relu(h);
    let h = g.conv1d(h, p[2])?;
    let h = g.add_bias(h, p[3])?;
    let h = g.relu(h);
    Ok(g.mean_axis(h, 1)?)
}

/// `(1, M, 75)` tensor holding one motion.
pub fn motion_tensor<T: Scalar>(motion: &Motion<T>) -> Tensor<T> {
    Tensor::new(vec![1, motion.frame_count(), DOF], motion.frames().to_vec()).expect("motion buffers are M x 75")
}

/// Stacks equal-length motions into `(B, M, 75)`.
pub fn batch_tensor<T: Scalar>(motions: &[&Motion<T>]) -> Result<Tensor<T>, ModelError> {
    let m = motions
        .first()
        .ok_or_else(|| ModelError::Input("empty batch".into()))?
        .frame_count();
    if let Some(bad) = motions.iter().find(|x| x.frame_count() != m) {
        return Err(ModelError::Input(format!(
            "motion {} has {} frames, batch uses {m}",
            bad.id(),
            bad.frame_count()
        )));
    }
    let mut data = Vec::with_capacity(motions.len() * m * DOF);
    for x in motions {
        data.extend_from_slice(x.frames());
    }
    Ok(Tensor::new(vec![motions.len(), m, DOF], data)?)
}
