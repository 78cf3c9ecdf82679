//! Procedural labeled motion datasets on the standard skeleton.
//!
//! Every sample is built by forward kinematics over fixed bone offsets, so
//! noise-free bone lengths are exactly constant; Gaussian joint noise is added
//! afterwards. All randomness of sample `i` comes from its own stream of a
//! ChaCha generator keyed by the dataset seed, so generation order does not
//! matter.

mod classes;
mod kinematics;
mod store;

pub use classes::CLASS_NAMES;
pub use store::{read_dataset, write_dataset, DatasetManifest, DATASET_FORMAT_VERSION};

use std::f64::consts::TAU;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{Motion, MotionError, MIN_FRAMES};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("dataset config: {0}")]
    Config(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error("{path}: {message}")]
    Store { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub class_count: usize,
    pub samples_per_class: usize,
    pub frame_count: usize,
    pub fps: f64,
    /// Standard deviation of the per-coordinate joint noise, meters.
    pub noise_std: f64,
    /// Amplitude factors are drawn uniformly from `1 ± amplitude_jitter`.
    pub amplitude_jitter: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            class_count: 8,
            samples_per_class: 100,
            frame_count: 48,
            fps: 30.0,
            noise_std: 0.002,
            amplitude_jitter: 0.2,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let fail = |m: String| Err(DatagenError::Config(m));
        if self.class_count < 2 {
            return fail(format!("class_count must be >= 2, got {}", self.class_count));
        }
        if self.class_count > CLASS_NAMES.len() {
            return fail(format!(
                "class_count {} exceeds the {} built-in generators",
                self.class_count,
                CLASS_NAMES.len()
            ));
        }
        if self.samples_per_class < 2 {
            return fail("samples_per_class must be >= 2".into());
        }
        if self.frame_count < MIN_FRAMES {
            return fail(format!("frame_count must be >= {MIN_FRAMES}, got {}", self.frame_count));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return fail(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) {
            return fail(format!("amplitude_jitter must be in [0, 1), got {}", self.amplitude_jitter));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail(format!("test_fraction must be in (0, 1), got {}", self.test_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub spec: DatasetSpec,
    pub class_names: Vec<String>,
    pub motions: Vec<Motion<T>>,
    /// Parallel to `motions`.
    pub split: Vec<Split>,
}

impl<T: Scalar> Dataset<T> {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Motion<T>> + '_ {
        self.motions.iter().zip(&self.split).filter(move |(_, s)| **s == split).map(|(m, _)| m)
    }

    pub fn train(&self) -> Vec<&Motion<T>> {
        self.in_split(Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&Motion<T>> {
        self.in_split(Split::Test).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            spec: self.spec.clone(),
            class_names: self.class_names.clone(),
            motions: self.motions.iter().map(Motion::cast).collect(),
            split: self.split.clone(),
        }
    }

    /// Keeps only the first `n` classes (labels stay valid).
    pub fn restrict_classes(&self, n: usize) -> Dataset<T> {
        let keep: Vec<usize> = (0..self.motions.len())
            .filter(|&i| self.motions[i].label().is_some_and(|l| l < n))
            .collect();
        let mut spec = self.spec.clone();
        spec.class_count = n;
        Dataset {
            spec,
            class_names: self.class_names[..n].to_vec(),
            motions: keep.iter().map(|&i| self.motions[i].clone()).collect(),
            split: keep.iter().map(|&i| self.split[i]).collect(),
        }
    }
}

/// Per-sample generator inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleParams {
    pub phase: f64,
    pub amplitude: f64,
}

/// One noise-free motion of class `class`.
pub fn clean_sample(class: usize, params: SampleParams, frame_count: usize, fps: f64) -> Result<Motion<f64>, DatagenError> {
    if class >= CLASS_NAMES.len() {
        return Err(DatagenError::Config(format!("no generator for class {class}")));
    }
    let mut frames = Vec::with_capacity(frame_count * crate::motion::DOF);
    for t in 0..frame_count {
        let theta = classes::phase_at(class, t, fps, params.phase);
        frames.extend_from_slice(&classes::pose(class, theta, params.amplitude).positions());
    }
    Ok(Motion::new(String::new(), fps, Some(class), frames)?)
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn sample_id(class: usize, k: usize) -> String {
    format!("{}-{k:04}", CLASS_NAMES[class])
}

/// Generates and splits a dataset. Deterministic in `spec.seed`.
pub fn generate_dataset<T: Scalar>(spec: &DatasetSpec) -> Result<Dataset<T>, DatagenError> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| DatagenError::Config(e.to_string()))?;
    let mut motions = Vec::with_capacity(spec.class_count * spec.samples_per_class);
    for class in 0..spec.class_count {
        for k in 0..spec.samples_per_class {
            let mut rng = sample_rng(spec.seed, class * spec.samples_per_class + k);
            let phase = rng.random_range(0.0..TAU);
            let amplitude = if spec.amplitude_jitter > 0.0 {
                1.0 + rng.random_range(-spec.amplitude_jitter..spec.amplitude_jitter)
            } else {
                1.0
            };
            let clean = clean_sample(class, SampleParams { phase, amplitude }, spec.frame_count, spec.fps)?;
            let frames: Vec<T> = clean
                .frames()
                .iter()
                .map(|&v| {
                    let n = if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    T::of(v + n)
                })
                .collect();
            motions.push(Motion::new(sample_id(class, k), spec.fps, Some(class), frames)?);
        }
    }
    let unsplit = Dataset {
        spec: spec.clone(),
        class_names: CLASS_NAMES[..spec.class_count].iter().map(|s| s.to_string()).collect(),
        split: vec![Split::Train; motions.len()],
        motions,
    };
    split_dataset(unsplit, spec.test_fraction, spec.seed)
}

/// Stratified train/test assignment. Each class gets
/// `round(test_fraction * n)` test samples, which must be at least one and
/// leave at least one for training.
pub fn split_dataset<T: Scalar>(mut dataset: Dataset<T>, test_fraction: f64, seed: u64) -> Result<Dataset<T>, DatagenError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatagenError::Config(format!("test_fraction must be in (0, 1), got {test_fraction}")));
    }
    let mut split = vec![Split::Train; dataset.motions.len()];
    for class in 0..dataset.class_count() {
        let mut members: Vec<usize> = (0..dataset.motions.len())
            .filter(|&i| dataset.motions[i].label() == Some(class))
            .collect();
        let n = members.len();
        let n_test = (test_fraction * n as f64).round() as usize;
        if n_test == 0 || n_test >= n {
            return Err(DatagenError::Config(format!(
                "class {class}: test_fraction {test_fraction} of {n} samples gives {n_test} test samples"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
        rng.set_stream(class as u64);
        // Fisher-Yates on the class members.
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        for &i in &members[..n_test] {
            split[i] = Split::Test;
        }
    }
    dataset.split = split;
    dataset.spec.test_fraction = test_fraction;
    Ok(dataset)
}

// Keeps the split stream independent of the sample streams.
const SPLIT_SALT: u64 = 0x5eed_5b17;
