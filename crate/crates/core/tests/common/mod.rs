#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelattack::datagen::{generate_dataset, DatasetSpec};
use skelattack::models::{train, Architecture, TrainConfig};
use skelattack::motion::{Motion, DOF};
use skelattack::{Classifier64, Dataset64};

/// A motion with coordinates uniform in [-1, 1].
pub fn random_motion(seed: u64, frames: usize, label: Option<usize>) -> Motion<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..frames * DOF).map(|_| rng.random_range(-1.0..1.0)).collect();
    Motion::new(format!("r{seed}"), 30.0, label, data).unwrap()
}

/// `base` plus uniform noise of the given amplitude.
pub fn perturbed(base: &Motion<f64>, seed: u64, amplitude: f64) -> Motion<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = base.frames().iter().map(|v| v + rng.random_range(-amplitude..amplitude)).collect();
    base.with_frames(data).unwrap()
}

pub fn small_dataset() -> Dataset64 {
    generate_dataset(&DatasetSpec {
        samples_per_class: 20,
        frame_count: 16,
        seed: 3,
        ..DatasetSpec::default()
    })
    .unwrap()
}

pub fn small_model(dataset: &Dataset64) -> Classifier64 {
    train(
        Architecture::FrameMlp,
        dataset,
        &TrainConfig {
            epochs: 20,
            batch_size: 16,
            ..TrainConfig::default()
        },
    )
    .unwrap()
}
