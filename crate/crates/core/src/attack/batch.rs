//! Strategy parsing and parallel attacks over many motions.

use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{attack, AttackConfig, AttackError, AttackResult, Strategy};
use crate::models::Classifier;
use crate::motion::Motion;
use crate::Scalar;

/// A strategy as written on the command line: `ab`, `abn:N`, `sa:K` or
/// `sa:random` (a per-motion random class other than the ground truth).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StrategySpec {
    Ab,
    Abn(usize),
    Sa(usize),
    SaRandom,
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::Ab => f.write_str("ab"),
            StrategySpec::Abn(n) => write!(f, "abn:{n}"),
            StrategySpec::Sa(k) => write!(f, "sa:{k}"),
            StrategySpec::SaRandom => f.write_str("sa:random"),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AttackError::Config(format!("unknown strategy {s:?} (expected ab, abn:N, sa:K or sa:random)"));
        match s.split_once(':') {
            None if s == "ab" => Ok(StrategySpec::Ab),
            Some(("abn", n)) => n.parse().map(StrategySpec::Abn).map_err(|_| bad()),
            Some(("sa", "random")) => Ok(StrategySpec::SaRandom),
            Some(("sa", k)) => k.parse().map(StrategySpec::Sa).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl From<StrategySpec> for String {
    fn from(s: StrategySpec) -> Self {
        s.to_string()
    }
}

impl TryFrom<String> for StrategySpec {
    type Error = AttackError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Stream of randomness private to one motion: depends only on the run seed
/// and the motion id.
pub fn motion_rng(seed: u64, motion_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(motion_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Turns a spec into the concrete strategy for one labeled motion.
pub fn resolve_strategy(spec: StrategySpec, label: usize, class_count: usize, seed: u64, motion_id: &str) -> Strategy {
    match spec {
        StrategySpec::Ab => Strategy::Ab,
        StrategySpec::Abn(n) => Strategy::Abn { n },
        StrategySpec::Sa(target) => Strategy::Sa { target },
        StrategySpec::SaRandom => {
            let mut rng = motion_rng(seed, motion_id);
            let k = rng.random_range(0..class_count - 1);
            Strategy::Sa {
                target: if k >= label { k + 1 } else { k },
            }
        }
    }
}

/// Attacks every motion in parallel. Results come back in input order and do
/// not depend on the thread count.
pub fn attack_all<T: Scalar>(
    model: &Classifier<T>,
    motions: &[&Motion<T>],
    spec: StrategySpec,
    template: &AttackConfig,
) -> Vec<Result<AttackResult<T>, AttackError>> {
    motions
        .par_iter()
        .map(|m| {
            let label = m
                .label()
                .ok_or_else(|| AttackError::Contract(format!("motion {} has no label", m.id())))?;
            let mut config = template.clone();
            config.strategy = resolve_strategy(spec, label, model.class_count(), template.seed, m.id());
            attack(model, m, &config)
        })
        .collect()
}
