//! Finite-difference verification of every differentiable primitive and of
//! the attack objective on each architecture and strategy.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{total_loss, AbTarget, AttackError, Objective, PerceptualWeights, Strategy};
use crate::autograd::{grad_check_coords, softmax, GradCheckReport, AutogradError, Graph, Tensor, Var};
use crate::models::{motion_tensor, Architecture, Classifier};
use crate::motion::{standard_skeleton, Motion, DOF};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSuiteConfig {
    /// Random motions per (architecture, strategy) pair.
    pub motions: usize,
    pub frames: usize,
    /// Coordinates perturbed per check.
    pub coordinates: usize,
    /// Random inputs per primitive.
    pub primitive_trials: usize,
    pub step: f64,
    /// Relative errors use `|a - n| / max(|a| + |n|, abs_floor)`, so
    /// components below the central-difference roundoff level are held to
    /// an absolute bound instead.
    pub abs_floor: f64,
    pub tolerance: f64,
    pub class_count: usize,
    pub seed: u64,
}

impl Default for GradientSuiteConfig {
    fn default() -> Self {
        Self {
            motions: 20,
            frames: 16,
            coordinates: 32,
            primitive_trials: 20,
            step: 1e-5,
            abs_floor: 1e-6,
            tolerance: 1e-4,
            class_count: 8,
            seed: 0,
        }
    }
}

/// Worst result over all trials of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub trials: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn component_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(floor)
}

fn worst_error(report: &GradCheckReport, floor: f64) -> f64 {
    report
        .analytic
        .iter()
        .zip(&report.numeric)
        .map(|(a, n)| component_error(*a, *n, floor))
        .fold(0.0, f64::max)
}

type Op = fn(&mut Graph<f64>, Var) -> Result<Var, AutogradError>;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

fn constant(g: &mut Graph<f64>, seed: u64, shape: &[usize]) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = uniform(&mut rng, shape, -1.0, 1.0);
    g.constant(t)
}

fn primitives() -> Vec<(&'static str, Vec<usize>, (f64, f64), Op)> {
    vec![
        ("add", vec![3, 4], (-1.0, 1.0), |g, x| {
            let c = constant(g, 1, &[3, 4]);
            g.add(x, c)
        }),
        ("sub", vec![3, 4], (-1.0, 1.0), |g, x| {
            let c = constant(g, 2, &[3, 4]);
            g.sub(c, x)
        }),
        ("mul", vec![3, 4], (-1.0, 1.0), |g, x| {
            let c = constant(g, 3, &[3, 4]);
            g.mul(x, c)
        }),
        ("scale", vec![5], (-1.0, 1.0), |g, x| Ok(g.scale(x, -2.5))),
        ("add_scalar", vec![5], (-1.0, 1.0), |g, x| Ok(g.add_scalar(x, 0.3))),
        ("matmul", vec![3, 4], (-1.0, 1.0), |g, x| {
            let c = constant(g, 4, &[4, 5]);
            g.matmul(x, c)
        }),
        ("conv1d", vec![2, 7, 3], (-1.0, 1.0), |g, x| {
            let w = constant(g, 5, &[3, 3, 4]);
            g.conv1d(x, w)
        }),
        ("conv1d.kernel", vec![3, 3, 4], (-1.0, 1.0), |g, w| {
            let x = constant(g, 6, &[2, 7, 3]);
            g.conv1d(x, w)
        }),
        ("relu", vec![10], (-1.0, 1.0), |g, x| Ok(g.relu(x))),
        ("tanh", vec![10], (-2.0, 2.0), |g, x| Ok(g.tanh(x))),
        ("exp", vec![10], (-1.0, 1.0), |g, x| Ok(g.exp(x))),
        ("log", vec![10], (0.1, 1.0), |g, x| g.log(x)),
        ("sqrt", vec![10], (0.1, 1.0), |g, x| g.sqrt(x)),
        ("square", vec![10], (-1.0, 1.0), |g, x| Ok(g.square(x))),
        ("sum", vec![3, 4], (-1.0, 1.0), |g, x| Ok(g.sum(x))),
        ("mean", vec![3, 4], (-1.0, 1.0), |g, x| Ok(g.mean(x))),
        ("sum_squares", vec![3, 4], (-1.0, 1.0), |g, x| Ok(g.sum_squares(x))),
        ("sum_axis", vec![3, 4, 2], (-1.0, 1.0), |g, x| g.sum_axis(x, 1)),
        ("mean_axis", vec![3, 4, 2], (-1.0, 1.0), |g, x| g.mean_axis(x, 0)),
        ("reshape", vec![3, 4], (-1.0, 1.0), |g, x| g.reshape(x, &[2, 6])),
        ("permute", vec![2, 3, 4], (-1.0, 1.0), |g, x| g.permute(x, &[2, 0, 1])),
        ("slice", vec![4, 5], (-1.0, 1.0), |g, x| g.slice(x, 1, 1, 3)),
        ("concat", vec![2, 3], (-1.0, 1.0), |g, x| {
            let c = constant(g, 7, &[2, 2]);
            let y = g.square(x);
            g.concat(&[x, c, y], 1)
        }),
        ("broadcast", vec![1, 3], (-1.0, 1.0), |g, x| g.broadcast(x, &[4, 3])),
        ("gather", vec![5, 2], (-1.0, 1.0), |g, x| g.gather(x, 0, &[4, 0, 0, 2])),
        ("softmax", vec![3, 5], (-2.0, 2.0), |g, x| g.softmax(x, 1)),
        ("log_softmax", vec![3, 5], (-2.0, 2.0), |g, x| g.log_softmax(x, 1)),
        ("mul_const", vec![3, 4], (-1.0, 1.0), |g, x| {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            g.mul_const(x, uniform(&mut rng, &[3, 4], -1.0, 1.0))
        }),
        ("add_bias", vec![2, 3, 4], (-1.0, 1.0), |g, x| {
            let b = constant(g, 9, &[4]);
            let y = g.add_bias(x, b)?;
            Ok(g.square(y))
        }),
    ]
}

/// Checks every graph primitive, each reduced to a scalar through a fixed
/// random weighting of its output.
pub fn check_primitives(config: &GradientSuiteConfig) -> Result<Vec<CheckOutcome>, AutogradError> {
    let mut out = Vec::new();
    for (k, (name, shape, (lo, hi), op)) in primitives().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut worst: f64 = 0.0;
        for _ in 0..config.primitive_trials {
            let x = uniform(&mut rng, &shape, lo, hi);
            // keep away from the relu kink
            let coords: Vec<usize> = (0..x.numel()).filter(|&i| x.data()[i].abs() > 1e-3).collect();
            let wseed = rng.random_range(0..u64::MAX);
            let report = grad_check_coords::<f64, AutogradError, _>(
                |g, v| {
                    let y = op(g, v)?;
                    let w = constant(g, wseed, g.shape(y).to_vec().as_slice());
                    let p = g.mul(y, w)?;
                    Ok(g.sum(p))
                },
                &x,
                config.step,
                config.tolerance,
                &coords,
            )?;
            worst = worst.max(worst_error(&report, config.abs_floor));
        }
        out.push(CheckOutcome {
            name: name.to_string(),
            trials: config.primitive_trials,
            max_rel_error: worst,
            passed: worst < config.tolerance,
        });
    }
    Ok(out)
}

/// A smooth random motion plus a small random perturbation of it, as a
/// (clean, candidate) pair.
fn random_pair(rng: &mut ChaCha8Rng, frames: usize) -> Result<(Motion<f64>, Motion<f64>), AttackError> {
    let base: Vec<f64> = (0..DOF).map(|_| rng.random_range(-0.8..0.8)).collect();
    let vel: Vec<f64> = (0..DOF).map(|_| rng.random_range(-0.02..0.02)).collect();
    let mut frames_data = Vec::with_capacity(frames * DOF);
    for f in 0..frames {
        for d in 0..DOF {
            frames_data.push(base[d] + vel[d] * f as f64 + rng.random_range(-0.005..0.005));
        }
    }
    let q = Motion::new("gradcheck", 30.0, Some(0), frames_data)?;
    let perturbed: Vec<f64> = q.frames().iter().map(|v| v + rng.random_range(-0.01..0.01)).collect();
    let a = q.with_frames(perturbed)?;
    Ok((q, a))
}

/// Gradient of the full attack objective with respect to the candidate
/// motion, for each strategy on randomly initialized models.
pub fn check_objective(
    architectures: &[Architecture],
    config: &GradientSuiteConfig,
) -> Result<Vec<CheckOutcome>, AttackError> {
    let skeleton = standard_skeleton();
    let weights = PerceptualWeights::default();
    let c = config.class_count;
    if c < 3 {
        return Err(AttackError::Config("gradient suite needs at least 3 classes".into()));
    }
    let strategies = [Strategy::Ab, Strategy::Abn { n: (c / 2).max(1) }, Strategy::Sa { target: c - 1 }];
    let mut out = Vec::new();
    for &arch in architectures {
        let model = Classifier::<f64>::init(arch, c, config.seed.wrapping_add(arch.code() as u64))?;
        for strategy in strategies {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(31).wrapping_add(arch.code() as u64));
            let mut worst: f64 = 0.0;
            for _ in 0..config.motions {
                let (q, a) = random_pair(&mut rng, config.frames)?;
                let clean = softmax(&model.logits(&q)?);
                let objective = Objective::new(strategy, AbTarget::Hard, 0, &clean);
                let point = motion_tensor(&a);
                let coords: Vec<usize> = (0..config.coordinates).map(|_| rng.random_range(0..point.numel())).collect();
                let check = |h: f64, coords: &[usize]| {
                    grad_check_coords::<f64, AttackError, _>(
                        |g, x| Ok(total_loss(g, q.frames(), x, &model, &objective, &weights, skeleton)?.total),
                        &point,
                        h,
                        config.tolerance,
                        coords,
                    )
                };
                let report = check(config.step, &coords)?;
                // A ReLU pre-activation within one step of zero makes the central
                // difference straddle a kink. Such coordinates get a second chance
                // with a ten times smaller step; a wrong gradient fails both.
                let suspects: Vec<usize> = (0..coords.len())
                    .filter(|&i| component_error(report.analytic[i], report.numeric[i], config.abs_floor) >= config.tolerance)
                    .map(|i| coords[i])
                    .collect();
                let mut err = worst_error(&report, config.abs_floor);
                if !suspects.is_empty() {
                    let retry = check(config.step / 10.0, &suspects)?;
                    let passing = |i: usize| component_error(report.analytic[i], report.numeric[i], config.abs_floor);
                    err = (0..coords.len())
                        .filter(|&i| !suspects.contains(&coords[i]))
                        .map(passing)
                        .chain(retry.analytic.iter().zip(&retry.numeric).map(|(a, n)| component_error(*a, *n, config.abs_floor)))
                        .fold(0.0, f64::max);
                }
                worst = worst.max(err);
            }
            let kind = match strategy {
                Strategy::Ab => "ab",
                Strategy::Abn { .. } => "abn",
                Strategy::Sa { .. } => "sa",
            };
            out.push(CheckOutcome {
                name: format!("objective/{}/{kind}", arch.name()),
                trials: config.motions,
                max_rel_error: worst,
                passed: worst < config.tolerance,
            });
        }
    }
    Ok(out)
}

/// Primitive checks followed by objective checks.
pub fn gradient_suite(architectures: &[Architecture], config: &GradientSuiteConfig) -> Result<Vec<CheckOutcome>, AttackError> {
    let mut all = check_primitives(config)?;
    all.extend(check_objective(architectures, config)?);
    Ok(all)
}
