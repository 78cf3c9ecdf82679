mod common;

use common::{perturbed, random_motion, small_dataset, small_model};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelattack::attack::{
    ab_loss, abn_loss, attack, bone_loss, dyn_loss, perceptual_loss, sa_loss, strategy_succeeds, topn_excludes,
    total_loss, AbTarget, AttackConfig, AttackError, LossPreset, Objective, PerceptualWeights, Strategy,
};
use skelattack::autograd::{grad_check_coords, softmax, Graph, Tensor, Var};
use skelattack::models::{argmax, motion_tensor, Architecture};
use skelattack::motion::{standard_skeleton, Motion, DOF};
use skelattack::{Classifier64, Graph64};

fn value(g: &Graph64, v: Var) -> f64 {
    g.value(v).item().unwrap()
}

fn candidate(g: &mut Graph64, m: &Motion<f64>) -> Var {
    g.variable(Tensor::new(vec![m.frame_count(), DOF], m.frames().to_vec()).unwrap())
}

// Naive oracles: straight loops over frames, bones and DoFs.

fn oracle_bone(q: &Motion<f64>, a: &Motion<f64>) -> f64 {
    let s = standard_skeleton();
    let mut total = 0.0;
    for f in 0..q.frame_count() {
        for b in s.bones() {
            let len = |m: &Motion<f64>| {
                let (c, p) = (m.joint(f, b.child), m.joint(f, b.parent));
                ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) + (c[2] - p[2]).powi(2)).sqrt()
            };
            total += (len(q) - len(a)).powi(2);
        }
    }
    total / q.frame_count() as f64
}

fn oracle_diff(rows: &[Vec<f64>], order: usize) -> Vec<Vec<f64>> {
    let mut cur = rows.to_vec();
    for _ in 0..order {
        cur = (0..cur.len() - 1)
            .map(|t| (0..DOF).map(|d| cur[t + 1][d] - cur[t][d]).collect())
            .collect();
    }
    cur
}

fn oracle_dyn(q: &Motion<f64>, a: &Motion<f64>, w: &PerceptualWeights) -> f64 {
    let rows = |m: &Motion<f64>| (0..m.frame_count()).map(|f| m.frame(f).to_vec()).collect::<Vec<_>>();
    let (rq, ra) = (rows(q), rows(a));
    let mut total = 0.0;
    for (n, &beta) in w.beta.iter().enumerate() {
        if beta == 0.0 {
            continue;
        }
        let (dq, da) = (oracle_diff(&rq, n), oracle_diff(&ra, n));
        let mut s = 0.0;
        for t in 0..dq.len() {
            for d in 0..DOF {
                s += (w.gamma[d] * (dq[t][d] - da[t][d])).powi(2);
            }
        }
        total += beta * s;
    }
    total
}

fn naive_log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

fn random_pair(seed: u64, frames: usize) -> (Motion<f64>, Motion<f64>) {
    let q = random_motion(seed, frames, Some(0));
    let a = perturbed(&q, seed + 1_000_000, 0.05);
    (q, a)
}

fn random_weights(rng: &mut ChaCha8Rng) -> PerceptualWeights {
    let mut beta = [0.0; 5];
    for b in beta.iter_mut() {
        *b = if rng.random_bool(0.6) { rng.random_range(0.0..1.0) } else { 0.0 };
    }
    beta[0] += 0.1;
    let s: f64 = beta.iter().sum();
    for b in beta.iter_mut() {
        *b /= s;
    }
    PerceptualWeights {
        w: rng.random_range(0.0..1.0),
        alpha: rng.random_range(0.0..1.0),
        beta,
        gamma: (0..DOF).map(|_| rng.random_range(0.0..2.0)).collect(),
    }
}

#[test]
fn perceptual_terms_match_naive_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        let (q, a) = random_pair(trial, 8 + trial as usize % 9);
        let w = if trial % 2 == 0 { PerceptualWeights::default() } else { random_weights(&mut rng) };
        let mut g = Graph::new();
        let x = candidate(&mut g, &a);
        let bl = bone_loss(&mut g, q.frames(), x, standard_skeleton()).unwrap();
        let dl = dyn_loss(&mut g, q.frames(), x, &w).unwrap();
        let pl = perceptual_loss(&mut g, q.frames(), x, standard_skeleton(), &w).unwrap();
        let (ob, od) = (oracle_bone(&q, &a), oracle_dyn(&q, &a, &w));
        assert!((value(&g, bl) - ob).abs() <= 1e-12 * ob.max(1.0), "bone {trial}");
        assert!((value(&g, dl) - od).abs() <= 1e-12 * od.max(1.0), "dyn {trial}");
        let op = w.alpha * od + (1.0 - w.alpha) * ob;
        assert!((value(&g, pl.total) - op).abs() <= 1e-12 * op.max(1.0), "perceptual {trial}");
    }
}

#[test]
fn classification_losses_match_naive_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..100 {
        let k = rng.random_range(2..10);
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let p: Vec<f64> = raw.iter().map(|v| v / raw.iter().sum::<f64>()).collect();
        let target = rng.random_range(0..k);
        let mut g = Graph::new();
        let zv = g.constant(Tensor::new(vec![1, k], z.clone()).unwrap());
        let (ab, abn, sa) = (
            ab_loss(&mut g, &p, zv).unwrap(),
            abn_loss(&mut g, zv).unwrap(),
            sa_loss(&mut g, target, zv).unwrap(),
        );
        let logp = naive_log_softmax(&z);
        let phat: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
        let o_ab: f64 = (0..k).map(|i| p[i] * logp[i]).sum();
        let o_abn: f64 = (0..k).map(|i| if phat[i] == 0.0 { 0.0 } else { phat[i] * phat[i].ln() }).sum();
        let o_sa = -phat[target].ln();
        assert!((value(&g, ab) - o_ab).abs() < 1e-12, "ab {trial}");
        assert!((value(&g, abn) - o_abn).abs() < 1e-12, "abn {trial}");
        assert!((value(&g, sa) - o_sa).abs() < 1e-12, "sa {trial}");
    }
}

#[test]
fn loss_identities() {
    let (q, a) = random_pair(5, 12);
    let s = standard_skeleton();
    let mut g = Graph::new();
    let same = candidate(&mut g, &q);
    for preset in LossPreset::ALL {
        let w = preset.weights(0.4, s);
        let p = perceptual_loss(&mut g, q.frames(), same, s, &w).unwrap();
        assert_eq!(value(&g, p.total), 0.0, "{preset}");
    }
    // l2 preset dynamics term is the plain squared distance
    let x = candidate(&mut g, &a);
    let l2 = LossPreset::L2.weights(0.4, s);
    let d = dyn_loss(&mut g, q.frames(), x, &l2).unwrap();
    let plain: f64 = q.frames().iter().zip(a.frames()).map(|(u, v)| (u - v).powi(2)).sum();
    assert!((value(&g, d) - plain).abs() < 1e-12 * plain.max(1.0));
    // alpha = 1 leaves only the dynamics term
    let p = perceptual_loss(&mut g, q.frames(), x, s, &l2).unwrap();
    assert_eq!(value(&g, p.total), value(&g, p.dynamics));
    // entropy extremes and cross-entropy against uniform
    for k in [2usize, 5, 8] {
        let uniform = g.constant(Tensor::vector(vec![0.3; k]));
        let p: Vec<f64> = (0..k).map(|i| (i + 1) as f64 / (k * (k + 1) / 2) as f64).collect();
        let ce = ab_loss(&mut g, &p, uniform).unwrap();
        let h = abn_loss(&mut g, uniform).unwrap();
        assert!((value(&g, ce) + (k as f64).ln()).abs() < 1e-12);
        assert!((value(&g, h) + (k as f64).ln()).abs() < 1e-12);
        let mut peaked = vec![0.0; k];
        peaked[k - 1] = 1e6;
        let peaked = g.constant(Tensor::vector(peaked));
        let h = abn_loss(&mut g, peaked).unwrap();
        assert_eq!(value(&g, h), 0.0);
    }
}

#[test]
fn total_loss_blends_terms() {
    let model = Classifier64::init(Architecture::FrameMlp, 8, 2).unwrap();
    let (q, a) = random_pair(9, 16);
    let s = standard_skeleton();
    let clean = softmax(&model.logits(&q).unwrap());
    for (w, strategy) in [(0.4, Strategy::Ab), (1.0, Strategy::Abn { n: 2 }), (0.0, Strategy::Sa { target: 3 })] {
        let mut weights = PerceptualWeights::default();
        weights.w = w;
        let obj = Objective::new(strategy, AbTarget::Soft, 0, &clean);
        let mut g = Graph::new();
        let x = g.variable(motion_tensor(&a));
        let t = total_loss(&mut g, q.frames(), x, &model, &obj, &weights, s).unwrap();
        let expect = w * value(&g, t.classification) + (1.0 - w) * value(&g, t.perceptual.total);
        assert!((value(&g, t.total) - expect).abs() < 1e-12, "{strategy}");
        if w == 1.0 {
            assert_eq!(value(&g, t.total), value(&g, t.classification));
        }
    }
    // w = 0 at the clean motion is exactly zero
    let mut weights = PerceptualWeights::default();
    weights.w = 0.0;
    let obj = Objective::new(Strategy::Ab, AbTarget::Hard, 0, &clean);
    let mut g = Graph::new();
    let x = g.variable(motion_tensor(&q));
    let t = total_loss(&mut g, q.frames(), x, &model, &obj, &weights, s).unwrap();
    assert_eq!(value(&g, t.total), 0.0);
}

#[test]
fn total_loss_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let s = standard_skeleton();
    for arch in Architecture::ALL {
        let model = Classifier64::init(arch, 8, 3).unwrap();
        for strategy in [Strategy::Ab, Strategy::Abn { n: 3 }, Strategy::Sa { target: 5 }] {
            let (q, a) = random_pair(rng.random_range(0..1000), 16);
            let clean = softmax(&model.logits(&q).unwrap());
            let obj = Objective::new(strategy, AbTarget::Hard, 0, &clean);
            let w = PerceptualWeights::default();
            let point = motion_tensor(&a);
            let coords: Vec<usize> = (0..40).map(|_| rng.random_range(0..point.numel())).collect();
            let report = grad_check_coords::<f64, AttackError, _>(
                |g, x| Ok(total_loss(g, q.frames(), x, &model, &obj, &w, s)?.total),
                &point,
                1e-6,
                1e-4,
                &coords,
            )
            .unwrap();
            assert!(report.passed, "{arch} {strategy}: {}", report.max_rel_error);
        }
    }
}

#[test]
fn soft_ab_target_has_no_gradient_at_the_clean_motion() {
    let model = Classifier64::init(Architecture::TConvNet, 8, 4).unwrap();
    let q = random_motion(1, 16, Some(0));
    let clean = softmax(&model.logits(&q).unwrap());
    let label = argmax(&clean);
    for (target, zero) in [(AbTarget::Soft, true), (AbTarget::Hard, false)] {
        let obj = Objective::new(Strategy::Ab, target, label, &clean);
        let mut g = Graph::new();
        let x = g.variable(motion_tensor(&q));
        let t = total_loss(&mut g, q.frames(), x, &model, &obj, &PerceptualWeights::default(), standard_skeleton()).unwrap();
        g.backward(t.total).unwrap();
        let grad = g.grad(x).unwrap();
        let all_zero = grad.iter().all(|v| v.abs() < 1e-15);
        assert_eq!(all_zero, zero, "{target:?}");
    }
}

#[test]
fn config_and_precondition_errors() {
    let d = small_dataset();
    let model = small_model(&d);
    let m = d.test().into_iter().find(|m| model.predict(m).unwrap() == m.label().unwrap()).unwrap();
    let label = m.label().unwrap();

    let mut cfg = AttackConfig::new(Strategy::Ab, LossPreset::Full);
    cfg.max_iters = 0;
    assert!(matches!(attack(&model, m, &cfg), Err(AttackError::Config(_))));

    let cfg = AttackConfig::new(Strategy::Abn { n: 8 }, LossPreset::Full);
    assert!(matches!(attack(&model, m, &cfg), Err(AttackError::Config(_))));

    let cfg = AttackConfig::new(Strategy::Sa { target: label }, LossPreset::Full);
    assert!(matches!(attack(&model, m, &cfg), Err(AttackError::Contract(_))));

    let mut wrong = m.clone();
    wrong.set_label(Some((label + 1) % 8));
    let cfg = AttackConfig::new(Strategy::Ab, LossPreset::Full);
    assert!(matches!(attack(&model, &wrong, &cfg), Err(AttackError::Contract(_))));
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let d = small_dataset();
    let model = small_model(&d);
    let m = d.test().into_iter().find(|m| model.predict(m).unwrap() == m.label().unwrap()).unwrap();
    let mut cfg = AttackConfig::new(Strategy::Ab, LossPreset::Full);
    cfg.max_iters = 1;
    cfg.lr = 0.0;
    let r = attack(&model, m, &cfg).unwrap();
    assert_eq!(r.adversarial.frames(), m.frames());
    assert!(!r.success);
    assert!(r.displacement.iter().all(|&v| v == 0.0));
}

#[test]
fn results_satisfy_their_own_success_predicates() {
    let d = small_dataset();
    let model = small_model(&d);
    let motions: Vec<_> = d
        .test()
        .into_iter()
        .filter(|m| model.predict(m).unwrap() == m.label().unwrap())
        .take(6)
        .collect();
    for m in motions {
        let label = m.label().unwrap();
        for strategy in [Strategy::Ab, Strategy::Abn { n: 3 }, Strategy::Sa { target: (label + 1) % 8 }] {
            let mut cfg = AttackConfig::new(strategy, LossPreset::Full);
            cfg.max_iters = 100;
            let r = attack(&model, m, &cfg).unwrap();
            assert_eq!(r.adversarial.frame_count(), m.frame_count());
            assert_eq!(r.adversarial.fps(), m.fps());
            // the stored prediction is the model's output on the returned motion
            let fresh = softmax(&model.logits(&r.adversarial).unwrap());
            assert_eq!(fresh, r.final_prediction);
            assert_eq!(r.success, strategy_succeeds(strategy, &r.final_prediction, label), "{strategy}");
            if r.success {
                match strategy {
                    Strategy::Ab => assert_ne!(r.adversarial_label(), label),
                    Strategy::Abn { n } => {
                        assert!(topn_excludes(&r.final_prediction, label, n));
                        // stops at the first success
                        assert_eq!(r.returned_iteration, r.loss_trace.len() - 1);
                        assert_eq!(r.iterations_used, r.returned_iteration);
                    }
                    Strategy::Sa { target } => assert_eq!(r.adversarial_label(), target),
                }
            }
            let disp: Vec<f64> = r.adversarial.frames().iter().zip(m.frames()).map(|(a, b)| a - b).collect();
            assert_eq!(disp, r.displacement);
            assert_eq!(r.label_trace.len(), r.loss_trace.len());
        }
    }
}

#[test]
fn second_ranked_target_is_easier_than_last_ranked() {
    let d = small_dataset();
    let model = small_model(&d);
    let (mut near, mut far) = (0, 0);
    for m in d.test() {
        let z = model.logits(m).unwrap();
        if argmax(&z) != m.label().unwrap() {
            continue;
        }
        let mut order: Vec<usize> = (0..z.len()).collect();
        order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap());
        for (target, count) in [(order[1], &mut near), (order[z.len() - 1], &mut far)] {
            let mut cfg = AttackConfig::new(Strategy::Sa { target }, LossPreset::Full);
            cfg.max_iters = 40;
            *count += usize::from(attack(&model, m, &cfg).unwrap().success);
        }
    }
    assert!(near > far, "second-ranked {near}, last-ranked {far}");
}

#[test]
fn larger_classification_weight_never_lowers_ab_success() {
    let d = small_dataset();
    let model = small_model(&d);
    let motions: Vec<_> = d
        .test()
        .into_iter()
        .filter(|m| model.predict(m).unwrap() == m.label().unwrap())
        .collect();
    let rate = |w: f64| {
        let mut cfg = AttackConfig::new(Strategy::Ab, LossPreset::L2Acc);
        cfg.weights.w = w;
        cfg.max_iters = 60;
        motions.iter().filter(|m| attack(&model, m, &cfg).unwrap().success).count()
    };
    let rates: Vec<usize> = [0.2, 0.4, 0.8].into_iter().map(rate).collect();
    assert!(rates.windows(2).all(|r| r[0] <= r[1]), "{rates:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn perceptual_loss_ignores_shared_translation(seed in 0u64..10_000, dx in -3.0f64..3.0, dy in -3.0f64..3.0, dz in -3.0f64..3.0) {
        let (q, a) = random_pair(seed, 10);
        let shift = |m: &Motion<f64>| m.with_frames(m.frames().iter().enumerate().map(|(i, v)| v + [dx, dy, dz][i % 3]).collect()).unwrap();
        let (qs, as_) = (shift(&q), shift(&a));
        let w = PerceptualWeights::default();
        let s = standard_skeleton();
        let mut g = Graph::new();
        let (x, xs) = (candidate(&mut g, &a), candidate(&mut g, &as_));
        let p = perceptual_loss(&mut g, q.frames(), x, s, &w).unwrap();
        let ps = perceptual_loss(&mut g, qs.frames(), xs, s, &w).unwrap();
        let (u, v) = (value(&g, p.total), value(&g, ps.total));
        prop_assert!((u - v).abs() <= 1e-9 * u.max(1e-12));
    }

    #[test]
    fn rigid_translation_of_candidate_keeps_bone_loss_zero(seed in 0u64..10_000, dx in -1.0f64..1.0) {
        let q = random_motion(seed, 9, Some(0));
        let a = q.with_frames(q.frames().iter().map(|v| v + dx).collect()).unwrap();
        let mut g = Graph::new();
        let x = candidate(&mut g, &a);
        let b = bone_loss(&mut g, q.frames(), x, standard_skeleton()).unwrap();
        prop_assert!(value(&g, b) < 1e-20);
    }
}
