//! Command implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use skelattack::analysis::{
    max_relative_bone_change, pearson_correlation_maps, CorrelationReport, transfer_attack, weighted_acceleration_deviation, write_reports,
    write_transfer_report,
};
use skelattack::attack::{attack_all, AttackConfig, AttackResult, LossPreset, Strategy, StrategySpec};
use skelattack::datagen::{generate_dataset, read_dataset, write_dataset, Split};
use skelattack::models::{evaluate, save_checkpoint, Architecture};
use skelattack::motion::{
    joint_weight_vector, load_motion_document, save_motion_document, standard_skeleton, MotionDocument, OTHER_WEIGHT,
    SPINAL_WEIGHT,
};
use skelattack::verify::{gradient_suite, GradientSuiteConfig};
use skelattack::{Classifier64, Dataset64, Motion64};

use crate::config::{load_dataset_spec, RunConfig};
use crate::AttackArgs;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn config_hash<S: Serialize>(value: &S) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<(Classifier64, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let model = skelattack::models::decode_checkpoint(&bytes, &path.display().to_string())?;
    Ok((model, sha256_hex(&bytes)))
}

fn load_data(dir: &Path) -> Result<Dataset64> {
    read_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn model_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

pub fn gen_data(cfg: &RunConfig, spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = match spec {
        Some(p) => load_dataset_spec(p)?,
        None => cfg.dataset.clone().unwrap_or_default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    let dataset: Dataset64 = generate_dataset(&spec)?;
    write_dataset(&dataset, out)?;
    let train = dataset.train().len();
    let test = dataset.test().len();
    println!(
        "{} classes, {} motions ({train} train / {test} test), {} frames each, seed {}",
        dataset.class_count(),
        dataset.motions.len(),
        spec.frame_count,
        spec.seed
    );
    for (c, name) in dataset.class_names.iter().enumerate() {
        let n = dataset.motions.iter().filter(|m| m.label() == Some(c)).count();
        println!("  {c}: {name} ({n})");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    cfg: &RunConfig,
    arch: Architecture,
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
) -> Result<()> {
    let dataset = load_data(data)?;
    let mut tc = cfg.train.clone().unwrap_or_default();
    if let Some(s) = seed {
        tc.seed = s;
    }
    if let Some(e) = epochs {
        tc.epochs = e;
    }
    if let Some(b) = batch_size {
        tc.batch_size = b;
    }
    if let Some(l) = lr {
        tc.lr = l;
    }
    let model = skelattack::models::train(arch, &dataset, &tc)?;
    save_checkpoint(&model, out)?;
    let test = evaluate(&model, &dataset.test())?;
    let summary = json!({
        "architecture": arch.name(),
        "seed": tc.seed,
        "config_hash": config_hash(&tc)?,
        "train_accuracy": model.metadata.train_accuracy,
        "accuracy": test.accuracy,
        "sample_count": test.sample_count,
        "confusion": test.confusion,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn eval(ckpt: &Path, data: &Path, split: &str) -> Result<()> {
    let (model, _) = load_model(ckpt)?;
    let dataset = load_data(data)?;
    ensure!(
        model.class_count() == dataset.class_count(),
        "checkpoint has {} classes, dataset {}",
        model.class_count(),
        dataset.class_count()
    );
    let motions: Vec<&Motion64> = match split {
        "test" => dataset.test(),
        "train" => dataset.train(),
        "all" => dataset.motions.iter().collect(),
        other => bail!("unknown split {other:?} (expected test, train or all)"),
    };
    let e = evaluate(&model, &motions)?;
    let out = json!({
        "architecture": model.architecture().name(),
        "split": split,
        "accuracy": e.accuracy,
        "sample_count": e.sample_count,
        "class_names": dataset.class_names,
        "confusion": e.confusion,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn attack_config(cfg: &RunConfig, args: &AttackArgs, seed: Option<u64>) -> Result<(StrategySpec, AttackConfig)> {
    let section = &cfg.attack;
    let spec = args.strategy.or(section.strategy).unwrap_or(StrategySpec::Ab);
    let preset = args.preset.or(section.preset).unwrap_or(LossPreset::Full);
    // the concrete strategy is filled in per motion
    let mut ac = AttackConfig::new(Strategy::Ab, preset);
    if let Some(v) = args.lr.or(section.lr) {
        ac.lr = v;
    }
    if let Some(v) = args.max_iters.or(section.max_iters) {
        ac.max_iters = v;
    }
    if let Some(v) = section.w {
        ac.weights.w = v;
    }
    if let Some(v) = section.alpha {
        ac.weights.alpha = v;
    }
    if let Some(v) = section.beta {
        ac.weights.beta = v;
    }
    if let Some(v) = section.ab_target {
        ac.ab_target = v;
    }
    ac.seed = seed.unwrap_or(0);
    Ok((spec, ac))
}

/// Test motions the model gets right, sorted by id, at most `limit`.
fn attack_candidates<'a>(model: &Classifier64, dataset: &'a Dataset64, limit: Option<usize>) -> Result<Vec<&'a Motion64>> {
    let mut out = Vec::new();
    for m in dataset.in_split(Split::Test) {
        if Some(model.predict(m)?) == m.label() {
            out.push(m);
        }
    }
    out.sort_by(|a, b| a.id().cmp(b.id()));
    if let Some(n) = limit {
        out.truncate(n);
    }
    Ok(out)
}

fn check_strategy(spec: StrategySpec, class_count: usize, template: &AttackConfig) -> Result<()> {
    let probe = match spec {
        StrategySpec::Ab => Strategy::Ab,
        StrategySpec::Abn(n) => Strategy::Abn { n },
        StrategySpec::Sa(target) => Strategy::Sa { target },
        StrategySpec::SaRandom => {
            ensure!(class_count >= 2, "sa:random needs at least 2 classes");
            Strategy::Sa { target: 0 }
        }
    };
    let mut c = template.clone();
    c.strategy = probe;
    c.validate(class_count)?;
    Ok(())
}

#[derive(Serialize)]
struct MotionSummary {
    id: String,
    label: usize,
    file: Option<String>,
    strategy: Option<String>,
    success: bool,
    adversarial_label: Option<usize>,
    iterations_used: Option<usize>,
    returned_iteration: Option<usize>,
    losses: Option<skelattack::attack::LossRecord>,
    bone_change: Option<f64>,
    acceleration_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn attack(cfg: &RunConfig, ckpt: &Path, data: &Path, args: &AttackArgs, out: &Path, seed: Option<u64>) -> Result<()> {
    let (model, ckpt_digest) = load_model(ckpt)?;
    let dataset = load_data(data)?;
    ensure!(
        model.class_count() == dataset.class_count(),
        "checkpoint has {} classes, dataset {}",
        model.class_count(),
        dataset.class_count()
    );
    let (spec, template) = attack_config(cfg, args, seed)?;
    check_strategy(spec, model.class_count(), &template)?;
    let candidates = attack_candidates(&model, &dataset, args.limit)?;
    ensure!(!candidates.is_empty(), "the model classifies no test motion correctly");
    let results = attack_all(&model, &candidates, spec, &template);

    let motion_dir = out.join("motions");
    fs::create_dir_all(&motion_dir).with_context(|| format!("creating {}", motion_dir.display()))?;
    let skeleton = standard_skeleton();
    let gamma = joint_weight_vector(skeleton, SPINAL_WEIGHT, OTHER_WEIGHT);
    let mut summaries = Vec::with_capacity(results.len());
    for (m, r) in candidates.iter().zip(results) {
        let label = m.label().expect("candidates are labeled");
        let summary = match r {
            Ok(r) => {
                let file = format!("motions/{}.json", m.id());
                let doc = MotionDocument {
                    motion: r.adversarial.clone(),
                    origin_id: Some(m.id().to_string()),
                    attack: Some(attack_block(&r, &spec, &template)),
                };
                save_motion_document(&doc, out.join(&file))?;
                MotionSummary {
                    id: m.id().to_string(),
                    label,
                    file: Some(file),
                    strategy: Some(r.strategy.to_string()),
                    success: r.success,
                    adversarial_label: Some(r.adversarial_label()),
                    iterations_used: Some(r.iterations_used),
                    returned_iteration: Some(r.returned_iteration),
                    losses: Some(r.final_losses),
                    bone_change: Some(max_relative_bone_change(m, &r.adversarial, skeleton)?),
                    acceleration_deviation: Some(weighted_acceleration_deviation(m, &r.adversarial, &gamma)?),
                    error: None,
                }
            }
            Err(e) => MotionSummary {
                id: m.id().to_string(),
                label,
                file: None,
                strategy: None,
                success: false,
                adversarial_label: None,
                iterations_used: None,
                returned_iteration: None,
                losses: None,
                bone_change: None,
                acceleration_deviation: None,
                error: Some(e.to_string()),
            },
        };
        summaries.push(summary);
    }
    let attacked = summaries.len();
    let successes = summaries.iter().filter(|s| s.success).count();
    let success_rate = successes as f64 / attacked as f64;
    let mean = |f: fn(&MotionSummary) -> Option<f64>| {
        let v: Vec<f64> = summaries.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let config = json!({
        "strategy": spec,
        "attack": template,
        "checkpoint_sha256": ckpt_digest,
        "dataset_spec": dataset.spec,
        "limit": args.limit,
    });
    let manifest = json!({
        "format_version": MANIFEST_FORMAT_VERSION,
        "toolkit_version": skelattack::VERSION,
        "seed": template.seed,
        "config_hash": config_hash(&config)?,
        "config": config,
        "architecture": model.architecture().name(),
        "class_names": dataset.class_names,
        "test_motions": dataset.test().len(),
        "attacked": attacked,
        "successes": successes,
        "success_rate": success_rate,
        "mean_bone_change": mean(|s| s.bone_change),
        "mean_acceleration_deviation": mean(|s| s.acceleration_deviation),
        "motions": summaries,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "{} {spec}: {successes}/{attacked} succeeded ({:.1}%)",
        model.architecture().name(),
        100.0 * success_rate
    );
    Ok(())
}

fn attack_block(r: &AttackResult<f64>, spec: &StrategySpec, template: &AttackConfig) -> serde_json::Value {
    json!({
        "strategy": r.strategy.to_string(),
        "requested": spec,
        "preset": template.preset,
        "success": r.success,
        "clean_label": r.clean_label,
        "adversarial_label": r.adversarial_label(),
        "iterations_used": r.iterations_used,
        "returned_iteration": r.returned_iteration,
        "losses": r.final_losses,
    })
}

pub fn transfer(
    cfg: &RunConfig,
    surrogate: &Path,
    targets: &[PathBuf],
    data: &Path,
    args: &AttackArgs,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let (sur, _) = load_model(surrogate)?;
    let dataset = load_data(data)?;
    let mut target_models = Vec::new();
    for t in targets {
        target_models.push((model_id(t), load_model(t)?.0));
    }
    let (spec, template) = attack_config(cfg, args, seed)?;
    check_strategy(spec, sur.class_count(), &template)?;
    let candidates = attack_candidates(&sur, &dataset, args.limit)?;
    ensure!(!candidates.is_empty(), "the surrogate classifies no test motion correctly");
    let refs: Vec<(&str, &Classifier64)> = target_models.iter().map(|(id, m)| (id.as_str(), m)).collect();
    let sid = model_id(surrogate);
    let (report, _) = transfer_attack((&sid, &sur), &refs, &candidates, spec, &template)?;
    match out {
        Some(p) => {
            write_transfer_report(&report, p)?;
            for t in &report.targets {
                println!("{} -> {}: {:.3} ({}/{})", report.surrogate_id, t.target_id, t.success_rate, t.successes, t.sample_count);
            }
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

/// Every motion document under `<dir>/motions`, keyed by file stem order.
fn load_documents(dir: &Path) -> Result<Vec<MotionDocument<f64>>> {
    let motions = dir.join("motions");
    let mut paths: Vec<PathBuf> = fs::read_dir(&motions)
        .with_context(|| format!("listing {}", motions.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths.iter().map(|p| Ok(load_motion_document(p)?)).collect()
}

pub fn analyze(orig: &Path, adv: &Path, out: &Path, by_class: bool, successful_only: bool) -> Result<()> {
    let originals: BTreeMap<String, Motion64> = load_documents(orig)?
        .into_iter()
        .map(|d| (d.motion.id().to_string(), d.motion))
        .collect();
    let mut pairs: Vec<(&Motion64, Motion64)> = Vec::new();
    for doc in load_documents(adv)? {
        if successful_only {
            let ok = doc.attack.as_ref().and_then(|a| a["success"].as_bool()).unwrap_or(false);
            if !ok {
                continue;
            }
        }
        let key = doc.origin_id.clone().unwrap_or_else(|| doc.motion.id().to_string());
        let o = originals
            .get(&key)
            .with_context(|| format!("no original motion {key:?} in {}", orig.display()))?;
        pairs.push((o, doc.motion));
    }
    ensure!(!pairs.is_empty(), "no adversarial motions to analyze in {}", adv.display());
    let refs: Vec<(&Motion64, &Motion64)> = pairs.iter().map(|(o, a)| (*o, a)).collect();
    let report = pearson_correlation_maps(&refs)?;
    write_reports(&report, out)?;
    let mut groups = 0;
    if by_class {
        let mut classes: BTreeMap<usize, Vec<(&Motion64, &Motion64)>> = BTreeMap::new();
        for &(o, a) in &refs {
            if let Some(l) = o.label() {
                classes.entry(l).or_default().push((o, a));
            }
        }
        for (label, group) in classes {
            let r = pearson_correlation_maps(&group)?;
            write_reports(&r, out.join(format!("class-{label}")))?;
            groups += 1;
        }
    }
    let (d, off) = CorrelationReport::diagonal_contrast(&report.disp_acc);
    println!(
        "{} pairs; displacement-acceleration diagonal {} vs off-diagonal {}{}",
        report.sample_count,
        fmt_opt(d),
        fmt_opt(off),
        if by_class { format!("; {groups} class reports") } else { String::new() }
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

pub fn gradcheck(arch: Option<Architecture>, motions: usize, seed: u64) -> Result<bool> {
    let archs: Vec<Architecture> = match arch {
        Some(a) => vec![a],
        None => Architecture::ALL.to_vec(),
    };
    let cfg = GradientSuiteConfig { motions, seed, ..Default::default() };
    let outcomes = gradient_suite(&archs, &cfg)?;
    let mut ok = true;
    for o in &outcomes {
        ok &= o.passed;
        println!(
            "{} {:<28} max rel err {:.3e} over {} trials",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.max_rel_error,
            o.trials
        );
    }
    println!("{}/{} checks passed", outcomes.iter().filter(|o| o.passed).count(), outcomes.len());
    Ok(ok)
}
