use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use earthvl_core::augment::{augment_sample, transform_meta, GeoTransform};
use earthvl_core::io::{
    gen_synthetic_masks, read_json, read_jsonl, read_mask_png, write_json, write_jsonl, write_mask_png, DatasetManifest,
    Inventory, ManifestEntry, RunConfig, Split, SynthSpec,
};
use earthvl_core::loss::LossVariant;
use earthvl_core::metrics::{
    answer_distribution_stats, join_open_ended, join_predictions, prediction_map, McReport, OeReport, Prediction,
};
use earthvl_core::model::{
    count_rmse, counting_samples, train, vocab_for, Checkpoint, CountingTask, EarthVlNet, ModelConfig, StepLog,
};
use earthvl_core::qa::{generate_qa, QAPair, QType, SceneMeta};
use earthvl_core::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::{AugmentArgs, Cli, CliResult, Command, EvalArgs, GenQaArgs, StatsArgs, SynthArgs, TrainToyArgs};

pub fn run(cli: Cli) -> CliResult {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    log::info!("seed {}", cfg.seed);
    match cli.command {
        Command::GenQa(a) => gen_qa(&cfg, a),
        Command::Augment(a) => augment(&cfg, a),
        Command::Stats(a) => stats(a),
        Command::TrainToy(a) => train_toy(&cfg, a),
        Command::EvalMc(a) => eval_mc(a),
        Command::EvalOpen(a) => eval_open(a),
        Command::Synth(a) => synth(&cfg, a),
    }
}

fn load_meta(manifest: &Path, e: &ManifestEntry) -> CliResult<SceneMeta> {
    match &e.meta_path {
        Some(p) => read_json(&DatasetManifest::resolve(manifest, p)),
        None => Ok(SceneMeta::default()),
    }
}

fn gen_qa(cfg: &RunConfig, a: GenQaArgs) -> CliResult {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let split: Option<Split> = a.split.as_deref().map(str::parse).transpose()?;
    let entries: Vec<&ManifestEntry> =
        manifest.entries.iter().filter(|e| split.is_none_or(|s| e.split == s)).collect();
    let per_image = entries
        .par_iter()
        .map(|e| {
            let mask = read_mask_png(&DatasetManifest::resolve(&a.manifest, &e.mask_path), cfg.resolution_m)?;
            let meta = load_meta(&a.manifest, e)?;
            generate_qa(&e.image_id, &mask, &meta, &cfg.thresholds)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let pairs: Vec<QAPair> = per_image.into_iter().flatten().collect();
    write_jsonl(&a.out, &pairs)?;
    println!("wrote {} QA pairs for {} images to {}", pairs.len(), entries.len(), a.out.display());
    Ok(())
}

fn augment(cfg: &RunConfig, a: AugmentArgs) -> CliResult {
    let mut flags = cfg.augment.clone();
    flags.hflip |= a.hflip;
    flags.vflip |= a.vflip;
    flags.rot90 |= a.rot90;
    let kinds = flags.kinds();
    if kinds.is_empty() {
        return Err(Error::invalid("augment", "select at least one of --hflip, --vflip, --rot90"));
    }
    let t = GeoTransform::from_kinds(&kinds);
    let tag = kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("+");
    let manifest = DatasetManifest::load(&a.manifest)?;
    let mut by_image: BTreeMap<String, Vec<QAPair>> = BTreeMap::new();
    for qa in read_jsonl::<QAPair>(&a.qa)? {
        by_image.entry(qa.image_id.clone()).or_default().push(qa);
    }
    let known: std::collections::HashSet<&str> = manifest.entries.iter().map(|e| e.image_id.as_str()).collect();
    let orphans = by_image.keys().filter(|k| !known.contains(k.as_str())).count();
    if orphans > 0 {
        log::warn!("{orphans} images in the QA file are not in the manifest and were skipped");
    }

    let results = manifest
        .entries
        .par_iter()
        .map(|e| {
            let mask = read_mask_png(&DatasetManifest::resolve(&a.manifest, &e.mask_path), cfg.resolution_m)?;
            let qas = by_image.get(&e.image_id).map(Vec::as_slice).unwrap_or(&[]);
            let (out_mask, out_qas) = augment_sample(&mask, qas, t);
            let new_id = format!("{}-{tag}", e.image_id);
            let prefix = format!("{}-", e.image_id);
            let out_qas: Vec<QAPair> = out_qas
                .into_iter()
                .map(|mut q| {
                    let key = q.qid.strip_prefix(&prefix).unwrap_or(&q.qid).to_string();
                    q.qid = format!("{new_id}-{key}");
                    q.image_id = new_id.clone();
                    q.meta.insert("augment".into(), tag.clone());
                    q
                })
                .collect();
            let mask_rel = PathBuf::from("masks").join(format!("{new_id}.png"));
            write_mask_png(&a.out.join(&mask_rel), &out_mask)?;
            let meta_rel = match &e.meta_path {
                Some(_) => {
                    let meta = transform_meta(&mask, &load_meta(&a.manifest, e)?, t, cfg.thresholds.min_pixels)?;
                    let rel = PathBuf::from("meta").join(format!("{new_id}.json"));
                    write_json(&a.out.join(&rel), &meta)?;
                    Some(rel)
                }
                None => None,
            };
            if e.image_path.is_some() {
                log::debug!("{}: image not transformed; the augmented entry has masks only", e.image_id);
            }
            let entry = ManifestEntry {
                image_id: new_id,
                mask_path: mask_rel,
                split: e.split,
                image_path: None,
                meta_path: meta_rel,
            };
            Ok((entry, out_qas))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let (entries, qas): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let qas: Vec<QAPair> = qas.into_iter().flatten().collect();
    write_jsonl(&a.out.join("qa.jsonl"), &qas)?;
    DatasetManifest { entries }.save(&a.out.join("manifest.json"))?;
    println!("{tag}: {} masks, {} QA pairs -> {}", known.len(), qas.len(), a.out.display());
    Ok(())
}

fn stats(a: StatsArgs) -> CliResult {
    let corpus: Vec<QAPair> = read_jsonl(&a.qa)?;
    if corpus.is_empty() {
        return Err(Error::invalid("qa", "corpus is empty"));
    }
    let s = answer_distribution_stats(&corpus);
    if let Some(out) = &a.out {
        write_json(out, &s)?;
    }
    println!("{} QA pairs", s.total);
    for (q, n) in &s.per_qtype {
        println!("  {:<5} {n}", q.as_str());
    }
    if let Some(bj) = s.answers_by_qtype.get(&QType::BJ) {
        let get = |k: &str| bj.get(k).copied().unwrap_or(0);
        println!("BJ answers: Yes {} / No {}", get("Yes"), get("No"));
    }
    let lengths: Vec<String> = s.length_histogram.iter().map(|(l, n)| format!("{l}:{n}")).collect();
    println!("answer lengths (words:count): {}", lengths.join(" "));
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    train_samples: usize,
    test_samples: usize,
    steps: usize,
    final_gen_loss: f64,
    final_count_loss: f64,
    test_count_rmse: f64,
}

fn train_toy(cfg: &RunConfig, a: TrainToyArgs) -> CliResult {
    let model = if a.small { ModelConfig::small() } else { cfg.model.clone() };
    let mut loss = cfg.loss.clone();
    if let Some(x) = a.alpha {
        loss.alpha = x;
    }
    if let Some(x) = a.gamma {
        loss.gamma = x;
    }
    if let Some(v) = &a.variant {
        loss.variant = v.parse::<LossVariant>()?;
    }
    loss.validate()?;
    let mut tcfg = cfg.train.clone();
    if let Some(e) = a.epochs {
        tcfg.epochs = e;
    }
    tcfg.validate()?;
    if a.samples == 0 || a.test_samples == 0 {
        return Err(Error::invalid("samples", "need at least one training and one test sample"));
    }

    let task = CountingTask::default();
    let train_set = counting_samples(a.samples, &task, cfg.seed)?;
    let test_set = counting_samples(a.test_samples, &task, cfg.seed ^ 0x7e57_5e70)?;
    let mut net = EarthVlNet::new(model, loss.clone(), vocab_for(&train_set, loss.count_vocab), cfg.seed)?;
    let train_prep = train_set.iter().map(|s| net.prepare(s)).collect::<CliResult<Vec<_>>>()?;
    let test_prep = test_set.iter().map(|s| net.prepare(s)).collect::<CliResult<Vec<_>>>()?;
    let log: Vec<StepLog> = train(&mut net, &train_prep, &tcfg, cfg.seed, |s| {
        log::debug!("step {} gen {:.4} count {:.4}", s.step, s.gen_loss, s.count_loss);
        Ok(())
    })?;

    let mut gt = Vec::with_capacity(test_set.len());
    let mut preds = Vec::with_capacity(test_set.len());
    for (i, s) in test_set.iter().enumerate() {
        let qa = QAPair::new(&format!("toy-{i:04}"), "bc-building", QType::BC, s.question.clone(), s.answer.clone());
        let gt_mask = if net.cfg.use_gt_mask { s.gt_mask.as_ref() } else { None };
        let answer = net.decode_answer(&s.image, gt_mask, &s.question)?;
        preds.push(Prediction { qid: qa.qid.clone(), answer });
        gt.push(qa);
    }
    let last = log.last().copied().expect("at least one step");
    let summary = TrainSummary {
        train_samples: train_set.len(),
        test_samples: test_set.len(),
        steps: log.len(),
        final_gen_loss: last.gen_loss,
        final_count_loss: last.count_loss,
        test_count_rmse: count_rmse(&net, &test_prep)?,
    };
    write_json(&a.out.join("checkpoint.json"), &Checkpoint::from_net(&net))?;
    write_jsonl(&a.out.join("train_log.jsonl"), &log)?;
    write_jsonl(&a.out.join("test_qa.jsonl"), &gt)?;
    write_jsonl(&a.out.join("predictions.jsonl"), &preds)?;
    write_json(&a.out.join("summary.json"), &summary)?;
    println!(
        "{} steps, final loss gen {:.4} count {:.4}, test count RMSE {:.3} ({} loss, alpha {}, gamma {})",
        summary.steps,
        summary.final_gen_loss,
        summary.final_count_loss,
        summary.test_count_rmse,
        loss.variant,
        loss.alpha,
        loss.gamma
    );
    Ok(())
}

fn load_eval(a: &EvalArgs) -> CliResult<(Vec<QAPair>, BTreeMap<String, String>)> {
    let gt: Vec<QAPair> = read_jsonl(&a.qa)?;
    let preds = prediction_map(read_jsonl::<Prediction>(&a.predictions)?)?;
    let known: std::collections::HashSet<&str> = gt.iter().map(|q| q.qid.as_str()).collect();
    let extra = preds.keys().filter(|k| !known.contains(k.as_str())).count();
    if extra > 0 {
        log::warn!("{extra} predictions have no ground truth and were ignored");
    }
    Ok((gt, preds))
}

fn eval_mc(a: EvalArgs) -> CliResult {
    let (gt, preds) = load_eval(&a)?;
    let (records, missing) = join_predictions(&gt, &preds);
    let report = McReport::compute(&records, missing)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    print!("{}", report.table());
    Ok(())
}

fn eval_open(a: EvalArgs) -> CliResult {
    let (gt, preds) = load_eval(&a)?;
    let (records, missing) = join_open_ended(&gt, &preds);
    if records.is_empty() {
        return Err(Error::invalid("qa", "no open-ended questions in the ground truth"));
    }
    let report = OeReport::compute(&records, missing)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    print!("{}", report.table());
    Ok(())
}

#[derive(Serialize)]
struct InventoryLine<'a> {
    image_id: &'a str,
    inventory: &'a Inventory,
}

fn synth(cfg: &RunConfig, a: SynthArgs) -> CliResult {
    let spec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SynthSpec::preset(&a.preset)?,
    };
    let split: Split = a.split.parse()?;
    let scenes = gen_synthetic_masks(&spec, cfg.seed, a.count)?;
    let ids: Vec<String> = (0..scenes.len()).map(|i| format!("synth-{i:04}")).collect();
    let mut entries = Vec::with_capacity(scenes.len());
    for (id, s) in ids.iter().zip(&scenes) {
        let rel = PathBuf::from("masks").join(format!("{id}.png"));
        write_mask_png(&a.out.join(&rel), &s.mask)?;
        entries.push(ManifestEntry { image_id: id.clone(), mask_path: rel, split, image_path: None, meta_path: None });
    }
    let inv: Vec<InventoryLine> =
        ids.iter().zip(&scenes).map(|(id, s)| InventoryLine { image_id: id, inventory: &s.inventory }).collect();
    write_jsonl(&a.out.join("inventory.jsonl"), &inv)?;
    DatasetManifest { entries }.save(&a.out.join("manifest.json"))?;
    println!("wrote {} masks to {}", scenes.len(), a.out.display());
    Ok(())
}
