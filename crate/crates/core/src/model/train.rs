//! Training loop, synthetic counting data, and checkpoints.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::encoder::render_sample_image;
use super::net::{EarthVlNet, Prepared, Sample};
use super::params::{poly_lr, Adam, ParamStore};
use super::tokenizer::Vocab;
use crate::error::{Error, Result};
use crate::loss::NDLossConfig;
use crate::qa::templates;
use crate::raster::{LandCover, SemanticMask};

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub gen_loss: f64,
    pub count_loss: f64,
    pub lr: f64,
}

/// Runs `tcfg.epochs` passes over `data` with Adam and a poly schedule.
/// `on_step` sees every log line as it is produced.
pub fn train(
    net: &mut EarthVlNet,
    data: &[Prepared],
    tcfg: &TrainConfig,
    seed: u64,
    mut on_step: impl FnMut(&StepLog) -> Result<()>,
) -> Result<Vec<StepLog>> {
    tcfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("data", "no training samples"));
    }
    let per_epoch = data.len().div_ceil(tcfg.batch_size);
    let total = per_epoch * tcfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut opt = Adam::default();
    let loss_cfg = net.loss.clone();
    let mut log = Vec::with_capacity(total);
    let mut step = 0;
    for _ in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(tcfg.batch_size) {
            let batch: Vec<Prepared> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (losses, mut grads) = net.batch_gradients(&batch, &loss_cfg, step)?;
            grads.clip_norm(tcfg.max_grad_norm);
            let lr = poly_lr(tcfg.lr, step, total, tcfg.poly_power);
            opt.step(&mut net.store, &grads, lr);
            let entry = StepLog { step, gen_loss: losses.gen_loss, count_loss: losses.count_loss, lr };
            on_step(&entry)?;
            log.push(entry);
            step += 1;
        }
    }
    Ok(log)
}

/// Root-mean-square error of teacher-forced count predictions.
pub fn count_rmse(net: &EarthVlNet, data: &[Prepared]) -> Result<f64> {
    let mut se = 0.0;
    let mut n = 0usize;
    for prep in data {
        let pred = net.teacher_forced_counts(prep)?;
        for (p, t) in pred.iter().zip(&prep.counts) {
            se += (*p as f64 - *t as f64).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("data", "no counting samples"));
    }
    Ok((se / n as f64).sqrt())
}

/// Shape of the synthetic counting task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountingTask {
    pub size: usize,
    pub max_count: usize,
    pub min_side: usize,
    pub max_side: usize,
    /// Add a water and a forest patch as clutter.
    pub clutter: bool,
}

impl Default for CountingTask {
    fn default() -> Self {
        CountingTask { size: 64, max_count: 8, min_side: 4, max_side: 7, clutter: true }
    }
}

/// Places `k` square buildings with at least one free pixel between any two.
fn place_buildings<R: Rng>(mask: &mut SemanticMask, k: usize, task: &CountingTask, rng: &mut R) -> Result<()> {
    let n = mask.height();
    let mut taken = vec![false; n * n];
    for _ in 0..k {
        let mut placed = false;
        for _ in 0..500 {
            let side = rng.gen_range(task.min_side..=task.max_side);
            let r0 = rng.gen_range(1..n - side - 1);
            let c0 = rng.gen_range(1..n - side - 1);
            let clear = (r0 - 1..r0 + side + 1)
                .all(|r| (c0 - 1..c0 + side + 1).all(|c| !taken[r * n + c]));
            if !clear {
                continue;
            }
            for r in r0..r0 + side {
                for c in c0..c0 + side {
                    taken[r * n + c] = true;
                }
            }
            mask.fill_rect(r0, c0, r0 + side, c0 + side, LandCover::Building);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Infeasible(format!("could not place {k} buildings on a {n}x{n} grid")));
        }
    }
    Ok(())
}

/// Building-counting samples with uniformly drawn counts.
pub fn counting_samples(n: usize, task: &CountingTask, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let question = templates::q_count(LandCover::Building);
    (0..n)
        .map(|i| {
            let mut m = SemanticMask::filled(task.size, task.size, LandCover::Background, 0.3)?;
            if task.clutter {
                let (r, c) = (rng.gen_range(0..task.size - 12), rng.gen_range(0..task.size - 12));
                m.fill_rect(r, c, r + rng.gen_range(4..12), c + rng.gen_range(4..12), LandCover::Water);
                let (r, c) = (rng.gen_range(0..task.size - 12), rng.gen_range(0..task.size - 12));
                m.fill_rect(r, c, r + rng.gen_range(4..12), c + rng.gen_range(4..12), LandCover::Forest);
            }
            let k = rng.gen_range(0..=task.max_count);
            place_buildings(&mut m, k, task, &mut rng)?;
            Ok(Sample {
                image: render_sample_image(&m, seed.wrapping_mul(1_000_003).wrapping_add(i as u64)),
                gt_mask: Some(m),
                question: question.clone(),
                answer: k.to_string(),
            })
        })
        .collect()
}

/// Vocabulary over every question and answer of `samples`.
pub fn vocab_for(samples: &[Sample], count_vocab: usize) -> Vocab {
    let texts = samples.iter().flat_map(|s| {
        let tpl = super::tokenizer::mask_numbers(&s.answer);
        [s.question.clone(), s.answer.clone(), tpl.text]
    });
    let texts: Vec<String> = texts.collect();
    Vocab::build(texts.iter().map(|s| s.as_str()), count_vocab)
}

/// Everything needed to rebuild a trained network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelConfig,
    pub loss: NDLossConfig,
    pub seed: u64,
    pub vocab: Vocab,
    pub params: ParamStore,
}

pub const CHECKPOINT_FORMAT: &str = "earthvl-checkpoint/1";

impl Checkpoint {
    pub fn from_net(net: &EarthVlNet) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            model: net.cfg.clone(),
            loss: net.loss.clone(),
            seed: net.seed,
            vocab: net.vocab.clone(),
            params: net.store.clone(),
        }
    }

    pub fn into_net(self) -> Result<EarthVlNet> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unsupported checkpoint format {:?}", self.format)));
        }
        let mut vocab = self.vocab;
        vocab.reindex();
        let mut net = EarthVlNet::new(self.model, self.loss, vocab, self.seed)?;
        net.store.load_from(&self.params)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::connected_components;

    fn small_task() -> CountingTask {
        CountingTask { max_count: 4, ..Default::default() }
    }

    fn setup(seed: u64) -> (EarthVlNet, Vec<Prepared>) {
        let samples = counting_samples(12, &small_task(), 3).unwrap();
        let loss = NDLossConfig { count_vocab: 11, ..Default::default() };
        let net = EarthVlNet::new(ModelConfig::tiny(), loss, vocab_for(&samples, 11), seed).unwrap();
        let data = samples.iter().map(|s| net.prepare(s).unwrap()).collect();
        (net, data)
    }

    #[test]
    fn counting_samples_have_known_counts() {
        let samples = counting_samples(20, &CountingTask::default(), 9).unwrap();
        for s in &samples {
            let m = s.gt_mask.as_ref().unwrap();
            let n = connected_components(m, LandCover::Building, 10).unwrap().len();
            assert_eq!(n.to_string(), s.answer);
        }
        let again = counting_samples(20, &CountingTask::default(), 9).unwrap();
        assert!(samples.iter().zip(&again).all(|(a, b)| a.image == b.image && a.answer == b.answer));
    }

    #[test]
    fn training_is_deterministic_and_respects_freezing() {
        let tcfg = TrainConfig { lr: 3e-3, epochs: 3, batch_size: 4, ..Default::default() };
        let (mut a, data) = setup(1);
        let before = a.store.clone();
        let log_a = train(&mut a, &data, &tcfg, 1, |_| Ok(())).unwrap();
        let (mut b, _) = setup(1);
        let log_b = train(&mut b, &data, &tcfg, 1, |_| Ok(())).unwrap();
        assert_eq!(log_a, log_b);
        assert_eq!(log_a.len(), 9);
        for (id, p) in a.store.iter() {
            if !p.trainable {
                assert_eq!(&p.value, before.value(id), "{} changed", p.name);
            }
        }
        let lora = a.store.find("decoder.block0.v.lora_b").unwrap();
        assert_ne!(a.store.value(lora), before.value(lora));
    }

    #[test]
    fn training_lowers_the_loss() {
        let tcfg = TrainConfig { lr: 3e-3, epochs: 15, batch_size: 4, ..Default::default() };
        let (mut net, data) = setup(2);
        let log = train(&mut net, &data, &tcfg, 2, |_| Ok(())).unwrap();
        let first = log[0].gen_loss + log[0].count_loss;
        let last = log.last().unwrap();
        assert!(last.gen_loss + last.count_loss < 0.7 * first);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (net, data) = setup(4);
        let json = serde_json::to_string(&Checkpoint::from_net(&net)).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        let net2 = back.into_net().unwrap();
        assert_eq!(net2.store, net.store);
        assert_eq!(
            net.teacher_forced_counts(&data[0]).unwrap(),
            net2.teacher_forced_counts(&data[0]).unwrap()
        );
    }
}
