//! The full network: encoder, mask-guided fusion, projector, adapted decoder
//! and the separated numerical estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::encoder::{avg_pool, class_fractions, classify_pixels, Image, PATCH, POOL, STRIDE};
use super::layers::{Block, BlockSpec, LayerNorm, Linear, Mmp, Oga};
use super::params::{Binder, GradAccum, ParamId, ParamStore};
use super::tensor::{Mat, Tape, Var};
use super::tokenizer::{fill, mask_numbers, Vocab};
use crate::error::{Error, Result};
use crate::loss::{argmax, clamp_count, nd_penalty, LossVariant, NDLossConfig};
use crate::raster::{SemanticMask, DEFAULT_RESOLUTION_M};

/// `H' x W' x C` encoder output, stored as `(H'*W') x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub data: Mat,
}

/// Guided features after fusion, same layout as [`FeatureMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct GuidedFeatures {
    pub height: usize,
    pub width: usize,
    pub data: Mat,
    pub gates: Mat,
}

/// One training or evaluation example.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Image,
    pub gt_mask: Option<SemanticMask>,
    pub question: String,
    pub answer: String,
}

/// A sample with everything that does not depend on weights precomputed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pooled: Mat,
    grid: (usize, usize),
    guidance: SemanticMask,
    fractions: Mat,
    question: Vec<u32>,
    /// Answer ids as the decoder sees them for the configured variant.
    answer: Vec<u32>,
    /// Ground-truth counts, clamped to the count vocabulary.
    pub counts: Vec<usize>,
}

impl Prepared {
    pub fn has_counts(&self) -> bool {
        !self.counts.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Estimator {
    input: Linear,
    summary: Linear,
    pos: ParamId,
    blocks: Vec<Block>,
    ln: LayerNorm,
    head: Linear,
}

/// Loss values of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub gen_loss: f64,
    pub count_loss: f64,
}

#[derive(Debug, Clone)]
pub struct EarthVlNet {
    pub cfg: ModelConfig,
    pub loss: NDLossConfig,
    pub vocab: Vocab,
    pub seed: u64,
    pub store: ParamStore,
    patch: Linear,
    oga: Oga,
    mmp: Mmp,
    tok_emb: ParamId,
    pos_emb: ParamId,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    lm_head: Linear,
    est: Estimator,
}

struct SeqOut {
    hidden: Var,
    /// Index of the separator token.
    sep: usize,
}

impl EarthVlNet {
    /// Builds all parameters deterministically from `seed`.
    pub fn new(cfg: ModelConfig, loss: NDLossConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        cfg.validate()?;
        loss.validate()?;
        if vocab.count_vocab() != loss.count_vocab {
            return Err(Error::Config(format!(
                "vocabulary has {} count tokens but loss.count_vocab is {}",
                vocab.count_vocab(),
                loss.count_vocab
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let d = cfg.dec_dim;
        let patch = Linear::new(&mut s, "encoder.patch", PATCH * PATCH * 3, cfg.feat_channels, true, &mut rng);
        let oga = Oga::new(
            &mut s,
            "oga",
            cfg.feat_channels,
            cfg.mask_embed_channels,
            cfg.oga_hidden(),
            &mut rng,
        );
        let mmp = Mmp::new(&mut s, "mmp", cfg.guided_channels(), d, &mut rng);
        let tok_emb = s.add("decoder.tok_emb", Mat::randn(vocab.len(), d, 0.02, &mut rng), true);
        let pos_emb = s.add("decoder.pos_emb", Mat::randn(cfg.max_seq, d, 0.02, &mut rng), true);
        let spec = BlockSpec {
            dim: d,
            heads: cfg.dec_heads,
            ffn_mult: cfg.ffn_mult,
            causal: true,
            lora: Some((cfg.lora_rank, cfg.lora_scale())),
        };
        let blocks = (0..cfg.dec_blocks)
            .map(|i| Block::new(&mut s, &format!("decoder.block{i}"), &spec, &mut rng))
            .collect();
        let ln_f = LayerNorm::new(&mut s, "decoder.ln_f", d, true);
        let lm_head = Linear::new(&mut s, "decoder.lm_head", d, vocab.len(), true, &mut rng);

        let e = cfg.est_dim;
        let est_spec = BlockSpec { dim: e, heads: cfg.est_heads, ffn_mult: cfg.ffn_mult, causal: false, lora: None };
        let est = Estimator {
            input: Linear::new(&mut s, "estimator.input", d, e, true, &mut rng),
            summary: Linear::new(&mut s, "estimator.summary", crate::raster::NUM_CLASSES, e, true, &mut rng),
            pos: s.add("estimator.pos", Mat::randn(cfg.max_placeholders + 1, e, 0.02, &mut rng), true),
            blocks: (0..cfg.est_blocks)
                .map(|i| Block::new(&mut s, &format!("estimator.block{i}"), &est_spec, &mut rng))
                .collect(),
            ln: LayerNorm::new(&mut s, "estimator.ln", e, true),
            head: Linear::new(&mut s, "estimator.head", e, loss.count_vocab, true, &mut rng),
        };
        Ok(EarthVlNet {
            cfg,
            loss,
            vocab,
            seed,
            store: s,
            patch,
            oga,
            mmp,
            tok_emb,
            pos_emb,
            blocks,
            ln_f,
            lm_head,
            est,
        })
    }

    pub fn variant(&self) -> LossVariant {
        self.loss.variant
    }

    /// Names of parameters that never change during training.
    pub fn frozen_names(&self) -> Vec<String> {
        self.store.iter().filter(|(_, p)| !p.trainable).map(|(_, p)| p.name.clone()).collect()
    }

    /// Features and the predicted mask (or `gt` when given).
    pub fn encode(&self, image: &Image, gt: Option<&SemanticMask>) -> Result<(FeatureMap, SemanticMask)> {
        image.check_stride()?;
        let mask = self.guidance_mask(image, gt)?;
        let pooled = avg_pool(image, POOL);
        let mut tape = Tape::new();
        let mut b = Binder::new(&self.store, false);
        let (h, w) = (image.height / STRIDE, image.width / STRIDE);
        let x = tape.constant(pooled);
        let f = self.features(&mut tape, &mut b, x, image.height / POOL, image.width / POOL);
        Ok((FeatureMap { height: h, width: w, data: tape.value(f).clone() }, mask))
    }

    fn guidance_mask(&self, image: &Image, gt: Option<&SemanticMask>) -> Result<SemanticMask> {
        match gt {
            Some(m) => {
                if (m.height(), m.width()) != (image.height, image.width) {
                    return Err(Error::DimensionMismatch {
                        expected: image.height * image.width,
                        got: m.height() * m.width(),
                    });
                }
                Ok(m.clone())
            }
            None => classify_pixels(image, DEFAULT_RESOLUTION_M),
        }
    }

    fn features(&self, tape: &mut Tape, p: &mut Binder, pooled: Var, ph: usize, pw: usize) -> Var {
        let patches = tape.patchify(pooled, ph, pw, PATCH);
        let f = self.patch.forward(tape, p, patches);
        tape.relu(f)
    }

    /// Mask-guided fusion on precomputed features.
    pub fn oga_fuse(&self, f: &FeatureMap, mask: &SemanticMask) -> Result<GuidedFeatures> {
        let mut tape = Tape::new();
        let mut b = Binder::new(&self.store, false);
        let x = tape.constant(f.data.clone());
        let out = self.oga.fuse(&mut tape, &mut b, x, mask, f.height, f.width)?;
        Ok(GuidedFeatures {
            height: f.height,
            width: f.width,
            data: tape.value(out.guided).clone(),
            gates: tape.value(out.gates).clone(),
        })
    }

    /// One visual token per feature-map position, in decoder width.
    pub fn mmp_project(&self, g: &GuidedFeatures) -> Mat {
        let mut tape = Tape::new();
        let mut b = Binder::new(&self.store, false);
        let x = tape.constant(g.data.clone());
        let y = self.mmp.forward(&mut tape, &mut b, x);
        tape.value(y).clone()
    }

    /// Answer ids for this network's variant, plus the clamped counts.
    fn answer_ids(&self, answer: &str) -> (Vec<u32>, Vec<usize>) {
        let tpl = mask_numbers(answer);
        let counts = tpl.numbers.iter().map(|&n| clamp_count(n, self.loss.count_vocab)).collect();
        let ids = match self.variant() {
            LossVariant::Separated => self.vocab.encode(&tpl.text),
            LossVariant::Shared => self.vocab.encode(answer),
        };
        (ids, counts)
    }

    pub fn prepare(&self, sample: &Sample) -> Result<Prepared> {
        sample.image.check_stride()?;
        let guidance = if self.cfg.use_gt_mask {
            self.guidance_mask(&sample.image, sample.gt_mask.as_ref())?
        } else {
            self.guidance_mask(&sample.image, None)?
        };
        let (answer, counts) = self.answer_ids(&sample.answer);
        if counts.len() > self.cfg.max_placeholders {
            return Err(Error::invalid(
                "answer",
                format!("{} numbers exceed max_placeholders {}", counts.len(), self.cfg.max_placeholders),
            ));
        }
        let grid = (sample.image.height / POOL, sample.image.width / POOL);
        let prep = Prepared {
            pooled: avg_pool(&sample.image, POOL),
            grid,
            fractions: class_fractions(&guidance),
            guidance,
            question: self.vocab.encode(&sample.question),
            answer,
            counts,
        };
        let len = self.visual_len(&prep) + prep.question.len() + 1 + prep.answer.len();
        if len > self.cfg.max_seq {
            return Err(Error::invalid("sample", format!("sequence of {len} tokens exceeds max_seq")));
        }
        Ok(prep)
    }

    fn visual_len(&self, prep: &Prepared) -> usize {
        (prep.grid.0 / PATCH) * (prep.grid.1 / PATCH)
    }

    fn visual_tokens(&self, tape: &mut Tape, p: &mut Binder, prep: &Prepared) -> Result<Var> {
        let x = tape.constant(prep.pooled.clone());
        let f = self.features(tape, p, x, prep.grid.0, prep.grid.1);
        let g = if self.cfg.oga_enabled {
            let (h, w) = (prep.grid.0 / PATCH, prep.grid.1 / PATCH);
            self.oga.fuse(tape, p, f, &prep.guidance, h, w)?.guided
        } else {
            f
        };
        Ok(self.mmp.forward(tape, p, g))
    }

    /// Decoder over `[visual; question; <sep>; answer]`, final norm applied.
    fn sequence(&self, tape: &mut Tape, p: &mut Binder, vis: Var, question: &[u32], answer: &[u32]) -> SeqOut {
        let n_vis = tape.value(vis).rows;
        let mut ids: Vec<usize> = question.iter().map(|&i| i as usize).collect();
        ids.push(self.vocab.sep() as usize);
        ids.extend(answer.iter().map(|&i| i as usize));
        let emb = p.var(tape, self.tok_emb);
        let toks = tape.gather_rows(emb, &ids);
        let x = tape.concat_rows(&[vis, toks]);
        let pos = p.var(tape, self.pos_emb);
        let total = n_vis + ids.len();
        let pos_rows: Vec<usize> = (0..total).collect();
        let pe = tape.gather_rows(pos, &pos_rows);
        let mut h = tape.add(x, pe);
        for b in &self.blocks {
            h = b.forward(tape, p, h);
        }
        let hidden = self.ln_f.forward(tape, p, h);
        SeqOut { hidden, sep: n_vis + question.len() }
    }

    fn estimator_logits(&self, tape: &mut Tape, p: &mut Binder, fractions: &Mat, states: Var) -> Var {
        let n = tape.value(states).rows;
        let f = tape.constant(fractions.clone());
        let summary = self.est.summary.forward(tape, p, f);
        let ph = self.est.input.forward(tape, p, states);
        let x = tape.concat_rows(&[summary, ph]);
        let pos = p.var(tape, self.est.pos);
        let rows: Vec<usize> = (0..=n).collect();
        let pe = tape.gather_rows(pos, &rows);
        let mut h = tape.add(x, pe);
        for b in &self.est.blocks {
            h = b.forward(tape, p, h);
        }
        let h = self.est.ln.forward(tape, p, h);
        let rows: Vec<usize> = (1..=n).collect();
        let out = tape.gather_rows(h, &rows);
        self.est.head.forward(tape, p, out)
    }

    /// Count distribution per placeholder state, given the guidance mask.
    pub fn numerical_estimate(&self, mask: &SemanticMask, placeholder_states: &Mat) -> Result<Vec<Vec<f64>>> {
        if placeholder_states.rows == 0 {
            return Err(Error::invalid("placeholder_states", "no placeholders"));
        }
        if placeholder_states.rows > self.cfg.max_placeholders {
            return Err(Error::invalid("placeholder_states", "more placeholders than max_placeholders"));
        }
        let mut tape = Tape::new();
        let mut b = Binder::new(&self.store, false);
        let s = tape.constant(placeholder_states.clone());
        let logits = self.estimator_logits(&mut tape, &mut b, &class_fractions(mask), s);
        Ok(softmax_rows(tape.value(logits)))
    }

    fn num_positions(&self, sep: usize, answer: &[u32]) -> Vec<usize> {
        answer
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == self.vocab.num())
            .map(|(j, _)| sep + 1 + j)
            .collect()
    }

    fn nd_weights(&self, logits: &Mat, targets: &[usize], col0: usize, loss: &NDLossConfig) -> Vec<f64> {
        targets
            .iter()
            .enumerate()
            .map(|(r, &t)| {
                let row = &logits.row(r)[col0..col0 + loss.count_vocab];
                let pred = argmax(row) as u64;
                1.0 + nd_penalty(pred, t as u64, loss.alpha, loss.gamma).expect("validated config")
            })
            .collect()
    }

    /// Builds the loss graph for one sample.
    fn sample_loss(&self, tape: &mut Tape, p: &mut Binder, prep: &Prepared, loss: &NDLossConfig) -> Result<(Var, Option<Var>)> {
        let vis = self.visual_tokens(tape, p, prep)?;
        let seq = self.sequence(tape, p, vis, &prep.question, &prep.answer);
        let mut targets: Vec<usize> = prep.answer.iter().map(|&t| t as usize).collect();
        targets.push(self.vocab.eos() as usize);
        let positions: Vec<usize> = (seq.sep..seq.sep + targets.len()).collect();
        match self.variant() {
            LossVariant::Separated => {
                let rows = tape.gather_rows(seq.hidden, &positions);
                let logits = self.lm_head.forward(tape, p, rows);
                let gen = tape.weighted_ce(logits, &targets, &vec![1.0; targets.len()], targets.len() as f64);
                if !prep.has_counts() {
                    return Ok((gen, None));
                }
                let ph = self.num_positions(seq.sep, &prep.answer);
                if ph.len() != prep.counts.len() {
                    return Err(Error::MissingCounts { expected: ph.len(), got: prep.counts.len() });
                }
                let states = tape.gather_rows(seq.hidden, &ph);
                let cl = self.estimator_logits(tape, p, &prep.fractions, states);
                let w = self.nd_weights(tape.value(cl), &prep.counts, 0, loss);
                let count = tape.weighted_ce(cl, &prep.counts, &w, prep.counts.len() as f64);
                Ok((gen, Some(count)))
            }
            LossVariant::Shared => {
                let (mut gen_pos, mut gen_t, mut cnt_pos, mut cnt_t) = (vec![], vec![], vec![], vec![]);
                for (&pos, &t) in positions.iter().zip(&targets) {
                    match self.vocab.count_of(t as u32) {
                        Some(k) => {
                            cnt_pos.push(pos);
                            cnt_t.push((t, k as usize));
                        }
                        None => {
                            gen_pos.push(pos);
                            gen_t.push(t);
                        }
                    }
                }
                let rows = tape.gather_rows(seq.hidden, &gen_pos);
                let logits = self.lm_head.forward(tape, p, rows);
                let gen = tape.weighted_ce(logits, &gen_t, &vec![1.0; gen_t.len()], gen_t.len() as f64);
                if cnt_pos.is_empty() {
                    return Ok((gen, None));
                }
                let rows = tape.gather_rows(seq.hidden, &cnt_pos);
                let logits = self.lm_head.forward(tape, p, rows);
                let counts: Vec<usize> = cnt_t.iter().map(|&(_, k)| k).collect();
                let ids: Vec<usize> = cnt_t.iter().map(|&(t, _)| t).collect();
                let w = self.nd_weights(tape.value(logits), &counts, self.vocab.count_base() as usize, loss);
                let count = tape.weighted_ce(logits, &ids, &w, ids.len() as f64);
                Ok((gen, Some(count)))
            }
        }
    }

    /// Mean losses and summed gradients over a batch, without updating weights.
    pub fn batch_gradients(&self, batch: &[Prepared], loss: &NDLossConfig, batch_id: usize) -> Result<(StepLosses, GradAccum)> {
        let mut acc = GradAccum::default();
        let (mut gen_sum, mut cnt_sum, mut cnt_n) = (0.0, 0.0, 0usize);
        for prep in batch {
            let mut tape = Tape::new();
            let mut b = Binder::new(&self.store, true);
            let (gen, count) = self.sample_loss(&mut tape, &mut b, prep, loss)?;
            let g = tape.value(gen).scalar();
            let total = match count {
                Some(c) => {
                    cnt_sum += tape.value(c).scalar();
                    cnt_n += 1;
                    tape.add(gen, c)
                }
                None => gen,
            };
            gen_sum += g;
            if !tape.value(total).scalar().is_finite() {
                return Err(Error::NonFiniteLoss { batch: batch_id });
            }
            tape.backward(total);
            acc.add(b.grads(&tape));
        }
        acc.scale(1.0 / batch.len() as f64);
        let losses = StepLosses {
            gen_loss: gen_sum / batch.len() as f64,
            count_loss: if cnt_n == 0 { 0.0 } else { cnt_sum / cnt_n as f64 },
        };
        Ok((losses, acc))
    }

    /// Predicted counts with the gold template fed to the decoder.
    pub fn teacher_forced_counts(&self, prep: &Prepared) -> Result<Vec<usize>> {
        if !prep.has_counts() {
            return Ok(vec![]);
        }
        let mut tape = Tape::new();
        let mut p = Binder::new(&self.store, false);
        let vis = self.visual_tokens(&mut tape, &mut p, prep)?;
        let seq = self.sequence(&mut tape, &mut p, vis, &prep.question, &prep.answer);
        match self.variant() {
            LossVariant::Separated => {
                let ph = self.num_positions(seq.sep, &prep.answer);
                let states = tape.gather_rows(seq.hidden, &ph);
                let cl = self.estimator_logits(&mut tape, &mut p, &prep.fractions, states);
                let m = tape.value(cl);
                Ok((0..m.rows).map(|r| argmax(m.row(r))).collect())
            }
            LossVariant::Shared => {
                // position before each count token predicts it
                let pos: Vec<usize> = prep
                    .answer
                    .iter()
                    .enumerate()
                    .filter(|(_, &t)| self.vocab.count_of(t).is_some())
                    .map(|(j, _)| seq.sep + j)
                    .collect();
                let rows = tape.gather_rows(seq.hidden, &pos);
                let logits = self.lm_head.forward(&mut tape, &mut p, rows);
                let m = tape.value(logits);
                let base = self.vocab.count_base() as usize;
                Ok((0..m.rows).map(|r| argmax(&m.row(r)[base..base + self.loss.count_vocab])).collect())
            }
        }
    }

    /// Greedy decoding. In the separated variant each `<num>` is filled, in
    /// order, from the estimator's most likely count.
    pub fn decode_answer(&self, image: &Image, gt: Option<&SemanticMask>, question: &str) -> Result<String> {
        let sample = Sample {
            image: image.clone(),
            gt_mask: gt.cloned(),
            question: question.to_string(),
            answer: String::new(),
        };
        let prep = self.prepare(&sample)?;
        let mut answer: Vec<u32> = Vec::new();
        let room = self.cfg.max_seq - (self.visual_len(&prep) + prep.question.len() + 1);
        let limit = self.cfg.max_answer_tokens.min(room);
        loop {
            let mut tape = Tape::new();
            let mut p = Binder::new(&self.store, false);
            let vis = self.visual_tokens(&mut tape, &mut p, &prep)?;
            let seq = self.sequence(&mut tape, &mut p, vis, &prep.question, &answer);
            if answer.len() >= limit {
                return self.finish(&mut tape, &mut p, &prep, seq, &answer);
            }
            let last = tape.gather_rows(seq.hidden, &[seq.sep + answer.len()]);
            let logits = self.lm_head.forward(&mut tape, &mut p, last);
            let next = argmax(tape.value(logits).row(0)) as u32;
            if next == self.vocab.eos() {
                return self.finish(&mut tape, &mut p, &prep, seq, &answer);
            }
            let too_many = next == self.vocab.num()
                && answer.iter().filter(|&&t| t == self.vocab.num()).count() >= self.cfg.max_placeholders;
            if too_many {
                return self.finish(&mut tape, &mut p, &prep, seq, &answer);
            }
            answer.push(next);
        }
    }

    fn finish(&self, tape: &mut Tape, p: &mut Binder, prep: &Prepared, seq: SeqOut, answer: &[u32]) -> Result<String> {
        let text = self.vocab.decode(answer);
        if self.variant() == LossVariant::Shared {
            return Ok(text);
        }
        let ph = self.num_positions(seq.sep, answer);
        if ph.is_empty() {
            return Ok(text);
        }
        let states = tape.gather_rows(seq.hidden, &ph);
        let cl = self.estimator_logits(tape, p, &prep.fractions, states);
        let m = tape.value(cl);
        let counts: Vec<u64> = (0..m.rows).map(|r| argmax(m.row(r)) as u64).collect();
        fill(&text, &counts)
    }
}

fn softmax_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows)
        .map(|r| {
            let row = m.row(r);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|&z| (z - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::encoder::render_sample_image;
    use crate::raster::LandCover;

    fn net(variant: LossVariant) -> EarthVlNet {
        let texts = ["How many buildings are there in this scene?", "There are 3 buildings.", "Yes", "No"];
        let loss = NDLossConfig { count_vocab: 11, variant, ..Default::default() };
        let vocab = Vocab::build(texts.iter().copied(), 11);
        EarthVlNet::new(ModelConfig::tiny(), loss, vocab, 5).unwrap()
    }

    fn sample(answer: &str) -> Sample {
        let mut m = SemanticMask::filled(64, 64, LandCover::Background, 0.3).unwrap();
        m.fill_rect(4, 4, 10, 10, LandCover::Building);
        m.fill_rect(40, 40, 46, 50, LandCover::Building);
        Sample {
            image: render_sample_image(&m, 3),
            gt_mask: Some(m),
            question: "How many buildings are there in this scene?".into(),
            answer: answer.into(),
        }
    }

    #[test]
    fn encode_shapes() {
        let n = net(LossVariant::Separated);
        let s = sample("2");
        let (f, pm) = n.encode(&s.image, None).unwrap();
        assert_eq!((f.height, f.width, f.data.cols), (2, 2, 8));
        assert_eq!(&pm, s.gt_mask.as_ref().unwrap());
        let (_, injected) = n.encode(&s.image, s.gt_mask.as_ref()).unwrap();
        assert_eq!(&injected, s.gt_mask.as_ref().unwrap());
        let g = n.oga_fuse(&f, &pm).unwrap();
        assert_eq!(g.data.shape(), (4, 12));
        assert_eq!(n.mmp_project(&g).shape(), (4, 16));
        let odd = Image::new(48, 64, vec![0.0; 48 * 64 * 3]).unwrap();
        assert!(n.encode(&odd, None).is_err());
        let (f2, _) = n.encode(&s.image, None).unwrap();
        assert_eq!(f, f2);
    }

    #[test]
    fn estimator_rows_are_distributions() {
        let n = net(LossVariant::Separated);
        let m = sample("1").gt_mask.unwrap();
        let probs = n.numerical_estimate(&m, &Mat::filled(3, 16, 0.1)).unwrap();
        assert_eq!(probs.len(), 3);
        for p in probs {
            assert_eq!(p.len(), 11);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(n.numerical_estimate(&m, &Mat::zeros(0, 16)).is_err());
    }

    #[test]
    fn both_variants_step() {
        for v in [LossVariant::Separated, LossVariant::Shared] {
            let n = net(v);
            let prep = n.prepare(&sample("There are 3 buildings.")).unwrap();
            let (l, g) = n.batch_gradients(&[prep.clone()], &n.loss, 0).unwrap();
            assert!(l.gen_loss > 0.0 && l.count_loss > 0.0, "{v}");
            let frozen = n.store.find("decoder.block0.q.w").unwrap();
            assert!(g.get(frozen).is_none());
            let lora = n.store.find("decoder.block0.q.lora_b").unwrap();
            assert!(g.get(lora).is_some());
            let counts = n.teacher_forced_counts(&prep).unwrap();
            assert_eq!(counts.len(), 1);
        }
    }

    #[test]
    fn decoding_is_deterministic_and_filled() {
        let n = net(LossVariant::Separated);
        let s = sample("2");
        let a = n.decode_answer(&s.image, None, &s.question).unwrap();
        let b = n.decode_answer(&s.image, None, &s.question).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("<num>"));
    }
}
