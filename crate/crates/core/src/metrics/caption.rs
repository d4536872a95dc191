//! Corpus BLEU, ROUGE-L and CIDEr for open-ended answers.
//!
//! Formulas follow the widely used COCO caption evaluation code, including
//! its smoothing constants, so scores are comparable with published tables.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::text::{ngram_counts, tokenize};
use crate::error::{Error, Result};

pub const MAX_N: usize = 4;
pub const ROUGE_BETA: f64 = 1.2;
/// Gaussian length penalty width of CIDEr-D.
pub const CIDER_D_SIGMA: f64 = 6.0;

const TINY: f64 = 1e-15;
const SMALL: f64 = 1e-9;

/// An open-ended prediction with its reference answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OeRecord {
    pub qid: String,
    pub predicted: String,
    pub references: Vec<String>,
}

impl OeRecord {
    pub fn new(qid: impl Into<String>, predicted: impl Into<String>, references: Vec<String>) -> Result<Self> {
        let r = OeRecord { qid: qid.into(), predicted: predicted.into(), references };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if self.references.is_empty() {
            return Err(Error::invalid("references", format!("{} has no reference answers", self.qid)));
        }
        Ok(())
    }
}

/// Tokenized form of a record.
struct Tok {
    hyp: Vec<String>,
    refs: Vec<Vec<String>>,
}

fn tokenize_all(records: &[OeRecord]) -> Result<Vec<Tok>> {
    if records.is_empty() {
        return Err(Error::invalid("records", "no open-ended records"));
    }
    records
        .iter()
        .map(|r| {
            r.validate()?;
            Ok(Tok { hyp: tokenize(&r.predicted), refs: r.references.iter().map(|s| tokenize(s)).collect() })
        })
        .collect()
}

/// Qids whose prediction has no tokens. They score 0 on every metric.
pub fn empty_predictions(records: &[OeRecord]) -> Vec<String> {
    records.iter().filter(|r| tokenize(&r.predicted).is_empty()).map(|r| r.qid.clone()).collect()
}

/// Corpus BLEU-1..4 with clipped n-gram precision and a brevity penalty
/// against the closest reference length (shorter wins ties).
pub fn bleu(records: &[OeRecord]) -> Result<[f64; MAX_N]> {
    let toks = tokenize_all(records)?;
    let (mut testlen, mut reflen) = (0usize, 0usize);
    let mut guess = [0usize; MAX_N];
    let mut correct = [0usize; MAX_N];
    for t in &toks {
        let hl = t.hyp.len();
        testlen += hl;
        reflen += t.refs.iter().map(|r| r.len()).min_by_key(|&l| (l.abs_diff(hl), l)).unwrap_or(0);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &t.refs {
            for (g, c) in ngram_counts(r, MAX_N) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        for (g, c) in ngram_counts(&t.hyp, MAX_N) {
            correct[g.len() - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
        }
        for (k, slot) in guess.iter_mut().enumerate() {
            *slot += hl.saturating_sub(k);
        }
    }
    let mut out = [0.0; MAX_N];
    let mut prod = 1.0;
    for k in 0..MAX_N {
        prod *= (correct[k] as f64 + TINY) / (guess[k] as f64 + SMALL);
        out[k] = prod.powf(1.0 / (k + 1) as f64);
    }
    let ratio = (testlen as f64 + TINY) / (reflen as f64 + SMALL);
    if ratio < 1.0 {
        let bp = (1.0 - 1.0 / ratio).exp();
        out.iter_mut().for_each(|b| *b *= bp);
    }
    Ok(out)
}

/// Longest common subsequence length.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Mean and per-record scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub corpus: f64,
    pub per_record: Vec<f64>,
}

impl CorpusScore {
    fn from_scores(per_record: Vec<f64>) -> Self {
        CorpusScore { corpus: per_record.iter().sum::<f64>() / per_record.len() as f64, per_record }
    }
}

/// ROUGE-L F-measure. Precision and recall are each maximized over the
/// references before combining.
pub fn rouge_l(records: &[OeRecord]) -> Result<CorpusScore> {
    let toks = tokenize_all(records)?;
    let scores = toks
        .iter()
        .map(|t| {
            if t.hyp.is_empty() {
                return 0.0;
            }
            let (mut p, mut r) = (0.0f64, 0.0f64);
            for rf in t.refs.iter().filter(|rf| !rf.is_empty()) {
                let l = lcs_len(&t.hyp, rf) as f64;
                p = p.max(l / t.hyp.len() as f64);
                r = r.max(l / rf.len() as f64);
            }
            if p == 0.0 || r == 0.0 {
                0.0
            } else {
                let b2 = ROUGE_BETA * ROUGE_BETA;
                (1.0 + b2) * p * r / (r + b2 * p)
            }
        })
        .collect();
    Ok(CorpusScore::from_scores(scores))
}

/// TF-IDF vector of one sentence, split by n-gram order.
struct TfIdf<'a> {
    vec: [HashMap<&'a [String], f64>; MAX_N],
    norm: [f64; MAX_N],
    /// Bigram count, the length the reference implementation compares.
    length: f64,
}

/// Document frequencies over the reference sets, computed once per corpus.
pub struct CiderIdf<'a> {
    df: HashMap<&'a [String], usize>,
    log_n: f64,
}

impl<'a> CiderIdf<'a> {
    fn new(toks: &'a [Tok]) -> Self {
        let mut df = HashMap::new();
        for t in toks {
            let set: HashSet<&[String]> = t.refs.iter().flat_map(|r| ngram_counts(r, MAX_N).into_keys()).collect();
            for g in set {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        CiderIdf { df, log_n: (toks.len() as f64).ln() }
    }

    fn vectorize(&self, tokens: &'a [String]) -> TfIdf<'a> {
        let mut v = TfIdf { vec: Default::default(), norm: [0.0; MAX_N], length: 0.0 };
        for (g, tf) in ngram_counts(tokens, MAX_N) {
            let n = g.len() - 1;
            let df = self.df.get(g).copied().unwrap_or(0).max(1) as f64;
            let w = tf as f64 * (self.log_n - df.ln());
            v.vec[n].insert(g, w);
            v.norm[n] += w * w;
            if n == 1 {
                v.length += tf as f64;
            }
        }
        v.norm.iter_mut().for_each(|x| *x = x.sqrt());
        v
    }
}

fn cider_sim(h: &TfIdf, r: &TfIdf, clipped: bool) -> f64 {
    let mut total = 0.0;
    for n in 0..MAX_N {
        let mut val = 0.0;
        for (g, &wh) in &h.vec[n] {
            let wr = r.vec[n].get(g).copied().unwrap_or(0.0);
            val += if clipped { wh.min(wr) * wr } else { wh * wr };
        }
        if h.norm[n] != 0.0 && r.norm[n] != 0.0 {
            val /= h.norm[n] * r.norm[n];
        }
        if clipped {
            let delta = h.length - r.length;
            val *= (-(delta * delta) / (2.0 * CIDER_D_SIGMA * CIDER_D_SIGMA)).exp();
        }
        total += val;
    }
    total / MAX_N as f64
}

fn cider_impl(records: &[OeRecord], clipped: bool) -> Result<CorpusScore> {
    let toks = tokenize_all(records)?;
    let idf = CiderIdf::new(&toks);
    let scores = toks
        .iter()
        .map(|t| {
            let h = idf.vectorize(&t.hyp);
            let s: f64 = t.refs.iter().map(|r| cider_sim(&h, &idf.vectorize(r), clipped)).sum();
            let s = s / t.refs.len() as f64;
            if clipped {
                10.0 * s
            } else {
                s
            }
        })
        .collect();
    Ok(CorpusScore::from_scores(scores))
}

/// CIDEr: uniform mean over n = 1..4 of the TF-IDF cosine, averaged over
/// references. IDF comes from the whole corpus of references.
pub fn cider(records: &[OeRecord]) -> Result<CorpusScore> {
    cider_impl(records, false)
}

/// CIDEr-D: clipped hypothesis weights, a Gaussian length penalty and a
/// factor of 10. Reported alongside plain CIDEr for comparison with tables
/// produced by the common toolkit.
pub fn cider_d(records: &[OeRecord]) -> Result<CorpusScore> {
    cider_impl(records, true)
}
