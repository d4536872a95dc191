//! Evaluation: accuracy and RMSE for multiple-choice answers, BLEU,
//! ROUGE-L and CIDEr for open-ended ones, and corpus statistics.

pub mod caption;
pub mod mc;
pub mod report;
pub mod stats;
pub mod text;

pub use caption::{bleu, cider, cider_d, empty_predictions, lcs_len, rouge_l, CorpusScore, OeRecord};
pub use mc::{join_predictions, overall_accuracy, rmse_counting, AccuracyReport, McRecord, NumericPair, RmseReport};
pub use report::{McReport, OeReport};
pub use stats::{answer_distribution_stats, DistributionStats};
pub use text::{tokenize, TOKENIZER_VERSION};

use std::collections::BTreeMap;

use crate::qa::{QAPair, QType};

/// Open-ended records for every OE question; missing predictions score as
/// empty and are returned separately.
pub fn join_open_ended(gt: &[QAPair], preds: &BTreeMap<String, String>) -> (Vec<OeRecord>, Vec<String>) {
    let mut missing = Vec::new();
    let recs = gt
        .iter()
        .filter(|p| p.qtype == QType::OE)
        .map(|p| {
            let predicted = preds.get(&p.qid).cloned().unwrap_or_else(|| {
                missing.push(p.qid.clone());
                String::new()
            });
            OeRecord { qid: p.qid.clone(), predicted, references: p.references() }
        })
        .collect();
    (recs, missing)
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Prediction {
    pub qid: String,
    pub answer: String,
}

/// Predictions keyed by qid; a repeated qid is an error.
pub fn prediction_map(preds: Vec<Prediction>) -> crate::Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    for p in preds {
        if m.insert(p.qid.clone(), p.answer).is_some() {
            return Err(crate::Error::invalid("predictions", format!("duplicate qid {:?}", p.qid)));
        }
    }
    Ok(m)
}
