//! Evaluation reports and their plain-text tables.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::caption::{bleu, cider, cider_d, empty_predictions, rouge_l, OeRecord};
use super::mc::{overall_accuracy, rmse_counting, AccuracyReport, McRecord, RmseReport};
use crate::error::Result;
use crate::qa::QType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub accuracy: AccuracyReport,
    /// Absent when the records hold no counting questions.
    pub rmse: Option<RmseReport>,
    pub missing_predictions: Vec<String>,
}

impl McReport {
    pub fn compute(records: &[McRecord], missing_predictions: Vec<String>) -> Result<Self> {
        let has_counts = records.iter().any(|r| r.numeric.is_some() || matches!(r.qtype, QType::BC | QType::CC));
        Ok(McReport {
            accuracy: overall_accuracy(records)?,
            rmse: if has_counts { Some(rmse_counting(records)?) } else { None },
            missing_predictions,
        })
    }

    /// Accuracy per type and OA, then RMSE per counting type and pooled.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let mut head = String::new();
        let mut row = String::new();
        for q in QType::MULTIPLE_CHOICE {
            let _ = write!(head, "{:>7}", q.as_str());
            match self.accuracy.per_qtype.get(&q) {
                Some(t) => write!(row, "{:>7.2}", t.accuracy),
                None => write!(row, "{:>7}", "-"),
            }
            .unwrap();
        }
        let _ = writeln!(s, "OA per class (%)\n{head}{:>8}\n{row}{:>8.2}", "OA", self.accuracy.overall.accuracy);
        if let Some(r) = &self.rmse {
            let mut head = String::new();
            let mut row = String::new();
            for q in [QType::BC, QType::CC, QType::CA] {
                let _ = write!(head, "{:>7}", q.as_str());
                match r.per_qtype.get(&q) {
                    Some(x) => write!(row, "{:>7.3}", x.rmse),
                    None => write!(row, "{:>7}", "-"),
                }
                .unwrap();
            }
            let _ = writeln!(s, "RMSE per class\n{head}{:>8}\n{row}{:>8.3}", "All", r.overall.rmse);
        }
        if !self.missing_predictions.is_empty() {
            let _ = writeln!(s, "missing predictions: {}", self.missing_predictions.len());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OeReport {
    pub n: usize,
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub cider: f64,
    pub cider_d: f64,
    pub empty_predictions: Vec<String>,
    pub missing_predictions: Vec<String>,
    pub tokenizer: String,
}

impl OeReport {
    pub fn compute(records: &[OeRecord], missing_predictions: Vec<String>) -> Result<Self> {
        Ok(OeReport {
            n: records.len(),
            bleu: bleu(records)?,
            rouge_l: rouge_l(records)?.corpus,
            cider: cider(records)?.corpus,
            cider_d: cider_d(records)?.corpus,
            empty_predictions: empty_predictions(records),
            missing_predictions,
            tokenizer: super::text::TOKENIZER_VERSION.to_string(),
        })
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>8}{:>8}{:>8}{:>8}{:>9}{:>8}{:>9}\n",
            "BLEU1", "BLEU2", "BLEU3", "BLEU4", "ROUGE-L", "CIDEr", "CIDEr-D"
        );
        for b in self.bleu {
            let _ = write!(s, "{:>8.4}", b);
        }
        let _ = writeln!(s, "{:>9.4}{:>8.4}{:>9.4}", self.rouge_l, self.cider, self.cider_d);
        if !self.empty_predictions.is_empty() {
            let _ = writeln!(s, "empty predictions: {}", self.empty_predictions.len());
        }
        if !self.missing_predictions.is_empty() {
            let _ = writeln!(s, "missing predictions: {}", self.missing_predictions.len());
        }
        s
    }
}
