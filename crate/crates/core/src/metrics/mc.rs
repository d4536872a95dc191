//! Exact-match accuracy and counting RMSE for multiple-choice answers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qa::{extract_numbers, QAPair, QType};

/// Predicted and true count of a counting question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericPair {
    pub y_pr: u64,
    pub y_gt: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub qid: String,
    pub qtype: QType,
    pub predicted: String,
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric: Option<NumericPair>,
}

/// Whether a question's answer is scored by RMSE as well as accuracy.
pub fn has_count(pair: &QAPair) -> bool {
    match pair.qtype {
        QType::BC | QType::CC => true,
        QType::CA => !pair.numbers.is_empty(),
        _ => false,
    }
}

impl McRecord {
    /// Pairs a prediction with its ground truth. The predicted count is the
    /// first integer in the prediction, 0 if there is none.
    pub fn from_pair(pair: &QAPair, predicted: &str) -> Self {
        let numeric = if has_count(pair) {
            let y_gt = pair.numbers.first().copied().unwrap_or(0);
            let y_pr = extract_numbers(predicted).first().copied().unwrap_or_else(|| {
                log::debug!("{}: no count in prediction {predicted:?}, using 0", pair.qid);
                0
            });
            Some(NumericPair { y_pr, y_gt })
        } else {
            None
        };
        McRecord {
            qid: pair.qid.clone(),
            qtype: pair.qtype,
            predicted: predicted.to_string(),
            ground_truth: pair.answer.clone(),
            numeric,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.predicted.trim() == self.ground_truth.trim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
    /// Percent.
    pub accuracy: f64,
}

impl Tally {
    fn new(correct: usize, total: usize) -> Self {
        Tally { correct, total, accuracy: 100.0 * correct as f64 / total as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: Tally,
    pub per_qtype: BTreeMap<QType, Tally>,
}

pub fn overall_accuracy(records: &[McRecord]) -> Result<AccuracyReport> {
    if records.is_empty() {
        return Err(Error::invalid("records", "no multiple-choice records"));
    }
    let mut per: BTreeMap<QType, (usize, usize)> = BTreeMap::new();
    for r in records {
        if !QType::MULTIPLE_CHOICE.contains(&r.qtype) {
            return Err(Error::invalid("qtype", format!("{} is not a multiple-choice type ({})", r.qtype, r.qid)));
        }
        let e = per.entry(r.qtype).or_insert((0, 0));
        e.0 += r.is_correct() as usize;
        e.1 += 1;
    }
    let (c, t) = per.values().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(AccuracyReport {
        overall: Tally::new(c, t),
        per_qtype: per.into_iter().map(|(q, (c, t))| (q, Tally::new(c, t))).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    pub rmse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub overall: Rmse,
    pub per_qtype: BTreeMap<QType, Rmse>,
}

/// Pooled and per-type RMSE over records carrying a numeric pair. BC and CC
/// records without one are an error.
pub fn rmse_counting(records: &[McRecord]) -> Result<RmseReport> {
    let mut per: BTreeMap<QType, (f64, usize)> = BTreeMap::new();
    for r in records {
        let pair = match (r.numeric, r.qtype) {
            (Some(p), _) => p,
            (None, QType::BC | QType::CC) => {
                return Err(Error::invalid("numeric", format!("{} has no count pair", r.qid)));
            }
            _ => continue,
        };
        let e = per.entry(r.qtype).or_insert((0.0, 0));
        e.0 += (pair.y_pr as f64 - pair.y_gt as f64).powi(2);
        e.1 += 1;
    }
    if per.is_empty() {
        return Err(Error::invalid("records", "no counting records"));
    }
    let (se, n) = per.values().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let rmse = |se: f64, n: usize| Rmse { rmse: (se / n as f64).sqrt(), n };
    Ok(RmseReport {
        overall: rmse(se, n),
        per_qtype: per.into_iter().map(|(q, (se, n))| (q, rmse(se, n))).collect(),
    })
}

/// Joins predictions to the ground truth by qid. Questions without a
/// prediction get an empty answer and are listed in the second result.
pub fn join_predictions(gt: &[QAPair], preds: &BTreeMap<String, String>) -> (Vec<McRecord>, Vec<String>) {
    let mut missing = Vec::new();
    let recs = gt
        .iter()
        .filter(|p| p.qtype != QType::OE)
        .map(|p| {
            let pred = preds.get(&p.qid).map(String::as_str).unwrap_or_else(|| {
                missing.push(p.qid.clone());
                ""
            });
            McRecord::from_pair(p, pred)
        })
        .collect();
    (recs, missing)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(q: QType, p: &str, g: &str) -> McRecord {
        McRecord::from_pair(&QAPair::new("i", "k", q, "?", g), p)
    }

    #[test]
    fn weighted_by_counts() {
        let rs = vec![
            rec(QType::BJ, "Yes", "Yes"),
            rec(QType::BJ, "No", "Yes"),
            rec(QType::CJ, "No", "No"),
            rec(QType::CJ, "Yes", "Yes"),
        ];
        let a = overall_accuracy(&rs).unwrap();
        assert_eq!(a.per_qtype[&QType::BJ].accuracy, 50.0);
        assert_eq!(a.per_qtype[&QType::CJ].accuracy, 100.0);
        assert_eq!(a.overall.accuracy, 75.0);
    }

    #[test]
    fn oe_is_not_multiple_choice() {
        assert!(overall_accuracy(&[rec(QType::OE, "a", "a")]).is_err());
        assert!(overall_accuracy(&[]).is_err());
    }

    #[test]
    fn rmse_examples() {
        let rs = vec![rec(QType::BC, "0", "2"), rec(QType::BC, "2", "0")];
        assert_eq!(rmse_counting(&rs).unwrap().overall.rmse, 2.0);
        let exact = vec![rec(QType::CC, "There are 4 intersections.", "There are 4 intersections.")];
        assert_eq!(rmse_counting(&exact).unwrap().overall.rmse, 0.0);
        let mut bad = rec(QType::BC, "1", "1");
        bad.numeric = None;
        assert!(rmse_counting(&[bad]).is_err());
    }

    #[test]
    fn numeric_pair_presence() {
        assert!(rec(QType::BC, "x", "3").numeric.is_some());
        assert!(rec(QType::BJ, "Yes", "Yes").numeric.is_none());
        assert!(rec(QType::CA, "a", "No renovation needed.").numeric.is_none());
        assert_eq!(rec(QType::CA, "5 and 6", "about 7 cars").numeric, Some(NumericPair { y_pr: 5, y_gt: 7 }));
        assert_eq!(rec(QType::BC, "none", "3").numeric, Some(NumericPair { y_pr: 0, y_gt: 3 }));
    }

    #[test]
    fn join_flags_missing() {
        let gt = vec![QAPair::new("i", "a", QType::BJ, "?", "Yes"), QAPair::new("i", "b", QType::BJ, "?", "No")];
        let preds = BTreeMap::from([("i-a".to_string(), "Yes".to_string())]);
        let (recs, missing) = join_predictions(&gt, &preds);
        assert_eq!(missing, vec!["i-b".to_string()]);
        assert_eq!(overall_accuracy(&recs).unwrap().overall.correct, 1);
    }
}
