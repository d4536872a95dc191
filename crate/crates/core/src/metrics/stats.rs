//! Answer distribution statistics for dataset QC.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::qa::{QAPair, QType};
use crate::raster::{DirectionBin, LandCover};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub total: usize,
    pub per_qtype: BTreeMap<QType, usize>,
    /// Answer histogram for each distinct question text.
    pub per_question: BTreeMap<String, BTreeMap<String, usize>>,
    /// Answer histogram per question type.
    pub answers_by_qtype: BTreeMap<QType, BTreeMap<String, usize>>,
    /// Answer length in whitespace-separated words.
    pub length_histogram: BTreeMap<usize, usize>,
    /// Every integer found in answers.
    pub numeric_answers: BTreeMap<u64, usize>,
    pub word_classes: BTreeMap<String, usize>,
}

/// Coarse class of one answer word: yes_no, number, direction, land_cover
/// or other.
pub fn word_class(word: &str) -> &'static str {
    let w = word.trim_matches(|c: char| !c.is_alphanumeric() && c != '-').to_lowercase();
    if w == "yes" || w == "no" {
        "yes_no"
    } else if !w.is_empty() && w.chars().all(|c| c.is_ascii_digit()) {
        "number"
    } else if DirectionBin::ALL.iter().any(|d| d.token().eq_ignore_ascii_case(&w)) {
        "direction"
    } else if LandCover::ALL.iter().any(|c| w == c.name() || w.strip_suffix('s') == Some(c.name())) {
        "land_cover"
    } else {
        "other"
    }
}

impl DistributionStats {
    pub fn add(&mut self, pair: &QAPair) {
        self.total += 1;
        *self.per_qtype.entry(pair.qtype).or_default() += 1;
        *self.per_question.entry(pair.question.clone()).or_default().entry(pair.answer.clone()).or_default() += 1;
        *self.answers_by_qtype.entry(pair.qtype).or_default().entry(pair.answer.clone()).or_default() += 1;
        let words: Vec<&str> = pair.answer.split_whitespace().collect();
        *self.length_histogram.entry(words.len()).or_default() += 1;
        for &n in &pair.numbers {
            *self.numeric_answers.entry(n).or_default() += 1;
        }
        for w in words {
            *self.word_classes.entry(word_class(w).to_string()).or_default() += 1;
        }
    }
}

pub fn answer_distribution_stats<'a>(corpus: impl IntoIterator<Item = &'a QAPair>) -> DistributionStats {
    let mut s = DistributionStats::default();
    for p in corpus {
        s.add(p);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_answers_single_bin() {
        let pairs: Vec<QAPair> = (0..10).map(|i| QAPair::new(&format!("i{i}"), "k", QType::BJ, "Q?", "Yes")).collect();
        let s = answer_distribution_stats(&pairs);
        assert_eq!(s.per_question["Q?"], BTreeMap::from([("Yes".to_string(), 10)]));
        assert_eq!(s.word_classes["yes_no"], 10);
    }

    #[test]
    fn length_histogram() {
        let pairs = ["a b c", "d e f", "a b c d e"].map(|a| QAPair::new("i", "k", QType::OE, "Q?", a));
        let s = answer_distribution_stats(&pairs);
        assert_eq!(s.length_histogram, BTreeMap::from([(3, 2), (5, 1)]));
    }

    #[test]
    fn classes() {
        assert_eq!(word_class("NW--SE"), "direction");
        assert_eq!(word_class("12."), "number");
        assert_eq!(word_class("buildings"), "land_cover");
        assert_eq!(word_class("There"), "other");
    }
}
