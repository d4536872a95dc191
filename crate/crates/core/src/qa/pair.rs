use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Question categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QType {
    /// Basic judging: does a land-cover class exist.
    BJ,
    /// Complex judging: relations between several objects.
    CJ,
    /// Basic counting of one class.
    BC,
    /// Complex counting: derived objects such as intersections.
    CC,
    /// Attribute extraction (area proportions, land use).
    AE,
    /// Distribution analysis.
    DisA,
    /// Direction analysis.
    DirA,
    /// Comprehensive analysis composed from several detectors.
    CA,
    /// Open-ended.
    OE,
}

impl QType {
    pub const ALL: [QType; 9] = [
        QType::BJ,
        QType::CJ,
        QType::BC,
        QType::CC,
        QType::AE,
        QType::DisA,
        QType::DirA,
        QType::CA,
        QType::OE,
    ];

    /// Types scored by exact-match accuracy.
    pub const MULTIPLE_CHOICE: [QType; 8] = [
        QType::BJ,
        QType::CJ,
        QType::BC,
        QType::CC,
        QType::AE,
        QType::DisA,
        QType::DirA,
        QType::CA,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QType::BJ => "BJ",
            QType::CJ => "CJ",
            QType::BC => "BC",
            QType::CC => "CC",
            QType::AE => "AE",
            QType::DisA => "DisA",
            QType::DirA => "DirA",
            QType::CA => "CA",
            QType::OE => "OE",
        }
    }

    /// Whether answers rotate with the image.
    pub fn is_direction_sensitive(self) -> bool {
        matches!(self, QType::DirA | QType::DisA)
    }
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QType::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| Error::invalid("qtype", format!("unknown question type {s:?}")))
    }
}

/// One generated question with its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub qid: String,
    pub image_id: String,
    pub qtype: QType,
    pub question: String,
    pub answer: String,
    /// Every integer in `answer`, in textual order.
    pub numbers: Vec<u64>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl QAPair {
    pub fn new(
        image_id: &str,
        key: &str,
        qtype: QType,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        let answer = answer.into();
        QAPair {
            qid: format!("{image_id}-{key}"),
            image_id: image_id.to_string(),
            qtype,
            question: question.into(),
            numbers: extract_numbers(&answer),
            answer,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    /// Rewrites the answer and refreshes the number list.
    pub fn set_answer(&mut self, answer: String) {
        self.numbers = extract_numbers(&answer);
        self.answer = answer;
    }

    /// Reference answers for open-ended scoring: the answer itself followed
    /// by any `ref*` meta entries in key order.
    pub fn references(&self) -> Vec<String> {
        std::iter::once(self.answer.clone())
            .chain(
                self.meta
                    .iter()
                    .filter(|(k, _)| k.starts_with("ref"))
                    .map(|(_, v)| v.clone()),
            )
            .collect()
    }
}

/// Maximal ASCII digit runs parsed as integers, in order.
pub fn extract_numbers(text: &str) -> Vec<u64> {
    let mut out = Vec::new();
    let mut cur: Option<u64> = None;
    for ch in text.chars() {
        match ch.to_digit(10) {
            Some(d) if ch.is_ascii_digit() => {
                cur = Some(cur.unwrap_or(0).saturating_mul(10).saturating_add(d as u64));
            }
            _ => {
                if let Some(v) = cur.take() {
                    out.push(v);
                }
            }
        }
    }
    out.extend(cur);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_in_order() {
        assert_eq!(extract_numbers("(10%, 20%]"), vec![10, 20]);
        assert_eq!(extract_numbers("There are 3 buildings and 12 ponds."), vec![3, 12]);
        assert_eq!(extract_numbers("Yes"), Vec::<u64>::new());
        assert_eq!(extract_numbers("7"), vec![7]);
    }

    #[test]
    fn qtype_round_trip() {
        for q in QType::ALL {
            assert_eq!(q.as_str().parse::<QType>().unwrap(), q);
            let json = serde_json::to_string(&q).unwrap();
            assert_eq!(json, format!("\"{}\"", q.as_str()));
        }
        assert!("XX".parse::<QType>().is_err());
    }

    #[test]
    fn json_line_shape() {
        let qa = QAPair::new("img", "bc-building", QType::BC, "How many?", "3");
        let v: serde_json::Value = serde_json::to_value(&qa).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        assert_eq!(
            keys,
            vec!["answer", "image_id", "meta", "numbers", "qid", "qtype", "question"]
        );
        assert_eq!(v["numbers"], serde_json::json!([3]));
    }
}
