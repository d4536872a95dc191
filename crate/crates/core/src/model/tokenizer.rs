//! Word-level tokenizer and numeric placeholders.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM: &str = "<num>";
pub const UNK: &str = "<unk>";
pub const SEP: &str = "<sep>";
pub const EOS: &str = "<eos>";
pub const SPACE: &str = " ";

/// An answer with each integer replaced by `<num>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerTemplate {
    pub text: String,
    pub numbers: Vec<u64>,
}

impl AnswerTemplate {
    pub fn placeholders(&self) -> usize {
        self.text.matches(NUM).count()
    }
}

/// Replaces every maximal ASCII digit run with `<num>`.
pub fn mask_numbers(answer: &str) -> AnswerTemplate {
    let mut text = String::with_capacity(answer.len());
    let mut numbers = Vec::new();
    let mut cur: Option<u64> = None;
    for ch in answer.chars() {
        if ch.is_ascii_digit() {
            let d = ch as u64 - '0' as u64;
            cur = Some(cur.unwrap_or(0).saturating_mul(10).saturating_add(d));
        } else {
            if let Some(n) = cur.take() {
                numbers.push(n);
                text.push_str(NUM);
            }
            text.push(ch);
        }
    }
    if let Some(n) = cur {
        numbers.push(n);
        text.push_str(NUM);
    }
    AnswerTemplate { text, numbers }
}

/// Puts `numbers` back into the placeholders, in order.
pub fn fill(template: &str, numbers: &[u64]) -> Result<String> {
    let parts: Vec<&str> = template.split(NUM).collect();
    let need = parts.len() - 1;
    if numbers.len() < need {
        return Err(Error::MissingCounts { expected: need, got: numbers.len() });
    }
    let mut out = String::from(parts[0]);
    for (n, part) in numbers.iter().zip(&parts[1..]) {
        out.push_str(&n.to_string());
        out.push_str(part);
    }
    Ok(out)
}

fn count_token(k: usize) -> String {
    format!("<c{k}>")
}

/// Splits text into pieces. Words and punctuation keep one leading space;
/// numbers and `<...>` markers never do, and a space before them becomes its
/// own piece.
pub fn pieces(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut space = false;
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            space = true;
            i += 1;
            continue;
        }
        let start = i;
        let standalone = if ch == '<' {
            match chars[i..].iter().position(|&c| c == '>') {
                Some(end) if chars[i + 1..i + end].iter().all(|c| c.is_ascii_alphanumeric()) && end > 1 => {
                    i += end + 1;
                    true
                }
                _ => {
                    i += 1;
                    false
                }
            }
        } else if ch.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            true
        } else if ch.is_alphabetic() {
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            false
        } else {
            i += 1;
            false
        };
        let body: String = chars[start..i].iter().collect();
        if standalone {
            if space {
                out.push(SPACE.to_string());
            }
            out.push(body);
        } else if space {
            out.push(format!(" {body}"));
        } else {
            out.push(body);
        }
        space = false;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    count_vocab: usize,
    #[serde(skip)]
    index: BTreeMap<String, u32>,
}

impl Vocab {
    /// Specials, then count tokens `<c0>..`, then corpus pieces in sorted order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, count_vocab: usize) -> Self {
        let mut tokens: Vec<String> = [UNK, SEP, EOS, NUM, SPACE].iter().map(|s| s.to_string()).collect();
        tokens.extend((0..count_vocab).map(count_token));
        let mut words = BTreeSet::new();
        for t in texts {
            for p in pieces(t) {
                let bare = p.trim_start();
                if bare.starts_with(|c: char| c.is_ascii_digit()) || p == SPACE || bare.starts_with('<') {
                    continue;
                }
                words.insert(p);
            }
        }
        tokens.extend(words);
        Self::from_tokens(tokens, count_vocab)
    }

    pub fn from_tokens(tokens: Vec<String>, count_vocab: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, count_vocab, index }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn count_vocab(&self) -> usize {
        self.count_vocab
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn unk(&self) -> u32 {
        0
    }

    pub fn sep(&self) -> u32 {
        1
    }

    pub fn eos(&self) -> u32 {
        2
    }

    pub fn num(&self) -> u32 {
        3
    }

    pub fn count_base(&self) -> u32 {
        5
    }

    /// The count a token stands for, if it is a count token.
    pub fn count_of(&self, id: u32) -> Option<u64> {
        let k = id.checked_sub(self.count_base())? as usize;
        (k < self.count_vocab).then_some(k as u64)
    }

    pub fn count_id(&self, count: usize) -> u32 {
        self.count_base() + count.min(self.count_vocab - 1) as u32
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Integers become count tokens (clamped to the vocabulary).
    pub fn encode(&self, text: &str) -> Vec<u32> {
        pieces(text)
            .into_iter()
            .map(|p| {
                if p.starts_with(|c: char| c.is_ascii_digit()) {
                    let n: u64 = p.parse().unwrap_or(u64::MAX);
                    self.count_id(crate::loss::clamp_count(n, self.count_vocab))
                } else {
                    self.id(&p).unwrap_or(self.unk())
                }
            })
            .collect()
    }

    /// Count tokens are written as their numbers.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| match self.count_of(id) {
                Some(n) => n.to_string(),
                None => self.token(id).to_string(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masking_examples() {
        let t = mask_numbers("There are 3 buildings and 2 ponds.");
        assert_eq!(t.text, "There are <num> buildings and <num> ponds.");
        assert_eq!(t.numbers, vec![3, 2]);
        assert_eq!(t.placeholders(), 2);
        let t = mask_numbers("E--W and N--S");
        assert_eq!(t.text, "E--W and N--S");
        assert!(t.numbers.is_empty());
        assert_eq!(fill("There are <num> buildings.", &[3]).unwrap(), "There are 3 buildings.");
        assert!(fill("<num> and <num>", &[1]).is_err());
        let t = mask_numbers("(10%, 20%]");
        assert_eq!(fill(&t.text, &t.numbers).unwrap(), "(10%, 20%]");
    }

    #[test]
    fn piece_boundaries() {
        assert_eq!(
            pieces("There are <num> buildings."),
            vec!["There", " are", " ", "<num>", " buildings", "."]
        );
        assert_eq!(pieces("E--W"), vec!["E", "-", "-", "W"]);
        assert_eq!(pieces("(10%, 20%]"), vec!["(", "10", "%", ",", " ", "20", "%", "]"]);
    }

    #[test]
    fn encode_decode_round_trip() {
        let texts = ["There are 12 buildings.", "The scene is mainly covered by water.", "E--W and N--S"];
        let v = Vocab::build(texts.iter().copied(), 101);
        for t in texts {
            let ids = v.encode(t);
            assert!(!ids.contains(&v.unk()));
            assert_eq!(v.decode(&ids), t);
        }
        let tpl = mask_numbers(texts[0]);
        let ids = v.encode(&tpl.text);
        assert!(ids.contains(&v.num()));
        assert_eq!(v.decode(&ids), tpl.text);
        assert_eq!(v.count_of(v.count_id(7)), Some(7));
        assert_eq!(v.count_of(v.num()), None);
        let json = serde_json::to_string(&v).unwrap();
        let mut back: Vocab = serde_json::from_str(&json).unwrap();
        back.reindex();
        assert_eq!(back, v);
    }
}
