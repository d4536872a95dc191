//! Tokenization shared by every text metric.
//!
//! Lowercase; alphanumeric runs are words; every other non-space character
//! is a token of its own. No stemming.

/// Bumped whenever the rules below change, since scores depend on them.
pub const TOKENIZER_VERSION: &str = "lower-punct/1";

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// All n-grams of orders `1..=max_n` with their counts.
pub fn ngram_counts(tokens: &[String], max_n: usize) -> std::collections::HashMap<&[String], usize> {
    let mut m = std::collections::HashMap::new();
    for n in 1..=max_n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation() {
        assert_eq!(tokenize("Roads run E--W, mostly."), ["roads", "run", "e", "-", "-", "w", ",", "mostly", "."]);
        assert_eq!(tokenize("  (10%, 20%]  "), ["(", "10", "%", ",", "20", "%", "]"]);
        assert!(tokenize(" \t").is_empty());
    }

    #[test]
    fn counts_all_orders() {
        let t = tokenize("a b a b");
        let c = ngram_counts(&t, 2);
        assert_eq!(c[&t[0..1]], 2);
        assert_eq!(c[&t[0..2]], 2);
        assert_eq!(c[&t[1..3]], 1);
        assert_eq!(c.len(), 4);
    }
}
