use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use super::TaggerError;
use crate::corpus::Sentence;

pub const BOS: &str = "<S>";
pub const EOS: &str = "</S>";

/// Sparse feature counts for one token position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector(BTreeMap<String, u32>);

impl FeatureVector {
    pub fn add(&mut self, feature: String) {
        *self.0.entry(feature).or_insert(0) += 1;
    }

    pub fn count(&self, feature: &str) -> u32 {
        self.0.get(feature).copied().unwrap_or(0)
    }

    pub fn contains(&self, feature: &str) -> bool {
        self.0.contains_key(feature)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Feature template: bias, lowercased word, word shape, lowercased
/// prefixes and suffixes of length 2 to 4 (when the word is at least that
/// long), and the lowercased neighbouring words with sentence sentinels.
pub fn extract_features(
    sentence: &Sentence,
    position: usize,
) -> Result<FeatureVector, TaggerError> {
    let token = sentence
        .tokens
        .get(position)
        .ok_or(TaggerError::IndexOutOfRange {
            position,
            len: sentence.len(),
        })?;
    let lower = token.surface.to_lowercase();
    let mut features = FeatureVector::default();
    features.add(String::from("bias"));
    features.add(format!("w={lower}"));
    features.add(format!("shape={}", word_shape(&token.surface)));

    let chars: alloc::vec::Vec<char> = lower.chars().collect();
    for n in 2..=4 {
        if chars.len() >= n {
            let prefix: String = chars[..n].iter().collect();
            let suffix: String = chars[chars.len() - n..].iter().collect();
            features.add(format!("pre{n}={prefix}"));
            features.add(format!("suf{n}={suffix}"));
        }
    }

    let prev = match position.checked_sub(1) {
        Some(p) => sentence.tokens[p].surface.to_lowercase(),
        None => String::from(BOS),
    };
    let next = match sentence.tokens.get(position + 1) {
        Some(t) => t.surface.to_lowercase(),
        None => String::from(EOS),
    };
    features.add(format!("prev={prev}"));
    features.add(format!("next={next}"));
    Ok(features)
}

/// `X` upper, `x` lower, `d` digit, anything else kept; a repeated class
/// collapses to one symbol followed by `+`.
pub fn word_shape(word: &str) -> String {
    let mut shape = String::new();
    let mut last: Option<char> = None;
    let mut repeated = false;
    for c in word.chars() {
        let class = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if last == Some(class) {
            if !repeated {
                shape.push('+');
                repeated = true;
            }
        } else {
            shape.push(class);
            last = Some(class);
            repeated = false;
        }
    }
    shape
}
