use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use super::{CorpusError, Sentence, Token};

/// Abbreviations that never end a sentence and are kept as one token.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "z.B.", "ca.", "Dr.", "o.B.", "bzw.", "usw.", "d.h.", "u.a.", "evtl.", "ggf.", "etc.", "Nr.",
    "Prof.", "vs.", "inkl.", "v.a.", "z.T.", "s.o.", "s.u.", "Hr.", "Fr.", "e.g.", "i.e.", "Mr.",
    "Mrs.", "Ms.",
];

const CLOSERS: &[char] = &[')', ']', '}', '"', '\'', '»', '«', '”', '“', '’'];

/// Rule-based sentence splitter and tokenizer.
///
/// Sentences end at a whitespace-delimited chunk whose last significant
/// character is `.`, `!` or `?`, unless the chunk is a listed abbreviation.
/// Tokens are maximal alphanumeric runs (hyphens and apostrophes between
/// letters, `.`/`,` between digits, and `/` kept inside); every other
/// non-space character is a token of its own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmenter {
    abbreviations: Vec<Vec<char>>,
    lowercase: BTreeSet<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::with_abbreviations(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl Segmenter {
    pub fn with_abbreviations<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list: Vec<Vec<char>> = abbreviations
            .into_iter()
            .map(|a| a.as_ref().trim().chars().collect::<Vec<_>>())
            .filter(|a| !a.is_empty())
            .collect();
        // Longest first so tokenization prefers "z.B." over "z.".
        list.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        list.dedup();
        let lowercase = list
            .iter()
            .map(|a| a.iter().collect::<String>().to_lowercase())
            .collect();
        Segmenter {
            abbreviations: list,
            lowercase,
        }
    }

    pub fn abbreviations(&self) -> impl Iterator<Item = String> + '_ {
        self.abbreviations.iter().map(|a| a.iter().collect())
    }

    fn is_abbreviation(&self, chunk: &[char]) -> bool {
        let s: String = chunk.iter().collect();
        self.lowercase.contains(&s.to_lowercase())
    }

    /// Sentence character ranges over `raw_text`.
    pub fn split_sentences(&self, raw_text: &str) -> Result<Vec<Range<usize>>, CorpusError> {
        let chars: Vec<char> = raw_text.chars().collect();
        self.split_chars(&chars)
    }

    fn split_chars(&self, chars: &[char]) -> Result<Vec<Range<usize>>, CorpusError> {
        let chunks = whitespace_chunks(chars);
        if chunks.is_empty() {
            return Err(CorpusError::EmptyText);
        }
        let mut sentences = Vec::new();
        let mut current: Option<usize> = None;
        for chunk in &chunks {
            let start = *current.get_or_insert(chunk.start);
            if self.ends_sentence(&chars[chunk.clone()]) {
                sentences.push(start..chunk.end);
                current = None;
            }
        }
        if let Some(start) = current {
            sentences.push(start..chunks[chunks.len() - 1].end);
        }
        Ok(sentences)
    }

    fn ends_sentence(&self, chunk: &[char]) -> bool {
        let mut end = chunk.len();
        while end > 0 && CLOSERS.contains(&chunk[end - 1]) {
            end -= 1;
        }
        if end == 0 {
            return false;
        }
        match chunk[end - 1] {
            '!' | '?' => true,
            '.' => {
                let core = &chunk[..end];
                let lead = core
                    .iter()
                    .position(|c| c.is_alphanumeric())
                    .unwrap_or(core.len());
                !self.is_abbreviation(&core[lead..])
            }
            _ => false,
        }
    }

    /// Tokens of one sentence; `offset` is the sentence's character offset
    /// in the raw text.
    pub fn tokenize(&self, sentence_text: &str, offset: usize) -> Vec<Token> {
        let chars: Vec<char> = sentence_text.chars().collect();
        let mut tokens = Vec::new();
        for chunk in whitespace_chunks(&chars) {
            self.tokenize_chunk(&chars, chunk, offset, &mut tokens);
        }
        tokens
    }

    fn tokenize_chunk(
        &self,
        chars: &[char],
        chunk: Range<usize>,
        offset: usize,
        out: &mut Vec<Token>,
    ) {
        let end = chunk.end;
        let mut i = chunk.start;
        while i < end {
            if !chars[i].is_alphanumeric() {
                out.push(make_token(chars, i..i + 1, offset));
                i += 1;
                continue;
            }
            if let Some(len) = self.abbreviation_at(chars, i, end) {
                out.push(make_token(chars, i..i + len, offset));
                i += len;
                continue;
            }
            let mut j = i + 1;
            while j < end {
                let c = chars[j];
                if c.is_alphanumeric() {
                    j += 1;
                } else if j + 1 < end && joins(chars[j - 1], c, chars[j + 1]) {
                    j += 2;
                } else {
                    break;
                }
            }
            out.push(make_token(chars, i..j, offset));
            i = j;
        }
    }

    fn abbreviation_at(&self, chars: &[char], at: usize, end: usize) -> Option<usize> {
        self.abbreviations.iter().find_map(|abbr| {
            let stop = at + abbr.len();
            let matches = stop <= end
                && chars[at..stop]
                    .iter()
                    .zip(abbr)
                    .all(|(a, b)| a.to_lowercase().eq(b.to_lowercase()))
                && (stop == end || !chars[stop].is_alphanumeric());
            matches.then_some(abbr.len())
        })
    }

    /// Splits and tokenizes `raw_text` into indexed sentences.
    pub fn segment(&self, raw_text: &str) -> Result<Vec<Sentence>, CorpusError> {
        let chars: Vec<char> = raw_text.chars().collect();
        let ranges = self.split_chars(&chars)?;
        Ok(ranges
            .into_iter()
            .enumerate()
            .map(|(index, range)| {
                let text: String = chars[range.clone()].iter().collect();
                Sentence {
                    index,
                    tokens: self.tokenize(&text, range.start),
                }
            })
            .collect())
    }
}

/// Whether `c`, sitting between `before` and `after`, stays inside a word.
fn joins(before: char, c: char, after: char) -> bool {
    match c {
        '-' | '\'' | '’' | '/' => before.is_alphanumeric() && after.is_alphanumeric(),
        '.' | ',' => before.is_ascii_digit() && after.is_ascii_digit(),
        _ => false,
    }
}

fn make_token(chars: &[char], range: Range<usize>, offset: usize) -> Token {
    Token {
        surface: chars[range.clone()].iter().collect::<String>().to_string(),
        start: offset + range.start,
        end: offset + range.end,
    }
}

fn whitespace_chunks(chars: &[char]) -> Vec<Range<usize>> {
    let mut chunks = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                chunks.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        chunks.push(s..chars.len());
    }
    chunks
}
