use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::{CorpusError, Layer, Sentence, Span, Tag, TagSequence};

/// Encodes the spans of `layer` that fall in `sentence` as BIO tags.
///
/// Spans of other layers or sentences are skipped, so a whole document's
/// span set can be passed directly.
pub fn bio_encode<'a, I>(
    spans: I,
    sentence: &Sentence,
    layer: Layer,
) -> Result<TagSequence, CorpusError>
where
    I: IntoIterator<Item = &'a Span>,
{
    let mut tags = vec![Tag::Outside; sentence.len()];
    let mut owner: Vec<Option<&Span>> = vec![None; sentence.len()];
    for span in spans
        .into_iter()
        .filter(|s| s.layer == layer && s.sentence == sentence.index)
    {
        span.check_bounds(sentence.len())?;
        for pos in span.token_start..span.token_end {
            if let Some(prev) = owner[pos] {
                let (first, second) = if prev <= span {
                    (prev, span)
                } else {
                    (span, prev)
                };
                return Err(CorpusError::Overlap {
                    layer,
                    first: Box::new(first.clone()),
                    second: Box::new(second.clone()),
                });
            }
            owner[pos] = Some(span);
            tags[pos] = if pos == span.token_start {
                Tag::Begin(span.class.clone())
            } else {
                Tag::Inside(span.class.clone())
            };
        }
    }
    Ok(TagSequence { layer, tags })
}

/// Decodes maximal `B-X I-X*` runs into spans. An `I-X` that does not
/// continue a run of class X opens a new span, which makes decoding total.
pub fn bio_decode(tags: &TagSequence, sentence_index: usize) -> BTreeSet<Span> {
    let mut spans = BTreeSet::new();
    let mut open: Option<(usize, &str)> = None;
    let close = |open: Option<(usize, &str)>, end: usize, spans: &mut BTreeSet<Span>| {
        if let Some((start, class)) = open {
            spans.insert(Span::new(tags.layer, class, sentence_index, start, end));
        }
    };
    for (i, tag) in tags.tags.iter().enumerate() {
        match tag {
            Tag::Outside => {
                close(open.take(), i, &mut spans);
            }
            Tag::Begin(c) => {
                close(open.take(), i, &mut spans);
                open = Some((i, c));
            }
            Tag::Inside(c) => match open {
                Some((_, current)) if current == c => {}
                _ => {
                    close(open.take(), i, &mut spans);
                    open = Some((i, c));
                }
            },
        }
    }
    close(open, tags.tags.len(), &mut spans);
    spans
}

/// Rewrites every dangling `I-X` to `B-X`. The result is well-formed and
/// decodes to the same spans as the input.
pub fn repair(tags: &mut TagSequence) {
    let mut prev: Option<usize> = None;
    for i in 0..tags.tags.len() {
        let continues = match (&tags.tags[i], prev.map(|p| &tags.tags[p])) {
            (Tag::Inside(c), Some(Tag::Begin(p) | Tag::Inside(p))) => c == p,
            _ => false,
        };
        if let Tag::Inside(c) = &tags.tags[i] {
            if !continues {
                tags.tags[i] = Tag::Begin(c.clone());
            }
        }
        prev = Some(i);
    }
}
