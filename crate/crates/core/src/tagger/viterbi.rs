use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Start, end and tag-to-tag transition scores of a linear chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transitions {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// `matrix[prev][next]`
    pub matrix: Vec<Vec<f64>>,
}

impl Transitions {
    pub fn zeros(num_tags: usize) -> Self {
        Transitions {
            start: vec![0.0; num_tags],
            end: vec![0.0; num_tags],
            matrix: vec![vec![0.0; num_tags]; num_tags],
        }
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.start.len();
        self.end.len() == n
            && self.matrix.len() == n
            && self.matrix.iter().all(|row| row.len() == n)
    }
}

/// Score of a tag path, accumulated left to right in the same order as the
/// dynamic program so that the two agree bit for bit.
pub fn sequence_score(emissions: &[Vec<f64>], transitions: &Transitions, path: &[usize]) -> f64 {
    debug_assert_eq!(emissions.len(), path.len());
    let Some((&first, rest)) = path.split_first() else {
        return 0.0;
    };
    let mut score = transitions.start[first] + emissions[0][first];
    let mut prev = first;
    for (i, &tag) in rest.iter().enumerate() {
        score = score + transitions.matrix[prev][tag] + emissions[i + 1][tag];
        prev = tag;
    }
    score + transitions.end[prev]
}

/// Exact argmax over all tag paths. Ties go to the lower tag index, both
/// for backpointers and for the final tag.
///
/// Returns `None` for an empty sentence.
#[allow(clippy::needless_range_loop)]
pub fn viterbi(emissions: &[Vec<f64>], transitions: &Transitions) -> Option<(Vec<usize>, f64)> {
    let n = emissions.len();
    let num_tags = transitions.num_tags();
    if n == 0 || num_tags == 0 {
        return None;
    }
    let mut delta: Vec<f64> = (0..num_tags)
        .map(|t| transitions.start[t] + emissions[0][t])
        .collect();
    let mut backpointers: Vec<Vec<usize>> = Vec::with_capacity(n - 1);
    let mut next = vec![0.0; num_tags];
    for emission in &emissions[1..] {
        let mut back = vec![0usize; num_tags];
        for tag in 0..num_tags {
            let mut best = 0;
            let mut best_score = delta[0] + transitions.matrix[0][tag];
            for prev in 1..num_tags {
                let score = delta[prev] + transitions.matrix[prev][tag];
                if score > best_score {
                    best = prev;
                    best_score = score;
                }
            }
            back[tag] = best;
            next[tag] = best_score + emission[tag];
        }
        core::mem::swap(&mut delta, &mut next);
        backpointers.push(back);
    }

    let mut last = 0;
    let mut best_score = delta[0] + transitions.end[0];
    for tag in 1..num_tags {
        let score = delta[tag] + transitions.end[tag];
        if score > best_score {
            last = tag;
            best_score = score;
        }
    }

    let mut path = vec![0usize; n];
    path[n - 1] = last;
    for i in (1..n).rev() {
        path[i - 1] = backpointers[i - 1][path[i]];
    }
    Some((path, best_score))
}
