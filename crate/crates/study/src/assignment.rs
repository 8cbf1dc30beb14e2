//! Counterbalanced condition orderings.
//!
//! Orderings come from a balanced Latin square (Williams construction). Rows
//! are dealt to couples in blocks of `k`; each block uses every row once in a
//! seeded shuffled order, and condition labels are mapped onto square symbols
//! by a seeded permutation. Every condition therefore sits in every position
//! `⌊n/k⌋` or `⌈n/k⌉` times. A couple keeps its ordering for both study phases.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::topics::{select_balanced_topics, Band, TopicPick, TopicScore};
use crate::{Condition, Result};

/// Williams balanced Latin square of order `k`: row `i` is
/// `(0, 1, k-1, 2, k-2, …) + i (mod k)`.
pub fn balanced_latin_square(k: usize) -> Vec<Vec<usize>> {
    let mut first = Vec::with_capacity(k);
    let (mut lo, mut hi) = (0usize, k);
    for j in 0..k {
        if j % 2 == 0 {
            first.push(lo);
            lo += 1;
        } else {
            hi -= 1;
            first.push(hi);
        }
    }
    (0..k)
        .map(|i| first.iter().map(|&s| (s + i) % k).collect())
        .collect()
}

/// Orderings for `n_couples` over `conditions`, deterministic in `seed`.
pub fn counterbalance<T: Copy>(n_couples: usize, conditions: &[T], seed: u64) -> Vec<Vec<T>> {
    let k = conditions.len();
    if k == 0 {
        return vec![Vec::new(); n_couples];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let square = balanced_latin_square(k);
    let mut labels: Vec<T> = conditions.to_vec();
    labels.shuffle(&mut rng);

    let mut out = Vec::with_capacity(n_couples);
    while out.len() < n_couples {
        let mut rows: Vec<usize> = (0..k).collect();
        rows.shuffle(&mut rng);
        for r in rows {
            if out.len() == n_couples {
                break;
            }
            out.push(square[r].iter().map(|&s| labels[s]).collect());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionAssignment {
    pub couple_id: String,
    /// Session order, reused unchanged for the real-life phase.
    pub ordering: Vec<Condition>,
    /// Topic per condition when the couple's topic scores were supplied.
    pub topics: Option<Vec<TopicPick>>,
}

/// Counterbalance `couples` and, where scores are given, attach balanced topics.
pub fn assign_couples(
    couples: &[(String, Option<Vec<TopicScore>>)],
    seed: u64,
    band: Band,
) -> Result<Vec<ConditionAssignment>> {
    let orderings = counterbalance(couples.len(), &Condition::ALL, seed);
    couples
        .iter()
        .zip(orderings)
        .map(|((couple_id, scores), ordering)| {
            let topics = match scores {
                Some(s) => Some(select_balanced_topics(s, &ordering, band)?.picks),
                None => None,
            };
            Ok(ConditionAssignment {
                couple_id: couple_id.clone(),
                ordering,
                topics,
            })
        })
        .collect()
}
