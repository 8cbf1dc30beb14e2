//! Conflict-topic intensity calibration.
//!
//! Each partner rates a candidate topic on three 1..=7 dimensions (emotional
//! arousal, threat to the relationship, historical sensitivity). A topic's
//! final score is the two partners' dimension sums averaged, so it lies in
//! `[3, 21]`. Topics outside a middle band are excluded and the remainder
//! is matched across conditions so starting intensities are comparable.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::{Condition, Result, StudyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partner {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRating {
    pub topic_id: String,
    pub partner: Partner,
    /// Emotional arousal, threat to the relationship, historical sensitivity.
    pub dims: [u8; 3],
}

impl TopicRating {
    pub fn new(topic_id: impl Into<String>, partner: Partner, dims: [u8; 3]) -> Result<Self> {
        if let Some(&value) = dims.iter().find(|d| !(1..=7).contains(*d)) {
            return Err(StudyError::RatingOutOfRange { value });
        }
        Ok(Self {
            topic_id: topic_id.into(),
            partner,
            dims,
        })
    }

    fn sum(&self) -> u32 {
        self.dims.iter().map(|&d| d as u32).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScore {
    pub topic_id: String,
    pub final_score: f64,
}

/// Mid-range band on the 3..=21 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Band {
    fn default() -> Self {
        Self { lo: 8.0, hi: 16.0 }
    }
}

impl Band {
    pub fn contains(&self, v: f64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

pub fn score_topic(a: &TopicRating, b: &TopicRating) -> Result<TopicScore> {
    if a.topic_id != b.topic_id {
        return Err(StudyError::MismatchedTopic(format!(
            "{} vs {}",
            a.topic_id, b.topic_id
        )));
    }
    if a.partner == b.partner {
        return Err(StudyError::MismatchedTopic(format!(
            "both ratings for {} come from partner {:?}",
            a.topic_id, a.partner
        )));
    }
    for r in [a, b] {
        TopicRating::new(r.topic_id.clone(), r.partner, r.dims)?;
    }
    Ok(TopicScore {
        topic_id: a.topic_id.clone(),
        final_score: (a.sum() + b.sum()) as f64 / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicPick {
    pub condition: Condition,
    pub topic_id: String,
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicAssignment {
    pub picks: Vec<TopicPick>,
    pub max_pairwise_diff: f64,
}

/// Above this many in-band candidates the exhaustive search gives way to a
/// nearest-to-grand-mean greedy pick.
pub const EXHAUSTIVE_LIMIT: usize = 12;

/// Choose one in-band topic per condition, minimising the largest pairwise
/// difference between assigned finals.
///
/// Topics are assigned to `conditions` in ascending order of final score;
/// ties among equally good subsets go to the lexicographically first one in
/// input order.
pub fn select_balanced_topics(
    scores: &[TopicScore],
    conditions: &[Condition],
    band: Band,
) -> Result<TopicAssignment> {
    let k = conditions.len();
    let candidates: Vec<&TopicScore> = scores
        .iter()
        .filter(|s| band.contains(s.final_score))
        .collect();
    if candidates.len() < k || k == 0 {
        return Err(StudyError::InsufficientTopics {
            found: candidates.len(),
            needed: k,
        });
    }

    let chosen: Vec<usize> = if candidates.len() <= EXHAUSTIVE_LIMIT {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for combo in Combinations::new(candidates.len(), k) {
            let spread = spread(combo.iter().map(|&i| candidates[i].final_score));
            if best.as_ref().is_none_or(|(b, _)| spread < *b) {
                best = Some((spread, combo));
            }
        }
        best.map(|(_, c)| c).unwrap_or_default()
    } else {
        let mean = candidates.iter().map(|s| s.final_score).sum::<f64>() / candidates.len() as f64;
        let mut idx: Vec<usize> = (0..candidates.len()).collect();
        idx.sort_by(|&a, &b| {
            (candidates[a].final_score - mean)
                .abs()
                .total_cmp(&(candidates[b].final_score - mean).abs())
                .then(a.cmp(&b))
        });
        idx.truncate(k);
        idx.sort_unstable();
        idx
    };

    let mut picked: Vec<&TopicScore> = chosen.iter().map(|&i| candidates[i]).collect();
    picked.sort_by(|a, b| a.final_score.total_cmp(&b.final_score));
    let max_pairwise_diff = spread(picked.iter().map(|s| s.final_score));
    let picks = conditions
        .iter()
        .zip(picked)
        .map(|(&condition, s)| TopicPick {
            condition,
            topic_id: s.topic_id.clone(),
            final_score: s.final_score,
        })
        .collect();
    Ok(TopicAssignment {
        picks,
        max_pairwise_diff,
    })
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    hi - lo
}

/// k-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// A row of the ratings CSV.
#[derive(Debug, Deserialize)]
struct RatingRow {
    #[serde(default)]
    couple_id: Option<String>,
    topic_id: String,
    partner: Partner,
    arousal: u8,
    threat: u8,
    sensitivity: u8,
}

/// Topic scores grouped by couple (an absent `couple_id` column yields one
/// group keyed by the empty string).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupleTopicScore {
    pub couple_id: String,
    pub topic_id: String,
    pub final_score: f64,
}

/// Read `couple_id?,topic_id,partner,arousal,threat,sensitivity` and score
/// every topic rated by both partners. Output keeps first-seen order.
pub fn score_ratings_csv<R: Read>(reader: R) -> Result<Vec<CoupleTopicScore>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut order: Vec<(String, String)> = Vec::new();
    let mut pending: std::collections::HashMap<(String, String), Vec<TopicRating>> =
        std::collections::HashMap::new();
    for row in rdr.deserialize::<RatingRow>() {
        let row = row?;
        let key = (row.couple_id.unwrap_or_default(), row.topic_id.clone());
        let rating = TopicRating::new(
            row.topic_id,
            row.partner,
            [row.arousal, row.threat, row.sensitivity],
        )?;
        let entry = pending.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(rating);
    }
    order
        .into_iter()
        .map(|key| {
            let ratings = &pending[&key];
            match ratings.as_slice() {
                [a, b] => Ok(CoupleTopicScore {
                    couple_id: key.0.clone(),
                    topic_id: key.1.clone(),
                    final_score: score_topic(a, b)?.final_score,
                }),
                other => Err(StudyError::MismatchedTopic(format!(
                    "topic {} of couple {:?} has {} ratings, expected 2",
                    key.1,
                    key.0,
                    other.len()
                ))),
            }
        })
        .collect()
}
