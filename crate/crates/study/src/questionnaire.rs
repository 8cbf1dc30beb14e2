//! The post-session questionnaire: eighteen 7-point Likert items (Q1..Q18)
//! grouped into four constructs, plus one open-ended comment (Q19).

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::Serialize;

use crate::{Condition, Result, StudyError};

pub const LIKERT_ITEMS: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Construct {
    /// System acceptance and perceived effectiveness.
    C1,
    /// Behavioral and interaction changes.
    C2,
    /// Cognitive and emotional shifts.
    C3,
    /// Perceived change in relational quality.
    C4,
}

impl Construct {
    pub const ALL: [Construct; 4] = [Construct::C1, Construct::C2, Construct::C3, Construct::C4];

    /// 1-based item numbers belonging to this construct.
    pub fn items(self) -> &'static [usize] {
        match self {
            Construct::C1 => &[1, 2],
            Construct::C2 => &[3, 4, 5, 6, 7, 13, 15],
            Construct::C3 => &[8, 9, 10, 11, 12, 14],
            Construct::C4 => &[16, 17, 18],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Construct::C1 => "system acceptance and perceived effectiveness",
            Construct::C2 => "behavioral and interaction changes",
            Construct::C3 => "cognitive and emotional shifts",
            Construct::C4 => "perceived change in relational quality",
        }
    }
}

impl fmt::Display for Construct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Construct {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(Construct::C1),
            "C2" => Ok(Construct::C2),
            "C3" => Ok(Construct::C3),
            "C4" => Ok(Construct::C4),
            _ => Err(StudyError::DegenerateShape(format!(
                "unknown construct {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionnaireResponse {
    pub respondent: String,
    pub condition: Condition,
    /// Q1..Q18; `None` where the item was left blank.
    pub likert: [Option<u8>; LIKERT_ITEMS],
    /// Q19, carried through untouched.
    pub comment: String,
}

impl QuestionnaireResponse {
    pub fn item(&self, q: usize) -> Result<f64> {
        self.likert
            .get(q.wrapping_sub(1))
            .copied()
            .flatten()
            .map(f64::from)
            .ok_or_else(|| StudyError::MissingItem(format!("Q{q}")))
    }

    /// Item values Q1..Q18 in order.
    pub fn likert_values(&self) -> Result<Vec<f64>> {
        (1..=LIKERT_ITEMS).map(|q| self.item(q)).collect()
    }
}

/// Per-construct unweighted item means, indexed C1..C4.
pub fn construct_scores(resp: &QuestionnaireResponse) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (slot, c) in out.iter_mut().zip(Construct::ALL) {
        let items = c.items();
        let mut sum = 0.0;
        for &q in items {
            sum += resp.item(q)?;
        }
        *slot = sum / items.len() as f64;
    }
    Ok(out)
}

/// Parse `respondent,condition,Q1,…,Q19`. Blank Likert cells become `None`.
pub fn read_responses_csv<R: Read>(reader: R) -> Result<Vec<QuestionnaireResponse>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| StudyError::MissingItem(name.to_string()))
    };
    let respondent_col = col("respondent")?;
    let condition_col = col("condition")?;
    let item_cols: Vec<usize> = (1..=LIKERT_ITEMS)
        .map(|q| col(&format!("Q{q}")))
        .collect::<Result<_>>()?;
    let comment_col = col("Q19").ok();

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let mut likert = [None; LIKERT_ITEMS];
        for (i, &c) in item_cols.iter().enumerate() {
            let cell = record.get(c).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let item = format!("Q{}", i + 1);
            let value: u8 = cell.parse().map_err(|_| StudyError::LikertOutOfRange {
                item: item.clone(),
                value: 0,
            })?;
            if !(1..=7).contains(&value) {
                return Err(StudyError::LikertOutOfRange { item, value });
            }
            likert[i] = Some(value);
        }
        out.push(QuestionnaireResponse {
            respondent: record.get(respondent_col).unwrap_or("").to_string(),
            condition: record.get(condition_col).unwrap_or("").parse()?,
            likert,
            comment: comment_col
                .and_then(|c| record.get(c))
                .unwrap_or("")
                .to_string(),
        });
    }
    Ok(out)
}
