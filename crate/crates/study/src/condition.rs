use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::StudyError;

/// One arm of the within-subject design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    BasicReminder,
    NeutralGuide,
    EmpatheticGuide,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Baseline,
        Condition::BasicReminder,
        Condition::NeutralGuide,
        Condition::EmpatheticGuide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::BasicReminder => "basic_reminder",
            Condition::NeutralGuide => "neutral_guide",
            Condition::EmpatheticGuide => "empathetic_guide",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "baseline" | "none" => Ok(Condition::Baseline),
            "basicreminder" | "basic" => Ok(Condition::BasicReminder),
            "neutralguide" | "neutral" => Ok(Condition::NeutralGuide),
            "empatheticguide" | "empathetic" => Ok(Condition::EmpatheticGuide),
            _ => Err(StudyError::UnknownCondition(s.to_string())),
        }
    }
}
