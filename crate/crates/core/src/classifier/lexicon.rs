//! Deterministic rule-based aggression detector used as a test oracle and
//! offline backend.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.txt");

/// Tokens allowed between a second-person copula and a label.
const MAX_FILLER: usize = 3;
const NEGATIONS: &[&str] = &[
    "not", "never", "no", "isn't", "aren't", "wasn't", "weren't", "don't", "doesn't", "hardly",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternClass {
    Label,
    Command,
    Profanity,
    Threat,
    Dismissive,
}

impl PatternClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PatternClass::Label => "label",
            PatternClass::Command => "command",
            PatternClass::Profanity => "profanity",
            PatternClass::Threat => "threat",
            PatternClass::Dismissive => "dismissive",
        }
    }
}

impl fmt::Display for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatternClass {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "label" => Ok(PatternClass::Label),
            "command" => Ok(PatternClass::Command),
            "profanity" => Ok(PatternClass::Profanity),
            "threat" => Ok(PatternClass::Threat),
            "dismissive" => Ok(PatternClass::Dismissive),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("line {line}: unknown pattern class {class:?}")]
    UnknownClass { line: usize, class: String },
    #[error("line {line}: pattern is empty")]
    EmptyPattern { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PatToken {
    text: String,
    prefix: bool,
}

impl PatToken {
    fn matches(&self, token: &str) -> bool {
        if self.prefix {
            token.starts_with(&self.text)
        } else {
            token == self.text
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pattern {
    class: PatternClass,
    source: String,
    tokens: Vec<PatToken>,
}

impl Pattern {
    fn matches_at(&self, tokens: &[String], at: usize) -> bool {
        at + self.tokens.len() <= tokens.len()
            && self
                .tokens
                .iter()
                .zip(&tokens[at..])
                .all(|(p, t)| p.matches(t))
    }
}

/// What the oracle matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub class: PatternClass,
    pub pattern: String,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    patterns: Vec<Pattern>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::builtin().clone()
    }
}

impl Lexicon {
    pub fn builtin() -> &'static Lexicon {
        static BUILTIN: OnceLock<Lexicon> = OnceLock::new();
        BUILTIN.get_or_init(|| DEFAULT_LEXICON.parse().expect("bundled lexicon parses"))
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// First pattern matching `body`, checking classes in a fixed order.
    pub fn detect(&self, body: &str) -> Option<Detection> {
        let tokens = tokenize(body);
        if tokens.is_empty() {
            return None;
        }
        let hit = |p: &Pattern| Detection {
            class: p.class,
            pattern: p.source.clone(),
        };
        for class in [
            PatternClass::Threat,
            PatternClass::Profanity,
            PatternClass::Command,
        ] {
            for p in self.patterns.iter().filter(|p| p.class == class) {
                if (0..tokens.len()).any(|i| p.matches_at(&tokens, i)) {
                    return Some(hit(p));
                }
            }
        }
        for p in self
            .patterns
            .iter()
            .filter(|p| p.class == PatternClass::Label)
        {
            for i in 0..tokens.len() {
                if p.matches_at(&tokens, i) && addressed_to_partner(&tokens[..i]) {
                    return Some(hit(p));
                }
            }
        }
        self.patterns
            .iter()
            .filter(|p| p.class == PatternClass::Dismissive)
            .find(|p| p.tokens.len() == tokens.len() && p.matches_at(&tokens, 0))
            .map(hit)
    }
}

impl FromStr for Lexicon {
    type Err = LexiconError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut patterns = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (class, phrase) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let class: PatternClass = class.parse().map_err(|_| LexiconError::UnknownClass {
                line: idx + 1,
                class: class.to_string(),
            })?;
            let tokens: Vec<PatToken> = phrase
                .split_whitespace()
                .map(|t| {
                    let prefix = t.ends_with('*');
                    let text = normalize(t.trim_end_matches('*'));
                    PatToken { text, prefix }
                })
                .filter(|t| !t.text.is_empty())
                .collect();
            if tokens.is_empty() {
                return Err(LexiconError::EmptyPattern { line: idx + 1 });
            }
            patterns.push(Pattern {
                class,
                source: phrase.trim().to_string(),
                tokens,
            });
        }
        Ok(Self { patterns })
    }
}

fn normalize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if matches!(c, '\u{2018}' | '\u{2019}' | '`') {
                '\''
            } else {
                c
            }
        })
        .flat_map(char::to_lowercase)
        .collect()
}

/// Lowercase word tokens; apostrophes stay inside words.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text)
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Whether the tokens preceding a label end in a second-person copula
/// ("you are", "you're", "your X is", bare "you") followed by at most
/// [`MAX_FILLER`] non-negating fillers.
fn addressed_to_partner(before: &[String]) -> bool {
    let n = before.len();
    let max_filler = MAX_FILLER.min(n);
    for filler in 0..=max_filler {
        let fillers = &before[n - filler..];
        if fillers.iter().any(|t| NEGATIONS.contains(&t.as_str())) {
            return false;
        }
        let head = &before[..n - filler];
        let ends_with = |seq: &[&str]| {
            head.len() >= seq.len()
                && head[head.len() - seq.len()..]
                    .iter()
                    .zip(seq)
                    .all(|(a, b)| a == b)
        };
        let copula = ends_with(&["you", "are"])
            || ends_with(&["you", "were"])
            || ends_with(&["you're"])
            || ends_with(&["youre"])
            || ends_with(&["ur"])
            || ends_with(&["u", "r"])
            || ends_with(&["you", "sound"])
            || ends_with(&["you", "act"]);
        if copula {
            return true;
        }
        // "your temper is (so) awful"
        if head.len() >= 3 {
            let [your, _, verb] = [
                &head[head.len() - 3],
                &head[head.len() - 2],
                &head[head.len() - 1],
            ];
            if your == "your" && matches!(verb.as_str(), "is" | "are" | "was" | "were") {
                return true;
            }
        }
        // "you idiot"
        if filler == 0 && ends_with(&["you"]) {
            return true;
        }
    }
    false
}

/// Rule-oracle verdict under the bundled lexicon.
pub fn oracle_detect(body: &str) -> bool {
    Lexicon::builtin().detect(body).is_some()
}
