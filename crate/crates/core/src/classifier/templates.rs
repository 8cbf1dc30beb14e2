//! Per-mode instruction templates with `{name}` placeholders.
//!
//! Placeholders: `{user_id}`, `{partner_id}`, `{partner_gender}`, and
//! `{partner}`, which falls back to "the other person" when no partner name
//! is bound. Templates are keyed by language tag; English ships built in and
//! a directory of `<lang>/<mode>.<feature>.txt` files can add or override.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::domain::InterventionMode;

pub const DEFAULT_LANGUAGE: &str = "en";
const PARTNER_FALLBACK: &str = "the other person";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// Outgoing-message screening.
    Prompt,
    /// User-activated feelings/needs analysis.
    Guide,
}

impl Feature {
    fn as_str(self) -> &'static str {
        match self {
            Feature::Prompt => "prompt",
            Feature::Guide => "guide",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVars {
    pub user_id: String,
    pub partner_id: String,
    pub partner_gender: String,
}

impl PromptVars {
    pub fn new(
        user_id: impl Into<String>,
        partner_id: impl Into<String>,
        partner_gender: impl Into<String>,
    ) -> Self {
        Self {
            user_id: user_id.into(),
            partner_id: partner_id.into(),
            partner_gender: partner_gender.into(),
        }
    }

    fn lookup(&self, name: &str) -> Result<&str, ClassifyError> {
        let (value, strict) = match name {
            "user_id" => (self.user_id.as_str(), true),
            "partner_id" => (self.partner_id.as_str(), true),
            "partner_gender" => (self.partner_gender.as_str(), true),
            "partner" => (self.partner_id.as_str(), false),
            other => return Err(ClassifyError::MissingVariable(other.to_string())),
        };
        let value = value.trim();
        if value.contains(['{', '}']) {
            return Err(ClassifyError::InvalidVariable(name.to_string()));
        }
        match (value.is_empty(), strict) {
            (true, true) => Err(ClassifyError::MissingVariable(name.to_string())),
            (true, false) => Ok(PARTNER_FALLBACK),
            (false, _) => Ok(value),
        }
    }
}

/// Whether `(mode, feature)` has a template under the capability table.
pub fn supports(mode: InterventionMode, feature: Feature) -> bool {
    let caps = mode.capabilities();
    match feature {
        Feature::Prompt => mode != InterventionMode::Baseline,
        Feature::Guide => caps.guide_enabled,
    }
}

fn file_stem(mode: InterventionMode, feature: Feature) -> String {
    format!("{}.{}", mode.as_str(), feature.as_str())
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    by_lang: HashMap<String, HashMap<(InterventionMode, Feature), String>>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        use InterventionMode::*;
        let en: HashMap<_, _> = [
            (
                (BasicReminder, Feature::Prompt),
                include_str!("../../templates/en/basic_reminder.prompt.txt"),
            ),
            (
                (NeutralGuide, Feature::Prompt),
                include_str!("../../templates/en/neutral_guide.prompt.txt"),
            ),
            (
                (NeutralGuide, Feature::Guide),
                include_str!("../../templates/en/neutral_guide.guide.txt"),
            ),
            (
                (EmpatheticGuide, Feature::Prompt),
                include_str!("../../templates/en/empathetic_guide.prompt.txt"),
            ),
            (
                (EmpatheticGuide, Feature::Guide),
                include_str!("../../templates/en/empathetic_guide.guide.txt"),
            ),
        ]
        .into_iter()
        .map(|(k, v)| (k, v.to_string()))
        .collect();
        Self {
            by_lang: HashMap::from([(DEFAULT_LANGUAGE.to_string(), en)]),
        }
    }

    /// Add templates found under `dir/<lang>/<mode>.<feature>.txt`.
    pub fn load_dir(mut self, dir: &Path) -> std::io::Result<Self> {
        for lang in std::fs::read_dir(dir)? {
            let lang = lang?;
            if !lang.file_type()?.is_dir() {
                continue;
            }
            let tag = lang.file_name().to_string_lossy().to_string();
            for mode in InterventionMode::ALL {
                for feature in [Feature::Prompt, Feature::Guide] {
                    if !supports(mode, feature) {
                        continue;
                    }
                    let path = lang
                        .path()
                        .join(format!("{}.txt", file_stem(mode, feature)));
                    if path.is_file() {
                        let text = std::fs::read_to_string(&path)?;
                        self.by_lang
                            .entry(tag.clone())
                            .or_default()
                            .insert((mode, feature), text);
                    }
                }
            }
        }
        Ok(self)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.by_lang.keys().map(String::as_str)
    }

    /// Render the template for `(mode, feature)` in `lang`, falling back to
    /// the default language when `lang` lacks it.
    pub fn render(
        &self,
        lang: &str,
        mode: InterventionMode,
        feature: Feature,
        vars: &PromptVars,
    ) -> Result<String, ClassifyError> {
        if !supports(mode, feature) {
            return Err(ClassifyError::UnsupportedPair { mode, feature });
        }
        let template = self
            .by_lang
            .get(lang)
            .and_then(|t| t.get(&(mode, feature)))
            .or_else(|| {
                self.by_lang
                    .get(DEFAULT_LANGUAGE)
                    .and_then(|t| t.get(&(mode, feature)))
            })
            .ok_or(ClassifyError::UnsupportedPair { mode, feature })?;
        substitute(template, vars)
    }
}

fn substitute(template: &str, vars: &PromptVars) -> Result<String, ClassifyError> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| ClassifyError::MissingVariable("unterminated placeholder".into()))?;
        out.push_str(vars.lookup(&after[..close])?);
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err(ClassifyError::MissingVariable("stray closing brace".into()));
    }
    out.push_str(rest);
    Ok(out)
}
