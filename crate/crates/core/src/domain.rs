//! Shared domain types and the mode-capability table.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Room-scoped message sequence number, starting at 1.
pub type Seq = u64;

pub const MAX_USERNAME_CHARS: usize = 64;
pub const MAX_ROOM_ID_CHARS: usize = 128;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Self-chosen pseudonymous username, unique within a room.
    UserId
);
string_id!(RoomId);
string_id!(InterceptId);

impl UserId {
    /// Wrap without validation; use [`validate_username`] for user input.
    pub fn new_unchecked(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl RoomId {
    pub fn parse(s: &str) -> Result<Self, DomainError> {
        let s = s.trim();
        if s.is_empty() || s.chars().count() > MAX_ROOM_ID_CHARS || s.chars().any(char::is_control)
        {
            return Err(DomainError::InvalidRoomId(s.to_string()));
        }
        Ok(Self(s.to_string()))
    }
}

impl InterceptId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl FromStr for RoomId {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl FromStr for InterceptId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self::new(s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("invalid room id {0:?}")]
    InvalidRoomId(String),
    #[error("unknown intervention mode {0:?}")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionMode {
    Baseline,
    BasicReminder,
    NeutralGuide,
    EmpatheticGuide,
}

impl InterventionMode {
    pub const ALL: [InterventionMode; 4] = [
        InterventionMode::Baseline,
        InterventionMode::BasicReminder,
        InterventionMode::NeutralGuide,
        InterventionMode::EmpatheticGuide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterventionMode::Baseline => "baseline",
            InterventionMode::BasicReminder => "basic_reminder",
            InterventionMode::NeutralGuide => "neutral_guide",
            InterventionMode::EmpatheticGuide => "empathetic_guide",
        }
    }

    pub fn capabilities(self) -> CapabilitySet {
        mode_capabilities(self)
    }
}

impl fmt::Display for InterventionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterventionMode {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| DomainError::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    None,
    FixedReminder,
    FullGuidanceNeutral,
    FullGuidanceEmpathetic,
}

impl PromptStyle {
    pub fn is_full_guidance(self) -> bool {
        matches!(
            self,
            PromptStyle::FullGuidanceNeutral | PromptStyle::FullGuidanceEmpathetic
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CapabilitySet {
    pub prompt_style: PromptStyle,
    pub guide_enabled: bool,
    pub reinforcement_enabled: bool,
}

/// The fixed per-mode feature table.
pub const fn mode_capabilities(mode: InterventionMode) -> CapabilitySet {
    match mode {
        InterventionMode::Baseline => CapabilitySet {
            prompt_style: PromptStyle::None,
            guide_enabled: false,
            reinforcement_enabled: false,
        },
        InterventionMode::BasicReminder => CapabilitySet {
            prompt_style: PromptStyle::FixedReminder,
            guide_enabled: false,
            reinforcement_enabled: false,
        },
        InterventionMode::NeutralGuide => CapabilitySet {
            prompt_style: PromptStyle::FullGuidanceNeutral,
            guide_enabled: true,
            reinforcement_enabled: false,
        },
        InterventionMode::EmpatheticGuide => CapabilitySet {
            prompt_style: PromptStyle::FullGuidanceEmpathetic,
            guide_enabled: true,
            reinforcement_enabled: true,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    /// Label for the partner, used only when rendering guide prompts.
    pub partner_gender: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UsernameError {
    #[error("username is empty")]
    EmptyName,
    #[error("username exceeds {MAX_USERNAME_CHARS} characters")]
    TooLong,
    #[error("username contains a control or brace character")]
    InvalidCharacter,
    #[error("username {0:?} is already taken in this room")]
    Collision(String),
}

/// Trim and validate a self-chosen username against the names already taken
/// in the target room.
pub fn validate_username<'a>(
    name: &str,
    taken: impl IntoIterator<Item = &'a UserId>,
) -> Result<UserId, UsernameError> {
    let name = name.trim();
    if name.is_empty() {
        return Err(UsernameError::EmptyName);
    }
    if name.chars().count() > MAX_USERNAME_CHARS {
        return Err(UsernameError::TooLong);
    }
    // braces would collide with prompt placeholders
    if name.chars().any(|c| c.is_control() || c == '{' || c == '}') {
        return Err(UsernameError::InvalidCharacter);
    }
    if taken.into_iter().any(|u| u.as_str() == name) {
        return Err(UsernameError::Collision(name.to_string()));
    }
    Ok(UserId(name.to_string()))
}

/// A dyadic chat room with a fixed intervention mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomSession {
    pub room_id: RoomId,
    pub mode: InterventionMode,
    /// One member until the partner joins; never more than two.
    pub members: Vec<UserProfile>,
    pub next_seq: Seq,
    /// Prompt-template language tag.
    pub language: String,
}

impl RoomSession {
    pub const CAPACITY: usize = 2;

    pub fn new(room_id: RoomId, mode: InterventionMode, language: impl Into<String>) -> Self {
        Self {
            room_id,
            mode,
            members: Vec::new(),
            next_seq: 1,
            language: language.into(),
        }
    }

    pub fn member(&self, user: &UserId) -> Option<&UserProfile> {
        self.members.iter().find(|m| &m.user_id == user)
    }

    pub fn is_member(&self, user: &UserId) -> bool {
        self.member(user).is_some()
    }

    pub fn partner_of(&self, user: &UserId) -> Option<&UserProfile> {
        self.members.iter().find(|m| &m.user_id != user)
    }

    pub fn capabilities(&self) -> CapabilitySet {
        mode_capabilities(self.mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageOrigin {
    Direct,
    SkippedOriginal,
    Revised,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub seq: Seq,
    pub sender: UserId,
    pub body: String,
    pub sent_at: DateTime<Utc>,
    pub origin: MessageOrigin,
    /// Set for messages released from an interception.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept_id: Option<InterceptId>,
}

/// Private reinforcement points. Only ever incremented by one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreBoard {
    pub owner: UserId,
    pub points: u32,
}

impl ScoreBoard {
    pub fn new(owner: UserId) -> Self {
        Self { owner, points: 0 }
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock advancing one second per reading.
#[derive(Debug)]
pub struct StepClock {
    next: AtomicI64,
}

impl StepClock {
    pub fn starting_at(t: DateTime<Utc>) -> Self {
        Self {
            next: AtomicI64::new(t.timestamp()),
        }
    }
}

impl Default for StepClock {
    fn default() -> Self {
        Self::starting_at(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap())
    }
}

impl Clock for StepClock {
    fn now(&self) -> DateTime<Utc> {
        let secs = self.next.fetch_add(1, Ordering::SeqCst);
        Utc.timestamp_opt(secs, 0).single().unwrap_or_default()
    }
}
