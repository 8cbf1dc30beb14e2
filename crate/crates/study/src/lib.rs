//! Experimental machinery for within-couple intervention studies.
//!
//! - [`topics`]: conflict-topic intensity calibration and balanced topic selection.
//! - [`assignment`]: counterbalanced condition orderings from a balanced Latin square.
//! - [`questionnaire`]: the post-session Likert instrument and its four constructs.
//! - [`stats`]: Friedman, Wilcoxon signed-rank, Bonferroni, Cronbach's alpha, median/IQR.
//! - [`analysis`]: the end-to-end report over a questionnaire CSV.
//!
//! Every function here is pure; nothing touches global state.

pub mod analysis;
pub mod assignment;
pub mod condition;
mod error;
pub mod questionnaire;
pub mod stats;
pub mod topics;

pub use condition::Condition;
pub use error::{Result, StudyError};
