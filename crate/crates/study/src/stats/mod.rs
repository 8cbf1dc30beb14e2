//! Nonparametric tests and reliability measures used by the study report.

mod descriptive;
mod friedman;
mod rank;
mod reliability;
pub mod special;
mod wilcoxon;

use serde::Serialize;

pub use descriptive::{bonferroni, median_iqr, quantile, MedianIqr};
pub use friedman::{friedman_test, friedman_test_with, FriedmanOptions};
pub use rank::average_ranks;
pub use reliability::cronbach_alpha;
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, WilcoxonOptions, ZeroHandling, EXACT_MAX_N,
};

/// Which test produced a [`TestResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Friedman,
    WilcoxonExact,
    WilcoxonNormal,
    /// Every paired difference was zero; p = 1 by convention.
    WilcoxonAllZero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub kind: TestKind,
    /// χ² for Friedman; min(W+, W−) for Wilcoxon.
    pub statistic: f64,
    pub df: Option<f64>,
    pub p_value: f64,
    pub adjusted_p: Option<f64>,
    /// Subjects (Friedman) or non-dropped pairs (Wilcoxon).
    pub n: usize,
    /// One entry per condition column (Friedman) or per sample (Wilcoxon).
    pub descriptives: Vec<MedianIqr>,
}

impl TestResult {
    /// Attach a Bonferroni-adjusted p for `m` comparisons.
    pub fn with_bonferroni(mut self, m: usize) -> Self {
        self.adjusted_p = Some((self.p_value * m as f64).min(1.0));
        self
    }
}
