use super::descriptive::median_iqr;
use super::rank::{average_ranks, tie_sum};
use super::special::normal_sf;
use super::{TestKind, TestResult};
use crate::{Result, StudyError};

/// Largest effective sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroHandling {
    /// Drop zero differences before ranking.
    #[default]
    Wilcoxon,
    /// Rank zeros with the rest, then drop their ranks.
    Pratt,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WilcoxonOptions {
    pub zeros: ZeroHandling,
}

/// Two-sided paired Wilcoxon signed-rank test.
///
/// Exact p by enumerating the sign-assignment distribution for up to
/// [`EXACT_MAX_N`] non-zero pairs; normal approximation with continuity
/// correction above that.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult> {
    wilcoxon_signed_rank_with(a, b, WilcoxonOptions::default())
}

pub fn wilcoxon_signed_rank_with(
    a: &[f64],
    b: &[f64],
    opts: WilcoxonOptions,
) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(StudyError::DegenerateShape(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(StudyError::EmptyInput);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StudyError::DegenerateShape("non-finite value".into()));
    }
    let descriptives = vec![median_iqr(a)?, median_iqr(b)?];

    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (signed_ranks, ties) = match opts.zeros {
        ZeroHandling::Wilcoxon => {
            let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
            let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
            let (ranks, ties) = average_ranks(&abs);
            (
                nz.iter()
                    .zip(ranks)
                    .map(|(d, r)| (d.signum(), r))
                    .collect::<Vec<_>>(),
                ties,
            )
        }
        ZeroHandling::Pratt => {
            let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
            let (ranks, ties) = average_ranks(&abs);
            let kept = diffs
                .iter()
                .zip(ranks)
                .filter(|(d, _)| **d != 0.0)
                .map(|(d, r)| (d.signum(), r))
                .collect::<Vec<_>>();
            (kept, ties)
        }
    };

    let n = signed_ranks.len();
    if n == 0 {
        return Ok(TestResult {
            kind: TestKind::WilcoxonAllZero,
            statistic: 0.0,
            df: None,
            p_value: 1.0,
            adjusted_p: None,
            n: 0,
            descriptives,
        });
    }

    let w_plus: f64 = signed_ranks
        .iter()
        .filter(|(s, _)| *s > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total: f64 = signed_ranks.iter().map(|(_, r)| r).sum();
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let (kind, p_value) = if n <= EXACT_MAX_N {
        let ranks: Vec<f64> = signed_ranks.iter().map(|(_, r)| *r).collect();
        (TestKind::WilcoxonExact, exact_two_sided(&ranks, w_plus))
    } else {
        let mean = total / 2.0;
        let var = signed_ranks.iter().map(|(_, r)| r * r).sum::<f64>() / 4.0;
        let var = match opts.zeros {
            // closed form matches Σr²/4 when ranks are 1..n with ties averaged
            ZeroHandling::Wilcoxon => {
                let nf = n as f64;
                nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0
            }
            ZeroHandling::Pratt => var,
        };
        let dev = ((w_plus - mean).abs() - 0.5).max(0.0);
        let p = if var <= 0.0 {
            1.0
        } else {
            (2.0 * normal_sf(dev / var.sqrt())).min(1.0)
        };
        (TestKind::WilcoxonNormal, p)
    };

    Ok(TestResult {
        kind,
        statistic,
        df: None,
        p_value,
        adjusted_p: None,
        n,
        descriptives,
    })
}

/// Exact two-sided p: `min(1, 2·min(P(T ≤ t), P(T ≥ t)))` for T = W+ under
/// random signs. Ranks are averaged so they are multiples of 1/2; the
/// distribution is built over doubled ranks as integers.
fn exact_two_sided(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    let t = (w_plus * 2.0).round() as usize;
    let lower: u64 = counts[..=t].iter().sum();
    let upper: u64 = counts[t..].iter().sum();
    let total = 2f64.powi(ranks.len() as i32);
    (2.0 * lower.min(upper) as f64 / total).min(1.0)
}
