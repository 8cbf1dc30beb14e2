use serde::Serialize;

use crate::{Result, StudyError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MedianIqr {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

/// Linear-interpolation quantile on sorted data: probability `p` sits at
/// index `p * (n - 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median_iqr(values: &[f64]) -> Result<MedianIqr> {
    if values.is_empty() {
        return Err(StudyError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    Ok(MedianIqr {
        median,
        q1,
        q3,
        iqr: q3 - q1,
    })
}

/// Bonferroni adjustment: each p becomes `min(1, m·p)`.
pub fn bonferroni(pvals: &[f64], m: usize) -> Result<Vec<f64>> {
    if m < pvals.len() {
        return Err(StudyError::TooFewComparisons {
            m,
            count: pvals.len(),
        });
    }
    pvals
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                Err(StudyError::InvalidP(p))
            } else {
                Ok((m as f64 * p).min(1.0))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_iqr_examples() {
        let r = median_iqr(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((r.median, r.iqr), (3.0, 2.0));
        let r = median_iqr(&[4.0, 4.0, 4.0, 4.0]).unwrap();
        assert_eq!((r.median, r.iqr), (4.0, 0.0));
        let r = median_iqr(&[7.0]).unwrap();
        assert_eq!((r.median, r.iqr), (7.0, 0.0));
        assert!(matches!(median_iqr(&[]), Err(StudyError::EmptyInput)));
    }

    #[test]
    fn even_length_interpolates() {
        // sorted [1,2,3,4]: Q1 at 0.75 → 1.75, Q3 at 2.25 → 3.25
        let r = median_iqr(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(r.median, 2.5);
        assert!((r.q1 - 1.75).abs() < 1e-12 && (r.q3 - 3.25).abs() < 1e-12);
    }

    #[test]
    fn bonferroni_examples() {
        let adj = bonferroni(&[0.005, 0.5, 0.0], 6).unwrap();
        assert!((adj[0] - 0.03).abs() < 1e-15);
        assert_eq!(adj[1], 1.0);
        assert_eq!(adj[2], 0.0);
        assert!(matches!(
            bonferroni(&[1.5], 6),
            Err(StudyError::InvalidP(_))
        ));
        assert!(matches!(
            bonferroni(&[f64::NAN], 6),
            Err(StudyError::InvalidP(_))
        ));
        assert!(matches!(
            bonferroni(&[0.1, 0.2], 1),
            Err(StudyError::TooFewComparisons { .. })
        ));
    }

    proptest! {
        #[test]
        fn bonferroni_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, m in 1usize..20) {
            let adj = bonferroni(&[a.min(b), a.max(b)], m.max(2)).unwrap();
            prop_assert!(adj[0] <= adj[1]);
        }
    }
}
