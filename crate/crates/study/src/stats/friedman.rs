use super::descriptive::median_iqr;
use super::rank::{average_ranks, tie_sum};
use super::special::chi_square_sf;
use super::{TestKind, TestResult};
use crate::{Result, StudyError};

#[derive(Debug, Clone, Copy)]
pub struct FriedmanOptions {
    /// Divide by `1 - Σ(t³-t) / (n·k·(k²-1))` to account for within-subject ties.
    pub tie_correction: bool,
}

impl Default for FriedmanOptions {
    fn default() -> Self {
        Self {
            tie_correction: true,
        }
    }
}

/// Friedman rank test over a subjects × conditions matrix.
pub fn friedman_test(rows: &[Vec<f64>]) -> Result<TestResult> {
    friedman_test_with(rows, FriedmanOptions::default())
}

pub fn friedman_test_with(rows: &[Vec<f64>], opts: FriedmanOptions) -> Result<TestResult> {
    let n = rows.len();
    if n < 2 {
        return Err(StudyError::DegenerateShape(format!(
            "{n} subjects, need at least 2"
        )));
    }
    let k = rows[0].len();
    if k < 3 {
        return Err(StudyError::DegenerateShape(format!(
            "{k} conditions, need at least 3"
        )));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != k) {
        return Err(StudyError::DegenerateShape(format!("row {bad} is ragged")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StudyError::DegenerateShape("non-finite value".into()));
    }

    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in rows {
        let (ranks, groups) = average_ranks(row);
        for (sum, r) in rank_sums.iter_mut().zip(ranks) {
            *sum += r;
        }
        ties += tie_sum(&groups);
    }

    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let mut chi2 = 12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0);
    if opts.tie_correction {
        let c = 1.0 - ties / (nf * kf * (kf * kf - 1.0));
        chi2 = if c <= f64::EPSILON { 0.0 } else { chi2 / c };
    }
    let chi2 = chi2.max(0.0);
    let df = kf - 1.0;

    let descriptives = (0..k)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            median_iqr(&col)
        })
        .collect::<Result<_>>()?;

    Ok(TestResult {
        kind: TestKind::Friedman,
        statistic: chi2,
        df: Some(df),
        p_value: chi_square_sf(chi2, df),
        adjusted_p: None,
        n,
        descriptives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_ratings_give_zero() {
        let rows = vec![vec![5.0; 4], vec![3.0; 4], vec![6.0; 4]];
        let r = friedman_test(&rows).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn strictly_increasing_rows() {
        // R_j = 3j, Σ R_j² = 270, 12/(3·4·5)·270 − 3·3·5 = 9
        let rows = vec![vec![1.0, 2.0, 3.0, 4.0]; 3];
        let r = friedman_test(&rows).unwrap();
        assert!((r.statistic - 9.0).abs() < 1e-12);
        assert_eq!(r.df, Some(3.0));
        // chi2(3) upper tail at 9 (scipy.stats.chi2.sf)
        assert!((r.p_value - 0.029_290_886_534_888_26).abs() < 1e-10);
    }

    #[test]
    fn tie_correction_can_be_disabled() {
        let rows = vec![
            vec![5.0, 5.0, 8.0],
            vec![7.0, 7.0, 10.0],
            vec![3.0, 3.0, 6.0],
            vec![9.0, 9.0, 12.0],
        ];
        let corrected = friedman_test(&rows).unwrap().statistic;
        let raw = friedman_test_with(
            &rows,
            FriedmanOptions {
                tie_correction: false,
            },
        )
        .unwrap()
        .statistic;
        // rank sums 6, 6, 12 → raw 6.0; C = 1 − 24/(4·3·8) = 0.75 → 8.0
        assert!((raw - 6.0).abs() < 1e-12);
        assert!((corrected - 8.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(friedman_test(&[vec![1.0, 2.0, 3.0]]).is_err());
        assert!(friedman_test(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(friedman_test(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0]]).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_monotone_row_transforms(
            rows in proptest::collection::vec(proptest::collection::vec(1u8..=7, 4), 2..10),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let base: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let transformed: Vec<Vec<f64>> = base
                .iter()
                .enumerate()
                .map(|(i, r)| r.iter().map(|v| if i % 2 == 0 { v.powi(3) * scale + shift } else { v.exp() }).collect())
                .collect();
            let a = friedman_test(&base).unwrap();
            let b = friedman_test(&transformed).unwrap();
            prop_assert!((a.statistic - b.statistic).abs() < 1e-9);
        }
    }
}
