use crate::{Result, StudyError};

fn sample_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Cronbach's alpha over a respondents × items matrix, using n−1 variances.
pub fn cronbach_alpha(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    if n < 2 {
        return Err(StudyError::DegenerateShape(format!(
            "{n} respondents, need at least 2"
        )));
    }
    let k = rows[0].len();
    if k < 2 {
        return Err(StudyError::DegenerateShape(format!(
            "{k} items, need at least 2"
        )));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(StudyError::DegenerateShape("ragged matrix".into()));
    }

    let item_var: f64 = (0..k)
        .map(|j| sample_variance(rows.iter().map(move |r| r[j])))
        .sum();
    let total_var = sample_variance(rows.iter().map(|r| r.iter().sum::<f64>()));
    if total_var <= 0.0 {
        return Err(StudyError::ZeroTotalVariance);
    }
    let kf = k as f64;
    Ok(kf / (kf - 1.0) * (1.0 - item_var / total_var))
}
