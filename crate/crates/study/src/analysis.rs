//! End-to-end questionnaire analysis: reliability, per-condition medians,
//! Friedman omnibus test and Bonferroni-corrected pairwise Wilcoxon tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::questionnaire::{construct_scores, Construct, QuestionnaireResponse, LIKERT_ITEMS};
use crate::stats::{cronbach_alpha, friedman_test, wilcoxon_signed_rank, MedianIqr, TestResult};
use crate::{Condition, Result, StudyError};

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub constructs: Vec<Construct>,
    pub friedman: bool,
    pub wilcoxon: bool,
    /// Number of comparisons for the Bonferroni correction.
    pub bonferroni_m: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            constructs: Construct::ALL.to_vec(),
            friedman: true,
            wilcoxon: true,
            bonferroni_m: 6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Reliability {
    pub scale: String,
    pub items: usize,
    pub alpha: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseResult {
    pub a: Condition,
    pub b: Condition,
    pub result: TestResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstructReport {
    pub construct: Construct,
    pub label: &'static str,
    /// Respondents with a complete score under every condition.
    pub subjects: usize,
    pub descriptives: BTreeMap<Condition, MedianIqr>,
    pub friedman: Option<TestResult>,
    pub pairwise: Vec<PairwiseResult>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub responses: usize,
    pub reliability: Vec<Reliability>,
    pub constructs: Vec<ConstructReport>,
    /// Respondents left out of the within-subject tests, with the reason.
    pub excluded: Vec<(String, String)>,
}

fn alpha_for(scale: &str, responses: &[QuestionnaireResponse], items: &[usize]) -> Reliability {
    let rows: Vec<Vec<f64>> = responses
        .iter()
        .filter_map(|r| {
            items
                .iter()
                .map(|&q| r.item(q).ok())
                .collect::<Option<Vec<_>>>()
        })
        .collect();
    let (alpha, note) = match cronbach_alpha(&rows) {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Reliability {
        scale: scale.to_string(),
        items: items.len(),
        alpha,
        note,
    }
}

type ScoreTable = BTreeMap<String, BTreeMap<Condition, [f64; 4]>>;

fn score_table(responses: &[QuestionnaireResponse]) -> Result<(ScoreTable, Vec<(String, String)>)> {
    let mut table: ScoreTable = BTreeMap::new();
    let mut excluded = Vec::new();
    for r in responses {
        let scores = match construct_scores(r) {
            Ok(s) => s,
            Err(e) => {
                excluded.push((r.respondent.clone(), format!("{}: {e}", r.condition)));
                continue;
            }
        };
        let per = table.entry(r.respondent.clone()).or_default();
        if per.insert(r.condition, scores).is_some() {
            return Err(StudyError::DegenerateShape(format!(
                "respondent {} answered {} twice",
                r.respondent, r.condition
            )));
        }
    }
    table.retain(|who, per| {
        let complete = per.len() == Condition::ALL.len();
        if !complete {
            excluded.push((who.clone(), format!("{} of 4 conditions", per.len())));
        }
        complete
    });
    Ok((table, excluded))
}

pub fn analyze(
    responses: &[QuestionnaireResponse],
    opts: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let all_items: Vec<usize> = (1..=LIKERT_ITEMS).collect();
    let mut reliability = vec![alpha_for("overall", responses, &all_items)];
    for c in Construct::ALL {
        reliability.push(alpha_for(&c.to_string(), responses, c.items()));
    }

    let (table, excluded) = score_table(responses)?;
    let mut constructs = Vec::new();
    for &construct in &opts.constructs {
        let ci = construct as usize;
        // rows: subjects; columns: Condition::ALL order
        let matrix: Vec<Vec<f64>> = table
            .values()
            .map(|per| Condition::ALL.iter().map(|c| per[c][ci]).collect())
            .collect();
        let mut notes = Vec::new();
        let mut descriptives = BTreeMap::new();
        if !matrix.is_empty() {
            for (j, c) in Condition::ALL.iter().enumerate() {
                let col: Vec<f64> = matrix.iter().map(|r| r[j]).collect();
                descriptives.insert(*c, crate::stats::median_iqr(&col)?);
            }
        }
        let friedman = if opts.friedman {
            match friedman_test(&matrix) {
                Ok(r) => Some(r),
                Err(e) => {
                    notes.push(format!("friedman: {e}"));
                    None
                }
            }
        } else {
            None
        };
        let mut pairwise = Vec::new();
        if opts.wilcoxon && !matrix.is_empty() {
            for i in 0..Condition::ALL.len() {
                for j in i + 1..Condition::ALL.len() {
                    let a: Vec<f64> = matrix.iter().map(|r| r[i]).collect();
                    let b: Vec<f64> = matrix.iter().map(|r| r[j]).collect();
                    let result = wilcoxon_signed_rank(&a, &b)?.with_bonferroni(opts.bonferroni_m);
                    pairwise.push(PairwiseResult {
                        a: Condition::ALL[i],
                        b: Condition::ALL[j],
                        result,
                    });
                }
            }
        }
        constructs.push(ConstructReport {
            construct,
            label: construct.label(),
            subjects: matrix.len(),
            descriptives,
            friedman,
            pairwise,
            notes,
        });
    }

    Ok(AnalysisReport {
        responses: responses.len(),
        reliability,
        constructs,
        excluded,
    })
}

/// Plot-ready construct scores, one row per response.
pub fn write_construct_csv<W: Write>(responses: &[QuestionnaireResponse], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["respondent", "condition", "C1", "C2", "C3", "C4"])?;
    for r in responses {
        if let Ok(s) = construct_scores(r) {
            let mut row = vec![r.respondent.clone(), r.condition.to_string()];
            row.extend(s.iter().map(|v| format!("{v:.4}")));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "< .001".to_string()
    } else {
        format!("= {p:.3}")
    }
}

impl AnalysisReport {
    /// Plain-text rendering in the usual reporting style (Mdn, IQR, χ², p).
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "responses: {}", self.responses);
        for r in &self.reliability {
            match r.alpha {
                Some(a) => {
                    let _ = writeln!(s, "alpha[{}] ({} items) = {a:.3}", r.scale, r.items);
                }
                None => {
                    let _ = writeln!(
                        s,
                        "alpha[{}] n/a: {}",
                        r.scale,
                        r.note.as_deref().unwrap_or("")
                    );
                }
            }
        }
        for c in &self.constructs {
            let _ = writeln!(s, "\n{} {} (n = {})", c.construct, c.label, c.subjects);
            for (cond, d) in &c.descriptives {
                let _ = writeln!(s, "  {cond:<17} Mdn = {:.2}, IQR = {:.2}", d.median, d.iqr);
            }
            if let Some(f) = &c.friedman {
                let _ = writeln!(
                    s,
                    "  friedman chi2({}) = {:.2}, p {}",
                    f.df.unwrap_or_default(),
                    f.statistic,
                    fmt_p(f.p_value)
                );
            }
            for pw in &c.pairwise {
                let _ = writeln!(
                    s,
                    "  {} vs {}: W = {:.1}, p {}, p_adj {}",
                    pw.a,
                    pw.b,
                    pw.result.statistic + 0.0,
                    fmt_p(pw.result.p_value),
                    fmt_p(pw.result.adjusted_p.unwrap_or(pw.result.p_value))
                );
            }
            for n in &c.notes {
                let _ = writeln!(s, "  note: {n}");
            }
        }
        for (who, why) in &self.excluded {
            let _ = writeln!(s, "excluded {who}: {why}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(who: &str, cond: Condition, base: u8) -> QuestionnaireResponse {
        let mut likert = [None; LIKERT_ITEMS];
        for (i, slot) in likert.iter_mut().enumerate() {
            *slot = Some(((base as usize + i % 3) as u8).clamp(1, 7));
        }
        QuestionnaireResponse {
            respondent: who.into(),
            condition: cond,
            likert,
            comment: String::new(),
        }
    }

    #[test]
    fn full_pipeline_on_synthetic_data() {
        let mut rs = Vec::new();
        for p in 0..8 {
            for (ci, c) in Condition::ALL.iter().enumerate() {
                rs.push(resp(
                    &format!("p{p}"),
                    *c,
                    (1 + ci as u8 + (p % 2) as u8).min(5),
                ));
            }
        }
        rs.push(resp("partial", Condition::Baseline, 3));
        let report = analyze(&rs, &AnalysisOptions::default()).unwrap();
        assert_eq!(report.constructs.len(), 4);
        let c1 = &report.constructs[0];
        assert_eq!(c1.subjects, 8);
        let f = c1.friedman.as_ref().unwrap();
        assert!(f.p_value < 0.01);
        assert_eq!(c1.pairwise.len(), 6);
        for pw in &c1.pairwise {
            let adj = pw.result.adjusted_p.unwrap();
            assert!((adj - (pw.result.p_value * 6.0).min(1.0)).abs() < 1e-15);
        }
        assert_eq!(report.excluded.len(), 1);
        let text = report.render_text();
        assert!(text.contains("friedman chi2(3)"));
        assert!(report.reliability[0].alpha.is_some());
    }

    #[test]
    fn duplicate_condition_is_an_error() {
        let rs = vec![
            resp("p", Condition::Baseline, 3),
            resp("p", Condition::Baseline, 4),
        ];
        assert!(analyze(&rs, &AnalysisOptions::default()).is_err());
    }

    #[test]
    fn construct_csv_has_one_row_per_response() {
        let rs = vec![resp("p", Condition::Baseline, 3)];
        let mut buf = Vec::new();
        write_construct_csv(&rs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("respondent,condition,C1"));
    }
}
