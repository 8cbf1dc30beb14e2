//! Run the full questionnaire analysis over a synthetic cohort.

use parley_study::analysis::{analyze, AnalysisOptions};
use parley_study::questionnaire::{QuestionnaireResponse, LIKERT_ITEMS};
use parley_study::Condition;

fn main() -> parley_study::Result<()> {
    let mut responses = Vec::new();
    for person in 0..12u8 {
        for (ci, condition) in Condition::ALL.into_iter().enumerate() {
            let mut likert = [None; LIKERT_ITEMS];
            for (q, slot) in likert.iter_mut().enumerate() {
                // later conditions drift upward; the wobble keeps it from being a clean sweep
                let wobble = (person as usize * 7 + q * 3 + ci * 5) % 5;
                *slot = Some((2 + ci + wobble).min(7) as u8);
            }
            responses.push(QuestionnaireResponse {
                respondent: format!("p{person:02}"),
                condition,
                likert,
                comment: String::new(),
            });
        }
    }
    let report = analyze(&responses, &AnalysisOptions::default())?;
    println!("{}", report.render_text());
    Ok(())
}
