//! Score six candidate topics from both partners' ratings and pick one
//! mid-intensity topic per condition.

use parley_study::topics::{score_topic, select_balanced_topics, Band, Partner, TopicRating};
use parley_study::Condition;

fn main() -> parley_study::Result<()> {
    let ratings = [
        ("money", [4, 4, 5], [4, 3, 5]),
        ("chores", [5, 4, 3], [4, 4, 4]),
        ("in-laws", [6, 4, 5], [3, 3, 4]),
        ("holidays", [4, 5, 4], [4, 4, 4]),
        ("pets", [1, 2, 2], [2, 1, 2]),
        ("fidelity", [7, 7, 6], [7, 6, 7]),
    ];
    let mut scores = Vec::new();
    for (topic, a, b) in ratings {
        let s = score_topic(
            &TopicRating::new(topic, Partner::A, a)?,
            &TopicRating::new(topic, Partner::B, b)?,
        )?;
        println!("{topic:<10} {:>5.1}", s.final_score);
        scores.push(s);
    }

    let pick = select_balanced_topics(&scores, &Condition::ALL, Band::default())?;
    println!();
    for p in &pick.picks {
        println!(
            "{:<16} {:<10} {:.1}",
            p.condition.as_str(),
            p.topic_id,
            p.final_score
        );
    }
    println!("max pairwise difference {:.2}", pick.max_pairwise_diff);
    Ok(())
}
