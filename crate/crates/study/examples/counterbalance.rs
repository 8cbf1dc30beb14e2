//! Balanced Latin square orderings for a small cohort.

use parley_study::assignment::{assign_couples, balanced_latin_square};
use parley_study::topics::Band;
use parley_study::Condition;

fn main() -> parley_study::Result<()> {
    println!("square for four conditions:");
    for row in balanced_latin_square(4) {
        println!("  {row:?}");
    }

    let couples: Vec<_> = (1..=8).map(|i| (format!("c{i}"), None)).collect();
    let plan = assign_couples(&couples, 42, Band::default())?;
    println!();
    for a in &plan {
        let order: Vec<_> = a.ordering.iter().map(|c| c.as_str()).collect();
        println!("{}  {}", a.couple_id, order.join(" -> "));
    }

    // each condition lands in each session slot equally often
    for slot in 0..Condition::ALL.len() {
        let counts: Vec<_> = Condition::ALL
            .iter()
            .map(|c| plan.iter().filter(|a| a.ordering[slot] == *c).count())
            .collect();
        println!("slot {} counts {counts:?}", slot + 1);
    }
    Ok(())
}
