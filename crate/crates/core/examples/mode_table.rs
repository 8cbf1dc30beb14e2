//! Print what each intervention mode turns on.

use parley::domain::InterventionMode;

fn main() {
    println!(
        "{:<18} {:<26} {:<6} reward",
        "mode", "prompt style", "guide"
    );
    for mode in InterventionMode::ALL {
        let caps = mode.capabilities();
        println!(
            "{:<18} {:<26} {:<6} {}",
            mode.as_str(),
            format!("{:?}", caps.prompt_style),
            caps.guide_enabled,
            caps.reinforcement_enabled
        );
    }
}
