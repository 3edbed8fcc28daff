//! Replays the three-item checkout from the checked-in `table2` scenario and
//! prints every screen the cart showed, with the stage it corresponds to.

use std::path::Path;

use smartcart::sim::{load_scenario, run};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/table2.json");
    let scenario = load_scenario(&path)?;
    let report = run(&scenario, 1);

    let cart = report.cart("c1").expect("scenario declares c1");
    for frame in &cart.frames {
        let stage = frame.stage.map_or("-".to_string(), |s| s.to_string());
        println!("t={:>6} ms  stage {stage:>2}  {}", frame.at, frame.view);
        for line in frame.ascii.lines() {
            println!("    |{line}|");
        }
    }
    println!("stages: {:?}", cart.stages());
    println!("phases: {}", cart.phases().join(" -> "));
    println!("outcome: {:?} (exit {})", report.outcome, report.exit_code);
    for s in &report.sessions {
        println!(
            "session {} on {}: {} items, total {}, {} ms",
            s.user, s.cart, s.items, s.total, s.duration_ms
        );
    }
    Ok(())
}
