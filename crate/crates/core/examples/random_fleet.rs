//! Runs seeded random fleets and prints their metrics.
//!
//! cargo run --example random_fleet -- [runs] [first-seed]

use std::time::Instant;

use smartcart::sim::{random_scenario, run, FleetSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let runs: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let first: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let spec = FleetSpec::default();

    let started = Instant::now();
    for seed in first..first + runs {
        let report = run(&random_scenario(&spec, seed), seed);
        let m = &report.metrics;
        println!(
            "seed {seed:>3}: {:?} sessions={} mean_checkout={}ms conflicts={} alarms={} sent={} end={}ms",
            report.outcome, m.sessions, m.mean_checkout_ms, m.store_conflicts, m.alarms, m.messages_sent, report.end_ms
        );
    }
    println!("{runs} runs in {:.2?}", started.elapsed());
}
