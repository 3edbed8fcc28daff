use std::path::{Path, PathBuf};

use smartcart::gate::Verdict;
use smartcart::sim::{
    load_scenario, random_scenario, run, FleetSpec, LinkConfig, Outcome, Scenario,
};

fn scenario(name: &str) -> Scenario {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name);
    load_scenario(&path).unwrap()
}

#[test]
fn minimal_scenario_settles_immediately() {
    let report = run(&Scenario::new(&["c1"]), 1);
    assert_eq!(report.outcome, Outcome::Ok);
    assert_eq!(report.cart("c1").unwrap().final_phase, "AwaitCard");
    assert_eq!(report.metrics.sessions, 0);
    assert!(report.end_ms < 1_000, "{}", report.end_ms);
}

#[test]
fn table2_runs_one_session() {
    let report = run(&scenario("table2.json"), 1);
    assert_eq!(report.outcome, Outcome::Ok, "{:?}", report.violations);
    assert_eq!(report.metrics.sessions, 1);
    assert_eq!(report.metrics.alarms, 0);
    let cart = report.cart("c1").unwrap();
    assert_eq!(cart.stages(), [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 4]);
}

#[test]
fn table2_is_stable_across_seeds() {
    for seed in [1, 2, 99, u64::MAX] {
        let report = run(&scenario("table2.json"), seed);
        assert_eq!(report.outcome, Outcome::Ok, "seed {seed}");
        assert_eq!(
            report.cart("c1").unwrap().stages(),
            [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 4]
        );
    }
}

#[test]
fn dead_store_link_faults() {
    let report = run(&scenario("fault.json"), 1);
    assert_eq!(report.outcome, Outcome::Fault);
    assert_eq!(report.exit_code, 3);
    let cart = report.cart("c1").unwrap();
    assert_eq!(cart.final_phase, "Fault");
    assert_eq!(cart.retries, 3);
    assert_eq!(cart.trace.last().unwrap().phase, "Fault");
}

#[test]
fn gate_sweep_matches_purchases() {
    let report = run(&scenario("gates.json"), 1);
    assert_eq!(report.outcome, Outcome::Ok, "{:?}", report.violations);
    assert_eq!(report.metrics.sessions, 2);
    let alarms: Vec<_> = report
        .gates
        .iter()
        .filter(|g| g.verdict == Verdict::Alarm)
        .map(|g| g.uid.as_str())
        .collect();
    assert_eq!(
        alarms,
        [
            "04B00000000003",
            "04B00000000004",
            "04B00000000008",
            "04B00000000009"
        ]
    );
    assert_eq!(report.gates.len(), 10);
}

#[test]
fn gate_fails_closed_when_store_is_unreachable() {
    let mut s = scenario("gates.json");
    s.links.insert(
        "gate".into(),
        LinkConfig {
            drop: 1.0,
            ..LinkConfig::default()
        },
    );
    let report = run(&s, 1);
    assert_eq!(report.gates.len(), 10);
    assert!(report
        .gates
        .iter()
        .all(|g| g.verdict == Verdict::Alarm
            && g.reason.as_deref().unwrap().starts_with("fail-closed")));
}

#[test]
fn reports_are_byte_identical() {
    for name in ["table2.json", "gates.json", "fault.json"] {
        let s = scenario(name);
        assert_eq!(run(&s, 7).to_json(), run(&s, 7).to_json(), "{name}");
    }
    let s = random_scenario(&FleetSpec::default(), 3);
    assert_eq!(run(&s, 3).to_json(), run(&s, 3).to_json());
}

#[test]
fn random_fleet_conserves_and_counts_conflicts() {
    let spec = FleetSpec::default();
    let mut conflicts = 0;
    for seed in 1..=5 {
        let report = run(&random_scenario(&spec, seed), seed);
        assert_eq!(
            report.outcome,
            Outcome::Ok,
            "seed {seed}: {:?} {:?}",
            report.violations,
            report.stuck
        );
        assert_eq!(
            report.metrics.conflicts_retried,
            report.metrics.store_conflicts
        );
        conflicts += report.metrics.store_conflicts;
        assert!(report.metrics.sessions > 0);
    }
    assert!(conflicts > 0, "the fleet never produced a write conflict");
}

#[test]
fn lossy_links_still_settle() {
    let spec = FleetSpec {
        carts: 4,
        tags: 40,
        store_link: LinkConfig {
            drop: 0.05,
            jitter: 40,
            ..LinkConfig::default()
        },
        ..FleetSpec::default()
    };
    for seed in 1..=5 {
        let report = run(&random_scenario(&spec, seed), seed);
        assert_ne!(
            report.outcome,
            Outcome::DeadlineExceeded,
            "seed {seed}: {:?}",
            report.stuck
        );
        assert!(report.metrics.messages_dropped > 0);
        // Money is conserved even when a cart gives up mid-checkout.
        assert!(
            !report.violations.iter().any(|v| v.starts_with("money")),
            "seed {seed}: {:?}",
            report.violations
        );
    }
}
