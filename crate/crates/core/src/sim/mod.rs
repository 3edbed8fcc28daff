//! Deterministic discrete-event simulation of carts, links, the store and
//! exit gates. A report is a pure function of the scenario and the seed;
//! wall-clock time is never read.

mod engine;
pub mod link;
pub mod random;
pub mod report;
pub mod rng;
pub mod scenario;

pub use engine::{run, Simulation, CONNECT_TIMEOUT_MS, GATE_TIMEOUT_MS};
pub use link::LinkConfig;
pub use random::{random_scenario, FleetSpec};
pub use report::{CartReport, Metrics, Outcome, SimReport};
pub use scenario::{load_scenario, parse_scenario, Action, Scenario, ScenarioError, ScenarioEvent};
