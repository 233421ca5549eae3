//! File formats: the scenario document and the measurement CSV.

pub mod measurement_csv;
pub mod scenario;

pub use measurement_csv::{read_measurements, write_measurements};
pub use scenario::{parse_scenario, serialize_scenario, Scenario, ScenarioNoise};
