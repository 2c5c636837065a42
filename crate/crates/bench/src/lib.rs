//! Shared fixtures for the benchmarks.

use pnc_core::harness::generate::{random_scenario, GeneratorLimits};
use pnc_core::harness::{load_scenario, ScenarioConfig};

/// The three-farmer fixture shipped in `scenarios/`.
pub fn example_one() -> ScenarioConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/example1.toml");
    load_scenario(path).expect("fixture loads")
}

/// A random scenario capped at `max_points` grid points.
pub fn random(seed: u64, max_points: u128) -> ScenarioConfig {
    let limits = GeneratorLimits {
        max_points,
        ..GeneratorLimits::default()
    };
    random_scenario(seed, &limits)
}
