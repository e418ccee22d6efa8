//! Shared fixtures for the benchmarks.

use mrh_core::{simulate_mrh, ModelParams, StartSpec, Track};

/// Parameters of the simulation study: `(4, 0.5, 0.1, 0.8, 25)`.
pub fn study_params() -> ModelParams {
    ModelParams::new(4.0, 0.5, 0.1, 0.8, 25.0).expect("valid parameters")
}

/// Two-dimensional track with `n` increments every 20 time units.
pub fn study_track(n: usize, seed: u64) -> Track {
    let times: Vec<f64> = (0..=n).map(|k| 20.0 * k as f64).collect();
    let sim = simulate_mrh(&study_params(), &times, 2, StartSpec::Stationary, seed).expect("valid schedule");
    Track::from_simulated(&sim).expect("simulated tracks are valid")
}
