//! Shared fixtures for the benchmarks.

use colav::geom::Pose2;
use colav::nlp::init::initial_guess;
use colav::scenario::Scenario;

/// `n` poses evenly spaced in time along the scenario's initial guess.
pub fn poses(s: &Scenario, n: usize) -> Vec<Pose2> {
    let guess = initial_guess(s).expect("scenario has a path");
    let (t0, t1) = guess.horizon();
    (0..n).map(|k| guess.pose(t0 + (t1 - t0) * k as f64 / (n - 1) as f64)).collect()
}
