//! Randomized verification suites. Each instance draws from its own RNG
//! derived from the master seed and its index, so a reported counterexample
//! can be replayed alone.

use serde::Serialize;

use super::experiment::{variance_ordering_experiment, ExperimentConfig};
use super::geometry::{corollary_check, sample_instance, theorem1_check_with, CorollaryMode, UpdateFault};
use super::{activity_variance, activity_variance_pairwise};
use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Largest winner list drawn by the variance oracle suite.
pub const EQ5_MAX_POINTS: usize = 512;
/// Largest neuron count drawn by the variance oracle suite.
pub const EQ5_MAX_NEURONS: usize = 64;
pub const EQ5_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub suite: String,
    pub instances: usize,
    pub violations: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_error: Option<f64>,
}

impl VerifySummary {
    fn new(suite: &str, instances: usize, seed: u64) -> Self {
        Self {
            suite: suite.to_string(),
            instances,
            violations: 0,
            seed,
            counterexample: None,
            max_abs_error: None,
        }
    }

    fn violation(&mut self, example: impl FnOnce() -> serde_json::Value) {
        if self.violations == 0 {
            self.counterexample = Some(example());
        }
        self.violations += 1;
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("suite needs at least one instance"));
    }
    Ok(())
}

/// Checks `flipped == condition` on `n` sampled instances.
pub fn run_theorem1_suite(n: usize, seed: u64, fault: UpdateFault) -> Result<VerifySummary> {
    check_n(n)?;
    let root = SeededRng::new(seed);
    let mut s = VerifySummary::new("theorem1", n, seed);
    for i in 0..n {
        let mut rng = root.derive_index(i as u64);
        let g = sample_instance(&mut rng);
        let r = theorem1_check_with(&g, fault)?;
        if r.flipped != r.condition {
            s.violation(|| serde_json::json!({ "index": i, "instance": g, "outcome": r }));
        }
    }
    Ok(s)
}

/// Counts winner changes under a homogeneous update; any is a violation.
pub fn run_corollary_suite(n: usize, seed: u64, mode: CorollaryMode) -> Result<VerifySummary> {
    check_n(n)?;
    let name = match mode {
        CorollaryMode::BothHebbian => "corollary_both_hebbian",
        CorollaryMode::BothAnti => "corollary_both_anti",
    };
    let root = SeededRng::new(seed);
    let mut s = VerifySummary::new(name, n, seed);
    for i in 0..n {
        let mut rng = root.derive_index(i as u64);
        let g = sample_instance(&mut rng);
        if corollary_check(&g, mode)? {
            s.violation(|| serde_json::json!({ "index": i, "instance": g }));
        }
    }
    Ok(s)
}

/// Compares the closed-form activity variance with the explicit double sum
/// on `n` random winner lists.
pub fn run_eq5_suite(n: usize, seed: u64) -> Result<VerifySummary> {
    check_n(n)?;
    let root = SeededRng::new(seed);
    let mut s = VerifySummary::new("eq5", n, seed);
    let mut max_err: f64 = 0.0;
    for i in 0..n {
        let mut rng = root.derive_index(i as u64);
        let d = 1 + rng.below(EQ5_MAX_NEURONS);
        let len = 1 + rng.below(EQ5_MAX_POINTS);
        let winners: Vec<usize> = (0..len).map(|_| rng.below(d)).collect();
        let err = (activity_variance(&winners, d)? - activity_variance_pairwise(&winners)?).abs();
        max_err = max_err.max(err);
        if !(err < EQ5_TOLERANCE) {
            s.violation(|| serde_json::json!({ "index": i, "d": d, "winners": winners, "abs_error": err }));
        }
    }
    s.max_abs_error = Some(max_err);
    Ok(s)
}

/// Runs the NeAW / NeAW-H / NeAW-aH variance experiment on `n` seeds
/// derived from `seed`; one violation when the median ordering fails.
pub fn run_ordering_suite(clouds: &[PointCloud], n: usize, seed: u64, cfg: &ExperimentConfig) -> Result<VerifySummary> {
    check_n(n)?;
    let root = SeededRng::new(seed);
    let seeds: Vec<u64> = (0..n as u64).map(|i| root.derive_index(i).next_u64()).collect();
    let table = variance_ordering_experiment(clouds, &seeds, cfg, |_| Ok(()))?;
    let mut s = VerifySummary::new("ordering", n, seed);
    if !table.ordering_holds() {
        s.violation(|| {
            let medians: Vec<_> = table
                .rules
                .iter()
                .map(|&r| serde_json::json!({ "rule": r.to_string(), "median_variance": table.median_final(r) }))
                .collect();
            serde_json::json!({ "seeds": seeds, "medians": medians, "final_variance": table.final_variance })
        });
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;

    #[test]
    fn small_suites_pass() {
        let s = run_theorem1_suite(2000, 1, UpdateFault::None).unwrap();
        assert_eq!((s.instances, s.violations), (2000, 0));
        assert!(s.counterexample.is_none());
        for mode in [CorollaryMode::BothHebbian, CorollaryMode::BothAnti] {
            assert!(run_corollary_suite(2000, 2, mode).unwrap().passed());
        }
        let e = run_eq5_suite(200, 3).unwrap();
        assert!(e.passed());
        assert!(e.max_abs_error.unwrap() < EQ5_TOLERANCE);
    }

    #[test]
    fn sign_flip_is_caught_with_counterexample() {
        let s = run_theorem1_suite(500, 1, UpdateFault::SignFlip).unwrap();
        assert!(s.violations > 0);
        let json = serde_json::to_value(&s).unwrap();
        assert!(json["counterexample"]["instance"]["x"].is_array());
        assert_eq!(json["suite"], "theorem1");
    }

    #[test]
    fn suites_are_deterministic() {
        let a = run_theorem1_suite(300, 9, UpdateFault::SignFlip).unwrap();
        let b = run_theorem1_suite(300, 9, UpdateFault::SignFlip).unwrap();
        assert_eq!(a, b);
        assert!(run_eq5_suite(0, 1).is_err());
    }

    #[test]
    fn ordering_with_zero_eta_reports_violation() {
        let data = synthetic_dataset(2, 16, 1, 0.01, "train").unwrap();
        let cfg = ExperimentConfig {
            dims: vec![3, 4, 8],
            epochs: 1,
            eta: 0.0,
            ..Default::default()
        };
        let s = run_ordering_suite(&data.clouds, 3, 5, &cfg).unwrap();
        assert_eq!(s.violations, 1);
        assert!(s.counterexample.is_some());
    }
}
