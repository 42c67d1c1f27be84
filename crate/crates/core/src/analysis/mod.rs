//! Activity statistics, winner-flip geometry checks, class dissimilarity,
//! rule-comparison experiments and artifact export.

use crate::data::DatasetSplit;
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

mod dissim;
mod experiment;
mod export;
mod geometry;
mod verify;

pub use dissim::{class_prototypes, deactivation_ablation, dissimilarity, Ablation, DissimilarityMatrix, Prototype};
pub use experiment::{
    mean_cloud_variance, median, train_rule, variance_ordering_experiment, ExperimentConfig, RuleRun, VarianceTable,
};
pub use export::{export_artifacts, read_matrix_csv, write_matrix_csv};
pub use geometry::{
    corollary_check, sample_instance, theorem1_check, theorem1_check_with, CorollaryMode, GeometryInstance,
    Theorem1Outcome, UpdateFault,
};
pub use verify::{run_corollary_suite, run_eq5_suite, run_ordering_suite, run_theorem1_suite, VerifySummary};

fn winner_counts(winners: &[usize], d: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; d];
    for &w in winners {
        if w >= d {
            return Err(Error::IndexOutOfRange { index: w, len: d });
        }
        counts[w] += 1;
    }
    Ok(counts)
}

/// Spread of one-hot winner codes: `1 − Σ_j c_j² / N²`, where `c_j` counts
/// the points won by neuron `j`. Zero when one neuron wins everything,
/// `1 − 1/N` when every point has its own winner.
pub fn activity_variance(winners: &[usize], d: usize) -> Result<f64> {
    if winners.is_empty() {
        return Err(Error::Empty("winner list"));
    }
    let counts = winner_counts(winners, d)?;
    let sq: u128 = counts.iter().map(|&c| c as u128 * c as u128).sum();
    let n = winners.len() as u128;
    Ok(1.0 - sq as f64 / (n * n) as f64)
}

/// The same quantity by the explicit pairwise sum
/// `1 − (1/N²) Σ_k Σ_w y_k · y_w` over one-hot codes.
pub fn activity_variance_pairwise(winners: &[usize]) -> Result<f64> {
    if winners.is_empty() {
        return Err(Error::Empty("winner list"));
    }
    let n = winners.len() as f64;
    let mut s = 0.0;
    for &a in winners {
        for &b in winners {
            s += if a == b { 1.0 } else { 0.0 };
        }
    }
    Ok(1.0 - s / (n * n))
}

/// Last-layer activity statistics of an encoder over a labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityReport {
    /// Share of all points won by each neuron; sums to 1.
    pub activity: Vec<f64>,
    /// Points won by each neuron.
    pub wins: Vec<u64>,
    /// Mean over clouds of the per-cloud activity variance.
    pub variance: f64,
    /// Variance of all points pooled together.
    pub pooled_variance: f64,
    /// `classes × neurons`: fraction of the class's clouds in which the
    /// neuron wins at least one point.
    pub per_class: Matrix<f64>,
    /// `classes × neurons`: neuron's share of all the class's points
    /// (rows sum to 1).
    pub per_class_share: Matrix<f64>,
    pub class_names: Vec<String>,
    pub total_points: u64,
}

pub fn activity_report<T: Scalar>(encoder: &EncoderModel<T>, dataset: &DatasetSplit) -> Result<ActivityReport> {
    let d = encoder.output_dim();
    let k = dataset.num_classes();
    let prepared = encoder.prepare();
    let mut counts = vec![0u64; d];
    let mut class_counts = vec![vec![0u64; d]; k];
    let mut presence = vec![vec![0u64; d]; k];
    let mut class_clouds = vec![0u64; k];
    let mut var_sum = 0.0;
    let mut seen = vec![false; d];
    for cloud in &dataset.clouds {
        let label = cloud.label.unwrap_or(0);
        let winners: Vec<usize> = prepared.encode_cloud(cloud)?.iter().map(|a| a.winner).collect();
        var_sum += activity_variance(&winners, d)?;
        class_clouds[label] += 1;
        seen.fill(false);
        for &w in &winners {
            counts[w] += 1;
            class_counts[label][w] += 1;
            if !seen[w] {
                seen[w] = true;
                presence[label][w] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let share = |c: u64, t: u64| if t == 0 { 0.0 } else { c as f64 / t as f64 };
    let activity: Vec<f64> = counts.iter().map(|&c| share(c, total)).collect();
    let pooled_variance = if total == 0 {
        0.0
    } else {
        1.0 - counts.iter().map(|&c| (c as f64 / total as f64).powi(2)).sum::<f64>()
    };
    Ok(ActivityReport {
        activity,
        wins: counts.clone(),
        variance: if dataset.is_empty() { 0.0 } else { var_sum / dataset.len() as f64 },
        pooled_variance,
        per_class: Matrix::from_fn(k, d, |c, j| share(presence[c][j], class_clouds[c])),
        per_class_share: Matrix::from_fn(k, d, |c, j| share(class_counts[c][j], class_counts[c].iter().sum())),
        class_names: dataset.class_names.clone(),
        total_points: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn variance_examples() {
        assert_eq!(activity_variance(&[3, 3, 3, 3], 5).unwrap(), 0.0);
        assert!((activity_variance(&[0, 1, 2, 3], 4).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(activity_variance(&[0, 0, 1, 1], 2).unwrap(), 0.5);
        assert_eq!(activity_variance_pairwise(&[0, 0, 1, 1]).unwrap(), 0.5);
        assert!(activity_variance(&[], 2).is_err());
        assert!(activity_variance(&[2], 2).is_err());
    }

    proptest! {
        #[test]
        fn closed_form_equals_pairwise(d in 1usize..64, ws in proptest::collection::vec(0usize..10_000, 1..200)) {
            let winners: Vec<usize> = ws.iter().map(|w| w % d).collect();
            let a = activity_variance(&winners, d).unwrap();
            let b = activity_variance_pairwise(&winners).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0 && a <= 1.0 - 1.0 / winners.len() as f64 + 1e-12);
        }
    }

    #[test]
    fn report_invariants() {
        let data = synthetic_dataset(2, 64, 1, 0.01, "train").unwrap();
        let mut rng = SeededRng::new(2);
        let enc = EncoderModel::<f64>::random(&[3, 8, 16, 32], 0.5, &mut rng).unwrap();
        let r = activity_report(&enc, &data).unwrap();
        assert!((r.activity.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.total_points, 10 * 64);
        assert_eq!(r.per_class.rows(), 5);
        for c in 0..5 {
            let row = r.per_class.row(c);
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(row.iter().sum::<f64>() <= 32.0);
            assert!((r.per_class_share.row(c).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(r.variance >= 0.0 && r.variance < 1.0);
        assert!((mean_cloud_variance(&enc, &data.clouds).unwrap() - r.variance).abs() < 1e-12);
    }
}
