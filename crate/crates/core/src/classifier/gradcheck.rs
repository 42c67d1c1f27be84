use super::ClassifierModel;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, SeededRng};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error. Central differences at
/// `h = 1e-5` carry roughly `1e-16·|loss|/h ≈ 1e-11` of rounding noise, so
/// relative errors of gradients much smaller than this floor are noise.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradCheckMode {
    /// Every parameter.
    All,
    /// `count` parameters drawn uniformly without replacement.
    Sampled { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter index with the largest error.
    pub worst: usize,
    pub checked: usize,
}

/// Largest relative error `|a − n| / max(|a|, |n|, 1e-6)` between the
/// backpropagated gradient of the cross-entropy at `(x, label)` and central
/// differences with step `1e-5`.
pub fn grad_check<T: Scalar>(model: &ClassifierModel<T>, x: &[T], label: usize, mode: GradCheckMode) -> Result<f64> {
    let (_, analytic) = model.loss_and_grad(x, &[label])?;
    Ok(compare_gradients(model, x, &[label], &analytic, mode)?.max_rel_err)
}

/// Checks a supplied gradient vector against central differences; used
/// directly to confirm that a corrupted gradient is caught.
pub fn compare_gradients<T: Scalar>(
    model: &ClassifierModel<T>,
    x: &[T],
    labels: &[usize],
    analytic: &[T],
    mode: GradCheckMode,
) -> Result<GradCheckReport> {
    if analytic.len() != model.num_params() {
        return Err(Error::DimensionMismatch {
            expected: model.num_params(),
            got: analytic.len(),
        });
    }
    let indices: Vec<usize> = match mode {
        GradCheckMode::All => (0..model.num_params()).collect(),
        GradCheckMode::Sampled { count, seed } => {
            SeededRng::new(seed).sample_indices(model.num_params(), count.min(model.num_params()))
        }
    };
    let mut probe = model.clone();
    let h = T::from_f64_lossy(STEP);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: 0,
        checked: indices.len(),
    };
    for i in indices {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = probe.loss(x, labels)?.to_f64_lossy();
        probe.params_mut()[i] = orig - h;
        let down = probe.loss(x, labels)?.to_f64_lossy();
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[i].to_f64_lossy();
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(ABS_FLOOR);
        if rel > report.max_rel_err || rel.is_nan() {
            report.max_rel_err = rel;
            report.worst = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{NormOrder, Segment};

    fn sparse_input(rng: &mut SeededRng, d: usize) -> Vec<f64> {
        (0..d).map(|_| if rng.uniform() < 0.3 { rng.uniform() * 2.0 } else { 0.0 }).collect()
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = SeededRng::new(11);
        for seed in 0..4 {
            for order in [NormOrder::NormThenRelu, NormOrder::ReluThenNorm] {
                let m = ClassifierModel::<f64>::new(12, [8, 6], 4, order, &mut SeededRng::new(seed)).unwrap();
                let x = sparse_input(&mut rng, 12);
                let err = grad_check(&m, &x, rng.below(4), GradCheckMode::All).unwrap();
                assert!(err < 1e-4, "seed {seed} {order:?}: {err}");
            }
        }
    }

    #[test]
    fn corrupted_fc2_gradient_is_caught() {
        let m = ClassifierModel::<f64>::new(12, [8, 6], 4, NormOrder::default(), &mut SeededRng::new(2)).unwrap();
        let mut rng = SeededRng::new(3);
        let x = sparse_input(&mut rng, 12);
        let (_, mut g) = m.loss_and_grad(&x, &[1]).unwrap();
        for v in &mut g[m.segment_range(Segment::Fc2W)] {
            *v *= 1.5;
        }
        let r = compare_gradients(&m, &x, &[1], &g, GradCheckMode::All).unwrap();
        assert!(r.max_rel_err > 1e-2);
        assert!(m.segment_range(Segment::Fc2W).contains(&r.worst));
    }

    #[test]
    fn zero_gradient_directions_pass_via_floor() {
        let m = ClassifierModel::<f64>::new(5, [4, 3], 2, NormOrder::default(), &mut SeededRng::new(4)).unwrap();
        // A zero input makes every first-layer weight gradient exactly zero.
        let x = vec![0.0; 5];
        let (_, g) = m.loss_and_grad(&x, &[0]).unwrap();
        assert!(g[m.segment_range(Segment::Fc1W)].iter().all(|&v| v == 0.0));
        assert!(grad_check(&m, &x, 0, GradCheckMode::All).unwrap() <= 1e-4);
    }

    #[test]
    fn sampled_mode_counts() {
        let m = ClassifierModel::<f64>::new(5, [4, 3], 2, NormOrder::default(), &mut SeededRng::new(4)).unwrap();
        let x = vec![0.5; 5];
        let (_, g) = m.loss_and_grad(&x, &[1]).unwrap();
        let r = compare_gradients(&m, &x, &[1], &g, GradCheckMode::Sampled { count: 7, seed: 1 }).unwrap();
        assert_eq!(r.checked, 7);
        let all = compare_gradients(&m, &x, &[1], &g, GradCheckMode::Sampled { count: 10_000, seed: 1 }).unwrap();
        assert_eq!(all.checked, m.num_params());
    }
}
