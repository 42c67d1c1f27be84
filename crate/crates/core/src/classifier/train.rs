use serde::{Deserialize, Serialize};

use super::{argmax, ClassifierModel};
use crate::data::DatasetSplit;
use crate::encoder::{global_features, EncoderModel, GlobalFeature};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    /// Reshuffle sample order every epoch.
    pub shuffle: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            batch: 32,
            seed: 0,
            shuffle: true,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("classifier epochs must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("classifier batch must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::invalid(format!("classifier lr must be non-negative, got {}", self.lr)));
        }
        Ok(())
    }
}

fn stack<T: Scalar>(features: &[GlobalFeature<T>], d: usize) -> Result<Vec<T>> {
    let mut x = Vec::with_capacity(features.len() * d);
    for f in features {
        if f.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.len(),
            });
        }
        x.extend_from_slice(&f.values);
    }
    Ok(x)
}

/// Mini-batch Adam on the mean cross-entropy. Returns the mean training
/// loss of every epoch. Batches accumulate in sample order, so the result
/// is bit-reproducible for a given input order and config.
pub fn train<T: Scalar>(
    model: &mut ClassifierModel<T>,
    features: &[GlobalFeature<T>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::Empty("classifier training set"));
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.classes()) {
        return Err(Error::IndexOutOfRange {
            index: y,
            len: model.classes(),
        });
    }
    let d = model.input_dim();
    let x = stack(features, d)?;
    let n = features.len();
    let p = model.num_params();
    let mut m1 = vec![0.0f64; p];
    let mut m2 = vec![0.0f64; p];
    let mut step = 0i32;
    let rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut bx: Vec<T> = Vec::with_capacity(cfg.batch * d);
    let mut by = Vec::with_capacity(cfg.batch);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.derive_index(epoch as u64).shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.extend_from_slice(&x[i * d..(i + 1) * d]);
                by.push(labels[i]);
            }
            let (loss, grad) = model.loss_and_grad(&bx, &by)?;
            loss_sum += loss.to_f64_lossy() * chunk.len() as f64;
            step += 1;
            let c1 = 1.0 - cfg.beta1.powi(step);
            let c2 = 1.0 - cfg.beta2.powi(step);
            for (((w, g), a), b) in model.params_mut().iter_mut().zip(&grad).zip(&mut m1).zip(&mut m2) {
                let g = g.to_f64_lossy();
                *a = cfg.beta1 * *a + (1.0 - cfg.beta1) * g;
                *b = cfg.beta2 * *b + (1.0 - cfg.beta2) * g * g;
                let upd = cfg.lr * (*a / c1) / ((*b / c2).sqrt() + cfg.adam_eps);
                *w -= T::from_f64_lossy(upd);
            }
        }
        losses.push(loss_sum / n as f64);
    }
    Ok(losses)
}

/// Accuracy report for one labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub n: usize,
    pub accuracy: f64,
    /// `None` for classes with no samples.
    pub per_class_accuracy: Vec<Option<f64>>,
}

/// Predicted class per feature (argmax probability, lowest index on ties).
pub fn predict<T: Scalar>(model: &ClassifierModel<T>, features: &[GlobalFeature<T>]) -> Result<Vec<usize>> {
    let d = model.input_dim();
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(256) {
        let x = stack(chunk, d)?;
        out.extend(model.predict_proba(&x, chunk.len())?.iter().map(|p| argmax(p)));
    }
    Ok(out)
}

pub fn evaluate_features<T: Scalar>(
    model: &ClassifierModel<T>,
    features: &[GlobalFeature<T>],
    labels: &[usize],
    dataset: &str,
) -> Result<EvalReport> {
    if features.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let pred = predict(model, features)?;
    let k = model.classes();
    let mut hit = vec![0usize; k];
    let mut seen = vec![0usize; k];
    for (&p, &y) in pred.iter().zip(labels) {
        if y >= k {
            return Err(Error::IndexOutOfRange { index: y, len: k });
        }
        seen[y] += 1;
        if p == y {
            hit[y] += 1;
        }
    }
    Ok(EvalReport {
        dataset: dataset.to_string(),
        n: labels.len(),
        accuracy: hit.iter().sum::<usize>() as f64 / labels.len() as f64,
        per_class_accuracy: hit
            .iter()
            .zip(&seen)
            .map(|(&h, &s)| (s > 0).then(|| h as f64 / s as f64))
            .collect(),
    })
}

/// Encodes `dataset` and scores the classifier on it.
pub fn evaluate<T: Scalar>(
    encoder: &EncoderModel<T>,
    classifier: &ClassifierModel<T>,
    dataset: &DatasetSplit,
    name: &str,
) -> Result<EvalReport> {
    let features = global_features(encoder, &dataset.clouds)?;
    evaluate_features(classifier, &features, &dataset.labels(), name)
}
