use crate::error::{Error, Result};
use crate::numerics::{dot, norm, sq_dist, Matrix};

/// How a class is summarized for the dissimilarity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Prototype {
    /// Arithmetic mean of the class's features.
    #[default]
    Mean,
    /// The class member with the smallest summed squared distance to the
    /// other members.
    Medoid,
}

/// Pairwise `1 − cos` between class prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    pub d: Matrix<f64>,
    pub frobenius: f64,
}

pub fn class_prototypes(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    kind: Prototype,
) -> Result<Vec<Vec<f64>>> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let dim = features.first().map_or(0, Vec::len);
    let mut members: Vec<Vec<&Vec<f64>>> = vec![Vec::new(); classes];
    for (f, &y) in features.iter().zip(labels) {
        if y >= classes {
            return Err(Error::IndexOutOfRange { index: y, len: classes });
        }
        if f.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        members[y].push(f);
    }
    members
        .iter()
        .enumerate()
        .map(|(c, m)| {
            if m.is_empty() {
                return Err(Error::invalid(format!("class {c} has no samples")));
            }
            Ok(match kind {
                Prototype::Mean => {
                    let mut mean = vec![0.0; dim];
                    for f in m {
                        for (a, b) in mean.iter_mut().zip(f.iter()) {
                            *a += b;
                        }
                    }
                    mean.iter_mut().for_each(|v| *v /= m.len() as f64);
                    mean
                }
                Prototype::Medoid => {
                    let cost = |i: usize| m.iter().map(|g| sq_dist(m[i], g).expect("same length")).sum::<f64>();
                    let mut best = 0;
                    let mut best_cost = cost(0);
                    for i in 1..m.len() {
                        let c = cost(i);
                        if c < best_cost {
                            best = i;
                            best_cost = c;
                        }
                    }
                    m[best].clone()
                }
            })
        })
        .collect()
}

/// `D[A][B] = 1 − (x_A·x_B)/(‖x_A‖‖x_B‖)`; symmetric with an exact zero
/// diagonal. `names` label errors for zero-norm prototypes.
pub fn dissimilarity(prototypes: &[Vec<f64>], names: &[String]) -> Result<DissimilarityMatrix> {
    let k = prototypes.len();
    if k < 2 {
        return Err(Error::invalid("dissimilarity needs at least 2 classes"));
    }
    let norms: Vec<f64> = prototypes.iter().map(|p| norm(p)).collect();
    if let Some(c) = norms.iter().position(|&n| n == 0.0) {
        let name = names.get(c).cloned().unwrap_or_else(|| c.to_string());
        return Err(Error::invalid(format!("class '{name}' has a zero-norm prototype")));
    }
    let mut d = Matrix::zeros(k, k);
    for a in 0..k {
        for b in a + 1..k {
            let cos = dot(&prototypes[a], &prototypes[b])? / (norms[a] * norms[b]);
            let v = (1.0 - cos).clamp(0.0, 2.0);
            d.set(a, b, v);
            d.set(b, a, v);
        }
    }
    let frobenius = d.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(DissimilarityMatrix { d, frobenius })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ablation {
    pub neuron: usize,
    /// Frobenius norm after zeroing the neuron minus before.
    pub delta_frobenius: f64,
    /// Population variance across classes of the fraction of each class's
    /// samples in which the neuron is active.
    pub cross_class_variance: f64,
}

/// Zeroes feature coordinate `neuron` everywhere and measures the change
/// in class dissimilarity (mean prototypes).
pub fn deactivation_ablation(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    names: &[String],
    neuron: usize,
) -> Result<Ablation> {
    let dim = features.first().map_or(0, Vec::len);
    if neuron >= dim {
        return Err(Error::IndexOutOfRange { index: neuron, len: dim });
    }
    let protos = class_prototypes(features, labels, classes, Prototype::Mean)?;
    let before = dissimilarity(&protos, names)?.frobenius;
    let zeroed: Vec<Vec<f64>> = protos
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p[neuron] = 0.0;
            p
        })
        .collect();
    let after = dissimilarity(&zeroed, names)?.frobenius;
    let mut active = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    for (f, &y) in features.iter().zip(labels) {
        total[y] += 1;
        if f[neuron] != 0.0 {
            active[y] += 1;
        }
    }
    let rates: Vec<f64> = active.iter().zip(&total).map(|(&a, &t)| a as f64 / t as f64).collect();
    let mean = rates.iter().sum::<f64>() / classes as f64;
    let cross_class_variance = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / classes as f64;
    Ok(Ablation {
        neuron,
        delta_frobenius: after - before,
        cross_class_variance,
    })
}
