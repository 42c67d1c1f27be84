//! Supervised head over frozen global features:
//! `FC → LayerNorm → ReLU → FC → LayerNorm → ReLU → FC → softmax`,
//! with hand-written backpropagation.
//!
//! All parameters live in one flat vector (see [`Segment`]) so the
//! optimizer, gradient check and serializer can treat them uniformly.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, SeededRng};

mod gradcheck;
mod train;

pub use gradcheck::{compare_gradients, grad_check, GradCheckMode};
pub use train::{evaluate, evaluate_features, predict, train, EvalReport, TrainConfig};

pub const LN_EPS: f64 = 1e-5;
/// Default hidden widths.
pub const DEFAULT_HIDDEN: [usize; 2] = [512, 256];

/// Placement of LayerNorm relative to ReLU in the hidden blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormOrder {
    /// `FC → LN → ReLU`.
    #[default]
    NormThenRelu,
    /// `FC → ReLU → LN`.
    ReluThenNorm,
}

impl NormOrder {
    pub fn code(self) -> u32 {
        match self {
            NormOrder::NormThenRelu => 0,
            NormOrder::ReluThenNorm => 1,
        }
    }

    pub fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(NormOrder::NormThenRelu),
            1 => Ok(NormOrder::ReluThenNorm),
            _ => Err(Error::Format(format!("unknown norm order code {c}"))),
        }
    }
}

/// Named slices of the flat parameter vector, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Fc1W,
    Fc1B,
    Ln1Gamma,
    Ln1Beta,
    Fc2W,
    Fc2B,
    Ln2Gamma,
    Ln2Beta,
    Fc3W,
    Fc3B,
}

impl Segment {
    pub const ALL: [Segment; 10] = [
        Segment::Fc1W,
        Segment::Fc1B,
        Segment::Ln1Gamma,
        Segment::Ln1Beta,
        Segment::Fc2W,
        Segment::Fc2B,
        Segment::Ln2Gamma,
        Segment::Ln2Beta,
        Segment::Fc3W,
        Segment::Fc3B,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Segment::Fc1W => "fc1.weight",
            Segment::Fc1B => "fc1.bias",
            Segment::Ln1Gamma => "ln1.gamma",
            Segment::Ln1Beta => "ln1.beta",
            Segment::Fc2W => "fc2.weight",
            Segment::Fc2B => "fc2.bias",
            Segment::Ln2Gamma => "ln2.gamma",
            Segment::Ln2Beta => "ln2.beta",
            Segment::Fc3W => "fc3.weight",
            Segment::Fc3B => "fc3.bias",
        }
    }
}

/// Fully connected weights are stored `fan_in × fan_out`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel<T> {
    dims: [usize; 4],
    order: NormOrder,
    params: Vec<T>,
}

fn segment_sizes(d: [usize; 4]) -> [usize; 10] {
    [d[0] * d[1], d[1], d[1], d[1], d[1] * d[2], d[2], d[2], d[2], d[2] * d[3], d[3]]
}

impl<T: Scalar> ClassifierModel<T> {
    /// Linear layers drawn from `U(−1/√fan_in, 1/√fan_in)`; LayerNorm gain 1,
    /// shift 0.
    pub fn new(d_in: usize, hidden: [usize; 2], classes: usize, order: NormOrder, rng: &mut SeededRng) -> Result<Self> {
        let dims = [d_in, hidden[0], hidden[1], classes];
        if dims.contains(&0) {
            return Err(Error::invalid(format!("classifier widths must be positive, got {dims:?}")));
        }
        if classes < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        let mut m = Self {
            dims,
            order,
            params: vec![T::zero(); segment_sizes(dims).iter().sum()],
        };
        for seg in Segment::ALL {
            let fan_in = match seg {
                Segment::Fc1W | Segment::Fc1B => dims[0],
                Segment::Fc2W | Segment::Fc2B => dims[1],
                Segment::Fc3W | Segment::Fc3B => dims[2],
                Segment::Ln1Gamma | Segment::Ln2Gamma => {
                    m.segment_mut(seg).fill(T::one());
                    continue;
                }
                Segment::Ln1Beta | Segment::Ln2Beta => continue,
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in m.segment_mut(seg) {
                *p = T::from_f64_lossy(rng.uniform_range(-bound, bound));
            }
        }
        Ok(m)
    }

    pub fn with_default_widths(d_in: usize, classes: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(d_in, DEFAULT_HIDDEN, classes, NormOrder::default(), rng)
    }

    /// Rebuilds a model from its flat parameters.
    pub fn from_params(dims: [usize; 4], order: NormOrder, params: Vec<T>) -> Result<Self> {
        let expected: usize = segment_sizes(dims).iter().sum();
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("classifier parameters must be finite"));
        }
        Ok(Self { dims, order, params })
    }

    /// `[d_in, hidden1, hidden2, classes]`.
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn classes(&self) -> usize {
        self.dims[3]
    }

    pub fn order(&self) -> NormOrder {
        self.order
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn segment_range(&self, seg: Segment) -> Range<usize> {
        let sizes = segment_sizes(self.dims);
        let idx = Segment::ALL.iter().position(|&s| s == seg).expect("segment listed");
        let start: usize = sizes[..idx].iter().sum();
        start..start + sizes[idx]
    }

    pub fn segment(&self, seg: Segment) -> &[T] {
        &self.params[self.segment_range(seg)]
    }

    pub fn segment_mut(&mut self, seg: Segment) -> &mut [T] {
        let r = self.segment_range(seg);
        &mut self.params[r]
    }

    pub fn cast<U: Scalar>(&self) -> ClassifierModel<U> {
        ClassifierModel {
            dims: self.dims,
            order: self.order,
            params: self.params.iter().map(|p| U::from_f64_lossy(p.to_f64_lossy())).collect(),
        }
    }

    /// Logits for a row-major `batch × d_in` input.
    pub fn logits(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        Ok(self.forward_cached(x, batch)?.logits)
    }

    /// Class probabilities for a single feature vector.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.logits(x, 1)?))
    }

    /// Probabilities for a row-major batch.
    pub fn predict_proba(&self, x: &[T], batch: usize) -> Result<Vec<Vec<T>>> {
        let logits = self.logits(x, batch)?;
        Ok(logits.chunks_exact(self.classes()).map(softmax).collect())
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        if batch == 0 {
            return Err(Error::Empty("classifier batch"));
        }
        if x.len() != batch * self.dims[0] {
            return Err(Error::DimensionMismatch {
                expected: batch * self.dims[0],
                got: x.len(),
            });
        }
        Ok(())
    }

    fn forward_cached(&self, x: &[T], batch: usize) -> Result<Cache<T>> {
        self.check_input(x, batch)?;
        let [d0, d1, d2, d3] = self.dims;
        let z1 = linear(x, batch, d0, self.segment(Segment::Fc1W), self.segment(Segment::Fc1B), d1);
        let b1 = Block::forward(z1, batch, d1, self.segment(Segment::Ln1Gamma), self.segment(Segment::Ln1Beta), self.order);
        let z2 = linear(&b1.out, batch, d1, self.segment(Segment::Fc2W), self.segment(Segment::Fc2B), d2);
        let b2 = Block::forward(z2, batch, d2, self.segment(Segment::Ln2Gamma), self.segment(Segment::Ln2Beta), self.order);
        let logits = linear(&b2.out, batch, d2, self.segment(Segment::Fc3W), self.segment(Segment::Fc3B), d3);
        Ok(Cache { b1, b2, logits })
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter (same layout as [`params`](Self::params)).
    pub fn loss_and_grad(&self, x: &[T], labels: &[usize]) -> Result<(T, Vec<T>)> {
        let batch = labels.len();
        self.check_labels(labels)?;
        let cache = self.forward_cached(x, batch)?;
        let [d0, d1, d2, d3] = self.dims;
        let inv_b = T::one() / T::from_usize(batch).expect("batch fits");
        let mut loss = T::zero();
        let mut dlogits = vec![T::zero(); batch * d3];
        for (r, &y) in labels.iter().enumerate() {
            let row = &cache.logits[r * d3..(r + 1) * d3];
            let lse = log_sum_exp(row);
            loss += lse - row[y];
            for (c, g) in dlogits[r * d3..(r + 1) * d3].iter_mut().enumerate() {
                *g = (row[c] - lse).exp() * inv_b;
            }
            dlogits[r * d3 + y] -= inv_b;
        }
        loss *= inv_b;

        let mut grad = vec![T::zero(); self.params.len()];
        let g3 = self.linear_backward(&mut grad, Segment::Fc3W, Segment::Fc3B, &cache.b2.out, batch, d2, d3, &dlogits, true);
        let dz2 = cache.b2.backward(&g3, batch, d2, self.segment(Segment::Ln2Gamma), self.order, &mut grad, self.segment_range(Segment::Ln2Gamma), self.segment_range(Segment::Ln2Beta));
        let g2 = self.linear_backward(&mut grad, Segment::Fc2W, Segment::Fc2B, &cache.b1.out, batch, d1, d2, &dz2, true);
        let dz1 = cache.b1.backward(&g2, batch, d1, self.segment(Segment::Ln1Gamma), self.order, &mut grad, self.segment_range(Segment::Ln1Gamma), self.segment_range(Segment::Ln1Beta));
        // The input gradient of the first layer is never used.
        self.linear_backward(&mut grad, Segment::Fc1W, Segment::Fc1B, x, batch, d0, d1, &dz1, false);
        Ok((loss, grad))
    }

    /// Mean cross-entropy only.
    pub fn loss(&self, x: &[T], labels: &[usize]) -> Result<T> {
        self.check_labels(labels)?;
        let logits = self.logits(x, labels.len())?;
        let k = self.classes();
        let total: T = labels
            .iter()
            .enumerate()
            .map(|(r, &y)| {
                let row = &logits[r * k..(r + 1) * k];
                log_sum_exp(row) - row[y]
            })
            .sum();
        Ok(total / T::from_usize(labels.len()).expect("batch fits"))
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|&&y| y >= self.classes()) {
            Some(&y) => Err(Error::IndexOutOfRange {
                index: y,
                len: self.classes(),
            }),
            None => Ok(()),
        }
    }

    /// Accumulates weight/bias gradients into `grad` and returns the
    /// gradient with respect to the layer input (empty unless `input_grad`).
    #[allow(clippy::too_many_arguments)]
    fn linear_backward(
        &self,
        grad: &mut [T],
        w_seg: Segment,
        b_seg: Segment,
        input: &[T],
        batch: usize,
        fan_in: usize,
        fan_out: usize,
        dout: &[T],
        input_grad: bool,
    ) -> Vec<T> {
        // dW = inputᵀ · dout
        let wr = self.segment_range(w_seg);
        T::gemm(
            fan_in, batch, fan_out, T::one(),
            input, 1, fan_in as isize,
            dout, fan_out as isize, 1,
            T::zero(), &mut grad[wr], fan_out as isize, 1,
        );
        let br = self.segment_range(b_seg);
        for r in 0..batch {
            for (g, &d) in grad[br.clone()].iter_mut().zip(&dout[r * fan_out..(r + 1) * fan_out]) {
                *g += d;
            }
        }
        if !input_grad {
            return Vec::new();
        }
        // dinput = dout · Wᵀ
        let mut din = vec![T::zero(); batch * fan_in];
        T::gemm(
            batch, fan_out, fan_in, T::one(),
            dout, fan_out as isize, 1,
            self.segment(w_seg), 1, fan_out as isize,
            T::zero(), &mut din, fan_in as isize, 1,
        );
        din
    }
}

/// `x · W + b` for a row-major batch.
fn linear<T: Scalar>(x: &[T], batch: usize, fan_in: usize, w: &[T], b: &[T], fan_out: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(batch * fan_out);
    for _ in 0..batch {
        out.extend_from_slice(b);
    }
    T::gemm(
        batch, fan_in, fan_out, T::one(),
        x, fan_in as isize, 1,
        w, fan_out as isize, 1,
        T::one(), &mut out, fan_out as isize, 1,
    );
    out
}

struct Cache<T> {
    b1: Block<T>,
    b2: Block<T>,
    logits: Vec<T>,
}

/// Hidden block activations kept for backpropagation.
struct Block<T> {
    /// Pre-activation `z`.
    z: Vec<T>,
    /// Normalized values `(u − mean) / σ` of the LayerNorm input `u`.
    xhat: Vec<T>,
    inv_std: Vec<T>,
    out: Vec<T>,
}

impl<T: Scalar> Block<T> {
    fn forward(z: Vec<T>, batch: usize, h: usize, gamma: &[T], beta: &[T], order: NormOrder) -> Self {
        let ln_in: Vec<T> = match order {
            NormOrder::NormThenRelu => z.clone(),
            NormOrder::ReluThenNorm => z.iter().map(|v| v.max(T::zero())).collect(),
        };
        let mut xhat = vec![T::zero(); batch * h];
        let mut inv_std = vec![T::zero(); batch];
        let mut out = vec![T::zero(); batch * h];
        for r in 0..batch {
            let row = &ln_in[r * h..(r + 1) * h];
            let (xh, is) = normalize_row(row);
            inv_std[r] = is;
            for c in 0..h {
                let a = gamma[c] * xh[c] + beta[c];
                out[r * h + c] = match order {
                    NormOrder::NormThenRelu => a.max(T::zero()),
                    NormOrder::ReluThenNorm => a,
                };
            }
            xhat[r * h..(r + 1) * h].copy_from_slice(&xh);
        }
        Self { z, xhat, inv_std, out }
    }

    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        dout: &[T],
        batch: usize,
        h: usize,
        gamma: &[T],
        order: NormOrder,
        grad: &mut [T],
        g_range: Range<usize>,
        b_range: Range<usize>,
    ) -> Vec<T> {
        let inv_h = T::one() / T::from_usize(h).expect("width fits");
        let mut dz = vec![T::zero(); batch * h];
        let mut da = vec![T::zero(); h];
        let mut dxh = vec![T::zero(); h];
        for r in 0..batch {
            let rs = r * h..(r + 1) * h;
            let xh = &self.xhat[rs.clone()];
            // Gradient at the LayerNorm affine output.
            for c in 0..h {
                da[c] = match order {
                    NormOrder::NormThenRelu if self.out[r * h + c] <= T::zero() => T::zero(),
                    _ => dout[r * h + c],
                };
            }
            let mut mean_d = T::zero();
            let mut mean_dx = T::zero();
            for c in 0..h {
                grad[g_range.start + c] += da[c] * xh[c];
                grad[b_range.start + c] += da[c];
                dxh[c] = da[c] * gamma[c];
                mean_d += dxh[c];
                mean_dx += dxh[c] * xh[c];
            }
            mean_d *= inv_h;
            mean_dx *= inv_h;
            for c in 0..h {
                let du = self.inv_std[r] * (dxh[c] - mean_d - xh[c] * mean_dx);
                dz[r * h + c] = match order {
                    NormOrder::ReluThenNorm if self.z[r * h + c] <= T::zero() => T::zero(),
                    _ => du,
                };
            }
        }
        dz
    }
}

fn normalize_row<T: Scalar>(row: &[T]) -> (Vec<T>, T) {
    let n = T::from_usize(row.len()).expect("width fits");
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv_std = T::one() / (var + T::from_f64_lossy(LN_EPS)).sqrt();
    (row.iter().map(|&v| (v - mean) * inv_std).collect(), inv_std)
}

/// `(x − mean) / √(var + eps) · γ + β` over the feature dimension.
pub fn layer_norm<T: Scalar>(x: &[T], gamma: &[T], beta: &[T], eps: T) -> Result<Vec<T>> {
    if gamma.len() != x.len() || beta.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: if gamma.len() != x.len() { gamma.len() } else { beta.len() },
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("layer norm input"));
    }
    if !(eps > T::zero()) {
        return Err(Error::invalid("layer norm eps must be positive"));
    }
    let n = T::from_usize(x.len()).expect("width fits");
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv = T::one() / (var + eps).sqrt();
    Ok(x.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(&v, (&g, &b))| (v - mean) * inv * g + b)
        .collect())
}

pub fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    m + v.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = v.iter().map(|&x| (x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Index of the largest entry; lowest index on ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, order: NormOrder) -> ClassifierModel<f64> {
        ClassifierModel::new(6, [5, 4], 3, order, &mut SeededRng::new(seed)).unwrap()
    }

    #[test]
    fn layer_norm_examples() {
        let z = layer_norm(&[3.0; 4], &[1.0; 4], &[0.0; 4], 1e-5).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let z = layer_norm(&[1.0f64, -1.0], &[1.0; 2], &[0.0; 2], 1e-12).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-9 && (z[1] + 1.0).abs() < 1e-9);
        let z = layer_norm(&[0.3, 9.0, -2.0], &[0.0; 3], &[5.0; 3], 1e-5).unwrap();
        assert_eq!(z, vec![5.0; 3]);
        assert!(layer_norm(&[1.0], &[1.0, 1.0], &[0.0], 1e-5).is_err());
    }

    #[test]
    fn default_param_count() {
        let m = ClassifierModel::<f64>::with_default_widths(1024, 10, &mut SeededRng::new(1)).unwrap();
        assert_eq!(m.num_params(), 1024 * 512 + 512 + 2 * 512 + 512 * 256 + 256 + 2 * 256 + 256 * 10 + 10);
        assert_eq!(m.segment(Segment::Ln1Gamma), &[1.0; 512][..]);
        assert!(m.segment(Segment::Ln2Beta).iter().all(|&v| v == 0.0));
        let bound = 1.0 / 1024f64.sqrt();
        assert!(m.segment(Segment::Fc1W).iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_logits_give_uniform() {
        let mut m = small(1, NormOrder::default());
        m.segment_mut(Segment::Fc3W).fill(0.0);
        m.segment_mut(Segment::Fc3B).fill(0.0);
        let p = m.forward(&[0.5, 0.0, 1.0, 0.0, 0.2, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariance_and_stability() {
        let a = softmax(&[1.0f64, 2.0, 3.0]);
        let b = softmax(&[1001.0f64, 1002.0, 1003.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        let big = softmax(&[1e300, -1e300, 0.0]);
        assert_eq!(big[0], 1.0);
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probabilities_match_log_sum_exp_oracle() {
        let mut rng = SeededRng::new(3);
        for seed in 0..20 {
            let m = small(seed, NormOrder::default());
            let x: Vec<f64> = (0..6).map(|_| rng.uniform() * 2.0).collect();
            let logits = m.logits(&x, 1).unwrap();
            let p = m.forward(&x).unwrap();
            // Oracle: p_c = exp(z_c − logsumexp(z)) with an independent
            // running-max log-sum-exp.
            let mut acc = f64::NEG_INFINITY;
            for &z in &logits {
                let hi = acc.max(z);
                acc = hi + ((acc - hi).exp() + (z - hi).exp()).ln();
            }
            for (c, &z) in logits.iter().enumerate() {
                assert!((p[c] - (z - acc).exp()).abs() < 1e-12);
                assert!(p[c] > 0.0 && p[c] < 1.0);
            }
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_forward_matches_single() {
        let m = small(4, NormOrder::ReluThenNorm);
        let mut rng = SeededRng::new(5);
        let x: Vec<f64> = (0..18).map(|_| rng.normal()).collect();
        let batch = m.predict_proba(&x, 3).unwrap();
        for r in 0..3 {
            let single = m.forward(&x[r * 6..(r + 1) * 6]).unwrap();
            for (a, b) in batch[r].iter().zip(&single) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn loss_and_grad_agree_on_loss() {
        let m = small(6, NormOrder::default());
        let mut rng = SeededRng::new(7);
        let x: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let (l, g) = m.loss_and_grad(&x, &[0, 2]).unwrap();
        assert!((l - m.loss(&x, &[0, 2]).unwrap()).abs() < 1e-14);
        assert_eq!(g.len(), m.num_params());
        assert!(m.loss_and_grad(&x, &[0, 3]).is_err());
        assert!(m.loss_and_grad(&x[..5], &[0]).is_err());
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.1; 4]), 0);
    }

    #[test]
    fn norm_order_codes() {
        for o in [NormOrder::NormThenRelu, NormOrder::ReluThenNorm] {
            assert_eq!(NormOrder::from_code(o.code()).unwrap(), o);
        }
        assert!(NormOrder::from_code(7).is_err());
    }
}
