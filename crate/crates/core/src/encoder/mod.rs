//! Winner-take-all MLP encoder with a cross-point max-pool.
//!
//! Each layer picks the single output neuron whose weight vector is closest
//! (Euclidean) to the input and passes on that neuron's rectified dot
//! product; every other output is zero. Because of this, the input to every
//! layer after the first has at most one nonzero coordinate, which the
//! [`PreparedEncoder`] exploits: with cached squared column norms `n_j`,
//! `‖v·e_k − W_j‖² = n_j − 2·v·W_kj + v²`, so a winner costs one
//! multiply-add per neuron instead of `d_in`. Each input row's scores are
//! lines in `v`, so their lower envelope, built on first use, turns the
//! winner search into a binary search.

use std::cell::{Cell, OnceCell};

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::numerics::{argmin_tiebreak, column_sq_dists, dot, Matrix, Scalar, SeededRng};

mod envelope;

use envelope::{scan, Envelope};

/// Default layer widths: 3 → 64 → 128 → 1024.
pub const DEFAULT_DIMS: [usize; 4] = [3, 64, 128, 1024];
/// Standard deviation of the default Gaussian weight initialization.
pub const DEFAULT_INIT_STD: f64 = 0.5;

/// One competition layer. `weights` is `d_in × d_out`; column `j` is neuron
/// `j`'s weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WtaLayer<T> {
    weights: Matrix<T>,
}

/// Winner of one layer for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation<T> {
    pub winner: usize,
    /// `max(0, W_winner · x)`.
    pub value: T,
}

impl<T: Scalar> Activation<T> {
    pub fn to_dense(&self, d_out: usize) -> Vec<T> {
        let mut out = vec![T::zero(); d_out];
        out[self.winner] = self.value;
        out
    }
}

impl<T: Scalar> WtaLayer<T> {
    pub fn new(weights: Matrix<T>) -> Result<Self> {
        if weights.cols() < 2 {
            return Err(Error::invalid(format!(
                "a competition layer needs at least 2 neurons, got {}",
                weights.cols()
            )));
        }
        if weights.rows() == 0 {
            return Err(Error::Empty("layer input dimension"));
        }
        if !weights.is_finite() {
            return Err(Error::invalid("layer weights must be finite"));
        }
        Ok(Self { weights })
    }

    pub fn gaussian(d_in: usize, d_out: usize, std: f64, rng: &mut SeededRng) -> Result<Self> {
        Self::new(Matrix::from_fn(d_in, d_out, |_, _| T::from_f64_lossy(std * rng.normal())))
    }

    pub fn d_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix<T> {
        &mut self.weights
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.weights.column(j)
    }

    /// Dense reference forward: distance-based winner, rectified dot value.
    pub fn forward(&self, x: &[T]) -> Result<Activation<T>> {
        let mut dists = Vec::with_capacity(self.d_out());
        column_sq_dists(&self.weights, x, &mut dists)?;
        let winner = argmin_tiebreak(&dists)?;
        let value = dot(&self.column(winner), x)?.max(T::zero());
        Ok(Activation { winner, value })
    }
}

/// Shorthand for [`WtaLayer::forward`].
pub fn layer_forward<T: Scalar>(layer: &WtaLayer<T>, x: &[T]) -> Result<Activation<T>> {
    layer.forward(x)
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// i.i.d. `N(0, std²)` per element.
    Gaussian { std: f64 },
    /// Columns are copies of randomly chosen layer inputs from the data.
    DataSample,
}

impl Default for WeightInit {
    fn default() -> Self {
        WeightInit::Gaussian { std: DEFAULT_INIT_STD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel<T> {
    layers: Vec<WtaLayer<T>>,
}

/// Per-layer winners and values for one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCode<T> {
    pub winners: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> PointCode<T> {
    pub fn final_activation(&self) -> Activation<T> {
        Activation {
            winner: *self.winners.last().expect("encoder has at least one layer"),
            value: *self.values.last().expect("encoder has at least one layer"),
        }
    }
}

/// Max-pooled last-layer activations of a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeature<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> GlobalFeature<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nonzeros(&self) -> usize {
        self.values.iter().filter(|v| **v != T::zero()).count()
    }
}

impl<T: Scalar> EncoderModel<T> {
    pub fn new(layers: Vec<WtaLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("encoder layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].d_out() != pair[1].d_in() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].d_out(),
                    got: pair[1].d_in(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Gaussian-initialized encoder with widths `dims[0] → … → dims[last]`.
    pub fn random(dims: &[usize], std: f64, rng: &mut SeededRng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("need at least input and output widths"));
        }
        let layers = dims
            .windows(2)
            .map(|w| WtaLayer::gaussian(w[0], w[1], std, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    /// Initializes layer by layer: each column is a layer input drawn from
    /// random points of `clouds`, pushed through the layers built so far.
    pub fn from_data(dims: &[usize], clouds: &[PointCloud], rng: &mut SeededRng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("need at least input and output widths"));
        }
        if clouds.is_empty() {
            return Err(Error::Empty("initialization data"));
        }
        let mut layers: Vec<WtaLayer<T>> = Vec::new();
        for w in dims.windows(2) {
            let (d_in, d_out) = (w[0], w[1]);
            let mut columns = Vec::with_capacity(d_out);
            for _ in 0..d_out {
                let cloud = &clouds[rng.below(clouds.len())];
                let p: Vec<T> = cloud.point(rng.below(cloud.len())).iter().map(|&v| T::from_f64_lossy(v)).collect();
                if p.len() != dims[0] {
                    return Err(Error::DimensionMismatch {
                        expected: dims[0],
                        got: p.len(),
                    });
                }
                let mut x = p;
                for layer in &layers {
                    x = layer.forward(&x)?.to_dense(layer.d_out());
                }
                // Small perturbation so duplicate draws do not tie exactly.
                for v in x.iter_mut() {
                    *v += T::from_f64_lossy(1e-3 * rng.normal());
                }
                debug_assert_eq!(x.len(), d_in);
                columns.push(x);
            }
            layers.push(WtaLayer::new(Matrix::from_columns(&columns)?)?);
        }
        Self::new(layers)
    }

    pub fn init(dims: &[usize], init: WeightInit, clouds: &[PointCloud], rng: &mut SeededRng) -> Result<Self> {
        match init {
            WeightInit::Gaussian { std } => Self::random(dims, std, rng),
            WeightInit::DataSample => Self::from_data(dims, clouds, rng),
        }
    }

    pub fn layers(&self) -> &[WtaLayer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [WtaLayer<T>] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].d_in()];
        d.extend(self.layers.iter().map(WtaLayer::d_out));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, WtaLayer::d_out)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.d_in() * l.d_out()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite())
    }

    pub fn prepare(&self) -> PreparedEncoder<'_, T> {
        PreparedEncoder::new(self)
    }

    pub fn cast<U: Scalar>(&self) -> EncoderModel<U> {
        EncoderModel {
            layers: self
                .layers
                .iter()
                .map(|l| WtaLayer {
                    weights: l.weights.cast(),
                })
                .collect(),
        }
    }
}

/// Scans of a row before its envelope is built. A build sorts the row, which
/// costs about as much as a hundred scans, so rows queried only a few times
/// per training batch never build one.
const ENVELOPE_AFTER: u32 = 64;

/// Encoder plus cached squared column norms and per-row score envelopes
/// for the sparse-input layers. Borrowing the model keeps the caches in
/// sync with the weights.
pub struct PreparedEncoder<'a, T> {
    model: &'a EncoderModel<T>,
    norms: Vec<Vec<T>>,
    /// `[layer][row]`, built once the row has been scanned
    /// `ENVELOPE_AFTER` times; `None` inside means "keep scanning".
    envelopes: Vec<Vec<OnceCell<Option<Envelope<T>>>>>,
    hits: Vec<Vec<Cell<u32>>>,
    /// Lowest-index minimum-norm neuron per layer: the winner for `v = 0`.
    zero_winner: Vec<usize>,
}

impl<'a, T: Scalar> PreparedEncoder<'a, T> {
    fn new(model: &'a EncoderModel<T>) -> Self {
        let norms: Vec<Vec<T>> = model.layers.iter().map(|l| l.weights.column_sq_norms()).collect();
        let zero_winner = norms.iter().map(|n| argmin_tiebreak(n).unwrap_or(0)).collect();
        let envelopes = model
            .layers
            .iter()
            .map(|l| (0..l.d_in()).map(|_| OnceCell::new()).collect())
            .collect();
        let hits = model.layers.iter().map(|l| vec![Cell::new(0); l.d_in()]).collect();
        Self {
            model,
            norms,
            envelopes,
            hits,
            zero_winner,
        }
    }

    pub fn model(&self) -> &EncoderModel<T> {
        self.model
    }

    /// Winner of layer `l` (≥ 1) for the one-hot input `value · e_index`:
    /// the lowest-index minimizer of `n_j − 2·value·W_kj`.
    #[inline]
    pub fn sparse_forward(&self, l: usize, index: usize, value: T) -> Activation<T> {
        let row = self.model.layers[l].weights.row(index);
        let norms = &self.norms[l];
        let best = if value == T::zero() {
            self.zero_winner[l]
        } else {
            let u = value + value;
            let hits = &self.hits[l][index];
            if hits.get() < ENVELOPE_AFTER {
                hits.set(hits.get() + 1);
                scan(norms, row, u)
            } else {
                match self.envelopes[l][index].get_or_init(|| Envelope::build(norms, row)) {
                    Some(e) => e.query(norms, row, u),
                    None => scan(norms, row, u),
                }
            }
        };
        Activation {
            winner: best,
            value: (row[best] * value).max(T::zero()),
        }
    }

    /// Winner of the first layer for a dense input.
    pub fn dense_forward(&self, x: &[T], scratch: &mut Vec<T>) -> Result<Activation<T>> {
        let layer = &self.model.layers[0];
        column_sq_dists(&layer.weights, x, scratch)?;
        let winner = argmin_tiebreak(scratch)?;
        let w = &layer.weights;
        let mut value = T::zero();
        for (k, &xk) in x.iter().enumerate() {
            value += w.get(k, winner) * xk;
        }
        Ok(Activation {
            winner,
            value: value.max(T::zero()),
        })
    }

    /// Runs a point through layers `0..=last`, calling `sink(layer, activation)`.
    #[inline]
    pub fn forward_point(
        &self,
        p: &[T],
        last: usize,
        scratch: &mut Vec<T>,
        mut sink: impl FnMut(usize, Activation<T>),
    ) -> Result<Activation<T>> {
        let mut act = self.dense_forward(p, scratch)?;
        sink(0, act);
        for l in 1..=last {
            act = self.sparse_forward(l, act.winner, act.value);
            sink(l, act);
        }
        Ok(act)
    }

    pub fn encode_point(&self, p: &[T]) -> Result<PointCode<T>> {
        let n = self.model.layers.len();
        let mut code = PointCode {
            winners: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
        };
        let mut scratch = Vec::new();
        self.forward_point(p, n - 1, &mut scratch, |_, a| {
            code.winners.push(a.winner);
            code.values.push(a.value);
        })?;
        Ok(code)
    }

    /// Final-layer activation of every point of `cloud`.
    pub fn encode_cloud(&self, cloud: &PointCloud) -> Result<Vec<Activation<T>>> {
        let last = self.model.layers.len() - 1;
        let mut scratch = Vec::new();
        let mut p = vec![T::zero(); cloud.dim()];
        cloud
            .iter()
            .map(|pt| {
                for (d, &s) in p.iter_mut().zip(pt) {
                    *d = T::from_f64_lossy(s);
                }
                self.forward_point(&p, last, &mut scratch, |_, _| {})
            })
            .collect()
    }

    pub fn global_feature(&self, cloud: &PointCloud) -> Result<GlobalFeature<T>> {
        if cloud.dim() != self.model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.input_dim(),
                got: cloud.dim(),
            });
        }
        let mut values = vec![T::zero(); self.model.output_dim()];
        for a in self.encode_cloud(cloud)? {
            if a.value > values[a.winner] {
                values[a.winner] = a.value;
            }
        }
        Ok(GlobalFeature { values })
    }
}

pub fn encode_point<T: Scalar>(model: &EncoderModel<T>, p: &[T]) -> Result<PointCode<T>> {
    if p.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: p.len(),
        });
    }
    model.prepare().encode_point(p)
}

pub fn global_feature<T: Scalar>(model: &EncoderModel<T>, cloud: &PointCloud) -> Result<GlobalFeature<T>> {
    model.prepare().global_feature(cloud)
}

/// Global features of many clouds with one prepared cache.
pub fn global_features<T: Scalar>(model: &EncoderModel<T>, clouds: &[PointCloud]) -> Result<Vec<GlobalFeature<T>>> {
    let prepared = model.prepare();
    clouds.iter().map(|c| prepared.global_feature(c)).collect()
}
