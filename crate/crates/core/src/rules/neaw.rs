use super::{ActivityState, RuleConfig, RuleKind};
use crate::encoder::WtaLayer;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

/// A layer input with a single (possibly zero) nonzero coordinate:
/// `value · e_index`. Inputs to every layer after the first have this form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseInput<T> {
    pub index: usize,
    pub value: T,
}

fn check_neaw(layer_d_out: usize, state: &ActivityState, cfg: &RuleConfig, n: usize) -> Result<()> {
    if !cfg.kind.is_neaw() {
        return Err(Error::invalid(format!("{} is not a NeAW-family rule", cfg.kind)));
    }
    if n == 0 {
        return Err(Error::Empty("update batch"));
    }
    if state.d() != layer_d_out {
        return Err(Error::DimensionMismatch {
            expected: layer_d_out,
            got: state.d(),
        });
    }
    Ok(())
}

/// Per-neuron step sizes `sign · η / N`, zero inside the optimal band.
pub(crate) fn neaw_steps(d: usize, cfg: &RuleConfig, n: usize, dev: impl Fn(usize) -> super::Deviation) -> Vec<f64> {
    let base = cfg.eta / n as f64;
    (0..d).map(|j| cfg.neaw_factor(dev(j)) * base).collect()
}

/// Reference NeAW update over dense inputs. Each neuron moves towards
/// (Hebbian) or away from (anti-Hebbian) its closest input, lowest index on
/// ties; neurons at the optimum are left bit-unchanged.
pub fn neaw_update<T: Scalar>(
    layer: &mut WtaLayer<T>,
    inputs: &[Vec<T>],
    state: &ActivityState,
    cfg: &RuleConfig,
) -> Result<()> {
    check_neaw(layer.d_out(), state, cfg, inputs.len())?;
    if let Some(bad) = inputs.iter().find(|x| x.len() != layer.d_in()) {
        return Err(Error::DimensionMismatch {
            expected: layer.d_in(),
            got: bad.len(),
        });
    }
    let steps = neaw_steps(layer.d_out(), cfg, inputs.len(), |j| state.deviation(j, cfg.activity_epsilon));
    let flat: Vec<T> = inputs.iter().flatten().copied().collect();
    apply_dense(layer, &flat, &steps);
    Ok(())
}

/// Dense-input update on a flattened `N × d_in` batch.
pub(crate) fn apply_dense<T: Scalar>(layer: &mut WtaLayer<T>, flat: &[T], steps: &[f64]) {
    let d_in = layer.d_in();
    let w = layer.weights_mut();
    let mut col = vec![T::zero(); d_in];
    for (j, &step) in steps.iter().enumerate() {
        if step == 0.0 {
            continue;
        }
        for (i, c) in col.iter_mut().enumerate() {
            *c = w.get(i, j);
        }
        let mut best = 0;
        let mut best_d = T::infinity();
        for (n, x) in flat.chunks_exact(d_in).enumerate() {
            let mut d = T::zero();
            for (a, b) in x.iter().zip(&col) {
                let t = *a - *b;
                d += t * t;
            }
            if d < best_d {
                best_d = d;
                best = n;
            }
        }
        let x = &flat[best * d_in..(best + 1) * d_in];
        let s = T::from_f64_lossy(step);
        for (i, &xi) in x.iter().enumerate() {
            let v = col[i] + s * (xi - col[i]);
            w.set(i, j, v);
        }
    }
}

/// Distinct candidate inputs of a sparse batch, grouped by nonzero index.
/// Identical inputs produce identical updates, so only the first
/// occurrence of each is kept (its batch index decides ties).
struct Candidates<T> {
    /// Per input index: `(value, first batch index)` sorted by value.
    groups: Vec<Vec<(T, usize)>>,
    /// First batch index of a zero input, if any.
    zero: Option<usize>,
}

impl<T: Scalar> Candidates<T> {
    fn new(d_in: usize, inputs: &[SparseInput<T>]) -> Self {
        let mut groups: Vec<Vec<(T, usize)>> = vec![Vec::new(); d_in];
        let mut zero = None;
        for (n, x) in inputs.iter().enumerate() {
            if x.value == T::zero() {
                zero.get_or_insert(n);
            } else {
                groups[x.index].push((x.value, n));
            }
        }
        for g in groups.iter_mut() {
            g.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite inputs").then(a.1.cmp(&b.1)));
            g.dedup_by(|later, earlier| later.0 == earlier.0);
        }
        Self { groups, zero }
    }

    /// Closest candidate to every column of `w` listed in `cols`, as
    /// `(index, value)`. The score `‖v·e_k − w‖² − ‖w‖² = v² − 2·v·w_k`
    /// ranks candidates; exact ties go to the earliest batch input. Rows
    /// are walked in order so the weight reads stay contiguous.
    fn nearest_all(&self, w: &Matrix<T>, cols: &[usize]) -> Vec<(usize, T)> {
        let mut best: Vec<Option<(T, usize, T, usize)>> =
            vec![self.zero.map(|n| (T::zero(), 0, T::zero(), n)); cols.len()];
        for (k, g) in self.groups.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let row = w.row(k);
            for (b, &j) in best.iter_mut().zip(cols) {
                let wk = row[j];
                let pos = g.partition_point(|(v, _)| *v < wk);
                for &(v, n) in g[pos.saturating_sub(1)..(pos + 1).min(g.len())].iter() {
                    let score = v * v - (v + v) * wk;
                    match *b {
                        Some((s, _, _, bn)) if s < score || (s == score && bn < n) => {}
                        _ => *b = Some((score, k, v, n)),
                    }
                }
            }
        }
        best.into_iter()
            .map(|b| {
                let (_, k, v, _) = b.expect("candidate set is nonempty");
                (k, v)
            })
            .collect()
    }
}

/// NeAW update specialised to one-hot inputs; agrees with [`neaw_update`]
/// on the equivalent dense batch.
pub fn neaw_update_sparse<T: Scalar>(
    layer: &mut WtaLayer<T>,
    inputs: &[SparseInput<T>],
    state: &ActivityState,
    cfg: &RuleConfig,
) -> Result<()> {
    check_neaw(layer.d_out(), state, cfg, inputs.len())?;
    if let Some(bad) = inputs.iter().find(|x| x.index >= layer.d_in()) {
        return Err(Error::IndexOutOfRange {
            index: bad.index,
            len: layer.d_in(),
        });
    }
    let steps = neaw_steps(layer.d_out(), cfg, inputs.len(), |j| state.deviation(j, cfg.activity_epsilon));
    apply_sparse(layer, inputs, &steps);
    Ok(())
}

pub(crate) fn apply_sparse<T: Scalar>(layer: &mut WtaLayer<T>, inputs: &[SparseInput<T>], steps: &[f64]) {
    let cands = Candidates::new(layer.d_in(), inputs);
    let cols: Vec<usize> = (0..steps.len()).filter(|&j| steps[j] != 0.0).collect();
    if cols.is_empty() {
        return;
    }
    let w = layer.weights_mut();
    let targets = cands.nearest_all(w, &cols);
    let s: Vec<T> = cols.iter().map(|&j| T::from_f64_lossy(steps[j])).collect();
    for i in 0..w.rows() {
        let row = w.row_mut(i);
        for ((&j, &(k, v)), &sj) in cols.iter().zip(&targets).zip(&s) {
            let ci = row[j];
            let xi = if i == k { v } else { T::zero() };
            row[j] = ci + sj * (xi - ci);
        }
    }
}

/// Winner-only baseline update for one input.
pub fn baseline_update<T: Scalar>(
    layer: &mut WtaLayer<T>,
    x: &[T],
    winner: usize,
    value: T,
    cfg: &RuleConfig,
) -> Result<()> {
    if cfg.kind.is_neaw() {
        return Err(Error::invalid(format!("{} is not a baseline rule", cfg.kind)));
    }
    if winner >= layer.d_out() {
        return Err(Error::IndexOutOfRange {
            index: winner,
            len: layer.d_out(),
        });
    }
    if x.len() != layer.d_in() {
        return Err(Error::DimensionMismatch {
            expected: layer.d_in(),
            got: x.len(),
        });
    }
    apply_baseline(layer, |i| x[i], None, winner, value, cfg);
    Ok(())
}

/// Baseline update for a one-hot input; Hebb touches only row `index`.
#[cfg(test)]
pub(crate) fn baseline_update_sparse<T: Scalar>(
    layer: &mut WtaLayer<T>,
    x: SparseInput<T>,
    winner: usize,
    value: T,
    cfg: &RuleConfig,
) {
    apply_baseline(
        layer,
        |i| if i == x.index { x.value } else { T::zero() },
        Some(x.index),
        winner,
        value,
        cfg,
    );
}

/// Oja and Grossberg decay a column that keeps winning towards sparse
/// inputs geometrically; subnormal results are flushed to zero because
/// arithmetic on them is orders of magnitude slower.
#[inline]
fn flush<T: Scalar>(v: T) -> T {
    if v.abs() < T::min_positive_value() {
        T::zero()
    } else {
        v
    }
}

/// Inputs of one batch at one layer.
pub(crate) enum BatchInputs<'a, T> {
    /// Row-major, `d_in` values per point.
    Dense(&'a [T]),
    Sparse(&'a [SparseInput<T>]),
}

/// Applies the per-point baseline updates of a whole batch in point order.
/// Points are grouped by winner and each touched column is updated in a
/// contiguous buffer; the arithmetic per element matches [`apply_baseline`]
/// step for step, so the result is bit-identical to calling it per point.
pub(crate) fn apply_baseline_batch<T: Scalar>(
    layer: &mut WtaLayer<T>,
    inputs: BatchInputs<'_, T>,
    winners: &[usize],
    values: &[T],
    cfg: &RuleConfig,
) {
    let eta = T::from_f64_lossy(cfg.eta);
    let d_in = layer.d_in();
    let d_out = layer.d_out();
    let mut by_winner: Vec<Vec<usize>> = vec![Vec::new(); d_out];
    for (i, &w) in winners.iter().enumerate() {
        by_winner[w].push(i);
    }
    let w = layer.weights_mut();
    let mut buf = vec![T::zero(); d_in];
    let mut x = vec![T::zero(); d_in];
    for (j, points) in by_winner.iter().enumerate() {
        if points.is_empty() {
            continue;
        }
        for (r, b) in buf.iter_mut().enumerate() {
            *b = w.get(r, j);
        }
        for &i in points {
            let y = values[i];
            let support = match &inputs {
                BatchInputs::Dense(flat) => {
                    x.copy_from_slice(&flat[i * d_in..(i + 1) * d_in]);
                    None
                }
                BatchInputs::Sparse(s) => {
                    x.fill(T::zero());
                    x[s[i].index] = s[i].value;
                    Some(s[i].index)
                }
            };
            match cfg.kind {
                RuleKind::Hebb => match support {
                    Some(k) => buf[k] += eta * y * x[k],
                    None => {
                        for (b, &xi) in buf.iter_mut().zip(&x) {
                            *b += eta * y * xi;
                        }
                    }
                },
                RuleKind::Oja => {
                    for (b, &xi) in buf.iter_mut().zip(&x) {
                        *b = flush(*b + eta * y * (xi - y * *b));
                    }
                }
                RuleKind::Grossberg => {
                    for (b, &xi) in buf.iter_mut().zip(&x) {
                        *b = flush(*b + eta * (xi - *b));
                    }
                }
                _ => unreachable!("NeAW rules are batch updates"),
            }
        }
        for (r, &b) in buf.iter().enumerate() {
            w.set(r, j, b);
        }
    }
}

fn apply_baseline<T: Scalar>(
    layer: &mut WtaLayer<T>,
    x: impl Fn(usize) -> T,
    support: Option<usize>,
    winner: usize,
    y: T,
    cfg: &RuleConfig,
) {
    let eta = T::from_f64_lossy(cfg.eta);
    let d_in = layer.d_in();
    let w = layer.weights_mut();
    match cfg.kind {
        RuleKind::Hebb => {
            let rows: Box<dyn Iterator<Item = usize>> = match support {
                Some(k) => Box::new(std::iter::once(k)),
                None => Box::new(0..d_in),
            };
            for i in rows {
                let v = w.get(i, winner) + eta * y * x(i);
                w.set(i, winner, v);
            }
        }
        RuleKind::Oja => {
            for i in 0..d_in {
                let wi = w.get(i, winner);
                w.set(i, winner, flush(wi + eta * y * (x(i) - y * wi)));
            }
        }
        RuleKind::Grossberg => {
            for i in 0..d_in {
                let wi = w.get(i, winner);
                w.set(i, winner, flush(wi + eta * (x(i) - wi)));
            }
        }
        _ => unreachable!("NeAW rules are batch updates"),
    }
}
