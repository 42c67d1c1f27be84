//! Lower envelope of the winner scores of one sparse-input row.
//!
//! For a one-hot input `v·e_k`, neuron `j` scores `n_j − u·W_kj` with
//! `u = 2v`: a line in `u`. The winner for any `u` is the lowest line, so
//! the envelope of the `d_out` lines answers every query of row `k` with
//! a binary search. Queries within a relative `1e-9` of a breakpoint fall
//! back to the full scan, so ties and rounding at crossings resolve
//! exactly as the scan does.

use crate::numerics::Scalar;

#[derive(Debug, Clone)]
pub(crate) struct Envelope<T> {
    /// Hull lines by decreasing slope `−W_kj` (they win left to right).
    lines: Vec<usize>,
    /// `breaks[i]`: crossing of `lines[i]` and `lines[i + 1]`.
    breaks: Vec<T>,
}

impl<T: Scalar> Envelope<T> {
    /// `None` when a weight, norm or crossing is not finite; callers then
    /// use [`scan`].
    pub(crate) fn build(norms: &[T], row: &[T]) -> Option<Self> {
        if !row.iter().chain(norms).all(|v| v.is_finite()) {
            return None;
        }
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| {
            row[a]
                .partial_cmp(&row[b])
                .expect("finite weights")
                .then(norms[a].partial_cmp(&norms[b]).expect("finite norms"))
                .then(a.cmp(&b))
        });
        // Of lines with equal slope only the lowest (then lowest-index) one
        // can win; `order` lists it first.
        order.dedup_by(|later, earlier| row[*later] == row[*earlier]);

        // Crossing of lines p, q with row[p] < row[q].
        let cross = |p: usize, q: usize| (norms[q] - norms[p]) / (row[q] - row[p]);
        let mut lines: Vec<usize> = Vec::with_capacity(order.len());
        for j in order {
            while lines.len() >= 2 {
                let a = lines[lines.len() - 2];
                let b = lines[lines.len() - 1];
                if cross(a, j) <= cross(a, b) {
                    lines.pop();
                } else {
                    break;
                }
            }
            lines.push(j);
        }
        let breaks: Vec<T> = lines.windows(2).map(|w| cross(w[0], w[1])).collect();
        breaks.iter().all(|b| b.is_finite()).then_some(Self { lines, breaks })
    }

    /// Lowest-index minimizer of `norms[j] − u·row[j]`.
    #[inline]
    pub(crate) fn query(&self, norms: &[T], row: &[T], u: T) -> usize {
        let s = self.breaks.partition_point(|&b| b < u);
        let tol = T::from_f64_lossy(NEAR_BREAK) * (u.abs() + T::min_positive_value());
        let near = |i: usize| self.breaks.get(i).is_some_and(|&b| (b - u).abs() <= tol);
        if (s > 0 && near(s - 1)) || near(s) {
            return scan(norms, row, u);
        }
        self.lines[s]
    }
}

const NEAR_BREAK: f64 = 1e-9;

/// Lowest `j` minimizing `norms[j] − u·row[j]`, by a full pass. The
/// minimum is found with independent lanes so the loop vectorizes; a
/// second pass picks the lowest index attaining it.
pub(crate) fn scan<T: Scalar>(norms: &[T], row: &[T], u: T) -> usize {
    const LANES: usize = 8;
    let score = |n: T, r: T| n - u * r;
    let mut acc = [T::infinity(); LANES];
    let split = norms.len() - norms.len() % LANES;
    for (nc, rc) in norms[..split].chunks_exact(LANES).zip(row[..split].chunks_exact(LANES)) {
        for i in 0..LANES {
            let s = score(nc[i], rc[i]);
            acc[i] = if s < acc[i] { s } else { acc[i] };
        }
    }
    let mut min = acc.iter().copied().fold(T::infinity(), |a, b| if b < a { b } else { a });
    for (&n, &r) in norms[split..].iter().zip(&row[split..]) {
        let s = score(n, r);
        if s < min {
            min = s;
        }
    }
    norms
        .iter()
        .zip(row)
        .position(|(&n, &r)| score(n, r) == min)
        // Only reachable when every score is NaN (diverged weights).
        .unwrap_or(0)
}
