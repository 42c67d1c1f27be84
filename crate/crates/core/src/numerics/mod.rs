//! Small dense linear-algebra and randomness substrate.

mod matrix;
mod rng;
mod scalar;

pub use matrix::Matrix;
pub use rng::{derive_seed, fnv1a64, SeededRng};
pub use scalar::Scalar;

use crate::error::{Error, Result};

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `Wᵀx`: one dot product per column of `w`.
pub fn matvec_t<T: Scalar>(w: &Matrix<T>, x: &[T]) -> Result<Vec<T>> {
    check_len(w.rows(), x.len())?;
    let mut out = vec![T::zero(); w.cols()];
    for (k, &xk) in x.iter().enumerate() {
        for (o, &wk) in out.iter_mut().zip(w.row(k)) {
            *o += wk * xk;
        }
    }
    Ok(out)
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(&x, &y)| x * y).sum())
}

pub fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_len(a.len(), b.len())?;
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum())
}

pub fn euclid_dist<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    sq_dist(a, b).map(T::sqrt)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    a.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Index of the minimum; exact ties resolve to the lowest index.
pub fn argmin_tiebreak<T: Scalar>(values: &[T]) -> Result<usize> {
    let (first, rest) = values.split_first().ok_or(Error::Empty("argmin input"))?;
    let mut best = 0;
    let mut best_val = *first;
    for (i, &v) in rest.iter().enumerate() {
        if v < best_val {
            best = i + 1;
            best_val = v;
        }
    }
    Ok(best)
}

/// Squared distance from `x` to every column of `w`, accumulated row by row
/// so each column's sum runs over coordinates in index order.
pub fn column_sq_dists<T: Scalar>(w: &Matrix<T>, x: &[T], out: &mut Vec<T>) -> Result<()> {
    check_len(w.rows(), x.len())?;
    out.clear();
    out.resize(w.cols(), T::zero());
    for (k, &xk) in x.iter().enumerate() {
        for (acc, &wk) in out.iter_mut().zip(w.row(k)) {
            let d = xk - wk;
            *acc += d * d;
        }
    }
    Ok(())
}
