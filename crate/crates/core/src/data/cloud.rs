use crate::error::{Error, Result};
use crate::numerics::{norm, Matrix};

/// A set of 2-D or 3-D points with an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Matrix<f64>,
    pub label: Option<usize>,
    pub source_id: String,
}

impl PointCloud {
    pub fn new(points: Matrix<f64>, label: Option<usize>, source_id: impl Into<String>) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::Empty("point cloud"));
        }
        if !(2..=3).contains(&points.cols()) {
            return Err(Error::invalid(format!(
                "point dimension must be 2 or 3, got {}",
                points.cols()
            )));
        }
        if !points.is_finite() {
            return Err(Error::invalid("point cloud contains non-finite coordinates"));
        }
        Ok(Self {
            points,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn from_points(points: &[Vec<f64>], label: Option<usize>, source_id: impl Into<String>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            data.extend_from_slice(p);
        }
        Self::new(Matrix::from_vec(points.len(), dim, data)?, label, source_id)
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn points(&self) -> &Matrix<f64> {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        for p in self.iter() {
            for (acc, &v) in c.iter_mut().zip(p) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    pub fn max_norm(&self) -> f64 {
        self.iter().map(norm).fold(0.0, f64::max)
    }

    /// Cloud with the same label and id but points reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let pts: Vec<Vec<f64>> = order.iter().map(|&i| self.point(i).to_vec()).collect();
        Self::from_points(&pts, self.label, self.source_id.clone())
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }
}

/// Centres the cloud on its centroid and scales it into the unit ball.
/// Scaling is skipped when every point coincides with the centroid.
pub fn normalize(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let mut pts = cloud.points.clone();
    for r in 0..pts.rows() {
        for (v, &m) in pts.row_mut(r).iter_mut().zip(&c) {
            *v -= m;
        }
    }
    let max = (0..pts.rows()).map(|r| norm(pts.row(r))).fold(0.0, f64::max);
    if max > 0.0 {
        pts.as_mut_slice().iter_mut().for_each(|v| *v /= max);
    }
    PointCloud {
        points: pts,
        label: cloud.label,
        source_id: cloud.source_id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    fn random_cloud(rng: &mut SeededRng, n: usize) -> PointCloud {
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| 3.0 * rng.normal() + 1.0).collect())
            .collect();
        PointCloud::from_points(&pts, None, "r").unwrap()
    }

    fn max_abs_diff(a: &PointCloud, b: &PointCloud) -> f64 {
        a.points()
            .as_slice()
            .iter()
            .zip(b.points().as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rejects_empty_and_bad_dims() {
        assert!(PointCloud::from_points(&[], None, "e").is_err());
        assert!(PointCloud::from_points(&[vec![1.0]], None, "e").is_err());
        assert!(PointCloud::from_points(&[vec![f64::NAN, 0.0]], None, "e").is_err());
    }

    #[test]
    fn normalized_cloud_invariants() {
        let mut rng = SeededRng::new(1);
        let n = normalize(&random_cloud(&mut rng, 100));
        assert!(n.centroid().iter().all(|c| c.abs() < 1e-9));
        assert!(n.max_norm() <= 1.0 + 1e-9);
        assert!((n.max_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_idempotent() {
        let mut rng = SeededRng::new(2);
        let once = normalize(&random_cloud(&mut rng, 64));
        let twice = normalize(&once);
        assert!(max_abs_diff(&once, &twice) < 1e-12);
    }

    #[test]
    fn single_point_goes_to_origin() {
        let c = PointCloud::from_points(&[vec![4.0, -2.0, 9.0]], Some(1), "p").unwrap();
        let n = normalize(&c);
        assert_eq!(n.point(0), &[0.0, 0.0, 0.0]);
        assert_eq!(n.label, Some(1));
    }

    #[test]
    fn scale_invariance() {
        let mut rng = SeededRng::new(3);
        let c = random_cloud(&mut rng, 50);
        let pts: Vec<Vec<f64>> = c.iter().map(|p| p.iter().map(|v| 7.0 * v).collect()).collect();
        let scaled = PointCloud::from_points(&pts, None, "r").unwrap();
        assert!(max_abs_diff(&normalize(&c), &normalize(&scaled)) < 1e-12);
    }

    proptest! {
        #[test]
        fn normalize_commutes_with_translation(
            seed in 0u64..1000,
            t in proptest::collection::vec(-50.0f64..50.0, 3),
        ) {
            let mut rng = SeededRng::new(seed);
            let c = random_cloud(&mut rng, 20);
            let pts: Vec<Vec<f64>> = c.iter().map(|p| p.iter().zip(&t).map(|(v, d)| v + d).collect()).collect();
            let moved = PointCloud::from_points(&pts, None, "r").unwrap();
            prop_assert!(max_abs_diff(&normalize(&c), &normalize(&moved)) < 1e-9);
        }
    }
}
