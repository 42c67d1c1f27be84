//! Synthetic surface samplers for the desk-scale 5-class shape suite.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use super::{normalize, PointCloud};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Torus radii (centre-line and tube).
pub const TORUS_MAJOR: f64 = 0.7;
pub const TORUS_MINOR: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Cube,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown shape kind '{s}'")))
    }
}

fn sample_one(kind: ShapeKind, rng: &mut SeededRng) -> [f64; 3] {
    match kind {
        ShapeKind::Sphere => loop {
            let v = [rng.normal(), rng.normal(), rng.normal()];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-12 {
                break [v[0] / n, v[1] / n, v[2] / n];
            }
        },
        // Half-extent 1; all faces have equal area.
        ShapeKind::Cube => {
            let face = rng.below(6);
            let axis = face / 2;
            let sign = if face.is_multiple_of(2) { 1.0 } else { -1.0 };
            let mut p = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0), 0.0];
            p.swap(axis, 2);
            p[axis] = sign;
            p
        }
        // Radius 1, z in [-1, 1]: lateral area 4π, caps π each.
        ShapeKind::Cylinder => {
            let u = rng.uniform() * 6.0;
            let theta = rng.uniform() * TAU;
            if u < 4.0 {
                [theta.cos(), theta.sin(), rng.uniform_range(-1.0, 1.0)]
            } else {
                let r = rng.uniform().sqrt();
                let z = if u < 5.0 { 1.0 } else { -1.0 };
                [r * theta.cos(), r * theta.sin(), z]
            }
        }
        // Apex at z = 1, unit-radius base at z = -1: lateral area π√5, base π.
        ShapeKind::Cone => {
            let lateral = PI * 5f64.sqrt();
            let u = rng.uniform() * (lateral + PI);
            let theta = rng.uniform() * TAU;
            if u < lateral {
                let t = rng.uniform().sqrt();
                [t * theta.cos(), t * theta.sin(), 1.0 - 2.0 * t]
            } else {
                let r = rng.uniform().sqrt();
                [r * theta.cos(), r * theta.sin(), -1.0]
            }
        }
        // Area element ∝ (R + r cos θ); rejection on the tube angle.
        ShapeKind::Torus => loop {
            let tube = rng.uniform() * TAU;
            let around = rng.uniform() * TAU;
            let accept = (TORUS_MAJOR + TORUS_MINOR * tube.cos()) / (TORUS_MAJOR + TORUS_MINOR);
            if rng.uniform() < accept {
                let ring = TORUS_MAJOR + TORUS_MINOR * tube.cos();
                break [ring * around.cos(), ring * around.sin(), TORUS_MINOR * tube.sin()];
            }
        },
    }
}

/// Area-uniform samples on the un-normalized reference surface.
pub fn sample_shape_raw(kind: ShapeKind, n: usize, rng: &mut SeededRng) -> Vec<[f64; 3]> {
    (0..n).map(|_| sample_one(kind, rng)).collect()
}

/// `n` area-uniform surface points with Gaussian jitter, normalized.
pub fn generate_shape(kind: ShapeKind, n: usize, seed: u64, jitter: f64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Empty("shape sample count"));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::invalid(format!("jitter must be finite and >= 0, got {jitter}")));
    }
    let mut rng = SeededRng::new(seed);
    let raw = sample_shape_raw(kind, n, &mut rng);
    let mut data = Vec::with_capacity(n * 3);
    for p in raw {
        for v in p {
            data.push(if jitter > 0.0 { v + jitter * rng.normal() } else { v });
        }
    }
    let cloud = PointCloud::new(Matrix::from_vec(n, 3, data)?, None, kind.name())?;
    Ok(normalize(&cloud))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_kinds() {
        for k in ShapeKind::ALL {
            assert_eq!(k.name().parse::<ShapeKind>().unwrap(), k);
        }
        assert!("pyramid".parse::<ShapeKind>().is_err());
    }

    #[test]
    fn sphere_points_on_unit_sphere() {
        let mut rng = SeededRng::new(1);
        for p in sample_shape_raw(ShapeKind::Sphere, 1000, &mut rng) {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cube_points_on_faces() {
        let mut rng = SeededRng::new(2);
        for p in sample_shape_raw(ShapeKind::Cube, 1000, &mut rng) {
            assert!(p.iter().any(|v| (v.abs() - 1.0).abs() < 1e-9));
            assert!(p.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn cylinder_cone_torus_on_surface() {
        let mut rng = SeededRng::new(3);
        for p in sample_shape_raw(ShapeKind::Cylinder, 500, &mut rng) {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 1.0).abs() < 1e-9 || (p[2].abs() - 1.0).abs() < 1e-12);
        }
        for p in sample_shape_raw(ShapeKind::Cone, 500, &mut rng) {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - (1.0 - p[2]) / 2.0).abs() < 1e-9 || (p[2] + 1.0).abs() < 1e-12);
        }
        for p in sample_shape_raw(ShapeKind::Torus, 500, &mut rng) {
            let ring = (p[0] * p[0] + p[1] * p[1]).sqrt() - TORUS_MAJOR;
            assert!(((ring * ring + p[2] * p[2]).sqrt() - TORUS_MINOR).abs() < 1e-9);
        }
    }

    #[test]
    fn sphere_octants_balanced() {
        // Multinomial with p = 1/8: each octant count has sd sqrt(n p (1-p)).
        let n = 10_000;
        let mut rng = SeededRng::new(4);
        let mut counts = [0usize; 8];
        for p in sample_shape_raw(ShapeKind::Sphere, n, &mut rng) {
            let o = (p[0] > 0.0) as usize | ((p[1] > 0.0) as usize) << 1 | ((p[2] > 0.0) as usize) << 2;
            counts[o] += 1;
        }
        let expected = n as f64 / 8.0;
        let sd = (n as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 5.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn cylinder_lateral_fraction_matches_area() {
        // Lateral share is 4π / 6π = 2/3.
        let n = 30_000;
        let mut rng = SeededRng::new(5);
        let lateral = sample_shape_raw(ShapeKind::Cylinder, n, &mut rng)
            .iter()
            .filter(|p| (p[2].abs() - 1.0).abs() > 1e-12)
            .count();
        let p = 2.0 / 3.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((lateral as f64 - n as f64 * p).abs() < 5.0 * sd);
    }

    #[test]
    fn generated_cloud_is_normalized_and_seeded() {
        let a = generate_shape(ShapeKind::Torus, 256, 9, 0.01).unwrap();
        let b = generate_shape(ShapeKind::Torus, 256, 9, 0.01).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 256);
        assert!(a.centroid().iter().all(|c| c.abs() < 1e-9));
        assert!(a.max_norm() <= 1.0 + 1e-9);
        assert!(generate_shape(ShapeKind::Cube, 0, 1, 0.0).is_err());
        assert!(generate_shape(ShapeKind::Cube, 4, 1, -1.0).is_err());
    }
}
