//! Point-cloud construction, ingestion and persistence.

mod cloud;
mod mesh;
mod mnist;
mod shapes;
mod store;

pub use cloud::{normalize, PointCloud};
pub use mesh::{parse_off, sample_surface, sample_surface_indexed, serialize_off, TriMesh};
pub use mnist::{
    encode_idx_images, encode_idx_labels, mnist_to_points, parse_idx_images, parse_idx_labels, read_idx_images,
    read_idx_labels, IdxImages, STROKE_THRESHOLD,
};
pub use shapes::{generate_shape, sample_shape_raw, ShapeKind};
pub use store::{load_modelnet, read_dataset, write_dataset, ManifestEntry};

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, SeededRng};

/// Default points per 3-D cloud.
pub const DEFAULT_POINTS: usize = 1024;
/// Default cap on points per point-MNIST cloud.
pub const DEFAULT_MNIST_POINTS: usize = 256;
/// Default jitter for synthetic shapes.
pub const DEFAULT_JITTER: f64 = 0.01;

/// Labeled clouds plus the class vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub clouds: Vec<PointCloud>,
    pub class_names: Vec<String>,
    /// Share of the original labeled samples retained per class.
    pub fraction: f64,
}

impl DatasetSplit {
    pub fn new(clouds: Vec<PointCloud>, class_names: Vec<String>) -> Result<Self> {
        let split = Self {
            clouds,
            class_names,
            fraction: 1.0,
        };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.clouds {
            match c.label {
                Some(l) if l < self.class_names.len() => {}
                Some(l) => {
                    return Err(Error::IndexOutOfRange {
                        index: l,
                        len: self.class_names.len(),
                    })
                }
                None => return Err(Error::invalid(format!("cloud '{}' has no label", c.source_id))),
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.clouds.iter().map(|c| c.label.unwrap_or(0)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for c in &self.clouds {
            if let Some(l) = c.label {
                counts[l] += 1;
            }
        }
        counts
    }
}

fn class_members(labels: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
}

/// Sorted indices of `targets[c]` seeded draws from each class `c`.
fn pick_per_class(members: &[Vec<usize>], targets: &[usize], seed: u64) -> Vec<usize> {
    let root = SeededRng::new(seed);
    let mut keep = Vec::new();
    for (class, (m, &t)) in members.iter().zip(targets).enumerate() {
        let mut rng = root.derive_index(class as u64);
        keep.extend(rng.sample_indices(m.len(), t.min(m.len())).into_iter().map(|i| m[i]));
    }
    keep.sort_unstable();
    keep
}

fn select(split: &DatasetSplit, keep: &[usize], fraction: f64) -> DatasetSplit {
    DatasetSplit {
        clouds: keep.iter().map(|&i| split.clouds[i].clone()).collect(),
        class_names: split.class_names.clone(),
        fraction,
    }
}

/// Keeps `⌈fraction · count⌉` samples of every class, chosen by a seeded
/// draw per class; retained clouds keep their original order.
pub fn stratified_subset(split: &DatasetSplit, fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    split.validate()?;
    let members = class_members(&split.labels(), split.num_classes());
    // Guard against products like 0.3 * 10 = 3.0000000000000004.
    let targets: Vec<usize> = members
        .iter()
        .map(|m| ((fraction * m.len() as f64) - 1e-9).ceil().max(0.0) as usize)
        .collect();
    let keep = pick_per_class(&members, &targets, seed);
    Ok(select(split, &keep, split.fraction * fraction))
}

/// Sorted indices of exactly `n` samples with per-class counts
/// proportional to the class sizes (largest remainder, ties to the lower
/// class id), so each count is within 1 of its exact share.
pub fn stratified_sample_indices(labels: &[usize], classes: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 || n > labels.len() {
        return Err(Error::invalid(format!("sample size must be in 1..={}, got {n}", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::IndexOutOfRange { index: l, len: classes });
    }
    let members = class_members(labels, classes);
    let total = labels.len();
    let mut targets: Vec<usize> = members.iter().map(|m| m.len() * n / total).collect();
    let mut rest: Vec<(usize, usize)> = members.iter().enumerate().map(|(c, m)| (m.len() * n % total, c)).collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - targets.iter().sum::<usize>();
    for &(_, c) in rest.iter().take(short) {
        targets[c] += 1;
    }
    Ok(pick_per_class(&members, &targets, seed))
}

/// [`stratified_sample_indices`] applied to a split.
pub fn stratified_sample(split: &DatasetSplit, n: usize, seed: u64) -> Result<DatasetSplit> {
    split.validate()?;
    let keep = stratified_sample_indices(&split.labels(), split.num_classes(), n, seed)?;
    Ok(select(split, &keep, split.fraction * n as f64 / split.len() as f64))
}

/// The canonical 5-class synthetic suite: `per_class` clouds of each shape.
/// Each cloud's seed is derived from `seed` and its source id
/// (`"{split}/{shape}/{index}"`), so generation order does not matter.
pub fn synthetic_dataset(per_class: usize, points: usize, seed: u64, jitter: f64, split: &str) -> Result<DatasetSplit> {
    let mut clouds = Vec::with_capacity(per_class * ShapeKind::ALL.len());
    for (label, kind) in ShapeKind::ALL.into_iter().enumerate() {
        for i in 0..per_class {
            let id = format!("{split}/{kind}/{i}");
            let mut c = generate_shape(kind, points, derive_seed(seed, &id), jitter)?;
            c.label = Some(label);
            c.source_id = id;
            clouds.push(c);
        }
    }
    DatasetSplit::new(clouds, ShapeKind::ALL.iter().map(|k| k.name().to_string()).collect())
}

/// Converts labeled MNIST images to point clouds (digit classes "0".."9").
pub fn point_mnist_dataset(
    images: &IdxImages,
    labels: &[u8],
    max_points: usize,
    seed: u64,
    split: &str,
) -> Result<DatasetSplit> {
    if images.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: images.len(),
            got: labels.len(),
        });
    }
    let mut clouds = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        if label > 9 {
            return Err(Error::invalid(format!("digit label {label} at index {i}")));
        }
        let id = format!("{split}/{label}/{i}");
        let mut rng = SeededRng::new(derive_seed(seed, &id));
        let mut c = mnist_to_points(images.image(i), max_points, &mut rng)?;
        c.label = Some(label as usize);
        c.source_id = id;
        clouds.push(c);
    }
    DatasetSplit::new(clouds, (0..10).map(|d| d.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_split(per_class: usize, classes: usize) -> DatasetSplit {
        let mut clouds = Vec::new();
        for l in 0..classes {
            for i in 0..per_class {
                let c = PointCloud::from_points(&[vec![i as f64, l as f64]], Some(l), format!("{l}/{i}")).unwrap();
                clouds.push(c);
            }
        }
        DatasetSplit::new(clouds, (0..classes).map(|c| format!("c{c}")).collect()).unwrap()
    }

    #[test]
    fn full_fraction_is_identity() {
        let s = toy_split(7, 3);
        assert_eq!(stratified_subset(&s, 1.0, 4).unwrap(), s);
    }

    #[test]
    fn ceiling_rule() {
        let s = toy_split(10, 4);
        let sub = stratified_subset(&s, 0.25, 1).unwrap();
        assert_eq!(sub.class_counts(), vec![3, 3, 3, 3]);
        assert!((sub.fraction - 0.25).abs() < 1e-15);
        let tenth = stratified_subset(&s, 0.1, 1).unwrap();
        assert_eq!(tenth.class_counts(), vec![1, 1, 1, 1]);
        let third = stratified_subset(&s, 0.3, 1).unwrap();
        assert_eq!(third.class_counts(), vec![3, 3, 3, 3]);
    }

    #[test]
    fn seeds_change_members_not_counts() {
        let s = toy_split(20, 3);
        let a = stratified_subset(&s, 0.5, 1).unwrap();
        let b = stratified_subset(&s, 0.5, 2).unwrap();
        assert_eq!(a.class_counts(), b.class_counts());
        assert_ne!(a, b);
        assert_eq!(a, stratified_subset(&s, 0.5, 1).unwrap());
    }

    #[test]
    fn invalid_fraction_rejected() {
        let s = toy_split(2, 2);
        assert!(stratified_subset(&s, 0.0, 1).is_err());
        assert!(stratified_subset(&s, -0.5, 1).is_err());
    }

    #[test]
    fn sample_counts_within_one_of_share() {
        let mut clouds = toy_split(9, 3).clouds;
        clouds.truncate(9 + 9 + 4);
        let s = DatasetSplit::new(clouds, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        for n in 1..=s.len() {
            let sub = stratified_sample(&s, n, 3).unwrap();
            assert_eq!(sub.len(), n);
            for (c, &k) in sub.class_counts().iter().enumerate() {
                let share = n as f64 * s.class_counts()[c] as f64 / s.len() as f64;
                assert!((k as f64 - share).abs() < 1.0, "n={n} class {c}: {k} vs {share}");
            }
        }
        assert_eq!(stratified_sample(&s, s.len(), 1).unwrap().clouds, s.clouds);
        assert!(stratified_sample(&s, 0, 1).is_err());
        assert!(stratified_sample(&s, s.len() + 1, 1).is_err());
        assert!(stratified_subset(&s, 1.5, 1).is_err());
    }

    #[test]
    fn labels_must_be_in_range() {
        let c = PointCloud::from_points(&[vec![0.0, 0.0]], Some(5), "x").unwrap();
        assert!(DatasetSplit::new(vec![c], vec!["a".into()]).is_err());
    }

    #[test]
    fn synthetic_suite_shape() {
        let s = synthetic_dataset(3, 32, 7, 0.01, "train").unwrap();
        assert_eq!(s.len(), 15);
        assert_eq!(s.class_counts(), vec![3; 5]);
        assert_eq!(s.class_names[4], "torus");
        assert_eq!(s.clouds[3].source_id, "train/cube/0");
        assert_eq!(s, synthetic_dataset(3, 32, 7, 0.01, "train").unwrap());
    }
}
