//! On-disk dataset layout: one CSV per cloud plus a JSON-lines manifest.
//!
//! ```text
//! <dir>/manifest.jsonl          {"path","label","class_name","split","source_id"} per line
//! <dir>/clouds/<split>/<n>.csv  header x,y[,z]; one point per row
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_off, sample_surface, DatasetSplit, PointCloud};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Matrix};

pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: usize,
    pub class_name: String,
    pub split: String,
    pub source_id: String,
}

fn write_cloud_csv(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let header: &[&str] = if cloud.dim() == 2 { &["x", "y"] } else { &["x", "y", "z"] };
    w.write_record(header).map_err(|e| Error::io(path, e.into()))?;
    for p in cloud.iter() {
        w.write_record(p.iter().map(|v| format!("{v:.16e}")))
            .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_cloud_csv(path: &Path, label: usize, source_id: &str) -> Result<PointCloud> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let dim = r.headers().map_err(|e| Error::io(path, e.into()))?.len();
    let mut data = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::io(path, e.into()))?;
        if rec.len() != dim {
            return Err(Error::parse(i + 2, format!("{}: expected {dim} columns", path.display())));
        }
        for field in rec.iter() {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(i + 2, format!("{}: bad number '{field}'", path.display())))?,
            );
        }
    }
    let n = data.len() / dim.max(1);
    PointCloud::new(Matrix::from_vec(n, dim, data)?, Some(label), source_id)
}

/// Writes every split under `dir`; returns the files written (manifest last).
pub fn write_dataset(dir: impl AsRef<Path>, splits: &[(&str, &DatasetSplit)]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for (name, split) in splits {
        split.validate()?;
        let sub = dir.join("clouds").join(name);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (i, cloud) in split.clouds.iter().enumerate() {
            let rel = format!("clouds/{name}/{i:06}.csv");
            let path = dir.join(&rel);
            write_cloud_csv(&path, cloud)?;
            written.push(path);
            let label = cloud.label.unwrap_or(0);
            entries.push(ManifestEntry {
                path: rel,
                label,
                class_name: split.class_names[label].clone(),
                split: name.to_string(),
                source_id: cloud.source_id.clone(),
            });
        }
    }
    let manifest = dir.join(MANIFEST);
    let mut f = fs::File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
    for e in &entries {
        let line = serde_json::to_string(e).expect("manifest entry serializes");
        writeln!(f, "{line}").map_err(|err| Error::io(&manifest, err))?;
    }
    written.push(manifest);
    Ok(written)
}

/// Reads a dataset directory back into splits keyed by split name.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<BTreeMap<String, DatasetSplit>> {
    let dir = dir.as_ref();
    let manifest = dir.join(MANIFEST);
    let f = fs::File::open(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&manifest, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, format!("manifest: {e}")))?;
        entries.push(e);
    }
    let num_classes = entries.iter().map(|e| e.label + 1).max().unwrap_or(0);
    let mut class_names: Vec<String> = (0..num_classes).map(|i| format!("class_{i}")).collect();
    for e in &entries {
        class_names[e.label] = e.class_name.clone();
    }
    let mut out: BTreeMap<String, DatasetSplit> = BTreeMap::new();
    for e in entries {
        let cloud = read_cloud_csv(&dir.join(&e.path), e.label, &e.source_id)?;
        out.entry(e.split.clone())
            .or_insert_with(|| DatasetSplit {
                clouds: Vec::new(),
                class_names: class_names.clone(),
                fraction: 1.0,
            })
            .clouds
            .push(cloud);
    }
    Ok(out)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    v.sort();
    Ok(v)
}

/// Loads a ModelNet-style tree `<root>/<class>/{train,test}/*.off`, sampling
/// `points` surface points per mesh. Classes are sorted by directory name.
pub fn load_modelnet(root: impl AsRef<Path>, points: usize, seed: u64) -> Result<(DatasetSplit, DatasetSplit)> {
    let root = root.as_ref();
    let layout = "expected layout <root>/<class>/train/*.off and <root>/<class>/test/*.off";
    let classes: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if classes.is_empty() {
        return Err(Error::invalid(format!("no class directories in {}; {layout}", root.display())));
    }
    let class_names: Vec<String> = classes
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let mut splits = [Vec::new(), Vec::new()];
    for (label, class_dir) in classes.iter().enumerate() {
        for (slot, split) in ["train", "test"].iter().enumerate() {
            let sub = class_dir.join(split);
            if !sub.is_dir() {
                continue;
            }
            for path in sorted_entries(&sub)? {
                if path.extension().and_then(|e| e.to_str()) != Some("off") {
                    continue;
                }
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let mesh = parse_off(&bytes).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
                let id = format!(
                    "{split}/{}/{}",
                    class_names[label],
                    path.file_stem().unwrap_or_default().to_string_lossy()
                );
                let mut cloud = sample_surface(&mesh, points, derive_seed(seed, &id))?;
                cloud.label = Some(label);
                cloud.source_id = id;
                splits[slot].push(cloud);
            }
        }
    }
    if splits[0].is_empty() && splits[1].is_empty() {
        return Err(Error::invalid(format!("no .off meshes under {}; {layout}", root.display())));
    }
    let [train, test] = splits;
    Ok((
        DatasetSplit::new(train, class_names.clone())?,
        DatasetSplit::new(test, class_names)?,
    ))
}
