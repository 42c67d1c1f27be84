//! CSV artifacts for external plotting and embedding tools. Floats are
//! written with 17 significant digits so they re-import exactly.

use std::path::{Path, PathBuf};

use super::activity_report;
use crate::data::DatasetSplit;
use crate::encoder::{global_features, EncoderModel};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))
}

fn write_row<I, S>(w: &mut csv::Writer<std::fs::File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| Error::io(path, e.into()))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a matrix with a `row,c0,c1,…` header.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Matrix<f64>, col_prefix: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let mut header = vec!["row".to_string()];
    header.extend((0..m.cols()).map(|j| format!("{col_prefix}{j}")));
    write_row(&mut w, path, &header)?;
    for r in 0..m.rows() {
        let mut row = vec![r.to_string()];
        row.extend(m.row(r).iter().map(|&v| fmt(v)));
        write_row(&mut w, path, &row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix<f64>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let cols = r.headers().map_err(|e| Error::io(path, e.into()))?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::io(path, e.into()))?;
        if rec.len() != cols + 1 {
            return Err(Error::parse(i + 2, format!("expected {} fields", cols + 1)));
        }
        for f in rec.iter().skip(1) {
            data.push(f.parse::<f64>().map_err(|_| Error::parse(i + 2, format!("bad number '{f}'")))?);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

/// Writes, under `out_dir`:
/// - `last_layer_weights.csv`: the last encoder layer, one row per input
///   coordinate and one column per neuron;
/// - `features.csv`: `source_id,label,f0..` global feature per cloud;
/// - `per_class_activity.csv`: fraction of each class's clouds in which a
///   neuron wins at least once;
/// - `per_class_activity_share.csv`: each neuron's share of the class's
///   points;
/// - `activity_histogram.csv`: `neuron,wins,activity` over all points.
pub fn export_artifacts<T: Scalar>(
    encoder: &EncoderModel<T>,
    dataset: &DatasetSplit,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let last = encoder.layers().last().expect("encoder has layers").weights().cast::<f64>();
    let p = dir.join("last_layer_weights.csv");
    write_matrix_csv(&p, &last, "n")?;
    files.push(p);

    let p = dir.join("features.csv");
    let mut w = writer(&p)?;
    let mut header = vec!["source_id".to_string(), "label".to_string()];
    header.extend((0..encoder.output_dim()).map(|j| format!("f{j}")));
    write_row(&mut w, &p, &header)?;
    for (cloud, f) in dataset.clouds.iter().zip(global_features(encoder, &dataset.clouds)?) {
        let mut row = vec![cloud.source_id.clone(), cloud.label.map_or(String::new(), |l| l.to_string())];
        row.extend(f.values.iter().map(|v| fmt(v.to_f64_lossy())));
        write_row(&mut w, &p, &row)?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    files.push(p);

    let report = activity_report(encoder, dataset)?;
    for (name, m) in [
        ("per_class_activity.csv", &report.per_class),
        ("per_class_activity_share.csv", &report.per_class_share),
    ] {
        let p = dir.join(name);
        write_matrix_csv(&p, m, "n")?;
        files.push(p);
    }

    let p = dir.join("activity_histogram.csv");
    let mut w = writer(&p)?;
    write_row(&mut w, &p, ["neuron", "wins", "activity"])?;
    for (j, (a, wins)) in report.activity.iter().zip(&report.wins).enumerate() {
        write_row(&mut w, &p, [j.to_string(), wins.to_string(), fmt(*a)])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    files.push(p);
    Ok(files)
}
