//! OFF mesh ingestion and area-weighted surface sampling.

use std::fmt::Write as _;

use super::{normalize, PointCloud};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn triangle(&self, f: usize) -> [[f64; 3]; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        0.5 * (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt()
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{tok}'")))
}

/// Parses an OFF mesh, including the ModelNet variant whose count line is
/// fused onto the header (`OFF8 6 12`). Polygons are fan-triangulated from
/// their first vertex; triangles that repeat a vertex index are dropped.
pub fn parse_off(bytes: &[u8]) -> Result<TriMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(0, format!("not UTF-8: {e}")))?;
    let mut lines = content_lines(text);

    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "missing OFF header"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(hline, format!("expected 'OFF' header, found '{header}'")))?;
    let (cline, counts) = if rest.trim().is_empty() {
        lines.next().ok_or_else(|| Error::parse(hline, "missing count line"))?
    } else {
        (hline, rest.trim())
    };
    let toks: Vec<&str> = counts.split_whitespace().collect();
    if toks.len() < 2 {
        return Err(Error::parse(cline, format!("malformed counts '{counts}'")));
    }
    let nv: usize = parse_num(toks[0], cline, "vertex count")?;
    let nf: usize = parse_num(toks[1], cline, "face count")?;
    if nv == 0 || nf == 0 {
        return Err(Error::parse(cline, format!("empty mesh ({nv} vertices, {nf} faces)")));
    }

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(cline, format!("expected {nv} vertices, found {}", vertices.len())))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::parse(ln, "vertex needs 3 coordinates"));
        }
        let mut v = [0.0f64; 3];
        for (slot, tok) in v.iter_mut().zip(&toks) {
            *slot = parse_num(tok, ln, "coordinate")?;
            if !slot.is_finite() {
                return Err(Error::parse(ln, "non-finite coordinate"));
            }
        }
        vertices.push(v);
    }

    let mut faces = Vec::with_capacity(nf);
    for read in 0..nf {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(cline, format!("expected {nf} faces, found {read}")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let arity: usize = parse_num(toks[0], ln, "face arity")?;
        if arity < 3 || toks.len() < arity + 1 {
            return Err(Error::parse(ln, format!("malformed face '{line}'")));
        }
        let mut idx = Vec::with_capacity(arity);
        for tok in &toks[1..=arity] {
            let i: usize = parse_num(tok, ln, "vertex index")?;
            if i >= nv {
                return Err(Error::parse(ln, format!("vertex index {i} out of range ({nv} vertices)")));
            }
            idx.push(i);
        }
        for k in 1..arity - 1 {
            let tri = [idx[0], idx[k], idx[k + 1]];
            if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                faces.push(tri);
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::parse(cline, "mesh has no valid triangles"));
    }
    Ok(TriMesh { vertices, faces })
}

pub fn serialize_off(mesh: &TriMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.vertices.len(), mesh.faces.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

/// Area-weighted surface samples (un-normalized) and the triangle each came from.
pub fn sample_surface_indexed(mesh: &TriMesh, n: usize, rng: &mut SeededRng) -> Result<(Vec<[f64; 3]>, Vec<usize>)> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.triangle_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::invalid("mesh has no triangle with nonzero area"));
    }
    let mut points = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.uniform() * total;
        // First triangle whose cumulative area exceeds the target; zero-area
        // triangles never strictly exceed their predecessor.
        let f = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(f);
        let r1 = rng.uniform().sqrt();
        let r2 = rng.uniform();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push([
            wa * a[0] + wb * b[0] + wc * c[0],
            wa * a[1] + wb * b[1] + wc * c[1],
            wa * a[2] + wb * b[2] + wc * c[2],
        ]);
        faces.push(f);
    }
    Ok((points, faces))
}

/// `n` area-weighted surface points, normalized into the unit ball.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Empty("surface sample count"));
    }
    let mut rng = SeededRng::new(seed);
    let (points, _) = sample_surface_indexed(mesh, n, &mut rng)?;
    let data = points.iter().flatten().copied().collect();
    let cloud = PointCloud::new(Matrix::from_vec(n, 3, data)?, None, "mesh")?;
    Ok(normalize(&cloud))
}
