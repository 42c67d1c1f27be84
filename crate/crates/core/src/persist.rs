//! Model file format. Little-endian throughout:
//!
//! ```text
//! "NEAW" u32 version u32 layers
//! per layer: u32 d_in u32 d_out f64[d_in*d_out] (row-major, column j = neuron j)
//! sections:  [u8;4] tag u64 payload_len payload
//! "END "
//! ```
//!
//! The only section defined so far is `"CLSF"`: four u32 widths, a u32
//! norm-order code and the flat f64 parameter vector. Unknown sections are
//! skipped. Weights are always stored as f64, whatever the in-memory scalar.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, NormOrder};
use crate::encoder::{EncoderModel, WtaLayer};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

pub const MAGIC: &[u8; 4] = b"NEAW";
pub const VERSION: u32 = 1;
const TAG_CLASSIFIER: &[u8; 4] = b"CLSF";
const TAG_END: &[u8; 4] = b"END ";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile<T> {
    pub encoder: EncoderModel<T>,
    pub classifier: Option<ClassifierModel<T>>,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn eof(e: std::io::Error) -> Error {
    fmt_err(format!("truncated model file: {e}"))
}

/// Header plus layer weights; this is the byte range guarded by hashing
/// while the classifier trains.
pub fn encoder_bytes<T: Scalar>(encoder: &EncoderModel<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * encoder.num_params() + 8 * encoder.layers().len());
    out.extend_from_slice(MAGIC);
    out.write_u32::<LE>(VERSION).unwrap();
    out.write_u32::<LE>(encoder.layers().len() as u32).unwrap();
    for layer in encoder.layers() {
        out.write_u32::<LE>(layer.d_in() as u32).unwrap();
        out.write_u32::<LE>(layer.d_out() as u32).unwrap();
        for &w in layer.weights().as_slice() {
            out.write_f64::<LE>(w.to_f64_lossy()).unwrap();
        }
    }
    out
}

fn classifier_payload<T: Scalar>(c: &ClassifierModel<T>) -> Vec<u8> {
    let mut p = Vec::with_capacity(20 + 8 * c.num_params());
    for d in c.dims() {
        p.write_u32::<LE>(d as u32).unwrap();
    }
    p.write_u32::<LE>(c.order().code()).unwrap();
    for &v in c.params() {
        p.write_f64::<LE>(v.to_f64_lossy()).unwrap();
    }
    p
}

impl<T: Scalar> ModelFile<T> {
    pub fn new(encoder: EncoderModel<T>) -> Self {
        Self {
            encoder,
            classifier: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = encoder_bytes(&self.encoder);
        if let Some(c) = &self.classifier {
            let payload = classifier_payload(c);
            out.extend_from_slice(TAG_CLASSIFIER);
            out.write_u64::<LE>(payload.len() as u64).unwrap();
            out.extend_from_slice(&payload);
        }
        out.extend_from_slice(TAG_END);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (encoder, rest) = parse_encoder(bytes)?;
        let mut cur = Cursor::new(rest);
        let mut classifier = None;
        loop {
            let mut tag = [0u8; 4];
            cur.read_exact(&mut tag).map_err(|_| fmt_err("missing END tag"))?;
            if &tag == TAG_END {
                break;
            }
            let len = cur.read_u64::<LE>().map_err(eof)? as usize;
            let start = cur.position() as usize;
            let payload = rest
                .get(start..start.checked_add(len).ok_or_else(|| fmt_err("section length overflows"))?)
                .ok_or_else(|| fmt_err(format!("section {:?} runs past the end", String::from_utf8_lossy(&tag))))?;
            if &tag == TAG_CLASSIFIER {
                classifier = Some(parse_classifier(payload)?);
            }
            cur.set_position((start + len) as u64);
        }
        if (cur.position() as usize) != rest.len() {
            return Err(fmt_err("trailing bytes after END tag"));
        }
        Ok(Self { encoder, classifier })
    }

    /// Writes through a temporary file and a rename so readers never see a
    /// partial model.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_f64s<T: Scalar>(cur: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<T>> {
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if n.checked_mul(8).is_none_or(|b| b > remaining) {
        return Err(fmt_err(format!("expected {n} weights, file too short")));
    }
    (0..n).map(|_| Ok(T::from_f64_lossy(cur.read_f64::<LE>().map_err(eof)?))).collect()
}

/// Parses the header and layers; returns the encoder and the bytes after it.
pub fn parse_encoder<T: Scalar>(bytes: &[u8]) -> Result<(EncoderModel<T>, &[u8])> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(eof)?;
    if &magic != MAGIC {
        return Err(fmt_err("not a NEAW model file (bad magic)"));
    }
    let version = cur.read_u32::<LE>().map_err(eof)?;
    if version != VERSION {
        return Err(fmt_err(format!("unsupported model version {version}")));
    }
    let n = cur.read_u32::<LE>().map_err(eof)? as usize;
    if n == 0 {
        return Err(fmt_err("model has no layers"));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let d_in = cur.read_u32::<LE>().map_err(eof)? as usize;
        let d_out = cur.read_u32::<LE>().map_err(eof)? as usize;
        let w = read_f64s(&mut cur, d_in * d_out)?;
        layers.push(WtaLayer::new(Matrix::from_vec(d_in, d_out, w)?)?);
    }
    let end = cur.position() as usize;
    Ok((EncoderModel::new(layers)?, &bytes[end..]))
}

fn parse_classifier<T: Scalar>(payload: &[u8]) -> Result<ClassifierModel<T>> {
    let mut cur = Cursor::new(payload);
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = cur.read_u32::<LE>().map_err(eof)? as usize;
    }
    let order = NormOrder::from_code(cur.read_u32::<LE>().map_err(eof)?)?;
    let n = (payload.len() - 20) / 8;
    if !(payload.len() - 20).is_multiple_of(8) {
        return Err(fmt_err("classifier section is not a whole number of f64s"));
    }
    let params = read_f64s(&mut cur, n)?;
    ClassifierModel::from_params(dims, order, params)
}

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// JSON sidecar stored next to a model file (`<model>.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelMeta {
    pub dims: Vec<usize>,
    pub rule: String,
    pub eta: f64,
    pub a: f64,
    pub b: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Epoch at which training diverged; the stored weights are from the
    /// end of the epoch before it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diverged_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub dims: [usize; 4],
    pub norm_order: String,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

pub fn sidecar_path(model: &Path) -> std::path::PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

impl ModelMeta {
    pub fn save(&self, model_path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("meta serializes");
        write_atomic(&sidecar_path(model_path), &json)
    }

    pub fn load(model_path: &Path) -> Result<Self> {
        let p = sidecar_path(model_path);
        let text = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_slice(&text).map_err(|e| fmt_err(format!("{}: {e}", p.display())))
    }
}
