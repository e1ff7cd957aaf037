//! Binary containers for specifications and feature matrices.
//!
//! All integers and floats are little-endian. Embedding payloads are written
//! as `f32` rows, so a decode of an encode reproduces every bit.
//!
//! Specification container, version 1:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PMIS"
//! 4       2     format version (u16)
//! 6       1     flags: bit 0 = L2-normalized, bit 1 = developer-provided prompts
//! 7       1     reserved, zero
//! 8       4     embedding dim (u32)
//! 12      4     image embedding count (u32)
//! 16      4     prompt embedding count (u32)
//! 20      2     model id length in bytes (u16)
//! 22      n     model id, UTF-8
//! ...           image embeddings, row-major f32
//! ...           prompt embeddings, row-major f32
//! ```
//!
//! Feature matrix container, version 1:
//!
//! ```text
//! 0   4  magic "PMIM"
//! 4   2  format version (u16)
//! 6   2  reserved, zero
//! 8   4  rows (u32)
//! 12  4  cols (u32)
//! 16  .. row-major f32
//! ```

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Embedding, PromptOrigin, Specification};

pub const SPEC_MAGIC: &[u8; 4] = b"PMIS";
pub const MATRIX_MAGIC: &[u8; 4] = b"PMIM";
pub const FORMAT_VERSION: u16 = 1;

const FLAG_NORMALIZED: u8 = 1;
const FLAG_DEVELOPER: u8 = 2;

/// Cursor over a byte slice that reports truncation as `MalformedPayload`.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::MalformedPayload(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(Error::MalformedPayload(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub(crate) fn version(&mut self) -> Result<u16> {
        let v = self.u16()?;
        if v == 0 || v > FORMAT_VERSION {
            return Err(Error::VersionUnsupported {
                found: v,
                supported: FORMAT_VERSION,
            });
        }
        Ok(v)
    }

    fn f32_rows(&mut self, rows: usize, cols: usize) -> Result<Vec<Vec<f32>>> {
        let bytes = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::MalformedPayload("size overflow".into()))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(cols * 4)
            .map(|row| {
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect()
            })
            .collect())
    }
}

fn write_rows(out: &mut Vec<u8>, rows: &[Embedding]) {
    for e in rows {
        for v in e.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidInput(format!("{what} too large: {n}")))
}

pub fn encode_specification(spec: &Specification) -> Result<Vec<u8>> {
    let dim = spec.dim();
    let id = spec.model_id.as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| Error::InvalidInput("model id longer than 65535 bytes".into()))?;
    let mut out = Vec::with_capacity(22 + id.len() + 8 * spec.len() * dim);
    out.extend_from_slice(SPEC_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let mut flags = 0u8;
    if spec.normalized {
        flags |= FLAG_NORMALIZED;
    }
    if spec.prompt_origin == PromptOrigin::DeveloperProvided {
        flags |= FLAG_DEVELOPER;
    }
    out.push(flags);
    out.push(0);
    out.extend_from_slice(&to_u32(dim, "dim")?.to_le_bytes());
    out.extend_from_slice(&to_u32(spec.image_embeddings.len(), "image count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(spec.prompt_embeddings.len(), "prompt count")?.to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    write_rows(&mut out, &spec.image_embeddings);
    write_rows(&mut out, &spec.prompt_embeddings);
    Ok(out)
}

pub(crate) fn read_specification(r: &mut Reader<'_>) -> Result<Specification> {
    r.magic(SPEC_MAGIC)?;
    r.version()?;
    let flags = r.u8()?;
    let _reserved = r.u8()?;
    if flags & !(FLAG_NORMALIZED | FLAG_DEVELOPER) != 0 {
        return Err(Error::MalformedPayload(format!("unknown flags {flags:#04x}")));
    }
    let dim = r.u32()? as usize;
    let n_images = r.u32()? as usize;
    let n_prompts = r.u32()? as usize;
    let id_len = r.u16()? as usize;
    let model_id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|_| Error::MalformedPayload("model id is not UTF-8".into()))?
        .to_owned();
    if dim == 0 {
        return Err(Error::MalformedPayload("zero dimension".into()));
    }
    let to_embeddings = |rows: Vec<Vec<f32>>| {
        rows.into_iter()
            .map(Embedding::new)
            .collect::<Result<Vec<_>>>()
    };
    let image_embeddings = to_embeddings(r.f32_rows(n_images, dim)?)?;
    let prompt_embeddings = to_embeddings(r.f32_rows(n_prompts, dim)?)?;
    let spec = Specification {
        model_id,
        image_embeddings,
        prompt_embeddings,
        prompt_origin: if flags & FLAG_DEVELOPER != 0 {
            PromptOrigin::DeveloperProvided
        } else {
            PromptOrigin::Default
        },
        normalized: flags & FLAG_NORMALIZED != 0,
    };
    crate::types::validate_specification(&spec)
        .map_err(|e| Error::MalformedPayload(format!("invalid specification: {e}")))?;
    Ok(spec)
}

pub fn decode_specification(bytes: &[u8]) -> Result<Specification> {
    let mut r = Reader::new(bytes);
    let spec = read_specification(&mut r)?;
    if r.remaining() != 0 {
        return Err(Error::MalformedPayload(format!("{} trailing bytes", r.remaining())));
    }
    Ok(spec)
}

/// Dense row-major `f32` matrix, e.g. feature vectors for FID.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::MismatchedLengths {
                what: "matrix data",
                left: rows * cols,
                right: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("feature matrix"));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        FeatureMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn from_embeddings(rows: &[Embedding]) -> Result<Self> {
        let v: Vec<Vec<f32>> = rows.iter().map(|e| e.values().to_vec()).collect();
        FeatureMatrix::from_rows(&v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_embeddings(&self) -> Result<Vec<Embedding>> {
        (0..self.rows).map(|i| Embedding::new(self.row(i).to_vec())).collect()
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j] as f64)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MATRIX_MAGIC)?;
        r.version()?;
        let _reserved = r.u16()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let data = r.f32_rows(rows, cols)?.concat();
        if r.remaining() != 0 {
            return Err(Error::MalformedPayload(format!("{} trailing bytes", r.remaining())));
        }
        FeatureMatrix::new(rows, cols, data)
    }

    /// Parses comma-separated rows. A first line that does not parse as
    /// numbers is treated as a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::MalformedPayload(format!("csv: {e}")))?;
            let parsed: std::result::Result<Vec<f32>, _> = rec.iter().map(str::parse::<f32>).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if i == 0 => continue,
                Err(e) => return Err(Error::MalformedPayload(format!("csv row {i}: {e}"))),
            }
        }
        FeatureMatrix::from_rows(&rows)
    }

    /// Loads either container (by magic) or CSV.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MATRIX_MAGIC) {
            FeatureMatrix::decode(&bytes)
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::MalformedPayload("neither a matrix container nor UTF-8 CSV".into()))?;
            FeatureMatrix::from_csv(&text)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }
}

/// Writes via a temporary sibling file and rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
