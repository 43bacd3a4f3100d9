//! Embedding files.
//!
//! Binary layout (all little endian): `b"SEMD"`, `u16` version (1), `u16`
//! reserved (0), `u32` dim, `u32` count, then `count × dim` `f32` values in
//! row-major order. CSV: one vector per line, comma separated, no header.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{budget, EmbeddingSet, Error, Result};

pub const MAGIC: &[u8; 4] = b"SEMD";
pub const VERSION: u16 = 1;
const HEADER_LEN: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` (any case) selects CSV, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

pub fn load_embeddings(path: &Path, format: Format) -> Result<EmbeddingSet> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    match format {
        Format::Binary => decode_binary(&bytes),
        Format::Csv => decode_csv(&bytes),
    }
}

pub fn save_embeddings(path: &Path, set: &EmbeddingSet, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Binary => encode_binary(set)?,
        Format::Csv => encode_csv(set),
    };
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&bytes).map_err(|e| io_err(path, e))
}

pub fn encode_binary(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let dim = u32::try_from(set.dim()).map_err(|_| Error::domain("dimension exceeds u32"))?;
    let count = u32::try_from(set.count()).map_err(|_| Error::domain("row count exceeds u32"))?;
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * set.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for x in set.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingSet> {
    if (bytes.len() as u64) < HEADER_LEN {
        return Err(Error::Malformed(format!(
            "header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Malformed("bad magic, expected \"SEMD\"".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::Malformed(format!("unsupported version {version}")));
    }
    let dim = u32_at(8) as usize;
    let count = u32_at(12) as usize;
    if dim < 2 {
        return Err(Error::Malformed(format!("header dimension {dim} is below 2")));
    }
    budget::check(count, dim)?;
    let expected = HEADER_LEN + 4 * (dim as u64) * (count as u64);
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after {expected}-byte payload",
            actual - expected
        )));
    }
    let data = bytes[HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingSet::new(dim, data)
}

pub fn encode_csv(set: &EmbeddingSet) -> Vec<u8> {
    let mut s = String::new();
    for r in set.rows() {
        let line: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

pub fn decode_csv(bytes: &[u8]) -> Result<EmbeddingSet> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Malformed(format!("not UTF-8: {e}")))?;
    let mut data = Vec::new();
    let mut dim = None;
    let mut row = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let start = data.len();
        for field in line.split(',') {
            let v: f32 = field.trim().parse().map_err(|_| {
                Error::Malformed(format!("line {}: cannot parse {:?} as a float", lineno + 1, field.trim()))
            })?;
            data.push(v);
        }
        let found = data.len() - start;
        match dim {
            None => dim = Some(found),
            Some(expected) if expected != found => {
                return Err(Error::DimensionMismatch { row, expected, found })
            }
            _ => {}
        }
        row += 1;
    }
    let dim = dim.ok_or(Error::Empty("CSV file has no rows"))?;
    EmbeddingSet::new(dim, data)
}
