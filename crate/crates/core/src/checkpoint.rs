//! Binary encoder checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset 0   b"GSIK"
//! offset 4   u32 format version (1)
//! offset 8   u32 vocab_size
//! offset 12  u32 dim
//! offset 16  f64 × vocab_size·dim   token embeddings (row-major)
//!            f64 × dim·dim          hidden weight (row-major)
//!            f64 × dim              hidden bias
//!            f64                    dropout_p
//! ```

use std::fs;
use std::path::Path;

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GSIK";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn to_bytes(params: &EncoderParams<f64>) -> Result<Vec<u8>> {
    params.validate()?;
    let as_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::BadCheckpoint(format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (params.parameter_count() + 1));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&as_u32(params.vocab_size, "vocab_size")?.to_le_bytes());
    out.extend_from_slice(&as_u32(params.dim, "dim")?.to_le_bytes());
    for v in params.parameters() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&params.dropout_p.to_le_bytes());
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<EncoderParams<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::BadCheckpoint(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadCheckpoint("bad magic".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(Error::BadCheckpoint(format!("unsupported version {version}")));
    }
    let vocab_size = word(8) as usize;
    let dim = word(12) as usize;
    let n_emb = vocab_size * dim;
    let n_w = dim * dim;
    let expected = HEADER_LEN + 8 * (n_emb + n_w + dim + 1);
    if bytes.len() != expected {
        return Err(Error::BadCheckpoint(format!(
            "expected {expected} bytes for vocab {vocab_size} × dim {dim}, found {}",
            bytes.len()
        )));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };
    let token_embeddings = take(n_emb);
    let hidden_weight = take(n_w);
    let hidden_bias = take(dim);
    let dropout_p = take(1)[0];
    let params = EncoderParams {
        vocab_size,
        dim,
        token_embeddings,
        hidden_weight,
        hidden_bias,
        dropout_p,
    };
    params
        .validate()
        .map_err(|e| Error::BadCheckpoint(e.to_string()))?;
    Ok(params)
}

pub fn write_checkpoint(params: &EncoderParams<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, to_bytes(params)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<EncoderParams<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
