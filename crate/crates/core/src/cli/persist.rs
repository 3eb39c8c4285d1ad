//! Binary connectome files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "NNXP"            4 bytes
//! version           u32 (= 1)
//! layer count L     u32
//! layer sizes       L x u32
//! elu alpha         f64
//! weights           for each adjacent pair, (n_l + 1) * n_{l+1} x f64,
//!                   source-major, bias row last
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::connectome::Connectome;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NNXP";
pub const VERSION: u32 = 1;

/// Exact size in bytes of the encoding of a network with these layer sizes.
pub fn encoded_len(layer_sizes: &[usize]) -> usize {
    let weights: usize = layer_sizes.windows(2).map(|p| (p[0] + 1) * p[1]).sum();
    4 + 4 + 4 + 4 * layer_sizes.len() + 8 + 8 * weights
}

pub fn encode(c: &Connectome) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(c.layer_sizes()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(c.layer_sizes().len() as u32).to_le_bytes());
    for &n in c.layer_sizes() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.elu_alpha().to_le_bytes());
    for w in c.flat_weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let (head, rest) = self.buf.split_first_chunk::<N>().ok_or(Error::UnexpectedEof)?;
        self.buf = rest;
        Ok(*head)
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Connectome> {
    let mut r = Reader { buf: bytes };
    if &r.take::<4>().map_err(|_| Error::NotConnectome)? != MAGIC {
        return Err(Error::NotConnectome);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let layers = r.u32()? as usize;
    // reject absurd headers before allocating
    if layers > r.buf.len() / 4 {
        return Err(Error::UnexpectedEof);
    }
    let layer_sizes = (0..layers)
        .map(|_| r.u32().map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    if layers < 2 || layer_sizes.contains(&0) {
        return Err(Error::Topology(format!("invalid layer sizes {layer_sizes:?}")));
    }
    let elu_alpha = r.f64()?;

    let mut weights = Vec::with_capacity(layers - 1);
    for pair in layer_sizes.windows(2) {
        let count = pair[0]
            .checked_add(1)
            .and_then(|n| n.checked_mul(pair[1]))
            .ok_or(Error::UnexpectedEof)?;
        if count > r.buf.len() / 8 {
            return Err(Error::UnexpectedEof);
        }
        let w = (0..count).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteWeight);
        }
        weights.push(w);
    }
    if !r.buf.is_empty() {
        return Err(Error::TrailingData(r.buf.len()));
    }
    Connectome::from_parts(layer_sizes, weights, elu_alpha)
}

pub fn save_connectome(c: &Connectome, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(c))?;
    w.flush()?;
    Ok(())
}

pub fn load_connectome(path: impl AsRef<Path>) -> Result<Connectome> {
    decode(&fs::read(path)?)
}
