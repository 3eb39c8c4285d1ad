//! MNIST ingestion from IDX (raw or gzip) and CSV.
//!
//! Pixels stay as raw 0..=255 values; the network does its own scaling.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const CLASSES: usize = 10;
pub const PIXELS: usize = 784;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub pixels: Vec<f64>,
    pub label: usize,
    pub target: Vec<f64>,
}

impl Example {
    pub fn new(pixels: Vec<f64>, label: usize) -> Result<Self> {
        let target = one_hot(label, CLASSES)?;
        Ok(Example { pixels, label, target })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, examples: Vec<Example>) -> Self {
        Dataset {
            name: name.into(),
            examples,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// First `n` examples (or all of them if there are fewer).
    pub fn truncated(&self, n: usize) -> Dataset {
        Dataset {
            name: self.name.clone(),
            examples: self.examples.iter().take(n).cloned().collect(),
        }
    }
}

pub fn one_hot(label: usize, classes: usize) -> Result<Vec<f64>> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    Ok(v)
}

/// Whole file contents, gunzipped if it starts with the gzip signature.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(Error::from_read)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct IdxCursor<'a> {
    buf: &'a [u8],
}

impl<'a> IdxCursor<'a> {
    fn u32(&mut self) -> Result<u32> {
        let (head, rest) = self.buf.split_first_chunk::<4>().ok_or(Error::UnexpectedEof)?;
        self.buf = rest;
        Ok(u32::from_be_bytes(*head))
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::UnexpectedEof);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
}

fn parse_idx_images(buf: &[u8]) -> Result<(usize, usize, &[u8])> {
    let mut cur = IdxCursor { buf };
    if cur.u32().map_err(|_| Error::NotIdx)? != IMAGE_MAGIC {
        return Err(Error::NotIdx);
    }
    let count = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let data = cur.bytes(count * rows * cols)?;
    Ok((count, rows * cols, data))
}

fn parse_idx_labels(buf: &[u8]) -> Result<&[u8]> {
    let mut cur = IdxCursor { buf };
    if cur.u32().map_err(|_| Error::NotIdx)? != LABEL_MAGIC {
        return Err(Error::NotIdx);
    }
    let count = cur.u32()? as usize;
    cur.bytes(count)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let image_buf = read_maybe_gz(images_path)?;
    let label_buf = read_maybe_gz(labels_path.as_ref())?;
    let (count, pixels, data) = parse_idx_images(&image_buf)?;
    let labels = parse_idx_labels(&label_buf)?;
    if labels.len() != count {
        return Err(Error::CountMismatch);
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let examples = data
        .chunks_exact(pixels)
        .zip(labels)
        .map(|(px, &label)| Example::new(px.iter().map(|&p| f64::from(p)).collect(), usize::from(label)))
        .collect::<Result<Vec<_>>>()?;
    let name = images_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Dataset::new(name, examples))
}

/// One example per line: `label,p0,...,p783`, no header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut examples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != PIXELS + 1 {
            return Err(Error::CsvFieldCount { line: lineno });
        }
        let parse = |s: &str, max: u32| -> Result<u32> {
            let v: u32 = s.trim().parse().map_err(|_| Error::CsvValue {
                line: lineno,
                reason: format!("not an integer: {s:?}"),
            })?;
            if v > max {
                return Err(Error::CsvValue {
                    line: lineno,
                    reason: format!("{v} exceeds {max}"),
                });
            }
            Ok(v)
        };
        let label = parse(fields[0], (CLASSES - 1) as u32)? as usize;
        let pixels = fields[1..]
            .iter()
            .map(|s| parse(s, 255).map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        examples.push(Example::new(pixels, label)?);
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Dataset::new(name, examples))
}

/// Resolves an IDX file in `dir`, accepting either the bare or `.gz` name.
pub fn find_idx_file(dir: &Path, stem: &str) -> Option<std::path::PathBuf> {
    [stem.to_string(), format!("{stem}.gz")]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
}

/// Loads the standard MNIST train/test pair from a directory.
pub fn load_mnist_dir(dir: &Path, format: DataFormat) -> Result<(Dataset, Dataset)> {
    match format {
        DataFormat::Idx => {
            let get = |stem: &str| {
                find_idx_file(dir, stem).ok_or_else(|| {
                    Error::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("{stem}[.gz] not found in {}", dir.display()),
                    ))
                })
            };
            let train = load_idx(get("train-images-idx3-ubyte")?, get("train-labels-idx1-ubyte")?)?;
            let test = load_idx(get("t10k-images-idx3-ubyte")?, get("t10k-labels-idx1-ubyte")?)?;
            Ok((train, test))
        }
        DataFormat::Csv => Ok((
            load_csv(dir.join("mnist_train.csv"))?,
            load_csv(dir.join("mnist_test.csv"))?,
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Idx,
    Csv,
}
