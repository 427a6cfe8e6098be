//! Feature/logit matrices, label vectors, and their on-disk containers.
//!
//! Binary layout (all integers little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 0..4         | magic `55 4F 53 52` (`"UOSR"`)            |
//! | 4            | version, `0x01`                           |
//! | 5            | dtype, `0x01` = f32 LE, `0x02` = i64 LE   |
//! | 6            | rank                                      |
//! | 7..7+8·rank  | dims, one `u64` each                      |
//! | rest         | row-major payload                         |
//!
//! Matrices are rank 2, label vectors rank 1. CSV files are headerless,
//! comma separated, one row per line.
//!
//! Values are stored at 32-bit precision; every consumer widens to `f64`
//! before doing arithmetic.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"UOSR";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F32: u8 = 0x01;
pub const DTYPE_I64: u8 = 0x02;

/// On-disk format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` (any case) selects CSV; everything else is the binary container.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

/// Dense row-major matrix of embeddings or logits.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    /// Builds a matrix, enforcing `rows, cols >= 1`, the payload length and
    /// finiteness of every entry.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::MalformedHeader(format!(
                "matrix shape {rows}x{cols} has a zero dimension"
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::MalformedHeader("dimension product overflows".into()))?;
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from `f64` rows, narrowing each value to `f32`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimMismatch {
                    what: format!("row {i}"),
                    left: r.len(),
                    right: cols,
                });
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(n, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row `i` widened to `f64`.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j] as f64
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, data)
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::DimMismatch {
                what: "vstack".into(),
                left: self.cols,
                right: other.cols,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.rows + other.rows, self.cols, data)
    }
}

/// Integer class labels, predictions or OoD class ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelVector(pub Vec<i64>);

impl LabelVector {
    pub fn new(labels: Vec<i64>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn select(&self, indices: &[usize]) -> LabelVector {
        LabelVector(indices.iter().map(|&i| self.0[i]).collect())
    }
}

impl From<Vec<i64>> for LabelVector {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

// ---------------------------------------------------------------------------
// Binary container
// ---------------------------------------------------------------------------

fn encode_header(dtype: u8, dims: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 8 * dims.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dtype);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out
}

/// Serializes a matrix into the binary container.
pub fn encode_matrix(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = encode_header(DTYPE_F32, &[m.rows, m.cols]);
    out.reserve(m.data.len() * 4);
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Serializes a label vector into the binary container.
pub fn encode_labels(l: &LabelVector) -> Vec<u8> {
    let mut out = encode_header(DTYPE_I64, &[l.len()]);
    out.reserve(l.len() * 8);
    for v in &l.0 {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Header {
    dtype: u8,
    dims: Vec<usize>,
    payload_offset: usize,
}

fn decode_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 7 {
        return Err(Error::MalformedHeader(format!(
            "file is {} bytes, shorter than the fixed header",
            bytes.len()
        )));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::MalformedHeader("bad magic bytes".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {:#04x}",
            bytes[4]
        )));
    }
    let dtype = bytes[5];
    let rank = bytes[6] as usize;
    let payload_offset = 7 + 8 * rank;
    if bytes.len() < payload_offset {
        return Err(Error::MalformedHeader("truncated dimension table".into()));
    }
    let dims = (0..rank)
        .map(|i| {
            let start = 7 + 8 * i;
            let raw = u64::from_le_bytes(bytes[start..start + 8].try_into().unwrap());
            usize::try_from(raw)
                .map_err(|_| Error::MalformedHeader(format!("dimension {raw} too large")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Header {
        dtype,
        dims,
        payload_offset,
    })
}

fn payload_count(header: &Header, payload_len: usize, elem: usize) -> Result<usize> {
    let expected = header
        .dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::MalformedHeader("dimension product overflows".into()))?;
    if payload_len % elem != 0 || payload_len / elem != expected {
        return Err(Error::ShapeMismatch {
            expected,
            actual: payload_len / elem,
        });
    }
    Ok(expected)
}

/// Parses a binary container holding a rank-2 `f32` matrix.
pub fn decode_matrix(bytes: &[u8]) -> Result<FeatureMatrix> {
    let header = decode_header(bytes)?;
    if header.dtype != DTYPE_F32 {
        return Err(Error::MalformedHeader(format!(
            "dtype {:#04x} where real32 was requested",
            header.dtype
        )));
    }
    if header.dims.len() != 2 {
        return Err(Error::MalformedHeader(format!(
            "rank {} where a matrix (rank 2) was requested",
            header.dims.len()
        )));
    }
    let payload = &bytes[header.payload_offset..];
    payload_count(&header, payload.len(), 4)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(header.dims[0], header.dims[1], data)
}

/// Parses a binary container holding a rank-1 `i64` vector.
pub fn decode_labels(bytes: &[u8]) -> Result<LabelVector> {
    let header = decode_header(bytes)?;
    if header.dtype != DTYPE_I64 {
        return Err(Error::MalformedHeader(format!(
            "dtype {:#04x} where int64 was requested",
            header.dtype
        )));
    }
    if header.dims.len() != 1 {
        return Err(Error::MalformedHeader(format!(
            "rank {} where a vector (rank 1) was requested",
            header.dims.len()
        )));
    }
    let payload = &bytes[header.payload_offset..];
    payload_count(&header, payload.len(), 8)?;
    Ok(LabelVector(
        payload
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    ))
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Parses headerless comma-separated rows. Blank lines are skipped.
pub fn parse_matrix_csv(text: &str) -> Result<FeatureMatrix> {
    let mut cols = None;
    let mut rows = 0usize;
    let mut data = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let field = field.trim();
            let v: f32 = field.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: rows,
                    col: data.len() - before,
                });
            }
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("ragged row: {width} fields, expected {c}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::EmptyInput("csv contains no rows".into()))?;
    FeatureMatrix::new(rows, cols, data)
}

/// Parses one integer label per line.
pub fn parse_labels_csv(text: &str) -> Result<LabelVector> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("not an integer label: {line:?}"),
        })?;
        out.push(v);
    }
    Ok(LabelVector(out))
}

pub fn matrix_to_csv(m: &FeatureMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.rows {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn labels_to_csv(l: &LabelVector) -> String {
    l.0.iter().map(|v| format!("{v}\n")).collect()
}

// ---------------------------------------------------------------------------
// File operations
// ---------------------------------------------------------------------------

/// Reads a whole file, mapping failures to [`Error::Io`] with the path.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a whole UTF-8 file, mapping failures to [`Error::Io`] with the path.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>, format: Format) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    match format {
        Format::Binary => decode_matrix(&read_file(path)?),
        Format::Csv => parse_matrix_csv(&read_text(path)?),
    }
}

pub fn load_labels(path: impl AsRef<Path>, format: Format) -> Result<LabelVector> {
    let path = path.as_ref();
    match format {
        Format::Binary => decode_labels(&read_file(path)?),
        Format::Csv => parse_labels_csv(&read_text(path)?),
    }
}

/// Writes the matrix in the binary container.
pub fn write_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_matrix(m))
}

/// Writes the label vector in the binary container.
pub fn write_labels(l: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_labels(l))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

/// Everything one evaluation run consumes. OoD rows are kept separate from
/// the in-distribution test rows and are appended after them when scored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationBundle {
    pub train_features: Option<FeatureMatrix>,
    pub train_labels: Option<LabelVector>,
    pub test_features: Option<FeatureMatrix>,
    pub test_logits: Option<FeatureMatrix>,
    pub test_labels: LabelVector,
    pub test_predictions: Option<LabelVector>,
    pub ood_features: Option<FeatureMatrix>,
    pub ood_logits: Option<FeatureMatrix>,
    pub ood_class_ids: Option<LabelVector>,
}

/// File names used when a bundle is persisted to a directory.
pub mod bundle_files {
    pub const TRAIN_FEATS: &str = "train_feats.bin";
    pub const TRAIN_LABELS: &str = "train_labels.bin";
    pub const TEST_FEATS: &str = "test_feats.bin";
    pub const TEST_LOGITS: &str = "test_logits.bin";
    pub const TEST_LABELS: &str = "test_labels.bin";
    pub const TEST_PREDS: &str = "test_preds.bin";
    pub const OOD_FEATS: &str = "ood_feats.bin";
    pub const OOD_LOGITS: &str = "ood_logits.bin";
    pub const OOD_CLASS_IDS: &str = "ood_class_ids.bin";
}

impl EvaluationBundle {
    /// Number of OoD rows, taken from whichever OoD component is present.
    pub fn n_ood(&self) -> usize {
        self.ood_features
            .as_ref()
            .map(|m| m.rows())
            .or_else(|| self.ood_logits.as_ref().map(|m| m.rows()))
            .unwrap_or(0)
    }

    pub fn n_test(&self) -> usize {
        self.test_labels.len()
    }

    /// Writes every present component under `dir` using [`bundle_files`]
    /// names. Returns the written paths.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        use bundle_files::*;
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put_m = |m: &Option<FeatureMatrix>, name: &str| -> Result<()> {
            if let Some(m) = m {
                let p = dir.join(name);
                write_matrix(m, &p)?;
                written.push(p);
            }
            Ok(())
        };
        put_m(&self.train_features, TRAIN_FEATS)?;
        put_m(&self.test_features, TEST_FEATS)?;
        put_m(&self.test_logits, TEST_LOGITS)?;
        put_m(&self.ood_features, OOD_FEATS)?;
        put_m(&self.ood_logits, OOD_LOGITS)?;
        let mut put_l = |l: Option<&LabelVector>, name: &str| -> Result<()> {
            if let Some(l) = l {
                let p = dir.join(name);
                write_labels(l, &p)?;
                written.push(p);
            }
            Ok(())
        };
        put_l(self.train_labels.as_ref(), TRAIN_LABELS)?;
        put_l(Some(&self.test_labels), TEST_LABELS)?;
        put_l(self.test_predictions.as_ref(), TEST_PREDS)?;
        put_l(self.ood_class_ids.as_ref(), OOD_CLASS_IDS)?;
        Ok(written)
    }

    /// Loads a bundle saved by [`EvaluationBundle::save`]. Absent optional
    /// files become `None`; `test_labels.bin` is required.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        use bundle_files::*;
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "bundle directory not found")));
        }
        let m = |name: &str| -> Result<Option<FeatureMatrix>> {
            let p = dir.join(name);
            if p.exists() {
                load_matrix(&p, Format::Binary).map(Some)
            } else {
                Ok(None)
            }
        };
        let l = |name: &str| -> Result<Option<LabelVector>> {
            let p = dir.join(name);
            if p.exists() {
                load_labels(&p, Format::Binary).map(Some)
            } else {
                Ok(None)
            }
        };
        Ok(Self {
            train_features: m(TRAIN_FEATS)?,
            train_labels: l(TRAIN_LABELS)?,
            test_features: m(TEST_FEATS)?,
            test_logits: m(TEST_LOGITS)?,
            test_labels: l(TEST_LABELS)?
                .ok_or_else(|| Error::MissingComponent(format!("{}", dir.join(TEST_LABELS).display())))?,
            test_predictions: l(TEST_PREDS)?,
            ood_features: m(OOD_FEATS)?,
            ood_logits: m(OOD_LOGITS)?,
            ood_class_ids: l(OOD_CLASS_IDS)?,
        })
    }
}

fn check_rows(what: &str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::RowCountMismatch {
            what: what.into(),
            left,
            right,
        });
    }
    Ok(())
}

fn check_range(labels: &LabelVector, n_classes: usize) -> Result<()> {
    for (index, &label) in labels.0.iter().enumerate() {
        if label < 0 || label as u64 >= n_classes as u64 {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                n_classes,
            });
        }
    }
    Ok(())
}

/// Checks row/label agreement, feature dimensionality and label ranges.
/// Absence of a component a scorer needs is reported by that scorer.
pub fn validate_bundle(b: &EvaluationBundle, n_classes: usize) -> Result<()> {
    let n_test = b.test_labels.len();
    if let Some(f) = &b.test_features {
        check_rows("test_features/test_labels", f.rows(), n_test)?;
    }
    if let Some(l) = &b.test_logits {
        check_rows("test_logits/test_labels", l.rows(), n_test)?;
        if l.cols() != n_classes {
            return Err(Error::DimMismatch {
                what: "test_logits columns/n_classes".into(),
                left: l.cols(),
                right: n_classes,
            });
        }
    }
    if let Some(p) = &b.test_predictions {
        check_rows("test_predictions/test_labels", p.len(), n_test)?;
        check_range(p, n_classes)?;
    }
    if let (Some(f), Some(l)) = (&b.train_features, &b.train_labels) {
        check_rows("train_features/train_labels", f.rows(), l.len())?;
    }
    if let Some(l) = &b.train_labels {
        check_range(l, n_classes)?;
    }
    if let (Some(f), Some(l)) = (&b.ood_features, &b.ood_logits) {
        check_rows("ood_features/ood_logits", f.rows(), l.rows())?;
    }
    if let (Some(l), Some(t)) = (&b.ood_logits, &b.test_logits) {
        if l.cols() != t.cols() {
            return Err(Error::DimMismatch {
                what: "ood_logits/test_logits columns".into(),
                left: l.cols(),
                right: t.cols(),
            });
        }
    }
    if let Some(ids) = &b.ood_class_ids {
        check_rows("ood_class_ids/ood rows", ids.len(), b.n_ood())?;
    }
    let dims: Vec<(&str, usize)> = [
        ("train_features", b.train_features.as_ref()),
        ("test_features", b.test_features.as_ref()),
        ("ood_features", b.ood_features.as_ref()),
    ]
    .into_iter()
    .filter_map(|(n, m)| m.map(|m| (n, m.cols())))
    .collect();
    for w in dims.windows(2) {
        if w[0].1 != w[1].1 {
            return Err(Error::DimMismatch {
                what: format!("{}/{} columns", w[0].0, w[1].0),
                left: w[0].1,
                right: w[1].1,
            });
        }
    }
    check_range(&b.test_labels, n_classes)
}
