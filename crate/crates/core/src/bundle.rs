//! GTPK bundles: penultimate features, last-layer parameters, labels and
//! optional logits for a batch of samples.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "GTPK" | version: u32 = 1 | chunk_count: u32
//! chunk := name_len: u32 | name: utf-8 | dtype: u8 | ndim: u8 | dims: ndim × u64 | payload
//! ```
//!
//! dtype codes: 1 = f32, 2 = f64, 3 = i64, 4 = UTF-8 blob (dims = [byte length]).
//! Payloads are row-major. Required chunks are `features` [M,d], `weights`
//! [d,N], `bias` [N] and `labels` [M]; `logits` [M,N] and `meta` are optional.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::BundleError;
use crate::tensor::{Matrix, Vector};

pub const MAGIC: [u8; 4] = *b"GTPK";
pub const VERSION: u32 = 1;

/// Meta keys recording chunks this reader did not understand.
pub const UNKNOWN_CHUNK_PREFIX: &str = "unknown_chunk.";

/// Largest tolerated gap between stored and recomputed logits before a
/// consistency warning is raised (sized for 32-bit exports).
pub const LOGIT_CONSISTENCY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
    I64 = 3,
    Utf8 = 4,
}

impl Dtype {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::F32),
            2 => Some(Self::F64),
            3 => Some(Self::I64),
            4 => Some(Self::Utf8),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 | Self::I64 => 8,
            Self::Utf8 => 1,
        }
    }
}

/// Float storage used when writing. Files default to `F32`; `F64` keeps
/// in-memory values bit-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FloatStorage {
    #[default]
    F32,
    F64,
}

/// Everything needed to recompute and differentiate the final linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LastLayerBundle {
    /// `M × d` penultimate activations, one row per sample.
    pub features: Matrix,
    /// `d × N` final-layer weights.
    pub weights: Matrix,
    /// Length-`N` final-layer bias.
    pub bias: Vector,
    /// Ground-truth class per sample.
    pub labels: Vec<i64>,
    /// `M × N` raw class scores, when the exporter stored them.
    pub logits: Option<Matrix>,
    pub meta: BTreeMap<String, String>,
}

impl LastLayerBundle {
    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.weights.cols()
    }
}

/// One broken bundle invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LabelOutOfRange {
        sample: usize,
        label: i64,
        n_classes: usize,
    },
    LabelCount {
        expected: usize,
        found: usize,
    },
    FeatureDim {
        features: usize,
        weights: usize,
    },
    BiasLength {
        expected: usize,
        found: usize,
    },
    LogitsShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    MetaEntry {
        key: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LabelOutOfRange {
                sample,
                label,
                n_classes,
            } => write!(
                f,
                "labels[{sample}] = {label} outside 0..{n_classes}"
            ),
            Self::LabelCount { expected, found } => {
                write!(f, "labels has {found} entries, features has {expected} rows")
            }
            Self::FeatureDim { features, weights } => write!(
                f,
                "features have width {features} but weights have {weights} rows"
            ),
            Self::BiasLength { expected, found } => {
                write!(f, "bias has length {found}, expected {expected}")
            }
            Self::LogitsShape { expected, found } => write!(
                f,
                "logits shaped {}x{}, expected {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Self::MetaEntry { key } => write!(
                f,
                "meta entry {key:?} cannot be stored as a key=value line"
            ),
        }
    }
}

/// Every invariant violation in `bundle`; empty means valid.
pub fn validate_bundle(bundle: &LastLayerBundle) -> Vec<Violation> {
    let mut out = Vec::new();
    let m = bundle.n_samples();
    let n = bundle.n_classes();

    if bundle.features.cols() != bundle.weights.rows() {
        out.push(Violation::FeatureDim {
            features: bundle.features.cols(),
            weights: bundle.weights.rows(),
        });
    }
    if bundle.bias.len() != n {
        out.push(Violation::BiasLength {
            expected: n,
            found: bundle.bias.len(),
        });
    }
    if bundle.labels.len() != m {
        out.push(Violation::LabelCount {
            expected: m,
            found: bundle.labels.len(),
        });
    }
    for (sample, &label) in bundle.labels.iter().enumerate() {
        if label < 0 || label as u64 >= n as u64 {
            out.push(Violation::LabelOutOfRange {
                sample,
                label,
                n_classes: n,
            });
        }
    }
    if let Some(logits) = &bundle.logits {
        if logits.shape() != (m, n) {
            out.push(Violation::LogitsShape {
                expected: (m, n),
                found: logits.shape(),
            });
        }
    }
    for (key, value) in &bundle.meta {
        if key.is_empty() || key.contains(['=', '\n']) || value.contains('\n') {
            out.push(Violation::MetaEntry { key: key.clone() });
        }
    }
    out
}

/// Logits from the linear layer: `Wᵀ f + b` for every sample.
pub fn compute_logits(bundle: &LastLayerBundle) -> Matrix {
    let m = bundle.n_samples();
    let n = bundle.n_classes();
    let mut data = Vec::with_capacity(m * n);
    for row in 0..m {
        let mut logits = bundle
            .weights
            .transpose_mul_vec(bundle.features.row(row))
            .expect("validated bundle has matching feature width");
        for (y, b) in logits.iter_mut().zip(bundle.bias.iter()) {
            *y += b;
        }
        data.extend(logits);
    }
    Matrix::new(m, n, data).expect("finite inputs give finite logits")
}

/// Fills in logits from the linear layer when the bundle lacks them.
pub fn ensure_logits(mut bundle: LastLayerBundle) -> LastLayerBundle {
    if bundle.logits.is_none() {
        bundle.logits = Some(compute_logits(&bundle));
    }
    bundle
}

/// Largest absolute gap between stored logits and `Wᵀ f + b`, if logits are stored.
pub fn logit_consistency(bundle: &LastLayerBundle) -> Option<f64> {
    let stored = bundle.logits.as_ref()?;
    let recomputed = compute_logits(bundle);
    Some(
        stored
            .as_slice()
            .iter()
            .zip(recomputed.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    )
}

/// Non-fatal findings about a valid bundle.
pub fn validation_warnings(bundle: &LastLayerBundle) -> Vec<String> {
    match logit_consistency(bundle) {
        Some(gap) if gap > LOGIT_CONSISTENCY_TOLERANCE => vec![format!(
            "stored logits differ from recomputed W^T f + b by up to {gap:.3e} (tolerance {LOGIT_CONSISTENCY_TOLERANCE:e})"
        )],
        _ => Vec::new(),
    }
}

pub fn write_bundle(bundle: &LastLayerBundle, path: impl AsRef<Path>) -> Result<(), BundleError> {
    write_bundle_with(bundle, path, FloatStorage::F32)
}

/// Validates, encodes and atomically replaces `path` via a sibling temp file.
pub fn write_bundle_with(
    bundle: &LastLayerBundle,
    path: impl AsRef<Path>,
    storage: FloatStorage,
) -> Result<(), BundleError> {
    let bytes = encode_bundle(bundle, storage)?;
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| BundleError::Io(e.error))?;
    Ok(())
}

pub fn encode_bundle(bundle: &LastLayerBundle, storage: FloatStorage) -> Result<Vec<u8>, BundleError> {
    let violations = validate_bundle(bundle);
    if !violations.is_empty() {
        return Err(BundleError::Invalid(violations));
    }

    let mut chunks = ChunkWriter::default();
    let m = bundle.n_samples() as u64;
    let d = bundle.feature_dim() as u64;
    let n = bundle.n_classes() as u64;
    chunks.floats("features", &[m, d], bundle.features.as_slice(), storage);
    chunks.floats("weights", &[d, n], bundle.weights.as_slice(), storage);
    chunks.floats("bias", &[n], bundle.bias.as_slice(), storage);
    chunks.ints("labels", &bundle.labels);
    if let Some(logits) = &bundle.logits {
        chunks.floats("logits", &[m, n], logits.as_slice(), storage);
    }
    if !bundle.meta.is_empty() {
        let text: String = bundle
            .meta
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        chunks.blob("meta", text.as_bytes());
    }

    let mut out = Vec::with_capacity(12 + chunks.body.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&chunks.count.to_le_bytes());
    out.extend_from_slice(&chunks.body);
    Ok(out)
}

#[derive(Default)]
struct ChunkWriter {
    body: Vec<u8>,
    count: u32,
}

impl ChunkWriter {
    fn header(&mut self, name: &str, dtype: Dtype, dims: &[u64]) {
        self.count += 1;
        self.body.extend_from_slice(&(name.len() as u32).to_le_bytes());
        self.body.extend_from_slice(name.as_bytes());
        self.body.push(dtype as u8);
        self.body.push(dims.len() as u8);
        for dim in dims {
            self.body.extend_from_slice(&dim.to_le_bytes());
        }
    }

    fn floats(&mut self, name: &str, dims: &[u64], values: &[f64], storage: FloatStorage) {
        match storage {
            FloatStorage::F32 => {
                self.header(name, Dtype::F32, dims);
                for &v in values {
                    self.body.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            FloatStorage::F64 => {
                self.header(name, Dtype::F64, dims);
                for &v in values {
                    self.body.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }

    fn ints(&mut self, name: &str, values: &[i64]) {
        self.header(name, Dtype::I64, &[values.len() as u64]);
        for &v in values {
            self.body.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn blob(&mut self, name: &str, bytes: &[u8]) {
        self.header(name, Dtype::Utf8, &[bytes.len() as u64]);
        self.body.extend_from_slice(bytes);
    }
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<LastLayerBundle, BundleError> {
    decode_bundle(&fs::read(path)?)
}

/// A parsed chunk before it is assigned a role.
struct RawChunk<'a> {
    name: String,
    dtype: Dtype,
    dims: Vec<u64>,
    payload: &'a [u8],
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, context: &str) -> Result<&'a [u8], BundleError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| BundleError::Truncated {
                context: context.to_owned(),
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, context: &str) -> Result<u8, BundleError> {
        Ok(self.take(1, context)?[0])
    }

    fn u32(&mut self, context: &str) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }

    fn u64(&mut self, context: &str) -> Result<u64, BundleError> {
        Ok(u64::from_le_bytes(self.take(8, context)?.try_into().unwrap()))
    }
}

fn read_chunk<'a>(cursor: &mut Cursor<'a>, index: u32) -> Result<RawChunk<'a>, BundleError> {
    let header = format!("header of chunk #{index}");
    let name_len = cursor.u32(&header)? as usize;
    let name_bytes = cursor.take(name_len, &header)?;
    let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| BundleError::BadChunk {
        name: String::from_utf8_lossy(name_bytes).into_owned(),
        reason: "chunk name is not UTF-8".into(),
    })?;
    let context = format!("chunk {name:?}");
    let code = cursor.u8(&context)?;
    let dtype = Dtype::from_code(code).ok_or_else(|| BundleError::BadChunk {
        name: name.clone(),
        reason: format!("unknown dtype code {code}"),
    })?;
    let ndim = cursor.u8(&context)? as usize;
    let dims = (0..ndim)
        .map(|_| cursor.u64(&context))
        .collect::<Result<Vec<_>, _>>()?;
    let len = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(dtype.width() as u64))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| BundleError::BadChunk {
            name: name.clone(),
            reason: format!("dims {dims:?} overflow"),
        })?;
    let payload = cursor.take(len, &context)?;
    Ok(RawChunk {
        name,
        dtype,
        dims,
        payload,
    })
}

pub fn decode_bundle(bytes: &[u8]) -> Result<LastLayerBundle, BundleError> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cursor.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(BundleError::BadMagic { found: magic });
    }
    let version = cursor.u32("version")?;
    if version != VERSION {
        return Err(BundleError::UnsupportedVersion(version));
    }
    let count = cursor.u32("chunk count")?;

    let mut seen = HashSet::new();
    let mut features = None;
    let mut weights = None;
    let mut bias = None;
    let mut labels = None;
    let mut logits = None;
    let mut meta = BTreeMap::new();
    let mut unknown = Vec::new();

    for index in 0..count {
        let chunk = read_chunk(&mut cursor, index)?;
        if !seen.insert(chunk.name.clone()) {
            return Err(BundleError::BadChunk {
                name: chunk.name,
                reason: "duplicate chunk".into(),
            });
        }
        match chunk.name.as_str() {
            "features" => features = Some(float_matrix(&chunk)?),
            "weights" => weights = Some(float_matrix(&chunk)?),
            "logits" => logits = Some(float_matrix(&chunk)?),
            "bias" => bias = Some(float_vector(&chunk)?),
            "labels" => labels = Some(int_vector(&chunk)?),
            "meta" => meta.extend(parse_meta(&chunk)?),
            _ => unknown.push((
                format!("{UNKNOWN_CHUNK_PREFIX}{}", chunk.name),
                format!(
                    "dtype={} dims={}",
                    chunk.dtype as u8,
                    chunk
                        .dims
                        .iter()
                        .map(u64::to_string)
                        .collect::<Vec<_>>()
                        .join("x")
                ),
            )),
        }
    }
    meta.extend(unknown);

    let bundle = LastLayerBundle {
        features: features.ok_or(BundleError::MissingChunk("features"))?,
        weights: weights.ok_or(BundleError::MissingChunk("weights"))?,
        bias: bias.ok_or(BundleError::MissingChunk("bias"))?,
        labels: labels.ok_or(BundleError::MissingChunk("labels"))?,
        logits,
        meta,
    };
    let violations = validate_bundle(&bundle);
    if violations.is_empty() {
        Ok(bundle)
    } else {
        Err(BundleError::Invalid(violations))
    }
}

fn floats(chunk: &RawChunk<'_>) -> Result<Vec<f64>, BundleError> {
    let values: Vec<f64> = match chunk.dtype {
        Dtype::F32 => chunk
            .payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => chunk
            .payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
        other => {
            return Err(BundleError::BadChunk {
                name: chunk.name.clone(),
                reason: format!("expected a float dtype, found code {}", other as u8),
            })
        }
    };
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(BundleError::NonFinite {
            name: chunk.name.clone(),
            index,
        });
    }
    Ok(values)
}

fn float_matrix(chunk: &RawChunk<'_>) -> Result<Matrix, BundleError> {
    let [rows, cols] = chunk.dims[..] else {
        return Err(BundleError::ShapeMismatch(format!(
            "{:?} must be 2-d, has dims {:?}",
            chunk.name, chunk.dims
        )));
    };
    if rows == 0 || cols == 0 {
        return Err(BundleError::ShapeMismatch(format!(
            "{:?} has an empty dimension {:?}",
            chunk.name, chunk.dims
        )));
    }
    Ok(Matrix::new(rows as usize, cols as usize, floats(chunk)?)
        .expect("payload length follows dims"))
}

fn float_vector(chunk: &RawChunk<'_>) -> Result<Vector, BundleError> {
    if chunk.dims.len() != 1 || chunk.dims[0] == 0 {
        return Err(BundleError::ShapeMismatch(format!(
            "{:?} must be a nonempty 1-d tensor, has dims {:?}",
            chunk.name, chunk.dims
        )));
    }
    Ok(Vector::new(floats(chunk)?).expect("nonempty finite payload"))
}

fn int_vector(chunk: &RawChunk<'_>) -> Result<Vec<i64>, BundleError> {
    if chunk.dtype != Dtype::I64 {
        return Err(BundleError::BadChunk {
            name: chunk.name.clone(),
            reason: format!("expected i64, found dtype code {}", chunk.dtype as u8),
        });
    }
    if chunk.dims.len() != 1 || chunk.dims[0] == 0 {
        return Err(BundleError::ShapeMismatch(format!(
            "{:?} must be a nonempty 1-d tensor, has dims {:?}",
            chunk.name, chunk.dims
        )));
    }
    Ok(chunk
        .payload
        .chunks_exact(8)
        .map(|b| i64::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

fn parse_meta(chunk: &RawChunk<'_>) -> Result<Vec<(String, String)>, BundleError> {
    if chunk.dtype != Dtype::Utf8 {
        return Err(BundleError::BadChunk {
            name: chunk.name.clone(),
            reason: "meta must be a UTF-8 blob".into(),
        });
    }
    let text = std::str::from_utf8(chunk.payload).map_err(|_| BundleError::BadChunk {
        name: chunk.name.clone(),
        reason: "meta is not valid UTF-8".into(),
    })?;
    text.lines()
        .filter(|line| !line.is_empty())
        .map(|line| {
            line.split_once('=')
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .ok_or_else(|| BundleError::BadChunk {
                    name: chunk.name.clone(),
                    reason: format!("meta line {line:?} has no '='"),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> LastLayerBundle {
        LastLayerBundle {
            features: Matrix::new(1, 1, vec![0.5]).unwrap(),
            weights: Matrix::new(1, 2, vec![1.0, -1.0]).unwrap(),
            bias: Vector::new(vec![0.0, 0.25]).unwrap(),
            labels: vec![1],
            logits: None,
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn encoded_file_starts_with_magic_and_version() {
        let bytes = encode_bundle(&tiny(), FloatStorage::F32).unwrap();
        assert_eq!(&bytes[..4], b"GTPK");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &4u32.to_le_bytes());
        // first chunk header: name_len, "features", dtype f32, ndim 2, dims [1,1]
        assert_eq!(&bytes[12..16], &8u32.to_le_bytes());
        assert_eq!(&bytes[16..24], b"features");
        assert_eq!(bytes[24], 1);
        assert_eq!(bytes[25], 2);
        assert_eq!(&bytes[26..34], &1u64.to_le_bytes());
        assert_eq!(&bytes[42..46], &0.5f32.to_le_bytes());
    }

    #[test]
    fn label_equal_to_class_count_is_rejected_before_writing() {
        let mut b = tiny();
        b.labels = vec![2];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.gtpk");
        let err = write_bundle(&b, &path).unwrap_err();
        assert!(matches!(err, BundleError::Invalid(ref v) if v.len() == 1));
        assert!(!path.exists());
    }

    #[test]
    fn validate_reports_each_violation_with_coordinates() {
        assert!(validate_bundle(&tiny()).is_empty());

        let mut b = tiny();
        b.labels = vec![-1];
        assert_eq!(
            validate_bundle(&b),
            vec![Violation::LabelOutOfRange {
                sample: 0,
                label: -1,
                n_classes: 2
            }]
        );
        assert!(validate_bundle(&b)[0].to_string().contains("labels[0]"));

        let mut b = tiny();
        b.logits = Some(Matrix::zeros(1, 3).unwrap());
        assert_eq!(
            validate_bundle(&b),
            vec![Violation::LogitsShape {
                expected: (1, 2),
                found: (1, 3)
            }]
        );
    }

    #[test]
    fn ensure_logits_examples() {
        let mut b = tiny();
        b.features = Matrix::new(1, 2, vec![3.0, 5.0]).unwrap();
        b.weights = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        b.bias = Vector::new(vec![0.0, 0.0]).unwrap();
        let filled = ensure_logits(b);
        assert_eq!(filled.logits.as_ref().unwrap().as_slice(), &[3.0, 5.0]);

        let b = LastLayerBundle {
            features: Matrix::new(1, 2, vec![1.0, 1.0]).unwrap(),
            weights: Matrix::from_rows(&[vec![2.0], vec![1.0]]).unwrap(),
            bias: Vector::new(vec![1.0]).unwrap(),
            labels: vec![0],
            logits: None,
            meta: BTreeMap::new(),
        };
        assert_eq!(ensure_logits(b).logits.unwrap().as_slice(), &[4.0]);

        let mut b = tiny();
        b.features = Matrix::new(1, 2, vec![3.0, 5.0]).unwrap();
        b.weights = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        b.logits = Some(Matrix::new(1, 2, vec![9.0, 9.0]).unwrap());
        let kept = ensure_logits(b.clone());
        assert_eq!(kept, b);
        assert_eq!(ensure_logits(kept.clone()), kept);
    }

    #[test]
    fn inconsistent_logits_raise_a_warning_not_an_error() {
        let mut b = ensure_logits(tiny());
        assert!(validation_warnings(&b).is_empty());
        b.logits = Some(Matrix::new(1, 2, vec![0.5, -0.25 + 0.01]).unwrap());
        assert!(validate_bundle(&b).is_empty());
        assert_eq!(validation_warnings(&b).len(), 1);
    }

    #[test]
    fn decode_errors() {
        let good = encode_bundle(&tiny(), FloatStorage::F32).unwrap();

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_bundle(&bad),
            Err(BundleError::BadMagic { found }) if &found == b"XXXX"
        ));

        let mut bad = good.clone();
        bad[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            decode_bundle(&bad),
            Err(BundleError::UnsupportedVersion(2))
        ));

        for cut in [2, 10, 20, 45, good.len() - 1] {
            assert!(
                matches!(decode_bundle(&good[..cut]), Err(BundleError::Truncated { .. })),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut bytes = encode_bundle(&tiny(), FloatStorage::F32).unwrap();
        bytes[42..46].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_bundle(&bytes),
            Err(BundleError::NonFinite { ref name, index: 0 }) if name == "features"
        ));
    }

    #[test]
    fn unknown_chunks_land_in_meta() {
        let mut bytes = encode_bundle(&tiny(), FloatStorage::F32).unwrap();
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        bytes[8..12].copy_from_slice(&(count + 1).to_le_bytes());
        bytes.extend_from_slice(&5u32.to_le_bytes());
        bytes.extend_from_slice(b"extra");
        bytes.push(3);
        bytes.push(1);
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&7i64.to_le_bytes());
        bytes.extend_from_slice(&8i64.to_le_bytes());

        let b = decode_bundle(&bytes).unwrap();
        assert_eq!(b.meta["unknown_chunk.extra"], "dtype=3 dims=2");
        assert_eq!(b.features, tiny().features);
    }

    #[test]
    fn missing_required_chunk() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"GTPK");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode_bundle(&bytes),
            Err(BundleError::MissingChunk("features"))
        ));
    }
}
