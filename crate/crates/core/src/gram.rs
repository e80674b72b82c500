//! Batch kernel matrices over sets of fixed-length sequences.
//!
//! Matrices are built in two stages. The *raw* stage evaluates the family's
//! statistic (`d²`, `d_dtw` or `ln 𝒦`) for every pair; it depends only on the
//! sequences, the family, `ν` and the corridor, so it can be computed once for
//! a whole dataset, cached, and sliced per train/test split. The *kernel*
//! stage fits the regularized normalization on training pairs and applies the
//! exponential wrapper.
//!
//! Pair evaluations are independent and written to distinct cells, so results
//! are bit-identical whatever the worker count.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{fit_normalization_log, raw_statistic, wrap_raw, KernelFamily, KernelSpec};
use crate::resample::FixedSequence;

/// What the entries of a [`GramMatrix`] hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GramContent {
    /// Pre-wrapper statistic, see [`raw_statistic`].
    Raw,
    /// Wrapped kernel values.
    Kernel,
}

/// Dense row-major matrix of pairwise values with row/column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub spec: KernelSpec,
    pub symmetric: bool,
    pub content: GramContent,
}

impl GramMatrix {
    /// Builds a matrix from explicit values, e.g. a hand-written kernel.
    pub fn from_values(
        n_rows: usize,
        n_cols: usize,
        values: Vec<f64>,
        spec: KernelSpec,
        content: GramContent,
    ) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::Dimension(format!(
                "{} values for a {n_rows}×{n_cols} matrix",
                values.len()
            )));
        }
        let symmetric = n_rows == n_cols
            && (0..n_rows).all(|i| (0..i).all(|j| values[i * n_cols + j].to_bits() == values[j * n_cols + i].to_bits()));
        Ok(GramMatrix {
            n_rows,
            n_cols,
            values,
            row_ids: (0..n_rows).map(|i| i.to_string()).collect(),
            col_ids: (0..n_cols).map(|i| i.to_string()).collect(),
            spec,
            symmetric,
            content,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sub-matrix over the given rows and columns. The result is symmetric
    /// when `self` is and the two index lists are identical.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> GramMatrix {
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let r = self.row(i);
            values.extend(cols.iter().map(|&j| r[j]));
        }
        GramMatrix {
            n_rows: rows.len(),
            n_cols: cols.len(),
            values,
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            col_ids: cols.iter().map(|&j| self.col_ids[j].clone()).collect(),
            spec: self.spec.clone(),
            symmetric: self.symmetric && rows == cols,
            content: self.content,
        }
    }

    /// Values of the upper triangle (`i ≤ j`, or `i < j` without the diagonal).
    pub fn upper_triangle(&self, include_diagonal: bool) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.n_rows {
            let start = if include_diagonal { i } else { i + 1 };
            for j in start..self.n_cols {
                out.push(self.get(i, j));
            }
        }
        out
    }

    fn map_values(&self, spec: KernelSpec, f: impl Fn(f64) -> Result<f64> + Sync) -> Result<GramMatrix> {
        let values = self.values.iter().map(|&v| f(v)).collect::<Result<Vec<_>>>()?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite kernel value at ({}, {}); sigma {} may be too small",
                pos / self.n_cols,
                pos % self.n_cols,
                spec.sigma
            )));
        }
        Ok(GramMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            values,
            row_ids: self.row_ids.clone(),
            col_ids: self.col_ids.clone(),
            spec,
            symmetric: self.symmetric,
            content: GramContent::Kernel,
        })
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool when `None`.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                f()
            }
        },
        None => f(),
    }
}

fn check_homogeneous(seqs: &[&FixedSequence], what: &str) -> Result<Option<(usize, usize)>> {
    let Some(first) = seqs.first() else {
        return Ok(None);
    };
    let shape = (first.len(), first.dim());
    for s in seqs {
        if (s.len(), s.dim()) != shape {
            return Err(Error::Dimension(format!(
                "{what} sequence {} has {} poses of dimension {}, expected {} × {}",
                s.id,
                s.len(),
                s.dim(),
                shape.0,
                shape.1
            )));
        }
    }
    Ok(Some(shape))
}

fn unfitted_spec(spec: &KernelSpec) -> KernelSpec {
    let mut s = spec.clone();
    s.normalization = None;
    s
}

/// Raw statistic for every pair of `train`; only the upper triangle is
/// evaluated and mirrored.
pub fn raw_gram(train: &[FixedSequence], spec: &KernelSpec, workers: Option<usize>) -> Result<GramMatrix> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::Param("cannot build a Gram matrix from zero sequences".into()));
    }
    let refs: Vec<&FixedSequence> = train.iter().collect();
    check_homogeneous(&refs, "training")?;
    let n = train.len();
    let pairs: Vec<(u32, u32)> = (0..n as u32)
        .flat_map(|i| (i..n as u32).map(move |j| (i, j)))
        .collect();
    let computed = with_workers(workers, || {
        pairs
            .par_iter()
            .map(|&(i, j)| raw_statistic(spec, &train[i as usize], &train[j as usize]))
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut values = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(computed) {
        let (i, j) = (i as usize, j as usize);
        values[i * n + j] = v;
        values[j * n + i] = v;
    }
    let ids: Vec<String> = train.iter().map(|s| s.id.clone()).collect();
    Ok(GramMatrix {
        n_rows: n,
        n_cols: n,
        values,
        row_ids: ids.clone(),
        col_ids: ids,
        spec: unfitted_spec(spec),
        symmetric: true,
        content: GramContent::Raw,
    })
}

/// Raw statistic for every (test, train) pair.
pub fn raw_cross(
    test: &[FixedSequence],
    train: &[FixedSequence],
    spec: &KernelSpec,
    workers: Option<usize>,
) -> Result<GramMatrix> {
    spec.validate()?;
    let all: Vec<&FixedSequence> = train.iter().chain(test).collect();
    check_homogeneous(&all, "test/training")?;
    let (n_rows, n_cols) = (test.len(), train.len());
    let values = with_workers(workers, || {
        (0..n_rows * n_cols)
            .into_par_iter()
            .map(|c| raw_statistic(spec, &test[c / n_cols], &train[c % n_cols]))
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(GramMatrix {
        n_rows,
        n_cols,
        values,
        row_ids: test.iter().map(|s| s.id.clone()).collect(),
        col_ids: train.iter().map(|s| s.id.clone()).collect(),
        spec: unfitted_spec(spec),
        symmetric: false,
        content: GramContent::Raw,
    })
}

/// Fits the normalization (rdtw) on the `i ≤ j` training pairs of a raw
/// symmetric matrix and wraps every entry.
pub fn finalize_train(raw: &GramMatrix, spec: &KernelSpec) -> Result<(GramMatrix, KernelSpec)> {
    if raw.content != GramContent::Raw || !raw.symmetric {
        return Err(Error::State("training kernel needs a symmetric raw matrix".into()));
    }
    if !raw.spec.same_raw(spec) {
        return Err(Error::State("raw matrix was computed with a different kernel".into()));
    }
    let mut fitted = unfitted_spec(spec);
    if spec.family == KernelFamily::Rdtw {
        let norm = fit_normalization_log(&raw.upper_triangle(true))?;
        fitted.normalization = Some(norm);
    }
    let gram = raw.map_values(fitted.clone(), |v| wrap_raw(&fitted, v))?;
    Ok((gram, fitted))
}

/// Wraps a raw test×train matrix with an already fitted spec; never refits.
pub fn finalize_cross(raw: &GramMatrix, spec: &KernelSpec) -> Result<GramMatrix> {
    if !spec.is_fitted() {
        return Err(Error::State(
            "cross kernel needs a spec fitted on training pairs".into(),
        ));
    }
    if raw.content != GramContent::Raw {
        return Err(Error::State("expected a raw matrix".into()));
    }
    if !raw.spec.same_raw(spec) {
        return Err(Error::State("raw matrix was computed with a different kernel".into()));
    }
    let mut gram = raw.map_values(spec.clone(), |v| wrap_raw(spec, v))?;
    gram.symmetric = false;
    Ok(gram)
}

/// Symmetric training kernel matrix plus the (possibly newly fitted) spec.
pub fn gram_train(
    train: &[FixedSequence],
    spec: &KernelSpec,
    workers: Option<usize>,
) -> Result<(GramMatrix, KernelSpec)> {
    let raw = raw_gram(train, spec, workers)?;
    finalize_train(&raw, spec)
}

/// Rectangular `|test| × |train|` kernel matrix using training-fitted constants.
pub fn gram_cross(
    test: &[FixedSequence],
    train: &[FixedSequence],
    spec: &KernelSpec,
    workers: Option<usize>,
) -> Result<GramMatrix> {
    if !spec.is_fitted() {
        return Err(Error::State(
            "cross kernel needs a spec fitted on training pairs".into(),
        ));
    }
    let raw = raw_cross(test, train, spec, workers)?;
    finalize_cross(&raw, spec)
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Content hash of a sequence set (ids, labels, subjects and pose data).
pub fn dataset_hash(seqs: &[FixedSequence]) -> String {
    let mut h = Sha256::new();
    for s in seqs {
        for field in [&s.id, &s.label, &s.subject] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field.as_bytes());
        }
        h.update((s.len() as u64).to_le_bytes());
        h.update((s.dim() as u64).to_le_bytes());
        for v in s.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// Hash of the parts of a spec that determine the raw statistic.
pub fn raw_spec_hash(spec: &KernelSpec) -> String {
    let nu = if spec.family.uses_nu() { Some(spec.nu) } else { None };
    let key = serde_json::json!({
        "family": spec.family,
        "nu": nu,
        "corridor": spec.corridor,
    });
    hex(&Sha256::digest(key.to_string().as_bytes()))
}

fn values_checksum(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

/// Leading bytes of a Gram cache file.
pub const CACHE_MAGIC: &[u8; 8] = b"EGRAM\0\0\x01";

/// JSON header of a Gram cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub spec: KernelSpec,
    pub content: GramContent,
    pub symmetric: bool,
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub dataset_hash: String,
    /// SHA-256 of the little-endian value block.
    pub checksum: String,
}

/// Writes `gram` as: magic (8 bytes), header length (u64 LE), JSON header,
/// then `n_rows·n_cols` little-endian f64 values in row-major order.
pub fn write_gram(mut w: impl Write, gram: &GramMatrix, dataset_hash: &str) -> Result<()> {
    let header = CacheHeader {
        spec: gram.spec.clone(),
        content: gram.content,
        symmetric: gram.symmetric,
        n_rows: gram.n_rows,
        n_cols: gram.n_cols,
        row_ids: gram.row_ids.clone(),
        col_ids: gram.col_ids.clone(),
        dataset_hash: dataset_hash.to_owned(),
        checksum: values_checksum(&gram.values),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut block = Vec::with_capacity(gram.values.len() * 8);
    for v in &gram.values {
        block.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&block)?;
    Ok(())
}

/// Reads a file written by [`write_gram`], verifying the checksum.
pub fn read_gram(mut r: impl Read) -> Result<(GramMatrix, CacheHeader)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::MalformedFile("not a Gram cache file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: CacheHeader = serde_json::from_slice(&json)?;
    if header.row_ids.len() != header.n_rows || header.col_ids.len() != header.n_cols {
        return Err(Error::MalformedFile("id lists do not match matrix shape".into()));
    }
    let mut block = vec![0u8; header.n_rows * header.n_cols * 8];
    r.read_exact(&mut block)?;
    let values: Vec<f64> = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if values_checksum(&values) != header.checksum {
        return Err(Error::MalformedFile("Gram cache checksum mismatch".into()));
    }
    let gram = GramMatrix {
        n_rows: header.n_rows,
        n_cols: header.n_cols,
        values,
        row_ids: header.row_ids.clone(),
        col_ids: header.col_ids.clone(),
        spec: header.spec.clone(),
        symmetric: header.symmetric,
        content: header.content,
    };
    Ok((gram, header))
}

/// Directory of raw Gram matrices keyed by (dataset hash, raw spec hash).
#[derive(Debug, Clone)]
pub struct GramCache {
    dir: PathBuf,
}

impl GramCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(GramCache { dir })
    }

    pub fn path_for(&self, dataset_hash: &str, spec: &KernelSpec) -> PathBuf {
        self.dir.join(format!(
            "{}_{}_{}.gram",
            &dataset_hash[..16],
            spec.family,
            &raw_spec_hash(spec)[..16]
        ))
    }

    /// Loads the raw symmetric matrix for `seqs`, computing and storing it on a miss.
    pub fn raw_gram(&self, seqs: &[FixedSequence], spec: &KernelSpec, workers: Option<usize>) -> Result<GramMatrix> {
        let hash = dataset_hash(seqs);
        let path = self.path_for(&hash, spec);
        if path.exists() {
            match load_cached(&path, &hash, spec) {
                Ok(gram) => {
                    log::debug!("gram cache hit {}", path.display());
                    return Ok(gram);
                }
                Err(e) => log::warn!("ignoring unusable cache file {}: {e}", path.display()),
            }
        }
        let gram = raw_gram(seqs, spec, workers)?;
        let tmp = path.with_extension("gram.tmp");
        {
            let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
            write_gram(&mut f, &gram, &hash)?;
            f.flush()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(gram)
    }
}

fn load_cached(path: &Path, hash: &str, spec: &KernelSpec) -> Result<GramMatrix> {
    let (gram, header) = read_gram(std::io::BufReader::new(fs::File::open(path)?))?;
    if header.dataset_hash != hash || !gram.spec.same_raw(spec) || gram.content != GramContent::Raw {
        return Err(Error::MalformedFile("cache key mismatch".into()));
    }
    Ok(gram)
}
