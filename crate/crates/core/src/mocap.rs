//! Skeletal motion sequences: loading, validation and root-relative normalization.
//!
//! A pose is the flat concatenation of joint coordinates `(x, y, z)` for every
//! joint of the skeleton. Raw captures carry `3·N` values per frame; after
//! [`root_relativize`] the root joint is subtracted from all others and removed,
//! leaving `3·(N−1)` values.
//!
//! Two on-disk formats are understood:
//!
//! * the JSON-lines dataset format (one sequence per line, see [`parse_generic`]);
//! * the MSR-Action3D style skeleton text format, a flat stream of
//!   `x y z confidence` quadruples (see [`parse_msr_skeleton`]).

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default root joint for MSR-Action3D skeletons (hip center in the 20-joint layout).
pub const MSR_DEFAULT_ROOT: usize = 6;
/// Default root joint for the generic format.
pub const GENERIC_DEFAULT_ROOT: usize = 0;
/// Values stored per joint in the MSR skeleton text format.
pub const MSR_VALUES_PER_JOINT: usize = 4;

/// A 3D joint position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Joint {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::Domain(format!(
                "joint coordinates must be finite, got ({x}, {y}, {z})"
            )));
        }
        Ok(Joint { x, y, z })
    }

    pub fn distance_sq(&self, other: &Joint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }
}

/// One recorded gesture: `T` frames of `k` coordinates each.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub id: String,
    pub label: String,
    pub subject: String,
    pub rate_hz: Option<f64>,
    n_joints: usize,
    dim: usize,
    data: Vec<f64>,
    relativized: bool,
}

impl PoseSequence {
    /// Builds a sequence from per-frame vectors.
    ///
    /// The frame dimension decides whether the sequence is raw (`3·N`) or
    /// already root-relative (`3·(N−1)`); anything else is rejected.
    pub fn from_frames(
        id: impl Into<String>,
        label: impl Into<String>,
        subject: impl Into<String>,
        n_joints: usize,
        frames: &[Vec<f64>],
    ) -> Result<Self> {
        let id = id.into();
        let Some(first) = frames.first() else {
            return Err(Error::EmptySequence(Some(id)));
        };
        let dim = first.len();
        let mut data = Vec::with_capacity(dim * frames.len());
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != dim {
                return Err(Error::Dimension(format!(
                    "sequence {id}: frame {t} has {} values, frame 0 has {dim}",
                    frame.len()
                )));
            }
            data.extend_from_slice(frame);
        }
        let relativized = relativized_for(n_joints, dim)
            .ok_or_else(|| {
                Error::Dimension(format!(
                    "sequence {id}: frame dimension {dim} matches neither 3·N nor 3·(N−1) for N = {n_joints}"
                ))
            })?;
        Self::from_flat(id, label, subject, n_joints, dim, data, relativized)
    }

    /// Builds a sequence from contiguous row-major frame data.
    pub fn from_flat(
        id: impl Into<String>,
        label: impl Into<String>,
        subject: impl Into<String>,
        n_joints: usize,
        dim: usize,
        data: Vec<f64>,
        relativized: bool,
    ) -> Result<Self> {
        let id = id.into();
        if n_joints == 0 {
            return Err(Error::Param(format!("sequence {id}: n_joints must be positive")));
        }
        let expected = if relativized { 3 * (n_joints - 1) } else { 3 * n_joints };
        if dim != expected || dim == 0 {
            return Err(Error::Dimension(format!(
                "sequence {id}: dimension {dim} inconsistent with {n_joints} joints (relativized: {relativized})"
            )));
        }
        if data.is_empty() {
            return Err(Error::EmptySequence(Some(id)));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!(
                "sequence {id}: {} values is not a whole number of {dim}-dimensional frames",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "sequence {id}: non-finite value in frame {}",
                pos / dim
            )));
        }
        Ok(PoseSequence {
            id,
            label: label.into(),
            subject: subject.into(),
            rate_hz: None,
            n_joints,
            dim,
            data,
            relativized,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    /// Pose vector dimension `k`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_relativized(&self) -> bool {
        self.relativized
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Joint `j` of frame `t`.
    pub fn joint(&self, t: usize, j: usize) -> Joint {
        let f = self.frame(t);
        Joint {
            x: f[3 * j],
            y: f[3 * j + 1],
            z: f[3 * j + 2],
        }
    }

    /// Number of joints stored per frame (one less than `n_joints` once relativized).
    pub fn stored_joints(&self) -> usize {
        self.dim / 3
    }
}

fn relativized_for(n_joints: usize, dim: usize) -> Option<bool> {
    if n_joints == 0 {
        None
    } else if dim == 3 * n_joints {
        Some(false)
    } else if n_joints > 1 && dim == 3 * (n_joints - 1) {
        Some(true)
    } else {
        None
    }
}

/// Translates every frame so the root joint sits at the origin, then drops it.
pub fn root_relativize(seq: &PoseSequence, root_joint: usize) -> Result<PoseSequence> {
    if seq.relativized {
        return Err(Error::State(format!(
            "sequence {} is already root-relative",
            seq.id
        )));
    }
    let n = seq.n_joints;
    if root_joint >= n {
        return Err(Error::Index(format!(
            "root joint {root_joint} out of range for {n} joints"
        )));
    }
    if n < 2 {
        return Err(Error::Dimension(format!(
            "sequence {}: need at least two joints to relativize",
            seq.id
        )));
    }
    let dim = 3 * (n - 1);
    let mut data = Vec::with_capacity(dim * seq.n_frames());
    for frame in seq.frames() {
        let root = &frame[3 * root_joint..3 * root_joint + 3];
        for (j, joint) in frame.chunks_exact(3).enumerate() {
            if j == root_joint {
                continue;
            }
            data.extend(joint.iter().zip(root).map(|(v, r)| v - r));
        }
    }
    let mut out = PoseSequence::from_flat(
        seq.id.clone(),
        seq.label.clone(),
        seq.subject.clone(),
        n,
        dim,
        data,
        true,
    )?;
    out.rate_hz = seq.rate_hz;
    Ok(out)
}

/// A validated collection of sequences sharing one pose dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    sequences: Vec<PoseSequence>,
    class_set: Vec<String>,
    subject_set: Vec<String>,
}

impl Dataset {
    /// Validates dimension homogeneity and rejects duplicate
    /// `(label, subject, id)` triples. Class and subject sets are sorted.
    pub fn new(sequences: Vec<PoseSequence>) -> Result<Self> {
        if let Some(first) = sequences.first() {
            let dim = first.dim();
            for s in &sequences {
                if s.dim() != dim {
                    return Err(Error::Dimension(format!(
                        "sequence {} has pose dimension {}, expected {dim} (from sequence {})",
                        s.id,
                        s.dim(),
                        first.id
                    )));
                }
            }
        }
        let mut seen = HashSet::new();
        for s in &sequences {
            if !seen.insert((s.label.as_str(), s.subject.as_str(), s.id.as_str())) {
                return Err(Error::Schema {
                    line: 0,
                    message: format!(
                        "duplicate sequence (label {}, subject {}, id {})",
                        s.label, s.subject, s.id
                    ),
                });
            }
        }
        let class_set = sorted_distinct(sequences.iter().map(|s| s.label.as_str()));
        let subject_set = sorted_distinct(sequences.iter().map(|s| s.subject.as_str()));
        Ok(Dataset {
            sequences,
            class_set,
            subject_set,
        })
    }

    pub fn sequences(&self) -> &[PoseSequence] {
        &self.sequences
    }

    pub fn class_set(&self) -> &[String] {
        &self.class_set
    }

    pub fn subject_set(&self) -> &[String] {
        &self.subject_set
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Shared pose dimension, `None` for an empty dataset.
    pub fn dim(&self) -> Option<usize> {
        self.sequences.first().map(PoseSequence::dim)
    }

    /// Root-relativizes every sequence that is still raw.
    pub fn relativized(&self, root_joint: usize) -> Result<Dataset> {
        let seqs = self
            .sequences
            .iter()
            .map(|s| {
                if s.is_relativized() {
                    Ok(s.clone())
                } else {
                    root_relativize(s, root_joint).map_err(|e| e.context(format!("sequence {}", s.id)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(seqs)
    }
}

fn sorted_distinct<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = values.map(str::to_owned).collect();
    v.sort();
    v.dedup();
    v
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenericRecord {
    id: String,
    #[serde(default)]
    label: String,
    #[serde(default)]
    subject: String,
    #[serde(default)]
    rate_hz: Option<f64>,
    n_joints: usize,
    frames: Vec<Vec<f64>>,
}

/// Parses the JSON-lines dataset format.
///
/// Each non-blank line is one object:
/// `{"id", "label", "subject", "rate_hz": number|null, "n_joints", "frames": [[..k..], ..]}`.
/// A frame width of `3·n_joints` marks a raw sequence, `3·(n_joints−1)` a
/// root-relative one. `label` and `subject` may be omitted (empty) for
/// sequences that are only to be classified.
pub fn parse_generic(document: &str) -> Result<Dataset> {
    let mut sequences = Vec::new();
    let mut dim: Option<(usize, usize)> = None;
    for (idx, line) in document.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GenericRecord = serde_json::from_str(line).map_err(|e| Error::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.frames.is_empty() {
            return Err(Error::EmptySequence(Some(format!("line {line_no}: {}", rec.id))));
        }
        if let Some(rate) = rec.rate_hz {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::Schema {
                    line: line_no,
                    message: format!("rate_hz must be positive, got {rate}"),
                });
            }
        }
        for (t, frame) in rec.frames.iter().enumerate() {
            let k = frame.len();
            match dim {
                None => dim = Some((k, line_no)),
                Some((expected, from)) if expected != k => {
                    return Err(Error::Dimension(format!(
                        "line {line_no} (sequence {}): frame {t} has {k} values, expected {expected} as on line {from}",
                        rec.id
                    )))
                }
                _ => {}
            }
        }
        if relativized_for(rec.n_joints, rec.frames[0].len()).is_none() {
            return Err(Error::Schema {
                line: line_no,
                message: format!(
                    "frame width {} does not match n_joints = {}",
                    rec.frames[0].len(),
                    rec.n_joints
                ),
            });
        }
        let mut seq = PoseSequence::from_frames(rec.id, rec.label, rec.subject, rec.n_joints, &rec.frames)
            .map_err(|e| e.context(format!("line {line_no}")))?;
        seq.rate_hz = rec.rate_hz;
        sequences.push(seq);
    }
    Dataset::new(sequences)
}

/// Serializes a dataset to the JSON-lines format read by [`parse_generic`].
pub fn write_generic(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for s in dataset.sequences() {
        let rec = GenericRecord {
            id: s.id.clone(),
            label: s.label.clone(),
            subject: s.subject.clone(),
            rate_hz: s.rate_hz,
            n_joints: s.n_joints(),
            frames: s.frames().map(<[f64]>::to_vec).collect(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses an MSR-style skeleton stream of `x y z confidence` quadruples.
///
/// The frame count is inferred from the token count. With `has_header`, each
/// frame is preceded by one line of integers (frame or row counts in some
/// exports) which is skipped. The confidence column is discarded. The
/// returned sequence is raw (`3·n_joints` per frame) with empty metadata.
pub fn parse_msr_skeleton(text: &str, n_joints: usize, has_header: bool) -> Result<PoseSequence> {
    if n_joints == 0 {
        return Err(Error::Param("n_joints must be positive".into()));
    }
    let per_frame = n_joints * MSR_VALUES_PER_JOINT;
    let mut values = Vec::new();
    let mut token_index = 0usize;
    let mut in_frame = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if has_header && in_frame == 0 {
            for tok in &tokens {
                token_index += 1;
                if tok.parse::<i64>().is_err() {
                    return Err(Error::Parse {
                        line: line_no,
                        token: token_index,
                        message: format!("expected integer header, found {tok:?}"),
                    });
                }
            }
            in_frame = per_frame;
            continue;
        }
        for tok in tokens {
            token_index += 1;
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                token: token_index,
                message: format!("not a number: {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    token: token_index,
                    message: format!("non-finite value {tok:?}"),
                });
            }
            values.push(v);
            if has_header {
                in_frame = in_frame.saturating_sub(1);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::EmptySequence(None));
    }
    if values.len() % per_frame != 0 {
        return Err(Error::MalformedFile(format!(
            "{} values is not a multiple of {per_frame} ({n_joints} joints × {MSR_VALUES_PER_JOINT})",
            values.len()
        )));
    }
    let data: Vec<f64> = values
        .chunks_exact(MSR_VALUES_PER_JOINT)
        .flat_map(|q| q[..3].iter().copied())
        .collect();
    PoseSequence::from_flat("", "", "", n_joints, 3 * n_joints, data, false)
}

/// Extracts `(label, subject)` from MSR file names such as `a01_s02_e03_skeleton3D.txt`.
pub fn parse_msr_file_name(name: &str) -> Option<(String, String)> {
    let mut parts = name.split('_');
    let action = parts.next()?;
    let subject = parts.next()?;
    let valid = |p: &str, prefix: char| {
        p.len() > 1 && p.starts_with(prefix) && p[1..].chars().all(|c| c.is_ascii_digit())
    };
    if valid(action, 'a') && valid(subject, 's') {
        Some((action.to_owned(), subject.to_owned()))
    } else {
        None
    }
}

/// Loads a JSON-lines dataset from disk.
pub fn load_generic(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    parse_generic(&text).map_err(|e| e.context(path.display().to_string()))
}

/// Loads one MSR skeleton file (or every `*.txt` file of a directory, in name
/// order), taking label and subject from the file names.
pub fn load_msr(path: &Path, n_joints: usize, has_header: bool) -> Result<Dataset> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in fs::read_dir(path)? {
            let p = entry?.path();
            if p.is_file() && p.extension().is_some_and(|e| e == "txt") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut sequences = Vec::with_capacity(files.len());
    for file in &files {
        let name = file.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let ctx = || file.display().to_string();
        let (label, subject) = parse_msr_file_name(name).ok_or_else(|| {
            Error::MalformedFile(format!("cannot infer action/subject from file name {name:?}")).context(ctx())
        })?;
        let text = fs::read_to_string(file).map_err(|e| Error::from(e).context(ctx()))?;
        let mut seq = parse_msr_skeleton(&text, n_joints, has_header).map_err(|e| e.context(ctx()))?;
        seq.id = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(name)
            .to_owned();
        seq.label = label;
        seq.subject = subject;
        sequences.push(seq);
    }
    Dataset::new(sequences)
}
