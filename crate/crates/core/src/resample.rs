//! Uniform temporal down-sampling to a fixed number of poses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mocap::PoseSequence;

/// How poses are picked between source frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    /// Nearest source frame; short sequences repeat frames.
    #[default]
    Nearest,
    /// Linear interpolation between the two bracketing frames.
    Linear,
}

/// A sequence of exactly `L` poses of dimension `k`, the unit kernels operate on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedSequence {
    pub id: String,
    pub label: String,
    pub subject: String,
    /// Frame count of the source sequence.
    pub origin_length: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FixedSequence {
    /// Wraps row-major pose data directly (no resampling). Any `L ≥ 1` is
    /// accepted so that kernels can be exercised on arbitrary inputs.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("pose dimension must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::EmptySequence(None));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!(
                "{} values is not a whole number of {dim}-dimensional poses",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("pose values must be finite".into()));
        }
        let len = data.len() / dim;
        Ok(FixedSequence {
            id: String::new(),
            label: String::new(),
            subject: String::new(),
            origin_length: len,
            dim,
            data,
        })
    }

    pub fn from_poses(poses: &[Vec<f64>]) -> Result<Self> {
        let dim = poses.first().map(Vec::len).ok_or(Error::EmptySequence(None))?;
        if poses.iter().any(|p| p.len() != dim) {
            return Err(Error::Dimension("poses have differing dimensions".into()));
        }
        Self::from_flat(dim, poses.concat())
    }

    pub fn with_meta(mut self, id: impl Into<String>, label: impl Into<String>, subject: impl Into<String>) -> Self {
        self.id = id.into();
        self.label = label.into();
        self.subject = subject.into();
        self
    }

    /// Number of poses `L`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pose(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn poses(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Resamples this sequence again (used to re-target a different `L`).
    pub fn resample(&self, poses: usize, mode: ResampleMode) -> Result<FixedSequence> {
        let data = resample_frames(&self.data, self.dim, poses, mode)?;
        Ok(FixedSequence {
            id: self.id.clone(),
            label: self.label.clone(),
            subject: self.subject.clone(),
            origin_length: self.origin_length,
            dim: self.dim,
            data,
        })
    }
}

/// Source frame indices for `poses` outputs from `frames` inputs:
/// `round(i·(T−1)/(L−1))`, ties rounded away from zero.
///
/// Computed in integer arithmetic so exact halves are never mis-rounded.
pub fn uniform_indices(frames: usize, poses: usize) -> Result<Vec<usize>> {
    if poses < 2 {
        return Err(Error::Param(format!("pose count must be at least 2, got {poses}")));
    }
    if frames == 0 {
        return Err(Error::EmptySequence(None));
    }
    let span = frames - 1;
    let den = poses - 1;
    Ok((0..poses).map(|i| (2 * i * span + den) / (2 * den)).collect())
}

fn resample_frames(data: &[f64], dim: usize, poses: usize, mode: ResampleMode) -> Result<Vec<f64>> {
    let frames = data.len() / dim;
    let frame = |t: usize| &data[t * dim..(t + 1) * dim];
    let mut out = Vec::with_capacity(poses * dim);
    match mode {
        ResampleMode::Nearest => {
            for t in uniform_indices(frames, poses)? {
                out.extend_from_slice(frame(t));
            }
        }
        ResampleMode::Linear => {
            // validates the parameters
            uniform_indices(frames, poses)?;
            let span = (frames - 1) as f64;
            for i in 0..poses {
                let pos = i as f64 * span / (poses - 1) as f64;
                let lo = (pos.floor() as usize).min(frames - 1);
                let hi = (lo + 1).min(frames - 1);
                let w = pos - lo as f64;
                out.extend(frame(lo).iter().zip(frame(hi)).map(|(a, b)| a + w * (b - a)));
            }
        }
    }
    Ok(out)
}

/// Down-samples (or over-samples) `seq` to exactly `poses` poses spread evenly
/// along its time axis. The first and last source frames are always kept.
pub fn resample_uniform(seq: &PoseSequence, poses: usize) -> Result<FixedSequence> {
    resample_with(seq, poses, ResampleMode::Nearest)
}

pub fn resample_with(seq: &PoseSequence, poses: usize, mode: ResampleMode) -> Result<FixedSequence> {
    let data = resample_frames(seq.data(), seq.dim(), poses, mode)
        .map_err(|e| e.context(format!("sequence {}", seq.id)))?;
    Ok(FixedSequence {
        id: seq.id.clone(),
        label: seq.label.clone(),
        subject: seq.subject.clone(),
        origin_length: seq.n_frames(),
        dim: seq.dim(),
        data,
    })
}
