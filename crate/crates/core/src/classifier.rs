//! End-to-end gesture classifier: root-relativize, down-sample, score against
//! the support sequences and vote.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{gram_train, with_workers};
use crate::kernels::{raw_statistic, wrap_raw, KernelSpec};
use crate::mocap::{root_relativize, Dataset, PoseSequence};
use crate::resample::{resample_with, FixedSequence, ResampleMode};
use crate::svm::{train_multiclass, SmoOptions, SvmModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSequence {
    /// Position in the model's training set.
    pub index: usize,
    pub sequence: FixedSequence,
}

/// A trained multiclass model together with everything needed to score raw
/// sequences: pose count, resampling mode and the support sequences.
///
/// Serialized as the model file: the SVM fields (`spec`, `class_set`,
/// `train_ids`, `binaries`) at top level plus `poses`, `resample`,
/// `root_joint` and `support_vectors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureClassifier {
    #[serde(flatten)]
    pub model: SvmModel,
    pub poses: usize,
    #[serde(default)]
    pub resample: ResampleMode,
    /// Root joint used to relativize raw input sequences.
    pub root_joint: Option<usize>,
    pub support_vectors: Vec<SupportSequence>,
    #[serde(skip)]
    lookup: Vec<Option<usize>>,
}

/// Options for [`GestureClassifier::train`].
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub poses: usize,
    pub resample: ResampleMode,
    pub root_joint: Option<usize>,
    pub c: f64,
    pub smo: SmoOptions,
    pub workers: Option<usize>,
}

/// Resamples every sequence, relativizing raw ones first when a root is given.
pub fn prepare(
    sequences: &[PoseSequence],
    poses: usize,
    mode: ResampleMode,
    root_joint: Option<usize>,
) -> Result<Vec<FixedSequence>> {
    sequences
        .iter()
        .map(|s| prepare_one(s, poses, mode, root_joint))
        .collect()
}

fn prepare_one(seq: &PoseSequence, poses: usize, mode: ResampleMode, root_joint: Option<usize>) -> Result<FixedSequence> {
    match root_joint {
        Some(root) if !seq.is_relativized() => resample_with(&root_relativize(seq, root)?, poses, mode),
        _ => resample_with(seq, poses, mode),
    }
}

impl GestureClassifier {
    /// Trains on the full dataset. Returns the classifier and its training
    /// accuracy in percent.
    pub fn train(dataset: &Dataset, spec: &KernelSpec, opts: &TrainOptions) -> Result<(Self, f64)> {
        if dataset.is_empty() {
            return Err(Error::EmptySequence(Some("no training sequences".into())));
        }
        let fixed = prepare(dataset.sequences(), opts.poses, opts.resample, opts.root_joint)?;
        let labels: Vec<String> = fixed.iter().map(|s| s.label.clone()).collect();
        let (gram, fitted) = gram_train(&fixed, spec, opts.workers)?;
        let model = with_workers(opts.workers, || train_multiclass(&gram, &labels, opts.c, &opts.smo))?;
        debug_assert_eq!(model.spec, fitted);
        let predicted = model.predict(&gram)?;
        let correct = predicted.iter().zip(&labels).filter(|(p, l)| p == l).count();
        let accuracy = 100.0 * correct as f64 / labels.len() as f64;
        let support_vectors = model
            .support_union()
            .into_iter()
            .map(|i| SupportSequence {
                index: i,
                sequence: fixed[i].clone(),
            })
            .collect();
        let mut clf = GestureClassifier {
            model,
            poses: opts.poses,
            resample: opts.resample,
            root_joint: opts.root_joint,
            support_vectors,
            lookup: Vec::new(),
        };
        clf.build_lookup()?;
        Ok((clf, accuracy))
    }

    fn build_lookup(&mut self) -> Result<()> {
        let n = self.model.train_ids.len();
        let mut lookup = vec![None; n];
        for (k, sv) in self.support_vectors.iter().enumerate() {
            if sv.index >= n {
                return Err(Error::Schema {
                    line: 0,
                    message: format!("support vector index {} outside training set of {n}", sv.index),
                });
            }
            lookup[sv.index] = Some(k);
        }
        for b in &self.model.binaries {
            if let Some(&i) = b.support_indices.iter().find(|&&i| i >= n || lookup[i].is_none()) {
                return Err(Error::Schema {
                    line: 0,
                    message: format!("support index {i} has no stored sequence"),
                });
            }
        }
        self.lookup = lookup;
        Ok(())
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.model.spec
    }

    /// Kernel values between `query` and every support sequence.
    pub fn kernel_row(&self, query: &FixedSequence) -> Result<Vec<f64>> {
        let spec = &self.model.spec;
        self.support_vectors
            .iter()
            .map(|sv| wrap_raw(spec, raw_statistic(spec, query, &sv.sequence)?))
            .collect()
    }

    /// Label of an already resampled sequence.
    pub fn classify_fixed(&self, query: &FixedSequence) -> Result<String> {
        let row = self.kernel_row(query)?;
        let lookup = &self.lookup;
        let k = self.model.vote(|i| row[lookup[i].expect("support vector present")]);
        Ok(self.model.class_set[k].clone())
    }

    /// Label of a raw or relativized sequence of any length.
    pub fn classify(&self, seq: &PoseSequence) -> Result<String> {
        let fixed = prepare_one(seq, self.poses, self.resample, self.root_joint)?;
        self.classify_fixed(&fixed)
    }

    /// Labels in input order, classified in parallel.
    pub fn classify_many(&self, seqs: &[PoseSequence], workers: Option<usize>) -> Result<Vec<String>> {
        with_workers(workers, || seqs.par_iter().map(|s| self.classify(s)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut clf: GestureClassifier = serde_json::from_str(text)?;
        // validates the binary count
        SvmModel::from_json(&serde_json::to_string(&clf.model)?)?;
        if !clf.model.spec.is_fitted() {
            return Err(Error::State("model file carries an unfitted rdtw spec".into()));
        }
        clf.build_lookup()?;
        Ok(clf)
    }
}

/// Per-call latency summary in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub samples: usize,
}

/// Times [`GestureClassifier::classify`] on each sample sequence `repeats`
/// times after `warmup` discarded passes, single-threaded.
pub fn benchmark_latency(
    clf: &GestureClassifier,
    samples: &[PoseSequence],
    warmup: usize,
    repeats: usize,
) -> Result<LatencyStats> {
    if samples.is_empty() || repeats == 0 {
        return Err(Error::Param("benchmark needs samples and at least one repeat".into()));
    }
    for _ in 0..warmup {
        for s in samples {
            std::hint::black_box(clf.classify(s)?);
        }
    }
    let mut times = Vec::with_capacity(samples.len() * repeats);
    for _ in 0..repeats {
        for s in samples {
            let start = Instant::now();
            std::hint::black_box(clf.classify(s)?);
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    times.sort_by(f64::total_cmp);
    let pick = |q: f64| times[((times.len() - 1) as f64 * q).round() as usize];
    Ok(LatencyStats {
        median_ms: pick(0.5),
        p95_ms: pick(0.95),
        mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        samples: times.len(),
    })
}
