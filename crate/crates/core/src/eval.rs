//! Evaluation protocol: subject-wise and k-fold splits, experiments over
//! split sets, hyperparameter grids, report files and latency sweeps.
//!
//! Kernel values do not depend on the split, so an experiment computes one raw
//! matrix over the whole dataset (optionally through a [`GramCache`]) and
//! slices it per split. Only the rdtw normalization and the bandwidth are
//! fitted per split, and only from that split's training block.

use std::cmp::Ordering;
use std::io::Write;
use std::time::Instant;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{benchmark_latency, prepare, GestureClassifier, LatencyStats, TrainOptions};
use crate::error::{Error, Result};
use crate::gram::{finalize_cross, finalize_train, raw_gram, with_workers, GramCache, GramMatrix};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::mocap::Dataset;
use crate::resample::{FixedSequence, ResampleMode};
use crate::svm::{train_multiclass, SmoOptions};

/// Default stiffness grid.
pub const DEFAULT_NU_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
/// Default bandwidth grid, in multiples of the median training-pair statistic.
pub const DEFAULT_SIGMA_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
/// Pose counts swept for accuracy curves.
pub const DEFAULT_POSE_GRID: [usize; 6] = [5, 10, 15, 20, 25, 30];

/// One train/test partition, as indices into the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub name: String,
    /// Empty for k-fold plans, where subjects are shared.
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn plan_from_subjects(dataset: &Dataset, train_subjects: Vec<String>, test_subjects: Vec<String>) -> SplitPlan {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in dataset.sequences().iter().enumerate() {
        if train_subjects.contains(&s.subject) {
            train.push(i);
        } else if test_subjects.contains(&s.subject) {
            test.push(i);
        }
    }
    SplitPlan {
        name: format!("{}|{}", train_subjects.join("+"), test_subjects.join("+")),
        train_subjects,
        test_subjects,
        train,
        test,
    }
}

/// Every way to pick `n_train` training subjects, the rest testing, in
/// lexicographic order of the (sorted) subject ids.
pub fn subject_splits(dataset: &Dataset, n_train: usize) -> Result<Vec<SplitPlan>> {
    let subjects = dataset.subject_set();
    if n_train == 0 || n_train >= subjects.len() {
        return Err(Error::Param(format!(
            "n_train must be between 1 and {} for {} subjects, got {n_train}",
            subjects.len().saturating_sub(1),
            subjects.len()
        )));
    }
    Ok((0..subjects.len())
        .combinations(n_train)
        .map(|chosen| {
            let train: Vec<String> = chosen.iter().map(|&i| subjects[i].clone()).collect();
            let test: Vec<String> = subjects.iter().filter(|s| !train.contains(s)).cloned().collect();
            plan_from_subjects(dataset, train, test)
        })
        .collect())
}

/// A single plan with explicitly named training and testing subjects.
pub fn fixed_split(dataset: &Dataset, train_subjects: &[String], test_subjects: &[String]) -> Result<SplitPlan> {
    if train_subjects.is_empty() || test_subjects.is_empty() {
        return Err(Error::Param("fixed split needs training and testing subjects".into()));
    }
    for s in train_subjects.iter().chain(test_subjects) {
        if !dataset.subject_set().contains(s) {
            return Err(Error::Param(format!("unknown subject {s:?}")));
        }
    }
    if let Some(s) = train_subjects.iter().find(|s| test_subjects.contains(s)) {
        return Err(Error::Param(format!("subject {s:?} is in both training and testing sets")));
    }
    Ok(plan_from_subjects(dataset, train_subjects.to_vec(), test_subjects.to_vec()))
}

/// Stratified k-fold partition of the whole dataset.
pub fn kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    kfold_subset(dataset, &all, k, seed)
}

/// Stratified k-fold partition of `indices`. Each class is shuffled with the
/// seeded generator, classes are concatenated in class order and dealt to
/// folds round-robin, so fold sizes differ by at most one.
pub fn kfold_subset(dataset: &Dataset, indices: &[usize], k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if k < 2 {
        return Err(Error::Param(format!("k-fold needs k ≥ 2, got {k}")));
    }
    if k > indices.len() {
        return Err(Error::Param(format!(
            "k-fold with k = {k} on only {} sequences",
            indices.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs = dataset.sequences();
    let mut order = Vec::with_capacity(indices.len());
    for class in dataset.class_set() {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| &seqs[i].label == class).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    let mut folds = vec![Vec::new(); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok((0..k)
        .map(|f| {
            let mut train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            train.sort_unstable();
            SplitPlan {
                name: format!("fold{f:02}"),
                train_subjects: Vec::new(),
                test_subjects: Vec::new(),
                train,
                test: folds[f].clone(),
            }
        })
        .collect())
}

/// Bandwidth, either absolute or relative to the median training-pair
/// statistic (`d²`, `d_dtw` or `β·𝒦^α`) of each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRule {
    pub value: f64,
    pub relative: bool,
}

impl SigmaRule {
    pub fn absolute(value: f64) -> Self {
        SigmaRule { value, relative: false }
    }

    pub fn relative(value: f64) -> Self {
        SigmaRule { value, relative: true }
    }
}

/// Everything that defines one evaluated model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub poses: usize,
    pub family: KernelFamily,
    pub nu: f64,
    pub sigma: SigmaRule,
    pub c: f64,
    #[serde(default)]
    pub corridor: Option<usize>,
    #[serde(default)]
    pub resample: ResampleMode,
}

impl ExperimentConfig {
    fn raw_spec(&self) -> Result<KernelSpec> {
        Ok(KernelSpec::new(self.family, self.nu, 1.0)?.with_corridor(self.corridor))
    }

    fn validate(&self) -> Result<()> {
        self.raw_spec()?;
        if !(self.sigma.value.is_finite() && self.sigma.value > 0.0) {
            return Err(Error::Param(format!("sigma must be positive, got {}", self.sigma.value)));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Param(format!("C must be positive, got {}", self.c)));
        }
        if self.poses < 2 {
            return Err(Error::Param(format!("pose count must be at least 2, got {}", self.poses)));
        }
        Ok(())
    }

    /// Ordering key used to break grid ties: smallest (ν, σ, C, L) first.
    fn tie_key(&self) -> (f64, f64, f64, usize) {
        (self.nu, self.sigma.value, self.c, self.poses)
    }
}

/// Runtime knobs shared by experiments.
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub workers: Option<usize>,
    pub cache: Option<GramCache>,
    pub smo: SmoOptions,
    /// Root joint for datasets that are not yet relativized.
    pub root_joint: Option<usize>,
}

/// Outcome of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub index: usize,
    pub name: String,
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    /// Bandwidth actually used (after median scaling).
    pub sigma_used: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Rows: true class, columns: predicted class, both in class-set order.
    pub confusion: Vec<Vec<usize>>,
    pub converged: bool,
}

/// Wall-clock measurements; excluded from the CSV outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub gram_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub class_set: Vec<String>,
    pub splits: Vec<SplitResult>,
    pub mean_train: f64,
    pub std_train: f64,
    pub mean_test: f64,
    pub std_test: f64,
    pub timings: Timings,
}

/// Mean and sample standard deviation (`n − 1` denominator, 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of the wrapped-kernel argument over the `i < j` pairs of a raw
/// training block (all pairs if only the diagonal exists).
fn median_statistic(raw_train: &GramMatrix, fitted: &KernelSpec) -> f64 {
    let mut values = raw_train.upper_triangle(false);
    if values.is_empty() {
        values = raw_train.upper_triangle(true);
    }
    if let Some(norm) = fitted.normalization {
        values.iter_mut().for_each(|v| *v = norm.apply_log(*v));
    }
    median(values)
}

/// Absolute bandwidth for a raw training block. A relative rule falls back
/// to its bare value when the median statistic is not positive.
pub fn resolve_sigma(raw_train: &GramMatrix, spec: &KernelSpec, rule: SigmaRule) -> Result<f64> {
    if !rule.relative {
        return Ok(rule.value);
    }
    let (_, fitted) = finalize_train(raw_train, spec)?;
    let med = median_statistic(raw_train, &fitted);
    if med.is_finite() && med > 0.0 {
        Ok(rule.value * med)
    } else {
        log::warn!("median statistic {med} unusable, using sigma = {}", rule.value);
        Ok(rule.value)
    }
}

/// Resampled sequences plus the raw matrix over the whole dataset.
pub struct PreparedExperiment {
    pub fixed: Vec<FixedSequence>,
    pub labels: Vec<String>,
    pub raw: GramMatrix,
    pub gram_seconds: f64,
}

/// Resamples the dataset and computes (or loads) the raw matrix for
/// `config`'s family, stiffness and corridor.
pub fn prepare_experiment(dataset: &Dataset, config: &ExperimentConfig, opts: &EvalOptions) -> Result<PreparedExperiment> {
    let fixed = prepare(dataset.sequences(), config.poses, config.resample, opts.root_joint)?;
    let labels = fixed.iter().map(|s| s.label.clone()).collect();
    let spec = config.raw_spec()?;
    let start = Instant::now();
    let raw = match &opts.cache {
        Some(cache) => cache.raw_gram(&fixed, &spec, opts.workers)?,
        None => raw_gram(&fixed, &spec, opts.workers)?,
    };
    Ok(PreparedExperiment {
        fixed,
        labels,
        raw,
        gram_seconds: start.elapsed().as_secs_f64(),
    })
}

fn evaluate_split(
    prepared: &PreparedExperiment,
    class_set: &[String],
    index: usize,
    plan: &SplitPlan,
    config: &ExperimentConfig,
    smo: &SmoOptions,
) -> Result<SplitResult> {
    if plan.train.is_empty() || plan.test.is_empty() {
        return Err(Error::Param(format!("split {} has an empty side", plan.name)));
    }
    let spec = config.raw_spec()?;
    let raw_train = prepared.raw.select(&plan.train, &plan.train);
    let sigma_used = resolve_sigma(&raw_train, &spec, config.sigma)
        .map_err(|e| e.context(format!("split {}", plan.name)))?;
    let spec = spec.with_sigma(sigma_used);
    let (gram, fitted) = finalize_train(&raw_train, &spec)?;
    let train_labels: Vec<String> = plan.train.iter().map(|&i| prepared.labels[i].clone()).collect();
    let model = train_multiclass(&gram, &train_labels, config.c, smo)?;
    let train_pred = model.predict(&gram)?;
    let cross = finalize_cross(&prepared.raw.select(&plan.test, &plan.train), &fitted)?;
    let test_pred = model.predict(&cross)?;

    let class_index = |l: &String| class_set.iter().position(|c| c == l).expect("label in class set");
    let mut confusion = vec![vec![0usize; class_set.len()]; class_set.len()];
    let mut correct = 0usize;
    for (&i, p) in plan.test.iter().zip(&test_pred) {
        let truth = &prepared.labels[i];
        confusion[class_index(truth)][class_index(p)] += 1;
        if truth == p {
            correct += 1;
        }
    }
    let train_correct = train_pred.iter().zip(&train_labels).filter(|(p, l)| p == l).count();
    Ok(SplitResult {
        index,
        name: plan.name.clone(),
        train_subjects: plan.train_subjects.clone(),
        test_subjects: plan.test_subjects.clone(),
        n_train: plan.train.len(),
        n_test: plan.test.len(),
        sigma_used,
        train_accuracy: 100.0 * train_correct as f64 / plan.train.len() as f64,
        test_accuracy: 100.0 * correct as f64 / plan.test.len() as f64,
        confusion,
        converged: model.binaries.iter().all(|b| b.converged),
    })
}

/// Evaluates `plans` on an already prepared raw matrix.
pub fn run_prepared(
    dataset: &Dataset,
    prepared: &PreparedExperiment,
    plans: &[SplitPlan],
    config: &ExperimentConfig,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    config.validate()?;
    if plans.is_empty() {
        return Err(Error::Param("no split plans to evaluate".into()));
    }
    let start = Instant::now();
    let class_set = dataset.class_set();
    let splits = with_workers(opts.workers, || {
        plans
            .par_iter()
            .enumerate()
            .map(|(i, plan)| {
                evaluate_split(prepared, class_set, i, plan, config, &opts.smo)
                    .map_err(|e| e.context(format!("split {}", plan.name)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let train: Vec<f64> = splits.iter().map(|s| s.train_accuracy).collect();
    let test: Vec<f64> = splits.iter().map(|s| s.test_accuracy).collect();
    let (mean_train, std_train) = mean_std(&train);
    let (mean_test, std_test) = mean_std(&test);
    Ok(EvalReport {
        config: config.clone(),
        class_set: class_set.to_vec(),
        splits,
        mean_train,
        std_train,
        mean_test,
        std_test,
        timings: Timings {
            gram_seconds: prepared.gram_seconds,
            total_seconds: prepared.gram_seconds + start.elapsed().as_secs_f64(),
        },
    })
}

/// Resample → kernel → fit → train → predict for every plan, aggregated.
pub fn run_experiment(
    dataset: &Dataset,
    plans: &[SplitPlan],
    config: &ExperimentConfig,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptySequence(Some("dataset has no sequences".into())));
    }
    let prepared = prepare_experiment(dataset, config, opts)?;
    run_prepared(dataset, &prepared, plans, config, opts)
}

/// Axes of a hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub poses: Vec<usize>,
    pub nu: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default = "default_true")]
    pub sigma_relative: bool,
    pub c: Vec<f64>,
}

fn default_true() -> bool {
    true
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            poses: vec![15],
            nu: DEFAULT_NU_GRID.to_vec(),
            sigma: DEFAULT_SIGMA_GRID.to_vec(),
            sigma_relative: true,
            c: crate::svm::DEFAULT_C_GRID.to_vec(),
        }
    }
}

fn dedup_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

impl GridSpec {
    /// Sorted, de-duplicated axes; the stiffness axis collapses to its
    /// smallest value for families that ignore it.
    pub fn normalized(&self, family: KernelFamily) -> Result<GridSpec> {
        let mut poses = self.poses.clone();
        poses.sort_unstable();
        poses.dedup();
        let mut nu = dedup_sorted(self.nu.clone());
        if !family.uses_nu() {
            nu.truncate(1);
        }
        let g = GridSpec {
            poses,
            nu,
            sigma: dedup_sorted(self.sigma.clone()),
            sigma_relative: self.sigma_relative,
            c: dedup_sorted(self.c.clone()),
        };
        if g.poses.is_empty() || g.nu.is_empty() || g.sigma.is_empty() || g.c.is_empty() {
            return Err(Error::Param("every grid axis needs at least one value".into()));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub best: ExperimentConfig,
    pub best_mean_test: f64,
    /// One report per evaluated configuration, in evaluation order.
    pub entries: Vec<EvalReport>,
}

/// Evaluates every grid point on `plans` and selects the best mean test
/// accuracy; ties go to the smallest (ν, σ, C, L).
pub fn grid_search(
    dataset: &Dataset,
    plans: &[SplitPlan],
    family: KernelFamily,
    grid: &GridSpec,
    base: &ExperimentConfig,
    opts: &EvalOptions,
) -> Result<GridReport> {
    let grid = grid.normalized(family)?;
    let mut entries = Vec::new();
    for &poses in &grid.poses {
        for &nu in &grid.nu {
            let head = ExperimentConfig {
                poses,
                family,
                nu,
                sigma: SigmaRule { value: grid.sigma[0], relative: grid.sigma_relative },
                c: grid.c[0],
                ..base.clone()
            };
            head.validate()?;
            let prepared = prepare_experiment(dataset, &head, opts)?;
            for &sigma in &grid.sigma {
                for &c in &grid.c {
                    let config = ExperimentConfig {
                        sigma: SigmaRule { value: sigma, relative: grid.sigma_relative },
                        c,
                        ..head.clone()
                    };
                    entries.push(run_prepared(dataset, &prepared, plans, &config, opts)?);
                }
            }
        }
    }
    let best = entries
        .iter()
        .min_by(|a, b| {
            b.mean_test
                .total_cmp(&a.mean_test)
                .then_with(|| cmp_key(a.config.tie_key(), b.config.tie_key()))
        })
        .expect("grid is non-empty");
    Ok(GridReport {
        best: best.config.clone(),
        best_mean_test: best.mean_test,
        entries,
    })
}

fn cmp_key(a: (f64, f64, f64, usize), b: (f64, f64, f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.total_cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

/// Column order of the per-split CSV.
pub const SPLIT_CSV_HEADER: [&str; 17] = [
    "kernel",
    "poses",
    "nu",
    "sigma",
    "sigma_relative",
    "c",
    "corridor",
    "split",
    "split_name",
    "train_subjects",
    "test_subjects",
    "n_train",
    "n_test",
    "sigma_used",
    "train_accuracy",
    "test_accuracy",
    "converged",
];

/// One row per split per report; no timing columns, so output is
/// reproducible byte for byte.
pub fn write_splits_csv(reports: &[EvalReport], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SPLIT_CSV_HEADER)?;
    for r in reports {
        let c = &r.config;
        for s in &r.splits {
            out.write_record([
                c.family.to_string(),
                c.poses.to_string(),
                c.nu.to_string(),
                c.sigma.value.to_string(),
                c.sigma.relative.to_string(),
                c.c.to_string(),
                c.corridor.map(|w| w.to_string()).unwrap_or_default(),
                s.index.to_string(),
                s.name.clone(),
                s.train_subjects.join(";"),
                s.test_subjects.join(";"),
                s.n_train.to_string(),
                s.n_test.to_string(),
                s.sigma_used.to_string(),
                s.train_accuracy.to_string(),
                s.test_accuracy.to_string(),
                s.converged.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Accuracy-versus-pose-count curve: `poses,kernel,mean_train_accuracy,mean_test_accuracy,std_test_accuracy`.
pub fn write_curve_csv(reports: &[EvalReport], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["poses", "kernel", "mean_train_accuracy", "mean_test_accuracy", "std_test_accuracy"])?;
    for r in reports {
        out.write_record([
            r.config.poses.to_string(),
            r.config.family.to_string(),
            r.mean_train.to_string(),
            r.mean_test.to_string(),
            r.std_test.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One line of a latency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub poses: usize,
    pub family: KernelFamily,
    pub n_train: usize,
    pub n_support: usize,
    pub stats: LatencyStats,
}

/// Trains one classifier per (family, pose count) on `train` and times the
/// classification of each `samples` sequence.
pub fn latency_sweep(
    dataset: &Dataset,
    train: &[usize],
    samples: &[usize],
    configs: &[ExperimentConfig],
    opts: &EvalOptions,
    warmup: usize,
    repeats: usize,
) -> Result<Vec<LatencyRow>> {
    let train_set = Dataset::new(train.iter().map(|&i| dataset.sequences()[i].clone()).collect())?;
    let sample_seqs: Vec<_> = samples.iter().map(|&i| dataset.sequences()[i].clone()).collect();
    let mut rows = Vec::new();
    for config in configs {
        config.validate()?;
        let prepared = prepare_experiment(&train_set, config, &EvalOptions { cache: None, ..opts.clone() })?;
        let sigma = resolve_sigma(&prepared.raw, &config.raw_spec()?, config.sigma)?;
        let spec = config.raw_spec()?.with_sigma(sigma);
        let (clf, _) = GestureClassifier::train(
            &train_set,
            &spec,
            &TrainOptions {
                poses: config.poses,
                resample: config.resample,
                root_joint: opts.root_joint,
                c: config.c,
                smo: opts.smo,
                workers: opts.workers,
            },
        )?;
        let stats = benchmark_latency(&clf, &sample_seqs, warmup, repeats)?;
        rows.push(LatencyRow {
            poses: config.poses,
            family: config.family,
            n_train: train.len(),
            n_support: clf.support_vectors.len(),
            stats,
        });
    }
    Ok(rows)
}

/// `poses,kernel,n_train,n_support,median_ms,p95_ms,mean_ms`.
pub fn write_latency_csv(rows: &[LatencyRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["poses", "kernel", "n_train", "n_support", "median_ms", "p95_ms", "mean_ms"])?;
    for r in rows {
        out.write_record([
            r.poses.to_string(),
            r.family.to_string(),
            r.n_train.to_string(),
            r.n_support.to_string(),
            format!("{:.4}", r.stats.median_ms),
            format!("{:.4}", r.stats.p95_ms),
            format!("{:.4}", r.stats.mean_ms),
        ])?;
    }
    out.flush()?;
    Ok(())
}
