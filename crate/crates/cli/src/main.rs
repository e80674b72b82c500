use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tempfile::NamedTempFile;

use elastic_gesture::error::ErrorClass;
use elastic_gesture::eval::{
    fixed_split, grid_search, kfold, latency_sweep, prepare_experiment, resolve_sigma, run_experiment, subject_splits, write_curve_csv,
    write_latency_csv, write_splits_csv, EvalOptions, EvalReport, ExperimentConfig, GridSpec, SigmaRule, SplitPlan,
    DEFAULT_POSE_GRID,
};
use elastic_gesture::mocap::{load_generic, load_msr, write_generic, GENERIC_DEFAULT_ROOT, MSR_DEFAULT_ROOT};
use elastic_gesture::synth::{generate, SyntheticConfig};
use elastic_gesture::{Dataset, Error, GestureClassifier, GramCache, KernelFamily, KernelSpec, ResampleMode, SmoOptions, TrainOptions};

const SUBCOMMANDS: [&str; 7] = ["convert", "train", "predict", "evaluate", "grid", "benchmark", "synthesize"];

#[derive(Parser, Debug)]
#[command(name = "elastic-gesture", version, about = "Skeletal gesture recognition with elastic kernel SVMs")]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads for kernel matrices and split evaluation [default: all CPUs]
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// JSON object of option values keyed by flag name; explicit flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a skeleton dataset to the JSON-lines format
    Convert(ConvertArgs),
    /// Train a classifier on a whole dataset and write the model file
    Train(TrainArgs),
    /// Classify sequences with a trained model, one label per line
    Predict(PredictArgs),
    /// Run a cross-validation protocol for one configuration
    Evaluate(EvaluateArgs),
    /// Grid search over pose count, stiffness, bandwidth and C
    Grid(GridArgs),
    /// Measure single-sequence classification latency
    Benchmark(BenchmarkArgs),
    /// Generate a synthetic gesture dataset
    Synthesize(SynthesizeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Msr,
    Generic,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Kernel {
    Euclid,
    Dtw,
    Rdtw,
}

impl From<Kernel> for KernelFamily {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Euclid => KernelFamily::Euclid,
            Kernel::Dtw => KernelFamily::Dtw,
            Kernel::Rdtw => KernelFamily::Rdtw,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
enum Resample {
    #[default]
    Nearest,
    Linear,
}

impl From<Resample> for ResampleMode {
    fn from(r: Resample) -> Self {
        match r {
            Resample::Nearest => ResampleMode::Nearest,
            Resample::Linear => ResampleMode::Linear,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
enum Protocol {
    #[default]
    Subjects,
    Kfold,
    Fixed,
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
enum Preset {
    #[default]
    Easy,
    Hard,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Dataset file, or a directory of MSR skeleton files
    #[arg(long, short = 'i', value_name = "PATH")]
    input: PathBuf,

    /// Input format [default: msr for directories and .txt files, else generic]
    #[arg(long, value_enum)]
    format: Option<Format>,

    /// Root joint used to relativize raw sequences [default: 6 for msr, 0 for generic]
    #[arg(long)]
    root_joint: Option<usize>,

    /// Joints per MSR frame
    #[arg(long, default_value_t = 20)]
    n_joints: usize,

    /// MSR files carry one frame-header line before each frame
    #[arg(long)]
    has_header: bool,
}

impl InputArgs {
    fn format(&self) -> Format {
        self.format.unwrap_or_else(|| {
            let txt = self.input.extension().is_some_and(|e| e == "txt");
            if self.input.is_dir() || txt {
                Format::Msr
            } else {
                Format::Generic
            }
        })
    }

    fn root_joint(&self) -> usize {
        self.root_joint.unwrap_or(match self.format() {
            Format::Msr => MSR_DEFAULT_ROOT,
            Format::Generic => GENERIC_DEFAULT_ROOT,
        })
    }

    fn load(&self) -> Result<Dataset, CliError> {
        if !self.input.exists() {
            return Err(Error::Io(io::Error::new(io::ErrorKind::NotFound, "no such file or directory"))
                .context(self.input.display().to_string())
                .into());
        }
        let ds = match self.format() {
            Format::Msr => load_msr(&self.input, self.n_joints, self.has_header)?,
            Format::Generic => load_generic(&self.input)?,
        };
        if ds.is_empty() {
            return Err(Error::EmptySequence(Some(format!("no sequences found in {}", self.input.display()))).into());
        }
        Ok(ds)
    }
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Number of poses each sequence is resampled to
    #[arg(long, default_value_t = 15)]
    poses: usize,

    /// Kernel family
    #[arg(long, value_enum, default_value_t = Kernel::Rdtw)]
    kernel: Kernel,

    /// Stiffness of the regularized DTW kernel (required for rdtw)
    #[arg(long)]
    nu: Option<f64>,

    /// Kernel bandwidth
    #[arg(long, required = true)]
    sigma: Option<f64>,

    /// Interpret --sigma as a multiple of the median training-pair statistic
    #[arg(long)]
    sigma_relative: bool,

    /// SVM box constraint
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,

    /// Corridor half-width for the rdtw alignment paths
    #[arg(long)]
    corridor: Option<usize>,

    /// Resampling mode
    #[arg(long, value_enum, default_value_t)]
    resample: Resample,
}

impl ModelArgs {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let family = KernelFamily::from(self.kernel);
        let nu = match (family.uses_nu(), self.nu) {
            (true, None) => return Err(CliError::Usage("--nu is required for the rdtw kernel".into())),
            (_, nu) => nu.unwrap_or(1.0),
        };
        let sigma = self.sigma.ok_or_else(|| CliError::Usage("--sigma is required".into()))?;
        let config = ExperimentConfig {
            poses: self.poses,
            family,
            nu,
            sigma: SigmaRule { value: sigma, relative: self.sigma_relative },
            c: self.c,
            corridor: self.corridor,
            resample: self.resample.into(),
        };
        // parameter validation before any data is touched
        KernelSpec::new(family, nu, sigma)?;
        if !(config.c.is_finite() && config.c > 0.0) {
            return Err(CliError::Usage(format!("--C must be positive, got {}", config.c)));
        }
        if config.poses < 2 {
            return Err(CliError::Usage(format!("--poses must be at least 2, got {}", config.poses)));
        }
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct ProtocolArgs {
    /// Split protocol
    #[arg(long, value_enum, default_value_t)]
    protocol: Protocol,

    /// Training subjects per split for the subjects protocol [default: half]
    #[arg(long)]
    n_train: Option<usize>,

    /// Number of folds for the kfold protocol
    #[arg(long, default_value_t = 10)]
    folds: usize,

    /// Seed for fold shuffling
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Training subjects for the fixed protocol
    #[arg(long, value_delimiter = ',')]
    train_subjects: Vec<String>,

    /// Testing subjects for the fixed protocol
    #[arg(long, value_delimiter = ',')]
    test_subjects: Vec<String>,
}

impl ProtocolArgs {
    fn check(&self) -> Result<(), CliError> {
        if self.protocol == Protocol::Fixed && (self.train_subjects.is_empty() || self.test_subjects.is_empty()) {
            return Err(CliError::Usage(
                "the fixed protocol needs --train-subjects and --test-subjects".into(),
            ));
        }
        Ok(())
    }

    fn plans(&self, ds: &Dataset) -> Result<Vec<SplitPlan>, CliError> {
        Ok(match self.protocol {
            Protocol::Subjects => subject_splits(ds, self.n_train.unwrap_or(ds.subject_set().len() / 2))?,
            Protocol::Kfold => kfold(ds, self.folds, self.seed)?,
            Protocol::Fixed => vec![fixed_split(ds, &self.train_subjects, &self.test_subjects)?],
        })
    }
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Keep raw joint positions instead of relativizing to the root joint
    #[arg(long)]
    keep_raw: bool,

    /// Output JSON-lines file
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    model: ModelArgs,

    /// Output model file
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Model file written by `train`
    #[arg(long, short = 'm')]
    model: PathBuf,

    /// Output file for the labels [default: stdout]
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    model: ModelArgs,

    #[command(flatten)]
    protocol: ProtocolArgs,

    /// Directory for cached kernel matrices
    #[arg(long)]
    cache_dir: Option<PathBuf>,

    /// Per-split CSV report
    #[arg(long, short = 'o')]
    out: PathBuf,

    /// JSON summary with confusion matrices and timings
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    protocol: ProtocolArgs,

    /// Kernel family
    #[arg(long, value_enum, default_value_t = Kernel::Rdtw)]
    kernel: Kernel,

    /// JSON grid file with `poses`, `nu`, `sigma`, `sigma_relative` and `c` arrays
    #[arg(long)]
    grid: Option<PathBuf>,

    /// Pose counts
    #[arg(long, value_delimiter = ',')]
    poses: Vec<usize>,

    /// Stiffness values
    #[arg(long, value_delimiter = ',')]
    nu: Vec<f64>,

    /// Bandwidth values
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,

    /// Treat bandwidth values as absolute instead of median-relative
    #[arg(long)]
    sigma_absolute: bool,

    /// Box constraint values
    #[arg(long = "C", value_delimiter = ',')]
    c: Vec<f64>,

    /// Corridor half-width for the rdtw alignment paths
    #[arg(long)]
    corridor: Option<usize>,

    /// Resampling mode
    #[arg(long, value_enum, default_value_t)]
    resample: Resample,

    /// Directory for cached kernel matrices
    #[arg(long)]
    cache_dir: Option<PathBuf>,

    /// Per-split CSV for every grid point
    #[arg(long, short = 'o')]
    out: PathBuf,

    /// Accuracy-versus-pose-count CSV, best configuration per pose count
    #[arg(long)]
    curve: Option<PathBuf>,

    /// JSON summary with the selected configuration
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Pose counts to time
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_POSE_GRID[1..].to_vec())]
    poses: Vec<usize>,

    /// Kernel families to time [default: all]
    #[arg(long, value_enum, value_delimiter = ',')]
    kernel: Vec<Kernel>,

    /// Stiffness of the regularized DTW kernel
    #[arg(long, default_value_t = 1.0)]
    nu: f64,

    /// Kernel bandwidth
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    /// Interpret --sigma as a multiple of the median training-pair statistic
    #[arg(long)]
    sigma_relative: bool,

    /// SVM box constraint
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,

    /// Corridor half-width for the rdtw alignment paths
    #[arg(long)]
    corridor: Option<usize>,

    /// Subjects (first in sorted order) used for training [default: half]
    #[arg(long)]
    n_train: Option<usize>,

    /// Held-out sequences to classify
    #[arg(long, default_value_t = 20)]
    samples: usize,

    /// Discarded passes before timing
    #[arg(long, default_value_t = 2)]
    warmup: usize,

    /// Timed passes over the samples
    #[arg(long, default_value_t = 5)]
    repeats: usize,

    /// Latency CSV
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    /// Noise and warping preset
    #[arg(long, value_enum, default_value_t)]
    preset: Preset,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Number of gesture classes [default: preset]
    #[arg(long)]
    classes: Option<usize>,

    /// Number of subjects [default: preset]
    #[arg(long)]
    subjects: Option<usize>,

    /// Repetitions per class and subject [default: preset]
    #[arg(long)]
    repetitions: Option<usize>,

    /// Output JSON-lines file
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

/// Writes through a temporary file in the target directory, renamed into
/// place only on success.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::Io(e).context(path.display().to_string()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error).context(path.display().to_string()))?;
    Ok(())
}

fn cache(dir: &Option<PathBuf>) -> Result<Option<GramCache>, CliError> {
    Ok(match dir {
        Some(d) => Some(GramCache::new(d)?),
        None => None,
    })
}

fn cmd_convert(a: ConvertArgs) -> Result<(), CliError> {
    let mut ds = a.input.load()?;
    if !a.keep_raw && ds.sequences().iter().any(|s| !s.is_relativized()) {
        ds = ds.relativized(a.input.root_joint())?;
    }
    let text = write_generic(&ds)?;
    write_atomic(&a.out, |w| Ok(w.write_all(text.as_bytes())?))?;
    println!(
        "{} sequences, {} classes, {} subjects",
        ds.len(),
        ds.class_set().len(),
        ds.subject_set().len()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs, workers: Option<usize>) -> Result<(), CliError> {
    let config = a.model.config()?;
    let ds = a.input.load()?;
    let root = a.input.root_joint();
    let spec = KernelSpec::new(config.family, config.nu, 1.0)?.with_corridor(config.corridor);
    let sigma = if config.sigma.relative {
        let prepared = prepare_experiment(
            &ds,
            &config,
            &EvalOptions { workers, root_joint: Some(root), ..Default::default() },
        )?;
        resolve_sigma(&prepared.raw, &spec, config.sigma)?
    } else {
        config.sigma.value
    };
    let opts = TrainOptions {
        poses: config.poses,
        resample: config.resample,
        root_joint: Some(root),
        c: config.c,
        smo: SmoOptions::default(),
        workers,
    };
    let (clf, accuracy) = GestureClassifier::train(&ds, &spec.with_sigma(sigma), &opts)?;
    let json = clf.to_json()?;
    write_atomic(&a.out, |w| Ok(w.write_all(json.as_bytes())?))?;
    println!(
        "trained {} on {} sequences ({} classes, {} support sequences): training accuracy {:.2}%",
        config.family,
        ds.len(),
        ds.class_set().len(),
        clf.support_vectors.len(),
        accuracy
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs, workers: Option<usize>) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.model).map_err(|e| Error::Io(e).context(a.model.display().to_string()))?;
    let clf = GestureClassifier::from_json(&text).map_err(|e| e.context(a.model.display().to_string()))?;
    let ds = a.input.load()?;
    let labels = clf.classify_many(ds.sequences(), workers)?;
    let mut body = labels.join("\n");
    body.push('\n');
    match &a.out {
        Some(path) => write_atomic(path, |w| Ok(w.write_all(body.as_bytes())?))?,
        None => io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn summary_line(r: &EvalReport) -> String {
    format!(
        "{} L={} nu={} sigma={}{} C={}: train {:.2} ± {:.2}, test {:.2} ± {:.2} over {} splits",
        r.config.family,
        r.config.poses,
        r.config.nu,
        r.config.sigma.value,
        if r.config.sigma.relative { "×median" } else { "" },
        r.config.c,
        r.mean_train,
        r.std_train,
        r.mean_test,
        r.std_test,
        r.splits.len()
    )
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).map_err(Error::from)?;
    write_atomic(path, |w| Ok(w.write_all(json.as_bytes())?))
}

fn cmd_evaluate(a: EvaluateArgs, workers: Option<usize>) -> Result<(), CliError> {
    let config = a.model.config()?;
    a.protocol.check()?;
    let ds = a.input.load()?;
    let plans = a.protocol.plans(&ds)?;
    let opts = EvalOptions {
        workers,
        cache: cache(&a.cache_dir)?,
        smo: SmoOptions::default(),
        root_joint: Some(a.input.root_joint()),
    };
    let report = run_experiment(&ds, &plans, &config, &opts)?;
    let reports = [report];
    write_atomic(&a.out, |w| write_splits_csv(&reports, w))?;
    if let Some(path) = &a.summary {
        write_json(path, &reports[0])?;
    }
    println!("{}", summary_line(&reports[0]));
    Ok(())
}

fn cmd_grid(a: GridArgs, workers: Option<usize>) -> Result<(), CliError> {
    a.protocol.check()?;
    let family = KernelFamily::from(a.kernel);
    let mut grid = match &a.grid {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io(e).context(path.display().to_string()))?;
            serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))?
        }
        None => GridSpec::default(),
    };
    if !a.poses.is_empty() {
        grid.poses = a.poses.clone();
    }
    if !a.nu.is_empty() {
        grid.nu = a.nu.clone();
    }
    if !a.sigma.is_empty() {
        grid.sigma = a.sigma.clone();
    }
    if a.sigma_absolute {
        grid.sigma_relative = false;
    }
    if !a.c.is_empty() {
        grid.c = a.c.clone();
    }
    let grid = grid.normalized(family)?;
    let ds = a.input.load()?;
    let plans = a.protocol.plans(&ds)?;
    let base = ExperimentConfig {
        poses: grid.poses[0],
        family,
        nu: grid.nu[0],
        sigma: SigmaRule { value: grid.sigma[0], relative: grid.sigma_relative },
        c: grid.c[0],
        corridor: a.corridor,
        resample: a.resample.into(),
    };
    let opts = EvalOptions {
        workers,
        cache: cache(&a.cache_dir)?,
        smo: SmoOptions::default(),
        root_joint: Some(a.input.root_joint()),
    };
    let report = grid_search(&ds, &plans, family, &grid, &base, &opts)?;
    write_atomic(&a.out, |w| write_splits_csv(&report.entries, w))?;
    if let Some(path) = &a.curve {
        let best_per_l: Vec<EvalReport> = grid
            .poses
            .iter()
            .filter_map(|&l| {
                report
                    .entries
                    .iter()
                    .filter(|e| e.config.poses == l)
                    .reduce(|best, e| if e.mean_test > best.mean_test { e } else { best })
                    .cloned()
            })
            .collect();
        write_atomic(path, |w| write_curve_csv(&best_per_l, w))?;
    }
    if let Some(path) = &a.summary {
        write_json(path, &report)?;
    }
    for e in &report.entries {
        println!("{}", summary_line(e));
    }
    let best = report.entries.iter().find(|e| e.config == report.best).expect("best is an entry");
    println!("best: {}", summary_line(best));
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs, workers: Option<usize>) -> Result<(), CliError> {
    if a.samples == 0 || a.repeats == 0 {
        return Err(CliError::Usage("--samples and --repeats must be positive".into()));
    }
    let kernels: Vec<KernelFamily> = if a.kernel.is_empty() {
        KernelFamily::ALL.to_vec()
    } else {
        a.kernel.iter().map(|&k| k.into()).collect()
    };
    let mut configs = Vec::new();
    for &family in &kernels {
        for &poses in &a.poses {
            let config = ExperimentConfig {
                poses,
                family,
                nu: a.nu,
                sigma: SigmaRule { value: a.sigma, relative: a.sigma_relative },
                c: a.c,
                corridor: a.corridor,
                resample: ResampleMode::Nearest,
            };
            KernelSpec::new(family, a.nu, a.sigma)?;
            if poses < 2 {
                return Err(CliError::Usage(format!("--poses values must be at least 2, got {poses}")));
            }
            configs.push(config);
        }
    }
    let ds = a.input.load()?;
    let subjects = ds.subject_set();
    let n_train = a.n_train.unwrap_or(subjects.len() / 2).max(1);
    if n_train >= subjects.len() {
        return Err(Error::Param(format!("--n-train must be below the subject count {}", subjects.len())).into());
    }
    let plan = fixed_split(&ds, &subjects[..n_train], &subjects[n_train..])?;
    let samples: Vec<usize> = plan.test.iter().copied().take(a.samples).collect();
    let opts = EvalOptions {
        workers,
        cache: None,
        smo: SmoOptions::default(),
        root_joint: Some(a.input.root_joint()),
    };
    let rows = latency_sweep(&ds, &plan.train, &samples, &configs, &opts, a.warmup, a.repeats)?;
    write_atomic(&a.out, |w| write_latency_csv(&rows, w))?;
    for r in &rows {
        println!(
            "{} L={}: median {:.3} ms, p95 {:.3} ms ({} support of {} training sequences)",
            r.family, r.poses, r.stats.median_ms, r.stats.p95_ms, r.n_support, r.n_train
        );
    }
    Ok(())
}

fn cmd_synthesize(a: SynthesizeArgs) -> Result<(), CliError> {
    let mut config = match a.preset {
        Preset::Easy => SyntheticConfig::easy(a.seed),
        Preset::Hard => SyntheticConfig::hard(a.seed),
    };
    if let Some(c) = a.classes {
        config.n_classes = c;
    }
    if let Some(s) = a.subjects {
        config.n_subjects = s;
    }
    if let Some(r) = a.repetitions {
        config.repetitions = r;
    }
    let ds = generate(&config)?;
    let text = write_generic(&ds)?;
    write_atomic(&a.out, |w| Ok(w.write_all(text.as_bytes())?))?;
    println!(
        "{} sequences, {} classes, {} subjects",
        ds.len(),
        ds.class_set().len(),
        ds.subject_set().len()
    );
    Ok(())
}

/// Turns a JSON config object into flag tokens placed right after the
/// subcommand name, so explicit flags (which come later) override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    for (i, arg) in args.iter().enumerate() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let serde_json::Value::Object(map) = value else {
        return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
    };
    let mut tokens: Vec<OsString> = Vec::new();
    for (key, v) in map {
        let flag = if key == "C" { "--C".to_string() } else { format!("--{}", key.replace('_', "-")) };
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            _ => Err(CliError::Usage(format!("config key {key:?} has an unsupported value"))),
        };
        match &v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => tokens.push(flag.into()),
            serde_json::Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(",");
                tokens.push(flag.into());
                tokens.push(joined.into());
            }
            other => {
                tokens.push(flag.into());
                tokens.push(scalar(other)?.into());
            }
        }
    }
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut out = args[..=pos].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let workers = cli.workers;
    if workers == Some(0) {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    match cli.command {
        Command::Convert(a) => cmd_convert(a),
        Command::Train(a) => cmd_train(a, workers),
        Command::Predict(a) => cmd_predict(a, workers),
        Command::Evaluate(a) => cmd_evaluate(a, workers),
        Command::Grid(a) => cmd_grid(a, workers),
        Command::Benchmark(a) => cmd_benchmark(a, workers),
        Command::Synthesize(a) => cmd_synthesize(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
