//! Synthetic gesture generator.
//!
//! Each class is a smooth random trajectory per coordinate: a base motion
//! shared by all classes plus a class-specific deviation whose amplitude
//! controls how far apart the classes are. An instance
//! replays its class template through a random monotone time-warp, at a random
//! length, with a per-subject amplitude/offset distortion and additive
//! Gaussian noise. Sequences are produced already root-relative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mocap::{Dataset, PoseSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub n_subjects: usize,
    /// Repetitions of each class by each subject.
    pub repetitions: usize,
    /// Joints including the (removed) root; poses have `3·(n_joints−1)` values.
    pub n_joints: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Standard deviation of the additive per-coordinate noise.
    pub noise: f64,
    /// Time-warp strength in `[0, 1)`: 0 is a linear clock.
    pub warp: f64,
    /// Spread of the per-subject amplitude and offset distortion.
    pub subject_variability: f64,
    /// Amplitude of each class's deviation from the shared base motion.
    pub class_separation: f64,
    pub rate_hz: Option<f64>,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Low noise, strong warping, moderately close classes.
    pub fn easy(seed: u64) -> Self {
        SyntheticConfig {
            n_classes: 10,
            n_subjects: 10,
            repetitions: 2,
            n_joints: 6,
            min_len: 40,
            max_len: 90,
            noise: 0.05,
            warp: 0.8,
            subject_variability: 0.1,
            class_separation: 0.3,
            rate_hz: Some(30.0),
            seed,
        }
    }

    /// Noisier, more subject variability, closer classes.
    pub fn hard(seed: u64) -> Self {
        SyntheticConfig {
            noise: 0.2,
            subject_variability: 0.3,
            class_separation: 0.2,
            ..Self::easy(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_subjects == 0 || self.repetitions == 0 {
            return Err(Error::Param("class, subject and repetition counts must be positive".into()));
        }
        if self.n_joints < 2 {
            return Err(Error::Param("need at least two joints".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Param(format!(
                "invalid length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        if !(0.0..1.0).contains(&self.warp)
            || self.noise < 0.0
            || self.subject_variability < 0.0
            || self.class_separation <= 0.0
        {
            return Err(Error::Param(
                "warp must be in [0, 1), noise and variability non-negative, separation positive".into(),
            ));
        }
        Ok(())
    }
}

const HARMONICS: usize = 3;
const WARP_KNOTS: usize = 4;

struct Template {
    /// Per coordinate: (amplitude, frequency, phase) triples.
    terms: Vec<[(f64, f64, f64); HARMONICS]>,
}

impl Template {
    fn random(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let terms = (0..dim)
            .map(|_| {
                std::array::from_fn(|h| {
                    let amp = rng.random_range(-1.0..1.0) / (h + 1) as f64;
                    let freq = rng.random_range(0.5..1.5) * (h + 1) as f64;
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (amp, freq, phase)
                })
            })
            .collect();
        Template { terms }
    }

    fn eval(&self, d: usize, u: f64) -> f64 {
        self.terms[d]
            .iter()
            .map(|(a, f, p)| a * (std::f64::consts::TAU * f * u + p).sin())
            .sum()
    }
}

/// Piecewise-linear monotone map of `[0, 1]` onto itself.
struct Warp {
    knots: Vec<f64>,
}

impl Warp {
    fn random(strength: f64, rng: &mut ChaCha8Rng) -> Self {
        let incs: Vec<f64> = (0..WARP_KNOTS)
            .map(|_| 1.0 + strength * rng.random_range(-1.0..1.0))
            .collect();
        let total: f64 = incs.iter().sum();
        let mut knots = vec![0.0];
        let mut acc = 0.0;
        for inc in incs {
            acc += inc / total;
            knots.push(acc);
        }
        *knots.last_mut().expect("non-empty") = 1.0;
        Warp { knots }
    }

    fn apply(&self, u: f64) -> f64 {
        let seg = ((u * WARP_KNOTS as f64).floor() as usize).min(WARP_KNOTS - 1);
        let local = u * WARP_KNOTS as f64 - seg as f64;
        self.knots[seg] + local * (self.knots[seg + 1] - self.knots[seg])
    }
}

/// Generates a labelled dataset: classes `c00…`, subjects `s00…`.
pub fn generate(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = 3 * (config.n_joints - 1);
    let base = Template::random(dim, &mut rng);
    let templates: Vec<Template> = (0..config.n_classes).map(|_| Template::random(dim, &mut rng)).collect();
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let subjects: Vec<(Vec<f64>, Vec<f64>)> = (0..config.n_subjects)
        .map(|_| {
            let scale = (0..dim)
                .map(|_| 1.0 + config.subject_variability * gauss.sample(&mut rng))
                .collect();
            let offset = (0..dim)
                .map(|_| 0.5 * config.subject_variability * gauss.sample(&mut rng))
                .collect();
            (scale, offset)
        })
        .collect();

    let mut sequences = Vec::new();
    for (s, (scale, offset)) in subjects.iter().enumerate() {
        for (c, template) in templates.iter().enumerate() {
            for r in 0..config.repetitions {
                let len = rng.random_range(config.min_len..=config.max_len);
                let warp = Warp::random(config.warp, &mut rng);
                let mut data = Vec::with_capacity(len * dim);
                for t in 0..len {
                    let u = if len == 1 { 0.0 } else { t as f64 / (len - 1) as f64 };
                    let w = warp.apply(u);
                    for d in 0..dim {
                        let shape = base.eval(d, w) + config.class_separation * template.eval(d, w);
                        let clean = scale[d] * shape + offset[d];
                        data.push(clean + config.noise * gauss.sample(&mut rng));
                    }
                }
                let mut seq = PoseSequence::from_flat(
                    format!("c{c:02}_s{s:02}_r{r:02}"),
                    format!("c{c:02}"),
                    format!("s{s:02}"),
                    config.n_joints,
                    dim,
                    data,
                    true,
                )?;
                seq.rate_hz = config.rate_hz;
                sequences.push(seq);
            }
        }
    }
    Dataset::new(sequences)
}
