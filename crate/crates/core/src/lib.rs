//! Gesture recognition from skeletal motion capture.
//!
//! Sequences are root-relativized, down-sampled to a fixed number of poses and
//! compared with one of three kernels (Gaussian on the flattened poses, a
//! DTW-based kernel, or a normalized regularized-DTW kernel). A one-vs-one SVM
//! trained with SMO classifies them. [`eval`] runs subject-wise and k-fold
//! protocols over whole datasets.

pub mod classifier;
pub mod error;
pub mod eval;
pub mod gram;
pub mod kernels;
pub mod mocap;
pub mod resample;
pub mod svm;
pub mod synth;

pub use classifier::{GestureClassifier, TrainOptions};
pub use error::{Error, ErrorClass, Result};
pub use gram::{GramCache, GramMatrix};
pub use kernels::{KernelFamily, KernelSpec, Normalization};
pub use mocap::{Dataset, Joint, PoseSequence};
pub use resample::{FixedSequence, ResampleMode};
pub use svm::{SmoOptions, SvmModel};
