//! Motion-sensor anonymization with an adversarially regularized autoencoder.
//!
//! The crate is organised along the data flow of an experiment:
//!
//! - [`ingest`]: MotionSense-layout loading, magnitude channels, windowing,
//!   Subject/Trial splits and per-channel standardization.
//! - [`nnkernel`]: a small differentiable network kernel (conv, dense,
//!   pooling, dropout, softmax) with an MANN persistence container.
//! - [`models`]: the encoder, decoder and the three regularizer classifiers.
//! - [`training`]: loss terms, classifier fitting and the adversarial
//!   training loop for the anonymizer.
//! - [`baselines`]: FFT resampling and singular spectrum analysis.
//! - [`evaluation`]: classifier metrics, DTW k-NN rank, autocorrelation and
//!   the utility/privacy report.
//! - [`pipeline`]: declarative run configuration, staged orchestration and
//!   artifact caching used by the `motion-anon` binary.
//!
//! Data-parallel inner loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Both paths
//! produce bit-identical results.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod ingest;
pub mod models;
pub mod nnkernel;
pub mod pipeline;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
