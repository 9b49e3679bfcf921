//! Differentiable multi-channel Wiener filtering for DNN-based speech
//! enhancement.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: reverse-mode gradient tape over real tensors, with complex
//!   values carried as real pairs.
//! - [`stft`]: multi-channel STFT / iSTFT and the consistency projection.
//! - [`enhance`]: mask-weighted spatial covariance estimation and the
//!   time-varying multi-channel Wiener filter.
//! - [`objectives`]: multi-channel NLL, multi-channel wave approximation,
//!   the consistency-aware combined loss, and monaural masking losses.
//! - [`model`]: features, the mask/PSD estimator network, Adam and the
//!   plateau schedule.
//! - [`baselines`]: monaural T-F masking and mask-based MVDR.
//! - [`scene`]: synthetic two-microphone scenes with diffuse noise.
//! - [`metrics`]: SDR and cepstral distortion.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod autodiff;
pub mod baselines;
pub mod enhance;
pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod scene;
pub mod seed;
pub mod signal;
pub mod stft;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
