//! Detection of humpback whale sound units against background noise.
//!
//! The processing chain turns a 2-second audio window into a dB
//! spectrogram, renders it as a 256×256 grayscale image, extracts the
//! activations of a CNN's last fully-connected layer and classifies them
//! with a linear SVM. Around it sit an SNR-controlled dataset synthesizer
//! and a Monte-Carlo evaluation harness.
//!
//! ```no_run
//! use whaledet_core::{audio, cnn, pipeline::Featurizer, spectrogram::StftParams};
//!
//! let clip = audio::load_wav("unit.wav")?;
//! let windows = audio::frame_windows(&clip, 2.0)?;
//! let featurizer = Featurizer::cnn(StftParams::default(), cnn::tiny_vgg(0, 1))?;
//! let code = featurizer.features(&windows.windows[0])?;
//! assert_eq!(code.len(), 64);
//! # Ok::<(), whaledet_core::Error>(())
//! ```

pub mod audio;
pub mod cnn;
mod error;
pub mod eval;
pub mod pipeline;
pub mod seed;
pub mod spectrogram;
pub mod svm;
pub mod synth;

pub use audio::{AudioClip, WindowSet};
pub use cnn::{FeatureMapStack, FeatureVector, LayerSpec, Network};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, MonteCarloParams, MonteCarloSummary, SweepConfig, SweepResult};
pub use spectrogram::{GrayImage, Spectrogram, StftParams};
pub use svm::{Label, LabeledSet, SvmModel, SvmParams};
pub use synth::{Experiment, ExperimentConfig, MixedSample, NoiseBank, NoiseType};
