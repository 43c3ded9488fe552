use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use whaledet_core::eval::{FeatureScaling, MonteCarloParams, SweepConfig};
use whaledet_core::pipeline::FeatureKind;
use whaledet_core::spectrogram::{DbScale, ResizeMode, WindowFn};
use whaledet_core::{Experiment, StftParams, SvmParams};

/// Every knob of a run, as one flat TOML table. Missing keys take their
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub sample_rate: f64,
    pub window_s: f64,

    pub segment_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowFn,
    pub p_ref: f64,
    pub db_scale: DbScale,

    pub image_width: usize,
    pub image_height: usize,
    pub resize: ResizeMode,

    pub features: FeatureKind,
    /// CNN weight file; without one a seeded tiny-vgg is used.
    pub network: Option<PathBuf>,
    pub network_seed: u64,
    pub network_channels: usize,
    pub l2_normalize: bool,

    pub svm_c: f64,
    pub svm_tol: f64,
    pub svm_max_iter: usize,

    pub experiments: Vec<Experiment>,
    pub snr_values: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_iter: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub scaling: FeatureScaling,

    /// Directory of unit recordings; synthetic chirps when absent.
    pub units: Option<PathBuf>,
    /// Noise bank root (`<type>/*.wav`); synthetic noise when absent.
    pub bank: Option<PathBuf>,
    pub synth_units: usize,
    pub synth_bank_clips: usize,
    pub synth_bank_clip_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let stft = StftParams::default();
        let svm = SvmParams::default();
        let sweep = SweepConfig::default();
        let mc = MonteCarloParams::default();
        Self {
            seed: 0,
            sample_rate: whaledet_core::audio::DEFAULT_SAMPLE_RATE,
            window_s: whaledet_core::audio::DEFAULT_WINDOW_S,
            segment_len: stft.segment_len,
            hop: stft.hop,
            fft_size: stft.fft_size,
            window: stft.window,
            p_ref: stft.p_ref,
            db_scale: stft.scale,
            image_width: 256,
            image_height: 256,
            resize: ResizeMode::Bilinear,
            features: FeatureKind::Cnn,
            network: None,
            network_seed: 0,
            network_channels: 1,
            l2_normalize: false,
            svm_c: svm.c,
            svm_tol: svm.tol,
            svm_max_iter: svm.max_iter,
            experiments: sweep.experiments,
            snr_values: sweep.snr_values,
            n_pos: sweep.n_pos,
            n_neg: sweep.n_neg,
            n_iter: mc.n_iter,
            n_train: mc.n_train,
            n_test: mc.n_test,
            scaling: mc.scaling,
            units: None,
            bank: None,
            synth_units: 40,
            synth_bank_clips: 3,
            synth_bank_clip_s: 10.0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn stft(&self) -> StftParams {
        StftParams {
            segment_len: self.segment_len,
            hop: self.hop,
            fft_size: self.fft_size,
            window: self.window,
            p_ref: self.p_ref,
            scale: self.db_scale,
        }
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c: self.svm_c,
            tol: self.svm_tol,
            max_iter: self.svm_max_iter,
            seed: self.seed,
        }
    }

    pub fn monte_carlo(&self) -> MonteCarloParams {
        MonteCarloParams {
            n_iter: self.n_iter,
            n_train: self.n_train,
            n_test: self.n_test,
            svm: self.svm(),
            scaling: self.scaling,
            seed: self.seed,
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            experiments: self.experiments.clone(),
            snr_values: self.snr_values.clone(),
            n_pos: self.n_pos,
            n_neg: self.n_neg,
            window_s: self.window_s,
            monte_carlo: self.monte_carlo(),
            seed: self.seed,
        }
    }
}
