//! Mono audio clips: WAV ingestion, peak normalization, power measurement
//! and segmentation into fixed-length analysis windows.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE: f64 = 44_100.0;
pub const DEFAULT_WINDOW_S: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {message}")]
    Unreadable { path: PathBuf, message: String },
    #[error("{path}: unsupported encoding ({bits}-bit {format})")]
    UnsupportedEncoding {
        path: PathBuf,
        bits: u16,
        format: &'static str,
    },
    #[error("{0}: file contains no audio")]
    ZeroLength(PathBuf),
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("audio clip is empty")]
    Empty,
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(f64),
    #[error("clip of {len} samples is shorter than one window of {window_len} samples")]
    TooShort { len: usize, window_len: usize },
}

/// A mono time series. Samples are dimensionless pressure values.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    /// Free-form metadata, e.g. the recording year used to keep train and
    /// test material apart.
    pub label_tag: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self, AudioError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(AudioError::InvalidSampleRate(sample_rate_hz));
        }
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            label_tag: None,
        })
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.label_tag = Some(tag.into());
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// A sub-clip `[start, start + len)` keeping rate and tag.
    pub fn slice(&self, start: usize, len: usize) -> AudioClip {
        AudioClip {
            samples: self.samples[start..start + len].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
            label_tag: self.label_tag.clone(),
        }
    }

    pub(crate) fn from_parts(samples: Vec<f64>, sample_rate_hz: f64, label_tag: Option<String>) -> Self {
        debug_assert!(!samples.is_empty() && sample_rate_hz > 0.0);
        Self {
            samples,
            sample_rate_hz,
            label_tag,
        }
    }
}

/// Divides every sample by the peak absolute value. An all-zero clip is
/// returned unchanged.
pub fn normalize_unit(clip: &AudioClip) -> AudioClip {
    let peak = clip.peak();
    if peak == 0.0 {
        return clip.clone();
    }
    let mut out = clip.clone();
    for s in &mut out.samples {
        *s /= peak;
    }
    out
}

/// Mean of squared samples, the discrete form of `(1/T) ∫ x² dt`.
pub fn mean_square_power(samples: &[f64]) -> Result<f64, AudioError> {
    if samples.is_empty() {
        return Err(AudioError::Empty);
    }
    Ok(samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64)
}

/// Contiguous, non-overlapping windows of identical length cut from one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub window_len: usize,
    pub windows: Vec<AudioClip>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Windows paired with their index `m` in the source clip.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &AudioClip)> {
        self.windows.iter().enumerate()
    }
}

pub fn window_len_samples(window_s: f64, sample_rate_hz: f64) -> usize {
    (window_s * sample_rate_hz).round() as usize
}

/// Splits a clip into `floor(len / window_len)` windows of `window_s`
/// seconds. The trailing remainder is discarded.
pub fn frame_windows(clip: &AudioClip, window_s: f64) -> Result<WindowSet, AudioError> {
    let window_len = window_len_samples(window_s, clip.sample_rate_hz);
    if window_len == 0 || clip.len() < window_len {
        return Err(AudioError::TooShort {
            len: clip.len(),
            window_len,
        });
    }
    let windows = clip
        .samples
        .chunks_exact(window_len)
        .map(|chunk| AudioClip::from_parts(chunk.to_vec(), clip.sample_rate_hz, clip.label_tag.clone()))
        .collect();
    Ok(WindowSet { window_len, windows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Reads a PCM16 or float32 WAV file. Multichannel audio is averaged to mono
/// and 16-bit samples are divided by 32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let unreadable = |e: hound::Error| AudioError::Unreadable {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let reader = hound::WavReader::open(path).map_err(unreadable)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(unreadable)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(unreadable)?,
        (format, bits) => {
            return Err(AudioError::UnsupportedEncoding {
                path: path.to_path_buf(),
                bits,
                format: match format {
                    hound::SampleFormat::Int => "integer",
                    hound::SampleFormat::Float => "float",
                },
            })
        }
    };
    let frames = interleaved.len() / channels;
    if frames == 0 {
        return Err(AudioError::ZeroLength(path.to_path_buf()));
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioClip::new(samples, spec.sample_rate as f64)
}

/// Writes a mono WAV file. Float32 output is exact for clips whose samples
/// are representable as `f32`; PCM16 output clamps to the 16-bit range.
pub fn save_wav(path: impl AsRef<Path>, clip: &AudioClip, encoding: WavEncoding) -> Result<(), AudioError> {
    let path = path.as_ref();
    let write_err = |e: hound::Error| AudioError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let (bits, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz.round() as u32,
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(write_err)?;
    for &s in clip.samples() {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(v).map_err(write_err)?;
            }
            WavEncoding::Float32 => writer.write_sample(s as f32).map_err(write_err)?,
        }
    }
    writer.finalize().map_err(write_err)
}
