//! dB spectrograms and their 8-bit image rendering.
//!
//! Each frame is a `segment_len` slice taken every `hop` samples, tapered,
//! zero-padded to `fft_size` and transformed. The one-sided spectrum
//! (`fft_size / 2 + 1` bins) is converted to decibels as
//! `10·log10(max(|X|, floor) / p_ref²)`. With [`DbScale::Power`] the squared
//! magnitude is used instead.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;

/// Linear magnitudes (or powers) are clamped here before taking the log.
pub const DB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectrogramError {
    #[error("invalid STFT parameters: {0}")]
    InvalidParams(String),
    #[error("clip of {len} samples is shorter than one segment of {segment_len}")]
    TooShort { len: usize, segment_len: usize },
    #[error("spectrogram is empty")]
    Empty,
    #[error("invalid image size {width}x{height}")]
    InvalidImageSize { width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    Hamming,
    Hann,
    Rectangular,
}

impl WindowFn {
    /// Symmetric window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let c = (2.0 * PI * i as f64 / denom).cos();
                match self {
                    WindowFn::Hamming => 0.54 - 0.46 * c,
                    WindowFn::Hann => 0.5 - 0.5 * c,
                    WindowFn::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Which spectral quantity goes into the dB conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbScale {
    /// `10·log10(|X| / p_ref²)`.
    Magnitude,
    /// `10·log10(|X|² / p_ref²)`.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftParams {
    pub segment_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowFn,
    pub p_ref: f64,
    pub scale: DbScale,
}

impl Default for StftParams {
    /// 1024-sample Hamming segments, 50% overlap, 2048-point FFT.
    fn default() -> Self {
        Self {
            segment_len: 1024,
            hop: 512,
            fft_size: 2048,
            window: WindowFn::Hamming,
            p_ref: 1.0,
            scale: DbScale::Magnitude,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<(), SpectrogramError> {
        let bad = |m: String| Err(SpectrogramError::InvalidParams(m));
        if self.fft_size < 2 {
            return bad(format!("fft_size {} < 2", self.fft_size));
        }
        if self.hop == 0 || self.hop > self.segment_len || self.segment_len > self.fft_size {
            return bad(format!(
                "need 0 < hop ({}) <= segment_len ({}) <= fft_size ({})",
                self.hop, self.segment_len, self.fft_size
            ));
        }
        if !(self.p_ref.is_finite() && self.p_ref > 0.0) {
            return bad(format!("p_ref {} must be positive", self.p_ref));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `floor((len - segment_len) / hop) + 1`, or 0 when `len < segment_len`.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.segment_len {
            0
        } else {
            (len - self.segment_len) / self.hop + 1
        }
    }
}

/// Dense row-major grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, col))
    }
}

/// `values_db` rows are frequency bins (row 0 = DC), columns are frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values_db: Grid,
    pub freq_resolution_hz: f64,
    pub time_resolution_s: f64,
    pub params: StftParams,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.values_db.rows
    }

    pub fn n_frames(&self) -> usize {
        self.values_db.cols
    }

    /// Writes the dB grid as CSV, one row per frequency bin.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?);
        for r in 0..self.values_db.rows {
            let line: Vec<String> = self.values_db.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(",")).map_err(|e| crate::Error::io(path, e))?;
        }
        out.flush().map_err(|e| crate::Error::io(path, e))
    }
}

/// A reusable STFT: window coefficients and FFT plan for one parameter set.
pub struct Stft {
    params: StftParams,
    taper: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("params", &self.params).finish()
    }
}

impl Stft {
    pub fn new(params: StftParams) -> Result<Self, SpectrogramError> {
        params.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(params.fft_size);
        Ok(Self {
            params,
            taper: params.window.coefficients(params.segment_len),
            fft,
        })
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    /// Linear one-sided magnitudes `|X_t(f)|`, rows = bins, cols = frames.
    pub fn magnitudes(&self, samples: &[f64]) -> Result<Grid, SpectrogramError> {
        let p = &self.params;
        let n_frames = p.n_frames(samples.len());
        if n_frames == 0 {
            return Err(SpectrogramError::TooShort {
                len: samples.len(),
                segment_len: p.segment_len,
            });
        }
        let n_bins = p.n_bins();
        let mut grid = Grid::zeros(n_bins, n_frames);
        let mut buf = vec![Complex::new(0.0, 0.0); p.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..n_frames {
            let segment = &samples[t * p.hop..t * p.hop + p.segment_len];
            for (slot, (&x, &w)) in buf.iter_mut().zip(segment.iter().zip(&self.taper)) {
                *slot = Complex::new(x * w, 0.0);
            }
            for slot in &mut buf[p.segment_len..] {
                *slot = Complex::new(0.0, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (f, x) in buf[..n_bins].iter().enumerate() {
                grid.set(f, t, x.norm());
            }
        }
        Ok(grid)
    }

    pub fn spectrogram(&self, clip: &AudioClip) -> Result<Spectrogram, SpectrogramError> {
        let mut grid = self.magnitudes(clip.samples())?;
        let p = &self.params;
        let p_ref_sq = p.p_ref * p.p_ref;
        for v in &mut grid.data {
            let linear = match p.scale {
                DbScale::Magnitude => *v,
                DbScale::Power => *v * *v,
            };
            *v = 10.0 * (linear.max(DB_FLOOR) / p_ref_sq).log10();
        }
        Ok(Spectrogram {
            values_db: grid,
            freq_resolution_hz: clip.sample_rate_hz() / p.fft_size as f64,
            time_resolution_s: p.hop as f64 / clip.sample_rate_hz(),
            params: *p,
        })
    }
}

pub fn stft_spectrogram(clip: &AudioClip, params: &StftParams) -> Result<Spectrogram, SpectrogramError> {
    Stft::new(*params)?.spectrogram(clip)
}

/// An 8-bit grayscale image, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Binary PGM (P5).
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend_from_slice(&self.pixels);
        std::fs::write(path, bytes).map_err(|e| crate::Error::io(path, e))
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
        let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let encode_err = |e: png::EncodingError| crate::Error::format(path, e.to_string());
        let mut writer = encoder.write_header().map_err(encode_err)?;
        writer.write_image_data(&self.pixels).map_err(encode_err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    #[default]
    Bilinear,
    Nearest,
}

/// Maps the dB grid linearly from `[min_db, max_db]` onto `[0, 255]` without
/// resizing. A constant grid maps to 128. The frequency axis is flipped so
/// the lowest bin lands in the bottom row.
pub fn db_to_levels(spec: &Spectrogram) -> Result<GrayImage, SpectrogramError> {
    let grid = &spec.values_db;
    if grid.data.is_empty() {
        return Err(SpectrogramError::Empty);
    }
    let (lo, hi) = grid
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let mut img = GrayImage::filled(grid.cols, grid.rows, 128);
    if range > 0.0 {
        for r in 0..grid.rows {
            let dst = grid.rows - 1 - r;
            for c in 0..grid.cols {
                let level = ((grid.get(r, c) - lo) / range * 255.0).round();
                img.pixels[dst * grid.cols + c] = level.clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(img)
}

/// Resamples an image with pixel-center alignment.
pub fn resize(img: &GrayImage, width: usize, height: usize, mode: ResizeMode) -> Result<GrayImage, SpectrogramError> {
    if width == 0 || height == 0 {
        return Err(SpectrogramError::InvalidImageSize { width, height });
    }
    if img.pixels.is_empty() {
        return Err(SpectrogramError::Empty);
    }
    if img.width == width && img.height == height {
        return Ok(img.clone());
    }
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let mut out = GrayImage::filled(width, height, 0);
    match mode {
        ResizeMode::Nearest => {
            for y in 0..height {
                let src_y = (((y as f64 + 0.5) * sy) as usize).min(img.height - 1);
                for x in 0..width {
                    let src_x = (((x as f64 + 0.5) * sx) as usize).min(img.width - 1);
                    out.pixels[y * width + x] = img.get(src_y, src_x);
                }
            }
        }
        ResizeMode::Bilinear => {
            let coords = |dst: usize, scale: f64, len: usize| {
                let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(len - 1);
                (i0, i1, s - i0 as f64)
            };
            let xs: Vec<_> = (0..width).map(|x| coords(x, sx, img.width)).collect();
            for y in 0..height {
                let (y0, y1, fy) = coords(y, sy, img.height);
                for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let top = img.get(y0, x0) as f64 * (1.0 - fx) + img.get(y0, x1) as f64 * fx;
                    let bottom = img.get(y1, x0) as f64 * (1.0 - fx) + img.get(y1, x1) as f64 * fx;
                    let v = top * (1.0 - fy) + bottom * fy;
                    out.pixels[y * width + x] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    Ok(out)
}

/// Renders a spectrogram as a `width × height` grayscale image (bilinear).
pub fn to_image(spec: &Spectrogram, width: usize, height: usize) -> Result<GrayImage, SpectrogramError> {
    to_image_with(spec, width, height, ResizeMode::Bilinear)
}

pub fn to_image_with(
    spec: &Spectrogram,
    width: usize,
    height: usize,
    mode: ResizeMode,
) -> Result<GrayImage, SpectrogramError> {
    resize(&db_to_levels(spec)?, width, height, mode)
}
