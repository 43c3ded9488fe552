//! Labeled evaluation datasets: whale sound units mixed with background
//! noise at a controlled signal-to-noise ratio.
//!
//! `SNR = 10·log10(<x_s²> / <x_n²>)` over one analysis window. The signal is
//! kept unit-normalized and the noise is scaled; mixtures are never
//! re-normalized, so they may exceed `[-1, 1]`.

mod generators;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, mean_square_power, normalize_unit, AudioClip, AudioError};
use crate::seed;
use crate::svm::Label;

pub use generators::{synth_noise, synth_units, synth_whale_unit};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("{0} has zero power")]
    ZeroPower(&'static str),
    #[error("signal has {signal} samples but noise has {noise}")]
    LengthMismatch { signal: usize, noise: usize },
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),
    #[error("frequency {freq_hz} Hz outside (0, {nyquist}) Hz")]
    InvalidFrequency { freq_hz: f64, nyquist: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unknown noise type {0:?}")]
    UnknownNoiseType(String),
    #[error("unknown experiment {0:?} (expected E1..E6)")]
    UnknownExperiment(String),
    #[error("noise bank has no clips of type {0}")]
    MissingNoiseType(NoiseType),
    #[error("noise clip {name} ({len} samples) is shorter than one window ({window_len} samples)")]
    InsufficientNoise {
        name: String,
        len: usize,
        window_len: usize,
    },
    #[error("no usable sound unit windows (all units silent?)")]
    NoUnits,
    #[error("noise bank directory {0} does not exist")]
    MissingBank(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseType {
    Clean,
    Wind,
    Rain,
    Traffic,
    Chorus,
}

impl NoiseType {
    pub const ALL: [NoiseType; 5] = [
        NoiseType::Clean,
        NoiseType::Wind,
        NoiseType::Rain,
        NoiseType::Traffic,
        NoiseType::Chorus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseType::Clean => "clean",
            NoiseType::Wind => "wind",
            NoiseType::Rain => "rain",
            NoiseType::Traffic => "traffic",
            NoiseType::Chorus => "chorus",
        }
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseType {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NoiseType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| SynthError::UnknownNoiseType(s.to_string()))
    }
}

/// The six background conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Experiment {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::E1,
        Experiment::E2,
        Experiment::E3,
        Experiment::E4,
        Experiment::E5,
        Experiment::E6,
    ];

    pub fn noise_types(self) -> &'static [NoiseType] {
        match self {
            Experiment::E1 => &[NoiseType::Clean],
            Experiment::E2 => &[NoiseType::Wind],
            Experiment::E3 => &[NoiseType::Rain],
            Experiment::E4 => &[NoiseType::Traffic],
            Experiment::E5 => &[NoiseType::Chorus],
            Experiment::E6 => &[NoiseType::Wind, NoiseType::Rain, NoiseType::Traffic, NoiseType::Chorus],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.index() + 1)
    }
}

impl FromStr for Experiment {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| SynthError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedClip {
    pub name: String,
    pub clip: AudioClip,
}

/// Background recordings grouped by noise type.
#[derive(Debug, Clone, Default)]
pub struct NoiseBank {
    pub entries: BTreeMap<NoiseType, Vec<NamedClip>>,
}

impl NoiseBank {
    pub fn insert(&mut self, noise_type: NoiseType, clip: NamedClip) {
        self.entries.entry(noise_type).or_default().push(clip);
    }

    pub fn clips(&self, noise_type: NoiseType) -> &[NamedClip] {
        self.entries.get(&noise_type).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every requested type must have at least one clip, each at least one
    /// window long.
    pub fn check(&self, types: &[NoiseType], window_len: usize) -> Result<(), SynthError> {
        for &ty in types {
            let clips = self.clips(ty);
            if clips.is_empty() {
                return Err(SynthError::MissingNoiseType(ty));
            }
            if let Some(short) = clips.iter().find(|c| c.clip.len() < window_len) {
                return Err(SynthError::InsufficientNoise {
                    name: short.name.clone(),
                    len: short.clip.len(),
                    window_len,
                });
            }
        }
        Ok(())
    }

    /// Loads `dir/<noise_type>/*.wav`, files sorted by name. Missing type
    /// directories are skipped.
    pub fn load_dir(dir: impl AsRef<Path>) -> crate::Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(SynthError::MissingBank(dir.to_path_buf()).into());
        }
        let mut bank = NoiseBank::default();
        for ty in NoiseType::ALL {
            let sub = dir.join(ty.name());
            if !sub.is_dir() {
                continue;
            }
            for path in sorted_wavs(&sub)? {
                let clip = audio::load_wav(&path)?;
                let name = format!("{}/{}", ty.name(), path.file_name().unwrap().to_string_lossy());
                bank.insert(ty, NamedClip { name, clip });
            }
        }
        Ok(bank)
    }

    /// Writes the bank in the `dir/<noise_type>/<name>.wav` layout.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> crate::Result<()> {
        let dir = dir.as_ref();
        for (ty, clips) in &self.entries {
            let sub = dir.join(ty.name());
            std::fs::create_dir_all(&sub).map_err(|e| crate::Error::io(&sub, e))?;
            for c in clips {
                let file = Path::new(&c.name).file_name().map(|f| f.to_owned()).unwrap_or_default();
                let mut path = sub.join(file);
                path.set_extension("wav");
                audio::save_wav(&path, &c.clip, audio::WavEncoding::Float32)?;
            }
        }
        Ok(())
    }

    /// `clips_per_type` generated clips of each listed type.
    pub fn synthetic(
        types: &[NoiseType],
        clips_per_type: usize,
        duration_s: f64,
        sample_rate: f64,
        seed: u64,
    ) -> Result<Self, SynthError> {
        let mut bank = NoiseBank::default();
        for &ty in types {
            for k in 0..clips_per_type {
                let clip_seed = seed::derive(seed, (ty as u64) << 32 | k as u64);
                let clip = synth_noise(ty, duration_s, sample_rate, clip_seed)?;
                bank.insert(
                    ty,
                    NamedClip {
                        name: format!("{}/{}{k:03}", ty.name(), ty.name()),
                        clip,
                    },
                );
            }
        }
        Ok(bank)
    }
}

pub(crate) fn sorted_wavs(dir: &Path) -> crate::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| crate::Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads a directory of unit recordings, sorted by file name.
pub fn load_units(dir: impl AsRef<Path>) -> crate::Result<Vec<NamedClip>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(crate::Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "unit directory not found"),
        ));
    }
    sorted_wavs(dir)?
        .into_iter()
        .map(|path| {
            Ok(NamedClip {
                name: path.file_name().unwrap().to_string_lossy().into_owned(),
                clip: audio::load_wav(&path)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub snr_db: f64,
    pub seed: u64,
    pub window_s: f64,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, snr_db: f64, seed: u64) -> Self {
        Self {
            experiment,
            snr_db,
            seed,
            window_s: audio::DEFAULT_WINDOW_S,
        }
    }

    pub fn noise_types(&self) -> &'static [NoiseType] {
        self.experiment.noise_types()
    }
}

/// A signal/noise mixture with its scaling recorded.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixed: AudioClip,
    /// Gain `α` applied to the noise.
    pub noise_gain: f64,
    pub signal_power: f64,
    /// Mean-square power of `α·noise`.
    pub scaled_noise_power: f64,
    pub achieved_snr_db: f64,
}

/// Mixes `signal + α·noise` with `α = sqrt(P_s / P_n) · 10^(−snr_db/20)`.
pub fn mix_components(signal: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<Mixture, SynthError> {
    if signal.len() != noise.len() {
        return Err(SynthError::LengthMismatch {
            signal: signal.len(),
            noise: noise.len(),
        });
    }
    if signal.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(SynthError::SampleRateMismatch(
            signal.sample_rate_hz(),
            noise.sample_rate_hz(),
        ));
    }
    if !snr_db.is_finite() {
        return Err(SynthError::InvalidParam(format!("snr {snr_db} dB")));
    }
    let p_s = mean_square_power(signal.samples())?;
    let p_n = mean_square_power(noise.samples())?;
    if p_s == 0.0 {
        return Err(SynthError::ZeroPower("signal"));
    }
    if p_n == 0.0 {
        return Err(SynthError::ZeroPower("noise"));
    }
    let gain = (p_s / p_n).sqrt() * 10f64.powf(-snr_db / 20.0);
    let scaled: Vec<f64> = noise.samples().iter().map(|n| gain * n).collect();
    let scaled_noise_power = mean_square_power(&scaled)?;
    let mixed: Vec<f64> = signal.samples().iter().zip(&scaled).map(|(s, n)| s + n).collect();
    Ok(Mixture {
        mixed: AudioClip::new(mixed, signal.sample_rate_hz())?.with_tag_opt(signal.label_tag.clone()),
        noise_gain: gain,
        signal_power: p_s,
        scaled_noise_power,
        achieved_snr_db: 10.0 * (p_s / scaled_noise_power).log10(),
    })
}

pub fn mix_at_snr(signal: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<AudioClip, SynthError> {
    mix_components(signal, noise, snr_db).map(|m| m.mixed)
}

impl AudioClip {
    fn with_tag_opt(mut self, tag: Option<String>) -> Self {
        self.label_tag = tag;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sample_id: usize,
    pub label: Label,
    pub unit_file: Option<String>,
    pub noise_type: NoiseType,
    pub noise_file: String,
    pub offset_samples: usize,
    pub requested_snr_db: Option<f64>,
    pub achieved_snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MixedSample {
    pub audio: AudioClip,
    pub label: Label,
    pub provenance: Provenance,
}

/// Unit windows: each unit is peak-normalized, then shorter units are
/// centered in a zero window and longer ones framed into full windows.
/// Silent windows are dropped.
pub fn unit_windows(units: &[NamedClip], window_s: f64) -> Result<Vec<NamedClip>, SynthError> {
    let mut out = Vec::new();
    for unit in units {
        let clip = normalize_unit(&unit.clip);
        let window_len = audio::window_len_samples(window_s, clip.sample_rate_hz());
        if window_len == 0 {
            return Err(SynthError::InvalidParam(format!("window {window_s} s")));
        }
        let windows = if clip.len() < window_len {
            let mut padded = vec![0.0; window_len];
            let start = (window_len - clip.len()) / 2;
            padded[start..start + clip.len()].copy_from_slice(clip.samples());
            vec![AudioClip::new(padded, clip.sample_rate_hz())?.with_tag_opt(clip.label_tag.clone())]
        } else {
            audio::frame_windows(&clip, window_s)?.windows
        };
        let many = windows.len() > 1;
        for (k, w) in windows.into_iter().enumerate() {
            if w.peak() == 0.0 {
                continue;
            }
            let name = if many {
                format!("{}#{k}", unit.name)
            } else {
                unit.name.clone()
            };
            out.push(NamedClip { name, clip: w });
        }
    }
    Ok(out)
}

/// Builds `n_pos` positives (unit window + random noise segment at
/// `cfg.snr_db`) followed by `n_neg` negatives (raw noise windows). Sample
/// `i` draws its noise type, clip and offset from an RNG seeded with
/// `seed::derive(cfg.seed, i)`; positives cycle through the unit windows in
/// order.
pub fn build_experiment(
    units: &[NamedClip],
    bank: &NoiseBank,
    cfg: &ExperimentConfig,
    n_pos: usize,
    n_neg: usize,
) -> Result<Vec<MixedSample>, SynthError> {
    let windows = if n_pos > 0 {
        unit_windows(units, cfg.window_s)?
    } else {
        Vec::new()
    };
    if n_pos > 0 && windows.is_empty() {
        return Err(SynthError::NoUnits);
    }
    let types = cfg.noise_types();
    let sample_rate = match (windows.first(), bank.clips(types[0]).first()) {
        (Some(w), _) => w.clip.sample_rate_hz(),
        (None, Some(c)) => c.clip.sample_rate_hz(),
        (None, None) => return Err(SynthError::MissingNoiseType(types[0])),
    };
    let window_len = audio::window_len_samples(cfg.window_s, sample_rate);
    bank.check(types, window_len)?;
    for c in types.iter().flat_map(|&t| bank.clips(t)) {
        if c.clip.sample_rate_hz() != sample_rate {
            return Err(SynthError::SampleRateMismatch(sample_rate, c.clip.sample_rate_hz()));
        }
    }

    (0..n_pos + n_neg)
        .into_par_iter()
        .map(|i| {
            let sample_seed = seed::derive(cfg.seed, i as u64);
            let mut rng = seed::rng(sample_seed);
            let noise_type = types[rng.random_range(0..types.len())];
            let clips = bank.clips(noise_type);
            let source = &clips[rng.random_range(0..clips.len())];
            let offset = rng.random_range(0..=source.clip.len() - window_len);
            let noise = source.clip.slice(offset, window_len);
            let mut provenance = Provenance {
                sample_id: i,
                label: Label::Noise,
                unit_file: None,
                noise_type,
                noise_file: source.name.clone(),
                offset_samples: offset,
                requested_snr_db: None,
                achieved_snr_db: None,
                seed: sample_seed,
            };
            if i < n_pos {
                let unit = &windows[i % windows.len()];
                let mix = mix_components(&unit.clip, &noise, cfg.snr_db)?;
                provenance.label = Label::Whale;
                provenance.unit_file = Some(unit.name.clone());
                provenance.requested_snr_db = Some(cfg.snr_db);
                provenance.achieved_snr_db = Some(mix.achieved_snr_db);
                Ok(MixedSample {
                    audio: mix.mixed,
                    label: Label::Whale,
                    provenance,
                })
            } else {
                if mean_square_power(noise.samples())? == 0.0 {
                    return Err(SynthError::ZeroPower("noise"));
                }
                Ok(MixedSample {
                    audio: noise,
                    label: Label::Noise,
                    provenance,
                })
            }
        })
        .collect()
}

/// Column order of the dataset manifest CSV.
pub const MANIFEST_COLUMNS: [&str; 9] = [
    "sample_id",
    "label",
    "unit_file",
    "noise_type",
    "noise_file",
    "offset_samples",
    "requested_snr_db",
    "achieved_snr_db",
    "seed",
];

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[Provenance]) -> crate::Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| crate::Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(MANIFEST_COLUMNS).map_err(csv_err)?;
    for p in rows {
        w.write_record([
            p.sample_id.to_string(),
            p.label.to_string(),
            p.unit_file.clone().unwrap_or_default(),
            p.noise_type.to_string(),
            p.noise_file.clone(),
            p.offset_samples.to_string(),
            opt_f64(p.requested_snr_db),
            opt_f64(p.achieved_snr_db),
            p.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> crate::Result<Vec<Provenance>> {
    let path = path.as_ref();
    let bad = |m: String| crate::Error::format(path, m);
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().ne(MANIFEST_COLUMNS) {
        return Err(bad(format!("unexpected manifest header {headers:?}")));
    }
    let opt = |s: &str| -> Result<Option<f64>, crate::Error> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| bad(format!("{s:?}: {e}")))
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let int = |i: usize| {
            field(i)
                .parse::<u64>()
                .map_err(|e| bad(format!("{}: {e}", MANIFEST_COLUMNS[i])))
        };
        rows.push(Provenance {
            sample_id: int(0)? as usize,
            label: Label::from_u8(int(1)? as u8).ok_or_else(|| bad(format!("bad label {:?}", field(1))))?,
            unit_file: Some(field(2).to_string()).filter(|s| !s.is_empty()),
            noise_type: field(3).parse().map_err(|e: SynthError| bad(e.to_string()))?,
            noise_file: field(4).to_string(),
            offset_samples: int(5)? as usize,
            requested_snr_db: opt(field(6))?,
            achieved_snr_db: opt(field(7))?,
            seed: int(8)?,
        });
    }
    Ok(rows)
}
