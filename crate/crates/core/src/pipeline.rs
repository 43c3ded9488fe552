//! Window → spectrogram → image → feature vector, and the binary feature
//! file used to hand features between runs.

use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::cnn::{self, Network, Shape};
use crate::spectrogram::{self, GrayImage, ResizeMode, Stft, StftParams};
use crate::svm::{Label, LabeledSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Code-layer activations of a CNN.
    Cnn,
    /// The raw spectrogram image, pixels scaled to `[0, 1]` and flattened.
    Spectrogram,
}

impl std::str::FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cnn" => Ok(FeatureKind::Cnn),
            "spectrogram" => Ok(FeatureKind::Spectrogram),
            other => Err(format!("unknown feature kind {other:?} (expected cnn or spectrogram)")),
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureKind::Cnn => "cnn",
            FeatureKind::Spectrogram => "spectrogram",
        })
    }
}

#[derive(Debug)]
enum Extractor {
    Cnn(Network),
    Spectrogram,
}

/// Turns analysis windows into feature vectors. Immutable and shareable
/// across threads.
#[derive(Debug)]
pub struct Featurizer {
    stft: Stft,
    width: usize,
    height: usize,
    resize: ResizeMode,
    extractor: Extractor,
    l2_normalize: bool,
}

impl Featurizer {
    /// CNN codes; the image size follows the network input.
    pub fn cnn(params: StftParams, network: Network) -> crate::Result<Self> {
        let Shape::Maps { height, width, .. } = network.input_shape() else {
            unreachable!("network input is spatial")
        };
        Ok(Self {
            stft: Stft::new(params)?,
            width,
            height,
            resize: ResizeMode::Bilinear,
            extractor: Extractor::Cnn(network),
            l2_normalize: false,
        })
    }

    pub fn spectrogram(params: StftParams, width: usize, height: usize) -> crate::Result<Self> {
        if width == 0 || height == 0 {
            return Err(spectrogram::SpectrogramError::InvalidImageSize { width, height }.into());
        }
        Ok(Self {
            stft: Stft::new(params)?,
            width,
            height,
            resize: ResizeMode::Bilinear,
            extractor: Extractor::Spectrogram,
            l2_normalize: false,
        })
    }

    /// Scales every feature vector to unit Euclidean norm.
    pub fn with_l2_normalize(mut self, on: bool) -> Self {
        self.l2_normalize = on;
        self
    }

    pub fn with_resize(mut self, mode: ResizeMode) -> Self {
        self.resize = mode;
        self
    }

    pub fn kind(&self) -> FeatureKind {
        match self.extractor {
            Extractor::Cnn(_) => FeatureKind::Cnn,
            Extractor::Spectrogram => FeatureKind::Spectrogram,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.extractor {
            Extractor::Cnn(net) => net.code_dim(),
            Extractor::Spectrogram => self.width * self.height,
        }
    }

    pub fn image(&self, clip: &AudioClip) -> crate::Result<GrayImage> {
        let spec = self.stft.spectrogram(clip)?;
        Ok(spectrogram::to_image_with(&spec, self.width, self.height, self.resize)?)
    }

    pub fn features(&self, clip: &AudioClip) -> crate::Result<Vec<f64>> {
        let image = self.image(clip)?;
        let mut v = match &self.extractor {
            Extractor::Cnn(net) => cnn::extract_code(net, &image)?.values,
            Extractor::Spectrogram => image.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        };
        if self.l2_normalize {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
        Ok(v)
    }

    /// Features for every clip, computed in parallel, in input order.
    pub fn features_all(&self, clips: &[&AudioClip]) -> crate::Result<Vec<Vec<f64>>> {
        clips.par_iter().map(|c| self.features(c)).collect()
    }
}

/// Path of the label CSV that accompanies a feature file.
pub fn labels_path(features: &Path) -> PathBuf {
    let mut name = features.file_stem().unwrap_or_default().to_os_string();
    name.push(".labels.csv");
    features.with_file_name(name)
}

/// Writes `n_samples u32 | dim u32 | f32 rows` (little-endian) plus a
/// sibling `<stem>.labels.csv` with `sample_id,label,group`.
pub fn write_features(path: impl AsRef<Path>, data: &LabeledSet, sample_ids: &[usize]) -> crate::Result<()> {
    let path = path.as_ref();
    let dim = data.dim().unwrap_or(0);
    let io = |e| crate::Error::io(path, e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    w.write_all(&(data.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    for row in &data.features {
        if row.len() != dim {
            return Err(crate::Error::format(path, "ragged feature rows"));
        }
        for &v in row {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    let lpath = labels_path(path);
    let csv_err = |e: csv::Error| crate::Error::format(&lpath, e.to_string());
    let mut lw = csv::Writer::from_path(&lpath).map_err(csv_err)?;
    lw.write_record(["sample_id", "label", "group"]).map_err(csv_err)?;
    for (i, label) in data.labels.iter().enumerate() {
        let group = data.group_tags.as_ref().map(|t| t[i].as_str()).unwrap_or("");
        let id = sample_ids.get(i).copied().unwrap_or(i);
        lw.write_record([id.to_string(), label.to_string(), group.to_string()])
            .map_err(csv_err)?;
    }
    lw.flush().map_err(|e| crate::Error::io(&lpath, e))
}

/// Reads a feature file and its label CSV; returns the set and sample ids.
pub fn read_features(path: impl AsRef<Path>) -> crate::Result<(LabeledSet, Vec<usize>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| crate::Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(crate::Error::format(path, "feature file header truncated"));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = 8 + n * dim * 4;
    if bytes.len() != expected {
        return Err(crate::Error::format(
            path,
            format!(
                "expected {expected} bytes for {n}x{dim} features, found {}",
                bytes.len()
            ),
        ));
    }
    let features: Vec<Vec<f64>> = if dim == 0 {
        vec![Vec::new(); n]
    } else {
        bytes[8..]
            .chunks_exact(dim * 4)
            .map(|row| {
                row.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect()
            })
            .collect()
    };

    let lpath = labels_path(path);
    let bad = |m: String| crate::Error::format(&lpath, m);
    let mut r = csv::Reader::from_path(&lpath).map_err(|e| bad(e.to_string()))?;
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        ids.push(rec[0].parse::<usize>().map_err(|e| bad(format!("sample_id: {e}")))?);
        let label: u8 = rec[1].parse().map_err(|e| bad(format!("label: {e}")))?;
        labels.push(Label::from_u8(label).ok_or_else(|| bad(format!("label {label} not 0/1")))?);
        groups.push(rec.get(2).unwrap_or("").to_string());
    }
    if labels.len() != n {
        return Err(bad(format!("{} labels for {n} feature rows", labels.len())));
    }
    let group_tags = if !groups.is_empty() && groups.iter().all(|g| !g.is_empty()) {
        Some(groups)
    } else {
        None
    };
    Ok((
        LabeledSet {
            features,
            labels,
            group_tags,
        },
        ids,
    ))
}
