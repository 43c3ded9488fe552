//! L2-regularized hinge-loss linear SVM trained by dual coordinate descent.
//!
//! Labels `{noise, whale}` map to `{-1, +1}`. The bias is learned as the
//! weight of an augmented constant feature equal to 1, so it is regularized
//! together with `w`. The dual problem is
//!
//! ```text
//! max_α  Σ α_i − ½ ‖Σ α_i y_i x̃_i‖²   s.t. 0 ≤ α_i ≤ C
//! ```
//!
//! and each coordinate step maximizes it exactly along one `α_i`, so the
//! dual objective never decreases.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training data has no samples")]
    Empty,
    #[error("training data contains only class {0}")]
    SingleClass(Label),
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("sample {index} has {actual} features, expected {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("feature vector has {actual} dims but the model has {expected}")]
    ModelDim { expected: usize, actual: usize },
    #[error("sample {index} contains a non-finite feature")]
    NonFinite { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Noise = 0,
    Whale = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Noise),
            1 => Some(Label::Whale),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    fn sign(self) -> f64 {
        match self {
            Label::Noise => -1.0,
            Label::Whale => 1.0,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Feature vectors with binary labels and optional group tags (e.g. the
/// recording year) used to keep train and test material apart.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub group_tags: Option<Vec<String>>,
}

impl LabeledSet {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<Label>) -> Self {
        Self {
            features,
            labels,
            group_tags: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.features.first().map(Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            group_tags: self
                .group_tags
                .as_ref()
                .map(|tags| indices.iter().map(|&i| tags[i].clone()).collect()),
        }
    }

    /// Checks lengths, dimensions and finiteness; returns the feature dim.
    pub fn validate(&self) -> Result<usize, SvmError> {
        if self.features.len() != self.labels.len() {
            return Err(SvmError::LengthMismatch {
                features: self.features.len(),
                labels: self.labels.len(),
            });
        }
        if let Some(tags) = &self.group_tags {
            if tags.len() != self.labels.len() {
                return Err(SvmError::LengthMismatch {
                    features: tags.len(),
                    labels: self.labels.len(),
                });
            }
        }
        let dim = self.dim().ok_or(SvmError::Empty)?;
        for (index, x) in self.features.iter().enumerate() {
            if x.len() != dim {
                return Err(SvmError::DimMismatch {
                    index,
                    expected: dim,
                    actual: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SvmError::NonFinite { index });
            }
        }
        Ok(dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Regularization constant `C`.
    pub c: f64,
    /// Stop once the largest projected-gradient magnitude in an epoch falls
    /// below this.
    pub tol: f64,
    /// Maximum number of epochs.
    pub max_iter: usize,
    /// Seeds the per-epoch coordinate permutation.
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_iter: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c_param: f64,
}

/// Solver trace, kept for diagnostics and invariant checks.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: usize,
    pub converged: bool,
    /// Dual objective after each epoch.
    pub dual_objectives: Vec<f64>,
    pub alphas: Vec<f64>,
}

pub fn train(data: &LabeledSet, params: &SvmParams) -> Result<SvmModel, SvmError> {
    train_with_report(data, params).map(|(m, _)| m)
}

pub fn train_with_report(data: &LabeledSet, params: &SvmParams) -> Result<(SvmModel, TrainReport), SvmError> {
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(SvmError::InvalidParam(format!("C must be positive, got {}", params.c)));
    }
    if !(params.tol.is_finite() && params.tol > 0.0) {
        return Err(SvmError::InvalidParam(format!(
            "tol must be positive, got {}",
            params.tol
        )));
    }
    let dim = data.validate()?;
    let first = data.labels[0];
    if data.labels.iter().all(|&l| l == first) {
        return Err(SvmError::SingleClass(first));
    }

    let n = data.len();
    let c = params.c;
    let y: Vec<f64> = data.labels.iter().map(|l| l.sign()).collect();
    // Diagonal of Q including the augmented bias feature.
    let q_diag: Vec<f64> = data
        .features
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(params.seed);
    let mut report = TrainReport {
        epochs: 0,
        converged: false,
        dual_objectives: Vec::new(),
        alphas: Vec::new(),
    };

    for _ in 0..params.max_iter {
        order.shuffle(&mut rng);
        let mut max_violation = 0.0f64;
        for &i in &order {
            let x = &data.features[i];
            let margin = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let g = y[i] * margin - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                if step != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(x) {
                        *wj += step * xj;
                    }
                    b += step;
                }
            }
        }
        report.epochs += 1;
        let norm_sq = w.iter().map(|v| v * v).sum::<f64>() + b * b;
        report.dual_objectives.push(alpha.iter().sum::<f64>() - 0.5 * norm_sq);
        if max_violation < params.tol {
            report.converged = true;
            break;
        }
    }
    report.alphas = alpha;
    Ok((
        SvmModel {
            weights: w,
            bias: b,
            c_param: c,
        },
        report,
    ))
}

/// `w·x + b`.
pub fn decision_value(model: &SvmModel, x: &[f64]) -> Result<f64, SvmError> {
    if x.len() != model.weights.len() {
        return Err(SvmError::ModelDim {
            expected: model.weights.len(),
            actual: x.len(),
        });
    }
    Ok(model.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + model.bias)
}

/// Whale when `w·x + b > 0`; an exact zero is classified as noise.
pub fn predict(model: &SvmModel, x: &[f64]) -> Result<Label, SvmError> {
    Ok(if decision_value(model, x)? > 0.0 {
        Label::Whale
    } else {
        Label::Noise
    })
}

const MODEL_HEADER: &str = "whaledet-svm 1";

impl SvmModel {
    /// Plain-text form: a header line, `dim`, `c` and `bias` lines, then one
    /// weight per line. Values use the shortest representation that parses
    /// back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MODEL_HEADER}").unwrap();
        writeln!(s, "dim {}", self.weights.len()).unwrap();
        writeln!(s, "c {:?}", self.c_param).unwrap();
        writeln!(s, "bias {:?}", self.bias).unwrap();
        for w in &self.weights {
            writeln!(s, "{w:?}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, SvmError> {
        let err = |line: usize, message: String| SvmError::ModelFormat { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, MODEL_HEADER)) => {}
            other => {
                return Err(err(
                    1,
                    format!("expected {MODEL_HEADER:?}, got {:?}", other.map(|l| l.1)),
                ));
            }
        }
        let mut field = |key: &str| -> Result<(usize, String), SvmError> {
            let (no, line) = lines.next().ok_or_else(|| err(0, format!("missing {key}")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok((no, v.trim().to_string())),
                _ => Err(err(no, format!("expected `{key} <value>`"))),
            }
        };
        let (no, dim) = field("dim")?;
        let dim: usize = dim.parse().map_err(|e| err(no, format!("{e}")))?;
        let (no, c) = field("c")?;
        let c_param: f64 = c.parse().map_err(|e| err(no, format!("{e}")))?;
        let (no, bias) = field("bias")?;
        let bias: f64 = bias.parse().map_err(|e| err(no, format!("{e}")))?;
        let weights = lines
            .filter(|(_, l)| !l.is_empty())
            .map(|(no, l)| l.parse::<f64>().map_err(|e| err(no, format!("{e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if weights.len() != dim {
            return Err(err(0, format!("header says {dim} weights, found {}", weights.len())));
        }
        if c_param.is_nan() || c_param <= 0.0 {
            return Err(err(3, format!("C must be positive, got {c_param}")));
        }
        Ok(Self { weights, bias, c_param })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| crate::Error::format(path, e.to_string()))
    }
}
