use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
    #[error(transparent)]
    Spectrogram(#[from] crate::spectrogram::SpectrogramError),
    #[error(transparent)]
    Cnn(#[from] crate::cnn::CnnError),
    #[error(transparent)]
    Svm(#[from] crate::svm::SvmError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True when the failure comes from numerics (non-finite values, zero
    /// power) rather than from malformed or missing input data.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Svm(e) => matches!(e, crate::svm::SvmError::NonFinite { .. }),
            Error::Synth(e) => matches!(e, crate::synth::SynthError::ZeroPower(_)),
            _ => false,
        }
    }
}
