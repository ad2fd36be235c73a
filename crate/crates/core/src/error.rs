use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("file has {channels} channels; select one with a channel index")]
    ChannelSelectionRequired { channels: u16 },

    #[error("channel {channel} out of range for {channels}-channel file")]
    ChannelOutOfRange { channel: usize, channels: u16 },

    #[error("sample rate must be positive")]
    InvalidSampleRate,

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("sample rate {found} Hz does not match the required {expected} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("invalid `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("signal too short: need more than {needed} samples, got {found}")]
    SignalTooShort { needed: usize, found: usize },

    #[error("signal has zero power; SNR is undefined")]
    ZeroPowerSignal,

    #[error("noise has zero power")]
    ZeroPowerNoise,

    #[error("no voiced frames found; supply the mean pitch period explicitly")]
    NoVoicedFrames,

    #[error("reference contains no events")]
    EmptyReference,

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{name}: {source}")]
    Utterance {
        name: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_utterance(self, name: &str) -> Self {
        Error::Utterance {
            name: name.to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Wav(_) => "wav",
            Error::UnsupportedEncoding(_) => "unsupported_encoding",
            Error::ChannelSelectionRequired { .. } => "channel_selection_required",
            Error::ChannelOutOfRange { .. } => "channel_out_of_range",
            Error::InvalidSampleRate => "invalid_sample_rate",
            Error::NonFinite { .. } => "non_finite",
            Error::SampleRateMismatch { .. } => "sample_rate_mismatch",
            Error::InvalidConfig { .. } => "invalid_config",
            Error::SignalTooShort { .. } => "signal_too_short",
            Error::ZeroPowerSignal => "zero_power_signal",
            Error::ZeroPowerNoise => "zero_power_noise",
            Error::NoVoicedFrames => "no_voiced_frames",
            Error::EmptyReference => "empty_reference",
            Error::Parse { .. } => "parse",
            Error::Json(_) => "json",
            Error::Utterance { source, .. } => source.kind(),
        }
    }

    /// Name of the offending configuration field, when there is one.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::InvalidConfig { field, .. } => Some(field),
            Error::Utterance { source, .. } => source.field(),
            _ => None,
        }
    }
}
