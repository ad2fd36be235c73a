pub mod diagnostic;
pub mod error;
pub mod scalar;
pub mod signal;
pub mod lp;
pub mod meanshape;
pub mod detect;
pub mod reference;
pub mod synth;
pub mod eval;
pub mod formats;

pub use diagnostic::Diagnostic;
pub use detect::{detect_events, Detection, DetectorConfig, GlottalEvent, Polarity, PolarityMode};
pub use error::{Error, Result};
pub use eval::{score, EvalReport, ScoreConfig};
pub use meanshape::EventKind;
pub use reference::{ReferenceEvents, ReferenceSource};
pub use scalar::Scalar;
pub use signal::Waveform;

pub type Waveform64 = Waveform<f64>;
pub type Waveform32 = Waveform<f32>;
pub type Detection64 = Detection<f64>;
pub type Detection32 = Detection<f32>;
pub type Utterance64 = eval::Utterance<f64>;
pub type Utterance32 = eval::Utterance<f32>;
