use serde::{Deserialize, Serialize};

/// Non-fatal conditions reported alongside a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Too few extrema in the mean-based signal, or no voiced frames.
    Unvoiced,
    /// Automatic polarity needed more GCI intervals than were found.
    PolarityFallback { intervals: usize },
    /// LP frames with zero energy (coefficients forced to zero).
    SilentFrames { count: usize },
    /// LP frames whose recursion stopped early on a non-positive error power.
    TruncatedFrames { count: usize },
    /// EGG without detectable glottal cycles.
    FlatEgg,
    /// Alignment objective was flat; no shift applied.
    AmbiguousAlignment,
}
