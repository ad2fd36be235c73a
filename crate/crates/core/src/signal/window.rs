use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Blackman,
    Hanning,
    Rectangular,
}

/// A symmetric window of a given length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowFn {
    kind: WindowKind,
    length: usize,
}

impl WindowFn {
    pub fn new(kind: WindowKind, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::config("window length", "must be at least 1"));
        }
        Ok(Self { kind, length })
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Symmetric (non-periodic) coefficients. The second half mirrors the
    /// first, so `c[i] == c[len - 1 - i]` holds bit for bit.
    pub fn coefficients<T: Scalar>(&self) -> Vec<T> {
        let len = self.length;
        if len == 1 {
            return vec![T::one()];
        }
        let denom = (len - 1) as f64;
        let eval = |i: usize| -> f64 {
            let phase = std::f64::consts::TAU * i as f64 / denom;
            match self.kind {
                WindowKind::Blackman => 0.42 - 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos(),
                WindowKind::Hanning => 0.5 - 0.5 * phase.cos(),
                WindowKind::Rectangular => 1.0,
            }
        };
        let mut out = vec![T::zero(); len];
        for i in 0..len.div_ceil(2) {
            // Blackman endpoints evaluate to about -1e-17.
            let c = T::of(eval(i).max(0.0));
            out[i] = c;
            out[len - 1 - i] = c;
        }
        out
    }
}
