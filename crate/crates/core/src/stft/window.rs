use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Analysis/synthesis window shape.
///
/// The same window is applied on both sides (matched windowing), so the
/// overlap-add constraint below is on the *squared* window. `SqrtHann` at
/// 50% overlap is the usual perfect-reconstruction pair and the default
/// throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
    SqrtHann,
}

impl Window {
    /// Sample the window (periodic form) at length `frame_len`.
    pub fn samples(self, frame_len: usize) -> Vec<f64> {
        use std::f64::consts::PI;
        (0..frame_len)
            .map(|n| {
                let x = n as f64 / frame_len as f64;
                match self {
                    Window::Rectangular => 1.0,
                    Window::Hann => 0.5 * (1.0 - (2.0 * PI * x).cos()),
                    Window::SqrtHann => (PI * x).sin(),
                }
            })
            .collect()
    }

    /// Overlap-add constant of the matched pair: sum over frame shifts of
    /// `w[n]^2` evaluated at stride `hop`.
    ///
    /// Returns the constant when it is the same for every sample position
    /// (relative spread below 1e-8), which is what makes analysis followed
    /// by synthesis an identity. Non-constant pairs (for example `Hann`
    /// matched with itself at 50% overlap) are rejected.
    pub fn cola_constant(self, frame_len: usize, hop: usize) -> Result<f64> {
        let w = self.samples(frame_len);
        let mut sums = vec![0.0f64; hop];
        for (n, &wn) in w.iter().enumerate() {
            sums[n % hop] += wn * wn;
        }
        let mean = sums.iter().sum::<f64>() / hop as f64;
        let spread = sums
            .iter()
            .map(|s| (s - mean).abs())
            .fold(0.0f64, f64::max);
        if mean <= 0.0 || spread > 1e-8 * mean {
            return Err(Error::NonCola {
                window: self,
                frame_len,
                hop,
            });
        }
        Ok(mean)
    }
}
