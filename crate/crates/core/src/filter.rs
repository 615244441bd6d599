//! First-order Butterworth low-pass, discretized with the bilinear transform.
//!
//! The analog prototype `wc / (s + wc)` is prewarped so the -3 dB point of
//! the digital filter lands exactly on the requested cutoff.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowpassCoefficients {
    /// Feed-forward gain, shared by the current and previous input.
    pub b: f64,
    /// Feedback coefficient: `y[n] = b (x[n] + x[n-1]) - a * y[n-1]`.
    pub a: f64,
}

impl LowpassCoefficients {
    pub fn design(fs: f64, fc: f64) -> Result<Self> {
        if !(fs.is_finite() && fc.is_finite() && fc > 0.0 && fc < fs / 2.0) {
            return Err(Error::InvalidCutoff { fc, fs });
        }
        let k = (std::f64::consts::PI * fc / fs).tan();
        Ok(Self {
            b: k / (1.0 + k),
            a: (k - 1.0) / (k + 1.0),
        })
    }
}

/// Streaming single-channel filter. The state is seeded by the first sample,
/// so a constant input passes through without a startup transient.
#[derive(Debug, Clone)]
pub struct Lowpass {
    coef: LowpassCoefficients,
    // (previous input, previous output)
    state: Option<(f64, f64)>,
}

impl Lowpass {
    pub fn new(fs: f64, fc: f64) -> Result<Self> {
        Ok(Self::from_coefficients(LowpassCoefficients::design(
            fs, fc,
        )?))
    }

    pub fn from_coefficients(coef: LowpassCoefficients) -> Self {
        Self { coef, state: None }
    }

    pub fn coefficients(&self) -> LowpassCoefficients {
        self.coef
    }

    pub fn update(&mut self, x: f64) -> f64 {
        let (x1, y1) = self.state.unwrap_or((x, x));
        let y = self.coef.b * (x + x1) - self.coef.a * y1;
        self.state = Some((x, y));
        y
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}

/// Filter a whole series. Output length equals input length.
pub fn lowpass_filter(samples: &[f64], fs: f64, fc: f64) -> Result<Vec<f64>> {
    let mut f = Lowpass::new(fs, fc)?;
    if samples.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    Ok(samples.iter().map(|&x| f.update(x)).collect())
}
