//! Applying a calibration bundle to live pressure frames.

use serde::{Deserialize, Serialize};

use crate::calibrate::{model_inputs, CalibrationBundle, Target};
use crate::error::{Error, Result};
use crate::filter::{Lowpass, LowpassCoefficients};
use crate::model::{FlowState, PressureFrame, CHANNELS};
use crate::poly::MonomialBasis;
use crate::preprocess::{normalize_frame, NormalizedSample};

/// Evaluates the three bundle models with cached monomial bases.
pub struct Predictor<'a> {
    bundle: &'a CalibrationBundle,
    speed_basis: MonomialBasis,
    angle_basis: MonomialBasis,
}

impl<'a> Predictor<'a> {
    pub fn new(bundle: &'a CalibrationBundle) -> Self {
        Self {
            bundle,
            speed_basis: bundle.speed_model.basis(),
            angle_basis: bundle.aoa_model.basis(),
        }
    }

    pub fn bundle(&self) -> &CalibrationBundle {
        self.bundle
    }

    /// Raw model outputs; airspeed clamped at zero.
    pub fn predict(&self, sample: &NormalizedSample) -> FlowState {
        let b = self.bundle;
        let mut inputs = Vec::with_capacity(6);
        let mut scratch = Vec::new();
        model_inputs(Target::Airspeed, sample, b.rho_ref, &mut inputs);
        let airspeed = b
            .speed_model
            .predict_with(&self.speed_basis, &inputs, &mut scratch);
        model_inputs(Target::Aoa, sample, b.rho_ref, &mut inputs);
        let aoa = b
            .aoa_model
            .predict_with(&self.angle_basis, &inputs, &mut scratch);
        let aos = b
            .aos_model
            .predict_with(&self.angle_basis, &inputs, &mut scratch);
        FlowState {
            airspeed: airspeed.max(0.0),
            aoa,
            aos,
        }
    }

    pub fn estimate(&self, frame: &PressureFrame) -> Result<Estimate> {
        let sample = normalize_frame(frame, self.bundle.q_min)?;
        let state = self.predict(&sample);
        if !(state.airspeed.is_finite() && state.aoa.is_finite() && state.aos.is_finite()) {
            return Err(Error::Numerical(
                "model produced a non-finite estimate".into(),
            ));
        }
        Ok(Estimate {
            t: frame.t,
            state,
            q: sample.q,
            calibrated: self.bundle.envelope.contains(&state),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub t: f64,
    pub state: FlowState,
    /// Pa
    pub q: f64,
    /// Whether the estimate lies inside the calibrated envelope.
    pub calibrated: bool,
}

/// Estimate airspeed and flow angles from one (already filtered) frame.
pub fn estimate_frame(bundle: &CalibrationBundle, frame: &PressureFrame) -> Result<Estimate> {
    Predictor::new(bundle).estimate(frame)
}

/// One output of the streaming estimator. `estimate` is `None` for frames
/// whose `q` is below the bundle's threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSample {
    pub t: f64,
    pub q: f64,
    pub estimate: Option<Estimate>,
}

impl StreamSample {
    pub fn is_gap(&self) -> bool {
        self.estimate.is_none()
    }
}

/// Per-channel low-pass filtering followed by per-frame estimation.
pub struct StreamEstimator<'a> {
    predictor: Predictor<'a>,
    filters: [Lowpass; CHANNELS],
    last_t: Option<f64>,
    index: usize,
}

impl<'a> StreamEstimator<'a> {
    pub fn new(bundle: &'a CalibrationBundle, fs: f64, fc: f64) -> Result<Self> {
        let coef = LowpassCoefficients::design(fs, fc)?;
        Ok(Self {
            predictor: Predictor::new(bundle),
            filters: std::array::from_fn(|_| Lowpass::from_coefficients(coef)),
            last_t: None,
            index: 0,
        })
    }

    pub fn push(&mut self, frame: &PressureFrame) -> Result<StreamSample> {
        if frame.dp.iter().any(|v| !v.is_finite()) || !frame.t.is_finite() {
            let channel = frame
                .dp
                .iter()
                .position(|v| !v.is_finite())
                .map_or(0, |c| c + 1);
            return Err(Error::NonFinite { channel });
        }
        if self.last_t.is_some_and(|last| frame.t <= last) {
            return Err(Error::NonMonotonicTime { index: self.index });
        }
        self.last_t = Some(frame.t);
        self.index += 1;
        let mut dp = [0.0; CHANNELS];
        for (c, f) in self.filters.iter_mut().enumerate() {
            dp[c] = f.update(frame.dp[c]);
        }
        let filtered = PressureFrame { t: frame.t, dp };
        match self.predictor.estimate(&filtered) {
            Ok(e) => Ok(StreamSample {
                t: frame.t,
                q: e.q,
                estimate: Some(e),
            }),
            Err(Error::InsufficientAirflow { q, .. }) => Ok(StreamSample {
                t: frame.t,
                q,
                estimate: None,
            }),
            Err(e) => Err(e),
        }
    }
}

/// Filter and estimate a whole series.
pub fn estimate_stream(
    bundle: &CalibrationBundle,
    frames: &[PressureFrame],
    fs: f64,
    fc: f64,
) -> Result<Vec<StreamSample>> {
    let mut est = StreamEstimator::new(bundle, fs, fc)?;
    frames.iter().map(|f| est.push(f)).collect()
}
