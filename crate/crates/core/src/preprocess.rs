//! From raw calibration runs to a regression-ready dataset: low-pass filter
//! each channel, keep the steady middle of the run, and divide every frame by
//! its pressure magnitude `q` so the angle information no longer depends on
//! airspeed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::lowpass_filter;
use crate::model::{CalibrationRun, Envelope, FlowState, PressureFrame, CHANNELS};

/// Default low-pass cutoff, Hz.
pub const DEFAULT_CUTOFF_HZ: f64 = 10.0;

/// Frames with `q` below this are treated as no airflow, Pa.
pub const DEFAULT_Q_MIN: f64 = 2.0;

/// A frame divided by its pressure magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSample {
    /// Euclidean norm of the five differential pressures, Pa.
    pub q: f64,
    /// `dp_i / q`; unit length whenever `q > 0`.
    pub x: [f64; CHANNELS],
}

/// `sqrt(dp1^2 + ... + dp5^2)`.
pub fn q_factor(frame: &PressureFrame) -> f64 {
    let (m, t) = ratios(&frame.dp);
    if m == 0.0 {
        0.0
    } else {
        m * t.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

// Channels divided by the largest magnitude. Dividing first makes the
// normalized vector independent of any exactly-representable rescaling of the
// frame, and keeps the sum of squares from overflowing.
fn ratios(dp: &[f64; CHANNELS]) -> (f64, [f64; CHANNELS]) {
    let m = dp.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 {
        return (0.0, [0.0; CHANNELS]);
    }
    (m, dp.map(|v| v / m))
}

pub fn normalize_frame(frame: &PressureFrame, q_min: f64) -> Result<NormalizedSample> {
    let (m, t) = ratios(&frame.dp);
    let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q = m * norm;
    if !(q >= q_min) || q == 0.0 {
        return Err(Error::InsufficientAirflow { q, q_min });
    }
    Ok(NormalizedSample {
        q,
        x: t.map(|v| v / norm),
    })
}

/// Index range of the steady middle 70 %: `floor(0.15 N)` dropped per side.
pub fn steady_window_range(len: usize) -> Result<std::ops::Range<usize>> {
    if len < CalibrationRun::MIN_FRAMES {
        return Err(Error::TooShort {
            len,
            min: CalibrationRun::MIN_FRAMES,
        });
    }
    let trim = len * 15 / 100;
    Ok(trim..len - trim)
}

pub fn steady_window<T>(samples: &[T]) -> Result<&[T]> {
    Ok(&samples[steady_window_range(samples.len())?])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub cutoff_hz: f64,
    pub q_min: f64,
    pub envelope: Envelope,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            q_min: DEFAULT_Q_MIN,
            envelope: Envelope::default(),
        }
    }
}

/// One normalized frame of a run with its known flow state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample {
    pub sample: NormalizedSample,
    pub label: FlowState,
    /// Index of the frame in the raw run.
    pub frame: usize,
}

/// Filter every channel of the run, then normalize its steady window.
///
/// Frames below `q_min` are dropped; if more than half of the window is
/// dropped the whole run is rejected.
pub fn preprocess_run(
    run: &CalibrationRun,
    cutoff_hz: f64,
    q_min: f64,
) -> Result<Vec<LabeledSample>> {
    let n = run.frames.len();
    let window = steady_window_range(n)?;
    let mut filtered = vec![[0.0; CHANNELS]; n];
    for c in 0..CHANNELS {
        let channel: Vec<f64> = run.frames.iter().map(|f| f.dp[c]).collect();
        for (i, v) in lowpass_filter(&channel, run.sample_rate, cutoff_hz)?
            .into_iter()
            .enumerate()
        {
            filtered[i][c] = v;
        }
    }
    let total = window.len();
    let mut out = Vec::with_capacity(total);
    for i in window {
        let frame = PressureFrame::new(run.frames[i].t, filtered[i]);
        match normalize_frame(&frame, q_min) {
            Ok(sample) => out.push(LabeledSample {
                sample,
                label: run.true_state,
                frame: i,
            }),
            Err(Error::InsufficientAirflow { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let failed = total - out.len();
    if 2 * failed > total {
        return Err(Error::DeadRun { failed, total });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Measured,
    Augmented,
}

/// Where a measured point came from: run index and raw frame index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PointSource {
    pub run: usize,
    pub frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub sample: NormalizedSample,
    pub label: FlowState,
    pub provenance: Provenance,
    /// `None` for augmented points.
    pub source: Option<PointSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: FlowState,
    pub count: usize,
}

/// Labeled normalized samples, the regression corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDataset {
    pub points: Vec<DataPoint>,
    /// Raw scalar readings ingested: frames times channels over all runs.
    pub ingested_measurements: usize,
    pub envelope: Envelope,
}

impl CalibrationDataset {
    /// Build a dataset, checking labels and uniqueness of measured points.
    pub fn new(
        points: Vec<DataPoint>,
        ingested_measurements: usize,
        envelope: Envelope,
    ) -> Result<Self> {
        let mut sources: Vec<PointSource> = points.iter().filter_map(|p| p.source).collect();
        sources.sort_unstable();
        if let Some(w) = sources.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicatePoint {
                run: w[0].run,
                frame: w[0].frame,
            });
        }
        if let Some(p) = points.iter().find(|p| !envelope.contains(&p.label)) {
            return Err(Error::EnvelopeViolation {
                label: p.label.to_string(),
            });
        }
        Ok(Self {
            points,
            ingested_measurements,
            envelope,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn measured(&self) -> impl Iterator<Item = &DataPoint> {
        self.points
            .iter()
            .filter(|p| p.provenance == Provenance::Measured)
    }

    /// Points per distinct label, in order of first appearance.
    pub fn label_counts(&self) -> Vec<LabelCount> {
        let mut counts: Vec<LabelCount> = Vec::new();
        for p in &self.points {
            match counts.iter_mut().find(|c| c.label == p.label) {
                Some(c) => c.count += 1,
                None => counts.push(LabelCount {
                    label: p.label,
                    count: 1,
                }),
            }
        }
        counts
    }
}

/// Preprocess and concatenate runs into a measured dataset.
pub fn assemble_dataset(
    runs: &[CalibrationRun],
    cfg: &PreprocessConfig,
) -> Result<CalibrationDataset> {
    if runs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(r) = runs.iter().find(|r| !cfg.envelope.contains(&r.true_state)) {
        return Err(Error::EnvelopeViolation {
            label: r.true_state.to_string(),
        });
    }
    let mut points = Vec::new();
    let mut ingested = 0;
    for (run_idx, run) in runs.iter().enumerate() {
        ingested += run.frames.len() * CHANNELS;
        points.extend(
            preprocess_run(run, cfg.cutoff_hz, cfg.q_min)?
                .into_iter()
                .map(|s| DataPoint {
                    sample: s.sample,
                    label: s.label,
                    provenance: Provenance::Measured,
                    source: Some(PointSource {
                        run: run_idx,
                        frame: s.frame,
                    }),
                }),
        );
    }
    CalibrationDataset::new(points, ingested, cfg.envelope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(dp: [f64; 5]) -> PressureFrame {
        PressureFrame::new(0.0, dp)
    }

    fn run(n: usize, dp: [f64; 5]) -> CalibrationRun {
        let frames = (0..n)
            .map(|i| PressureFrame::new(i as f64 / 33.0, dp))
            .collect();
        CalibrationRun::new(FlowState::new(12.0, 0.0, 0.0).unwrap(), 33.0, frames).unwrap()
    }

    #[test]
    fn q_factor_examples() {
        assert_eq!(q_factor(&frame([3.0, 4.0, 0.0, 0.0, 0.0])), 5.0);
        assert_eq!(q_factor(&frame([0.0; 5])), 0.0);
        assert_eq!(q_factor(&frame([-88.2, 0.0, 0.0, 0.0, 0.0])), 88.2);
    }

    #[test]
    fn normalize_examples() {
        let s = normalize_frame(&frame([3.0, 4.0, 0.0, 0.0, 0.0]), 2.0).unwrap();
        assert_eq!(s.q, 5.0);
        assert!((s.x[0] - 0.6).abs() < 1e-15 && (s.x[1] - 0.8).abs() < 1e-15);
        assert_eq!(&s.x[2..], &[0.0; 3]);

        let big = normalize_frame(&frame([30.0, 40.0, 0.0, 0.0, 0.0]), 2.0).unwrap();
        assert_eq!(big.x, s.x);
        assert_eq!(big.q, 50.0);

        assert!(matches!(
            normalize_frame(&frame([0.5, 0.0, 0.0, 0.0, 0.0]), 2.0),
            Err(Error::InsufficientAirflow { .. })
        ));
        assert!(normalize_frame(&frame([0.0; 5]), 0.0).is_err());
    }

    #[test]
    fn steady_window_examples() {
        let v: Vec<usize> = (0..660).collect();
        let w = steady_window(&v).unwrap();
        assert_eq!(w.len(), 462);
        assert_eq!((w[0], w[461]), (99, 560));
        assert_eq!(steady_window(&[0; 100]).unwrap().len(), 70);
        assert_eq!(steady_window(&[0; 10]).unwrap().len(), 8);
        assert_eq!(
            steady_window(&[0; 9]),
            Err(Error::TooShort { len: 9, min: 10 })
        );
    }

    #[test]
    fn preprocess_run_examples() {
        let out = preprocess_run(&run(660, [-88.2, 1.0, -2.0, 0.5, 0.0]), 10.0, 2.0).unwrap();
        assert_eq!(out.len(), 462);
        assert_eq!(out[0].frame, 99);
        assert!(out.iter().all(|s| s.sample == out[0].sample));
        assert!(out.iter().all(|s| s.label.airspeed == 12.0));

        assert!(matches!(
            preprocess_run(&run(660, [0.0; 5]), 10.0, 2.0),
            Err(Error::DeadRun {
                failed: 462,
                total: 462
            })
        ));
    }

    #[test]
    fn run_with_minority_of_dead_frames_is_kept() {
        let mut r = run(100, [-50.0, 0.0, 0.0, 0.0, 0.0]);
        // silence 30 frames in the middle of the window (70 frames)
        for f in &mut r.frames[30..60] {
            f.dp = [0.0; 5];
        }
        let out = preprocess_run(&r, 10.0, 2.0).unwrap();
        assert!(out.len() < 70 && out.len() > 35);
        for f in &mut r.frames[20..80] {
            f.dp = [0.0; 5];
        }
        assert!(matches!(
            preprocess_run(&r, 10.0, 2.0),
            Err(Error::DeadRun { .. })
        ));
    }

    #[test]
    fn assemble_counts() {
        let cfg = PreprocessConfig::default();
        let ds = assemble_dataset(&[run(660, [-88.2, 0.0, 0.0, 0.0, 0.0])], &cfg).unwrap();
        assert_eq!(ds.len(), 462);
        assert_eq!(ds.ingested_measurements, 660 * 5);
        assert_eq!(ds.label_counts().len(), 1);
        assert_eq!(assemble_dataset(&[], &cfg), Err(Error::EmptyInput));
    }

    #[test]
    fn assemble_rejects_labels_outside_envelope() {
        let mut r = run(20, [-88.2, 0.0, 0.0, 0.0, 0.0]);
        r.true_state.aoa = 50.0;
        assert!(matches!(
            assemble_dataset(&[r], &PreprocessConfig::default()),
            Err(Error::EnvelopeViolation { .. })
        ));
    }

    #[test]
    fn duplicate_points_are_rejected() {
        let p = DataPoint {
            sample: NormalizedSample {
                q: 1.0,
                x: [1.0, 0.0, 0.0, 0.0, 0.0],
            },
            label: FlowState::new(12.0, 0.0, 0.0).unwrap(),
            provenance: Provenance::Measured,
            source: Some(PointSource { run: 0, frame: 3 }),
        };
        assert_eq!(
            CalibrationDataset::new(vec![p, p], 0, Envelope::default()),
            Err(Error::DuplicatePoint { run: 0, frame: 3 })
        );
    }
}
