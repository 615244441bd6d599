//! Comparing probe estimates against autopilot references from a flight log.
//!
//! Reference angles come from the body-frame velocity, which equals the
//! air-relative velocity only when there is no wind. Reports therefore call
//! these "reference" values, never ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibrationBundle, ErrorStats};
use crate::error::{Error, Result};
use crate::estimate::estimate_stream;
use crate::model::{BodyVelocity, PressureFrame, CHANNELS};

pub const DEFAULT_VX_MIN: f64 = 1.0;
pub const DEFAULT_ALIGN_TOL_S: f64 = 0.05;

pub const ZERO_WIND_WARNING: &str =
    "reference angles assume zero wind: body velocity is taken as the \
air-relative velocity, so wind appears as estimation error";

/// A flight log in columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlightLog {
    pub t: Vec<f64>,
    pub dp: Vec<[f64; CHANNELS]>,
    pub velocity: Vec<BodyVelocity>,
    /// Pitot airspeed, m/s.
    pub pitot: Option<Vec<f64>>,
    pub maneuver: Option<Vec<String>>,
}

impl FlightLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        let bad = |what: &str, len: usize| {
            Error::InvalidConfig(format!(
                "flight log has {n} timestamps but {len} {what} rows"
            ))
        };
        if self.dp.len() != n {
            return Err(bad("pressure", self.dp.len()));
        }
        if self.velocity.len() != n {
            return Err(bad("velocity", self.velocity.len()));
        }
        if let Some(p) = &self.pitot {
            if p.len() != n {
                return Err(bad("pitot", p.len()));
            }
        }
        if let Some(m) = &self.maneuver {
            if m.len() != n {
                return Err(bad("maneuver", m.len()));
            }
        }
        if let Some(i) = (1..n).find(|&i| !(self.t[i] > self.t[i - 1])) {
            return Err(Error::NonMonotonicTime { index: i });
        }
        Ok(())
    }

    pub fn frames(&self) -> Vec<PressureFrame> {
        self.t
            .iter()
            .zip(&self.dp)
            .map(|(&t, &dp)| PressureFrame { t, dp })
            .collect()
    }

    /// Sample rate from the median time step.
    pub fn infer_sample_rate(&self) -> Result<f64> {
        let mut dt: Vec<f64> = self.t.windows(2).map(|w| w[1] - w[0]).collect();
        if dt.is_empty() {
            return Err(Error::TooShort {
                len: self.t.len(),
                min: 2,
            });
        }
        dt.sort_by(f64::total_cmp);
        let mid = dt.len() / 2;
        let median = if dt.len().is_multiple_of(2) {
            (dt[mid - 1] + dt[mid]) / 2.0
        } else {
            dt[mid]
        };
        if !(median > 0.0 && median.is_finite()) {
            return Err(Error::NonMonotonicTime { index: 0 });
        }
        Ok(1.0 / median)
    }
}

/// `(aoa, aos)` in degrees from the body velocity:
/// `aoa = atan(vz / vx)`, `aos = atan(vy / vx)`.
pub fn reference_angles(v: &BodyVelocity, vx_min: f64) -> Result<(f64, f64)> {
    if !(v.vx >= vx_min) {
        return Err(Error::ForwardSpeedTooLow {
            vx: v.vx,
            min: vx_min,
        });
    }
    let aoa = v.vz.atan2(v.vx).to_degrees();
    let aos = v.vy.atan2(v.vx).to_degrees();
    Ok((aoa, aos))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
    pub unpaired_a: usize,
    pub unpaired_b: usize,
}

// Index of the element of sorted `ts` nearest to `x`; ties go to the earlier one.
fn nearest_sorted(ts: &[f64], x: f64, hint: &mut usize) -> usize {
    while *hint + 1 < ts.len() && (ts[*hint + 1] - x).abs() < (ts[*hint] - x).abs() {
        *hint += 1;
    }
    *hint
}

/// Pair two increasing timestamp series one-to-one: `(i, j)` pair when each
/// is the other's nearest neighbour and they are at most `tol` apart.
pub fn align_series(a: &[f64], b: &[f64], tol: f64) -> Alignment {
    if a.is_empty() || b.is_empty() {
        return Alignment {
            pairs: Vec::new(),
            unpaired_a: a.len(),
            unpaired_b: b.len(),
        };
    }
    let mut hint = 0;
    let nearest_b: Vec<usize> = a.iter().map(|&x| nearest_sorted(b, x, &mut hint)).collect();
    let mut hint = 0;
    let nearest_a: Vec<usize> = b.iter().map(|&x| nearest_sorted(a, x, &mut hint)).collect();
    let pairs: Vec<(usize, usize)> = nearest_b
        .iter()
        .enumerate()
        .filter(|&(i, &j)| nearest_a[j] == i && (a[i] - b[j]).abs() <= tol)
        .map(|(i, &j)| (i, j))
        .collect();
    Alignment {
        unpaired_a: a.len() - pairs.len(),
        unpaired_b: b.len() - pairs.len(),
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateConfig {
    /// Sample rate; inferred from the timestamps when `None`.
    pub sample_rate: Option<f64>,
    pub cutoff_hz: f64,
    pub vx_min: f64,
    pub align_tol_s: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            sample_rate: None,
            cutoff_hz: crate::preprocess::DEFAULT_CUTOFF_HZ,
            vx_min: DEFAULT_VX_MIN,
            align_tol_s: DEFAULT_ALIGN_TOL_S,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationErrors {
    /// Estimated airspeed minus pitot airspeed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub airspeed_vs_pitot: Option<ErrorStats>,
    /// Estimated airspeed minus reference speed `|v|`.
    pub airspeed_vs_reference: ErrorStats,
    pub aoa_vs_reference: ErrorStats,
    pub aos_vs_reference: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverErrors {
    pub maneuver: String,
    #[serde(flatten)]
    pub errors: ValidationErrors,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub input: usize,
    pub paired: usize,
    /// Rows whose pressure magnitude was below the bundle threshold.
    pub dropped_gap: usize,
    /// Rows with an estimate but a forward speed too low for reference angles.
    pub dropped_reference: usize,
    /// Rows left without a partner after time alignment.
    pub dropped_unaligned: usize,
}

/// One paired row, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub t: f64,
    pub airspeed: f64,
    pub aoa: f64,
    pub aos: f64,
    pub reference_speed: f64,
    pub reference_aoa: f64,
    pub reference_aos: f64,
    pub pitot: Option<f64>,
    pub maneuver: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub warning: String,
    pub sample_rate_hz: f64,
    pub counts: SampleCounts,
    pub errors: ValidationErrors,
    pub per_maneuver: Vec<ManeuverErrors>,
    #[serde(skip)]
    pub rows: Vec<PairedRow>,
}

fn errors_of<'a, I>(rows: I) -> ValidationErrors
where
    I: IntoIterator<Item = &'a PairedRow> + Clone,
{
    let has_pitot = rows.clone().into_iter().any(|r| r.pitot.is_some());
    ValidationErrors {
        airspeed_vs_pitot: has_pitot.then(|| {
            ErrorStats::from_errors(
                rows.clone()
                    .into_iter()
                    .filter_map(|r| r.pitot.map(|p| r.airspeed - p)),
            )
        }),
        airspeed_vs_reference: ErrorStats::from_errors(
            rows.clone()
                .into_iter()
                .map(|r| r.airspeed - r.reference_speed),
        ),
        aoa_vs_reference: ErrorStats::from_errors(
            rows.clone().into_iter().map(|r| r.aoa - r.reference_aoa),
        ),
        aos_vs_reference: ErrorStats::from_errors(
            rows.into_iter().map(|r| r.aos - r.reference_aos),
        ),
    }
}

/// Run the bundle over the log and compare with pitot and reference angles.
pub fn validate_flight(
    bundle: &CalibrationBundle,
    log: &FlightLog,
    cfg: &ValidateConfig,
) -> Result<ValidationReport> {
    log.validate()?;
    if log.is_empty() {
        return Err(Error::EmptyInput);
    }
    let fs = match cfg.sample_rate {
        Some(fs) => fs,
        None => log.infer_sample_rate()?,
    };
    let estimates = estimate_stream(bundle, &log.frames(), fs, cfg.cutoff_hz)?;

    let est_idx: Vec<usize> = (0..log.len()).filter(|&i| !estimates[i].is_gap()).collect();
    let mut refs = Vec::new();
    for (i, v) in log.velocity.iter().enumerate() {
        match reference_angles(v, cfg.vx_min) {
            Ok(r) => refs.push((i, r)),
            Err(Error::ForwardSpeedTooLow { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let est_t: Vec<f64> = est_idx.iter().map(|&i| log.t[i]).collect();
    let ref_t: Vec<f64> = refs.iter().map(|&(i, _)| log.t[i]).collect();
    let alignment = align_series(&est_t, &ref_t, cfg.align_tol_s);

    let rows: Vec<PairedRow> = alignment
        .pairs
        .iter()
        .map(|&(a, b)| {
            let e = estimates[est_idx[a]].estimate.expect("not a gap");
            let (ri, (raoa, raos)) = refs[b];
            PairedRow {
                t: log.t[ri],
                airspeed: e.state.airspeed,
                aoa: e.state.aoa,
                aos: e.state.aos,
                reference_speed: log.velocity[ri].norm(),
                reference_aoa: raoa,
                reference_aos: raos,
                pitot: log.pitot.as_ref().map(|p| p[ri]),
                maneuver: log.maneuver.as_ref().map(|m| m[ri].clone()),
            }
        })
        .collect();

    let mut groups: BTreeMap<&str, Vec<&PairedRow>> = BTreeMap::new();
    for r in &rows {
        if let Some(m) = &r.maneuver {
            groups.entry(m.as_str()).or_default().push(r);
        }
    }
    let per_maneuver = groups
        .into_iter()
        .map(|(m, rs)| ManeuverErrors {
            maneuver: m.to_string(),
            errors: errors_of(rs.iter().copied()),
        })
        .collect();

    let n = log.len();
    let has_ref: Vec<bool> = {
        let mut v = vec![false; n];
        for &(i, _) in &refs {
            v[i] = true;
        }
        v
    };
    let dropped_gap = n - est_idx.len();
    let dropped_reference = est_idx.iter().filter(|&&i| !has_ref[i]).count();
    let counts = SampleCounts {
        input: n,
        paired: rows.len(),
        dropped_gap,
        dropped_reference,
        dropped_unaligned: n - rows.len() - dropped_gap - dropped_reference,
    };
    Ok(ValidationReport {
        warning: ZERO_WIND_WARNING.to_string(),
        sample_rate_hz: fs,
        counts,
        errors: errors_of(&rows),
        per_maneuver,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vel(vx: f64, vy: f64, vz: f64) -> BodyVelocity {
        BodyVelocity { vx, vy, vz }
    }

    #[test]
    fn reference_angle_examples() {
        assert_eq!(
            reference_angles(&vel(10.0, 0.0, 0.0), 1.0).unwrap(),
            (0.0, 0.0)
        );
        let (a, b) = reference_angles(&vel(10.0, 0.0, 10.0), 1.0).unwrap();
        assert!((a - 45.0).abs() < 1e-12 && b == 0.0);
        let (a, b) = reference_angles(&vel(10.0, 10.0, 0.0), 1.0).unwrap();
        assert!(a == 0.0 && (b - 45.0).abs() < 1e-12);
        let (a, b) = reference_angles(&vel(10.0, -5.0, 0.0), 1.0).unwrap();
        assert!(a == 0.0 && (b + 26.565_051_177_077_99).abs() < 1e-9);
        assert!(matches!(
            reference_angles(&vel(0.5, 0.0, 0.0), 1.0),
            Err(Error::ForwardSpeedTooLow { .. })
        ));
    }

    #[test]
    fn round_trip_with_flow_convention() {
        for aoa in [-59.0, -30.0, 0.0, 12.5, 45.0, 59.9] {
            for aos in [-59.0, -7.0, 0.0, 33.0, 59.9] {
                let u = crate::synth::flow_unit_vector(aoa, aos).unwrap();
                let v = vel(14.0 * u[0], 14.0 * u[1], 14.0 * u[2]);
                let (a, b) = reference_angles(&v, 1.0).unwrap();
                assert!((a - aoa).abs() < 1e-9 && (b - aos).abs() < 1e-9);
            }
        }
    }

    fn brute_force(a: &[f64], b: &[f64], tol: f64) -> usize {
        let nearest = |x: f64, ts: &[f64]| {
            let mut best = 0;
            for (j, &t) in ts.iter().enumerate() {
                if (t - x).abs() < (ts[best] - x).abs() {
                    best = j;
                }
            }
            best
        };
        (0..a.len())
            .filter(|&i| {
                let j = nearest(a[i], b);
                nearest(b[j], a) == i && (a[i] - b[j]).abs() <= tol
            })
            .count()
    }

    #[test]
    fn alignment_identical_series() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.02).collect();
        let al = align_series(&t, &t, 0.05);
        assert_eq!(al.pairs.len(), 100);
        assert!(al.pairs.iter().all(|&(i, j)| i == j));
        assert_eq!((al.unpaired_a, al.unpaired_b), (0, 0));
    }

    #[test]
    fn alignment_shifted_beyond_tolerance() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|t| t + 0.1).collect();
        let al = align_series(&a, &b, 0.05);
        assert!(al.pairs.is_empty());
        assert_eq!((al.unpaired_a, al.unpaired_b), (20, 20));
    }

    #[test]
    fn alignment_mixed_rates_matches_brute_force() {
        let a: Vec<f64> = (0..330).map(|i| i as f64 / 33.0).collect();
        let b: Vec<f64> = (0..500).map(|i| i as f64 / 50.0).collect();
        let al = align_series(&a, &b, 0.02);
        assert_eq!(al.pairs.len(), brute_force(&a, &b, 0.02));
        assert_eq!(al.pairs.len() + al.unpaired_a, a.len());
        assert_eq!(al.pairs.len() + al.unpaired_b, b.len());
        let mut js: Vec<usize> = al.pairs.iter().map(|p| p.1).collect();
        js.dedup();
        assert_eq!(js.len(), al.pairs.len());
    }

    #[test]
    fn sample_rate_from_median_step() {
        let log = FlightLog {
            t: vec![0.0, 0.02, 0.04, 0.07, 0.09],
            ..FlightLog::default()
        };
        assert!((log.infer_sample_rate().unwrap() - 50.0).abs() < 1e-9);
    }
}
