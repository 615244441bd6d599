//! Domain types shared by every stage of the pipeline.
//!
//! Angles are degrees at every public boundary and converted to radians only
//! where trigonometry happens. Pressures are differential, in pascal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of differential pressure sensors on the probe.
pub const CHANNELS: usize = 5;

/// Full-scale range of each differential pressure sensor, Pa.
pub const FULL_SCALE_PA: f64 = 500.0;

/// One timestamped reading of the five differential pressures.
///
/// Channel 0 is sensor 1 (static minus centre), channels 1..4 are the four
/// peripheral pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureFrame {
    pub t: f64,
    pub dp: [f64; CHANNELS],
}

impl PressureFrame {
    pub fn new(t: f64, dp: [f64; CHANNELS]) -> Self {
        Self { t, dp }
    }

    /// Frame with every channel multiplied by `c`, same timestamp.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            t: self.t,
            dp: self.dp.map(|v| v * c),
        }
    }
}

/// Check a frame's invariants. Hardware frames are additionally bounded by
/// the sensor full scale; synthetic frames are not.
pub fn validate_frame(frame: PressureFrame, physical: bool) -> Result<PressureFrame> {
    for (channel, &v) in frame.dp.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { channel });
        }
    }
    if !frame.t.is_finite() {
        return Err(Error::InvalidRun("timestamp is not finite".into()));
    }
    if physical {
        for (channel, &v) in frame.dp.iter().enumerate() {
            if v.abs() > FULL_SCALE_PA {
                return Err(Error::FullScaleExceeded {
                    channel,
                    value: v,
                    full_scale: FULL_SCALE_PA,
                });
            }
        }
    }
    Ok(frame)
}

/// Airspeed and flow angles relative to the probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    /// m/s
    pub airspeed: f64,
    /// Angle of attack, degrees.
    pub aoa: f64,
    /// Angle of sideslip, degrees.
    pub aos: f64,
}

impl FlowState {
    pub fn new(airspeed: f64, aoa: f64, aos: f64) -> Result<Self> {
        if !airspeed.is_finite() || airspeed < 0.0 {
            return Err(Error::InvalidFlowState(format!(
                "airspeed {airspeed} must be finite and non-negative"
            )));
        }
        if !aoa.is_finite() || !aos.is_finite() {
            return Err(Error::InvalidFlowState("angles must be finite".into()));
        }
        Ok(Self { airspeed, aoa, aos })
    }

    /// Whether the state lies inside the default calibrated envelope.
    pub fn is_calibrated(&self) -> bool {
        Envelope::default().contains(self)
    }
}

impl std::fmt::Display for FlowState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({} m/s, aoa {} deg, aos {} deg)",
            self.airspeed, self.aoa, self.aos
        )
    }
}

/// Airspeed and angle ranges over which a calibration is trusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub airspeed_min: f64,
    pub airspeed_max: f64,
    /// Symmetric bound on |aoa| and |aos|, degrees.
    pub angle_max: f64,
}

impl Default for Envelope {
    fn default() -> Self {
        Self {
            airspeed_min: 3.0,
            airspeed_max: 27.0,
            angle_max: 35.0,
        }
    }
}

impl Envelope {
    pub fn contains(&self, s: &FlowState) -> bool {
        (self.airspeed_min..=self.airspeed_max).contains(&s.airspeed)
            && s.aoa.abs() <= self.angle_max
            && s.aos.abs() <= self.angle_max
    }
}

/// Vehicle velocity in the body frame (x forward, y right, z down), m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl BodyVelocity {
    pub fn new(vx: f64, vy: f64, vz: f64) -> Result<Self> {
        if !(vx.is_finite() && vy.is_finite() && vz.is_finite()) {
            return Err(Error::InvalidFlowState(
                "body velocity components must be finite".into(),
            ));
        }
        Ok(Self { vx, vy, vz })
    }

    pub fn norm(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy + self.vz * self.vz).sqrt()
    }
}

/// Frames recorded while the probe was held at one known flow state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRun {
    pub true_state: FlowState,
    /// Hz
    pub sample_rate: f64,
    pub frames: Vec<PressureFrame>,
}

impl CalibrationRun {
    pub const MIN_FRAMES: usize = 10;

    pub fn new(
        true_state: FlowState,
        sample_rate: f64,
        frames: Vec<PressureFrame>,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidRun(format!(
                "sample rate {sample_rate} Hz must be positive"
            )));
        }
        if frames.len() < Self::MIN_FRAMES {
            return Err(Error::InvalidRun(format!(
                "{} frames, need at least {}",
                frames.len(),
                Self::MIN_FRAMES
            )));
        }
        for (i, w) in frames.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::NonMonotonicTime { index: i + 1 });
            }
        }
        for f in &frames {
            validate_frame(*f, false)?;
        }
        Ok(Self {
            true_state,
            sample_rate,
            frames,
        })
    }
}

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Port directions of the 13-hole probe and the wiring of ports to sensors.
///
/// Body axes: x along the probe axis (forward), y right, z down. Peripheral
/// port `k` sits at azimuth `k * 45` degrees measured from +y towards +z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePortLayout {
    pub center: Vec3,
    pub peripheral: [Vec3; 8],
    /// The four perpendicular static holes, merged into one channel.
    pub static_ring: [Vec3; 4],
    /// Peripheral port indices `(a, b)` for sensors 2..5; each reads `P_a - P_b`.
    pub pairs: [(usize, usize); 4],
}

impl ProbePortLayout {
    /// Half-angle of the peripheral port cone, degrees.
    pub const CONE_HALF_ANGLE: f64 = 45.0;

    /// Sensor 2 left-right, 3 lower-right/upper-left diagonal, 4 up-down,
    /// 5 upper-right/lower-left diagonal.
    pub fn standard() -> Self {
        let cone = Self::CONE_HALF_ANGLE.to_radians();
        let peripheral = std::array::from_fn(|k| {
            let phi = (45.0 * k as f64).to_radians();
            [cone.cos(), cone.sin() * phi.cos(), cone.sin() * phi.sin()]
        });
        let static_ring = std::array::from_fn(|k| {
            let psi = (90.0 * k as f64).to_radians();
            [0.0, psi.cos(), psi.sin()]
        });
        Self {
            center: [1.0, 0.0, 0.0],
            peripheral,
            static_ring,
            pairs: [(0, 4), (1, 5), (2, 6), (3, 7)],
        }
    }

    /// Azimuth of peripheral port `k`, degrees.
    pub fn azimuth(k: usize) -> f64 {
        45.0 * k as f64
    }

    /// Check unit directions, antipodal pairs and a complete pairing.
    pub fn validate(&self) -> Result<()> {
        let unit = |v: &Vec3| (dot(v, v).sqrt() - 1.0).abs() < 1e-12;
        let all = std::iter::once(&self.center)
            .chain(self.peripheral.iter())
            .chain(self.static_ring.iter());
        if !all.into_iter().all(unit) {
            return Err(Error::InvalidConfig(
                "port directions must be unit vectors".into(),
            ));
        }
        let mut seen = [false; 8];
        for &(a, b) in &self.pairs {
            if a >= 8 || b >= 8 {
                return Err(Error::InvalidConfig(format!(
                    "port pair ({a}, {b}) out of range"
                )));
            }
            let (pa, pb) = (&self.peripheral[a], &self.peripheral[b]);
            // antipodal in azimuth: lateral components opposite, axial equal
            if (pa[0] - pb[0]).abs() > 1e-12
                || (pa[1] + pb[1]).abs() > 1e-12
                || (pa[2] + pb[2]).abs() > 1e-12
            {
                return Err(Error::InvalidConfig(format!(
                    "ports {a} and {b} are not azimuthally opposite"
                )));
            }
            for p in [a, b] {
                if seen[p] {
                    return Err(Error::InvalidConfig(format!("port {p} is paired twice")));
                }
                seen[p] = true;
            }
        }
        Ok(())
    }
}

impl Default for ProbePortLayout {
    fn default() -> Self {
        Self::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frame_is_valid() {
        let f = PressureFrame::new(0.0, [0.0; 5]);
        assert_eq!(validate_frame(f, true).unwrap(), f);
    }

    #[test]
    fn full_scale_applies_to_hardware_frames_only() {
        let f = PressureFrame::new(0.0, [600.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            validate_frame(f, true),
            Err(Error::FullScaleExceeded { channel: 0, .. })
        ));
        assert!(validate_frame(f, false).is_ok());
        let edge = PressureFrame::new(0.0, [-500.0, 500.0, 0.0, 0.0, 0.0]);
        assert!(validate_frame(edge, true).is_ok());
    }

    #[test]
    fn nan_is_rejected() {
        let f = PressureFrame::new(0.0, [0.0, 0.0, f64::NAN, 0.0, 0.0]);
        assert_eq!(
            validate_frame(f, false),
            Err(Error::NonFinite { channel: 2 })
        );
        let inf = PressureFrame::new(0.0, [f64::INFINITY, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            validate_frame(inf, true),
            Err(Error::NonFinite { channel: 0 })
        );
    }

    #[test]
    fn calibrated_flag_follows_envelope() {
        assert!(FlowState::new(3.0, 35.0, -35.0).unwrap().is_calibrated());
        assert!(FlowState::new(27.0, 0.0, 0.0).unwrap().is_calibrated());
        assert!(!FlowState::new(2.9, 0.0, 0.0).unwrap().is_calibrated());
        assert!(!FlowState::new(12.0, 35.1, 0.0).unwrap().is_calibrated());
        assert!(!FlowState::new(12.0, 0.0, -40.0).unwrap().is_calibrated());
        assert!(FlowState::new(-1.0, 0.0, 0.0).is_err());
        assert!(FlowState::new(1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn run_requires_increasing_time_and_ten_frames() {
        let state = FlowState::new(12.0, 0.0, 0.0).unwrap();
        let frames: Vec<_> = (0..10)
            .map(|i| PressureFrame::new(i as f64 / 33.0, [0.0; 5]))
            .collect();
        assert!(CalibrationRun::new(state, 33.0, frames.clone()).is_ok());
        assert!(CalibrationRun::new(state, 33.0, frames[..9].to_vec()).is_err());
        assert!(CalibrationRun::new(state, 0.0, frames.clone()).is_err());
        let mut bad = frames;
        bad[5].t = bad[4].t;
        assert_eq!(
            CalibrationRun::new(state, 33.0, bad),
            Err(Error::NonMonotonicTime { index: 5 })
        );
    }

    #[test]
    fn standard_layout_is_consistent() {
        let layout = ProbePortLayout::standard();
        layout.validate().unwrap();
        for p in &layout.peripheral {
            let off_axis = dot(p, &layout.center).acos().to_degrees();
            assert!((off_axis - 45.0).abs() < 1e-12);
        }
        for s in &layout.static_ring {
            assert!(dot(s, &layout.center).abs() < 1e-15);
        }
        for &(a, b) in &layout.pairs {
            assert_eq!(
                ProbePortLayout::azimuth(b) - ProbePortLayout::azimuth(a),
                180.0
            );
        }
        // sensor 2 left-right, sensor 4 up-down, sensor 5 upper-left/lower-right
        assert_eq!(layout.pairs[0], (0, 4));
        assert_eq!(
            (
                ProbePortLayout::azimuth(layout.pairs[2].0),
                ProbePortLayout::azimuth(layout.pairs[2].1)
            ),
            (90.0, 270.0)
        );
        assert_eq!(
            (
                ProbePortLayout::azimuth(layout.pairs[3].0),
                ProbePortLayout::azimuth(layout.pairs[3].1)
            ),
            (135.0, 315.0)
        );
    }

    #[test]
    fn layout_validation_catches_bad_pairing() {
        let mut layout = ProbePortLayout::standard();
        layout.pairs[1] = (0, 4);
        assert!(layout.validate().is_err());
        let mut layout = ProbePortLayout::standard();
        layout.pairs[0] = (0, 3);
        assert!(layout.validate().is_err());
    }
}
