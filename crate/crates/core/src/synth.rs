//! Forward model of the probe: flow state in, differential pressures out.
//!
//! Each port of direction `n` sees `q_dyn * max(0, u.n)^sharpness`, where `u`
//! is the direction of travel relative to the air. The static channel is the
//! mean of the four perpendicular holes. This is a surrogate with the right
//! symmetries and gradients, not an aerodynamic model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, DesignSpec, TipShape};
use crate::error::{Error, Result};
use crate::flight::FlightLog;
use crate::model::{
    dot, BodyVelocity, CalibrationRun, FlowState, PressureFrame, ProbePortLayout, Vec3, CHANNELS,
    FULL_SCALE_PA,
};

/// Pseudo-random generator behind every synthetic draw. Changing it changes
/// all generated data, so it is recorded alongside calibrations.
pub const RNG_ALGORITHM: &str =
    "rand_chacha-0.9 ChaCha8Rng, rand_distr-0.5 Normal, splitmix64 sub-seeds";

/// Sea-level standard air density, kg/m^3.
pub const RHO_SEA_LEVEL: f64 = 1.225;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub layout: ProbePortLayout,
    /// kg/m^3
    pub rho: f64,
    /// Pressure-recovery exponent of the tip.
    pub sharpness: f64,
    /// Standard deviation of additive per-channel noise, Pa.
    pub noise_sigma: f64,
    /// Saturate channels at the sensor full scale.
    pub full_scale_clip: bool,
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(tip: TipShape, noise_sigma: f64, seed: u64) -> Self {
        Self {
            layout: ProbePortLayout::standard(),
            rho: RHO_SEA_LEVEL,
            sharpness: tip.default_sharpness(),
            noise_sigma,
            full_scale_clip: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rho = {} must be positive",
                self.rho
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(
                "noise sigma must be non-negative".into(),
            ));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::InvalidConfig("sharpness must be positive".into()));
        }
        self.layout.validate()
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self::new(TipShape::Cone, 0.0, 0)
    }
}

/// Direction of travel through the air in body axes for the given angles.
/// Inverse of `atan(vz/vx)`, `atan(vy/vx)`.
pub fn flow_unit_vector(aoa_deg: f64, aos_deg: f64) -> Result<Vec3> {
    for a in [aoa_deg, aos_deg] {
        if !(a.abs() < 90.0) {
            return Err(Error::AngleOutOfRange(a));
        }
    }
    let v = [1.0, aos_deg.to_radians().tan(), aoa_deg.to_radians().tan()];
    let n = dot(&v, &v).sqrt();
    Ok(v.map(|c| c / n))
}

/// Gauge pressures at the 13 holes, Pa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortPressures {
    pub center: f64,
    pub peripheral: [f64; 8],
    pub static_ring: [f64; 4],
}

impl PortPressures {
    /// The merged static channel.
    pub fn static_pressure(&self) -> f64 {
        self.static_ring.iter().sum::<f64>() / 4.0
    }
}

pub fn port_pressures(
    cfg: &OracleConfig,
    airspeed: f64,
    aoa_deg: f64,
    aos_deg: f64,
) -> Result<PortPressures> {
    if !(airspeed >= 0.0 && airspeed.is_finite()) {
        return Err(Error::InvalidFlowState(format!(
            "airspeed {airspeed} must be non-negative"
        )));
    }
    let u = flow_unit_vector(aoa_deg, aos_deg)?;
    let q_dyn = 0.5 * cfg.rho * airspeed * airspeed;
    let p = |n: &Vec3| q_dyn * dot(&u, n).max(0.0).powf(cfg.sharpness);
    Ok(PortPressures {
        center: p(&cfg.layout.center),
        peripheral: cfg.layout.peripheral.each_ref().map(p),
        static_ring: cfg.layout.static_ring.each_ref().map(p),
    })
}

/// Noise-free sensor values for the given ports.
pub fn ideal_readings(cfg: &OracleConfig, ports: &PortPressures) -> [f64; CHANNELS] {
    let mut dp = [0.0; CHANNELS];
    dp[0] = ports.static_pressure() - ports.center;
    for (k, &(a, b)) in cfg.layout.pairs.iter().enumerate() {
        dp[k + 1] = ports.peripheral[a] - ports.peripheral[b];
    }
    dp
}

/// Sensor frame at time `t`: paired differences plus noise, optionally clipped.
pub fn sensor_readings<R: Rng>(
    cfg: &OracleConfig,
    ports: &PortPressures,
    t: f64,
    rng: &mut R,
) -> PressureFrame {
    let mut dp = ideal_readings(cfg, ports);
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated non-negative");
        for v in &mut dp {
            *v += noise.sample(rng);
        }
    }
    if cfg.full_scale_clip {
        for v in &mut dp {
            *v = v.clamp(-FULL_SCALE_PA, FULL_SCALE_PA);
        }
    }
    PressureFrame::new(t, dp)
}

/// Deterministic sub-seed for stream `index` of a generator seeded by `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// The 17-configuration calibration layout: centre, plus the four axis and
/// four diagonal directions at 17.5 and 35 degrees. Pairs are `(aoa, aos)`.
pub fn default_calibration_angles() -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0)];
    for r in [17.5, 35.0] {
        for (a, b) in [
            (1.0, 0.0),
            (-1.0, 0.0),
            (0.0, 1.0),
            (0.0, -1.0),
            (1.0, 1.0),
            (1.0, -1.0),
            (-1.0, 1.0),
            (-1.0, -1.0),
        ] {
            out.push((a * r, b * r));
        }
    }
    out
}

/// 3, 6, ..., 27 m/s.
pub fn default_calibration_speeds() -> Vec<f64> {
    (1..=9).map(|k| 3.0 * k as f64).collect()
}

/// 9 x 9 calibration grid over +/-35 degrees in 8.75 degree steps.
pub fn dense_calibration_angles() -> Vec<(f64, f64)> {
    square_grid(8.75)
}

/// 9 x 9 grid over +/-70 degrees in 17.5 degree steps.
pub fn default_design_angles() -> Vec<(f64, f64)> {
    square_grid(17.5)
}

/// 3, 6, 9, 12 m/s.
pub fn default_design_speeds() -> Vec<f64> {
    (1..=4).map(|k| 3.0 * k as f64).collect()
}

fn square_grid(step: f64) -> Vec<(f64, f64)> {
    let axis: Vec<f64> = (-4..=4).map(|k| step * k as f64).collect();
    axis.iter()
        .flat_map(|&a| axis.iter().map(move |&b| (a, b)))
        .collect()
}

/// One run per (speed, angle) pair, `round(duration * fs)` frames each.
/// Runs are ordered speed-major. Each run draws from its own sub-seed.
pub fn generate_grid(
    cfg: &OracleConfig,
    speeds: &[f64],
    angles: &[(f64, f64)],
    duration_s: f64,
    fs: f64,
) -> Result<Vec<CalibrationRun>> {
    cfg.validate()?;
    if speeds.is_empty() || angles.is_empty() {
        return Err(Error::InvalidConfig(
            "speed and angle axes must be nonempty".into(),
        ));
    }
    let frames = (duration_s * fs).round();
    if !(frames >= CalibrationRun::MIN_FRAMES as f64) {
        return Err(Error::InvalidConfig(format!(
            "{duration_s} s at {fs} Hz gives too few frames"
        )));
    }
    let frames = frames as usize;
    let mut runs = Vec::with_capacity(speeds.len() * angles.len());
    for &v in speeds {
        for &(aoa, aos) in angles {
            let state = FlowState::new(v, aoa, aos)?;
            let ports = port_pressures(cfg, v, aoa, aos)?;
            let mut rng = rng_for(cfg.seed, runs.len() as u64);
            let data = (0..frames)
                .map(|i| sensor_readings(cfg, &ports, i as f64 / fs, &mut rng))
                .collect();
            runs.push(CalibrationRun::new(state, fs, data)?);
        }
    }
    Ok(runs)
}

/// The eight default hardware variants: both tips at every hole spacing.
pub fn default_designs(noise_sigma: f64, seed: u64) -> Vec<(DesignSpec, OracleConfig)> {
    let mut out = Vec::new();
    for tip in [TipShape::Cone, TipShape::Sphere] {
        for spacing in [0.4, 0.7, 0.9, 1.2] {
            let id = format!("{}-{spacing:.1}", tip.as_str());
            let mut cfg = OracleConfig::new(tip, noise_sigma, derive_seed(seed, out.len() as u64));
            cfg.full_scale_clip = true;
            out.push((
                DesignSpec {
                    id,
                    tip,
                    spacing_mm: spacing,
                },
                cfg,
            ));
        }
    }
    out
}

/// Sample the oracle for every (design, speed, angle) cell, `samples` noisy
/// frames per cell.
pub fn generate_design_matrix(
    designs: &[(DesignSpec, OracleConfig)],
    speeds: &[f64],
    angles: &[(f64, f64)],
    samples: usize,
) -> Result<DesignMatrix> {
    if designs.is_empty() || speeds.is_empty() || angles.is_empty() || samples == 0 {
        return Err(Error::InvalidConfig(
            "design matrix axes must be nonempty".into(),
        ));
    }
    let mut m = DesignMatrix::new(
        designs.iter().map(|(d, _)| d.clone()).collect(),
        speeds.to_vec(),
        angles.to_vec(),
        samples,
    );
    for (d, (_, cfg)) in designs.iter().enumerate() {
        cfg.validate()?;
        for (s, &v) in speeds.iter().enumerate() {
            for (a, &(aoa, aos)) in angles.iter().enumerate() {
                let ports = port_pressures(cfg, v, aoa, aos)?;
                let cell = ((d * speeds.len() + s) * angles.len() + a) as u64;
                let mut rng = rng_for(cfg.seed, cell);
                for k in 0..samples {
                    let f = sensor_readings(cfg, &ports, k as f64, &mut rng);
                    for (c, &v) in f.dp.iter().enumerate() {
                        m.set(d, s, c, a, k, Some(v));
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Zero-wind test flight: a circling segment, a stall and a yaw manoeuvre.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightPlan {
    pub fs: f64,
    pub circle_s: f64,
    pub stall_s: f64,
    pub yaw_s: f64,
    pub cruise_speed: f64,
    pub stall_peak_aoa: f64,
    pub yaw_peak_aos: f64,
    /// Standard deviation of the synthetic pitot reading, m/s.
    pub pitot_sigma: f64,
    pub with_pitot: bool,
}

impl Default for FlightPlan {
    fn default() -> Self {
        Self {
            fs: 50.0,
            circle_s: 60.0,
            stall_s: 20.0,
            yaw_s: 20.0,
            cruise_speed: 12.0,
            stall_peak_aoa: 25.0,
            yaw_peak_aos: 15.0,
            pitot_sigma: 0.1,
            with_pitot: true,
        }
    }
}

impl FlightPlan {
    /// Flow state and manoeuvre name at time `t`.
    pub fn state_at(&self, t: f64) -> (FlowState, &'static str) {
        use std::f64::consts::PI;
        let v0 = self.cruise_speed;
        let trim_aoa = 4.0;
        let (v, aoa, aos, name) = if t < self.circle_s {
            (
                v0 + 0.3 * (2.0 * PI * t / 20.0).sin(),
                trim_aoa + (2.0 * PI * t / 15.0).sin(),
                1.5 * (2.0 * PI * t / 20.0).sin(),
                "circle",
            )
        } else if t < self.circle_s + self.stall_s {
            let s = (t - self.circle_s) / self.stall_s;
            let bump = (PI * s).sin();
            (
                v0 - 4.0 * bump,
                trim_aoa + (self.stall_peak_aoa - trim_aoa) * bump,
                0.5 * (2.0 * PI * s).sin(),
                "stall",
            )
        } else {
            let s = (t - self.circle_s - self.stall_s) / self.yaw_s;
            (
                v0,
                trim_aoa,
                self.yaw_peak_aos * (2.0 * PI * s).sin(),
                "yaw",
            )
        };
        (
            FlowState {
                airspeed: v,
                aoa,
                aos,
            },
            name,
        )
    }

    pub fn duration(&self) -> f64 {
        self.circle_s + self.stall_s + self.yaw_s
    }
}

/// Flight log sampled from the oracle along `plan`, assuming no wind so the
/// body velocity equals the air-relative velocity.
pub fn generate_flight_log(cfg: &OracleConfig, plan: &FlightPlan) -> Result<FlightLog> {
    cfg.validate()?;
    let n = (plan.duration() * plan.fs).round() as usize;
    let mut rng = rng_for(cfg.seed, 0);
    let mut pitot_rng = rng_for(cfg.seed, 1);
    let pitot_noise = Normal::new(0.0, plan.pitot_sigma.max(0.0))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut log = FlightLog::default();
    let mut pitot = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / plan.fs;
        let (state, name) = plan.state_at(t);
        let u = flow_unit_vector(state.aoa, state.aos)?;
        let ports = port_pressures(cfg, state.airspeed, state.aoa, state.aos)?;
        log.t.push(t);
        log.dp.push(sensor_readings(cfg, &ports, t, &mut rng).dp);
        log.velocity.push(BodyVelocity {
            vx: state.airspeed * u[0],
            vy: state.airspeed * u[1],
            vz: state.airspeed * u[2],
        });
        pitot.push(state.airspeed + pitot_noise.sample(&mut pitot_rng));
        log.maneuver
            .get_or_insert_with(Vec::new)
            .push(name.to_string());
    }
    if plan.with_pitot {
        log.pitot = Some(pitot);
    }
    Ok(log)
}
