//! Hardware design comparison.
//!
//! Measurements of several probe variants form a 5-D tensor indexed
//! `[design][speed][sensor][angle][sample]`. Each comparison metric collapses
//! one design's slice to a scalar by reducing axes in a fixed order
//! (samples, angles, sensors, speeds): the axis that defines the metric is
//! reduced with the population standard deviation, every other axis with the
//! mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CHANNELS;
use crate::stats::{mean, population_std, stars, welch_t_test, WelchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipShape {
    Cone,
    Sphere,
}

impl TipShape {
    pub fn as_str(&self) -> &'static str {
        match self {
            TipShape::Cone => "cone",
            TipShape::Sphere => "sphere",
        }
    }

    /// Default pressure-recovery exponent used by the synthetic probe.
    pub fn default_sharpness(&self) -> f64 {
        match self {
            TipShape::Cone => 2.0,
            TipShape::Sphere => 1.5,
        }
    }
}

impl std::str::FromStr for TipShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cone" => Ok(TipShape::Cone),
            "sphere" => Ok(TipShape::Sphere),
            other => Err(Error::InvalidConfig(format!("unknown tip shape {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub id: String,
    pub tip: TipShape,
    pub spacing_mm: f64,
}

/// Dense measurement tensor; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub designs: Vec<DesignSpec>,
    pub speeds: Vec<f64>,
    /// `(aoa, aos)` per angle configuration, degrees.
    pub angles: Vec<(f64, f64)>,
    pub samples: usize,
    values: Vec<Option<f64>>,
}

impl DesignMatrix {
    /// All cells start missing.
    pub fn new(
        designs: Vec<DesignSpec>,
        speeds: Vec<f64>,
        angles: Vec<(f64, f64)>,
        samples: usize,
    ) -> Self {
        let len = designs.len() * speeds.len() * CHANNELS * angles.len() * samples;
        Self {
            designs,
            speeds,
            angles,
            samples,
            values: vec![None; len],
        }
    }

    /// `(designs, speeds, sensors, angles, samples)`
    pub fn shape(&self) -> [usize; 5] {
        [
            self.designs.len(),
            self.speeds.len(),
            CHANNELS,
            self.angles.len(),
            self.samples,
        ]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn index(&self, d: usize, s: usize, c: usize, a: usize, k: usize) -> usize {
        let [_, ns, nc, na, nk] = self.shape();
        debug_assert!(s < ns && c < nc && a < na && k < nk);
        (((d * ns + s) * nc + c) * na + a) * nk + k
    }

    /// `sensor` is zero-based: 0 is sensor 1.
    pub fn get(&self, d: usize, s: usize, sensor: usize, a: usize, k: usize) -> Option<f64> {
        self.values[self.index(d, s, sensor, a, k)]
    }

    pub fn set(&mut self, d: usize, s: usize, sensor: usize, a: usize, k: usize, v: Option<f64>) {
        let i = self.index(d, s, sensor, a, k);
        self.values[i] = v;
    }

    pub fn missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Apply `f` to every present value.
    pub fn map_values(&mut self, f: impl Fn(f64) -> f64) {
        for v in self.values.iter_mut().flatten() {
            *v = f(*v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AngularResolution,
    AngularNoise,
    AirspeedResolution,
    AirspeedNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reduce {
    Mean,
    Std,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::AngularResolution,
        Metric::AngularNoise,
        Metric::AirspeedResolution,
        Metric::AirspeedNoise,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::AngularResolution => "angular_resolution",
            Metric::AngularNoise => "angular_noise",
            Metric::AirspeedResolution => "airspeed_resolution",
            Metric::AirspeedNoise => "airspeed_noise",
        }
    }

    /// Zero-based sensor indices the metric reads.
    pub fn sensors(&self) -> &'static [usize] {
        match self {
            Metric::AngularResolution | Metric::AngularNoise => &[1, 2, 3, 4],
            Metric::AirspeedResolution | Metric::AirspeedNoise => &[0],
        }
    }

    // reduction per axis, in order: samples, angles, sensors, speeds
    fn ops(&self) -> [Reduce; 4] {
        use Reduce::*;
        match self {
            Metric::AngularResolution => [Mean, Std, Mean, Mean],
            Metric::AngularNoise => [Std, Mean, Mean, Mean],
            Metric::AirspeedResolution => [Mean, Mean, Mean, Std],
            Metric::AirspeedNoise => [Std, Mean, Mean, Mean],
        }
    }
}

// Reduce the present values; None if nothing is present.
fn reduce(op: Reduce, values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return None;
    }
    Some(match op {
        Reduce::Mean => mean(&present),
        Reduce::Std => population_std(&present),
    })
}

/// One scalar per design for `metric`.
pub fn reduce_metric(matrix: &DesignMatrix, metric: Metric) -> Result<Vec<f64>> {
    let [nd, ns, _, na, nk] = matrix.shape();
    let sensors = metric.sensors();
    let ops = metric.ops();
    let axes = [
        ("samples", nk),
        ("angles", na),
        ("sensors", sensors.len()),
        ("speeds", ns),
    ];
    for (op, (axis, len)) in ops.iter().zip(axes) {
        if *op == Reduce::Std && len < 2 {
            return Err(Error::AxisTooSmall { axis, len });
        }
    }
    if nd == 0 || ns == 0 || na == 0 || nk == 0 {
        return Err(Error::InvalidTensor("empty axis".into()));
    }
    let mut out = Vec::with_capacity(nd);
    let mut buf = Vec::new();
    for d in 0..nd {
        let mut per_speed = Vec::with_capacity(ns);
        for s in 0..ns {
            let mut per_sensor = Vec::with_capacity(sensors.len());
            for &c in sensors {
                let mut per_angle = Vec::with_capacity(na);
                for a in 0..na {
                    buf.clear();
                    buf.extend((0..nk).map(|k| matrix.get(d, s, c, a, k)));
                    per_angle.push(reduce(ops[0], &buf));
                }
                per_sensor.push(reduce(ops[1], &per_angle));
            }
            per_speed.push(reduce(ops[2], &per_sensor));
        }
        match reduce(ops[3], &per_speed) {
            Some(v) => out.push(v),
            None => {
                return Err(Error::InvalidTensor(format!(
                    "design {} has no data for {}",
                    matrix.designs[d].id,
                    metric.as_str()
                )))
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMetrics {
    pub id: String,
    pub tip: TipShape,
    pub spacing_mm: f64,
    pub angular_resolution: f64,
    pub angular_noise: f64,
    pub airspeed_resolution: f64,
    pub airspeed_noise: f64,
}

impl DesignMetrics {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::AngularResolution => self.angular_resolution,
            Metric::AngularNoise => self.angular_noise,
            Metric::AirspeedResolution => self.airspeed_resolution,
            Metric::AirspeedNoise => self.airspeed_noise,
        }
    }
}

/// Welch test between two groups of designs on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTest {
    pub metric: Metric,
    /// `tip` or `spacing`.
    pub grouping: String,
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    #[serde(flatten)]
    pub welch: WelchResult,
    pub stars: String,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub shape: [usize; 5],
    pub missing_cells: usize,
    pub designs: Vec<DesignMetrics>,
    pub tests: Vec<GroupTest>,
    pub warnings: Vec<String>,
}

impl DesignReport {
    pub fn test(&self, metric: Metric, grouping: &str) -> impl Iterator<Item = &GroupTest> {
        let grouping = grouping.to_string();
        self.tests
            .iter()
            .filter(move |t| t.metric == metric && t.grouping == grouping)
    }
}

fn group_test(
    metric: Metric,
    grouping: &str,
    (name_a, a): (&str, &[f64]),
    (name_b, b): (&str, &[f64]),
    warnings: &mut Vec<String>,
) -> Result<GroupTest> {
    let welch = welch_t_test(a, b)?;
    if welch.degenerate && welch.p == 0.0 {
        warnings.push(format!(
            "{} {grouping} {name_a} vs {name_b}: both groups have zero variance with different means",
            metric.as_str()
        ));
    }
    Ok(GroupTest {
        metric,
        grouping: grouping.to_string(),
        group_a: name_a.to_string(),
        group_b: name_b.to_string(),
        n_a: a.len(),
        n_b: b.len(),
        mean_a: mean(a),
        mean_b: mean(b),
        welch,
        stars: stars(welch.p).to_string(),
        significant: welch.p < 0.05,
    })
}

/// All four metrics per design plus tip-shape and hole-spacing group tests.
pub fn compare_designs(matrix: &DesignMatrix) -> Result<DesignReport> {
    if matrix.designs.len() < 2 {
        return Err(Error::InvalidTensor(format!(
            "need at least 2 designs to compare, got {}",
            matrix.designs.len()
        )));
    }
    let columns = Metric::ALL
        .iter()
        .map(|&m| reduce_metric(matrix, m))
        .collect::<Result<Vec<_>>>()?;
    let designs: Vec<DesignMetrics> = matrix
        .designs
        .iter()
        .enumerate()
        .map(|(i, d)| DesignMetrics {
            id: d.id.clone(),
            tip: d.tip,
            spacing_mm: d.spacing_mm,
            angular_resolution: columns[0][i],
            angular_noise: columns[1][i],
            airspeed_resolution: columns[2][i],
            airspeed_noise: columns[3][i],
        })
        .collect();

    let mut warnings = Vec::new();
    let mut tests = Vec::new();

    let mut spacings: Vec<f64> = designs.iter().map(|d| d.spacing_mm).collect();
    spacings.sort_by(f64::total_cmp);
    spacings.dedup();

    for &metric in &Metric::ALL {
        let by_tip = |tip: TipShape| -> Vec<f64> {
            designs
                .iter()
                .filter(|d| d.tip == tip)
                .map(|d| d.get(metric))
                .collect()
        };
        let (cone, sphere) = (by_tip(TipShape::Cone), by_tip(TipShape::Sphere));
        if cone.len() >= 2 && sphere.len() >= 2 {
            tests.push(group_test(
                metric,
                "tip",
                ("cone", &cone),
                ("sphere", &sphere),
                &mut warnings,
            )?);
        }

        let groups: Vec<(String, Vec<f64>)> = spacings
            .iter()
            .map(|&s| {
                (
                    format!("{s}mm"),
                    designs
                        .iter()
                        .filter(|d| d.spacing_mm == s)
                        .map(|d| d.get(metric))
                        .collect(),
                )
            })
            .collect();
        for i in 0..groups.len() {
            for j in (i + 1)..groups.len() {
                let (na, a) = &groups[i];
                let (nb, b) = &groups[j];
                if a.len() >= 2 && b.len() >= 2 {
                    tests.push(group_test(
                        metric,
                        "spacing",
                        (na, a),
                        (nb, b),
                        &mut warnings,
                    )?);
                }
            }
        }
    }
    if tests.is_empty() {
        warnings.push("no grouping has at least 2 designs per group; no tests run".into());
    }
    Ok(DesignReport {
        shape: matrix.shape(),
        missing_cells: matrix.missing(),
        designs,
        tests,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(i: usize, tip: TipShape, spacing: f64) -> DesignSpec {
        DesignSpec {
            id: format!("d{i}"),
            tip,
            spacing_mm: spacing,
        }
    }

    fn filled(
        nd: usize,
        ns: usize,
        na: usize,
        nk: usize,
        f: impl Fn(usize, usize, usize, usize, usize) -> f64,
    ) -> DesignMatrix {
        let designs = (0..nd)
            .map(|i| {
                spec(
                    i,
                    if i % 2 == 0 {
                        TipShape::Cone
                    } else {
                        TipShape::Sphere
                    },
                    0.4,
                )
            })
            .collect();
        let speeds = (0..ns).map(|s| 3.0 * (s + 1) as f64).collect();
        let angles = (0..na).map(|a| (a as f64, 0.0)).collect();
        let mut m = DesignMatrix::new(designs, speeds, angles, nk);
        for d in 0..nd {
            for s in 0..ns {
                for c in 0..CHANNELS {
                    for a in 0..na {
                        for k in 0..nk {
                            m.set(d, s, c, a, k, Some(f(d, s, c, a, k)));
                        }
                    }
                }
            }
        }
        m
    }

    #[test]
    fn constant_tensor_gives_zero_metrics() {
        let m = filled(2, 3, 4, 5, |_, _, _, _, _| 7.5);
        for metric in Metric::ALL {
            assert!(reduce_metric(&m, metric).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn speed_index_signal_on_sensor_one() {
        let m = filled(
            1,
            4,
            3,
            5,
            |_, s, c, _, _| if c == 0 { s as f64 } else { 1.0 },
        );
        let res = reduce_metric(&m, Metric::AirspeedResolution).unwrap()[0];
        assert!((res - population_std(&[0.0, 1.0, 2.0, 3.0])).abs() < 1e-15);
        assert_eq!(reduce_metric(&m, Metric::AirspeedNoise).unwrap()[0], 0.0);
    }

    #[test]
    fn std_axis_needs_two_elements() {
        let m = filled(1, 1, 3, 5, |_, _, _, _, k| k as f64);
        assert_eq!(
            reduce_metric(&m, Metric::AirspeedResolution),
            Err(Error::AxisTooSmall {
                axis: "speeds",
                len: 1
            })
        );
        let m = filled(1, 2, 1, 5, |_, _, _, _, k| k as f64);
        assert!(reduce_metric(&m, Metric::AngularResolution).is_err());
        assert!(reduce_metric(&m, Metric::AngularNoise).is_ok());
    }

    #[test]
    fn missing_cells_are_excluded() {
        let mut m = filled(1, 2, 2, 4, |_, _, _, _, k| k as f64);
        let full = reduce_metric(&m, Metric::AngularNoise).unwrap()[0];
        // dropping a sample changes that cell's std; dropping a whole angle does not
        for c in 0..CHANNELS {
            for k in 0..4 {
                m.set(0, 0, c, 1, k, None);
            }
        }
        assert_eq!(reduce_metric(&m, Metric::AngularNoise).unwrap()[0], full);
        assert_eq!(m.missing(), CHANNELS * 4);
    }

    #[test]
    fn single_design_is_rejected() {
        let m = filled(1, 2, 2, 2, |_, _, _, _, _| 0.0);
        assert!(matches!(compare_designs(&m), Err(Error::InvalidTensor(_))));
    }

    #[test]
    fn identical_designs_are_not_significant() {
        let mut m = filled(4, 3, 4, 6, |_, s, c, a, k| {
            (s * 7 + c * 3 + a) as f64 + 0.1 * (k % 3) as f64
        });
        m.designs[2].spacing_mm = 0.9;
        m.designs[3].spacing_mm = 0.9;
        let r = compare_designs(&m).unwrap();
        assert!(!r.tests.is_empty());
        assert!(r.tests.iter().all(|t| !t.significant && t.welch.p == 1.0));
    }

    #[test]
    fn steeper_speed_gradient_is_detected() {
        // cones read twice the sensor-1 speed gradient of spheres; small
        // design-dependent jitter keeps the group variances non-zero
        let m = filled(8, 4, 5, 10, |d, s, c, a, k| {
            let gain = if d % 2 == 0 { 2.0 } else { 1.0 };
            let jitter = 0.01 * ((d * 31 + s * 7 + a * 3 + k) % 5) as f64;
            if c == 0 {
                -gain * 10.0 * (s + 1) as f64 + jitter
            } else {
                jitter
            }
        });
        let r = compare_designs(&m).unwrap();
        let t = r.test(Metric::AirspeedResolution, "tip").next().unwrap();
        assert!(t.mean_a > t.mean_b);
        assert!(t.significant, "p = {}", t.welch.p);
    }
}
