//! Fitting the three calibration polynomials.
//!
//! Angle models map the normalized pressures `x1..x5` to AoA and AoS. The
//! airspeed model additionally takes `s = sqrt(2 q / rho_ref)`, which is close
//! to linear in airspeed. The dataset is shuffled and split before anything
//! else so the test partition only ever holds measured points.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::Predictor;
use crate::lstsq::LeastSquares;
use crate::model::{Envelope, FlowState, CHANNELS};
use crate::poly::{InputScaling, MonomialBasis, PolynomialModel};
use crate::preprocess::{
    CalibrationDataset, DataPoint, NormalizedSample, Provenance, DEFAULT_Q_MIN,
};
use crate::synth::{derive_seed, RHO_SEA_LEVEL, RNG_ALGORITHM};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// Feature names of the angle models, in input order.
pub const ANGLE_INPUTS: [&str; 5] = ["x1", "x2", "x3", "x4", "x5"];
/// Feature names of the airspeed model, in input order.
pub const SPEED_INPUTS: [&str; 6] = ["s", "x1", "x2", "x3", "x4", "x5"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "degree")]
pub enum DegreeChoice {
    Fixed(usize),
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub degree: DegreeChoice,
    /// Fraction of measured points used for training.
    pub split_ratio: f64,
    pub seed: u64,
    pub augment: bool,
    /// Augment only between labels with |aoa| and |aos| within this, degrees.
    pub zero_regime_deg: f64,
    pub points_per_gap: usize,
    pub candidate_degrees: Vec<usize>,
    /// Training fraction of the internal split used for degree selection.
    pub selection_ratio: f64,
    /// kg/m^3
    pub rho_ref: f64,
    /// Pa
    pub q_min: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            degree: DegreeChoice::Auto,
            split_ratio: 0.7,
            seed: 42,
            augment: true,
            zero_regime_deg: 17.5,
            points_per_gap: 3,
            candidate_degrees: (1..=6).collect(),
            selection_ratio: 0.8,
            rho_ref: RHO_SEA_LEVEL,
            q_min: DEFAULT_Q_MIN,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let fraction = |v: f64| v > 0.0 && v < 1.0;
        if !fraction(self.split_ratio) || !fraction(self.selection_ratio) {
            return Err(Error::InvalidConfig(
                "split ratios must lie in (0, 1)".into(),
            ));
        }
        if self.candidate_degrees.is_empty()
            || self.candidate_degrees[0] == 0
            || self.candidate_degrees.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidConfig(
                "candidate degrees must be nonempty, positive and strictly ascending".into(),
            ));
        }
        if self.degree == DegreeChoice::Fixed(0) {
            return Err(Error::InvalidConfig("degree must be at least 1".into()));
        }
        if !(self.rho_ref > 0.0 && self.rho_ref.is_finite()) {
            return Err(Error::InvalidConfig("rho_ref must be positive".into()));
        }
        if !(self.zero_regime_deg >= 0.0) {
            return Err(Error::InvalidConfig(
                "zero-regime bound must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

// Exact-bit key for grouping float labels.
fn bits(v: f64) -> u64 {
    // +0 and -0 are the same label
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

struct LabelMean {
    label: FlowState,
    x: [f64; CHANNELS],
    q: f64,
    n: usize,
}

/// Insert linearly interpolated points between neighbouring measured labels
/// near zero angle.
///
/// Per airspeed, two labels qualify when they share one angle, differ in the
/// other, both lie within `zero_regime_deg` on both angles, and no measured
/// label sits between them. Label, mean normalized pressures and mean `q` are
/// interpolated at `k / (points_per_gap + 1)`.
pub fn augment_zero_regime(
    dataset: &CalibrationDataset,
    cfg: &FitConfig,
) -> Result<CalibrationDataset> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let bound = cfg.zero_regime_deg;
    let mut groups: BTreeMap<(u64, u64, u64), LabelMean> = BTreeMap::new();
    for p in dataset.measured() {
        let key = (bits(p.label.airspeed), bits(p.label.aoa), bits(p.label.aos));
        let g = groups.entry(key).or_insert(LabelMean {
            label: p.label,
            x: [0.0; CHANNELS],
            q: 0.0,
            n: 0,
        });
        for (acc, v) in g.x.iter_mut().zip(&p.sample.x) {
            *acc += v;
        }
        g.q += p.sample.q;
        g.n += 1;
    }
    let mut means: Vec<LabelMean> = groups
        .into_values()
        .map(|mut g| {
            let n = g.n as f64;
            g.x = g.x.map(|v| v / n);
            g.q /= n;
            g
        })
        .filter(|g| g.label.aoa.abs() <= bound && g.label.aos.abs() <= bound)
        .collect();
    means.sort_by(|a, b| {
        a.label
            .airspeed
            .total_cmp(&b.label.airspeed)
            .then(a.label.aoa.total_cmp(&b.label.aoa))
            .then(a.label.aos.total_cmp(&b.label.aos))
    });

    let mut extra = Vec::new();
    let steps = cfg.points_per_gap + 1;
    for (i, a) in means.iter().enumerate() {
        for b in &means[i + 1..] {
            if a.label.airspeed != b.label.airspeed {
                continue;
            }
            let along_aoa = a.label.aos == b.label.aos && a.label.aoa != b.label.aoa;
            let along_aos = a.label.aoa == b.label.aoa && a.label.aos != b.label.aos;
            if !(along_aoa || along_aos) {
                continue;
            }
            let between = |c: &LabelMean| {
                c.label.airspeed == a.label.airspeed
                    && if along_aoa {
                        c.label.aos == a.label.aos
                            && strictly_between(c.label.aoa, a.label.aoa, b.label.aoa)
                    } else {
                        c.label.aoa == a.label.aoa
                            && strictly_between(c.label.aos, a.label.aos, b.label.aos)
                    }
            };
            if means.iter().any(between) {
                continue;
            }
            for k in 1..steps {
                let f = k as f64 / steps as f64;
                let lerp = |u: f64, v: f64| (1.0 - f) * u + f * v;
                let mut x = [0.0; CHANNELS];
                for c in 0..CHANNELS {
                    x[c] = lerp(a.x[c], b.x[c]);
                }
                extra.push(DataPoint {
                    sample: NormalizedSample {
                        q: lerp(a.q, b.q),
                        x,
                    },
                    label: FlowState {
                        airspeed: a.label.airspeed,
                        aoa: lerp(a.label.aoa, b.label.aoa),
                        aos: lerp(a.label.aos, b.label.aos),
                    },
                    provenance: Provenance::Augmented,
                    source: None,
                });
            }
        }
    }
    let mut points = dataset.points.clone();
    points.extend(extra);
    CalibrationDataset::new(points, dataset.ingested_measurements, dataset.envelope)
}

fn strictly_between(v: f64, a: f64, b: f64) -> bool {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    v > lo && v < hi
}

/// Seeded shuffle of the measured points; the first `ratio` of them train,
/// the rest test. Augmented points always go to the training side.
pub fn shuffle_split(
    dataset: &CalibrationDataset,
    ratio: f64,
    seed: u64,
) -> Result<(CalibrationDataset, CalibrationDataset)> {
    const MIN_POINTS: usize = 10;
    if dataset.len() < MIN_POINTS {
        return Err(Error::TooSmall {
            len: dataset.len(),
            min: MIN_POINTS,
        });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio {ratio} must lie in (0, 1)"
        )));
    }
    let mut measured: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.points[i].provenance == Provenance::Measured)
        .collect();
    measured.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * measured.len() as f64).round() as usize;
    let mut train: Vec<DataPoint> = measured[..n_train]
        .iter()
        .map(|&i| dataset.points[i])
        .collect();
    train.extend(
        dataset
            .points
            .iter()
            .filter(|p| p.provenance == Provenance::Augmented),
    );
    let test: Vec<DataPoint> = measured[n_train..]
        .iter()
        .map(|&i| dataset.points[i])
        .collect();
    let part = |points| CalibrationDataset {
        points,
        ingested_measurements: dataset.ingested_measurements,
        envelope: dataset.envelope,
    };
    Ok((part(train), part(test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Airspeed,
    Aoa,
    Aos,
}

impl Target {
    pub fn input_dim(&self) -> usize {
        match self {
            Target::Airspeed => SPEED_INPUTS.len(),
            Target::Aoa | Target::Aos => ANGLE_INPUTS.len(),
        }
    }

    pub fn input_names(&self) -> &'static [&'static str] {
        match self {
            Target::Airspeed => &SPEED_INPUTS,
            Target::Aoa | Target::Aos => &ANGLE_INPUTS,
        }
    }

    fn value(&self, s: &FlowState) -> f64 {
        match self {
            Target::Airspeed => s.airspeed,
            Target::Aoa => s.aoa,
            Target::Aos => s.aos,
        }
    }
}

/// `sqrt(2 q / rho)`: the airspeed a pitot would report for dynamic pressure `q`.
pub fn speed_feature(q: f64, rho: f64) -> f64 {
    (2.0 * q / rho).sqrt()
}

/// Raw model inputs for one sample.
pub fn model_inputs(target: Target, sample: &NormalizedSample, rho: f64, out: &mut Vec<f64>) {
    out.clear();
    if target == Target::Airspeed {
        out.push(speed_feature(sample.q, rho));
    }
    out.extend_from_slice(&sample.x);
}

/// A fitted model plus the monomials that could not be identified.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: PolynomialModel,
    pub rank: usize,
    pub dropped: Vec<String>,
}

/// Least-squares fit of one target on `points`, inputs scaled to [-1, 1]
/// over the training range.
///
/// Unidentifiable monomials get zero coefficients. The normalized pressures
/// have unit length, so at degree 2 and above some monomials are always
/// linear combinations of others.
pub fn fit_model<'a, I>(points: I, target: Target, degree: usize, rho: f64) -> Result<FittedModel>
where
    I: IntoIterator<Item = &'a DataPoint> + Clone,
{
    let dim = target.input_dim();
    let mut inputs = Vec::with_capacity(dim);
    let rows: Vec<Vec<f64>> = points
        .clone()
        .into_iter()
        .map(|p| {
            model_inputs(target, &p.sample, rho, &mut inputs);
            inputs.clone()
        })
        .collect();
    let scaling = InputScaling::fit_columns(rows.iter().map(|r| r.as_slice()), dim);
    fit_scaled(points, &rows, target, degree, scaling)
}

fn fit_scaled<'a, I>(
    points: I,
    rows: &[Vec<f64>],
    target: Target,
    degree: usize,
    scaling: Vec<InputScaling>,
) -> Result<FittedModel>
where
    I: IntoIterator<Item = &'a DataPoint>,
{
    let basis = MonomialBasis::new(target.input_dim(), degree);
    let mut ls = LeastSquares::new(basis.len());
    let mut z = vec![0.0; target.input_dim()];
    let mut feats = vec![0.0; basis.len()];
    for (p, row) in points.into_iter().zip(rows) {
        for ((zi, &v), s) in z.iter_mut().zip(row).zip(&scaling) {
            *zi = s.apply(v);
        }
        basis.expand_into(&z, &mut feats);
        ls.push_row(&feats, target.value(&p.label));
    }
    if ls.rows() == 0 {
        return Err(Error::TooSmall { len: 0, min: 1 });
    }
    let sol = ls.solve_basic()?;
    let dropped = sol
        .dropped
        .iter()
        .map(|&i| basis.label(i, Some(target.input_names())))
        .collect();
    Ok(FittedModel {
        model: PolynomialModel::new(target.input_dim(), degree, sol.coefficients, scaling)?,
        rank: sol.rank,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeTrace {
    pub degree: usize,
    pub validation_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSelection {
    pub degree: usize,
    pub trace: Vec<DegreeTrace>,
}

/// Relative improvement a degree must make over the previous one to be an
/// elbow candidate.
pub const ELBOW_MIN_IMPROVEMENT: f64 = 0.2;

/// Elbow of a validation-error curve over ascending degrees.
///
/// Among degrees that cut the error by more than 20 % relative to the
/// previous degree, pick the one with the largest discrete curvature of the
/// log-error curve, i.e. the sharpest drop in improvement right after it.
/// Ties go to the smaller degree; if nothing clears the 20 % floor the
/// smallest degree wins. With exactly two candidates the lower error wins.
pub fn elbow(trace: &[DegreeTrace]) -> Option<usize> {
    match trace.len() {
        0 => return None,
        1 => return Some(trace[0].degree),
        2 => {
            let best = if trace[1].validation_mae < trace[0].validation_mae {
                1
            } else {
                0
            };
            return Some(trace[best].degree);
        }
        _ => {}
    }
    let ln = |e: f64| e.max(f64::MIN_POSITIVE).ln();
    let e: Vec<f64> = trace.iter().map(|t| t.validation_mae).collect();
    let mut best: Option<(usize, f64)> = None;
    for k in 1..e.len() {
        let improvement = 1.0 - e[k] / e[k - 1];
        if !(improvement > ELBOW_MIN_IMPROVEMENT) {
            continue;
        }
        let drop_in = ln(e[k - 1]) - ln(e[k]);
        let drop_out = if k + 1 < e.len() {
            ln(e[k]) - ln(e[k + 1])
        } else {
            0.0
        };
        let curvature = drop_in - drop_out;
        if best.is_none_or(|(_, c)| curvature > c) {
            best = Some((k, curvature));
        }
    }
    Some(trace[best.map_or(0, |(k, _)| k)].degree)
}

/// Fit the AoA model at every candidate degree on an internal split of
/// `train` and pick the elbow of the validation MAE curve.
pub fn select_degree(train: &CalibrationDataset, cfg: &FitConfig) -> Result<DegreeSelection> {
    if cfg.candidate_degrees.len() < 2 {
        return Err(Error::InvalidConfig(
            "degree selection needs at least 2 candidates".into(),
        ));
    }
    let (fit_part, validation) =
        shuffle_split(train, cfg.selection_ratio, derive_seed(cfg.seed, 1))?;
    if validation.is_empty() {
        return Err(Error::EmptyTest);
    }
    let mut trace = Vec::with_capacity(cfg.candidate_degrees.len());
    let mut inputs = Vec::new();
    for &degree in &cfg.candidate_degrees {
        let fitted = fit_model(&fit_part.points, Target::Aoa, degree, cfg.rho_ref)?;
        let basis = fitted.model.basis();
        let mut scratch = Vec::new();
        let mut abs_sum = 0.0;
        for p in &validation.points {
            model_inputs(Target::Aoa, &p.sample, cfg.rho_ref, &mut inputs);
            let pred = fitted.model.predict_with(&basis, &inputs, &mut scratch);
            abs_sum += (pred - p.label.aoa).abs();
        }
        trace.push(DegreeTrace {
            degree,
            validation_mae: abs_sum / validation.len() as f64,
        });
    }
    let degree = elbow(&trace).expect("trace is nonempty");
    Ok(DegreeSelection { degree, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRecord {
    /// `fixed` or `auto`.
    pub mode: String,
    pub selected: usize,
    pub trace: Vec<DegreeTrace>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DroppedMonomials {
    pub speed: Vec<String>,
    pub aoa: Vec<String>,
    pub aos: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    /// Creation time as supplied by the caller; omitted for reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    pub seed: u64,
    pub degree_selection: DegreeRecord,
    pub split_ratio: f64,
    pub augmented: bool,
    pub train_points: usize,
    pub augmented_points: usize,
    pub test_points: usize,
    pub dropped_monomials: DroppedMonomials,
    pub rng: String,
    pub tool_version: String,
}

/// The serialized sensor calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBundle {
    pub schema_version: u32,
    pub degree: usize,
    pub speed_model: PolynomialModel,
    pub aoa_model: PolynomialModel,
    pub aos_model: PolynomialModel,
    /// kg/m^3
    pub rho_ref: f64,
    /// Pa
    pub q_min: f64,
    pub envelope: Envelope,
    pub metadata: BundleMetadata,
}

impl CalibrationBundle {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported bundle schema version {}",
                self.schema_version
            )));
        }
        for (m, dim, name) in [
            (&self.speed_model, SPEED_INPUTS.len(), "speed"),
            (&self.aoa_model, ANGLE_INPUTS.len(), "aoa"),
            (&self.aos_model, ANGLE_INPUTS.len(), "aos"),
        ] {
            m.validate()?;
            if m.input_dim != dim {
                return Err(Error::InvalidConfig(format!(
                    "{name} model takes {} inputs, expected {dim}",
                    m.input_dim
                )));
            }
            if m.degree != self.degree {
                return Err(Error::InvalidConfig(format!(
                    "{name} model has degree {}, bundle declares {}",
                    m.degree, self.degree
                )));
            }
        }
        if !(self.rho_ref > 0.0 && self.rho_ref.is_finite()) || !(self.q_min >= 0.0) {
            return Err(Error::InvalidConfig(
                "rho_ref and q_min must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
}

impl ErrorStats {
    pub fn from_errors<I: IntoIterator<Item = f64>>(errors: I) -> Self {
        let (mut n, mut abs, mut sq) = (0usize, 0.0, 0.0);
        for e in errors {
            n += 1;
            abs += e.abs();
            sq += e * e;
        }
        if n == 0 {
            return Self::default();
        }
        let mae = abs / n as f64;
        // rounding can leave rmse a hair under mae for identical |errors|
        let rmse = (sq / n as f64).sqrt().max(mae);
        Self { n, mae, rmse }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedBin {
    pub airspeed: f64,
    pub airspeed_error: ErrorStats,
    pub aoa_error: ErrorStats,
    pub aos_error: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleBin {
    /// Bin `[lo, lo + 5)` of the true angle, degrees.
    pub lo: f64,
    pub hi: f64,
    pub error: ErrorStats,
}

/// Held-out accuracy. Airspeed errors are m/s and percent of the true speed,
/// angle errors degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub n: usize,
    pub airspeed: ErrorStats,
    pub airspeed_pct: ErrorStats,
    pub aoa: ErrorStats,
    pub aos: ErrorStats,
    pub per_speed: Vec<SpeedBin>,
    /// AoA error binned by true AoA.
    pub per_aoa_bin: Vec<AngleBin>,
    /// AoS error binned by true AoS.
    pub per_aos_bin: Vec<AngleBin>,
}

pub const ANGLE_BIN_DEG: f64 = 5.0;

fn angle_bins(pairs: &[(f64, f64)]) -> Vec<AngleBin> {
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for &(truth, err) in pairs {
        bins.entry((truth / ANGLE_BIN_DEG).floor() as i64)
            .or_default()
            .push(err);
    }
    bins.into_iter()
        .map(|(k, errs)| AngleBin {
            lo: k as f64 * ANGLE_BIN_DEG,
            hi: (k + 1) as f64 * ANGLE_BIN_DEG,
            error: ErrorStats::from_errors(errs),
        })
        .collect()
}

/// Errors of the bundle's predictions on the measured points of `test`.
pub fn evaluate(bundle: &CalibrationBundle, test: &CalibrationDataset) -> Result<AccuracyReport> {
    let predictor = Predictor::new(bundle);
    let mut rows = Vec::new();
    for p in test.measured() {
        let est = predictor.predict(&p.sample);
        rows.push((p.label, est));
    }
    if rows.is_empty() {
        return Err(Error::EmptyTest);
    }
    let err =
        |f: fn(&FlowState) -> f64| -> Vec<f64> { rows.iter().map(|(t, e)| f(e) - f(t)).collect() };
    let airspeed = err(|s| s.airspeed);
    let aoa = err(|s| s.aoa);
    let aos = err(|s| s.aos);
    let pct: Vec<f64> = rows
        .iter()
        .zip(&airspeed)
        .filter(|((t, _), _)| t.airspeed > 0.0)
        .map(|((t, _), e)| 100.0 * e / t.airspeed)
        .collect();

    let mut speeds: BTreeMap<u64, (f64, Vec<usize>)> = BTreeMap::new();
    for (i, (t, _)) in rows.iter().enumerate() {
        speeds
            .entry(t.airspeed.to_bits())
            .or_insert((t.airspeed, Vec::new()))
            .1
            .push(i);
    }
    let mut per_speed: Vec<SpeedBin> = speeds
        .into_values()
        .map(|(v, idx)| SpeedBin {
            airspeed: v,
            airspeed_error: ErrorStats::from_errors(idx.iter().map(|&i| airspeed[i])),
            aoa_error: ErrorStats::from_errors(idx.iter().map(|&i| aoa[i])),
            aos_error: ErrorStats::from_errors(idx.iter().map(|&i| aos[i])),
        })
        .collect();
    per_speed.sort_by(|a, b| a.airspeed.total_cmp(&b.airspeed));

    let aoa_pairs: Vec<(f64, f64)> = rows
        .iter()
        .zip(&aoa)
        .map(|((t, _), &e)| (t.aoa, e))
        .collect();
    let aos_pairs: Vec<(f64, f64)> = rows
        .iter()
        .zip(&aos)
        .map(|((t, _), &e)| (t.aos, e))
        .collect();
    Ok(AccuracyReport {
        n: rows.len(),
        airspeed: ErrorStats::from_errors(airspeed.iter().copied()),
        airspeed_pct: ErrorStats::from_errors(pct),
        aoa: ErrorStats::from_errors(aoa.iter().copied()),
        aos: ErrorStats::from_errors(aos.iter().copied()),
        per_speed,
        per_aoa_bin: angle_bins(&aoa_pairs),
        per_aos_bin: angle_bins(&aos_pairs),
    })
}

/// Split, augment, select a degree, fit the three models and report
/// held-out accuracy.
pub fn calibrate(
    dataset: &CalibrationDataset,
    cfg: &FitConfig,
) -> Result<(CalibrationBundle, AccuracyReport)> {
    cfg.validate()?;
    let mut speeds: Vec<f64> = dataset.measured().map(|p| p.label.airspeed).collect();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup();
    let mut angles: Vec<(u64, u64)> = dataset
        .measured()
        .map(|p| (bits(p.label.aoa), bits(p.label.aos)))
        .collect();
    angles.sort_unstable();
    angles.dedup();
    if speeds.len() < 2 || angles.len() < 3 {
        return Err(Error::InsufficientSpan(format!(
            "{} airspeed(s) and {} angle configuration(s); need at least 2 and 3",
            speeds.len(),
            angles.len()
        )));
    }

    let (train, test) = shuffle_split(dataset, cfg.split_ratio, cfg.seed)?;
    let train = if cfg.augment {
        augment_zero_regime(&train, cfg)?
    } else {
        train
    };
    let augmented_points = train.len() - train.measured().count();

    let (degree, record) = match cfg.degree {
        DegreeChoice::Fixed(d) => (
            d,
            DegreeRecord {
                mode: "fixed".into(),
                selected: d,
                trace: Vec::new(),
            },
        ),
        DegreeChoice::Auto => {
            let sel = select_degree(&train, cfg)?;
            (
                sel.degree,
                DegreeRecord {
                    mode: "auto".into(),
                    selected: sel.degree,
                    trace: sel.trace,
                },
            )
        }
    };

    let speed = fit_model(&train.points, Target::Airspeed, degree, cfg.rho_ref)?;
    let aoa = fit_model(&train.points, Target::Aoa, degree, cfg.rho_ref)?;
    let aos = fit_model(&train.points, Target::Aos, degree, cfg.rho_ref)?;

    let bundle = CalibrationBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        degree,
        speed_model: speed.model,
        aoa_model: aoa.model,
        aos_model: aos.model,
        rho_ref: cfg.rho_ref,
        q_min: cfg.q_min,
        envelope: dataset.envelope,
        metadata: BundleMetadata {
            created: None,
            seed: cfg.seed,
            degree_selection: record,
            split_ratio: cfg.split_ratio,
            augmented: cfg.augment,
            train_points: train.len(),
            augmented_points,
            test_points: test.len(),
            dropped_monomials: DroppedMonomials {
                speed: speed.dropped,
                aoa: aoa.dropped,
                aos: aos.dropped,
            },
            rng: RNG_ALGORITHM.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    let report = evaluate(&bundle, &test)?;
    Ok((bundle, report))
}
