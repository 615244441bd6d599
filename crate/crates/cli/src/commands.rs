use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use mpp_core::calibrate::{
    calibrate, AccuracyReport, AngleBin, CalibrationBundle, DegreeChoice, DegreeRecord, FitConfig,
};
use mpp_core::design::{compare_designs, DesignReport, Metric};
use mpp_core::estimate::estimate_stream;
use mpp_core::flight::{validate_flight, ValidateConfig, ValidationReport};
use mpp_core::preprocess::{assemble_dataset, PreprocessConfig};
use mpp_core::synth::{
    default_calibration_angles, default_designs, dense_calibration_angles, generate_design_matrix,
    generate_flight_log, generate_grid, FlightPlan, OracleConfig, RNG_ALGORITHM,
};
use mpp_core::{Envelope, Error};

use crate::args::{
    AngleGrid, CalibrateArgs, DesignEvalArgs, EstimateArgs, FlightValidateArgs, OracleArgs,
    SynthMode,
};
use crate::formats::{
    load_manifest, read_design_matrix, read_flight_log, read_frames, write_design_matrix,
    write_estimates, write_flight_log, write_run, Manifest, ManifestEntry, MANIFEST_SCHEMA_VERSION,
};
use crate::io::{digest_bytes, read_bytes, write_csv, write_json, InputDigest, Table};
use crate::UsageError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Provenance block at the top of every report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportHeader {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
}

impl ReportHeader {
    fn new(command: &'static str, seed: Option<u64>, inputs: Vec<InputDigest>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            tool: "mpp",
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            inputs,
        }
    }
}

fn usage_on_config<T>(r: mpp_core::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidConfig(m) => UsageError(m).into(),
        Error::AngleOutOfRange(a) => UsageError(format!("angle {a} deg is out of range")).into(),
        e => e.into(),
    })
}

fn oracle(o: &OracleArgs, sigma: f64) -> Result<OracleConfig> {
    let mut cfg = OracleConfig::new(o.tip.into(), sigma, o.seed);
    if let Some(s) = o.sharpness {
        cfg.sharpness = s;
    }
    usage_on_config(cfg.validate())?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct GeneratorInfo<'a> {
    tool_version: &'static str,
    seed: u64,
    oracle: &'a OracleConfig,
    rng: &'static str,
}

pub fn synth(mode: &SynthMode) -> Result<()> {
    match mode {
        SynthMode::Grid {
            out,
            oracle: o,
            sigma,
            speeds,
            angles,
            duration,
            fs,
        } => {
            let cfg = oracle(o, *sigma)?;
            let angles = match angles {
                AngleGrid::Star17 => default_calibration_angles(),
                AngleGrid::Square81 => dense_calibration_angles(),
            };
            if !(*fs > 0.0 && fs.is_finite()) {
                return Err(UsageError(format!("--fs {fs} must be positive")).into());
            }
            let runs = usage_on_config(generate_grid(&cfg, speeds, &angles, *duration, *fs))?;
            let mut entries = Vec::with_capacity(runs.len());
            for (i, run) in runs.iter().enumerate() {
                let file = format!("run_{i:03}.csv");
                write_run(&out.join(&file), run)?;
                entries.push(ManifestEntry {
                    file,
                    speed_mps: run.true_state.airspeed,
                    aoa_deg: run.true_state.aoa,
                    aos_deg: run.true_state.aos,
                    sample_rate_hz: run.sample_rate,
                });
            }
            #[derive(Serialize)]
            struct WithGenerator<'a> {
                #[serde(flatten)]
                manifest: Manifest,
                generator: GeneratorInfo<'a>,
            }
            write_json(
                &out.join("manifest.json"),
                &WithGenerator {
                    manifest: Manifest {
                        schema_version: MANIFEST_SCHEMA_VERSION,
                        runs: entries,
                    },
                    generator: GeneratorInfo {
                        tool_version: env!("CARGO_PKG_VERSION"),
                        seed: o.seed,
                        oracle: &cfg,
                        rng: RNG_ALGORITHM,
                    },
                },
            )?;
            println!(
                "wrote {} runs and manifest.json to {}",
                runs.len(),
                out.display()
            );
        }
        SynthMode::Design {
            out,
            seed,
            sigma,
            samples,
            speeds,
        } => {
            if sigma.is_nan() || *sigma < 0.0 {
                return Err(UsageError(format!("--sigma {sigma} must be non-negative")).into());
            }
            let designs = default_designs(*sigma, *seed);
            let m = usage_on_config(generate_design_matrix(
                &designs,
                speeds,
                &mpp_core::synth::default_design_angles(),
                *samples,
            ))?;
            write_design_matrix(out, &m)?;
            let [nd, ns, nc, na, nk] = m.shape();
            println!(
                "wrote {nd} designs x {ns} speeds x {nc} sensors x {na} angles x {nk} samples to {}",
                out.display()
            );
        }
        SynthMode::Flight {
            out,
            oracle: o,
            sigma,
            fs,
            pitot_sigma,
            no_pitot,
        } => {
            let cfg = oracle(o, *sigma)?;
            if !(*fs > 0.0 && fs.is_finite()) || pitot_sigma.is_nan() || *pitot_sigma < 0.0 {
                return Err(UsageError(
                    "--fs must be positive and --pitot-sigma non-negative".into(),
                )
                .into());
            }
            let plan = FlightPlan {
                fs: *fs,
                pitot_sigma: *pitot_sigma,
                with_pitot: !no_pitot,
                ..FlightPlan::default()
            };
            let log = usage_on_config(generate_flight_log(&cfg, &plan))?;
            write_flight_log(out, &log)?;
            println!("wrote {} flight log rows to {}", log.len(), out.display());
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    runs: usize,
    ingested_measurements: usize,
    points: usize,
    train_points: usize,
    augmented_points: usize,
    test_points: usize,
}

#[derive(Debug, Serialize)]
struct CalibrationReportFile<'a> {
    #[serde(flatten)]
    header: ReportHeader,
    bundle: InputDigest,
    degree: usize,
    degree_selection: &'a DegreeRecord,
    dataset: DatasetSummary,
    accuracy: &'a AccuracyReport,
}

/// Creation time from `SOURCE_DATE_EPOCH`, so outputs stay reproducible.
fn creation_time() -> Option<String> {
    let secs: i64 = std::env::var("SOURCE_DATE_EPOCH")
        .ok()?
        .trim()
        .parse()
        .ok()?;
    chrono::DateTime::from_timestamp(secs, 0).map(|t| t.to_rfc3339())
}

pub fn default_report_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "bundle".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.report.json"))
}

pub fn calibrate_cmd(a: &CalibrateArgs) -> Result<()> {
    if !(a.split > 0.0 && a.split < 1.0) {
        return Err(UsageError(format!("--split {} must lie in (0, 1)", a.split)).into());
    }
    let (runs, inputs) = load_manifest(&a.manifest)?;
    let pre = PreprocessConfig {
        cutoff_hz: a.fc,
        q_min: a.q_min,
        envelope: Envelope::default(),
    };
    let dataset = assemble_dataset(&runs, &pre)?;
    let cfg = FitConfig {
        degree: a.degree,
        split_ratio: a.split,
        seed: a.seed,
        augment: !a.no_augment,
        q_min: a.q_min,
        ..FitConfig::default()
    };
    let (mut bundle, report) = calibrate(&dataset, &cfg)?;
    bundle.metadata.created = creation_time();

    let mut text = serde_json::to_string_pretty(&bundle)?;
    text.push('\n');
    crate::io::write_atomic(&a.out, text.as_bytes())?;
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| default_report_path(&a.out));
    let m = &bundle.metadata;
    write_json(
        &report_path,
        &CalibrationReportFile {
            header: ReportHeader::new("calibrate", Some(a.seed), inputs),
            bundle: digest_bytes(&a.out, text.as_bytes()),
            degree: bundle.degree,
            degree_selection: &m.degree_selection,
            dataset: DatasetSummary {
                runs: runs.len(),
                ingested_measurements: dataset.ingested_measurements,
                points: dataset.len(),
                train_points: m.train_points,
                augmented_points: m.augmented_points,
                test_points: m.test_points,
            },
            accuracy: &report,
        },
    )?;
    if let Some(dir) = &a.plot_dir {
        write_calibration_plots(dir, &bundle, &report)?;
    }

    let mode = if cfg.degree == DegreeChoice::Auto {
        "auto"
    } else {
        "fixed"
    };
    println!(
        "degree {} ({mode}), {} test points",
        bundle.degree, report.n
    );
    println!(
        "airspeed MAE {:.3} m/s  RMSE {:.3} m/s  ({:.2} %)",
        report.airspeed.mae, report.airspeed.rmse, report.airspeed_pct.mae
    );
    println!(
        "aoa      MAE {:.3} deg  RMSE {:.3} deg",
        report.aoa.mae, report.aoa.rmse
    );
    println!(
        "aos      MAE {:.3} deg  RMSE {:.3} deg",
        report.aos.mae, report.aos.rmse
    );
    Ok(())
}

fn write_calibration_plots(
    dir: &Path,
    bundle: &CalibrationBundle,
    r: &AccuracyReport,
) -> Result<()> {
    write_csv(
        &dir.join("degree_trace.csv"),
        &["degree", "validation_mae_deg"],
        |w| {
            for t in &bundle.metadata.degree_selection.trace {
                w.write_record([t.degree.to_string(), t.validation_mae.to_string()])?;
            }
            Ok(())
        },
    )?;
    write_csv(
        &dir.join("accuracy_by_speed.csv"),
        &[
            "speed_mps",
            "n",
            "airspeed_mae_mps",
            "airspeed_rmse_mps",
            "aoa_mae_deg",
            "aos_mae_deg",
        ],
        |w| {
            for b in &r.per_speed {
                w.write_record([
                    b.airspeed.to_string(),
                    b.airspeed_error.n.to_string(),
                    b.airspeed_error.mae.to_string(),
                    b.airspeed_error.rmse.to_string(),
                    b.aoa_error.mae.to_string(),
                    b.aos_error.mae.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    write_csv(
        &dir.join("accuracy_by_angle.csv"),
        &[
            "angle",
            "bin_lo_deg",
            "bin_hi_deg",
            "n",
            "mae_deg",
            "rmse_deg",
        ],
        |w| {
            let mut put = |name: &str, bins: &[AngleBin]| -> Result<()> {
                for b in bins {
                    w.write_record([
                        name.to_string(),
                        b.lo.to_string(),
                        b.hi.to_string(),
                        b.error.n.to_string(),
                        b.error.mae.to_string(),
                        b.error.rmse.to_string(),
                    ])?;
                }
                Ok(())
            };
            put("aoa", &r.per_aoa_bin)?;
            put("aos", &r.per_aos_bin)
        },
    )
}

pub fn load_bundle(path: &Path) -> Result<(CalibrationBundle, InputDigest)> {
    let bytes = read_bytes(path)?;
    let bundle: CalibrationBundle = serde_json::from_slice(&bytes).map_err(|e| {
        Error::InvalidConfig(format!("{}: not a calibration bundle: {e}", path.display()))
    })?;
    bundle
        .validate()
        .with_context(|| path.display().to_string())?;
    Ok((bundle, digest_bytes(path, &bytes)))
}

fn sample_rate(fs: Option<f64>, t: &[f64], fc: f64) -> Result<f64> {
    if let Some(fs) = fs {
        return Ok(fs);
    }
    if t.len() < 2 {
        // nothing to filter; any valid rate gives the same output
        return Ok(4.0 * fc);
    }
    let log = mpp_core::flight::FlightLog {
        t: t.to_vec(),
        ..Default::default()
    };
    Ok(log.infer_sample_rate()?)
}

pub fn estimate_cmd(a: &EstimateArgs) -> Result<()> {
    let (bundle, _) = load_bundle(&a.model)?;
    let bytes = read_bytes(&a.input)?;
    let frames = read_frames(&Table::parse(&bytes, &a.input)?, &a.input)?;
    let t: Vec<f64> = frames.iter().map(|f| f.t).collect();
    let fs = sample_rate(a.fs, &t, a.fc)?;
    let out = estimate_stream(&bundle, &frames, fs, a.fc)?;
    write_estimates(&a.out, &out)?;
    let gaps = out.iter().filter(|s| s.is_gap()).count();
    println!(
        "wrote {} estimates ({gaps} gaps) to {}",
        out.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct DesignReportFile<'a> {
    #[serde(flatten)]
    header: ReportHeader,
    #[serde(flatten)]
    report: &'a DesignReport,
}

pub fn design_eval_cmd(a: &DesignEvalArgs) -> Result<()> {
    let bytes = read_bytes(&a.matrix)?;
    let matrix = read_design_matrix(&Table::parse(&bytes, &a.matrix)?, &a.matrix)?;
    let report = compare_designs(&matrix)?;
    write_json(
        &a.out,
        &DesignReportFile {
            header: ReportHeader::new("design-eval", None, vec![digest_bytes(&a.matrix, &bytes)]),
            report: &report,
        },
    )?;
    if let Some(plot) = &a.plot {
        write_csv(
            plot,
            &["design_id", "tip", "spacing_mm", "metric", "value"],
            |w| {
                for d in &report.designs {
                    for m in Metric::ALL {
                        w.write_record([
                            d.id.clone(),
                            d.tip.as_str().to_string(),
                            d.spacing_mm.to_string(),
                            m.as_str().to_string(),
                            d.get(m).to_string(),
                        ])?;
                    }
                }
                Ok(())
            },
        )?;
    }
    for t in &report.tests {
        println!(
            "{:<20} {:>8} vs {:<8} p = {:.3e} {}",
            t.metric.as_str(),
            t.group_a,
            t.group_b,
            t.welch.p,
            t.stars
        );
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct FlightReportFile<'a> {
    #[serde(flatten)]
    header: ReportHeader,
    notes: Vec<String>,
    #[serde(flatten)]
    report: &'a ValidationReport,
}

pub fn flight_validate_cmd(a: &FlightValidateArgs) -> Result<()> {
    let (bundle, bundle_digest) = load_bundle(&a.model)?;
    let bytes = read_bytes(&a.log)?;
    let log = read_flight_log(&Table::parse(&bytes, &a.log)?, &a.log)?;
    let cfg = ValidateConfig {
        sample_rate: a.fs,
        cutoff_hz: a.fc,
        vx_min: a.vx_min,
        align_tol_s: a.tol,
    };
    let report = validate_flight(&bundle, &log, &cfg)?;
    let mut notes = Vec::new();
    if log.pitot.is_none() {
        notes.push(
            "no pitot column: airspeed compared with the reference speed |v| only".to_string(),
        );
    }
    if log.maneuver.is_none() {
        notes.push("no maneuver column: per-maneuver breakdown omitted".to_string());
    }
    write_json(
        &a.out,
        &FlightReportFile {
            header: ReportHeader::new(
                "flight-validate",
                None,
                vec![bundle_digest, digest_bytes(&a.log, &bytes)],
            ),
            notes: notes.clone(),
            report: &report,
        },
    )?;
    if let Some(plot) = &a.plot {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        write_csv(
            plot,
            &[
                "t",
                "airspeed_mps",
                "pitot_mps",
                "reference_speed_mps",
                "aoa_deg",
                "reference_aoa_deg",
                "aos_deg",
                "reference_aos_deg",
                "maneuver",
            ],
            |w| {
                for r in &report.rows {
                    w.write_record([
                        r.t.to_string(),
                        r.airspeed.to_string(),
                        opt(r.pitot),
                        r.reference_speed.to_string(),
                        r.aoa.to_string(),
                        r.reference_aoa.to_string(),
                        r.aos.to_string(),
                        r.reference_aos.to_string(),
                        r.maneuver.clone().unwrap_or_default(),
                    ])?;
                }
                Ok(())
            },
        )?;
    }
    eprintln!("warning: {}", report.warning);
    for n in &notes {
        println!("note: {n}");
    }
    let e = &report.errors;
    let c = &report.counts;
    println!(
        "{} of {} rows paired ({} gap, {} low forward speed, {} unaligned)",
        c.paired, c.input, c.dropped_gap, c.dropped_reference, c.dropped_unaligned
    );
    if let Some(p) = &e.airspeed_vs_pitot {
        println!("airspeed vs pitot      MAE {:.3} m/s", p.mae);
    }
    println!(
        "airspeed vs reference  MAE {:.3} m/s",
        e.airspeed_vs_reference.mae
    );
    println!(
        "aoa vs reference       MAE {:.3} deg",
        e.aoa_vs_reference.mae
    );
    println!(
        "aos vs reference       MAE {:.3} deg",
        e.aos_vs_reference.mae
    );
    Ok(())
}
