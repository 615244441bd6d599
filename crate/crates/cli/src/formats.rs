//! On-disk formats: run CSVs and their manifest, the design matrix long CSV,
//! flight logs and estimate outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mpp_core::design::{DesignMatrix, DesignSpec, TipShape};
use mpp_core::estimate::StreamSample;
use mpp_core::flight::FlightLog;
use mpp_core::{BodyVelocity, CalibrationRun, Error, FlowState, PressureFrame};

use crate::io::{parse_f64, read_bytes, write_csv, InputDigest, Table};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const RUN_COLUMNS: [&str; 6] = ["t", "dp1", "dp2", "dp3", "dp4", "dp5"];
pub const DESIGN_COLUMNS: [&str; 9] = [
    "design_id",
    "tip",
    "spacing_mm",
    "speed_mps",
    "aoa_deg",
    "aos_deg",
    "sensor",
    "sample_idx",
    "dp_pa",
];
pub const MISSING_MARKER: &str = "NA";

pub fn read_frames(table: &Table, path: &Path) -> Result<Vec<PressureFrame>> {
    let idx = table.require(&RUN_COLUMNS)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, rec)| {
            let mut v = [0.0; 6];
            for (k, &i) in idx.iter().enumerate() {
                v[k] = parse_f64(rec.get(i).unwrap_or(""), r + 1, RUN_COLUMNS[k])
                    .with_context(|| path.display().to_string())?;
            }
            Ok(PressureFrame::new(v[0], [v[1], v[2], v[3], v[4], v[5]]))
        })
        .collect()
}

pub fn write_run(path: &Path, run: &CalibrationRun) -> Result<()> {
    write_csv(path, &RUN_COLUMNS, |w| {
        for f in &run.frames {
            w.write_record(
                [f.t, f.dp[0], f.dp[1], f.dp[2], f.dp[3], f.dp[4]].map(|v| v.to_string()),
            )?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub file: String,
    pub speed_mps: f64,
    pub aoa_deg: f64,
    pub aos_deg: f64,
    pub sample_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub runs: Vec<ManifestEntry>,
}

/// Runs listed in a manifest plus digests of the manifest and every run file.
pub fn load_manifest(path: &Path) -> Result<(Vec<CalibrationRun>, Vec<InputDigest>)> {
    let bytes = read_bytes(path)?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing manifest {}", path.display()))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        bail!(Error::InvalidConfig(format!(
            "unsupported manifest schema version {}",
            manifest.schema_version
        )));
    }
    let base = path
        .parent()
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let mut digests = vec![crate::io::digest_bytes(path, &bytes)];
    let mut runs = Vec::with_capacity(manifest.runs.len());
    for e in &manifest.runs {
        let file = base.join(&e.file);
        let bytes = read_bytes(&file)?;
        digests.push(crate::io::digest_bytes(&file, &bytes));
        let frames = read_frames(&Table::parse(&bytes, &file)?, &file)?;
        let state = FlowState::new(e.speed_mps, e.aoa_deg, e.aos_deg)
            .with_context(|| file.display().to_string())?;
        runs.push(
            CalibrationRun::new(state, e.sample_rate_hz, frames)
                .with_context(|| file.display().to_string())?,
        );
    }
    Ok((runs, digests))
}

fn tip_from(s: &str) -> Result<TipShape> {
    s.parse::<TipShape>()
        .map_err(|_| anyhow::Error::new(Error::InvalidTensor(format!("unknown tip shape {s:?}"))))
}

// Sort key for float axis values.
fn key(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Parse the long-format design CSV. Every (design, speed, angle, sensor,
/// sample) cell must be present, either with a value or the `NA` marker.
pub fn read_design_matrix(table: &Table, path: &Path) -> Result<DesignMatrix> {
    let idx = table.require(&DESIGN_COLUMNS)?;
    let ctx = || path.display().to_string();
    let num = |rec: &csv::StringRecord, k: usize, r: usize| {
        parse_f64(rec.get(idx[k]).unwrap_or(""), r, DESIGN_COLUMNS[k])
    };

    struct Row {
        design: usize,
        speed: f64,
        angle: (f64, f64),
        sensor: usize,
        sample: usize,
        value: Option<f64>,
    }
    let mut designs: Vec<DesignSpec> = Vec::new();
    let mut rows = Vec::with_capacity(table.rows.len());
    for (r, rec) in table.rows.iter().enumerate() {
        let line = r + 1;
        let id = rec.get(idx[0]).unwrap_or("").to_string();
        let tip = tip_from(rec.get(idx[1]).unwrap_or("")).with_context(ctx)?;
        let spacing_mm = num(rec, 2, line).with_context(ctx)?;
        let design = match designs.iter().position(|d| d.id == id) {
            Some(i) => {
                if designs[i].tip != tip || designs[i].spacing_mm != spacing_mm {
                    bail!(Error::InvalidTensor(format!(
                        "design {id} has inconsistent tip or spacing at row {line}"
                    )));
                }
                i
            }
            None => {
                designs.push(DesignSpec {
                    id,
                    tip,
                    spacing_mm,
                });
                designs.len() - 1
            }
        };
        let sensor_raw = num(rec, 6, line).with_context(ctx)?;
        if !(1.0..=5.0).contains(&sensor_raw) || sensor_raw.fract() != 0.0 {
            bail!(Error::InvalidTensor(format!(
                "row {line}: sensor must be 1..5, got {sensor_raw}"
            )));
        }
        let sample_raw = num(rec, 7, line).with_context(ctx)?;
        if sample_raw < 0.0 || sample_raw.fract() != 0.0 {
            bail!(Error::InvalidTensor(format!(
                "row {line}: sample_idx must be a non-negative integer"
            )));
        }
        let raw = rec.get(idx[8]).unwrap_or("");
        let value = if raw == MISSING_MARKER || raw.is_empty() {
            None
        } else {
            Some(parse_f64(raw, line, "dp_pa").with_context(ctx)?)
        };
        rows.push(Row {
            design,
            speed: num(rec, 3, line).with_context(ctx)?,
            angle: (
                num(rec, 4, line).with_context(ctx)?,
                num(rec, 5, line).with_context(ctx)?,
            ),
            sensor: sensor_raw as usize - 1,
            sample: sample_raw as usize,
            value,
        });
    }
    if designs.is_empty() {
        bail!(Error::InvalidTensor("design matrix has no rows".into()));
    }

    let mut speeds: BTreeMap<u64, f64> = BTreeMap::new();
    let mut angles: BTreeMap<(u64, u64), (f64, f64)> = BTreeMap::new();
    let mut samples = 0;
    for r in &rows {
        speeds.insert(key(r.speed), r.speed);
        angles.insert((key(r.angle.0), key(r.angle.1)), r.angle);
        samples = samples.max(r.sample + 1);
    }
    let speed_pos: BTreeMap<u64, usize> = speeds.keys().enumerate().map(|(i, &k)| (k, i)).collect();
    let angle_pos: BTreeMap<(u64, u64), usize> =
        angles.keys().enumerate().map(|(i, &k)| (k, i)).collect();
    let mut m = DesignMatrix::new(
        designs,
        speeds.into_values().collect(),
        angles.into_values().collect(),
        samples,
    );
    let mut seen = vec![false; m.len()];
    let [_, ns, nc, na, nk] = m.shape();
    for (line, r) in rows.iter().enumerate() {
        let s = speed_pos[&key(r.speed)];
        let a = angle_pos[&(key(r.angle.0), key(r.angle.1))];
        let flat = (((r.design * ns + s) * nc + r.sensor) * na + a) * nk + r.sample;
        if std::mem::replace(&mut seen[flat], true) {
            bail!(Error::InvalidTensor(format!(
                "row {}: duplicate cell",
                line + 1
            )));
        }
        m.set(r.design, s, r.sensor, a, r.sample, r.value);
    }
    let absent = seen.iter().filter(|s| !**s).count();
    if absent > 0 {
        bail!(Error::InvalidTensor(format!(
            "ragged design matrix: {absent} of {} cells are absent; mark missing cells with {MISSING_MARKER}",
            seen.len()
        )));
    }
    Ok(m)
}

pub fn write_design_matrix(path: &Path, m: &DesignMatrix) -> Result<()> {
    let [nd, ns, nc, na, nk] = m.shape();
    write_csv(path, &DESIGN_COLUMNS, |w| {
        for d in 0..nd {
            let spec = &m.designs[d];
            for s in 0..ns {
                for a in 0..na {
                    for c in 0..nc {
                        for k in 0..nk {
                            let v = m
                                .get(d, s, c, a, k)
                                .map_or_else(|| MISSING_MARKER.to_string(), |v| v.to_string());
                            w.write_record([
                                spec.id.clone(),
                                spec.tip.as_str().to_string(),
                                spec.spacing_mm.to_string(),
                                m.speeds[s].to_string(),
                                m.angles[a].0.to_string(),
                                m.angles[a].1.to_string(),
                                (c + 1).to_string(),
                                k.to_string(),
                                v,
                            ])?;
                        }
                    }
                }
            }
        }
        Ok(())
    })
}

pub const FLIGHT_COLUMNS: [&str; 9] = ["t", "dp1", "dp2", "dp3", "dp4", "dp5", "vx", "vy", "vz"];

pub fn read_flight_log(table: &Table, path: &Path) -> Result<FlightLog> {
    let idx = table.require(&FLIGHT_COLUMNS)?;
    let pitot = table.column("pitot_mps");
    let maneuver = table.column("maneuver");
    let mut log = FlightLog {
        pitot: pitot.map(|_| Vec::new()),
        maneuver: maneuver.map(|_| Vec::new()),
        ..FlightLog::default()
    };
    for (r, rec) in table.rows.iter().enumerate() {
        let mut v = [0.0; 9];
        for (k, &i) in idx.iter().enumerate() {
            v[k] = parse_f64(rec.get(i).unwrap_or(""), r + 1, FLIGHT_COLUMNS[k])
                .with_context(|| path.display().to_string())?;
        }
        log.t.push(v[0]);
        log.dp.push([v[1], v[2], v[3], v[4], v[5]]);
        log.velocity.push(BodyVelocity {
            vx: v[6],
            vy: v[7],
            vz: v[8],
        });
        if let (Some(i), Some(p)) = (pitot, log.pitot.as_mut()) {
            p.push(
                parse_f64(rec.get(i).unwrap_or(""), r + 1, "pitot_mps")
                    .with_context(|| path.display().to_string())?,
            );
        }
        if let (Some(i), Some(m)) = (maneuver, log.maneuver.as_mut()) {
            m.push(rec.get(i).unwrap_or("").to_string());
        }
    }
    Ok(log)
}

pub fn write_flight_log(path: &Path, log: &FlightLog) -> Result<()> {
    let mut header: Vec<&str> = FLIGHT_COLUMNS.to_vec();
    if log.pitot.is_some() {
        header.push("pitot_mps");
    }
    if log.maneuver.is_some() {
        header.push("maneuver");
    }
    write_csv(path, &header, |w| {
        for i in 0..log.len() {
            let v = &log.velocity[i];
            let mut rec: Vec<String> = [log.t[i]]
                .iter()
                .chain(&log.dp[i])
                .chain(&[v.vx, v.vy, v.vz])
                .map(|x| x.to_string())
                .collect();
            if let Some(p) = &log.pitot {
                rec.push(p[i].to_string());
            }
            if let Some(m) = &log.maneuver {
                rec.push(m[i].clone());
            }
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub const ESTIMATE_COLUMNS: [&str; 7] = [
    "t",
    "airspeed_mps",
    "aoa_deg",
    "aos_deg",
    "q_pa",
    "calibrated",
    "gap",
];

pub fn write_estimates(path: &Path, out: &[StreamSample]) -> Result<()> {
    write_csv(path, &ESTIMATE_COLUMNS, |w| {
        for s in out {
            let rec = match &s.estimate {
                Some(e) => [
                    s.t.to_string(),
                    e.state.airspeed.to_string(),
                    e.state.aoa.to_string(),
                    e.state.aos.to_string(),
                    s.q.to_string(),
                    e.calibrated.to_string(),
                    "false".to_string(),
                ],
                None => [
                    s.t.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    s.q.to_string(),
                    "false".to_string(),
                    "true".to_string(),
                ],
            };
            w.write_record(&rec)?;
        }
        Ok(())
    })
}
