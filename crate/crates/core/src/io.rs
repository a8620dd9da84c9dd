//! Configuration files, record tables, reports and field snapshots.

use num_complex::Complex64;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::harness::{
    InitialSpec, ModeSpec, Phase, ScenarioConfig, SnapshotPolicy, TrajectoryReport,
};
use crate::model::SteadyStateParams;

pub const RECORDS_HEADER: &str = "t,mass,E,e,J,D_accum,re_h1,im_h1,phi_h1,h_min,h_max";

pub const CONFIG_KEYS: &[&str] = &[
    "n_points",
    "alpha",
    "sigma",
    "epsilon",
    "h_bar",
    "t_end",
    "output_interval",
    "rel_tol",
    "dt_min",
    "dt_max",
    "safety",
    "energy_guard_tol",
    "init.modes",
    "init.steady",
    "init.random",
    "init.file",
    "init.include_pm1",
    "seed",
    "snapshots",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_modes(value: &str) -> Result<Vec<ModeSpec>> {
    value
        .split(',')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split(':').map(str::trim).collect();
            let [n, phase, amp] = parts.as_slice() else {
                return Err(Error::Config(format!(
                    "init.modes: expected n:cos|sin:amplitude, got {item:?}"
                )));
            };
            let phase = match *phase {
                "cos" => Phase::Cos,
                "sin" => Phase::Sin,
                other => {
                    return Err(Error::Config(format!(
                        "init.modes: unknown phase {other:?}"
                    )))
                }
            };
            Ok(ModeSpec {
                n: parse_num("init.modes", n)?,
                phase,
                amplitude: parse_num("init.modes", amp)?,
            })
        })
        .collect()
}

/// Sets one configuration key.
pub fn apply_setting(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<()> {
    let value = value.trim();
    match key.trim() {
        "n_points" => cfg.n_points = parse_num(key, value)?,
        "alpha" => cfg.alpha = parse_num(key, value)?,
        "sigma" => cfg.sigma = parse_num(key, value)?,
        "epsilon" => cfg.epsilon = parse_num(key, value)?,
        "h_bar" => cfg.h_bar = parse_num(key, value)?,
        "t_end" => cfg.t_end = parse_num(key, value)?,
        "output_interval" => cfg.output_interval = parse_num(key, value)?,
        "rel_tol" => cfg.controller.rel_tol = parse_num(key, value)?,
        "dt_min" => cfg.controller.dt_min = parse_num(key, value)?,
        "dt_max" => cfg.controller.dt_max = parse_num(key, value)?,
        "safety" => cfg.controller.safety = parse_num(key, value)?,
        "energy_guard_tol" => cfg.controller.energy_guard_tol = parse_num(key, value)?,
        "init.modes" => cfg.initial = InitialSpec::Modes(parse_modes(value)?),
        "init.steady" => {
            let v: Vec<f64> = value
                .split(',')
                .map(|x| parse_num(key, x.trim()))
                .collect::<Result<_>>()?;
            let [h_bar, k_m1, k_1] = v.as_slice() else {
                return Err(Error::Config("init.steady: expected h_bar,k_m1,k_1".into()));
            };
            cfg.initial = InitialSpec::Steady(SteadyStateParams {
                h_bar: *h_bar,
                kappa_m1: *k_m1,
                kappa_1: *k_1,
            });
            cfg.h_bar = *h_bar;
        }
        "init.random" => {
            cfg.initial = InitialSpec::Random {
                n_modes: parse_num(key, value)?,
            }
        }
        "init.file" => cfg.initial = InitialSpec::File(PathBuf::from(value)),
        "init.include_pm1" => cfg.include_pm1 = parse_num(key, value)?,
        "seed" => cfg.seed = parse_num(key, value)?,
        "snapshots" => {
            cfg.snapshots = match value {
                "none" => SnapshotPolicy::None,
                "dyadic" => SnapshotPolicy::Dyadic,
                other => {
                    return Err(Error::Config(format!(
                        "snapshots: expected none|dyadic, got {other:?}"
                    )))
                }
            }
        }
        other => return Err(Error::Config(format!("unknown key {other:?}"))),
    }
    Ok(())
}

/// Applies a `key=value` override.
pub fn apply_override(cfg: &mut ScenarioConfig, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
    apply_setting(cfg, key, value)
}

/// Parses `key = value` lines over the defaults. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        apply_setting(&mut cfg, key, value).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("line {}: {msg}", i + 1)),
            other => other,
        })?;
    }
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<ScenarioConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn records_to_csv(records: &[DiagnosticsRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Data("no records to write".into()));
    }
    let mut out = String::with_capacity(200 * (records.len() + 1));
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let fields = [
            r.t,
            r.mass,
            r.energy,
            r.modified_energy,
            r.dissipation,
            r.d_accum,
            r.h_1.re,
            r.h_1.im,
            r.phi_h1_norm,
            r.h_min,
            r.h_max,
        ];
        for (i, v) in fields.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to a string");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_records_csv(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    fs::write(path, records_to_csv(records)?)?;
    Ok(())
}

pub fn parse_records_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == RECORDS_HEADER => {}
        _ => return Err(Error::Data(format!("missing header {RECORDS_HEADER:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let v: Vec<f64> = line
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Data(format!("row {}: bad number {x:?}", i + 1)))
                })
                .collect::<Result<_>>()?;
            if v.len() != 11 {
                return Err(Error::Data(format!(
                    "row {}: expected 11 columns, got {}",
                    i + 1,
                    v.len()
                )));
            }
            let h_1 = Complex64::new(v[6], v[7]);
            Ok(DiagnosticsRecord {
                t: v[0],
                mass: v[1],
                energy: v[2],
                modified_energy: v[3],
                dissipation: v[4],
                d_accum: v[5],
                h_m1: h_1.conj(),
                h_1,
                phi_h1_norm: v[8],
                h_min: v[9],
                h_max: v[10],
            })
        })
        .collect()
}

pub fn read_records_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_records_csv(&text)
}

pub fn report_to_json(report: &TrajectoryReport) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Data(e.to_string()))
}

pub fn report_from_json(text: &str) -> Result<TrajectoryReport> {
    serde_json::from_str(text).map_err(|e| Error::Data(e.to_string()))
}

/// `u64` little-endian length followed by the values as little-endian `f64`.
pub fn encode_snapshot(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * (values.len() + 1));
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Vec<f64>> {
    let (len, rest) = bytes
        .split_first_chunk::<8>()
        .ok_or_else(|| Error::Data("snapshot shorter than its length prefix".into()))?;
    let len = u64::from_le_bytes(*len) as usize;
    if rest.len() != 8 * len {
        return Err(Error::Data(format!(
            "snapshot declares {len} values but holds {} bytes",
            rest.len()
        )));
    }
    Ok(rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn snapshot_file_name(t: f64) -> String {
    format!("t_{t}.f64")
}

/// Writes `records.csv`, `report.json` and, when fields were stored,
/// `fields/t_<t>.f64` under `dir`.
pub fn write_run(report: &TrajectoryReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_records_csv(&report.records, &dir.join("records.csv"))?;
    fs::write(dir.join("report.json"), report_to_json(report)?)?;
    if !report.snapshots.is_empty() {
        let fields = dir.join("fields");
        fs::create_dir_all(&fields)?;
        for s in &report.snapshots {
            fs::write(
                fields.join(snapshot_file_name(s.t)),
                encode_snapshot(s.h.values()),
            )?;
        }
    }
    Ok(())
}
