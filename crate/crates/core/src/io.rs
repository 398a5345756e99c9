//! File formats: environment and trajectory JSON, scan and report CSV.
//!
//! Files carry power in dBm; everything is converted to milliwatts here.
//! A scan reading of `-inf` dBm means "scanned, not received" (0 mW).
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, and infinity is written as `inf`.

use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dop::Classification;
use crate::error::{Error, Result};
use crate::radio::{dbm_to_mw, mw_to_dbm, AccessPoint, ApId, Dimension, Environment, Position, Receiver, RssScan};
use crate::sim::{SampleRecord, Trajectory};

/// Locale-independent, round-trippable number formatting.
pub fn fmt_f64(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_owned()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_owned()
    } else {
        format!("{x:?}")
    }
}

fn parse_f64(field: &str, s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::ParseError {
        line,
        message: format!("`{field}`: `{s}` is not a number"),
    })
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawReceiver {
    gain: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawAp {
    id: Option<String>,
    x: Option<f64>,
    y: Option<f64>,
    z: Option<f64>,
    tx_power_dbm: Option<f64>,
    tx_gain: Option<f64>,
    wavelength_m: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawEnvironment {
    dimension: Option<u8>,
    ss_threshold_dbm: Option<f64>,
    receiver: Option<RawReceiver>,
    aps: Option<Vec<RawAp>>,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::ParseError {
        line: e.line(),
        message: e.to_string(),
    }
}

fn require<T>(v: Option<T>, field: &str, ctx: &str) -> Result<T> {
    v.ok_or_else(|| Error::validation(field, format!("{ctx}: missing")))
}

fn positive(v: f64, field: &str, ctx: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::validation(
            field,
            format!("{ctx}: must be strictly positive, got {v}"),
        ))
    }
}

/// Parses and validates an environment document.
pub fn parse_environment(text: &str) -> Result<Environment> {
    let raw: RawEnvironment = serde_json::from_str(text).map_err(json_error)?;
    let dimension = match raw.dimension {
        None => Dimension::Three,
        Some(n) => Dimension::from_count(n)
            .ok_or_else(|| Error::validation("dimension", format!("must be 2 or 3, got {n}")))?,
    };
    let ss_threshold = match raw.ss_threshold_dbm {
        None => 0.0,
        Some(level) => dbm_to_mw(level).map_err(|_| Error::validation("ss_threshold_dbm", "must be finite"))?,
    };
    let receiver = match raw.receiver.and_then(|r| r.gain) {
        None => Receiver::default(),
        Some(g) => Receiver::new(positive(g, "gain", "receiver")?)?,
    };
    let raw_aps = require(raw.aps, "aps", "environment")?;
    if raw_aps.is_empty() {
        return Err(Error::validation("aps", "at least one access point is required"));
    }
    let mut seen = HashSet::new();
    let mut aps = Vec::with_capacity(raw_aps.len());
    for (i, a) in raw_aps.into_iter().enumerate() {
        let ctx = format!("aps[{i}]");
        let id = require(a.id, "id", &ctx)?;
        if id.is_empty() {
            return Err(Error::validation("id", format!("{ctx}: must not be empty")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::validation(
                "id",
                format!("{ctx}: duplicate access point id `{id}`"),
            ));
        }
        let ctx = format!("access point `{id}`");
        let coord = |v: Option<f64>, name: &str| -> Result<f64> {
            let v = require(v, name, &ctx)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::validation(name, format!("{ctx}: must be finite")))
            }
        };
        let position = Position::new(coord(a.x, "x")?, coord(a.y, "y")?, coord(a.z, "z")?);
        let level = require(a.tx_power_dbm, "tx_power_dbm", &ctx)?;
        let tx_power =
            dbm_to_mw(level).map_err(|_| Error::validation("tx_power_dbm", format!("{ctx}: must be finite")))?;
        let tx_gain = positive(require(a.tx_gain, "tx_gain", &ctx)?, "tx_gain", &ctx)?;
        let wavelength = positive(require(a.wavelength_m, "wavelength_m", &ctx)?, "wavelength_m", &ctx)?;
        aps.push(AccessPoint::new(id, position, tx_power, tx_gain, wavelength)?);
    }
    Environment::new(aps, receiver, dimension, ss_threshold)
}

pub fn load_environment(path: impl AsRef<Path>) -> Result<Environment> {
    parse_environment(&fs::read_to_string(path)?)
}

/// Serializes an environment back to its JSON document.
pub fn environment_to_json(env: &Environment) -> Result<String> {
    let raw = RawEnvironment {
        dimension: Some(env.dimension.count() as u8),
        ss_threshold_dbm: (env.ss_threshold > 0.0).then(|| 10.0 * env.ss_threshold.log10()),
        receiver: Some(RawReceiver {
            gain: Some(env.receiver.rx_gain),
        }),
        aps: Some(
            env.aps()
                .iter()
                .map(|a| RawAp {
                    id: Some(a.id.0.clone()),
                    x: Some(a.position.x),
                    y: Some(a.position.y),
                    z: Some(a.position.z),
                    tx_power_dbm: Some(10.0 * a.tx_power.log10()),
                    tx_gain: Some(a.tx_gain),
                    wavelength_m: Some(a.wavelength),
                })
                .collect(),
        ),
    };
    serde_json::to_string_pretty(&raw).map_err(|e| Error::Io(e.to_string()))
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let t: Trajectory = serde_json::from_str(text).map_err(json_error)?;
    t.validate()?;
    Ok(t)
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_trajectory(&fs::read_to_string(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::ParseError {
        line,
        message: e.to_string(),
    }
}

fn parse_level(s: &str, line: usize) -> Result<f64> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("-inf") {
        return Ok(0.0);
    }
    let level = parse_f64("rss_dbm", t, line)?;
    dbm_to_mw(level).map_err(|_| Error::ParseError {
        line,
        message: format!("`rss_dbm`: `{s}` is not a finite level"),
    })
}

/// Reads the long-format scan table, one row per (timestamp, AP).
///
/// Consecutive rows sharing a timestamp form one scan.
pub fn read_scans<R: Read>(reader: R) -> Result<Vec<RssScan>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let with_truth = match cols.as_slice() {
        ["timestamp", "ap_id", "rss_dbm"] => false,
        ["timestamp", "ap_id", "rss_dbm", "truth_x", "truth_y", "truth_z"] => true,
        _ => {
            return Err(Error::ParseError {
                line: 1,
                message: format!("unexpected header `{}`", cols.join(",")),
            })
        }
    };
    let mut scans: Vec<RssScan> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != cols.len() {
            return Err(Error::ParseError {
                line,
                message: format!("expected {} fields, got {}", cols.len(), rec.len()),
            });
        }
        let timestamp = parse_f64("timestamp", &rec[0], line)?;
        let id = ApId::new(&rec[1]);
        let power = parse_level(&rec[2], line)?;
        let truth = if with_truth && !rec[3].is_empty() {
            Some(Position::new(
                parse_f64("truth_x", &rec[3], line)?,
                parse_f64("truth_y", &rec[4], line)?,
                parse_f64("truth_z", &rec[5], line)?,
            ))
        } else {
            None
        };
        match scans.last_mut() {
            Some(s) if s.timestamp == timestamp => {
                s.readings.insert(id, power);
                if s.truth.is_none() {
                    s.truth = truth;
                }
            }
            _ => {
                let mut s = RssScan::new(timestamp).with_reading(id, power);
                s.truth = truth;
                scans.push(s);
            }
        }
    }
    Ok(scans)
}

pub fn load_scans(path: impl AsRef<Path>) -> Result<Vec<RssScan>> {
    read_scans(fs::File::open(path)?)
}

pub fn write_scans<W: Write>(writer: W, scans: &[RssScan]) -> Result<()> {
    let with_truth = scans.iter().any(|s| s.truth.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp", "ap_id", "rss_dbm"];
    if with_truth {
        header.extend(["truth_x", "truth_y", "truth_z"]);
    }
    w.write_record(&header).map_err(csv_error)?;
    for s in scans {
        for (id, &p) in &s.readings {
            let level = if p > 0.0 {
                fmt_f64(mw_to_dbm(p)?)
            } else {
                "-inf".to_owned()
            };
            let mut row = vec![fmt_f64(s.timestamp), id.0.clone(), level];
            if with_truth {
                match s.truth {
                    Some(t) => row.extend([fmt_f64(t.x), fmt_f64(t.y), fmt_f64(t.z)]),
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const REPORT_HEADER: [&str; 13] = [
    "time",
    "truth_x",
    "truth_y",
    "truth_z",
    "x",
    "y",
    "z",
    "error_m",
    "dop",
    "visible",
    "qualified",
    "classification",
    "converged",
];

pub fn write_report<W: Write>(writer: W, records: &[SampleRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record([
            fmt_f64(r.time),
            fmt_f64(r.truth.x),
            fmt_f64(r.truth.y),
            fmt_f64(r.truth.z),
            fmt_f64(r.estimate.x),
            fmt_f64(r.estimate.y),
            fmt_f64(r.estimate.z),
            fmt_f64(r.error_m),
            fmt_f64(r.dop),
            r.visible.to_string(),
            r.qualified.to_string(),
            r.classification.to_string(),
            r.converged.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report<R: Read>(reader: R) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(REPORT_HEADER.iter().copied()) {
        return Err(Error::ParseError {
            line: 1,
            message: format!("expected header `{}`", REPORT_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| parse_f64(REPORT_HEADER[i], &rec[i], line);
        let count = |i: usize| {
            rec[i].parse::<usize>().map_err(|_| Error::ParseError {
                line,
                message: format!("`{}`: `{}` is not a count", REPORT_HEADER[i], &rec[i]),
            })
        };
        let classification: Classification = rec[11].parse().map_err(|_| Error::ParseError {
            line,
            message: format!("`classification`: unknown value `{}`", &rec[11]),
        })?;
        let converged = rec[12].parse::<bool>().map_err(|_| Error::ParseError {
            line,
            message: format!("`converged`: `{}` is not a boolean", &rec[12]),
        })?;
        out.push(SampleRecord {
            time: num(0)?,
            truth: Position::new(num(1)?, num(2)?, num(3)?),
            estimate: Position::new(num(4)?, num(5)?, num(6)?),
            error_m: num(7)?,
            dop: num(8)?,
            visible: count(9)?,
            qualified: count(10)?,
            classification,
            converged,
        });
    }
    Ok(out)
}
