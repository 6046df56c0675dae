//! Trajectory CSV: header `id,timestamp,lat,lon`, one row per state, rows of
//! one id contiguous and time-sorted. Timestamps are epoch seconds or
//! ISO-8601 and are detected per field.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use thiserror::Error;

use crate::trajectory::{TimedState, Trajectory, TrajectoryError};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {source}")]
    Trajectory { line: u64, source: TrajectoryError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

const HEADER: [&str; 4] = ["id", "timestamp", "lat", "lon"];

/// Epoch seconds from an integer, decimal or ISO-8601 field.
pub fn parse_timestamp(field: &str) -> Option<f64> {
    let s = field.trim();
    if let Ok(i) = s.parse::<i64>() {
        return Some(i as f64);
    }
    if let Ok(f) = s.parse::<f64>() {
        return f.is_finite().then_some(f);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let utc = dt.and_utc();
            return Some(utc.timestamp() as f64 + utc.timestamp_subsec_nanos() as f64 * 1e-9);
        }
    }
    None
}

/// Parse trajectories from any reader.
pub fn read_trajectories<R: Read>(reader: R) -> Result<Vec<Trajectory>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    // a zero-byte file holds no trajectories rather than a bad header
    if header.is_empty() {
        return Ok(Vec::new());
    }
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(CsvError::Parse { line: 1, message: format!("expected header {}", HEADER.join(",")) });
    }
    let mut out: Vec<Trajectory> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut current: Option<(String, Vec<TimedState>, u64)> = None;

    let finish = |cur: Option<(String, Vec<TimedState>, u64)>, out: &mut Vec<Trajectory>| -> Result<(), CsvError> {
        if let Some((id, states, line)) = cur {
            let t = Trajectory::new(id, states).map_err(|source| CsvError::Trajectory { line, source })?;
            out.push(t);
        }
        Ok(())
    };

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| CsvError::Parse { line, message };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", rec.len())));
        }
        let id = rec[0].to_string();
        let t = parse_timestamp(&rec[1]).ok_or_else(|| bad(format!("unrecognized timestamp {:?}", &rec[1])))?;
        let lat: f64 = rec[2].parse().map_err(|_| bad(format!("bad latitude {:?}", &rec[2])))?;
        let lon: f64 = rec[3].parse().map_err(|_| bad(format!("bad longitude {:?}", &rec[3])))?;
        let state = TimedState::new(t, lat, lon);
        match &mut current {
            Some((cur_id, states, _)) if *cur_id == id => states.push(state),
            _ => {
                if !seen.insert(id.clone()) {
                    return Err(bad(format!("rows for id {id:?} are not contiguous")));
                }
                finish(current.take(), &mut out)?;
                current = Some((id, vec![state], line));
            }
        }
    }
    finish(current, &mut out)?;
    Ok(out)
}

pub fn read_trajectories_path(path: &Path) -> Result<Vec<Trajectory>, CsvError> {
    let f = std::fs::File::open(path).map_err(|source| CsvError::Io { path: path.display().to_string(), source })?;
    read_trajectories(std::io::BufReader::new(f))
}

/// Write trajectories with epoch-second timestamps. Floats use the shortest
/// representation that round-trips.
pub fn write_trajectories<W: Write>(writer: W, trajs: &[Trajectory]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for t in trajs {
        for s in &t.states {
            w.write_record([t.id.as_str(), &s.t.to_string(), &s.pos.lat.to_string(), &s.pos.lon.to_string()])?;
        }
    }
    w.flush().map_err(|source| CsvError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn write_trajectories_path(path: &Path, trajs: &[Trajectory]) -> Result<(), CsvError> {
    let f = std::fs::File::create(path).map_err(|source| CsvError::Io { path: path.display().to_string(), source })?;
    write_trajectories(std::io::BufWriter::new(f), trajs)
}
