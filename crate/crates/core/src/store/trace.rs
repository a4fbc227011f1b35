//! Head-trace and EPOF CSV files.

use std::io;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::epof::HeadSample;

/// Reads a `t,yaw,pitch,roll` trace. Timestamps must be non-decreasing and
/// every value finite.
pub fn read_trace(reader: impl io::Read) -> Result<Vec<HeadSample>, StoreError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "yaw", "pitch", "roll"] {
        return Err(StoreError::Invalid(format!(
            "trace header must be t,yaw,pitch,roll, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out: Vec<HeadSample> = Vec::new();
    for (i, row) in rdr.deserialize::<HeadSample>().enumerate() {
        let s = row?;
        let line = i + 2;
        if ![s.t, s.yaw, s.pitch, s.roll].iter().all(|v| v.is_finite()) {
            return Err(StoreError::Invalid(format!("trace line {line}: non-finite value")));
        }
        if let Some(prev) = out.last() {
            if s.t < prev.t {
                return Err(StoreError::Invalid(format!(
                    "trace line {line}: time {} goes backwards from {}",
                    s.t, prev.t
                )));
            }
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_trace(writer: impl io::Write, trace: &[HeadSample]) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(writer);
    for s in trace {
        w.serialize(s)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row of an EPOF replay file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpofRow {
    pub frame_idx: usize,
    pub t: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub epof: f64,
    pub opacity: f64,
}

pub fn write_epof_csv(writer: impl io::Write, rows: &[EpofRow]) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_epof_csv(reader: impl io::Read) -> Result<Vec<EpofRow>, StoreError> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(StoreError::from)).collect()
}
