//! Optical-flow-normalized sickness questionnaire scores.
//!
//! Each raw score `X` of participant `i` becomes
//! `X * MS_i / (OF_i * sum_{j in group(i)} MS_j) * 1000`, where `MS` is the
//! susceptibility score and `OF` the participant's optical flow exposure.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epof::EpofSample;

/// Default minimum exposure for a session to be analyzed.
pub const DEFAULT_MIN_OF: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum SsqError {
    #[error("participant {id}: {field} must be positive, got {value}")]
    NonPositive { id: String, field: &'static str, value: f64 },
    #[error("participant {id}: {field} must be non-negative, got {value}")]
    Negative { id: String, field: &'static str, value: f64 },
    #[error("group {0} has no participants")]
    EmptyGroup(Group),
    #[error("unknown group {0:?}, expected GR or NR")]
    UnknownGroup(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    /// With granulated rest frames.
    GR,
    /// No rest frames.
    NR,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::GR => "GR",
            Group::NR => "NR",
        })
    }
}

impl FromStr for Group {
    type Err = SsqError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "GR" => Ok(Group::GR),
            "NR" => Ok(Group::NR),
            other => Err(SsqError::UnknownGroup(other.to_string())),
        }
    }
}

/// One participant row: `id,group,K,N,O,D,MS,OF`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    pub group: Group,
    #[serde(rename = "K")]
    pub total: f64,
    #[serde(rename = "N")]
    pub nausea: f64,
    #[serde(rename = "O")]
    pub oculomotor: f64,
    #[serde(rename = "D")]
    pub disorientation: f64,
    #[serde(rename = "MS")]
    pub mssq: f64,
    #[serde(rename = "OF")]
    pub optical_flow: f64,
}

impl ParticipantRecord {
    fn validate(&self) -> Result<(), SsqError> {
        for (field, value) in [("MS", self.mssq), ("OF", self.optical_flow)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SsqError::NonPositive {
                    id: self.id.clone(),
                    field,
                    value,
                });
            }
        }
        for (field, value) in [
            ("K", self.total),
            ("N", self.nausea),
            ("O", self.oculomotor),
            ("D", self.disorientation),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(SsqError::Negative {
                    id: self.id.clone(),
                    field,
                    value,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedScores {
    #[serde(rename = "K_OF")]
    pub total: f64,
    #[serde(rename = "N_OF")]
    pub nausea: f64,
    #[serde(rename = "O_OF")]
    pub oculomotor: f64,
    #[serde(rename = "D_OF")]
    pub disorientation: f64,
}

/// Transformed scores, index-aligned with `records`. MS is summed per group
/// over the records given.
pub fn transform_scores(records: &[ParticipantRecord]) -> Result<Vec<TransformedScores>, SsqError> {
    let mut ms_sum: BTreeMap<Group, f64> = BTreeMap::new();
    for r in records {
        r.validate()?;
        *ms_sum.entry(r.group).or_default() += r.mssq;
    }
    Ok(records
        .iter()
        .map(|r| {
            let scale = r.mssq / (r.optical_flow * ms_sum[&r.group]) * 1000.0;
            TransformedScores {
                total: r.total * scale,
                nausea: r.nausea * scale,
                oculomotor: r.oculomotor * scale,
                disorientation: r.disorientation * scale,
            }
        })
        .collect())
}

/// Like [`transform_scores`], but requires each of `groups` to be present.
pub fn transform_groups(records: &[ParticipantRecord], groups: &[Group]) -> Result<Vec<TransformedScores>, SsqError> {
    if let Some(g) = groups.iter().find(|g| !records.iter().any(|r| r.group == **g)) {
        return Err(SsqError::EmptyGroup(*g));
    }
    transform_scores(records)
}

/// Splits records into those with `OF >= min_of` and the rest.
pub fn exclusion_filter(records: &[ParticipantRecord], min_of: f64) -> (Vec<ParticipantRecord>, Vec<ParticipantRecord>) {
    records.iter().cloned().partition(|r| r.optical_flow >= min_of)
}

/// Per-session scalar the scores are normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    /// Sum of per-frame EPOF over the session.
    #[default]
    Sum,
    Mean,
}

pub fn session_exposure(samples: &[EpofSample], mode: Exposure) -> f64 {
    let sum: f64 = samples.iter().map(|s| s.epof).sum();
    match mode {
        Exposure::Sum => sum,
        Exposure::Mean if samples.is_empty() => 0.0,
        Exposure::Mean => sum / samples.len() as f64,
    }
}

pub fn read_participants(reader: impl io::Read) -> Result<Vec<ParticipantRecord>, SsqError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(SsqError::from)).collect()
}

/// Writes the input columns followed by `K_OF,N_OF,O_OF,D_OF`.
pub fn write_transformed(
    writer: impl io::Write,
    records: &[ParticipantRecord],
    scores: &[TransformedScores],
) -> Result<(), SsqError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "group", "K", "N", "O", "D", "MS", "OF", "K_OF", "N_OF", "O_OF", "D_OF"])?;
    for (r, s) in records.iter().zip(scores) {
        w.write_record([
            r.id.clone(),
            r.group.to_string(),
            r.total.to_string(),
            r.nausea.to_string(),
            r.oculomotor.to_string(),
            r.disorientation.to_string(),
            r.mssq.to_string(),
            r.optical_flow.to_string(),
            s.total.to_string(),
            s.nausea.to_string(),
            s.oculomotor.to_string(),
            s.disorientation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
