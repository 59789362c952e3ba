use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::cluster::ClusterAssignment;
use super::trajectory::ChallengeLabel;
use crate::error::{Error, Result};
use crate::io::read_to_string;

pub const CORRELATIONS_HEADER: [&str; 5] = ["method", "label_a", "label_b", "step", "r"];
pub const CLUSTERS_HEADER: [&str; 4] = ["challenge_uid", "field", "linguistics_term", "cluster_id"];

/// One row of `correlations.csv`. `step` is empty for whole-run values and
/// `r` is empty where the correlation is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub method: String,
    pub label_a: String,
    pub label_b: String,
    pub step: Option<u64>,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub challenge_uid: String,
    pub field: String,
    pub linguistics_term: String,
    pub cluster_id: usize,
}

/// Serializes rows under a fixed header, also when there are none.
pub fn to_csv<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn from_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_to_string(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn correlations_csv(rows: &[CorrelationRow]) -> Result<Vec<u8>> {
    to_csv(&CORRELATIONS_HEADER, rows)
}

pub fn cluster_rows(assignment: &ClusterAssignment, labels: &[ChallengeLabel]) -> Result<Vec<ClusterRow>> {
    assignment
        .assignment
        .iter()
        .map(|(uid, c)| {
            let l = labels
                .iter()
                .find(|l| &l.uid == uid)
                .ok_or_else(|| Error::InvalidArgument(format!("no label for {uid}")))?;
            Ok(ClusterRow {
                challenge_uid: uid.clone(),
                field: l.field.clone(),
                linguistics_term: l.linguistics_term.clone(),
                cluster_id: *c,
            })
        })
        .collect()
}

pub fn clusters_csv(rows: &[ClusterRow]) -> Result<Vec<u8>> {
    to_csv(&CLUSTERS_HEADER, rows)
}
