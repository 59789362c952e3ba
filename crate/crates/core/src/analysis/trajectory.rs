use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::stats::{correlate, CorrelationMethod};
use crate::error::{Error, Result};
use crate::eval::PerformanceVector;
use crate::io::read_to_string;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChallengeLabel {
    pub uid: String,
    pub linguistics_term: String,
    pub field: String,
}

/// Checkpoints x challenges accuracies of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMatrix {
    pub model_id: String,
    pub vocab_hash: String,
    pub steps: Vec<u64>,
    pub perplexities: Vec<f64>,
    pub challenges: Vec<ChallengeLabel>,
    /// One row per step.
    pub values: Vec<Vec<f64>>,
}

impl TrajectoryMatrix {
    pub fn new(
        model_id: &str,
        vocab_hash: &str,
        steps: Vec<u64>,
        perplexities: Vec<f64>,
        challenges: Vec<ChallengeLabel>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("trajectory {model_id}: {m}")));
        if steps.is_empty() {
            return bad("no checkpoints".into());
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return bad("steps must increase".into());
        }
        if perplexities.len() != steps.len() || values.len() != steps.len() {
            return bad("row count differs from step count".into());
        }
        if perplexities.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return bad("perplexities must be positive".into());
        }
        if values.iter().any(|r| r.len() != challenges.len()) {
            return bad("row width differs from challenge count".into());
        }
        Ok(TrajectoryMatrix {
            model_id: model_id.to_string(),
            vocab_hash: vocab_hash.to_string(),
            steps,
            perplexities,
            challenges,
            values,
        })
    }

    /// Stacks the checkpoints of one model, ordered by step.
    pub fn from_performance(vectors: &[PerformanceVector], vocab_hash: &str) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::InvalidArgument("no performance vectors".into()))?;
        let mut sorted: Vec<&PerformanceVector> = vectors.iter().collect();
        sorted.sort_by_key(|v| v.step);
        let challenges: Vec<ChallengeLabel> = first
            .accuracies
            .iter()
            .map(|a| ChallengeLabel {
                uid: a.uid.clone(),
                linguistics_term: a.linguistics_term.clone(),
                field: a.field.clone(),
            })
            .collect();
        let mut perplexities = Vec::new();
        let mut values = Vec::new();
        for v in &sorted {
            if v.model_id != first.model_id {
                return Err(Error::InvalidArgument(format!(
                    "mixed models {} and {}",
                    first.model_id, v.model_id
                )));
            }
            let same = v.accuracies.len() == challenges.len()
                && v.accuracies.iter().zip(&challenges).all(|(a, c)| a.uid == c.uid);
            if !same {
                return Err(Error::InvalidArgument(format!(
                    "{} step {}: challenge set differs",
                    v.model_id, v.step
                )));
            }
            perplexities.push(v.dev_perplexity.ok_or_else(|| {
                Error::InvalidArgument(format!("{} step {}: no dev perplexity", v.model_id, v.step))
            })?);
            values.push(v.values());
        }
        TrajectoryMatrix::new(
            &first.model_id,
            vocab_hash,
            sorted.iter().map(|v| v.step).collect(),
            perplexities,
            challenges,
            values,
        )
    }

    pub fn uids(&self) -> Vec<&str> {
        self.challenges.iter().map(|c| c.uid.as_str()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    TrainedHere,
    Ingested,
    Metric,
}

/// A fixed accuracy-shaped vector to compare trajectories against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceVector {
    pub label: String,
    /// Sorted by uid.
    pub values: Vec<(String, f64)>,
    pub source: ReferenceSource,
}

impl ReferenceVector {
    pub fn new(label: &str, values: impl IntoIterator<Item = (String, f64)>, source: ReferenceSource) -> Result<Self> {
        let map: BTreeMap<String, f64> = values.into_iter().collect();
        if map.is_empty() {
            return Err(Error::InvalidArgument(format!("reference {label} is empty")));
        }
        Ok(ReferenceVector {
            label: label.to_string(),
            values: map.into_iter().collect(),
            source,
        })
    }

    pub fn from_performance(label: &str, v: &PerformanceVector) -> Result<Self> {
        ReferenceVector::new(
            label,
            v.accuracies.iter().map(|a| (a.uid.clone(), a.accuracy)),
            ReferenceSource::TrainedHere,
        )
    }

    pub fn get(&self, uid: &str) -> Option<f64> {
        self.values
            .binary_search_by(|(u, _)| u.as_str().cmp(uid))
            .ok()
            .map(|i| self.values[i].1)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|v| v.1).sum::<f64>() / self.values.len() as f64
    }

    /// `challenge_uid,accuracy` rows under an optional `# label: NAME`
    /// first line; without it the file stem is the label.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let (label, body, offset) = match text.split_once('\n') {
            Some((first, rest)) if first.starts_with('#') => {
                let l = first.trim_start_matches('#').trim();
                let l = l.strip_prefix("label:").unwrap_or(l).trim();
                (l.to_string(), rest, 1)
            }
            _ => (
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                text.as_str(),
                0,
            ),
        };
        #[derive(Deserialize)]
        struct Row {
            challenge_uid: String,
            accuracy: f64,
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let mut values = Vec::new();
        for (i, row) in r.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2 + offset,
                message: e.to_string(),
            })?;
            values.push((row.challenge_uid, row.accuracy));
        }
        ReferenceVector::new(&label, values, ReferenceSource::Ingested)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# label: {}\nchallenge_uid,accuracy\n", self.label);
        for (u, v) in &self.values {
            s.push_str(&format!("{u},{v}\n"));
        }
        s
    }
}

/// Uids present in both, sorted; logs what was dropped.
pub fn join_uids<'a>(left: &[&'a str], reference: &ReferenceVector, what: &str) -> Result<Vec<&'a str>> {
    let right: BTreeSet<&str> = reference.values.iter().map(|(u, _)| u.as_str()).collect();
    let mut joined: Vec<&str> = left.iter().copied().filter(|u| right.contains(u)).collect();
    joined.sort_unstable();
    let dropped = left.len() + right.len() - 2 * joined.len();
    if dropped > 0 {
        warn!(
            "{what} vs {}: {dropped} challenge(s) without a match dropped",
            reference.label
        );
    }
    if joined.is_empty() {
        return Err(Error::EmptyJoin);
    }
    Ok(joined)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    /// None when the checkpoint's accuracies are constant.
    pub r: Option<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub model_id: String,
    pub reference: String,
    pub method: CorrelationMethod,
    pub reference_mean: f64,
    pub points: Vec<CurvePoint>,
    /// Earliest step with the largest r.
    pub argmax_step: Option<u64>,
    /// Earliest step whose mean accuracy is closest to the reference mean.
    pub matched_step: u64,
}

/// Correlation of every checkpoint with `reference`, over the challenges
/// both share. Means are taken over the same joined set.
pub fn correlation_curve(
    traj: &TrajectoryMatrix,
    reference: &ReferenceVector,
    method: CorrelationMethod,
) -> Result<CorrelationCurve> {
    let uids = traj.uids();
    let joined = join_uids(&uids, reference, &traj.model_id)?;
    let cols: Vec<usize> = joined
        .iter()
        .map(|u| uids.iter().position(|x| x == u).expect("joined uid"))
        .collect();
    let ref_vals: Vec<f64> = joined.iter().map(|u| reference.get(u).expect("joined uid")).collect();
    let reference_mean = ref_vals.iter().sum::<f64>() / ref_vals.len() as f64;

    let mut points = Vec::with_capacity(traj.steps.len());
    for (row, &step) in traj.values.iter().zip(&traj.steps) {
        let vals: Vec<f64> = cols.iter().map(|&j| row[j]).collect();
        let mean_accuracy = vals.iter().sum::<f64>() / vals.len() as f64;
        let r = if vals.iter().all(|&v| v == vals[0]) {
            None
        } else {
            Some(correlate(&vals, &ref_vals, method)?)
        };
        points.push(CurvePoint { step, r, mean_accuracy });
    }
    if ref_vals.iter().all(|&v| v == ref_vals[0]) {
        return Err(Error::ZeroVariance);
    }

    let mut argmax: Option<(u64, f64)> = None;
    for p in &points {
        if let Some(r) = p.r {
            if argmax.is_none_or(|(_, best)| r > best) {
                argmax = Some((p.step, r));
            }
        }
    }
    let mut matched = (points[0].step, f64::INFINITY);
    for p in &points {
        let gap = (p.mean_accuracy - reference_mean).abs();
        if gap < matched.1 {
            matched = (p.step, gap);
        }
    }
    Ok(CorrelationCurve {
        model_id: traj.model_id.clone(),
        reference: reference.label.clone(),
        method,
        reference_mean,
        points,
        argmax_step: argmax.map(|a| a.0),
        matched_step: matched.0,
    })
}

/// Pairs every checkpoint of the shorter trajectory (`a` on equal length)
/// with the other's checkpoint of nearest log perplexity, earlier step on
/// ties. Pairs are always `(step_a, step_b)`.
pub fn align_by_perplexity(a: &TrajectoryMatrix, b: &TrajectoryMatrix) -> Result<Vec<(u64, u64)>> {
    if a.vocab_hash != b.vocab_hash {
        return Err(Error::VocabMismatch {
            expected: a.vocab_hash.clone(),
            found: b.vocab_hash.clone(),
        });
    }
    let swap = b.steps.len() < a.steps.len();
    let (short, long) = if swap { (b, a) } else { (a, b) };
    let long_logs: Vec<f64> = long.perplexities.iter().map(|p| p.ln()).collect();
    let mut out = Vec::with_capacity(short.steps.len());
    for (&s, p) in short.steps.iter().zip(&short.perplexities) {
        let lp = p.ln();
        let mut best = (0, f64::INFINITY);
        for (j, l) in long_logs.iter().enumerate() {
            let d = (l - lp).abs();
            if d < best.1 {
                best = (j, d);
            }
        }
        let t = long.steps[best.0];
        out.push(if swap { (t, s) } else { (s, t) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<ChallengeLabel> {
        (0..n)
            .map(|i| ChallengeLabel {
                uid: format!("c{i}"),
                linguistics_term: "t".into(),
                field: "f".into(),
            })
            .collect()
    }

    fn traj(ppl: &[f64], hash: &str) -> TrajectoryMatrix {
        let n = ppl.len();
        TrajectoryMatrix::new(
            "m",
            hash,
            (1..=n as u64).map(|s| s * 100).collect(),
            ppl.to_vec(),
            labels(3),
            vec![vec![0.5, 0.6, 0.7]; n],
        )
        .unwrap()
    }

    #[test]
    fn perplexity_alignment_examples() {
        let a = traj(&[10.0, 5.0, 2.0], "h");
        let b = traj(&[9.0, 4.8, 2.2], "h");
        assert_eq!(align_by_perplexity(&a, &b).unwrap(), vec![(100, 100), (200, 200), (300, 300)]);
        let far_a = traj(&[100.0, 90.0], "h");
        let far_b = traj(&[3.0, 2.0], "h");
        assert_eq!(align_by_perplexity(&far_a, &far_b).unwrap(), vec![(100, 100), (200, 100)]);
        assert_eq!(align_by_perplexity(&a, &a).unwrap(), vec![(100, 100), (200, 200), (300, 300)]);
        assert!(matches!(
            align_by_perplexity(&a, &traj(&[3.0], "other")),
            Err(Error::VocabMismatch { .. })
        ));
    }

    #[test]
    fn shorter_side_drives_alignment() {
        let a = traj(&[10.0, 6.0, 4.0, 2.0], "h");
        let b = traj(&[5.0, 2.5], "h");
        // each b checkpoint picks its nearest a checkpoint
        assert_eq!(align_by_perplexity(&a, &b).unwrap(), vec![(200, 100), (400, 200)]);
    }

    #[test]
    fn log_space_tie_goes_to_earlier_step() {
        let a = traj(&[4.0], "h");
        let b = traj(&[8.0, 4.0, 4.0], "h");
        assert_eq!(align_by_perplexity(&a, &b).unwrap(), vec![(100, 200)]);
    }

    #[test]
    fn curve_against_own_final_row() {
        let t = TrajectoryMatrix::new(
            "m",
            "h",
            vec![0, 10, 20],
            vec![9.0, 5.0, 4.0],
            labels(4),
            vec![vec![0.5; 4], vec![0.6, 0.4, 0.7, 0.5], vec![0.9, 0.3, 0.8, 0.6]],
        )
        .unwrap();
        let last = t.values[2].clone();
        let reference = ReferenceVector::new(
            "self",
            t.uids().into_iter().map(String::from).zip(last),
            ReferenceSource::TrainedHere,
        )
        .unwrap();
        let c = correlation_curve(&t, &reference, CorrelationMethod::Pearson).unwrap();
        assert_eq!(c.points[0].r, None);
        assert_eq!(c.argmax_step, Some(20));
        assert!((c.points[2].r.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c.matched_step, 20);
    }

    #[test]
    fn join_drops_unmatched_and_fails_when_empty() {
        let t = traj(&[5.0], "h");
        let other = ReferenceVector::new("x", [("zz".to_string(), 0.5)], ReferenceSource::Ingested).unwrap();
        assert!(matches!(
            correlation_curve(&t, &other, CorrelationMethod::Pearson),
            Err(Error::EmptyJoin)
        ));
    }

    #[test]
    fn reference_csv() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("human.csv");
        std::fs::write(&p, "# label: human\nchallenge_uid,accuracy\nb,0.9\na,0.75\n").unwrap();
        let r = ReferenceVector::load_csv(&p).unwrap();
        assert_eq!(r.label, "human");
        assert_eq!(r.values, vec![("a".to_string(), 0.75), ("b".to_string(), 0.9)]);
        std::fs::write(&p, r.to_csv()).unwrap();
        assert_eq!(ReferenceVector::load_csv(&p).unwrap(), r);
        let q = d.path().join("gpt2_large.csv");
        std::fs::write(&q, "challenge_uid,accuracy\na,oops\n").unwrap();
        let err = ReferenceVector::load_csv(&q).unwrap_err().to_string();
        assert!(err.contains("gpt2_large.csv:2:"), "{err}");
    }
}
