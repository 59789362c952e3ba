//! Minimal-pair evaluation: suites, pair scoring and per-checkpoint
//! performance vectors.

mod score;
mod suite;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use score::{decide, score_pair, score_sentence, word_count, NormPolicy, PairScore, SentenceLogprob};
pub use suite::{challenge_jsonl, load_suite, Challenge, ChallengeSuite, MinimalPair, SuiteFormat};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::lm::LanguageModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeAccuracy {
    pub uid: String,
    pub field: String,
    pub linguistics_term: String,
    pub accuracy: f64,
}

/// Per-challenge accuracies of one model state, sorted by uid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceVector {
    pub model_id: String,
    pub step: u64,
    pub dev_perplexity: Option<f64>,
    pub accuracies: Vec<ChallengeAccuracy>,
    /// Unweighted mean over challenges.
    pub mean_accuracy: f64,
}

impl PerformanceVector {
    pub fn new(model_id: &str, step: u64, dev_perplexity: Option<f64>, mut accuracies: Vec<ChallengeAccuracy>) -> Self {
        accuracies.sort_by(|a, b| a.uid.cmp(&b.uid));
        let mean_accuracy = if accuracies.is_empty() {
            0.0
        } else {
            accuracies.iter().map(|a| a.accuracy).sum::<f64>() / accuracies.len() as f64
        };
        PerformanceVector {
            model_id: model_id.to_string(),
            step,
            dev_perplexity,
            accuracies,
            mean_accuracy,
        }
    }

    pub fn get(&self, uid: &str) -> Option<f64> {
        self.accuracies
            .binary_search_by(|a| a.uid.as_str().cmp(uid))
            .ok()
            .map(|i| self.accuracies[i].accuracy)
    }

    pub fn values(&self) -> Vec<f64> {
        self.accuracies.iter().map(|a| a.accuracy).collect()
    }
}

/// Decision bits of one model state: per challenge uid a string of `0`/`1`
/// in pair order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionColumn {
    pub model_id: String,
    pub step: u64,
    pub decisions: BTreeMap<String, String>,
}

impl DecisionColumn {
    pub fn label(&self) -> String {
        format!("{}@{}", self.model_id, self.step)
    }
}

/// Items (pairs) by raters (models or checkpoints), entries 0/1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionMatrix {
    pub rows: Vec<(String, usize)>,
    pub columns: Vec<String>,
    /// Row-major.
    pub bits: Vec<u8>,
}

impl DecisionMatrix {
    pub fn new(rows: Vec<(String, usize)>, columns: Vec<String>, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != rows.len() * columns.len() {
            return Err(Error::InvalidArgument(format!(
                "{} bits for a {}x{} matrix",
                bits.len(),
                rows.len(),
                columns.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("decision entries must be 0 or 1".into()));
        }
        Ok(DecisionMatrix { rows, columns, bits })
    }

    /// Stacks columns that share the same challenges and pair counts.
    pub fn from_columns(columns: &[DecisionColumn]) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::InvalidArgument("no decision columns".into()))?;
        let rows: Vec<(String, usize)> = first
            .decisions
            .iter()
            .flat_map(|(uid, s)| (0..s.len()).map(move |i| (uid.clone(), i)))
            .collect();
        let mut bits = vec![0u8; rows.len() * columns.len()];
        for (j, col) in columns.iter().enumerate() {
            let flat: Vec<u8> = col
                .decisions
                .values()
                .flat_map(|s| s.bytes().map(|b| (b == b'1') as u8))
                .collect();
            let same_shape = col.decisions.len() == first.decisions.len()
                && col
                    .decisions
                    .iter()
                    .zip(&first.decisions)
                    .all(|((u, s), (v, t))| u == v && s.len() == t.len());
            if !same_shape {
                return Err(Error::InvalidArgument(format!(
                    "decision column {} does not match {}",
                    col.label(),
                    first.label()
                )));
            }
            for (i, b) in flat.into_iter().enumerate() {
                bits[i * columns.len() + j] = b;
            }
        }
        DecisionMatrix::new(rows, columns.iter().map(DecisionColumn::label).collect(), bits)
    }

    pub fn num_items(&self) -> usize {
        self.rows.len()
    }

    pub fn num_raters(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, item: usize, rater: usize) -> u8 {
        self.bits[item * self.columns.len() + rater]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub performance: PerformanceVector,
    pub decisions: DecisionColumn,
}

/// Scores every pair of `suite` under `lm`; with a dev stream the dev
/// perplexity is attached.
pub fn evaluate(
    lm: &dyn LanguageModel,
    model_id: &str,
    step: u64,
    suite: &ChallengeSuite,
    vocab: &Vocabulary,
    dev: Option<&[u32]>,
    norm: NormPolicy,
) -> Result<Evaluation> {
    let hash = vocab.hash();
    if lm.vocab_hash() != hash {
        return Err(Error::VocabMismatch {
            expected: hash,
            found: lm.vocab_hash().to_string(),
        });
    }
    let items: Vec<(usize, &MinimalPair)> = suite
        .challenges
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| c.pairs.iter().map(move |p| (ci, p)))
        .collect();
    let decisions: Vec<bool> = items
        .par_iter()
        .map(|(_, p)| score_pair(lm, p, vocab, norm).map(|s| s.decision))
        .collect::<Result<_>>()?;

    let mut bits: Vec<String> = vec![String::new(); suite.len()];
    for ((ci, _), d) in items.iter().zip(&decisions) {
        bits[*ci].push(if *d { '1' } else { '0' });
    }
    let accuracies = suite
        .challenges
        .iter()
        .zip(&bits)
        .map(|(c, b)| ChallengeAccuracy {
            uid: c.uid.clone(),
            field: c.field.clone(),
            linguistics_term: c.linguistics_term.clone(),
            accuracy: b.bytes().filter(|&x| x == b'1').count() as f64 / b.len() as f64,
        })
        .collect();
    let dev_perplexity = dev.map(|d| lm.perplexity(d)).transpose()?;
    Ok(Evaluation {
        performance: PerformanceVector::new(model_id, step, dev_perplexity, accuracies),
        decisions: DecisionColumn {
            model_id: model_id.to_string(),
            step,
            decisions: suite.challenges.iter().map(|c| c.uid.clone()).zip(bits).collect(),
        },
    })
}

pub const PERFORMANCE_HEADER: [&str; 7] = [
    "model_id",
    "step",
    "dev_perplexity",
    "challenge_uid",
    "field",
    "linguistics_term",
    "accuracy",
];

#[derive(Debug, Serialize, Deserialize)]
struct PerformanceRow {
    model_id: String,
    step: u64,
    dev_perplexity: Option<f64>,
    challenge_uid: String,
    field: String,
    linguistics_term: String,
    accuracy: f64,
}

pub fn performance_csv(vectors: &[PerformanceVector]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for v in vectors {
        for a in &v.accuracies {
            w.serialize(PerformanceRow {
                model_id: v.model_id.clone(),
                step: v.step,
                dev_perplexity: v.dev_perplexity,
                challenge_uid: a.uid.clone(),
                field: a.field.clone(),
                linguistics_term: a.linguistics_term.clone(),
                accuracy: a.accuracy,
            })
            .map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    if vectors.is_empty() {
        w.write_record(PERFORMANCE_HEADER).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_performance_csv(path: &Path, vectors: &[PerformanceVector]) -> Result<()> {
    write_atomic(path, &performance_csv(vectors)?)
}

/// Regroups rows by `(model_id, step)` in order of first appearance.
pub fn read_performance_csv(path: &Path) -> Result<Vec<PerformanceVector>> {
    let text = read_to_string(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64), (Option<f64>, Vec<ChallengeAccuracy>)> = BTreeMap::new();
    for (i, row) in r.deserialize::<PerformanceRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        let key = (row.model_id.clone(), row.step);
        let g = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (row.dev_perplexity, Vec::new())
        });
        g.1.push(ChallengeAccuracy {
            uid: row.challenge_uid,
            field: row.field,
            linguistics_term: row.linguistics_term,
            accuracy: row.accuracy,
        });
    }
    Ok(order
        .into_iter()
        .map(|k| {
            let (ppl, acc) = groups.remove(&k).expect("grouped");
            PerformanceVector::new(&k.0, k.1, ppl, acc)
        })
        .collect())
}

pub fn decisions_jsonl(columns: &[DecisionColumn]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for c in columns {
        serde_json::to_writer(&mut out, c)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_decisions_jsonl(path: &Path, columns: &[DecisionColumn]) -> Result<()> {
    write_atomic(path, &decisions_jsonl(columns)?)
}

pub fn read_decisions_jsonl(path: &Path) -> Result<Vec<DecisionColumn>> {
    let text = read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(step: u64, acc: &[(&str, f64)]) -> PerformanceVector {
        PerformanceVector::new(
            "m",
            step,
            if step == 0 { None } else { Some(12.5) },
            acc.iter()
                .map(|(u, a)| ChallengeAccuracy {
                    uid: u.to_string(),
                    field: "morphology".into(),
                    linguistics_term: "agreement, local".into(),
                    accuracy: *a,
                })
                .collect(),
        )
    }

    #[test]
    fn mean_is_unweighted_and_sorted() {
        let v = pv(1, &[("b", 1.0), ("a", 0.25), ("c", 0.5)]);
        assert_eq!(v.accuracies[0].uid, "a");
        assert!((v.mean_accuracy - 1.75 / 3.0).abs() < 1e-15);
        assert_eq!(v.get("c"), Some(0.5));
    }

    #[test]
    fn performance_csv_round_trip() {
        let vs = vec![pv(0, &[("a", 0.5), ("b", 0.125)]), pv(200, &[("a", 0.75), ("b", 1.0)])];
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("performance.csv");
        write_performance_csv(&p, &vs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("model_id,step,dev_perplexity,challenge_uid,field,linguistics_term,accuracy\n"));
        assert!(text.contains("m,0,,a,morphology,\"agreement, local\",0.5\n"), "{text}");
        assert_eq!(read_performance_csv(&p).unwrap(), vs);
    }

    #[test]
    fn decision_matrix_from_columns() {
        let col = |step, a: &str, b: &str| DecisionColumn {
            model_id: "m".into(),
            step,
            decisions: [("a".to_string(), a.to_string()), ("b".to_string(), b.to_string())].into(),
        };
        let cols = vec![col(1, "10", "011"), col(2, "11", "001")];
        let m = DecisionMatrix::from_columns(&cols).unwrap();
        assert_eq!(m.num_items(), 5);
        assert_eq!(m.columns, vec!["m@1", "m@2"]);
        assert_eq!(m.rows[2], ("b".to_string(), 0));
        let col0: Vec<u8> = (0..5).map(|i| m.get(i, 0)).collect();
        let col1: Vec<u8> = (0..5).map(|i| m.get(i, 1)).collect();
        assert_eq!(col0, vec![1, 0, 0, 1, 1]);
        assert_eq!(col1, vec![1, 1, 0, 0, 1]);
        assert!(DecisionMatrix::from_columns(&[col(1, "10", "011"), col(2, "1", "011")]).is_err());

        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("decisions.jsonl");
        write_decisions_jsonl(&p, &cols).unwrap();
        assert_eq!(read_decisions_jsonl(&p).unwrap(), cols);
    }
}
