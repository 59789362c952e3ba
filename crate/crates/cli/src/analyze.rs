//! Analysis over evaluation outputs. Everything is derived from the
//! performance vectors and decision columns alone:
//!
//! * a model id of the form `ngram-N` is a fixed reference vector;
//! * every other model id is a trajectory, and ids that differ only in a
//!   trailing `-sN` are seeds of one model.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use trajlab::analysis::{
    align_by_perplexity, cluster_rows, cluster_trajectories, correlate, correlation_curve, fleiss_kappa, join_uids,
    metric_vector, to_csv, ClusterRow, CorrelationMethod, CorrelationRow, Metric, ReferenceVector, TrajectoryMatrix,
    CLUSTERS_HEADER, CORRELATIONS_HEADER,
};
use trajlab::error::{Error, Result};
use trajlab::eval::{ChallengeSuite, DecisionColumn, DecisionMatrix, PerformanceVector};
use trajlab::io::write_atomic;

use crate::manifest::{AnalysisSpec, MetricName};

pub const CORRELATIONS_FILE: &str = "correlations.csv";
pub const PEAKS_FILE: &str = "curve_peaks.csv";
pub const KAPPA_FILE: &str = "kappa.csv";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const ALIGNMENT_FILE: &str = "alignment.csv";

pub const PEAKS_HEADER: [&str; 8] = [
    "model_id",
    "reference",
    "method",
    "reference_mean",
    "argmax_step",
    "max_r",
    "matched_step",
    "matched_r",
];
pub const KAPPA_HEADER: [&str; 4] = ["model_group", "step", "raters", "kappa"];
pub const ALIGNMENT_HEADER: [&str; 5] = ["model_a", "step_a", "model_b", "step_b", "r"];

/// Where a trajectory's correlation with one reference peaks, and where its
/// mean accuracy is closest to the reference's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub model_id: String,
    pub reference: String,
    pub method: String,
    pub reference_mean: f64,
    pub argmax_step: Option<u64>,
    pub max_r: Option<f64>,
    pub matched_step: u64,
    pub matched_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub model_group: String,
    pub step: u64,
    pub raters: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub model_a: String,
    pub step_a: u64,
    pub model_b: String,
    pub step_b: u64,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisOutput {
    pub correlations: Vec<CorrelationRow>,
    pub peaks: Vec<PeakRow>,
    pub kappa: Option<Vec<KappaRow>>,
    pub clusters: Option<Vec<ClusterRow>>,
    pub alignment: Option<Vec<AlignmentRow>>,
}

pub fn is_reference_id(model_id: &str) -> bool {
    model_id
        .strip_prefix("ngram-")
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// `tiny-s3` -> `tiny`; ids without a seed suffix are their own group.
pub fn model_group(model_id: &str) -> &str {
    match model_id.rsplit_once("-s") {
        Some((g, s)) if !g.is_empty() && !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) => g,
        _ => model_id,
    }
}

/// Pearson or Spearman, `None` when either side is constant.
fn r_or_none(x: &[f64], y: &[f64], method: CorrelationMethod) -> Result<Option<f64>> {
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if x.is_empty() || constant(x) || constant(y) {
        return Ok(None);
    }
    correlate(x, y, method).map(Some)
}

pub struct Split {
    pub trajectories: Vec<TrajectoryMatrix>,
    pub references: Vec<ReferenceVector>,
}

/// Separates n-gram reference vectors from trajectories, each trajectory
/// ordered by step and the list ordered by model id.
pub fn split_performance(perf: &[PerformanceVector], vocab_hash: &str) -> Result<Split> {
    let mut by_model: BTreeMap<&str, Vec<PerformanceVector>> = BTreeMap::new();
    for v in perf {
        by_model.entry(&v.model_id).or_default().push(v.clone());
    }
    let mut trajectories = Vec::new();
    let mut ngrams = Vec::new();
    for (id, vs) in by_model {
        if is_reference_id(id) {
            if vs.len() != 1 {
                return Err(Error::InvalidArgument(format!("reference {id} has {} rows", vs.len())));
            }
            let order: usize = id["ngram-".len()..].parse().unwrap_or(usize::MAX);
            ngrams.push((order, ReferenceVector::from_performance(id, &vs[0])?));
        } else {
            trajectories.push(TrajectoryMatrix::from_performance(&vs, vocab_hash)?);
        }
    }
    ngrams.sort_by_key(|(n, _)| *n);
    Ok(Split {
        trajectories,
        references: ngrams.into_iter().map(|(_, r)| r).collect(),
    })
}

/// Metric and ingested references, after the trained ones.
pub fn extra_references(spec: &AnalysisSpec, suite: Option<&ChallengeSuite>) -> Result<Vec<ReferenceVector>> {
    let mut out = Vec::new();
    for m in &spec.metrics {
        let suite = suite.ok_or_else(|| Error::InvalidArgument("metric references need the suite".into()))?;
        let metric = match m {
            MetricName::SentenceLength => Metric::SentenceLength,
            MetricName::AnnotatedDepth => Metric::AnnotatedDepth,
        };
        out.push(metric_vector(suite, &metric)?);
    }
    for p in &spec.references {
        out.push(ReferenceVector::load_csv(p)?);
    }
    Ok(out)
}

fn row_at(t: &TrajectoryMatrix, step: u64) -> Option<&[f64]> {
    t.steps.iter().position(|&s| s == step).map(|i| t.values[i].as_slice())
}

/// Values of `row` at the uids in `want`, given the matrix's uid order.
fn pick(uids: &[&str], row: &[f64], want: &[&str]) -> Vec<f64> {
    want.iter()
        .map(|u| row[uids.iter().position(|x| x == u).expect("joined uid")])
        .collect()
}

fn common_steps(ts: &[&TrajectoryMatrix]) -> Vec<u64> {
    ts[0]
        .steps
        .iter()
        .copied()
        .filter(|s| ts.iter().all(|t| t.steps.contains(s)))
        .collect()
}

fn groups(trajectories: &[TrajectoryMatrix]) -> BTreeMap<&str, Vec<&TrajectoryMatrix>> {
    let mut g: BTreeMap<&str, Vec<&TrajectoryMatrix>> = BTreeMap::new();
    for t in trajectories {
        g.entry(model_group(&t.model_id)).or_default().push(t);
    }
    g
}

pub fn analyze(
    perf: &[PerformanceVector],
    decisions: &[DecisionColumn],
    vocab_hash: &str,
    extra: Vec<ReferenceVector>,
    spec: &AnalysisSpec,
) -> Result<AnalysisOutput> {
    let Split {
        trajectories,
        mut references,
    } = split_performance(perf, vocab_hash)?;
    references.extend(extra);
    let mut labels = std::collections::BTreeSet::new();
    for r in &references {
        if !labels.insert(r.label.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate reference label {}", r.label)));
        }
    }
    let method = spec.method;
    let mut out = AnalysisOutput::default();

    // seeds of one model against each other, checkpoint by checkpoint
    for members in groups(&trajectories).values().filter(|m| m.len() > 1) {
        for step in common_steps(members) {
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    let (a, b) = (members[i], members[j]);
                    let (ua, ub) = (a.uids(), b.uids());
                    let shared: Vec<&str> = ua.iter().copied().filter(|u| ub.contains(u)).collect();
                    let x = pick(&ua, row_at(a, step).expect("common step"), &shared);
                    let y = pick(&ub, row_at(b, step).expect("common step"), &shared);
                    out.correlations.push(CorrelationRow {
                        method: method.name().into(),
                        label_a: a.model_id.clone(),
                        label_b: b.model_id.clone(),
                        step: Some(step),
                        r: r_or_none(&x, &y, method)?,
                    });
                }
            }
        }
    }

    for t in &trajectories {
        for r in &references {
            let curve = match correlation_curve(t, r, method) {
                Ok(c) => c,
                Err(Error::ZeroVariance) => {
                    warn!("reference {} is constant; skipped", r.label);
                    continue;
                }
                Err(e) => return Err(e),
            };
            for p in &curve.points {
                out.correlations.push(CorrelationRow {
                    method: method.name().into(),
                    label_a: t.model_id.clone(),
                    label_b: r.label.clone(),
                    step: Some(p.step),
                    r: p.r,
                });
            }
            let r_at = |s: u64| curve.points.iter().find(|p| p.step == s).and_then(|p| p.r);
            out.peaks.push(PeakRow {
                model_id: t.model_id.clone(),
                reference: r.label.clone(),
                method: method.name().into(),
                reference_mean: curve.reference_mean,
                argmax_step: curve.argmax_step,
                max_r: curve.argmax_step.and_then(r_at),
                matched_step: curve.matched_step,
                matched_r: r_at(curve.matched_step),
            });
        }
    }

    for i in 0..references.len() {
        for j in i + 1..references.len() {
            let (a, b) = (&references[i], &references[j]);
            let ua: Vec<&str> = a.values.iter().map(|(u, _)| u.as_str()).collect();
            let shared = join_uids(&ua, b, &a.label)?;
            let x: Vec<f64> = shared.iter().map(|u| a.get(u).expect("joined")).collect();
            let y: Vec<f64> = shared.iter().map(|u| b.get(u).expect("joined")).collect();
            out.correlations.push(CorrelationRow {
                method: method.name().into(),
                label_a: a.label.clone(),
                label_b: b.label.clone(),
                step: None,
                r: r_or_none(&x, &y, method)?,
            });
        }
    }

    if spec.kappa {
        let mut rows = Vec::new();
        for (group, members) in groups(&trajectories).iter().filter(|(_, m)| m.len() > 1) {
            for step in common_steps(members) {
                let cols: Vec<DecisionColumn> = members
                    .iter()
                    .map(|t| {
                        decisions
                            .iter()
                            .find(|d| d.model_id == t.model_id && d.step == step)
                            .cloned()
                            .ok_or_else(|| {
                                Error::InvalidArgument(format!("no decisions for {}@{step}", t.model_id))
                            })
                    })
                    .collect::<Result<_>>()?;
                let m = DecisionMatrix::from_columns(&cols)?;
                rows.push(KappaRow {
                    model_group: group.to_string(),
                    step,
                    raters: m.num_raters(),
                    kappa: fleiss_kappa(&m)?,
                });
            }
        }
        out.kappa = Some(rows);
    }

    if let Some(c) = &spec.cluster {
        let t = match &c.run {
            Some(id) => trajectories
                .iter()
                .find(|t| &t.model_id == id)
                .ok_or_else(|| Error::InvalidArgument(format!("no trajectory named {id}")))?,
            None => trajectories
                .first()
                .ok_or_else(|| Error::InvalidArgument("clustering needs a trajectory".into()))?,
        };
        let assignment = cluster_trajectories(t, c.k, c.seed)?;
        out.clusters = Some(cluster_rows(&assignment, &t.challenges)?);
    }

    if spec.align {
        let mut rows = Vec::new();
        for i in 0..trajectories.len() {
            for j in i + 1..trajectories.len() {
                let (a, b) = (&trajectories[i], &trajectories[j]);
                let (ua, ub) = (a.uids(), b.uids());
                let shared: Vec<&str> = ua.iter().copied().filter(|u| ub.contains(u)).collect();
                for (sa, sb) in align_by_perplexity(a, b)? {
                    let x = pick(&ua, row_at(a, sa).expect("aligned step"), &shared);
                    let y = pick(&ub, row_at(b, sb).expect("aligned step"), &shared);
                    rows.push(AlignmentRow {
                        model_a: a.model_id.clone(),
                        step_a: sa,
                        model_b: b.model_id.clone(),
                        step_b: sb,
                        r: r_or_none(&x, &y, method)?,
                    });
                }
            }
        }
        out.alignment = Some(rows);
    }
    Ok(out)
}

/// Writes the tables of `out` into `dir`; returns the file names written.
pub fn write_analysis(dir: &Path, out: &AnalysisOutput) -> Result<Vec<&'static str>> {
    let mut files = vec![CORRELATIONS_FILE, PEAKS_FILE];
    write_atomic(&dir.join(CORRELATIONS_FILE), &to_csv(&CORRELATIONS_HEADER, &out.correlations)?)?;
    write_atomic(&dir.join(PEAKS_FILE), &to_csv(&PEAKS_HEADER, &out.peaks)?)?;
    if let Some(rows) = &out.kappa {
        write_atomic(&dir.join(KAPPA_FILE), &to_csv(&KAPPA_HEADER, rows)?)?;
        files.push(KAPPA_FILE);
    }
    if let Some(rows) = &out.clusters {
        write_atomic(&dir.join(CLUSTERS_FILE), &to_csv(&CLUSTERS_HEADER, rows)?)?;
        files.push(CLUSTERS_FILE);
    }
    if let Some(rows) = &out.alignment {
        write_atomic(&dir.join(ALIGNMENT_FILE), &to_csv(&ALIGNMENT_HEADER, rows)?)?;
        files.push(ALIGNMENT_FILE);
    }
    Ok(files)
}

/// File names `write_analysis` produces for `spec`.
pub fn analysis_files(spec: &AnalysisSpec) -> Vec<&'static str> {
    let mut f = vec![CORRELATIONS_FILE, PEAKS_FILE];
    if spec.kappa {
        f.push(KAPPA_FILE);
    }
    if spec.cluster.is_some() {
        f.push(CLUSTERS_FILE);
    }
    if spec.align {
        f.push(ALIGNMENT_FILE);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajlab::eval::ChallengeAccuracy;

    fn pv(id: &str, step: u64, ppl: f64, accs: &[f64]) -> PerformanceVector {
        PerformanceVector::new(
            id,
            step,
            Some(ppl),
            accs.iter()
                .enumerate()
                .map(|(i, &a)| ChallengeAccuracy {
                    uid: format!("c{i}"),
                    field: "f".into(),
                    linguistics_term: "t".into(),
                    accuracy: a,
                })
                .collect(),
        )
    }

    #[test]
    fn ids_and_groups() {
        assert!(is_reference_id("ngram-3"));
        assert!(!is_reference_id("ngram-"));
        assert!(!is_reference_id("ngram-x"));
        assert_eq!(model_group("tiny-s12"), "tiny");
        assert_eq!(model_group("tiny-bow-s1"), "tiny-bow");
        assert_eq!(model_group("tiny"), "tiny");
        assert_eq!(model_group("-s1"), "-s1");
    }

    #[test]
    fn seed_rows_and_reference_curves() {
        let perf = vec![
            pv("m-s1", 10, 9.0, &[0.1, 0.5, 0.9]),
            pv("m-s1", 20, 5.0, &[0.2, 0.6, 0.9]),
            pv("m-s2", 10, 8.0, &[0.2, 0.4, 0.8]),
            pv("m-s2", 20, 4.0, &[0.5, 0.5, 0.5]),
            pv("ngram-1", 0, 30.0, &[0.3, 0.2, 0.1]),
        ];
        let spec = AnalysisSpec {
            align: true,
            ..AnalysisSpec::default()
        };
        let out = analyze(&perf, &[], "h", Vec::new(), &spec).unwrap();
        let seeds: Vec<_> = out.correlations.iter().filter(|r| r.label_b == "m-s2").collect();
        assert_eq!(seeds.len(), 2);
        assert!(seeds[0].r.unwrap() > 0.9);
        assert_eq!(seeds[1].r, None);
        let curve: Vec<_> = out.correlations.iter().filter(|r| r.label_b == "ngram-1").collect();
        assert_eq!(curve.len(), 4);
        assert_eq!(out.peaks.len(), 2);
        assert_eq!(out.peaks[1].model_id, "m-s2");
        assert_eq!(out.peaks[1].argmax_step, Some(10));
        assert_eq!(out.alignment.as_ref().unwrap().len(), 2);
        assert!(out.kappa.is_none() && out.clusters.is_none());
    }
}
