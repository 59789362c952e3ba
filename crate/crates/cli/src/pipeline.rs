//! Manifest runner. Stages run in order and each one leaves a stamp in
//! `stamps/` holding the hash of its inputs and of every output it wrote;
//! a stage whose stamp still matches both is skipped.
//!
//! Output layout under the output root:
//!
//! ```text
//! corpus/synthetic.txt      generated corpus, when the manifest asks for one
//! vocab/vocab.tsv
//! ngram/order-N.bin
//! runs/ID-sSEED/            checkpoints and run_manifest.json
//! eval/performance.csv, eval/decisions.jsonl
//! analysis/*.csv
//! exports/                  plot-ready tables and figures_manifest.json
//! run.json                  versions, hashes, wall times, stage status
//! ```

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trajlab::corpus::{build_vocab, Documents, TokenizedCorpus, Vocabulary};
use trajlab::eval::{
    challenge_jsonl, evaluate, load_suite, read_decisions_jsonl, read_performance_csv, write_decisions_jsonl,
    write_performance_csv, ChallengeSuite, DecisionColumn, NormPolicy, PerformanceVector,
};
use trajlab::hash::{sha256_hex, Hasher};
use trajlab::io::write_atomic;
use trajlab::ngram::{train_ngram, NGramModel};
use trajlab::nlm::{checkpoint_dir, run_training, Checkpoint, RunManifest, PARTIAL_MARKER, RUN_MANIFEST};
use trajlab::synthetic::generate_corpus;

use crate::analyze::{analyze, extra_references, write_analysis};
use crate::error::{CliError, Result};
use crate::export::export_tables;
use crate::manifest::{load_manifest, AnalysisSpec, ExperimentManifest, Run};

pub const RUN_REPORT: &str = "run.json";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn vocab_path(root: &Path) -> PathBuf {
    root.join("vocab/vocab.tsv")
}

pub fn ngram_path(root: &Path, order: usize) -> PathBuf {
    root.join(format!("ngram/order-{order}.bin"))
}

pub fn run_path(root: &Path, run_id: &str) -> PathBuf {
    root.join("runs").join(run_id)
}

pub fn performance_path(root: &Path) -> PathBuf {
    root.join("eval/performance.csv")
}

pub fn decisions_path(root: &Path) -> PathBuf {
    root.join("eval/decisions.jsonl")
}

pub fn analysis_dir(root: &Path) -> PathBuf {
    root.join("analysis")
}

pub fn exports_dir(root: &Path) -> PathBuf {
    root.join("exports")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub input_hash: String,
    pub seconds: f64,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub manifest: PathBuf,
    pub manifest_sha256: String,
    pub vocab_hash: Option<String>,
    pub suite_sha256: Option<String>,
    pub stages: Vec<StageRecord>,
    /// Output file hashes, relative to the output root.
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stamp {
    input_hash: String,
    outputs: BTreeMap<String, String>,
}

/// Every regular file under `path`, relative to `path`, sorted.
fn files_under(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for e in fs::read_dir(path.join(&rel))? {
            let e = e?;
            let r = rel.join(e.file_name());
            if e.file_type()?.is_dir() {
                stack.push(r);
            } else {
                out.push(r);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// sha256 of a file, or of the relative names and hashes of every file in
/// a directory. `None` when the path does not exist.
pub fn hash_path(path: &Path) -> Result<Option<String>> {
    let io = |e| CliError::Core(trajlab::Error::io(path, e));
    if path.is_file() {
        return Ok(Some(sha256_hex(&fs::read(path).map_err(io)?)));
    }
    if !path.is_dir() {
        return Ok(None);
    }
    let mut h = Hasher::new();
    for rel in files_under(path).map_err(io)? {
        let bytes = fs::read(path.join(&rel)).map_err(io)?;
        h.update(rel.to_string_lossy().as_bytes()).update(sha256_hex(&bytes));
    }
    Ok(Some(h.finish()))
}

fn combine(parts: &[&str]) -> String {
    let mut h = Hasher::new();
    for p in parts {
        h.update(p);
    }
    h.finish()
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

/// Identity of a suite: its challenges in canonical JSONL form.
pub fn suite_hash(suite: &ChallengeSuite) -> String {
    let mut h = Hasher::new();
    for c in &suite.challenges {
        h.update(challenge_jsonl(c));
    }
    h.finish()
}

struct Stages {
    root: PathBuf,
    report: RunReport,
    started: Instant,
}

impl Stages {
    fn stamp_path(&self, name: &str) -> PathBuf {
        self.root.join("stamps").join(format!("{name}.json"))
    }

    /// Hashes of `outputs` if the stamp for `name` matches `input_hash` and
    /// the outputs are unchanged on disk.
    fn fresh(&self, name: &str, input_hash: &str, outputs: &[String]) -> Result<Option<BTreeMap<String, String>>> {
        let Ok(text) = fs::read_to_string(self.stamp_path(name)) else {
            return Ok(None);
        };
        let Ok(stamp) = serde_json::from_str::<Stamp>(&text) else {
            return Ok(None);
        };
        if stamp.input_hash != input_hash || stamp.outputs.len() != outputs.len() {
            return Ok(None);
        }
        for o in outputs {
            let on_disk = hash_path(&self.root.join(o))?;
            if on_disk.as_ref() != stamp.outputs.get(o) {
                return Ok(None);
            }
        }
        Ok(Some(stamp.outputs))
    }

    fn finish(&mut self, name: &str, input_hash: &str, outputs: &[String], seconds: f64) -> Result<String> {
        let mut hashes = BTreeMap::new();
        for o in outputs {
            let h = hash_path(&self.root.join(o))?.ok_or_else(|| {
                CliError::Core(trajlab::Error::InvalidArgument(format!("stage {name} did not write {o}")))
            })?;
            hashes.insert(o.clone(), h);
        }
        let stamp = Stamp {
            input_hash: input_hash.to_string(),
            outputs: hashes.clone(),
        };
        write_atomic(&self.stamp_path(name), &pretty(&stamp))?;
        self.record(name, StageStatus::Ran, input_hash, seconds);
        Ok(outputs_hash(&hashes))
    }

    fn record(&mut self, name: &str, status: StageStatus, input_hash: &str, seconds: f64) {
        self.report.stages.push(StageRecord {
            stage: name.to_string(),
            status,
            input_hash: input_hash.to_string(),
            seconds,
        });
    }

    /// Runs `body` unless the stage is fresh; returns the hash of its
    /// outputs either way.
    fn run(
        &mut self,
        name: &'static str,
        input_hash: &str,
        outputs: &[String],
        body: impl FnOnce(&Path) -> trajlab::Result<()>,
    ) -> Result<String> {
        if let Some(h) = self.fresh(name, input_hash, outputs)? {
            info!("{name}: up to date");
            self.record(name, StageStatus::Skipped, input_hash, 0.0);
            return Ok(outputs_hash(&h));
        }
        info!("{name}: running");
        let t = Instant::now();
        for o in outputs {
            remove(&self.root.join(o))?;
        }
        let _ = fs::remove_file(self.stamp_path(name));
        match body(&self.root) {
            Ok(()) => self.finish(name, input_hash, outputs, t.elapsed().as_secs_f64()),
            Err(source) => Err(self.fail(name, input_hash, t, source)),
        }
    }

    fn fail(&mut self, name: &'static str, input_hash: &str, t: Instant, source: trajlab::Error) -> CliError {
        self.record(name, StageStatus::Failed, input_hash, t.elapsed().as_secs_f64());
        // best effort: the stage error is what gets reported
        let _ = write_atomic(&self.root.join(PARTIAL_MARKER), format!("{name}\n").as_bytes());
        let _ = self.write_report();
        CliError::Stage { stage: name, source }
    }

    fn write_report(&mut self) -> Result<()> {
        self.report.seconds = self.started.elapsed().as_secs_f64();
        write_atomic(&self.root.join(RUN_REPORT), &pretty(&self.report))?;
        Ok(())
    }
}

fn outputs_hash(h: &BTreeMap<String, String>) -> String {
    let mut x = Hasher::new();
    for (k, v) in h {
        x.update(k).update(v);
    }
    x.finish()
}

fn remove(path: &Path) -> Result<()> {
    let r = if path.is_dir() {
        fs::remove_dir_all(path)
    } else if path.exists() {
        fs::remove_file(path)
    } else {
        Ok(())
    };
    r.map_err(|e| CliError::Core(trajlab::Error::io(path, e)))
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().into_owned()
}

/// Documents, vocabulary and token streams, loaded on first use.
struct Data {
    corpus_files: Vec<PathBuf>,
    vocab_file: PathBuf,
    docs: OnceCell<Documents>,
    vocab: OnceCell<Vocabulary>,
    tokens: OnceCell<TokenizedCorpus>,
}

impl Data {
    fn docs(&self) -> trajlab::Result<&Documents> {
        if self.docs.get().is_none() {
            let _ = self.docs.set(Documents::load(&self.corpus_files)?);
        }
        Ok(self.docs.get().expect("set"))
    }

    fn vocab(&self) -> trajlab::Result<&Vocabulary> {
        if self.vocab.get().is_none() {
            let _ = self.vocab.set(Vocabulary::load(&self.vocab_file)?);
        }
        Ok(self.vocab.get().expect("set"))
    }

    fn tokens(&self) -> trajlab::Result<&TokenizedCorpus> {
        if self.tokens.get().is_none() {
            let t = TokenizedCorpus::new(self.docs()?, self.vocab()?)?;
            let _ = self.tokens.set(t);
        }
        Ok(self.tokens.get().expect("set"))
    }
}

/// Scores every n-gram model and every checkpoint of every run.
pub fn evaluate_all(
    root: &Path,
    orders: &[usize],
    run_ids: &[String],
    suite: &ChallengeSuite,
    vocab: &Vocabulary,
    dev: Option<&[u32]>,
    norm: NormPolicy,
) -> trajlab::Result<(Vec<PerformanceVector>, Vec<DecisionColumn>)> {
    let mut perf = Vec::new();
    let mut dec = Vec::new();
    for &n in orders {
        let lm = NGramModel::load(&ngram_path(root, n))?;
        let e = evaluate(&lm, &format!("ngram-{n}"), 0, suite, vocab, dev, norm)?;
        perf.push(e.performance);
        dec.push(e.decisions);
    }
    for id in run_ids {
        let dir = run_path(root, id);
        let m = load_run_manifest(&dir)?;
        for meta in &m.checkpoints {
            let ck = Checkpoint::load(&checkpoint_dir(&dir, meta.step))?;
            let mut e = evaluate(&ck.scorer(), id, meta.step, suite, vocab, None, norm)?;
            e.performance.dev_perplexity = Some(meta.dev_perplexity);
            info!("eval {id}@{}: mean accuracy {:.3}", meta.step, e.performance.mean_accuracy);
            perf.push(e.performance);
            dec.push(e.decisions);
        }
    }
    Ok((perf, dec))
}

/// Everything `run` needs beyond the manifest itself.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the manifest's `output_dir`.
    pub out: Option<PathBuf>,
}

pub fn output_root(m: &ExperimentManifest, manifest_path: &Path, opts: &RunOptions) -> Result<PathBuf> {
    opts.out
        .clone()
        .or_else(|| m.output_dir.clone())
        .ok_or_else(|| {
            CliError::Usage(format!(
                "{}: no output_dir in the manifest and no --out given",
                manifest_path.display()
            ))
        })
}

pub fn run_manifest(manifest_path: &Path, opts: &RunOptions) -> Result<RunReport> {
    let m = load_manifest(manifest_path)?;
    let root = output_root(&m, manifest_path, opts)?;
    fs::create_dir_all(&root).map_err(|e| CliError::Core(trajlab::Error::io(&root, e)))?;
    let manifest_bytes = fs::read(manifest_path).map_err(|e| CliError::Core(trajlab::Error::io(manifest_path, e)))?;
    let mut st = Stages {
        root: root.clone(),
        report: RunReport {
            version: VERSION.to_string(),
            manifest: manifest_path.to_path_buf(),
            manifest_sha256: sha256_hex(&manifest_bytes),
            vocab_hash: None,
            suite_sha256: None,
            stages: Vec::new(),
            outputs: BTreeMap::new(),
            seconds: 0.0,
        },
        started: Instant::now(),
    };
    let _ = fs::remove_file(root.join(PARTIAL_MARKER));
    execute(&m, &mut st)?;

    let mut outputs = BTreeMap::new();
    for dir in ["eval", "analysis", "exports"] {
        let d = root.join(dir);
        for f in files_under(&d).map_err(|e| CliError::Core(trajlab::Error::io(&d, e)))? {
            let p = d.join(&f);
            outputs.insert(rel(&root, &p), hash_path(&p)?.expect("listed file"));
        }
    }
    st.report.outputs = outputs;
    st.write_report()?;
    Ok(st.report)
}

fn execute(m: &ExperimentManifest, st: &mut Stages) -> Result<()> {
    let root = st.root.clone();

    // corpus
    let (corpus_files, corpus_hash) = match &m.synthetic_corpus {
        Some(s) => {
            let out = "corpus/synthetic.txt".to_string();
            let input = combine(&["synthetic-corpus", VERSION, &s.seed.to_string(), &s.tokens.to_string()]);
            let (seed, tokens) = (s.seed, s.tokens);
            let h = st.run("corpus", &input, std::slice::from_ref(&out), |r| {
                write_atomic(&r.join("corpus/synthetic.txt"), generate_corpus(seed, tokens).as_bytes())
            })?;
            (vec![root.join(&out)], h)
        }
        None => {
            let mut h = Hasher::new();
            for p in &m.corpus {
                h.update(hash_path(p)?.unwrap_or_default());
            }
            (m.corpus.clone(), h.finish())
        }
    };
    let data = Data {
        corpus_files,
        vocab_file: vocab_path(&root),
        docs: OnceCell::new(),
        vocab: OnceCell::new(),
        tokens: OnceCell::new(),
    };

    // vocabulary, from the training documents only
    let input = combine(&["vocab", VERSION, &corpus_hash, &m.vocab_size.to_string()]);
    let vocab_out = vec![rel(&root, &vocab_path(&root))];
    let vocab_stage = st.run("vocab", &input, &vocab_out, |r| {
        let docs = data.docs()?;
        let v = build_vocab(docs.train_docs()?.iter().map(String::as_str), m.vocab_size)?;
        v.save(&vocab_path(r))
    })?;
    let vocab_hash = data.vocab().map_err(CliError::Core)?.hash();
    st.report.vocab_hash = Some(vocab_hash.clone());
    let data_hash = combine(&[&corpus_hash, &vocab_stage]);

    let suite = load_suite(&m.suite.path, m.suite.format).map_err(|e| CliError::Stage {
        stage: "suite",
        source: e,
    })?;
    let suite_id = suite_hash(&suite);
    st.report.suite_sha256 = Some(suite_id.clone());

    // n-gram models
    let mut trained = vec![];
    if !m.ngram_orders.is_empty() {
        let outs: Vec<String> = m.ngram_orders.iter().map(|&n| rel(&root, &ngram_path(&root, n))).collect();
        let input = combine(&["ngram", VERSION, &data_hash, &json(&m.ngram_orders)]);
        trained.push(st.run("ngram", &input, &outs, |r| {
            let tc = data.tokens()?;
            for &n in &m.ngram_orders {
                let lm = train_ngram(tc, n)?;
                for w in lm.warnings() {
                    log::warn!("ngram-{n}: {w}");
                }
                lm.save(&ngram_path(r, n))?;
            }
            Ok(())
        })?);
    }

    // neural runs: stale ones train concurrently, each under its own stamp
    let runs = m.runs();
    let mut pending: Vec<(&Run, String, String)> = Vec::new();
    for run in &runs {
        let tc = m.train_config(run.seed).expect("validated");
        let mc = run.spec.config(data.vocab().map_err(CliError::Core)?.len(), run.seed);
        let input = combine(&["train", VERSION, &data_hash, &json(&mc), &json(&tc)]);
        let name = format!("train-{}", run.run_id);
        let out = rel(&root, &run_path(&root, &run.run_id));
        match st.fresh(&name, &input, std::slice::from_ref(&out))? {
            Some(h) => {
                info!("{name}: up to date");
                st.record(&name, StageStatus::Skipped, &input, 0.0);
                trained.push(outputs_hash(&h));
            }
            None => pending.push((run, input, out)),
        }
    }
    if !pending.is_empty() {
        let tokens = data.tokens().map_err(|e| CliError::Stage {
            stage: "train",
            source: e,
        })?;
        let vocab_len = data.vocab().map_err(CliError::Core)?.len();
        for (_, _, out) in &pending {
            remove(&root.join(out))?;
        }
        let results: Vec<(f64, trajlab::Result<()>)> = pending
            .par_iter()
            .map(|(run, _, out)| {
                let t = Instant::now();
                info!("train-{}: running", run.run_id);
                let tc = m.train_config(run.seed).expect("validated");
                let mc = run.spec.config(vocab_len, run.seed);
                let r = run_training(tokens, &run.run_id, &mc, &tc, &root.join(out)).map(|_| ());
                (t.elapsed().as_secs_f64(), r)
            })
            .collect();
        for ((run, input, out), (secs, r)) in pending.iter().zip(results) {
            let name = format!("train-{}", run.run_id);
            match r {
                Ok(()) => trained.push(st.finish(&name, input, std::slice::from_ref(out), secs)?),
                Err(source) => {
                    st.record(&name, StageStatus::Failed, input, secs);
                    let _ = write_atomic(&root.join(PARTIAL_MARKER), format!("{name}\n").as_bytes());
                    let _ = st.write_report();
                    return Err(CliError::Stage { stage: "train", source });
                }
            }
        }
    }

    // evaluation
    let run_ids: Vec<String> = runs.iter().map(|r| r.run_id.clone()).collect();
    let eval_out = vec![
        rel(&root, &performance_path(&root)),
        rel(&root, &decisions_path(&root)),
    ];
    let mut parts: Vec<&str> = vec!["eval", VERSION, &data_hash, &suite_id];
    let norm = json(&m.norm);
    parts.push(&norm);
    parts.extend(trained.iter().map(String::as_str));
    let ids = json(&run_ids);
    parts.push(&ids);
    let input = combine(&parts);
    let eval_stage = st.run("eval", &input, &eval_out, |r| {
        let tc = data.tokens()?;
        let (perf, dec) = evaluate_all(r, &m.ngram_orders, &run_ids, &suite, data.vocab()?, Some(&tc.dev), m.norm)?;
        write_performance_csv(&performance_path(r), &perf)?;
        write_decisions_jsonl(&decisions_path(r), &dec)
    })?;

    // analysis
    let spec: &AnalysisSpec = &m.analysis;
    let mut ref_hashes = Vec::new();
    for p in &spec.references {
        ref_hashes.push(hash_path(p)?.unwrap_or_default());
    }
    let input = combine(&[
        "analysis",
        VERSION,
        &eval_stage,
        &suite_id,
        &vocab_hash,
        &json(spec),
        &json(&ref_hashes),
    ]);
    let analysis_stage = st.run("analysis", &input, &[rel(&root, &analysis_dir(&root))], |r| {
        let perf = read_performance_csv(&performance_path(r))?;
        let dec = read_decisions_jsonl(&decisions_path(r))?;
        let extra = extra_references(spec, Some(&suite))?;
        let out = analyze(&perf, &dec, &vocab_hash, extra, spec)?;
        write_analysis(&analysis_dir(r), &out)?;
        Ok(())
    })?;

    // export
    let input = combine(&["export", VERSION, &eval_stage, &analysis_stage, &json(&m.export_format)]);
    let format = m.export_format;
    st.run("export", &input, &[rel(&root, &exports_dir(&root))], |r| {
        export_tables(r, &exports_dir(r), format).map(|_| ()).map_err(|e| match e {
            CliError::Core(e) => e,
            other => trajlab::Error::InvalidArgument(other.to_string()),
        })
    })?;
    Ok(())
}

/// Loads a run's manifest from its directory.
pub fn load_run_manifest(dir: &Path) -> trajlab::Result<RunManifest> {
    let p = dir.join(RUN_MANIFEST);
    serde_json::from_str(&trajlab::io::read_to_string(&p)?)
        .map_err(|e| trajlab::Error::Format(format!("{}: {e}", p.display())))
}
