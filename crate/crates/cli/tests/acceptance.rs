//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! The desk-scale replication trains three small models twice (the second
//! time for the determinism check); expect roughly a quarter of an hour on a
//! single core.

#[path = "../../core/tests/support/kn_oracle.rs"]
mod kn_oracle;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use kn_oracle::{toy_corpus, KnOracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajlab::analysis::{
    cluster_curves, correlate, correlation_curve, fleiss_kappa, ChallengeLabel, ClusterAssignment, CorrelationMethod,
    CorrelationRow, Curve, ReferenceSource, ReferenceVector, TrajectoryMatrix,
};
use trajlab::corpus::{build_vocab, split_documents, Batch, Documents, TokenizedCorpus};
use trajlab::eval::DecisionMatrix;
use trajlab::lm::LanguageModel;
use trajlab::ngram::NGramModel;
use trajlab::nlm::{gradient_check, AttentionMode, Model, ModelConfig, NeuralScorer};
use trajlab::synthetic::generate_corpus;
use trajlab_cli::pipeline::{analysis_dir, exports_dir, run_manifest, RunOptions};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit: Duration) -> Outcome {
    ensure!(elapsed < limit, "took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64());
    Ok(String::new())
}

// ---- neural model ---------------------------------------------------------

fn small(mode: AttentionMode, layers: usize) -> ModelConfig {
    ModelConfig {
        width: 8,
        layers,
        heads: 2,
        seq_len: 16,
        vocab_size: 10,
        attention: mode,
        seed: 7,
    }
}

const MODES: [AttentionMode; 3] = [AttentionMode::Standard, AttentionMode::Bow, AttentionMode::Window(3)];

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let batch = Batch::new(2, 7, vec![1, 4, 2, 9, 3, 3, 0, 5, 8, 8, 2, 7, 6, 1]);
    let mut worst = 0f64;
    for mode in MODES {
        for layers in [1, 2] {
            let r = gradient_check(&small(mode, layers), &batch, 1e-5, 200).map_err(|e| e.to_string())?;
            ensure!(r.samples >= 200, "{mode:?} L={layers}: only {} samples", r.samples);
            ensure!(r.max_rel_error < 1e-4, "{mode:?} L={layers}: max relative error {:.3e}", r.max_rel_error);
            worst = worst.max(r.max_rel_error);
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("max relative error {worst:.2e} in {:.1}s", start.elapsed().as_secs_f64()))
}

fn uniform_structure() -> Outcome {
    let start = Instant::now();
    let ids = [3u32, 1, 4, 1, 5, 9, 2, 6, 5, 3];
    let mut worst_mean = 0f64;
    for mode in [AttentionMode::Bow, AttentionMode::Window(3)] {
        let c = small(mode, 3);
        let m = Model::<f32>::new(&c).map_err(|e| e.to_string())?;
        let acts = m.forward(&ids, 1, ids.len()).map_err(|e| e.to_string())?;
        let d = c.width;
        for l in 0..c.layers {
            let values = acts.values(l, d);
            let atty = &acts.layers[l].atty;
            for t in 0..ids.len() {
                let from = match mode {
                    AttentionMode::Window(k) => (t + 1).saturating_sub(k),
                    _ => 0,
                };
                for i in 0..d {
                    let mean = (from..=t).map(|s| values[s * d + i] as f64).sum::<f64>() / (t + 1 - from) as f64;
                    worst_mean = worst_mean.max((mean - atty[t * d + i] as f64).abs());
                }
            }
        }
    }
    ensure!(worst_mean < 1e-6, "attention output differs from the prefix mean by {worst_mean:.3e}");

    let bow = Model::<f32>::new(&small(AttentionMode::Bow, 1)).map_err(|e| e.to_string())?;
    let a = bow.forward(&[1, 2, 3, 4, 5, 6], 1, 6).map_err(|e| e.to_string())?;
    let b = bow.forward(&[5, 3, 1, 4, 2, 6], 1, 6).map_err(|e| e.to_string())?;
    let perm = a
        .logits_at(0, 5)
        .iter()
        .zip(b.logits_at(0, 5))
        .map(|(x, y)| (x - y).abs() as f64)
        .fold(0f64, f64::max);
    ensure!(perm < 1e-5, "permuted prefix moves final logits by {perm:.3e}");

    let k = 3;
    let win = Model::<f32>::new(&small(AttentionMode::Window(k), 1)).map_err(|e| e.to_string())?;
    let base = [1u32, 2, 3, 4, 5, 6, 7, 8];
    let t = 7;
    let a = win.forward(&base, 1, 8).map_err(|e| e.to_string())?;
    for j in 0..(t + 1 - k) {
        let mut changed = base;
        changed[j] = 9;
        let b = win.forward(&changed, 1, 8).map_err(|e| e.to_string())?;
        let same = a.logits_at(0, t).iter().zip(b.logits_at(0, t)).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure!(same, "changing position {j} moved the logits at {t}");
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("prefix mean {worst_mean:.1e}, permutation {perm:.1e}, locality bitwise"))
}

fn uniform_perplexity() -> Outcome {
    let mut worst = 0f64;
    for (seed, tokens) in [(11u64, 60_000usize), (5, 20_000)] {
        let docs = Documents::from_texts(split_documents(&generate_corpus(seed, tokens)));
        let train = docs.train_docs().map_err(|e| e.to_string())?;
        let vocab = build_vocab(train.iter().map(String::as_str), 1024).map_err(|e| e.to_string())?;
        let corpus = TokenizedCorpus::new(&docs, &vocab).map_err(|e| e.to_string())?;
        for seq_len in [16, 32] {
            let model = Model::<f32>::zeros(&ModelConfig {
                width: 8,
                layers: 1,
                heads: 2,
                seq_len,
                vocab_size: vocab.len(),
                attention: AttentionMode::Standard,
                seed: 1,
            })
            .map_err(|e| e.to_string())?;
            let hash = vocab.hash();
            let lm = NeuralScorer {
                model: &model,
                vocab_hash: &hash,
            };
            let ppl = lm.perplexity(&corpus.dev).map_err(|e| e.to_string())?;
            let v = vocab.len() as f64;
            let rel = (ppl - v).abs() / v;
            ensure!(rel <= 1e-6, "perplexity {ppl} for V = {v} (relative error {rel:.2e})");
            worst = worst.max(rel);
        }
    }
    Ok(format!("max relative error {worst:.1e}"))
}

// ---- n-gram ---------------------------------------------------------------

fn ngram_oracle() -> Outcome {
    let start = Instant::now();
    const V: usize = 14;
    let toks = toy_corpus(480, V as u32, 3);
    ensure!(toks.len() <= 500, "corpus has {} tokens", toks.len());
    let mut contexts = vec![vec![]];
    for a in 0..V as u32 {
        contexts.push(vec![a]);
        for b in 0..V as u32 {
            contexts.push(vec![b, a]);
        }
    }
    let mut worst = 0f64;
    let mut worst_sum = 0f64;
    for order in 1..=3 {
        let m = NGramModel::train(&toks, order, V, String::new()).map_err(|e| e.to_string())?;
        let oracle = KnOracle::new(&toks, order, V);
        for ctx in &contexts {
            for w in 0..V as u32 {
                let err = (m.prob(ctx, w) - oracle.prob(ctx, w)).abs();
                ensure!(err < 1e-9, "order {order} ctx {ctx:?} w {w}: off by {err:.3e}");
                worst = worst.max(err);
            }
            let s: f64 = m.next_token_distribution(ctx).iter().sum();
            ensure!((s - 1.0).abs() <= 1e-6, "order {order} ctx {ctx:?}: distribution sums to {s}");
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("max error {worst:.1e}, max |sum - 1| {worst_sum:.1e}"))
}

// ---- statistics -----------------------------------------------------------

fn decisions(rows: &[Vec<u8>]) -> Result<DecisionMatrix, String> {
    DecisionMatrix::new(
        (0..rows.len()).map(|i| ("c".to_string(), i)).collect(),
        (0..rows[0].len()).map(|j| format!("r{j}")).collect(),
        rows.concat(),
    )
    .map_err(|e| e.to_string())
}

fn statistics_oracles() -> Outcome {
    // Pearson, by hand after centering: sxy = 0.32, sxx = 0.38, syy = 0.30
    let r = correlate(&[0.1, 0.4, 0.2, 0.9], &[0.2, 0.5, 0.1, 0.8], CorrelationMethod::Pearson)
        .map_err(|e| e.to_string())?;
    let want = 0.32 / (0.38f64 * 0.30).sqrt();
    ensure!((r - want).abs() < 1e-9, "pearson {r} vs {want}");

    // Spearman with ties: ranks 3.5 3.5 1.5 6 5 1.5 and 2 4.5 1 4.5 6 3,
    // centered sums sxy = 12.25, sxx = 16.5, syy = 17
    let rho = correlate(
        &[0.5, 0.5, 0.2, 0.9, 0.7, 0.2],
        &[0.3, 0.6, 0.1, 0.6, 0.9, 0.4],
        CorrelationMethod::Spearman,
    )
    .map_err(|e| e.to_string())?;
    let want = 12.25 / (16.5f64 * 17.0).sqrt();
    ensure!((rho - want).abs() < 1e-9, "spearman {rho} vs {want}");

    // 3 raters, 4 items: P_bar = 2/3, P_e = 1/2, kappa = 1/3
    let m = decisions(&[vec![1, 1, 1], vec![1, 0, 1], vec![0, 1, 0], vec![0, 0, 0]])?;
    let k = fleiss_kappa(&m).map_err(|e| e.to_string())?;
    ensure!((k - 1.0 / 3.0).abs() < 1e-9, "fleiss {k} vs 1/3");

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rows: Vec<Vec<u8>> = (0..10_000)
        .map(|_| vec![rng.random_bool(0.5) as u8, rng.random_bool(0.5) as u8])
        .collect();
    let coin = fleiss_kappa(&decisions(&rows)?).map_err(|e| e.to_string())?;
    ensure!(coin.abs() <= 0.05, "independent coin raters give kappa {coin}");
    Ok(format!("pearson {r:.6}, spearman {rho:.6}, fleiss 1/3, coin kappa {coin:+.4}"))
}

fn rising_falling(seed: u64) -> (Vec<Curve>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps: Vec<u64> = (0..10).map(|s| s * 200).collect();
    let mut curves = Vec::new();
    let mut truth = Vec::new();
    for i in 0..20 {
        let rising = i % 2 == 0;
        let lo = rng.random_range(0.3..0.6);
        let hi = rng.random_range(0.75..0.95);
        let values = (0..10)
            .map(|s| {
                let v = lo + (hi - lo) * s as f64 / 9.0 + rng.random_range(-0.03..0.03);
                if rising {
                    v
                } else {
                    1.2 - v
                }
            })
            .collect();
        curves.push(Curve {
            uid: format!("challenge_{i:02}"),
            steps: steps.clone(),
            values,
        });
        truth.push(rising);
    }
    (curves, truth)
}

fn purity(a: &ClusterAssignment, curves: &[Curve], truth: &[bool]) -> f64 {
    let mut counts: BTreeMap<usize, [usize; 2]> = BTreeMap::new();
    for (c, &t) in curves.iter().zip(truth) {
        counts.entry(a.get(&c.uid).unwrap_or(usize::MAX)).or_default()[t as usize] += 1;
    }
    counts.values().map(|v| v[0].max(v[1])).sum::<usize>() as f64 / curves.len() as f64
}

fn clustering() -> Outcome {
    let start = Instant::now();
    for seed in 0..5 {
        let (curves, truth) = rising_falling(seed);
        let a = cluster_curves(&curves, 2, seed).map_err(|e| e.to_string())?;
        let p = purity(&a, &curves, &truth);
        ensure!(p == 1.0, "seed {seed}: purity {p}");
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok("purity 1.0 for seeds 0-4".into())
}

fn interpolated(a: &[f64], b: &[f64], steps: usize) -> Result<TrajectoryMatrix, String> {
    let values: Vec<Vec<f64>> = (0..steps)
        .map(|s| {
            let t = s as f64 / (steps - 1) as f64;
            a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
        })
        .collect();
    TrajectoryMatrix::new(
        "interp",
        "h",
        (0..steps as u64).map(|s| s * 100).collect(),
        (0..steps).map(|s| 50.0 / (s as f64 + 1.0)).collect(),
        (0..a.len())
            .map(|i| ChallengeLabel {
                uid: format!("c{i:02}"),
                linguistics_term: "t".into(),
                field: "f".into(),
            })
            .collect(),
        values,
    )
    .map_err(|e| e.to_string())
}

fn matched_performance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for _ in 0..20 {
        let n = rng.random_range(6..12);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.4..0.7)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..1.0)).collect();
        let steps = rng.random_range(5..25);
        let traj = interpolated(&a, &b, steps)?;
        let at = rng.random_range(0..steps);
        let reference = ReferenceVector::new(
            "ref",
            traj.uids().into_iter().map(String::from).zip(traj.values[at].iter().copied()),
            ReferenceSource::Ingested,
        )
        .map_err(|e| e.to_string())?;
        let c = correlation_curve(&traj, &reference, CorrelationMethod::Pearson).map_err(|e| e.to_string())?;
        ensure!(
            c.argmax_step == Some(c.matched_step),
            "reference at step {}: argmax {:?}, matched {}",
            traj.steps[at],
            c.argmax_step,
            c.matched_step
        );
        ensure!(c.matched_step == traj.steps[at], "matched {} instead of {}", c.matched_step, traj.steps[at]);
        checked += 1;
    }
    Ok(format!("{checked} constructions"))
}

// ---- end to end -----------------------------------------------------------

fn desk_manifest() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests/desk_replication.json")
}

fn run_desk(out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    run_manifest(
        &desk_manifest(),
        &RunOptions {
            out: Some(out.to_path_buf()),
        },
    )
    .map_err(|e| e.to_string())?;
    Ok(start.elapsed())
}

/// Mean over seed pairs of the per-checkpoint Pearson r, by step.
fn seed_consistency(root: &Path) -> Result<BTreeMap<u64, f64>, String> {
    let rows: Vec<CorrelationRow> =
        trajlab::analysis::from_csv(&analysis_dir(root).join("correlations.csv")).map_err(|e| e.to_string())?;
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for row in rows {
        let seeds = row.label_a.starts_with("tiny-s") && row.label_b.starts_with("tiny-s");
        if row.method != "pearson" || !seeds {
            continue;
        }
        let step = row.step.ok_or("seed pair row without a step")?;
        let r = row
            .r
            .ok_or_else(|| format!("{} vs {} at step {step}: undefined r", row.label_a, row.label_b))?;
        by_step.entry(step).or_default().push(r);
    }
    by_step
        .into_iter()
        .map(|(s, rs)| {
            if rs.len() != 3 {
                return Err(format!("step {s}: {} seed pairs, expected 3", rs.len()));
            }
            Ok((s, rs.iter().sum::<f64>() / 3.0))
        })
        .collect()
}

fn desk_replication(out: &Path) -> Outcome {
    let elapsed = run_desk(out)?;
    let means = seed_consistency(out)?;
    let steps: Vec<u64> = means.keys().copied().collect();
    let expected: Vec<u64> = (1..=10).map(|i| i * 200).collect();
    ensure!(steps == expected, "checkpoints {steps:?}");
    let base = means[&200];
    for (&step, &r) in means.range(601..) {
        ensure!(r > 0.5, "step {step}: mean pairwise r {r:.3} is not above 0.5");
        ensure!(r > base, "step {step}: mean pairwise r {r:.3} does not exceed step 200 ({base:.3})");
    }
    within(elapsed, Duration::from_secs(30 * 60))?;
    let curve: Vec<String> = means.iter().map(|(s, r)| format!("{s}:{r:.3}")).collect();
    Ok(format!("{} in {:.0}s", curve.join(" "), elapsed.as_secs_f64()))
}

fn files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let p = e.map_err(|e| e.to_string())?.path();
        let bytes = fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        out.insert(p.file_name().unwrap_or_default().to_string_lossy().into_owned(), bytes);
    }
    Ok(out)
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    let a = files(&exports_dir(first))?;
    ensure!(!a.is_empty(), "first run left no exports");
    run_desk(second)?;
    let b = files(&exports_dir(second))?;
    ensure!(
        a.keys().eq(b.keys()),
        "export file sets differ: {:?} vs {:?}",
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>()
    );
    for (name, bytes) in &a {
        ensure!(b[name] == *bytes, "{name} differs between runs");
    }
    Ok(format!("{} files identical", a.len()))
}

fn main() {
    let first = tempfile::tempdir().expect("tempdir");
    let second = tempfile::tempdir().expect("tempdir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient correctness", Box::new(gradient_correctness)),
        ("bow/window structure", Box::new(uniform_structure)),
        ("n-gram oracle equivalence", Box::new(ngram_oracle)),
        ("statistics oracles", Box::new(statistics_oracles)),
        ("clustering purity", Box::new(clustering)),
        ("uniform-model perplexity", Box::new(uniform_perplexity)),
        ("matched-performance peak", Box::new(matched_performance)),
        ("desk-scale seed consistency", Box::new(|| desk_replication(first.path()))),
        ("end-to-end determinism", Box::new(|| determinism(first.path(), second.path()))),
    ];
    // optional name filters, as with the default harness
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut out = std::io::stdout();
    for (name, check) in &criteria {
        if !only.is_empty() && !only.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match result {
            Ok(detail) => format!("PASS {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                format!("FAIL {name} ({secs:.1}s): {why}")
            }
        };
        writeln!(out, "{line}").expect("stdout");
        out.flush().ok();
    }
    if failed > 0 {
        writeln!(out, "{failed} acceptance criteria failed").ok();
        std::process::exit(1);
    }
}
