use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use trajlab::analysis::CorrelationMethod;
use trajlab::corpus::{build_vocab, Batch, Documents, TokenizedCorpus, Vocabulary};
use trajlab::eval::{load_suite, read_decisions_jsonl, read_performance_csv, write_decisions_jsonl, write_performance_csv, NormPolicy, SuiteFormat};
use trajlab::ngram::train_ngram;
use trajlab::nlm::{gradient_check, run_training, AttentionMode, ModelConfig, TrainConfig};
use trajlab::synthetic::{generate_corpus, generate_suite, CORPUS_SEED, CORPUS_TOKENS, PAIRS_PER_CHALLENGE, SUITE_SEED};
use trajlab_cli::analyze::{analyze, extra_references, write_analysis};
use trajlab_cli::export::export_tables;
use trajlab_cli::manifest::{AnalysisSpec, ClusterSpec, ExportFormat, MetricName};
use trajlab_cli::pipeline::{
    analysis_dir, decisions_path, evaluate_all, exports_dir, ngram_path, performance_path, run_manifest, run_path,
    vocab_path, RunOptions, StageStatus,
};
use trajlab_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "trajlab", version, about = "Train language models, score minimal pairs along training, compare trajectories")]
struct Cli {
    /// Seed for model init, batch order and clustering.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output root; every command reads and writes the same layout under it.
    #[arg(long, global = true, env = "TRAJLAB_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled synthetic corpus and/or challenge suite.
    Synth(SynthArgs),
    /// Build a vocabulary from the training documents of a corpus.
    BuildVocab(CorpusArgs),
    /// Train a Kneser-Ney n-gram model.
    TrainNgram {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        order: usize,
    },
    /// Train a transformer and checkpoint it on a schedule.
    TrainNlm(TrainArgs),
    /// Score every n-gram model and checkpoint under the output root.
    Eval(EvalArgs),
    /// Correlations, agreement, clustering and alignment over eval outputs.
    Analyze(AnalyzeArgs),
    /// Write plot-ready tables and figures_manifest.json.
    Export {
        #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
        format: ExportFormat,
    },
    /// Run every stage of an experiment manifest, skipping up-to-date ones.
    Run { manifest: PathBuf },
    /// Compare backprop gradients with central differences in 64-bit.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus file to write.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = CORPUS_TOKENS)]
    tokens: usize,
    #[arg(long, default_value_t = CORPUS_SEED)]
    corpus_seed: u64,
    /// Directory for the challenge JSONL files.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, default_value_t = PAIRS_PER_CHALLENGE)]
    pairs: usize,
    #[arg(long, default_value_t = SUITE_SEED)]
    suite_seed: u64,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus files or directories.
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Vocabulary size, specials included (build-vocab only).
    #[arg(long, default_value_t = 10_000)]
    vocab_size: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "tiny")]
    id: String,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 32)]
    seq_len: usize,
    /// standard, bow, or window:K
    #[arg(long, default_value = "standard", value_parser = parse_attention)]
    attention: AttentionMode,
    /// JSON train config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Checkpoint every N steps.
    #[arg(long)]
    every: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, value_enum, default_value_t = SuiteArg::Blimp)]
    suite_format: SuiteArg,
    /// Corpus for n-gram dev perplexity; without it n-gram rows have none.
    #[arg(long, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = NormArg::WhenLengthsDiffer)]
    norm: NormArg,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Pearson)]
    method: MethodArg,
    #[arg(long)]
    kappa: bool,
    #[arg(long)]
    align: bool,
    /// Cluster a trajectory into K groups.
    #[arg(long)]
    k: Option<usize>,
    /// Trajectory to cluster (default: first by id).
    #[arg(long)]
    cluster_run: Option<String>,
    #[arg(long, value_enum)]
    metric: Vec<MetricArg>,
    /// `challenge_uid,accuracy` CSV files.
    #[arg(long)]
    reference: Vec<PathBuf>,
    /// Needed for metric references.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SuiteArg::Blimp)]
    suite_format: SuiteArg,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    /// Layer counts to check.
    #[arg(long, num_args = 1.., default_values_t = [1, 2])]
    layers: Vec<usize>,
    /// Attention modes to check.
    #[arg(long, num_args = 1.., value_parser = parse_attention, default_values = ["standard", "bow", "window:3"])]
    attention: Vec<AttentionMode>,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SuiteArg {
    Blimp,
    Synthetic,
}

impl From<SuiteArg> for SuiteFormat {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Blimp => SuiteFormat::BlimpJsonl,
            SuiteArg::Synthetic => SuiteFormat::Synthetic,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum NormArg {
    Never,
    Always,
    WhenLengthsDiffer,
}

impl From<NormArg> for NormPolicy {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Never => NormPolicy::Never,
            NormArg::Always => NormPolicy::Always,
            NormArg::WhenLengthsDiffer => NormPolicy::WhenLengthsDiffer,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Pearson,
    Spearman,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MetricArg {
    SentenceLength,
    AnnotatedDepth,
}

fn parse_attention(s: &str) -> std::result::Result<AttentionMode, String> {
    match s {
        "standard" => Ok(AttentionMode::Standard),
        "bow" => Ok(AttentionMode::Bow),
        _ => s
            .strip_prefix("window:")
            .and_then(|k| k.parse().ok())
            .map(AttentionMode::Window)
            .ok_or_else(|| format!("expected standard, bow or window:K, got {s}")),
    }
}

fn out_root(cli_out: &Option<PathBuf>) -> Result<&Path> {
    cli_out
        .as_deref()
        .ok_or_else(|| CliError::Usage("--out (or TRAJLAB_OUT) is required".into()))
}

fn load_corpus(paths: &[PathBuf], root: &Path) -> Result<(Vocabulary, TokenizedCorpus)> {
    let docs = Documents::load(paths)?;
    let vocab = Vocabulary::load(&vocab_path(root))?;
    let tc = TokenizedCorpus::new(&docs, &vocab)?;
    Ok((vocab, tc))
}

fn existing(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn train_config(a: &TrainArgs, seed: u64) -> Result<TrainConfig> {
    let mut tc = match &a.config {
        Some(p) => {
            let text = trajlab::io::read_to_string(p)?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| CliError::Manifest {
                path: p.clone(),
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = a.steps {
        tc.total_steps = s;
    }
    if let Some(lr) = a.lr {
        tc.learning_rate = lr;
    }
    if let Some(w) = a.warmup {
        tc.warmup_steps = w;
    }
    if let Some(b) = a.batch_size {
        tc.batch_size = b;
    }
    if let Some(e) = a.every {
        if e == 0 {
            return Err(CliError::Usage("--every must be positive".into()));
        }
        tc.checkpoint_schedule = (1..=tc.total_steps / e).map(|i| i * e).collect();
    } else {
        tc.checkpoint_schedule.retain(|&s| s <= tc.total_steps);
    }
    tc.data_seed = seed;
    tc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(tc)
}

fn real_main(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => {
            if a.corpus.is_none() && a.suite.is_none() {
                return Err(CliError::Usage("give --corpus and/or --suite".into()));
            }
            if let Some(p) = &a.corpus {
                trajlab::io::write_atomic(p, generate_corpus(a.corpus_seed, a.tokens).as_bytes())?;
                info!("wrote {}", p.display());
            }
            if let Some(d) = &a.suite {
                generate_suite(a.suite_seed, a.pairs)?.write_jsonl(d)?;
                info!("wrote {}", d.display());
            }
        }
        Command::BuildVocab(a) => {
            let root = out_root(&cli.out)?;
            let docs = Documents::load(&a.corpus)?;
            let v = build_vocab(docs.train_docs()?.iter().map(String::as_str), a.vocab_size)?;
            v.save(&vocab_path(root))?;
            println!("{} entries, hash {}", v.len(), v.hash());
        }
        Command::TrainNgram { corpus, order } => {
            let root = out_root(&cli.out)?;
            let (_, tc) = load_corpus(&corpus.corpus, root)?;
            let lm = train_ngram(&tc, order)?;
            for w in lm.warnings() {
                log::warn!("{w}");
            }
            let dev_ppl = trajlab::LanguageModel::perplexity(&lm, &tc.dev)?;
            lm.save(&ngram_path(root, order))?;
            println!("order {order}: dev perplexity {dev_ppl:.3}");
        }
        Command::TrainNlm(a) => {
            let root = out_root(&cli.out)?;
            let (vocab, tc) = load_corpus(&a.corpus.corpus, root)?;
            let mc = ModelConfig {
                width: a.width,
                layers: a.layers,
                heads: a.heads,
                seq_len: a.seq_len,
                vocab_size: vocab.len(),
                attention: a.attention,
                seed: cli.seed,
            };
            mc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let cfg = train_config(&a, cli.seed)?;
            let id = format!("{}-s{}", a.id, cli.seed);
            let metas = run_training(&tc, &id, &mc, &cfg, &run_path(root, &id))?;
            for m in metas {
                println!("{id} step {}: dev perplexity {:.3}", m.step, m.dev_perplexity);
            }
        }
        Command::Eval(a) => {
            let root = out_root(&cli.out)?;
            let vocab = Vocabulary::load(&vocab_path(root))?;
            let suite = load_suite(&a.suite, a.suite_format.into())?;
            let orders: Vec<usize> = existing(&root.join("ngram"))
                .iter()
                .filter_map(|p| {
                    p.file_name()?
                        .to_str()?
                        .strip_prefix("order-")?
                        .strip_suffix(".bin")?
                        .parse()
                        .ok()
                })
                .collect();
            let mut orders = orders;
            orders.sort_unstable();
            let runs: Vec<String> = existing(&root.join("runs"))
                .iter()
                .filter(|p| p.is_dir())
                .filter_map(|p| Some(p.file_name()?.to_str()?.to_string()))
                .collect();
            if orders.is_empty() && runs.is_empty() {
                return Err(CliError::MissingArtifacts {
                    dir: root.to_path_buf(),
                    missing: vec!["ngram/order-N.bin or runs/* (run `trajlab train-ngram` or `trajlab train-nlm`)".into()],
                });
            }
            let tc = if a.corpus.is_empty() {
                None
            } else {
                Some(TokenizedCorpus::new(&Documents::load(&a.corpus)?, &vocab)?)
            };
            let dev = tc.as_ref().map(|t| t.dev.as_slice());
            let (perf, dec) = evaluate_all(root, &orders, &runs, &suite, &vocab, dev, a.norm.into())?;
            write_performance_csv(&performance_path(root), &perf)?;
            write_decisions_jsonl(&decisions_path(root), &dec)?;
            for p in &perf {
                println!("{}@{}: mean accuracy {:.4}", p.model_id, p.step, p.mean_accuracy);
            }
        }
        Command::Analyze(a) => {
            let root = out_root(&cli.out)?;
            let spec = AnalysisSpec {
                method: match a.method {
                    MethodArg::Pearson => CorrelationMethod::Pearson,
                    MethodArg::Spearman => CorrelationMethod::Spearman,
                },
                kappa: a.kappa,
                align: a.align,
                cluster: a.k.map(|k| ClusterSpec {
                    k,
                    seed: cli.seed,
                    run: a.cluster_run.clone(),
                }),
                metrics: a
                    .metric
                    .iter()
                    .map(|m| match m {
                        MetricArg::SentenceLength => MetricName::SentenceLength,
                        MetricArg::AnnotatedDepth => MetricName::AnnotatedDepth,
                    })
                    .collect(),
                references: a.reference.clone(),
            };
            let perf_path = performance_path(root);
            if !perf_path.is_file() {
                return Err(CliError::MissingArtifacts {
                    dir: root.to_path_buf(),
                    missing: vec!["eval/performance.csv (run `trajlab eval`)".into()],
                });
            }
            let perf = read_performance_csv(&perf_path)?;
            let dec = if spec.kappa {
                read_decisions_jsonl(&decisions_path(root))?
            } else {
                Vec::new()
            };
            let suite = a.suite.as_ref().map(|p| load_suite(p, a.suite_format.into())).transpose()?;
            let vocab_hash = Vocabulary::load(&vocab_path(root)).map(|v| v.hash()).unwrap_or_default();
            let extra = extra_references(&spec, suite.as_ref())?;
            let out = analyze(&perf, &dec, &vocab_hash, extra, &spec)?;
            let files = write_analysis(&analysis_dir(root), &out)?;
            println!("wrote {}", files.join(", "));
        }
        Command::Export { format } => {
            let root = out_root(&cli.out)?;
            for p in export_tables(root, &exports_dir(root), format)? {
                println!("{}", p.display());
            }
        }
        Command::Run { manifest } => {
            let report = run_manifest(&manifest, &RunOptions { out: cli.out.clone() })?;
            for s in &report.stages {
                let status = match s.status {
                    StageStatus::Ran => "ran",
                    StageStatus::Skipped => "skipped",
                    StageStatus::Failed => "failed",
                };
                println!("{:<24} {status:<8} {:>9.2}s", s.stage, s.seconds);
            }
        }
        Command::Gradcheck(a) => {
            let batch = Batch::new(2, 7, vec![1, 4, 2, 9, 3, 3, 0, 5, 8, 8, 2, 7, 6, 1]);
            let mut worst: f64 = 0.0;
            for &mode in &a.attention {
                for &layers in &a.layers {
                    let mc = ModelConfig {
                        width: a.width,
                        layers,
                        heads: a.heads,
                        seq_len: 16,
                        vocab_size: 10,
                        attention: mode,
                        seed: cli.seed,
                    };
                    mc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                    let r = gradient_check(&mc, &batch, a.epsilon, a.samples)?;
                    println!(
                        "{:<10} layers={layers} samples={} max_rel_error={:.3e}",
                        mode.label(),
                        r.samples,
                        r.max_rel_error
                    );
                    worst = worst.max(r.max_rel_error);
                }
            }
            if !(worst < a.tolerance) {
                return Err(CliError::Core(trajlab::Error::InvalidArgument(format!(
                    "max relative error {worst:.3e} exceeds {:.1e}",
                    a.tolerance
                ))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Warn
        } else {
            log::LevelFilter::Info
        })
        .parse_env("TRAJLAB_LOG")
        .init();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
