use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{checkpoint_dir, Checkpoint, CheckpointMeta, RngState};
use super::config::{ModelConfig, TrainConfig};
use super::model::Model;
use super::optim::{train_step, AdamState};
use super::scalar::Scalar;
use crate::corpus::{BatchStream, SourceFile, TokenizedCorpus};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::lm::{check_ids, LanguageModel};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const PARTIAL_MARKER: &str = "PARTIAL";

/// Scores sequences with a transformer; sequences longer than the model
/// context are rejected rather than truncated.
pub struct NeuralScorer<'a, F: Scalar = f32> {
    pub model: &'a Model<F>,
    pub vocab_hash: &'a str,
}

impl<F: Scalar> LanguageModel for NeuralScorer<'_, F> {
    fn vocab_hash(&self) -> &str {
        self.vocab_hash
    }

    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn conditional_logprob(&self, ids: &[u32]) -> Result<f64> {
        Ok(self.model.token_logprobs(ids)?.iter().sum())
    }

    /// Windows of `seq_len` tokens overlapping by one, so every token after
    /// the first is predicted exactly once.
    fn dev_nll(&self, ids: &[u32]) -> Result<(f64, usize)> {
        check_ids(ids, self.vocab_size())?;
        let span = self.model.config.seq_len;
        let mut windows = Vec::new();
        let mut start = 0;
        while start + 1 < ids.len() {
            let end = (start + span).min(ids.len());
            windows.push(&ids[start..end]);
            start = end - 1;
        }
        let parts: Vec<f64> = windows
            .par_iter()
            .map(|w| self.model.token_logprobs(w).map(|lp| lp.iter().sum::<f64>()))
            .collect::<Result<_>>()?;
        Ok((-parts.iter().sum::<f64>(), ids.len() - 1))
    }
}

impl Checkpoint {
    pub fn scorer(&self) -> NeuralScorer<'_> {
        NeuralScorer {
            model: &self.model,
            vocab_hash: &self.meta.vocab_hash,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_id: String,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub vocab_hash: String,
    pub num_params: usize,
    pub sources: Vec<SourceFile>,
    pub checkpoints: Vec<CheckpointMeta>,
}

fn dev_perplexity(model: &Model<f32>, corpus: &TokenizedCorpus) -> Result<f64> {
    NeuralScorer {
        model,
        vocab_hash: &corpus.vocab_hash,
    }
    .perplexity(&corpus.dev)
}

/// Trains from scratch and writes a checkpoint at every scheduled step.
pub fn run_training(
    corpus: &TokenizedCorpus,
    model_id: &str,
    mc: &ModelConfig,
    tc: &TrainConfig,
    out_dir: &Path,
) -> Result<Vec<CheckpointMeta>> {
    let model = Model::<f32>::new(mc)?;
    let opt = AdamState::new(model.num_params());
    train_from(corpus, model_id, tc, out_dir, model, opt, 0)
}

/// Continues a run from a checkpoint that carries optimizer state.
pub fn resume_training(corpus: &TokenizedCorpus, checkpoint: &Path, out_dir: &Path) -> Result<Vec<CheckpointMeta>> {
    let ck = Checkpoint::load(checkpoint)?;
    let opt = ck
        .optimizer
        .ok_or_else(|| Error::Format("checkpoint has no optimizer state".into()))?;
    train_from(
        corpus,
        &ck.meta.model_id,
        &ck.meta.train_config,
        out_dir,
        ck.model,
        opt,
        ck.meta.step,
    )
}

fn train_from(
    corpus: &TokenizedCorpus,
    model_id: &str,
    tc: &TrainConfig,
    out_dir: &Path,
    mut model: Model<f32>,
    mut opt: AdamState<f32>,
    start_step: u64,
) -> Result<Vec<CheckpointMeta>> {
    let mc = model.config.clone();
    mc.validate()?;
    tc.validate()?;
    if mc.vocab_size != corpus.vocab_size {
        return Err(Error::VocabMismatch {
            expected: format!("{} tokens", corpus.vocab_size),
            found: format!("{} tokens", mc.vocab_size),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let marker = out_dir.join(PARTIAL_MARKER);
    write_atomic(&marker, b"training in progress\n")?;

    let mut manifest = RunManifest {
        model_id: model_id.to_string(),
        model_config: mc.clone(),
        train_config: tc.clone(),
        vocab_hash: corpus.vocab_hash.clone(),
        num_params: model.num_params(),
        sources: corpus.source_manifest.clone(),
        checkpoints: Vec::new(),
    };

    let mut stream = BatchStream::new(&corpus.train, tc.batch_size, mc.seq_len, tc.data_seed)?;
    stream.seek(start_step);

    let save = |model: &Model<f32>, opt: &AdamState<f32>, step: u64, manifest: &mut RunManifest| -> Result<()> {
        let ppl = dev_perplexity(model, corpus)?;
        let ck = Checkpoint {
            meta: CheckpointMeta {
                model_id: model_id.to_string(),
                step,
                dev_perplexity: ppl,
                model_config: mc.clone(),
                train_config: tc.clone(),
                config_hash: mc.hash(),
                vocab_hash: corpus.vocab_hash.clone(),
                rng: RngState {
                    data_seed: tc.data_seed,
                    batches_consumed: step,
                },
                params_sha256: String::new(),
            },
            model: model.clone(),
            optimizer: Some(opt.clone()),
        };
        let dir = checkpoint_dir(out_dir, step);
        ck.save(&dir)?;
        info!("{model_id}: checkpoint step {step}, dev perplexity {ppl:.3}");
        manifest.checkpoints.push(Checkpoint::load_meta(&dir)?);
        write_atomic(&out_dir.join(RUN_MANIFEST), &serde_json::to_vec_pretty(manifest)?)
    };

    if start_step == 0 && tc.checkpoint_schedule.first() == Some(&0) {
        save(&model, &opt, 0, &mut manifest)?;
    }
    for step in start_step + 1..=tc.total_steps {
        let batch = stream.next().expect("stream is endless");
        let report = train_step(&mut model, &mut opt, &batch, step, tc)?;
        if step % 100 == 0 || step == 1 {
            info!(
                "{model_id}: step {step} loss {:.4} grad_norm {:.3} lr {:.2e}",
                report.loss, report.grad_norm, report.lr
            );
        }
        if tc.checkpoint_schedule.binary_search(&step).is_ok() {
            save(&model, &opt, step, &mut manifest)?;
        }
    }
    write_atomic(&out_dir.join(RUN_MANIFEST), &serde_json::to_vec_pretty(&manifest)?)?;
    std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(manifest.checkpoints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Documents};
    use crate::nlm::AttentionMode;

    fn corpus() -> TokenizedCorpus {
        let docs = Documents::from_texts(
            (0..40).map(|i| format!("the cat sat on mat {}\nthe dog ran far\n", i % 3)),
        );
        let vocab = build_vocab(docs.train_docs().unwrap().iter().map(String::as_str), 50).unwrap();
        TokenizedCorpus::new(&docs, &vocab).unwrap()
    }

    fn configs(vocab: usize) -> (ModelConfig, TrainConfig) {
        (
            ModelConfig {
                width: 8,
                layers: 1,
                heads: 2,
                seq_len: 8,
                vocab_size: vocab,
                attention: AttentionMode::Standard,
                seed: 5,
            },
            TrainConfig {
                learning_rate: 1e-2,
                warmup_steps: 5,
                batch_size: 2,
                total_steps: 20,
                checkpoint_schedule: vec![10, 20],
                ..Default::default()
            },
        )
    }

    #[test]
    fn schedule_and_determinism() {
        let c = corpus();
        let (mc, tc) = configs(c.vocab_size);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run_training(&c, "m", &mc, &tc, d1.path()).unwrap();
        let b = run_training(&c, "m", &mc, &tc, d2.path()).unwrap();
        assert_eq!(a.iter().map(|m| m.step).collect::<Vec<_>>(), vec![10, 20]);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.dev_perplexity.to_bits(), y.dev_perplexity.to_bits());
            assert_eq!(x.params_sha256, y.params_sha256);
        }
        assert!(!d1.path().join(PARTIAL_MARKER).exists());
        assert!(d1.path().join(RUN_MANIFEST).exists());
    }

    #[test]
    fn resume_reproduces_run() {
        let c = corpus();
        let (mc, tc) = configs(c.vocab_size);
        let full = tempfile::tempdir().unwrap();
        let straight = run_training(&c, "m", &mc, &tc, full.path()).unwrap();
        let resumed_dir = tempfile::tempdir().unwrap();
        let resumed = resume_training(&c, &checkpoint_dir(full.path(), 10), resumed_dir.path()).unwrap();
        assert_eq!(resumed.len(), 1);
        assert_eq!(resumed[0].step, 20);
        assert_eq!(resumed[0].params_sha256, straight[1].params_sha256);
    }

    #[test]
    fn vocab_size_must_match() {
        let c = corpus();
        let (mut mc, tc) = configs(c.vocab_size);
        mc.vocab_size += 1;
        let d = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_training(&c, "m", &mc, &tc, d.path()),
            Err(Error::VocabMismatch { .. })
        ));
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let c = corpus();
        let (mc, _) = configs(c.vocab_size);
        let m = Model::<f32>::zeros(&mc).unwrap();
        let ppl = dev_perplexity(&m, &c).unwrap();
        assert!((ppl / c.vocab_size as f64 - 1.0).abs() < 1e-6, "{ppl}");
    }
}
