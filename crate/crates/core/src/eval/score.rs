use serde::{Deserialize, Serialize};

use super::suite::MinimalPair;
use crate::corpus::{tokenize, Vocabulary};
use crate::error::{Error, Result};
use crate::lm::LanguageModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPolicy {
    Never,
    Always,
    #[default]
    WhenLengthsDiffer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceLogprob {
    /// Natural log, BOS excluded from the scored positions, EOS included.
    pub logprob: f64,
    /// Tokenizer tokens, sentence marks excluded.
    pub words: usize,
}

impl SentenceLogprob {
    pub fn per_word(&self) -> f64 {
        self.logprob / self.words as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub good: SentenceLogprob,
    pub bad: SentenceLogprob,
    pub normalized: bool,
    pub decision: bool,
}

/// Number of words used for length normalization and the length metric.
pub fn word_count(sentence: &str) -> usize {
    tokenize(sentence).len()
}

/// Scores `<s> sentence </s>`.
pub fn score_sentence(lm: &dyn LanguageModel, vocab: &Vocabulary, sentence: &str) -> Result<SentenceLogprob> {
    let words = word_count(sentence);
    if words == 0 {
        return Err(Error::EmptySentence(format!("{sentence:?}")));
    }
    let flat = sentence.split_whitespace().collect::<Vec<_>>().join(" ");
    let ids = vocab.encode(&flat, true);
    Ok(SentenceLogprob {
        logprob: lm.conditional_logprob(&ids)?,
        words,
    })
}

/// Decision is 1 iff the good sentence scores strictly higher after the
/// normalization policy; ties are 0.
pub fn decide(good: SentenceLogprob, bad: SentenceLogprob, norm: NormPolicy) -> (bool, bool) {
    let normalized = match norm {
        NormPolicy::Never => false,
        NormPolicy::Always => true,
        NormPolicy::WhenLengthsDiffer => good.words != bad.words,
    };
    let decision = if normalized {
        good.per_word() > bad.per_word()
    } else {
        good.logprob > bad.logprob
    };
    (decision, normalized)
}

pub fn score_pair(
    lm: &dyn LanguageModel,
    pair: &MinimalPair,
    vocab: &Vocabulary,
    norm: NormPolicy,
) -> Result<PairScore> {
    let good = score_sentence(lm, vocab, &pair.sentence_good)?;
    let bad = score_sentence(lm, vocab, &pair.sentence_bad)?;
    let (decision, normalized) = decide(good, bad, norm);
    Ok(PairScore {
        good,
        bad,
        normalized,
        decision,
    })
}
