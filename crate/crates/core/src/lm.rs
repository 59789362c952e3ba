use crate::error::{Error, Result};

/// Anything that can score token sequences over a shared vocabulary.
pub trait LanguageModel: Sync {
    fn vocab_hash(&self) -> &str;

    fn vocab_size(&self) -> usize;

    /// `sum_{i>=1} ln P(ids[i] | ids[..i])`: the first token is context only.
    fn conditional_logprob(&self, ids: &[u32]) -> Result<f64>;

    /// Summed negative log-likelihood over a held-out stream and the number
    /// of predicted tokens.
    fn dev_nll(&self, ids: &[u32]) -> Result<(f64, usize)>;

    fn perplexity(&self, ids: &[u32]) -> Result<f64> {
        let (nll, n) = self.dev_nll(ids)?;
        if n == 0 {
            return Err(Error::EmptySequence);
        }
        Ok((nll / n as f64).exp())
    }
}

pub(crate) fn check_ids(ids: &[u32], vocab_size: usize) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    match ids.iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(Error::TokenOutOfRange { id, vocab_size }),
        None => Ok(()),
    }
}
