//! Unigram and interpolated Kneser-Ney n-gram language models.
//!
//! Level `k` of an order-`n` model holds the distribution of a token given
//! the previous `k - 1` tokens. The top level counts raw n-grams; lower
//! levels count continuations (the number of distinct left neighbours of a
//! k-gram). Each level interpolates with the one below using a single
//! absolute discount `D = n1 / (n1 + 2 n2)`, and level 1 interpolates with
//! the uniform distribution over the vocabulary.

mod io;

use std::collections::{HashMap, HashSet};

use crate::corpus::TokenizedCorpus;
use crate::error::{Error, Result};
use crate::lm::{check_ids, LanguageModel};

pub const MAX_ORDER: usize = 5;

/// Discount used when a level has no singleton counts.
pub const FALLBACK_DISCOUNT: f64 = 0.5;

/// Pseudo-count given to tokens never seen by a unigram model.
pub const UNIGRAM_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ContextCounts {
    pub counts: HashMap<u32, u64>,
    pub total: u64,
}

impl ContextCounts {
    fn add(&mut self, token: u32, n: u64) {
        *self.counts.entry(token).or_insert(0) += n;
        self.total += n;
    }

    fn types(&self) -> usize {
        self.counts.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Level {
    pub contexts: HashMap<Box<[u32]>, ContextCounts>,
}

impl Level {
    fn counts_of_counts(&self) -> (u64, u64) {
        let mut n1 = 0;
        let mut n2 = 0;
        for ctx in self.contexts.values() {
            for &c in ctx.counts.values() {
                match c {
                    1 => n1 += 1,
                    2 => n2 += 1,
                    _ => {}
                }
            }
        }
        (n1, n2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    vocab_size: usize,
    vocab_hash: String,
    /// `levels[k - 1]` conditions on `k - 1` previous tokens.
    levels: Vec<Level>,
    discounts: Vec<f64>,
    warnings: Vec<String>,
}

/// Natural-log sentence score; `normalized` divides by `token_count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceScore {
    pub total_logprob: f64,
    pub token_count: usize,
    pub normalized: bool,
}

impl SentenceScore {
    pub fn value(&self) -> f64 {
        if self.normalized {
            self.total_logprob / self.token_count as f64
        } else {
            self.total_logprob
        }
    }
}

pub fn train_ngram(corpus: &TokenizedCorpus, order: usize) -> Result<NGramModel> {
    NGramModel::train(
        &corpus.train,
        order,
        corpus.vocab_size,
        corpus.vocab_hash.clone(),
    )
}

impl NGramModel {
    pub fn train(tokens: &[u32], order: usize, vocab_size: usize, vocab_hash: String) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "n-gram order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        if tokens.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange { id, vocab_size });
        }

        let mut levels = vec![Level::default(); order];

        // Top level: raw counts.
        for w in tokens.windows(order) {
            let (ctx, tok) = w.split_at(order - 1);
            levels[order - 1]
                .contexts
                .entry(ctx.into())
                .or_default()
                .add(tok[0], 1);
        }

        // Lower levels: one continuation per distinct (k+1)-gram.
        for k in 1..order {
            let distinct: HashSet<&[u32]> = tokens.windows(k + 1).collect();
            let level = &mut levels[k - 1];
            for gram in distinct {
                let (ctx, tok) = gram[1..].split_at(k - 1);
                level.contexts.entry(ctx.into()).or_default().add(tok[0], 1);
            }
        }

        Ok(Self::from_levels(order, vocab_size, vocab_hash, levels))
    }

    pub(crate) fn from_levels(order: usize, vocab_size: usize, vocab_hash: String, levels: Vec<Level>) -> Self {
        let mut warnings = Vec::new();
        let discounts = if order == 1 {
            Vec::new()
        } else {
            levels
                .iter()
                .enumerate()
                .map(|(i, level)| {
                    let (n1, n2) = level.counts_of_counts();
                    if n1 == 0 {
                        warnings.push(format!(
                            "order {}: no singleton counts, using fixed discount {FALLBACK_DISCOUNT}",
                            i + 1
                        ));
                        FALLBACK_DISCOUNT
                    } else {
                        n1 as f64 / (n1 as f64 + 2.0 * n2 as f64)
                    }
                })
                .collect()
        };
        NGramModel {
            order,
            vocab_size,
            vocab_hash,
            levels,
            discounts,
            warnings,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Raw unigram count of `token` (order-1 models only; zero otherwise).
    pub fn unigram_count(&self, token: u32) -> u64 {
        if self.order != 1 {
            return 0;
        }
        self.levels[0]
            .contexts
            .get(&[][..])
            .and_then(|c| c.counts.get(&token).copied())
            .unwrap_or(0)
    }

    /// `P(token | context)`, using at most the last `order - 1` context
    /// tokens. Shorter contexts are answered by the matching lower level.
    pub fn prob(&self, context: &[u32], token: u32) -> f64 {
        if self.order == 1 {
            return self.unigram_prob(token);
        }
        let ctx = &context[context.len().saturating_sub(self.order - 1)..];
        self.level_prob(ctx.len() + 1, ctx, token)
    }

    fn unigram_prob(&self, token: u32) -> f64 {
        let level = &self.levels[0];
        let empty = ContextCounts::default();
        let ctx = level.contexts.get(&[][..]).unwrap_or(&empty);
        let unseen = self.vocab_size - ctx.types();
        let denom = ctx.total as f64 + UNIGRAM_FLOOR * unseen as f64;
        match ctx.counts.get(&token) {
            Some(&c) => c as f64 / denom,
            None => UNIGRAM_FLOOR / denom,
        }
    }

    fn level_prob(&self, k: usize, ctx: &[u32], token: u32) -> f64 {
        debug_assert_eq!(ctx.len(), k - 1);
        let lower = if k == 1 {
            1.0 / self.vocab_size as f64
        } else {
            self.level_prob(k - 1, &ctx[1..], token)
        };
        let Some(stats) = self.levels[k - 1].contexts.get(ctx) else {
            return lower;
        };
        if stats.total == 0 {
            return lower;
        }
        let d = self.discounts[k - 1];
        let c = stats.counts.get(&token).copied().unwrap_or(0) as f64;
        ((c - d).max(0.0) + d * stats.types() as f64 * lower) / stats.total as f64
    }

    /// Full conditional distribution over the vocabulary.
    pub fn next_token_distribution(&self, context: &[u32]) -> Vec<f64> {
        if self.order == 1 {
            return (0..self.vocab_size as u32)
                .map(|t| self.unigram_prob(t))
                .collect();
        }
        let ctx = &context[context.len().saturating_sub(self.order - 1)..];
        let mut dist = vec![1.0 / self.vocab_size as f64; self.vocab_size];
        let top = ctx.len() + 1;
        for k in 1..=top {
            let sub = &ctx[ctx.len() - (k - 1)..];
            let Some(stats) = self.levels[k - 1].contexts.get(sub) else {
                continue;
            };
            if stats.total == 0 {
                continue;
            }
            let d = self.discounts[k - 1];
            let total = stats.total as f64;
            let backoff = d * stats.types() as f64 / total;
            for p in dist.iter_mut() {
                *p *= backoff;
            }
            for (&tok, &c) in &stats.counts {
                dist[tok as usize] += (c as f64 - d).max(0.0) / total;
            }
        }
        dist
    }

    /// `sum_i ln P(ids[i] | previous min(n-1, i) ids)` over every position.
    pub fn sequence_logprob(&self, ids: &[u32]) -> Result<f64> {
        check_ids(ids, self.vocab_size)?;
        Ok(self.logprob_from(ids, 0))
    }

    fn logprob_from(&self, ids: &[u32], start: usize) -> f64 {
        (start..ids.len())
            .map(|i| self.prob(&ids[..i], ids[i]).ln())
            .sum()
    }
}

impl LanguageModel for NGramModel {
    fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn conditional_logprob(&self, ids: &[u32]) -> Result<f64> {
        check_ids(ids, self.vocab_size)?;
        Ok(self.logprob_from(ids, 1))
    }

    fn dev_nll(&self, ids: &[u32]) -> Result<(f64, usize)> {
        check_ids(ids, self.vocab_size)?;
        Ok((-self.logprob_from(ids, 1), ids.len() - 1))
    }
}
