//! Brute-force interpolated Kneser-Ney, computed by rescanning the token
//! list for every count it needs. Slow on purpose; shares no code with the
//! hash-table implementation.

#![allow(dead_code)]

use std::collections::BTreeSet;

pub struct KnOracle<'a> {
    pub tokens: &'a [u32],
    pub order: usize,
    pub vocab: usize,
}

impl<'a> KnOracle<'a> {
    pub fn new(tokens: &'a [u32], order: usize, vocab: usize) -> Self {
        KnOracle { tokens, order, vocab }
    }

    fn occurrences(&self, gram: &[u32]) -> Vec<usize> {
        if gram.len() > self.tokens.len() {
            return Vec::new();
        }
        (0..=self.tokens.len() - gram.len())
            .filter(|&i| &self.tokens[i..i + gram.len()] == gram)
            .collect()
    }

    fn raw(&self, gram: &[u32]) -> u64 {
        self.occurrences(gram).len() as u64
    }

    /// Distinct tokens seen immediately left of `gram`.
    fn continuation(&self, gram: &[u32]) -> u64 {
        let left: BTreeSet<u32> = self
            .occurrences(gram)
            .into_iter()
            .filter(|&i| i > 0)
            .map(|i| self.tokens[i - 1])
            .collect();
        left.len() as u64
    }

    /// Count used at level `k` (gram has length k).
    fn level_count(&self, gram: &[u32]) -> u64 {
        if gram.len() == self.order {
            self.raw(gram)
        } else {
            self.continuation(gram)
        }
    }

    pub fn discount(&self, k: usize) -> f64 {
        let grams: BTreeSet<&[u32]> = self.tokens.windows(k).collect();
        let mut n1 = 0u64;
        let mut n2 = 0u64;
        for g in grams {
            match self.level_count(g) {
                1 => n1 += 1,
                2 => n2 += 1,
                _ => {}
            }
        }
        if n1 == 0 {
            0.5
        } else {
            n1 as f64 / (n1 as f64 + 2.0 * n2 as f64)
        }
    }

    /// `P_k(w | ctx)` with `ctx.len() == k - 1`.
    pub fn level_prob(&self, k: usize, ctx: &[u32], w: u32) -> f64 {
        assert_eq!(ctx.len(), k - 1);
        let lower = if k == 1 {
            1.0 / self.vocab as f64
        } else {
            self.level_prob(k - 1, &ctx[1..], w)
        };
        let mut total = 0u64;
        let mut types = 0u64;
        let mut gram = ctx.to_vec();
        gram.push(0);
        for v in 0..self.vocab as u32 {
            *gram.last_mut().unwrap() = v;
            let c = self.level_count(&gram);
            total += c;
            if c > 0 {
                types += 1;
            }
        }
        if total == 0 {
            return lower;
        }
        *gram.last_mut().unwrap() = w;
        let c = self.level_count(&gram) as f64;
        let d = self.discount(k);
        ((c - d).max(0.0) + d * types as f64 * lower) / total as f64
    }

    pub fn prob(&self, context: &[u32], w: u32) -> f64 {
        if self.order == 1 {
            let n = self.tokens.len() as f64;
            let unseen = (0..self.vocab as u32).filter(|&v| self.raw(&[v]) == 0).count() as f64;
            let c = self.raw(&[w]) as f64;
            let c = if c == 0.0 { 0.5 } else { c };
            return c / (n + 0.5 * unseen);
        }
        let keep = context.len().min(self.order - 1);
        let ctx = &context[context.len() - keep..];
        self.level_prob(ctx.len() + 1, ctx, w)
    }

    pub fn sequence_logprob(&self, ids: &[u32]) -> f64 {
        (0..ids.len()).map(|i| self.prob(&ids[..i], ids[i]).ln()).sum()
    }
}

/// Small deterministic corpus with repeated structure and a skewed vocab.
pub fn toy_corpus(len: usize, vocab: u32, seed: u64) -> Vec<u32> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut out = Vec::with_capacity(len);
    let mut prev = 0u32;
    for _ in 0..len {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let r = (state >> 33) as u32;
        let tok = if r % 3 == 0 {
            (prev * 5 + 1) % vocab
        } else {
            let x = r % (vocab * vocab);
            (x as f64).sqrt() as u32 % vocab
        };
        out.push(tok);
        prev = tok;
    }
    out
}
