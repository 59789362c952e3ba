use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A `rows x cols` block of token ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Batch {
    pub rows: usize,
    pub cols: usize,
    pub ids: Vec<u32>,
}

impl Batch {
    pub fn new(rows: usize, cols: usize, ids: Vec<u32>) -> Self {
        assert_eq!(rows * cols, ids.len());
        Batch { rows, cols, ids }
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r * self.cols..(r + 1) * self.cols]
    }
}

/// Deterministic epoch-shuffled stream of contiguous `batch_size x seq_len`
/// blocks cut from a token stream.
///
/// The train stream is cut into `floor(len / (batch_size * seq_len))`
/// blocks; the tail is dropped. Each epoch visits every block once in an
/// order drawn from `(seed, epoch)`, so the block for any global index can
/// be recomputed without replaying the stream.
#[derive(Debug, Clone)]
pub struct BatchStream<'a> {
    tokens: &'a [u32],
    batch_size: usize,
    seq_len: usize,
    seed: u64,
    n_blocks: usize,
    epoch: u64,
    order: Vec<usize>,
    next: u64,
}

impl<'a> BatchStream<'a> {
    pub fn new(tokens: &'a [u32], batch_size: usize, seq_len: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || seq_len == 0 {
            return Err(Error::InvalidArgument(
                "batch_size and seq_len must be at least 1".into(),
            ));
        }
        let block = batch_size * seq_len;
        let n_blocks = tokens.len() / block;
        if n_blocks == 0 {
            return Err(Error::CorpusTooShort {
                tokens: tokens.len(),
                needed: block,
            });
        }
        Ok(BatchStream {
            tokens,
            batch_size,
            seq_len,
            seed,
            n_blocks,
            epoch: 0,
            order: epoch_order(seed, 0, n_blocks),
            next: 0,
        })
    }

    pub fn blocks_per_epoch(&self) -> usize {
        self.n_blocks
    }

    pub fn dropped_per_epoch(&self) -> usize {
        self.tokens.len() - self.n_blocks * self.batch_size * self.seq_len
    }

    /// Global index of the next block to be yielded.
    pub fn position(&self) -> u64 {
        self.next
    }

    /// Moves the stream so the next block yielded has global index `index`.
    pub fn seek(&mut self, index: u64) {
        self.next = index;
        let epoch = index / self.n_blocks as u64;
        if epoch != self.epoch {
            self.epoch = epoch;
            self.order = epoch_order(self.seed, epoch, self.n_blocks);
        }
    }

    fn block(&self, b: usize) -> Batch {
        let len = self.batch_size * self.seq_len;
        Batch::new(
            self.batch_size,
            self.seq_len,
            self.tokens[b * len..(b + 1) * len].to_vec(),
        )
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let index = self.next;
        self.seek(index);
        let within = (index % self.n_blocks as u64) as usize;
        let batch = self.block(self.order[within]);
        self.next = index + 1;
        Some(batch)
    }
}

fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}
