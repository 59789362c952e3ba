//! Binary model file, little-endian:
//!
//! ```text
//! magic "TLNGRAM\0" | version u32 | order u32 | vocab u32 | hash_len u32 | hash bytes
//! per level k = 1..=order:
//!     records u64 | records x (context u32 x (k-1), token u32, count u64)
//! ```
//! Records are sorted by (context, token). The top level stores raw counts,
//! lower levels store continuation counts.

use std::io::{Read, Write};
use std::path::Path;

use super::{Level, NGramModel, MAX_ORDER};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TLNGRAM\0";
const VERSION: u32 = 1;

impl NGramModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.order as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab_hash.len() as u32).to_le_bytes());
        out.extend_from_slice(self.vocab_hash.as_bytes());
        for level in &self.levels {
            let mut records: Vec<(&[u32], u32, u64)> = level
                .contexts
                .iter()
                .flat_map(|(ctx, cc)| cc.counts.iter().map(move |(&t, &c)| (&ctx[..], t, c)))
                .collect();
            records.sort_unstable();
            out.extend_from_slice(&(records.len() as u64).to_le_bytes());
            for (ctx, tok, count) in records {
                for &c in ctx {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                out.extend_from_slice(&tok.to_le_bytes());
                out.extend_from_slice(&count.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let order = read_u32(&mut r)? as usize;
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::Format(format!("bad order {order}")));
        }
        let vocab_size = read_u32(&mut r)? as usize;
        let hash_len = read_u32(&mut r)? as usize;
        if hash_len > 1024 {
            return Err(Error::Format("vocab hash too long".into()));
        }
        let mut hash = vec![0u8; hash_len];
        read_exact(&mut r, &mut hash)?;
        let vocab_hash =
            String::from_utf8(hash).map_err(|_| Error::Format("vocab hash not utf-8".into()))?;

        let mut levels = Vec::with_capacity(order);
        for k in 1..=order {
            let n = read_u64(&mut r)?;
            let mut level = Level::default();
            let mut ctx = vec![0u32; k - 1];
            for _ in 0..n {
                for c in ctx.iter_mut() {
                    *c = read_u32(&mut r)?;
                }
                let tok = read_u32(&mut r)?;
                let count = read_u64(&mut r)?;
                if tok as usize >= vocab_size || ctx.iter().any(|&c| c as usize >= vocab_size) {
                    return Err(Error::Format(format!("token id out of range at level {k}")));
                }
                level
                    .contexts
                    .entry(ctx.clone().into_boxed_slice())
                    .or_default()
                    .add(tok, count);
            }
            levels.push(level);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(NGramModel::from_levels(order, vocab_size, vocab_hash, levels))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = std::io::BufReader::new(f);
        Self::from_bytes(&mut r)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated model file: {e}")))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
