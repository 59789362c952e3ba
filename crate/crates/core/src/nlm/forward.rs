//! Forward and backward passes over a `B x T` block of token ids.
//!
//! Layout follows the usual pre-norm GPT-2 block:
//! `x + proj(attn(ln1(x)))`, then `x + mlp(ln2(x))`, then a final norm and
//! logits against the tied token embedding. Activations are kept in flat
//! row-major buffers with one row per `(b, t)` position.

use rayon::prelude::*;

use super::config::AttentionMode;
use super::model::Model;
use super::scalar::{axpy, dot, Scalar};
use crate::corpus::Batch;
use crate::error::{Error, Result};
use crate::lm::check_ids;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerActivations<F> {
    pub ln1: Vec<F>,
    pub ln1_mean: Vec<F>,
    pub ln1_rstd: Vec<F>,
    /// `[BT, 3d]` (q | k | v) in standard mode, `[BT, d]` values otherwise.
    pub qkv: Vec<F>,
    /// Softmax weights `[B, H, T, T]`; empty in the uniform modes.
    pub att: Vec<F>,
    /// Attention output before the output projection, `[BT, d]`.
    pub atty: Vec<F>,
    pub res2: Vec<F>,
    pub ln2: Vec<F>,
    pub ln2_mean: Vec<F>,
    pub ln2_rstd: Vec<F>,
    pub fch: Vec<F>,
    pub fch_gelu: Vec<F>,
    pub res3: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct Activations<F> {
    pub batch: usize,
    pub len: usize,
    pub encoded: Vec<F>,
    pub layers: Vec<LayerActivations<F>>,
    pub lnf: Vec<F>,
    pub lnf_mean: Vec<F>,
    pub lnf_rstd: Vec<F>,
    /// `[B, T, V]`
    pub logits: Vec<F>,
}

impl<F: Scalar> Activations<F> {
    pub fn logits_at(&self, b: usize, t: usize) -> &[F] {
        let v = self.logits.len() / (self.batch * self.len);
        let row = b * self.len + t;
        &self.logits[row * v..(row + 1) * v]
    }

    /// Values averaged (or attended) by layer `l`, viewed as `[BT, d]`.
    pub fn values(&self, l: usize, width: usize) -> Vec<F> {
        let qkv = &self.layers[l].qkv;
        let stride = qkv.len() / (self.batch * self.len);
        let off = stride - width;
        qkv.chunks(stride).flat_map(|r| r[off..].iter().copied()).collect()
    }
}

impl<F: Scalar> Model<F> {
    fn p(&self, off: usize, len: usize) -> &[F] {
        &self.params[off..off + len]
    }

    pub fn forward(&self, ids: &[u32], batch: usize, len: usize) -> Result<Activations<F>> {
        let c = &self.config;
        check_ids(ids, c.vocab_size)?;
        if ids.len() != batch * len {
            return Err(Error::InvalidArgument(format!(
                "{} ids do not form a {batch}x{len} block",
                ids.len()
            )));
        }
        if len > c.seq_len {
            return Err(Error::SequenceTooLong {
                len,
                max: c.seq_len,
            });
        }
        let d = c.width;
        let bt = batch * len;
        let lo = &self.layout;

        let mut encoded = vec![F::zero(); bt * d];
        let wte = self.p(lo.wte, c.vocab_size * d);
        for (r, out) in encoded.chunks_mut(d).enumerate() {
            let tok = ids[r] as usize;
            out.copy_from_slice(&wte[tok * d..(tok + 1) * d]);
            if let Some(wpe) = lo.wpe {
                let t = r % len;
                for (o, &p) in out.iter_mut().zip(self.p(wpe + t * d, d)) {
                    *o += p;
                }
            }
        }

        let mut layers: Vec<LayerActivations<F>> = Vec::with_capacity(c.layers);
        for (l, off) in lo.layers.iter().enumerate() {
            let input = if l == 0 { &encoded } else { &layers[l - 1].res3 };
            let attn_rows = if c.attention.has_positions() { 3 * d } else { d };

            let (ln1, ln1_mean, ln1_rstd) =
                layernorm_forward(input, self.p(off.ln1_w, d), self.p(off.ln1_b, d), d);
            let mut qkv = vec![F::zero(); bt * attn_rows];
            matmul_forward(
                &mut qkv,
                &ln1,
                self.p(off.attn_w, attn_rows * d),
                Some(self.p(off.attn_b, attn_rows)),
                d,
                attn_rows,
            );
            let mut atty = vec![F::zero(); bt * d];
            let mut att = Vec::new();
            match c.attention {
                AttentionMode::Standard => {
                    att = vec![F::zero(); batch * c.heads * len * len];
                    attention_forward(&mut atty, &mut att, &qkv, len, d, c.heads);
                }
                mode => uniform_forward(&mut atty, &qkv, len, d, mode),
            }
            let mut res2 = vec![F::zero(); bt * d];
            matmul_forward(
                &mut res2,
                &atty,
                self.p(off.proj_w, d * d),
                Some(self.p(off.proj_b, d)),
                d,
                d,
            );
            for (o, &x) in res2.iter_mut().zip(input.iter()) {
                *o += x;
            }
            let (ln2, ln2_mean, ln2_rstd) =
                layernorm_forward(&res2, self.p(off.ln2_w, d), self.p(off.ln2_b, d), d);
            let mut fch = vec![F::zero(); bt * 4 * d];
            matmul_forward(
                &mut fch,
                &ln2,
                self.p(off.fc_w, 4 * d * d),
                Some(self.p(off.fc_b, 4 * d)),
                d,
                4 * d,
            );
            let fch_gelu: Vec<F> = fch.iter().map(|&x| gelu(x)).collect();
            let mut res3 = vec![F::zero(); bt * d];
            matmul_forward(
                &mut res3,
                &fch_gelu,
                self.p(off.fcp_w, 4 * d * d),
                Some(self.p(off.fcp_b, d)),
                4 * d,
                d,
            );
            for (o, &x) in res3.iter_mut().zip(res2.iter()) {
                *o += x;
            }
            if res3.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: l });
            }
            layers.push(LayerActivations {
                ln1,
                ln1_mean,
                ln1_rstd,
                qkv,
                att,
                atty,
                res2,
                ln2,
                ln2_mean,
                ln2_rstd,
                fch,
                fch_gelu,
                res3,
            });
        }

        let last = layers.last().map_or(&encoded, |l| &l.res3);
        let (lnf, lnf_mean, lnf_rstd) =
            layernorm_forward(last, self.p(lo.lnf_w, d), self.p(lo.lnf_b, d), d);
        let mut logits = vec![F::zero(); bt * c.vocab_size];
        matmul_forward(&mut logits, &lnf, wte, None, d, c.vocab_size);
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteActivation { layer: c.layers });
        }

        Ok(Activations {
            batch,
            len,
            encoded,
            layers,
            lnf,
            lnf_mean,
            lnf_rstd,
            logits,
        })
    }

    /// Forward pass plus mean next-token cross-entropy over every position
    /// that has a successor in its row.
    pub fn forward_loss(&self, batch: &Batch) -> Result<(Activations<F>, f64)> {
        if batch.cols < 2 {
            return Err(Error::InvalidArgument(
                "need at least 2 tokens per row for a next-token loss".into(),
            ));
        }
        let acts = self.forward(&batch.ids, batch.rows, batch.cols)?;
        let loss = cross_entropy(&acts, &batch.ids);
        Ok((acts, loss))
    }

    /// `ln P(ids[i + 1] | ids[..=i])` for every position of a single row.
    pub fn token_logprobs(&self, ids: &[u32]) -> Result<Vec<f64>> {
        let acts = self.forward(ids, 1, ids.len())?;
        Ok((0..ids.len().saturating_sub(1))
            .map(|t| log_softmax_at(acts.logits_at(0, t), ids[t + 1] as usize))
            .collect())
    }

    /// Gradient of the mean loss with respect to every parameter.
    pub fn backward(&self, acts: &Activations<F>, ids: &[u32]) -> Vec<F> {
        let c = &self.config;
        let lo = &self.layout;
        let d = c.width;
        let v = c.vocab_size;
        let (batch, len) = (acts.batch, acts.len);
        let bt = batch * len;
        let mut grads = vec![F::zero(); lo.total];

        // dlogits = (softmax - onehot) / count on rows with a target.
        let count = F::of((batch * (len - 1)) as f64);
        let mut dlogits = vec![F::zero(); bt * v];
        dlogits
            .par_chunks_mut(v)
            .enumerate()
            .for_each(|(r, dl)| {
                let t = r % len;
                if t + 1 >= len {
                    return;
                }
                let logits = &acts.logits[r * v..(r + 1) * v];
                let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
                let mut sum = F::zero();
                for (g, &x) in dl.iter_mut().zip(logits) {
                    *g = (x - max).exp();
                    sum += *g;
                }
                for g in dl.iter_mut() {
                    *g = *g / sum / count;
                }
                dl[ids[r + 1] as usize] -= F::one() / count;
            });

        let mut dlnf = vec![F::zero(); bt * d];
        {
            let wte = self.p(lo.wte, v * d);
            let dwte = &mut grads[lo.wte..lo.wte + v * d];
            matmul_backward(&mut dlnf, dwte, None, &dlogits, &acts.lnf, wte, d, v);
        }
        let last = acts.layers.last().map_or(&acts.encoded, |l| &l.res3);
        let mut dres = vec![F::zero(); bt * d];
        layernorm_backward(
            &mut dres,
            &mut grads,
            (lo.lnf_w, lo.lnf_b),
            &dlnf,
            last,
            self.p(lo.lnf_w, d),
            &acts.lnf_mean,
            &acts.lnf_rstd,
            d,
        );

        for l in (0..c.layers).rev() {
            let off = lo.layers[l];
            let a = &acts.layers[l];
            let input = if l == 0 { &acts.encoded } else { &acts.layers[l - 1].res3 };
            let attn_rows = if c.attention.has_positions() { 3 * d } else { d };

            // MLP branch; dres is d(res3) and flows straight into d(res2).
            let mut dfch = vec![F::zero(); bt * 4 * d];
            {
                let (dw, db) = two_mut(&mut grads, off.fcp_w, 4 * d * d, off.fcp_b, d);
                matmul_backward(&mut dfch, dw, Some(db), &dres, &a.fch_gelu, self.p(off.fcp_w, 4 * d * d), 4 * d, d);
            }
            for (g, &x) in dfch.iter_mut().zip(&a.fch) {
                *g *= gelu_grad(x);
            }
            let mut dln2 = vec![F::zero(); bt * d];
            {
                let (dw, db) = two_mut(&mut grads, off.fc_w, 4 * d * d, off.fc_b, 4 * d);
                matmul_backward(&mut dln2, dw, Some(db), &dfch, &a.ln2, self.p(off.fc_w, 4 * d * d), d, 4 * d);
            }
            layernorm_backward(
                &mut dres,
                &mut grads,
                (off.ln2_w, off.ln2_b),
                &dln2,
                &a.res2,
                self.p(off.ln2_w, d),
                &a.ln2_mean,
                &a.ln2_rstd,
                d,
            );

            // Attention branch; dres is now d(res2) and flows into d(input).
            let mut datty = vec![F::zero(); bt * d];
            {
                let (dw, db) = two_mut(&mut grads, off.proj_w, d * d, off.proj_b, d);
                matmul_backward(&mut datty, dw, Some(db), &dres, &a.atty, self.p(off.proj_w, d * d), d, d);
            }
            let mut dqkv = vec![F::zero(); bt * attn_rows];
            match c.attention {
                AttentionMode::Standard => {
                    attention_backward(&mut dqkv, &datty, &a.qkv, &a.att, len, d, c.heads)
                }
                mode => uniform_backward(&mut dqkv, &datty, len, d, mode),
            }
            let mut dln1 = vec![F::zero(); bt * d];
            {
                let (dw, db) = two_mut(&mut grads, off.attn_w, attn_rows * d, off.attn_b, attn_rows);
                matmul_backward(&mut dln1, dw, Some(db), &dqkv, &a.ln1, self.p(off.attn_w, attn_rows * d), d, attn_rows);
            }
            layernorm_backward(
                &mut dres,
                &mut grads,
                (off.ln1_w, off.ln1_b),
                &dln1,
                input,
                self.p(off.ln1_w, d),
                &a.ln1_mean,
                &a.ln1_rstd,
                d,
            );
        }

        // Embeddings.
        for r in 0..bt {
            let g = &dres[r * d..(r + 1) * d];
            let tok = ids[r] as usize;
            axpy(&mut grads[lo.wte + tok * d..lo.wte + (tok + 1) * d], F::one(), g);
            if let Some(wpe) = lo.wpe {
                let t = r % len;
                axpy(&mut grads[wpe + t * d..wpe + (t + 1) * d], F::one(), g);
            }
        }
        grads
    }

    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Vec<F>)> {
        let (acts, loss) = self.forward_loss(batch)?;
        let grads = self.backward(&acts, &batch.ids);
        Ok((loss, grads))
    }
}

fn two_mut<F>(buf: &mut [F], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [F], &mut [F]) {
    assert!(a + alen <= b, "tensors must be ordered and disjoint");
    let (head, tail) = buf.split_at_mut(b);
    (&mut head[a..a + alen], &mut tail[..blen])
}

pub(crate) fn log_softmax_at<F: Scalar>(logits: &[F], target: usize) -> f64 {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max).f64();
    let sum: f64 = logits.iter().map(|&x| (x.f64() - max).exp()).sum();
    logits[target].f64() - max - sum.ln()
}

fn cross_entropy<F: Scalar>(acts: &Activations<F>, ids: &[u32]) -> f64 {
    let (batch, len) = (acts.batch, acts.len);
    let mut total = 0.0;
    for b in 0..batch {
        for t in 0..len - 1 {
            let target = ids[b * len + t + 1] as usize;
            total -= log_softmax_at(acts.logits_at(b, t), target);
        }
    }
    total / (batch * (len - 1)) as f64
}

fn matmul_forward<F: Scalar>(out: &mut [F], inp: &[F], w: &[F], bias: Option<&[F]>, c_in: usize, c_out: usize) {
    out.par_chunks_mut(c_out)
        .zip(inp.par_chunks(c_in))
        .for_each(|(o, x)| {
            for (j, oj) in o.iter_mut().enumerate() {
                let b = bias.map_or(F::zero(), |b| b[j]);
                *oj = b + dot(x, &w[j * c_in..(j + 1) * c_in]);
            }
        });
}

/// Accumulates `dinp`, `dw` and `db` for `out = inp @ w^T + b`.
#[allow(clippy::too_many_arguments)]
fn matmul_backward<F: Scalar>(
    dinp: &mut [F],
    dw: &mut [F],
    db: Option<&mut [F]>,
    dout: &[F],
    inp: &[F],
    w: &[F],
    c_in: usize,
    c_out: usize,
) {
    let rows = dout.len() / c_out;
    dinp.par_chunks_mut(c_in)
        .zip(dout.par_chunks(c_out))
        .for_each(|(di, go)| {
            for (j, &g) in go.iter().enumerate() {
                if g != F::zero() {
                    axpy(di, g, &w[j * c_in..(j + 1) * c_in]);
                }
            }
        });
    // Each output channel sums its rows in a fixed order, so the result
    // does not depend on the thread count.
    dw.par_chunks_mut(c_in).enumerate().for_each(|(j, dwj)| {
        for r in 0..rows {
            let g = dout[r * c_out + j];
            if g != F::zero() {
                axpy(dwj, g, &inp[r * c_in..(r + 1) * c_in]);
            }
        }
    });
    if let Some(db) = db {
        for r in 0..rows {
            for (b, &g) in db.iter_mut().zip(&dout[r * c_out..(r + 1) * c_out]) {
                *b += g;
            }
        }
    }
}

fn layernorm_forward<F: Scalar>(inp: &[F], w: &[F], b: &[F], d: usize) -> (Vec<F>, Vec<F>, Vec<F>) {
    let rows = inp.len() / d;
    let mut out = vec![F::zero(); inp.len()];
    let mut means = vec![F::zero(); rows];
    let mut rstds = vec![F::zero(); rows];
    let n = F::of(d as f64);
    let eps = F::of(LN_EPS);
    for r in 0..rows {
        let x = &inp[r * d..(r + 1) * d];
        let mean = x.iter().copied().sum::<F>() / n;
        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        let rstd = F::one() / (var + eps).sqrt();
        for (i, o) in out[r * d..(r + 1) * d].iter_mut().enumerate() {
            *o = (x[i] - mean) * rstd * w[i] + b[i];
        }
        means[r] = mean;
        rstds[r] = rstd;
    }
    (out, means, rstds)
}

/// Adds the input gradient into `dinp` and the weight/bias gradients into
/// `grads` at the given offsets.
#[allow(clippy::too_many_arguments)]
fn layernorm_backward<F: Scalar>(
    dinp: &mut [F],
    grads: &mut [F],
    (w_off, b_off): (usize, usize),
    dout: &[F],
    inp: &[F],
    w: &[F],
    means: &[F],
    rstds: &[F],
    d: usize,
) {
    let n = F::of(d as f64);
    for r in 0..means.len() {
        let x = &inp[r * d..(r + 1) * d];
        let g = &dout[r * d..(r + 1) * d];
        let (mean, rstd) = (means[r], rstds[r]);
        let mut dnorm_mean = F::zero();
        let mut dnorm_norm_mean = F::zero();
        for i in 0..d {
            let norm = (x[i] - mean) * rstd;
            let dnorm = w[i] * g[i];
            dnorm_mean += dnorm;
            dnorm_norm_mean += dnorm * norm;
        }
        dnorm_mean /= n;
        dnorm_norm_mean /= n;
        for i in 0..d {
            let norm = (x[i] - mean) * rstd;
            let dnorm = w[i] * g[i];
            grads[b_off + i] += g[i];
            grads[w_off + i] += norm * g[i];
            dinp[r * d + i] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * rstd;
        }
    }
}

fn attention_forward<F: Scalar>(
    atty: &mut [F],
    att: &mut [F],
    qkv: &[F],
    len: usize,
    d: usize,
    heads: usize,
) {
    let hs = d / heads;
    let scale = F::one() / F::of(hs as f64).sqrt();
    let c3 = 3 * d;
    atty.par_chunks_mut(len * d)
        .zip(att.par_chunks_mut(heads * len * len))
        .enumerate()
        .for_each(|(b, (out, att_b))| {
            let qkv_b = &qkv[b * len * c3..(b + 1) * len * c3];
            for t in 0..len {
                for h in 0..heads {
                    let q = &qkv_b[t * c3 + h * hs..t * c3 + (h + 1) * hs];
                    let row = &mut att_b[(h * len + t) * len..(h * len + t + 1) * len];
                    let mut max = F::neg_infinity();
                    for t2 in 0..=t {
                        let k = &qkv_b[t2 * c3 + d + h * hs..t2 * c3 + d + (h + 1) * hs];
                        row[t2] = dot(q, k) * scale;
                        max = max.max(row[t2]);
                    }
                    let mut sum = F::zero();
                    for x in row[..=t].iter_mut() {
                        *x = (*x - max).exp();
                        sum += *x;
                    }
                    for x in row[..=t].iter_mut() {
                        *x /= sum;
                    }
                    let o = &mut out[t * d + h * hs..t * d + (h + 1) * hs];
                    for t2 in 0..=t {
                        let v = &qkv_b[t2 * c3 + 2 * d + h * hs..t2 * c3 + 2 * d + (h + 1) * hs];
                        axpy(o, row[t2], v);
                    }
                }
            }
        });
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<F: Scalar>(
    dqkv: &mut [F],
    datty: &[F],
    qkv: &[F],
    att: &[F],
    len: usize,
    d: usize,
    heads: usize,
) {
    let hs = d / heads;
    let scale = F::one() / F::of(hs as f64).sqrt();
    let c3 = 3 * d;
    dqkv.par_chunks_mut(len * c3).enumerate().for_each(|(b, dq_b)| {
        let qkv_b = &qkv[b * len * c3..(b + 1) * len * c3];
        let att_b = &att[b * heads * len * len..(b + 1) * heads * len * len];
        let mut datt = vec![F::zero(); len];
        for t in 0..len {
            for h in 0..heads {
                let row = &att_b[(h * len + t) * len..(h * len + t + 1) * len];
                let g = &datty[(b * len + t) * d + h * hs..(b * len + t) * d + (h + 1) * hs];
                let mut s = F::zero();
                for t2 in 0..=t {
                    let vo = t2 * c3 + 2 * d + h * hs;
                    datt[t2] = dot(&qkv_b[vo..vo + hs], g);
                    axpy(&mut dq_b[vo..vo + hs], row[t2], g);
                    s += row[t2] * datt[t2];
                }
                let qo = t * c3 + h * hs;
                for t2 in 0..=t {
                    let dpre = row[t2] * (datt[t2] - s) * scale;
                    if dpre == F::zero() {
                        continue;
                    }
                    let ko = t2 * c3 + d + h * hs;
                    for i in 0..hs {
                        let qi = qkv_b[qo + i];
                        let ki = qkv_b[ko + i];
                        dq_b[qo + i] += dpre * ki;
                        dq_b[ko + i] += dpre * qi;
                    }
                }
            }
        }
    });
}

fn uniform_forward<F: Scalar>(atty: &mut [F], v: &[F], len: usize, d: usize, mode: AttentionMode) {
    atty.par_chunks_mut(len * d).enumerate().for_each(|(b, out)| {
        let vb = &v[b * len * d..(b + 1) * len * d];
        for t in 0..len {
            let start = mode.window_start(t);
            let w = F::one() / F::of((t + 1 - start) as f64);
            let o = &mut out[t * d..(t + 1) * d];
            for t2 in start..=t {
                axpy(o, w, &vb[t2 * d..(t2 + 1) * d]);
            }
        }
    });
}

fn uniform_backward<F: Scalar>(dv: &mut [F], datty: &[F], len: usize, d: usize, mode: AttentionMode) {
    dv.par_chunks_mut(len * d).enumerate().for_each(|(b, dvb)| {
        for t in 0..len {
            let start = mode.window_start(t);
            let w = F::one() / F::of((t + 1 - start) as f64);
            let g = &datty[(b * len + t) * d..(b * len + t + 1) * d];
            for t2 in start..=t {
                axpy(&mut dvb[t2 * d..(t2 + 1) * d], w, g);
            }
        }
    });
}

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_CUBE: f64 = 0.044715;

fn gelu<F: Scalar>(x: F) -> F {
    let s = F::of(GELU_SCALE);
    let c = F::of(GELU_CUBE);
    let half = F::of(0.5);
    half * x * (F::one() + (s * (x + c * x * x * x)).tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let s = F::of(GELU_SCALE);
    let c = F::of(GELU_CUBE);
    let half = F::of(0.5);
    let th = (s * (x + c * x * x * x)).tanh();
    let sech2 = F::one() - th * th;
    half * (F::one() + th) + half * x * sech2 * s * (F::one() + F::of(3.0) * c * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlm::{ModelConfig, Model};

    fn cfg(mode: AttentionMode, layers: usize) -> ModelConfig {
        ModelConfig {
            width: 8,
            layers,
            heads: 2,
            seq_len: 16,
            vocab_size: 10,
            attention: mode,
            seed: 3,
        }
    }

    #[test]
    fn zero_model_gives_ln_v() {
        for mode in [AttentionMode::Standard, AttentionMode::Bow, AttentionMode::Window(2)] {
            let m = Model::<f64>::zeros(&cfg(mode, 2)).unwrap();
            let batch = Batch::new(2, 5, vec![1, 2, 3, 4, 5, 9, 8, 7, 6, 5]);
            let (acts, loss) = m.forward_loss(&batch).unwrap();
            assert!(acts.logits.iter().all(|&x| x == 0.0));
            assert!((loss - 10f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - num).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_long_and_out_of_vocab() {
        let m = Model::<f32>::new(&cfg(AttentionMode::Standard, 1)).unwrap();
        let long = vec![1u32; 17];
        assert!(matches!(
            m.forward(&long, 1, 17),
            Err(Error::SequenceTooLong { len: 17, max: 16 })
        ));
        assert!(matches!(
            m.forward(&[1, 10], 1, 2),
            Err(Error::TokenOutOfRange { id: 10, .. })
        ));
        assert!(m.forward_loss(&Batch::new(1, 1, vec![3])).is_err());
    }

    #[test]
    fn non_finite_activation_reports_layer() {
        let mut m = Model::<f32>::new(&cfg(AttentionMode::Standard, 2)).unwrap();
        let off = m.layout.get("h1.mlp.proj.bias").unwrap().offset;
        m.params[off] = f32::INFINITY;
        assert!(matches!(
            m.forward(&[1, 2, 3], 1, 3),
            Err(Error::NonFiniteActivation { layer: 1 })
        ));
    }

    #[test]
    fn causal_standard() {
        let m = Model::<f64>::new(&cfg(AttentionMode::Standard, 2)).unwrap();
        let a = m.forward(&[1, 2, 3, 4, 5, 6], 1, 6).unwrap();
        let b = m.forward(&[1, 2, 3, 9, 5, 6], 1, 6).unwrap();
        for t in 0..3 {
            assert_eq!(a.logits_at(0, t), b.logits_at(0, t));
        }
        assert_ne!(a.logits_at(0, 3), b.logits_at(0, 3));
    }

    #[test]
    fn token_logprobs_sum_to_loss() {
        let m = Model::<f64>::new(&cfg(AttentionMode::Standard, 1)).unwrap();
        let ids = [1u32, 4, 2, 7, 7];
        let lps = m.token_logprobs(&ids).unwrap();
        let (_, loss) = m.forward_loss(&Batch::new(1, 5, ids.to_vec())).unwrap();
        assert!((-lps.iter().sum::<f64>() / 4.0 - loss).abs() < 1e-12);
    }
}
