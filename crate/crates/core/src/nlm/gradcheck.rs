use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::config::ModelConfig;
use super::model::Model;
use crate::corpus::Batch;
use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 100;

/// Std of the noise added to every parameter before checking. At the
/// 0.02 init, attention logits are near zero and query/key gradients sit
/// around 1e-8, where central differences are mostly f64 roundoff.
pub const CHECK_SPREAD: f64 = 0.3;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub samples: usize,
    /// Worst relative error per tensor name.
    pub per_tensor: BTreeMap<String, f64>,
}

/// Below this magnitude errors are measured absolutely. Central
/// differences of an O(1) loss at epsilon 1e-5 carry roundoff near 1e-11,
/// which a smaller floor would report as a relative error for gradients
/// that are exactly zero (attention key biases, for one).
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares backprop gradients of a 64-bit model against central
/// differences on `samples` parameters spread over every tensor. The model
/// is the seeded init plus `CHECK_SPREAD` Gaussian noise on every
/// parameter, so biases, gains and attention scores are all non-trivial.
pub fn gradient_check(mc: &ModelConfig, batch: &Batch, epsilon: f64, samples: usize) -> Result<GradCheckReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let samples = samples.max(MIN_SAMPLES);
    let mut model = Model::<f64>::new(mc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed ^ 0x5851_f42d_4c95_7f2d);
    let noise = Normal::new(0.0, CHECK_SPREAD).expect("valid std");
    for p in model.params.iter_mut() {
        *p += noise.sample(&mut rng);
    }
    let (_, grads) = model.loss_and_grad(batch)?;

    let tensors = model.layout.tensors.clone();
    let per = samples.div_ceil(tensors.len());
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut per_tensor = BTreeMap::new();
    let mut max_rel: f64 = 0.0;
    let mut count = 0;
    for t in &tensors {
        let mut worst: f64 = 0.0;
        for _ in 0..per {
            let i = t.offset + rng.random_range(0..t.len());
            let orig = model.params[i];
            model.params[i] = orig + epsilon;
            let (_, plus) = model.forward_loss(batch)?;
            model.params[i] = orig - epsilon;
            let (_, minus) = model.forward_loss(batch)?;
            model.params[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(grads[i], numeric));
            count += 1;
        }
        max_rel = max_rel.max(worst);
        per_tensor.insert(t.name.clone(), worst);
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        samples: count,
        per_tensor,
    })
}
