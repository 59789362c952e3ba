use super::config::TrainConfig;
use super::model::Model;
use super::scalar::Scalar;
use crate::corpus::Batch;
use crate::error::{Error, Result};

/// First and second moment estimates, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<F>,
    pub v: Vec<F>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
        }
    }

    /// Bias-corrected Adam update for optimizer step `step` (from 1).
    pub fn update(&mut self, params: &mut [F], grads: &[F], lr: f64, step: u64, tc: &TrainConfig) {
        let (b1, b2) = (F::of(tc.beta1), F::of(tc.beta2));
        let c1 = F::of(1.0 - tc.beta1.powi(step as i32));
        let c2 = F::of(1.0 - tc.beta2.powi(step as i32));
        let lr = F::of(lr);
        let eps = F::of(tc.epsilon);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (F::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (F::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

pub fn global_norm<F: Scalar>(grads: &[F]) -> f64 {
    grads.iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm<F: Scalar>(grads: &mut [F], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = F::of(max_norm / norm);
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

/// One optimizer step: backprop, clip, warm up the learning rate, update.
/// On a non-finite gradient the model and optimizer are left untouched.
pub fn train_step<F: Scalar>(
    model: &mut Model<F>,
    opt: &mut AdamState<F>,
    batch: &Batch,
    step: u64,
    tc: &TrainConfig,
) -> Result<StepReport> {
    if step == 0 {
        return Err(Error::InvalidArgument("step index starts at 1".into()));
    }
    let (loss, grads) = model.loss_and_grad(batch)?;
    let (grad_norm, lr) = apply_gradients(model, opt, grads, step, tc)?;
    Ok(StepReport {
        loss,
        grad_norm,
        lr,
    })
}

/// Clips `grads`, then applies one Adam update at the warmed-up learning
/// rate. Returns the pre-clip norm and the rate used.
pub fn apply_gradients<F: Scalar>(
    model: &mut Model<F>,
    opt: &mut AdamState<F>,
    mut grads: Vec<F>,
    step: u64,
    tc: &TrainConfig,
) -> Result<(f64, f64)> {
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        let tensor = model
            .layout
            .tensors
            .iter()
            .find(|t| t.range().contains(&i))
            .map(|t| t.name.clone())
            .unwrap_or_default();
        return Err(Error::NonFiniteGradient { tensor });
    }
    let grad_norm = clip_grad_norm(&mut grads, tc.max_grad_norm);
    let lr = tc.lr_at(step);
    opt.update(&mut model.params, &grads, lr, step, tc);
    Ok((grad_norm, lr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_hits_target_norm() {
        let mut g = vec![6.0f64, 8.0];
        let before = clip_grad_norm(&mut g, 1.0);
        assert_eq!(before, 10.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-6);
        assert!((g[0] - 0.6).abs() < 1e-12);

        let mut small = vec![0.3f32, 0.4];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        // with bias correction the first step is lr * g / (|g| + eps)
        let tc = TrainConfig::default();
        let mut p = vec![1.0f64, -1.0];
        let mut st = AdamState::new(2);
        st.update(&mut p, &[0.5, -2.0], 0.1, 1, &tc);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 0.9).abs() < 1e-7);
    }
}
