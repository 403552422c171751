//! Adam with bias correction, one moment pair per learnable tensor.

use crate::error::{Error, Result};
use crate::model::{Gradients, ModelParams};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    /// Original recommended defaults for everything but the learning rate.
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates, aligned with the model's canonical
/// learnable-tensor order.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    slots: Vec<(String, Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> AdamState {
        let slots = params
            .learnable()
            .iter()
            .map(|(name, t)| {
                (
                    name.clone(),
                    Tensor::zeros(t.shape()),
                    Tensor::zeros(t.shape()),
                )
            })
            .collect();
        AdamState { step: 0, slots }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update. Rejects non-finite gradients with a diagnostic naming
/// the offending tensor, and invalidates outstanding forward traces.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ModelParams,
    grads: &Gradients,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, g) in &grads.by_name {
        g.ensure_finite(&format!("gradient of {name}"))
            .map_err(|e| Error::Numerical(format!("aborting update: {e}")))?;
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);

    let mut slots = params.learnable_mut();
    if slots.len() != state.slots.len() || slots.len() != grads.by_name.len() {
        return Err(Error::InvalidArg(format!(
            "optimizer state ({}), gradients ({}), and parameters ({}) disagree",
            state.slots.len(),
            grads.by_name.len(),
            slots.len()
        )));
    }
    for (((p_name, param), (s_name, m, v)), (g_name, grad)) in slots
        .iter_mut()
        .zip(state.slots.iter_mut())
        .zip(grads.by_name.iter())
    {
        if p_name != s_name || p_name != g_name {
            return Err(Error::InvalidArg(format!(
                "parameter order mismatch: {p_name} vs {s_name} vs {g_name}"
            )));
        }
        let (md, vd, pd, gd) = (m.data_mut(), v.data_mut(), param.data_mut(), grad.data());
        for i in 0..gd.len() {
            let g = gd[i];
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * g;
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = md[i] / bias1;
            let v_hat = vd[i] / bias2;
            pd[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    drop(slots);
    params.bump_version();
    Ok(())
}
