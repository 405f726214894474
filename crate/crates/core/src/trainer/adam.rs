use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |b: f64| b > 0.0 && b < 1.0;
        if !open_unit(self.beta1) || !open_unit(self.beta2) {
            return Err(Error::invalid("Adam betas must lie in (0, 1)"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("Adam eps must be positive"));
        }
        Ok(())
    }
}

/// First/second moment accumulators shaped like the parameters, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        let zeros = MlpParams::zeros(&params.architecture());
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Step size and bias corrections shared by every tensor of one step.
struct Step<'a> {
    lr: f64,
    bias1: f64,
    bias2: f64,
    cfg: &'a AdamConfig,
}

fn update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], step: &Step) {
    let Step {
        lr,
        bias1,
        bias2,
        cfg,
    } = *step;
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m).zip(v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Gradients are checked before anything is touched, so on error neither
/// `params` nor `state` change.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &MlpParams,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(Error::invalid(
            "Adam step: parameter, gradient and state shapes differ",
        ));
    }
    for (i, g) in grads.layers.iter().enumerate() {
        if g.weights.iter().chain(&g.bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: i });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let step = Step {
        lr,
        bias1: 1.0 - cfg.beta1.powi(t),
        bias2: 1.0 - cfg.beta2.powi(t),
        cfg,
    };
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m.layers)
        .zip(&mut state.v.layers)
    {
        update(
            &mut p.weights,
            &g.weights,
            &mut m.weights,
            &mut v.weights,
            &step,
        );
        update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias, &step);
    }
    Ok(())
}
