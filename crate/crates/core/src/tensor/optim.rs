use super::Tensor;
use crate::{Error, Result};

/// `log(1 + exp(-(s_pos - s_neg)))`, stable for large margins.
pub fn ranknet_loss(s_pos: f64, s_neg: f64) -> f64 {
    let z = s_neg - s_pos;
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Derivative of [`ranknet_loss`] with respect to `s_pos`; the derivative
/// with respect to `s_neg` is its negation.
pub fn ranknet_grad(s_pos: f64, s_neg: f64) -> f64 {
    let z = s_neg - s_pos;
    // -sigmoid(z), written to avoid overflow on either side
    if z >= 0.0 {
        -1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        -e / (1.0 + e)
    }
}

/// Bias-corrected Adam moments for a parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, params: &[Tensor]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
        adam_step(params, grads, self)
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Vec<f64>], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::shape(
                "adam_step",
                format!("param {i} has {} values, grad {}", p.len(), g.len()),
            ));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((x, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
