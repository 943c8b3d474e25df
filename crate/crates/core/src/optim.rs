//! Adam with global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::NetworkParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First/second moment accumulators shaped like the parameters, plus the
/// step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: NetworkParams,
    v: NetworkParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// Euclidean norm over all gradient entries.
pub fn global_norm(grads: &NetworkParams) -> f64 {
    let mut sq = 0.0;
    for m in grads.mats() {
        for &v in m.data() {
            sq += v * v;
        }
    }
    sq.sqrt()
}

/// Scale gradients in place so their global norm is at most `clip_norm`.
pub fn clip_global_norm(grads: &mut NetworkParams, clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm && norm > 0.0 {
        let scale = clip_norm / norm;
        for m in grads.mats_mut() {
            for v in m.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

fn adam_update(p: &mut Matrix, g: &Matrix, m: &mut Matrix, v: &mut Matrix, lr: f64, step: u64) {
    let bc1 = 1.0 - BETA1.powi(step as i32);
    let bc2 = 1.0 - BETA2.powi(step as i32);
    let pd = p.data_mut();
    let md = m.data_mut();
    let vd = v.data_mut();
    for i in 0..pd.len() {
        let gi = g.data()[i];
        md[i] = BETA1 * md[i] + (1.0 - BETA1) * gi;
        vd[i] = BETA2 * vd[i] + (1.0 - BETA2) * gi * gi;
        let m_hat = md[i] / bc1;
        let v_hat = vd[i] / bc2;
        pd[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
}

/// One Adam step; gradients must already be clipped by the caller (see
/// [`clip_global_norm`]).
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.dims != grads.dims {
        return Err(Error::Shape(format!(
            "adam_step: param dims {:?} vs grad dims {:?}",
            params.dims, grads.dims
        )));
    }
    state.step += 1;
    let step = state.step;
    let mut ms = state.m.mats_mut();
    let mut vs = state.v.mats_mut();
    let gs = grads.mats();
    for (i, p) in params.mats_mut().into_iter().enumerate() {
        adam_update(p, gs[i], ms[i], vs[i], lr, step);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, Dims};

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut params = init_params(Dims::new(2, 3, 2, 1), 7);
        let before = params.clone();
        let grads = params.zeros_like();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.001).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Hand evaluation: m_hat = g, v_hat = g^2, so the bias-corrected
        // first step is lr * g / (|g| + eps) ~= lr for g = 1.
        let mut params = init_params(Dims::new(2, 3, 2, 1), 7);
        let before = params.get_flat(0);
        let mut grads = params.zeros_like();
        grads.set_flat(0, 1.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.001).unwrap();
        let delta = before - params.get_flat(0);
        assert!((delta - 0.001).abs() < 1e-9, "delta {delta}");
    }

    #[test]
    fn clipping_caps_global_norm() {
        let params = init_params(Dims::new(2, 3, 2, 1), 7);
        let mut grads = params.zeros_like();
        let n = grads.param_count();
        for i in 0..n {
            grads.set_flat(i, 10.0);
        }
        let clip = 2.5;
        let pre = global_norm(&grads);
        assert!(pre > 10.0 * clip);
        clip_global_norm(&mut grads, clip);
        assert!((global_norm(&grads) - clip).abs() <= 1e-9);
        // Below the threshold nothing changes.
        let mut small = params.zeros_like();
        small.set_flat(0, 0.5);
        clip_global_norm(&mut small, clip);
        assert_eq!(small.get_flat(0), 0.5);
    }

    #[test]
    fn adam_matches_scalar_reference_over_steps() {
        let mut params = init_params(Dims::new(2, 3, 2, 1), 3);
        let idx = 5;
        let x0 = params.get_flat(idx);
        let mut state = AdamState::new(&params);
        let gs = [0.4, -1.2, 0.7, 0.0, 2.0];

        // Scalar reference.
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, x0);
        for (t, &g) in gs.iter().enumerate() {
            m = BETA1 * m + (1.0 - BETA1) * g;
            v = BETA2 * v + (1.0 - BETA2) * g * g;
            let mh = m / (1.0 - BETA1.powi(t as i32 + 1));
            let vh = v / (1.0 - BETA2.powi(t as i32 + 1));
            x -= 0.01 * mh / (vh.sqrt() + EPS);
        }

        for &g in &gs {
            let mut grads = params.zeros_like();
            grads.set_flat(idx, g);
            adam_step(&mut params, &grads, &mut state, 0.01).unwrap();
        }
        assert!((params.get_flat(idx) - x).abs() < 1e-12);
    }
}
