//! Two-layer sample-wise stateful LSTM with a softmax head.
//!
//! The cell follows the standard gate equations: `f`, `i`, `o` are
//! sigmoid gates, the candidate cell is a tanh, `c_t = f (*) c_prev +
//! i (*) candidate`, `h_t = o (*) tanh(c_t)`. Gates are packed into one
//! `4H x D_in` input matrix, one `4H x H` recurrent matrix and a
//! `4H x 1` bias in the fixed order `(f, i, candidate, o)`; that order
//! is part of the checkpoint contract.
//!
//! Training uses backpropagation through time truncated at the window
//! boundary: hidden/cell *values* carry into the next window, gradients
//! do not. Inverted dropout is applied to each layer's output (the
//! path up to the next layer or the classifier head, not the recurrent
//! path), with one mask per window per lane so the recurrent signal
//! inside a window stays intact.

use crate::error::{Error, Result};
use crate::matrix::{
    add_assign, add_col_broadcast, col_sums, hadamard, matmul, matmul_tn, sigmoid, softmax_rows,
    tanh_m, Matrix,
};
use crate::rng::RngStream;

/// Network dimensions: `input` channels, `hidden` units per layer,
/// `classes`, LSTM `layers`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    pub layers: usize,
}

impl Dims {
    pub fn new(input: usize, hidden: usize, classes: usize, layers: usize) -> Self {
        Dims { input, hidden, classes, layers }
    }

    /// Input width of layer `l`: raw channels for layer 0, `hidden` above.
    pub fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input
        } else {
            self.hidden
        }
    }
}

/// One LSTM layer's parameters, gate-packed as `(f, i, candidate, o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputParams {
    pub w_hc: Matrix,
    pub bias_c: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LstmLayerParams>,
    pub output: OutputParams,
    pub dims: Dims,
}

/// Per-layer hidden and cell state for `B` parallel lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h: Matrix,
    pub c: Matrix,
}

impl LayerState {
    pub fn zeros(lanes: usize, hidden: usize) -> Self {
        LayerState { h: Matrix::zeros(lanes, hidden), c: Matrix::zeros(lanes, hidden) }
    }

    /// Zero one lane's hidden and cell rows.
    pub fn reset_lane(&mut self, lane: usize) {
        for v in self.h.row_mut(lane) {
            *v = 0.0;
        }
        for v in self.c.row_mut(lane) {
            *v = 0.0;
        }
    }
}

/// Fresh zero state for every layer of `net`.
pub fn zero_states(net: &NetworkParams, lanes: usize) -> Vec<LayerState> {
    (0..net.dims.layers)
        .map(|_| LayerState::zeros(lanes, net.dims.hidden))
        .collect()
}

/// Gate activations and outputs of one `lstm_step`.
#[derive(Debug, Clone)]
pub struct GateRecord {
    pub f: Matrix,
    pub i: Matrix,
    pub g: Matrix,
    pub o: Matrix,
    pub c: Matrix,
    pub h: Matrix,
}

/// Everything the backward pass needs to reproduce the forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    dims: Dims,
    lanes: usize,
    state0: Vec<LayerState>,
    /// `[t][layer]`: input fed to that layer (post-dropout of the layer below).
    inputs: Vec<Vec<Matrix>>,
    /// `[t][layer]` gate record.
    gates: Vec<Vec<GateRecord>>,
    /// `[t]`: dropped top-layer output fed to the classifier head.
    head_inputs: Vec<Matrix>,
    /// `[t]`: class probabilities.
    pub probs: Vec<Matrix>,
    /// Per-layer keep masks, pre-scaled by `1/(1-p)`; `None` in infer mode
    /// or when `dropout_p == 0`.
    keep_masks: Option<Vec<Matrix>>,
}

pub enum ForwardMode<'a> {
    Train { dropout_p: f64, rng: &'a mut RngStream },
    Infer,
}

fn glorot(rng: &mut RngStream, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(-limit, limit).expect("valid range"))
}

/// Glorot-uniform weights, zero biases except the forget-gate slice at 1.0.
pub fn init_params(dims: Dims, seed: u64) -> NetworkParams {
    let h = dims.hidden;
    let layers = (0..dims.layers)
        .map(|l| {
            let d_in = dims.layer_input(l);
            let mut rx = RngStream::named(seed, "init.w_x").substream(l as u64);
            let mut rh = RngStream::named(seed, "init.w_h").substream(l as u64);
            let mut bias = Matrix::zeros(4 * h, 1);
            for r in 0..h {
                bias.set(r, 0, 1.0);
            }
            LstmLayerParams {
                w_x: glorot(&mut rx, 4 * h, d_in, d_in, h),
                w_h: glorot(&mut rh, 4 * h, h, h, h),
                bias,
            }
        })
        .collect();
    let mut ro = RngStream::named(seed, "init.w_hc");
    NetworkParams {
        layers,
        output: OutputParams {
            w_hc: glorot(&mut ro, dims.classes, h, h, dims.classes),
            bias_c: Matrix::zeros(dims.classes, 1),
        },
        dims,
    }
}

impl NetworkParams {
    /// Parameter matrices in checkpoint order: per layer `w_x, w_h, bias`,
    /// then `w_hc, bias_c`.
    pub fn mats(&self) -> Vec<&Matrix> {
        let mut v = Vec::with_capacity(self.layers.len() * 3 + 2);
        for l in &self.layers {
            v.push(&l.w_x);
            v.push(&l.w_h);
            v.push(&l.bias);
        }
        v.push(&self.output.w_hc);
        v.push(&self.output.bias_c);
        v
    }

    pub fn mats_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = Vec::with_capacity(self.layers.len() * 3 + 2);
        for l in &mut self.layers {
            v.push(&mut l.w_x);
            v.push(&mut l.w_h);
            v.push(&mut l.bias);
        }
        v.push(&mut self.output.w_hc);
        v.push(&mut self.output.bias_c);
        v
    }

    pub fn zeros_like(&self) -> NetworkParams {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayerParams {
                    w_x: Matrix::zeros(l.w_x.rows(), l.w_x.cols()),
                    w_h: Matrix::zeros(l.w_h.rows(), l.w_h.cols()),
                    bias: Matrix::zeros(l.bias.rows(), l.bias.cols()),
                })
                .collect(),
            output: OutputParams {
                w_hc: Matrix::zeros(self.output.w_hc.rows(), self.output.w_hc.cols()),
                bias_c: Matrix::zeros(self.output.bias_c.rows(), self.output.bias_c.cols()),
            },
            dims: self.dims,
        }
    }

    pub fn param_count(&self) -> usize {
        self.mats().iter().map(|m| m.len()).sum()
    }

    pub fn get_flat(&self, idx: usize) -> f64 {
        let mut i = idx;
        for m in self.mats() {
            if i < m.len() {
                return m.data()[i];
            }
            i -= m.len();
        }
        panic!("flat index {idx} out of range");
    }

    pub fn set_flat(&mut self, idx: usize, v: f64) {
        let mut i = idx;
        for m in self.mats_mut() {
            if i < m.len() {
                m.data_mut()[i] = v;
                return;
            }
            i -= m.len();
        }
        panic!("flat index {idx} out of range");
    }
}

/// One LSTM cell step for a batch of lanes.
///
/// `x_t` is `B x D_in`; returns the new state and the gate record.
pub fn lstm_step(
    layer: &LstmLayerParams,
    x_t: &Matrix,
    state: &LayerState,
) -> Result<(LayerState, GateRecord)> {
    let w_x_t = layer.w_x.transpose();
    let w_h_t = layer.w_h.transpose();
    lstm_step_pre_t(layer, &w_x_t, &w_h_t, x_t, state)
}

/// `lstm_step` with caller-supplied transposed weights, so a window pass
/// transposes once instead of per step. Bitwise-identical to `lstm_step`.
fn lstm_step_pre_t(
    layer: &LstmLayerParams,
    w_x_t: &Matrix,
    w_h_t: &Matrix,
    x_t: &Matrix,
    state: &LayerState,
) -> Result<(LayerState, GateRecord)> {
    let h = state.h.cols();
    if x_t.rows() != state.h.rows() {
        return Err(Error::Shape(format!(
            "lstm_step: input {}x{} vs state {}x{}",
            x_t.rows(),
            x_t.cols(),
            state.h.rows(),
            state.h.cols()
        )));
    }
    let z = add_col_broadcast(
        &crate::matrix::add(&matmul(x_t, w_x_t)?, &matmul(&state.h, w_h_t)?)?,
        &layer.bias,
    )?;
    let b = z.rows();
    let slice = |g: usize| -> Matrix { Matrix::from_fn(b, h, |r, c| z.get(r, g * h + c)) };
    let f = sigmoid(&slice(0));
    let i = sigmoid(&slice(1));
    let g = tanh_m(&slice(2));
    let o = sigmoid(&slice(3));
    let c = crate::matrix::add(&hadamard(&f, &state.c)?, &hadamard(&i, &g)?)?;
    let h_new = hadamard(&o, &tanh_m(&c))?;
    Ok((
        LayerState { h: h_new.clone(), c: c.clone() },
        GateRecord { f, i, g, o, c, h: h_new },
    ))
}

/// Run a window of `L` steps through all layers.
///
/// `x` is one matrix of shape `B x D` per timestep. Returns per-step
/// class probabilities, the final states for carry-over, and (in train
/// mode) the cache for [`backward_window`].
pub fn forward_window(
    net: &NetworkParams,
    x: &[Matrix],
    state0: &[LayerState],
    mode: ForwardMode,
) -> Result<(Vec<Matrix>, Vec<LayerState>, Option<ForwardCache>)> {
    match mode {
        ForwardMode::Infer => forward_window_masked(net, x, state0, None, false),
        ForwardMode::Train { dropout_p, rng } => {
            if !(0.0..1.0).contains(&dropout_p) {
                return Err(Error::InvalidArg(format!("dropout_p {dropout_p} outside [0, 1)")));
            }
            let masks = if dropout_p > 0.0 {
                let lanes = x.first().map_or(0, |m| m.rows());
                let keep = 1.0 - dropout_p;
                Some(
                    (0..net.dims.layers)
                        .map(|_| {
                            Matrix::from_fn(lanes, net.dims.hidden, |_, _| {
                                if rng.next_f64() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            })
                        })
                        .collect::<Vec<_>>(),
                )
            } else {
                None
            };
            forward_window_masked(net, x, state0, masks, true)
        }
    }
}

/// Train-mode forward with explicit keep masks (already scaled by
/// `1/(1-p)`); lets the gradient checker pin dropout draws.
pub fn forward_window_masked(
    net: &NetworkParams,
    x: &[Matrix],
    state0: &[LayerState],
    keep_masks: Option<Vec<Matrix>>,
    build_cache: bool,
) -> Result<(Vec<Matrix>, Vec<LayerState>, Option<ForwardCache>)> {
    if state0.len() != net.dims.layers {
        return Err(Error::Shape(format!(
            "forward_window: {} initial states for {} layers",
            state0.len(),
            net.dims.layers
        )));
    }
    let lanes = x.first().map_or(0, |m| m.rows());
    for (t, xt) in x.iter().enumerate() {
        if xt.cols() != net.dims.input || xt.rows() != lanes {
            return Err(Error::Shape(format!(
                "forward_window: step {t} input {}x{}, expected {lanes}x{}",
                xt.rows(),
                xt.cols(),
                net.dims.input
            )));
        }
    }
    if let Some(masks) = &keep_masks {
        if masks.len() != net.dims.layers {
            return Err(Error::Shape(format!(
                "forward_window: {} masks for {} layers",
                masks.len(),
                net.dims.layers
            )));
        }
    }

    let w_x_t: Vec<Matrix> = net.layers.iter().map(|l| l.w_x.transpose()).collect();
    let w_h_t: Vec<Matrix> = net.layers.iter().map(|l| l.w_h.transpose()).collect();
    let w_hc_t = net.output.w_hc.transpose();

    let mut states: Vec<LayerState> = state0.to_vec();
    let mut probs = Vec::with_capacity(x.len());
    let mut cache_inputs = Vec::new();
    let mut cache_gates = Vec::new();
    let mut cache_heads = Vec::new();

    for xt in x {
        let mut layer_inputs = Vec::with_capacity(net.dims.layers);
        let mut layer_gates = Vec::with_capacity(net.dims.layers);
        let mut current = xt.clone();
        for (l, layer) in net.layers.iter().enumerate() {
            let (next_state, rec) =
                lstm_step_pre_t(layer, &w_x_t[l], &w_h_t[l], &current, &states[l])?;
            states[l] = next_state;
            let out = match &keep_masks {
                Some(masks) => hadamard(&rec.h, &masks[l])?,
                None => rec.h.clone(),
            };
            if build_cache {
                layer_inputs.push(current);
                layer_gates.push(rec);
            }
            current = out;
        }
        let logits = add_col_broadcast(&matmul(&current, &w_hc_t)?, &net.output.bias_c)?;
        probs.push(softmax_rows(&logits));
        if build_cache {
            cache_inputs.push(layer_inputs);
            cache_gates.push(layer_gates);
            cache_heads.push(current);
        }
    }

    let cache = if build_cache {
        Some(ForwardCache {
            dims: net.dims,
            lanes,
            state0: state0.to_vec(),
            inputs: cache_inputs,
            gates: cache_gates,
            head_inputs: cache_heads,
            probs: probs.clone(),
            keep_masks,
        })
    } else {
        None
    };
    Ok((probs, states, cache))
}

fn ones_minus_sq(m: &Matrix) -> Matrix {
    m.map(|v| 1.0 - v * v)
}

fn sig_deriv(m: &Matrix) -> Matrix {
    m.map(|v| v * (1.0 - v))
}

/// Mean cross-entropy over unmasked `(lane, step)` pairs from cached probs.
fn masked_ce(cache: &ForwardCache, targets: &[Vec<usize>], loss_mask: &[Vec<bool>]) -> f64 {
    let mut n = 0usize;
    let mut total = 0.0;
    for (t, p) in cache.probs.iter().enumerate() {
        for b in 0..cache.lanes {
            if loss_mask[t][b] {
                total += -(p.get(b, targets[t][b]).ln());
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Truncated BPTT over one window.
///
/// Cross-entropy is averaged over unmasked `(lane, step)` pairs; masked
/// steps contribute exactly zero loss and gradient. The gradient into
/// `state0` is discarded (truncation at the window boundary).
pub fn backward_window(
    net: &NetworkParams,
    cache: &ForwardCache,
    targets: &[Vec<usize>],
    loss_mask: &[Vec<bool>],
) -> Result<(NetworkParams, f64)> {
    if cache.dims != net.dims {
        return Err(Error::Training(
            "forward cache does not match network dimensions".into(),
        ));
    }
    let steps = cache.probs.len();
    if targets.len() != steps || loss_mask.len() != steps {
        return Err(Error::Shape(format!(
            "backward_window: {} steps, targets {}, mask {}",
            steps,
            targets.len(),
            loss_mask.len()
        )));
    }
    let h = net.dims.hidden;
    let lanes = cache.lanes;
    let n_unmasked: usize = loss_mask
        .iter()
        .map(|row| row.iter().filter(|&&m| m).count())
        .sum();

    let mut grads = net.zeros_like();
    let loss = masked_ce(cache, targets, loss_mask);
    if n_unmasked == 0 {
        return Ok((grads, loss));
    }
    let inv_n = 1.0 / n_unmasked as f64;

    let mut d_h_next: Vec<Matrix> =
        (0..net.dims.layers).map(|_| Matrix::zeros(lanes, h)).collect();
    let mut d_c_next: Vec<Matrix> =
        (0..net.dims.layers).map(|_| Matrix::zeros(lanes, h)).collect();

    for t in (0..steps).rev() {
        // Head: d logits = (p - onehot(target)) / N on unmasked rows.
        let mut dlogits = cache.probs[t].clone();
        for b in 0..lanes {
            let row = dlogits.row_mut(b);
            if loss_mask[t][b] {
                row[targets[t][b]] -= 1.0;
                for v in row.iter_mut() {
                    *v *= inv_n;
                }
            } else {
                for v in row.iter_mut() {
                    *v = 0.0;
                }
            }
        }
        add_assign(&mut grads.output.w_hc, &matmul_tn(&dlogits, &cache.head_inputs[t])?)?;
        add_assign(&mut grads.output.bias_c, &col_sums(&dlogits))?;
        let d_head = matmul(&dlogits, &net.output.w_hc)?;

        // Gradient flowing into each layer's (undropped) output from above.
        let mut d_from_above = match &cache.keep_masks {
            Some(masks) => hadamard(&d_head, &masks[net.dims.layers - 1])?,
            None => d_head,
        };

        for l in (0..net.dims.layers).rev() {
            let rec = &cache.gates[t][l];
            let dh = crate::matrix::add(&d_from_above, &d_h_next[l])?;
            let tanh_c = tanh_m(&rec.c);
            let d_o = hadamard(&dh, &tanh_c)?;
            let dc = crate::matrix::add(
                &d_c_next[l],
                &hadamard(&hadamard(&dh, &rec.o)?, &ones_minus_sq(&tanh_c))?,
            )?;
            let (c_prev, h_prev) = if t == 0 {
                (&cache.state0[l].c, &cache.state0[l].h)
            } else {
                (&cache.gates[t - 1][l].c, &cache.gates[t - 1][l].h)
            };
            let d_f = hadamard(&dc, c_prev)?;
            let d_i = hadamard(&dc, &rec.g)?;
            let d_g = hadamard(&dc, &rec.i)?;
            d_c_next[l] = hadamard(&dc, &rec.f)?;

            let dz_f = hadamard(&d_f, &sig_deriv(&rec.f))?;
            let dz_i = hadamard(&d_i, &sig_deriv(&rec.i))?;
            let dz_g = hadamard(&d_g, &ones_minus_sq(&rec.g))?;
            let dz_o = hadamard(&d_o, &sig_deriv(&rec.o))?;
            let mut dz = Matrix::zeros(lanes, 4 * h);
            for b in 0..lanes {
                let row = dz.row_mut(b);
                row[..h].copy_from_slice(dz_f.row(b));
                row[h..2 * h].copy_from_slice(dz_i.row(b));
                row[2 * h..3 * h].copy_from_slice(dz_g.row(b));
                row[3 * h..].copy_from_slice(dz_o.row(b));
            }

            add_assign(&mut grads.layers[l].w_x, &matmul_tn(&dz, &cache.inputs[t][l])?)?;
            add_assign(&mut grads.layers[l].w_h, &matmul_tn(&dz, h_prev)?)?;
            add_assign(&mut grads.layers[l].bias, &col_sums(&dz))?;

            d_h_next[l] = matmul(&dz, &net.layers[l].w_h)?;
            if l > 0 {
                let d_input = matmul(&dz, &net.layers[l].w_x)?;
                d_from_above = match &cache.keep_masks {
                    Some(masks) => hadamard(&d_input, &masks[l - 1])?,
                    None => d_input,
                };
            }
        }
        // At t == 0 the remaining d_h_next / d_c_next are the gradients
        // into state0; truncation drops them with the loop.
    }

    Ok((grads, loss))
}

/// Max relative error between BPTT and central finite differences.
pub fn gradient_check(
    net: &NetworkParams,
    x: &[Matrix],
    targets: &[Vec<usize>],
    loss_mask: &[Vec<bool>],
    eps: f64,
) -> Result<f64> {
    gradient_check_scaled(net, x, targets, loss_mask, eps, 1.0)
}

/// `gradient_check` with the recurrent-weight gradients scaled by
/// `w_h_scale` before comparison; `!= 1.0` exercises checker sensitivity.
pub fn gradient_check_scaled(
    net: &NetworkParams,
    x: &[Matrix],
    targets: &[Vec<usize>],
    loss_mask: &[Vec<bool>],
    eps: f64,
    w_h_scale: f64,
) -> Result<f64> {
    let lanes = x.first().map_or(0, |m| m.rows());
    let state0 = zero_states(net, lanes);
    let (_, _, cache) = forward_window_masked(net, x, &state0, None, true)?;
    let cache = cache.expect("cache requested");
    let (mut grads, _) = backward_window(net, &cache, targets, loss_mask)?;
    if w_h_scale != 1.0 {
        for layer in &mut grads.layers {
            for v in layer.w_h.data_mut() {
                *v *= w_h_scale;
            }
        }
    }

    let mut probe = net.clone();
    let mut max_rel = 0.0f64;
    for idx in 0..net.param_count() {
        let orig = probe.get_flat(idx);
        probe.set_flat(idx, orig + eps);
        let (_, _, cp) = forward_window_masked(&probe, x, &state0, None, true)?;
        let lp = masked_ce(&cp.expect("cache"), targets, loss_mask);
        probe.set_flat(idx, orig - eps);
        let (_, _, cm) = forward_window_masked(&probe, x, &state0, None, true)?;
        let lm = masked_ce(&cm.expect("cache"), targets, loss_mask);
        probe.set_flat(idx, orig);

        let numeric = (lp - lm) / (2.0 * eps);
        let analytic = grads.get_flat(idx);
        // The small-denominator floor is 1e-6: central differences of an
        // O(1) f64 loss carry ~1e-11 absolute noise at eps=1e-5, so
        // gradients below ~1e-6 are indistinguishable from zero at FD
        // resolution and both sides count as agreeing there.
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
    }
    Ok(max_rel)
}
