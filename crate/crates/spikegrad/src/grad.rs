//! Reverse-mode gradient engine for spiking networks.
//!
//! Three backward rules over a [`ForwardTrace`]:
//!
//! * the **activation route**: loss seeds on spike activations are pushed
//!   through a surrogate derivative of the thresholding function and the
//!   reset-gated state recursions (no reset paths);
//! * the **timing route**: loss seeds on spike times are pushed through
//!   `d t_hat / d V = -1 / V*` at spike steps and across layers through the
//!   time derivative of the spike response kernel;
//! * **BPTT** over the step recursion ([`backprop_rnn_bptt`]), optionally
//!   including the reset paths. Without them it reproduces the activation
//!   route exactly.
//!
//! [`backprop_antlr`] combines the two routes: the gradient at weights
//! `(lambda_act, lambda_tim)` is the weighted sum of the pure activation
//! pass and the pure timing pass, so it is linear in the lambda pair and
//! coincides with the individual rules at `(1,0)` and `(0,1)`.
//!
//! Both routes gate every backward recursion with `(1 - S[t])`: a spike cuts
//! the window, so nothing propagates to presynaptic events that happened
//! before the postsynaptic neuron's reset. The timing route's cross-layer
//! accumulation is evaluated with auxiliary running sums rather than an
//! explicit kernel loop; the quadratic loop form is kept as a test oracle.

use crate::error::{Error, Result};
use crate::loss::LossGrads;
use crate::neuron::{ForwardTrace, NeuronConfig, Parameters};

/// Gradient-rule selection and surrogate-derivative constants.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MethodConfig {
    /// Weight of the activation route.
    pub lambda_act: f64,
    /// Weight of the timing route.
    pub lambda_tim: f64,
    /// Surrogate derivative peak value.
    pub ste_alpha: f64,
    /// Surrogate derivative sharpness.
    pub ste_beta: f64,
    /// Use BPTT through the reset paths instead of the kernel-form rules.
    pub use_reset_paths: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            lambda_act: 1.0,
            lambda_tim: 1.0,
            ste_alpha: 0.3,
            ste_beta: 1.0,
            use_reset_paths: false,
        }
    }
}

impl MethodConfig {
    pub fn activation_only(&self) -> bool {
        self.lambda_act != 0.0 && self.lambda_tim == 0.0
    }

    pub fn timing_only(&self) -> bool {
        self.lambda_act == 0.0 && self.lambda_tim != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_act < 0.0 || self.lambda_tim < 0.0 {
            return Err(Error::Config("lambda_act and lambda_tim must be >= 0".into()));
        }
        if self.lambda_act == 0.0 && self.lambda_tim == 0.0 {
            return Err(Error::Config(
                "lambda_act = lambda_tim = 0 leaves no gradient path".into(),
            ));
        }
        if self.ste_alpha <= 0.0 || self.ste_beta <= 0.0 {
            return Err(Error::Config("ste_alpha and ste_beta must be > 0".into()));
        }
        if self.use_reset_paths && self.lambda_tim != 0.0 {
            return Err(Error::Config(
                "reset-path BPTT is a pure activation method; set lambda_tim = 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step gradient buffers of one non-input layer, time-major
/// (`buf[t * n + j]`).
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_s: Vec<f64>,
    pub d_v: Vec<f64>,
    pub d_v_dep: Vec<f64>,
    pub d_i: Vec<f64>,
    pub d_t_hat: Vec<f64>,
}

impl LayerGrads {
    fn zeros(len: usize) -> Self {
        LayerGrads {
            d_s: vec![0.0; len],
            d_v: vec![0.0; len],
            d_v_dep: vec![0.0; len],
            d_i: vec![0.0; len],
            d_t_hat: vec![0.0; len],
        }
    }

}

/// Backward-pass buffers for all non-input layers (`layers[l - 1]` holds
/// absolute layer `l`), plus a count of timing terms skipped because the
/// potential slope at a spike was exactly zero.
#[derive(Debug, Clone)]
pub struct GradientTrace {
    pub layers: Vec<LayerGrads>,
    pub v_star_guard_count: usize,
}

impl GradientTrace {
    fn zeros(trace: &ForwardTrace) -> Self {
        let layers = trace.layer_sizes[1..]
            .iter()
            .map(|&n| LayerGrads::zeros(trace.horizon * n))
            .collect();
        GradientTrace { layers, v_star_guard_count: 0 }
    }

}

/// Gradients of weights and biases, mirroring [`Parameters`] layout.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayerParamGrads {
    pub d_w: Vec<f64>,
    pub d_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamGrads {
    pub layers: Vec<LayerParamGrads>,
}

impl ParamGrads {
    pub fn zeros_like(params: &Parameters) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerParamGrads { d_w: vec![0.0; l.w.len()], d_bias: vec![0.0; l.bias.len()] })
            .collect();
        ParamGrads { layers }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.d_w.iter_mut().for_each(|x| *x *= c);
            l.d_bias.iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrads, c: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            for (d, &s) in dst.d_w.iter_mut().zip(&src.d_w) {
                *d += c * s;
            }
            for (d, &s) in dst.d_bias.iter_mut().zip(&src.d_bias) {
                *d += c * s;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.iter_flat().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.d_w.iter().chain(l.d_bias.iter()))
            .copied()
    }

    /// Flatten in [`Parameters::to_flat`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.iter_flat().collect()
    }

    /// Dot product against a flattened direction vector.
    pub fn dot_flat(&self, dir: &[f64]) -> f64 {
        self.iter_flat().zip(dir).map(|(g, &d)| g * d).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.iter_flat().all(|x| x.is_finite())
    }
}

/// Surrogate derivative of the thresholding function:
/// `sigma(v) = ste_alpha * exp(-ste_beta * |theta - v|)`.
#[inline]
pub fn surrogate_sigma(v: f64, cfg: &NeuronConfig, m: &MethodConfig) -> f64 {
    m.ste_alpha * (-m.ste_beta * (cfg.theta - v).abs()).exp()
}

/// Backward-difference slope of the potential, `V[t] - V[t-1]` with
/// `V[-1] = 0`. `layer` is the absolute layer index (>= 1).
#[inline]
pub fn v_star(trace: &ForwardTrace, layer: usize, t: usize, neuron: usize) -> f64 {
    let n = trace.layer_sizes[layer];
    let v = &trace.v[layer - 1];
    let now = v[t * n + neuron];
    if t == 0 {
        now
    } else {
        now - v[(t - 1) * n + neuron]
    }
}

/// The unified backward pass: one combined gradient field, top layer down.
///
/// At each layer the potential gradient mixes the two branches,
/// `dV = lambda_act * sigma(V) * dS - lambda_tim * dT / V*` (the timing
/// term at spike steps only), and the mixed field is what propagates
/// downward through both the current-gradient route and the kernel-slope
/// messages. A branch with zero weight is skipped entirely, so at `(1, 0)`
/// and `(0, 1)` this is exactly the corresponding single-route rule.
fn backprop_combined(
    trace: &ForwardTrace,
    params: &Parameters,
    seeds: &LossGrads,
    m: &MethodConfig,
    cfg: &NeuronConfig,
) -> Result<GradientTrace> {
    let horizon = trace.horizon;
    let num_layers = trace.layer_sizes.len();
    let mut gt = GradientTrace::zeros(trace);
    let use_act = m.lambda_act != 0.0;
    let use_tim = m.lambda_tim != 0.0;

    for l in (1..num_layers).rev() {
        let n = trace.layer_sizes[l];
        let s_l = &trace.s[l];
        let v_l = &trace.v[l - 1];

        // Cross-layer inputs: activation seeds or upper current gradients,
        // and timing seeds or upper kernel-slope messages.
        let (lower, upper) = gt.layers.split_at_mut(l);
        let lg = &mut lower[l - 1];
        if use_act {
            if l == num_layers - 1 {
                lg.d_s.copy_from_slice(&seeds.dl_ds);
            } else {
                let up_n = trace.layer_sizes[l + 1];
                let w_up = &params.layers[l].w;
                let d_i_up = &upper[0].d_i;
                for t in 0..horizon {
                    let up_row = &d_i_up[t * up_n..(t + 1) * up_n];
                    for j in 0..n {
                        let w_row = &w_up[j * up_n..(j + 1) * up_n];
                        let mut acc = 0.0;
                        for (w, di) in w_row.iter().zip(up_row) {
                            acc += w * di;
                        }
                        lg.d_s[t * n + j] = cfg.beta_i * acc;
                    }
                }
            }
        }
        if use_tim {
            if l == num_layers - 1 {
                // Timing seeds attach to spike steps only.
                for (idx, &sp) in s_l.iter().enumerate() {
                    if sp == 1 {
                        lg.d_t_hat[idx] = seeds.dl_dthat[idx];
                    }
                }
            } else {
                let msgs = timing_messages(trace, &upper[0], l + 1, cfg);
                let up_n = trace.layer_sizes[l + 1];
                let w_up = &params.layers[l].w;
                for t in 0..horizon {
                    let msg_row = &msgs[t * up_n..(t + 1) * up_n];
                    for j in 0..n {
                        if s_l[t * n + j] == 1 {
                            let w_row = &w_up[j * up_n..(j + 1) * up_n];
                            let mut acc = 0.0;
                            for (w, msg) in w_row.iter().zip(msg_row) {
                                acc += w * msg;
                            }
                            lg.d_t_hat[t * n + j] = acc;
                        }
                    }
                }
            }
        }
        for t in (0..horizon).rev() {
            for j in 0..n {
                let idx = t * n + j;
                let mut dv = 0.0;
                if use_act {
                    dv += m.lambda_act * surrogate_sigma(v_l[idx], cfg, m) * lg.d_s[idx];
                }
                if use_tim && s_l[idx] == 1 {
                    let slope = v_star(trace, l, t, j);
                    if slope == 0.0 {
                        gt.v_star_guard_count += 1;
                    } else {
                        dv -= m.lambda_tim * lg.d_t_hat[idx] / slope;
                    }
                }
                let gate = 1.0 - f64::from(s_l[idx]);
                let (dvdep_next, di_next) = if t + 1 == horizon {
                    (0.0, 0.0)
                } else {
                    (lg.d_v_dep[idx + n], lg.d_i[idx + n])
                };
                let dvdep = dv + cfg.alpha_v * gate * dvdep_next;
                let di = cfg.beta_v * dvdep + cfg.alpha_i * gate * di_next;
                lg.d_v[idx] = dv;
                lg.d_v_dep[idx] = dvdep;
                lg.d_i[idx] = di;
            }
        }

        check_layer_finite(lg, l, n)?;
    }
    Ok(gt)
}

/// Per-neuron timing messages of an upper layer: for each step `t`, the
/// kernel-slope-weighted sum of that layer's potential gradients over the
/// causal window anchored at a (hypothetical) presynaptic spike at `t`.
///
/// Evaluated with three running sums instead of a loop over the kernel:
/// `E[t] = beta_i * dI[t]` carries the plain kernel transform,
/// `G[t] = dV[t] + alpha_i * (1 - S[t]) * G[t+1]` carries the current-decay
/// component, and the step-(-1) term contributes `eps(0) * dV[t-1]`:
///
/// ```text
/// M[t] = (eps(0) * dV[t-1] + alpha_v * E[t]
///         + beta_i * beta_v * alpha_i * G[t] - (1 - S[t]) * E[t+1]) / 2
/// ```
fn timing_messages(
    trace: &ForwardTrace,
    upper: &LayerGrads,
    upper_layer: usize,
    cfg: &NeuronConfig,
) -> Vec<f64> {
    let horizon = trace.horizon;
    let n = trace.layer_sizes[upper_layer];
    let s_up = &trace.s[upper_layer];
    let eps0 = cfg.beta_i * cfg.beta_v;
    let mut msgs = vec![0.0; horizon * n];
    let mut g = vec![0.0; n];
    let mut g_next = vec![0.0; n];

    // G recursion runs backward; fill a full buffer first.
    let mut g_buf = vec![0.0; horizon * n];
    for t in (0..horizon).rev() {
        for j in 0..n {
            let idx = t * n + j;
            let gate = 1.0 - f64::from(s_up[idx]);
            let next = if t + 1 == horizon { 0.0 } else { g_next[j] };
            g[j] = upper.d_v[idx] + cfg.alpha_i * gate * next;
            g_buf[idx] = g[j];
        }
        std::mem::swap(&mut g, &mut g_next);
    }

    for t in 0..horizon {
        for j in 0..n {
            let idx = t * n + j;
            let e_t = cfg.beta_i * upper.d_i[idx];
            let e_next = if t + 1 == horizon { 0.0 } else { cfg.beta_i * upper.d_i[idx + n] };
            let dv_prev = if t == 0 { 0.0 } else { upper.d_v[idx - n] };
            let gate = 1.0 - f64::from(s_up[idx]);
            msgs[idx] = 0.5
                * (eps0 * dv_prev + cfg.alpha_v * e_t + eps0 * cfg.alpha_i * g_buf[idx]
                    - gate * e_next);
        }
    }
    msgs
}

fn check_layer_finite(lg: &LayerGrads, layer: usize, n: usize) -> Result<()> {
    for (idx, x) in lg.d_i.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFiniteGradient { layer, step: idx / n });
        }
    }
    for (idx, x) in lg.d_v_dep.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFiniteGradient { layer, step: idx / n });
        }
    }
    Ok(())
}

/// Combined activation- and timing-rule backward pass.
///
/// The gradient field mixes the two branches at every layer with weights
/// `(lambda_act, lambda_tim)`, so the timing seeds also reach lower layers
/// through the surrogate route and vice versa. `(1, 0)` is the pure
/// activation rule and `(0, 1)` the pure timing rule, exactly.
pub fn backprop_antlr(
    trace: &ForwardTrace,
    params: &Parameters,
    seeds: &LossGrads,
    m: &MethodConfig,
    cfg: &NeuronConfig,
) -> Result<(GradientTrace, ParamGrads)> {
    if m.lambda_act == 0.0 && m.lambda_tim == 0.0 {
        return Err(Error::Config("lambda_act = lambda_tim = 0 leaves no gradient path".into()));
    }
    let gt = backprop_combined(trace, params, seeds, m, cfg)?;
    let pg = assemble_param_grads(&gt, trace, cfg);
    Ok((gt, pg))
}

/// BPTT over the step recursion (activation seeds only).
///
/// With `use_reset_paths`, the spike's effect on the next step's state via
/// the `(1 - S[t])` factors is propagated:
/// `dS[t] += -alpha_i * I[t] * dI[t+1] - alpha_v * V[t] * dV[t+1]`.
/// Without it, the result matches [`backprop_antlr`] at `(1, 0)`.
pub fn backprop_rnn_bptt(
    trace: &ForwardTrace,
    params: &Parameters,
    seeds: &LossGrads,
    m: &MethodConfig,
    cfg: &NeuronConfig,
) -> Result<(GradientTrace, ParamGrads)> {
    let horizon = trace.horizon;
    let num_layers = trace.layer_sizes.len();
    let mut gt = GradientTrace::zeros(trace);

    for l in (1..num_layers).rev() {
        let n = trace.layer_sizes[l];
        let s_l = &trace.s[l];
        let v_l = &trace.v[l - 1];
        let i_l = &trace.i_syn[l - 1];

        // Upper-layer term of dS, independent of this layer's recursion.
        let (lower, upper) = gt.layers.split_at_mut(l);
        let lg = &mut lower[l - 1];
        if l == num_layers - 1 {
            lg.d_s.copy_from_slice(&seeds.dl_ds);
        } else {
            let up_n = trace.layer_sizes[l + 1];
            let w_up = &params.layers[l].w;
            let d_i_up = &upper[0].d_i;
            for t in 0..horizon {
                let up_row = &d_i_up[t * up_n..(t + 1) * up_n];
                for j in 0..n {
                    let w_row = &w_up[j * up_n..(j + 1) * up_n];
                    let mut acc = 0.0;
                    for (w, di) in w_row.iter().zip(up_row) {
                        acc += w * di;
                    }
                    lg.d_s[t * n + j] = cfg.beta_i * acc;
                }
            }
        }
        for t in (0..horizon).rev() {
            for j in 0..n {
                let idx = t * n + j;
                let (dv_next, di_next) = if t + 1 == horizon {
                    (0.0, 0.0)
                } else {
                    (lg.d_v[idx + n], lg.d_i[idx + n])
                };
                let mut ds = lg.d_s[idx];
                if m.use_reset_paths {
                    ds += -cfg.alpha_i * i_l[idx] * di_next - cfg.alpha_v * v_l[idx] * dv_next;
                    lg.d_s[idx] = ds;
                }
                let gate = 1.0 - f64::from(s_l[idx]);
                let dv = surrogate_sigma(v_l[idx], cfg, m) * ds + cfg.alpha_v * gate * dv_next;
                let di = cfg.beta_v * dv + cfg.alpha_i * gate * di_next;
                lg.d_v[idx] = dv;
                lg.d_i[idx] = di;
            }
        }
        // The BPTT potential gradient is already accumulated over time, so
        // it doubles as the dependency buffer used for bias assembly.
        lg.d_v_dep.copy_from_slice(&lg.d_v);

        check_layer_finite(lg, l, n)?;
    }

    let pg = assemble_param_grads(&gt, trace, cfg);
    Ok((gt, pg))
}

/// Fold step gradients into parameter gradients:
/// `dW[i][j] = sum_t dI[j][t] * beta_i * S_pre[i][t]` and
/// `dBias[j] = beta_bias * sum_t dVdep[j][t]`.
pub fn assemble_param_grads(
    gtrace: &GradientTrace,
    trace: &ForwardTrace,
    cfg: &NeuronConfig,
) -> ParamGrads {
    let horizon = trace.horizon;
    let mut layers = Vec::with_capacity(gtrace.layers.len());
    for l in 1..trace.layer_sizes.len() {
        let n_pre = trace.layer_sizes[l - 1];
        let n = trace.layer_sizes[l];
        let lg = &gtrace.layers[l - 1];
        let s_pre = &trace.s[l - 1];
        let mut d_w = vec![0.0; n_pre * n];
        let mut d_bias = vec![0.0; n];
        for t in 0..horizon {
            let d_i_row = &lg.d_i[t * n..(t + 1) * n];
            for i in 0..n_pre {
                if s_pre[t * n_pre + i] == 1 {
                    let w_row = &mut d_w[i * n..(i + 1) * n];
                    for (dw, &di) in w_row.iter_mut().zip(d_i_row) {
                        *dw += cfg.beta_i * di;
                    }
                }
            }
            for j in 0..n {
                d_bias[j] += cfg.beta_bias * lg.d_v_dep[t * n + j];
            }
        }
        layers.push(LayerParamGrads { d_w, d_bias });
    }
    ParamGrads { layers }
}
