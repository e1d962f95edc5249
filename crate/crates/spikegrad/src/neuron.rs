//! Discrete-time spiking neuron model and forward evaluation.
//!
//! A feed-forward network of leaky integrate-and-fire neurons with
//! current-based synapses is simulated over a fixed horizon of integer time
//! steps. The same dynamics can be evaluated two ways: a stateful
//! step-by-step recursion ([`forward_rnn`]) and a kernel-sum form
//! ([`forward_srm`]) that accumulates the response to every presynaptic
//! spike since the neuron's own last reset. Both produce identical spike
//! trains; the kernel form serves as an independent oracle for the
//! recursion.
//!
//! State update per step (postsynaptic neuron `j`):
//!
//! ```text
//! V[t] = alpha_v * (1 - S[t-1]) * V[t-1] + beta_v * I[t] + beta_bias * bias
//! I[t] = alpha_i * (1 - S[t-1]) * I[t-1] + beta_i * sum_i w[i][j] * S_pre[i][t]
//! S[t] = 1  iff  V[t] >= theta
//! ```
//!
//! The `(1 - S[t-1])` factor resets both the potential and the current on
//! the step after a spike.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decay, scale, and threshold constants shared by every neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronConfig {
    /// Potential decay per step, in `[0, 1]`.
    pub alpha_v: f64,
    /// Current decay per step, in `[0, 1]`.
    pub alpha_i: f64,
    /// Potential input scale.
    pub beta_v: f64,
    /// Current input scale.
    pub beta_i: f64,
    /// Bias input scale.
    pub beta_bias: f64,
    /// Spike threshold.
    pub theta: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        NeuronConfig {
            alpha_v: 0.95,
            alpha_i: 0.95,
            beta_v: 1.0,
            beta_i: 1.0,
            beta_bias: 1.0,
            theta: 1.0,
        }
    }
}

impl NeuronConfig {
    /// Scale coefficients normalized for training: the spike-response
    /// kernel peaks at 1 within the horizon (a unit-weight presynaptic
    /// spike lifts the potential by at most 1) and a constant bias
    /// saturates at its own value. Keeps gradient magnitudes compatible
    /// with plain-SGD learning rates across decay settings.
    pub fn unit_gain(alpha_v: f64, alpha_i: f64, theta: f64, horizon: usize) -> Self {
        let probe = NeuronConfig { alpha_v, alpha_i, theta, ..NeuronConfig::default() };
        let table = EpsTable::new(&probe, horizon.max(1));
        let peak = (0..=horizon.max(1) as i64)
            .map(|t| table.eps(t))
            .fold(f64::MIN, f64::max)
            .max(1e-12);
        let beta = (1.0 / peak).sqrt();
        let beta_bias = (1.0 - alpha_v).max(1.0 / horizon.max(1) as f64);
        NeuronConfig { alpha_v, alpha_i, beta_v: beta, beta_i: beta, beta_bias, theta }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_v) || !(0.0..=1.0).contains(&self.alpha_i) {
            return Err(Error::Config(format!(
                "decay coefficients must lie in [0, 1], got alpha_v={}, alpha_i={}",
                self.alpha_v, self.alpha_i
            )));
        }
        if self.beta_v <= 0.0 || self.beta_i <= 0.0 || self.beta_bias < 0.0 {
            return Err(Error::Config(format!(
                "scale coefficients must be positive (beta_bias may be zero), got \
                 beta_v={}, beta_i={}, beta_bias={}",
                self.beta_v, self.beta_i, self.beta_bias
            )));
        }
        if self.theta <= 0.0 {
            return Err(Error::Config(format!("theta must be > 0, got {}", self.theta)));
        }
        Ok(())
    }
}

/// Layer topology, simulation horizon, and spiking mode of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    /// Neuron count per layer, input first, output last.
    pub layer_sizes: Vec<usize>,
    /// Number of discrete time steps.
    pub horizon: usize,
    /// When set, each neuron emits at most one spike over the horizon.
    pub single_spike: bool,
}

impl NetworkShape {
    pub fn new(layer_sizes: Vec<usize>, horizon: usize) -> Self {
        NetworkShape { layer_sizes, horizon, single_spike: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "network needs at least 2 layers, got {}",
                self.layer_sizes.len()
            )));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("every layer must have at least one neuron".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// Weights and bias of one non-input layer.
///
/// Weights are stored presynaptic-major: `w[i * n_post + j]` is the synapse
/// from presynaptic neuron `i` to postsynaptic neuron `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub n_pre: usize,
    pub n_post: usize,
    pub w: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(n_pre: usize, n_post: usize) -> Self {
        LayerParams { n_pre, n_post, w: vec![0.0; n_pre * n_post], bias: vec![0.0; n_post] }
    }

    #[inline]
    pub fn weight(&self, pre: usize, post: usize) -> f64 {
        self.w[pre * self.n_post + post]
    }

    #[inline]
    pub fn weight_mut(&mut self, pre: usize, post: usize) -> &mut f64 {
        &mut self.w[pre * self.n_post + post]
    }
}

/// All trainable parameters of a network: one [`LayerParams`] per non-input
/// layer, ordered from the first hidden layer to the output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
}

impl Parameters {
    pub fn zeros(shape: &NetworkShape) -> Self {
        let layers = shape
            .layer_sizes
            .windows(2)
            .map(|w| LayerParams::zeros(w[0], w[1]))
            .collect();
        Parameters { layers }
    }

    /// Check that layer dimensions match `shape` and all entries are finite.
    pub fn validate(&self, shape: &NetworkShape) -> Result<()> {
        if self.layers.len() + 1 != shape.layer_sizes.len() {
            return Err(Error::Config(format!(
                "parameter set has {} layers, network shape wants {}",
                self.layers.len(),
                shape.layer_sizes.len() - 1
            )));
        }
        for (l, lp) in self.layers.iter().enumerate() {
            let (n_pre, n_post) = (shape.layer_sizes[l], shape.layer_sizes[l + 1]);
            if lp.n_pre != n_pre || lp.n_post != n_post {
                return Err(Error::Config(format!(
                    "layer {l}: expected {n_pre}x{n_post} weights, got {}x{}",
                    lp.n_pre, lp.n_post
                )));
            }
            if lp.w.len() != n_pre * n_post || lp.bias.len() != n_post {
                return Err(Error::Config(format!("layer {l}: weight/bias buffer size mismatch")));
            }
            if lp.w.iter().chain(lp.bias.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("layer {l}: non-finite parameter entry")));
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.bias.len()).sum()
    }

    /// Flatten all weights then biases, layer by layer, into one vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Add `scale * delta` to the flattened parameter vector, in place.
    pub fn add_scaled_flat(&mut self, delta: &[f64], scale: f64) {
        let mut k = 0;
        for l in &mut self.layers {
            for w in &mut l.w {
                *w += scale * delta[k];
                k += 1;
            }
            for b in &mut l.bias {
                *b += scale * delta[k];
                k += 1;
            }
        }
        debug_assert_eq!(k, delta.len());
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let s = serde_json::to_string(self)?;
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Per-layer, per-step record of a forward pass.
///
/// Spikes `s` cover all layers including the input layer; potentials `v`
/// and currents `i_syn` exist for non-input layers only (index `l - 1`).
/// `last_spike[l][t * n + j]` is the step of neuron `j`'s most recent spike
/// strictly before `t`, or `-1` if it has not spiked yet.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layer_sizes: Vec<usize>,
    pub horizon: usize,
    pub s: Vec<Vec<u8>>,
    pub v: Vec<Vec<f64>>,
    pub i_syn: Vec<Vec<f64>>,
    pub last_spike: Vec<Vec<i32>>,
}

impl ForwardTrace {
    fn with_input(shape: &NetworkShape, input_spikes: &[u8]) -> Self {
        let t = shape.horizon;
        let mut s: Vec<Vec<u8>> = Vec::with_capacity(shape.num_layers());
        s.push(input_spikes.to_vec());
        for &n in &shape.layer_sizes[1..] {
            s.push(vec![0u8; t * n]);
        }
        let v = shape.layer_sizes[1..].iter().map(|&n| vec![0.0; t * n]).collect();
        let i_syn = shape.layer_sizes[1..].iter().map(|&n| vec![0.0; t * n]).collect();
        let mut last_spike: Vec<Vec<i32>> =
            shape.layer_sizes.iter().map(|&n| vec![-1i32; t * n]).collect();
        fill_last_spike(&mut last_spike[0], input_spikes, shape.input_size(), t);
        ForwardTrace { layer_sizes: shape.layer_sizes.clone(), horizon: t, s, v, i_syn, last_spike }
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    /// Spike of neuron `n` in layer `l` (absolute index) at step `t`.
    #[inline]
    pub fn spike(&self, l: usize, t: usize, n: usize) -> u8 {
        self.s[l][t * self.layer_sizes[l] + n]
    }

    /// Potential of neuron `n` in non-input layer `l` (absolute index).
    #[inline]
    pub fn potential(&self, l: usize, t: usize, n: usize) -> f64 {
        self.v[l - 1][t * self.layer_sizes[l] + n]
    }

    /// First spike step of every neuron in layer `l`, or `None` if silent.
    pub fn first_spike_times(&self, l: usize) -> Vec<Option<usize>> {
        let n = self.layer_sizes[l];
        let mut first = vec![None; n];
        for t in 0..self.horizon {
            for j in 0..n {
                if self.s[l][t * n + j] == 1 && first[j].is_none() {
                    first[j] = Some(t);
                }
            }
        }
        first
    }

    /// Spike count per neuron in layer `l`.
    pub fn spike_counts(&self, l: usize) -> Vec<u32> {
        let n = self.layer_sizes[l];
        let mut counts = vec![0u32; n];
        for t in 0..self.horizon {
            for j in 0..n {
                counts[j] += u32::from(self.s[l][t * n + j]);
            }
        }
        counts
    }

    /// Total spikes over hidden and output layers (input excluded).
    pub fn non_input_spikes(&self) -> u64 {
        self.s[1..]
            .iter()
            .map(|layer| layer.iter().map(|&x| u64::from(x)).sum::<u64>())
            .sum()
    }
}

fn fill_last_spike(out: &mut [i32], spikes: &[u8], n: usize, horizon: usize) {
    let mut last = vec![-1i32; n];
    for t in 0..horizon {
        for j in 0..n {
            out[t * n + j] = last[j];
            if spikes[t * n + j] == 1 {
                last[j] = t as i32;
            }
        }
    }
}

/// Spike response kernel: the potential `tau` steps after a single unit
/// presynaptic spike, absent intervening resets.
///
/// `eps(tau) = beta_i * beta_v * sum_{k=0}^{tau} alpha_i^k * alpha_v^(tau-k)`,
/// and `0` for `tau < 0`.
pub fn kernel_eps(tau: i64, cfg: &NeuronConfig) -> f64 {
    if tau < 0 {
        return 0.0;
    }
    let tau = tau as usize;
    // Running powers rather than powi in the inner product keeps alpha = 0
    // exact (0^0 = 1).
    let mut pow_v = vec![0.0; tau + 1];
    let mut pow_i = vec![0.0; tau + 1];
    pow_v[0] = 1.0;
    pow_i[0] = 1.0;
    for k in 1..=tau {
        pow_v[k] = pow_v[k - 1] * cfg.alpha_v;
        pow_i[k] = pow_i[k - 1] * cfg.alpha_i;
    }
    let mut sum = 0.0;
    for k in 0..=tau {
        sum += pow_i[k] * pow_v[tau - k];
    }
    cfg.beta_i * cfg.beta_v * sum
}

/// Central-difference time derivative of [`kernel_eps`]:
/// `(eps(tau+1) - eps(tau-1)) / 2`. First nonzero at `tau = -1`.
pub fn kernel_eps_star(tau: i64, cfg: &NeuronConfig) -> f64 {
    0.5 * (kernel_eps(tau + 1, cfg) - kernel_eps(tau - 1, cfg))
}

/// Precomputed `eps` values for `tau` in `0..=t_max`.
pub struct EpsTable {
    eps: Vec<f64>,
}

impl EpsTable {
    /// Table covering `0..=t_max + 1` so that `eps_star(t_max)` stays in
    /// range.
    pub fn new(cfg: &NeuronConfig, t_max: usize) -> Self {
        // eps[tau] = alpha_v * eps[tau-1] + beta_i * beta_v * alpha_i^tau
        let mut eps = Vec::with_capacity(t_max + 2);
        let bb = cfg.beta_i * cfg.beta_v;
        let mut pow_i = 1.0;
        eps.push(bb);
        for _ in 1..=t_max + 1 {
            pow_i *= cfg.alpha_i;
            let prev = *eps.last().unwrap();
            eps.push(cfg.alpha_v * prev + bb * pow_i);
        }
        EpsTable { eps }
    }

    #[inline]
    pub fn eps(&self, tau: i64) -> f64 {
        if tau < 0 {
            0.0
        } else {
            self.eps[tau as usize]
        }
    }

    #[inline]
    pub fn eps_star(&self, tau: i64) -> f64 {
        0.5 * (self.eps(tau + 1) - self.eps(tau - 1))
    }
}

fn check_forward_inputs(
    params: &Parameters,
    input_spikes: &[u8],
    shape: &NetworkShape,
    cfg: &NeuronConfig,
) -> Result<()> {
    shape.validate()?;
    cfg.validate()?;
    params.validate(shape)?;
    if input_spikes.len() != shape.horizon * shape.input_size() {
        return Err(Error::Config(format!(
            "input spike tensor has {} entries, expected horizon {} x input size {}",
            input_spikes.len(),
            shape.horizon,
            shape.input_size()
        )));
    }
    if input_spikes.iter().any(|&x| x > 1) {
        return Err(Error::Config("input spikes must be 0 or 1".into()));
    }
    Ok(())
}

/// Evaluate the network by the stateful step recursion.
///
/// Layers are processed bottom-up, each over the full horizon. Initial state
/// is `V = I = S = 0`. Under `single_spike`, a neuron that has spiked emits
/// no further spikes while its membrane state keeps evolving (the reset is
/// applied once, at the emitted spike).
pub fn forward_rnn(
    params: &Parameters,
    input_spikes: &[u8],
    shape: &NetworkShape,
    cfg: &NeuronConfig,
) -> Result<ForwardTrace> {
    check_forward_inputs(params, input_spikes, shape, cfg)?;
    let t_max = shape.horizon;
    let mut trace = ForwardTrace::with_input(shape, input_spikes);

    for l in 1..shape.num_layers() {
        let n_pre = shape.layer_sizes[l - 1];
        let n = shape.layer_sizes[l];
        let lp = &params.layers[l - 1];
        let mut drive = vec![0.0; n];
        let mut fired = vec![false; n];
        let mut last = vec![-1i32; n];

        // Split borrows: lower layer spikes are read, this layer is written.
        let (s_lower, s_rest) = trace.s.split_at_mut(l);
        let s_pre = &s_lower[l - 1];
        let s_cur = &mut s_rest[0];
        let v_cur = &mut trace.v[l - 1];
        let i_cur = &mut trace.i_syn[l - 1];
        let last_cur = &mut trace.last_spike[l];

        for t in 0..t_max {
            drive.iter_mut().for_each(|d| *d = 0.0);
            let pre_row = &s_pre[t * n_pre..(t + 1) * n_pre];
            for (i, &sp) in pre_row.iter().enumerate() {
                if sp == 1 {
                    let w_row = &lp.w[i * n..(i + 1) * n];
                    for (d, &w) in drive.iter_mut().zip(w_row) {
                        *d += w;
                    }
                }
            }
            for j in 0..n {
                let idx = t * n + j;
                let (v_prev, i_prev, s_prev) = if t == 0 {
                    (0.0, 0.0, 0u8)
                } else {
                    (v_cur[idx - n], i_cur[idx - n], s_cur[idx - n])
                };
                let gate = 1.0 - f64::from(s_prev);
                let i_now = cfg.alpha_i * gate * i_prev + cfg.beta_i * drive[j];
                let v_now =
                    cfg.alpha_v * gate * v_prev + cfg.beta_v * i_now + cfg.beta_bias * lp.bias[j];
                let spike = v_now >= cfg.theta && !(shape.single_spike && fired[j]);
                i_cur[idx] = i_now;
                v_cur[idx] = v_now;
                s_cur[idx] = u8::from(spike);
                last_cur[idx] = last[j];
                if spike {
                    last[j] = t as i32;
                    fired[j] = true;
                }
            }
        }
    }
    Ok(trace)
}

/// Evaluate the network by the kernel-sum form.
///
/// The potential at step `t` is the kernel-weighted sum of presynaptic
/// drive over the causal window that opens just after the neuron's own
/// last spike, plus the bias accumulated over the same window:
///
/// ```text
/// V[t] = sum_{tau = last+1}^{t} eps(t - tau) * drive[tau]
///      + beta_bias * bias * sum_{k=0}^{t - last - 1} alpha_v^k
/// ```
///
/// Spike-for-spike equivalent to [`forward_rnn`]; kept as its oracle.
pub fn forward_srm(
    params: &Parameters,
    input_spikes: &[u8],
    shape: &NetworkShape,
    cfg: &NeuronConfig,
) -> Result<ForwardTrace> {
    check_forward_inputs(params, input_spikes, shape, cfg)?;
    let t_max = shape.horizon;
    let mut trace = ForwardTrace::with_input(shape, input_spikes);
    let eps = EpsTable::new(cfg, t_max);

    // Partial geometric sums of alpha_v (for the bias) and alpha_i powers
    // (for reconstructing the synaptic current).
    let mut geo_v = Vec::with_capacity(t_max + 1);
    let mut pow_i = Vec::with_capacity(t_max + 1);
    geo_v.push(1.0);
    pow_i.push(1.0);
    for k in 1..=t_max {
        geo_v.push(geo_v[k - 1] + cfg.alpha_v.powi(k as i32));
        pow_i.push(pow_i[k - 1] * cfg.alpha_i);
    }

    for l in 1..shape.num_layers() {
        let n_pre = shape.layer_sizes[l - 1];
        let n = shape.layer_sizes[l];
        let lp = &params.layers[l - 1];

        // Weighted presynaptic drive per step and postsynaptic neuron.
        let mut drive = vec![0.0; t_max * n];
        {
            let s_pre = &trace.s[l - 1];
            for t in 0..t_max {
                for i in 0..n_pre {
                    if s_pre[t * n_pre + i] == 1 {
                        let w_row = &lp.w[i * n..(i + 1) * n];
                        let d_row = &mut drive[t * n..(t + 1) * n];
                        for (d, &w) in d_row.iter_mut().zip(w_row) {
                            *d += w;
                        }
                    }
                }
            }
        }

        for j in 0..n {
            let mut last: i64 = -1;
            let mut fired = false;
            for t in 0..t_max {
                let win_start = (last + 1) as usize;
                let mut acc = 0.0;
                let mut cur = 0.0;
                for tau in win_start..=t {
                    acc += eps.eps((t - tau) as i64) * drive[tau * n + j];
                    cur += pow_i[t - tau] * drive[tau * n + j];
                }
                let v_now = acc + cfg.beta_bias * lp.bias[j] * geo_v[t - win_start];
                let i_now = cfg.beta_i * cur;
                let spike = v_now >= cfg.theta && !(shape.single_spike && fired);
                let idx = t * n + j;
                trace.v[l - 1][idx] = v_now;
                trace.i_syn[l - 1][idx] = i_now;
                trace.s[l][idx] = u8::from(spike);
                trace.last_spike[l][idx] = last as i32;
                if spike {
                    last = t as i64;
                    fired = true;
                }
            }
        }
    }
    Ok(trace)
}
