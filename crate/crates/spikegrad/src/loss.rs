//! Loss functions over output spike trains and their backward seeds.
//!
//! Each loss yields a scalar value plus two seed tensors for the gradient
//! engine: `dl_ds` (per-step activation seeds) and `dl_dthat` (per-spike
//! timing seeds). The count loss produces no timing seeds and the latency
//! loss no activation seeds; the filtered spike-train loss produces both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::ParamGrads;
use crate::neuron::ForwardTrace;

/// Declarative loss selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LossSpec {
    /// Squared error on per-neuron spike counts against `targets`.
    Count { targets: Vec<f64> },
    /// Squared error between exponentially filtered output and target
    /// trains; `targets` is time-major `[t * n_out + o]`.
    SpikeTrain { targets: Vec<u8>, kappa_exp: f64 },
    /// Cross-entropy of the softmax over negatively scaled first-spike
    /// times; `y` is the target distribution (one-hot for classification).
    Latency { y: Vec<f64>, beta_softmax: f64 },
    /// `(min(count_d, 1) - 1)^2` for the desired label's output neuron.
    MinCountVariant { label: usize },
    /// Weight-increasing adjustment for silent neurons (pure timing rule).
    NoSpikePenalty { eta: f64 },
}

impl LossSpec {
    pub fn validate(&self, n_out: usize, horizon: usize) -> Result<()> {
        match self {
            LossSpec::Count { targets } => {
                if targets.len() != n_out {
                    return Err(Error::Config(format!(
                        "count loss wants {n_out} targets, got {}",
                        targets.len()
                    )));
                }
                if targets.iter().any(|&n| n < 0.0) {
                    return Err(Error::Config("count targets must be >= 0".into()));
                }
            }
            LossSpec::SpikeTrain { targets, kappa_exp } => {
                if targets.len() != n_out * horizon {
                    return Err(Error::Config(format!(
                        "spike-train targets have {} entries, expected {}",
                        targets.len(),
                        n_out * horizon
                    )));
                }
                if !(*kappa_exp > 0.0 && *kappa_exp < 1.0) {
                    return Err(Error::Config(format!(
                        "kappa_exp must lie in (0, 1), got {kappa_exp}"
                    )));
                }
            }
            LossSpec::Latency { y, beta_softmax } => {
                if y.len() != n_out {
                    return Err(Error::Config(format!(
                        "latency loss wants {n_out} target probabilities, got {}",
                        y.len()
                    )));
                }
                if *beta_softmax <= 0.0 {
                    return Err(Error::Config("beta_softmax must be > 0".into()));
                }
            }
            LossSpec::MinCountVariant { label } => {
                if *label >= n_out {
                    return Err(Error::Config(format!(
                        "min-count label {label} out of range for {n_out} outputs"
                    )));
                }
            }
            LossSpec::NoSpikePenalty { eta } => {
                if *eta < 0.0 {
                    return Err(Error::Config("no-spike penalty must be >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// Scalar loss plus backward seeds, time-major `[t * n_out + o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub loss: f64,
    pub dl_ds: Vec<f64>,
    pub dl_dthat: Vec<f64>,
    /// Output neurons that never spiked while the loss needed a spike time.
    pub silent_outputs: usize,
}

impl LossGrads {
    pub fn zeros(horizon: usize, n_out: usize) -> Self {
        LossGrads {
            loss: 0.0,
            dl_ds: vec![0.0; horizon * n_out],
            dl_dthat: vec![0.0; horizon * n_out],
            silent_outputs: 0,
        }
    }

    /// Sum another loss term into this one (unit weight).
    pub fn add(&mut self, other: &LossGrads) {
        self.loss += other.loss;
        for (d, &s) in self.dl_ds.iter_mut().zip(&other.dl_ds) {
            *d += s;
        }
        for (d, &s) in self.dl_dthat.iter_mut().zip(&other.dl_dthat) {
            *d += s;
        }
        self.silent_outputs += other.silent_outputs;
    }
}

fn output_layer(trace: &ForwardTrace) -> usize {
    trace.layer_sizes.len() - 1
}

/// Count loss: `sum_o (count_o - n_o)^2 / T` with a time-constant
/// activation seed `2 (count_o - n_o) / T` per output neuron.
pub fn count_loss(trace: &ForwardTrace, targets: &[f64]) -> LossGrads {
    let l = output_layer(trace);
    let n = trace.layer_sizes[l];
    let t_max = trace.horizon;
    let counts = trace.spike_counts(l);
    let mut out = LossGrads::zeros(t_max, n);
    for o in 0..n {
        let diff = f64::from(counts[o]) - targets[o];
        out.loss += diff * diff / t_max as f64;
        let seed = 2.0 * diff / t_max as f64;
        for t in 0..t_max {
            out.dl_ds[t * n + o] = seed;
        }
    }
    out
}

/// Filtered spike-train loss.
///
/// With the causal exponential kernel `kappa[m] = kappa_exp^m` (m >= 0) and
/// `d = kappa * S_out - kappa * S_target`:
///
/// * loss        `sum_o sum_tau d_o[tau]^2`
/// * `dl_ds[t]   =  2 sum_tau kappa[tau - t] d[tau]`
/// * `dl_dthat[t] = -2 sum_tau kappa*[tau - t] d[tau]` at spike steps, where
///   `kappa*` is the central difference of `kappa`.
pub fn spike_train_loss(trace: &ForwardTrace, targets: &[u8], kappa_exp: f64) -> LossGrads {
    let l = output_layer(trace);
    let n = trace.layer_sizes[l];
    let t_max = trace.horizon;
    let s_out = &trace.s[l];
    let mut out = LossGrads::zeros(t_max, n);

    // Filtered trains, difference, and the suffix transform
    // r[t] = sum_{j>=0} kappa^j d[t+j].
    let mut d = vec![0.0; t_max * n];
    {
        let mut f_out = vec![0.0; n];
        let mut f_tar = vec![0.0; n];
        for t in 0..t_max {
            for o in 0..n {
                let idx = t * n + o;
                f_out[o] = kappa_exp * f_out[o] + f64::from(s_out[idx]);
                f_tar[o] = kappa_exp * f_tar[o] + f64::from(targets[idx]);
                d[idx] = f_out[o] - f_tar[o];
                out.loss += d[idx] * d[idx];
            }
        }
    }
    let mut r = vec![0.0; (t_max + 1) * n];
    for t in (0..t_max).rev() {
        for o in 0..n {
            r[t * n + o] = d[t * n + o] + kappa_exp * r[(t + 1) * n + o];
        }
    }
    for t in 0..t_max {
        for o in 0..n {
            let idx = t * n + o;
            out.dl_ds[idx] = 2.0 * r[idx];
            if s_out[idx] == 1 {
                // -2 sum_m kappa*[m] d[t+m] expanded over m = -1, 0, m >= 1.
                let d_prev = if t == 0 { 0.0 } else { d[idx - n] };
                out.dl_dthat[idx] = -d_prev - kappa_exp * d[idx]
                    - (kappa_exp * kappa_exp - 1.0) * r[idx + n];
            }
        }
    }
    out
}

/// Latency loss: cross-entropy of `softmax(-beta * t_first)` against `y`,
/// seeding `-beta * (p_o - y_o)` at each output neuron's first spike.
/// Silent neurons enter the softmax with `t_first = T` and are counted.
pub fn latency_loss(trace: &ForwardTrace, y: &[f64], beta_softmax: f64) -> LossGrads {
    let l = output_layer(trace);
    let n = trace.layer_sizes[l];
    let t_max = trace.horizon;
    let first = trace.first_spike_times(l);
    let mut out = LossGrads::zeros(t_max, n);

    let mut z = vec![0.0; n];
    for o in 0..n {
        let t_first = first[o].map(|t| t as f64).unwrap_or_else(|| {
            out.silent_outputs += 1;
            t_max as f64
        });
        z[o] = -beta_softmax * t_first;
    }
    let z_max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|&v| (v - z_max).exp()).collect();
    let denom: f64 = exp.iter().sum();
    for o in 0..n {
        let p = exp[o] / denom;
        if y[o] > 0.0 {
            out.loss -= y[o] * p.ln();
        }
        if let Some(t) = first[o] {
            out.dl_dthat[t * n + o] = -beta_softmax * (p - y[o]);
        }
    }
    out
}

/// Count-loss variant that only asks for at least one spike of the desired
/// output neuron: `(min(count_d, 1) - 1)^2`. The seed is the derivative of
/// that expression in the relaxed count, `2 (min(c, 1) - 1)` below one
/// spike and zero above, and vanishes once the neuron spikes.
pub fn min_count_variant(trace: &ForwardTrace, label: usize) -> LossGrads {
    let l = output_layer(trace);
    let n = trace.layer_sizes[l];
    let t_max = trace.horizon;
    let count = trace.spike_counts(l)[label];
    let mut out = LossGrads::zeros(t_max, n);
    if count == 0 {
        out.loss = 1.0;
        for t in 0..t_max {
            out.dl_ds[t * n + label] = -2.0;
        }
    }
    out
}

/// Decrease the incoming-weight gradients of every silent non-input neuron
/// by `eta`, so the following descent step increases those weights. Meant
/// for the pure timing rule, which cannot create spikes on its own.
pub fn no_spike_penalty(trace: &ForwardTrace, grads: &mut ParamGrads, eta: f64) {
    for l in 1..trace.layer_sizes.len() {
        let n_pre = trace.layer_sizes[l - 1];
        let n = trace.layer_sizes[l];
        let counts = trace.spike_counts(l);
        let gw = &mut grads.layers[l - 1].d_w;
        for j in 0..n {
            if counts[j] == 0 {
                for i in 0..n_pre {
                    gw[i * n + j] -= eta;
                }
            }
        }
    }
}

/// Evaluate one of the seed-producing loss variants.
pub fn eval_loss(trace: &ForwardTrace, spec: &LossSpec) -> Result<LossGrads> {
    match spec {
        LossSpec::Count { targets } => Ok(count_loss(trace, targets)),
        LossSpec::SpikeTrain { targets, kappa_exp } => {
            Ok(spike_train_loss(trace, targets, *kappa_exp))
        }
        LossSpec::Latency { y, beta_softmax } => Ok(latency_loss(trace, y, *beta_softmax)),
        LossSpec::MinCountVariant { label } => Ok(min_count_variant(trace, *label)),
        LossSpec::NoSpikePenalty { .. } => Err(Error::Config(
            "the no-spike penalty adjusts parameter gradients; it does not produce seeds".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::{forward_rnn, NetworkShape, NeuronConfig, Parameters};
    use proptest::prelude::*;

    /// Build a trace whose output layer spikes exactly at the given steps.
    /// A unit diagonal weight matrix copies input spikes to the next layer
    /// at threshold.
    fn trace_with_output(spikes: &[Vec<usize>], horizon: usize) -> ForwardTrace {
        let n = spikes.len();
        let cfg = NeuronConfig::default();
        let shape = NetworkShape::new(vec![n, n], horizon);
        let mut params = Parameters::zeros(&shape);
        for j in 0..n {
            *params.layers[0].weight_mut(j, j) = cfg.theta;
        }
        let mut input = vec![0u8; horizon * n];
        for (j, times) in spikes.iter().enumerate() {
            for &t in times {
                input[t * n + j] = 1;
            }
        }
        forward_rnn(&params, &input, &shape, &cfg).unwrap()
    }

    #[test]
    fn count_loss_exact_targets_zero() {
        let trace = trace_with_output(&[vec![2, 5], vec![7]], 20);
        let out = count_loss(&trace, &[2.0, 1.0]);
        assert_eq!(out.loss, 0.0);
        assert!(out.dl_ds.iter().all(|&x| x == 0.0));
        assert!(out.dl_dthat.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn count_loss_three_spikes_target_one() {
        let trace = trace_with_output(&[vec![3, 10, 50]], 100);
        let out = count_loss(&trace, &[1.0]);
        assert!((out.loss - 0.04).abs() < 1e-15);
        assert!(out.dl_ds.iter().all(|&x| (x - 0.04).abs() < 1e-15));
    }

    #[test]
    fn count_loss_zero_target_no_spikes() {
        let trace = trace_with_output(&[vec![]], 50);
        let out = count_loss(&trace, &[0.0]);
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn spike_train_loss_matching_trains_zero() {
        let trace = trace_with_output(&[vec![4, 9], vec![1]], 30);
        let mut targets = vec![0u8; 30 * 2];
        targets[4 * 2] = 1;
        targets[9 * 2] = 1;
        targets[2 + 1] = 1; // t = 1, o = 1
        let out = spike_train_loss(&trace, &targets, 0.95);
        assert_eq!(out.loss, 0.0);
        assert!(out.dl_ds.iter().all(|&x| x == 0.0));
        assert!(out.dl_dthat.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn spike_train_loss_empty_output_geometric() {
        // No output spikes, single target spike at tau0: the filtered
        // difference decays by kappa per step, so the loss is the truncated
        // geometric series sum_{k} kappa^(2k).
        let horizon = 40;
        let tau0 = 12;
        let kappa = 0.95f64;
        let trace = trace_with_output(&[vec![]], horizon);
        let mut targets = vec![0u8; horizon];
        targets[tau0] = 1;
        let out = spike_train_loss(&trace, &targets, kappa);
        let mut expected = 0.0;
        for k in 0..(horizon - tau0) {
            expected += kappa.powi(2 * k as i32);
        }
        assert!((out.loss - expected).abs() < 1e-12);

        // Brute-force convolution oracle for the activation seeds.
        let f_tar: Vec<f64> = (0..horizon)
            .map(|t| if t >= tau0 { kappa.powi((t - tau0) as i32) } else { 0.0 })
            .collect();
        for t in 0..horizon {
            let mut want = 0.0;
            for tau in t..horizon {
                want += 2.0 * kappa.powi((tau - t) as i32) * (0.0 - f_tar[tau]);
            }
            assert!((out.dl_ds[t] - want).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn spike_train_timing_seed_matches_brute_force() {
        let horizon = 25;
        let kappa = 0.9;
        let trace = trace_with_output(&[vec![5, 14], vec![8]], horizon);
        let mut targets = vec![0u8; horizon * 2];
        targets[3 * 2] = 1;
        targets[17 * 2 + 1] = 1;
        let out = spike_train_loss(&trace, &targets, kappa);

        // Recompute d by direct convolution and the seed by the explicit
        // central-difference kernel sum.
        let kappa_at = |m: i64| -> f64 {
            if m < 0 {
                0.0
            } else {
                kappa.powi(m as i32)
            }
        };
        let kappa_star = |m: i64| 0.5 * (kappa_at(m + 1) - kappa_at(m - 1));
        for o in 0..2 {
            let mut d = vec![0.0; horizon];
            for tau in 0..horizon {
                for u in 0..=tau {
                    d[tau] += kappa_at((tau - u) as i64)
                        * (f64::from(trace.s[1][u * 2 + o]) - f64::from(targets[u * 2 + o]));
                }
            }
            for t in 0..horizon {
                if trace.s[1][t * 2 + o] == 1 {
                    let mut want = 0.0;
                    for tau in 0..horizon {
                        want += -2.0 * kappa_star(tau as i64 - t as i64) * d[tau];
                    }
                    assert!(
                        (out.dl_dthat[t * 2 + o] - want).abs() < 1e-10,
                        "o={o}, t={t}: {} vs {want}",
                        out.dl_dthat[t * 2 + o]
                    );
                }
            }
        }
    }

    #[test]
    fn spike_train_single_coincident_spike_zero() {
        let trace = trace_with_output(&[vec![6]], 20);
        let mut targets = vec![0u8; 20];
        targets[6] = 1;
        let out = spike_train_loss(&trace, &targets, 0.95);
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.dl_dthat[6], 0.0);
    }

    #[test]
    fn latency_loss_symmetric_pair() {
        let trace = trace_with_output(&[vec![4], vec![4]], 20);
        let out = latency_loss(&trace, &[1.0, 0.0], 1.0);
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((out.dl_dthat[4 * 2] - 0.5).abs() < 1e-12);
        assert!((out.dl_dthat[4 * 2 + 1] + 0.5).abs() < 1e-12);
        assert!(out.dl_ds.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn latency_loss_three_outputs_frozen_values() {
        // First spikes at t = 10, 20, 20 with beta = 0.1:
        // p = softmax(-1, -2, -2), loss = -ln p_0.
        let trace = trace_with_output(&[vec![10], vec![20], vec![20]], 30);
        let out = latency_loss(&trace, &[1.0, 0.0, 0.0], 0.1);
        let p0: f64 = 0.576116884766145;
        assert!((out.loss - (-p0.ln())).abs() < 1e-9);
        assert!((out.loss - 0.55144).abs() < 1e-5);
        let p = [p0, 0.211941557616927, 0.211941557616927];
        assert!((out.dl_dthat[10 * 3] - (-0.1 * (p[0] - 1.0))).abs() < 1e-9);
        assert!((out.dl_dthat[20 * 3 + 1] - (-0.1 * p[1])).abs() < 1e-9);
    }

    #[test]
    fn latency_loss_dominant_early_spike() {
        // The correct neuron fires far earlier than the other: p -> 1.
        let trace = trace_with_output(&[vec![0], vec![90]], 100);
        let out = latency_loss(&trace, &[1.0, 0.0], 1.0);
        assert!(out.loss < 1e-9);
    }

    #[test]
    fn latency_loss_silent_neuron_substitutes_horizon() {
        let trace = trace_with_output(&[vec![5], vec![]], 20);
        let out = latency_loss(&trace, &[0.0, 1.0], 1.0);
        assert_eq!(out.silent_outputs, 1);
        assert!(out.loss.is_finite());
        // The silent neuron has no spike to seed.
        assert!(out.dl_dthat.iter().enumerate().all(|(idx, &x)| idx % 2 == 0 || x == 0.0));
    }

    #[test]
    fn min_count_variant_cases() {
        let trace = trace_with_output(&[vec![3], vec![]], 10);
        let hit = min_count_variant(&trace, 0);
        assert_eq!(hit.loss, 0.0);
        assert!(hit.dl_ds.iter().all(|&x| x == 0.0));
        let miss = min_count_variant(&trace, 1);
        assert_eq!(miss.loss, 1.0);
        for t in 0..10 {
            assert!((miss.dl_ds[t * 2 + 1] - (-2.0)).abs() < 1e-15);
            assert_eq!(miss.dl_ds[t * 2], 0.0);
        }
    }

    #[test]
    fn no_spike_penalty_decrements_silent_columns() {
        let cfg = NeuronConfig::default();
        let shape = NetworkShape::new(vec![2, 3], 10);
        let mut params = Parameters::zeros(&shape);
        // Neuron 0 spikes (strong weight), neurons 1 and 2 stay silent.
        *params.layers[0].weight_mut(0, 0) = 2.0;
        let mut input = vec![0u8; 20];
        input[0] = 1;
        let trace = forward_rnn(&params, &input, &shape, &cfg).unwrap();
        assert!(trace.spike_counts(1)[0] > 0);
        let mut grads = ParamGrads::zeros_like(&params);
        no_spike_penalty(&trace, &mut grads, 1.0);
        for i in 0..2 {
            assert_eq!(grads.layers[0].d_w[i * 3], 0.0);
            assert_eq!(grads.layers[0].d_w[i * 3 + 1], -1.0);
            assert_eq!(grads.layers[0].d_w[i * 3 + 2], -1.0);
        }
    }

    #[test]
    fn no_spike_penalty_all_firing_is_identity() {
        let trace = trace_with_output(&[vec![1], vec![2]], 10);
        let shape = NetworkShape::new(vec![2, 2], 10);
        let params = Parameters::zeros(&shape);
        let mut grads = ParamGrads::zeros_like(&params);
        no_spike_penalty(&trace, &mut grads, 1.0);
        assert!(grads.iter_flat().all(|x| x == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// The filtered spike-train loss is non-negative and zero iff the
        /// trains coincide.
        #[test]
        fn spike_train_loss_nonnegative(seed in 0u64..8192) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let horizon = 15;
            let out_times: Vec<usize> =
                (0..horizon).filter(|_| rng.gen_bool(0.25)).collect();
            let trace = trace_with_output(&[out_times.clone()], horizon);
            let mut targets = vec![0u8; horizon];
            for t in 0..horizon {
                if rng.gen_bool(0.25) {
                    targets[t] = 1;
                }
            }
            let out = spike_train_loss(&trace, &targets, 0.95);
            prop_assert!(out.loss >= 0.0);
            let same = (0..horizon).all(|t| trace.s[1][t] == targets[t]);
            prop_assert_eq!(out.loss == 0.0, same);
        }
    }
}
