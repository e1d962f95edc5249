//! Parameter initialization and first-order updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::ParamGrads;
use crate::neuron::{NetworkShape, NeuronConfig, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// How `grad_clip` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    /// Rescale the whole gradient so its global L2 norm is at most the limit.
    Norm,
    /// Clamp each entry to `[-limit, limit]`.
    Value,
}

/// Optimizer choice plus its running state (Adam moments).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub clip_mode: ClipMode,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub step_count: u64,
    moments: Option<(ParamGrads, ParamGrads)>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, weight_decay: f64, grad_clip: f64) -> Self {
        OptimizerState {
            kind,
            learning_rate,
            weight_decay,
            grad_clip,
            clip_mode: ClipMode::Norm,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            step_count: 0,
            moments: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if self.grad_clip <= 0.0 {
            return Err(Error::Config("grad_clip must be > 0".into()));
        }
        Ok(())
    }

    /// Clip then update, dispatching on the optimizer kind.
    pub fn apply(&mut self, params: &mut Parameters, grads: &mut ParamGrads) {
        match self.clip_mode {
            ClipMode::Norm => clip_grads(grads, self.grad_clip),
            ClipMode::Value => clip_grads_value(grads, self.grad_clip),
        }
        match self.kind {
            OptimizerKind::Sgd => sgd_step(params, grads, self),
            OptimizerKind::Adam => adam_step(params, grads, self),
        }
    }
}

/// Draw initial parameters: weights i.i.d. normal with standard deviation
/// `1 / sqrt(fan_in)`; biases zero, or `theta / 2` when `init_bias_center`
/// is set. Deterministic for a given seed.
pub fn init_params(
    shape: &NetworkShape,
    cfg: &NeuronConfig,
    seed: u64,
    init_bias_center: bool,
) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::zeros(shape);
    for lp in &mut params.layers {
        let std = 1.0 / (lp.n_pre as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        for w in &mut lp.w {
            *w = normal.sample(&mut rng);
        }
        let bias0 = if init_bias_center { cfg.theta * 0.5 } else { 0.0 };
        for b in &mut lp.bias {
            *b = bias0;
        }
    }
    params
}

/// Rescale the concatenated gradient vector to L2 norm `grad_clip` when it
/// exceeds it; otherwise leave it untouched.
pub fn clip_grads(grads: &mut ParamGrads, grad_clip: f64) {
    let norm = grads.l2_norm();
    if norm > grad_clip {
        grads.scale(grad_clip / norm);
    }
}

/// Per-entry clamp to `[-limit, limit]`.
pub fn clip_grads_value(grads: &mut ParamGrads, limit: f64) {
    for l in &mut grads.layers {
        for g in l.d_w.iter_mut().chain(l.d_bias.iter_mut()) {
            *g = g.clamp(-limit, limit);
        }
    }
}

/// Plain gradient descent: `p <- p - lr * (g + weight_decay * p)`.
pub fn sgd_step(params: &mut Parameters, grads: &ParamGrads, state: &OptimizerState) {
    let lr = state.learning_rate;
    let wd = state.weight_decay;
    for (lp, lg) in params.layers.iter_mut().zip(&grads.layers) {
        for (p, &g) in lp.w.iter_mut().zip(&lg.d_w) {
            *p -= lr * (g + wd * *p);
        }
        for (p, &g) in lp.bias.iter_mut().zip(&lg.d_bias) {
            *p -= lr * (g + wd * *p);
        }
    }
}

/// Bias-corrected Adam. Weight decay enters as an L2 term on the gradient.
pub fn adam_step(params: &mut Parameters, grads: &ParamGrads, state: &mut OptimizerState) {
    if state.moments.is_none() {
        let z = ParamGrads {
            layers: grads
                .layers
                .iter()
                .map(|l| crate::grad::LayerParamGrads {
                    d_w: vec![0.0; l.d_w.len()],
                    d_bias: vec![0.0; l.d_bias.len()],
                })
                .collect(),
        };
        state.moments = Some((z.clone(), z));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let corr1 = 1.0 - b1.powi(t);
    let corr2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let wd = state.weight_decay;
    let eps = state.eps_adam;
    let (m, v) = state.moments.as_mut().unwrap();

    for li in 0..params.layers.len() {
        let lp = &mut params.layers[li];
        let lg = &grads.layers[li];
        let lm = &mut m.layers[li];
        let lv = &mut v.layers[li];
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            let g = g + wd * *p;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for k in 0..lp.w.len() {
            update(&mut lp.w[k], lg.d_w[k], &mut lm.d_w[k], &mut lv.d_w[k]);
        }
        for k in 0..lp.bias.len() {
            update(&mut lp.bias[k], lg.d_bias[k], &mut lm.d_bias[k], &mut lv.d_bias[k]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_shape() -> NetworkShape {
        NetworkShape::new(vec![2, 3], 5)
    }

    fn grads_from(vals: &[f64], params: &Parameters) -> ParamGrads {
        let mut g = ParamGrads::zeros_like(params);
        let mut it = vals.iter().cycle();
        for l in &mut g.layers {
            for x in l.d_w.iter_mut().chain(l.d_bias.iter_mut()) {
                *x = *it.next().unwrap();
            }
        }
        g
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let shape = toy_shape();
        let cfg = NeuronConfig::default();
        let a = init_params(&shape, &cfg, 42, false);
        let b = init_params(&shape, &cfg, 42, false);
        let c = init_params(&shape, &cfg, 43, false);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_bias_variants() {
        let shape = toy_shape();
        let cfg = NeuronConfig::default();
        let plain = init_params(&shape, &cfg, 1, false);
        assert!(plain.layers[0].bias.iter().all(|&b| b == 0.0));
        let centered = init_params(&shape, &cfg, 1, true);
        assert!(centered.layers[0].bias.iter().all(|&b| b == 0.5));
    }

    #[test]
    fn init_weight_std_monte_carlo() {
        // fan_in = 784: empirical std within 10% of 1/sqrt(784) over 1e5 draws.
        let shape = NetworkShape::new(vec![784, 128], 1);
        let cfg = NeuronConfig::default();
        let params = init_params(&shape, &cfg, 7, false);
        let w = &params.layers[0].w;
        assert!(w.len() >= 100_000);
        let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
        let var: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
        let std = var.sqrt();
        let want = 1.0 / (784.0f64).sqrt();
        assert!((std - want).abs() < 0.1 * want, "std {std} vs {want}");
    }

    #[test]
    fn clip_rescales_to_unit_norm() {
        let shape = NetworkShape::new(vec![1, 2], 1);
        let params = Parameters::zeros(&shape);
        let mut g = ParamGrads::zeros_like(&params);
        g.layers[0].d_w[0] = 3.0;
        g.layers[0].d_w[1] = 4.0;
        clip_grads(&mut g, 1.0);
        assert!((g.layers[0].d_w[0] - 0.6).abs() < 1e-15);
        assert!((g.layers[0].d_w[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_below_threshold_is_identity() {
        let shape = toy_shape();
        let params = Parameters::zeros(&shape);
        let mut g = grads_from(&[0.01, -0.02, 0.005], &params);
        let before = g.to_flat();
        clip_grads(&mut g, 1e6);
        assert_eq!(before, g.to_flat());
    }

    #[test]
    fn sgd_examples() {
        let shape = NetworkShape::new(vec![1, 1], 1);
        let mut params = Parameters::zeros(&shape);
        params.layers[0].w[0] = 1.0;
        let state = OptimizerState::new(OptimizerKind::Sgd, 1e-3, 0.0, 1e6);
        let g = grads_from(&[1.0], &params);
        sgd_step(&mut params, &g, &state);
        assert!((params.layers[0].w[0] - 0.999).abs() < 1e-15);

        let mut params = Parameters::zeros(&shape);
        params.layers[0].w[0] = 1.0;
        let state = OptimizerState::new(OptimizerKind::Sgd, 1.0, 0.1, 1e6);
        let g = grads_from(&[0.0], &params);
        sgd_step(&mut params, &g, &state);
        assert!((params.layers[0].w[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_grad_zero_decay_is_identity() {
        let shape = toy_shape();
        let cfg = NeuronConfig::default();
        let mut params = init_params(&shape, &cfg, 3, false);
        let before = params.clone();
        let state = OptimizerState::new(OptimizerKind::Sgd, 0.1, 0.0, 1e6);
        let g = ParamGrads::zeros_like(&params);
        sgd_step(&mut params, &g, &state);
        assert_eq!(before, params);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let shape = NetworkShape::new(vec![1, 1], 1);
        let mut params = Parameters::zeros(&shape);
        params.layers[0].w[0] = 1.0;
        let mut state = OptimizerState::new(OptimizerKind::Adam, 1e-2, 0.0, 1e6);
        let g = grads_from(&[0.37], &params);
        adam_step(&mut params, &g, &mut state);
        let delta = (1.0 - params.layers[0].w[0]).abs();
        assert!((delta - 1e-2).abs() < 1e-6, "first Adam step should be ~lr, got {delta}");
    }

    #[test]
    fn adam_zero_grads_keep_params() {
        let shape = toy_shape();
        let cfg = NeuronConfig::default();
        let mut params = init_params(&shape, &cfg, 5, false);
        let before = params.clone();
        let mut state = OptimizerState::new(OptimizerKind::Adam, 0.1, 0.0, 1e6);
        for _ in 0..10 {
            let g = ParamGrads::zeros_like(&params);
            adam_step(&mut params, &g, &mut state);
        }
        assert_eq!(before, params);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // f(p) = p^2, lr = 0.1, 100 steps from p = 1.
        let shape = NetworkShape::new(vec![1, 1], 1);
        let mut params = Parameters::zeros(&shape);
        params.layers[0].w[0] = 1.0;
        let mut state = OptimizerState::new(OptimizerKind::Adam, 0.1, 0.0, 1e6);
        let mut history = Vec::new();
        for _ in 0..100 {
            let p = params.layers[0].w[0];
            let g = grads_from(&[2.0 * p], &params);
            adam_step(&mut params, &g, &mut state);
            history.push(params.layers[0].w[0].abs());
        }
        assert!(history.last().unwrap() < &0.01, "final |p| = {}", history.last().unwrap());
        // Steady descent through the approach phase, then a shrinking
        // oscillation envelope around the minimum.
        for k in 1..10 {
            assert!(
                history[k] <= history[k - 1] + 1e-12,
                "|p| rose at step {k}: {} -> {}",
                history[k - 1],
                history[k]
            );
        }
        let mid = history[20..40].iter().cloned().fold(0.0f64, f64::max);
        let late = history[80..].iter().cloned().fold(0.0f64, f64::max);
        assert!(late < mid, "late envelope {late} vs mid {mid}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Clipping never increases the norm and preserves direction.
        #[test]
        fn clip_contracts(gs in proptest::collection::vec(-10.0f64..10.0, 9), limit in 0.1f64..5.0) {
            let shape = toy_shape();
            let params = Parameters::zeros(&shape);
            let mut g = grads_from(&gs, &params);
            let before = g.to_flat();
            let norm_before = g.l2_norm();
            clip_grads(&mut g, limit);
            let after = g.to_flat();
            let norm_after = g.l2_norm();
            prop_assert!(norm_after <= norm_before + 1e-12);
            prop_assert!(norm_after <= limit + 1e-9);
            if norm_before > 0.0 {
                let scale = norm_after / norm_before;
                for (&a, &b) in after.iter().zip(&before) {
                    prop_assert!((a - scale * b).abs() < 1e-9);
                }
            }
        }

        /// Adam per-coordinate step stays within lr / (1 - beta1) plus guard.
        #[test]
        fn adam_step_size_bound(seed in 0u64..512) {
            use rand::{Rng, SeedableRng};
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = NetworkShape::new(vec![2, 2], 1);
            let mut params = Parameters::zeros(&shape);
            let mut state = OptimizerState::new(OptimizerKind::Adam, 0.05, 0.0, 1e6);
            let bound = state.learning_rate / (1.0 - state.beta1) * (1.0 + 1e-6);
            for _ in 0..50 {
                let before = params.to_flat();
                let vals: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let g = grads_from(&vals, &params);
                adam_step(&mut params, &g, &mut state);
                for (&a, &b) in params.to_flat().iter().zip(&before) {
                    prop_assert!((a - b).abs() <= bound);
                }
            }
        }
    }
}
