//! Verification oracles and loss-landscape tooling.
//!
//! The oracle suites here are dual routes to results the rest of the crate
//! computes directly: the kernel-sum forward pass against the step
//! recursion, BPTT against the kernel-form activation rule, analytic loss
//! seeds against central finite differences of real-relaxed loss
//! expressions. The landscape half perturbs trained parameters along the
//! top two principal components of the training gradients, records true
//! losses and per-rule projected gradients on a grid, and reintegrates the
//! gradient fields into surfaces by least squares.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad::{backprop_antlr, backprop_rnn_bptt, MethodConfig, ParamGrads};
use crate::loss::{count_loss, latency_loss, spike_train_loss, LossGrads, LossSpec};
use crate::neuron::{
    forward_rnn, forward_srm, ForwardTrace, NetworkShape, NeuronConfig, Parameters,
};

/// Mixed absolute/relative deviation: `|a - b| / max(1, |a|, |b|)`.
fn rel_dev(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn random_net(
    rng: &mut ChaCha8Rng,
    corner: Option<(f64, f64)>,
) -> (Parameters, Vec<u8>, NetworkShape, NeuronConfig) {
    let n_layers = rng.gen_range(2..=4);
    let sizes: Vec<usize> = (0..n_layers).map(|_| rng.gen_range(1..=20)).collect();
    let horizon = rng.gen_range(2..=50);
    let shape = NetworkShape::new(sizes, horizon);
    let mut params = Parameters::zeros(&shape);
    for lp in &mut params.layers {
        for w in &mut lp.w {
            *w = rng.gen_range(-1.0..1.0);
        }
        if rng.gen_bool(0.5) {
            for b in &mut lp.bias {
                *b = rng.gen_range(-0.3..0.3);
            }
        }
    }
    let (alpha_v, alpha_i) =
        corner.unwrap_or_else(|| (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)));
    let cfg = NeuronConfig { alpha_v, alpha_i, ..NeuronConfig::default() };
    let input: Vec<u8> =
        (0..horizon * shape.input_size()).map(|_| u8::from(rng.gen_bool(0.25))).collect();
    (params, input, shape, cfg)
}

/// Decay-coefficient pairs cycled through the equivalence sweeps, covering
/// the common neuron-model variants.
const CORNER_ALPHAS: [(f64, f64); 6] =
    [(1.0, 0.0), (0.95, 0.0), (0.95, 0.95), (1.0, 0.95), (1.0, 1.0), (0.99, 0.99)];

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub spike_mismatches: usize,
    pub max_potential_dev: f64,
    pub failing_seeds: Vec<u64>,
}

/// Compare [`forward_rnn`] and [`forward_srm`] on seeded random instances,
/// reporting spike-tensor mismatches and the worst potential deviation.
pub fn check_forward_equivalence(n_trials: usize, seed: u64) -> EquivalenceReport {
    let mut report = EquivalenceReport {
        trials: n_trials,
        spike_mismatches: 0,
        max_potential_dev: 0.0,
        failing_seeds: Vec::new(),
    };
    for k in 0..n_trials {
        let trial_seed = seed.wrapping_add(k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        let corner =
            if k % 2 == 0 { Some(CORNER_ALPHAS[(k / 2) % CORNER_ALPHAS.len()]) } else { None };
        let (params, input, shape, cfg) = random_net(&mut rng, corner);
        let a = forward_rnn(&params, &input, &shape, &cfg).unwrap();
        let b = forward_srm(&params, &input, &shape, &cfg).unwrap();
        let mut bad = false;
        for l in 1..shape.num_layers() {
            for (sa, sb) in a.s[l].iter().zip(&b.s[l]) {
                if sa != sb {
                    report.spike_mismatches += 1;
                    bad = true;
                }
            }
            for (&va, &vb) in a.v[l - 1].iter().zip(&b.v[l - 1]) {
                let dev = rel_dev(va, vb);
                if dev > report.max_potential_dev {
                    report.max_potential_dev = dev;
                }
                if dev > 1e-9 {
                    bad = true;
                }
            }
        }
        if bad {
            report.failing_seeds.push(trial_seed);
        }
    }
    report
}

#[derive(Debug, Clone)]
pub struct MethodEquivalenceReport {
    pub trials: usize,
    /// Worst deviation between BPTT-without-reset and the activation rule.
    pub max_bptt_dev: f64,
    /// Worst deviation from lambda-linearity of the combined rule over all
    /// instances. Exact only for single-non-input-layer networks; deeper
    /// networks mix the branches at every layer, which adds cross-route
    /// terms that a linear combination of the two pure rules cannot carry.
    pub max_linearity_dev: f64,
    /// Worst lambda-linearity deviation restricted to instances with a
    /// single non-input layer, where linearity is exact.
    pub max_linearity_dev_shallow: f64,
    /// Timing-gradient entries found outside spike steps.
    pub timing_support_violations: usize,
    pub failing_seeds: Vec<u64>,
}

fn random_seeds_for(trace: &ForwardTrace, rng: &mut ChaCha8Rng) -> LossGrads {
    let n_out = *trace.layer_sizes.last().unwrap();
    let out_layer = trace.layer_sizes.len() - 1;
    let mut lg = LossGrads::zeros(trace.horizon, n_out);
    for idx in 0..trace.horizon * n_out {
        lg.dl_ds[idx] = rng.gen_range(-1.0..1.0);
        if trace.s[out_layer][idx] == 1 {
            lg.dl_dthat[idx] = rng.gen_range(-1.0..1.0);
        }
    }
    lg
}

/// Check (a) BPTT-without-reset against the activation rule, (b) linearity
/// of the combined rule in its lambda weights, (c) timing-gradient support.
pub fn check_method_equivalence(n_trials: usize, seed: u64) -> MethodEquivalenceReport {
    let mut report = MethodEquivalenceReport {
        trials: n_trials,
        max_bptt_dev: 0.0,
        max_linearity_dev: 0.0,
        max_linearity_dev_shallow: 0.0,
        timing_support_violations: 0,
        failing_seeds: Vec::new(),
    };
    for k in 0..n_trials {
        let trial_seed = seed.wrapping_add(1_000_000).wrapping_add(k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        let corner =
            if k % 2 == 0 { Some(CORNER_ALPHAS[(k / 2) % CORNER_ALPHAS.len()]) } else { None };
        let (params, input, shape, cfg) = random_net(&mut rng, corner);
        let trace = forward_rnn(&params, &input, &shape, &cfg).unwrap();
        let seeds = random_seeds_for(&trace, &mut rng);
        let base = MethodConfig::default();
        let m10 = MethodConfig { lambda_act: 1.0, lambda_tim: 0.0, ..base };
        let m01 = MethodConfig { lambda_act: 0.0, lambda_tim: 1.0, ..base };
        let m23 = MethodConfig { lambda_act: 2.0, lambda_tim: 3.0, ..base };

        let (gt10, pg10) = backprop_antlr(&trace, &params, &seeds, &m10, &cfg).unwrap();
        let (gt01, pg01) = backprop_antlr(&trace, &params, &seeds, &m01, &cfg).unwrap();
        let (gt23, pg23) = backprop_antlr(&trace, &params, &seeds, &m23, &cfg).unwrap();
        let (gt_bptt, pg_bptt) = backprop_rnn_bptt(&trace, &params, &seeds, &m10, &cfg).unwrap();

        let mut bad = false;

        for (la, lb) in gt10.layers.iter().zip(&gt_bptt.layers) {
            for (&a, &b) in la.d_i.iter().zip(&lb.d_i).chain(la.d_v_dep.iter().zip(&lb.d_v_dep)) {
                let dev = rel_dev(a, b);
                report.max_bptt_dev = report.max_bptt_dev.max(dev);
                if dev > 1e-9 {
                    bad = true;
                }
            }
        }
        for (a, b) in pg10.iter_flat().zip(pg_bptt.iter_flat()) {
            let dev = rel_dev(a, b);
            report.max_bptt_dev = report.max_bptt_dev.max(dev);
            if dev > 1e-9 {
                bad = true;
            }
        }

        let shallow = shape.num_layers() == 2;
        let mut lin_dev: f64 = 0.0;
        for ((l23, l10), l01) in gt23.layers.iter().zip(&gt10.layers).zip(&gt01.layers) {
            for k in 0..l23.d_v_dep.len() {
                lin_dev = lin_dev
                    .max(rel_dev(l23.d_v_dep[k], 2.0 * l10.d_v_dep[k] + 3.0 * l01.d_v_dep[k]));
            }
        }
        for ((a, b), c) in pg23.iter_flat().zip(pg10.iter_flat()).zip(pg01.iter_flat()) {
            lin_dev = lin_dev.max(rel_dev(a, 2.0 * b + 3.0 * c));
        }
        report.max_linearity_dev = report.max_linearity_dev.max(lin_dev);
        if shallow {
            report.max_linearity_dev_shallow = report.max_linearity_dev_shallow.max(lin_dev);
            if lin_dev > 1e-9 {
                bad = true;
            }
        }

        for (l, lg) in gt01.layers.iter().enumerate() {
            for (idx, &dt) in lg.d_t_hat.iter().enumerate() {
                if trace.s[l + 1][idx] == 0 && dt != 0.0 {
                    report.timing_support_violations += 1;
                    bad = true;
                }
            }
        }

        if bad {
            report.failing_seeds.push(trial_seed);
        }
    }
    report
}

/// Which loss family a finite-difference check targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Count,
    SpikeTrain,
    Latency,
}

/// Compare analytic loss seeds against central finite differences of the
/// real-relaxed closed-form loss on one random instance. Returns the
/// maximum absolute deviation.
///
/// The relaxed forms treat the differentiated quantity as continuous:
/// per-neuron spike counts for the count loss, per-step activations for the
/// spike-train loss, first-spike times for the latency loss.
pub fn finite_diff_loss_grad(kind: LossKind, seed: u64, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_out = rng.gen_range(1..=5);
    let horizon = rng.gen_range(5..=30);
    let trace = random_output_trace(&mut rng, n_out, horizon);
    let mut max_dev: f64 = 0.0;

    match kind {
        LossKind::Count => {
            let targets: Vec<f64> = (0..n_out).map(|_| rng.gen_range(0..5) as f64).collect();
            let out = count_loss(&trace, &targets);
            let counts = trace.spike_counts(trace.layer_sizes.len() - 1);
            // Relaxed loss as a function of real counts.
            let loss_of = |c: &[f64]| -> f64 {
                c.iter()
                    .zip(&targets)
                    .map(|(&c, &n)| (c - n) * (c - n) / horizon as f64)
                    .sum()
            };
            let c0: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
            for o in 0..n_out {
                let mut up = c0.clone();
                let mut dn = c0.clone();
                up[o] += h;
                dn[o] -= h;
                let fd = (loss_of(&up) - loss_of(&dn)) / (2.0 * h);
                // The analytic seed is constant over time for each neuron.
                max_dev = max_dev.max((fd - out.dl_ds[o]).abs());
            }
        }
        LossKind::SpikeTrain => {
            let kappa = 0.95;
            let targets: Vec<u8> =
                (0..horizon * n_out).map(|_| u8::from(rng.gen_bool(0.2))).collect();
            let out = spike_train_loss(&trace, &targets, kappa);
            let out_layer = trace.layer_sizes.len() - 1;
            let s0: Vec<f64> = trace.s[out_layer].iter().map(|&s| f64::from(s)).collect();
            let tar_real: Vec<f64> = targets.iter().map(|&x| f64::from(x)).collect();
            let f_tar = filter_real(&tar_real, n_out, horizon, kappa);
            let loss_of = |s: &[f64]| -> f64 {
                let f_out = filter_real(s, n_out, horizon, kappa);
                f_out.iter().zip(&f_tar).map(|(a, b)| (a - b) * (a - b)).sum()
            };
            // Probe a handful of (t, o) entries rather than all of them.
            for _ in 0..20 {
                let idx = rng.gen_range(0..horizon * n_out);
                let mut up = s0.clone();
                let mut dn = s0.clone();
                up[idx] += h;
                dn[idx] -= h;
                let fd = (loss_of(&up) - loss_of(&dn)) / (2.0 * h);
                max_dev = max_dev.max((fd - out.dl_ds[idx]).abs());
            }
        }
        LossKind::Latency => {
            let beta = rng.gen_range(0.1..2.0);
            let label = rng.gen_range(0..n_out);
            let mut y = vec![0.0; n_out];
            y[label] = 1.0;
            let out = latency_loss(&trace, &y, beta);
            let first = trace.first_spike_times(trace.layer_sizes.len() - 1);
            let t0: Vec<f64> =
                first.iter().map(|f| f.map(|t| t as f64).unwrap_or(horizon as f64)).collect();
            let loss_of = |t_hat: &[f64]| -> f64 {
                let z: Vec<f64> = t_hat.iter().map(|&t| -beta * t).collect();
                let z_max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = z.iter().map(|&v| (v - z_max).exp()).collect();
                let denom: f64 = exp.iter().sum();
                -(exp[label] / denom).ln()
            };
            for o in 0..n_out {
                let Some(t_first) = first[o] else { continue };
                let mut up = t0.clone();
                let mut dn = t0.clone();
                up[o] += h;
                dn[o] -= h;
                let fd = (loss_of(&up) - loss_of(&dn)) / (2.0 * h);
                max_dev = max_dev.max((fd - out.dl_dthat[t_first * n_out + o]).abs());
            }
        }
    }
    max_dev
}

/// Causal exponential filter of a real-relaxed spike tensor.
fn filter_real(s: &[f64], n_out: usize, horizon: usize, kappa: f64) -> Vec<f64> {
    let mut out = vec![0.0; horizon * n_out];
    for o in 0..n_out {
        let mut acc = 0.0;
        for t in 0..horizon {
            acc = kappa * acc + s[t * n_out + o];
            out[t * n_out + o] = acc;
        }
    }
    out
}

/// A small network whose output layer carries a random spike pattern,
/// built by driving identity-coupled neurons at threshold.
fn random_output_trace(rng: &mut ChaCha8Rng, n_out: usize, horizon: usize) -> ForwardTrace {
    let cfg = NeuronConfig::default();
    let shape = NetworkShape::new(vec![n_out, n_out], horizon);
    let mut params = Parameters::zeros(&shape);
    for j in 0..n_out {
        *params.layers[0].weight_mut(j, j) = cfg.theta;
    }
    let input: Vec<u8> = (0..horizon * n_out).map(|_| u8::from(rng.gen_bool(0.15))).collect();
    forward_rnn(&params, &input, &shape, &cfg).unwrap()
}

/// Run the three finite-difference suites; returns the worst deviation per
/// loss kind over `trials` random instances each.
pub fn finite_diff_suite(trials: usize, seed: u64, h: f64) -> [(LossKind, f64); 3] {
    let kinds = [LossKind::Count, LossKind::SpikeTrain, LossKind::Latency];
    kinds.map(|kind| {
        let mut worst: f64 = 0.0;
        for k in 0..trials {
            worst = worst.max(finite_diff_loss_grad(kind, seed.wrapping_add(k as u64), h));
        }
        (kind, worst)
    })
}

/// Top-2 principal directions of a mean-centered gradient history,
/// orthonormalized. Uses the Gram matrix of the history and power
/// iteration with deflation; errors out below numerical rank 2.
pub fn pca_directions(history: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if history.len() < 2 {
        return Err(Error::RankDeficient(format!(
            "need at least 2 gradient vectors, got {}",
            history.len()
        )));
    }
    let n = history.len();
    let dim = history[0].len();
    let mut mean = vec![0.0; dim];
    for v in history {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> =
        history.iter().map(|v| v.iter().zip(&mean).map(|(&x, &m)| x - m).collect()).collect();

    // Gram matrix (n x n).
    let mut gram = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let dot: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            gram[a * n + b] = dot;
            gram[b * n + a] = dot;
        }
    }

    let (lambda1, u1) = power_iteration(&gram, n, None);
    let (lambda2, u2) = power_iteration(&gram, n, Some(&u1));
    if lambda1 <= 0.0 || lambda2 <= 1e-12 * lambda1 {
        return Err(Error::RankDeficient(format!(
            "gradient history has numerical rank < 2 (eigenvalues {lambda1:.3e}, {lambda2:.3e})"
        )));
    }

    let project = |u: &[f64]| -> Vec<f64> {
        let mut dir = vec![0.0; dim];
        for (k, v) in centered.iter().enumerate() {
            for (d, &x) in dir.iter_mut().zip(v) {
                *d += u[k] * x;
            }
        }
        dir
    };
    let mut dim0 = project(&u1);
    normalize(&mut dim0)?;
    let mut dim1 = project(&u2);
    let overlap: f64 = dim0.iter().zip(&dim1).map(|(a, b)| a * b).sum();
    for (d, &a) in dim1.iter_mut().zip(&dim0) {
        *d -= overlap * a;
    }
    normalize(&mut dim1)?;
    Ok((dim0, dim1))
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-300 {
        return Err(Error::RankDeficient("principal direction collapsed to zero".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

/// Leading eigenpair of a symmetric PSD matrix, optionally deflating a
/// known eigenvector first. Deterministic fixed-iteration power method.
fn power_iteration(gram: &[f64], n: usize, deflate: Option<&[f64]>) -> (f64, Vec<f64>) {
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.01 * (k as f64 + 1.0)).collect();
    let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm0);
    let mut lambda = 0.0;
    for _ in 0..600 {
        if let Some(u) = deflate {
            let overlap: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, &uu) in v.iter_mut().zip(u) {
                *x -= overlap * uu;
            }
        }
        let mut w = vec![0.0; n];
        for a in 0..n {
            let mut acc = 0.0;
            let row = &gram[a * n..(a + 1) * n];
            for (x, &g) in v.iter().zip(row) {
                acc += x * g;
            }
            w[a] = acc;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return (0.0, v);
        }
        lambda = norm;
        for (x, &ww) in v.iter_mut().zip(&w) {
            *x = ww / norm;
        }
    }
    (lambda, v)
}

/// Discrete gradient of a grid function: second-order central differences
/// inside, second-order one-sided stencils at the boundary. `z` is
/// row-major `rows x cols`; returns `(d/dx, d/dy)` with `x` along columns.
pub fn grid_gradient(
    z: &[f64],
    rows: usize,
    cols: usize,
    hx: f64,
    hy: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(rows >= 3 && cols >= 3, "grid must be at least 3x3");
    let mut gx = vec![0.0; rows * cols];
    let mut gy = vec![0.0; rows * cols];
    let at = |rr: usize, cc: usize| z[rr * cols + cc];
    for r in 0..rows {
        for c in 0..cols {
            gx[r * cols + c] = if c == 0 {
                (-3.0 * at(r, 0) + 4.0 * at(r, 1) - at(r, 2)) / (2.0 * hx)
            } else if c == cols - 1 {
                (3.0 * at(r, c) - 4.0 * at(r, c - 1) + at(r, c - 2)) / (2.0 * hx)
            } else {
                (at(r, c + 1) - at(r, c - 1)) / (2.0 * hx)
            };
            gy[r * cols + c] = if r == 0 {
                (-3.0 * at(0, c) + 4.0 * at(1, c) - at(2, c)) / (2.0 * hy)
            } else if r == rows - 1 {
                (3.0 * at(r, c) - 4.0 * at(r - 1, c) + at(r - 2, c)) / (2.0 * hy)
            } else {
                (at(r + 1, c) - at(r - 1, c)) / (2.0 * hy)
            };
        }
    }
    (gx, gy)
}

/// Adjoint of [`grid_gradient`].
fn grid_gradient_adjoint(
    gx: &[f64],
    gy: &[f64],
    rows: usize,
    cols: usize,
    hx: f64,
    hy: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let w = gx[r * cols + c];
            if c == 0 {
                out[r * cols] += -3.0 / (2.0 * hx) * w;
                out[r * cols + 1] += 4.0 / (2.0 * hx) * w;
                out[r * cols + 2] += -1.0 / (2.0 * hx) * w;
            } else if c == cols - 1 {
                out[r * cols + c] += 3.0 / (2.0 * hx) * w;
                out[r * cols + c - 1] += -4.0 / (2.0 * hx) * w;
                out[r * cols + c - 2] += 1.0 / (2.0 * hx) * w;
            } else {
                out[r * cols + c + 1] += w / (2.0 * hx);
                out[r * cols + c - 1] -= w / (2.0 * hx);
            }
            let w = gy[r * cols + c];
            if r == 0 {
                out[c] += -3.0 / (2.0 * hy) * w;
                out[cols + c] += 4.0 / (2.0 * hy) * w;
                out[2 * cols + c] += -1.0 / (2.0 * hy) * w;
            } else if r == rows - 1 {
                out[r * cols + c] += 3.0 / (2.0 * hy) * w;
                out[(r - 1) * cols + c] += -4.0 / (2.0 * hy) * w;
                out[(r - 2) * cols + c] += 1.0 / (2.0 * hy) * w;
            } else {
                out[(r + 1) * cols + c] += w / (2.0 * hy);
                out[(r - 1) * cols + c] -= w / (2.0 * hy);
            }
        }
    }
    out
}

/// Least-squares integration of a sampled gradient field: find `z`
/// minimizing `||D z - field||^2` where `D` is [`grid_gradient`], anchored
/// to zero at the grid center. Solved by conjugate gradients on the normal
/// equations; exact (to solver tolerance) for fields that are discrete
/// gradients of some grid function.
pub fn reconstruct_surface(
    gx: &[f64],
    gy: &[f64],
    rows: usize,
    cols: usize,
    hx: f64,
    hy: f64,
) -> Vec<f64> {
    let n = rows * cols;
    let apply = |z: &[f64]| -> Vec<f64> {
        let (ax, ay) = grid_gradient(z, rows, cols, hx, hy);
        grid_gradient_adjoint(&ax, &ay, rows, cols, hx, hy)
    };
    let b = grid_gradient_adjoint(gx, gy, rows, cols, hx, hy);

    // Conjugate gradients from zero; the right-hand side is orthogonal to
    // the constant null space, so iterates stay in its complement.
    let mut z = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|x| x * x).sum();
    let b_norm = rs.sqrt().max(1e-300);
    for _ in 0..(8 * n) {
        if rs.sqrt() <= 1e-13 * b_norm {
            break;
        }
        let ap = apply(&p);
        let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if p_ap <= 0.0 {
            break;
        }
        let alpha = rs / p_ap;
        for k in 0..n {
            z[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rs_new: f64 = r.iter().map(|x| x * x).sum();
        let beta = rs_new / rs;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rs = rs_new;
    }

    let center = (rows / 2) * cols + cols / 2;
    let anchor = z[center];
    z.iter_mut().for_each(|x| *x -= anchor);
    z
}

/// Gradient rules scanned over a landscape grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMethod {
    Activation,
    Timing,
    Combined,
}

impl ScanMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ScanMethod::Activation => "activation",
            ScanMethod::Timing => "timing",
            ScanMethod::Combined => "combined",
        }
    }

    fn method_config(&self, ste_alpha: f64, ste_beta: f64) -> MethodConfig {
        let (la, lt) = match self {
            ScanMethod::Activation => (1.0, 0.0),
            ScanMethod::Timing => (0.0, 1.0),
            ScanMethod::Combined => (1.0, 1.0),
        };
        MethodConfig { lambda_act: la, lambda_tim: lt, ste_alpha, ste_beta, use_reset_paths: false }
    }
}

/// The instance a landscape is evaluated on: fixed input and target trains.
#[derive(Debug, Clone)]
pub struct LandscapeInstance {
    pub shape: NetworkShape,
    pub cfg: NeuronConfig,
    pub input: Vec<u8>,
    pub target: Vec<u8>,
    pub kappa_exp: f64,
    pub ste_alpha: f64,
    pub ste_beta: f64,
}

impl LandscapeInstance {
    pub fn loss_spec(&self) -> LossSpec {
        LossSpec::SpikeTrain { targets: self.target.clone(), kappa_exp: self.kappa_exp }
    }
}

/// One scanned gradient field plus its reconstructed surface.
#[derive(Debug, Clone)]
pub struct MethodField {
    pub method: ScanMethod,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub reconstructed: Vec<f64>,
}

/// Output of [`landscape_scan`]: row-major `n x n` matrices over the
/// perturbation grid.
#[derive(Debug, Clone)]
pub struct LandscapeGrid {
    pub n: usize,
    pub extent: f64,
    pub dim0: Vec<f64>,
    pub dim1: Vec<f64>,
    pub true_loss: Vec<f64>,
    pub spike_counts: Vec<u64>,
    pub fields: Vec<MethodField>,
}

impl LandscapeGrid {
    /// Grid step between adjacent points (same in both axes).
    pub fn step(&self) -> f64 {
        2.0 * self.extent / (self.n - 1) as f64
    }

    pub fn center_index(&self) -> usize {
        (self.n / 2) * self.n + self.n / 2
    }

    pub fn field(&self, method: ScanMethod) -> Option<&MethodField> {
        self.fields.iter().find(|f| f.method == method)
    }
}

/// Evaluate the true loss and each rule's projected gradients on a square
/// grid of parameter perturbations spanned by two orthonormal directions,
/// then reintegrate each projected field into a surface.
pub fn landscape_scan(
    params: &Parameters,
    instance: &LandscapeInstance,
    dims: (&[f64], &[f64]),
    extent: f64,
    n: usize,
    methods: &[ScanMethod],
) -> Result<LandscapeGrid> {
    assert!(n >= 3 && n % 2 == 1, "grid size must be odd and >= 3");
    let (dim0, dim1) = dims;
    let spec = instance.loss_spec();
    let mut grid = LandscapeGrid {
        n,
        extent,
        dim0: dim0.to_vec(),
        dim1: dim1.to_vec(),
        true_loss: vec![0.0; n * n],
        spike_counts: vec![0; n * n],
        fields: methods
            .iter()
            .map(|&m| MethodField {
                method: m,
                gx: vec![0.0; n * n],
                gy: vec![0.0; n * n],
                reconstructed: Vec::new(),
            })
            .collect(),
    };

    for r in 0..n {
        let b = -extent + 2.0 * extent * r as f64 / (n - 1) as f64;
        for c in 0..n {
            let a = -extent + 2.0 * extent * c as f64 / (n - 1) as f64;
            let mut p = params.clone();
            p.add_scaled_flat(dim0, a);
            p.add_scaled_flat(dim1, b);
            let trace = forward_rnn(&p, &instance.input, &instance.shape, &instance.cfg)?;
            let lg = crate::loss::eval_loss(&trace, &spec)?;
            let idx = r * n + c;
            grid.true_loss[idx] = lg.loss;
            grid.spike_counts[idx] = trace.non_input_spikes();
            for field in &mut grid.fields {
                let m = field.method.method_config(instance.ste_alpha, instance.ste_beta);
                let (_, pg) = backprop_antlr(&trace, &p, &lg, &m, &instance.cfg)?;
                field.gx[idx] = pg.dot_flat(dim0);
                field.gy[idx] = pg.dot_flat(dim1);
            }
        }
    }

    let h = grid.step();
    for field in &mut grid.fields {
        field.reconstructed = reconstruct_surface(&field.gx, &field.gy, n, n, h, h);
    }
    Ok(grid)
}

/// Full-parameter gradient of one rule at given parameters on the instance.
pub fn instance_gradient(
    params: &Parameters,
    instance: &LandscapeInstance,
    method: ScanMethod,
) -> Result<ParamGrads> {
    let trace = forward_rnn(params, &instance.input, &instance.shape, &instance.cfg)?;
    let lg = crate::loss::eval_loss(&trace, &instance.loss_spec())?;
    let m = method.method_config(instance.ste_alpha, instance.ste_beta);
    let (_, pg) = backprop_antlr(&trace, params, &lg, &m, &instance.cfg)?;
    Ok(pg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_equivalence_sweep_clean() {
        let report = check_forward_equivalence(40, 7);
        assert_eq!(report.spike_mismatches, 0, "failing seeds {:?}", report.failing_seeds);
        assert!(report.max_potential_dev < 1e-9);
    }

    #[test]
    fn method_equivalence_sweep_clean() {
        let report = check_method_equivalence(40, 11);
        assert!(report.max_bptt_dev < 1e-9, "{report:?}");
        assert!(report.max_linearity_dev_shallow < 1e-9, "{report:?}");
        assert_eq!(report.timing_support_violations, 0);
        // Deep instances carry cross-route terms; the combined rule is
        // homogeneous per layer but not globally linear in the lambda pair.
        assert!(report.max_linearity_dev >= report.max_linearity_dev_shallow);
    }

    #[test]
    fn finite_diff_all_losses_small() {
        for (kind, dev) in finite_diff_suite(10, 3, 1e-4) {
            assert!(dev < 1e-6, "{kind:?}: {dev}");
        }
    }

    #[test]
    fn pca_planar_history_spans_plane() {
        // Vectors confined to the span of e0 and e1 in 5 dimensions.
        let mut history = Vec::new();
        for k in 0..12 {
            let mut v = vec![0.0; 5];
            v[0] = (k as f64 * 0.7).sin() + 1.0;
            v[1] = (k as f64 * 1.3).cos() * 2.0;
            history.push(v);
        }
        let (d0, d1) = pca_directions(&history).unwrap();
        for d in [&d0, &d1] {
            for k in 2..5 {
                assert!(d[k].abs() < 1e-9, "direction leaks outside the plane: {d:?}");
            }
        }
        let dot: f64 = d0.iter().zip(&d1).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
    }

    #[test]
    fn pca_duplicate_vectors_rank_error() {
        let history = vec![vec![1.0, 2.0, 3.0]; 6];
        assert!(matches!(pca_directions(&history), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn pca_random_history_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let history: Vec<Vec<f64>> =
            (0..30).map(|_| (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let (d0, d1) = pca_directions(&history).unwrap();
        let n0: f64 = d0.iter().map(|x| x * x).sum();
        let n1: f64 = d1.iter().map(|x| x * x).sum();
        let dot: f64 = d0.iter().zip(&d1).map(|(a, b)| a * b).sum();
        assert!((n0 - 1.0).abs() < 1e-10);
        assert!((n1 - 1.0).abs() < 1e-10);
        assert!(dot.abs() < 1e-10);
    }

    #[test]
    fn reconstruct_discrete_gradient_exactly() {
        // Any grid function: its discrete gradient must reintegrate to the
        // same function up to the anchored constant.
        let (rows, cols) = (17, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z0: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (gx, gy) = grid_gradient(&z0, rows, cols, 0.1, 0.07);
        let z = reconstruct_surface(&gx, &gy, rows, cols, 0.1, 0.07);
        let center = (rows / 2) * cols + cols / 2;
        let offset = z0[center];
        for k in 0..rows * cols {
            assert!(
                (z[k] - (z0[k] - offset)).abs() < 1e-10,
                "node {k}: {} vs {}",
                z[k],
                z0[k] - offset
            );
        }
    }

    #[test]
    fn reconstruct_analytic_bowl() {
        // z = x^2 + y^2 on a 41x41 grid: quadratics are exact for both the
        // interior and boundary stencils, so recovery is solver-exact.
        let n = 41;
        let extent = 1.0;
        let h = 2.0 * extent / (n - 1) as f64;
        let mut gx = vec![0.0; n * n];
        let mut gy = vec![0.0; n * n];
        let mut z_true = vec![0.0; n * n];
        for r in 0..n {
            let y = -extent + r as f64 * h;
            for c in 0..n {
                let x = -extent + c as f64 * h;
                gx[r * n + c] = 2.0 * x;
                gy[r * n + c] = 2.0 * y;
                z_true[r * n + c] = x * x + y * y;
            }
        }
        let z = reconstruct_surface(&gx, &gy, n, n, h, h);
        for k in 0..n * n {
            assert!((z[k] - z_true[k]).abs() < 1e-6, "node {k}: {} vs {}", z[k], z_true[k]);
        }
    }

    #[test]
    fn reconstruct_zero_field_is_zero() {
        let z = reconstruct_surface(&vec![0.0; 25], &vec![0.0; 25], 5, 5, 0.1, 0.1);
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reconstruct_sin_cos_within_discretization() {
        // Conservative field of z = sin(x) cos(y) on [-0.5, 0.5]^2 at 50x50:
        // second-order stencils leave O(h^2) truncation error.
        let n = 50;
        let h = 1.0 / (n - 1) as f64;
        let mut gx = vec![0.0; n * n];
        let mut gy = vec![0.0; n * n];
        let mut z_true = vec![0.0; n * n];
        for r in 0..n {
            let y = -0.5 + r as f64 * h;
            for c in 0..n {
                let x = -0.5 + c as f64 * h;
                gx[r * n + c] = x.cos() * y.cos();
                gy[r * n + c] = -x.sin() * y.sin();
                z_true[r * n + c] = x.sin() * y.cos();
            }
        }
        let z = reconstruct_surface(&gx, &gy, n, n, h, h);
        let center = (n / 2) * n + n / 2;
        let offset = z_true[center];
        let max_err =
            z.iter().zip(&z_true).map(|(&a, &b)| (a - (b - offset)).abs()).fold(0.0f64, f64::max);
        assert!(max_err < 1e-3, "max error {max_err}");
    }
}
