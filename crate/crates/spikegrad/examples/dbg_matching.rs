//! Diagnostic run of one matching trial.
use spikegrad::data::random_spiketrain;
use spikegrad::grad::{backprop_antlr, MethodConfig};
use spikegrad::loss::{eval_loss, no_spike_penalty, LossSpec};
use spikegrad::neuron::{forward_rnn, NetworkShape, NeuronConfig};
use spikegrad::optim::{init_params, OptimizerKind, OptimizerState};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let la: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let lt: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let iters: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(500);
    let beta: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let seed: u64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(5);
    let beta_bias: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(1.0);

    let shape = NetworkShape::new(vec![10, 50, 50, 5], 100);
    let ncfg = NeuronConfig { beta_v: beta, beta_i: beta, beta_bias, ..NeuronConfig::default() };
    let m = MethodConfig { lambda_act: la, lambda_tim: lt, ..MethodConfig::default() };
    let timing_only = la == 0.0 && lt != 0.0;
    let input = random_spiketrain(seed, 10, 3, 100);
    let target = random_spiketrain(seed + 1, 5, 1, 100);
    let spec = LossSpec::SpikeTrain { targets: target, kappa_exp: 0.95 };
    let mut params = init_params(&shape, &ncfg, seed + 2, false);
    let mut opt = OptimizerState::new(OptimizerKind::Sgd, lr, 0.0, 1e5);
    for it in 0..iters {
        let trace = forward_rnn(&params, &input, &shape, &ncfg).unwrap();
        let lg = eval_loss(&trace, &spec).unwrap();
        let (gt, mut pg) = backprop_antlr(&trace, &params, &lg, &m, &ncfg).unwrap();
        if let Ok(ds) = std::env::var("GRAD_DIV") {
            let d: f64 = ds.parse().unwrap();
            pg.scale(1.0 / d);
        }
        if timing_only {
            no_spike_penalty(&trace, &mut pg, 1e-3);
        }
        if it % (iters / 12).max(1) == 0 || it < 3 {
            let h1: u32 = trace.spike_counts(1).iter().sum();
            let h2: u32 = trace.spike_counts(2).iter().sum();
            let out: u32 = trace.spike_counts(3).iter().sum();
            println!(
                "it {it:5} loss {:12.4} spikes {h1:4}/{h2:4}/{out:3} |g| {:10.3e} guards {}",
                lg.loss,
                pg.l2_norm(),
                gt.v_star_guard_count,
            );
        }
        opt.apply(&mut params, &mut pg);
    }
}
