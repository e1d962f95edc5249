//! Per-route gradient norms along a matching trajectory.
use spikegrad::data::random_spiketrain;
use spikegrad::grad::{backprop_antlr, MethodConfig};
use spikegrad::loss::{eval_loss, LossSpec};
use spikegrad::neuron::{forward_rnn, NetworkShape, NeuronConfig};
use spikegrad::optim::{init_params, OptimizerKind, OptimizerState};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(55475);
    let iters: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(600);
    let shape = NetworkShape::new(vec![10, 50, 50, 5], 100);
    let ncfg = NeuronConfig::unit_gain(0.95, 0.95, 1.0, 100);
    let m11 = MethodConfig { lambda_act: 1.0, lambda_tim: 1.0, ..MethodConfig::default() };
    let m10 = MethodConfig { lambda_act: 1.0, lambda_tim: 0.0, ..m11 };
    let m01 = MethodConfig { lambda_act: 0.0, lambda_tim: 1.0, ..m11 };
    let input = random_spiketrain(seed, 10, 3, 100);
    let target = random_spiketrain(seed + 1, 5, 1, 100);
    let spec = LossSpec::SpikeTrain { targets: target, kappa_exp: 0.95 };
    let mut params = init_params(&shape, &ncfg, seed + 2, false);
    let mut opt = OptimizerState::new(OptimizerKind::Sgd, 1e-3, 0.0, 1e5);
    let mut max_tim: f64 = 0.0;
    let mut max_act: f64 = 0.0;
    for it in 0..iters {
        let trace = forward_rnn(&params, &input, &shape, &ncfg).unwrap();
        let lg = eval_loss(&trace, &spec).unwrap();
        let (_, mut pg) = backprop_antlr(&trace, &params, &lg, &m11, &ncfg).unwrap();
        let (_, pa) = backprop_antlr(&trace, &params, &lg, &m10, &ncfg).unwrap();
        let (_, pt) = backprop_antlr(&trace, &params, &lg, &m01, &ncfg).unwrap();
        max_act = max_act.max(pa.l2_norm());
        max_tim = max_tim.max(pt.l2_norm());
        if it % 50 == 0 {
            let out: u32 = trace.spike_counts(3).iter().sum();
            println!(
                "it {it:4} loss {:9.3} out {out:3} |g11| {:9.2e} |g_act| {:9.2e} |g_tim| {:9.2e}",
                lg.loss, pg.l2_norm(), pa.l2_norm(), pt.l2_norm()
            );
        }
        opt.apply(&mut params, &mut pg);
    }
    println!("max act {max_act:.3e} max tim {max_tim:.3e}");
}
