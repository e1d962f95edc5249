//! End-to-end sign check: latency descent must pull the correct output's
//! first spike earlier and push the wrong one later.
use spikegrad::data::{Sample, Target};
use spikegrad::grad::{backprop_antlr, MethodConfig};
use spikegrad::loss::{eval_loss, LossSpec};
use spikegrad::neuron::{forward_rnn, NetworkShape, NeuronConfig, Parameters};
use spikegrad::optim::{OptimizerKind, OptimizerState};

fn main() {
    let horizon = 60;
    let shape = NetworkShape::new(vec![2, 2], horizon);
    let ncfg = NeuronConfig::unit_gain(0.99, 0.99, 1.0, horizon);
    let mut params = Parameters::zeros(&shape);
    // Both outputs driven equally by both inputs.
    for i in 0..2 {
        for o in 0..2 {
            *params.layers[0].weight_mut(i, o) = 0.9;
        }
    }
    let mut input = vec![0u8; horizon * 2];
    input[0] = 1; // input 0 at t = 0
    input[1] = 1; // input 1 at t = 0
    let m = MethodConfig { lambda_act: 1.0, lambda_tim: 1.0, ste_alpha: 1.0, ste_beta: 3.0, use_reset_paths: false };
    let mut opt = OptimizerState::new(OptimizerKind::Adam, 1e-3, 0.0, 1e6);
    let spec = LossSpec::Latency { y: vec![1.0, 0.0], beta_softmax: 1.0 };
    let mut t0_first = None;
    for it in 0..600 {
        let trace = forward_rnn(&params, &input, &shape, &ncfg).unwrap();
        let first = trace.first_spike_times(1);
        if it == 0 {
            t0_first = Some(first.clone());
        }
        if it % 150 == 0 {
            let lg = eval_loss(&trace, &spec).unwrap();
            println!("it {it}: first spikes {:?} loss {:.4}", first, lg.loss);
        }
        let lg = eval_loss(&trace, &spec).unwrap();
        let (_, mut pg) = backprop_antlr(&trace, &params, &lg, &m, &ncfg).unwrap();
        opt.apply(&mut params, &mut pg);
    }
    let trace = forward_rnn(&params, &input, &shape, &ncfg).unwrap();
    let first = trace.first_spike_times(1);
    println!("start {:?} -> end {:?}", t0_first.unwrap(), first);
}
