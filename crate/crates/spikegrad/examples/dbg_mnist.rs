//! Post-training diagnostics on the latency classification task.
use spikegrad::data::synth::synth_digit_images;
use spikegrad::data::{latency_encode, Sample, Target};
use spikegrad::neuron::forward_rnn;
use spikegrad::trainer::{predict, train, DecisionScheme, ExperimentConfig, LossChoice, Task, TaskData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let la: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let lt: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let n_train: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let epochs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2);

    let mut cfg = ExperimentConfig::default_for_task(Task::Mnist);
    cfg.layer_sizes = vec![784, 100, 10];
    cfg.alpha_v = 0.99;
    cfg.alpha_i = 0.99;
    cfg.lambda_act = la;
    cfg.lambda_tim = lt;
    cfg.ste_alpha = 1.0;
    cfg.ste_beta = 3.0;
    cfg.optimizer = spikegrad::optim::OptimizerKind::Adam;
    cfg.grad_clip = 1e6;
    cfg.init_bias_center = true;
    cfg.loss = LossChoice::LatencyMinCount;
    cfg.epoch = epochs;
    cfg.seed = 3;

    let horizon = cfg.horizon;
    let (images, labels) = synth_digit_images(9, n_train + 500);
    let mk = |k: usize| Sample {
        input_spikes: latency_encode(images.image(k), horizon),
        target: Target::Label(labels[k] as usize),
    };
    let data = TaskData {
        train: (0..n_train).map(mk).collect(),
        valid: vec![],
        test: (n_train..n_train + 500).map(mk).collect(),
    };
    let out = train(&cfg, &data).unwrap();
    // Confusion + first-spike profile.
    let shape = cfg.shape();
    let ncfg = cfg.neuron();
    let mut confusion = vec![0u32; 100];
    let mut first_hist: Vec<Vec<i64>> = vec![vec![]; 10];
    for s in &data.test {
        let trace = forward_rnn(&out.params, &s.input_spikes, &shape, &ncfg).unwrap();
        let (pred, _, _) = predict(&trace, DecisionScheme::EarliestSpike);
        let label = s.label().unwrap();
        confusion[label * 10 + pred] += 1;
        let first = trace.first_spike_times(2);
        for o in 0..10 {
            first_hist[o].push(first[o].map(|t| t as i64).unwrap_or(-1));
        }
    }
    println!("confusion (rows=label, cols=pred):");
    for l in 0..10 {
        println!("{l}: {:?}", &confusion[l * 10..(l + 1) * 10]);
    }
    for o in 0..10 {
        let silent = first_hist[o].iter().filter(|&&t| t < 0).count();
        let times: Vec<i64> = first_hist[o].iter().cloned().filter(|&t| t >= 0).collect();
        let mean: f64 = if times.is_empty() { -1.0 } else { times.iter().sum::<i64>() as f64 / times.len() as f64 };
        println!("output {o}: silent {silent}/500, mean first-spike {mean:.1}");
    }
}
