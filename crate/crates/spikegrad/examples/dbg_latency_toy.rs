//! Sanity: latency learning on a trivial separable task.
//! Class c = input neuron c spikes at t = 5 + c, plus noise inputs.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikegrad::data::{Sample, Target};
use spikegrad::trainer::{train, ExperimentConfig, LossChoice, Task, TaskData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let la: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let lt: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let mut cfg = ExperimentConfig::default_for_task(Task::Mnist);
    cfg.layer_sizes = vec![20, 30, 10];
    cfg.horizon = 60;
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
    cfg.epoch = 3;
    cfg.seed = 3;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mk = |rng: &mut ChaCha8Rng| {
        let label = rng.gen_range(0..10usize);
        let mut spikes = vec![0u8; 60 * 20];
        spikes[(5 + label) * 20 + label] = 1;
        for k in 10..20 {
            let t = rng.gen_range(0..60);
            spikes[t * 20 + k] = 1;
        }
        Sample { input_spikes: spikes, target: Target::Label(label) }
    };
    let train_s: Vec<Sample> = (0..2000).map(|_| mk(&mut rng)).collect();
    let test_s: Vec<Sample> = (0..500).map(|_| mk(&mut rng)).collect();
    let data = TaskData { train: train_s, valid: vec![], test: test_s };
    let out = train(&cfg, &data).unwrap();
    let last = out.records.last().unwrap();
    println!(
        "toy latency: acc {:?} spikes {:?}",
        last.test_accuracy, last.mean_spikes_per_sample
    );
}
