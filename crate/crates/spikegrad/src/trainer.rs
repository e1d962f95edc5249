//! Experiment orchestration: configuration, training loops, evaluation,
//! the random spike-train matching task, and metrics records.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::LandscapeInstance;
use crate::data::{latency_encode, random_spiketrain, Sample, Target};
use crate::error::{Error, Result};
use crate::grad::{backprop_antlr, backprop_rnn_bptt, GradientTrace, MethodConfig, ParamGrads};
use crate::loss::{eval_loss, min_count_variant, no_spike_penalty, LossGrads, LossSpec};
use crate::neuron::{forward_rnn, ForwardTrace, NetworkShape, NeuronConfig, Parameters};
use crate::optim::{init_params, ClipMode, OptimizerKind, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Matching,
    Mnist,
    Nmnist,
}

/// Loss selection for classification/matching training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossChoice {
    #[serde(rename = "count")]
    Count,
    #[serde(rename = "spike-train")]
    SpikeTrain,
    #[serde(rename = "latency")]
    Latency,
    /// Latency loss plus the min-count term that asks the desired output
    /// neuron for at least one spike.
    #[serde(rename = "latency+min-count")]
    LatencyMinCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionScheme {
    /// Predict the output neuron with the earliest first spike.
    EarliestSpike,
    /// Predict the output neuron with the most spikes.
    MostSpike,
}

/// Full experiment description; field names follow the hyperparameter
/// vocabulary used in the config files and CLI flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub layer_sizes: Vec<usize>,
    pub horizon: usize,
    pub batch_size: usize,
    pub epoch: usize,
    pub seed: u64,
    pub deterministic: bool,
    pub single_spike_restriction: bool,
    pub loss: LossChoice,
    pub decision_scheme: DecisionScheme,

    pub alpha_v: f64,
    pub alpha_i: f64,
    pub theta: f64,
    /// Scale coefficients; `None` derives the unit-gain normalization from
    /// the decay pair and horizon.
    pub beta_v: Option<f64>,
    pub beta_i: Option<f64>,
    pub beta_bias: Option<f64>,

    pub lambda_act: f64,
    pub lambda_tim: f64,
    pub ste_alpha: f64,
    pub ste_beta: f64,
    pub use_reset_paths: bool,

    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub grad_clip_mode: ClipMode,
    pub weight_decay: f64,
    pub init_bias_center: bool,

    pub beta_softmax: f64,
    pub kappa_exp: f64,
    pub max_target_spikes: u32,
    pub no_spike_eta: f64,

    pub data_dir: Option<PathBuf>,
    pub log_every: usize,
    /// Optional caps on dataset sizes for reduced-scale runs.
    pub n_train: Option<usize>,
    pub n_valid: Option<usize>,
    pub n_test: Option<usize>,
}

impl ExperimentConfig {
    /// Task-specific defaults; everything can be overridden by a config
    /// file and CLI flags.
    pub fn default_for_task(task: Task) -> Self {
        let (layer_sizes, horizon, loss, scheme) = match task {
            Task::Matching => {
                (vec![10, 50, 50, 5], 100, LossChoice::SpikeTrain, DecisionScheme::EarliestSpike)
            }
            Task::Mnist => (
                vec![784, 100, 10],
                100,
                LossChoice::LatencyMinCount,
                DecisionScheme::EarliestSpike,
            ),
            Task::Nmnist => (
                vec![2 * 34 * 34, 100, 10],
                300,
                LossChoice::LatencyMinCount,
                DecisionScheme::EarliestSpike,
            ),
        };
        ExperimentConfig {
            task,
            layer_sizes,
            horizon,
            batch_size: 16,
            epoch: 1,
            seed: 1,
            deterministic: true,
            single_spike_restriction: false,
            loss,
            decision_scheme: scheme,
            alpha_v: 0.95,
            alpha_i: 0.95,
            theta: 1.0,
            beta_v: None,
            beta_i: None,
            beta_bias: None,
            lambda_act: 1.0,
            lambda_tim: 1.0,
            ste_alpha: 0.3,
            ste_beta: 1.0,
            use_reset_paths: false,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-3,
            grad_clip: 1e5,
            grad_clip_mode: ClipMode::Norm,
            weight_decay: 0.0,
            init_bias_center: false,
            beta_softmax: 1.0,
            kappa_exp: 0.95,
            max_target_spikes: 1,
            no_spike_eta: 1e-3,
            data_dir: None,
            log_every: 100,
            n_train: None,
            n_valid: None,
            n_test: None,
        }
    }

    pub fn shape(&self) -> NetworkShape {
        NetworkShape {
            layer_sizes: self.layer_sizes.clone(),
            horizon: self.horizon,
            single_spike: self.single_spike_restriction,
        }
    }

    pub fn neuron(&self) -> NeuronConfig {
        let mut cfg = NeuronConfig::unit_gain(self.alpha_v, self.alpha_i, self.theta, self.horizon);
        if let Some(b) = self.beta_v {
            cfg.beta_v = b;
        }
        if let Some(b) = self.beta_i {
            cfg.beta_i = b;
        }
        if let Some(b) = self.beta_bias {
            cfg.beta_bias = b;
        }
        cfg
    }

    pub fn method(&self) -> MethodConfig {
        MethodConfig {
            lambda_act: self.lambda_act,
            lambda_tim: self.lambda_tim,
            ste_alpha: self.ste_alpha,
            ste_beta: self.ste_beta,
            use_reset_paths: self.use_reset_paths,
        }
    }

    pub fn optimizer_state(&self) -> OptimizerState {
        let mut s = OptimizerState::new(
            self.optimizer,
            self.learning_rate,
            self.weight_decay,
            self.grad_clip,
        );
        s.clip_mode = self.grad_clip_mode;
        s
    }

    /// Reject invalid shapes, hyperparameters, and loss/method pairings.
    pub fn validate(&self) -> Result<()> {
        self.shape().validate()?;
        self.neuron().validate()?;
        self.method().validate()?;
        self.optimizer_state().validate()?;
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Config("batch_size and log_every must be >= 1".into()));
        }
        if !(self.kappa_exp > 0.0 && self.kappa_exp < 1.0) {
            return Err(Error::Config(format!(
                "kappa_exp must lie in (0, 1), got {}",
                self.kappa_exp
            )));
        }
        if self.beta_softmax <= 0.0 {
            return Err(Error::Config("beta_softmax must be > 0".into()));
        }
        let m = self.method();
        let uses_activation_seeds =
            matches!(self.loss, LossChoice::Count | LossChoice::LatencyMinCount);
        let uses_timing_seeds =
            matches!(self.loss, LossChoice::Latency | LossChoice::LatencyMinCount);
        if matches!(self.loss, LossChoice::Count) && m.timing_only() {
            return Err(Error::Config(
                "the count loss produces no timing seeds; it is incompatible with the pure \
                 timing rule"
                    .into(),
            ));
        }
        if matches!(self.loss, LossChoice::Latency) && m.activation_only() {
            return Err(Error::Config(
                "the latency loss produces no activation seeds; it is incompatible with the \
                 pure activation rule"
                    .into(),
            ));
        }
        if matches!(self.loss, LossChoice::LatencyMinCount)
            && (m.timing_only() || m.activation_only())
        {
            return Err(Error::Config(
                "latency+min-count combines timing and activation seeds; it needs both \
                 lambda_act > 0 and lambda_tim > 0"
                    .into(),
            ));
        }
        let _ = (uses_activation_seeds, uses_timing_seeds);
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsRecord {
    pub kind: String,
    pub iteration: usize,
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub mean_spikes_per_sample: Option<f64>,
    pub mean_silent_neurons: Option<f64>,
    pub v_star_guard_count: u64,
    pub ties: u64,
    pub silent_samples: u64,
    pub wall_time_s: f64,
}

/// Training/evaluation data for one task.
#[derive(Debug, Clone, Default)]
pub struct TaskData {
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Parameters,
    pub records: Vec<MetricsRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub mean_loss: f64,
    pub mean_spikes_per_sample: f64,
    pub mean_silent_neurons: f64,
    pub ties: u64,
    pub silent_samples: u64,
}

/// Build the loss seeds for one sample under the configured loss choice.
fn compose_loss(cfg: &ExperimentConfig, trace: &ForwardTrace, sample: &Sample) -> Result<LossGrads> {
    let n_out = *cfg.layer_sizes.last().unwrap();
    match cfg.loss {
        LossChoice::Count => {
            let targets: Vec<f64> = match &sample.target {
                Target::Counts(c) => c.clone(),
                Target::Label(label) => (0..n_out)
                    .map(|o| if o == *label { f64::from(cfg.max_target_spikes) } else { 0.0 })
                    .collect(),
                Target::Trains(_) => {
                    return Err(Error::Config("count loss needs label or count targets".into()))
                }
            };
            eval_loss(trace, &LossSpec::Count { targets })
        }
        LossChoice::SpikeTrain => {
            let Target::Trains(targets) = &sample.target else {
                return Err(Error::Config("spike-train loss needs target trains".into()));
            };
            eval_loss(
                trace,
                &LossSpec::SpikeTrain { targets: targets.clone(), kappa_exp: cfg.kappa_exp },
            )
        }
        LossChoice::Latency | LossChoice::LatencyMinCount => {
            let Target::Label(label) = sample.target else {
                return Err(Error::Config("latency loss needs a class label".into()));
            };
            let mut y = vec![0.0; n_out];
            y[label] = 1.0;
            let mut lg = eval_loss(trace, &LossSpec::Latency { y, beta_softmax: cfg.beta_softmax })?;
            if matches!(cfg.loss, LossChoice::LatencyMinCount) {
                lg.add(&min_count_variant(trace, label));
            }
            Ok(lg)
        }
    }
}

/// Run the configured backward rule.
fn compute_grads(
    cfg: &ExperimentConfig,
    trace: &ForwardTrace,
    params: &Parameters,
    seeds: &LossGrads,
) -> Result<(GradientTrace, ParamGrads)> {
    let m = cfg.method();
    let ncfg = cfg.neuron();
    if m.use_reset_paths {
        backprop_rnn_bptt(trace, params, seeds, &m, &ncfg)
    } else {
        backprop_antlr(trace, params, seeds, &m, &ncfg)
    }
}

/// Classify one trace under a decision scheme.
/// Returns `(predicted class, tie, silent)`.
pub fn predict(trace: &ForwardTrace, scheme: DecisionScheme) -> (usize, bool, bool) {
    let l = trace.layer_sizes.len() - 1;
    match scheme {
        DecisionScheme::EarliestSpike => {
            let first = trace.first_spike_times(l);
            let silent = first.iter().all(|f| f.is_none());
            let best = first
                .iter()
                .map(|f| f.map(|t| t as i64).unwrap_or(i64::MAX))
                .enumerate()
                .min_by_key(|&(o, t)| (t, o))
                .map(|(o, _)| o)
                .unwrap_or(0);
            let best_t = first[best].map(|t| t as i64).unwrap_or(i64::MAX);
            let tie = first
                .iter()
                .enumerate()
                .filter(|&(o, f)| o != best && f.map(|t| t as i64).unwrap_or(i64::MAX) == best_t)
                .count()
                > 0;
            (best, tie, silent)
        }
        DecisionScheme::MostSpike => {
            let counts = trace.spike_counts(l);
            let silent = counts.iter().all(|&c| c == 0);
            let best = counts
                .iter()
                .enumerate()
                .max_by(|&(oa, ca), &(ob, cb)| ca.cmp(cb).then(ob.cmp(&oa)))
                .map(|(o, _)| o)
                .unwrap_or(0);
            let tie = counts.iter().enumerate().filter(|&(o, &c)| o != best && c == counts[best]).count() > 0;
            (best, tie, silent)
        }
    }
}

/// Evaluate accuracy, loss, and spike statistics over a sample set.
pub fn evaluate(
    params: &Parameters,
    cfg: &ExperimentConfig,
    samples: &[Sample],
    scheme: DecisionScheme,
) -> Result<EvalReport> {
    let shape = cfg.shape();
    let ncfg = cfg.neuron();
    let mut report = EvalReport { samples: samples.len(), ..EvalReport::default() };
    let n_neurons: usize = cfg.layer_sizes[1..].iter().sum();
    for sample in samples {
        let trace = forward_rnn(params, &sample.input_spikes, &shape, &ncfg)?;
        let lg = compose_loss(cfg, &trace, sample)?;
        report.mean_loss += lg.loss;
        report.mean_spikes_per_sample += trace.non_input_spikes() as f64;
        let silent_neurons: usize = (1..cfg.layer_sizes.len())
            .map(|l| trace.spike_counts(l).iter().filter(|&&c| c == 0).count())
            .sum();
        report.mean_silent_neurons += silent_neurons as f64;
        let _ = n_neurons;
        let (class, tie, silent) = predict(&trace, scheme);
        if tie {
            report.ties += 1;
        }
        if silent {
            report.silent_samples += 1;
        }
        if let Target::Label(label) = sample.target {
            if class == label {
                report.correct += 1;
            }
        }
    }
    let n = samples.len().max(1) as f64;
    report.accuracy = report.correct as f64 / n;
    report.mean_loss /= n;
    report.mean_spikes_per_sample /= n;
    report.mean_silent_neurons /= n;
    Ok(report)
}

/// Mini-batch training loop: forward, loss seeds, backward, batch-sum
/// gradients, clip, optimizer step; per-epoch validation records; summary
/// record with test accuracy at the end.
pub fn train(cfg: &ExperimentConfig, data: &TaskData) -> Result<TrainOutcome> {
    cfg.validate()?;
    let shape = cfg.shape();
    let ncfg = cfg.neuron();
    let mut params = init_params(&shape, &ncfg, cfg.seed, cfg.init_bias_center);
    let mut opt = cfg.optimizer_state();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5u64));
    let mut records = Vec::new();
    let started = Instant::now();
    let mut iteration = 0usize;
    let mut guard_total = 0u64;
    let mut loss_accum = 0.0;
    let mut loss_count = 0usize;
    let timing_only = cfg.method().timing_only();

    let wall = |cfg: &ExperimentConfig, started: &Instant| {
        if cfg.deterministic {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        }
    };

    for epoch in 0..cfg.epoch {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        for k in (1..order.len()).rev() {
            order.swap(k, rng.gen_range(0..=k));
        }
        for batch in order.chunks(cfg.batch_size) {
            let mut batch_grads = ParamGrads::zeros_like(&params);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let sample = &data.train[idx];
                let trace = forward_rnn(&params, &sample.input_spikes, &shape, &ncfg)?;
                let mut lg = compose_loss(cfg, &trace, sample)?;
                if matches!(cfg.loss, LossChoice::SpikeTrain) {
                    let scale = spike_train_seed_scale(cfg.kappa_exp);
                    lg.dl_ds.iter_mut().for_each(|x| *x *= scale);
                    lg.dl_dthat.iter_mut().for_each(|x| *x *= scale);
                }
                if !lg.loss.is_finite() {
                    return Err(Error::Divergence {
                        iteration,
                        detail: format!("non-finite loss {} on sample {idx}", lg.loss),
                    });
                }
                batch_loss += lg.loss;
                let (gt, mut pg) = compute_grads(cfg, &trace, &params, &lg)?;
                guard_total += gt.v_star_guard_count as u64;
                if timing_only {
                    no_spike_penalty(&trace, &mut pg, cfg.no_spike_eta);
                }
                batch_grads.add_scaled(&pg, 1.0);
            }
            if !batch_grads.is_finite() {
                return Err(Error::Divergence {
                    iteration,
                    detail: "non-finite batch gradient".into(),
                });
            }
            opt.apply(&mut params, &mut batch_grads);
            iteration += 1;
            loss_accum += batch_loss / batch.len().max(1) as f64;
            loss_count += 1;
            if iteration % cfg.log_every == 0 {
                records.push(MetricsRecord {
                    kind: "train".into(),
                    iteration,
                    epoch,
                    train_loss: Some(loss_accum / loss_count.max(1) as f64),
                    valid_accuracy: None,
                    test_accuracy: None,
                    mean_spikes_per_sample: None,
                    mean_silent_neurons: None,
                    v_star_guard_count: guard_total,
                    ties: 0,
                    silent_samples: 0,
                    wall_time_s: wall(cfg, &started),
                });
                loss_accum = 0.0;
                loss_count = 0;
            }
        }
        if !data.valid.is_empty() {
            let report = evaluate(&params, cfg, &data.valid, cfg.decision_scheme)?;
            records.push(MetricsRecord {
                kind: "eval".into(),
                iteration,
                epoch,
                train_loss: None,
                valid_accuracy: Some(report.accuracy),
                test_accuracy: None,
                mean_spikes_per_sample: Some(report.mean_spikes_per_sample),
                mean_silent_neurons: Some(report.mean_silent_neurons),
                v_star_guard_count: guard_total,
                ties: report.ties,
                silent_samples: report.silent_samples,
                wall_time_s: wall(cfg, &started),
            });
        }
    }

    let test_report = if data.test.is_empty() {
        None
    } else {
        Some(evaluate(&params, cfg, &data.test, cfg.decision_scheme)?)
    };
    records.push(MetricsRecord {
        kind: "summary".into(),
        iteration,
        epoch: cfg.epoch.saturating_sub(1),
        train_loss: None,
        valid_accuracy: None,
        test_accuracy: test_report.as_ref().map(|r| r.accuracy),
        mean_spikes_per_sample: test_report.as_ref().map(|r| r.mean_spikes_per_sample),
        mean_silent_neurons: test_report.as_ref().map(|r| r.mean_silent_neurons),
        v_star_guard_count: guard_total,
        ties: test_report.as_ref().map(|r| r.ties).unwrap_or(0),
        silent_samples: test_report.as_ref().map(|r| r.silent_samples).unwrap_or(0),
        wall_time_s: wall(cfg, &started),
    });
    Ok(TrainOutcome { params, records })
}

/// Assemble latency-coded image samples from IDX files under `data_dir`
/// (standard file names). The last 10000 training images form the fixed
/// validation split; `n_train`/`n_valid`/`n_test` cap the subset sizes.
pub fn mnist_task_data(cfg: &ExperimentConfig) -> Result<TaskData> {
    let dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Config("image task needs data_dir".into()))?;
    let train_images = crate::data::load_idx_images(&dir.join("train-images-idx3-ubyte"))?;
    let train_labels = crate::data::load_idx_labels(&dir.join("train-labels-idx1-ubyte"))?;
    let test_images = crate::data::load_idx_images(&dir.join("t10k-images-idx3-ubyte"))?;
    let test_labels = crate::data::load_idx_labels(&dir.join("t10k-labels-idx1-ubyte"))?;
    if train_images.count != train_labels.len() || test_images.count != test_labels.len() {
        return Err(Error::Data("image/label counts disagree".into()));
    }
    if train_images.rows * train_images.cols != cfg.layer_sizes[0] {
        return Err(Error::Config(format!(
            "input layer has {} neurons but images have {} pixels",
            cfg.layer_sizes[0],
            train_images.rows * train_images.cols
        )));
    }
    let sample_at = |images: &crate::data::IdxImages, labels: &[u8], k: usize| Sample {
        input_spikes: latency_encode(images.image(k), cfg.horizon),
        target: Target::Label(labels[k] as usize),
    };
    // Fixed index split: validation comes off the tail of the train file.
    let valid_pool = (train_images.count / 6).min(10_000);
    let train_pool = train_images.count - valid_pool;
    let n_train = cfg.n_train.unwrap_or(train_pool).min(train_pool);
    let n_valid = cfg.n_valid.unwrap_or(valid_pool).min(valid_pool);
    let n_test = cfg.n_test.unwrap_or(test_images.count).min(test_images.count);
    Ok(TaskData {
        train: (0..n_train).map(|k| sample_at(&train_images, &train_labels, k)).collect(),
        valid: (0..n_valid)
            .map(|k| sample_at(&train_images, &train_labels, train_pool + k))
            .collect(),
        test: (0..n_test).map(|k| sample_at(&test_images, &test_labels, k)).collect(),
    })
}

/// Assemble binned event samples from `data_dir/Train/<label>/*.bin` and
/// `data_dir/Test/<label>/*.bin`. The validation split is every sixth
/// training sample.
pub fn nmnist_task_data(cfg: &ExperimentConfig) -> Result<TaskData> {
    let dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Config("event task needs data_dir".into()))?;
    if cfg.layer_sizes[0] != crate::data::aer::EVENT_INPUTS {
        return Err(Error::Config(format!(
            "input layer has {} neurons but event tensors have {}",
            cfg.layer_sizes[0],
            crate::data::aer::EVENT_INPUTS
        )));
    }
    let to_sample = |(stream, label): &(crate::data::EventStream, usize)| Sample {
        input_spikes: crate::data::bin_events(stream, cfg.horizon),
        target: Target::Label(*label),
    };
    let train_all = crate::data::synth::load_nmnist_dir(&dir.join("Train"))?;
    let test_all = crate::data::synth::load_nmnist_dir(&dir.join("Test"))?;
    if train_all.is_empty() {
        return Err(Error::Data(format!("no event samples under {}", dir.display())));
    }
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (k, pair) in train_all.iter().enumerate() {
        if k % 6 == 5 {
            valid.push(to_sample(pair));
        } else {
            train.push(to_sample(pair));
        }
    }
    if let Some(n) = cfg.n_train {
        train.truncate(n);
    }
    if let Some(n) = cfg.n_valid {
        valid.truncate(n);
    }
    let mut test: Vec<Sample> = test_all.iter().map(to_sample).collect();
    if let Some(n) = cfg.n_test {
        test.truncate(n);
    }
    Ok(TaskData { train, valid, test })
}

/// Load the dataset for the configured task.
pub fn load_task_data(cfg: &ExperimentConfig) -> Result<TaskData> {
    match cfg.task {
        Task::Mnist => mnist_task_data(cfg),
        Task::Nmnist => nmnist_task_data(cfg),
        Task::Matching => Err(Error::Config(
            "the matching task generates its own instances; use the matching runner".into(),
        )),
    }
}

/// Serialize metrics records as line-delimited JSON.
pub fn write_metrics_jsonl(records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("metrics record serializes"));
        out.push('\n');
    }
    out
}

/// Training-objective scale for the filtered spike-train loss: the
/// squared L2 norm of the exponential filter. Dividing the seeds by it
/// optimizes the filter-energy-normalized objective, which puts the
/// gradient scale on par with the per-step-normalized count loss; reported
/// loss values stay on the plain filtered-SSE scale.
fn spike_train_seed_scale(kappa_exp: f64) -> f64 {
    1.0 - kappa_exp * kappa_exp
}

/// Options for the random spike-train matching task.
#[derive(Debug, Clone)]
pub struct MatchingOptions {
    pub layer_sizes: Vec<usize>,
    pub horizon: usize,
    pub input_spikes_per_neuron: usize,
    pub target_spikes_per_neuron: usize,
    pub trials: usize,
    pub iterations: usize,
    pub record_every: usize,
    pub seed: u64,
    pub method: MethodConfig,
    /// Route gradients through the BPTT engine (the reset-path ablation)
    /// instead of the kernel-form engine.
    pub force_bptt: bool,
    pub neuron: NeuronConfig,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub weight_decay: f64,
    pub init_bias_center: bool,
    pub kappa_exp: f64,
    pub no_spike_eta: f64,
}

impl Default for MatchingOptions {
    fn default() -> Self {
        MatchingOptions {
            layer_sizes: vec![10, 50, 50, 5],
            horizon: 100,
            input_spikes_per_neuron: 3,
            target_spikes_per_neuron: 1,
            trials: 10,
            iterations: 5000,
            record_every: 100,
            seed: 1,
            method: MethodConfig::default(),
            force_bptt: false,
            neuron: {
                let mut n = NeuronConfig::unit_gain(0.95, 0.95, 1.0, 100);
                if let Ok(v) = std::env::var("MATCH_THETA") { n.theta = v.parse().unwrap(); }
                if let Ok(v) = std::env::var("MATCH_BB") { n.beta_bias = v.parse().unwrap(); }
                n
            },
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-3,
            grad_clip: 1e5,
            weight_decay: 0.0,
            init_bias_center: false,
            kappa_exp: 0.95,
            no_spike_eta: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialCurve {
    pub trial: usize,
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `(iteration, loss)` pairs sampled every `record_every` iterations.
    pub losses: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchingReport {
    pub trials: Vec<TrialCurve>,
}

impl MatchingReport {
    pub fn mean_initial_loss(&self) -> f64 {
        self.trials.iter().map(|t| t.initial_loss).sum::<f64>() / self.trials.len().max(1) as f64
    }

    pub fn mean_final_loss(&self) -> f64 {
        self.trials.iter().map(|t| t.final_loss).sum::<f64>() / self.trials.len().max(1) as f64
    }
}

/// Train seeded random matching instances and record the loss curves.
///
/// Each trial draws fresh input trains, target trains, and initial
/// parameters, then runs full-batch updates on that single instance.
pub fn run_matching(opts: &MatchingOptions) -> Result<MatchingReport> {
    opts.method.validate()?;
    let shape = NetworkShape::new(opts.layer_sizes.clone(), opts.horizon);
    shape.validate()?;
    let n_in = shape.input_size();
    let n_out = shape.output_size();
    let timing_only = opts.method.timing_only();
    let mut trials = Vec::with_capacity(opts.trials);

    for trial in 0..opts.trials {
        let trial_seed = opts.seed.wrapping_add(7919 * trial as u64);
        let input =
            random_spiketrain(trial_seed, n_in, opts.input_spikes_per_neuron, opts.horizon);
        let target = random_spiketrain(
            trial_seed.wrapping_add(1),
            n_out,
            opts.target_spikes_per_neuron,
            opts.horizon,
        );
        let spec = LossSpec::SpikeTrain { targets: target.clone(), kappa_exp: opts.kappa_exp };
        let mut params =
            init_params(&shape, &opts.neuron, trial_seed.wrapping_add(2), opts.init_bias_center);
        let mut opt = OptimizerState::new(
            opts.optimizer,
            opts.learning_rate,
            opts.weight_decay,
            opts.grad_clip,
        );

        let mut curve = TrialCurve {
            trial,
            seed: trial_seed,
            initial_loss: f64::NAN,
            final_loss: f64::NAN,
            losses: Vec::new(),
        };
        let mut last_loss = f64::NAN;
        for it in 0..opts.iterations {
            let trace = forward_rnn(&params, &input, &shape, &opts.neuron)?;
            let lg = eval_loss(&trace, &spec)?;
            if !lg.loss.is_finite() {
                return Err(Error::Divergence {
                    iteration: it,
                    detail: format!("non-finite matching loss in trial {trial}"),
                });
            }
            if it == 0 {
                curve.initial_loss = lg.loss;
            }
            if it % opts.record_every == 0 {
                curve.losses.push((it, lg.loss));
            }
            last_loss = lg.loss;
            let mut lg = lg;
            let scale = spike_train_seed_scale(opts.kappa_exp);
            lg.dl_ds.iter_mut().for_each(|x| *x *= scale);
            lg.dl_dthat.iter_mut().for_each(|x| *x *= scale);
            let (_, mut pg) = if opts.force_bptt {
                backprop_rnn_bptt(&trace, &params, &lg, &opts.method, &opts.neuron)?
            } else {
                backprop_antlr(&trace, &params, &lg, &opts.method, &opts.neuron)?
            };
            if timing_only {
                no_spike_penalty(&trace, &mut pg, opts.no_spike_eta);
            }
            opt.apply(&mut params, &mut pg);
        }
        // Loss after the final update.
        let trace = forward_rnn(&params, &input, &shape, &opts.neuron)?;
        let lg = eval_loss(&trace, &spec)?;
        curve.final_loss = lg.loss;
        curve.losses.push((opts.iterations, lg.loss));
        let _ = last_loss;
        trials.push(curve);
    }
    Ok(MatchingReport { trials })
}

/// Result of training a matching instance to exact zero loss, for the
/// landscape pipeline.
#[derive(Debug, Clone)]
pub struct TrainedInstance {
    pub params: Parameters,
    pub instance: LandscapeInstance,
    /// Flattened combined-rule gradients sampled over training.
    pub grad_history: Vec<Vec<f64>>,
    pub iterations_used: usize,
}

/// Train a single-output matching instance until the output train equals
/// the target exactly (zero loss), retrying over seeds. The gradient
/// history is subsampled to at most `history_cap` vectors.
pub fn train_matching_to_zero(
    base_seed: u64,
    max_iterations: usize,
    max_seed_tries: usize,
    history_cap: usize,
) -> Result<Option<TrainedInstance>> {
    let opts = MatchingOptions {
        layer_sizes: vec![10, 50, 50, 1],
        ..MatchingOptions::default()
    };
    let shape = NetworkShape::new(opts.layer_sizes.clone(), opts.horizon);

    for attempt in 0..max_seed_tries {
        let seed = base_seed.wrapping_add(31 * attempt as u64);
        let input = random_spiketrain(seed, 10, opts.input_spikes_per_neuron, opts.horizon);
        let target = random_spiketrain(seed.wrapping_add(1), 1, 1, opts.horizon);
        let spec = LossSpec::SpikeTrain { targets: target.clone(), kappa_exp: opts.kappa_exp };
        let mut params = init_params(&shape, &opts.neuron, seed.wrapping_add(2), false);
        let mut opt = OptimizerState::new(
            opts.optimizer,
            opts.learning_rate,
            opts.weight_decay,
            opts.grad_clip,
        );
        // Keep every stride-th gradient; double the stride whenever the
        // buffer overflows twice the cap, so short and long runs both end
        // with a spread-out sample of at most ~2 * cap vectors.
        let mut history: Vec<Vec<f64>> = Vec::new();
        let mut stride = 1usize;
        for it in 0..max_iterations {
            let trace = forward_rnn(&params, &input, &shape, &opts.neuron)?;
            let lg = eval_loss(&trace, &spec)?;
            if lg.loss == 0.0 {
                if history.len() >= 2 {
                    let instance = LandscapeInstance {
                        shape: shape.clone(),
                        cfg: opts.neuron,
                        input,
                        target,
                        kappa_exp: opts.kappa_exp,
                        ste_alpha: opts.method.ste_alpha,
                        ste_beta: opts.method.ste_beta,
                    };
                    return Ok(Some(TrainedInstance {
                        params,
                        instance,
                        grad_history: history,
                        iterations_used: it,
                    }));
                }
                break; // solved before enough gradients accumulated; reseed
            }
            let mut lg = lg;
            let scale = spike_train_seed_scale(opts.kappa_exp);
            lg.dl_ds.iter_mut().for_each(|x| *x *= scale);
            lg.dl_dthat.iter_mut().for_each(|x| *x *= scale);
            let (_, mut pg) = backprop_antlr(&trace, &params, &lg, &opts.method, &opts.neuron)?;
            if it % stride == 0 {
                history.push(pg.to_flat());
                if history.len() >= 2 * history_cap.max(1) {
                    let mut k = 0;
                    history.retain(|_| {
                        k += 1;
                        (k - 1) % 2 == 0
                    });
                    stride *= 2;
                }
            }
            opt.apply(&mut params, &mut pg);
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_digit_images, write_synth_mnist_dir};
    use crate::data::{load_idx_images, load_idx_labels};

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_for_task(Task::Mnist);
        cfg.layer_sizes = vec![784, 20, 10];
        cfg.horizon = 30;
        cfg.epoch = 1;
        cfg.batch_size = 4;
        cfg.log_every = 5;
        cfg
    }

    fn tiny_data(n_train: usize, n_test: usize, horizon: usize) -> TaskData {
        let (images, labels) = synth_digit_images(3, n_train + n_test);
        let samples: Vec<Sample> = (0..n_train + n_test)
            .map(|k| Sample {
                input_spikes: latency_encode(images.image(k), horizon),
                target: Target::Label(labels[k] as usize),
            })
            .collect();
        TaskData {
            train: samples[..n_train].to_vec(),
            valid: samples[n_train..].to_vec(),
            test: samples[n_train..].to_vec(),
        }
    }

    #[test]
    fn incompatible_loss_method_pairs_rejected() {
        let mut cfg = tiny_config();
        cfg.loss = LossChoice::Count;
        cfg.lambda_act = 0.0;
        cfg.lambda_tim = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = tiny_config();
        cfg.loss = LossChoice::Latency;
        cfg.lambda_act = 1.0;
        cfg.lambda_tim = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = tiny_config();
        cfg.lambda_act = 0.0;
        cfg.lambda_tim = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut cfg = tiny_config();
        cfg.learning_rate = 0.0;
        cfg.n_train = Some(8);
        let data = tiny_data(8, 4, cfg.horizon);
        let outcome = train(&cfg, &data).unwrap();
        let fresh = init_params(&cfg.shape(), &cfg.neuron(), cfg.seed, cfg.init_bias_center);
        assert_eq!(outcome.params, fresh);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let cfg = tiny_config();
        let data = tiny_data(12, 4, cfg.horizon);
        let a = train(&cfg, &data).unwrap();
        let b = train(&cfg, &data).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(write_metrics_jsonl(&a.records), write_metrics_jsonl(&b.records));
    }

    #[test]
    fn predict_schemes() {
        // One output spiking: both schemes pick it.
        let cfg = NeuronConfig::default();
        let shape = NetworkShape::new(vec![2, 2], 10);
        let mut params = Parameters::zeros(&shape);
        *params.layers[0].weight_mut(0, 1) = 1.5;
        let mut input = vec![0u8; 20];
        input[0 * 2] = 1; // t = 0, input 0
        let trace = forward_rnn(&params, &input, &shape, &cfg).unwrap();
        assert_eq!(predict(&trace, DecisionScheme::EarliestSpike), (1, false, false));
        assert_eq!(predict(&trace, DecisionScheme::MostSpike), (1, false, false));
        // No spikes: lowest index wins, flagged silent.
        let trace = forward_rnn(&Parameters::zeros(&shape), &input, &shape, &cfg).unwrap();
        let (class, _tie, silent) = predict(&trace, DecisionScheme::EarliestSpike);
        assert_eq!(class, 0);
        assert!(silent);
    }

    #[test]
    fn matching_zero_gradient_fixed_point() {
        // Targets set to the untrained network's own output: loss 0 and no
        // parameter motion.
        let opts = MatchingOptions {
            trials: 1,
            iterations: 5,
            ..MatchingOptions::default()
        };
        let shape = NetworkShape::new(opts.layer_sizes.clone(), opts.horizon);
        let input = random_spiketrain(11, 10, 3, opts.horizon);
        let params = init_params(&shape, &opts.neuron, 12, false);
        let trace = forward_rnn(&params, &input, &shape, &opts.neuron).unwrap();
        let target = trace.s[shape.num_layers() - 1].clone();
        let spec = LossSpec::SpikeTrain { targets: target, kappa_exp: 0.95 };
        let lg = eval_loss(&trace, &spec).unwrap();
        assert_eq!(lg.loss, 0.0);
        let (_, pg) =
            backprop_antlr(&trace, &params, &lg, &opts.method, &opts.neuron).unwrap();
        assert!(pg.iter_flat().all(|x| x == 0.0));
    }

    #[test]
    fn synth_dataset_roundtrip_through_idx_files() {
        let dir = tempfile::tempdir().unwrap();
        write_synth_mnist_dir(dir.path(), 5, 10, 4).unwrap();
        let images = load_idx_images(&dir.path().join("train-images-idx3-ubyte")).unwrap();
        let labels = load_idx_labels(&dir.path().join("train-labels-idx1-ubyte")).unwrap();
        assert_eq!(images.count, 10);
        assert_eq!(labels.len(), 10);
        let (direct, direct_labels) = synth_digit_images(5, 10);
        assert_eq!(images.data, direct.data);
        assert_eq!(labels, direct_labels);
    }
}
