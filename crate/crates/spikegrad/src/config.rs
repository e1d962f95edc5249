//! Config-file support: a nested TOML document whose keys use the same
//! hyperparameter names as the CLI flags. Every field is optional; file
//! values override task defaults, and CLI flags override the file.

use serde::Deserialize;
use std::path::PathBuf;

use crate::error::Result;
use crate::optim::{ClipMode, OptimizerKind};
use crate::trainer::{DecisionScheme, ExperimentConfig, LossChoice, Task};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<Task>,
    pub layer_sizes: Option<Vec<usize>>,
    pub horizon: Option<usize>,
    pub batch_size: Option<usize>,
    pub epoch: Option<usize>,
    pub seed: Option<u64>,
    pub deterministic: Option<bool>,
    pub single_spike_restriction: Option<bool>,
    pub loss: Option<LossChoice>,
    pub decision_scheme: Option<DecisionScheme>,
    pub data_dir: Option<PathBuf>,
    pub log_every: Option<usize>,
    pub n_train: Option<usize>,
    pub n_valid: Option<usize>,
    pub n_test: Option<usize>,
    #[serde(default)]
    pub neuron: NeuronSection,
    #[serde(default)]
    pub method: MethodSection,
    #[serde(default)]
    pub optim: OptimSection,
    #[serde(default)]
    pub loss_params: LossSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronSection {
    pub alpha_v: Option<f64>,
    pub alpha_i: Option<f64>,
    pub theta: Option<f64>,
    pub beta_v: Option<f64>,
    pub beta_i: Option<f64>,
    pub beta_bias: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub lambda_act: Option<f64>,
    pub lambda_tim: Option<f64>,
    pub ste_alpha: Option<f64>,
    pub ste_beta: Option<f64>,
    pub use_reset_paths: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSection {
    pub optimizer: Option<OptimizerKind>,
    pub learning_rate: Option<f64>,
    pub grad_clip: Option<f64>,
    pub grad_clip_mode: Option<ClipMode>,
    pub weight_decay: Option<f64>,
    pub init_bias_center: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub beta_softmax: Option<f64>,
    pub kappa_exp: Option<f64>,
    pub max_target_spikes: Option<u32>,
    pub no_spike_eta: Option<f64>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Overlay every present field onto `cfg`.
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($field:ident, $src:expr) => {
                if let Some(v) = &$src {
                    cfg.$field = v.clone();
                }
            };
        }
        set!(task, self.task);
        set!(layer_sizes, self.layer_sizes);
        set!(horizon, self.horizon);
        set!(batch_size, self.batch_size);
        set!(epoch, self.epoch);
        set!(seed, self.seed);
        set!(deterministic, self.deterministic);
        set!(single_spike_restriction, self.single_spike_restriction);
        set!(loss, self.loss);
        set!(decision_scheme, self.decision_scheme);
        if self.data_dir.is_some() {
            cfg.data_dir = self.data_dir.clone();
        }
        set!(log_every, self.log_every);
        if self.n_train.is_some() {
            cfg.n_train = self.n_train;
        }
        if self.n_valid.is_some() {
            cfg.n_valid = self.n_valid;
        }
        if self.n_test.is_some() {
            cfg.n_test = self.n_test;
        }
        set!(alpha_v, self.neuron.alpha_v);
        set!(alpha_i, self.neuron.alpha_i);
        set!(theta, self.neuron.theta);
        if self.neuron.beta_v.is_some() {
            cfg.beta_v = self.neuron.beta_v;
        }
        if self.neuron.beta_i.is_some() {
            cfg.beta_i = self.neuron.beta_i;
        }
        if self.neuron.beta_bias.is_some() {
            cfg.beta_bias = self.neuron.beta_bias;
        }
        set!(lambda_act, self.method.lambda_act);
        set!(lambda_tim, self.method.lambda_tim);
        set!(ste_alpha, self.method.ste_alpha);
        set!(ste_beta, self.method.ste_beta);
        set!(use_reset_paths, self.method.use_reset_paths);
        set!(optimizer, self.optim.optimizer);
        set!(learning_rate, self.optim.learning_rate);
        set!(grad_clip, self.optim.grad_clip);
        set!(grad_clip_mode, self.optim.grad_clip_mode);
        set!(weight_decay, self.optim.weight_decay);
        set!(init_bias_center, self.optim.init_bias_center);
        set!(beta_softmax, self.loss_params.beta_softmax);
        set!(kappa_exp, self.loss_params.kappa_exp);
        set!(max_target_spikes, self.loss_params.max_target_spikes);
        set!(no_spike_eta, self.loss_params.no_spike_eta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults() {
        let text = r#"
task = "mnist"
epoch = 3
loss = "latency+min-count"

[neuron]
alpha_v = 0.99
alpha_i = 0.99

[method]
lambda_act = 1.0
lambda_tim = 1.0
ste_alpha = 1.0
ste_beta = 3.0

[optim]
optimizer = "adam"
learning_rate = 1e-3
grad_clip = 1e6
init_bias_center = true

[loss_params]
beta_softmax = 1.0
"#;
        let file = FileConfig::parse(text).unwrap();
        let mut cfg = ExperimentConfig::default_for_task(file.task.unwrap());
        file.apply(&mut cfg);
        assert_eq!(cfg.epoch, 3);
        assert_eq!(cfg.alpha_v, 0.99);
        assert_eq!(cfg.optimizer, OptimizerKind::Adam);
        assert!(cfg.init_bias_center);
        assert_eq!(cfg.ste_beta, 3.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = FileConfig::parse("unknown_knob = 1\n").unwrap_err();
        assert!(err.to_string().contains("config"));
    }
}
