//! Command-line surface: training, evaluation, the matching task, the
//! landscape pipeline, verification suites, and spike encoding utilities.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 runtime
//! divergence, 3 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spikegrad::analysis::{
    check_forward_equivalence, check_method_equivalence, finite_diff_suite, landscape_scan,
    pca_directions, LandscapeGrid, ScanMethod,
};
use spikegrad::config::FileConfig;
use spikegrad::data::{bin_events, latency_encode, load_idx_images, load_nmnist_sample};
use spikegrad::data::synth::{write_synth_mnist_dir, write_synth_nmnist_dir};
use spikegrad::error::Error;
use spikegrad::grad::MethodConfig;
use spikegrad::neuron::{kernel_eps, kernel_eps_star, NeuronConfig, Parameters};
use spikegrad::optim::{ClipMode, OptimizerKind};
use spikegrad::trainer::{
    evaluate, load_task_data, run_matching, train, train_matching_to_zero, write_metrics_jsonl,
    DecisionScheme, ExperimentConfig, LossChoice, MatchingOptions, Task,
};

#[derive(Parser)]
#[command(name = "spikegrad", version, about = "Spiking-network training engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network on the configured task and write a metrics log.
    Train(TrainArgs),
    /// Evaluate saved parameters on the configured task's test split.
    Eval(EvalArgs),
    /// Run seeded random spike-train matching trials.
    Matching(MatchingArgs),
    /// Train a matching instance to zero loss and scan the loss landscape.
    Landscape(LandscapeArgs),
    /// Run the verification suites (equivalences, gradient checks, kernels).
    Gradcheck(GradcheckArgs),
    /// Encode a dataset sample into input spikes and write it as CSV.
    Encode(EncodeArgs),
    /// Generate a synthetic stand-in dataset in the real file formats.
    SynthData(SynthArgs),
}

/// Hyperparameter flags; every flag overrides the config file, which
/// overrides task defaults.
#[derive(Args, Clone, Default)]
struct HyperFlags {
    /// Config file (nested TOML) applied before flag overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Layer sizes, input first (e.g. 784,100,10).
    #[arg(long, value_delimiter = ',')]
    layer_sizes: Option<Vec<usize>>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epoch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    deterministic: Option<bool>,
    #[arg(long)]
    single_spike_restriction: Option<bool>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long, value_enum)]
    decision_scheme: Option<SchemeArg>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_valid: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,

    #[arg(long)]
    alpha_v: Option<f64>,
    #[arg(long)]
    alpha_i: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Potential scale; defaults to the unit-gain derivation.
    #[arg(long)]
    beta_v: Option<f64>,
    /// Current scale; defaults to the unit-gain derivation.
    #[arg(long)]
    beta_i: Option<f64>,
    /// Bias scale; defaults to the unit-gain derivation.
    #[arg(long)]
    beta_bias: Option<f64>,

    #[arg(long)]
    lambda_act: Option<f64>,
    #[arg(long)]
    lambda_tim: Option<f64>,
    #[arg(long)]
    ste_alpha: Option<f64>,
    #[arg(long)]
    ste_beta: Option<f64>,
    #[arg(long)]
    use_reset_paths: Option<bool>,

    #[arg(long, value_enum)]
    optimizer: Option<OptArg>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long, value_enum)]
    grad_clip_mode: Option<ClipArg>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Initialize biases at half the threshold (accepts 0/1/true/false).
    #[arg(long, value_parser = parse_bool01)]
    init_bias_center: Option<bool>,

    #[arg(long)]
    beta_softmax: Option<f64>,
    #[arg(long)]
    kappa_exp: Option<f64>,
    #[arg(long)]
    max_target_spikes: Option<u32>,
    #[arg(long)]
    no_spike_eta: Option<f64>,
}

fn parse_bool01(s: &str) -> Result<bool, String> {
    match s {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        other => Err(format!("expected 0, 1, true, or false, got {other}")),
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Matching,
    Mnist,
    Nmnist,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Matching => Task::Matching,
            TaskArg::Mnist => Task::Mnist,
            TaskArg::Nmnist => Task::Nmnist,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Count,
    SpikeTrain,
    Latency,
    LatencyMinCount,
}

impl From<LossArg> for LossChoice {
    fn from(l: LossArg) -> LossChoice {
        match l {
            LossArg::Count => LossChoice::Count,
            LossArg::SpikeTrain => LossChoice::SpikeTrain,
            LossArg::Latency => LossChoice::Latency,
            LossArg::LatencyMinCount => LossChoice::LatencyMinCount,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    EarliestSpike,
    MostSpike,
}

impl From<SchemeArg> for DecisionScheme {
    fn from(s: SchemeArg) -> DecisionScheme {
        match s {
            SchemeArg::EarliestSpike => DecisionScheme::EarliestSpike,
            SchemeArg::MostSpike => DecisionScheme::MostSpike,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OptArg {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClipArg {
    Norm,
    Value,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    hyper: HyperFlags,
    /// Metrics log destination (line-delimited JSON).
    #[arg(long, default_value = "metrics.jsonl")]
    out_metrics: PathBuf,
    /// Save final parameters as JSON.
    #[arg(long)]
    save_params: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    hyper: HyperFlags,
    /// Parameters JSON produced by `train --save-params`.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
}

#[derive(Args)]
struct MatchingArgs {
    /// Gradient rule for the trials.
    #[arg(long, value_enum, default_value = "antlr")]
    method: MatchingMethod,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 5000)]
    iterations: usize,
    #[arg(long, default_value_t = 1)]
    target_spikes: usize,
    #[arg(long, default_value_t = 100)]
    record_every: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-trial loss curves destination (line-delimited JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchingMethod {
    Antlr,
    Activation,
    Timing,
    BpttReset,
    BpttNoreset,
}

#[derive(Args)]
struct LandscapeArgs {
    /// Output directory for the landscape matrices.
    #[arg(long)]
    out_dir: PathBuf,
    /// Grid half-width in units of the gradient-scale-normalized
    /// principal directions.
    #[arg(long, default_value_t = 1.0)]
    extent: f64,
    /// Grid points per axis (odd).
    #[arg(long, default_value_t = 41)]
    grid: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30000)]
    max_iterations: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct EncodeArgs {
    /// Source format: an IDX image file or an AER event file.
    #[arg(long, value_enum)]
    dataset: EncodeKind,
    #[arg(long)]
    input: PathBuf,
    /// Image index within an IDX file.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    horizon: Option<usize>,
    /// CSV destination (`t,neuron` pairs); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodeKind {
    Mnist,
    Nmnist,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 6000)]
    train: usize,
    #[arg(long, default_value_t = 1000)]
    test: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } | Error::NonFiniteGradient { .. } => 2,
        Error::Verification(_) | Error::RankDeficient(_) => 3,
        _ => 1,
    }
}

fn build_config(flags: &HyperFlags) -> Result<ExperimentConfig, Error> {
    let file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            Some(FileConfig::parse(&text)?)
        }
        None => None,
    };
    let task = flags
        .task
        .map(Task::from)
        .or(file.as_ref().and_then(|f| f.task))
        .unwrap_or(Task::Mnist);
    let mut cfg = ExperimentConfig::default_for_task(task);
    if let Some(file) = &file {
        file.apply(&mut cfg);
    }
    cfg.task = task;

    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = &flags.$field {
                cfg.$field = v.clone();
            }
        };
        ($field:ident, into) => {
            if let Some(v) = flags.$field {
                cfg.$field = v.into();
            }
        };
    }
    set!(layer_sizes);
    set!(horizon);
    set!(batch_size);
    set!(epoch);
    set!(seed);
    set!(deterministic);
    set!(single_spike_restriction);
    set!(loss, into);
    set!(decision_scheme, into);
    if flags.data_dir.is_some() {
        cfg.data_dir = flags.data_dir.clone();
    }
    set!(log_every);
    if flags.n_train.is_some() {
        cfg.n_train = flags.n_train;
    }
    if flags.n_valid.is_some() {
        cfg.n_valid = flags.n_valid;
    }
    if flags.n_test.is_some() {
        cfg.n_test = flags.n_test;
    }
    set!(alpha_v);
    set!(alpha_i);
    set!(theta);
    if flags.beta_v.is_some() {
        cfg.beta_v = flags.beta_v;
    }
    if flags.beta_i.is_some() {
        cfg.beta_i = flags.beta_i;
    }
    if flags.beta_bias.is_some() {
        cfg.beta_bias = flags.beta_bias;
    }
    set!(lambda_act);
    set!(lambda_tim);
    set!(ste_alpha);
    set!(ste_beta);
    set!(use_reset_paths);
    if let Some(o) = flags.optimizer {
        cfg.optimizer = match o {
            OptArg::Sgd => OptimizerKind::Sgd,
            OptArg::Adam => OptimizerKind::Adam,
        };
    }
    set!(learning_rate);
    set!(grad_clip);
    if let Some(c) = flags.grad_clip_mode {
        cfg.grad_clip_mode = match c {
            ClipArg::Norm => ClipMode::Norm,
            ClipArg::Value => ClipMode::Value,
        };
    }
    set!(weight_decay);
    set!(init_bias_center);
    set!(beta_softmax);
    set!(kappa_exp);
    set!(max_target_spikes);
    set!(no_spike_eta);

    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let cfg = build_config(&args.hyper)?;
    let data = load_task_data(&cfg)?;
    eprintln!(
        "training: task {:?}, {} train / {} valid / {} test samples",
        cfg.task,
        data.train.len(),
        data.valid.len(),
        data.test.len()
    );
    let outcome = train(&cfg, &data)?;
    std::fs::write(&args.out_metrics, write_metrics_jsonl(&outcome.records))?;
    if let Some(path) = &args.save_params {
        outcome.params.save_json(path)?;
    }
    if let Some(summary) = outcome.records.iter().rev().find(|r| r.kind == "summary") {
        println!("{}", serde_json::to_string(summary).expect("summary serializes"));
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let cfg = build_config(&args.hyper)?;
    let params = Parameters::load_json(&args.params)?;
    let data = load_task_data(&cfg)?;
    let scheme = args.scheme.map(DecisionScheme::from).unwrap_or(cfg.decision_scheme);
    let report = evaluate(&params, &cfg, &data.test, scheme)?;
    println!(
        "{}",
        serde_json::json!({
            "samples": report.samples,
            "accuracy": report.accuracy,
            "mean_loss": report.mean_loss,
            "mean_spikes_per_sample": report.mean_spikes_per_sample,
            "mean_silent_neurons": report.mean_silent_neurons,
            "ties": report.ties,
            "silent_samples": report.silent_samples,
        })
    );
    Ok(())
}

fn cmd_matching(args: &MatchingArgs) -> Result<(), Error> {
    let (method, force_bptt) = match args.method {
        MatchingMethod::Antlr => (MethodConfig { lambda_act: 1.0, lambda_tim: 1.0, ..MethodConfig::default() }, false),
        MatchingMethod::Activation => {
            (MethodConfig { lambda_act: 1.0, lambda_tim: 0.0, ..MethodConfig::default() }, false)
        }
        MatchingMethod::Timing => {
            (MethodConfig { lambda_act: 0.0, lambda_tim: 1.0, ..MethodConfig::default() }, false)
        }
        MatchingMethod::BpttReset => (
            MethodConfig {
                lambda_act: 1.0,
                lambda_tim: 0.0,
                use_reset_paths: true,
                ..MethodConfig::default()
            },
            true,
        ),
        MatchingMethod::BpttNoreset => {
            (MethodConfig { lambda_act: 1.0, lambda_tim: 0.0, ..MethodConfig::default() }, true)
        }
    };
    let opts = MatchingOptions {
        trials: args.trials,
        iterations: args.iterations,
        target_spikes_per_neuron: args.target_spikes,
        record_every: args.record_every,
        seed: args.seed,
        method,
        force_bptt,
        ..MatchingOptions::default()
    };
    let report = run_matching(&opts)?;
    println!(
        "mean initial loss {:.6}, mean final loss {:.6} over {} trials",
        report.mean_initial_loss(),
        report.mean_final_loss(),
        report.trials.len()
    );
    if let Some(path) = &args.out {
        let mut out = String::new();
        for trial in &report.trials {
            out.push_str(&serde_json::to_string(trial).expect("trial serializes"));
            out.push('\n');
        }
        std::fs::write(path, out)?;
    }
    Ok(())
}

fn write_matrix_csv(path: &PathBuf, data: &[f64], n: usize) -> Result<(), Error> {
    let mut out = String::new();
    for row in data.chunks(n) {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.17e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn export_landscape(dir: &PathBuf, grid: &LandscapeGrid) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("true_loss.csv"), &grid.true_loss, grid.n)?;
    let counts: Vec<f64> = grid.spike_counts.iter().map(|&c| c as f64).collect();
    write_matrix_csv(&dir.join("spike_count_mask.csv"), &counts, grid.n)?;
    for field in &grid.fields {
        write_matrix_csv(
            &dir.join(format!("recon_{}.csv", field.method.name())),
            &field.reconstructed,
            grid.n,
        )?;
        write_matrix_csv(&dir.join(format!("grad_{}_x.csv", field.method.name())), &field.gx, grid.n)?;
        write_matrix_csv(&dir.join(format!("grad_{}_y.csv", field.method.name())), &field.gy, grid.n)?;
    }
    Ok(())
}

fn cmd_landscape(args: &LandscapeArgs) -> Result<(), Error> {
    if args.grid < 3 || args.grid % 2 == 0 {
        return Err(Error::Config("grid size must be odd and >= 3".into()));
    }
    let trained = train_matching_to_zero(args.seed, args.max_iterations, 8, 512)?
        .ok_or_else(|| {
            Error::Verification("no seed reached zero loss within the iteration budget".into())
        })?;
    eprintln!(
        "trained to zero loss in {} iterations; {} gradient snapshots",
        trained.iterations_used,
        trained.grad_history.len()
    );
    let (dim0, dim1) = pca_directions(&trained.grad_history)?;
    let rms = (trained
        .grad_history
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        / trained.grad_history.len() as f64)
        .sqrt();
    // Grid units: the RMS parameter step taken during training.
    let extent_abs = args.extent * 1e-3 * rms;
    let methods = [ScanMethod::Activation, ScanMethod::Timing, ScanMethod::Combined];
    let grid = landscape_scan(
        &trained.params,
        &trained.instance,
        (&dim0, &dim1),
        extent_abs,
        args.grid,
        &methods,
    )?;
    export_landscape(&args.out_dir, &grid)?;
    let center = grid.center_index();
    let center_count = grid.spike_counts[center];
    let mask: Vec<usize> = (0..grid.n * grid.n)
        .filter(|&k| grid.spike_counts[k] == center_count)
        .collect();
    let act = grid.field(ScanMethod::Activation).expect("activation field scanned");
    let tim = grid.field(ScanMethod::Timing).expect("timing field scanned");
    let proj = |f: &spikegrad::analysis::MethodField, k: usize| f.gx[k].abs() + f.gy[k].abs();
    let act_zero =
        mask.iter().filter(|&&k| proj(act, k) <= 1e-12).count() as f64 / mask.len().max(1) as f64;
    let tim_nonzero =
        mask.iter().filter(|&&k| proj(tim, k) > 1e-12).count() as f64 / mask.len().max(1) as f64;
    let meta = serde_json::json!({
        "grid": grid.n,
        "extent_absolute": grid.extent,
        "extent_knob": args.extent,
        "gradient_rms": rms,
        "center_true_loss": grid.true_loss[center],
        "center_spike_count": center_count,
        "unchanged_count_fraction": mask.len() as f64 / (grid.n * grid.n) as f64,
        "activation_zero_fraction_on_mask": act_zero,
        "timing_nonzero_fraction_on_mask": tim_nonzero,
        "iterations_to_zero": trained.iterations_used,
    });
    std::fs::write(args.out_dir.join("meta.json"), meta.to_string())?;
    println!("{meta}");
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), Error> {
    let mut failures = Vec::new();

    // Kernel identities.
    let mut kernel_dev: f64 = 0.0;
    for &a in &[0.0, 0.95, 0.99, 1.0] {
        let cfg = NeuronConfig { alpha_v: a, alpha_i: a, ..NeuronConfig::default() };
        for tau in -2..=100i64 {
            let closed =
                if tau < 0 { 0.0 } else { (tau as f64 + 1.0) * a.powi(tau as i32) };
            let dev = (kernel_eps(tau, &cfg) - closed).abs() / closed.abs().max(1.0);
            kernel_dev = kernel_dev.max(dev);
            let star = kernel_eps_star(tau, &cfg);
            let direct = 0.5 * (kernel_eps(tau + 1, &cfg) - kernel_eps(tau - 1, &cfg));
            kernel_dev = kernel_dev.max((star - direct).abs() / direct.abs().max(1.0));
        }
    }
    let kernel_ok = kernel_dev < 1e-12;
    println!("kernel identities: max deviation {kernel_dev:.3e} ({})", pass(kernel_ok));
    if !kernel_ok {
        failures.push("kernel identities");
    }

    let fwd = check_forward_equivalence(args.trials, args.seed);
    let fwd_ok = fwd.spike_mismatches == 0 && fwd.max_potential_dev < 1e-9;
    println!(
        "forward equivalence: {} trials, {} spike mismatches, max potential deviation {:.3e} ({})",
        fwd.trials,
        fwd.spike_mismatches,
        fwd.max_potential_dev,
        pass(fwd_ok)
    );
    if !fwd_ok {
        failures.push("forward equivalence");
    }

    let meth = check_method_equivalence(args.trials, args.seed);
    let meth_ok = meth.max_bptt_dev < 1e-9
        && meth.max_linearity_dev < 1e-9
        && meth.timing_support_violations == 0;
    println!(
        "method equivalence: {} trials, BPTT deviation {:.3e}, linearity deviation {:.3e}, \
         {} support violations ({})",
        meth.trials,
        meth.max_bptt_dev,
        meth.max_linearity_dev,
        meth.timing_support_violations,
        pass(meth_ok)
    );
    if !meth_ok {
        failures.push("method equivalence");
    }

    for (kind, dev) in finite_diff_suite(50, args.seed, 1e-4) {
        let ok = dev < 1e-6;
        println!("loss gradient check {kind:?}: max deviation {dev:.3e} ({})", pass(ok));
        if !ok {
            failures.push("loss gradients");
        }
    }

    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Verification(format!("failed: {}", failures.join(", "))))
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_encode(args: &EncodeArgs) -> Result<(), Error> {
    let (spikes, n_in, horizon) = match args.dataset {
        EncodeKind::Mnist => {
            let horizon = args.horizon.unwrap_or(100);
            let images = load_idx_images(&args.input)?;
            if args.index >= images.count {
                return Err(Error::Config(format!(
                    "index {} out of range, file has {} images",
                    args.index, images.count
                )));
            }
            let spikes = latency_encode(images.image(args.index), horizon);
            (spikes, images.rows * images.cols, horizon)
        }
        EncodeKind::Nmnist => {
            let horizon = args.horizon.unwrap_or(300);
            let stream = load_nmnist_sample(&args.input)?;
            let spikes = bin_events(&stream, horizon);
            (spikes, spikegrad::data::aer::EVENT_INPUTS, horizon)
        }
    };
    let mut out = String::from("t,neuron\n");
    for t in 0..horizon {
        for i in 0..n_in {
            if spikes[t * n_in + i] == 1 {
                out.push_str(&format!("{t},{i}\n"));
            }
        }
    }
    match &args.out {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    match args.task {
        TaskArg::Mnist => write_synth_mnist_dir(&args.out_dir, args.seed, args.train, args.test),
        TaskArg::Nmnist => {
            let per_class_train = (args.train / 10).max(1);
            let per_class_test = (args.test / 10).max(1);
            write_synth_nmnist_dir(&args.out_dir.join("Train"), args.seed, per_class_train)?;
            write_synth_nmnist_dir(
                &args.out_dir.join("Test"),
                args.seed.wrapping_add(1),
                per_class_test,
            )
        }
        TaskArg::Matching => {
            Err(Error::Config("the matching task generates its own instances".into()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Matching(args) => cmd_matching(args),
        Command::Landscape(args) => cmd_landscape(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Encode(args) => cmd_encode(args),
        Command::SynthData(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
