mod config;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use ttrbody::adaptation::{
    evaluate_outputs, predict_learner, predict_teacher, preadapt_run, refine_stream, BilevelConfig,
    LossWeights, NoiseLevel, OuterOptimizer, PreAdaptConfig,
};
use ttrbody::body::BodyTemplate;
use ttrbody::data::{
    gen_synthetic_dataset, label_predictions, load_predictions, load_stream, match_predictions,
    save_predictions, save_stream, GenConfig, SequenceStream, Split,
};
use ttrbody::metrics::{build_report, report_grid_csv, round2, MetricsReport, ReportConfig};
use ttrbody::nnet::{pretrain_backbones, ModelWeights, PretrainConfig, Role};
use ttrbody::pipeline::{run_benchmark, BenchmarkConfig};

#[derive(Parser)]
#[command(name = "ttrbody", version, about = "Test-time refinement of a toy 3D human-body regressor")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source or target dataset.
    #[command(allow_negative_numbers = true)]
    GenData(GenDataArgs),
    /// Train the per-frame backbone and the temporal teacher on a source dataset.
    #[command(allow_negative_numbers = true)]
    Pretrain(PretrainArgs),
    /// Write the plain forward-pass predictions of a weight file.
    #[command(allow_negative_numbers = true)]
    Predict(PredictArgs),
    /// Pre-adapt a backbone to a target dataset with a frozen teacher.
    #[command(allow_negative_numbers = true)]
    Preadapt(PreadaptArgs),
    /// Refine a pre-adapted learner frame by frame over a target dataset.
    #[command(allow_negative_numbers = true)]
    Refine(RefineArgs),
    /// Score predictions against a dataset's ground truth.
    #[command(allow_negative_numbers = true)]
    Eval(EvalArgs),
    /// Tabulate several evaluation reports into one grid.
    #[command(allow_negative_numbers = true)]
    Report(ReportArgs),
    /// Run the full benchmark: generate, pretrain, pre-adapt, refine, evaluate.
    #[command(allow_negative_numbers = true)]
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Master seed.
    #[arg(long, env = "TTRBODY_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TemplateArg {
    /// Seed of the body template; must match the one the dataset was generated with.
    #[arg(long, default_value_t = 0)]
    template_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Source,
    Target,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    split: SplitArg,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    template: TemplateArg,
    #[arg(long)]
    out: PathBuf,
    /// Number of sequences (default: 80 source, 40 target).
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long, default_value_t = 120)]
    frames: usize,
    #[arg(long)]
    smoothness: Option<f64>,
    /// Std of the simulated 2D detector error, plane units.
    #[arg(long)]
    detector_noise: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    nuisance: Option<f64>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    source: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    template: TemplateArg,
    #[arg(long, default_value_t = PretrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = PretrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = PretrainConfig::default().lr)]
    lr: f64,
    /// Std of the noise added to the backbone's training features.
    #[arg(long, default_value_t = PretrainConfig::default().learner_input_noise)]
    learner_noise: f64,
    #[arg(long)]
    out_learner: PathBuf,
    #[arg(long)]
    out_teacher: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    template: TemplateArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long, default_value_t = LossWeights::default().lambda1)]
    lambda1: f64,
    #[arg(long, default_value_t = LossWeights::default().lambda2)]
    lambda2: f64,
    #[arg(long, default_value_t = LossWeights::default().lambda3)]
    lambda3: f64,
    #[arg(long, default_value_t = LossWeights::default().lambda4)]
    lambda4: f64,
}

impl LossArgs {
    fn weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            lambda4: self.lambda4,
        }
    }
}

#[derive(Args)]
struct PreadaptArgs {
    #[arg(long)]
    backbone: PathBuf,
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    template: TemplateArg,
    #[arg(long, default_value_t = 600)]
    epochs: usize,
    /// Corruption std on the 0-255 pixel scale, e.g. 35, 50 or 65.
    #[arg(long, default_value_t = 35.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long, default_value_t = 3)]
    sequences_per_epoch: usize,
    #[arg(long, default_value_t = 8)]
    frames_per_sequence: usize,
    /// Evaluate on the dataset every N epochs (0: first and last only).
    #[arg(long, default_value_t = 0)]
    eval_every: usize,
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    template: TemplateArg,
    #[arg(long, default_value_t = 1e-5)]
    lr_inner: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_outer: f64,
    #[arg(long, default_value_t = 1)]
    steps_per_frame: usize,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerArg,
    /// Keep adapting across sequence changes instead of resetting.
    #[arg(long)]
    no_regenerate: bool,
    #[command(flatten)]
    loss: LossArgs,
    /// Refined outputs, JSON Lines.
    #[arg(long)]
    out: PathBuf,
    /// Per-frame CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    template: TemplateArg,
    /// Initial MPJPE to report the gap against, millimeters.
    #[arg(long)]
    baseline: Option<f64>,
    /// Row label in grid tables.
    #[arg(long, default_value = "run")]
    label: String,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Weight file the predictions came from; its fingerprint is echoed in the report.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-frame table as CSV.
    #[arg(long)]
    per_frame_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    source_sequences: Option<usize>,
    #[arg(long)]
    target_sequences: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_inner: Option<f64>,
    #[arg(long)]
    lr_outer: Option<f64>,
}

enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<ttrbody::Error> for CliError {
    fn from(e: ttrbody::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Rejects a flag combination before any work starts.
fn usage<T>(r: ttrbody::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let args = match config::expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Predict(a) => predict(a),
        Command::Preadapt(a) => preadapt(a),
        Command::Refine(a) => refine(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn load_data(path: &Path, template: &BodyTemplate) -> CliResult<SequenceStream> {
    let s = load_stream(path).with_context(|| format!("cannot load dataset {}", path.display()))?;
    if s.template_hash != template.hash() {
        return Err(anyhow!(
            "dataset {} was generated with a different body template (check --template-seed)",
            path.display()
        )
        .into());
    }
    Ok(s)
}

fn load_weights(path: &Path, role: Option<Role>) -> CliResult<ModelWeights> {
    let w = ModelWeights::load(path).with_context(|| format!("cannot load weights {}", path.display()))?;
    if let Some(role) = role {
        w.expect_role(role).with_context(|| format!("wrong weight file {}", path.display()))?;
    }
    Ok(w)
}

fn gen_data(a: GenDataArgs) -> CliResult<()> {
    let split = match a.split {
        SplitArg::Source => Split::Source,
        SplitArg::Target => Split::Target,
    };
    let mut cfg = GenConfig::for_split(split, a.seed.seed);
    cfg.frames_per_sequence = a.frames;
    if let Some(n) = a.sequences {
        cfg.n_sequences = n;
    }
    if let Some(v) = a.smoothness {
        cfg.motion_smoothness = v;
    }
    if let Some(v) = a.detector_noise {
        cfg.detector_noise_std = v;
    }
    if let Some(v) = a.dropout {
        cfg.detector_dropout = v;
    }
    if let Some(v) = a.nuisance {
        cfg.feature_nuisance_std = v;
    }
    usage(cfg.validate())?;
    let template = BodyTemplate::generate(a.template.template_seed);
    let stream = gen_synthetic_dataset(&cfg, split, &template)?;
    save_stream(&stream, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    println!(
        "{split}: {} frames in {} sequences -> {}",
        stream.len(),
        stream.sequences().len(),
        a.out.display()
    );
    Ok(())
}

fn pretrain(a: PretrainArgs) -> CliResult<()> {
    let cfg = PretrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        learner_input_noise: a.learner_noise,
        seed: a.seed.seed,
        ..PretrainConfig::default()
    };
    usage(cfg.validate())?;
    let template = BodyTemplate::generate(a.template.template_seed);
    let source = load_data(&a.source, &template)?;
    let (f0, teacher, report) = pretrain_backbones(&source, &cfg, &template)?;
    f0.save(&a.out_learner)?;
    teacher.save(&a.out_teacher)?;
    println!(
        "source MPJPE: backbone {:.2} mm, teacher {:.2} mm",
        report.learner_source_mpjpe, report.teacher_source_mpjpe
    );
    Ok(())
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let template = BodyTemplate::generate(a.template.template_seed);
    let w = load_weights(&a.weights, None)?;
    let stream = load_data(&a.data, &template)?;
    let outputs = if w.role == Role::Teacher {
        predict_teacher(&w, &stream)?
    } else {
        predict_learner(&w, &stream)?
    };
    save_predictions(&label_predictions(&stream, outputs)?, &a.out)?;
    println!("{} predictions -> {}", stream.len(), a.out.display());
    Ok(())
}

fn preadapt(a: PreadaptArgs) -> CliResult<()> {
    let cfg = PreAdaptConfig {
        epochs: a.epochs,
        sequences_per_epoch: a.sequences_per_epoch,
        frames_per_sequence: a.frames_per_sequence,
        noise: usage(NoiseLevel::from_pixel(a.sigma))?,
        loss_weights: a.loss.weights(),
        lr: a.lr,
        seed: a.seed.seed,
        eval_every: a.eval_every,
    };
    usage(cfg.validate())?;
    let template = BodyTemplate::generate(a.template.template_seed);
    let f0 = load_weights(&a.backbone, Some(Role::F0))?;
    let teacher = load_weights(&a.teacher, Some(Role::Teacher))?;
    let target = load_data(&a.data, &template)?;
    let result = preadapt_run(&f0, &teacher, &target, &cfg, &template)?;
    result.weights.save(&a.out)?;
    if let Some(log) = &a.log {
        write(log, &result.log_csv()?)?;
    }
    for (epoch, m) in result.checkpoints() {
        println!("epoch {epoch}: MPJPE {m:.2} mm");
    }
    println!("pre-adapted weights -> {}", a.out.display());
    Ok(())
}

fn refine(a: RefineArgs) -> CliResult<()> {
    let cfg = BilevelConfig {
        lr_inner: a.lr_inner,
        lr_outer: a.lr_outer,
        steps_per_frame: a.steps_per_frame,
        loss_weights: a.loss.weights(),
        outer_optimizer: match a.optimizer {
            OptimizerArg::Sgd => OuterOptimizer::Sgd,
            OptimizerArg::Adam => OuterOptimizer::Adam,
        },
        regenerate: !a.no_regenerate,
    };
    usage(cfg.validate())?;
    let template = BodyTemplate::generate(a.template.template_seed);
    let fs = load_weights(&a.weights, None)?;
    fs.expect_learner()?;
    let teacher = load_weights(&a.teacher, Some(Role::Teacher))?;
    let stream = load_data(&a.data, &template)?;
    let result = refine_stream(&fs, &stream, &teacher, &cfg, &template)?;
    save_predictions(&result.frames, &a.out)?;
    if let Some(log) = &a.log {
        write(log, &result.log_csv()?)?;
    }
    println!(
        "{} frames refined, {} regenerations -> {}",
        result.frames.len(),
        result.regenerations(),
        a.out.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let template = BodyTemplate::generate(a.template.template_seed);
    let stream = load_data(&a.data, &template)?;
    let preds = load_predictions(&a.predictions)
        .with_context(|| format!("cannot load predictions {}", a.predictions.display()))?;
    let outputs = match_predictions(preds, &stream)?;
    let errors = evaluate_outputs(&outputs, &stream, &template)?;
    let weights_hash = match &a.weights {
        Some(p) => Some(load_weights(p, None)?.fingerprint()),
        None => None,
    };
    let config = ReportConfig {
        label: a.label,
        sigma: a.sigma,
        epochs: a.epochs,
        weights_hash,
    };
    let report = build_report(errors.per_frame, config, a.baseline)?;
    write(&a.out, &(report.to_json()? + "\n"))?;
    if let Some(p) = &a.per_frame_csv {
        write(p, &report.per_frame_csv()?)?;
    }
    let agg = &report.aggregate;
    print!(
        "MPJPE {:.2} mm, PA-MPJPE {:.2} mm",
        round2(agg.mean_mpjpe_mm),
        round2(agg.mean_pa_mpjpe_mm)
    );
    match agg.gap_vs_initial_mm {
        Some(g) => println!(", gap {g:.2} mm"),
        None => println!(),
    }
    Ok(())
}

fn report(a: ReportArgs) -> CliResult<()> {
    let mut reports = Vec::with_capacity(a.reports.len());
    for p in &a.reports {
        let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
        reports.push(MetricsReport::from_json(&text).with_context(|| format!("invalid report {}", p.display()))?);
    }
    write(&a.out, &report_grid_csv(&reports)?)?;
    println!("{} reports -> {}", reports.len(), a.out.display());
    Ok(())
}

fn pipeline(a: PipelineArgs) -> CliResult<()> {
    let mut cfg = BenchmarkConfig::desk(a.seed.seed);
    if let Some(n) = a.source_sequences {
        cfg.source.n_sequences = n;
    }
    if let Some(n) = a.target_sequences {
        cfg.target.n_sequences = n;
    }
    if let Some(n) = a.frames {
        cfg.source.frames_per_sequence = n;
        cfg.target.frames_per_sequence = n;
    }
    if let Some(n) = a.pretrain_epochs {
        cfg.pretrain.epochs = n;
    }
    if let Some(n) = a.epochs {
        cfg.preadapt.epochs = n;
    }
    if let Some(s) = a.sigma {
        cfg.preadapt.noise = usage(NoiseLevel::from_pixel(s))?;
    }
    if let Some(v) = a.lr {
        cfg.preadapt.lr = v;
    }
    if let Some(v) = a.lr_inner {
        cfg.bilevel.lr_inner = v;
    }
    if let Some(v) = a.lr_outer {
        cfg.bilevel.lr_outer = v;
    }
    usage(cfg.source.validate())?;
    usage(cfg.target.validate())?;
    usage(cfg.pretrain.validate())?;
    usage(cfg.preadapt.validate())?;
    usage(cfg.bilevel.validate())?;

    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let r = run_benchmark(&cfg)?;
    let checkpoints = r.checkpoints();
    let fs_hash = r.fs().fingerprint();
    save_stream(&r.source, dir.join("source.jsonl"))?;
    save_stream(&r.target, dir.join("target.jsonl"))?;
    r.f0.save(dir.join("f0.json"))?;
    r.teacher.save(dir.join("teacher.json"))?;
    r.fs().save(dir.join("fs.json"))?;
    write(&dir.join("preadapt_log.csv"), &r.preadapt.log_csv()?)?;
    save_predictions(&r.refine.frames, dir.join("refined.jsonl"))?;
    write(&dir.join("refine_log.csv"), &r.refine.log_csv()?)?;

    let sigma = cfg.preadapt.noise.sigma_pixel();
    let initial = r.initial.mpjpe;
    let stages = [
        ("initial", 0, r.initial, r.f0.fingerprint()),
        ("preadapted", cfg.preadapt.epochs, r.preadapted, fs_hash),
        ("refined", cfg.preadapt.epochs, r.refined, r.refine.final_weights.fingerprint()),
    ];
    let mut reports = Vec::new();
    for (label, epochs, errors, hash) in stages {
        let rc = ReportConfig {
            label: label.into(),
            sigma: Some(sigma),
            epochs: Some(epochs),
            weights_hash: Some(hash),
        };
        let rep = build_report(errors.per_frame, rc, Some(initial))?;
        write(&dir.join(format!("report_{label}.json")), &(rep.to_json()? + "\n"))?;
        println!(
            "{label:>10}: MPJPE {:.2} mm, PA-MPJPE {:.2} mm, gap {:.2} mm",
            round2(rep.aggregate.mean_mpjpe_mm),
            round2(rep.aggregate.mean_pa_mpjpe_mm),
            rep.aggregate.gap_vs_initial_mm.unwrap_or(0.0)
        );
        reports.push(rep);
    }
    write(&dir.join("grid.csv"), &report_grid_csv(&reports)?)?;
    for (epoch, m) in checkpoints {
        println!("pre-adaptation epoch {epoch}: MPJPE {m:.2} mm");
    }
    println!("outputs -> {}", dir.display());
    Ok(())
}
