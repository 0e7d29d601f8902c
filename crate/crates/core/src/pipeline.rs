//! The end-to-end desk benchmark: generate data, pretrain the backbones,
//! pre-adapt, refine, and score every stage on the target stream.

use crate::adaptation::{
    evaluate_learner, evaluate_outputs, preadapt_run, refine_stream, BilevelConfig, PreAdaptConfig,
    PreAdaptResult, RefineResult, StreamErrors,
};
use crate::body::BodyTemplate;
use crate::data::{gen_synthetic_dataset, GenConfig, SequenceStream, Split};
use crate::nnet::{pretrain_backbones, ModelWeights, PretrainConfig, PretrainReport};
use crate::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub template_seed: u64,
    pub source: GenConfig,
    pub target: GenConfig,
    pub pretrain: PretrainConfig,
    pub preadapt: PreAdaptConfig,
    pub bilevel: BilevelConfig,
}

impl BenchmarkConfig {
    /// Default desk benchmark: 80x120 source frames, 40x120 target frames,
    /// 600 pre-adaptation epochs at sigma 35 evaluated every 150 epochs.
    pub fn desk(seed: u64) -> Self {
        Self {
            template_seed: 0,
            source: GenConfig::source(seed),
            target: GenConfig::target(seed.wrapping_add(1)),
            pretrain: PretrainConfig {
                seed,
                ..PretrainConfig::default()
            },
            preadapt: PreAdaptConfig {
                seed,
                eval_every: 150,
                ..PreAdaptConfig::default()
            },
            bilevel: BilevelConfig::default(),
        }
    }
}

/// Everything the benchmark produced.
#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub template: BodyTemplate,
    pub source: SequenceStream,
    pub target: SequenceStream,
    pub f0: ModelWeights,
    pub teacher: ModelWeights,
    pub pretrain: PretrainReport,
    /// Target errors of `f0`.
    pub initial: StreamErrors,
    /// Pre-adapted weights `fs` and the per-epoch log.
    pub preadapt: PreAdaptResult,
    /// Target errors of the plain forward pass of `fs`.
    pub preadapted: StreamErrors,
    pub refine: RefineResult,
    pub refined: StreamErrors,
}

impl BenchmarkResult {
    pub fn fs(&self) -> &ModelWeights {
        &self.preadapt.weights
    }

    /// Target MPJPE after each evaluated pre-adaptation epoch, starting at 0.
    pub fn checkpoints(&self) -> Vec<(usize, f64)> {
        self.preadapt.checkpoints()
    }
}

pub fn generate_streams(cfg: &BenchmarkConfig) -> Result<(BodyTemplate, SequenceStream, SequenceStream)> {
    let template = BodyTemplate::generate(cfg.template_seed);
    let source = gen_synthetic_dataset(&cfg.source, Split::Source, &template)?;
    let target = gen_synthetic_dataset(&cfg.target, Split::Target, &template)?;
    Ok((template, source, target))
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResult> {
    let (template, source, target) = generate_streams(cfg)?;
    let (f0, teacher, pretrain) = pretrain_backbones(&source, &cfg.pretrain, &template)?;
    let initial = evaluate_learner(&f0, &target, &template)?;
    let pre = preadapt_run(&f0, &teacher, &target, &cfg.preadapt, &template)?;
    let preadapted = evaluate_learner(&pre.weights, &target, &template)?;
    let refine = refine_stream(&pre.weights, &target, &teacher, &cfg.bilevel, &template)?;
    let outputs: Vec<_> = refine.frames.iter().map(|p| p.output.clone()).collect();
    let refined = evaluate_outputs(&outputs, &target, &template)?;
    Ok(BenchmarkResult {
        preadapt: pre,
        template,
        source,
        target,
        f0,
        teacher,
        pretrain,
        initial,
        preadapted,
        refine,
        refined,
    })
}
