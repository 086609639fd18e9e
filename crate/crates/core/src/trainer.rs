//! Online training loops: the graph model plus replay and finetune baselines.
//!
//! A graph-model step, for a batch of targets and a nonempty memory:
//!
//! 1. embed memory items and targets, build context-graph (`G`) and
//!    context-target (`A`) edge probabilities, draw one relaxed sample of
//!    each, propagate the memory's latent representations along them and
//!    classify;
//! 2. add the graph-regularization term over consolidated rows, take one
//!    optimizer step;
//! 3. recompute the context graph with the updated weights and consolidate
//!    rows whose context loss hit a new low;
//! 4. offer every batch example to the reservoir.
//!
//! Until the memory receives its first items the targets are classified from
//! an all-zero representation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Example, TaskStream};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, ResultMatrix};
use crate::memory::EpisodicMemory;
use crate::nets::{collect_grads, ArchConfig, EncoderStack, Parameters, ReplayClassifier};
use crate::objective::{graph_regularization, total_loss, LossWeights};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::relgraph::{
    context_graph, kernel_matrix, logistic_noise, predict_ensemble, propagate, remove_self_edges,
    sample_relaxed_with_noise, EdgeSampling, KernelParams,
};
use crate::rng::{stream, substream, Component, RunRng};
use crate::scalar::Scalar;
use crate::tensors::{Tape, Tensor, Var};

/// Lower bound applied to the learned kernel bandwidth after each step.
pub const MIN_TAU: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gcl,
    Er,
    Finetune,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gcl => "gcl",
            Method::Er => "er",
            Method::Finetune => "finetune",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gcl" => Ok(Method::Gcl),
            "er" => Ok(Method::Er),
            "finetune" => Ok(Method::Finetune),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

/// Which consolidated rows the graph term covers in a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegRows {
    /// Every row with a stored graph.
    #[default]
    Consolidated,
    /// Only stored rows whose loss this batch beats their record.
    NewLow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub epochs_per_task: usize,
    pub optimizer: OptimizerConfig,
    pub weights: LossWeights,
    pub kernel: KernelParams,
    pub test_samples: usize,
    pub edges: EdgeSampling,
    pub reg_rows: RegRows,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Gcl,
            batch_size: 10,
            memory_capacity: 50,
            epochs_per_task: 1,
            optimizer: OptimizerConfig::default(),
            weights: LossWeights::default(),
            kernel: KernelParams::default(),
            test_samples: 30,
            edges: EdgeSampling::Stochastic,
            reg_rows: RegRows::Consolidated,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs_per_task == 0 || self.test_samples == 0 {
            return Err(Error::Config(
                "batch_size, epochs_per_task and test_samples must be ≥ 1".into(),
            ));
        }
        if self.method != Method::Finetune && self.memory_capacity == 0 {
            return Err(Error::Config(format!(
                "{} needs a nonzero memory",
                self.method.name()
            )));
        }
        self.optimizer.validate()?;
        self.weights.validate()?;
        self.kernel.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub task: usize,
    pub loss_total: f64,
    pub loss_ctx: f64,
    pub loss_tgt: f64,
    pub loss_graph: f64,
    /// Rows covered by the graph term this step.
    pub reg_rows: usize,
    pub consolidated_rows: usize,
}

pub const STEP_LOG_HEADER: &str =
    "step,task,loss_total,loss_ctx,loss_tgt,loss_graph,consolidated_rows";

impl StepLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.8},{:.8},{:.8},{:.8},{}",
            self.step,
            self.task,
            self.loss_total,
            self.loss_ctx,
            self.loss_tgt,
            self.loss_graph,
            self.consolidated_rows
        )
    }
}

/// Encoder stack plus the learned kernel bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct GclModel<S> {
    pub stack: EncoderStack<S>,
    /// `1 × 1`.
    pub tau: Tensor<S>,
}

impl<S: Scalar> GclModel<S> {
    pub fn init<R: Rng>(arch: &ArchConfig, kernel: &KernelParams, rng: &mut R) -> Result<Self> {
        Ok(GclModel {
            stack: EncoderStack::init(arch, rng)?,
            tau: Tensor::scalar(S::of(kernel.tau)),
        })
    }

    pub fn tau(&self) -> S {
        self.tau.item()
    }
}

impl<S: Scalar> Parameters<S> for GclModel<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = self.stack.named_params();
        out.push(("kernel/tau".into(), &self.tau));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = self.stack.params_mut();
        out.push(&mut self.tau);
        out
    }
}

/// Logistic noise for one training step's relaxed graph samples.
#[derive(Debug, Clone)]
pub struct GclNoise<S> {
    pub context: Tensor<S>,
    pub target: Tensor<S>,
}

impl<S: Scalar> GclNoise<S> {
    pub fn draw<R: Rng>(contexts: usize, targets: usize, rng: &mut R) -> Self {
        GclNoise {
            context: logistic_noise(contexts, contexts, rng),
            target: logistic_noise(targets, contexts, rng),
        }
    }
}

/// Nodes of one graph-model forward pass.
#[derive(Debug, Clone)]
pub struct GclForward {
    pub total: Var,
    /// Per-slot context cross-entropy (`|C| × 1`); absent with empty memory.
    pub ctx_ce: Option<Var>,
    pub tgt_ce: Var,
    pub graph_reg: Option<Var>,
    pub reg_rows: Vec<usize>,
}

fn batch_tensors<S: Scalar>(batch: &[Example], dim: usize) -> Result<(Tensor<S>, Vec<usize>)> {
    let x = Tensor::from_features(batch.iter().map(|e| e.features.as_slice()), dim)?;
    Ok((x, batch.iter().map(|e| e.label).collect()))
}

/// Builds the full training objective on `tape`.
///
/// `params` are handles for [`GclModel`] parameters in [`Parameters`] order
/// (so `tau` is last). `noise` is required when edges are stochastic and the
/// memory is nonempty.
pub fn gcl_forward<S: Scalar>(
    tape: &mut Tape<S>,
    model: &GclModel<S>,
    params: &[Var],
    memory: &EpisodicMemory<S>,
    batch: &[Example],
    config: &TrainConfig,
    noise: Option<&GclNoise<S>>,
) -> Result<GclForward> {
    if batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    let (&tau, stack_vars) = params
        .split_last()
        .ok_or_else(|| Error::Config("missing model parameters".into()))?;
    let bound = model.stack.attach(stack_vars)?;
    let arch = &model.stack.config;
    let (x_t, y_t) = batch_tensors::<S>(batch, arch.input_dim)?;

    if memory.is_empty() {
        let z = tape.constant(Tensor::zeros(batch.len(), arch.d2()));
        let logits = bound.classify(tape, z)?;
        let tgt_ce = tape.softmax_cross_entropy(logits, &y_t)?;
        let total = total_loss(tape, None, tgt_ce, None, &config.weights)?;
        return Ok(GclForward {
            total,
            ctx_ce: None,
            tgt_ce,
            graph_reg: None,
            reg_rows: Vec::new(),
        });
    }

    let y_c = memory.labels();
    let xc = tape.constant(memory.feature_matrix()?);
    let yc = tape.constant(Tensor::one_hot(&y_c, arch.num_classes)?);
    let xt = tape.constant(x_t);
    let (u_c, v_c) = bound.encode_both(tape, xc, yc)?;
    let u_t = bound.encode_graph(tape, xt)?;

    let k_cc = kernel_matrix(tape, u_c, u_c, tau)?;
    let p_g = remove_self_edges(tape, k_cc)?;
    let p_a = kernel_matrix(tape, u_t, u_c, tau)?;

    let (g, a) = match config.edges {
        EdgeSampling::Deterministic => (p_g, p_a),
        EdgeSampling::Stochastic => {
            let noise = noise.ok_or_else(|| Error::Config("stochastic edges need noise".into()))?;
            let g = sample_relaxed_with_noise(
                tape,
                p_g,
                S::of(config.kernel.concrete_temp_g),
                noise.context.clone(),
            )?;
            let g = remove_self_edges(tape, g)?;
            let a = sample_relaxed_with_noise(
                tape,
                p_a,
                S::of(config.kernel.concrete_temp_a),
                noise.target.clone(),
            )?;
            (g, a)
        }
    };

    let z_c = propagate(tape, g, v_c)?;
    let logits_c = bound.classify(tape, z_c)?;
    let ctx_ce = tape.softmax_cross_entropy(logits_c, &y_c)?;
    let z_t = propagate(tape, a, v_c)?;
    let logits_t = bound.classify(tape, z_t)?;
    let tgt_ce = tape.softmax_cross_entropy(logits_t, &y_t)?;

    let reg_rows = match config.reg_rows {
        RegRows::Consolidated => memory.regularization_rows(),
        RegRows::NewLow => {
            let losses = tape.value(ctx_ce).data().to_vec();
            memory
                .new_low_rows(&losses)?
                .into_iter()
                .filter(|&i| memory.is_consolidated(i))
                .collect()
        }
    };
    let graph_reg = if reg_rows.is_empty() {
        None
    } else {
        graph_regularization(tape, p_g, memory, &reg_rows)?
    };
    let total = total_loss(tape, Some(ctx_ce), tgt_ce, graph_reg, &config.weights)?;
    Ok(GclForward {
        total,
        ctx_ce: Some(ctx_ce),
        tgt_ce,
        graph_reg,
        reg_rows,
    })
}

/// Random streams consumed during training.
#[derive(Debug, Clone)]
pub struct TrainRngs {
    /// Graph noise and replay draws.
    pub train: RunRng,
    /// Reservoir decisions.
    pub sampler: RunRng,
}

impl TrainRngs {
    pub fn new(seed: u64) -> Self {
        TrainRngs {
            train: stream(seed, Component::Train),
            sampler: stream(seed, Component::Sampler),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GclLearner<S> {
    pub model: GclModel<S>,
    pub memory: EpisodicMemory<S>,
    optimizer: Optimizer<S>,
}

impl<S: Scalar> GclLearner<S> {
    pub fn new(model: GclModel<S>, config: &TrainConfig) -> Self {
        GclLearner {
            model,
            memory: EpisodicMemory::new(config.memory_capacity),
            optimizer: Optimizer::new(config.optimizer),
        }
    }
}

fn mean_of<S: Scalar>(values: &[S]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().map(|v| v.as_f64()).sum::<f64>() / values.len() as f64
    }
}

fn check_finite(log: &StepLog) -> Result<()> {
    let all = [log.loss_total, log.loss_ctx, log.loss_tgt, log.loss_graph];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "training loss",
        });
    }
    Ok(())
}

pub fn train_step_gcl<S: Scalar>(
    learner: &mut GclLearner<S>,
    batch: &[Example],
    config: &TrainConfig,
    rngs: &mut TrainRngs,
    step: usize,
    task: usize,
) -> Result<StepLog> {
    let mut tape = Tape::new();
    let params: Vec<Var> = learner
        .model
        .named_params()
        .into_iter()
        .map(|(_, t)| tape.param(t.clone()))
        .collect();
    let noise = (config.edges == EdgeSampling::Stochastic && !learner.memory.is_empty())
        .then(|| GclNoise::draw(learner.memory.len(), batch.len(), &mut rngs.train));
    let fwd = gcl_forward(
        &mut tape,
        &learner.model,
        &params,
        &learner.memory,
        batch,
        config,
        noise.as_ref(),
    )?;
    let ctx_losses: Vec<S> = fwd
        .ctx_ce
        .map(|v| tape.value(v).data().to_vec())
        .unwrap_or_default();
    let mut log = StepLog {
        step,
        task,
        loss_total: tape.value(fwd.total).item().as_f64(),
        loss_ctx: mean_of(&ctx_losses),
        loss_tgt: mean_of(tape.value(fwd.tgt_ce).data()),
        loss_graph: fwd.graph_reg.map_or(0.0, |v| tape.value(v).item().as_f64()),
        reg_rows: fwd.reg_rows.len(),
        consolidated_rows: 0,
    };
    check_finite(&log)?;

    tape.backward(fwd.total)?;
    let grads = collect_grads(&tape, &params);
    learner.optimizer.step(learner.model.params_mut(), &grads)?;
    let tau = learner.model.tau.data_mut();
    tau[0] = tau[0].max(S::of(MIN_TAU));

    if !ctx_losses.is_empty() {
        let current = context_graph(&learner.memory, &learner.model.stack, learner.model.tau())?;
        log.consolidated_rows = learner.memory.consolidate(&ctx_losses, &current)?.len();
    }
    for e in batch {
        learner.memory.reservoir_update(e, &mut rngs.sampler);
    }
    Ok(log)
}

#[derive(Debug, Clone)]
pub struct ReplayLearner<S> {
    pub net: ReplayClassifier<S>,
    pub memory: EpisodicMemory<S>,
    optimizer: Optimizer<S>,
}

impl<S: Scalar> ReplayLearner<S> {
    pub fn new(net: ReplayClassifier<S>, config: &TrainConfig) -> Self {
        let capacity = match config.method {
            Method::Finetune => 0,
            _ => config.memory_capacity,
        };
        ReplayLearner {
            net,
            memory: EpisodicMemory::new(capacity),
            optimizer: Optimizer::new(config.optimizer),
        }
    }

    pub fn predict(&self, examples: &[Example]) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let bound = self.net.bind(&mut tape);
        let dim = examples.first().map_or(0, |e| e.features.len());
        let (x, _) = batch_tensors::<S>(examples, dim)?;
        let x = tape.constant(x);
        let logits = bound.logits(&mut tape, x)?;
        Ok(tape.value(logits).argmax_rows())
    }
}

/// Cross-entropy on `batch` plus up to `batch_size` memory items drawn
/// without replacement, one step, then reservoir insertion.
pub fn train_step_er<S: Scalar>(
    learner: &mut ReplayLearner<S>,
    batch: &[Example],
    config: &TrainConfig,
    rngs: &mut TrainRngs,
    step: usize,
    task: usize,
) -> Result<StepLog> {
    if batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    let replay: Vec<Example> = learner
        .memory
        .sample_slots(config.batch_size, &mut rngs.train)
        .into_iter()
        .map(|i| learner.memory.slots()[i].clone())
        .collect();
    let mut log = replay_step(learner, batch, &replay, step, task)?;
    log.reg_rows = 0;
    for e in batch {
        learner.memory.reservoir_update(e, &mut rngs.sampler);
    }
    Ok(log)
}

/// Cross-entropy on the incoming batch only.
pub fn train_step_finetune<S: Scalar>(
    learner: &mut ReplayLearner<S>,
    batch: &[Example],
    step: usize,
    task: usize,
) -> Result<StepLog> {
    if batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    replay_step(learner, batch, &[], step, task)
}

fn replay_step<S: Scalar>(
    learner: &mut ReplayLearner<S>,
    batch: &[Example],
    replay: &[Example],
    step: usize,
    task: usize,
) -> Result<StepLog> {
    let examples: Vec<Example> = batch.iter().chain(replay).cloned().collect();
    let dim = batch[0].features.len();
    let (x, y) = batch_tensors::<S>(&examples, dim)?;
    let mut tape = Tape::new();
    let bound = learner.net.bind(&mut tape);
    let x = tape.constant(x);
    let logits = bound.logits(&mut tape, x)?;
    let ce = tape.softmax_cross_entropy(logits, &y)?;
    let loss = tape.mean(ce)?;
    let per_row = tape.value(ce).data().to_vec();
    let log = StepLog {
        step,
        task,
        loss_total: tape.value(loss).item().as_f64(),
        loss_ctx: mean_of(&per_row[batch.len()..]),
        loss_tgt: mean_of(&per_row[..batch.len()]),
        loss_graph: 0.0,
        reg_rows: 0,
        consolidated_rows: 0,
    };
    check_finite(&log)?;
    tape.backward(loss)?;
    let grads = collect_grads(&tape, bound.vars());
    learner.optimizer.step(learner.net.params_mut(), &grads)?;
    Ok(log)
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Learner<S> {
    Gcl(GclLearner<S>),
    Replay(ReplayLearner<S>),
}

impl<S: Scalar> Learner<S> {
    pub fn init(arch: &ArchConfig, config: &TrainConfig) -> Result<Self> {
        let mut rng = stream(config.seed, Component::Init);
        Ok(match config.method {
            Method::Gcl => Learner::Gcl(GclLearner::new(
                GclModel::init(arch, &config.kernel, &mut rng)?,
                config,
            )),
            Method::Er | Method::Finetune => Learner::Replay(ReplayLearner::new(
                ReplayClassifier::init(arch, &mut rng)?,
                config,
            )),
        })
    }

    pub fn memory(&self) -> &EpisodicMemory<S> {
        match self {
            Learner::Gcl(l) => &l.memory,
            Learner::Replay(l) => &l.memory,
        }
    }

    pub fn step(
        &mut self,
        batch: &[Example],
        config: &TrainConfig,
        rngs: &mut TrainRngs,
        step: usize,
        task: usize,
    ) -> Result<StepLog> {
        match (self, config.method) {
            (Learner::Gcl(l), _) => train_step_gcl(l, batch, config, rngs, step, task),
            (Learner::Replay(l), Method::Finetune) => train_step_finetune(l, batch, step, task),
            (Learner::Replay(l), _) => train_step_er(l, batch, config, rngs, step, task),
        }
    }

    /// Argmax predictions against the frozen memory. An empty memory gives
    /// the graph model a uniform distribution, i.e. class 0.
    pub fn predict<R: Rng>(
        &self,
        examples: &[Example],
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        match self {
            Learner::Gcl(l) => {
                let dim = l.model.stack.config.input_dim;
                let (x, _) = batch_tensors::<S>(examples, dim)?;
                match predict_ensemble(
                    &x,
                    &l.memory,
                    &l.model.stack,
                    l.model.tau(),
                    config.test_samples,
                    config.edges,
                    rng,
                ) {
                    Ok(p) => Ok(p.argmax_rows()),
                    Err(Error::EmptyMemory) => Ok(vec![0; examples.len()]),
                    Err(e) => Err(e),
                }
            }
            Learner::Replay(l) => l.predict(examples),
        }
    }

    pub fn save_params(&self, path: &std::path::Path) -> Result<()> {
        match self {
            Learner::Gcl(l) => l.model.save(path),
            Learner::Replay(l) => l.net.save(path),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<S> {
    pub results: ResultMatrix,
    pub logs: Vec<StepLog>,
    pub learner: Learner<S>,
}

impl<S> RunOutput<S> {
    pub fn memory(&self) -> &EpisodicMemory<S>
    where
        S: Scalar,
    {
        self.learner.memory()
    }
}

/// Default architecture for a stream.
pub fn arch_for(stream: &TaskStream) -> ArchConfig {
    ArchConfig::new(stream.input_dim, stream.num_classes)
}

/// Trains on each task in order and fills row `i` of the result matrix
/// after task `i`.
pub fn run_stream<S: Scalar>(
    stream: &TaskStream,
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<RunOutput<S>> {
    config.validate()?;
    if stream.tasks.is_empty() {
        return Err(Error::Config("task stream has no tasks".into()));
    }
    if arch.input_dim != stream.input_dim || arch.num_classes != stream.num_classes {
        return Err(Error::Config(
            "architecture does not match the stream".into(),
        ));
    }
    let mut learner = Learner::<S>::init(arch, config)?;
    let mut rngs = TrainRngs::new(config.seed);
    let mut results = ResultMatrix::new(stream.tasks.len());
    let mut logs = Vec::new();
    let mut step = 0;
    for (t, task) in stream.tasks.iter().enumerate() {
        for _ in 0..config.epochs_per_task {
            for batch in task.batches(config.batch_size) {
                let log = learner
                    .step(batch, config, &mut rngs, step, t)
                    .map_err(|e| Error::Config(format!("step {step} (task {t}) failed: {e}")))?;
                logs.push(log);
                step += 1;
            }
        }
        let row = evaluate_model(
            |j, examples| {
                let mut rng = substream(
                    config.seed,
                    Component::Eval,
                    (t * stream.tasks.len() + j) as u32,
                );
                learner.predict(examples, config, &mut rng)
            },
            &stream.tasks,
        )?;
        results.set_row(t, &row)?;
    }
    Ok(RunOutput {
        results,
        logs,
        learner,
    })
}

/// Finite-difference check of the full graph-model objective, with graph
/// noise held fixed, on a small random model whose memory is full and
/// consolidated so every loss term is active. Returns the maximum relative
/// gradient error over all parameters including `tau`.
pub fn gcl_grad_check(seed: u64) -> Result<f64> {
    use crate::relgraph::{EdgeMatrix, EdgeMode};
    use crate::tensors::grad_check;

    let mut rng = stream(seed, Component::Data);
    let arch = ArchConfig {
        input_dim: 6,
        trunk_widths: vec![5],
        d1: 3,
        d_img: 3,
        d_lab: 2,
        num_classes: 3,
    };
    let config = TrainConfig {
        memory_capacity: 4,
        ..TrainConfig::default()
    };
    let mut example = |label: usize| Example {
        features: (0..arch.input_dim).map(|_| rng.random::<f32>()).collect(),
        label,
    };
    let stored: Vec<Example> = (0..4).map(|i| example(i % 3)).collect();
    let batch: Vec<Example> = (0..3).map(example).collect();

    let mut model =
        GclModel::<f64>::init(&arch, &config.kernel, &mut stream(seed, Component::Init))?;
    for b in model.params_mut() {
        if b.rows() == 1 && b.len() > 1 {
            for v in b.data_mut() {
                *v = rng.random_range(-0.2..0.2);
            }
        }
    }
    model.tau = Tensor::scalar(0.7);
    let mut memory = EpisodicMemory::new(4);
    for e in &stored {
        memory.reservoir_update(e, &mut rng);
    }
    let mut graph = Tensor::zeros(4, 4);
    for i in 0..4 {
        for k in 0..4 {
            if i != k {
                graph.set(i, k, rng.random_range(0.1..0.9));
            }
        }
    }
    let graph = EdgeMatrix::new(EdgeMode::Probabilities, graph)?;
    memory.consolidate(&[1.0; 4], &graph)?;
    let noise = GclNoise::draw(4, 3, &mut rng);

    let params: Vec<Tensor<f64>> = model
        .named_params()
        .into_iter()
        .map(|(_, t)| t.clone())
        .collect();
    grad_check(
        |tape, vars| {
            gcl_forward(tape, &model, vars, &memory, &batch, &config, Some(&noise)).map(|f| f.total)
        },
        &params,
        1e-6,
    )
}
