//! Experiment configuration, multi-run orchestration and result aggregation.
//!
//! A config is a flat JSON object; every field is optional:
//!
//! | field | default | meaning |
//! |---|---|---|
//! | `family` | `"split"` | `split`, `permuted` or `rotated` |
//! | `tasks` | 5 | number of tasks |
//! | `classes_per_task` | 2 | split family only |
//! | `max_degrees` | 180 | rotated family only |
//! | `num_classes`, `grid`, `radius`, `noise`, `train_per_class`, `test_per_class` | see [`BlobSpec`] | synthetic data |
//! | `data` | none | load this dataset file instead of generating one |
//! | `methods` | `["gcl", "er", "finetune"]` | |
//! | `seeds` | `[0]` | one run per (method, seed) |
//! | `batch_size`, `memory_capacity`, `epochs_per_task` | 10, 50, 1 | |
//! | `optimizer`, `lr` | `"adam"`, 0.001 | |
//! | `lambda_c`, `lambda_t`, `lambda_g` | 1, 1, 50 | loss weights |
//! | `tau`, `concrete_temp_g`, `concrete_temp_a` | 1, 1, 5 | kernel and relaxation |
//! | `test_samples` | 30 | graph samples averaged at test time |
//! | `edges` | `"stochastic"` | or `"deterministic"` |
//! | `reg_rows` | `"consolidated"` | or `"new_low"` |
//! | `trunk_widths`, `d1`, `d_img`, `d_lab` | `[64, 64]`, 32, 32, 16 | architecture |
//! | `out` | `"runs"` | output directory |
//!
//! Each run `(method, seed)` generates its data stream from `seed` and writes
//! into `out`:
//!
//! - `r_{method}_seed{seed}.csv`: the accuracy matrix, wide format;
//! - `steps_{method}_seed{seed}.csv`: per-step losses;
//! - `params_{method}_seed{seed}.bin`: final parameters;
//! - `memory_{method}_seed{seed}.bin`: final memory snapshot (memory methods);
//! - `graph_gcl_seed{seed}.csv`: final stored context graph (graph model).
//!
//! `results.csv` collects one summary row per run, ordered by method then seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gen_permuted, gen_rotated, gen_split_blobs, BlobSpec, Family, TaskStream};
use crate::error::{Error, Result};
use crate::eval::{RunSummary, RESULTS_HEADER};
use crate::nets::ArchConfig;
use crate::objective::LossWeights;
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::relgraph::{EdgeSampling, KernelParams};
use crate::trainer::{run_stream, Learner, Method, RegRows, TrainConfig, STEP_LOG_HEADER};

pub const THREADS_ENV: &str = "RELMEM_THREADS";
pub const SUMMARY_HEADER: &str = "method,runs,acc_mean,acc_std,fgt_mean,fgt_std";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub tasks: usize,
    pub classes_per_task: usize,
    pub max_degrees: f64,
    pub num_classes: usize,
    pub grid: usize,
    pub radius: f64,
    pub noise: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub data: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub epochs_per_task: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub lambda_c: f64,
    pub lambda_t: f64,
    pub lambda_g: f64,
    pub tau: f64,
    pub concrete_temp_g: f64,
    pub concrete_temp_a: f64,
    pub test_samples: usize,
    pub edges: EdgeSampling,
    pub reg_rows: RegRows,
    pub trunk_widths: Vec<usize>,
    pub d1: usize,
    pub d_img: usize,
    pub d_lab: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let blobs = BlobSpec::default();
        let train = TrainConfig::default();
        let arch = ArchConfig::new(blobs.input_dim(), blobs.num_classes);
        ExperimentConfig {
            family: Family::Split,
            tasks: 5,
            classes_per_task: 2,
            max_degrees: 180.0,
            num_classes: blobs.num_classes,
            grid: blobs.grid,
            radius: blobs.radius,
            noise: blobs.noise,
            train_per_class: blobs.train_per_class,
            test_per_class: blobs.test_per_class,
            data: None,
            methods: vec![Method::Gcl, Method::Er, Method::Finetune],
            seeds: vec![0],
            batch_size: train.batch_size,
            memory_capacity: train.memory_capacity,
            epochs_per_task: train.epochs_per_task,
            optimizer: train.optimizer.kind,
            lr: train.optimizer.lr,
            lambda_c: train.weights.lambda_c,
            lambda_t: train.weights.lambda_t,
            lambda_g: train.weights.lambda_g,
            tau: train.kernel.tau,
            concrete_temp_g: train.kernel.concrete_temp_g,
            concrete_temp_a: train.kernel.concrete_temp_a,
            test_samples: train.test_samples,
            edges: train.edges,
            reg_rows: train.reg_rows,
            trunk_widths: arch.trunk_widths,
            d1: arch.d1,
            d_img: arch.d_img,
            d_lab: arch.d_lab,
            out: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("seeds and methods must be nonempty".into()));
        }
        if self.data.is_none() {
            self.blob_spec().validate()?;
            if self.tasks == 0 {
                return Err(Error::Config("need at least one task".into()));
            }
            if self.family == Family::Split && self.tasks * self.classes_per_task > self.num_classes
            {
                return Err(Error::Config(format!(
                    "{} tasks × {} classes exceeds {} classes",
                    self.tasks, self.classes_per_task, self.num_classes
                )));
            }
        }
        for &method in &self.methods {
            self.train_config(method, 0).validate()?;
        }
        self.arch(self.grid * self.grid, self.num_classes)
            .validate()
    }

    pub fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            num_classes: self.num_classes,
            grid: self.grid,
            radius: self.radius,
            noise: self.noise,
            train_per_class: self.train_per_class,
            test_per_class: self.test_per_class,
        }
    }

    pub fn arch(&self, input_dim: usize, num_classes: usize) -> ArchConfig {
        ArchConfig {
            input_dim,
            trunk_widths: self.trunk_widths.clone(),
            d1: self.d1,
            d_img: self.d_img,
            d_lab: self.d_lab,
            num_classes,
        }
    }

    pub fn train_config(&self, method: Method, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            batch_size: self.batch_size,
            memory_capacity: self.memory_capacity,
            epochs_per_task: self.epochs_per_task,
            optimizer: OptimizerConfig {
                kind: self.optimizer,
                lr: self.lr,
                ..OptimizerConfig::default()
            },
            weights: LossWeights {
                lambda_c: self.lambda_c,
                lambda_t: self.lambda_t,
                lambda_g: self.lambda_g,
            },
            kernel: KernelParams {
                tau: self.tau,
                concrete_temp_g: self.concrete_temp_g,
                concrete_temp_a: self.concrete_temp_a,
            },
            test_samples: self.test_samples,
            edges: self.edges,
            reg_rows: self.reg_rows,
            seed,
        }
    }

    /// The task stream for `seed`: loaded from `data` if set, else generated.
    pub fn stream(&self, seed: u64) -> Result<TaskStream> {
        if let Some(path) = &self.data {
            return TaskStream::load(path);
        }
        let spec = self.blob_spec();
        match self.family {
            Family::Split => gen_split_blobs(&spec, self.tasks, self.classes_per_task, seed),
            Family::Permuted => gen_permuted(&spec, self.tasks, seed),
            Family::Rotated => gen_rotated(&spec, self.tasks, self.max_degrees, seed),
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_lines<I: IntoIterator<Item = String>>(header: &str, rows: I) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// Trains one `(method, seed)` run and writes its artifacts into `out`.
pub fn run_one(
    config: &ExperimentConfig,
    method: Method,
    seed: u64,
    out: &Path,
) -> Result<RunSummary> {
    let stream = config.stream(seed)?;
    let arch = config.arch(stream.input_dim, stream.num_classes);
    let train = config.train_config(method, seed);
    let run = run_stream::<f64>(&stream, &arch, &train)?;

    let tag = format!("{}_seed{seed}", method.name());
    write(
        &out.join(format!("r_{tag}.csv")),
        run.results.to_wide_csv(method.name(), seed),
    )?;
    write(
        &out.join(format!("steps_{tag}.csv")),
        csv_lines(STEP_LOG_HEADER, run.logs.iter().map(|l| l.csv_row())),
    )?;
    run.learner
        .save_params(&out.join(format!("params_{tag}.bin")))?;
    let memory = run.memory();
    if memory.capacity() > 0 {
        memory.save_snapshot(&out.join(format!("memory_{tag}.bin")))?;
    }
    if let Learner::Gcl(_) = &run.learner {
        let mut csv = Vec::new();
        let graph = crate::relgraph::EdgeMatrix::new(
            crate::relgraph::EdgeMode::Probabilities,
            memory.stored_graph(),
        )?;
        let path = out.join(format!("graph_{tag}.csv"));
        graph
            .write_csv(&mut csv, &memory.slot_labels())
            .map_err(|e| Error::io(&path, e))?;
        write(&path, csv)?;
    }
    RunSummary::from_matrix(method.name(), seed, &run.results)
}

fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .map_or(available, |n| n.min(available.max(1)))
}

/// Runs every `(method, seed)` pair on a worker pool and writes
/// `results.csv`. A failing run leaves `error_{method}_seed{seed}.txt`
/// behind and the first failure (in method/seed order) is returned.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    use rayon::prelude::*;

    config.validate()?;
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut jobs = Vec::new();
    for &m in &config.methods {
        for &s in &config.seeds {
            if !jobs.contains(&(m, s)) {
                jobs.push((m, s));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<RunSummary>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(m, s)| {
                run_one(config, m, s, out).map_err(|e| {
                    let diagnostic = out.join(format!("error_{}_seed{s}.txt", m.name()));
                    let detail = format!("{} seed {s}: {e}", m.name());
                    match fs::write(&diagnostic, format!("{detail}\n{e:?}\n")) {
                        Ok(()) => Error::Run { detail, diagnostic },
                        Err(_) => e,
                    }
                })
            })
            .collect()
    });
    let summaries = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    write(
        &out.join("results.csv"),
        csv_lines(RESULTS_HEADER, summaries.iter().map(RunSummary::csv_row)),
    )?;
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub fgt_mean: f64,
    pub fgt_std: f64,
}

impl MethodSummary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            self.method, self.runs, self.acc_mean, self.acc_std, self.fgt_mean, self.fgt_std
        )
    }
}

/// Mean and sample standard deviation (`n − 1`; zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-method mean and standard deviation of the run summaries.
pub fn aggregate(rows: &[RunSummary]) -> Vec<MethodSummary> {
    let mut by_method: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let e = by_method.entry(&r.method).or_default();
        e.0.push(r.acc);
        e.1.push(r.fgt);
    }
    by_method
        .into_iter()
        .map(|(method, (acc, fgt))| {
            let (acc_mean, acc_std) = mean_std(&acc);
            let (fgt_mean, fgt_std) = mean_std(&fgt);
            MethodSummary {
                method: method.to_string(),
                runs: acc.len(),
                acc_mean,
                acc_std,
                fgt_mean,
                fgt_std,
            }
        })
        .collect()
}

/// Reads every `results*.csv` in `dir`, writes `summary.csv` there and
/// returns its rows.
pub fn summarize(dir: &Path) -> Result<Vec<MethodSummary>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("results") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for path in &files {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            rows.push(RunSummary::parse_row(line)?);
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "no results found in {}",
            dir.display()
        )));
    }
    let summary = aggregate(&rows);
    write(
        &dir.join("summary.csv"),
        csv_lines(SUMMARY_HEADER, summary.iter().map(MethodSummary::csv_row)),
    )?;
    Ok(summary)
}
