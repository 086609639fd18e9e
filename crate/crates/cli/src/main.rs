use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relmem::experiment::{run_experiment, summarize, ExperimentConfig};
use relmem::relgraph::{EdgeMatrix, EdgeMode};
use relmem::trainer::gcl_grad_check;
use relmem::{EpisodicMemory, Error, Method};

const GRAD_TOLERANCE: f64 = 1e-3;

#[derive(Parser)]
#[command(
    name = "relmem",
    version,
    about = "Random-graph relational memory for continual learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (method, seed) pair and write results into the output directory.
    Run(Overrides),
    /// Write the configured task stream to a dataset file.
    GenData {
        #[command(flatten)]
        overrides: Overrides,
        /// Dataset file to write (default: <out>/data_seed<seed>.bin).
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Print a memory snapshot's stored context graph as CSV.
    GraphDump {
        /// Snapshot written by `run` (memory_gcl_seed<N>.bin).
        snapshot: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the full training objective's gradients.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate results.csv files into summary.csv (mean and std per method).
    Summarize { dir: PathBuf },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Episodic memory capacity.
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long)]
    lambda_g: Option<f64>,
    #[arg(long)]
    test_samples: Option<usize>,
    /// Dataset file to train on instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &self.method {
            c.methods = vec![Method::parse(m)?];
        }
        if let Some(s) = self.seed {
            c.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if let Some(m) = self.memory {
            c.memory_capacity = m;
        }
        if let Some(l) = self.lambda_g {
            c.lambda_g = l;
        }
        if let Some(s) = self.test_samples {
            c.test_samples = s;
        }
        if let Some(d) = &self.data {
            c.data = Some(d.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn usage_error(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn runtime_error(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(overrides) => {
            let config = match overrides.resolve() {
                Ok(c) => c,
                Err(e) => return usage_error(e),
            };
            match run_experiment(&config) {
                Ok(rows) => {
                    for r in rows {
                        println!(
                            "{} seed {}: acc {:.4} fgt {:.4}",
                            r.method, r.seed, r.acc, r.fgt
                        );
                    }
                    println!("results in {}", config.out.join("results.csv").display());
                    ExitCode::SUCCESS
                }
                Err(e) => runtime_error(e),
            }
        }
        Command::GenData { overrides, file } => {
            let config = match overrides.resolve() {
                Ok(c) => c,
                Err(e) => return usage_error(e),
            };
            let seed = config.seeds[0];
            let path = file.unwrap_or_else(|| config.out.join(format!("data_seed{seed}.bin")));
            let result = config.stream(seed).and_then(|s| {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                        path: dir.to_path_buf(),
                        source: e,
                    })?;
                }
                s.save(&path)
            });
            match result {
                Ok(()) => {
                    println!("wrote {}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => runtime_error(e),
            }
        }
        Command::GraphDump { snapshot, out } => {
            let memory = match EpisodicMemory::load_snapshot(&snapshot) {
                Ok(m) => m,
                Err(e) => return usage_error(e),
            };
            let graph = match EdgeMatrix::new(EdgeMode::Probabilities, memory.stored_graph()) {
                Ok(g) => g,
                Err(e) => return runtime_error(e),
            };
            let mut buf = Vec::new();
            graph
                .write_csv(&mut buf, &memory.slot_labels())
                .expect("writing to memory");
            let written = match &out {
                Some(path) => std::fs::write(path, &buf).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                }),
                None => std::io::stdout().write_all(&buf).map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                }),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => runtime_error(e),
            }
        }
        Command::GradCheck { seed } => match gcl_grad_check(seed) {
            Ok(err) => {
                println!("max relative error {err:.3e}");
                if err > GRAD_TOLERANCE {
                    eprintln!("gradient check failed (tolerance {GRAD_TOLERANCE:e})");
                    ExitCode::from(1)
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => runtime_error(e),
        },
        Command::Summarize { dir } => match summarize(&dir) {
            Ok(rows) => {
                println!("{}", relmem::experiment::SUMMARY_HEADER);
                for r in rows {
                    println!("{}", r.csv_row());
                }
                ExitCode::SUCCESS
            }
            Err(e) => usage_error(e),
        },
    }
}
