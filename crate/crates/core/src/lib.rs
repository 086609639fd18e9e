//! Random-graph relational memory for online continual learning.
//!
//! A learner keeps a small episodic memory and, for each incoming batch,
//! samples random graphs over memory items (and from memory to the batch)
//! whose edge probabilities come from a learned RBF kernel. Memory items'
//! latent representations are propagated along the sampled edges and
//! classified. A cross-entropy penalty ties the current edge probabilities
//! to those stored when each memory row last reached a new low context loss,
//! which limits forgetting of learned pairwise similarities.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod memory;
pub mod nets;
pub mod objective;
pub mod optim;
pub mod relgraph;
pub mod rng;
pub mod scalar;
pub mod tensors;
pub mod trainer;

pub use data::{Example, Family, Task, TaskStream};
pub use error::{Error, Result};
pub use eval::{ResultMatrix, RunSummary};
pub use experiment::ExperimentConfig;
pub use nets::{ArchConfig, Parameters};
pub use scalar::Scalar;
pub use trainer::{Method, TrainConfig};

pub type Tensor = tensors::Tensor<f64>;
pub type Tape = tensors::Tape<f64>;
pub type EncoderStack = nets::EncoderStack<f64>;
pub type ReplayClassifier = nets::ReplayClassifier<f64>;
pub type EpisodicMemory = memory::EpisodicMemory<f64>;
pub type EdgeMatrix = relgraph::EdgeMatrix<f64>;
pub type GclModel = trainer::GclModel<f64>;
pub type Learner = trainer::Learner<f64>;
