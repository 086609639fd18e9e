//! Fixed-capacity episodic memory.
//!
//! Slots are filled by reservoir sampling. Next to each slot the memory keeps
//! the edge probabilities learned for it (one row of the stored context
//! graph) and the lowest context loss seen since the slot was filled; a row
//! is refreshed only when that loss reaches a new low.

use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::checkpoint;
use crate::data::Example;
use crate::error::{Error, Result};
use crate::relgraph::EdgeMatrix;
use crate::scalar::Scalar;
use crate::tensors::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMemory<S> {
    capacity: usize,
    slots: Vec<Example>,
    /// `capacity × capacity`, row-major.
    stored_graph: Vec<S>,
    /// Per occupied slot; `+∞` until the slot first consolidates.
    best_loss: Vec<S>,
    n_seen: u64,
}

impl<S: Scalar> EpisodicMemory<S> {
    pub fn new(capacity: usize) -> Self {
        EpisodicMemory {
            capacity,
            slots: Vec::with_capacity(capacity),
            stored_graph: vec![S::zero(); capacity * capacity],
            best_loss: Vec::with_capacity(capacity),
            n_seen: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn slots(&self) -> &[Example] {
        &self.slots
    }

    pub fn labels(&self) -> Vec<usize> {
        self.slots.iter().map(|e| e.label).collect()
    }

    pub fn feature_matrix(&self) -> Result<Tensor<S>> {
        let dim = self.slots.first().map_or(0, |e| e.features.len());
        Tensor::from_features(self.slots.iter().map(|e| e.features.as_slice()), dim)
    }

    pub fn best_loss(&self, slot: usize) -> S {
        self.best_loss[slot]
    }

    pub fn is_consolidated(&self, slot: usize) -> bool {
        self.best_loss[slot].is_finite()
    }

    pub fn stored(&self, i: usize, k: usize) -> S {
        self.stored_graph[i * self.capacity + k]
    }

    /// Stored probabilities restricted to occupied slots.
    pub fn stored_graph(&self) -> Tensor<S> {
        let n = self.len();
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                t.set(i, k, self.stored(i, k));
            }
        }
        t
    }

    /// Offers one stream example (Algorithm R). Returns the slot it landed in.
    pub fn reservoir_update<R: Rng>(&mut self, example: &Example, rng: &mut R) -> Option<usize> {
        self.n_seen += 1;
        if self.capacity == 0 {
            return None;
        }
        if self.slots.len() < self.capacity {
            self.slots.push(example.clone());
            self.best_loss.push(S::infinity());
            return Some(self.slots.len() - 1);
        }
        let j = rng.random_range(0..self.n_seen);
        if j < self.capacity as u64 {
            let j = j as usize;
            self.slots[j] = example.clone();
            self.reset_slot(j);
            Some(j)
        } else {
            None
        }
    }

    fn reset_slot(&mut self, j: usize) {
        let c = self.capacity;
        self.best_loss[j] = S::infinity();
        for k in 0..c {
            self.stored_graph[j * c + k] = S::zero();
            self.stored_graph[k * c + j] = S::zero();
        }
    }

    /// Slots whose loss this batch is strictly below their recorded best.
    pub fn new_low_rows(&self, per_slot_losses: &[S]) -> Result<Vec<usize>> {
        self.check_aligned(per_slot_losses)?;
        Ok(per_slot_losses
            .iter()
            .enumerate()
            .filter(|&(i, &l)| l < self.best_loss[i])
            .map(|(i, _)| i)
            .collect())
    }

    /// Copies `current` rows (and mirrored columns) into the stored graph for
    /// every slot whose loss hit a new low.
    pub fn consolidate(
        &mut self,
        per_slot_losses: &[S],
        current: &EdgeMatrix<S>,
    ) -> Result<Vec<usize>> {
        let n = self.len();
        if current.rows() != n || current.cols() != n {
            return Err(Error::ShapeMismatch {
                op: "consolidate",
                lhs: [n, n],
                rhs: [current.rows(), current.cols()],
            });
        }
        let updated = self.new_low_rows(per_slot_losses)?;
        let c = self.capacity;
        for &i in &updated {
            self.best_loss[i] = per_slot_losses[i];
            for k in 0..n {
                let p = current.get(i, k);
                self.stored_graph[i * c + k] = p;
                self.stored_graph[k * c + i] = p;
            }
        }
        Ok(updated)
    }

    /// Rows that carry a stored graph and are regularized each batch.
    pub fn regularization_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.is_consolidated(i))
            .collect()
    }

    /// Up to `k` distinct occupied slots, uniformly without replacement.
    pub fn sample_slots<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        index::sample(rng, self.len(), k).into_vec()
    }

    fn check_aligned(&self, losses: &[S]) -> Result<()> {
        if losses.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "per-slot losses",
                expected: self.len(),
                actual: losses.len(),
            });
        }
        Ok(())
    }

    /// Writes `mem/features`, `mem/labels`, `mem/graph`, `mem/best_loss` and
    /// `mem/n_seen` in the checkpoint container.
    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        checkpoint::save(
            path,
            &self
                .snapshot_tensors()?
                .iter()
                .map(|(n, t)| (*n, t))
                .collect::<Vec<_>>(),
        )
    }

    pub fn snapshot_bytes(&self) -> Result<Vec<u8>> {
        Ok(checkpoint::encode(
            &self
                .snapshot_tensors()?
                .iter()
                .map(|(n, t)| (*n, t))
                .collect::<Vec<_>>(),
        ))
    }

    fn snapshot_tensors(&self) -> Result<Vec<(&'static str, Tensor<f64>)>> {
        let features: Tensor<f64> = self.feature_matrix()?.cast();
        let labels = Tensor::row(self.slots.iter().map(|e| e.label as f64).collect());
        let graph = Tensor::new(
            self.capacity,
            self.capacity,
            self.stored_graph.iter().map(|v| v.as_f64()).collect(),
        )?;
        let best = Tensor::row(self.best_loss.iter().map(|v| v.as_f64()).collect());
        Ok(vec![
            ("mem/features", features),
            ("mem/labels", labels),
            ("mem/graph", graph),
            ("mem/best_loss", best),
            ("mem/n_seen", Tensor::scalar(self.n_seen as f64)),
        ])
    }

    pub fn load_snapshot(path: &Path) -> Result<Self> {
        let records = checkpoint::load(path)?;
        let find = |name: &str| {
            records
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Format(format!("snapshot lacks {name}")))
        };
        let features = find("mem/features")?;
        let labels = find("mem/labels")?;
        let graph = find("mem/graph")?;
        let best = find("mem/best_loss")?;
        let n_seen = find("mem/n_seen")?.item() as u64;
        let n = labels.len();
        if features.rows() != n
            || best.len() != n
            || graph.rows() != graph.cols()
            || n > graph.rows()
        {
            return Err(Error::Format("inconsistent memory snapshot".into()));
        }
        let slots = (0..n)
            .map(|i| Example {
                features: features.row_slice(i).iter().map(|&v| v as f32).collect(),
                label: labels.data()[i] as usize,
            })
            .collect();
        Ok(EpisodicMemory {
            capacity: graph.rows(),
            slots,
            stored_graph: graph.data().iter().map(|&v| S::of(v)).collect(),
            best_loss: best.data().iter().map(|&v| S::of(v)).collect(),
            n_seen,
        })
    }

    /// Header labels for graph exports: `s{slot}_y{label}`.
    pub fn slot_labels(&self) -> Vec<String> {
        self.slots
            .iter()
            .enumerate()
            .map(|(i, e)| format!("s{i}_y{}", e.label))
            .collect()
    }
}

/// Bytes needed to hold a memory at 32-bit precision: images, labels and,
/// for the graph model, the `capacity²` stored edge probabilities.
pub fn memory_bytes(capacity: u64, feature_dim: u64, include_graph: bool) -> u64 {
    let images = capacity * feature_dim * 4;
    let labels = capacity * 4;
    let graph = if include_graph {
        capacity * capacity * 4
    } else {
        0
    };
    images + labels + graph
}
