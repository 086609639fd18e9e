//! Graph regularization and the combined training objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::EpisodicMemory;
use crate::relgraph::EDGE_EPS;
use crate::scalar::Scalar;
use crate::tensors::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_t: f64,
    pub lambda_g: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_c: 1.0,
            lambda_t: 1.0,
            lambda_g: 50.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda_c, self.lambda_t, self.lambda_g]
            .iter()
            .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return Err(Error::Config(
                "loss weights must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

fn clamp_prob<S: Scalar>(v: S) -> S {
    let eps = S::of(EDGE_EPS);
    v.max(eps).min(S::one() - eps)
}

/// Mean binary cross-entropy between stored edge probabilities `p_old`
/// (constants) and current ones `p_new`, over one row of edges.
pub fn edge_bce<S: Scalar>(tape: &mut Tape<S>, p_old: &[S], p_new: Var) -> Result<Var> {
    let shape = tape.shape(p_new);
    if shape != [1, p_old.len()] {
        return Err(Error::LengthMismatch {
            what: "edge_bce row",
            expected: shape[0] * shape[1],
            actual: p_old.len(),
        });
    }
    let eps = S::of(EDGE_EPS);
    let pred = tape.clamp(p_new, eps, S::one() - eps)?;
    let target = Tensor::row(p_old.iter().map(|&v| clamp_prob(v)).collect());
    let mask = Tensor::full(1, p_old.len(), S::one());
    tape.binary_cross_entropy(pred, &target, &mask)
}

/// Graph-regularization term over `rows` of the current context-graph
/// probabilities `p_g` (self-edges already removed).
///
/// Each row contributes the mean cross-entropy over its edges to other
/// consolidated slots; the result is the mean over rows. Returns `None` when
/// no row has such an edge.
pub fn graph_regularization<S: Scalar>(
    tape: &mut Tape<S>,
    p_g: Var,
    memory: &EpisodicMemory<S>,
    rows: &[usize],
) -> Result<Option<Var>> {
    let n = memory.len();
    let shape = tape.shape(p_g);
    if shape != [n, n] {
        return Err(Error::ShapeMismatch {
            op: "graph_regularization",
            lhs: shape,
            rhs: [n, n],
        });
    }
    let mut target = Tensor::zeros(rows.len(), n);
    let mut mask = Tensor::zeros(rows.len(), n);
    let mut any = false;
    for (r, &i) in rows.iter().enumerate() {
        let valid: Vec<usize> = (0..n)
            .filter(|&k| k != i && memory.is_consolidated(i) && memory.is_consolidated(k))
            .collect();
        if valid.is_empty() {
            continue;
        }
        any = true;
        let w = S::one() / S::of(valid.len() as f64);
        for k in valid {
            target.set(r, k, clamp_prob(memory.stored(i, k)));
            mask.set(r, k, w);
        }
    }
    if !any {
        return Ok(None);
    }
    let eps = S::of(EDGE_EPS);
    let selected = tape.gather_rows(p_g, rows)?;
    let pred = tape.clamp(selected, eps, S::one() - eps)?;
    tape.binary_cross_entropy(pred, &target, &mask).map(Some)
}

/// `λ_C · mean(ctx) + λ_T · mean(tgt) + λ_G · reg`; absent terms count as zero.
pub fn total_loss<S: Scalar>(
    tape: &mut Tape<S>,
    ctx_ce: Option<Var>,
    tgt_ce: Var,
    graph_reg: Option<Var>,
    weights: &LossWeights,
) -> Result<Var> {
    let tgt = tape.mean(tgt_ce)?;
    let mut total = tape.scale(tgt, S::of(weights.lambda_t))?;
    if let Some(ctx) = ctx_ce {
        let m = tape.mean(ctx)?;
        let term = tape.scale(m, S::of(weights.lambda_c))?;
        total = tape.add(total, term)?;
    }
    if let Some(reg) = graph_reg {
        let term = tape.scale(reg, S::of(weights.lambda_g))?;
        total = tape.add(total, term)?;
    }
    Ok(total)
}
