//! First-order optimizers over flat parameter lists.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensors::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let betas_ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if !(self.lr > 0.0 && self.eps > 0.0 && betas_ok) {
            return Err(Error::Config(
                "optimizer needs lr > 0, eps > 0, betas in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer<S> {
    config: OptimizerConfig,
    steps: i32,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer {
            config,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<S>>, grads: &[Tensor<S>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch {
                what: "optimizer gradients",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        let lr = S::of(self.config.lr);
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = grads.iter().map(|g| vec![S::zero(); g.len()]).collect();
                    self.second = self.first.clone();
                }
                self.steps += 1;
                let (b1, b2) = (S::of(self.config.beta1), S::of(self.config.beta2));
                let eps = S::of(self.config.eps);
                let c1 = S::one() - b1.powi(self.steps);
                let c2 = S::one() - b2.powi(self.steps);
                for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.first[k], &mut self.second[k]);
                    for (i, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[i] = b1 * m[i] + (S::one() - b1) * d;
                        v[i] = b2 * v[i] + (S::one() - b2) * d * d;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
