//! Random relational graphs over the episodic memory.
//!
//! Edge probabilities come from an RBF kernel on graph embeddings,
//! `κ(u_i, u_j) = exp(−τ/2 · ‖u_i − u_j‖²)`. During training each edge is
//! drawn once from its Binary-Concrete relaxation so gradients reach the
//! encoder and `τ`; at test time hard Bernoulli graphs are drawn and the
//! resulting predictive distributions averaged.

use std::io::Write;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::EpisodicMemory;
use crate::nets::EncoderStack;
use crate::scalar::Scalar;
use crate::tensors::{Tape, Tensor, Var};

/// Probabilities are clamped to `[EDGE_EPS, 1 − EDGE_EPS]` before any logit
/// or cross-entropy is taken.
pub const EDGE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    Probabilities,
    SoftSample,
    HardSample,
}

/// Bernoulli means or a sampled adjacency; `G` is square, `A` is targets × context.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMatrix<S> {
    mode: EdgeMode,
    entries: Tensor<S>,
}

impl<S: Scalar> EdgeMatrix<S> {
    pub fn new(mode: EdgeMode, entries: Tensor<S>) -> Result<Self> {
        let ok = entries.data().iter().all(|&v| match mode {
            EdgeMode::HardSample => v == S::zero() || v == S::one(),
            _ => v >= S::zero() && v <= S::one(),
        });
        if !ok {
            return Err(Error::domain(
                "edge_matrix",
                format!("entries invalid for {mode:?}"),
            ));
        }
        Ok(EdgeMatrix { mode, entries })
    }

    pub fn mode(&self) -> EdgeMode {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.entries.get(r, c)
    }

    pub fn entries(&self) -> &Tensor<S> {
        &self.entries
    }

    pub fn into_entries(self) -> Tensor<S> {
        self.entries
    }

    pub fn is_symmetric(&self, tol: S) -> bool {
        self.rows() == self.cols()
            && (0..self.rows())
                .all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// CSV with one header row of slot labels, then one row per slot,
    /// entries printed with six decimals.
    pub fn write_csv<W: Write>(&self, out: &mut W, labels: &[String]) -> std::io::Result<()> {
        writeln!(out, "{}", labels.join(","))?;
        for r in 0..self.rows() {
            let row: Vec<String> = self
                .entries
                .row_slice(r)
                .iter()
                .map(|v| format!("{:.6}", v.as_f64()))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Initial RBF bandwidth; trained alongside the encoders.
    pub tau: f64,
    pub concrete_temp_g: f64,
    pub concrete_temp_a: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            tau: 1.0,
            concrete_temp_g: 1.0,
            concrete_temp_a: 5.0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.concrete_temp_g > 0.0 && self.concrete_temp_a > 0.0) {
            return Err(Error::Config(
                "tau and temperatures must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// How edges enter propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSampling {
    /// Relaxed samples in training, hard samples at test time.
    #[default]
    Stochastic,
    /// Edge probabilities used directly as weights.
    Deterministic,
}

/// `exp(−τ/2 · ‖a_i − b_j‖²)`; `tau` is a `1 × 1` node.
pub fn kernel_matrix<S: Scalar>(tape: &mut Tape<S>, u_a: Var, u_b: Var, tau: Var) -> Result<Var> {
    let t = tape.value(tau);
    if t.shape() != [1, 1] || t.item() <= S::zero() {
        return Err(Error::domain(
            "kernel_matrix",
            "tau must be a positive scalar",
        ));
    }
    let d = tape.pairwise_sqdist(u_a, u_b)?;
    let scaled = tape.scalar_mul(d, tau)?;
    let neg_half = tape.scale(scaled, S::of(-0.5))?;
    tape.exp(neg_half)
}

fn off_diagonal_mask<S: Scalar>(n: usize) -> Tensor<S> {
    let mut m = Tensor::full(n, n, S::one());
    for i in 0..n {
        m.set(i, i, S::zero());
    }
    m
}

/// Zeroes the diagonal of a square matrix.
pub fn remove_self_edges<S: Scalar>(tape: &mut Tape<S>, g: Var) -> Result<Var> {
    let [r, c] = tape.shape(g);
    if r != c {
        return Err(Error::ShapeMismatch {
            op: "remove_self_edges",
            lhs: [r, c],
            rhs: [c, r],
        });
    }
    let mask = tape.constant(off_diagonal_mask(r));
    tape.mul(g, mask)
}

/// Logistic noise `ln(u / (1 − u))`, `u ~ Uniform(0, 1)`.
pub fn logistic_noise<S: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor<S> {
    let data = (0..rows * cols)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            S::of((u / (1.0 - u)).ln())
        })
        .collect();
    Tensor::new(rows, cols, data).expect("sized")
}

/// Binary-Concrete sample `σ((logit p + noise) / temperature)` with the
/// noise supplied by the caller.
pub fn sample_relaxed_with_noise<S: Scalar>(
    tape: &mut Tape<S>,
    p: Var,
    temperature: S,
    noise: Tensor<S>,
) -> Result<Var> {
    if temperature <= S::zero() {
        return Err(Error::domain(
            "sample_relaxed",
            "temperature must be positive",
        ));
    }
    let eps = S::of(EDGE_EPS);
    let clamped = tape.clamp(p, eps, S::one() - eps)?;
    let log_p = tape.log(clamped)?;
    let q = tape.affine(clamped, -S::one(), S::one())?;
    let log_q = tape.log(q)?;
    let logit = tape.sub(log_p, log_q)?;
    let noise = tape.constant(noise);
    let noisy = tape.add(logit, noise)?;
    let scaled = tape.scale(noisy, S::one() / temperature)?;
    tape.sigmoid(scaled)
}

pub fn sample_relaxed<S: Scalar, R: Rng>(
    tape: &mut Tape<S>,
    p: Var,
    temperature: S,
    rng: &mut R,
) -> Result<Var> {
    let [r, c] = tape.shape(p);
    let noise = logistic_noise(r, c, rng);
    sample_relaxed_with_noise(tape, p, temperature, noise)
}

/// Independent Bernoulli draws, one per entry.
pub fn sample_hard<S: Scalar, R: Rng>(p: &Tensor<S>, rng: &mut R) -> Result<EdgeMatrix<S>> {
    let data = p
        .data()
        .iter()
        .map(|&v| {
            let u: f64 = rng.random();
            if u < v.as_f64() {
                S::one()
            } else {
                S::zero()
            }
        })
        .collect();
    EdgeMatrix::new(EdgeMode::HardSample, Tensor::new(p.rows(), p.cols(), data)?)
}

/// `Z[i] = Σ_k w_ik · V_C[k]` with `w` the row-normalized adjacency.
pub fn propagate<S: Scalar>(tape: &mut Tape<S>, adj: Var, v_c: Var) -> Result<Var> {
    let (sa, sv) = (tape.shape(adj), tape.shape(v_c));
    if sa[1] != sv[0] {
        return Err(Error::ShapeMismatch {
            op: "propagate",
            lhs: sa,
            rhs: sv,
        });
    }
    let w = tape.row_normalize_sum1(adj)?;
    tape.matrix_row_weighted_sum(w, v_c)
}

/// Row-wise softmax of plain logits.
pub fn softmax_rows<S: Scalar>(logits: &Tensor<S>) -> Tensor<S> {
    let mut out = logits.clone();
    let cols = logits.cols();
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Kernel probabilities of the memory against itself with self-edges
/// removed, evaluated without tracking gradients.
pub fn context_graph<S: Scalar>(
    memory: &EpisodicMemory<S>,
    stack: &EncoderStack<S>,
    tau: S,
) -> Result<EdgeMatrix<S>> {
    if memory.is_empty() {
        return EdgeMatrix::new(EdgeMode::Probabilities, Tensor::zeros(0, 0));
    }
    let mut tape = Tape::new();
    let bound = stack.bind(&mut tape);
    let x = tape.constant(memory.feature_matrix()?);
    let u = bound.encode_graph(&mut tape, x)?;
    let tau = tape.constant(Tensor::scalar(tau));
    let k = kernel_matrix(&mut tape, u, u, tau)?;
    let g = remove_self_edges(&mut tape, k)?;
    EdgeMatrix::new(EdgeMode::Probabilities, tape.value(g).clone())
}

/// Class probabilities for `x_t`, averaged over `samples` hard draws of the
/// context-target graph (or one pass on the probabilities when
/// `edges` is deterministic).
pub fn predict_ensemble<S: Scalar, R: Rng>(
    x_t: &Tensor<S>,
    memory: &EpisodicMemory<S>,
    stack: &EncoderStack<S>,
    tau: S,
    samples: usize,
    edges: EdgeSampling,
    rng: &mut R,
) -> Result<Tensor<S>> {
    if memory.is_empty() {
        return Err(Error::EmptyMemory);
    }
    if samples == 0 {
        return Err(Error::Config("need at least one test sample".into()));
    }
    let classes = stack.config.num_classes;
    let mut tape = Tape::new();
    let bound = stack.bind(&mut tape);
    let xc = tape.constant(memory.feature_matrix()?);
    let yc = tape.constant(Tensor::one_hot(&memory.labels(), classes)?);
    let (u_c, v_c) = bound.encode_both(&mut tape, xc, yc)?;
    let xt = tape.constant(x_t.clone());
    let u_t = bound.encode_graph(&mut tape, xt)?;
    let tau = tape.constant(Tensor::scalar(tau));
    let p_a = kernel_matrix(&mut tape, u_t, u_c, tau)?;
    let p_a_value = tape.value(p_a).clone();
    let checkpoint = tape.len();

    let draws = match edges {
        EdgeSampling::Stochastic => samples,
        EdgeSampling::Deterministic => 1,
    };
    let mut mean = Tensor::zeros(x_t.rows(), classes);
    for _ in 0..draws {
        let adj = match edges {
            EdgeSampling::Stochastic => {
                let hard = sample_hard(&p_a_value, rng)?;
                tape.constant(hard.into_entries())
            }
            EdgeSampling::Deterministic => p_a,
        };
        let z = propagate(&mut tape, adj, v_c)?;
        let logits = bound.classify(&mut tape, z)?;
        let probs = softmax_rows(tape.value(logits));
        for (m, &p) in mean.data_mut().iter_mut().zip(probs.data()) {
            *m += p;
        }
        tape.truncate(checkpoint);
    }
    let scale = S::one() / S::of(draws as f64);
    Ok(mean.map(|v| v * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Component};

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new(rows, cols, v.to_vec()).unwrap()
    }

    fn kernel(ua: Tensor<f64>, ub: Tensor<f64>, tau: f64) -> Tensor<f64> {
        let mut tape = Tape::new();
        let a = tape.constant(ua);
        let b = tape.constant(ub);
        let tau = tape.constant(Tensor::scalar(tau));
        let k = kernel_matrix(&mut tape, a, b, tau).unwrap();
        tape.value(k).clone()
    }

    #[test]
    fn kernel_values() {
        let u = t(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let k = kernel(u.clone(), u.clone(), 2.0);
        assert_eq!(k.get(0, 0), 1.0);
        assert!((k.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k.get(0, 1) - 0.367879).abs() < 1e-6);
        let k = kernel(u, t(1, 2, &[5.0, -3.0]), 1e-12);
        assert!(k.data().iter().all(|&v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn kernel_rejects_nonpositive_tau() {
        let mut tape = Tape::new();
        let a = tape.constant(t(1, 1, &[0.0]));
        let tau = tape.constant(Tensor::scalar(0.0));
        assert!(kernel_matrix(&mut tape, a, a, tau).is_err());
    }

    #[test]
    fn self_edge_removal() {
        let mut tape = Tape::new();
        let eye = tape.constant(t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let r = remove_self_edges(&mut tape, eye).unwrap();
        assert!(tape.value(r).data().iter().all(|&v| v == 0.0));

        let ones = tape.constant(Tensor::full(3, 3, 1.0));
        let once = remove_self_edges(&mut tape, ones).unwrap();
        let twice = remove_self_edges(&mut tape, once).unwrap();
        assert_eq!(tape.value(once), tape.value(twice));
        assert_eq!(
            tape.value(once).data(),
            &[0., 1., 1., 1., 0., 1., 1., 1., 0.]
        );

        let rect = tape.constant(Tensor::zeros(2, 3));
        assert!(remove_self_edges(&mut tape, rect).is_err());
    }

    #[test]
    fn relaxed_sample_saturates_at_low_temperature() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::scalar(1.0 - EDGE_EPS));
        let mut rng = stream(1, Component::Train);
        for _ in 0..100 {
            let s = sample_relaxed(&mut tape, p, 0.01, &mut rng).unwrap();
            assert!(tape.value(s).item() > 0.999);
        }
        assert!(sample_relaxed(&mut tape, p, 0.0, &mut rng).is_err());
    }

    #[test]
    fn relaxed_soft_mean_at_half_is_half() {
        let n = 100_000;
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::full(1, n, 0.5));
        let s = sample_relaxed(&mut tape, p, 1.0, &mut stream(2, Component::Train)).unwrap();
        let mean = tape.value(s).data().iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    /// Fraction of relaxed samples within `delta` of {0, 1}, from the
    /// logistic CDF of the pre-activation `logit(p) + noise`.
    fn concentrated_fraction(p: f64, temp: f64, delta: f64) -> f64 {
        let cdf = |x: f64| 1.0 / (1.0 + (-x).exp());
        let half = temp * ((1.0 - delta) / delta).ln();
        let logit = (p / (1.0 - p)).ln();
        1.0 - (cdf(half - logit) - cdf(-half - logit))
    }

    #[test]
    fn relaxed_sample_concentrates_as_temperature_falls() {
        let n = 10_000;
        let mut previous = 0.0;
        for (i, temp) in [1.0, 0.1, 0.01, 1e-4].into_iter().enumerate() {
            let mut tape = Tape::new();
            let p = tape.constant(Tensor::full(1, n, 0.4));
            let s = sample_relaxed(&mut tape, p, temp, &mut stream(3, Component::Train)).unwrap();
            let near = tape
                .value(s)
                .data()
                .iter()
                .filter(|&&v| !(1e-3..=1.0 - 1e-3).contains(&v))
                .count() as f64
                / n as f64;
            let expected = concentrated_fraction(0.4, temp, 1e-3);
            let sd = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!(
                (near - expected).abs() < 5.0 * sd + 1e-4,
                "temp {temp}: {near} vs {expected}"
            );
            assert!(i == 0 || near >= previous, "temp {temp}");
            previous = near;
        }
        assert!(previous > 0.999);
    }

    #[test]
    fn hard_samples() {
        let mut rng = stream(4, Component::Train);
        let p = t(1, 2, &[0.0, 1.0]);
        for _ in 0..50 {
            let h = sample_hard(&p, &mut rng).unwrap();
            assert_eq!(h.entries().data(), &[0.0, 1.0]);
        }
        let n = 100_000;
        let h = sample_hard(&Tensor::full(1, n, 0.25), &mut rng).unwrap();
        assert_eq!(h.mode(), EdgeMode::HardSample);
        assert!(h.entries().data().iter().all(|&v| v == 0.0 || v == 1.0));
        let mean = h.entries().data().iter().sum::<f64>() / n as f64;
        assert!((mean - 0.25).abs() < 0.005, "{mean}");
    }

    #[test]
    fn propagation_examples() {
        let v = t(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let adj = t(3, 4, &[0., 1., 0., 0., 1., 0., 1., 0., 0., 0., 0., 0.]);
        let mut tape = Tape::new();
        let a = tape.constant(adj);
        let vc = tape.constant(v);
        let z = propagate(&mut tape, a, vc).unwrap();
        let z = tape.value(z);
        assert_eq!(z.row_slice(0), &[3.0, 4.0]);
        assert_eq!(z.row_slice(1), &[3.0, 4.0]);
        // empty row → uniform average of all four context rows
        assert_eq!(z.row_slice(2), &[4.0, 5.0]);

        let bad = tape.constant(Tensor::zeros(1, 3));
        assert!(propagate(&mut tape, bad, vc).is_err());
    }

    #[test]
    fn edge_matrix_validation_and_csv() {
        assert!(EdgeMatrix::new(EdgeMode::HardSample, t(1, 1, &[0.5])).is_err());
        assert!(EdgeMatrix::new(EdgeMode::Probabilities, t(1, 1, &[1.5])).is_err());
        let g = EdgeMatrix::new(EdgeMode::Probabilities, t(2, 2, &[0.0, 0.25, 0.25, 0.0])).unwrap();
        assert!(g.is_symmetric(0.0));
        let mut buf = Vec::new();
        g.write_csv(&mut buf, &["a".into(), "b".into()]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "a,b\n0.000000,0.250000\n0.250000,0.000000\n"
        );
    }
}
