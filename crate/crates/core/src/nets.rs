//! Encoders and classifier heads.
//!
//! [`EncoderStack`] holds the graph model's networks: one MLP trunk feeding
//! two linear heads (graph embedding for the kernel, latent image embedding
//! for propagation), a linear label encoder, and the `ReLU → linear`
//! classifier applied to context-aware representations.
//! [`ReplayClassifier`] is the plain trunk-plus-head network used by the
//! replay and finetune baselines.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensors::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input_dim: usize,
    pub trunk_widths: Vec<usize>,
    /// Graph embedding width (kernel input).
    pub d1: usize,
    pub d_img: usize,
    pub d_lab: usize,
    pub num_classes: usize,
}

impl ArchConfig {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        ArchConfig {
            input_dim,
            trunk_widths: vec![64, 64],
            d1: 32,
            d_img: 32,
            d_lab: 16,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.input_dim, self.d1, self.d_img, self.d_lab];
        if dims.contains(&0) || self.trunk_widths.contains(&0) {
            return Err(Error::Config(
                "architecture dimensions must be positive".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        Ok(())
    }

    /// Width of the latent representation `[image | label]`.
    pub fn d2(&self) -> usize {
        self.d_img + self.d_lab
    }

    pub fn trunk_dim(&self) -> usize {
        self.trunk_widths.last().copied().unwrap_or(self.input_dim)
    }

    /// Trainable scalars in an [`EncoderStack`] built from this config.
    pub fn param_count(&self) -> usize {
        let lin = |i: usize, o: usize| i * o + o;
        let mut n = 0;
        let mut fan_in = self.input_dim;
        for &w in &self.trunk_widths {
            n += lin(fan_in, w);
            fan_in = w;
        }
        n + lin(fan_in, self.d1)
            + lin(fan_in, self.d_img)
            + lin(self.num_classes, self.d_lab)
            + lin(self.d2(), self.num_classes)
    }
}

/// Affine map `x·W + b` with `W` stored `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Linear<S> {
    /// Uniform(−a, a) weights with `a = sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| S::of(rng.random_range(-a..a)))
            .collect();
        Linear {
            weight: Tensor::new(fan_in, fan_out, data).expect("sized"),
            bias: Tensor::zeros(1, fan_out),
        }
    }

    fn bind(&self, tape: &mut Tape<S>, vars: &mut Vec<Var>) -> BoundLinear {
        let w = tape.param(self.weight.clone());
        let b = tape.param(self.bias.clone());
        vars.extend([w, b]);
        BoundLinear { w, b }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    w: Var,
    b: Var,
}

impl BoundLinear {
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.w)?;
        tape.add_broadcast_row(xw, self.b)
    }
}

/// Anything with an ordered list of trainable tensors.
pub trait Parameters<S: Scalar> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<S>>;

    fn save(&self, path: &Path) -> Result<()> {
        let named = self.named_params();
        let records: Vec<(&str, &Tensor<S>)> =
            named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        checkpoint::save(path, &records)
    }

    /// Overwrites parameters from a checkpoint written by [`save`](Self::save).
    fn load(&mut self, path: &Path) -> Result<()> {
        let records = checkpoint::load(path)?;
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        if records.len() != names.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, model has {}",
                records.len(),
                names.len()
            )));
        }
        for ((name, dst), (rname, src)) in names.iter().zip(self.params_mut()).zip(&records) {
            if name != rname || src.shape() != dst.shape() {
                return Err(Error::Format(format!(
                    "checkpoint tensor {rname} {:?} does not match {name} {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.cast();
        }
        Ok(())
    }
}

fn init_trunk<S: Scalar, R: Rng>(
    input_dim: usize,
    widths: &[usize],
    rng: &mut R,
) -> Vec<Linear<S>> {
    let mut fan_in = input_dim;
    widths
        .iter()
        .map(|&w| {
            let l = Linear::init(fan_in, w, rng);
            fan_in = w;
            l
        })
        .collect()
}

fn trunk_forward<S: Scalar>(tape: &mut Tape<S>, layers: &[BoundLinear], x: Var) -> Result<Var> {
    let mut h = x;
    for layer in layers {
        let a = layer.forward(tape, h)?;
        h = tape.relu(a)?;
    }
    Ok(h)
}

fn push_linear<'a, S>(out: &mut Vec<(String, &'a Tensor<S>)>, name: &str, l: &'a Linear<S>) {
    out.push((format!("{name}/weight"), &l.weight));
    out.push((format!("{name}/bias"), &l.bias));
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStack<S> {
    pub config: ArchConfig,
    pub trunk: Vec<Linear<S>>,
    pub head_graph: Linear<S>,
    pub head_latent: Linear<S>,
    pub label_embed: Linear<S>,
    pub classifier: Linear<S>,
}

impl<S: Scalar> EncoderStack<S> {
    pub fn init<R: Rng>(config: &ArchConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let trunk = init_trunk(config.input_dim, &config.trunk_widths, rng);
        let t = config.trunk_dim();
        Ok(EncoderStack {
            head_graph: Linear::init(t, config.d1, rng),
            head_latent: Linear::init(t, config.d_img, rng),
            label_embed: Linear::init(config.num_classes, config.d_lab, rng),
            classifier: Linear::init(config.d2(), config.num_classes, rng),
            trunk,
            config: config.clone(),
        })
    }

    /// Registers every parameter on `tape` in [`Parameters`] order.
    pub fn bind(&self, tape: &mut Tape<S>) -> BoundEncoder {
        let mut vars = Vec::new();
        let trunk = self.trunk.iter().map(|l| l.bind(tape, &mut vars)).collect();
        let head_graph = self.head_graph.bind(tape, &mut vars);
        let head_latent = self.head_latent.bind(tape, &mut vars);
        let label_embed = self.label_embed.bind(tape, &mut vars);
        let classifier = self.classifier.bind(tape, &mut vars);
        BoundEncoder {
            trunk,
            head_graph,
            head_latent,
            label_embed,
            classifier,
            vars,
        }
    }
}

impl<S: Scalar> EncoderStack<S> {
    /// Wraps handles already on a tape, in [`Parameters`] order, as a
    /// [`BoundEncoder`]. Used when a caller owns parameter registration.
    pub fn attach(&self, vars: &[Var]) -> Result<BoundEncoder> {
        let expected = 2 * (self.trunk.len() + 4);
        if vars.len() != expected {
            return Err(Error::LengthMismatch {
                what: "encoder parameter handles",
                expected,
                actual: vars.len(),
            });
        }
        let lin = |k: usize| BoundLinear {
            w: vars[2 * k],
            b: vars[2 * k + 1],
        };
        let t = self.trunk.len();
        Ok(BoundEncoder {
            trunk: (0..t).map(lin).collect(),
            head_graph: lin(t),
            head_latent: lin(t + 1),
            label_embed: lin(t + 2),
            classifier: lin(t + 3),
            vars: vars.to_vec(),
        })
    }
}

impl<S: Scalar> Parameters<S> for EncoderStack<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter().enumerate() {
            push_linear(&mut out, &format!("trunk{i}"), l);
        }
        push_linear(&mut out, "head_graph", &self.head_graph);
        push_linear(&mut out, "head_latent", &self.head_latent);
        push_linear(&mut out, "label_embed", &self.label_embed);
        push_linear(&mut out, "classifier", &self.classifier);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for l in self.trunk.iter_mut().chain([
            &mut self.head_graph,
            &mut self.head_latent,
            &mut self.label_embed,
            &mut self.classifier,
        ]) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}

/// An [`EncoderStack`] whose parameters live on a tape.
#[derive(Debug, Clone)]
pub struct BoundEncoder {
    trunk: Vec<BoundLinear>,
    head_graph: BoundLinear,
    head_latent: BoundLinear,
    label_embed: BoundLinear,
    classifier: BoundLinear,
    vars: Vec<Var>,
}

impl BoundEncoder {
    /// Parameter handles, aligned with [`Parameters::params_mut`].
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn trunk<S: Scalar>(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        trunk_forward(tape, &self.trunk, x)
    }

    /// Graph embeddings `U`.
    pub fn encode_graph<S: Scalar>(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let h = self.trunk(tape, x)?;
        self.head_graph.forward(tape, h)
    }

    /// Latent representations `V = [head_latent(trunk(x)) | label_embed(y)]`.
    pub fn encode_latent<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        x: Var,
        y_onehot: Var,
    ) -> Result<Var> {
        let h = self.trunk(tape, x)?;
        self.latent_from_trunk(tape, h, y_onehot)
    }

    /// `(U, V)` for the same inputs with a single trunk pass.
    pub fn encode_both<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        x: Var,
        y_onehot: Var,
    ) -> Result<(Var, Var)> {
        let h = self.trunk(tape, x)?;
        let u = self.head_graph.forward(tape, h)?;
        let v = self.latent_from_trunk(tape, h, y_onehot)?;
        Ok((u, v))
    }

    fn latent_from_trunk<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        h: Var,
        y_onehot: Var,
    ) -> Result<Var> {
        let (hs, ys) = (tape.shape(h), tape.shape(y_onehot));
        if hs[0] != ys[0] {
            return Err(Error::ShapeMismatch {
                op: "encode_latent",
                lhs: hs,
                rhs: ys,
            });
        }
        let img = self.head_latent.forward(tape, h)?;
        let lab = self.label_embed.forward(tape, y_onehot)?;
        tape.concat_cols(img, lab)
    }

    /// Logits `linear(relu(z))`.
    pub fn classify<S: Scalar>(&self, tape: &mut Tape<S>, z: Var) -> Result<Var> {
        let a = tape.relu(z)?;
        self.classifier.forward(tape, a)
    }
}

/// Trunk plus one linear head over all classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayClassifier<S> {
    pub trunk: Vec<Linear<S>>,
    pub head: Linear<S>,
}

impl<S: Scalar> ReplayClassifier<S> {
    pub fn init<R: Rng>(config: &ArchConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let trunk = init_trunk(config.input_dim, &config.trunk_widths, rng);
        Ok(ReplayClassifier {
            head: Linear::init(config.trunk_dim(), config.num_classes, rng),
            trunk,
        })
    }

    pub fn bind(&self, tape: &mut Tape<S>) -> BoundClassifier {
        let mut vars = Vec::new();
        let trunk = self.trunk.iter().map(|l| l.bind(tape, &mut vars)).collect();
        let head = self.head.bind(tape, &mut vars);
        BoundClassifier { trunk, head, vars }
    }
}

impl<S: Scalar> Parameters<S> for ReplayClassifier<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter().enumerate() {
            push_linear(&mut out, &format!("trunk{i}"), l);
        }
        push_linear(&mut out, "head", &self.head);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for l in self.trunk.iter_mut().chain([&mut self.head]) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BoundClassifier {
    trunk: Vec<BoundLinear>,
    head: BoundLinear,
    vars: Vec<Var>,
}

impl BoundClassifier {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn logits<S: Scalar>(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let h = trunk_forward(tape, &self.trunk, x)?;
        self.head.forward(tape, h)
    }
}

/// Collects `∂loss/∂param` after [`Tape::backward`], zero where no gradient reached.
pub fn collect_grads<S: Scalar>(tape: &Tape<S>, vars: &[Var]) -> Vec<Tensor<S>> {
    vars.iter()
        .map(|&v| {
            tape.grad(v).cloned().unwrap_or_else(|| {
                let [r, c] = tape.shape(v);
                Tensor::zeros(r, c)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Component};
    use crate::tensors::grad_check;

    fn tiny() -> ArchConfig {
        ArchConfig {
            input_dim: 4,
            trunk_widths: vec![5],
            d1: 3,
            d_img: 2,
            d_lab: 1,
            num_classes: 3,
        }
    }

    fn stack(seed: u64) -> EncoderStack<f64> {
        EncoderStack::init(&tiny(), &mut stream(seed, Component::Init)).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        assert_eq!(stack(3), stack(3));
        assert_ne!(stack(3), stack(4));
        for (name, t) in stack(3).named_params() {
            if name.ends_with("bias") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn uniform_init_mean_is_near_zero() {
        // 100 × 100 weights: a = sqrt(6/200)
        let l: Linear<f64> = Linear::init(100, 100, &mut stream(11, Component::Init));
        let a = (6.0f64 / 200.0).sqrt();
        let mean = l.weight.data().iter().sum::<f64>() / 1e4;
        assert!(mean.abs() < 3.0 * a / 100.0, "mean {mean}");
        assert!(l.weight.data().iter().all(|v| v.abs() < a));
    }

    #[test]
    fn param_count_matches_storage() {
        let cfg = ArchConfig::new(64, 10);
        let s: EncoderStack<f64> =
            EncoderStack::init(&cfg, &mut stream(1, Component::Init)).unwrap();
        let n: usize = s.named_params().iter().map(|(_, t)| t.len()).sum();
        assert_eq!(n, cfg.param_count());
    }

    #[test]
    fn zero_weights_give_zero_embeddings_and_uniform_predictions() {
        let mut s = stack(1);
        for p in s.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let b = s.bind(&mut tape);
        let x = tape.constant(Tensor::full(2, 4, 0.7));
        let u = b.encode_graph(&mut tape, x).unwrap();
        assert!(tape.value(u).data().iter().all(|&v| v == 0.0));
        let z = tape.constant(Tensor::full(2, 3, 1.5));
        let logits = b.classify(&mut tape, z).unwrap();
        assert!(tape.value(logits).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn latent_layout_is_image_then_label() {
        let s = stack(2);
        let mut tape = Tape::new();
        let b = s.bind(&mut tape);
        let x = tape.constant(Tensor::from_rows(&vec![vec![0.1, 0.2, 0.3, 0.4]; 2]).unwrap());
        let y = tape.constant(Tensor::one_hot(&[0, 2], 3).unwrap());
        let v = b.encode_latent(&mut tape, x, y).unwrap();
        let v = tape.value(v);
        assert_eq!(v.shape(), [2, 3]);
        assert_eq!(&v.row_slice(0)[..2], &v.row_slice(1)[..2]);
        assert_ne!(v.get(0, 2), v.get(1, 2));
        assert_eq!(v.get(0, 2), s.label_embed.weight.get(0, 0));
    }

    #[test]
    fn shape_errors_surface() {
        let s = stack(2);
        let mut tape = Tape::new();
        let b = s.bind(&mut tape);
        let x = tape.constant(Tensor::zeros(2, 5));
        assert!(b.encode_graph(&mut tape, x).is_err());
        let x = tape.constant(Tensor::zeros(2, 4));
        let y = tape.constant(Tensor::zeros(3, 3));
        assert!(b.encode_latent(&mut tape, x, y).is_err());
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let s = stack(5);
        let x = Tensor::from_rows(&[vec![0.3, -0.2, 0.9, 0.1], vec![-0.5, 0.4, 0.2, 0.8]]).unwrap();
        let y = Tensor::one_hot(&[1, 2], 3).unwrap();
        let mut params: Vec<Tensor<f64>> = s
            .named_params()
            .into_iter()
            .map(|(_, t)| t.clone())
            .collect();
        // keep trunk units active away from the ReLU kink
        params[1] = Tensor::full(1, 5, 0.05);
        let err = grad_check(
            |tape, p| {
                let b = s.attach(p)?;
                let xv = tape.constant(x.clone());
                let yv = tape.constant(y.clone());
                let (u, v) = b.encode_both(tape, xv, yv)?;
                let uu = tape.mul(u, u)?;
                let lu = tape.mean(uu)?;
                let logits = b.classify(tape, v)?;
                let ce = tape.softmax_cross_entropy(logits, &[0, 1])?;
                let lc = tape.mean(ce)?;
                tape.add(lu, lc)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn trunk_gradient_collects_both_heads() {
        let s = stack(6);
        let x = Tensor::from_rows(&[vec![0.3, 0.2, 0.9, 0.1]]).unwrap();
        let run = |use_graph: bool, use_latent: bool| {
            let mut tape = Tape::new();
            let b = s.bind(&mut tape);
            let xv = tape.constant(x.clone());
            let yv = tape.constant(Tensor::one_hot(&[1], 3).unwrap());
            let (u, v) = b.encode_both(&mut tape, xv, yv).unwrap();
            let mu = tape.mean(u).unwrap();
            let mv = tape.mean(v).unwrap();
            let zero = tape.constant(Tensor::scalar(0.0));
            let lu = if use_graph {
                mu
            } else {
                tape.mul(mu, zero).unwrap()
            };
            let lv = if use_latent {
                mv
            } else {
                tape.mul(mv, zero).unwrap()
            };
            let loss = tape.add(lu, lv).unwrap();
            tape.backward(loss).unwrap();
            collect_grads(&tape, b.vars())[0].clone()
        };
        let both = run(true, true);
        let graph_only = run(true, false);
        let latent_only = run(false, true);
        assert_ne!(both, graph_only);
        for k in 0..both.len() {
            let sum = graph_only.data()[k] + latent_only.data()[k];
            assert!((both.data()[k] - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let s = stack(9);
        s.save(&path).unwrap();
        let mut t = stack(10);
        t.load(&path).unwrap();
        assert_eq!(s, t);
        let mut other: ReplayClassifier<f64> =
            ReplayClassifier::init(&tiny(), &mut stream(1, Component::Init)).unwrap();
        assert!(other.load(&path).is_err());
    }
}
