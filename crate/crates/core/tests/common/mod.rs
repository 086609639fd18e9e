#![allow(dead_code)]

use rand::Rng;
use relmem::rng::{stream, Component};
use relmem::tensors::{grad_check, Tape, Tensor, Var};
use relmem::Result;

pub const TRIALS: usize = 20;
pub const EPS: f64 = 1e-6;

/// Values in `[lo, hi]` with a random sign when `signed`, keeping clear of
/// the points listed in `avoid`.
pub fn sample(
    rng: &mut impl Rng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
    signed: bool,
    avoid: &[f64],
) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| loop {
            let mut v = rng.random_range(lo..hi);
            if signed && rng.random::<bool>() {
                v = -v;
            }
            if avoid.iter().all(|a| (v - a).abs() > 1e-3) {
                break v;
            }
        })
        .collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Reduces an arbitrary output to a scalar through a fixed random weighting
/// so every output entry reaches the gradient.
pub fn probe(tape: &mut Tape<f64>, out: Var, weights: &Tensor<f64>) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.mean(prod)
}

type Build = fn(&mut Tape<f64>, &[Var], &Tensor<f64>) -> Result<Var>;

struct Case {
    name: &'static str,
    inputs: fn(&mut rand_chacha::ChaCha8Rng) -> Vec<Tensor<f64>>,
    out_shape: fn(&[Tensor<f64>]) -> [usize; 2],
    build: Build,
    /// Trailing inputs held constant.
    fixed: usize,
}

fn dims(rng: &mut impl Rng) -> (usize, usize, usize) {
    (
        rng.random_range(1..5),
        rng.random_range(1..5),
        rng.random_range(1..5),
    )
}

fn any(rng: &mut impl Rng, r: usize, c: usize) -> Tensor<f64> {
    sample(rng, r, c, 0.05, 1.5, true, &[])
}

fn positive(rng: &mut impl Rng, r: usize, c: usize) -> Tensor<f64> {
    sample(rng, r, c, 0.1, 1.5, false, &[])
}

fn same(t: &[Tensor<f64>]) -> [usize; 2] {
    t[0].shape()
}

fn scalar_out(_: &[Tensor<f64>]) -> [usize; 2] {
    [1, 1]
}

fn labels_for(t: &Tensor<f64>) -> Vec<usize> {
    // derived from the inputs so the build function stays pure
    (0..t.rows()).map(|r| (r * 7 + 3) % t.cols()).collect()
}

fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "matmul",
            inputs: |rng| {
                let (a, b, c) = dims(rng);
                vec![any(rng, a, b), any(rng, b, c)]
            },
            out_shape: |t| [t[0].rows(), t[1].cols()],
            build: |tape, v, w| {
                let o = tape.matmul(v[0], v[1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "matrix_row_weighted_sum",
            inputs: |rng| {
                let (a, b, c) = dims(rng);
                vec![any(rng, a, b), any(rng, b, c)]
            },
            out_shape: |t| [t[0].rows(), t[1].cols()],
            build: |tape, v, w| {
                let o = tape.matrix_row_weighted_sum(v[0], v[1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "add_broadcast_row",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b), any(rng, 1, b)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.add_broadcast_row(v[0], v[1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "add",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b), any(rng, a, b)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.add(v[0], v[1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "sub",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b), any(rng, a, b)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.sub(v[0], v[1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "mul",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b), any(rng, a, b)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.mul(v[0], v[1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "scalar_mul",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b), positive(rng, 1, 1)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.scalar_mul(v[0], v[1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "affine",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.affine(v[0], -1.7, 0.3)?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "scale",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.scale(v[0], 2.5)?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "relu",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.relu(v[0])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "sigmoid",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![sample(rng, a, b, 0.0, 4.0, true, &[])]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.sigmoid(v[0])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "exp",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.exp(v[0])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "log",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![sample(rng, a, b, 0.2, 3.0, false, &[])]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.log(v[0])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "clamp",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![sample(rng, a, b, 0.0, 1.0, true, &[-0.5, 0.5])]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.clamp(v[0], -0.5, 0.5)?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "concat_cols",
            inputs: |rng| {
                let (a, b, c) = dims(rng);
                vec![any(rng, a, b), any(rng, a, c)]
            },
            out_shape: |t| [t[0].rows(), t[0].cols() + t[1].cols()],
            build: |tape, v, w| {
                let o = tape.concat_cols(v[0], v[1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "row_normalize_sum1",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![positive(rng, a, b)]
            },
            out_shape: same,
            build: |tape, v, w| {
                let o = tape.row_normalize_sum1(v[0])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "pairwise_sqdist",
            inputs: |rng| {
                let (a, b, c) = dims(rng);
                vec![any(rng, a, c), any(rng, b, c)]
            },
            out_shape: |t| [t[0].rows(), t[1].rows()],
            build: |tape, v, w| {
                let o = tape.pairwise_sqdist(v[0], v[1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "mean",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a, b)]
            },
            out_shape: scalar_out,
            build: |tape, v, w| {
                let o = tape.mean(v[0])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "softmax_cross_entropy",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![sample(rng, a, b + 1, 0.0, 3.0, true, &[])]
            },
            out_shape: |t| [t[0].rows(), 1],
            build: |tape, v, w| {
                let labels = labels_for(tape.value(v[0]));
                let o = tape.softmax_cross_entropy(v[0], &labels)?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
        Case {
            name: "binary_cross_entropy",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                let pred = sample(rng, a, b, 0.05, 0.95, false, &[]);
                let target = sample(rng, a, b, 0.0, 1.0, false, &[]);
                let mut mask = sample(rng, a, b, 0.0, 1.0, false, &[]);
                mask.data_mut()[0] = 1.0;
                for v in mask.data_mut().iter_mut().skip(1) {
                    if *v < 0.3 {
                        *v = 0.0;
                    }
                }
                vec![pred, target, mask]
            },
            out_shape: scalar_out,
            build: |tape, v, w| {
                let target = tape.value(v[1]).clone();
                let mask = tape.value(v[2]).clone();
                let o = tape.binary_cross_entropy(v[0], &target, &mask)?;
                probe(tape, o, w)
            },
            fixed: 2,
        },
        Case {
            name: "gather_rows",
            inputs: |rng| {
                let (a, b, _) = dims(rng);
                vec![any(rng, a + 1, b)]
            },
            out_shape: |t| [3, t[0].cols()],
            build: |tape, v, w| {
                let n = tape.shape(v[0])[0];
                let o = tape.gather_rows(v[0], &[n - 1, 0, n - 1])?;
                probe(tape, o, w)
            },
            fixed: 0,
        },
    ]
}

/// Maximum relative gradient error of each tensor op over [`TRIALS`] random
/// inputs.
pub fn op_gradient_errors() -> Vec<(&'static str, f64)> {
    let mut rng = stream(11, Component::Data);
    cases()
        .into_iter()
        .map(|case| {
            let mut worst: f64 = 0.0;
            for _ in 0..TRIALS {
                let inputs = (case.inputs)(&mut rng);
                let [r, c] = (case.out_shape)(&inputs);
                let weights = sample(&mut rng, r, c, 0.1, 1.0, true, &[]);
                let build = case.build;
                let (params, fixed) = inputs.split_at(inputs.len() - case.fixed);
                let err = grad_check(
                    |tape, vars| {
                        let mut all = vars.to_vec();
                        all.extend(fixed.iter().map(|t| tape.constant(t.clone())));
                        build(tape, &all, &weights)
                    },
                    params,
                    EPS,
                )
                .unwrap_or_else(|e| panic!("{}: {e}", case.name));
                worst = worst.max(err);
            }
            (case.name, worst)
        })
        .collect()
}
