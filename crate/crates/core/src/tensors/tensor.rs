use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Vectors are `1 × n`, scalars `1 × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: [usize; 2],
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "tensor data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape: [rows, cols],
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, S::zero())
    }

    pub fn full(rows: usize, cols: usize, value: S) -> Self {
        Tensor {
            shape: [rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: S) -> Self {
        Tensor {
            shape: [1, 1],
            data: vec![value],
        }
    }

    pub fn row(data: Vec<S>) -> Self {
        Tensor {
            shape: [1, data.len()],
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::LengthMismatch {
                    what: "tensor row",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new(rows.len(), cols, data)
    }

    /// Builds a `rows × dim` matrix from `f32` feature vectors.
    pub fn from_features<'a, I>(features: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        let mut data = Vec::new();
        let mut rows = 0;
        for f in features {
            if f.len() != dim {
                return Err(Error::LengthMismatch {
                    what: "feature vector",
                    expected: dim,
                    actual: f.len(),
                });
            }
            data.extend(f.iter().map(|&x| S::of_f32(x)));
            rows += 1;
        }
        Tensor::new(rows, dim, data)
    }

    pub fn one_hot(labels: &[usize], classes: usize) -> Result<Self> {
        let mut t = Tensor::zeros(labels.len(), classes);
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::domain(
                    "one_hot",
                    format!("label {y} outside {classes} classes"),
                ));
            }
            t.data[i * classes + y] = S::one();
        }
        Ok(t)
    }

    #[inline]
    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        let cols = self.shape[1];
        self.data[r * cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[S] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    /// Value of a `1 × 1` tensor.
    pub fn item(&self) -> S {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Index of the largest entry in each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows())
            .map(|r| {
                let row = self.row_slice(r);
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| T::of(v.as_f64())).collect(),
        }
    }
}
