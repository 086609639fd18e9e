//! Synthetic task streams.
//!
//! Every family starts from Gaussian class blobs: each class mean is drawn
//! uniformly on a sphere of radius `r` in `g²` dimensions, samples add
//! isotropic noise `σ`, and features are mapped to `[0, 1]` by
//! `clamp(0.5 + x / (6s))`, where `s = sqrt(σ² + r²/g²)` is the standard
//! deviation of a single coordinate.
//!
//! * `split`: task `t` holds classes `[t·k, (t+1)·k)`, fresh draws per task.
//! * `permuted`: one base dataset over all classes; task `t` permutes its
//!   feature indices with a fixed random permutation (task 0: identity).
//! * `rotated`: same base dataset, viewed as a `g × g` grid and rotated by a
//!   fixed random angle per task (task 0: no rotation) with nearest-neighbour
//!   resampling; pixels falling outside the frame read 0.
//!
//! # Container layout
//!
//! All integers little-endian.
//!
//! ```text
//! magic       8 bytes "RELDS001"
//! version     u32     1
//! family      u32     0 split, 1 permuted, 2 rotated
//! num_classes u64
//! input_dim   u64
//! task_count  u64
//! per task:
//!   class_count u64, classes u64 × class_count
//!   train_count u64, features f32 × train_count·input_dim, labels u32 × train_count
//!   test_count  u64, features f32 × test_count·input_dim,  labels u32 × test_count
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::ByteReader;
use crate::error::{Error, Result};
use crate::rng::{stream, Component, RunRng};

pub const MAGIC: &[u8; 8] = b"RELDS001";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f32>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Split,
    Permuted,
    Rotated,
}

impl Family {
    fn code(self) -> u32 {
        match self {
            Family::Split => 0,
            Family::Permuted => 1,
            Family::Rotated => 2,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Family::Split),
            1 => Ok(Family::Permuted),
            2 => Ok(Family::Rotated),
            _ => Err(Error::Format(format!("unknown family code {code}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub num_classes: usize,
    /// Grid side; features have `grid²` entries.
    pub grid: usize,
    pub radius: f64,
    pub noise: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            num_classes: 10,
            grid: 8,
            radius: 2.5,
            noise: 0.6,
            train_per_class: 2000,
            test_per_class: 50,
        }
    }
}

impl BlobSpec {
    pub fn input_dim(&self) -> usize {
        self.grid * self.grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.grid == 0 {
            return Err(Error::Config("need ≥ 2 classes and a nonempty grid".into()));
        }
        if !(self.noise > 0.0 && self.radius > 0.0) {
            return Err(Error::Config("radius and noise must be positive".into()));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Config(
                "per-class sample counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub classes: Vec<usize>,
    /// Training examples in arrival order.
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

impl Task {
    pub fn batches(&self, batch_size: usize) -> std::slice::Chunks<'_, Example> {
        self.train.chunks(batch_size.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub family: Family,
    pub num_classes: usize,
    pub input_dim: usize,
    pub tasks: Vec<Task>,
}

struct Blobs<'a> {
    spec: &'a BlobSpec,
    means: Vec<Vec<f64>>,
}

impl<'a> Blobs<'a> {
    fn new(spec: &'a BlobSpec, rng: &mut RunRng) -> Self {
        let dim = spec.input_dim();
        let means = (0..spec.num_classes)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| spec.radius * x / norm).collect()
            })
            .collect();
        Blobs { spec, means }
    }

    fn sample(&self, class: usize, rng: &mut RunRng) -> Example {
        let dim = self.spec.input_dim() as f64;
        let coord_sd = (self.spec.noise.powi(2) + self.spec.radius.powi(2) / dim).sqrt();
        let half_width = 6.0 * coord_sd;
        let features = self.means[class]
            .iter()
            .map(|&m| {
                let z: f64 = StandardNormal.sample(rng);
                let x = m + self.spec.noise * z;
                (0.5 + x / half_width).clamp(0.0, 1.0) as f32
            })
            .collect();
        Example {
            features,
            label: class,
        }
    }

    fn draw(
        &self,
        classes: &[usize],
        per_class: usize,
        rng: &mut RunRng,
        shuffle: bool,
    ) -> Vec<Example> {
        let mut out: Vec<Example> = classes
            .iter()
            .flat_map(|&c| (0..per_class).map(move |_| c))
            .map(|c| self.sample(c, rng))
            .collect();
        if shuffle {
            out.shuffle(rng);
        }
        out
    }
}

pub fn gen_split_blobs(
    spec: &BlobSpec,
    tasks: usize,
    classes_per_task: usize,
    seed: u64,
) -> Result<TaskStream> {
    spec.validate()?;
    if tasks == 0 || classes_per_task == 0 || tasks * classes_per_task > spec.num_classes {
        return Err(Error::Config(format!(
            "{tasks} tasks × {classes_per_task} classes exceeds {} classes",
            spec.num_classes
        )));
    }
    let mut rng = stream(seed, Component::Data);
    let blobs = Blobs::new(spec, &mut rng);
    let tasks = (0..tasks)
        .map(|t| {
            let classes: Vec<usize> = (t * classes_per_task..(t + 1) * classes_per_task).collect();
            let train = blobs.draw(&classes, spec.train_per_class, &mut rng, true);
            let test = blobs.draw(&classes, spec.test_per_class, &mut rng, false);
            Task {
                classes,
                train,
                test,
            }
        })
        .collect();
    Ok(TaskStream {
        family: Family::Split,
        num_classes: spec.num_classes,
        input_dim: spec.input_dim(),
        tasks,
    })
}

fn transformed_stream(
    spec: &BlobSpec,
    tasks: usize,
    seed: u64,
    family: Family,
    mut transform: impl FnMut(usize, &mut RunRng) -> Box<dyn Fn(&[f32]) -> Vec<f32>>,
) -> Result<TaskStream> {
    spec.validate()?;
    if tasks == 0 {
        return Err(Error::Config("need at least one task".into()));
    }
    let mut rng = stream(seed, Component::Data);
    let blobs = Blobs::new(spec, &mut rng);
    let classes: Vec<usize> = (0..spec.num_classes).collect();
    let base_train = blobs.draw(&classes, spec.train_per_class, &mut rng, true);
    let base_test = blobs.draw(&classes, spec.test_per_class, &mut rng, false);
    let apply = |f: &dyn Fn(&[f32]) -> Vec<f32>, set: &[Example]| -> Vec<Example> {
        set.iter()
            .map(|e| Example {
                features: f(&e.features),
                label: e.label,
            })
            .collect()
    };
    let tasks = (0..tasks)
        .map(|t| {
            let f = transform(t, &mut rng);
            Task {
                classes: classes.clone(),
                train: apply(f.as_ref(), &base_train),
                test: apply(f.as_ref(), &base_test),
            }
        })
        .collect();
    Ok(TaskStream {
        family,
        num_classes: spec.num_classes,
        input_dim: spec.input_dim(),
        tasks,
    })
}

/// Index permutation `π_t` for every task; `π_0` is the identity.
pub fn task_permutations(dim: usize, tasks: usize, rng: &mut RunRng) -> Vec<Vec<usize>> {
    (0..tasks)
        .map(|t| {
            let mut p: Vec<usize> = (0..dim).collect();
            if t > 0 {
                p.shuffle(rng);
            }
            p
        })
        .collect()
}

pub fn gen_permuted(spec: &BlobSpec, tasks: usize, seed: u64) -> Result<TaskStream> {
    let dim = spec.input_dim();
    transformed_stream(spec, tasks, seed, Family::Permuted, |t, rng| {
        let perm: Vec<usize> = if t == 0 {
            (0..dim).collect()
        } else {
            let mut p: Vec<usize> = (0..dim).collect();
            p.shuffle(rng);
            p
        };
        Box::new(move |x: &[f32]| perm.iter().map(|&i| x[i]).collect())
    })
}

pub fn gen_rotated(
    spec: &BlobSpec,
    tasks: usize,
    max_degrees: f64,
    seed: u64,
) -> Result<TaskStream> {
    let g = spec.grid;
    transformed_stream(spec, tasks, seed, Family::Rotated, |t, rng| {
        let degrees = if t == 0 {
            0.0
        } else {
            rng.random_range(0.0..=max_degrees.max(0.0))
        };
        Box::new(move |x: &[f32]| rotate_grid(x, g, degrees).expect("grid matches spec"))
    })
}

/// Nearest-neighbour rotation of a `g × g` grid about its centre.
pub fn rotate_grid(x: &[f32], g: usize, degrees: f64) -> Result<Vec<f32>> {
    if x.len() != g * g {
        return Err(Error::LengthMismatch {
            what: "square feature grid",
            expected: g * g,
            actual: x.len(),
        });
    }
    if degrees == 0.0 {
        return Ok(x.to_vec());
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let center = (g as f64 - 1.0) / 2.0;
    let mut out = vec![0.0f32; g * g];
    for r in 0..g {
        for c in 0..g {
            let (dy, dx) = (r as f64 - center, c as f64 - center);
            let sx = (cos * dx + sin * dy + center).round();
            let sy = (-sin * dx + cos * dy + center).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < g && (sy as usize) < g {
                out[r * g + c] = x[sy as usize * g + sx as usize];
            }
        }
    }
    Ok(out)
}

impl TaskStream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.family.code().to_le_bytes());
        for n in [self.num_classes, self.input_dim, self.tasks.len()] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        let put_set = |out: &mut Vec<u8>, set: &[Example]| {
            out.extend_from_slice(&(set.len() as u64).to_le_bytes());
            for e in set {
                for v in &e.features {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            for e in set {
                out.extend_from_slice(&(e.label as u32).to_le_bytes());
            }
        };
        for task in &self.tasks {
            out.extend_from_slice(&(task.classes.len() as u64).to_le_bytes());
            for &c in &task.classes {
                out.extend_from_slice(&(c as u64).to_le_bytes());
            }
            put_set(&mut out, &task.train);
            put_set(&mut out, &task.test);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad dataset magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {version}"
            )));
        }
        let family = Family::from_code(r.u32()?)?;
        let num_classes = r.u64()? as usize;
        let input_dim = r.u64()? as usize;
        let task_count = r.u64()? as usize;

        let get_set = |r: &mut ByteReader| -> Result<Vec<Example>> {
            let n = r.u64()? as usize;
            let floats = n
                .checked_mul(input_dim)
                .filter(|f| f.checked_mul(4).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::Format("truncated feature block".into()))?;
            let flat = (0..floats).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            let mut set = Vec::with_capacity(n);
            for i in 0..n {
                let label = r.u32()? as usize;
                if label >= num_classes {
                    return Err(Error::Format(format!(
                        "label {label} ≥ {num_classes} classes"
                    )));
                }
                set.push(Example {
                    features: flat[i * input_dim..(i + 1) * input_dim].to_vec(),
                    label,
                });
            }
            Ok(set)
        };

        let mut tasks = Vec::new();
        for _ in 0..task_count {
            let nc = r.u64()? as usize;
            if nc > r.remaining() / 8 {
                return Err(Error::Format("truncated class list".into()));
            }
            let classes = (0..nc)
                .map(|_| r.u64().map(|c| c as usize))
                .collect::<Result<Vec<_>>>()?;
            let train = get_set(&mut r)?;
            let test = get_set(&mut r)?;
            tasks.push(Task {
                classes,
                train,
                test,
            });
        }
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after dataset".into()));
        }
        Ok(TaskStream {
            family,
            num_classes,
            input_dim,
            tasks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
