//! Accuracy matrix and the average-accuracy / forgetting metrics.

use std::fmt::Write as _;

use crate::data::{Example, Task};
use crate::error::{Error, Result};

/// `R[i][j]`: test accuracy on task `j` after training through task `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultMatrix {
    tasks: usize,
    entries: Vec<f64>,
}

impl ResultMatrix {
    pub fn new(tasks: usize) -> Self {
        ResultMatrix {
            tasks,
            entries: vec![0.0; tasks * tasks],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut r = ResultMatrix::new(rows.len());
        for (i, row) in rows.iter().enumerate() {
            r.set_row(i, row)?;
        }
        Ok(r)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.tasks + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.tasks..(i + 1) * self.tasks]
    }

    pub fn set_row(&mut self, i: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.tasks {
            return Err(Error::LengthMismatch {
                what: "result row",
                expected: self.tasks,
                actual: row.len(),
            });
        }
        if let Some(bad) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(
                "result_matrix",
                format!("accuracy {bad} outside [0, 1]"),
            ));
        }
        self.entries[i * self.tasks..(i + 1) * self.tasks].copy_from_slice(row);
        Ok(())
    }

    /// Mean of the final row.
    pub fn accuracy(&self) -> Result<f64> {
        if self.tasks == 0 {
            return Err(Error::domain("accuracy", "empty result matrix"));
        }
        Ok(self.row(self.tasks - 1).iter().sum::<f64>() / self.tasks as f64)
    }

    /// Mean over tasks `0..T−1` of `R[i][i] − R[T−1][i]`; positive means
    /// forgetting. Defined as 0 for fewer than two tasks.
    pub fn forgetting(&self) -> f64 {
        let t = self.tasks;
        if t < 2 {
            return 0.0;
        }
        let last = t - 1;
        (0..last)
            .map(|i| self.get(i, i) - self.get(last, i))
            .sum::<f64>()
            / last as f64
    }

    /// One header row `R_i_j` and one data row, prefixed by method and seed.
    pub fn to_wide_csv(&self, method: &str, seed: u64) -> String {
        let mut header = String::from("method,seed");
        let mut values = format!("{method},{seed}");
        for i in 0..self.tasks {
            for j in 0..self.tasks {
                let _ = write!(header, ",R_{i}_{j}");
                let _ = write!(values, ",{:.6}", self.get(i, j));
            }
        }
        format!("{header}\n{values}\n")
    }
}

/// Fraction of argmax-correct predictions on each task's test split.
pub fn evaluate_model<F>(mut predict: F, tasks: &[Task]) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[Example]) -> Result<Vec<usize>>,
{
    tasks
        .iter()
        .enumerate()
        .map(|(j, task)| {
            if task.test.is_empty() {
                return Ok(0.0);
            }
            let pred = predict(j, &task.test)?;
            if pred.len() != task.test.len() {
                return Err(Error::LengthMismatch {
                    what: "predictions",
                    expected: task.test.len(),
                    actual: pred.len(),
                });
            }
            let correct = pred
                .iter()
                .zip(&task.test)
                .filter(|(p, e)| **p == e.label)
                .count();
            Ok(correct as f64 / task.test.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    pub task_count: usize,
    pub acc: f64,
    pub fgt: f64,
}

pub const RESULTS_HEADER: &str = "method,seed,task_count,acc,fgt";

impl RunSummary {
    pub fn from_matrix(method: &str, seed: u64, r: &ResultMatrix) -> Result<Self> {
        Ok(RunSummary {
            method: method.to_string(),
            seed,
            task_count: r.tasks(),
            acc: r.accuracy()?,
            fgt: r.forgetting(),
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6}",
            self.method, self.seed, self.task_count, self.acc, self.fgt
        )
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad results row: {line}"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        Ok(RunSummary {
            method: f[0].to_string(),
            seed: f[1].parse().map_err(|_| bad())?,
            task_count: f[2].parse().map_err(|_| bad())?,
            acc: f[3].parse().map_err(|_| bad())?,
            fgt: f[4].parse().map_err(|_| bad())?,
        })
    }
}
