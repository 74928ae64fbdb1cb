//! Logistic-regression baseline: column standardization plus batch
//! gradient descent. Deterministic (no random initialization).

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

const ITERATIONS: usize = 300;
const LEARNING_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LogisticModel<S: Scalar> {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    #[serde(skip)]
    _marker: std::marker::PhantomData<S>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(super) fn train_logistic<S: Scalar>(rows: &[Vec<S>], labels: &[bool]) -> LogisticModel<S> {
    let n = rows.len();
    let d = rows[0].len();
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            means[j] += v.to_f64_lossy();
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            let dlt = v.to_f64_lossy() - means[j];
            stds[j] += dlt * dlt;
        }
    }
    for s in &mut stds {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }

    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, v)| (v.to_f64_lossy() - means[j]) / stds[j])
                .collect()
        })
        .collect();

    let mut weights = vec![0.0; d];
    let mut intercept = 0.0;
    for _ in 0..ITERATIONS {
        let mut grad_w = vec![0.0; d];
        let mut grad_b = 0.0;
        for (row, &label) in x.iter().zip(labels) {
            let z = intercept
                + row.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>();
            let err = (label as usize as f64) - sigmoid(z);
            for (g, v) in grad_w.iter_mut().zip(row) {
                *g += err * v;
            }
            grad_b += err;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w += LEARNING_RATE * g / n as f64;
        }
        intercept += LEARNING_RATE * grad_b / n as f64;
    }
    LogisticModel {
        weights,
        intercept,
        means,
        stds,
        _marker: std::marker::PhantomData,
    }
}

impl<S: Scalar> LogisticModel<S> {
    pub fn predict_proba_row(&self, row: &[S]) -> [S; 2] {
        let z = self.intercept
            + row
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    self.weights[j] * (v.to_f64_lossy() - self.means[j]) / self.stds[j]
                })
                .sum::<f64>();
        let p = sigmoid(z);
        [S::from_f64_lossy(1.0 - p), S::from_f64_lossy(p)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_linear_boundary() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 100.0]).collect();
        let labels: Vec<bool> = (0..100).map(|i| i >= 50).collect();
        let model = train_logistic(&rows, &labels);
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &l)| (model.predict_proba_row(r)[1] > 0.5) == l)
            .count();
        assert!(correct >= 95, "correct = {correct}");
    }
}
