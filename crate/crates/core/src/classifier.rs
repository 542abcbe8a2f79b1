//! Linear max-margin classifier trained by full-batch subgradient descent on
//! the class-weighted, L2-regularized hinge loss.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data_pool::Label;
use crate::error::{invalid, Result};

/// Lower/upper clamp applied to normalized scores before any logarithm.
pub const SCORE_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lambda_reg: f64,
    /// Initial step; epoch `t` uses `step0 / (1 + t)`.
    pub step0: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { epochs: 300, lambda_reg: 1e-3, step0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub lambda_reg: f64,
    /// Loss weights of (no change, change).
    pub class_weights: [f64; 2],
    pub final_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: TrainingMeta,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Problem<'a> {
    data: &'a [(&'a [f64], Label)],
    weights: [f64; 2],
    lambda: f64,
}

impl Problem<'_> {
    fn class_weight(&self, label: Label) -> f64 {
        self.weights[usize::from(label.is_change())]
    }

    fn objective(&self, w: &[f64], b: f64) -> f64 {
        let n = self.data.len() as f64;
        let hinge: f64 = self
            .data
            .iter()
            .map(|(x, y)| self.class_weight(*y) * (1.0 - y.sign() * (dot(w, x) + b)).max(0.0))
            .sum();
        0.5 * self.lambda * dot(w, w) + hinge / n
    }

    fn subgradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.data.len() as f64;
        let mut gw: Vec<f64> = w.iter().map(|v| self.lambda * v).collect();
        let mut gb = 0.0;
        for (x, y) in self.data {
            let y_s = y.sign();
            if y_s * (dot(w, x) + b) < 1.0 {
                let c = self.class_weight(*y) / n;
                gw.iter_mut().zip(x.iter()).for_each(|(g, xi)| *g -= c * y_s * xi);
                gb -= c * y_s;
            }
        }
        (gw, gb)
    }
}

/// Trains on `labeled`, returning the model and the best-so-far objective
/// after each epoch (index 0 is the zero initialization).
pub fn train_traced(
    labeled: &[(&[f64], Label)],
    config: &ClassifierConfig,
) -> Result<(LinearModel, Vec<f64>)> {
    if labeled.is_empty() {
        return Err(invalid("cannot train on an empty label set"));
    }
    let dim = labeled[0].0.len();
    if let Some((i, _)) = labeled.iter().enumerate().find(|(_, (x, _))| x.len() != dim) {
        return Err(invalid(format!("sample {i} has a different feature dimension than sample 0")));
    }
    if !(config.lambda_reg >= 0.0 && config.step0 > 0.0) {
        return Err(invalid("lambda_reg must be >= 0 and step0 > 0"));
    }

    let n = labeled.len() as f64;
    let n_pos = labeled.iter().filter(|(_, y)| y.is_change()).count();
    let n_neg = labeled.len() - n_pos;

    // Only one class seen: constant prediction of that class.
    if n_pos == 0 || n_neg == 0 {
        let seen = if n_pos > 0 { Label::Change } else { Label::NoChange };
        let mut class_weights = [0.0; 2];
        class_weights[usize::from(seen.is_change())] = 1.0;
        let model = LinearModel {
            weights: vec![0.0; dim],
            bias: seen.sign(),
            meta: TrainingMeta {
                epochs: 0,
                lambda_reg: config.lambda_reg,
                class_weights,
                final_objective: 0.0,
            },
        };
        return Ok((model, vec![0.0]));
    }

    let problem = Problem {
        data: labeled,
        weights: [n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64)],
        lambda: config.lambda_reg,
    };
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut best = (w.clone(), b, problem.objective(&w, b));
    let mut trace = vec![best.2];
    for t in 0..config.epochs {
        let step = config.step0 / (1.0 + t as f64);
        let (gw, gb) = problem.subgradient(&w, b);
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= step * g);
        b -= step * gb;
        let obj = problem.objective(&w, b);
        if obj < best.2 {
            best = (w.clone(), b, obj);
        }
        trace.push(best.2);
    }
    let (weights, bias, final_objective) = best;
    let model = LinearModel {
        weights,
        bias,
        meta: TrainingMeta {
            epochs: config.epochs,
            lambda_reg: config.lambda_reg,
            class_weights: problem.weights,
            final_objective,
        },
    };
    Ok((model, trace))
}

pub fn train(labeled: &[(&[f64], Label)], config: &ClassifierConfig) -> Result<LinearModel> {
    train_traced(labeled, config).map(|(m, _)| m)
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "feature dimension {} does not match model dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Signed decision value `w·x + b`.
    pub fn raw_score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(Label::from(self.raw_score(x)? > 0.0))
    }

    /// Logistic-squashed score clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]`.
    pub fn normalized_score(&self, x: &[f64]) -> Result<f64> {
        Ok(normalize_score(self.raw_score(x)?))
    }

    /// n × 2 matrix with rows `(ĝ(x), 1 − ĝ(x))`.
    pub fn score_matrix<'a, I>(&self, samples: I) -> Result<Array2<f64>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let scores = samples
            .into_iter()
            .map(|x| self.normalized_score(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(score_matrix_from(&scores))
    }
}

pub fn normalize_score(raw: f64) -> f64 {
    logistic(raw).clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
}

pub fn score_matrix_from(normalized: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((normalized.len(), 2), |(i, c)| {
        if c == 0 {
            normalized[i]
        } else {
            1.0 - normalized[i]
        }
    })
}
