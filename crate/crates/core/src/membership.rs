//! Membership degrees over the candidate pool.
//!
//! The objective over the probability simplex is
//!
//! ```text
//! f(μ) = η Σᵢ μᵢ Dᵢₖ₍ᵢ₎ + α Σₖ pₖ log pₖ + β Σᵢ μᵢ Σ_c Fᵢc log Fᵢc + Σᵢ μᵢ log μᵢ,   p = Cᵀμ
//! ```
//!
//! and is minimized by a damped multiplicative fixed-point iteration
//! `μ ← (1 − γ) μ + γ T(μ)` with
//! `T(μ) ∝ exp(−[η (D∘C) 1 + α C (log Cᵀμ + 1) + β (F∘log F) 1])`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::error::{invalid, Error, Result};

/// Guard on cluster masses before taking their logarithm.
const MASS_FLOOR: f64 = 1e-12;
/// Lowest exponent kept relative to the maximum; keeps every entry of the
/// update strictly positive.
const EXPONENT_FLOOR: f64 = -700.0;

/// Non-negative weights of the diversity (α), ambiguity (β) and
/// representativity (η) terms. The cardinality term always has weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionWeights {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
}

impl CriterionWeights {
    pub const NONE: Self = Self { alpha: 0.0, beta: 0.0, eta: 0.0 };

    pub fn new(alpha: f64, beta: f64, eta: f64) -> Self {
        Self { alpha, beta, eta }
    }
}

#[derive(Deserialize)]
struct RawInstance {
    distances: Array2<f64>,
    indicator: Array2<f64>,
    scores: Array2<f64>,
    weights: CriterionWeights,
}

/// One problem: distances D (n×K), indicators C (n×K), scores F (n×2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct Instance {
    distances: Array2<f64>,
    indicator: Array2<f64>,
    scores: Array2<f64>,
    weights: CriterionWeights,
    #[serde(skip)]
    cluster_of: Vec<usize>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        Instance::new(raw.distances, raw.indicator, raw.scores, raw.weights)
    }
}

impl Instance {
    pub fn new(
        distances: Array2<f64>,
        indicator: Array2<f64>,
        scores: Array2<f64>,
        weights: CriterionWeights,
    ) -> Result<Self> {
        let (n, k) = distances.dim();
        if n == 0 || k == 0 {
            return Err(invalid("instance needs at least one sample and one cluster"));
        }
        if indicator.dim() != (n, k) {
            return Err(invalid(format!("C is {:?}, expected {:?}", indicator.dim(), (n, k))));
        }
        if scores.dim() != (n, 2) {
            return Err(invalid(format!("F is {:?}, expected ({n}, 2)", scores.dim())));
        }
        if distances.iter().any(|&d| !(d.is_finite() && d >= 0.0)) {
            return Err(invalid("D entries must be finite and non-negative"));
        }
        let mut cluster_of = Vec::with_capacity(n);
        for (i, row) in indicator.rows().into_iter().enumerate() {
            let ones: Vec<usize> = (0..k).filter(|&c| row[c] == 1.0).collect();
            if ones.len() != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(invalid(format!("row {i} of C is not one-hot")));
            }
            cluster_of.push(ones[0]);
        }
        let mut occupied = vec![false; k];
        cluster_of.iter().for_each(|&c| occupied[c] = true);
        if let Some(empty) = occupied.iter().position(|o| !o) {
            return Err(invalid(format!("cluster {empty} has no members")));
        }
        for (i, row) in scores.rows().into_iter().enumerate() {
            if row.iter().any(|&f| !(f > 0.0 && f < 1.0)) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("row {i} of F is not a distribution in (0, 1)")));
            }
        }
        let w = weights;
        if [w.alpha, w.beta, w.eta].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("criterion weights must be finite and non-negative"));
        }
        Ok(Self { distances, indicator, scores, weights, cluster_of })
    }

    /// Builds the instance for the samples a cluster model was fit on.
    pub fn from_clusters(
        clusters: &ClusterModel,
        scores: Array2<f64>,
        weights: CriterionWeights,
    ) -> Result<Self> {
        let (d, c) = clusters.matrices();
        Self::new(d, c, scores, weights)
    }

    pub fn n(&self) -> usize {
        self.distances.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.distances.ncols()
    }

    pub fn weights(&self) -> CriterionWeights {
        self.weights
    }

    pub fn distances(&self) -> ArrayView2<'_, f64> {
        self.distances.view()
    }

    pub fn indicator(&self) -> ArrayView2<'_, f64> {
        self.indicator.view()
    }

    pub fn scores(&self) -> ArrayView2<'_, f64> {
        self.scores.view()
    }

    /// Cluster index of each sample.
    pub fn clusters(&self) -> &[usize] {
        &self.cluster_of
    }

    /// Same instance with samples reordered: row `i` of the result is row
    /// `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        use ndarray::Axis;
        Self::new(
            self.distances.select(Axis(0), order),
            self.indicator.select(Axis(0), order),
            self.scores.select(Axis(0), order),
            self.weights,
        )
    }

    fn own_distance(&self, i: usize) -> f64 {
        self.distances[[i, self.cluster_of[i]]]
    }

    /// `Σ_c Fᵢc log Fᵢc` (minus the score entropy).
    fn score_neg_entropy(&self, i: usize) -> f64 {
        self.scores.row(i).iter().map(|&f| f * f.ln()).sum()
    }

    fn cluster_mass(&self, mu: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_clusters()];
        for (&m, &c) in mu.iter().zip(&self.cluster_of) {
            p[c] += m;
        }
        p
    }

    fn check_mu(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.n() {
            return Err(invalid(format!("μ has {} entries, instance has {}", mu.len(), self.n())));
        }
        if let Some(i) = mu.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Domain(format!("μ[{i}] = {} is not strictly positive", mu[i])));
        }
        Ok(())
    }

    pub fn objective(&self, mu: &[f64]) -> Result<f64> {
        self.check_mu(mu)?;
        let w = self.weights;
        let mut value = 0.0;
        for (i, &m) in mu.iter().enumerate() {
            value += w.eta * m * self.own_distance(i) + w.beta * m * self.score_neg_entropy(i) + m * m.ln();
        }
        if w.alpha != 0.0 {
            value += w.alpha
                * self
                    .cluster_mass(mu)
                    .iter()
                    .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
                    .sum::<f64>();
        }
        Ok(value)
    }

    /// One undamped update `T(μ)`, normalized onto the simplex.
    pub fn fixpoint_step(&self, mu: &[f64]) -> Result<Vec<f64>> {
        self.check_mu(mu)?;
        let w = self.weights;
        let log_mass: Vec<f64> = if w.alpha != 0.0 {
            self.cluster_mass(mu).iter().map(|&p| p.max(MASS_FLOOR).ln()).collect()
        } else {
            Vec::new()
        };
        let exponent: Vec<f64> = (0..self.n())
            .map(|i| {
                let mut e = w.eta * self.own_distance(i) + w.beta * self.score_neg_entropy(i);
                if w.alpha != 0.0 {
                    e += w.alpha * (log_mass[self.cluster_of[i]] + 1.0);
                }
                -e
            })
            .collect();
        let top = exponent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut next: Vec<f64> = exponent
            .iter()
            .map(|&e| (e - top).max(EXPONENT_FLOOR).exp())
            .collect();
        normalize(&mut next);
        Ok(next)
    }

    /// `‖T(μ) − μ‖₁`.
    pub fn residual(&self, mu: &[f64]) -> Result<f64> {
        let step = self.fixpoint_step(mu)?;
        Ok(l1_distance(&step, mu))
    }

    /// Damped iterates starting from the uniform vector (not yielded).
    pub fn iterates<'a>(&'a self, config: &SolverConfig) -> DampedIterates<'a> {
        DampedIterates {
            instance: self,
            damping: config.damping,
            current: vec![1.0 / self.n() as f64; self.n()],
        }
    }

    pub fn solve(&self, config: &SolverConfig) -> Result<Solution> {
        config.validate()?;
        let uniform = vec![1.0 / self.n() as f64; self.n()];
        if self.weights.alpha == 0.0 {
            // The update ignores μ, so its first value is the fixed point.
            let mu = self.fixpoint_step(&uniform)?;
            let objective = self.objective(&mu)?;
            let residual = self.residual(&mu)?;
            return Ok(Solution { mu: MembershipVector(mu), converged: true, iterations: 1, objective, residual });
        }
        let mut best = (self.objective(&uniform)?, uniform.clone());
        let mut previous = uniform;
        let mut converged = false;
        let mut iterations = 0;
        for mu in self.iterates(config).take(config.max_fixpoint_iters) {
            iterations += 1;
            let change = l1_distance(&mu, &previous);
            let value = self.objective(&mu)?;
            if value <= best.0 {
                best = (value, mu.clone());
            }
            previous = mu;
            if change < config.tol {
                converged = true;
                break;
            }
        }
        let mu = if converged { previous } else { best.1 };
        let objective = self.objective(&mu)?;
        let residual = self.residual(&mu)?;
        Ok(Solution { mu: MembershipVector(mu), converged, iterations, objective, residual })
    }
}

/// Iterator over `μ ← (1 − γ) μ + γ T(μ)`.
pub struct DampedIterates<'a> {
    instance: &'a Instance,
    damping: f64,
    current: Vec<f64>,
}

impl Iterator for DampedIterates<'_> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let step = self.instance.fixpoint_step(&self.current).ok()?;
        let g = self.damping;
        for (m, s) in self.current.iter_mut().zip(&step) {
            *m = (1.0 - g) * *m + g * s;
        }
        normalize(&mut self.current);
        Some(self.current.clone())
    }
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once the ℓ₁ change between iterates drops below this.
    pub tol: f64,
    pub max_fixpoint_iters: usize,
    /// γ in (0, 1].
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-9, max_fixpoint_iters: 1000, damping: 0.5 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(invalid("solver tol must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("solver damping must lie in (0, 1]"));
        }
        if self.max_fixpoint_iters == 0 {
            return Err(invalid("max_fixpoint_iters must be at least 1"));
        }
        Ok(())
    }
}

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipVector(Vec<f64>);

impl MembershipVector {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Domain("membership entries must be strictly positive".into()));
        }
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("memberships sum to {total}, not 1")));
        }
        Ok(Self(mu))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub mu: MembershipVector,
    /// `false` when the iteration budget ran out; `mu` is then the best iterate.
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub residual: f64,
}

/// Indices of the `b` largest memberships, ties to the lowest index.
pub fn top_indices(mu: &[f64], b: usize) -> Result<Vec<usize>> {
    if b > mu.len() {
        return Err(invalid(format!("display size {b} exceeds {} candidates", mu.len())));
    }
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&i, &j| mu[j].total_cmp(&mu[i]).then(i.cmp(&j)));
    order.truncate(b);
    Ok(order)
}

/// Ids of the `b` candidates with the highest membership.
pub fn select_display<T: Clone>(mu: &MembershipVector, candidate_ids: &[T], b: usize) -> Result<Vec<T>> {
    if candidate_ids.len() != mu.as_slice().len() {
        return Err(invalid("candidate ids are not aligned with memberships"));
    }
    Ok(top_indices(mu.as_slice(), b)?
        .into_iter()
        .map(|i| candidate_ids[i].clone())
        .collect())
}
