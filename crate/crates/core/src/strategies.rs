//! Display-selection strategies behind one interface.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{normalize_score, score_matrix_from};
use crate::clustering::ClusterModel;
use crate::data_pool::DataPool;
use crate::error::{invalid, Error, Result};
use crate::membership::{top_indices, CriterionWeights, Instance, SolverConfig};

/// Which criteria are switched on: diversity (α), ambiguity (β),
/// representativity (η). At least one is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct LambdaConfig {
    alpha: bool,
    beta: bool,
    eta: bool,
}

impl LambdaConfig {
    /// All seven actions, ordered lexicographically by (α, β, η).
    pub const ALL: [LambdaConfig; 7] = [
        LambdaConfig { alpha: false, beta: false, eta: true },
        LambdaConfig { alpha: false, beta: true, eta: false },
        LambdaConfig { alpha: false, beta: true, eta: true },
        LambdaConfig { alpha: true, beta: false, eta: false },
        LambdaConfig { alpha: true, beta: false, eta: true },
        LambdaConfig { alpha: true, beta: true, eta: false },
        LambdaConfig { alpha: true, beta: true, eta: true },
    ];

    pub const FLAT: LambdaConfig = LambdaConfig::ALL[6];

    pub fn new(alpha: bool, beta: bool, eta: bool) -> Result<Self> {
        if !(alpha || beta || eta) {
            return Err(invalid("at least one of alpha, beta, eta must be set"));
        }
        Ok(Self { alpha, beta, eta })
    }

    pub fn alpha(self) -> bool {
        self.alpha
    }

    pub fn beta(self) -> bool {
        self.beta
    }

    pub fn eta(self) -> bool {
        self.eta
    }

    /// Position in [`LambdaConfig::ALL`].
    pub fn index(self) -> usize {
        (usize::from(self.alpha) << 2 | usize::from(self.beta) << 1 | usize::from(self.eta)) - 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn weights(self) -> CriterionWeights {
        let w = |on: bool| if on { 1.0 } else { 0.0 };
        CriterionWeights::new(w(self.alpha), w(self.beta), w(self.eta))
    }

    pub fn name(self) -> &'static str {
        ["rep", "amb", "rep+amb", "div", "rep+div", "div+amb", "flat"][self.index()]
    }
}

impl fmt::Display for LambdaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LambdaConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if matches!(s, "flat" | "all") {
            return Ok(Self::FLAT);
        }
        let (mut alpha, mut beta, mut eta) = (false, false, false);
        for part in s.split('+') {
            match part.trim() {
                "rep" => eta = true,
                "div" => alpha = true,
                "amb" => beta = true,
                other => return Err(invalid(format!("unknown criterion {other:?} in {s:?}"))),
            }
        }
        Self::new(alpha, beta, eta)
    }
}

impl From<LambdaConfig> for String {
    fn from(l: LambdaConfig) -> String {
        l.name().to_string()
    }
}

impl TryFrom<String> for LambdaConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Criterion(LambdaConfig),
    Random,
    MaxMin,
    Uncertainty,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::Criterion(l) => l.fmt(f),
            StrategyKind::Random => f.write_str("random"),
            StrategyKind::MaxMin => f.write_str("maxmin"),
            StrategyKind::Uncertainty => f.write_str("uncertainty"),
        }
    }
}

/// A fixed strategy, or the bandit choosing a criterion configuration at
/// every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Strategy {
    Fixed(StrategyKind),
    Rl,
}

impl Strategy {
    pub const ALL_NAMES: [&'static str; 11] = [
        "rep", "div", "amb", "rep+div", "rep+amb", "div+amb", "flat", "random", "maxmin", "uncertainty", "rl",
    ];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Fixed(kind) => kind.fmt(f),
            Strategy::Rl => f.write_str("rl"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "rl" => Strategy::Rl,
            "random" => Strategy::Fixed(StrategyKind::Random),
            "maxmin" => Strategy::Fixed(StrategyKind::MaxMin),
            "uncertainty" => Strategy::Fixed(StrategyKind::Uncertainty),
            other => Strategy::Fixed(StrategyKind::Criterion(other.parse().map_err(|_| {
                invalid(format!(
                    "unknown strategy {other:?}; expected one of {}",
                    Strategy::ALL_NAMES.join(", ")
                ))
            })?)),
        })
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Everything a strategy may look at in one iteration. Candidate-aligned
/// slices share the order of `candidates`.
pub struct SelectionContext<'a> {
    pub pool: &'a DataPool,
    /// Pool indices of unlabeled training samples, in pool order.
    pub candidates: &'a [usize],
    /// Pool indices of every labeled sample.
    pub labeled: &'a [usize],
    /// Clustering of the candidates.
    pub clusters: &'a ClusterModel,
    /// Raw classifier score of each candidate.
    pub raw_scores: &'a [f64],
    pub solver: &'a SolverConfig,
}

impl SelectionContext<'_> {
    fn validate(&self, b: usize) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Exhausted);
        }
        if b == 0 || b > self.candidates.len() {
            return Err(invalid(format!(
                "display size {b} invalid for {} remaining candidates",
                self.candidates.len()
            )));
        }
        if self.clusters.n_samples() != self.candidates.len() || self.raw_scores.len() != self.candidates.len() {
            return Err(invalid("cluster model and scores must be aligned with the candidates"));
        }
        Ok(())
    }

    pub fn criterion_instance(&self, lambda: LambdaConfig) -> Result<Instance> {
        let normalized: Vec<f64> = self.raw_scores.iter().map(|&r| normalize_score(r)).collect();
        Instance::from_clusters(self.clusters, score_matrix_from(&normalized), lambda.weights())
    }
}

/// Picks `b` distinct candidates; returns pool indices.
pub fn propose_display<R: Rng>(
    kind: StrategyKind,
    ctx: &SelectionContext<'_>,
    b: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    ctx.validate(b)?;
    let local = match kind {
        StrategyKind::Criterion(lambda) => {
            let solution = ctx.criterion_instance(lambda)?.solve(ctx.solver)?;
            top_indices(solution.mu.as_slice(), b)?
        }
        StrategyKind::Random => rand::seq::index::sample(rng, ctx.candidates.len(), b).into_vec(),
        StrategyKind::Uncertainty => uncertainty_select(ctx.raw_scores, b)?,
        StrategyKind::MaxMin => {
            let features = |idx: &[usize]| idx.iter().map(|&i| &ctx.pool.sample(i).features[..]).collect::<Vec<_>>();
            maxmin_select(&features(ctx.labeled), &features(ctx.candidates), b)?
        }
    };
    Ok(local.into_iter().map(|i| ctx.candidates[i]).collect())
}

/// Candidates with the smallest `|score|`, ties to the lowest index.
pub fn uncertainty_select(raw_scores: &[f64], b: usize) -> Result<Vec<usize>> {
    let margins: Vec<f64> = raw_scores.iter().map(|s| -s.abs()).collect();
    top_indices(&margins, b)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Greedy farthest-first selection: each pick maximizes the minimum distance
/// to the labeled set and the earlier picks. Ties go to the lowest index.
/// With nothing labeled the first pick is candidate 0.
pub fn maxmin_select(labeled: &[&[f64]], candidates: &[&[f64]], b: usize) -> Result<Vec<usize>> {
    if b > candidates.len() {
        return Err(invalid(format!("display size {b} exceeds {} candidates", candidates.len())));
    }
    let mut nearest: Vec<f64> = candidates
        .iter()
        .map(|c| labeled.iter().map(|l| euclidean(c, l)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut taken = vec![false; candidates.len()];
    let mut picks = Vec::with_capacity(b);
    for _ in 0..b {
        let mut best: Option<usize> = None;
        for (i, &d) in nearest.iter().enumerate() {
            if !taken[i] && best.is_none_or(|j| d > nearest[j]) {
                best = Some(i);
            }
        }
        let pick = best.expect("b <= candidates");
        taken[pick] = true;
        picks.push(pick);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(euclidean(candidates[i], candidates[pick]));
        }
    }
    Ok(picks)
}
