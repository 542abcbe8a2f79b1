//! The active-learning loop: label the current display, retrain, pick the
//! next display. One `SessionState` per annotation session.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bandit::{adversarial_reward, BanditConfig, QTable};
use crate::classifier::{train, ClassifierConfig, LinearModel};
use crate::clustering::{fit_kmeans, ClusterModel};
use crate::data_pool::{simulated_oracle, DataPool, Label, Sample, Split};
use crate::error::{invalid, Error, Result};
use crate::membership::SolverConfig;
use crate::metrics::{eer, eer_sweep};
use crate::rng::{stream, Stream};
use crate::strategies::{propose_display, LambdaConfig, SelectionContext, Strategy, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub strategy: Strategy,
    pub display_size: usize,
    pub iterations: usize,
    /// Number of k-means clusters; defaults to the display size.
    pub clusters: Option<usize>,
    pub seed: u64,
    pub kmeans_max_iters: usize,
    /// Refit k-means on the unlabeled remainder every iteration. When off,
    /// one clustering of the whole training split is reused.
    pub refit_clusters: bool,
    pub evaluation_enabled: bool,
    pub solver: SolverConfig,
    pub classifier: ClassifierConfig,
    pub bandit: BanditConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Rl,
            display_size: 8,
            iterations: 10,
            clusters: None,
            seed: 0,
            kmeans_max_iters: 100,
            refit_clusters: true,
            evaluation_enabled: true,
            solver: SolverConfig::default(),
            classifier: ClassifierConfig::default(),
            bandit: BanditConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn n_clusters(&self) -> usize {
        self.clusters.unwrap_or(self.display_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.display_size == 0 || self.iterations == 0 {
            return Err(invalid("display_size and iterations must be at least 1"));
        }
        if self.n_clusters() == 0 || self.kmeans_max_iters == 0 {
            return Err(invalid("clusters and kmeans_max_iters must be at least 1"));
        }
        self.solver.validate()?;
        self.bandit.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayStatus {
    AwaitingLabels,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub id: String,
    pub label: Label,
    /// Index of the display the label came from (0 for the random display).
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Display {
    pub iteration: usize,
    pub ids: Vec<String>,
    /// Criterion configuration that produced this display, if any.
    pub action: Option<LambdaConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based: record `t` follows the labeling of display `t − 1`.
    pub iteration: usize,
    pub samp_percent: f64,
    pub display: Vec<String>,
    pub action: Option<LambdaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    /// Balanced error at threshold 0, as a fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eer: Option<f64>,
    /// Equal-error point from a threshold sweep, as a fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eer_sweep: Option<f64>,
    pub positives_labeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub config: SessionConfig,
    pool: Arc<DataPool>,
    labeled: Vec<LabeledEntry>,
    display: Display,
    status: DisplayStatus,
    model: Option<LinearModel>,
    qtable: Option<QTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed_clusters: Option<ClusterModel>,
    history: Vec<IterationRecord>,
}

fn features_of<'a>(pool: &'a DataPool, indices: &[usize]) -> Vec<(&'a [f64], Label)> {
    indices
        .iter()
        .filter_map(|&i| {
            let s = pool.sample(i);
            s.truth_label.map(|l| (&s.features[..], l))
        })
        .collect()
}

fn feature_matrix(pool: &DataPool, indices: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((indices.len(), pool.dim()), |(r, c)| pool.sample(indices[r]).features[c])
}

pub fn start_session(pool: Arc<DataPool>, config: SessionConfig) -> Result<SessionState> {
    config.validate()?;
    let train_idx = pool.indices(Split::Train);
    let b = config.display_size;
    if b > train_idx.len() {
        return Err(invalid(format!(
            "display size {b} exceeds the {} training samples",
            train_idx.len()
        )));
    }
    if b * config.iterations > train_idx.len() {
        return Err(invalid(format!(
            "budget {b} x {} exceeds the {} training samples",
            config.iterations,
            train_idx.len()
        )));
    }
    if config.evaluation_enabled {
        let test_idx = pool.indices(Split::Test);
        if test_idx.iter().any(|&i| pool.sample(i).truth_label.is_none()) {
            return Err(invalid("evaluation needs ground truth on every test sample"));
        }
        let (neg, pos) = pool.class_counts(&test_idx);
        if neg == 0 || pos == 0 {
            return Err(invalid("evaluation needs both classes in the test split"));
        }
    }

    let mut rng = stream(config.seed, Stream::InitialDisplay, 0);
    let mut first: Vec<usize> = rand::seq::index::sample(&mut rng, train_idx.len(), b)
        .into_iter()
        .map(|j| train_idx[j])
        .collect();
    first.sort_unstable();

    let fixed_clusters = if config.refit_clusters {
        None
    } else {
        let k = config.n_clusters().min(train_idx.len());
        let mut rng = stream(config.seed, Stream::KMeans, u64::MAX);
        Some(fit_kmeans(feature_matrix(&pool, &train_idx).view(), k, config.kmeans_max_iters, &mut rng)?)
    };
    let qtable = match config.strategy {
        Strategy::Rl => Some(QTable::new(&config.bandit)?),
        Strategy::Fixed(_) => None,
    };
    let ids = first.iter().map(|&i| pool.sample(i).id.clone()).collect();
    Ok(SessionState {
        config,
        pool,
        labeled: Vec::new(),
        display: Display { iteration: 0, ids, action: None },
        status: DisplayStatus::AwaitingLabels,
        model: None,
        qtable,
        fixed_clusters,
        history: Vec::new(),
    })
}

impl SessionState {
    pub fn pool(&self) -> &Arc<DataPool> {
        &self.pool
    }

    pub fn status(&self) -> DisplayStatus {
        self.status
    }

    pub fn is_finished(&self) -> bool {
        self.status == DisplayStatus::None
    }

    /// Number of displays labeled so far.
    pub fn iteration(&self) -> usize {
        self.history.len()
    }

    pub fn display(&self) -> &Display {
        &self.display
    }

    /// Current display ids; empty once the session is finished.
    pub fn current_display(&self) -> &[String] {
        match self.status {
            DisplayStatus::AwaitingLabels => &self.display.ids,
            DisplayStatus::None => &[],
        }
    }

    pub fn display_samples(&self) -> Vec<&Sample> {
        self.current_display()
            .iter()
            .filter_map(|id| self.pool.get(id))
            .collect()
    }

    pub fn labeled(&self) -> &[LabeledEntry] {
        &self.labeled
    }

    pub fn model(&self) -> Option<&LinearModel> {
        self.model.as_ref()
    }

    pub fn qtable(&self) -> Option<&QTable> {
        self.qtable.as_ref()
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn train_size(&self) -> usize {
        self.pool.indices(Split::Train).len()
    }

    /// Cumulative labeled share of the training split after `t` displays, in percent.
    pub fn sampling_rate(&self, t: usize) -> f64 {
        100.0 * (self.config.display_size * t) as f64 / self.train_size() as f64
    }

    fn check_labels(&self, labels: &[(String, Label)]) -> Result<HashMap<String, Label>> {
        let expected: HashSet<&str> = self.display.ids.iter().map(String::as_str).collect();
        let mut given = HashMap::with_capacity(labels.len());
        let mut unexpected = Vec::new();
        for (id, label) in labels {
            if !expected.contains(id.as_str()) || given.insert(id.clone(), *label).is_some() {
                unexpected.push(id.clone());
            }
        }
        let missing: Vec<String> = self
            .display
            .ids
            .iter()
            .filter(|id| !given.contains_key(*id))
            .cloned()
            .collect();
        if !missing.is_empty() || !unexpected.is_empty() {
            return Err(Error::LabelMismatch { missing, unexpected });
        }
        Ok(given)
    }

    /// Consumes the labels of the current display and advances one iteration.
    pub fn submit_labels(&mut self, labels: &[(String, Label)]) -> Result<&IterationRecord> {
        if self.is_finished() {
            return Err(Error::Finished);
        }
        let given = self.check_labels(labels)?;
        let pool = Arc::clone(&self.pool);
        let display_idx: Vec<usize> = self
            .display
            .ids
            .iter()
            .map(|id| pool.position(id).ok_or_else(|| Error::UnknownId(id.clone())))
            .collect::<Result<_>>()?;
        let display_pairs: Vec<(&[f64], Label)> = display_idx
            .iter()
            .zip(&self.display.ids)
            .map(|(&i, id)| (&pool.sample(i).features[..], given[id]))
            .collect();

        let mut reward = None;
        if let (Some(q), Some(prev), Some(action)) = (self.qtable.as_mut(), self.model.as_ref(), self.display.action) {
            let r = adversarial_reward(prev, &display_pairs)?;
            q.update(action, r)?;
            reward = Some(r);
        }

        let t = self.display.iteration;
        self.labeled.extend(self.display.ids.iter().map(|id| LabeledEntry {
            id: id.clone(),
            label: given[id],
            iteration: t,
        }));
        let labeled_idx: Vec<usize> = self
            .labeled
            .iter()
            .map(|e| pool.position(&e.id).expect("labeled ids come from the pool"))
            .collect();
        let training: Vec<(&[f64], Label)> = labeled_idx
            .iter()
            .zip(&self.labeled)
            .map(|(&i, e)| (&pool.sample(i).features[..], e.label))
            .collect();
        let model = train(&training, &self.config.classifier)?;

        let (mut eer_value, mut eer_sweep_value) = (None, None);
        if self.config.evaluation_enabled {
            let eval = features_of(&pool, &pool.indices(Split::Test));
            eer_value = Some(eer(&model, &eval)?);
            let scores = eval.iter().map(|(x, _)| model.raw_score(x)).collect::<Result<Vec<_>>>()?;
            let truth: Vec<Label> = eval.iter().map(|(_, y)| *y).collect();
            eer_sweep_value = Some(eer_sweep(&scores, &truth)?);
        }

        let completed = t + 1;
        self.history.push(IterationRecord {
            iteration: completed,
            samp_percent: self.sampling_rate(completed),
            display: self.display.ids.clone(),
            action: self.display.action,
            reward,
            eer: eer_value,
            eer_sweep: eer_sweep_value,
            positives_labeled: self.labeled.iter().filter(|e| e.label.is_change()).count(),
        });
        self.model = Some(model);

        if completed >= self.config.iterations {
            self.status = DisplayStatus::None;
            self.display = Display { iteration: completed, ids: Vec::new(), action: None };
        } else {
            self.display = self.next_display(completed, &labeled_idx)?;
        }
        Ok(self.history.last().expect("just pushed"))
    }

    fn next_display(&self, t: usize, labeled_idx: &[usize]) -> Result<Display> {
        let pool = &self.pool;
        let model = self.model.as_ref().expect("trained before selection");
        let seed = self.config.seed;
        let taken: HashSet<usize> = labeled_idx.iter().copied().collect();
        let train_idx = pool.indices(Split::Train);
        let candidates: Vec<usize> = train_idx.iter().copied().filter(|i| !taken.contains(i)).collect();
        if candidates.is_empty() {
            return Err(Error::Exhausted);
        }

        let kind = match self.config.strategy {
            Strategy::Fixed(kind) => kind,
            Strategy::Rl => {
                let q = self.qtable.as_ref().expect("rl sessions carry a q-table");
                StrategyKind::Criterion(q.choose_action(&mut stream(seed, Stream::Bandit, t as u64)))
            }
        };

        let clusters = match &self.fixed_clusters {
            Some(all) => {
                let rows: Vec<usize> = train_idx
                    .iter()
                    .enumerate()
                    .filter(|(_, i)| !taken.contains(i))
                    .map(|(r, _)| r)
                    .collect();
                all.restrict(&rows)
            }
            None => {
                let k = self.config.n_clusters().min(candidates.len());
                let mut rng = stream(seed, Stream::KMeans, t as u64);
                fit_kmeans(feature_matrix(pool, &candidates).view(), k, self.config.kmeans_max_iters, &mut rng)?
            }
        };
        let raw_scores = candidates
            .iter()
            .map(|&i| model.raw_score(&pool.sample(i).features))
            .collect::<Result<Vec<_>>>()?;
        let ctx = SelectionContext {
            pool,
            candidates: &candidates,
            labeled: labeled_idx,
            clusters: &clusters,
            raw_scores: &raw_scores,
            solver: &self.config.solver,
        };
        let mut rng = stream(seed, Stream::Random, t as u64);
        let picked = propose_display(kind, &ctx, self.config.display_size, &mut rng)?;
        let action = match kind {
            StrategyKind::Criterion(l) => Some(l),
            _ => None,
        };
        Ok(Display {
            iteration: t,
            ids: picked.iter().map(|&i| pool.sample(i).id.clone()).collect(),
            action,
        })
    }

    /// Answers the current display from ground truth.
    pub fn oracle_labels(&self) -> Result<Vec<(String, Label)>> {
        simulated_oracle(&self.pool, self.current_display())
    }

    /// Drives the loop to the end with the simulated oracle.
    pub fn run_to_completion(&mut self) -> Result<()> {
        while !self.is_finished() {
            let labels = self.oracle_labels()?;
            self.submit_labels(&labels)?;
        }
        Ok(())
    }

    /// Checks the bookkeeping invariants of the loop.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for record in &self.history {
            for id in &record.display {
                if !seen.insert(id.as_str()) {
                    return Err(invalid(format!("sample {id:?} displayed twice")));
                }
            }
        }
        for id in self.current_display() {
            if seen.contains(id.as_str()) {
                return Err(invalid(format!("current display repeats labeled sample {id:?}")));
            }
        }
        let b = self.config.display_size;
        if self.labeled.len() != b * self.history.len() {
            return Err(invalid("labeled count differs from display size x iterations"));
        }
        for (t, record) in self.history.iter().enumerate() {
            if (record.samp_percent - self.sampling_rate(t + 1)).abs() > 1e-9 {
                return Err(invalid(format!("sampling rate of iteration {} is off", t + 1)));
            }
        }
        Ok(())
    }

    pub fn auc(&self) -> Result<f64> {
        auc_of_run(&self.history)
    }

    /// Writes the state atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer(&mut tmp, self)?;
        tmp.flush()?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let state: SessionState = serde_json::from_slice(&bytes).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        state.check_invariants().map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(state)
    }
}

pub fn save_session(state: &SessionState, path: &Path) -> Result<()> {
    state.save(path)
}

pub fn load_session(path: &Path) -> Result<SessionState> {
    SessionState::load(path)
}

/// Mean of the values (the per-run "AUC" of an EER curve).
pub fn auc(eers: &[f64]) -> Result<f64> {
    if eers.is_empty() {
        return Err(invalid("no EER values"));
    }
    Ok(eers.iter().sum::<f64>() / eers.len() as f64)
}

/// Mean per-iteration EER of a run.
pub fn auc_of_run(history: &[IterationRecord]) -> Result<f64> {
    let eers = history
        .iter()
        .map(|r| r.eer.ok_or_else(|| invalid(format!("iteration {} has no EER", r.iteration))))
        .collect::<Result<Vec<_>>>()?;
    auc(&eers)
}
