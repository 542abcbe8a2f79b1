//! Batch runs of every (strategy, seed) pair with the simulated oracle, and
//! their csv reports.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data_pool::DataPool;
use crate::error::{invalid, Result};
use crate::session::{auc_of_run, start_session, IterationRecord, SessionConfig};
use crate::strategies::Strategy;

#[derive(Debug, Clone)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub history: Vec<IterationRecord>,
}

impl RunResult {
    /// Per-iteration EER in percent.
    pub fn eer_percent(&self) -> Result<Vec<f64>> {
        self.history
            .iter()
            .map(|r| r.eer.map(|e| 100.0 * e).ok_or_else(|| invalid("run has no EER")))
            .collect()
    }

    pub fn auc_percent(&self) -> Result<f64> {
        Ok(100.0 * auc_of_run(&self.history)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: Strategy,
    /// Mean EER (percent) per iteration across seeds.
    pub mean_eer: Vec<f64>,
    /// Mean over seeds of the per-run AUC (percent).
    pub auc: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub runs: Vec<RunResult>,
}

/// Runs every strategy for every seed. `base.strategy` and `base.seed` are
/// overridden per run; runs execute in parallel but results keep the
/// (strategy, seed) input order.
pub fn run_benchmark(
    pool: Arc<DataPool>,
    strategies: &[Strategy],
    seeds: &[u64],
    base: &SessionConfig,
) -> Result<BenchmarkReport> {
    if strategies.is_empty() || seeds.is_empty() {
        return Err(invalid("benchmark needs at least one strategy and one seed"));
    }
    let jobs: Vec<(Strategy, u64)> = strategies
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let runs = jobs
        .into_par_iter()
        .map(|(strategy, seed)| {
            let config = SessionConfig { strategy, seed, ..base.clone() };
            let mut state = start_session(Arc::clone(&pool), config)?;
            state.run_to_completion()?;
            Ok(RunResult { strategy, seed, history: state.history().to_vec() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkReport { runs })
}

impl BenchmarkReport {
    pub fn runs_for(&self, strategy: Strategy) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.strategy == strategy)
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        let mut out: Vec<Strategy> = Vec::new();
        for r in &self.runs {
            if !out.contains(&r.strategy) {
                out.push(r.strategy);
            }
        }
        out
    }

    pub fn summary(&self) -> Result<Vec<SummaryRow>> {
        self.strategies()
            .into_iter()
            .map(|strategy| {
                let curves = self
                    .runs_for(strategy)
                    .map(RunResult::eer_percent)
                    .collect::<Result<Vec<_>>>()?;
                let aucs = self
                    .runs_for(strategy)
                    .map(RunResult::auc_percent)
                    .collect::<Result<Vec<_>>>()?;
                let n = curves.len() as f64;
                let len = curves[0].len();
                let mean_eer = (0..len).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / n).collect();
                let auc = aucs.iter().sum::<f64>() / n;
                Ok(SummaryRow { strategy, mean_eer, auc })
            })
            .collect()
    }

    /// Writes `{out}/{strategy}/{seed}.csv` per run and `{out}/summary.csv`.
    pub fn write(&self, out: &Path) -> Result<()> {
        for run in &self.runs {
            let dir = out.join(run.strategy.to_string());
            fs::create_dir_all(&dir)?;
            let file = fs::File::create(dir.join(format!("{}.csv", run.seed)))?;
            write_run_csv(file, run.strategy, &run.history)?;
        }
        fs::create_dir_all(out)?;
        write_summary_csv(fs::File::create(out.join("summary.csv"))?, &self.summary()?)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per iteration: `iteration,samp_percent,strategy,action,reward,eer,eer_sweep`
/// with both EER columns in percent.
pub fn write_run_csv<W: Write>(out: W, strategy: Strategy, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "samp_percent", "strategy", "action", "reward", "eer", "eer_sweep"])?;
    for r in history {
        w.write_record([
            r.iteration.to_string(),
            r.samp_percent.to_string(),
            strategy.to_string(),
            r.action.map(|a| a.to_string()).unwrap_or_default(),
            opt(r.reward),
            opt(r.eer.map(|e| 100.0 * e)),
            opt(r.eer_sweep.map(|e| 100.0 * e)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let iters = rows.first().map_or(0, |r| r.mean_eer.len());
    let mut header = vec!["strategy".to_string()];
    header.extend((1..=iters).map(|t| format!("iter_{t}")));
    header.push("auc".into());
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.strategy.to_string()];
        rec.extend(row.mean_eer.iter().map(f64::to_string));
        rec.push(row.auc.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
