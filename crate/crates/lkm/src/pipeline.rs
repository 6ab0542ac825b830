//! Dataset loading, splitting and single training runs shared by the CLI and
//! the experiment harness.

use std::time::Instant;

use lkm_core::{
    evaluate_prepared, fit_standardizer, split, synthetic, train_observed, Dataset, EpochRecord,
    Model, PreparedSet, Standardizer, TrainOutcome,
};
use sha2::{Digest, Sha256};

use crate::config::{DataSource, RunConfig};
use crate::error::{LkmError, Result};
use crate::xyz;

/// Reads or generates the dataset named by `cfg`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic => Ok(synthetic::generate(
            cfg.synthetic_count,
            cfg.synthetic_seed,
            cfg.synthetic_cutoff,
        )?),
        DataSource::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| LkmError::io(path, e))?;
            let molecules = xyz::parse_extended_xyz(&text, &cfg.target)?;
            Ok(Dataset::new(molecules, cfg.target.clone())?)
        }
    }
}

/// Train/val/test datasets sharing one standardizer fitted on train.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub standardizer: Standardizer,
}

pub fn make_splits(cfg: &RunConfig, dataset: &Dataset) -> Result<Splits> {
    let (mut train, mut val, mut test) = split(dataset, cfg.split, cfg.split_seed)?;
    let standardizer = if cfg.standardize {
        fit_standardizer(&train)?
    } else {
        Standardizer::IDENTITY
    };
    for d in [&mut train, &mut val, &mut test] {
        d.set_standardizer(standardizer)?;
    }
    Ok(Splits {
        train,
        val,
        test,
        standardizer,
    })
}

/// Graphs built once; reused by every run with the same cutoff and basis.
#[derive(Debug, Clone)]
pub struct PreparedSplits {
    pub train: PreparedSet,
    pub val: PreparedSet,
    pub test: PreparedSet,
}

impl PreparedSplits {
    pub fn new(splits: &Splits, cfg: &RunConfig) -> Result<Self> {
        let (c, r) = (cfg.model.cutoff, cfg.model.n_rbf);
        Ok(Self {
            train: PreparedSet::new(&splits.train, c, r)?,
            val: PreparedSet::new(&splits.val, c, r)?,
            test: PreparedSet::new(&splits.test, c, r)?,
        })
    }
}

/// SHA-256 over the little-endian bytes of every parameter in canonical order.
pub fn parameter_digest(model: &Model) -> String {
    let mut h = Sha256::new();
    for v in model.flat_parameters() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: TrainOutcome,
    pub initial_digest: String,
    /// Best-validation model on the test split, physical units.
    pub test_mae: f64,
    /// Validation dispersion after the last epoch.
    pub dispersion_final: f64,
    /// Median wall time per training step, when timing was requested.
    pub step_ms: Option<f64>,
}

/// Initializes from `cfg.model`, trains, and evaluates the best-validation
/// model on the test split. `on_improve` sees every new best model.
pub fn run_training(
    cfg: &RunConfig,
    sets: &PreparedSplits,
    on_improve: &mut dyn FnMut(&Model, &EpochRecord) -> Result<(), String>,
) -> Result<RunResult> {
    if sets.train.is_empty() || sets.val.is_empty() {
        return Err(LkmError::Invalid(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let model = Model::init(cfg.model)?;
    let initial_digest = parameter_digest(&model);
    let mut durations = Vec::new();
    let mut last = Instant::now();
    let mut on_step = |_: &lkm_core::StepRecord| {
        if cfg.timing {
            let now = Instant::now();
            durations.push((now - last).as_secs_f64() * 1e3);
            last = now;
        }
    };
    let outcome = train_observed(
        model,
        &sets.train,
        &sets.val,
        &cfg.train,
        &cfg.loss,
        on_improve,
        &mut on_step,
    )?;
    let test_mae = if sets.test.is_empty() {
        f64::NAN
    } else {
        evaluate_prepared(&outcome.best_model, &sets.test)?.0
    };
    let dispersion_final = outcome
        .history
        .epochs
        .last()
        .map_or(f64::NAN, |e| e.dispersion);
    Ok(RunResult {
        outcome,
        initial_digest,
        test_mae,
        dispersion_final,
        step_ms: cfg.timing.then(|| median(&mut durations)),
    })
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `LKM_THREADS`, default 1.
pub fn thread_cap() -> usize {
    std::env::var("LKM_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Runs independent jobs on up to `threads` workers; results keep job order.
/// Each job is single-threaded and deterministic, so the thread count never
/// changes results.
pub fn run_jobs<T, F>(jobs: Vec<F>, threads: usize) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    if threads <= 1 || jobs.len() <= 1 {
        return jobs.into_iter().map(|j| j()).collect();
    }
    let n = jobs.len();
    let queue = std::sync::Mutex::new(jobs.into_iter().enumerate().collect::<Vec<_>>());
    let results = std::sync::Mutex::new((0..n).map(|_| None).collect::<Vec<Option<T>>>());
    std::thread::scope(|s| {
        for _ in 0..threads.min(n) {
            s.spawn(|| loop {
                let next = queue.lock().unwrap().pop();
                let Some((k, job)) = next else { break };
                let r = job();
                results.lock().unwrap()[k] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_cases() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn jobs_keep_order() {
        let jobs: Vec<_> = (0..7).map(|k| move || k * k).collect();
        assert_eq!(run_jobs(jobs, 3), vec![0, 1, 4, 9, 16, 25, 36]);
    }

    #[test]
    fn splits_share_train_standardizer() {
        let cfg = RunConfig {
            synthetic_count: 30,
            split: lkm_core::SplitCounts {
                train: 20,
                val: 5,
                test: None,
            },
            ..RunConfig::default()
        };
        let ds = load_dataset(&cfg).unwrap();
        let s = make_splits(&cfg, &ds).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (20, 5, 5));
        assert_eq!(
            s.test.standardizer(),
            Some(fit_standardizer(&s.train).unwrap())
        );
    }
}
