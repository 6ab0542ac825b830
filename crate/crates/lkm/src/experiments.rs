//! Desk-scale versions of the analysis procedures: γ sweeps, layer-count
//! ablations, training-overhead measurement and recomputation of published
//! ΔE_mae values.
//!
//! Runs that are compared against each other share a seed, and the harness
//! checks that they start from bitwise-identical parameters by comparing
//! initial-parameter digests.

use std::fmt::Write as _;
use std::time::Instant;

use lkm_core::lkm::DEFAULT_GAMMA;
use lkm_core::{delta_emae, LossConfig, Model, TrainConfig, Trainer};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{LkmError, Result};
use crate::history::fmt_f64;
use crate::pipeline::{median, parameter_digest, run_jobs, thread_cap, PreparedSplits, RunResult};

pub const SCHEMA_VERSION: u32 = 1;
/// Mixing strength used by layer ablations unless told otherwise.
pub const ABLATION_GAMMA: f64 = 0.05;
/// Printed and recomputed ΔE_mae further apart than this (percentage points)
/// are flagged as rounding-inconsistent.
pub const TABLE_FLAG_PP: f64 = 0.5;
pub const MIN_OVERHEAD_STEPS: usize = 100;

pub const REPORT_HEADER: &str =
    "task,gamma,n_layers,seed,mae_base,mae_lkm,delta_pct,dispersion_final,step_ms_base,step_ms_lkm";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub task: String,
    pub gamma: f64,
    pub n_layers: usize,
    pub seed: u64,
    pub mae_base: f64,
    pub mae_lkm: f64,
    pub delta_pct: f64,
    /// Validation dispersion after the last epoch of the γ run.
    pub dispersion_final: f64,
    /// Dispersion of the paired γ = 0 run, for the collapse comparison.
    pub dispersion_base: f64,
    pub step_ms_base: Option<f64>,
    pub step_ms_lkm: Option<f64>,
    pub initial_digest: String,
}

/// Mean and range of ΔE_mae over seeds for one setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub gamma: f64,
    pub n_layers: usize,
    pub delta_mean: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: String,
    pub config_digest: String,
    pub rows: Vec<ReportRow>,
    pub seed_summaries: Vec<SeedSummary>,
    /// Sweeps only: whether the seed-averaged E_mae over γ has its minimum
    /// strictly inside the sweep range.
    pub interior_minimum: Option<bool>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.task,
                fmt_f64(r.gamma),
                r.n_layers,
                r.seed,
                fmt_f64(r.mae_base),
                fmt_f64(r.mae_lkm),
                fmt_f64(r.delta_pct),
                fmt_f64(r.dispersion_final),
                opt(r.step_ms_base),
                opt(r.step_ms_lkm)
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// One finished run plus what identifies it inside an experiment.
#[derive(Debug, Clone)]
pub struct LabelledRun {
    pub gamma: f64,
    pub n_layers: usize,
    pub seed: u64,
    pub result: RunResult,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub runs: Vec<LabelledRun>,
}

fn run_all(
    cfg: &RunConfig,
    sets: &PreparedSplits,
    specs: Vec<(f64, usize, u64)>,
) -> Result<Vec<LabelledRun>> {
    let jobs: Vec<_> = specs
        .into_iter()
        .map(|(gamma, n_layers, seed)| {
            let mut c = cfg.with_gamma(gamma);
            c.model.n_layers = n_layers;
            c.model.seed = seed;
            c.train.seed = seed;
            move || {
                crate::pipeline::run_training(&c, sets, &mut |_, _| Ok(())).map(|result| {
                    LabelledRun {
                        gamma,
                        n_layers,
                        seed,
                        result,
                    }
                })
            }
        })
        .collect();
    run_jobs(jobs, thread_cap()).into_iter().collect()
}

fn paired_row(task: &str, base: &LabelledRun, lkm: &LabelledRun) -> Result<ReportRow> {
    if base.result.initial_digest != lkm.result.initial_digest {
        return Err(LkmError::Invalid(format!(
            "paired runs (gamma {} vs {}, m={}, seed {}) start from different parameters",
            base.gamma, lkm.gamma, lkm.n_layers, lkm.seed
        )));
    }
    Ok(ReportRow {
        task: task.to_string(),
        gamma: lkm.gamma,
        n_layers: lkm.n_layers,
        seed: lkm.seed,
        mae_base: base.result.test_mae,
        mae_lkm: lkm.result.test_mae,
        delta_pct: delta_emae(lkm.result.test_mae, base.result.test_mae)?,
        dispersion_final: lkm.result.dispersion_final,
        dispersion_base: base.result.dispersion_final,
        step_ms_base: base.result.step_ms,
        step_ms_lkm: lkm.result.step_ms,
        initial_digest: lkm.result.initial_digest.clone(),
    })
}

fn summarize(rows: &[ReportRow]) -> Vec<SeedSummary> {
    let mut keys: Vec<(f64, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.gamma, r.n_layers)) {
            keys.push((r.gamma, r.n_layers));
        }
    }
    keys.into_iter()
        .map(|(gamma, n_layers)| {
            let d: Vec<f64> = rows
                .iter()
                .filter(|r| r.gamma == gamma && r.n_layers == n_layers)
                .map(|r| r.delta_pct)
                .collect();
            SeedSummary {
                gamma,
                n_layers,
                delta_mean: d.iter().sum::<f64>() / d.len() as f64,
                delta_min: d.iter().copied().fold(f64::INFINITY, f64::min),
                delta_max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(LkmError::Invalid("at least one seed is required".into()));
    }
    Ok(())
}

/// The seeds used by single-seed (`[seed]`) or three-seed mode.
pub fn seeds_for(cfg: &RunConfig, three: bool) -> Vec<u64> {
    let s = cfg.model.seed;
    if three {
        vec![s, s.wrapping_add(1), s.wrapping_add(2)]
    } else {
        vec![s]
    }
}

/// One model per (γ, seed) with everything else fixed. `gammas` must contain 0,
/// which is the baseline for every row.
pub fn gamma_sweep(
    cfg: &RunConfig,
    sets: &PreparedSplits,
    gammas: &[f64],
    seeds: &[u64],
) -> Result<ExperimentOutput> {
    if gammas.is_empty() {
        return Err(LkmError::Invalid("gamma list is empty".into()));
    }
    for &g in gammas {
        LossConfig::with_gamma(g).validate()?;
    }
    if !gammas.contains(&0.0) {
        return Err(LkmError::Invalid(
            "gamma list must include 0 as the baseline".into(),
        ));
    }
    check_seeds(seeds)?;
    let n_layers = cfg.model.n_layers;
    let specs = seeds
        .iter()
        .flat_map(|&s| gammas.iter().map(move |&g| (g, n_layers, s)))
        .collect();
    let runs = run_all(cfg, sets, specs)?;
    let mut rows = Vec::new();
    for &seed in seeds {
        let base = runs
            .iter()
            .find(|r| r.seed == seed && r.gamma == 0.0)
            .expect("baseline run present");
        for run in runs.iter().filter(|r| r.seed == seed) {
            rows.push(paired_row(&cfg.target, base, run)?);
        }
    }
    let interior_minimum = (gammas.len() >= 3).then(|| {
        let mut sorted: Vec<f64> = gammas.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let curve: Vec<f64> = sorted
            .iter()
            .map(|&g| {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.gamma == g)
                    .map(|r| r.mae_lkm)
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        let best = curve
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap();
        best > 0 && best + 1 < curve.len()
    });
    Ok(ExperimentOutput {
        report: ExperimentReport {
            schema_version: SCHEMA_VERSION,
            kind: "gamma_sweep".into(),
            config_digest: cfg.digest(),
            seed_summaries: summarize(&rows),
            rows,
            interior_minimum,
        },
        runs,
    })
}

/// Paired base (γ = 0) and LKM runs for every layer count.
pub fn layer_ablation(
    cfg: &RunConfig,
    sets: &PreparedSplits,
    counts: &[usize],
    gamma: f64,
    seeds: &[u64],
) -> Result<ExperimentOutput> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(LkmError::Invalid(
            "layer counts must be non-empty and each >= 1".into(),
        ));
    }
    LossConfig::with_gamma(gamma).validate()?;
    check_seeds(seeds)?;
    for &m in counts {
        let mut model = cfg.model;
        model.n_layers = m;
        model.validate()?;
    }
    let specs = seeds
        .iter()
        .flat_map(|&s| {
            counts
                .iter()
                .flat_map(move |&m| [(0.0, m, s), (gamma, m, s)])
        })
        .collect();
    let runs = run_all(cfg, sets, specs)?;
    let rows = runs
        .chunks(2)
        .map(|pair| paired_row(&cfg.target, &pair[0], &pair[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput {
        report: ExperimentReport {
            schema_version: SCHEMA_VERSION,
            kind: "layer_ablation".into(),
            config_digest: cfg.digest(),
            seed_summaries: summarize(&rows),
            rows,
            interior_minimum: None,
        },
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadReport {
    pub schema_version: u32,
    pub steps: usize,
    pub gamma: f64,
    pub base_step_ms: f64,
    pub lkm_step_ms: f64,
    pub ratio: f64,
    /// Per-molecule prediction time of the two trained models. Prediction
    /// never sees the loss configuration, so both run the same code.
    pub base_inference_ms: f64,
    pub lkm_inference_ms: f64,
}

/// Median training-step time with and without the mixing term, interleaving
/// the two so drift in machine load hits both equally. Uses `cfg.loss.gamma`
/// when positive, otherwise the default mixing strength.
pub fn overhead_probe(cfg: &RunConfig, sets: &PreparedSplits) -> Result<OverheadReport> {
    let steps = cfg.overhead_steps;
    if steps < MIN_OVERHEAD_STEPS {
        return Err(LkmError::Invalid(format!(
            "overhead probe needs at least {MIN_OVERHEAD_STEPS} steps, got {steps}"
        )));
    }
    if sets.train.is_empty() {
        return Err(LkmError::Invalid("training split is empty".into()));
    }
    let gamma = if cfg.loss.gamma > 0.0 {
        cfg.loss.gamma
    } else {
        DEFAULT_GAMMA
    };
    let per_epoch = sets.train.len().div_ceil(cfg.train.batch_size.max(1));
    let epochs = steps.div_ceil(per_epoch);
    let train_cfg = TrainConfig {
        epochs,
        warmup_steps: cfg.train.warmup_steps.min(epochs * per_epoch).max(1),
        ..cfg.train
    };
    let model = Model::init(cfg.model)?;
    let n = sets.train.len();
    let mut base = Trainer::new(
        model.clone(),
        &train_cfg,
        LossConfig {
            gamma: 0.0,
            ..cfg.loss
        },
        n,
    )?;
    let mut lkm = Trainer::new(model, &train_cfg, LossConfig { gamma, ..cfg.loss }, n)?;
    let order: Vec<usize> = (0..n).collect();
    let batches: Vec<&[usize]> = order.chunks(cfg.train.batch_size).collect();
    let (mut tb, mut tl) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    for k in 0..steps {
        let batch = batches[k % batches.len()];
        // alternate which one goes first
        for first in [k % 2 == 0, k % 2 != 0] {
            let t = Instant::now();
            if first {
                base.step(&sets.train, batch)?;
                tb.push(t.elapsed().as_secs_f64() * 1e3);
            } else {
                lkm.step(&sets.train, batch)?;
                tl.push(t.elapsed().as_secs_f64() * 1e3);
            }
        }
    }
    let base_step_ms = median(&mut tb);
    let lkm_step_ms = median(&mut tl);
    let infer = |m: &Model| -> Result<f64> {
        let mut times = Vec::new();
        for g in sets.val.graphs.iter().chain(&sets.train.graphs).take(200) {
            let t = Instant::now();
            std::hint::black_box(m.predict(g)?);
            times.push(t.elapsed().as_secs_f64() * 1e3);
        }
        Ok(median(&mut times))
    };
    Ok(OverheadReport {
        schema_version: SCHEMA_VERSION,
        steps,
        gamma,
        base_step_ms,
        lkm_step_ms,
        ratio: lkm_step_ms / base_step_ms,
        base_inference_ms: infer(base.model())?,
        lkm_inference_ms: infer(lkm.model())?,
    })
}

pub const TABLE_HEADER: &str = "table,model,task,base,lkm,printed_delta_pct";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRowCheck {
    pub table: String,
    pub model: String,
    pub task: String,
    pub base: f64,
    pub lkm: f64,
    pub printed_delta_pct: f64,
    pub recomputed_delta_pct: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCheck {
    pub schema_version: u32,
    pub threshold_pp: f64,
    pub rows: Vec<TableRowCheck>,
}

impl TableCheck {
    pub fn flagged(&self) -> impl Iterator<Item = &TableRowCheck> {
        self.rows.iter().filter(|r| r.flagged)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "table,model,task,base,lkm,printed_delta_pct,recomputed_delta_pct,flagged\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.4},{}",
                r.table,
                r.model,
                r.task,
                r.base,
                r.lkm,
                r.printed_delta_pct,
                r.recomputed_delta_pct,
                r.flagged
            )
            .unwrap();
        }
        out
    }
}

/// Recomputes ΔE_mae for every published (base, LKM, printed Δ%) row and flags
/// rows whose printed value is more than [`TABLE_FLAG_PP`] away.
pub fn verify_paper_tables(csv: &str) -> Result<TableCheck> {
    let mut lines = csv.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TABLE_HEADER => {}
        _ => {
            return Err(LkmError::Table {
                line: 1,
                message: format!("expected header '{TABLE_HEADER}'"),
            })
        }
    }
    let mut rows = Vec::new();
    for (k, line) in lines {
        let line_no = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(LkmError::Table {
                line: line_no,
                message: format!("expected 6 columns, found {}", cols.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| LkmError::Table {
                    line: line_no,
                    message: format!("malformed number '{s}'"),
                })
        };
        let (base, lkm, printed) = (num(cols[3])?, num(cols[4])?, num(cols[5])?);
        let recomputed = delta_emae(lkm, base).map_err(|e| LkmError::Table {
            line: line_no,
            message: e.to_string(),
        })?;
        rows.push(TableRowCheck {
            table: cols[0].into(),
            model: cols[1].into(),
            task: cols[2].into(),
            base,
            lkm,
            printed_delta_pct: printed,
            recomputed_delta_pct: recomputed,
            flagged: (recomputed - printed).abs() > TABLE_FLAG_PP,
        });
    }
    Ok(TableCheck {
        schema_version: SCHEMA_VERSION,
        threshold_pp: TABLE_FLAG_PP,
        rows,
    })
}

/// Digest of the parameters a config initializes to.
pub fn initial_digest(cfg: &RunConfig) -> Result<String> {
    Ok(parameter_digest(&Model::init(cfg.model)?))
}

/// Total parameter count of a config's model; the loss config plays no part.
pub fn count_parameters(cfg: &RunConfig) -> Result<usize> {
    Ok(Model::init(cfg.model)?.count_parameters())
}
