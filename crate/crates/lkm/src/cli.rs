//! Command-line front end.
//!
//! Every command resolves an effective [`RunConfig`] (config file, then flags,
//! then trailing `key=value` overrides), echoes it, and writes its outputs
//! under `<out>/<unix-time>-<digest>-<command>/` together with the config and
//! a version stamp.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lkm_core::{
    build_graph, check_model_loss, check_ops, evaluate_prepared, Model, Molecule, PreparedSet,
};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{LkmError, Result};
use crate::experiments::{self, ABLATION_GAMMA};
use crate::history;
use crate::pipeline::{self, PreparedSplits};
use crate::xyz;

/// Published ΔE_mae triples shipped with the crate.
pub const PAPER_TABLES: &str = include_str!("../data/paper_tables.csv");

/// Relative tolerance and step used by `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPSILON: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(
    name = "lkm",
    version,
    about = "Layer-to-layer knowledge mixing on a deep-supervised MPNN"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic dataset as extended XYZ.
    GenData(Common),
    /// Train one model and write its history and checkpoints.
    Train(Common),
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train one model per γ (the list must include 0).
    SweepGamma(Common),
    /// Train base/LKM pairs for several layer counts.
    AblateLayers {
        #[command(flatten)]
        common: Common,
        /// Layer counts, comma separated.
        #[arg(long, default_value = "2,4,6")]
        counts: String,
    },
    /// Finite-difference check of every op and of the full training-loss gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Check the configured model instead of the small fixture model.
        /// Gradients near 1e-8 then sit at finite-difference noise.
        #[arg(long)]
        full: bool,
    },
    /// Recompute published ΔE_mae values and flag rounding-inconsistent rows.
    VerifyTables {
        #[command(flatten)]
        common: Common,
        /// Table CSV; defaults to the bundled fixture.
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Measure per-step training cost with and without the mixing term.
    Overhead(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file, or `default` for the built-in defaults.
    #[arg(long, default_value = "default")]
    pub config: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Comma-separated γ values for sweeps.
    #[arg(long, default_value = "0,0.02,100")]
    pub gammas: String,
    /// Extended-XYZ dataset; `synthetic` generates one in memory.
    #[arg(long)]
    pub data: Option<String>,
    /// Parent directory for run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Repeat paired runs over three consecutive seeds.
    #[arg(long)]
    pub three_seeds: bool,
    /// `key=value` config overrides, applied last.
    pub overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.set("seed", &s.to_string())?;
        }
        if let Some(g) = self.gamma {
            cfg.set("gamma", &g.to_string())?;
        }
        if let Some(m) = self.layers {
            cfg.set("n_layers", &m.to_string())?;
        }
        if let Some(d) = &self.data {
            cfg.set("data", d)?;
        }
        cfg.apply_overrides(&self.overrides)?;
        cfg.model.validate()?;
        cfg.loss.validate()?;
        Ok(cfg)
    }
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| LkmError::Invalid(format!("bad {what} entry '{v}'")))
        })
        .collect()
}

pub fn version_string() -> String {
    let mut v = format!("lkm {}\n", env!("CARGO_PKG_VERSION"));
    if let Ok(out) = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
    {
        if out.status.success() {
            v.push_str(&format!("git {}", String::from_utf8_lossy(&out.stdout)));
        }
    }
    v
}

struct RunDir {
    path: PathBuf,
}

impl RunDir {
    fn create(parent: &Path, cfg: &RunConfig, command: &str) -> Result<Self> {
        fs::create_dir_all(parent).map_err(|e| LkmError::io(parent, e))?;
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let stem = format!("{secs}-{}-{command}", cfg.short_digest());
        let mut path = parent.join(&stem);
        let mut k = 1;
        while path.exists() {
            path = parent.join(format!("{stem}.{k}"));
            k += 1;
        }
        fs::create_dir(&path).map_err(|e| LkmError::io(&path, e))?;
        let dir = Self { path };
        dir.write("config.txt", &cfg.render())?;
        dir.write("version.txt", &version_string())?;
        Ok(dir)
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let p = self.file(name);
        fs::write(&p, contents).map_err(|e| LkmError::io(&p, e))
    }
}

fn prepare(cfg: &RunConfig) -> Result<(pipeline::Splits, PreparedSplits)> {
    let dataset = pipeline::load_dataset(cfg)?;
    let splits = pipeline::make_splits(cfg, &dataset)?;
    let sets = PreparedSplits::new(&splits, cfg)?;
    Ok((splits, sets))
}

fn gen_data(c: &Common) -> Result<()> {
    let cfg = c.resolve()?;
    let dataset = pipeline::load_dataset(&cfg)?;
    let dir = RunDir::create(&c.out, &cfg, "gen-data")?;
    dir.write(
        "dataset.xyz",
        &xyz::write_extended_xyz(dataset.molecules())?,
    )?;
    println!(
        "wrote {} molecules to {}",
        dataset.len(),
        dir.file("dataset.xyz").display()
    );
    Ok(())
}

fn train(c: &Common) -> Result<()> {
    let cfg = c.resolve()?;
    let (splits, sets) = prepare(&cfg)?;
    let dir = RunDir::create(&c.out, &cfg, "train")?;
    let best_path = dir.file("best.ckpt");
    let standardizer = splits.standardizer;
    let result = pipeline::run_training(&cfg, &sets, &mut |model, rec| {
        checkpoint::save(&best_path, model, standardizer).map_err(|e| e.to_string())?;
        println!(
            "epoch {:>4}  val_mae {:.6}  dispersion {:.6}  (best)",
            rec.epoch, rec.val_mae, rec.dispersion
        );
        Ok(())
    })?;
    checkpoint::save(&dir.file("final.ckpt"), &result.outcome.model, standardizer)?;
    dir.write("steps.csv", &history::steps_csv(&result.outcome.history))?;
    dir.write("epochs.csv", &history::epochs_csv(&result.outcome.history))?;
    let summary = serde_json::json!({
        "schema_version": experiments::SCHEMA_VERSION,
        "config_digest": cfg.digest(),
        "initial_digest": result.initial_digest,
        "best_epoch": result.outcome.best_epoch,
        "best_val_mae": result.outcome.best_val_mae,
        "test_mae": result.test_mae,
        "dispersion_final": result.dispersion_final,
        "n_parameters": result.outcome.model.count_parameters(),
    });
    dir.write(
        "summary.json",
        &(serde_json::to_string_pretty(&summary).unwrap() + "\n"),
    )?;
    println!(
        "best epoch {}  val_mae {:.6}  test_mae {:.6}",
        result.outcome.best_epoch, result.outcome.best_val_mae, result.test_mae
    );
    println!("run directory {}", dir.path.display());
    Ok(())
}

fn evaluate(c: &Common, ckpt: &Path) -> Result<()> {
    let cfg = c.resolve()?;
    let loaded = checkpoint::load(ckpt)?;
    let dataset = pipeline::load_dataset(&cfg)?;
    let mut splits = pipeline::make_splits(&cfg, &dataset)?;
    let mcfg = loaded.model.config();
    let mut out = Vec::new();
    for (name, set) in [("val", &mut splits.val), ("test", &mut splits.test)] {
        if set.is_empty() {
            continue;
        }
        set.set_standardizer(loaded.standardizer)?;
        let prepared = PreparedSet::new(set, mcfg.cutoff, mcfg.n_rbf)?;
        let (mae, dispersion) = evaluate_prepared(&loaded.model, &prepared)?;
        println!("{name}_mae {mae:.16e}  {name}_dispersion {dispersion:.16e}");
        out.push((name, mae, dispersion));
    }
    let dir = RunDir::create(&c.out, &cfg, "evaluate")?;
    let mut csv = String::from("split,mae,dispersion\n");
    for (name, mae, d) in out {
        csv.push_str(&format!(
            "{name},{},{}\n",
            history::fmt_f64(mae),
            history::fmt_f64(d)
        ));
    }
    dir.write("evaluation.csv", &csv)?;
    Ok(())
}

fn write_experiment(
    dir: &RunDir,
    out: &experiments::ExperimentOutput,
    standardizer: lkm_core::Standardizer,
) -> Result<()> {
    dir.write("report.csv", &out.report.to_csv())?;
    dir.write("report.json", &out.report.to_json())?;
    for run in &out.runs {
        let stem = format!("m{}_g{}_s{}", run.n_layers, run.gamma, run.seed);
        dir.write(
            &format!("{stem}_steps.csv"),
            &history::steps_csv(&run.result.outcome.history),
        )?;
        dir.write(
            &format!("{stem}_epochs.csv"),
            &history::epochs_csv(&run.result.outcome.history),
        )?;
        let p = dir.file(&format!("{stem}_best.ckpt"));
        checkpoint::save(&p, &run.result.outcome.best_model, standardizer)?;
    }
    print!("{}", out.report.to_csv());
    println!("run directory {}", dir.path.display());
    Ok(())
}

fn sweep_gamma(c: &Common) -> Result<()> {
    let cfg = c.resolve()?;
    let gammas: Vec<f64> = parse_list("gamma", &c.gammas)?;
    let (splits, sets) = prepare(&cfg)?;
    let seeds = experiments::seeds_for(&cfg, c.three_seeds);
    let out = experiments::gamma_sweep(&cfg, &sets, &gammas, &seeds)?;
    let dir = RunDir::create(&c.out, &cfg, "sweep-gamma")?;
    write_experiment(&dir, &out, splits.standardizer)?;
    Ok(())
}

fn ablate_layers(c: &Common, counts: &str) -> Result<()> {
    let cfg = c.resolve()?;
    let counts: Vec<usize> = parse_list("layer count", counts)?;
    let gamma = c.gamma.unwrap_or(ABLATION_GAMMA);
    let (splits, sets) = prepare(&cfg)?;
    let seeds = experiments::seeds_for(&cfg, c.three_seeds);
    let out = experiments::layer_ablation(&cfg, &sets, &counts, gamma, &seeds)?;
    let dir = RunDir::create(&c.out, &cfg, "ablate-layers")?;
    write_experiment(&dir, &out, splits.standardizer)?;
    Ok(())
}

/// Three atoms whose pair distances (1.1, 3.3, 4.3 Å) lie within about 1.2 Å
/// of every basis centre, so no basis row has a gradient below finite-difference
/// noise.
pub fn gradcheck_molecule() -> Molecule {
    let mut targets = std::collections::BTreeMap::new();
    targets.insert("energy".to_string(), 0.3);
    let x = (3.3f64.powi(2) - 4.3f64.powi(2) + 1.1f64.powi(2)) / 2.2;
    let y = (3.3f64.powi(2) - x * x).sqrt();
    Molecule::new(
        vec![6, 1, 8],
        vec![[0.0, 0.0, 0.0], [1.1, 0.0, 0.0], [x, y, 0.0]],
        targets,
    )
    .expect("fixture is a valid molecule")
}

/// Layer count, width and basis size of the default gradcheck model. Three
/// pair distances cannot cover sixteen narrow basis functions; the uncovered
/// rows get gradients near 1e-9, where one ulp of loss round-off already
/// exceeds the relative tolerance.
pub const GRADCHECK_SHAPE: (usize, usize, usize) = (2, 8, 6);

fn gradcheck(c: &Common, full: bool) -> Result<bool> {
    let mut cfg = c.resolve()?;
    if !full {
        (cfg.model.n_layers, cfg.model.embedding_dim, cfg.model.n_rbf) = GRADCHECK_SHAPE;
    }
    println!(
        "model n_layers={} embedding_dim={} n_rbf={}",
        cfg.model.n_layers, cfg.model.embedding_dim, cfg.model.n_rbf
    );
    let model = Model::init(cfg.model)?;
    let graph = build_graph(&gradcheck_molecule(), cfg.model.cutoff, cfg.model.n_rbf)?;
    // exercise the mixing term even when the config trains without it
    let mut loss = cfg.loss;
    if loss.gamma == 0.0 {
        loss.gamma = lkm_core::lkm::DEFAULT_GAMMA;
    }
    let mut all_passed = true;
    for c in check_ops(cfg.model.seed, GRADCHECK_EPSILON, GRADCHECK_TOLERANCE)? {
        println!(
            "op {:<18} max relative error {:.3e}",
            c.op, c.report.max_relative_error
        );
        all_passed &= c.report.passed();
    }
    let report = check_model_loss(
        &model,
        &graph,
        0.3,
        &loss,
        GRADCHECK_EPSILON,
        GRADCHECK_TOLERANCE,
    )?;
    all_passed &= report.passed();
    println!(
        "parameters checked {}  max relative error {:.3e}  tolerance {:.0e}",
        report.per_parameter_errors.len(),
        report.max_relative_error,
        report.tolerance
    );
    if let Some(w) = report.worst() {
        let name = &cfg.model.parameter_layout()[w.tensor].0;
        println!(
            "worst {name}[{}]  analytic {:.10e}  numeric {:.10e}",
            w.index, w.analytic, w.numeric
        );
    }
    println!("{}", if all_passed { "PASS" } else { "FAIL" });
    Ok(all_passed)
}

fn verify_tables(c: &Common, tables: Option<&Path>) -> Result<()> {
    let cfg = c.resolve()?;
    let text = match tables {
        Some(p) => fs::read_to_string(p).map_err(|e| LkmError::io(p, e))?,
        None => PAPER_TABLES.to_string(),
    };
    let check = experiments::verify_paper_tables(&text)?;
    for r in check.flagged() {
        println!(
            "flagged {} {} {}: printed {:+.1}%  recomputed {:+.2}%",
            r.table, r.model, r.task, r.printed_delta_pct, r.recomputed_delta_pct
        );
    }
    println!(
        "{} rows, {} flagged",
        check.rows.len(),
        check.flagged().count()
    );
    let dir = RunDir::create(&c.out, &cfg, "verify-tables")?;
    dir.write("tables.csv", &check.to_csv())?;
    Ok(())
}

fn overhead(c: &Common) -> Result<()> {
    let cfg = c.resolve()?;
    let (_, sets) = prepare(&cfg)?;
    let report = experiments::overhead_probe(&cfg, &sets)?;
    println!(
        "steps {}  base {:.3} ms  lkm {:.3} ms  ratio {:.4}  inference {:.3} / {:.3} ms",
        report.steps,
        report.base_step_ms,
        report.lkm_step_ms,
        report.ratio,
        report.base_inference_ms,
        report.lkm_inference_ms
    );
    let dir = RunDir::create(&c.out, &cfg, "overhead")?;
    dir.write(
        "overhead.json",
        &(serde_json::to_string_pretty(&report).unwrap() + "\n"),
    )?;
    Ok(())
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::GenData(c) | Command::Train(c) | Command::SweepGamma(c) | Command::Overhead(c) => {
            c
        }
        Command::Evaluate { common, .. }
        | Command::Gradcheck { common, .. }
        | Command::AblateLayers { common, .. }
        | Command::VerifyTables { common, .. } => common,
    }
}

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 on success, 1 on a failed command, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let c = common(&cli.command);
    match c.resolve() {
        Ok(cfg) => {
            println!("seed = {}", cfg.model.seed);
            print!("{}", cfg.render());
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    }
    let result = match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::Train(c) => train(c),
        Command::Evaluate { common, checkpoint } => evaluate(common, checkpoint),
        Command::SweepGamma(c) => sweep_gamma(c),
        Command::AblateLayers { common, counts } => ablate_layers(common, counts),
        Command::Gradcheck { common, full } => match gradcheck(common, *full) {
            Ok(true) => Ok(()),
            Ok(false) => return 1,
            Err(e) => Err(e),
        },
        Command::VerifyTables { common, tables } => verify_tables(common, tables.as_deref()),
        Command::Overhead(c) => overhead(c),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
