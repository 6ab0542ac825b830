//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Run with
//! `cargo test -p lkm --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use lkm::checkpoint;
use lkm::cli::{
    gradcheck_molecule, GRADCHECK_EPSILON, GRADCHECK_SHAPE, GRADCHECK_TOLERANCE, PAPER_TABLES,
};
use lkm::experiments::{
    count_parameters, gamma_sweep, overhead_probe, verify_paper_tables, ExperimentOutput,
};
use lkm::pipeline::{load_dataset, make_splits, PreparedSplits, Splits};
use lkm::RunConfig;
use lkm_core::lkm::kd_loss_with;
use lkm_core::synthetic::generate;
use lkm_core::{
    adam_step, build_graph, check_model_loss, check_ops, delta_emae, evaluate_prepared, kd_loss,
    AdamConfig, AdamState, LayerEmbeddingSet, LossConfig, Model, ModelConfig, MolecularGraph,
    OpKind, Schedule, Tape, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances, pinned here.
const TABLE_PP: f64 = 0.05;
const MAX_FLAGGED_ROWS: usize = 3;
const KD_HAND_TOL: f64 = 1e-12;
const KD_SETS: usize = 1000;
const KD_REL_TOL: f64 = 1e-12;
const KD_SCALE_REL_TOL: f64 = 1e-10;
const KD_ROW_SUM_TOL: f64 = 1e-10;
const KD_COLLAPSED_MAX: f64 = 1e-24;
const OVERHEAD_MAX_RATIO: f64 = 1.15;
const LEARNING_MAX_RATIO: f64 = 0.2;
const COLLAPSE_FACTOR: f64 = 10.0;
const LR_CONTINUITY_TOL: f64 = 1e-12;
const INVARIANCE_TOL: f64 = 1e-9;
const INVARIANCE_MOLECULES: usize = 50;
const SWEEP_GAMMAS: [f64; 3] = [0.0, 0.02, 100.0];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn bundled_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic500.xyz");
    cfg.set("data", path.to_str().unwrap()).unwrap();
    cfg
}

fn prepare(cfg: &RunConfig) -> Result<(Splits, PreparedSplits), String> {
    let splits = make_splits(cfg, &load_dataset(cfg).map_err(e)?).map_err(e)?;
    let sets = PreparedSplits::new(&splits, cfg).map_err(e)?;
    Ok((splits, sets))
}

fn table_arithmetic() -> Outcome {
    let cases = [((0.0322, 0.0384), -16.1), ((0.0262, 0.0267), -1.9)];
    let mut got = Vec::new();
    for ((lkm, base), printed) in cases {
        let d = delta_emae(lkm, base).map_err(e)?;
        ensure((d - printed).abs() <= TABLE_PP, || {
            format!("delta({lkm}, {base}) = {d:.4}, printed {printed}")
        })?;
        got.push(format!("{d:.3}"));
    }
    let check = verify_paper_tables(PAPER_TABLES).map_err(e)?;
    let flagged: Vec<String> = check
        .flagged()
        .map(|r| format!("{} {} {}", r.table, r.model, r.task))
        .collect();
    ensure(flagged.len() <= MAX_FLAGGED_ROWS, || {
        format!("{} rows flagged: {flagged:?}", flagged.len())
    })?;
    let chignolin = check.flagged().any(|r| {
        r.model == "PAMNet" && r.task == "Chignolin Energy" && r.printed_delta_pct == -22.9
    });
    ensure(chignolin, || {
        format!("PAMNet chignolin row not flagged: {flagged:?}")
    })?;
    Ok(format!(
        "deltas [{}]; {} of {} rows flagged: {}",
        got.join(", "),
        flagged.len(),
        check.rows.len(),
        flagged.join("; ")
    ))
}

fn kd_value(t: &Tensor) -> Result<f64, String> {
    let mut tape = Tape::new();
    let set = LayerEmbeddingSet::from_tensor(&mut tape, t.clone(), false).map_err(e)?;
    let l = kd_loss(&mut tape, &set).map_err(e)?;
    Ok(tape.item(l))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn kd_exactness() -> Outcome {
    let two = kd_value(&Tensor::new(vec![1, 2, 1], vec![0.0, 2.0]).unwrap())?;
    let three = kd_value(&Tensor::new(vec![1, 3, 1], vec![0.0, 1.0, 2.0]).unwrap())?;
    ensure((two - 1.0).abs() <= KD_HAND_TOL, || {
        format!("m=2 hand case gave {two}")
    })?;
    ensure((three - 2.0 / 3.0).abs() <= KD_HAND_TOL, || {
        format!("m=3 hand case gave {three}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst_row_sum = 0.0f64;
    for case in 0..KD_SETS {
        let (n, m, d) = (
            rng.gen_range(1..7),
            rng.gen_range(2..7),
            rng.gen_range(1..6),
        );
        let v: Vec<f64> = (0..n * m * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let at = |v: &[f64], i: usize, j: usize, k: usize| v[(i * m + j) * d + k];
        let t = Tensor::new(vec![n, m, d], v.clone()).unwrap();
        let kd = kd_value(&t)?;
        let fail = |what: &str| format!("set {case} (n={n}, m={m}, d={d}): {what}");
        ensure(kd > 0.0, || fail(&format!("spread set gave {kd}")))?;

        // collapse every atom onto its first layer
        let mut collapsed = v.clone();
        for i in 0..n {
            for j in 1..m {
                for k in 0..d {
                    collapsed[(i * m + j) * d + k] = at(&v, i, 0, k);
                }
            }
        }
        let kc = kd_value(&Tensor::new(vec![n, m, d], collapsed).unwrap())?;
        ensure((0.0..=KD_COLLAPSED_MAX).contains(&kc), || {
            fail(&format!("collapsed set gave {kc}"))
        })?;

        let atoms = shuffled(&mut rng, n);
        let layers = shuffled(&mut rng, m);
        let mut moved = Vec::with_capacity(v.len());
        for &i in &atoms {
            for &j in &layers {
                for k in 0..d {
                    moved.push(at(&v, i, j, k));
                }
            }
        }
        let kp = kd_value(&Tensor::new(vec![n, m, d], moved).unwrap())?;
        ensure(rel_close(kd, kp, KD_REL_TOL), || {
            fail(&format!("permuted {kp} vs {kd}"))
        })?;

        let c = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.1..10.0);
        let ks = kd_value(&Tensor::new(vec![n, m, d], v.iter().map(|x| c * x).collect()).unwrap())?;
        ensure(rel_close(ks, c * c * kd, KD_SCALE_REL_TOL), || {
            fail(&format!("scaled by {c}: {ks} vs {}", c * c * kd))
        })?;

        let mut tape = Tape::new();
        let set = LayerEmbeddingSet::from_tensor(&mut tape, t, true).map_err(e)?;
        let l = kd_loss_with(&mut tape, &set, false).map_err(e)?;
        let grads = tape.backward(l).map_err(e)?;
        let g = grads
            .get(set.embeddings)
            .ok_or("no gradient for embeddings")?;
        for i in 0..n {
            for k in 0..d {
                let s: f64 = (0..m).map(|j| at(g, i, j, k)).sum();
                worst_row_sum = worst_row_sum.max(s.abs());
            }
        }
        ensure(worst_row_sum < KD_ROW_SUM_TOL, || {
            fail(&format!("gradient row sum {worst_row_sum:e}"))
        })?;
    }
    Ok(format!("hand cases {two}, {three:.15}; {KD_SETS} random sets, worst gradient row sum {worst_row_sum:.1e}"))
}

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        order.swap(k, rng.gen_range(0..=k));
    }
    order
}

fn gradient_correctness() -> Outcome {
    let checks = check_ops(0, GRADCHECK_EPSILON, GRADCHECK_TOLERANCE).map_err(e)?;
    let covered: Vec<&str> = checks.iter().map(|c| c.op).collect();
    ensure(covered == OpKind::NAMES, || {
        format!("ops covered {covered:?}")
    })?;
    let mut worst_op = ("", 0.0f64);
    for c in &checks {
        ensure(c.report.passed(), || {
            format!(
                "op {} max relative error {:e}",
                c.op, c.report.max_relative_error
            )
        })?;
        if c.report.max_relative_error >= worst_op.1 {
            worst_op = (c.op, c.report.max_relative_error);
        }
    }
    let (m, d, n_rbf) = GRADCHECK_SHAPE;
    ensure((m, d) == (2, 8), || format!("fixture shape {m}x{d}"))?;
    let config = ModelConfig {
        n_layers: m,
        embedding_dim: d,
        n_rbf,
        ..ModelConfig::default()
    };
    let model = Model::init(config).map_err(e)?;
    let mol = gradcheck_molecule();
    let graph = build_graph(&mol, config.cutoff, config.n_rbf).map_err(e)?;
    let report = check_model_loss(
        &model,
        &graph,
        0.3,
        &LossConfig::default(),
        GRADCHECK_EPSILON,
        GRADCHECK_TOLERANCE,
    )
    .map_err(e)?;
    ensure(mol.n_atoms() == 3 && report.passed(), || {
        format!(
            "L_total max relative error {:e} over {} parameters",
            report.max_relative_error,
            report.per_parameter_errors.len()
        )
    })?;
    Ok(format!(
        "{} ops, worst {} {:.1e}; L_total m={m} d={d} n_rbf={n_rbf}: {} parameters, max {:.1e} (eps {GRADCHECK_EPSILON:e}, tol {GRADCHECK_TOLERANCE:e})",
        checks.len(),
        worst_op.0,
        worst_op.1,
        report.per_parameter_errors.len(),
        report.max_relative_error
    ))
}

fn zero_added_parameters() -> Outcome {
    let cfg = bundled_config();
    let counts = SWEEP_GAMMAS
        .iter()
        .map(|&g| count_parameters(&cfg.with_gamma(g)).map_err(e))
        .collect::<Result<Vec<_>, _>>()?;
    ensure(counts.windows(2).all(|w| w[0] == w[1]), || {
        format!("parameter counts {counts:?}")
    })?;

    // Inference takes a model and a graph and nothing else; the mixing
    // strength lives only in the loss configuration.
    let _predict: fn(&Model, &MolecularGraph) -> lkm_core::Result<f64> = Model::predict;
    for (name, src) in [
        ("model.rs", include_str!("../../core/src/model.rs")),
        ("graph.rs", include_str!("../../core/src/graph.rs")),
    ] {
        for token in ["gamma", "LossConfig", "kd_loss", "crate::lkm"] {
            ensure(!src.contains(token), || format!("{name} mentions {token}"))?;
        }
    }

    let (_, sets) = prepare(&cfg)?;
    let r = overhead_probe(&cfg, &sets).map_err(e)?;
    let detail = format!(
        "{} parameters for gamma {:?}; step {:.2} ms vs {:.2} ms over {} steps, ratio {:.3} (max {OVERHEAD_MAX_RATIO})",
        counts[0], SWEEP_GAMMAS, r.lkm_step_ms, r.base_step_ms, r.steps, r.ratio
    );
    ensure(r.ratio <= OVERHEAD_MAX_RATIO, || detail.clone())?;
    Ok(detail)
}

struct Sweep {
    out: ExperimentOutput,
    constant_mae: f64,
    seconds: f64,
}

/// The default-config sweep over the bundled dataset, shared by the learning
/// and collapse criteria.
fn sweep() -> Result<&'static Sweep, String> {
    static SWEEP: OnceLock<Result<Sweep, String>> = OnceLock::new();
    SWEEP
        .get_or_init(|| {
            let t = Instant::now();
            let cfg = bundled_config();
            let (splits, sets) = prepare(&cfg)?;
            let mean = splits.train.targets().iter().sum::<f64>() / splits.train.len() as f64;
            let test = splits.test.targets();
            let constant_mae =
                test.iter().map(|y| (y - mean).abs()).sum::<f64>() / test.len() as f64;
            let seed = cfg.model.seed;
            let out = gamma_sweep(&cfg, &sets, &SWEEP_GAMMAS, &[seed]).map_err(e)?;
            Ok(Sweep {
                out,
                constant_mae,
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn row(s: &Sweep, gamma: f64) -> Result<&lkm::experiments::ReportRow, String> {
    s.out
        .report
        .rows
        .iter()
        .find(|r| r.gamma == gamma)
        .ok_or_else(|| format!("no row for gamma {gamma}"))
}

fn learning() -> Outcome {
    let s = sweep()?;
    let default_gamma = LossConfig::default().gamma;
    let r = row(s, default_gamma)?;
    let ratio = r.mae_lkm / s.constant_mae;
    let epochs = bundled_config().train.epochs;
    let detail = format!(
        "gamma {default_gamma}, {epochs} epochs: test E_mae {:.5} vs constant predictor {:.5}, ratio {ratio:.4} (max {LEARNING_MAX_RATIO}); sweep took {:.0} s",
        r.mae_lkm, s.constant_mae, s.seconds
    );
    ensure(ratio < LEARNING_MAX_RATIO, || detail.clone())?;
    Ok(detail)
}

fn collapse() -> Outcome {
    let s = sweep()?;
    let (zero, mild, strong) = (row(s, 0.0)?, row(s, 0.02)?, row(s, 100.0)?);
    let detail = format!(
        "dispersion {:.3e} (gamma 0) vs {:.3e} (gamma 100); E_mae {:.5} (0), {:.5} (0.02), {:.5} (100)",
        zero.dispersion_final, strong.dispersion_final, zero.mae_lkm, mild.mae_lkm, strong.mae_lkm
    );
    ensure(
        strong.dispersion_final < zero.dispersion_final / COLLAPSE_FACTOR,
        || detail.clone(),
    )?;
    ensure(strong.mae_lkm >= mild.mae_lkm, || detail.clone())?;
    Ok(detail)
}

fn single_layer_identity() -> Outcome {
    let mut cfg = bundled_config();
    cfg.model.n_layers = 1;
    cfg.model.embedding_dim = 16;
    cfg.train.epochs = 3;
    cfg.train.warmup_steps = 25;
    let (_, sets) = prepare(&cfg)?;
    let run = |g: f64| {
        lkm::pipeline::run_training(&cfg.with_gamma(g), &sets, &mut |_, _| Ok(())).map_err(e)
    };
    let base = run(0.0)?;
    let gammas = [0.02, 1.0, 100.0];
    for g in gammas {
        let other = run(g)?;
        ensure(other.outcome.history == base.outcome.history, || {
            format!("history differs at gamma {g}")
        })?;
        ensure(other.outcome.model == base.outcome.model, || {
            format!("final model differs at gamma {g}")
        })?;
    }
    let steps = base.outcome.history.steps.len();
    Ok(format!(
        "m=1, {steps} steps: histories and models bitwise equal for gamma 0 and {gammas:?}"
    ))
}

fn schedule_and_optimizer() -> Outcome {
    let cases = [
        (5e-3, 300, 2500),
        (5e-4, 300, 2500),
        (1e-2, 1, 10),
        (3e-3, 50, 50),
        (1.0, 7, 1000),
    ];
    let mut worst = 0.0f64;
    for (base, warmup, total) in cases {
        let s = Schedule::new(base, warmup, total).map_err(e)?;
        let lr = |k| s.lr_at(k).map_err(e);
        ensure(lr(0)? == 0.0, || {
            format!("{s:?}: lr_at(0) = {}", lr(0).unwrap())
        })?;
        ensure(lr(warmup)? == base, || {
            format!("{s:?}: lr_at(warmup) = {}", lr(warmup).unwrap())
        })?;
        let end = if total > warmup { 0.0 } else { base };
        ensure(lr(total)? == end, || {
            format!("{s:?}: lr_at(total) = {}", lr(total).unwrap())
        })?;
        // the warmup line continued to `warmup` meets the decay branch there
        let line = lr(warmup - 1)? + base / warmup as f64;
        worst = worst.max((line - lr(warmup)?).abs());
        ensure(worst <= LR_CONTINUITY_TOL, || {
            format!("{s:?}: jump {worst:e} at warmup")
        })?;
        ensure(s.lr_at(total + 1).is_err(), || {
            format!("{s:?}: lr_at(total + 1) accepted")
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = Model::init(ModelConfig::default()).map_err(e)?;
    let mut params = model.parameters().to_vec();
    params.push(Tensor::new(vec![3], (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap());
    let before = params.clone();
    let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
    let grads: Vec<Option<&[f64]>> = zeros.iter().map(|z| Some(z.as_slice())).collect();
    let mut state = AdamState::new(&params);
    for _ in 0..5 {
        adam_step(
            &mut params,
            &grads,
            &mut state,
            5e-3,
            &AdamConfig::default(),
        )
        .map_err(e)?;
    }
    ensure(params == before, || {
        "zero-gradient Adam steps moved parameters".into()
    })?;
    Ok(format!("{} schedules exact, worst warmup jump {worst:.1e}; 5 zero-gradient Adam steps leave {} values bitwise unchanged", cases.len(), before.iter().map(Tensor::len).sum::<usize>()))
}

fn lkm_train(out: &Path) -> Result<PathBuf, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_lkm"))
        .args(["train", "--seed", "7", "--out"])
        .arg(out)
        .args(["epochs=3", "warmup_steps=25"])
        .output()
        .map_err(e)?;
    ensure(o.status.success(), || {
        format!(
            "train exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        )
    })?;
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out)
        .map_err(e)?
        .map(|d| d.map(|d| d.path()))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    ensure(dirs.len() == 1, || {
        format!("expected one run directory, found {dirs:?}")
    })?;
    Ok(dirs.remove(0))
}

fn determinism_and_persistence() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e)?;
    let a = lkm_train(&tmp.path().join("a"))?;
    let b = lkm_train(&tmp.path().join("b"))?;
    for f in ["steps.csv", "epochs.csv", "config.txt"] {
        let (x, y) = (
            std::fs::read(a.join(f)).map_err(e)?,
            std::fs::read(b.join(f)).map_err(e)?,
        );
        ensure(x == y, || format!("{f} differs between runs"))?;
    }

    let cfg = RunConfig::load(a.join("config.txt").to_str().unwrap()).map_err(e)?;
    let loaded = checkpoint::load(&a.join("best.ckpt")).map_err(e)?;
    let mut splits = make_splits(&cfg, &load_dataset(&cfg).map_err(e)?).map_err(e)?;
    splits
        .val
        .set_standardizer(loaded.standardizer)
        .map_err(e)?;
    let mc = loaded.model.config();
    let val = lkm_core::PreparedSet::new(&splits.val, mc.cutoff, mc.n_rbf).map_err(e)?;
    let (mae, _) = evaluate_prepared(&loaded.model, &val).map_err(e)?;
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).map_err(e)?)
            .map_err(e)?;
    let recorded = summary["best_val_mae"]
        .as_f64()
        .ok_or("summary lacks best_val_mae")?;
    ensure(mae.to_bits() == recorded.to_bits(), || {
        format!("reloaded val E_mae {mae:e} vs recorded {recorded:e}")
    })?;
    let steps = std::fs::read_to_string(a.join("steps.csv"))
        .map_err(e)?
        .lines()
        .count()
        - 1;
    Ok(format!("two CLI runs ({steps} steps) wrote identical CSVs; reloaded checkpoint gives val E_mae {mae:.6} bitwise"))
}

fn rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn physical_invariances() -> Outcome {
    let config = ModelConfig::default();
    let model = Model::init(config).map_err(e)?;
    let molecules = generate(INVARIANCE_MOLECULES, 99, config.cutoff).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let predict = |m: &lkm_core::Molecule| -> Result<f64, String> {
        model
            .predict(&build_graph(m, config.cutoff, config.n_rbf).map_err(e)?)
            .map_err(e)
    };
    let mut worst = [0.0f64; 3];
    for m in molecules.molecules() {
        let p = predict(m)?;
        let r = rotation(&mut rng);
        let rotated: Vec<[f64; 3]> = m
            .positions()
            .iter()
            .map(|v| std::array::from_fn(|i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2]))
            .collect();
        let t: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-10.0..10.0));
        let translated: Vec<[f64; 3]> = m
            .positions()
            .iter()
            .map(|v| std::array::from_fn(|i| v[i] + t[i]))
            .collect();
        let moved = |pos: Vec<[f64; 3]>| {
            lkm_core::Molecule::new(m.atomic_numbers().to_vec(), pos, m.targets().clone())
                .map_err(e)
        };
        let permuted = m.permuted(&shuffled(&mut rng, m.n_atoms())).map_err(e)?;
        for (k, other) in [moved(rotated)?, moved(translated)?, permuted]
            .iter()
            .enumerate()
        {
            worst[k] = worst[k].max((predict(other)? - p).abs());
        }
    }
    let detail = format!(
        "{INVARIANCE_MOLECULES} molecules, largest change: rotation {:.1e}, translation {:.1e}, permutation {:.1e}",
        worst[0], worst[1], worst[2]
    );
    ensure(worst.iter().all(|&w| w < INVARIANCE_TOL), || detail.clone())?;
    Ok(detail)
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("table arithmetic", table_arithmetic),
        ("kd loss exactness", kd_exactness),
        ("gradient correctness", gradient_correctness),
        ("zero added parameters and overhead", zero_added_parameters),
        ("learning at desk scale", learning),
        ("collapse under strong mixing", collapse),
        ("single-layer identity", single_layer_identity),
        ("schedule and optimizer exactness", schedule_and_optimizer),
        ("determinism and persistence", determinism_and_persistence),
        ("physical invariances", physical_invariances),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name} ({secs:.2} s): {detail}", k + 1);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
