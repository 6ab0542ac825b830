mod common;

use lkm::checkpoint::{self, CheckpointError};
use lkm::history::{epochs_csv, parse_history, steps_csv};
use lkm::pipeline::{load_dataset, make_splits, run_training, PreparedSplits};
use lkm::xyz::{parse_extended_xyz, write_extended_xyz};
use lkm_core::synthetic::generate;
use lkm_core::{evaluate_prepared, Model, ModelConfig, Molecule, Standardizer};
use proptest::prelude::*;

const BUNDLED: &str = include_str!("../data/synthetic500.xyz");

#[test]
fn bundled_dataset_is_the_default_synthetic_set() {
    let parsed = parse_extended_xyz(BUNDLED, "energy").unwrap();
    let generated = generate(500, 2024, 5.0).unwrap();
    assert_eq!(parsed.as_slice(), generated.molecules());
    assert_eq!(write_extended_xyz(generated.molecules()).unwrap(), BUNDLED);
}

#[test]
fn bundled_file_and_in_memory_generation_train_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.xyz");
    let mut cfg = common::tiny();
    cfg.synthetic_count = 500;
    let ds = load_dataset(&cfg).unwrap();
    std::fs::write(&path, write_extended_xyz(ds.molecules()).unwrap()).unwrap();
    let mut from_file = cfg.clone();
    from_file.set("data", path.to_str().unwrap()).unwrap();
    let run = |c: &lkm::RunConfig| {
        let splits = make_splits(c, &load_dataset(c).unwrap()).unwrap();
        let sets = PreparedSplits::new(&splits, c).unwrap();
        run_training(c, &sets, &mut |_, _| Ok(())).unwrap()
    };
    let (a, b) = (run(&cfg), run(&from_file));
    assert_eq!(a.outcome.history, b.outcome.history);
    assert_eq!(a.test_mae.to_bits(), b.test_mae.to_bits());
}

#[test]
fn malformed_xyz_reports_the_line() {
    let err = parse_extended_xyz("2\nenergy=1.0\nH 0 0 0\nH 0 zero 0\n", "energy").unwrap_err();
    assert!(
        err.to_string().starts_with("line 4: malformed float"),
        "{err}"
    );
    let short = parse_extended_xyz("2\nenergy=1.0\nH 0 0 0\nH 0 0\n", "energy").unwrap_err();
    assert!(short.to_string().contains("atom-count mismatch"), "{short}");
    assert!(parse_extended_xyz("1\nother=2\nH 0 0 0\n", "energy").is_err());
    assert!(parse_extended_xyz("3\nenergy=1\nH 0 0 0\n", "energy").is_err());
    assert!(parse_extended_xyz("1\nenergy=1\nXx 0 0 0\n", "energy").is_err());
}

#[test]
fn checkpoint_reload_reproduces_evaluation_bitwise() {
    let cfg = common::tiny();
    let splits = make_splits(&cfg, &load_dataset(&cfg).unwrap()).unwrap();
    let sets = PreparedSplits::new(&splits, &cfg).unwrap();
    let result = run_training(&cfg, &sets, &mut |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    checkpoint::save(&path, &result.outcome.best_model, splits.standardizer).unwrap();
    let loaded = checkpoint::load(&path).unwrap();
    assert_eq!(loaded.model, result.outcome.best_model);
    assert_eq!(loaded.standardizer, splits.standardizer);
    let (mae, _) = evaluate_prepared(&loaded.model, &sets.val).unwrap();
    assert_eq!(mae.to_bits(), result.outcome.best_val_mae.to_bits());
}

#[test]
fn checkpoint_rejects_corruption() {
    let model = Model::init(ModelConfig {
        n_layers: 1,
        embedding_dim: 4,
        n_rbf: 4,
        ..ModelConfig::default()
    })
    .unwrap();
    let bytes = checkpoint::to_bytes(&model, Standardizer::IDENTITY).unwrap();
    assert!(matches!(
        checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
        Err(CheckpointError::Truncated(_) | CheckpointError::Mismatch(_))
    ));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        checkpoint::from_bytes(&bad),
        Err(CheckpointError::BadMagic)
    ));
    let mut longer = bytes;
    longer.extend_from_slice(&[0; 8]);
    assert!(checkpoint::from_bytes(&longer).is_err());
}

#[test]
fn history_csv_round_trips_a_real_run() {
    let cfg = common::tiny();
    let splits = make_splits(&cfg, &load_dataset(&cfg).unwrap()).unwrap();
    let sets = PreparedSplits::new(&splits, &cfg).unwrap();
    let h = run_training(&cfg, &sets, &mut |_, _| Ok(()))
        .unwrap()
        .outcome
        .history;
    assert_eq!(parse_history(&steps_csv(&h), &epochs_csv(&h)).unwrap(), h);
}

fn molecules() -> impl Strategy<Value = Vec<Molecule>> {
    let atom = (
        prop::sample::select(vec![1u32, 6, 7, 8]),
        prop::array::uniform3(-20.0f64..20.0),
    );
    let mol = (prop::collection::vec(atom, 1..6), -1e3f64..1e3).prop_map(|(atoms, e)| {
        let (z, pos): (Vec<u32>, Vec<[f64; 3]>) = atoms.into_iter().unzip();
        let mut targets = std::collections::BTreeMap::new();
        targets.insert("energy".to_string(), e);
        Molecule::new(z, pos, targets).unwrap()
    });
    prop::collection::vec(mol, 0..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn xyz_round_trip_is_exact(mols in molecules()) {
        let text = write_extended_xyz(&mols).unwrap();
        prop_assert_eq!(parse_extended_xyz(&text, "energy").unwrap(), mols);
    }

    #[test]
    fn checkpoint_round_trip_is_exact(seed in any::<u64>(), m in 1usize..4, d in 1usize..6, mean in -5.0f64..5.0, std in 0.1f64..5.0) {
        let model = Model::init(ModelConfig { n_layers: m, embedding_dim: d, n_rbf: 3, seed, ..ModelConfig::default() }).unwrap();
        let s = Standardizer { mean, std };
        let back = checkpoint::from_bytes(&checkpoint::to_bytes(&model, s).unwrap()).unwrap();
        prop_assert_eq!(back.model, model);
        prop_assert_eq!(back.standardizer, s);
    }
}
