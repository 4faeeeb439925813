use std::fs;
use std::path::Path;

use super::*;
use crate::attack::DEFAULT_EPSILONS;
use crate::Stage;
use crate::metrics::{DegradationRow, DegradationTable};
use crate::mlp::EpochRecord;
use crate::synthetic;

fn write_small_csv(dir: &Path) -> std::path::PathBuf {
    let (features, labels) = synthetic::gaussian_classes(300, 4, 1.0, 0.5, 17).expect("generate");
    let path = dir.join("flows.csv");
    synthetic::write_csv(&features, &labels, &path).expect("write csv");
    path
}

fn small_spec(csv: &Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::for_csv(csv);
    spec.surrogate = ModelSpec {
        hidden_layers: vec![8],
        head: HeadSpec::Sigmoid,
        learning_rate: 1e-2,
        batch_size: 32,
        epochs: 3,
        validation_fraction: 0.25,
        seed: 7,
    };
    spec.target = ModelSpec {
        hidden_layers: vec![6],
        head: HeadSpec::Softmax,
        learning_rate: 1e-2,
        batch_size: 32,
        epochs: 3,
        validation_fraction: 0.25,
        seed: 8,
    };
    spec.attack.epsilons = vec![0.05, 0.1];
    spec
}

#[test]
fn minimal_spec_fills_published_defaults() {
    let text = r#"{"schema_version": 1, "data": {"csv_path": "flows.csv"}}"#;
    let spec: ExperimentSpec = serde_json::from_str(text).expect("parse");
    assert_eq!(spec.data.label_column, "Label");
    assert_eq!(spec.data.benign_label, "BENIGN");
    assert!((spec.data.test_fraction - 0.4).abs() < 1e-15);
    assert_eq!(spec.data.seed, 42);
    assert_eq!(spec.data.scaler_fit, ScalerFitSpec::Full);
    assert_eq!(spec.surrogate.hidden_layers, vec![60, 50, 30]);
    assert_eq!(spec.surrogate.head, HeadSpec::Sigmoid);
    assert_eq!(spec.surrogate.batch_size, 1024);
    assert_eq!(spec.surrogate.epochs, 50);
    assert_eq!(spec.target.hidden_layers, vec![50, 25]);
    assert_eq!(spec.target.head, HeadSpec::Softmax);
    assert_eq!(spec.target.batch_size, 4048);
    assert_eq!(spec.target.epochs, 60);
    assert_eq!(spec.attack.epsilons, DEFAULT_EPSILONS.to_vec());
    assert_eq!(spec.attack.clip_low, None);
    assert!(spec.validate().is_ok());
}

#[test]
fn unknown_keys_are_rejected_at_every_level() {
    let top = r#"{"schema_version": 1, "data": {"csv_path": "x"}, "extra": 1}"#;
    assert!(serde_json::from_str::<ExperimentSpec>(top).is_err());

    let nested = r#"{"schema_version": 1, "data": {"csv_path": "x", "typo_field": true}}"#;
    assert!(serde_json::from_str::<ExperimentSpec>(nested).is_err());

    let attack = r#"{"schema_version": 1, "data": {"csv_path": "x"},
                     "attack": {"epsilon": [0.1]}}"#;
    assert!(serde_json::from_str::<ExperimentSpec>(attack).is_err());
}

#[test]
fn wrong_schema_version_is_rejected() {
    let text = r#"{"schema_version": 2, "data": {"csv_path": "x"}}"#;
    let err = ExperimentSpec::from_json_str(text).expect_err("version 2");
    assert!(matches!(err, Error::InvalidSpec(_)), "got {err:?}");
    assert_eq!(err.category().exit_code(), 2);
}

#[test]
fn invalid_field_combinations_are_rejected() {
    let mut spec = ExperimentSpec::for_csv("x.csv");
    spec.attack.clip_low = Some(-1.0);
    assert!(spec.validate().is_err(), "one-sided clip must fail");

    let mut spec = ExperimentSpec::for_csv("x.csv");
    spec.data.test_fraction = 1.0;
    assert!(spec.validate().is_err(), "test_fraction 1.0 must fail");

    let mut spec = ExperimentSpec::for_csv("x.csv");
    spec.attack.epsilons = vec![];
    assert!(spec.validate().is_err(), "empty sweep must fail");

    let mut spec = ExperimentSpec::for_csv("x.csv");
    spec.attack.epsilons = vec![0.2, 0.1];
    assert!(spec.validate().is_err(), "descending epsilons must fail");

    let mut spec = ExperimentSpec::for_csv("x.csv");
    spec.surrogate.hidden_layers = vec![10, 0];
    assert!(spec.validate().is_err(), "zero-width hidden layer must fail");

    let mut spec = ExperimentSpec::for_csv("x.csv");
    spec.surrogate.learning_rate = -1.0;
    assert!(spec.validate().is_err(), "negative learning rate must fail");
}

#[test]
fn digest_ignores_formatting_but_not_content() {
    let compact = r#"{"schema_version":1,"data":{"csv_path":"flows.csv"}}"#;
    let airy = "{\n  \"schema_version\": 1,\n  \"data\": { \"csv_path\": \"flows.csv\" }\n}";
    let a = ExperimentSpec::from_json_str(compact).expect("parse");
    let b = ExperimentSpec::from_json_str(airy).expect("parse");
    assert_eq!(a.digest().unwrap(), b.digest().unwrap());
    assert_eq!(a.digest().unwrap().len(), 64);

    let mut c = a.clone();
    c.data.seed = 43;
    assert_ne!(a.digest().unwrap(), c.digest().unwrap());
}

#[test]
fn spec_round_trips_through_pretty_json() {
    let spec = small_spec(Path::new("flows.csv"));
    let text = spec.to_json_pretty().expect("serialize");
    let back = ExperimentSpec::from_json_str(&text).expect("reparse");
    assert_eq!(spec, back);
}

#[test]
fn overrides_replace_only_their_fields() {
    let mut spec = ExperimentSpec::for_csv("x.csv");
    spec.apply_overrides(Some(99), Some(vec![0.5]), Some(ScalerFitSpec::TrainOnly));
    assert_eq!(spec.data.seed, 99);
    assert_eq!(spec.attack.epsilons, vec![0.5]);
    assert_eq!(spec.data.scaler_fit, ScalerFitSpec::TrainOnly);
    assert_eq!(spec.surrogate.seed, 42, "model seeds stay untouched");

    spec.apply_overrides(None, None, None);
    assert_eq!(spec.data.seed, 99, "None leaves values alone");
}

#[test]
fn scaler_fit_parses_from_cli_strings() {
    assert_eq!("full".parse::<ScalerFitSpec>().unwrap(), ScalerFitSpec::Full);
    assert_eq!(
        "train-only".parse::<ScalerFitSpec>().unwrap(),
        ScalerFitSpec::TrainOnly
    );
    assert!("training".parse::<ScalerFitSpec>().is_err());
    assert_eq!(ScalerFitSpec::TrainOnly.to_string(), "train-only");
}

#[test]
fn history_csv_renders_optional_validation_columns() {
    let history = vec![
        EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            train_accuracy: 0.75,
            val_loss: Some(0.625),
            val_accuracy: Some(0.5),
        },
        EpochRecord {
            epoch: 2,
            train_loss: 0.25,
            train_accuracy: 0.875,
            val_loss: None,
            val_accuracy: None,
        },
    ];
    let csv = history_csv(&history);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines,
        vec![
            "epoch,train_loss,val_loss,train_accuracy,val_accuracy",
            "1,0.5,0.625,0.75,0.5",
            "2,0.25,,0.875,",
        ]
    );
}

#[test]
fn empty_history_yields_header_only() {
    assert_eq!(
        history_csv(&[]),
        "epoch,train_loss,val_loss,train_accuracy,val_accuracy\n"
    );
}

#[test]
fn curve_csv_has_three_columns() {
    let table = DegradationTable {
        rows: vec![DegradationRow {
            epsilon: 0.25,
            accuracy: 0.5,
            precision: 0.5,
            recall: 0.5,
            f1: 0.5,
        }],
    };
    assert_eq!(curve_csv(&table), "epsilon,accuracy,f1\n0.25,0.5,0.5\n");
}

fn table_with_accuracies(pairs: &[(f64, f64)]) -> DegradationTable {
    DegradationTable {
        rows: pairs
            .iter()
            .map(|&(epsilon, accuracy)| DegradationRow {
                epsilon,
                accuracy,
                precision: accuracy,
                recall: accuracy,
                f1: accuracy,
            })
            .collect(),
    }
}

#[test]
fn dominance_notes_flag_only_violations() {
    let white = table_with_accuracies(&[(0.1, 0.8), (0.2, 0.6)]);
    let black_ok = table_with_accuracies(&[(0.1, 0.9), (0.2, 0.6)]);
    assert!(dominance_notes(&white, &black_ok).is_empty());

    let black_bad = table_with_accuracies(&[(0.1, 0.9), (0.2, 0.55)]);
    let notes = dominance_notes(&white, &black_bad);
    assert_eq!(notes.len(), 1);
    assert!(
        notes[0].contains("epsilon 0.2"),
        "note should name the epsilon: {}",
        notes[0]
    );
}

#[test]
fn prepare_data_splits_and_scales() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = write_small_csv(dir.path());
    let mut data_spec = DataSpec::for_csv(&csv);
    data_spec.test_fraction = 0.4;

    let prepared = prepare_data(&data_spec).expect("prepare");
    assert_eq!(prepared.x_test.rows(), 120, "ceil(300 * 0.4)");
    assert_eq!(prepared.x_train.rows(), 180);
    assert_eq!(prepared.x_train.cols(), 4);
    assert_eq!(prepared.y_train.len(), 180);
    assert_eq!(prepared.y_test.len(), 120);
    let summary = prepared.summary();
    assert_eq!(summary.rows, 300);
    assert_eq!(summary.features, 4);
    assert_eq!(summary.imputed_cells, 0);
    assert_eq!(summary.constant_features, 0);

    // Scaled features should be near zero mean on the full dataset.
    let total: f64 = prepared.dataset.features.data().iter().sum();
    let mean = total / (300.0 * 4.0);
    assert!(mean.abs() < 1e-9, "full-dataset scaling centers columns, mean {mean}");
}

#[test]
fn scaler_fit_mode_changes_the_moments() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = write_small_csv(dir.path());
    let mut full = DataSpec::for_csv(&csv);
    full.scaler_fit = ScalerFitSpec::Full;
    let mut train_only = full.clone();
    train_only.scaler_fit = ScalerFitSpec::TrainOnly;

    let a = prepare_data(&full).expect("full");
    let b = prepare_data(&train_only).expect("train-only");
    assert_ne!(
        a.dataset.scaler.means, b.dataset.scaler.means,
        "fitting on a strict subset should move the means"
    );
    assert_eq!(
        a.dataset.train_indices, b.dataset.train_indices,
        "the split permutation is independent of the scaler policy"
    );
}

#[test]
fn run_experiment_writes_every_artifact() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = write_small_csv(dir.path());
    let spec = small_spec(&csv);
    let out = dir.path().join("run");

    let report = run_experiment(&spec, &out).expect("run");
    report.validate().expect("report invariants");
    assert_eq!(report.attack.epsilons, vec![0.05, 0.1]);
    assert_eq!(report.whitebox.rows.len(), 2);
    assert_eq!(report.blackbox.rows.len(), 2);
    assert_eq!(report.surrogate.history.len(), 3);
    assert_eq!(report.target.history.len(), 3);
    assert_eq!(report.environment.spec_digest, spec.digest().unwrap());
    assert!(report.baseline.surrogate.roc_auc.is_some());

    for name in [
        "spec.json",
        "report.json",
        "surrogate_model.bin",
        "target_model.bin",
        "surrogate_history.csv",
        "target_history.csv",
        "whitebox_curve.csv",
        "blackbox_curve.csv",
        "whitebox_report.csv",
        "blackbox_report.csv",
    ] {
        assert!(out.join(name).exists(), "missing artifact {name}");
    }

    // The written report parses and matches what the call returned.
    let loaded = RunReport::from_json_file(&out.join("report.json")).expect("load report");
    let disk = fs::read_to_string(out.join("report.json")).unwrap();
    assert_eq!(
        loaded.to_json_pretty().unwrap(),
        disk,
        "JSON round-trip changed bytes"
    );
    assert_eq!(loaded, report);

    // Model files reload to the digests the report recorded.
    let surrogate = crate::mlp::load_model(&out.join("surrogate_model.bin")).expect("surrogate");
    assert_eq!(
        crate::mlp::model_digest(&surrogate),
        report.surrogate.model_digest
    );
    let target = crate::mlp::load_model(&out.join("target_model.bin")).expect("target");
    assert_eq!(crate::mlp::model_digest(&target), report.target.model_digest);

    // The written spec reparses to the input spec.
    let spec_back =
        ExperimentSpec::from_json_str(&fs::read_to_string(out.join("spec.json")).unwrap())
            .expect("spec reparse");
    assert_eq!(spec_back, spec);
}

#[test]
fn identical_specs_produce_byte_identical_artifacts() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = write_small_csv(dir.path());
    let spec = small_spec(&csv);

    let out_a = dir.path().join("run_a");
    let out_b = dir.path().join("run_b");
    run_experiment(&spec, &out_a).expect("first run");
    run_experiment(&spec, &out_b).expect("second run");

    for name in ["report.json", "surrogate_model.bin", "target_model.bin"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} must be byte-identical across runs");
    }
}

#[test]
fn existing_output_directory_is_refused() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = write_small_csv(dir.path());
    let spec = small_spec(&csv);
    let out = dir.path().join("occupied");
    fs::create_dir(&out).unwrap();

    let err = run_experiment(&spec, &out).expect_err("existing dir");
    assert!(matches!(err, Error::InvalidArgument(_)), "got {err:?}");
}

#[test]
fn missing_csv_fails_in_the_data_stage_with_no_leftovers() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = small_spec(&dir.path().join("absent.csv"));
    let out = dir.path().join("never");

    let err = run_experiment(&spec, &out).expect_err("missing csv");
    match &err {
        Error::Stage { stage, .. } => assert_eq!(*stage, Stage::Data),
        other => panic!("expected a data-stage error, got {other:?}"),
    }
    assert_eq!(err.category().exit_code(), 3);

    assert!(!out.exists(), "no output directory may appear");
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert!(
        leftovers.is_empty(),
        "failed run left files behind: {leftovers:?}"
    );
}

#[test]
fn report_validation_catches_epsilon_mismatch() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = write_small_csv(dir.path());
    let spec = small_spec(&csv);
    let out = dir.path().join("run");
    let mut report = run_experiment(&spec, &out).expect("run");

    report.whitebox.rows.pop();
    let err = report.validate().expect_err("dropped row");
    assert!(matches!(err, Error::InvalidSpec(_)), "got {err:?}");
}

#[test]
fn report_tables_reemit_identically() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = write_small_csv(dir.path());
    let spec = small_spec(&csv);
    let out = dir.path().join("run");
    let report = run_experiment(&spec, &out).expect("run");

    let reemit = dir.path().join("reemit");
    emit_report_tables(&report, &reemit).expect("emit");
    for name in [
        "surrogate_history.csv",
        "target_history.csv",
        "whitebox_curve.csv",
        "blackbox_curve.csv",
        "whitebox_report.csv",
        "blackbox_report.csv",
    ] {
        let original = fs::read(out.join(name)).unwrap();
        let again = fs::read(reemit.join(name)).unwrap();
        assert_eq!(original, again, "{name} must re-emit identically");
    }
}

#[test]
fn self_transfer_tables_match_exactly() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = write_small_csv(dir.path());
    let data_spec = DataSpec::for_csv(&csv);
    let prepared = prepare_data(&data_spec).expect("prepare");

    let model_spec = small_spec(&csv).surrogate;
    let outcome = crate::mlp::fit(
        &model_spec.layer_specs(prepared.x_train.cols()),
        &prepared.x_train,
        &prepared.y_train,
        &model_spec.train_config(),
    )
    .expect("train");
    let model = &outcome.model;

    let config = AttackSpec::default()
        .config_for(&prepared.x_test)
        .expect("config");
    let white = run_whitebox(model, &prepared.x_test, &prepared.y_test, &config).expect("white");
    let black = run_blackbox(model, model, &prepared.x_test, &prepared.y_test, &config)
        .expect("black");
    assert_eq!(
        white, black,
        "with the target aliased to the surrogate the two phases are the same computation"
    );
}
