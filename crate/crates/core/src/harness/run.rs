//! The pipeline that executes an [`ExperimentSpec`] end to end.
//!
//! The target model is only ever handled through the [`Predictor`] trait from
//! the attack onward, so the transfer phase cannot touch its gradients even
//! by accident — the type system enforces the black-box boundary.

use std::fs;
use std::path::Path;

use super::{
    dominance_notes, AttackRecord, BaselineRecord, DataSpec, DatasetSummary, EnvironmentRecord,
    ExperimentSpec, ModelRecord, RunReport, REPORT_SCHEMA_VERSION,
};
use crate::attack::{sweep, AdversarialBatch, AttackConfig};
use crate::data::{clean, load_csv, FlowDataset};
use crate::metrics::{degradation_table, report, ClassificationReport, DegradationTable};
use crate::mlp::{fit, labels_from_probs, model_digest, save_model, MlpModel, Predictor};
use crate::numerics::{Matrix, SplitMix64};
use crate::{Error, Result, Stage};

/// A dataset taken through ingestion, cleaning, scaling, and splitting, with
/// the train/test views materialized.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: FlowDataset,
    pub x_train: Matrix,
    pub y_train: Vec<u8>,
    pub x_test: Matrix,
    pub y_test: Vec<u8>,
    pub imputed_cells: usize,
}

impl PreparedData {
    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            rows: self.dataset.features.rows(),
            features: self.dataset.features.cols(),
            train_rows: self.x_train.rows(),
            test_rows: self.x_test.rows(),
            imputed_cells: self.imputed_cells,
            constant_features: self
                .dataset
                .scaler
                .flagged
                .iter()
                .filter(|&&f| f)
                .count(),
        }
    }
}

/// Run the data stage for a spec: load, clean, scale, split.
pub fn prepare_data(spec: &DataSpec) -> Result<PreparedData> {
    spec.validate()?;
    let table = load_csv(&spec.csv_path, &spec.clean_config())?;
    let cleaned = clean(&table)?;
    let imputed_cells = cleaned.imputed_cells;
    let mut rng = SplitMix64::new(spec.seed);
    let dataset = FlowDataset::assemble(
        cleaned,
        spec.test_fraction,
        &mut rng,
        spec.scaler_fit.to_scaler_fit(),
    )?;
    let x_train = dataset.train_features()?;
    let x_test = dataset.test_features()?;
    let y_train = dataset.train_labels();
    let y_test = dataset.test_labels();
    Ok(PreparedData {
        dataset,
        x_train,
        y_train,
        x_test,
        y_test,
        imputed_cells,
    })
}

/// Score any probability-producing model on a labelled set. ROC-AUC is
/// attached only when both classes are present, since it is undefined
/// otherwise.
fn score_predictor(
    model: &dyn Predictor,
    x: &Matrix,
    labels: &[u8],
) -> Result<ClassificationReport> {
    let probs = model.predict_probs(x)?;
    let preds = labels_from_probs(&probs);
    let both_classes = labels.contains(&0) && labels.contains(&1);
    if both_classes {
        let scores: Vec<f64> = (0..probs.rows()).map(|r| probs.row(r)[1]).collect();
        report(labels, &preds, Some(&scores))
    } else {
        report(labels, &preds, None)
    }
}

/// Clean-data evaluation of both models on the same test set.
pub fn run_baseline(
    surrogate: &MlpModel,
    target: &dyn Predictor,
    x_test: &Matrix,
    y_test: &[u8],
) -> Result<BaselineRecord> {
    Ok(BaselineRecord {
        surrogate: score_predictor(surrogate, x_test, y_test)?,
        target: score_predictor(target, x_test, y_test)?,
    })
}

/// Evaluate one predictor on every batch of a sweep; rows come back sorted by
/// epsilon.
pub fn evaluate_batches(
    evaluator: &dyn Predictor,
    batches: &[AdversarialBatch],
    labels: &[u8],
) -> Result<DegradationTable> {
    let mut rows = Vec::with_capacity(batches.len());
    for batch in batches {
        let rep = score_predictor(evaluator, &batch.features, labels)?;
        rows.push((batch.epsilon, rep));
    }
    degradation_table(&rows)
}

/// White-box phase: craft perturbations from the surrogate's own gradients
/// and replay them against the surrogate itself.
pub fn run_whitebox(
    surrogate: &MlpModel,
    x_test: &Matrix,
    y_test: &[u8],
    config: &AttackConfig,
) -> Result<DegradationTable> {
    let batches = sweep(surrogate, x_test, y_test, config)?;
    evaluate_batches(surrogate, &batches, y_test)
}

/// Black-box phase: craft perturbations from the surrogate, replay them
/// against the target, which is only reachable as a label/probability oracle.
pub fn run_blackbox(
    surrogate: &MlpModel,
    target: &dyn Predictor,
    x_test: &Matrix,
    y_test: &[u8],
    config: &AttackConfig,
) -> Result<DegradationTable> {
    let batches = sweep(surrogate, x_test, y_test, config)?;
    evaluate_batches(target, &batches, y_test)
}

/// Execute a spec end to end and write every artifact into `out_dir`.
///
/// `out_dir` must not already exist. All files are first written into a
/// hidden staging directory next to it and the staging directory is renamed
/// into place only after everything succeeded, so a failed run leaves no
/// partial outputs. Errors carry the pipeline stage they came from.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    spec.validate()?;
    if out_dir.exists() {
        return Err(Error::InvalidArgument(format!(
            "output directory {} already exists; refusing to overwrite a previous run",
            out_dir.display()
        )));
    }
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => Path::new(".").to_path_buf(),
    };
    fs::create_dir_all(&parent)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", parent.display())))?;

    // Data stage.
    let prepared = prepare_data(&spec.data).map_err(|e| e.at_stage(Stage::Data))?;
    let input_dim = prepared.x_train.cols();

    // Train stage.
    let surrogate_outcome = fit(
        &spec.surrogate.layer_specs(input_dim),
        &prepared.x_train,
        &prepared.y_train,
        &spec.surrogate.train_config(),
    )
    .map_err(|e| e.at_stage(Stage::Train))?;
    let target_outcome = fit(
        &spec.target.layer_specs(input_dim),
        &prepared.x_train,
        &prepared.y_train,
        &spec.target.train_config(),
    )
    .map_err(|e| e.at_stage(Stage::Train))?;
    let surrogate = &surrogate_outcome.model;
    let target = &target_outcome.model;

    // Attack stage: one sweep, crafted only from the surrogate.
    let attack_config = spec
        .attack
        .config_for(&prepared.x_test)
        .map_err(|e| e.at_stage(Stage::Attack))?;
    let batches = sweep(surrogate, &prepared.x_test, &prepared.y_test, &attack_config)
        .map_err(|e| e.at_stage(Stage::Attack))?;

    // Evaluate stage; the target enters only as a Predictor from here on.
    let baseline = run_baseline(surrogate, target, &prepared.x_test, &prepared.y_test)
        .map_err(|e| e.at_stage(Stage::Evaluate))?;
    let whitebox = evaluate_batches(surrogate, &batches, &prepared.y_test)
        .map_err(|e| e.at_stage(Stage::Evaluate))?;
    let blackbox = evaluate_batches(target as &dyn Predictor, &batches, &prepared.y_test)
        .map_err(|e| e.at_stage(Stage::Evaluate))?;
    let notes = dominance_notes(&whitebox, &blackbox);

    let (clip_low, clip_high) = attack_config.clip();
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        environment: EnvironmentRecord {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            spec_digest: spec.digest()?,
            data_seed: spec.data.seed,
            surrogate_seed: spec.surrogate.seed,
            target_seed: spec.target.seed,
        },
        dataset: prepared.summary(),
        attack: AttackRecord {
            epsilons: attack_config.epsilons.clone(),
            clip_low,
            clip_high,
        },
        surrogate: ModelRecord {
            parameter_count: surrogate.parameter_count(),
            model_digest: model_digest(surrogate),
            checkpoint: surrogate_outcome.checkpoint,
            history: surrogate_outcome.history.clone(),
        },
        target: ModelRecord {
            parameter_count: target.parameter_count(),
            model_digest: model_digest(target),
            checkpoint: target_outcome.checkpoint,
            history: target_outcome.history.clone(),
        },
        baseline,
        whitebox,
        blackbox,
        notes,
    };

    // Report stage: stage everything, then rename into place.
    write_artifacts(spec, &report, surrogate, target, out_dir, &parent)
        .map_err(|e| e.at_stage(Stage::Report))?;
    Ok(report)
}

fn write_artifacts(
    spec: &ExperimentSpec,
    report: &RunReport,
    surrogate: &MlpModel,
    target: &MlpModel,
    out_dir: &Path,
    parent: &Path,
) -> Result<()> {
    let staging = tempfile::Builder::new()
        .prefix(".staging-")
        .tempdir_in(parent)
        .map_err(|e| Error::Data(format!("cannot stage under {}: {e}", parent.display())))?;

    fs::write(staging.path().join("spec.json"), spec.to_json_pretty()?)?;
    fs::write(staging.path().join("report.json"), report.to_json_pretty()?)?;
    save_model(surrogate, &staging.path().join("surrogate_model.bin"))?;
    save_model(target, &staging.path().join("target_model.bin"))?;
    super::emit_report_tables(report, staging.path())?;

    let staged = staging.keep();
    match fs::rename(&staged, out_dir) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_dir_all(&staged);
            Err(Error::Data(format!(
                "cannot move finished run into {}: {e}",
                out_dir.display()
            )))
        }
    }
}
