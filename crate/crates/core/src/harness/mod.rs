//! Experiment orchestration: a versioned JSON run description, the pipeline
//! that executes it, and the report it produces.
//!
//! An [`ExperimentSpec`] pins everything a run depends on — data source and
//! cleaning rules, split fraction, scaler-fit policy, both model
//! configurations, and the attack sweep — so that a run is a pure function
//! of the spec file. [`run_experiment`] executes the five pipeline stages
//! (data, train, attack, evaluate, report), tags any error with the stage it
//! came from, and writes all artifacts into a fresh output directory via a
//! staging directory so failed runs leave nothing behind.

mod curves;
mod run;

pub use curves::{curve_csv, emit_curves, emit_report_tables, history_csv};
pub use run::{
    evaluate_batches, prepare_data, run_baseline, run_blackbox, run_experiment, run_whitebox,
    PreparedData,
};

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{AttackConfig, DEFAULT_EPSILONS};
use crate::data::{CleanConfig, ScalerFit};
use crate::metrics::{ClassificationReport, DegradationTable};
use crate::mlp::{
    Activation, Checkpoint, EpochRecord, LayerSpec, TrainConfig, OUTPUT_WIDTH,
};
use crate::{Error, Result};

/// Schema version accepted in spec files.
pub const SPEC_SCHEMA_VERSION: u32 = 1;
/// Schema version written into run reports.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Complete, self-contained description of one experiment run.
///
/// Unknown JSON keys are rejected so typos fail loudly instead of silently
/// falling back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Must equal [`SPEC_SCHEMA_VERSION`].
    pub schema_version: u32,
    pub data: DataSpec,
    #[serde(default = "ModelSpec::surrogate_default")]
    pub surrogate: ModelSpec,
    #[serde(default = "ModelSpec::target_default")]
    pub target: ModelSpec,
    #[serde(default)]
    pub attack: AttackSpec,
    /// Where `run` writes its artifacts; a CLI `--out` flag overrides this.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Data source, cleaning rules, split, and scaling policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub csv_path: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default = "default_benign_label")]
    pub benign_label: String,
    /// Identifier-like columns removed before numeric parsing.
    #[serde(default = "default_drop_columns")]
    pub drop_columns: Vec<String>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Seed for the split permutation only; model training seeds live in the
    /// model sections.
    #[serde(default = "default_data_seed")]
    pub seed: u64,
    #[serde(default)]
    pub scaler_fit: ScalerFitSpec,
}

fn default_label_column() -> String {
    crate::data::DEFAULT_LABEL_COLUMN.to_string()
}

fn default_benign_label() -> String {
    crate::data::DEFAULT_BENIGN_LABEL.to_string()
}

fn default_drop_columns() -> Vec<String> {
    crate::data::DEFAULT_DROP_COLUMNS
        .iter()
        .map(|c| c.to_string())
        .collect()
}

fn default_test_fraction() -> f64 {
    0.4
}

fn default_data_seed() -> u64 {
    42
}

impl DataSpec {
    /// Minimal spec pointing at a CSV, with every other field defaulted.
    pub fn for_csv(csv_path: impl Into<PathBuf>) -> DataSpec {
        DataSpec {
            csv_path: csv_path.into(),
            label_column: default_label_column(),
            benign_label: default_benign_label(),
            drop_columns: default_drop_columns(),
            test_fraction: default_test_fraction(),
            seed: default_data_seed(),
            scaler_fit: ScalerFitSpec::default(),
        }
    }

    pub fn clean_config(&self) -> CleanConfig {
        CleanConfig {
            drop_columns: self.drop_columns.clone(),
            label_column: self.label_column.clone(),
            benign_label: self.benign_label.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_column.trim().is_empty() {
            return Err(Error::InvalidSpec("label_column must not be empty".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "test_fraction must lie strictly between 0 and 1, got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Scaler-fit policy as it appears in spec files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalerFitSpec {
    /// Fit scaling moments on the full dataset before splitting.
    #[default]
    Full,
    /// Fit on training rows only.
    TrainOnly,
}

impl ScalerFitSpec {
    pub fn to_scaler_fit(self) -> ScalerFit {
        match self {
            ScalerFitSpec::Full => ScalerFit::FullDataset,
            ScalerFitSpec::TrainOnly => ScalerFit::TrainOnly,
        }
    }
}

impl FromStr for ScalerFitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<ScalerFitSpec> {
        match s {
            "full" => Ok(ScalerFitSpec::Full),
            "train-only" => Ok(ScalerFitSpec::TrainOnly),
            other => Err(Error::InvalidArgument(format!(
                "scaler-fit must be `full` or `train-only`, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for ScalerFitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScalerFitSpec::Full => "full",
            ScalerFitSpec::TrainOnly => "train-only",
        })
    }
}

/// Output activation of the two-unit head layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadSpec {
    Sigmoid,
    Softmax,
}

impl HeadSpec {
    pub fn activation(self) -> Activation {
        match self {
            HeadSpec::Sigmoid => Activation::Sigmoid,
            HeadSpec::Softmax => Activation::Softmax,
        }
    }
}

/// Architecture and optimizer settings for one model.
///
/// When the whole section is omitted from a spec file, the role's published
/// default is used; when the section is present, every field must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Hidden ReLU layer widths, input to output; the two-unit head is
    /// appended automatically.
    pub hidden_layers: Vec<usize>,
    pub head: HeadSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl ModelSpec {
    /// Published surrogate configuration: 60-50-30 hidden units, sigmoid head.
    pub fn surrogate_default() -> ModelSpec {
        ModelSpec {
            hidden_layers: vec![60, 50, 30],
            head: HeadSpec::Sigmoid,
            learning_rate: 1e-4,
            batch_size: 1024,
            epochs: 50,
            validation_fraction: 0.3,
            seed: 42,
        }
    }

    /// Published target configuration: 50-25 hidden units, softmax head.
    pub fn target_default() -> ModelSpec {
        ModelSpec {
            hidden_layers: vec![50, 25],
            head: HeadSpec::Softmax,
            learning_rate: 1e-3,
            batch_size: 4048,
            epochs: 60,
            validation_fraction: 0.2,
            seed: 43,
        }
    }

    /// Expand the hidden widths into a full layer chain for `input_dim`
    /// features.
    pub fn layer_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut layers = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut width = input_dim;
        for &hidden in &self.hidden_layers {
            layers.push(LayerSpec::new(width, hidden, Activation::Relu));
            width = hidden;
        }
        layers.push(LayerSpec::new(width, OUTPUT_WIDTH, self.head.activation()));
        layers
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            validation_fraction: self.validation_fraction,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidSpec(
                "hidden layer widths must be positive".into(),
            ));
        }
        self.train_config()
            .validate()
            .map_err(|e| Error::InvalidSpec(e.to_string()))
    }
}

/// Perturbation sweep settings.
///
/// When the clip bounds are omitted they are derived from the scaled test
/// features at attack time; giving only one bound is an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSpec {
    pub epsilons: Vec<f64>,
    pub clip_low: Option<f64>,
    pub clip_high: Option<f64>,
}

impl Default for AttackSpec {
    fn default() -> AttackSpec {
        AttackSpec {
            epsilons: DEFAULT_EPSILONS.to_vec(),
            clip_low: None,
            clip_high: None,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidSpec(
                "attack needs at least one epsilon".into(),
            ));
        }
        // Placeholder bounds when none are pinned: only the epsilon checks can
        // fire here, the real bounds are validated again at attack time.
        let (lo, hi) = match (self.clip_low, self.clip_high) {
            (Some(lo), Some(hi)) => (lo, hi),
            (None, None) => (0.0, 1.0),
            _ => {
                return Err(Error::InvalidSpec(
                    "clip_low and clip_high must be given together or both omitted".into(),
                ))
            }
        };
        AttackConfig::new(self.epsilons.clone(), lo, hi)
            .map(|_| ())
            .map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    /// Resolve into a concrete attack configuration, deriving clip bounds from
    /// the (scaled) test features when the spec leaves them open.
    pub fn config_for(&self, test_features: &crate::Matrix) -> Result<AttackConfig> {
        let (lo, hi) = match (self.clip_low, self.clip_high) {
            (Some(lo), Some(hi)) => (lo, hi),
            (None, None) => crate::attack::clip_bounds_from(test_features)?,
            _ => {
                return Err(Error::InvalidSpec(
                    "clip_low and clip_high must be given together or both omitted".into(),
                ))
            }
        };
        AttackConfig::new(self.epsilons.clone(), lo, hi)
    }
}

impl ExperimentSpec {
    /// Minimal spec over a CSV with the published defaults everywhere else.
    pub fn for_csv(csv_path: impl Into<PathBuf>) -> ExperimentSpec {
        ExperimentSpec {
            schema_version: SPEC_SCHEMA_VERSION,
            data: DataSpec::for_csv(csv_path),
            surrogate: ModelSpec::surrogate_default(),
            target: ModelSpec::target_default(),
            attack: AttackSpec::default(),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SPEC_SCHEMA_VERSION {
            return Err(Error::InvalidSpec(format!(
                "unsupported spec schema_version {}, expected {}",
                self.schema_version, SPEC_SCHEMA_VERSION
            )));
        }
        self.data.validate()?;
        self.surrogate.validate()?;
        self.target.validate()?;
        self.attack.validate()?;
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<ExperimentSpec> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_file(path: &Path) -> Result<ExperimentSpec> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read spec {}: {e}", path.display())))?;
        ExperimentSpec::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// SHA-256 over the canonical (compact, field-ordered) serialization, so
    /// two spec files that parse to the same configuration share a digest.
    pub fn digest(&self) -> Result<String> {
        let canonical = serde_json::to_vec(self)?;
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Apply command-line overrides on top of a parsed spec.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        epsilons: Option<Vec<f64>>,
        scaler_fit: Option<ScalerFitSpec>,
    ) {
        if let Some(seed) = seed {
            self.data.seed = seed;
        }
        if let Some(epsilons) = epsilons {
            self.attack.epsilons = epsilons;
        }
        if let Some(scaler_fit) = scaler_fit {
            self.data.scaler_fit = scaler_fit;
        }
    }
}

/// Seeds, versions, and the spec digest a report was produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentRecord {
    pub tool_version: String,
    pub spec_digest: String,
    pub data_seed: u64,
    pub surrogate_seed: u64,
    pub target_seed: u64,
}

/// Row, feature, and hygiene counts for the prepared dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSummary {
    pub rows: usize,
    pub features: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Cells replaced by their column mean during cleaning.
    pub imputed_cells: usize,
    /// Features whose standard deviation was too small to divide by.
    pub constant_features: usize,
}

/// Everything recorded about one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub parameter_count: usize,
    /// SHA-256 of the serialized parameters actually used for evaluation.
    pub model_digest: String,
    /// Best-validation-loss epoch the kept parameters came from, when a
    /// validation split existed.
    pub checkpoint: Option<Checkpoint>,
    pub history: Vec<EpochRecord>,
}

/// Clean-data reports for both models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineRecord {
    pub surrogate: ClassificationReport,
    pub target: ClassificationReport,
}

/// The sweep as actually executed, including derived clip bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackRecord {
    pub epsilons: Vec<f64>,
    pub clip_low: f64,
    pub clip_high: f64,
}

/// Full account of one experiment run; a pure function of the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub environment: EnvironmentRecord,
    pub dataset: DatasetSummary,
    pub attack: AttackRecord,
    pub surrogate: ModelRecord,
    pub target: ModelRecord,
    pub baseline: BaselineRecord,
    /// Surrogate evaluated on its own adversarial batches, per epsilon.
    pub whitebox: DegradationTable,
    /// Target evaluated on the surrogate's adversarial batches, per epsilon.
    pub blackbox: DegradationTable,
    /// Observations that are worth surfacing but are not failures, e.g. the
    /// transfer attack outperforming the white-box attack at some epsilon.
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn to_json_pretty(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json_str(text: &str) -> Result<RunReport> {
        let report: RunReport = serde_json::from_str(text)?;
        report.validate()?;
        Ok(report)
    }

    pub fn from_json_file(path: &Path) -> Result<RunReport> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read report {}: {e}", path.display())))?;
        RunReport::from_json_str(&text)
    }

    /// Structural invariants: version match and every swept epsilon present,
    /// in order, in both degradation tables.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::InvalidSpec(format!(
                "unsupported report schema_version {}, expected {}",
                self.schema_version, REPORT_SCHEMA_VERSION
            )));
        }
        for (name, table) in [("white-box", &self.whitebox), ("black-box", &self.blackbox)] {
            let table_eps: Vec<f64> = table.rows.iter().map(|r| r.epsilon).collect();
            if table_eps != self.attack.epsilons {
                return Err(Error::InvalidSpec(format!(
                    "{name} table covers epsilons {table_eps:?} but the sweep ran {:?}",
                    self.attack.epsilons
                )));
            }
        }
        Ok(())
    }
}

/// Human-readable notes for every epsilon where the black-box accuracy fell
/// below the white-box accuracy. On the published workflow the target is
/// expected to dominate; on arbitrary data a violation is information, not an
/// error.
pub fn dominance_notes(whitebox: &DegradationTable, blackbox: &DegradationTable) -> Vec<String> {
    let mut notes = Vec::new();
    for white in &whitebox.rows {
        let Some(black) = blackbox.rows.iter().find(|r| r.epsilon == white.epsilon) else {
            continue;
        };
        if black.accuracy < white.accuracy {
            notes.push(format!(
                "black-box accuracy {:.4} fell below white-box accuracy {:.4} at epsilon {}: \
                 the transferred attack hurt the target more than the white-box attack hurt the surrogate",
                black.accuracy, white.accuracy, white.epsilon
            ));
        }
    }
    notes
}

#[cfg(test)]
mod tests;
