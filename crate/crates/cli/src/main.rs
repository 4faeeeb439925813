//! `advflow` — command-line driver for the transfer-attack pipeline.
//!
//! The pipeline can run in one shot (`run`, into a fresh directory) or stage
//! by stage against a shared working directory: `prepare` caches the cleaned,
//! scaled, and split dataset; `train` fits one model section from the spec;
//! `attack` crafts the epsilon sweep from the saved surrogate; `evaluate`
//! scores the saved batches against both saved models; `report` re-emits the
//! CSV tables and curves from an existing report file.
//!
//! Exit codes: 0 success, 2 spec or argument problem, 3 data problem,
//! 4 numeric problem.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use advflow_core::attack::{load_batch, matrix_digest, save_batch, sweep, AdversarialBatch};
use advflow_core::data::{load_dataset, save_dataset, FlowDataset};
use advflow_core::harness::{
    curve_csv, dominance_notes, emit_report_tables, evaluate_batches, history_csv, prepare_data,
    run_baseline, run_experiment, BaselineRecord, ExperimentSpec, ModelSpec, RunReport,
    ScalerFitSpec,
};
use advflow_core::metrics::DegradationTable;
use advflow_core::mlp::{fit, load_model, model_digest, save_model, MlpModel, Predictor};
use advflow_core::{write_file_atomic, Error, Result};

const DATASET_FILE: &str = "dataset.bin";
const SUMMARY_FILE: &str = "dataset_summary.json";
const BATCHES_DIR: &str = "batches";
const EVALUATION_FILE: &str = "evaluation.json";

#[derive(Parser)]
#[command(
    name = "advflow",
    version,
    about = "Train flow classifiers, craft gradient-sign perturbations, and measure how attacks transfer",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, clean, scale, and split the dataset, then cache it.
    Prepare(PrepareCmd),
    /// Train one model section from the spec on the cached dataset.
    Train(TrainCmd),
    /// Craft the epsilon sweep from the saved surrogate model.
    Attack(AttackCmd),
    /// Score the saved batches against both saved models and emit tables.
    Evaluate(EvaluateCmd),
    /// Run the whole pipeline into a fresh output directory.
    Run(RunCmd),
    /// Re-emit CSV tables and curves from an existing report file.
    Report(ReportCmd),
}

/// Spec file plus the overrides that can be applied on top of it. The
/// overrides rewrite the parsed spec before anything runs: `--seed` replaces
/// the data seed (shuffling and splitting; model seeds stay as configured),
/// `--epsilons` replaces the attack sweep, `--scaler-fit` replaces the
/// scaler-fit policy. Each override only has an effect in the stages that
/// consume the overridden field.
#[derive(Args)]
struct SpecOpts {
    /// Experiment description file (JSON).
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,

    /// Override the data seed from the spec.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Override the epsilon sweep with a comma-separated list, e.g. 0.1,0.2,0.3.
    #[arg(long, value_name = "LIST")]
    epsilons: Option<EpsilonList>,

    /// Override the scaler-fit policy: full or train-only.
    #[arg(long, value_name = "POLICY")]
    scaler_fit: Option<ScalerFitSpec>,
}

impl SpecOpts {
    fn load(&self) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::from_json_file(&self.spec)?;
        spec.apply_overrides(
            self.seed,
            self.epsilons.clone().map(|list| list.0),
            self.scaler_fit,
        );
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug)]
struct EpsilonList(Vec<f64>);

impl std::str::FromStr for EpsilonList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err("empty entry in epsilon list".into());
            }
            out.push(
                part.parse::<f64>()
                    .map_err(|e| format!("bad epsilon {part:?}: {e}"))?,
            );
        }
        Ok(EpsilonList(out))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Role {
    Surrogate,
    Target,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Surrogate => "surrogate",
            Role::Target => "target",
        }
    }

    fn section(self, spec: &ExperimentSpec) -> &ModelSpec {
        match self {
            Role::Surrogate => &spec.surrogate,
            Role::Target => &spec.target,
        }
    }

    fn model_file(self) -> String {
        format!("{}_model.bin", self.name())
    }
}

#[derive(Args)]
struct PrepareCmd {
    #[command(flatten)]
    spec: SpecOpts,
    /// Working directory; created if needed.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    spec: SpecOpts,
    /// Working directory holding the dataset cache from `prepare`.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Which model section of the spec to train.
    #[arg(long, value_enum)]
    role: Role,
}

#[derive(Args)]
struct AttackCmd {
    #[command(flatten)]
    spec: SpecOpts,
    /// Working directory holding the dataset cache and the surrogate model.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateCmd {
    /// Working directory holding the dataset cache, both models, and the
    /// crafted batches.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct RunCmd {
    #[command(flatten)]
    spec: SpecOpts,
    /// Output directory for the run; must not already exist. Falls back to
    /// the spec's `output_dir` when omitted.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportCmd {
    /// An existing report file (report.json from a finished run).
    #[arg(long, value_name = "PATH")]
    report: PathBuf,
    /// Directory for the re-emitted CSV files; created if needed.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.category().exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Prepare(cmd) => cmd_prepare(cmd),
        Command::Train(cmd) => cmd_train(cmd),
        Command::Attack(cmd) => cmd_attack(cmd),
        Command::Evaluate(cmd) => cmd_evaluate(cmd),
        Command::Run(cmd) => cmd_run(cmd),
        Command::Report(cmd) => cmd_report(cmd),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))
}

fn load_cached_dataset(dir: &Path) -> Result<FlowDataset> {
    let path = dir.join(DATASET_FILE);
    if !path.exists() {
        return Err(Error::Data(format!(
            "no dataset cache at {}; run `advflow prepare` first",
            path.display()
        )));
    }
    load_dataset(&path)
}

fn load_saved_model(dir: &Path, role: Role) -> Result<MlpModel> {
    let path = dir.join(role.model_file());
    if !path.exists() {
        return Err(Error::Data(format!(
            "no {} model at {}; run `advflow train --role {}` first",
            role.name(),
            path.display(),
            role.name()
        )));
    }
    load_model(&path)
}

fn cmd_prepare(cmd: PrepareCmd) -> Result<()> {
    let spec = cmd.spec.load()?;
    let prepared = prepare_data(&spec.data)?;
    ensure_dir(&cmd.out)?;
    save_dataset(&prepared.dataset, &cmd.out.join(DATASET_FILE))?;
    let summary = prepared.summary();
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_file_atomic(&cmd.out.join(SUMMARY_FILE), text.as_bytes())?;
    println!(
        "prepared {} rows x {} features -> {} train / {} test ({} cells imputed, {} constant features)",
        summary.rows,
        summary.features,
        summary.train_rows,
        summary.test_rows,
        summary.imputed_cells,
        summary.constant_features
    );
    println!("wrote {}", cmd.out.join(DATASET_FILE).display());
    Ok(())
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    let spec = cmd.spec.load()?;
    let dataset = load_cached_dataset(&cmd.out)?;
    let x_train = dataset.train_features()?;
    let y_train = dataset.train_labels();
    let section = cmd.role.section(&spec);
    let outcome = fit(
        &section.layer_specs(x_train.cols()),
        &x_train,
        &y_train,
        &section.train_config(),
    )?;
    let model_path = cmd.out.join(cmd.role.model_file());
    save_model(&outcome.model, &model_path)?;
    write_file_atomic(
        &cmd.out.join(format!("{}_history.csv", cmd.role.name())),
        history_csv(&outcome.history).as_bytes(),
    )?;
    match &outcome.checkpoint {
        Some(c) => println!(
            "trained {} ({} parameters), restored best epoch {} (val_loss {})",
            cmd.role.name(),
            outcome.model.parameter_count(),
            c.epoch,
            c.val_loss
        ),
        None => println!(
            "trained {} ({} parameters), no validation checkpoint",
            cmd.role.name(),
            outcome.model.parameter_count()
        ),
    }
    println!("wrote {}", model_path.display());
    Ok(())
}

fn cmd_attack(cmd: AttackCmd) -> Result<()> {
    let spec = cmd.spec.load()?;
    let dataset = load_cached_dataset(&cmd.out)?;
    let surrogate = load_saved_model(&cmd.out, Role::Surrogate)?;
    let x_test = dataset.test_features()?;
    let y_test = dataset.test_labels();
    let config = spec.attack.config_for(&x_test)?;
    let batches = sweep(&surrogate, &x_test, &y_test, &config)?;

    // Replace the whole batches directory so a narrower sweep never leaves
    // stale epsilons behind for `evaluate` to pick up.
    let dir = cmd.out.join(BATCHES_DIR);
    if dir.exists() {
        fs::remove_dir_all(&dir)
            .map_err(|e| Error::Data(format!("cannot clear {}: {e}", dir.display())))?;
    }
    ensure_dir(&dir)?;
    for (i, batch) in batches.iter().enumerate() {
        save_batch(batch, &dir.join(format!("eps_{i:03}.bin")))?;
    }
    let (lo, hi) = config.clip();
    println!(
        "crafted {} batches over epsilons {:?} (clip [{lo}, {hi}])",
        batches.len(),
        config.epsilons
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn load_batches(dir: &Path) -> Result<Vec<AdversarialBatch>> {
    let batches_dir = dir.join(BATCHES_DIR);
    if !batches_dir.is_dir() {
        return Err(Error::Data(format!(
            "no batches at {}; run `advflow attack` first",
            batches_dir.display()
        )));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&batches_dir)
        .map_err(|e| Error::Data(format!("cannot list {}: {e}", batches_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "bin"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!(
            "no batches at {}; run `advflow attack` first",
            batches_dir.display()
        )));
    }
    paths.iter().map(|p| load_batch(p)).collect()
}

/// What `evaluate` writes alongside the CSV tables.
#[derive(Serialize)]
struct Evaluation {
    baseline: BaselineRecord,
    whitebox: DegradationTable,
    blackbox: DegradationTable,
    notes: Vec<String>,
}

fn cmd_evaluate(cmd: EvaluateCmd) -> Result<()> {
    let dataset = load_cached_dataset(&cmd.out)?;
    let surrogate = load_saved_model(&cmd.out, Role::Surrogate)?;
    let target = load_saved_model(&cmd.out, Role::Target)?;
    let x_test = dataset.test_features()?;
    let y_test = dataset.test_labels();
    let batches = load_batches(&cmd.out)?;

    // The saved batches must have been crafted from this surrogate on this
    // test set, or the white-box/black-box interpretation of the tables is
    // meaningless.
    let surrogate_digest = model_digest(&surrogate);
    let clean_digest = matrix_digest(&x_test);
    for batch in &batches {
        if batch.provenance.model_digest != surrogate_digest {
            return Err(Error::Data(format!(
                "batch at epsilon {} was crafted from a different surrogate; re-run `advflow attack`",
                batch.epsilon
            )));
        }
        if batch.provenance.clean_digest != clean_digest {
            return Err(Error::Data(format!(
                "batch at epsilon {} was crafted from different test data; re-run `advflow attack`",
                batch.epsilon
            )));
        }
    }

    let baseline = run_baseline(&surrogate, &target, &x_test, &y_test)?;
    let whitebox = evaluate_batches(&surrogate, &batches, &y_test)?;
    let blackbox = evaluate_batches(&target as &dyn Predictor, &batches, &y_test)?;
    let notes = dominance_notes(&whitebox, &blackbox);

    write_file_atomic(
        &cmd.out.join("whitebox_report.csv"),
        whitebox.to_csv().as_bytes(),
    )?;
    write_file_atomic(
        &cmd.out.join("blackbox_report.csv"),
        blackbox.to_csv().as_bytes(),
    )?;
    write_file_atomic(
        &cmd.out.join("whitebox_curve.csv"),
        curve_csv(&whitebox).as_bytes(),
    )?;
    write_file_atomic(
        &cmd.out.join("blackbox_curve.csv"),
        curve_csv(&blackbox).as_bytes(),
    )?;
    let evaluation = Evaluation {
        baseline,
        whitebox,
        blackbox,
        notes,
    };
    let mut text = serde_json::to_string_pretty(&evaluation)?;
    text.push('\n');
    write_file_atomic(&cmd.out.join(EVALUATION_FILE), text.as_bytes())?;

    println!(
        "clean accuracy: surrogate {:.4}, target {:.4}",
        evaluation.baseline.surrogate.accuracy, evaluation.baseline.target.accuracy
    );
    if let (Some(w), Some(b)) = (evaluation.whitebox.rows.last(), evaluation.blackbox.rows.last())
    {
        println!(
            "at epsilon {}: white-box accuracy {:.4}, black-box {:.4}",
            w.epsilon, w.accuracy, b.accuracy
        );
    }
    for note in &evaluation.notes {
        println!("note: {note}");
    }
    println!("wrote {}", cmd.out.join(EVALUATION_FILE).display());
    Ok(())
}

fn cmd_run(cmd: RunCmd) -> Result<()> {
    let spec = cmd.spec.load()?;
    let out = match cmd.out.or_else(|| spec.output_dir.clone()) {
        Some(out) => out,
        None => {
            return Err(Error::InvalidArgument(
                "no output directory: pass --out or set output_dir in the spec".into(),
            ))
        }
    };
    let report = run_experiment(&spec, &out)?;
    println!("run complete: {}", out.display());
    println!(
        "clean accuracy: surrogate {:.4}, target {:.4}",
        report.baseline.surrogate.accuracy, report.baseline.target.accuracy
    );
    if let (Some(w), Some(b)) = (report.whitebox.rows.last(), report.blackbox.rows.last()) {
        println!(
            "at epsilon {}: white-box accuracy {:.4}, black-box {:.4}",
            w.epsilon, w.accuracy, b.accuracy
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}

fn cmd_report(cmd: ReportCmd) -> Result<()> {
    let report = RunReport::from_json_file(&cmd.report)?;
    report.validate()?;
    ensure_dir(&cmd.out)?;
    emit_report_tables(&report, &cmd.out)?;
    println!(
        "re-emitted tables and curves from {} into {}",
        cmd.report.display(),
        cmd.out.display()
    );
    Ok(())
}
