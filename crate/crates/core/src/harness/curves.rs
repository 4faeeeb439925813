//! CSV renderings of training histories and degradation curves.
//!
//! All renderings are plain `Display` formatting of `f64`, which round-trips
//! exactly and is deterministic, so identical runs produce byte-identical
//! files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::RunReport;
use crate::metrics::DegradationTable;
use crate::mlp::EpochRecord;
use crate::{Error, Result};

/// Per-epoch loss/accuracy curve. Validation columns are empty when no
/// validation split was configured. An empty history yields the header alone.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,train_accuracy,val_accuracy\n");
    for record in history {
        let val_loss = record.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let val_accuracy = record
            .val_accuracy
            .map(|v| v.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            record.epoch, record.train_loss, val_loss, record.train_accuracy, val_accuracy
        );
    }
    out
}

/// Accuracy/F1-vs-epsilon curve for one attack phase.
pub fn curve_csv(table: &DegradationTable) -> String {
    let mut out = String::from("epsilon,accuracy,f1\n");
    for row in &table.rows {
        let _ = writeln!(out, "{},{},{}", row.epsilon, row.accuracy, row.f1);
    }
    out
}

/// Write both history curves and both degradation curves into `dir`,
/// creating it if needed.
pub fn emit_curves(
    surrogate_history: &[EpochRecord],
    target_history: &[EpochRecord],
    whitebox: &DegradationTable,
    blackbox: &DegradationTable,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))?;
    let files: [(&str, String); 4] = [
        ("surrogate_history.csv", history_csv(surrogate_history)),
        ("target_history.csv", history_csv(target_history)),
        ("whitebox_curve.csv", curve_csv(whitebox)),
        ("blackbox_curve.csv", curve_csv(blackbox)),
    ];
    for (name, text) in files {
        crate::write_file_atomic(&dir.join(name), text.as_bytes())?;
    }
    Ok(())
}

/// Re-emit every CSV artifact derivable from a report: the two full
/// degradation tables plus the four curves from [`emit_curves`].
pub fn emit_report_tables(report: &RunReport, dir: &Path) -> Result<()> {
    emit_curves(
        &report.surrogate.history,
        &report.target.history,
        &report.whitebox,
        &report.blackbox,
        dir,
    )?;
    crate::write_file_atomic(
        &dir.join("whitebox_report.csv"),
        report.whitebox.to_csv().as_bytes(),
    )?;
    crate::write_file_atomic(
        &dir.join("blackbox_report.csv"),
        report.blackbox.to_csv().as_bytes(),
    )?;
    Ok(())
}
