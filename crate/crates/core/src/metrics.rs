//! Binary classification scoring: confusion counts, per-class and averaged
//! precision/recall/F1, accuracy, rank-based ROC-AUC, and the per-epsilon
//! degradation table.
//!
//! Class 1 (the attack class) is the positive class throughout. Zero
//! denominators never panic or poison a sweep: the affected metric is
//! reported as 0 and flagged degenerate.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Known inconsistency in the published reference numbers this crate is
/// checked against: the surrogate's quoted headline accuracy does not follow
/// from its own confusion counts. The counts are authoritative here.
pub const SURROGATE_REFERENCE_DISCREPANCY: &str =
    "the published surrogate confusion counts (TN=42448, FP=745, FN=155, TP=47512) give \
     99.01% accuracy, while the headline quoted alongside them is 99.05%; derived metrics \
     in this crate follow the counts";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_positive: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_negative + self.false_positive + self.false_negative + self.true_positive
    }
}

/// Count prediction outcomes with class 1 as positive.
pub fn confusion(labels: &[u8], preds: &[u8]) -> Result<ConfusionMatrix> {
    if labels.len() != preds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels vs {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot score an empty prediction set".into(),
        ));
    }
    let mut cm = ConfusionMatrix {
        true_negative: 0,
        false_positive: 0,
        false_negative: 0,
        true_positive: 0,
    };
    for (&y, &p) in labels.iter().zip(preds) {
        match (y, p) {
            (0, 0) => cm.true_negative += 1,
            (0, 1) => cm.false_positive += 1,
            (1, 0) => cm.false_negative += 1,
            (1, 1) => cm.true_positive += 1,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "labels must be 0 or 1, saw ({y}, {p})"
                )))
            }
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// True when any of this class's denominators was zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: ConfusionMatrix,
    /// Class 0 metrics.
    pub benign: ClassMetrics,
    /// Class 1 metrics.
    pub attack: ClassMetrics,
    pub accuracy: f64,
    /// Unweighted mean over the two classes.
    pub macro_avg: AverageMetrics,
    /// Support-weighted mean; these are the headline numbers.
    pub weighted_avg: AverageMetrics,
    /// Present only when per-sample scores were supplied.
    pub roc_auc: Option<f64>,
    /// True when any denominator anywhere was zero.
    pub degenerate: bool,
}

fn ratio(num: usize, den: usize, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(precision: f64, recall: f64, degenerate: &mut bool) -> f64 {
    let sum = precision + recall;
    if sum == 0.0 {
        *degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / sum
    }
}

/// Derive every report field from the four counts. ROC-AUC is left out; use
/// [`report`] when scores are available.
pub fn report_from_confusion(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let (tn, fp, fn_, tp) = (
        cm.true_negative,
        cm.false_positive,
        cm.false_negative,
        cm.true_positive,
    );

    let mut benign_degen = false;
    let benign_precision = ratio(tn, tn + fn_, &mut benign_degen);
    let benign_recall = ratio(tn, tn + fp, &mut benign_degen);
    let benign_f1 = f1_of(benign_precision, benign_recall, &mut benign_degen);
    let benign_support = tn + fp;

    let mut attack_degen = false;
    let attack_precision = ratio(tp, tp + fp, &mut attack_degen);
    let attack_recall = ratio(tp, tp + fn_, &mut attack_degen);
    let attack_f1 = f1_of(attack_precision, attack_recall, &mut attack_degen);
    let attack_support = tp + fn_;

    let accuracy = (tp + tn) as f64 / total as f64;
    let macro_avg = AverageMetrics {
        precision: (benign_precision + attack_precision) / 2.0,
        recall: (benign_recall + attack_recall) / 2.0,
        f1: (benign_f1 + attack_f1) / 2.0,
    };
    let weight = |b: f64, a: f64| {
        (benign_support as f64 * b + attack_support as f64 * a) / total as f64
    };
    let weighted_avg = AverageMetrics {
        precision: weight(benign_precision, attack_precision),
        // Support-weighted recall collapses algebraically to (TP+TN)/total;
        // computing it that way keeps the identity with accuracy exact.
        recall: accuracy,
        f1: weight(benign_f1, attack_f1),
    };

    Ok(ClassificationReport {
        confusion: *cm,
        benign: ClassMetrics {
            precision: benign_precision,
            recall: benign_recall,
            f1: benign_f1,
            support: benign_support,
            degenerate: benign_degen,
        },
        attack: ClassMetrics {
            precision: attack_precision,
            recall: attack_recall,
            f1: attack_f1,
            support: attack_support,
            degenerate: attack_degen,
        },
        accuracy,
        macro_avg,
        weighted_avg,
        roc_auc: None,
        degenerate: benign_degen || attack_degen,
    })
}

/// Score predictions against labels; when `scores` (positive-class
/// probabilities) are given, ROC-AUC is attached.
pub fn report(
    labels: &[u8],
    preds: &[u8],
    scores: Option<&[f64]>,
) -> Result<ClassificationReport> {
    let cm = confusion(labels, preds)?;
    let mut rep = report_from_confusion(&cm)?;
    if let Some(scores) = scores {
        rep.roc_auc = Some(roc_auc(labels, scores)?);
    }
    Ok(rep)
}

/// Probability that a random positive sample outranks a random negative one
/// (Mann–Whitney formulation); tied scores count one half.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {bad}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }

    // Ascending 1-based ranks with ties sharing their average rank.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }

    let pos_rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| r)
        .sum();
    let auc =
        (pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64);
    Ok(auc)
}

/// One row of the per-epsilon degradation table; metrics are the weighted
/// headline values as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub epsilon: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationTable {
    pub rows: Vec<DegradationRow>,
}

/// Collapse per-epsilon reports into an ascending-epsilon table of headline
/// metrics. Input order does not matter; duplicate epsilons are rejected.
pub fn degradation_table(
    reports: &[(f64, ClassificationReport)],
) -> Result<DegradationTable> {
    let mut rows: Vec<DegradationRow> = reports
        .iter()
        .map(|(eps, rep)| DegradationRow {
            epsilon: *eps,
            accuracy: rep.accuracy,
            precision: rep.weighted_avg.precision,
            recall: rep.weighted_avg.recall,
            f1: rep.weighted_avg.f1,
        })
        .collect();
    rows.sort_by(|a, b| a.epsilon.partial_cmp(&b.epsilon).expect("finite epsilon"));
    for pair in rows.windows(2) {
        if pair[0].epsilon == pair[1].epsilon {
            return Err(Error::DuplicateEpsilon(pair[0].epsilon));
        }
    }
    Ok(DegradationTable { rows })
}

impl DegradationTable {
    /// CSV with the table's column order: epsilon, accuracy, precision,
    /// recall, F1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,accuracy,precision,recall,f1\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epsilon, r.accuracy, r.precision, r.recall, r.f1
            ));
        }
        out
    }
}
