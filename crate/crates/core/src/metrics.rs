//! Label accuracy, evidence recall/precision and the FEVEROUS score.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClaimRecord, ElementId, Label};
use crate::evidence::{MAX_CELLS, MAX_SENTENCES};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no claims to score")]
    Empty,
    #[error("claim {0} appears more than once")]
    Duplicate(u64),
    #[error("no prediction for claim {0}")]
    MissingPrediction(u64),
    #[error("prediction for unknown claim {0}")]
    UnknownClaim(u64),
    #[error("prediction for claim {claim_id} exceeds the evidence limit ({tabular} tabular, {textual} textual)")]
    OverLimit {
        claim_id: u64,
        tabular: usize,
        textual: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "id")]
    pub claim_id: u64,
    #[serde(rename = "predicted_label")]
    pub label: Label,
    #[serde(rename = "predicted_evidence")]
    pub evidence: Vec<ElementId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label_accuracy: f64,
    pub evidence_recall: f64,
    pub evidence_precision: f64,
    pub feverous_score: f64,
    pub n: usize,
}

/// Keep the 25 best-scoring tabular ids (cells, header cells, list items)
/// and the 5 best sentences/captions. Output is ordered by descending
/// score, ties by id; duplicate ids keep their first occurrence.
pub fn enforce_limits(scored: &[(ElementId, f64)]) -> Vec<ElementId> {
    let mut sorted: Vec<&(ElementId, f64)> = scored.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut seen = HashSet::new();
    let (mut tabular, mut textual) = (0, 0);
    let mut out = Vec::new();
    for (id, _) in sorted {
        if !seen.insert(id) {
            continue;
        }
        let budget = if id.kind().is_tabular() { &mut tabular } else { &mut textual };
        let cap = if id.kind().is_tabular() { MAX_CELLS } else { MAX_SENTENCES };
        if *budget < cap {
            *budget += 1;
            out.push(id.clone());
        }
    }
    out
}

fn check_limits(p: &Prediction) -> Result<(), MetricsError> {
    let unique: HashSet<&ElementId> = p.evidence.iter().collect();
    let tabular = unique.iter().filter(|id| id.kind().is_tabular()).count();
    let textual = unique.len() - tabular;
    if tabular > MAX_CELLS || textual > MAX_SENTENCES {
        return Err(MetricsError::OverLimit {
            claim_id: p.claim_id,
            tabular,
            textual,
        });
    }
    Ok(())
}

/// Pair predictions with gold records by claim id; both sides must cover
/// exactly the same claims.
pub fn align<'a>(
    preds: &'a [Prediction],
    gold: &'a [ClaimRecord],
) -> Result<Vec<(&'a Prediction, &'a ClaimRecord)>, MetricsError> {
    if gold.is_empty() && preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut by_id: HashMap<u64, &Prediction> = HashMap::new();
    for p in preds {
        if by_id.insert(p.claim_id, p).is_some() {
            return Err(MetricsError::Duplicate(p.claim_id));
        }
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(gold.len());
    for g in gold {
        if !seen.insert(g.claim_id) {
            return Err(MetricsError::Duplicate(g.claim_id));
        }
        let p = by_id.get(&g.claim_id).ok_or(MetricsError::MissingPrediction(g.claim_id))?;
        out.push((*p, g));
    }
    if let Some(p) = preds.iter().find(|p| !seen.contains(&p.claim_id)) {
        return Err(MetricsError::UnknownClaim(p.claim_id));
    }
    Ok(out)
}

/// Some full gold set is contained in the prediction. A claim without gold
/// sets is covered vacuously.
pub fn covers(predicted: &[ElementId], sets: &[Vec<ElementId>]) -> bool {
    if sets.is_empty() {
        return true;
    }
    let pred: HashSet<&ElementId> = predicted.iter().collect();
    sets.iter().any(|set| set.iter().all(|id| pred.contains(id)))
}

fn mean_over<F>(preds: &[Prediction], gold: &[ClaimRecord], f: F) -> Result<f64, MetricsError>
where
    F: Fn(&Prediction, &ClaimRecord) -> bool,
{
    let pairs = align(preds, gold)?;
    let hits = pairs.iter().filter(|(p, g)| f(p, g)).count();
    Ok(hits as f64 / pairs.len() as f64)
}

pub fn label_accuracy(preds: &[Prediction], gold: &[ClaimRecord]) -> Result<f64, MetricsError> {
    mean_over(preds, gold, |p, g| p.label == g.label)
}

pub fn evidence_recall(preds: &[Prediction], gold: &[ClaimRecord]) -> Result<f64, MetricsError> {
    mean_over(preds, gold, |p, g| covers(&p.evidence, &g.evidence_sets))
}

/// Mean over claims with a non-empty prediction of the fraction of
/// predicted ids found in any gold set; 0 when no claim predicts evidence.
pub fn evidence_precision(preds: &[Prediction], gold: &[ClaimRecord]) -> Result<f64, MetricsError> {
    let pairs = align(preds, gold)?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for (p, g) in pairs {
        let pred: HashSet<&ElementId> = p.evidence.iter().collect();
        if pred.is_empty() {
            continue;
        }
        let union: HashSet<&ElementId> = g.evidence_sets.iter().flatten().collect();
        total += pred.iter().filter(|id| union.contains(*id)).count() as f64 / pred.len() as f64;
        counted += 1;
    }
    Ok(if counted == 0 { 0.0 } else { total / counted as f64 })
}

/// Label correct and some gold set fully covered, for every label
/// including NEI. Predictions must respect the evidence limits.
pub fn feverous_score(preds: &[Prediction], gold: &[ClaimRecord]) -> Result<f64, MetricsError> {
    for p in preds {
        check_limits(p)?;
    }
    mean_over(preds, gold, |p, g| p.label == g.label && covers(&p.evidence, &g.evidence_sets))
}

pub fn evaluate(preds: &[Prediction], gold: &[ClaimRecord]) -> Result<MetricsReport, MetricsError> {
    Ok(MetricsReport {
        label_accuracy: label_accuracy(preds, gold)?,
        evidence_recall: evidence_recall(preds, gold)?,
        evidence_precision: evidence_precision(preds, gold)?,
        feverous_score: feverous_score(preds, gold)?,
        n: gold.len(),
    })
}
