//! Span-level and token-level precision/recall/F1, plus an error
//! breakdown that separates misses, spurious predictions, and
//! boundary-or-tag confusions.
//!
//! Metrics are micro-averaged: TP/FP/FN pool over all documents before
//! the ratios are taken. Degenerate ratios (zero denominators) are
//! defined as 0 so aggregation stays total.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Document, Span};
use crate::iob::{encode_iob, Tag};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("document id `{id}` present only in the {side} set")]
    MissingDoc { id: String, side: &'static str },
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("document `{id}`: tag sequences differ in length: {pred} vs {gold}")]
    LengthMismatch { id: String, pred: usize, gold: usize },
    #[error("document `{id}`: prediction text differs from gold text")]
    TextMismatch { id: String },
}

/// Counts plus the derived ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    #[serde(rename = "tp")]
    pub true_positives: usize,
    #[serde(rename = "fp")]
    pub false_positives: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from_precision_recall(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Builds [`Metrics`] from raw counts. Ratios with a zero denominator
/// are 0.
pub fn prf(tp: usize, fp: usize, fn_count: usize) -> Metrics {
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_count > 0 { tp as f64 / (tp + fn_count) as f64 } else { 0.0 };
    Metrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_count,
        precision,
        recall,
        f1: f1_from_precision_recall(precision, recall),
    }
}

fn index_by_id(docs: &[Document]) -> Result<BTreeMap<&str, &Document>, EvalError> {
    let mut map = BTreeMap::new();
    for doc in docs {
        if map.insert(doc.id.as_str(), doc).is_some() {
            return Err(EvalError::DuplicateDocId(doc.id.clone()));
        }
    }
    Ok(map)
}

fn paired<'a>(
    pred: &'a [Document],
    gold: &'a [Document],
) -> Result<Vec<(&'a Document, &'a Document)>, EvalError> {
    let pred_map = index_by_id(pred)?;
    let gold_map = index_by_id(gold)?;
    for id in pred_map.keys() {
        if !gold_map.contains_key(id) {
            return Err(EvalError::MissingDoc { id: id.to_string(), side: "prediction" });
        }
    }
    // Pair in gold order so reports list errors the way the gold set
    // reads.
    let mut pairs = Vec::with_capacity(gold.len());
    for g in gold {
        let p = pred_map
            .get(g.id.as_str())
            .ok_or_else(|| EvalError::MissingDoc { id: g.id.clone(), side: "gold" })?;
        pairs.push((*p, g));
    }
    Ok(pairs)
}

/// Entity-level metrics under exact-span matching: a prediction counts
/// only if start, end and label all equal a gold span's, one to one.
/// Prediction and gold sets must cover the same document ids.
pub fn entity_metrics(pred: &[Document], gold: &[Document]) -> Result<Metrics, EvalError> {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_count = 0;
    for (p, g) in paired(pred, gold)? {
        let pred_set: BTreeSet<&Span> = p.spans.iter().collect();
        let gold_set: BTreeSet<&Span> = g.spans.iter().collect();
        tp += pred_set.intersection(&gold_set).count();
        fp += pred_set.difference(&gold_set).count();
        fn_count += gold_set.difference(&pred_set).count();
    }
    Ok(prf(tp, fp, fn_count))
}

/// Token-level metrics with a binary reading: a token is positive when
/// its tag is not `O`. Sequences are paired positionally and must have
/// equal lengths.
pub fn token_metrics(docs: &[(Vec<Tag>, Vec<Tag>)]) -> Result<Metrics, EvalError> {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_count = 0;
    for (i, (pred, gold)) in docs.iter().enumerate() {
        if pred.len() != gold.len() {
            return Err(EvalError::LengthMismatch {
                id: format!("#{i}"),
                pred: pred.len(),
                gold: gold.len(),
            });
        }
        for (p, g) in pred.iter().zip(gold) {
            let p_pos = *p != Tag::Outside;
            let g_pos = *g != Tag::Outside;
            match (p_pos, g_pos) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_count += 1,
                (false, false) => {}
            }
        }
    }
    Ok(prf(tp, fp, fn_count))
}

/// A span tied to its document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpanRef {
    pub doc_id: String,
    pub span: Span,
}

/// An unmatched prediction that overlaps a gold span, paired with the
/// gold span of maximal overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub doc_id: String,
    pub predicted: Span,
    pub gold: Span,
}

/// The error taxonomy over exact-match results. Every unmatched gold
/// span is a false negative; an unmatched prediction is a false
/// positive when it overlaps no gold span, otherwise a confusion.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ErrorReport {
    pub false_negatives: Vec<SpanRef>,
    pub false_positives: Vec<SpanRef>,
    pub boundary_or_tag_confusions: Vec<Confusion>,
}

/// Classifies every mismatch between prediction and gold sets.
pub fn error_report(pred: &[Document], gold: &[Document]) -> Result<ErrorReport, EvalError> {
    let mut report = ErrorReport::default();
    for (p, g) in paired(pred, gold)? {
        let pred_set: BTreeSet<&Span> = p.spans.iter().collect();
        let gold_set: BTreeSet<&Span> = g.spans.iter().collect();
        for span in &g.spans {
            if !pred_set.contains(span) {
                report
                    .false_negatives
                    .push(SpanRef { doc_id: g.id.clone(), span: span.clone() });
            }
        }
        for span in &p.spans {
            if gold_set.contains(span) {
                continue;
            }
            // Maximal-overlap gold span; ties go to the earliest.
            let best = g
                .spans
                .iter()
                .filter(|gs| gs.overlaps(span))
                .max_by(|a, b| {
                    let ov_a = a.end.min(span.end) - a.start.max(span.start);
                    let ov_b = b.end.min(span.end) - b.start.max(span.start);
                    ov_a.cmp(&ov_b).then_with(|| b.cmp(a))
                });
            match best {
                Some(gs) => report.boundary_or_tag_confusions.push(Confusion {
                    doc_id: g.id.clone(),
                    predicted: span.clone(),
                    gold: gs.clone(),
                }),
                None => report
                    .false_positives
                    .push(SpanRef { doc_id: g.id.clone(), span: span.clone() }),
            }
        }
    }
    Ok(report)
}

/// Both metric granularities plus the error breakdown, as produced by
/// [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub entity: Metrics,
    pub token: Metrics,
    pub errors: ErrorReport,
}

/// Evaluates predictions against gold documents. Token tags for both
/// sides come from the IOB encoding of each document, so the two texts
/// must be identical per id.
pub fn evaluate(pred: &[Document], gold: &[Document]) -> Result<EvalSummary, EvalError> {
    for (p, g) in paired(pred, gold)? {
        if p.text != g.text {
            return Err(EvalError::TextMismatch { id: g.id.clone() });
        }
    }
    let entity = entity_metrics(pred, gold)?;
    let pairs: Vec<(Vec<Tag>, Vec<Tag>)> = paired(pred, gold)?
        .into_iter()
        .map(|(p, g)| (encode_iob(p).sequence.tags, encode_iob(g).sequence.tags))
        .collect();
    let token = token_metrics(&pairs)?;
    let errors = error_report(pred, gold)?;
    Ok(EvalSummary { entity, token, errors })
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "level    tp      fp      fn      precision  recall   f1")?;
        for (name, m) in [("entity", &self.entity), ("token", &self.token)] {
            writeln!(
                f,
                "{name:<8} {:<7} {:<7} {:<7} {:<10.4} {:<8.4} {:.4}",
                m.true_positives, m.false_positives, m.false_negatives,
                m.precision, m.recall, m.f1
            )?;
        }
        writeln!(
            f,
            "errors: {} missed, {} spurious, {} boundary/tag confusions",
            self.errors.false_negatives.len(),
            self.errors.false_positives.len(),
            self.errors.boundary_or_tag_confusions.len()
        )
    }
}
