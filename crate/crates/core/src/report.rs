//! Accreditation summaries, reviewer workload, and distribution drift.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certifier::RULE_CATALOGUE;
use crate::model::{rfc3339, CertificationRecord, Label, ReviewAction, Status};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Period {
    #[serde(default, with = "opt_time")]
    pub from: Option<DateTime<Utc>>,
    #[serde(default, with = "opt_time")]
    pub to: Option<DateTime<Utc>>,
}

impl Period {
    pub fn all() -> Period {
        Period::default()
    }

    /// Inclusive on both ends.
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.from.is_none_or(|f| t >= f) && self.to.is_none_or(|e| t <= e)
    }
}

mod opt_time {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => s.serialize_some(&super::rfc3339::format(t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DateTime<Utc>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| super::rfc3339::parse(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub id: String,
    pub effect: Option<Label>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccreditationReport {
    pub period: Period,
    pub total_records: usize,
    pub triage_counts: BTreeMap<Label, usize>,
    pub status_counts: BTreeMap<Status, usize>,
    /// Declared level, qualified as `Framework:Level`.
    pub level_distribution: BTreeMap<String, usize>,
    pub agreement_count: usize,
    /// Rule histogram over rejected records.
    pub rejection_reasons: BTreeMap<String, usize>,
    pub review_summary: BTreeMap<ReviewAction, usize>,
    /// Flag counts per bias category.
    pub governance_flags: BTreeMap<String, usize>,
    /// Record counts per `model_id@model_version`.
    pub provenance_models: BTreeMap<String, usize>,
    pub rule_catalogue: Vec<RuleEntry>,
}

pub fn summary_report(records: &[CertificationRecord], period: Period) -> AccreditationReport {
    let mut triage: BTreeMap<Label, usize> = Label::ALL.iter().map(|l| (*l, 0)).collect();
    let mut status_counts = BTreeMap::new();
    let mut level_distribution = BTreeMap::new();
    let mut rejection_reasons = BTreeMap::new();
    let mut review_summary: BTreeMap<ReviewAction, usize> =
        ReviewAction::ALL.iter().map(|a| (*a, 0)).collect();
    let mut governance_flags = BTreeMap::new();
    let mut provenance_models = BTreeMap::new();
    let mut agreement_count = 0;
    let mut total = 0;

    for r in records.iter().filter(|r| period.contains(r.certified_at)) {
        total += 1;
        *triage.entry(r.label).or_insert(0) += 1;
        *status_counts.entry(r.status).or_insert(0) += 1;
        let level = format!("{}:{}", r.item.declared_level.framework(), r.item.declared_level.name());
        *level_distribution.entry(level).or_insert(0) += 1;
        if r.alignment.agreement {
            agreement_count += 1;
        }
        if r.status == Status::Rejected {
            for rule in &r.decision_trace {
                *rejection_reasons.entry(rule.clone()).or_insert(0) += 1;
            }
        }
        if let Some(review) = &r.review {
            *review_summary.entry(review.action).or_insert(0) += 1;
        }
        for f in &r.governance.flags {
            *governance_flags.entry(format!("{:?}", f.category)).or_insert(0) += 1;
        }
        let model = format!("{}@{}", r.provenance.model_id, r.provenance.model_version);
        *provenance_models.entry(model).or_insert(0) += 1;
    }

    AccreditationReport {
        period,
        total_records: total,
        triage_counts: triage,
        status_counts,
        level_distribution,
        agreement_count,
        rejection_reasons,
        review_summary,
        governance_flags,
        provenance_models,
        rule_catalogue: RULE_CATALOGUE
            .iter()
            .map(|r| RuleEntry {
                id: r.id.to_string(),
                effect: r.effect,
                description: r.description.to_string(),
            })
            .collect(),
    }
}

fn period_text(p: &Period) -> String {
    let side = |t: &Option<DateTime<Utc>>| t.as_ref().map(rfc3339::format).unwrap_or_else(|| "open".into());
    format!("{} to {}", side(&p.from), side(&p.to))
}

/// Human-readable rendering organized by accreditation evidence category.
pub fn render_document(report: &AccreditationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Item certification report\n");
    let _ = writeln!(s, "Period: {}", period_text(&report.period));
    let _ = writeln!(s, "Records: {}\n", report.total_records);

    let _ = writeln!(s, "## Provenance documentation\n");
    for (model, n) in &report.provenance_models {
        let _ = writeln!(s, "- {model}: {n} items");
    }

    let _ = writeln!(s, "\n## Validation and review records\n");
    for (label, n) in &report.triage_counts {
        let _ = writeln!(s, "- {label}: {n}");
    }
    let _ = writeln!(s);
    for (status, n) in &report.status_counts {
        let _ = writeln!(s, "- {status:?}: {n}");
    }
    let _ = writeln!(s, "\nReviewer decisions:");
    for (action, n) in &report.review_summary {
        let _ = writeln!(s, "- {action:?}: {n}");
    }
    if !report.rejection_reasons.is_empty() {
        let _ = writeln!(s, "\nRejection reasons:");
        for (rule, n) in &report.rejection_reasons {
            let _ = writeln!(s, "- {rule}: {n}");
        }
    }

    let _ = writeln!(s, "\n## Curricular alignment reports\n");
    for (level, n) in &report.level_distribution {
        let _ = writeln!(s, "- {level}: {n}");
    }
    let _ = writeln!(
        s,
        "\nPredicted level agrees with declared level for {} of {} items.",
        report.agreement_count, report.total_records
    );

    let _ = writeln!(s, "\n## Ethical and governance assurance\n");
    if report.governance_flags.is_empty() {
        let _ = writeln!(s, "No policy terms flagged.");
    }
    for (category, n) in &report.governance_flags {
        let _ = writeln!(s, "- {category}: {n} flags");
    }

    let _ = writeln!(s, "\n## Decision rules\n");
    for rule in &report.rule_catalogue {
        let effect = rule.effect.map(|l| l.to_string()).unwrap_or_else(|| "annotation".into());
        let _ = writeln!(s, "- `{}` ({effect}): {}", rule.id, rule.description);
    }
    s
}

// ---------------------------------------------------------------------------
// Workload
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("workload sample is empty")]
    EmptySample,
    #[error("mean review time without assistance must be positive")]
    ZeroBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub mean_without: f64,
    pub mean_with: f64,
    /// (without − with) / without; negative when reviews got slower.
    pub reduction_fraction: f64,
}

impl WorkloadReport {
    /// Reduction as a whole percentage, e.g. `31%`.
    pub fn percent_label(&self) -> String {
        format!("{}%", (self.reduction_fraction * 100.0).round() as i64)
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn workload_report(without: &[f64], with: &[f64]) -> Result<WorkloadReport, WorkloadError> {
    let a = mean(without).ok_or(WorkloadError::EmptySample)?;
    let b = mean(with).ok_or(WorkloadError::EmptySample)?;
    if a <= 0.0 {
        return Err(WorkloadError::ZeroBaseline);
    }
    Ok(WorkloadReport {
        mean_without: a,
        mean_with: b,
        reduction_fraction: (a - b) / a,
    })
}

// ---------------------------------------------------------------------------
// Drift
// ---------------------------------------------------------------------------

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DriftError {
    #[error("distributions have different supports ({0} vs {1})")]
    SupportMismatch(usize, usize),
    #[error("distribution does not sum to 1 (sum {0})")]
    NotNormalized(f64),
}

fn check(p: &[f64]) -> Result<(), DriftError> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(DriftError::NotNormalized(sum));
    }
    Ok(())
}

/// Total variation distance: ½ Σ |p − q|.
pub fn drift(p: &[f64], q: &[f64]) -> Result<f64, DriftError> {
    if p.len() != q.len() {
        return Err(DriftError::SupportMismatch(p.len(), q.len()));
    }
    check(p)?;
    check(q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Drift between two distributions keyed by category. Both maps must
/// cover the same categories.
pub fn drift_by_key<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> Result<f64, DriftError> {
    if p.len() != q.len() || p.keys().zip(q.keys()).any(|(a, b)| a != b) {
        return Err(DriftError::SupportMismatch(p.len(), q.len()));
    }
    let a: Vec<f64> = p.values().copied().collect();
    let b: Vec<f64> = q.values().copied().collect();
    drift(&a, &b)
}

/// Share of records per label, in Green, Yellow, Red order.
pub fn label_distribution(records: &[CertificationRecord]) -> Option<Vec<f64>> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    Some(
        Label::ALL
            .iter()
            .map(|l| records.iter().filter(|r| r.label == *l).count() as f64 / n)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_example() {
        let r = workload_report(&[60.0, 68.0], &[40.0, 48.0]).unwrap();
        assert!((r.reduction_fraction - 0.3125).abs() < 1e-12);
        assert_eq!(r.percent_label(), "31%");
        assert_eq!(workload_report(&[50.0], &[50.0]).unwrap().reduction_fraction, 0.0);
        assert!(workload_report(&[40.0], &[50.0]).unwrap().reduction_fraction < 0.0);
        assert_eq!(workload_report(&[], &[1.0]), Err(WorkloadError::EmptySample));
    }

    #[test]
    fn drift_examples() {
        let d = drift(&[0.428, 0.406, 0.166], &[0.396, 0.430, 0.174]).unwrap();
        assert!((d - 0.032).abs() < 1e-9, "{d}");
        assert_eq!(drift(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(drift(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!(matches!(drift(&[0.5, 0.6], &[0.5, 0.5]), Err(DriftError::NotNormalized(_))));
        assert_eq!(drift(&[1.0], &[0.5, 0.5]), Err(DriftError::SupportMismatch(1, 2)));
    }

    #[test]
    fn empty_report_has_zero_counts() {
        let r = summary_report(&[], Period::all());
        assert_eq!(r.total_records, 0);
        assert_eq!(r.triage_counts.values().sum::<usize>(), 0);
        assert_eq!(r.triage_counts.len(), 3);
        let doc = render_document(&r);
        for h in [
            "Provenance documentation",
            "Validation and review records",
            "Curricular alignment reports",
            "Ethical and governance assurance",
        ] {
            assert!(doc.contains(h));
        }
    }
}
