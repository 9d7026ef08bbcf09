//! Traffic-light decision engine.
//!
//! Red rules are evaluated first, then yellow rules; every rule that fires
//! is written to the decision trace in catalogue order, and the label is
//! the most severe effect in the trace.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::clock::Clock;
use crate::model::{
    max_severity, validate_item, AlignmentRecord, AssessmentItem, BiasFlag, CertificationRecord,
    GovernanceRecord, HexDigest, Label, ModelError, ProvenanceRecord, ReviewAction, ReviewRecord,
    RiskLevel, Status, Verdict, Violation, SCHEMA_VERSION,
};
use crate::ledger::{AuditSink, EventType, LedgerError};
use crate::rationale::ContradictionReport;

pub const RULE_CONFIDENCE_BELOW_RED: &str = "confidence_below_red";
pub const RULE_CONTRADICTION: &str = "rationale_contradiction";
pub const RULE_ATTRIBUTION_IRRELEVANT: &str = "attribution_irrelevant";
pub const RULE_MAJOR_BIAS: &str = "major_bias_flag";
pub const RULE_CONFIDENCE_BELOW_GREEN: &str = "confidence_below_green";
pub const RULE_RATIONALE_INCOMPLETE: &str = "rationale_incomplete";
pub const RULE_LEVEL_DISAGREEMENT: &str = "level_disagreement";
pub const RULE_ATTRIBUTION_SUSPICIOUS: &str = "attribution_suspicious";
pub const RULE_MINOR_BIAS: &str = "minor_bias_flag";
pub const RULE_GREEN: &str = "green_criteria_met";
pub const RULE_REVIEW_OVERRIDE: &str = "review_override";
pub const RULE_REVERIFICATION_PASSED: &str = "reverification_passed";
pub const RULE_HUMAN_APPROVED: &str = "human_approved_unchanged";
pub const RULE_HUMAN_APPROVED_EDITS: &str = "human_approved_with_edits";
pub const RULE_HUMAN_REJECTED: &str = "human_rejected";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rule {
    pub id: &'static str,
    /// Label the rule forces when it fires; `None` for review annotations.
    pub effect: Option<Label>,
    pub description: &'static str,
}

/// Published rule catalogue, in evaluation order.
pub const RULE_CATALOGUE: &[Rule] = &[
    Rule { id: RULE_CONFIDENCE_BELOW_RED, effect: Some(Label::Red), description: "Verifier confidence is below the red threshold." },
    Rule { id: RULE_CONTRADICTION, effect: Some(Label::Red), description: "The rationale contradicts the declared level or the answer key." },
    Rule { id: RULE_ATTRIBUTION_IRRELEVANT, effect: Some(Label::Red), description: "No content token of the predicted level carries attribution weight." },
    Rule { id: RULE_MAJOR_BIAS, effect: Some(Label::Red), description: "A major sensitive-term flag was raised." },
    Rule { id: RULE_CONFIDENCE_BELOW_GREEN, effect: Some(Label::Yellow), description: "Verifier confidence is below the green threshold." },
    Rule { id: RULE_RATIONALE_INCOMPLETE, effect: Some(Label::Yellow), description: "The self-rationalization does not meet the completeness rubric." },
    Rule { id: RULE_LEVEL_DISAGREEMENT, effect: Some(Label::Yellow), description: "Declared level and verifier prediction disagree." },
    Rule { id: RULE_ATTRIBUTION_SUSPICIOUS, effect: Some(Label::Yellow), description: "Attribution rests on thin lexicon evidence or on a stopword." },
    Rule { id: RULE_MINOR_BIAS, effect: Some(Label::Yellow), description: "A minor sensitive-term flag was raised." },
    Rule { id: RULE_GREEN, effect: Some(Label::Green), description: "High confidence, complete rationale, consistent attribution, agreement, no flags." },
    Rule { id: RULE_REVIEW_OVERRIDE, effect: None, description: "A finalized record was reopened through the override path." },
    Rule { id: RULE_REVERIFICATION_PASSED, effect: None, description: "The edited item was re-verified and is not red." },
    Rule { id: RULE_HUMAN_APPROVED, effect: None, description: "A reviewer approved the item without changes." },
    Rule { id: RULE_HUMAN_APPROVED_EDITS, effect: None, description: "A reviewer approved the item after editing it." },
    Rule { id: RULE_HUMAN_REJECTED, effect: None, description: "A reviewer rejected the item." },
];

pub fn rule(id: &str) -> Option<&'static Rule> {
    RULE_CATALOGUE.iter().find(|r| r.id == id)
}

pub fn is_known_rule(id: &str) -> bool {
    rule(id).is_some()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("invalid thresholds: need 0 <= red_below ({red_below}) < green_min ({green_min}) <= 1")]
    InvalidThresholds { green_min: f64, red_below: f64 },
    #[error("confidence {0} is outside [0,1]")]
    InvalidConfidence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Inclusive lower bound for green eligibility.
    pub green_min: f64,
    /// Confidence strictly below this is red.
    pub red_below: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            green_min: 0.90,
            red_below: 0.60,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), DecisionError> {
        let ok = self.red_below >= 0.0 && self.red_below < self.green_min && self.green_min <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(DecisionError::InvalidThresholds {
                green_min: self.green_min,
                red_below: self.red_below,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionInput {
    pub confidence: f64,
    pub rationale_complete: bool,
    pub contradiction: bool,
    pub agreement: bool,
    pub attribution_verdict: Verdict,
    pub max_flag_severity: RiskLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub label: Label,
    pub trace: Vec<&'static str>,
}

pub fn decide(input: &DecisionInput, thresholds: &Thresholds) -> Result<Decision, DecisionError> {
    thresholds.validate()?;
    if !(0.0..=1.0).contains(&input.confidence) {
        return Err(DecisionError::InvalidConfidence(input.confidence));
    }
    let checks = [
        (RULE_CONFIDENCE_BELOW_RED, input.confidence < thresholds.red_below),
        (RULE_CONTRADICTION, input.contradiction),
        (RULE_ATTRIBUTION_IRRELEVANT, input.attribution_verdict == Verdict::Irrelevant),
        (RULE_MAJOR_BIAS, input.max_flag_severity == RiskLevel::Major),
        (RULE_CONFIDENCE_BELOW_GREEN, input.confidence < thresholds.green_min),
        (RULE_RATIONALE_INCOMPLETE, !input.rationale_complete),
        (RULE_LEVEL_DISAGREEMENT, !input.agreement),
        (RULE_ATTRIBUTION_SUSPICIOUS, input.attribution_verdict == Verdict::Suspicious),
        (RULE_MINOR_BIAS, input.max_flag_severity == RiskLevel::Minor),
    ];
    let mut trace: Vec<&'static str> = checks.iter().filter(|(_, fired)| *fired).map(|(id, _)| *id).collect();
    if trace.is_empty() {
        trace.push(RULE_GREEN);
    }
    let label = label_from_trace(&trace).expect("trace holds decision rules");
    Ok(Decision { label, trace })
}

/// Replays a trace: the most severe label among its decision rules.
pub fn label_from_trace<S: AsRef<str>>(trace: &[S]) -> Option<Label> {
    trace
        .iter()
        .filter_map(|id| rule(id.as_ref()).and_then(|r| r.effect))
        .max()
}

/// A component tagged with the item it was produced for.
#[derive(Debug, Clone, PartialEq)]
pub struct ForItem<T> {
    pub item_id: String,
    pub value: T,
}

impl<T> ForItem<T> {
    pub fn new(item_id: impl Into<String>, value: T) -> Self {
        ForItem {
            item_id: item_id.into(),
            value,
        }
    }
}

/// The per-item outputs certification consumes.
#[derive(Debug, Clone)]
pub struct CertificationInputs {
    pub provenance: ForItem<ProvenanceRecord>,
    pub alignment: ForItem<AlignmentRecord>,
    pub contradiction: ForItem<ContradictionReport>,
    pub flags: ForItem<Vec<BiasFlag>>,
}

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("{component} belongs to item `{found}`, expected `{expected}`")]
    ComponentMismatch {
        component: &'static str,
        expected: String,
        found: String,
    },
    #[error("item failed validation: {0:?}")]
    InvalidItem(Vec<Violation>),
    #[error(transparent)]
    Provenance(#[from] ModelError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("version conflict: expected {expected}, record is at {actual}")]
    VersionConflict { expected: u64, actual: u64 },
    #[error("record with status {0:?} is not reviewable without an override")]
    NotReviewable(Status),
    #[error("edited item failed re-verification: {}", .trace.join(", "))]
    ReVerificationFailed { trace: Vec<String> },
    #[error("edited item is invalid: {0:?}")]
    InvalidEdits(Vec<Violation>),
    #[error(transparent)]
    InvalidReview(#[from] ModelError),
    #[error("re-verification could not run: {0}")]
    Verifier(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Re-runs verification on an edited item.
pub trait ReVerifier {
    fn reverify(&self, item: &AssessmentItem) -> Result<Decision, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewSubmission {
    pub review: ReviewRecord,
    pub expected_version: u64,
    /// Reason recorded when reopening a finalized record.
    pub override_reason: Option<String>,
}

pub fn record_digest(record: &CertificationRecord) -> HexDigest {
    HexDigest::of(crate::codec::record_to_json(record).as_bytes())
}

pub fn decision_input(alignment: &AlignmentRecord, contradiction: &ContradictionReport, flags: &[BiasFlag]) -> DecisionInput {
    DecisionInput {
        confidence: alignment.confidence,
        rationale_complete: alignment.rationale_report.complete,
        contradiction: contradiction.contradiction,
        agreement: alignment.agreement,
        attribution_verdict: alignment.attribution.verdict,
        max_flag_severity: max_severity(flags),
    }
}

pub struct Certifier {
    pub thresholds: Thresholds,
    clock: Arc<dyn Clock>,
    /// Hash of the effective pipeline configuration, logged with events.
    pub config_hash: Option<HexDigest>,
    pub privacy_notes: String,
}

impl Certifier {
    pub fn new(thresholds: Thresholds, clock: Arc<dyn Clock>) -> Result<Certifier, DecisionError> {
        thresholds.validate()?;
        Ok(Certifier {
            thresholds,
            clock,
            config_hash: None,
            privacy_notes: "Reviewer identities are pseudonymous; logs are retained locally.".into(),
        })
    }

    pub fn with_config_hash(mut self, hash: HexDigest) -> Self {
        self.config_hash = Some(hash);
        self
    }

    pub fn certify(
        &self,
        item: AssessmentItem,
        inputs: CertificationInputs,
        sink: &mut dyn AuditSink,
    ) -> Result<CertificationRecord, CertifyError> {
        let CertificationInputs { provenance, alignment, contradiction, flags } = inputs;
        for (component, id) in [
            ("provenance", &provenance.item_id),
            ("alignment", &alignment.item_id),
            ("contradiction report", &contradiction.item_id),
            ("bias flags", &flags.item_id),
        ] {
            if *id != item.id {
                return Err(CertifyError::ComponentMismatch {
                    component,
                    expected: item.id.clone(),
                    found: id.clone(),
                });
            }
        }
        let validation = validate_item(&item);
        if !validation.is_ok() {
            return Err(CertifyError::InvalidItem(validation.violations));
        }
        provenance.value.validate()?;

        let input = decision_input(&alignment.value, &contradiction.value, &flags.value);
        let decision = decide(&input, &self.thresholds)?;
        let status = match decision.label {
            Label::Green => Status::AutoCertified,
            Label::Yellow => Status::PendingReview,
            Label::Red => Status::Rejected,
        };
        let record = CertificationRecord {
            schema_version: SCHEMA_VERSION.to_string(),
            item,
            provenance: provenance.value,
            alignment: alignment.value,
            governance: GovernanceRecord::from_flags(flags.value, self.privacy_notes.clone()),
            review: None,
            label: decision.label,
            status,
            decision_trace: decision.trace.iter().map(|s| s.to_string()).collect(),
            version: 1,
            certified_at: self.clock.now(),
        };

        sink.append(
            EventType::Certified,
            json!({
                "item_id": record.item.id,
                "label": record.label,
                "status": record.status,
                "decision_trace": record.decision_trace,
                "confidence": record.alignment.confidence,
                "predicted_level": record.alignment.predicted_level,
                "model_version": record.provenance.model_version,
                "record_hash": record_digest(&record),
                "version": record.version,
                "config_hash": self.config_hash,
            }),
        )?;
        if record.label == Label::Red {
            sink.append(
                EventType::RegenerationRequested,
                json!({
                    "item_id": record.item.id,
                    "reasons": record.decision_trace,
                }),
            )?;
        }
        Ok(record)
    }

    pub fn apply_review(
        &self,
        record: &CertificationRecord,
        submission: ReviewSubmission,
        verifier: &dyn ReVerifier,
        sink: &mut dyn AuditSink,
    ) -> Result<CertificationRecord, ReviewError> {
        if submission.expected_version != record.version {
            return Err(ReviewError::VersionConflict {
                expected: submission.expected_version,
                actual: record.version,
            });
        }
        let overriding = submission.override_reason.is_some();
        let review = submission.review;
        let target = match review.action {
            ReviewAction::ApproveUnchanged | ReviewAction::ApproveWithEdits => Status::CertifiedHuman,
            ReviewAction::Reject => Status::Rejected,
        };
        if !record.status.can_transition(target, overriding) {
            return Err(ReviewError::NotReviewable(record.status));
        }
        review.validate()?;

        let mut trace = record.decision_trace.clone();
        if overriding {
            trace.push(RULE_REVIEW_OVERRIDE.into());
        }
        let mut item = record.item.clone();
        if let (ReviewAction::ApproveWithEdits, Some(edits)) = (review.action, &review.edits) {
            let edited = edits.apply_to(&record.item);
            let validation = validate_item(&edited);
            if !validation.is_ok() {
                return Err(ReviewError::InvalidEdits(validation.violations));
            }
            let decision = verifier.reverify(&edited).map_err(ReviewError::Verifier)?;
            if decision.label == Label::Red {
                return Err(ReviewError::ReVerificationFailed {
                    trace: decision.trace.iter().map(|s| s.to_string()).collect(),
                });
            }
            trace.push(RULE_REVERIFICATION_PASSED.into());
            item = edited;
        }
        trace.push(
            match review.action {
                ReviewAction::ApproveUnchanged => RULE_HUMAN_APPROVED,
                ReviewAction::ApproveWithEdits => RULE_HUMAN_APPROVED_EDITS,
                ReviewAction::Reject => RULE_HUMAN_REJECTED,
            }
            .into(),
        );

        let updated = CertificationRecord {
            item,
            review: Some(review),
            status: target,
            decision_trace: trace,
            version: record.version + 1,
            ..record.clone()
        };

        if let Some(reason) = &submission.override_reason {
            sink.append(
                EventType::Overridden,
                json!({
                    "item_id": updated.item.id,
                    "previous_status": record.status,
                    "reason": reason,
                    "reviewer_pseudonym": updated.review.as_ref().map(|r| r.reviewer_pseudonym.clone()),
                }),
            )?;
        }
        let review = updated.review.as_ref().expect("review just stored");
        sink.append(
            EventType::ReviewSubmitted,
            json!({
                "item_id": updated.item.id,
                "action": review.action,
                "reviewer_pseudonym": review.reviewer_pseudonym,
                "edits": review.edits,
                "notes": review.notes,
                "duration_seconds": review.duration_seconds,
                "status": updated.status,
                "version": updated.version,
                "record_hash": record_digest(&updated),
            }),
        )?;
        Ok(updated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(confidence: f64) -> DecisionInput {
        DecisionInput {
            confidence,
            rationale_complete: true,
            contradiction: false,
            agreement: true,
            attribution_verdict: Verdict::Consistent,
            max_flag_severity: RiskLevel::None,
        }
    }

    fn label(i: DecisionInput) -> Label {
        decide(&i, &Thresholds::default()).unwrap().label
    }

    #[test]
    fn table_examples() {
        assert_eq!(label(input(0.95)), Label::Green);
        assert_eq!(label(input(0.75)), Label::Yellow);
        assert_eq!(label(input(0.55)), Label::Red);
        assert_eq!(label(DecisionInput { agreement: false, ..input(0.95) }), Label::Yellow);
        assert_eq!(label(DecisionInput { contradiction: true, ..input(0.95) }), Label::Red);
    }

    #[test]
    fn boundaries() {
        assert_eq!(label(input(0.90)), Label::Green);
        assert_eq!(label(input(0.60)), Label::Yellow);
        assert_eq!(label(input(0.5999)), Label::Red);
    }

    #[test]
    fn trace_lists_every_fired_rule_in_order() {
        let d = decide(
            &DecisionInput {
                confidence: 0.5,
                rationale_complete: false,
                max_flag_severity: RiskLevel::Major,
                ..input(0.5)
            },
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(
            d.trace,
            vec![RULE_CONFIDENCE_BELOW_RED, RULE_MAJOR_BIAS, RULE_CONFIDENCE_BELOW_GREEN, RULE_RATIONALE_INCOMPLETE]
        );
        assert_eq!(label_from_trace(&d.trace), Some(Label::Red));
        let g = decide(&input(0.99), &Thresholds::default()).unwrap();
        assert_eq!(g.trace, vec![RULE_GREEN]);
    }

    #[test]
    fn invalid_thresholds() {
        for (g, r) in [(0.6, 0.6), (0.5, 0.6), (1.1, 0.6), (0.9, -0.1)] {
            let t = Thresholds { green_min: g, red_below: r };
            assert!(matches!(decide(&input(0.9), &t), Err(DecisionError::InvalidThresholds { .. })));
        }
        assert!(matches!(
            decide(&input(f64::NAN), &Thresholds::default()),
            Err(DecisionError::InvalidConfidence(_))
        ));
    }

    #[test]
    fn catalogue_ids_are_unique() {
        let mut ids: Vec<_> = RULE_CATALOGUE.iter().map(|r| r.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), RULE_CATALOGUE.len());
    }
}
