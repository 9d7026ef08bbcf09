//! Wires the verifier stages together: alignment, rationale checks, and
//! governance screening, then certification in input order.

use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::certifier::{
    decide, decision_input, CertificationInputs, Certifier, CertifyError, Decision, ForItem,
    ReVerifier,
};
use crate::clock::Clock;
use crate::config::{ConfigError, PipelineConfig};
use crate::governance::{load_policy, screen, BiasPolicy};
use crate::ledger::{AuditSink, EventType};
use crate::model::{
    AlignmentRecord, AssessmentItem, BiasFlag, CertificationRecord, Framework, HexDigest,
    ProvenanceRecord,
};
use crate::rationale::{completeness, detect_contradiction, ContradictionReport, RationaleConfig};
use crate::taxonomy::{attribute, classify, load_lexicon, ClassifierConfig, ClassifyError, Lexicon, LevelPrediction};

pub const VERIFIER_ID: &str = "lexicon-structural-verifier";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("item `{item_id}`: {source}")]
    Classify { item_id: String, source: ClassifyError },
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

/// Everything the verifier produced for one item.
#[derive(Debug, Clone)]
pub struct Verification {
    pub prediction: LevelPrediction,
    pub alignment: AlignmentRecord,
    pub contradiction: ContradictionReport,
    pub flags: Vec<BiasFlag>,
}

/// Immutable bundle of lexicons, policy, and rule configuration.
#[derive(Debug, Clone)]
pub struct Verifier {
    pub bloom: Lexicon,
    pub solo: Lexicon,
    pub policy: BiasPolicy,
    pub classifier: ClassifierConfig,
    pub rationale: RationaleConfig,
    pub config: PipelineConfig,
}

impl Verifier {
    pub fn with_defaults() -> Verifier {
        Verifier::from_config(&PipelineConfig::default()).expect("defaults are valid")
    }

    pub fn from_config(config: &PipelineConfig) -> Result<Verifier, PipelineError> {
        config.validate()?;
        let read = |path: &std::path::Path| {
            std::fs::read_to_string(path)
                .map_err(|e| PipelineError::Data(format!("cannot read {}: {e}", path.display())))
        };
        let bloom = match &config.lexicons.bloom {
            Some(p) => load_lexicon(&read(p)?).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))?,
            None => Lexicon::bloom_default(),
        };
        let solo = match &config.lexicons.solo {
            Some(p) => load_lexicon(&read(p)?).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))?,
            None => Lexicon::solo_default(),
        };
        if bloom.framework != Framework::Bloom || solo.framework != Framework::Solo {
            return Err(PipelineError::Data("lexicon framework does not match its slot".into()));
        }
        let policy = match &config.policy.path {
            Some(p) => load_policy(&read(p)?).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))?,
            None => BiasPolicy::default_policy(),
        };
        Ok(Verifier {
            bloom,
            solo,
            policy,
            classifier: config.classifier.clone(),
            rationale: config.rationale.clone(),
            config: config.clone(),
        })
    }

    pub fn lexicon_for(&self, framework: Framework) -> &Lexicon {
        match framework {
            Framework::Bloom => &self.bloom,
            Framework::Solo => &self.solo,
        }
    }

    pub fn predict(&self, item: &AssessmentItem) -> Result<LevelPrediction, ClassifyError> {
        classify(&item.stem, self.lexicon_for(item.declared_level.framework()), &self.classifier)
    }

    pub fn verify(&self, item: &AssessmentItem) -> Result<Verification, ClassifyError> {
        let lexicon = self.lexicon_for(item.declared_level.framework());
        let prediction = classify(&item.stem, lexicon, &self.classifier)?;
        let attribution = attribute(&item.stem, &prediction, lexicon, &self.classifier)?;
        let rationale_report = completeness(&item.rationale, item.declared_level, lexicon, &self.rationale);
        let contradiction = detect_contradiction(&item.rationale, item, &self.rationale);
        let flags = screen(item, &item.rationale, &self.policy);
        let alignment = AlignmentRecord {
            predicted_level: prediction.predicted_level,
            confidence: prediction.confidence,
            level_scores: prediction.probabilities_by_name(),
            attribution,
            rationale_report,
            agreement: prediction.predicted_level == item.declared_level,
            verifier_id: VERIFIER_ID.to_string(),
            verifier_version: format!("{}+{}", lexicon.version, self.policy.version),
        };
        Ok(Verification {
            prediction,
            alignment,
            contradiction,
            flags,
        })
    }

    pub fn decide(&self, item: &AssessmentItem) -> Result<Decision, String> {
        let v = self.verify(item).map_err(|e| e.to_string())?;
        let input = decision_input(&v.alignment, &v.contradiction, &v.flags);
        decide(&input, &self.config.thresholds).map_err(|e| e.to_string())
    }
}

impl ReVerifier for Verifier {
    fn reverify(&self, item: &AssessmentItem) -> Result<Decision, String> {
        self.decide(item)
    }
}

pub fn inputs_for(item_id: &str, provenance: ProvenanceRecord, verification: Verification) -> CertificationInputs {
    CertificationInputs {
        provenance: ForItem::new(item_id, provenance),
        alignment: ForItem::new(item_id, verification.alignment),
        contradiction: ForItem::new(item_id, verification.contradiction),
        flags: ForItem::new(item_id, verification.flags),
    }
}

/// Verifies items in parallel, then logs and certifies them in input
/// order.
pub fn certify_batch(
    items: Vec<(AssessmentItem, ProvenanceRecord)>,
    verifier: &Verifier,
    clock: Arc<dyn Clock>,
    sink: &mut dyn AuditSink,
    source: &str,
) -> Result<Vec<CertificationRecord>, PipelineError> {
    let config_hash: HexDigest = verifier.config.digest();
    let certifier = Certifier::new(verifier.config.thresholds, clock)
        .map_err(|e| PipelineError::Data(e.to_string()))?
        .with_config_hash(config_hash.clone());

    let verified: Vec<Result<Verification, PipelineError>> = items
        .par_iter()
        .map(|(item, _)| {
            verifier.verify(item).map_err(|source| PipelineError::Classify {
                item_id: item.id.clone(),
                source,
            })
        })
        .collect();

    let mut records = Vec::with_capacity(items.len());
    for ((item, provenance), verification) in items.into_iter().zip(verified) {
        let verification = verification?;
        sink.append(
            EventType::ItemIngested,
            json!({
                "item_id": item.id,
                "source": source,
                "model_id": provenance.model_id,
                "model_version": provenance.model_version,
                "prompt_hash": provenance.prompt_hash,
                "config_hash": config_hash,
            }),
        )
        .map_err(CertifyError::from)?;
        let id = item.id.clone();
        records.push(certifier.certify(item, inputs_for(&id, provenance, verification), sink)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::ledger::Ledger;
    use crate::model::{HexDigest, Label, Status, TaxonomyLevel};
    use std::collections::BTreeMap;

    fn provenance() -> ProvenanceRecord {
        ProvenanceRecord {
            model_id: "m".into(),
            model_version: "1".into(),
            prompt_hash: HexDigest::of(b"p"),
            prompt_text: None,
            system_instructions_hash: HexDigest::of(b"s"),
            generated_at: FixedClock::default_instant().0,
            generation_params: BTreeMap::new(),
            course_context: "CS".into(),
        }
    }

    fn item(id: &str, stem: &str, level: &str, rationale: &str) -> AssessmentItem {
        AssessmentItem {
            id: id.into(),
            stem: stem.into(),
            options: vec!["w".into(), "x".into(), "y".into(), "z".into()],
            correct_index: 1,
            declared_level: TaxonomyLevel::parse_qualified(level).unwrap(),
            rationale: rationale.into(),
            topic: "algorithms".into(),
            course_context: "CS".into(),
            language_code: "en".into(),
        }
    }

    const COMPLETE: &str = "This item targets the Analyze level because students must compare two \
        algorithms and contrast their costs; option B is correct and each distractor is plausible.";

    #[test]
    fn strong_item_is_green() {
        let v = Verifier::with_defaults();
        let clock: Arc<dyn Clock> = Arc::new(FixedClock::default_instant());
        let mut ledger = Ledger::in_memory(clock.clone());
        let it = item(
            "q-1",
            "Compare, contrast, examine and differentiate the insertion cost of a balanced binary search tree.",
            "Bloom:Analyze",
            COMPLETE,
        );
        let records = certify_batch(vec![(it, provenance())], &v, clock, &mut ledger, "test").unwrap();
        let r = &records[0];
        assert!(r.alignment.confidence >= 0.9, "{}", r.alignment.confidence);
        assert_eq!(r.label, Label::Green, "{:?}", r.decision_trace);
        assert_eq!(r.status, Status::AutoCertified);
        assert_eq!(r.version, 1);
        assert!(r.check_invariants(crate::certifier::is_known_rule).is_empty());
        assert_eq!(ledger.count(EventType::ItemIngested), 1);
        assert_eq!(ledger.count(EventType::Certified), 1);
    }

    #[test]
    fn major_flag_is_red_with_regeneration_event() {
        let v = Verifier::with_defaults();
        let clock: Arc<dyn Clock> = Arc::new(FixedClock::default_instant());
        let mut ledger = Ledger::in_memory(clock.clone());
        let it = item(
            "q-2",
            "Compare, contrast, examine and differentiate seating costs for a Thanksgiving dinner.",
            "Bloom:Analyze",
            COMPLETE,
        );
        let r = &certify_batch(vec![(it, provenance())], &v, clock, &mut ledger, "test").unwrap()[0];
        assert_eq!(r.label, Label::Red);
        assert_eq!(r.status, Status::Rejected);
        assert!(r.decision_trace.iter().any(|t| t == "major_bias_flag"));
        assert_eq!(ledger.count(EventType::RegenerationRequested), 1);
    }

    #[test]
    fn incomplete_rationale_with_high_confidence_is_yellow() {
        let v = Verifier::with_defaults();
        let clock: Arc<dyn Clock> = Arc::new(FixedClock::default_instant());
        let mut ledger = Ledger::in_memory(clock.clone());
        let it = item(
            "q-3",
            "Compare, contrast, examine and differentiate the insertion cost of a balanced binary search tree.",
            "Bloom:Analyze",
            "Generated for the algorithms unit.",
        );
        let r = &certify_batch(vec![(it, provenance())], &v, clock, &mut ledger, "test").unwrap()[0];
        assert!(r.alignment.confidence >= 0.9);
        assert_eq!(r.label, Label::Yellow);
        assert_eq!(r.decision_trace, vec!["rationale_incomplete"]);
    }

    #[test]
    fn component_mismatch() {
        let v = Verifier::with_defaults();
        let clock: Arc<dyn Clock> = Arc::new(FixedClock::default_instant());
        let mut ledger = Ledger::in_memory(clock.clone());
        let it = item("q-4", "Compare two trees.", "Bloom:Analyze", COMPLETE);
        let verification = v.verify(&it).unwrap();
        let mut inputs = inputs_for("q-4", provenance(), verification);
        inputs.flags.item_id = "q-5".into();
        let certifier = Certifier::new(Default::default(), clock).unwrap();
        let err = certifier.certify(it, inputs, &mut ledger).unwrap_err();
        assert!(matches!(err, CertifyError::ComponentMismatch { component: "bias flags", .. }));
        assert!(ledger.is_empty());
    }
}
