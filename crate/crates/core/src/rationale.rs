//! Completeness and contradiction checks over the generator's
//! self-rationalization text.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AssessmentItem, CompletenessReport, CriterionResult, Framework, TaxonomyLevel,
};
use crate::taxonomy::{tokenize, Lexicon};

pub const CRITERION_LEVEL_NAMED: &str = "names_declared_level";
pub const CRITERION_LEVEL_VERB: &str = "uses_level_verb";
pub const CRITERION_LENGTH: &str = "sufficient_length";
pub const CRITERION_OPTION_REFERENCE: &str = "references_options";

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RationaleConfigError {
    #[error("criterion weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("criterion weights must be non-negative")]
    NegativeWeight,
    #[error("completeness_threshold must be in [0,1]")]
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RationaleConfig {
    pub level_named_weight: f64,
    pub level_verb_weight: f64,
    pub length_weight: f64,
    pub option_reference_weight: f64,
    pub min_words: usize,
    pub completeness_threshold: f64,
    /// Smallest rank distance between a mentioned and the declared level
    /// that counts as a contradiction.
    pub contradiction_rank_gap: u8,
}

impl Default for RationaleConfig {
    fn default() -> Self {
        RationaleConfig {
            level_named_weight: 0.4,
            level_verb_weight: 0.3,
            length_weight: 0.2,
            option_reference_weight: 0.1,
            min_words: 20,
            completeness_threshold: 0.7,
            contradiction_rank_gap: 2,
        }
    }
}

impl RationaleConfig {
    pub fn validate(&self) -> Result<(), RationaleConfigError> {
        let weights = [
            self.level_named_weight,
            self.level_verb_weight,
            self.length_weight,
            self.option_reference_weight,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(RationaleConfigError::NegativeWeight);
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(RationaleConfigError::WeightSum(sum));
        }
        if !(0.0..=1.0).contains(&self.completeness_threshold) {
            return Err(RationaleConfigError::Threshold);
        }
        Ok(())
    }
}

// (pattern, level) pairs; patterns are matched case-insensitively on word
// boundaries.
fn level_patterns(framework: Framework) -> &'static [(Regex, TaxonomyLevel)] {
    static BLOOM: LazyLock<Vec<(Regex, TaxonomyLevel)>> = LazyLock::new(|| build_patterns(Framework::Bloom));
    static SOLO: LazyLock<Vec<(Regex, TaxonomyLevel)>> = LazyLock::new(|| build_patterns(Framework::Solo));
    match framework {
        Framework::Bloom => &BLOOM,
        Framework::Solo => &SOLO,
    }
}

fn synonyms(level: TaxonomyLevel) -> &'static [&'static str] {
    match level.name() {
        "Analyze" => &["analyse"],
        "Prestructural" => &["pre-structural"],
        "Unistructural" => &["uni-structural"],
        "Multistructural" => &["multi-structural"],
        "ExtendedAbstract" => &["extended abstract", "extended-abstract"],
        _ => &[],
    }
}

fn build_patterns(framework: Framework) -> Vec<(Regex, TaxonomyLevel)> {
    framework
        .levels()
        .iter()
        .map(|level| {
            let alternatives: Vec<String> = std::iter::once(level.name())
                .chain(synonyms(*level).iter().copied())
                .map(|s| regex::escape(s).replace("\\ ", r"\s+").replace(' ', r"\s+"))
                .collect();
            let pattern = format!(r"(?i)\b(?:{})\b", alternatives.join("|"));
            (Regex::new(&pattern).expect("level pattern compiles"), *level)
        })
        .collect()
}

/// Levels of `framework` named in `text`, in rank order, each once.
pub fn level_mentions(text: &str, framework: Framework) -> Vec<TaxonomyLevel> {
    level_patterns(framework)
        .iter()
        .filter(|(re, _)| re.is_match(text))
        .map(|(_, level)| *level)
        .collect()
}

static OPTION_REFERENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:distractors?|answers?|options?|choices?|keyed)\b").expect("valid regex")
});

/// Scores the rationale against the weighted completeness rubric.
pub fn completeness(
    rationale: &str,
    declared_level: TaxonomyLevel,
    lexicon: &Lexicon,
    config: &RationaleConfig,
) -> CompletenessReport {
    let mentions = level_mentions(rationale, declared_level.framework());
    let names_level = mentions.contains(&declared_level);
    let uses_verb = lexicon.framework == declared_level.framework()
        && tokenize(rationale)
            .iter()
            .any(|t| lexicon.entry(t).is_some_and(|e| e.level == declared_level));
    let long_enough = rationale.split_whitespace().count() >= config.min_words;
    let references_options = OPTION_REFERENCE.is_match(rationale);

    let mut components = BTreeMap::new();
    let mut score = 0.0;
    for (id, satisfied, weight) in [
        (CRITERION_LEVEL_NAMED, names_level, config.level_named_weight),
        (CRITERION_LEVEL_VERB, uses_verb, config.level_verb_weight),
        (CRITERION_LENGTH, long_enough, config.length_weight),
        (CRITERION_OPTION_REFERENCE, references_options, config.option_reference_weight),
    ] {
        if satisfied {
            score += weight;
        }
        components.insert(id.to_string(), CriterionResult { satisfied, weight });
    }
    let score = score.clamp(0.0, 1.0);
    CompletenessReport {
        score,
        complete: score + WEIGHT_SUM_TOLERANCE >= config.completeness_threshold,
        components,
        detected_level_mentions: mentions.iter().map(|l| l.name().to_string()).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContradictionReason {
    LevelMismatchInRationale,
    AnswerKeyMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionReport {
    pub contradiction: bool,
    pub reasons: Vec<ContradictionReason>,
    pub details: String,
}

// Claims of the form "option C is correct", "the correct answer is (C)",
// "answer: C". Numbers are read as 1-based option positions.
static ANSWER_CLAIMS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"(?i)\b(?:option|choice|answer)\s*\(?([a-z]|\d{1,2})\)?\s+is\s+(?:the\s+)?(?:correct|right|keyed)\b",
        r"(?i)\b(?:correct|right|keyed)\s+(?:answer|option|choice)\s+is\s+(?:option\s+|choice\s+)?\(?([a-z]|\d{1,2})\)?(?:[^\w]|$)",
        r"(?i)\banswer\s*:\s*\(?([a-z]|\d{1,2})\)?(?:[^\w]|$)",
        r"\b\(?([A-Z])\)?\s+is\s+(?:the\s+)?(?:correct|right)\b",
    ]
    .iter()
    .map(|p| Regex::new(p).expect("valid regex"))
    .collect()
});

/// Option indices (0-based) the rationale claims are correct.
pub fn claimed_answers(rationale: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for re in ANSWER_CLAIMS.iter() {
        for cap in re.captures_iter(rationale) {
            let token = &cap[1];
            let index = if let Ok(n) = token.parse::<usize>() {
                match n.checked_sub(1) {
                    Some(i) => i,
                    None => continue,
                }
            } else {
                let c = token.chars().next().expect("non-empty capture").to_ascii_uppercase();
                usize::from(c as u8 - b'A')
            };
            if !out.contains(&index) {
                out.push(index);
            }
        }
    }
    out
}

pub fn detect_contradiction(
    rationale: &str,
    item: &AssessmentItem,
    config: &RationaleConfig,
) -> ContradictionReport {
    let declared = item.declared_level;
    let mut reasons = Vec::new();
    let mut details = Vec::new();

    let far: Vec<TaxonomyLevel> = level_mentions(rationale, declared.framework())
        .into_iter()
        .filter(|l| l.rank().abs_diff(declared.rank()) >= config.contradiction_rank_gap)
        .collect();
    if !far.is_empty() {
        reasons.push(ContradictionReason::LevelMismatchInRationale);
        let names: Vec<_> = far.iter().map(|l| l.name()).collect();
        details.push(format!(
            "rationale names {} but the item declares {} (rank {})",
            names.join(", "),
            declared.name(),
            declared.rank()
        ));
    }

    let wrong: Vec<usize> = claimed_answers(rationale)
        .into_iter()
        .filter(|i| *i != item.correct_index)
        .collect();
    if !wrong.is_empty() {
        reasons.push(ContradictionReason::AnswerKeyMismatch);
        let letters: Vec<_> = wrong.iter().map(|i| crate::model::option_letter(*i)).collect();
        details.push(format!(
            "rationale asserts option {} but the key is {}",
            letters.join(", "),
            crate::model::option_letter(item.correct_index)
        ));
    }

    ContradictionReport {
        contradiction: !reasons.is_empty(),
        reasons,
        details: details.join("; "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BloomLevel, SoloLevel};

    fn bloom(name: &str) -> TaxonomyLevel {
        TaxonomyLevel::parse(Framework::Bloom, name).unwrap()
    }

    fn item(declared: TaxonomyLevel, correct_index: usize) -> AssessmentItem {
        AssessmentItem {
            id: "q".into(),
            stem: "Compare two algorithms.".into(),
            options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            correct_index,
            declared_level: declared,
            rationale: String::new(),
            topic: "algorithms".into(),
            course_context: "CS2".into(),
            language_code: "en".into(),
        }
    }

    #[test]
    fn empty_rationale_scores_zero() {
        let r = completeness("", bloom("Analyze"), &Lexicon::bloom_default(), &RationaleConfig::default());
        assert_eq!(r.score, 0.0);
        assert!(!r.complete);
    }

    #[test]
    fn full_rubric() {
        let text = "This item targets the Analyze level because students must compare two algorithms \
                    and weigh their trade-offs; distractor B reflects a common confusion.";
        let r = completeness(text, bloom("Analyze"), &Lexicon::bloom_default(), &RationaleConfig::default());
        assert!(r.components.values().all(|c| c.satisfied), "{r:?}");
        assert!((r.score - 1.0).abs() < 1e-12);
        assert!(r.complete);
        assert_eq!(r.detected_level_mentions, vec!["Analyze"]);
    }

    #[test]
    fn wrong_level_name_caps_the_score() {
        let text = "Students apply the formula in this Apply item.";
        let r = completeness(text, bloom("Analyze"), &Lexicon::bloom_default(), &RationaleConfig::default());
        assert!(!r.components[CRITERION_LEVEL_NAMED].satisfied);
        assert!(r.score <= 0.6 + 1e-12);
        assert!(!r.complete);
    }

    #[test]
    fn threshold_is_inclusive() {
        // names level (0.4) + verb (0.3) = 0.7, short, no option reference
        let r = completeness("Analyze: compare them.", bloom("Analyze"), &Lexicon::bloom_default(), &RationaleConfig::default());
        assert!((r.score - 0.7).abs() < 1e-12);
        assert!(r.complete);
    }

    #[test]
    fn synonyms_are_detected() {
        assert_eq!(level_mentions("We analyse it", Framework::Bloom), vec![bloom("Analyze")]);
        assert_eq!(
            level_mentions("an Extended   Abstract response", Framework::Solo),
            vec![TaxonomyLevel::Solo(SoloLevel::ExtendedAbstract)]
        );
        assert!(level_mentions("unremembered", Framework::Bloom).is_empty());
    }

    #[test]
    fn far_level_mention_contradicts() {
        let r = detect_contradiction(
            "This checks whether students remember the definition.",
            &item(bloom("Evaluate"), 0),
            &RationaleConfig::default(),
        );
        assert!(r.contradiction);
        assert_eq!(r.reasons, vec![ContradictionReason::LevelMismatchInRationale]);
    }

    #[test]
    fn adjacent_level_mention_is_benign() {
        let r = detect_contradiction(
            "Students evaluate the options.",
            &item(TaxonomyLevel::Bloom(BloomLevel::Analyze), 0),
            &RationaleConfig::default(),
        );
        assert!(!r.contradiction);
        assert!(r.reasons.is_empty());
    }

    #[test]
    fn wrong_answer_claim_contradicts() {
        let r = detect_contradiction("Option C is correct because ...", &item(bloom("Analyze"), 0), &RationaleConfig::default());
        assert_eq!(r.reasons, vec![ContradictionReason::AnswerKeyMismatch]);
        let ok = detect_contradiction("Option A is correct because ...", &item(bloom("Analyze"), 0), &RationaleConfig::default());
        assert!(!ok.contradiction);
    }

    #[test]
    fn answer_claim_forms() {
        assert_eq!(claimed_answers("The correct answer is (B)."), vec![1]);
        assert_eq!(claimed_answers("answer: d"), vec![3]);
        assert_eq!(claimed_answers("option 3 is the correct one"), vec![2]);
        assert_eq!(claimed_answers("C is correct"), vec![2]);
        assert!(claimed_answers("distractor B reflects a common confusion").is_empty());
        assert!(claimed_answers("a is correct when sorted").is_empty());
    }
}
