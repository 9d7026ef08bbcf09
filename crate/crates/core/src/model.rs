//! Domain types shared by every stage of the pipeline: taxonomy levels,
//! assessment items, and the four-part certification record.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown level `{name}` for framework {framework}")]
    UnknownLevel { framework: Framework, name: String },
    #[error("unknown framework `{0}`")]
    UnknownFramework(String),
    #[error("rank {rank} does not match level {name}")]
    RankMismatch { name: String, rank: u8 },
    #[error("invalid digest `{0}`: expected 64 lowercase hex characters")]
    InvalidDigest(String),
    #[error("invalid review: {0}")]
    InvalidReview(String),
    #[error("invalid provenance: {0}")]
    InvalidProvenance(String),
}

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Framework {
    Bloom,
    #[serde(rename = "SOLO")]
    Solo,
}

impl Framework {
    pub fn levels(self) -> &'static [TaxonomyLevel] {
        match self {
            Framework::Bloom => &BLOOM_LEVELS,
            Framework::Solo => &SOLO_LEVELS,
        }
    }

    pub fn level_count(self) -> usize {
        self.levels().len()
    }

    /// Level with the given 1-based rank.
    pub fn level_at(self, rank: u8) -> Option<TaxonomyLevel> {
        self.levels().get(usize::from(rank).checked_sub(1)?).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Framework::Bloom => "Bloom",
            Framework::Solo => "SOLO",
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Framework {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bloom" => Ok(Framework::Bloom),
            "solo" => Ok(Framework::Solo),
            _ => Err(ModelError::UnknownFramework(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BloomLevel {
    Remember,
    Understand,
    Apply,
    Analyze,
    Evaluate,
    Create,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SoloLevel {
    Prestructural,
    Unistructural,
    Multistructural,
    Relational,
    ExtendedAbstract,
}

/// A level within one of the two supported taxonomies.
///
/// Serialized as `{"framework": .., "name": .., "rank": ..}`; the rank is
/// checked against the name on the way in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaxonomyLevel {
    Bloom(BloomLevel),
    Solo(SoloLevel),
}

const BLOOM_LEVELS: [TaxonomyLevel; 6] = [
    TaxonomyLevel::Bloom(BloomLevel::Remember),
    TaxonomyLevel::Bloom(BloomLevel::Understand),
    TaxonomyLevel::Bloom(BloomLevel::Apply),
    TaxonomyLevel::Bloom(BloomLevel::Analyze),
    TaxonomyLevel::Bloom(BloomLevel::Evaluate),
    TaxonomyLevel::Bloom(BloomLevel::Create),
];

const SOLO_LEVELS: [TaxonomyLevel; 5] = [
    TaxonomyLevel::Solo(SoloLevel::Prestructural),
    TaxonomyLevel::Solo(SoloLevel::Unistructural),
    TaxonomyLevel::Solo(SoloLevel::Multistructural),
    TaxonomyLevel::Solo(SoloLevel::Relational),
    TaxonomyLevel::Solo(SoloLevel::ExtendedAbstract),
];

impl TaxonomyLevel {
    pub fn framework(self) -> Framework {
        match self {
            TaxonomyLevel::Bloom(_) => Framework::Bloom,
            TaxonomyLevel::Solo(_) => Framework::Solo,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaxonomyLevel::Bloom(l) => match l {
                BloomLevel::Remember => "Remember",
                BloomLevel::Understand => "Understand",
                BloomLevel::Apply => "Apply",
                BloomLevel::Analyze => "Analyze",
                BloomLevel::Evaluate => "Evaluate",
                BloomLevel::Create => "Create",
            },
            TaxonomyLevel::Solo(l) => match l {
                SoloLevel::Prestructural => "Prestructural",
                SoloLevel::Unistructural => "Unistructural",
                SoloLevel::Multistructural => "Multistructural",
                SoloLevel::Relational => "Relational",
                SoloLevel::ExtendedAbstract => "ExtendedAbstract",
            },
        }
    }

    pub fn rank(self) -> u8 {
        match self {
            TaxonomyLevel::Bloom(l) => l as u8 + 1,
            TaxonomyLevel::Solo(l) => l as u8 + 1,
        }
    }

    /// 0-based position of the level inside its framework.
    pub fn index(self) -> usize {
        usize::from(self.rank() - 1)
    }

    /// Looks a level up by canonical name (case-insensitive).
    pub fn parse(framework: Framework, name: &str) -> Result<Self, ModelError> {
        let wanted = name.trim();
        framework
            .levels()
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| ModelError::UnknownLevel {
                framework,
                name: name.to_string(),
            })
    }

    /// Parses `Framework:Name`, e.g. `Bloom:Analyze`.
    pub fn parse_qualified(s: &str) -> Result<Self, ModelError> {
        let (fw, name) = s
            .split_once(':')
            .ok_or_else(|| ModelError::UnknownFramework(s.to_string()))?;
        TaxonomyLevel::parse(fw.parse()?, name)
    }
}

impl fmt::Display for TaxonomyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.framework(), self.name())
    }
}

/// Fixed ordinal rank of a level.
pub fn taxonomy_rank(level: TaxonomyLevel) -> u8 {
    level.rank()
}

/// Rank lookup by framework and level name. Fails with `UnknownLevel` when
/// the name is not part of the framework.
pub fn taxonomy_rank_by_name(framework: Framework, name: &str) -> Result<u8, ModelError> {
    TaxonomyLevel::parse(framework, name).map(TaxonomyLevel::rank)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelRepr {
    framework: Framework,
    name: String,
    rank: u8,
}

impl Serialize for TaxonomyLevel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        LevelRepr {
            framework: self.framework(),
            name: self.name().to_string(),
            rank: self.rank(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TaxonomyLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = LevelRepr::deserialize(d)?;
        let level =
            TaxonomyLevel::parse(repr.framework, &repr.name).map_err(serde::de::Error::custom)?;
        if level.rank() != repr.rank || level.name() != repr.name {
            return Err(serde::de::Error::custom(ModelError::RankMismatch {
                name: repr.name,
                rank: repr.rank,
            }));
        }
        Ok(level)
    }
}

// ---------------------------------------------------------------------------
// Items
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentItem {
    pub id: String,
    pub stem: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub declared_level: TaxonomyLevel,
    pub rationale: String,
    pub topic: String,
    pub course_context: String,
    pub language_code: String,
}

/// Renders a 0-based option index as a letter (`0 → A`).
pub fn option_letter(index: usize) -> String {
    if index < 26 {
        char::from(b'A' + index as u8).to_string()
    } else {
        format!("#{}", index + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

impl Violation {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Violation {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.code.as_str()).collect()
    }
}

/// Checks every per-item invariant. Violations are returned as data.
pub fn validate_item(item: &AssessmentItem) -> ValidationResult {
    let mut violations = Vec::new();
    if item.id.trim().is_empty() {
        violations.push(Violation::new("empty_id", "item id is empty"));
    }
    if item.stem.trim().is_empty() {
        violations.push(Violation::new("empty_stem", "stem is empty after trimming"));
    }
    if item.options.len() < 2 {
        violations.push(Violation::new(
            "too_few_options",
            format!("{} option(s); at least 2 required", item.options.len()),
        ));
    }
    if item.correct_index >= item.options.len() {
        violations.push(Violation::new(
            "correct_index_out_of_range",
            format!(
                "correct_index {} with {} option(s)",
                item.correct_index,
                item.options.len()
            ),
        ));
    }
    ValidationResult { violations }
}

/// Per-item validation plus id uniqueness. Returns one result per item, in
/// input order; the later of two items sharing an id gets `duplicate_id`.
pub fn validate_batch(items: &[AssessmentItem]) -> Vec<ValidationResult> {
    let mut seen = HashSet::new();
    items
        .iter()
        .map(|item| {
            let mut result = validate_item(item);
            if !seen.insert(item.id.as_str()) {
                result
                    .violations
                    .push(Violation::new("duplicate_id", format!("id `{}` repeated", item.id)));
            }
            result
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Provenance
// ---------------------------------------------------------------------------

/// SHA-256 digest rendered as 64 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct HexDigest(String);

impl HexDigest {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        let ok = s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if ok {
            Ok(HexDigest(s.to_string()))
        } else {
            Err(ModelError::InvalidDigest(s.to_string()))
        }
    }

    pub fn of(bytes: &[u8]) -> Self {
        use sha2::{Digest, Sha256};
        HexDigest(hex::encode(Sha256::digest(bytes)))
    }

    pub fn zero() -> Self {
        HexDigest("0".repeat(64))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for HexDigest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        HexDigest::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for HexDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceRecord {
    pub model_id: String,
    pub model_version: String,
    pub prompt_hash: HexDigest,
    #[serde(default)]
    pub prompt_text: Option<String>,
    pub system_instructions_hash: HexDigest,
    #[serde(with = "rfc3339")]
    pub generated_at: DateTime<Utc>,
    #[serde(default)]
    pub generation_params: BTreeMap<String, Value>,
    pub course_context: String,
}

impl ProvenanceRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.model_id.trim().is_empty() {
            return Err(ModelError::InvalidProvenance("model_id is empty".into()));
        }
        if self.model_version.trim().is_empty() {
            return Err(ModelError::InvalidProvenance("model_version is empty".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Consistent,
    Suspicious,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenWeight {
    pub token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionMap {
    pub tokens: Vec<TokenWeight>,
    pub predicted_level: TaxonomyLevel,
    pub lexicon_mass_ratio: f64,
    pub verdict: Verdict,
}

impl AttributionMap {
    /// Index of the highest-weight token (first occurrence on ties).
    pub fn top_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, t) in self.tokens.iter().enumerate() {
            match best {
                Some(b) if self.tokens[b].weight >= t.weight => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionResult {
    pub satisfied: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletenessReport {
    pub score: f64,
    pub complete: bool,
    pub components: BTreeMap<String, CriterionResult>,
    pub detected_level_mentions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentRecord {
    pub predicted_level: TaxonomyLevel,
    pub confidence: f64,
    /// Normalized (softmax) score per level name.
    pub level_scores: BTreeMap<String, f64>,
    pub attribution: AttributionMap,
    pub rationale_report: CompletenessReport,
    pub agreement: bool,
    pub verifier_id: String,
    pub verifier_version: String,
}

// ---------------------------------------------------------------------------
// Review
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReviewAction {
    ApproveUnchanged,
    ApproveWithEdits,
    Reject,
}

impl ReviewAction {
    pub const ALL: [ReviewAction; 3] = [
        ReviewAction::ApproveUnchanged,
        ReviewAction::ApproveWithEdits,
        ReviewAction::Reject,
    ];
}

/// Field-level replacement values for an item. Absent fields are unchanged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemEdits {
    #[serde(default)]
    pub stem: Option<String>,
    #[serde(default)]
    pub options: Option<Vec<String>>,
    #[serde(default)]
    pub correct_index: Option<usize>,
    #[serde(default)]
    pub declared_level: Option<TaxonomyLevel>,
    #[serde(default)]
    pub rationale: Option<String>,
}

impl ItemEdits {
    pub fn is_empty(&self) -> bool {
        self.stem.is_none()
            && self.options.is_none()
            && self.correct_index.is_none()
            && self.declared_level.is_none()
            && self.rationale.is_none()
    }

    pub fn apply_to(&self, item: &AssessmentItem) -> AssessmentItem {
        let mut out = item.clone();
        if let Some(stem) = &self.stem {
            out.stem = stem.clone();
        }
        if let Some(options) = &self.options {
            out.options = options.clone();
        }
        if let Some(ci) = self.correct_index {
            out.correct_index = ci;
        }
        if let Some(level) = self.declared_level {
            out.declared_level = level;
        }
        if let Some(r) = &self.rationale {
            out.rationale = r.clone();
        }
        out
    }
}

/// A reviewer handle: non-empty, no whitespace, and not an email address.
pub fn is_valid_pseudonym(p: &str) -> bool {
    !p.is_empty() && p.len() <= 128 && !p.contains('@') && !p.chars().any(char::is_whitespace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewRecord {
    pub reviewer_pseudonym: String,
    pub action: ReviewAction,
    #[serde(default)]
    pub edits: Option<ItemEdits>,
    pub notes: String,
    #[serde(with = "rfc3339")]
    pub started_at: DateTime<Utc>,
    #[serde(with = "rfc3339")]
    pub decided_at: DateTime<Utc>,
    pub duration_seconds: f64,
}

impl ReviewRecord {
    pub fn new(
        reviewer_pseudonym: impl Into<String>,
        action: ReviewAction,
        edits: Option<ItemEdits>,
        notes: impl Into<String>,
        started_at: DateTime<Utc>,
        decided_at: DateTime<Utc>,
    ) -> Result<Self, ModelError> {
        let record = ReviewRecord {
            reviewer_pseudonym: reviewer_pseudonym.into(),
            action,
            edits,
            notes: notes.into(),
            started_at,
            decided_at,
            duration_seconds: (decided_at - started_at).num_milliseconds() as f64 / 1000.0,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !is_valid_pseudonym(&self.reviewer_pseudonym) {
            return Err(ModelError::InvalidReview(
                "reviewer_pseudonym must be an opaque handle".into(),
            ));
        }
        if self.decided_at < self.started_at || self.duration_seconds < 0.0 {
            return Err(ModelError::InvalidReview("decided_at precedes started_at".into()));
        }
        let has_edits = self.edits.as_ref().is_some_and(|e| !e.is_empty());
        match (self.action, has_edits) {
            (ReviewAction::ApproveWithEdits, false) => Err(ModelError::InvalidReview(
                "ApproveWithEdits requires edits".into(),
            )),
            (ReviewAction::ApproveUnchanged | ReviewAction::Reject, true) => Err(
                ModelError::InvalidReview("edits are only allowed with ApproveWithEdits".into()),
            ),
            _ => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Governance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BiasCategory {
    Gender,
    CultureRegion,
    Religion,
    Disability,
    Age,
    Other,
}

impl FromStr for BiasCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "Gender" => BiasCategory::Gender,
            "CultureRegion" => BiasCategory::CultureRegion,
            "Religion" => BiasCategory::Religion,
            "Disability" => BiasCategory::Disability,
            "Age" => BiasCategory::Age,
            "Other" => BiasCategory::Other,
            other => return Err(format!("unknown category `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Minor,
    Major,
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Minor" => Ok(Severity::Minor),
            "Major" => Ok(Severity::Major),
            other => Err(format!("unknown severity `{other}`")),
        }
    }
}

/// Aggregate risk, ordered `None < Minor < Major`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskLevel {
    None,
    Minor,
    Major,
}

impl From<Severity> for RiskLevel {
    fn from(s: Severity) -> Self {
        match s {
            Severity::Minor => RiskLevel::Minor,
            Severity::Major => RiskLevel::Major,
        }
    }
}

/// Where a flag was found. Ordering is stem, options by index, rationale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlagLocation {
    Stem,
    Option(usize),
    Rationale,
}

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasFlag {
    pub matched_term: String,
    pub category: BiasCategory,
    pub severity: Severity,
    pub span: Span,
    pub location: FlagLocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernanceRecord {
    pub flags: Vec<BiasFlag>,
    pub privacy_notes: String,
    pub risk_level: RiskLevel,
}

impl GovernanceRecord {
    pub fn from_flags(flags: Vec<BiasFlag>, privacy_notes: impl Into<String>) -> Self {
        let risk_level = max_severity(&flags);
        GovernanceRecord {
            flags,
            privacy_notes: privacy_notes.into(),
            risk_level,
        }
    }
}

pub fn max_severity(flags: &[BiasFlag]) -> RiskLevel {
    flags
        .iter()
        .map(|f| RiskLevel::from(f.severity))
        .max()
        .unwrap_or(RiskLevel::None)
}

// ---------------------------------------------------------------------------
// Certification record
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Green,
    Yellow,
    Red,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Green, Label::Yellow, Label::Red];
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Green => "Green",
            Label::Yellow => "Yellow",
            Label::Red => "Red",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    AutoCertified,
    PendingReview,
    CertifiedHuman,
    Rejected,
}

impl Status {
    /// Legal review transitions. Without `override_review` only pending
    /// records may be decided; with it any record may be reopened.
    pub fn can_transition(self, to: Status, override_review: bool) -> bool {
        let target_ok = matches!(to, Status::CertifiedHuman | Status::Rejected);
        target_ok && (self == Status::PendingReview || override_review)
    }

    pub fn is_final(self) -> bool {
        self != Status::PendingReview
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificationRecord {
    pub schema_version: String,
    pub item: AssessmentItem,
    pub provenance: ProvenanceRecord,
    pub alignment: AlignmentRecord,
    pub governance: GovernanceRecord,
    #[serde(default)]
    pub review: Option<ReviewRecord>,
    pub label: Label,
    pub status: Status,
    pub decision_trace: Vec<String>,
    pub version: u64,
    #[serde(with = "rfc3339")]
    pub certified_at: DateTime<Utc>,
}

impl CertificationRecord {
    /// Checks the label/status/trace invariants, using `is_known_rule` to
    /// validate trace entries against the rule catalogue.
    pub fn check_invariants(&self, is_known_rule: impl Fn(&str) -> bool) -> Vec<String> {
        let mut problems = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!("schema_version {}", self.schema_version));
        }
        match (self.label, self.status) {
            (Label::Green, Status::AutoCertified) if self.review.is_none() => {}
            (Label::Yellow, Status::PendingReview) if self.review.is_none() => {}
            (Label::Yellow, Status::CertifiedHuman | Status::Rejected) if self.review.is_some() => {}
            (Label::Red, Status::Rejected) => {}
            // reopened through the override path
            (Label::Green | Label::Red, Status::CertifiedHuman | Status::Rejected)
                if self.review.is_some() => {}
            (label, status) => problems.push(format!("label {label} with status {status:?}")),
        }
        if self.decision_trace.is_empty() {
            problems.push("empty decision_trace".into());
        }
        for rule in &self.decision_trace {
            if !is_known_rule(rule) {
                problems.push(format!("unknown rule `{rule}`"));
            }
        }
        if self.alignment.agreement
            != (self.alignment.predicted_level == self.item.declared_level)
            && self.review.is_none()
        {
            problems.push("agreement flag disagrees with levels".into());
        }
        if self.governance.risk_level != max_severity(&self.governance.flags) {
            problems.push("risk_level is not the max flag severity".into());
        }
        problems
    }
}

/// RFC 3339 UTC timestamps with a `Z` suffix.
pub mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(t: &DateTime<Utc>) -> String {
        t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
    }

    pub fn parse(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
        DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
    }

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}
