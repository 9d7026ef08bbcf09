//! Independent taxonomy verifier.
//!
//! Scores each level from lexicon verb matches plus a few structural cues,
//! turns the scores into probabilities with a temperature softmax, and
//! explains a prediction by leave-one-out token removal.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AttributionMap, Framework, ModelError, SoloLevel, TaxonomyLevel, TokenWeight, Verdict,
    BloomLevel,
};

pub const DEFAULT_BLOOM_LEXICON: &str = include_str!("../data/bloom.tsv");
pub const DEFAULT_SOLO_LEXICON: &str = include_str!("../data/solo.tsv");

const INTERROGATIVES: [&str; 2] = ["why", "how"];
const COORDINATORS: [&str; 3] = ["and", "versus", "vs"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate token `{token}`")]
    DuplicateToken { line: usize, token: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("stem is empty")]
    EmptyInput,
    #[error("lexicon has no entries")]
    EmptyLexicon,
    #[error("invalid classifier configuration: {0}")]
    InvalidConfig(String),
    #[error("semantic similarity signal is not available in this build")]
    SimilarityUnavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub level: TaxonomyLevel,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub framework: Framework,
    pub entries: BTreeMap<String, LexiconEntry>,
    pub stopwords: BTreeSet<String>,
    pub version: String,
}

impl Lexicon {
    pub fn bloom_default() -> Lexicon {
        load_lexicon(DEFAULT_BLOOM_LEXICON).expect("bundled Bloom lexicon is valid")
    }

    pub fn solo_default() -> Lexicon {
        load_lexicon(DEFAULT_SOLO_LEXICON).expect("bundled SOLO lexicon is valid")
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, token: &str) -> Option<&LexiconEntry> {
        self.entries.get(token)
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Tokens mapped to `level`, sorted.
    pub fn tokens_for(&self, level: TaxonomyLevel) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, e)| e.level == level)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    pub fn count_for(&self, level: TaxonomyLevel) -> usize {
        self.entries.values().filter(|e| e.level == level).count()
    }

    /// Median entry weight. Structural cue scores are expressed in this unit.
    pub fn reference_weight(&self) -> f64 {
        let mut weights: Vec<f64> = self.entries.values().map(|e| e.weight).collect();
        if weights.is_empty() {
            return 0.0;
        }
        weights.sort_by(f64::total_cmp);
        let n = weights.len();
        if n % 2 == 1 {
            weights[n / 2]
        } else {
            (weights[n / 2 - 1] + weights[n / 2]) / 2.0
        }
    }

    /// Copy with every weight multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Lexicon {
        let mut out = self.clone();
        for e in out.entries.values_mut() {
            e.weight *= factor;
        }
        out
    }

    /// A content token is neither a stopword nor a lexicon entry, and has
    /// at least one letter.
    fn is_content(&self, token: &str) -> bool {
        !self.is_stopword(token)
            && !self.entries.contains_key(token)
            && token.chars().any(char::is_alphabetic)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> LexiconError {
    LexiconError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the tab-separated lexicon format:
///
/// ```text
/// #!version   bloom-default-1.0
/// #!framework Bloom
/// compare     Bloom   Analyze     1.0
/// the         Bloom   STOPWORD
/// ```
///
/// Tokens are lowercased. The framework comes from the `#!framework`
/// directive or, failing that, the first entry; every later line must agree.
pub fn load_lexicon(source: &str) -> Result<Lexicon, LexiconError> {
    let mut framework: Option<Framework> = None;
    let mut version = String::from("unversioned");
    let mut entries = BTreeMap::new();
    let mut stopwords = BTreeSet::new();

    for (i, raw) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if let Some(directive) = line.strip_prefix("#!") {
            let (key, value) = directive
                .split_once(['\t', ' '])
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| parse_err(line_no, "directive needs a value"))?;
            match key {
                "version" => version = value.to_string(),
                "framework" => {
                    framework = Some(value.parse().map_err(|e: ModelError| parse_err(line_no, e.to_string()))?)
                }
                other => return Err(parse_err(line_no, format!("unknown directive `{other}`"))),
            }
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let token = fields[0].to_lowercase();
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(parse_err(line_no, format!("invalid token `{}`", fields[0])));
        }
        if fields.len() < 3 {
            return Err(parse_err(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let fw: Framework = fields[1]
            .parse()
            .map_err(|e: ModelError| parse_err(line_no, e.to_string()))?;
        match framework {
            None => framework = Some(fw),
            Some(expected) if expected != fw => {
                return Err(parse_err(
                    line_no,
                    format!("framework {fw} inside a {expected} lexicon"),
                ))
            }
            Some(_) => {}
        }
        let duplicate = entries.contains_key(&token) || stopwords.contains(&token);
        if fields.len() == 3 && fields[2] == "STOPWORD" {
            if duplicate {
                return Err(LexiconError::DuplicateToken { line: line_no, token });
            }
            stopwords.insert(token);
            continue;
        }
        if fields.len() != 4 {
            return Err(parse_err(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let level = TaxonomyLevel::parse(fw, fields[2])
            .map_err(|e| parse_err(line_no, e.to_string()))?;
        let weight: f64 = fields[3]
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid weight `{}`", fields[3])))?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(parse_err(line_no, format!("weight must be positive, got {weight}")));
        }
        if duplicate {
            return Err(LexiconError::DuplicateToken { line: line_no, token });
        }
        entries.insert(token, LexiconEntry { level, weight });
    }

    Ok(Lexicon {
        framework: framework.unwrap_or(Framework::Bloom),
        entries,
        stopwords,
        version,
    })
}

/// Lowercases, strips punctuation inside each whitespace-separated chunk,
/// and drops chunks that end up empty.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|chunk| {
            chunk
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Placeholder for a future embedding-similarity signal. Setting it makes
/// classification fail with [`ClassifyError::SimilarityUnavailable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityConfig {
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub temperature: f64,
    /// Multiplier for a lexicon verb in first position.
    pub leading_verb_boost: f64,
    /// `why`/`how` cue, in units of the lexicon's reference weight.
    pub interrogative_bonus: f64,
    /// `X and Y` / `X versus Y` cue, in units of the reference weight.
    pub coordination_bonus: f64,
    pub consistent_threshold: f64,
    pub similarity: Option<SimilarityConfig>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            temperature: 1.0,
            leading_verb_boost: 1.5,
            interrogative_bonus: 0.5,
            coordination_bonus: 0.5,
            consistent_threshold: 0.25,
            similarity: None,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_pos(self.temperature) {
            return Err(ClassifyError::InvalidConfig("temperature must be > 0".into()));
        }
        if !finite_pos(self.leading_verb_boost) {
            return Err(ClassifyError::InvalidConfig("leading_verb_boost must be > 0".into()));
        }
        if !finite_nonneg(self.interrogative_bonus) || !finite_nonneg(self.coordination_bonus) {
            return Err(ClassifyError::InvalidConfig("structural bonuses must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.consistent_threshold) {
            return Err(ClassifyError::InvalidConfig("consistent_threshold must be in [0,1]".into()));
        }
        if self.similarity.is_some() {
            return Err(ClassifyError::SimilarityUnavailable);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPrediction {
    pub framework: Framework,
    /// Raw score per level, indexed by rank − 1.
    pub raw_scores: Vec<f64>,
    /// Softmax probability per level, indexed by rank − 1.
    pub probabilities: Vec<f64>,
    pub predicted_level: TaxonomyLevel,
    pub confidence: f64,
}

impl LevelPrediction {
    pub fn raw(&self, level: TaxonomyLevel) -> f64 {
        self.raw_scores[level.index()]
    }

    pub fn probability(&self, level: TaxonomyLevel) -> f64 {
        self.probabilities[level.index()]
    }

    pub fn probabilities_by_name(&self) -> BTreeMap<String, f64> {
        self.framework
            .levels()
            .iter()
            .map(|l| (l.name().to_string(), self.probability(*l)))
            .collect()
    }

    pub fn raw_by_name(&self) -> BTreeMap<String, f64> {
        self.framework
            .levels()
            .iter()
            .map(|l| (l.name().to_string(), self.raw(*l)))
            .collect()
    }
}

fn structural_targets(framework: Framework) -> (Vec<TaxonomyLevel>, TaxonomyLevel) {
    match framework {
        Framework::Bloom => (
            vec![
                TaxonomyLevel::Bloom(BloomLevel::Understand),
                TaxonomyLevel::Bloom(BloomLevel::Analyze),
            ],
            TaxonomyLevel::Bloom(BloomLevel::Analyze),
        ),
        Framework::Solo => (
            vec![
                TaxonomyLevel::Solo(SoloLevel::Multistructural),
                TaxonomyLevel::Solo(SoloLevel::Relational),
            ],
            TaxonomyLevel::Solo(SoloLevel::Relational),
        ),
    }
}

/// Raw level scores for an already-tokenized stem. An empty token list
/// scores zero everywhere.
pub fn raw_scores(tokens: &[String], lexicon: &Lexicon, config: &ClassifierConfig) -> Vec<f64> {
    let framework = lexicon.framework;
    let mut scores = vec![0.0; framework.level_count()];

    for (pos, token) in tokens.iter().enumerate() {
        if let Some(entry) = lexicon.entry(token) {
            let boost = if pos == 0 { config.leading_verb_boost } else { 1.0 };
            scores[entry.level.index()] += entry.weight * boost;
        }
    }

    let unit = lexicon.reference_weight();
    let (interrogative_levels, coordination_level) = structural_targets(framework);
    if tokens.iter().any(|t| INTERROGATIVES.contains(&t.as_str())) {
        for level in interrogative_levels {
            scores[level.index()] += config.interrogative_bonus * unit;
        }
    }
    let coordinated = (1..tokens.len().saturating_sub(1)).any(|i| {
        COORDINATORS.contains(&tokens[i].as_str())
            && lexicon.is_content(&tokens[i - 1])
            && lexicon.is_content(&tokens[i + 1])
    });
    if coordinated {
        scores[coordination_level.index()] += config.coordination_bonus * unit;
    }
    scores
}

fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Prediction for a token list. Unchecked: callers validate config/lexicon.
pub fn predict_tokens(tokens: &[String], lexicon: &Lexicon, config: &ClassifierConfig) -> LevelPrediction {
    let framework = lexicon.framework;
    let raw = raw_scores(tokens, lexicon, config);
    let probabilities = softmax(&raw, config.temperature);
    let best = argmax(&probabilities);
    LevelPrediction {
        framework,
        confidence: probabilities[best],
        predicted_level: framework.levels()[best],
        raw_scores: raw,
        probabilities,
    }
}

pub fn classify(
    stem: &str,
    lexicon: &Lexicon,
    config: &ClassifierConfig,
) -> Result<LevelPrediction, ClassifyError> {
    if stem.trim().is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    if lexicon.is_empty() {
        return Err(ClassifyError::EmptyLexicon);
    }
    config.validate()?;
    Ok(predict_tokens(&tokenize(stem), lexicon, config))
}

/// Leave-one-out attribution: each token's weight is the drop in the
/// predicted level's probability when that single occurrence is removed.
pub fn attribute(
    stem: &str,
    prediction: &LevelPrediction,
    lexicon: &Lexicon,
    config: &ClassifierConfig,
) -> Result<AttributionMap, ClassifyError> {
    if stem.trim().is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    if lexicon.is_empty() {
        return Err(ClassifyError::EmptyLexicon);
    }
    config.validate()?;
    let tokens = tokenize(stem);
    let predicted = prediction.predicted_level;
    let base = prediction.probability(predicted);

    let mut reduced = Vec::with_capacity(tokens.len().saturating_sub(1));
    let weights: Vec<TokenWeight> = tokens
        .iter()
        .enumerate()
        .map(|(i, token)| {
            reduced.clear();
            reduced.extend(tokens[..i].iter().cloned());
            reduced.extend(tokens[i + 1..].iter().cloned());
            let without = predict_tokens(&reduced, lexicon, config).probability(predicted);
            TokenWeight {
                token: token.clone(),
                weight: base - without,
            }
        })
        .collect();

    let positive_total: f64 = weights.iter().filter(|t| t.weight > 0.0).map(|t| t.weight).sum();
    let on_level: f64 = weights
        .iter()
        .filter(|t| t.weight > 0.0 && lexicon.entry(&t.token).is_some_and(|e| e.level == predicted))
        .map(|t| t.weight)
        .sum();
    let lexicon_mass_ratio = if positive_total > 0.0 {
        on_level / positive_total
    } else {
        0.0
    };

    let mut map = AttributionMap {
        tokens: weights,
        predicted_level: predicted,
        lexicon_mass_ratio,
        verdict: Verdict::Irrelevant,
    };
    map.verdict = consistency_verdict(&map, lexicon, config);
    Ok(map)
}

/// Consistent when enough positive mass sits on the predicted level's
/// verbs and the strongest token is a content word; Suspicious when the
/// mass is thin or the strongest token is a stopword; Irrelevant when no
/// content token (or no on-level verb) carries positive weight.
pub fn consistency_verdict(map: &AttributionMap, lexicon: &Lexicon, config: &ClassifierConfig) -> Verdict {
    let content_positive = map
        .tokens
        .iter()
        .any(|t| t.weight > 0.0 && !lexicon.is_stopword(&t.token));
    if !content_positive || map.lexicon_mass_ratio <= 0.0 {
        return Verdict::Irrelevant;
    }
    let top_is_stopword = map
        .top_index()
        .is_some_and(|i| lexicon.is_stopword(&map.tokens[i].token));
    if top_is_stopword || map.lexicon_mass_ratio < config.consistent_threshold {
        Verdict::Suspicious
    } else {
        Verdict::Consistent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bloom() -> Lexicon {
        Lexicon::bloom_default()
    }

    fn level(name: &str) -> TaxonomyLevel {
        TaxonomyLevel::parse(Framework::Bloom, name).unwrap()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(
            tokenize("Compare quicksort and mergesort."),
            vec!["compare", "quicksort", "and", "mergesort"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Why does TCP retransmit?"), vec!["why", "does", "tcp", "retransmit"]);
        assert_eq!(tokenize("  ?! -- "), Vec::<String>::new());
    }

    #[test]
    fn default_lexicons_load() {
        let b = bloom();
        assert_eq!(b.framework, Framework::Bloom);
        for l in Framework::Bloom.levels() {
            assert!(b.count_for(*l) >= 10, "{l} has {} verbs", b.count_for(*l));
        }
        assert_eq!(b.reference_weight(), 1.0);
        assert_eq!(b.version, "bloom-default-1.0");
        let s = Lexicon::solo_default();
        assert_eq!(s.framework, Framework::Solo);
        for name in ["Unistructural", "Multistructural", "Relational", "ExtendedAbstract"] {
            let l = TaxonomyLevel::parse(Framework::Solo, name).unwrap();
            assert!(s.count_for(l) >= 10);
        }
    }

    #[test]
    fn uppercase_tokens_are_normalized() {
        let lex = load_lexicon("Compare\tBloom\tAnalyze\t1.0\n").unwrap();
        assert!(lex.entry("compare").is_some());
    }

    #[test]
    fn solo_level_in_bloom_lexicon_is_rejected() {
        let err = load_lexicon("#!framework\tBloom\nrelate\tBloom\tRelational\t1.0\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }));
        let err = load_lexicon("compare\tBloom\tAnalyze\t1.0\nrelate\tSOLO\tRelational\t1.0\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }));
    }

    #[test]
    fn lexicon_parse_errors_carry_line_numbers() {
        let err = load_lexicon("# c\ncompare\tBloom\tAnalyze\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }));
        let err = load_lexicon("compare\tBloom\tAnalyze\t-1\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 1, .. }));
        let err = load_lexicon("compare\tBloom\tAnalyze\t1\nCOMPARE\tBloom\tApply\t1\n").unwrap_err();
        assert_eq!(err, LexiconError::DuplicateToken { line: 2, token: "compare".into() });
    }

    #[test]
    fn list_stem_is_remember() {
        let p = classify("List the four layers of the TCP/IP model.", &bloom(), &ClassifierConfig::default()).unwrap();
        assert_eq!(p.predicted_level, level("Remember"));
        // "list" is the only cue: 1.0 × 1.5 on Remember
        assert_eq!(p.raw(level("Remember")), 1.5);
    }

    #[test]
    fn compare_stem_is_analyze() {
        let p = classify(
            "Compare the trade-offs between two sorting algorithms.",
            &bloom(),
            &ClassifierConfig::default(),
        )
        .unwrap();
        assert_eq!(p.predicted_level, level("Analyze"));
    }

    #[test]
    fn cue_free_stem_is_uniform() {
        let p = classify("Pick the right value for the register.", &bloom(), &ClassifierConfig::default()).unwrap();
        for prob in &p.probabilities {
            assert!((prob - 1.0 / 6.0).abs() < 1e-15);
        }
        assert!((p.confidence - 1.0 / 6.0).abs() < 1e-15);
        // tie goes to the least complex level
        assert_eq!(p.predicted_level, level("Remember"));
    }

    #[test]
    fn classify_errors() {
        let cfg = ClassifierConfig::default();
        assert_eq!(classify("   ", &bloom(), &cfg), Err(ClassifyError::EmptyInput));
        let empty = load_lexicon("").unwrap();
        assert_eq!(classify("list it", &empty, &cfg), Err(ClassifyError::EmptyLexicon));
        let bad = ClassifierConfig { temperature: 0.0, ..cfg.clone() };
        assert!(matches!(classify("list it", &bloom(), &bad), Err(ClassifyError::InvalidConfig(_))));
        let sim = ClassifierConfig { similarity: Some(SimilarityConfig { weight: 1.0 }), ..cfg };
        assert_eq!(classify("list it", &bloom(), &sim), Err(ClassifyError::SimilarityUnavailable));
    }

    #[test]
    fn structural_cues() {
        let lex = bloom();
        let cfg = ClassifierConfig::default();
        let why = predict_tokens(&tokenize("Why does TCP retransmit?"), &lex, &cfg);
        assert_eq!(why.raw(level("Understand")), 0.5);
        assert_eq!(why.raw(level("Analyze")), 0.5);
        // interrogative ties resolve to the lower rank
        assert_eq!(why.predicted_level, level("Understand"));

        let coord = predict_tokens(&tokenize("Compare quicksort and mergesort."), &lex, &cfg);
        assert_eq!(coord.raw(level("Analyze")), 1.5 + 0.5);

        // coordination needs content words on both sides
        let verbs = predict_tokens(&tokenize("Define and list the layers."), &lex, &cfg);
        assert_eq!(verbs.raw(level("Analyze")), 0.0);
    }

    #[test]
    fn compare_gets_the_largest_weight() {
        let lex = bloom();
        let cfg = ClassifierConfig::default();
        let stem = "Compare the stack frames of two recursive calls.";
        let p = classify(stem, &lex, &cfg).unwrap();
        assert_eq!(p.predicted_level, level("Analyze"));
        let map = attribute(stem, &p, &lex, &cfg).unwrap();
        let top = map.top_index().unwrap();
        assert_eq!(map.tokens[top].token, "compare");
        assert!(map.tokens[top].weight > 0.0);
        assert_eq!(map.verdict, Verdict::Consistent);
        assert_eq!(map.lexicon_mass_ratio, 1.0);
    }

    #[test]
    fn operational_verbs_pull_towards_apply() {
        let lex = bloom();
        let cfg = ClassifierConfig::default();
        let stem = "Use a hash map and apply memoization to speed up the recursive Fibonacci function.";
        let p = classify(stem, &lex, &cfg).unwrap();
        assert_eq!(p.predicted_level, level("Apply"));
        let map = attribute(stem, &p, &lex, &cfg).unwrap();
        let mut ranked: Vec<_> = map.tokens.iter().collect();
        ranked.sort_by(|a, b| b.weight.total_cmp(&a.weight));
        let top_two: BTreeSet<_> = ranked[..2].iter().map(|t| t.token.as_str()).collect();
        assert_eq!(top_two, BTreeSet::from(["use", "apply"]));
    }

    #[test]
    fn cue_free_stem_is_irrelevant() {
        let lex = bloom();
        let cfg = ClassifierConfig::default();
        let stem = "Pick the right value for the register.";
        let p = classify(stem, &lex, &cfg).unwrap();
        let map = attribute(stem, &p, &lex, &cfg).unwrap();
        assert_eq!(map.lexicon_mass_ratio, 0.0);
        assert_eq!(map.verdict, Verdict::Irrelevant);
    }

    fn map_of(tokens: &[(&str, f64)], ratio: f64) -> AttributionMap {
        AttributionMap {
            tokens: tokens
                .iter()
                .map(|(t, w)| TokenWeight { token: t.to_string(), weight: *w })
                .collect(),
            predicted_level: level("Evaluate"),
            lexicon_mass_ratio: ratio,
            verdict: Verdict::Irrelevant,
        }
    }

    #[test]
    fn verdict_rule_table() {
        let lex = bloom();
        let cfg = ClassifierConfig::default();
        let m = map_of(&[("evaluate", 0.3), ("design", 0.2)], 0.60);
        assert_eq!(consistency_verdict(&m, &lex, &cfg), Verdict::Consistent);
        let m = map_of(&[("justify", 0.3), ("loop", 0.2)], 0.10);
        assert_eq!(consistency_verdict(&m, &lex, &cfg), Verdict::Suspicious);
        let m = map_of(&[("the", 0.3), ("evaluate", 0.2)], 0.40);
        assert_eq!(consistency_verdict(&m, &lex, &cfg), Verdict::Suspicious);
        let m = map_of(&[("the", 0.3), ("why", 0.2), ("loop", -0.1)], 0.0);
        assert_eq!(consistency_verdict(&m, &lex, &cfg), Verdict::Irrelevant);
        let m = map_of(&[("loop", 0.3)], 0.0);
        assert_eq!(consistency_verdict(&m, &lex, &cfg), Verdict::Irrelevant);
        // threshold is inclusive
        let m = map_of(&[("evaluate", 0.3)], 0.25);
        assert_eq!(consistency_verdict(&m, &lex, &cfg), Verdict::Consistent);
    }

    #[test]
    fn repeated_tokens_get_one_weight_each() {
        let lex = bloom();
        let cfg = ClassifierConfig::default();
        let stem = "Explain the loop, then explain the recursion.";
        let p = classify(stem, &lex, &cfg).unwrap();
        let map = attribute(stem, &p, &lex, &cfg).unwrap();
        let explains: Vec<_> = map.tokens.iter().filter(|t| t.token == "explain").collect();
        assert_eq!(explains.len(), 2);
        // the leading occurrence is boosted, so removing it costs more
        assert!(explains[0].weight > explains[1].weight);
    }
}
