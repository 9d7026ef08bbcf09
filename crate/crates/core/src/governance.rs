//! Sensitive-term screening. Flags are advisory inputs to triage: minor
//! terms route an item to review, major terms reject it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AssessmentItem, BiasCategory, BiasFlag, FlagLocation, Severity, Span};

pub const DEFAULT_POLICY: &str = include_str!("../data/policy.tsv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTerm {
    /// Lowercased, internal whitespace collapsed to single spaces.
    pub term: String,
    pub category: BiasCategory,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasPolicy {
    pub terms: Vec<PolicyTerm>,
    pub version: String,
}

impl BiasPolicy {
    pub fn default_policy() -> BiasPolicy {
        load_policy(DEFAULT_POLICY).expect("bundled policy is valid")
    }

    pub fn categories(&self) -> BTreeSet<BiasCategory> {
        self.terms.iter().map(|t| t.category).collect()
    }

    pub fn with_term(mut self, term: PolicyTerm) -> BiasPolicy {
        self.terms.push(term);
        self
    }
}

fn normalize_term(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
        .map(fold)
        .collect()
}

/// `term TAB category TAB severity` per line; `#` starts a comment and
/// `#!version` names the policy.
pub fn load_policy(source: &str) -> Result<BiasPolicy, PolicyError> {
    let mut policy = BiasPolicy {
        terms: Vec::new(),
        version: "unversioned".into(),
    };
    let mut seen = BTreeSet::new();
    for (i, raw) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if let Some(rest) = line.strip_prefix("#!version") {
            policy.version = rest.trim().to_string();
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let err = |message: String| PolicyError::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let term = normalize_term(fields[0]);
        if term.is_empty() {
            return Err(err("empty term".into()));
        }
        let category: BiasCategory = fields[1].parse().map_err(err)?;
        let severity: Severity = fields[2].parse().map_err(err)?;
        if !seen.insert(term.clone()) {
            return Err(err(format!("duplicate term `{term}`")));
        }
        policy.terms.push(PolicyTerm { term, category, severity });
    }
    Ok(policy)
}

// Single-char case folding keeps character offsets stable.
fn fold(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Whole-word, case-insensitive matches of `term` in `text`, as character
/// spans. A space in the term matches any single whitespace character.
pub fn find_term(text: &[char], term: &[char]) -> Vec<Span> {
    let n = term.len();
    if n == 0 || text.len() < n {
        return Vec::new();
    }
    let mut spans = Vec::new();
    for start in 0..=text.len() - n {
        let matches = text[start..start + n].iter().zip(term).all(|(t, p)| {
            if *p == ' ' {
                t.is_whitespace()
            } else {
                fold(*t) == *p
            }
        });
        if !matches {
            continue;
        }
        let left_ok = start == 0 || !is_word_char(text[start - 1]);
        let right_ok = start + n == text.len() || !is_word_char(text[start + n]);
        if left_ok && right_ok {
            spans.push(Span { start, end: start + n });
        }
    }
    spans
}

/// Text at `span`, or `None` if the span is out of range.
pub fn span_text(text: &str, span: Span) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    (span.start <= span.end && span.end <= chars.len())
        .then(|| chars[span.start..span.end].iter().collect())
}

/// Screens stem, options, and rationale. Flags are sorted by location, then
/// span start.
pub fn screen(item: &AssessmentItem, rationale: &str, policy: &BiasPolicy) -> Vec<BiasFlag> {
    let mut texts: Vec<(FlagLocation, &str)> = vec![(FlagLocation::Stem, item.stem.as_str())];
    texts.extend(
        item.options
            .iter()
            .enumerate()
            .map(|(i, o)| (FlagLocation::Option(i), o.as_str())),
    );
    texts.push((FlagLocation::Rationale, rationale));

    let patterns: Vec<(Vec<char>, &PolicyTerm)> =
        policy.terms.iter().map(|t| (t.term.chars().collect(), t)).collect();

    let mut flags = Vec::new();
    for (location, text) in texts {
        let chars: Vec<char> = text.chars().collect();
        for (pattern, term) in &patterns {
            for span in find_term(&chars, pattern) {
                flags.push(BiasFlag {
                    matched_term: chars[span.start..span.end].iter().collect(),
                    category: term.category,
                    severity: term.severity,
                    span,
                    location,
                });
            }
        }
    }
    flags.sort_by(|a, b| {
        (a.location, a.span.start, a.span.end).cmp(&(b.location, b.span.start, b.span.end))
    });
    flags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{max_severity, BloomLevel, RiskLevel, TaxonomyLevel};

    fn item(stem: &str) -> AssessmentItem {
        AssessmentItem {
            id: "q".into(),
            stem: stem.into(),
            options: vec!["one".into(), "two".into()],
            correct_index: 0,
            declared_level: TaxonomyLevel::Bloom(BloomLevel::Apply),
            rationale: String::new(),
            topic: "t".into(),
            course_context: "c".into(),
            language_code: "en".into(),
        }
    }

    #[test]
    fn default_policy_covers_many_categories() {
        let p = BiasPolicy::default_policy();
        assert!(p.categories().len() >= 5);
        assert_eq!(p.version, "policy-default-1.0");
    }

    #[test]
    fn clean_stem_has_no_flags() {
        let flags = screen(&item("Trace the loop invariant."), "", &BiasPolicy::default_policy());
        assert!(flags.is_empty());
    }

    #[test]
    fn culture_specific_term_is_major() {
        let flags = screen(
            &item("Compute the seating plan for a Thanksgiving dinner."),
            "",
            &BiasPolicy::default_policy(),
        );
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].severity, Severity::Major);
        assert_eq!(flags[0].category, BiasCategory::CultureRegion);
        assert_eq!(flags[0].matched_term, "Thanksgiving");
        assert_eq!(max_severity(&flags), RiskLevel::Major);
    }

    #[test]
    fn repeated_minor_term_gives_two_spans() {
        let rationale = "The chairman approves; then the CHAIRMAN signs.";
        let flags = screen(&item("Trace it."), rationale, &BiasPolicy::default_policy());
        assert_eq!(flags.len(), 2);
        assert!(flags.iter().all(|f| f.severity == Severity::Minor && f.category == BiasCategory::Gender));
        assert_ne!(flags[0].span, flags[1].span);
        for f in &flags {
            let text = span_text(rationale, f.span).unwrap();
            assert!(text.eq_ignore_ascii_case(&f.matched_term));
        }
    }

    #[test]
    fn multiword_and_boundaries() {
        let chars: Vec<char> = "the Super\tBowl ad; superbowl".chars().collect();
        let term: Vec<char> = "super bowl".chars().collect();
        assert_eq!(find_term(&chars, &term), vec![Span { start: 4, end: 14 }]);
        let chars: Vec<char> = "mankindness mankind".chars().collect();
        let term: Vec<char> = "mankind".chars().collect();
        assert_eq!(find_term(&chars, &term), vec![Span { start: 12, end: 19 }]);
    }

    #[test]
    fn flags_are_sorted_by_location() {
        let mut it = item("A baseball score table.");
        it.options = vec!["cricket".into(), "none".into()];
        let flags = screen(&it, "elderly users", &BiasPolicy::default_policy());
        let locs: Vec<_> = flags.iter().map(|f| f.location).collect();
        assert_eq!(locs, vec![FlagLocation::Stem, FlagLocation::Option(0), FlagLocation::Rationale]);
    }

    #[test]
    fn policy_loading() {
        assert!(load_policy("").unwrap().terms.is_empty());
        let err = load_policy("# ok\nbad line without tabs\n").unwrap_err();
        assert_eq!(err, PolicyError::Parse { line: 2, message: "expected 3 tab-separated fields, found 1".into() });
        let err = load_policy("x\tGender\tMinor\nX\tAge\tMajor\n").unwrap_err();
        assert!(matches!(err, PolicyError::Parse { line: 2, .. }));
        assert!(load_policy("x\tNope\tMinor\n").is_err());
        assert!(load_policy("x\tAge\tHuge\n").is_err());
    }

    #[test]
    fn empty_policy_never_flags() {
        let flags = screen(&item("Thanksgiving"), "chairman", &BiasPolicy::default());
        assert!(flags.is_empty());
    }
}
