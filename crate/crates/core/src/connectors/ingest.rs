//! Streaming JSON-lines item ingestion. Bad lines are reported with their
//! line number and never abort the batch.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::model::{validate_item, AssessmentItem, Framework, HexDigest, ProvenanceRecord, TaxonomyLevel};

pub const IMPORTED_MODEL_ID: &str = "imported";
pub const IMPORTED_MODEL_VERSION: &str = "unspecified";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedItem {
    pub line: usize,
    pub item: AssessmentItem,
    pub provenance: ProvenanceRecord,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestOutcome {
    pub items: Vec<IngestedItem>,
    pub errors: Vec<LineError>,
}

impl IngestOutcome {
    pub fn into_pairs(self) -> Vec<(AssessmentItem, ProvenanceRecord)> {
        self.items.into_iter().map(|i| (i.item, i.provenance)).collect()
    }
}

fn default_language() -> String {
    "en".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemLine {
    id: String,
    stem: String,
    options: Vec<String>,
    correct_index: usize,
    declared_framework: Framework,
    declared_level: String,
    rationale: String,
    topic: String,
    course_context: String,
    #[serde(default = "default_language")]
    language_code: String,
    #[serde(default)]
    provenance: Option<ProvenanceRecord>,
}

fn error(line: usize, code: &str, message: impl Into<String>) -> LineError {
    LineError {
        line,
        code: code.to_string(),
        message: message.into(),
    }
}

/// One input line for `item`, the inverse of ingestion.
pub fn to_line(item: &AssessmentItem, provenance: Option<&ProvenanceRecord>) -> String {
    let line = ItemLine {
        id: item.id.clone(),
        stem: item.stem.clone(),
        options: item.options.clone(),
        correct_index: item.correct_index,
        declared_framework: item.declared_level.framework(),
        declared_level: item.declared_level.name().to_string(),
        rationale: item.rationale.clone(),
        topic: item.topic.clone(),
        course_context: item.course_context.clone(),
        language_code: item.language_code.clone(),
        provenance: provenance.cloned(),
    };
    crate::canonical::to_canonical_string(&line).expect("item lines serialize")
}

/// Provenance for items that arrive without one. The prompt hashes are of
/// the empty string, marking that no prompt is on record.
pub fn imported_provenance(course_context: &str, clock: &dyn Clock) -> ProvenanceRecord {
    ProvenanceRecord {
        model_id: IMPORTED_MODEL_ID.into(),
        model_version: IMPORTED_MODEL_VERSION.into(),
        prompt_hash: HexDigest::of(b""),
        prompt_text: None,
        system_instructions_hash: HexDigest::of(b""),
        generated_at: clock.now(),
        generation_params: Default::default(),
        course_context: course_context.to_string(),
    }
}

fn parse_line(bytes: &[u8], line: usize, clock: &dyn Clock) -> Result<IngestedItem, LineError> {
    let text = std::str::from_utf8(bytes).map_err(|e| error(line, "invalid_utf8", e.to_string()))?;
    let text = text.strip_suffix('\n').unwrap_or(text);
    let text = text.strip_suffix('\r').unwrap_or(text);
    if text.trim().is_empty() {
        return Err(error(line, "blank_line", "line is empty"));
    }
    let raw: ItemLine = serde_json::from_str(text).map_err(|e| {
        let code = if e.is_data() { "invalid_record" } else { "malformed_json" };
        error(line, code, e.to_string())
    })?;
    let level = TaxonomyLevel::parse(raw.declared_framework, &raw.declared_level)
        .map_err(|e| error(line, "unknown_level", e.to_string()))?;
    let item = AssessmentItem {
        id: raw.id,
        stem: raw.stem,
        options: raw.options,
        correct_index: raw.correct_index,
        declared_level: level,
        rationale: raw.rationale,
        topic: raw.topic,
        course_context: raw.course_context,
        language_code: raw.language_code,
    };
    let validation = validate_item(&item);
    if let Some(v) = validation.violations.first() {
        return Err(error(line, &v.code, v.message.clone()));
    }
    let provenance = match raw.provenance {
        Some(p) => {
            p.validate().map_err(|e| error(line, "invalid_provenance", e.to_string()))?;
            p
        }
        None => imported_provenance(&item.course_context, clock),
    };
    Ok(IngestedItem {
        line,
        item,
        provenance,
    })
}

/// Reads every line of `reader`. Only an I/O failure of the stream itself
/// is fatal.
pub fn ingest_items(mut reader: impl BufRead, clock: &dyn Clock) -> std::io::Result<IngestOutcome> {
    let mut outcome = IngestOutcome::default();
    let mut seen = HashSet::new();
    let mut buf = Vec::new();
    let mut line = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line += 1;
        match parse_line(&buf, line, clock) {
            Ok(parsed) => {
                if !seen.insert(parsed.item.id.clone()) {
                    outcome.errors.push(error(
                        line,
                        "duplicate_id",
                        format!("id `{}` already used earlier in the batch", parsed.item.id),
                    ));
                } else {
                    outcome.items.push(parsed);
                }
            }
            Err(e) => outcome.errors.push(e),
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;

    fn line(id: &str, correct: usize) -> String {
        format!(
            r#"{{"id":"{id}","stem":"List the layers.","options":["a","b","c","d"],"correct_index":{correct},"declared_framework":"Bloom","declared_level":"Remember","rationale":"r","topic":"networking","course_context":"CS"}}"#
        )
    }

    fn run(text: &str) -> IngestOutcome {
        ingest_items(text.as_bytes(), &FixedClock::default_instant()).unwrap()
    }

    #[test]
    fn three_valid_lines() {
        let text = format!("{}\n{}\n{}\n", line("a", 0), line("b", 1), line("c", 2));
        let out = run(&text);
        assert_eq!(out.items.len(), 3);
        assert!(out.errors.is_empty());
        assert_eq!(out.items[0].provenance.model_id, IMPORTED_MODEL_ID);
    }

    #[test]
    fn index_out_of_range() {
        let out = run(&line("a", 7));
        assert_eq!(out.errors[0].code, "correct_index_out_of_range");
        assert_eq!(out.errors[0].line, 1);
    }

    #[test]
    fn duplicate_reported_on_later_line() {
        let out = run(&format!("{}\n{}\n", line("q-12", 0), line("q-12", 1)));
        assert_eq!(out.items.len(), 1);
        assert_eq!(out.errors[0].line, 2);
        assert_eq!(out.errors[0].code, "duplicate_id");
    }

    #[test]
    fn written_lines_read_back() {
        let first = run(&line("a", 2)).items.remove(0);
        let text = to_line(&first.item, Some(&first.provenance));
        let again = run(&text).items.remove(0);
        assert_eq!(again.item, first.item);
        assert_eq!(again.provenance, first.provenance);
    }

    #[test]
    fn garbage_lines() {
        let text = format!("{{not json\n\n{}\n", line("ok", 0).replace("Remember", "Memorise"));
        let out = run(&text);
        let codes: Vec<&str> = out.errors.iter().map(|e| e.code.as_str()).collect();
        assert_eq!(codes, ["malformed_json", "blank_line", "unknown_level"]);
        let out = ingest_items(&b"\xff\xfe\n"[..], &FixedClock::default_instant()).unwrap();
        assert_eq!(out.errors[0].code, "invalid_utf8");
    }
}
