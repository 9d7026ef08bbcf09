//! Record serialization. Strict mode rejects unknown fields; lenient mode
//! keeps them alongside the typed record and writes them back out.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::canonical::canonical_value;
use crate::model::CertificationRecord;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown field(s): {}", .0.join(", "))]
    UnknownFields(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Strict,
    Lenient,
}

/// A decoded value together with whatever the typed schema did not cover.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub value: T,
    /// Mirror of the input tree holding only unknown keys; `None` when the
    /// input had none.
    pub unknown: Option<Value>,
}

pub fn decode<T: DeserializeOwned + Serialize>(json: &str, mode: Mode) -> Result<Decoded<T>, CodecError> {
    let raw: Value = serde_json::from_str(json)?;
    let value: T = decode_pruned(&raw)?;
    let known = serde_json::to_value(&value)?;
    let mut paths = Vec::new();
    let unknown = diff(&raw, &known, "", &mut paths);
    match (mode, paths.is_empty()) {
        (_, true) => Ok(Decoded { value, unknown: None }),
        (Mode::Strict, false) => Err(CodecError::UnknownFields(paths)),
        (Mode::Lenient, false) => Ok(Decoded { value, unknown }),
    }
}

pub fn encode<T: Serialize>(decoded: &Decoded<T>) -> Result<String, CodecError> {
    let mut value = serde_json::to_value(&decoded.value)?;
    if let Some(extra) = &decoded.unknown {
        merge(&mut value, extra);
    }
    Ok(canonical_value(&value))
}

pub fn record_to_json(record: &CertificationRecord) -> String {
    canonical_value(&serde_json::to_value(record).expect("records always serialize"))
}

pub fn record_from_json(json: &str, mode: Mode) -> Result<Decoded<CertificationRecord>, CodecError> {
    decode(json, mode)
}

// The typed structs use deny_unknown_fields, so lenient decoding first prunes
// every key serde rejects, located by its exact path.
fn decode_pruned<T: DeserializeOwned>(raw: &Value) -> Result<T, CodecError> {
    let mut candidate = raw.clone();
    loop {
        let attempt: Result<T, _> = serde_path_to_error::deserialize(candidate.clone());
        match attempt {
            Ok(v) => return Ok(v),
            Err(e) => {
                let path: Vec<String> = e
                    .path()
                    .iter()
                    .map(|seg| match seg {
                        serde_path_to_error::Segment::Seq { index } => index.to_string(),
                        serde_path_to_error::Segment::Map { key } => key.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                let inner = e.into_inner();
                let Some(field) = unknown_field_name(&inner.to_string()) else {
                    return Err(CodecError::Json(inner));
                };
                if !remove_at(&mut candidate, &path, &field) {
                    return Err(CodecError::Json(inner));
                }
            }
        }
    }
}

fn unknown_field_name(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

// `path` ends with the offending key itself.
fn remove_at(value: &mut Value, path: &[String], field: &str) -> bool {
    let parents = match path.split_last() {
        Some((last, parents)) if last == field => parents,
        _ => path,
    };
    let mut cursor = value;
    for seg in parents {
        cursor = match cursor {
            Value::Object(map) => match map.get_mut(seg) {
                Some(v) => v,
                None => return false,
            },
            Value::Array(items) => match seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)) {
                Some(v) => v,
                None => return false,
            },
            _ => return false,
        };
    }
    match cursor {
        Value::Object(map) => map.remove(field).is_some(),
        _ => false,
    }
}

fn diff(raw: &Value, known: &Value, path: &str, paths: &mut Vec<String>) -> Option<Value> {
    match (raw, known) {
        (Value::Object(r), Value::Object(k)) => {
            let mut out = Map::new();
            for (key, rv) in r {
                let sub = format!("{path}/{key}");
                match k.get(key) {
                    None => {
                        paths.push(sub);
                        out.insert(key.clone(), rv.clone());
                    }
                    Some(kv) => {
                        if let Some(d) = diff(rv, kv, &sub, paths) {
                            out.insert(key.clone(), d);
                        }
                    }
                }
            }
            (!out.is_empty()).then_some(Value::Object(out))
        }
        (Value::Array(r), Value::Array(k)) => {
            let parts: Vec<Value> = r
                .iter()
                .zip(k.iter())
                .enumerate()
                .map(|(i, (rv, kv))| diff(rv, kv, &format!("{path}/{i}"), paths).unwrap_or(Value::Null))
                .collect();
            parts.iter().any(|p| !p.is_null()).then_some(Value::Array(parts))
        }
        _ => None,
    }
}

fn merge(target: &mut Value, extra: &Value) {
    match (target, extra) {
        (Value::Object(t), Value::Object(e)) => {
            for (k, ev) in e {
                match t.get_mut(k) {
                    Some(tv) => merge(tv, ev),
                    None => {
                        t.insert(k.clone(), ev.clone());
                    }
                }
            }
        }
        (Value::Array(t), Value::Array(e)) => {
            for (tv, ev) in t.iter_mut().zip(e) {
                if !ev.is_null() {
                    merge(tv, ev);
                }
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BloomLevel, TaxonomyLevel};
    use serde_json::json;

    #[test]
    fn strict_rejects_and_lenient_preserves_nested_unknowns() {
        let level = json!({"framework": "Bloom", "name": "Apply", "rank": 3, "note": "x"});
        let text = level.to_string();
        let err = decode::<TaxonomyLevel>(&text, Mode::Strict).unwrap_err();
        assert!(matches!(err, CodecError::UnknownFields(ref p) if p == &vec!["/note".to_string()]));

        let lenient = decode::<TaxonomyLevel>(&text, Mode::Lenient).unwrap();
        assert_eq!(lenient.value, TaxonomyLevel::Bloom(BloomLevel::Apply));
        let back: Value = serde_json::from_str(&encode(&lenient).unwrap()).unwrap();
        assert_eq!(back, level);
    }

    #[test]
    fn clean_input_has_no_unknowns() {
        let text = r#"{"framework":"SOLO","name":"Relational","rank":4}"#;
        let d = decode::<TaxonomyLevel>(text, Mode::Strict).unwrap();
        assert!(d.unknown.is_none());
        assert_eq!(encode(&d).unwrap(), text);
    }
}
