//! Generator adapters: a deterministic stub and an HTTP chat-completion
//! client. Both return raw text that is parsed here with a strict grammar,
//! so the generator never shares code paths with the verifier.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::templates::{self, complete_rationale, compose_stem, level_verbs, options_for};
use crate::clock::Clock;
use crate::ledger::{AuditSink, EventType, LedgerError};
use crate::model::{AssessmentItem, Framework, HexDigest, ProvenanceRecord, TaxonomyLevel};
use crate::taxonomy::Lexicon;

pub const DEFAULT_OPTION_COUNT: usize = 4;

fn default_option_count() -> usize {
    DEFAULT_OPTION_COUNT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRequest {
    pub topic: String,
    pub target_level: TaxonomyLevel,
    #[serde(default = "default_option_count")]
    pub option_count: usize,
    pub course_context: String,
}

impl GenerationRequest {
    pub fn new(topic: impl Into<String>, target_level: TaxonomyLevel, course_context: impl Into<String>) -> Self {
        GenerationRequest {
            topic: topic.into(),
            target_level,
            option_count: DEFAULT_OPTION_COUNT,
            course_context: course_context.into(),
        }
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.option_count < 2 {
            return Err(GenerateError::InvalidRequest("option_count must be at least 2".into()));
        }
        if self.topic.trim().is_empty() {
            return Err(GenerateError::InvalidRequest("topic is empty".into()));
        }
        Ok(())
    }
}

pub const SYSTEM_INSTRUCTIONS: &str = "You write multiple-choice assessment items for university \
computing courses. Reply with exactly one JSON object and nothing else. The object has the fields \
stem (string), options (array of strings), correct_index (0-based integer), declared_framework \
(\"Bloom\" or \"SOLO\"), declared_level (level name), and rationale (string explaining the \
intended cognitive level and why each distractor is wrong).";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationPrompt {
    pub system: String,
    pub user: String,
    pub request: GenerationRequest,
}

impl GenerationPrompt {
    pub fn for_request(request: &GenerationRequest) -> GenerationPrompt {
        let user = format!(
            "Course context: {}\nTopic: {}\nTarget level: {}:{}\nNumber of options: {}\n\
             Write one item for this topic at the target level, with a self-contained rationale.",
            request.course_context,
            request.topic,
            request.target_level.framework(),
            request.target_level.name(),
            request.option_count,
        );
        GenerationPrompt {
            system: SYSTEM_INSTRUCTIONS.to_string(),
            user,
            request: request.clone(),
        }
    }

    pub fn prompt_hash(&self) -> HexDigest {
        HexDigest::of(format!("{}\n\n{}", self.system, self.user).as_bytes())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected endpoint response: {0}")]
    Protocol(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("generator did not answer within {0:?}")]
    AdapterTimeout(Duration),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("malformed generation: {reason}")]
    MalformedGeneration { reason: String, response: String },
}

#[async_trait]
pub trait GeneratorAdapter: Send + Sync {
    fn model_id(&self) -> &str;
    fn model_version(&self) -> &str;
    fn generation_params(&self) -> BTreeMap<String, Value>;
    async fn complete(&self, prompt: &GenerationPrompt) -> Result<String, AdapterError>;
}

/// The one structured block a generator response must contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedItem {
    pub stem: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub declared_framework: Framework,
    pub declared_level: String,
    pub rationale: String,
}

/// Accepts a bare JSON object, or text containing exactly one fenced
/// ```` ```json ```` block and nothing else that looks like JSON.
pub fn parse_generation(response: &str) -> Result<GeneratedItem, String> {
    let trimmed = response.trim();
    let body = if trimmed.starts_with('{') {
        trimmed
    } else {
        let blocks: Vec<&str> = trimmed.split("```json").skip(1).collect();
        match blocks.as_slice() {
            [one] => match one.split_once("```") {
                Some((inner, rest)) if !rest.contains("```") => inner.trim(),
                _ => return Err("unterminated or repeated fenced block".into()),
            },
            [] => return Err("response holds no JSON object".into()),
            _ => return Err("response holds more than one JSON block".into()),
        }
    };
    serde_json::from_str(body).map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub timeout: Duration,
    pub store_prompt_text: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            timeout: Duration::from_secs(60),
            store_prompt_text: true,
        }
    }
}

fn malformed(reason: impl Into<String>, response: &str) -> GenerateError {
    GenerateError::MalformedGeneration {
        reason: reason.into(),
        response: response.to_string(),
    }
}

/// Checks a parsed response against the request and builds the item.
pub fn build_item(
    request: &GenerationRequest,
    prompt_hash: &HexDigest,
    response: &str,
) -> Result<AssessmentItem, GenerateError> {
    let generated = parse_generation(response).map_err(|r| malformed(r, response))?;
    let level = TaxonomyLevel::parse(generated.declared_framework, &generated.declared_level)
        .map_err(|e| malformed(e.to_string(), response))?;
    if level != request.target_level {
        return Err(malformed(
            format!("declared level {level:?} differs from target {:?}", request.target_level),
            response,
        ));
    }
    if generated.stem.trim().is_empty() {
        return Err(malformed("empty stem", response));
    }
    if generated.options.len() != request.option_count {
        return Err(malformed(
            format!("{} options, expected {}", generated.options.len(), request.option_count),
            response,
        ));
    }
    if generated.correct_index >= generated.options.len() {
        return Err(malformed("correct_index out of range", response));
    }
    if generated.rationale.trim().is_empty() {
        return Err(malformed("empty rationale", response));
    }
    let digest = HexDigest::of(format!("{prompt_hash}\n{response}").as_bytes());
    Ok(AssessmentItem {
        id: format!("gen-{}", &digest.as_str()[..16]),
        stem: generated.stem,
        options: generated.options,
        correct_index: generated.correct_index,
        declared_level: level,
        rationale: generated.rationale,
        topic: request.topic.clone(),
        course_context: request.course_context.clone(),
        language_code: "en".into(),
    })
}

pub async fn generate(
    request: &GenerationRequest,
    adapter: &dyn GeneratorAdapter,
    clock: &dyn Clock,
    options: &GenerateOptions,
) -> Result<(AssessmentItem, ProvenanceRecord), GenerateError> {
    request.validate()?;
    let prompt = GenerationPrompt::for_request(request);
    let response = tokio::time::timeout(options.timeout, adapter.complete(&prompt))
        .await
        .map_err(|_| GenerateError::AdapterTimeout(options.timeout))??;
    let prompt_hash = prompt.prompt_hash();
    let item = build_item(request, &prompt_hash, &response)?;
    let provenance = ProvenanceRecord {
        model_id: adapter.model_id().to_string(),
        model_version: adapter.model_version().to_string(),
        prompt_hash,
        prompt_text: options.store_prompt_text.then(|| prompt.user.clone()),
        system_instructions_hash: HexDigest::of(prompt.system.as_bytes()),
        generated_at: clock.now(),
        generation_params: adapter.generation_params(),
        course_context: request.course_context.clone(),
    };
    Ok((item, provenance))
}

/// Runs requests with at most `parallelism` in flight; results keep
/// request order.
pub async fn generate_batch(
    requests: &[GenerationRequest],
    adapter: Arc<dyn GeneratorAdapter>,
    clock: Arc<dyn Clock>,
    options: &GenerateOptions,
    parallelism: usize,
) -> Vec<Result<(AssessmentItem, ProvenanceRecord), GenerateError>> {
    stream::iter(requests)
        .map(|r| {
            let adapter = adapter.clone();
            let clock = clock.clone();
            async move { generate(r, adapter.as_ref(), clock.as_ref(), options).await }
        })
        .buffered(parallelism.max(1))
        .collect()
        .await
}

/// Records a failed generation in the ledger instead of dropping it.
pub fn quarantine(
    sink: &mut dyn AuditSink,
    request: &GenerationRequest,
    error: &GenerateError,
) -> Result<(), LedgerError> {
    let response = match error {
        GenerateError::MalformedGeneration { response, .. } => Some(response.clone()),
        _ => None,
    };
    sink.append(
        EventType::ItemIngested,
        json!({
            "quarantined": true,
            "topic": request.topic,
            "target_level": request.target_level,
            "reason": error.to_string(),
            "response": response,
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Stub
// ---------------------------------------------------------------------------

pub const STUB_MODEL_ID: &str = "stub-template-generator";
pub const STUB_MODEL_VERSION: &str = "1.0";
/// The stub leads every stem with this many target-level verbs.
pub const STUB_VERB_COUNT: usize = 4;

/// Deterministic template generator keyed by (level, topic, seed).
#[derive(Debug, Clone)]
pub struct StubAdapter {
    pub seed: u64,
    bloom: Lexicon,
    solo: Lexicon,
}

impl StubAdapter {
    pub fn new(seed: u64) -> StubAdapter {
        StubAdapter {
            seed,
            bloom: Lexicon::bloom_default(),
            solo: Lexicon::solo_default(),
        }
    }

    fn key(&self, request: &GenerationRequest) -> u64 {
        let digest = HexDigest::of(
            format!("{}|{}|{}", request.target_level.framework(), request.target_level.name(), request.topic)
                .as_bytes(),
        );
        let prefix = u64::from_str_radix(&digest.as_str()[..16], 16).expect("hex prefix");
        prefix ^ self.seed
    }

    pub fn item_for(&self, request: &GenerationRequest) -> GeneratedItem {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key(request));
        let level = request.target_level;
        let lexicon = match level.framework() {
            Framework::Bloom => &self.bloom,
            Framework::Solo => &self.solo,
        };
        let mut verbs = level_verbs(lexicon, level);
        verbs.shuffle(&mut rng);
        verbs.truncate(STUB_VERB_COUNT);
        let template = templates::topic_template(&request.topic);
        let object = match template {
            Some(t) => t.objects.choose(&mut rng).expect("objects").to_string(),
            None => format!("the main ideas of {}", request.topic),
        };
        let correct_index = rng.random_range(0..request.option_count.max(1));
        let options = match template {
            Some(t) => options_for(t, request.option_count, correct_index),
            None => (0..request.option_count).map(|i| format!("Statement {}", i + 1)).collect(),
        };
        let verb = verbs.first().copied().unwrap_or("consider");
        GeneratedItem {
            stem: compose_stem(&verbs, &object, None),
            options,
            correct_index,
            declared_framework: level.framework(),
            declared_level: level.name().to_string(),
            rationale: complete_rationale(level, verb, &object, correct_index, &request.topic),
        }
    }
}

#[async_trait]
impl GeneratorAdapter for StubAdapter {
    fn model_id(&self) -> &str {
        STUB_MODEL_ID
    }

    fn model_version(&self) -> &str {
        STUB_MODEL_VERSION
    }

    fn generation_params(&self) -> BTreeMap<String, Value> {
        BTreeMap::from([("seed".to_string(), json!(self.seed))])
    }

    async fn complete(&self, prompt: &GenerationPrompt) -> Result<String, AdapterError> {
        let item = self.item_for(&prompt.request);
        Ok(serde_json::to_string(&item).expect("generated item serializes"))
    }
}

// ---------------------------------------------------------------------------
// HTTP chat-completion endpoint
// ---------------------------------------------------------------------------

pub const ENV_BASE_URL: &str = "GENERATOR_BASE_URL";
pub const ENV_MODEL: &str = "GENERATOR_MODEL";
pub const ENV_API_KEY: &str = "GENERATOR_API_KEY";
pub const ENV_TIMEOUT: &str = "GENERATOR_TIMEOUT_SECONDS";

#[derive(Debug, Clone)]
pub struct HttpChatAdapter {
    client: reqwest::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
}

impl HttpChatAdapter {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        HttpChatAdapter {
            client: reqwest::Client::new(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            temperature: 0.2,
        }
    }

    /// Reads the endpoint settings from the environment. Returns the
    /// adapter and the configured timeout, if any.
    pub fn from_env() -> Result<(HttpChatAdapter, Option<Duration>), String> {
        let base = std::env::var(ENV_BASE_URL).map_err(|_| format!("{ENV_BASE_URL} is not set"))?;
        let model = std::env::var(ENV_MODEL).map_err(|_| format!("{ENV_MODEL} is not set"))?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        let timeout = match std::env::var(ENV_TIMEOUT) {
            Ok(s) => Some(Duration::from_secs(
                s.trim().parse().map_err(|_| format!("{ENV_TIMEOUT} must be whole seconds"))?,
            )),
            Err(_) => None,
        };
        Ok((HttpChatAdapter::new(base, model, key), timeout))
    }
}

#[async_trait]
impl GeneratorAdapter for HttpChatAdapter {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn model_version(&self) -> &str {
        // endpoints do not report a separate version; the model name is
        // expected to pin it
        &self.model
    }

    fn generation_params(&self) -> BTreeMap<String, Value> {
        BTreeMap::from([
            ("endpoint".to_string(), json!(self.base_url)),
            ("temperature".to_string(), json!(self.temperature)),
        ])
    }

    async fn complete(&self, prompt: &GenerationPrompt) -> Result<String, AdapterError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        });
        let mut req = self.client.post(format!("{}/chat/completions", self.base_url)).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| AdapterError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| AdapterError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(AdapterError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| AdapterError::Protocol(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| AdapterError::Protocol("missing choices[0].message.content".into()))
    }
}
