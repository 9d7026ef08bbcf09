use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use parking_lot::Mutex;
use serde_json::{json, Value};

use itemcert::clock::FixedClock;
use itemcert::connectors::generator::{
    generate, AdapterError, GenerateError, GenerateOptions, GenerationRequest, HttpChatAdapter,
};
use itemcert::model::TaxonomyLevel;

/// Authorization header and JSON body of one request.
type Received = (Option<String>, Value);

#[derive(Clone, Default)]
struct Seen {
    requests: Arc<Mutex<Vec<Received>>>,
}

const GOOD: &str = r#"{"stem":"Apply the subnet rule to split the network.","options":["/25","/26","/27","/28"],"correct_index":1,"declared_framework":"Bloom","declared_level":"Apply","rationale":"Applying the rule gives /26."}"#;
const NO_OPTIONS: &str = r#"{"stem":"Apply the rule.","correct_index":1,"declared_framework":"Bloom","declared_level":"Apply","rationale":"r"}"#;

async fn completions(State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string);
    let topic = body.pointer("/messages/1/content").and_then(Value::as_str).unwrap_or_default().to_string();
    seen.requests.lock().push((auth, body));
    let content = if topic.contains("fenced") {
        format!("Here you go:\n```json\n{GOOD}\n```")
    } else if topic.contains("no-options") {
        NO_OPTIONS.to_string()
    } else if topic.contains("server-error") {
        return (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "boom"})));
    } else if topic.contains("slow") {
        tokio::time::sleep(Duration::from_secs(5)).await;
        GOOD.to_string()
    } else {
        GOOD.to_string()
    };
    (StatusCode::OK, Json(json!({"choices": [{"message": {"role": "assistant", "content": content}}]})))
}

async fn mock() -> (String, Seen) {
    let seen = Seen::default();
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(seen.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (base, seen)
}

fn request(topic: &str) -> GenerationRequest {
    GenerationRequest::new(topic, TaxonomyLevel::parse_qualified("Bloom:Apply").unwrap(), "CS2 networking")
}

#[tokio::test]
async fn chat_endpoint_round_trip() {
    let (base, seen) = mock().await;
    let adapter = HttpChatAdapter::new(&base, "tutor-model-7b", Some("k-123".into()));
    let clock = FixedClock::default_instant();
    let opts = GenerateOptions::default();

    for topic in ["subnetting", "fenced subnetting"] {
        let (item, prov) = generate(&request(topic), &adapter, &clock, &opts).await.unwrap();
        assert_eq!(item.correct_index, 1);
        assert_eq!(item.topic, topic);
        assert_eq!(prov.model_id, "tutor-model-7b");
        assert_eq!(prov.generated_at, clock.0);
        assert!(prov.prompt_text.as_deref().unwrap().contains(topic));
    }
    let requests = seen.requests.lock();
    assert_eq!(requests.len(), 2);
    let (auth, body) = &requests[0];
    assert_eq!(auth.as_deref(), Some("Bearer k-123"));
    assert_eq!(body["model"], "tutor-model-7b");
    assert_eq!(body["messages"][0]["role"], "system");
}

#[tokio::test]
async fn contract_violations_are_typed() {
    let (base, _) = mock().await;
    let adapter = HttpChatAdapter::new(&base, "m", None);
    let clock = FixedClock::default_instant();
    let opts = GenerateOptions::default();

    let err = generate(&request("no-options"), &adapter, &clock, &opts).await.unwrap_err();
    assert!(matches!(err, GenerateError::MalformedGeneration { ref response, .. } if response == NO_OPTIONS), "{err:?}");

    let err = generate(&request("server-error"), &adapter, &clock, &opts).await.unwrap_err();
    assert!(matches!(err, GenerateError::Adapter(AdapterError::Status { status: 500, .. })), "{err:?}");

    let short = GenerateOptions {
        timeout: Duration::from_millis(200),
        ..GenerateOptions::default()
    };
    let err = generate(&request("slow"), &adapter, &clock, &short).await.unwrap_err();
    assert!(matches!(err, GenerateError::AdapterTimeout(_)), "{err:?}");

    let nowhere = HttpChatAdapter::new("http://127.0.0.1:9", "m", None);
    let err = generate(&request("subnetting"), &nowhere, &clock, &opts).await.unwrap_err();
    assert!(matches!(err, GenerateError::Adapter(AdapterError::Transport(_))), "{err:?}");
}
