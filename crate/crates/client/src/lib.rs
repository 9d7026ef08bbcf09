//! Thin client for the review service, plus a scripted reviewer that
//! replays planted review decisions through the API.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use itemcert::api::{DecisionRequest, DecisionResponse, Package, QueuePage};
use itemcert::connectors::simulator::{repair_edits, PlantedDefect};
use itemcert::model::{rfc3339, ReviewAction};
use itemcert::pipeline::Verifier;
use itemcert::report::AccreditationReport;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach review service: {0}")]
    Transport(String),
    #[error("review service answered {status} {code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
    },
    #[error("unexpected response body: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Deserialize)]
struct ErrorBody {
    code: String,
    message: String,
}

#[derive(Debug, Clone)]
pub struct ReviewClient {
    http: reqwest::Client,
    base_url: String,
    token: String,
}

impl ReviewClient {
    pub fn new(base_url: impl Into<String>, token: impl Into<String>) -> ReviewClient {
        ReviewClient {
            http: reqwest::Client::new(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: token.into(),
        }
    }

    async fn send(
        &self,
        method: Method,
        path: &str,
        query: &[(&str, String)],
        body: Option<&DecisionRequest>,
    ) -> Result<reqwest::Response, ClientError> {
        let mut req = self
            .http
            .request(method, format!("{}{path}", self.base_url))
            .bearer_auth(&self.token)
            .query(query);
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        let text = resp.text().await.unwrap_or_default();
        let parsed: Option<ErrorBody> = serde_json::from_str(&text).ok();
        Err(match parsed {
            Some(e) => ClientError::Api {
                status: status.as_u16(),
                code: e.code,
                message: e.message,
            },
            None => ClientError::Api {
                status: status.as_u16(),
                code: status.canonical_reason().unwrap_or("error").to_lowercase(),
                message: text,
            },
        })
    }

    async fn json<T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        query: &[(&str, String)],
        body: Option<&DecisionRequest>,
    ) -> Result<T, ClientError> {
        let text = self
            .send(method, path, query, body)
            .await?
            .text()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn health(&self) -> Result<serde_json::Value, ClientError> {
        self.json(Method::GET, "/api/health", &[], None).await
    }

    pub async fn queue(&self, status: &str, page: usize, page_size: usize) -> Result<QueuePage, ClientError> {
        let query = [
            ("status", status.to_string()),
            ("page", page.to_string()),
            ("page_size", page_size.to_string()),
        ];
        self.json(Method::GET, "/api/queue", &query, None).await
    }

    /// Every page of a queue filter.
    pub async fn queue_all(&self, status: &str) -> Result<Vec<itemcert::api::RecordSummary>, ClientError> {
        let mut out = Vec::new();
        let mut page = 1;
        loop {
            let p = self.queue(status, page, 100).await?;
            out.extend(p.items);
            if page >= p.pages {
                return Ok(out);
            }
            page += 1;
        }
    }

    pub async fn package(&self, id: &str) -> Result<Package, ClientError> {
        self.json(Method::GET, &format!("/api/items/{id}"), &[], None).await
    }

    pub async fn decide(&self, id: &str, decision: &DecisionRequest) -> Result<DecisionResponse, ClientError> {
        self.json(Method::POST, &format!("/api/items/{id}/decision"), &[], Some(decision))
            .await
    }

    fn period_query(from: Option<DateTime<Utc>>, to: Option<DateTime<Utc>>) -> Vec<(&'static str, String)> {
        let mut q = Vec::new();
        if let Some(f) = from {
            q.push(("from", rfc3339::format(&f)));
        }
        if let Some(t) = to {
            q.push(("to", rfc3339::format(&t)));
        }
        q
    }

    pub async fn summary(
        &self,
        from: Option<DateTime<Utc>>,
        to: Option<DateTime<Utc>>,
    ) -> Result<AccreditationReport, ClientError> {
        self.json(Method::GET, "/api/reports/summary", &Self::period_query(from, to), None)
            .await
    }

    pub async fn summary_document(
        &self,
        from: Option<DateTime<Utc>>,
        to: Option<DateTime<Utc>>,
    ) -> Result<String, ClientError> {
        let mut q = Self::period_query(from, to);
        q.push(("format", "document".into()));
        self.send(Method::GET, "/api/reports/summary", &q, None)
            .await?
            .text()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))
    }
}

/// Outcome of a scripted review pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplaySummary {
    pub actions: BTreeMap<ReviewAction, usize>,
    /// Decisions that the service refused, with the reason.
    pub refused: Vec<(String, String)>,
}

/// Works through a labelled sample as a reviewer would: fetch the package,
/// pick the action implied by the planted defect, repair fixable items,
/// and submit with the version just read.
pub struct ScriptedReviewer<'a> {
    pub client: &'a ReviewClient,
    pub verifier: &'a Verifier,
    pub pseudonym: String,
}

impl ScriptedReviewer<'_> {
    pub fn decision_for(&self, package: &Package, defect: PlantedDefect) -> DecisionRequest {
        let action = defect.expected_action();
        let (edits, notes) = match defect {
            PlantedDefect::None => (None, "Consistent as generated."),
            PlantedDefect::Fixable => (
                Some(repair_edits(&package.record.item, self.verifier)),
                "Rewrote the rationale to state the intended level.",
            ),
            PlantedDefect::Unsalvageable => (None, "Does not assess the intended outcome."),
        };
        DecisionRequest {
            action,
            edits,
            notes: notes.to_string(),
            reviewer_pseudonym: self.pseudonym.clone(),
            expected_version: package.record.version,
            started_at: None,
            override_reason: None,
        }
    }

    pub async fn run(&self, plan: &[(String, PlantedDefect)]) -> Result<ReplaySummary, ClientError> {
        let mut summary = ReplaySummary::default();
        for (id, defect) in plan {
            let package = self.client.package(id).await?;
            let decision = self.decision_for(&package, *defect);
            match self.client.decide(id, &decision).await {
                Ok(_) => *summary.actions.entry(decision.action).or_insert(0) += 1,
                Err(ClientError::Api { status, code, message })
                    if status == StatusCode::CONFLICT.as_u16() || status == StatusCode::UNPROCESSABLE_ENTITY.as_u16() =>
                {
                    summary.refused.push((id.clone(), format!("{code}: {message}")));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(summary)
    }
}
