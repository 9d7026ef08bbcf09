//! Request and response bodies of the review service HTTP API, shared by
//! the server and its clients.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{
    rfc3339, CertificationRecord, ItemEdits, Label, ReviewAction, Status, TaxonomyLevel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub id: String,
    pub topic: String,
    pub label: Label,
    pub status: Status,
    pub confidence: f64,
    pub flag_count: usize,
    #[serde(with = "rfc3339")]
    pub created_at: DateTime<Utc>,
    pub version: u64,
    pub declared_level: TaxonomyLevel,
    pub predicted_level: TaxonomyLevel,
}

impl From<&CertificationRecord> for RecordSummary {
    fn from(r: &CertificationRecord) -> Self {
        RecordSummary {
            id: r.item.id.clone(),
            topic: r.item.topic.clone(),
            label: r.label,
            status: r.status,
            confidence: r.alignment.confidence,
            flag_count: r.governance.flags.len(),
            created_at: r.certified_at,
            version: r.version,
            declared_level: r.item.declared_level,
            predicted_level: r.alignment.predicted_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub items: Vec<RecordSummary>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub pages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Package {
    pub record: CertificationRecord,
    pub reviewable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub action: ReviewAction,
    #[serde(default)]
    pub edits: Option<ItemEdits>,
    #[serde(default)]
    pub notes: String,
    pub reviewer_pseudonym: String,
    pub expected_version: u64,
    /// When the reviewer opened the item; defaults to the decision time.
    #[serde(default, with = "opt_time")]
    pub started_at: Option<DateTime<Utc>>,
    /// Required to reopen a record that is not pending review.
    #[serde(default)]
    pub override_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub summary: RecordSummary,
    pub decision_trace: Vec<String>,
}

mod opt_time {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => s.serialize_some(&crate::model::rfc3339::format(t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DateTime<Utc>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| crate::model::rfc3339::parse(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Queue filters accepted by `GET /api/queue?status=`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueFilter {
    Pending,
    Rejected,
    Certified,
    AutoCertified,
    CertifiedHuman,
    All,
}

impl QueueFilter {
    pub fn parse(s: &str) -> Option<QueueFilter> {
        Some(match s {
            "yellow" | "pending" | "pending_review" => QueueFilter::Pending,
            "rejected" => QueueFilter::Rejected,
            "certified" => QueueFilter::Certified,
            "auto_certified" => QueueFilter::AutoCertified,
            "certified_human" => QueueFilter::CertifiedHuman,
            "all" => QueueFilter::All,
            _ => return None,
        })
    }

    pub fn matches(self, status: Status) -> bool {
        match self {
            QueueFilter::Pending => status == Status::PendingReview,
            QueueFilter::Rejected => status == Status::Rejected,
            QueueFilter::Certified => matches!(status, Status::AutoCertified | Status::CertifiedHuman),
            QueueFilter::AutoCertified => status == Status::AutoCertified,
            QueueFilter::CertifiedHuman => status == Status::CertifiedHuman,
            QueueFilter::All => true,
        }
    }
}

/// Records matching `filter`, oldest first (ties by id), paged from 1.
pub fn page_records(
    records: &[CertificationRecord],
    filter: QueueFilter,
    page: usize,
    page_size: usize,
) -> QueuePage {
    let mut matching: Vec<&CertificationRecord> = records.iter().filter(|r| filter.matches(r.status)).collect();
    matching.sort_by(|a, b| a.certified_at.cmp(&b.certified_at).then_with(|| a.item.id.cmp(&b.item.id)));
    let total = matching.len();
    let items = matching
        .into_iter()
        .skip((page - 1).saturating_mul(page_size))
        .take(page_size)
        .map(RecordSummary::from)
        .collect();
    QueuePage {
        items,
        page,
        page_size,
        total,
        pages: total.div_ceil(page_size),
    }
}

