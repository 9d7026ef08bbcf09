use std::sync::Arc;

use itemcert::clock::{Clock, FixedClock};
use itemcert::connectors::simulator::{plant_review_defects, simulate_corpus, ReviewMix, SimulationProfile};
use itemcert::ledger::{EventType, Ledger};
use itemcert::model::{ReviewAction, Status};
use itemcert::pipeline::{certify_batch, Verifier};
use itemcert::store::RecordStore;
use itemcert_client::{ClientError, ReviewClient, ScriptedReviewer};
use itemcert_service::AppState;

async fn start() -> (String, AppState) {
    let verifier = Verifier::with_defaults();
    let clock: Arc<dyn Clock> = Arc::new(FixedClock::default_instant());
    let mut profile = SimulationProfile::poc_2025();
    profile.total = 60;
    profile.confidence_band_counts = (20, 30, 10);
    profile.planted_incomplete_rationales_in_high = 5;
    profile.planted_major_flags_in_medium = 2;
    let corpus = simulate_corpus(&profile, &verifier, clock.as_ref()).unwrap();
    let mut scratch = Ledger::in_memory(clock.clone());
    let records = certify_batch(corpus.into_pairs(), &verifier, clock.clone(), &mut scratch, "test").unwrap();
    let state = AppState::new(RecordStore::in_memory(records), Ledger::in_memory(clock.clone()), verifier, clock, "tok").unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let served = state.clone();
    tokio::spawn(async move {
        itemcert_service::serve(listener, served, std::future::pending()).await.unwrap();
    });
    (format!("http://{addr}"), state)
}

#[tokio::test]
async fn errors_carry_codes() {
    let (base, _) = start().await;
    let bad = ReviewClient::new(&base, "nope");
    let err = bad.queue("yellow", 1, 10).await.unwrap_err();
    assert_eq!(err.status(), Some(401));
    let client = ReviewClient::new(&base, "tok");
    match client.package("missing").await.unwrap_err() {
        ClientError::Api { status, code, .. } => assert_eq!((status, code.as_str()), (404, "not_found")),
        other => panic!("{other:?}"),
    }
    assert_eq!(client.health().await.unwrap()["status"], "ok");
    let unreachable = ReviewClient::new("http://127.0.0.1:9", "tok");
    assert!(matches!(unreachable.health().await, Err(ClientError::Transport(_))));
}

#[tokio::test]
async fn scripted_review_pass() {
    let (base, state) = start().await;
    let client = ReviewClient::new(&base, "tok");
    let pending = client.queue_all("yellow").await.unwrap();
    assert_eq!(pending.len(), 30 - 2 + 5);
    let ids: Vec<String> = pending.iter().map(|s| s.id.clone()).collect();
    let mix = ReviewMix {
        approve_unchanged: 5,
        approve_with_edits: 8,
        reject: 3,
    };
    let plan = plant_review_defects(&ids, mix, 9).unwrap();
    let verifier = Verifier::with_defaults();
    let reviewer = ScriptedReviewer {
        client: &client,
        verifier: &verifier,
        pseudonym: "sme-1".into(),
    };
    let summary = reviewer.run(&plan).await.unwrap();
    assert!(summary.refused.is_empty(), "{:?}", summary.refused);
    assert_eq!(summary.actions[&ReviewAction::ApproveUnchanged], 5);
    assert_eq!(summary.actions[&ReviewAction::ApproveWithEdits], 8);
    assert_eq!(summary.actions[&ReviewAction::Reject], 3);
    assert_eq!(client.queue_all("yellow").await.unwrap().len(), ids.len() - 16);
    {
        let ledger = state.ledger.lock();
        assert_eq!(ledger.count(EventType::ReviewSubmitted), 16);
        assert!(ledger.verify().is_valid());
    }
    let report = client.summary(None, None).await.unwrap();
    assert_eq!(report.review_summary.values().sum::<usize>(), 16);
    assert_eq!(report.status_counts[&Status::CertifiedHuman], 13);
    assert!(client.summary_document(None, None).await.unwrap().contains("Ethical and governance assurance"));
}
