use std::sync::Arc;

use itemcert::clock::{Clock, FixedClock};
use itemcert::connectors::simulator::{simulate_corpus, Band, SimulationProfile};
use itemcert::ledger::{EventType, Ledger};
use itemcert::model::{Label, Status};
use itemcert::pipeline::{certify_batch, Verifier};

fn run(profile: &SimulationProfile) -> (Vec<itemcert::model::CertificationRecord>, Ledger) {
    let verifier = Verifier::with_defaults();
    let clock: Arc<dyn Clock> = Arc::new(FixedClock::default_instant());
    let corpus = simulate_corpus(profile, &verifier, clock.as_ref()).unwrap();
    let mut ledger = Ledger::in_memory(clock.clone());
    let records = certify_batch(corpus.into_pairs(), &verifier, clock, &mut ledger, "simulation").unwrap();
    (records, ledger)
}

fn counts(records: &[itemcert::model::CertificationRecord]) -> (usize, usize, usize) {
    let n = |l| records.iter().filter(|r| r.label == l).count();
    (n(Label::Green), n(Label::Yellow), n(Label::Red))
}

fn profile(total: usize, bands: (usize, usize, usize)) -> SimulationProfile {
    SimulationProfile {
        name: None,
        total,
        confidence_band_counts: bands,
        planted_incomplete_rationales_in_high: 0,
        planted_major_flags_in_medium: 0,
        seed: 11,
        review_sample: None,
    }
}

#[test]
fn poc_profile_reconciles() {
    let p = SimulationProfile::poc_2025();
    let (records, ledger) = run(&p);
    assert_eq!(records.len(), 500);
    assert_eq!(counts(&records), (198, 215, 87));
    let t = Verifier::with_defaults().config.thresholds;
    let bands = |b| records.iter().filter(|r| Band::of(r.alignment.confidence, &t) == b).count();
    assert_eq!((bands(Band::High), bands(Band::Medium), bands(Band::Low)), (214, 203, 83));
    assert!(ledger.verify().is_valid());
    assert_eq!(ledger.count(EventType::Certified), 500);
    assert_eq!(ledger.count(EventType::RegenerationRequested), 87);
    for r in &records {
        assert!(r.check_invariants(itemcert::certifier::is_known_rule).is_empty(), "{:?}", r.decision_trace);
    }
}

#[test]
fn all_high_is_all_green() {
    let (records, _) = run(&profile(10, (10, 0, 0)));
    assert_eq!(counts(&records), (10, 0, 0));
    assert!(records.iter().all(|r| r.status == Status::AutoCertified));
}

#[test]
fn all_low_is_all_red() {
    let (records, _) = run(&profile(5, (0, 0, 5)));
    assert_eq!(counts(&records), (0, 0, 5));
}

#[test]
fn same_seed_same_corpus() {
    let v = Verifier::with_defaults();
    let clock = FixedClock::default_instant();
    let p = SimulationProfile::poc_2025();
    let a = simulate_corpus(&p, &v, &clock).unwrap();
    let b = simulate_corpus(&p, &v, &clock).unwrap();
    assert_eq!(a, b);
    let mut other = p.clone();
    other.seed = 43;
    assert_ne!(simulate_corpus(&other, &v, &clock).unwrap().items, a.items);
}
