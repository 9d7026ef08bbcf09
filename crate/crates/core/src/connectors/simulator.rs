//! Seeded corpus simulator.
//!
//! Each item is assigned a confidence band, and its stem is built with a
//! number of target-level verbs taken from [`CALIBRATION`]. The real
//! classifier then measures the stem; if the measured confidence misses the
//! band, the verb count is walked up or down until it lands. Triage counts
//! therefore come out of the actual pipeline rather than being assigned.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::generator::{GenerationPrompt, GenerationRequest, STUB_MODEL_ID, STUB_MODEL_VERSION};
use super::templates::{
    complete_rationale, compose_stem, incomplete_rationale, level_verbs, options_for, TOPICS,
    MAJOR_FLAG_PHRASE,
};
use crate::certifier::Thresholds;
use crate::clock::Clock;
use crate::model::{
    option_letter, AssessmentItem, BloomLevel, HexDigest, ItemEdits, ProvenanceRecord,
    ReviewAction, SoloLevel, TaxonomyLevel,
};
use crate::pipeline::Verifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    High,
    Medium,
    Low,
}

impl Band {
    pub fn of(confidence: f64, t: &Thresholds) -> Band {
        if confidence >= t.green_min {
            Band::High
        } else if confidence >= t.red_below {
            Band::Medium
        } else {
            Band::Low
        }
    }
}

/// Starting verb counts per band, measured once against the bundled
/// lexicons with the default classifier settings. Several entries per band
/// give stem variety; the simulator picks one at random and verifies it.
///
/// | verbs | Bloom confidence | SOLO confidence |
/// |-------|------------------|-----------------|
/// | 0     | 0.167            | 0.200           |
/// | 1     | 0.473            | 0.528           |
/// | 2     | 0.709            | 0.753           |
/// | 3     | 0.869            | 0.892           |
/// | 4     | 0.947            | 0.957           |
/// | 5     | 0.980            | 0.984           |
pub const CALIBRATION: &[(Band, &[usize])] = &[
    (Band::High, &[4, 5]),
    (Band::Medium, &[2, 3]),
    (Band::Low, &[0, 1]),
];

fn start_counts(band: Band) -> &'static [usize] {
    CALIBRATION
        .iter()
        .find(|(b, _)| *b == band)
        .map(|(_, c)| *c)
        .expect("every band is calibrated")
}

/// Declared levels drawn by the simulator. SOLO Prestructural has no
/// lexicon verbs and cannot be placed in the upper bands.
pub const LEVEL_POOL: &[TaxonomyLevel] = &[
    TaxonomyLevel::Bloom(BloomLevel::Remember),
    TaxonomyLevel::Bloom(BloomLevel::Understand),
    TaxonomyLevel::Bloom(BloomLevel::Apply),
    TaxonomyLevel::Bloom(BloomLevel::Analyze),
    TaxonomyLevel::Bloom(BloomLevel::Evaluate),
    TaxonomyLevel::Bloom(BloomLevel::Create),
    TaxonomyLevel::Solo(SoloLevel::Unistructural),
    TaxonomyLevel::Solo(SoloLevel::Multistructural),
    TaxonomyLevel::Solo(SoloLevel::Relational),
    TaxonomyLevel::Solo(SoloLevel::ExtendedAbstract),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationProfile {
    #[serde(default)]
    pub name: Option<String>,
    pub total: usize,
    /// (high, medium, low)
    pub confidence_band_counts: (usize, usize, usize),
    pub planted_incomplete_rationales_in_high: usize,
    pub planted_major_flags_in_medium: usize,
    pub seed: u64,
    #[serde(default)]
    pub review_sample: Option<ReviewMix>,
}

/// Planted defect mix for a review sample drawn from the Yellow queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewMix {
    pub approve_unchanged: usize,
    pub approve_with_edits: usize,
    pub reject: usize,
}

impl ReviewMix {
    pub fn total(&self) -> usize {
        self.approve_unchanged + self.approve_with_edits + self.reject
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error(
        "cannot place item {index} ({level}) in the {band:?} band; achievable confidence range is [{min:.4}, {max:.4}]"
    )]
    CalibrationFailure {
        index: usize,
        level: String,
        band: Band,
        min: f64,
        max: f64,
    },
    #[error("classifier failed: {0}")]
    Classifier(String),
}

impl SimulationProfile {
    pub fn poc_2025() -> SimulationProfile {
        SimulationProfile {
            name: Some("poc-2025".into()),
            total: 500,
            confidence_band_counts: (214, 203, 83),
            planted_incomplete_rationales_in_high: 16,
            planted_major_flags_in_medium: 4,
            seed: 42,
            review_sample: Some(ReviewMix {
                approve_unchanged: 38,
                approve_with_edits: 41,
                reject: 21,
            }),
        }
    }

    pub fn named(name: &str) -> Option<SimulationProfile> {
        match name {
            "poc-2025" => Some(SimulationProfile::poc_2025()),
            _ => None,
        }
    }

    /// A built-in profile name, or a path to a TOML profile file.
    pub fn resolve(name_or_path: &str) -> Result<SimulationProfile, SimulationError> {
        if let Some(p) = SimulationProfile::named(name_or_path) {
            return Ok(p);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(SimulationError::UnknownProfile(name_or_path.to_string()));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimulationError::InvalidProfile(format!("{}: {e}", path.display())))?;
        let profile: SimulationProfile =
            toml::from_str(&text).map_err(|e| SimulationError::InvalidProfile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let (h, m, l) = self.confidence_band_counts;
        if h + m + l != self.total {
            return Err(SimulationError::InvalidProfile(format!(
                "band counts {h}+{m}+{l} do not sum to total {}",
                self.total
            )));
        }
        if self.planted_incomplete_rationales_in_high > h {
            return Err(SimulationError::InvalidProfile(
                "more planted incomplete rationales than high-band items".into(),
            ));
        }
        if self.planted_major_flags_in_medium > m {
            return Err(SimulationError::InvalidProfile(
                "more planted Major flags than medium-band items".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedItem {
    pub item: AssessmentItem,
    pub provenance: ProvenanceRecord,
    pub band: Band,
    pub verb_count: usize,
    pub planted_incomplete_rationale: bool,
    pub planted_major_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCorpus {
    pub profile: SimulationProfile,
    pub items: Vec<SimulatedItem>,
}

impl SimulatedCorpus {
    pub fn into_pairs(self) -> Vec<(AssessmentItem, ProvenanceRecord)> {
        self.items.into_iter().map(|s| (s.item, s.provenance)).collect()
    }

    pub fn band_counts(&self) -> (usize, usize, usize) {
        let count = |b| self.items.iter().filter(|s| s.band == b).count();
        (count(Band::High), count(Band::Medium), count(Band::Low))
    }
}

fn mark(positions: &mut [bool], candidates: &[usize], n: usize, rng: &mut ChaCha8Rng) {
    let mut c = candidates.to_vec();
    c.shuffle(rng);
    for &i in c.iter().take(n) {
        positions[i] = true;
    }
}

pub fn simulate_corpus(
    profile: &SimulationProfile,
    verifier: &Verifier,
    clock: &dyn Clock,
) -> Result<SimulatedCorpus, SimulationError> {
    profile.validate()?;
    let thresholds = verifier.config.thresholds;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let (h, m, l) = profile.confidence_band_counts;

    let mut bands: Vec<Band> = std::iter::repeat_n(Band::High, h)
        .chain(std::iter::repeat_n(Band::Medium, m))
        .chain(std::iter::repeat_n(Band::Low, l))
        .collect();
    bands.shuffle(&mut rng);

    let indices_of = |band: Band| -> Vec<usize> {
        bands.iter().enumerate().filter(|(_, b)| **b == band).map(|(i, _)| i).collect()
    };
    let mut incomplete = vec![false; profile.total];
    let mut flagged = vec![false; profile.total];
    mark(&mut incomplete, &indices_of(Band::High), profile.planted_incomplete_rationales_in_high, &mut rng);
    mark(&mut flagged, &indices_of(Band::Medium), profile.planted_major_flags_in_medium, &mut rng);

    let mut items = Vec::with_capacity(profile.total);
    for (index, band) in bands.iter().copied().enumerate() {
        let level = LEVEL_POOL[rng.random_range(0..LEVEL_POOL.len())];
        let template = &TOPICS[rng.random_range(0..TOPICS.len())];
        let object = template.objects[rng.random_range(0..template.objects.len())];
        let lexicon = verifier.lexicon_for(level.framework());
        let mut verbs = level_verbs(lexicon, level);
        verbs.shuffle(&mut rng);
        let starts = start_counts(band);
        let start = starts[rng.random_range(0..starts.len())];
        let correct_index = rng.random_range(0..4);
        let suffix = flagged[index].then_some(MAJOR_FLAG_PHRASE);

        let measure = |k: usize| -> Result<f64, SimulationError> {
            let stem = compose_stem(&verbs[..k], object, suffix);
            let item = AssessmentItem {
                id: String::new(),
                stem,
                options: Vec::new(),
                correct_index: 0,
                declared_level: level,
                rationale: String::new(),
                topic: String::new(),
                course_context: String::new(),
                language_code: String::new(),
            };
            verifier
                .predict(&item)
                .map(|p| p.confidence)
                .map_err(|e| SimulationError::Classifier(e.to_string()))
        };

        let mut k = start.min(verbs.len());
        let mut adjusted = 0;
        loop {
            let confidence = measure(k)?;
            let got = Band::of(confidence, &thresholds);
            if got == band {
                break;
            }
            // lower bands sit in the Ord "greater" direction
            let next = if got > band { k.checked_add(1) } else { k.checked_sub(1) };
            adjusted += 1;
            match next {
                Some(n) if n <= verbs.len() && adjusted <= verbs.len() + 1 => k = n,
                _ => {
                    let range: Vec<f64> = (0..=verbs.len()).map(measure).collect::<Result<_, _>>()?;
                    return Err(SimulationError::CalibrationFailure {
                        index,
                        level: format!("{}:{}", level.framework(), level.name()),
                        band,
                        min: range.iter().copied().fold(f64::INFINITY, f64::min),
                        max: range.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    });
                }
            }
        }

        let stem = compose_stem(&verbs[..k], object, suffix);
        let rationale = if incomplete[index] {
            incomplete_rationale(template.topic)
        } else {
            let verb = verbs.first().copied().unwrap_or("consider");
            complete_rationale(level, verb, object, correct_index, template.topic)
        };
        let request = GenerationRequest::new(template.topic, level, "Undergraduate computing");
        let prompt = GenerationPrompt::for_request(&request);
        let item = AssessmentItem {
            id: format!("sim-{}-{index:04}", profile.seed),
            stem,
            options: options_for(template, 4, correct_index),
            correct_index,
            declared_level: level,
            rationale,
            topic: template.topic.to_string(),
            course_context: request.course_context.clone(),
            language_code: "en".into(),
        };
        let provenance = ProvenanceRecord {
            model_id: STUB_MODEL_ID.into(),
            model_version: STUB_MODEL_VERSION.into(),
            prompt_hash: prompt.prompt_hash(),
            prompt_text: Some(prompt.user.clone()),
            system_instructions_hash: HexDigest::of(prompt.system.as_bytes()),
            generated_at: clock.now(),
            generation_params: BTreeMap::from([
                ("seed".to_string(), json!(profile.seed)),
                ("simulation_index".to_string(), json!(index)),
            ]),
            course_context: request.course_context,
        };
        items.push(SimulatedItem {
            item,
            provenance,
            band,
            verb_count: k,
            planted_incomplete_rationale: incomplete[index],
            planted_major_flag: flagged[index],
        });
    }
    Ok(SimulatedCorpus {
        profile: profile.clone(),
        items,
    })
}

// ---------------------------------------------------------------------------
// Review sample
// ---------------------------------------------------------------------------

/// What a reviewer would find in a sampled item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlantedDefect {
    /// Nothing to fix.
    None,
    /// Wording or rationale problems a reviewer can repair.
    Fixable,
    /// Not worth keeping.
    Unsalvageable,
}

impl PlantedDefect {
    pub fn expected_action(self) -> ReviewAction {
        match self {
            PlantedDefect::None => ReviewAction::ApproveUnchanged,
            PlantedDefect::Fixable => ReviewAction::ApproveWithEdits,
            PlantedDefect::Unsalvageable => ReviewAction::Reject,
        }
    }
}

/// Draws `mix.total()` ids from `pending_ids` and labels them. The result
/// is sorted by id and independent of the input order.
pub fn plant_review_defects(
    pending_ids: &[String],
    mix: ReviewMix,
    seed: u64,
) -> Result<Vec<(String, PlantedDefect)>, SimulationError> {
    if mix.total() > pending_ids.len() {
        return Err(SimulationError::InvalidProfile(format!(
            "review sample of {} exceeds {} pending items",
            mix.total(),
            pending_ids.len()
        )));
    }
    let mut ids = pending_ids.to_vec();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f2e_71e3);
    ids.shuffle(&mut rng);
    let labels = std::iter::repeat_n(PlantedDefect::None, mix.approve_unchanged)
        .chain(std::iter::repeat_n(PlantedDefect::Fixable, mix.approve_with_edits))
        .chain(std::iter::repeat_n(PlantedDefect::Unsalvageable, mix.reject));
    let mut out: Vec<(String, PlantedDefect)> = ids.into_iter().zip(labels).collect();
    out.sort();
    Ok(out)
}

/// The reviewer's repair for a fixable item: a rewritten rationale that
/// names the declared level, uses one of its verbs, and discusses the
/// options.
pub fn repair_edits(item: &AssessmentItem, verifier: &Verifier) -> ItemEdits {
    let level = item.declared_level;
    let lexicon = verifier.lexicon_for(level.framework());
    let verbs = level_verbs(lexicon, level);
    let verb = verbs.first().copied().unwrap_or("consider");
    ItemEdits {
        rationale: Some(format!(
            "This item targets the {} level because students must {verb} the situation given in the stem. \
             Option {} is correct, and each distractor reflects a plausible misconception about {}.",
            match level.name() {
                "ExtendedAbstract" => "Extended Abstract",
                n => n,
            },
            option_letter(item.correct_index),
            item.topic,
        )),
        ..ItemEdits::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;

    fn small(total: usize, bands: (usize, usize, usize)) -> SimulationProfile {
        SimulationProfile {
            name: None,
            total,
            confidence_band_counts: bands,
            planted_incomplete_rationales_in_high: 0,
            planted_major_flags_in_medium: 0,
            seed: 3,
            review_sample: None,
        }
    }

    #[test]
    fn calibration_table_holds_for_every_level() {
        let v = Verifier::with_defaults();
        let t = v.config.thresholds;
        for level in LEVEL_POOL {
            let verbs = level_verbs(v.lexicon_for(level.framework()), *level);
            for (band, counts) in CALIBRATION {
                for &k in *counts {
                    let stem = compose_stem(&verbs[..k], TOPICS[0].objects[0], None);
                    let p = crate::taxonomy::classify(&stem, v.lexicon_for(level.framework()), &v.classifier).unwrap();
                    assert_eq!(Band::of(p.confidence, &t), *band, "{level:?} k={k} p={}", p.confidence);
                }
            }
        }
    }

    #[test]
    fn profile_validation() {
        assert!(small(10, (5, 5, 1)).validate().is_err());
        let mut p = small(10, (10, 0, 0));
        p.planted_major_flags_in_medium = 1;
        assert!(p.validate().is_err());
        assert!(SimulationProfile::poc_2025().validate().is_ok());
    }

    #[test]
    fn bands_are_measured() {
        let v = Verifier::with_defaults();
        let clock = FixedClock::default_instant();
        let corpus = simulate_corpus(&small(30, (10, 10, 10)), &v, &clock).unwrap();
        for s in &corpus.items {
            let p = v.predict(&s.item).unwrap();
            assert_eq!(Band::of(p.confidence, &v.config.thresholds), s.band, "{}", s.item.stem);
        }
        assert_eq!(corpus.band_counts(), (10, 10, 10));
    }

    #[test]
    fn deterministic() {
        let v = Verifier::with_defaults();
        let clock = FixedClock::default_instant();
        let a = simulate_corpus(&small(20, (8, 8, 4)), &v, &clock).unwrap();
        let b = simulate_corpus(&small(20, (8, 8, 4)), &v, &clock).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn review_plant_counts() {
        let ids: Vec<String> = (0..150).map(|i| format!("q-{i}")).collect();
        let mix = ReviewMix {
            approve_unchanged: 38,
            approve_with_edits: 41,
            reject: 21,
        };
        let plan = plant_review_defects(&ids, mix, 42).unwrap();
        assert_eq!(plan.len(), 100);
        let n = |d| plan.iter().filter(|(_, x)| *x == d).count();
        assert_eq!((n(PlantedDefect::None), n(PlantedDefect::Fixable), n(PlantedDefect::Unsalvageable)), (38, 41, 21));
        let mut reversed = ids.clone();
        reversed.reverse();
        assert_eq!(plant_review_defects(&reversed, mix, 42).unwrap(), plan);
    }
}
