mod common;

use common::load;
use tutorbench_core::promptkit::{select_exemplars, ExemplarChoice, ExemplarFilter, PromptError};

#[test]
fn twenty_sample_fixture_filter_decisions() {
    let set = load("filter_set.json");
    assert_eq!(set.len(), 20);
    let filter = ExemplarFilter::default();
    let verdict = |id: &str| filter.is_substantive_reference(set.get(id).unwrap().reference_response.as_deref().unwrap());
    for id in ["h18", "h19", "h20"] {
        assert!(!verdict(id), "{id}");
    }
    assert!(verdict("1674"));
    let rejected: Vec<String> = set
        .samples
        .iter()
        .filter(|s| !filter.is_substantive_reference(s.reference_response.as_deref().unwrap()))
        .map(|s| s.id.clone())
        .collect();
    assert_eq!(rejected, ["h18", "h19", "h20"]);
}

#[test]
fn sampled_exemplars_are_deterministic_and_substantive() {
    let set = load("filter_set.json");
    let filter = ExemplarFilter::default();
    let choice = ExemplarChoice::Sampled { k: 5, seed: 11 };
    let a = select_exemplars(&set, &choice, &filter).unwrap();
    assert_eq!(a, select_exemplars(&set, &choice, &filter).unwrap());
    assert_eq!(a.len(), 5);
    for e in a.exemplars() {
        assert!(filter.is_substantive_reference(e.reference_response.as_deref().unwrap()));
    }
}

#[test]
fn pinning_an_acknowledgement_needs_override() {
    let set = load("filter_set.json");
    let filter = ExemplarFilter::default();
    let strict = ExemplarChoice::Pinned {
        ids: vec!["h01".into(), "h18".into()],
        allow_unfiltered: false,
    };
    assert_eq!(
        select_exemplars(&set, &strict, &filter).unwrap_err(),
        PromptError::PinnedFailsFilter("h18".into())
    );
    let lenient = ExemplarChoice::Pinned {
        ids: vec!["h01".into(), "h18".into()],
        allow_unfiltered: true,
    };
    assert_eq!(select_exemplars(&set, &lenient, &filter).unwrap().ids(), ["h01", "h18"]);
}
