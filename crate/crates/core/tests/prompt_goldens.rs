mod common;

use std::fs;

use common::{blessing, fixtures, load, APPENDIX_IDS, PINNED_EXEMPLARS};
use tutorbench_core::promptkit::{
    assemble_prompt, builtin_templates, select_exemplars, ExemplarChoice, ExemplarFilter, ExemplarSet,
    RoleLabeling,
};

fn pinned() -> ExemplarSet {
    let choice = ExemplarChoice::Pinned {
        ids: PINNED_EXEMPLARS.iter().map(|s| s.to_string()).collect(),
        allow_unfiltered: false,
    };
    select_exemplars(&load("handwritten.json"), &choice, &ExemplarFilter::default()).unwrap()
}

#[test]
fn prompts_match_goldens() {
    let appendix = load("appendix.json");
    let few = pinned();
    let dir = fixtures().join("golden/prompts");
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for template in builtin_templates() {
        for (shots, exemplars) in [("zero", ExemplarSet::empty()), ("few", few.clone())] {
            for id in APPENDIX_IDS {
                let prompt = assemble_prompt(&template, &exemplars, appendix.get(id).unwrap()).unwrap();
                let path = dir.join(format!("{}_{shots}_{id}.txt", template.id));
                if blessing() {
                    fs::create_dir_all(&dir).unwrap();
                    fs::write(&path, &prompt.text).unwrap();
                }
                let golden = fs::read_to_string(&path)
                    .unwrap_or_else(|e| panic!("{}: {e} (set TUTORBENCH_BLESS=1 to create)", path.display()));
                if golden != prompt.text {
                    mismatches.push(path.display().to_string());
                }
                assert!(prompt.text.ends_with(&template.cue_label));
                if template.role_labeling == RoleLabeling::AnonymousSpeakers {
                    assert!(!prompt.text.contains("teacher:") && !prompt.text.contains("student:"));
                }
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 50);
    assert!(mismatches.is_empty(), "golden mismatch: {mismatches:?}");
}

#[test]
fn few_shot_prompt_a_for_0701_ends_with_history() {
    let appendix = load("appendix.json");
    let a = &builtin_templates()[0];
    let p = assemble_prompt(a, &pinned(), appendix.get("0701").unwrap()).unwrap();
    assert!(p.text.ends_with("student: because it's the same thing in Italian\nteacher:"));
    assert_eq!(p.exemplar_ids, PINNED_EXEMPLARS);
    assert_eq!(p.text.matches("\n\n").count(), 6);
}

#[test]
fn zero_shot_drops_example_announcement() {
    let appendix = load("appendix.json");
    for template in builtin_templates() {
        let p = assemble_prompt(&template, &ExemplarSet::empty(), appendix.get("1674").unwrap()).unwrap();
        assert!(!p.text.contains("The following are example dialogues"), "{}", template.id);
        assert_eq!(p.text.matches("\n\n").count(), 1);
    }
}
