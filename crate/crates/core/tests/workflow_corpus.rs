mod common;

use common::{corpus_paths, read_fixture};
use serde_yaml::Value;
use wfgen_core::{canonicalize, parse_workflow, validate, Validator};

#[test]
fn corpus_round_trips_through_canonical_form() {
    for path in corpus_paths() {
        let w = parse_workflow(&read_fixture(&path)).unwrap_or_else(|e| panic!("{path}: {e}"));
        let canon = canonicalize(&w);
        let back = parse_workflow(&canon).unwrap_or_else(|e| panic!("{path}: {e}\n{canon}"));
        assert_eq!(back, w, "{path}");
        assert_eq!(canonicalize(&back), canon, "{path}");
    }
}

#[test]
fn step_order_matches_source_document() {
    for path in corpus_paths() {
        let source = read_fixture(&path);
        let doc: Value = serde_yaml::from_str(&source).unwrap();
        let w = parse_workflow(&source).unwrap();
        for (id, job) in &w.jobs {
            let raw_steps = doc["jobs"][id.as_str()]["steps"].as_sequence().unwrap();
            assert_eq!(raw_steps.len(), job.steps().len());
            for (raw, step) in raw_steps.iter().zip(job.steps()) {
                assert_eq!(raw.get("uses").and_then(Value::as_str), step.uses.as_deref(), "{path}");
                assert_eq!(raw.get("name").and_then(Value::as_str), step.name.as_deref(), "{path}");
            }
        }
    }
}

#[test]
fn unknown_keys_land_in_raw_extra() {
    for path in corpus_paths() {
        let source = read_fixture(&path);
        let doc: Value = serde_yaml::from_str(&source).unwrap();
        let w = parse_workflow(&source).unwrap();
        for key in doc.as_mapping().unwrap().keys().filter_map(Value::as_str) {
            if !["name", "on", "jobs"].contains(&key) {
                assert!(w.raw_extra.contains_key(key), "{path}: {key}");
            }
        }
        for (id, job) in &w.jobs {
            for key in doc["jobs"][id.as_str()].as_mapping().unwrap().keys().filter_map(Value::as_str) {
                if !["name", "runs-on", "strategy", "steps"].contains(&key) {
                    assert!(job.raw_extra.contains_key(key), "{path}: {id}/{key}");
                }
            }
        }
    }
}

#[test]
fn corpus_is_syntax_valid() {
    let validator = Validator::default();
    for path in corpus_paths() {
        let parsed = parse_workflow(&read_fixture(&path));
        let errors: Vec<_> = validate(&parsed).into_iter().filter(|d| d.is_error()).collect();
        assert!(errors.is_empty(), "{path}: {errors:?}");
        assert!(validator.is_valid(&parsed));
    }
}

#[test]
fn cited_python_package_triggers_on_master() {
    let w = parse_workflow(&read_fixture("workflows/python-package.yml")).unwrap();
    for event in ["push", "pull_request"] {
        let branches = w.triggers[event]["branches"].as_sequence().unwrap();
        assert_eq!(branches, &vec![Value::from("master")]);
    }
    let install = &w.jobs["build"].steps()[2];
    assert!(install.run.as_deref().unwrap().contains("requirements.txt"));
}
