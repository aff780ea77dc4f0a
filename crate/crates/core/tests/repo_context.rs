mod common;

use std::collections::BTreeSet;
use std::fs;

use wfgen_core::context::{fetch_remote, fetch_remote_or_shallow, prompt_tree, scan_local, ContextError};
use wfgen_core::github::MockGitHub;
use wfgen_core::metrics::extract_build_test_steps;
use wfgen_core::{classify_workflow_purpose, parse_workflow, CommandLexicon, Language, Purpose};

fn labels(file: &str) -> Vec<(String, String)> {
    common::read_fixture(file)
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let (p, v) = l.split_once('\t').unwrap();
            (p.to_string(), v.to_string())
        })
        .collect()
}

#[test]
fn purpose_matches_hand_labels() {
    let lexicon = CommandLexicon::builtin();
    let rows = labels("golden/purpose-labels.tsv");
    assert_eq!(rows.len(), 20);
    for (path, expected) in rows {
        let w = parse_workflow(&common::read_fixture(&path)).unwrap();
        let got = classify_workflow_purpose(&w, &lexicon);
        let expected: BTreeSet<Purpose> = expected
            .split(',')
            .map(|t| match t {
                "build" => Purpose::Build,
                "test" => Purpose::Test,
                _ => Purpose::Other,
            })
            .collect();
        assert_eq!(got, expected, "{path}");
    }
}

#[test]
fn build_test_jobs_match_hand_labels() {
    let lexicon = CommandLexicon::builtin();
    for (path, expected) in labels("golden/build-test-jobs.tsv") {
        let w = parse_workflow(&common::read_fixture(&path)).unwrap();
        let got: Vec<&str> = w
            .jobs
            .values()
            .filter(|j| lexicon.is_build_test_job(j))
            .map(|j| j.id.as_str())
            .collect();
        let expected: Vec<&str> = expected.split(',').filter(|s| !s.is_empty()).collect();
        assert_eq!(got, expected, "{path}");
        let steps: usize = w
            .jobs
            .values()
            .filter(|j| expected.contains(&j.id.as_str()))
            .map(|j| j.steps().len())
            .sum();
        assert_eq!(extract_build_test_steps(&w, &lexicon).len(), steps, "{path}");
    }
}

#[test]
fn build_purpose_implies_extracted_steps() {
    let lexicon = CommandLexicon::builtin();
    for path in common::corpus_paths() {
        let w = parse_workflow(&common::read_fixture(&path)).unwrap();
        if classify_workflow_purpose(&w, &lexicon).contains(&Purpose::Build) {
            assert!(!extract_build_test_steps(&w, &lexicon).is_empty(), "{path}");
        }
    }
}

#[test]
fn scan_python_project() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("src")).unwrap();
    fs::write(dir.path().join("src/main.py"), "print()\n").unwrap();
    fs::write(dir.path().join("requirements.txt"), "").unwrap();
    let ctx = scan_local(dir.path()).unwrap();
    assert_eq!(ctx.primary_language, Some(Language::Python));
    assert_eq!(ctx.file_tree, ["requirements.txt", "src/", "src/main.py"]);
    assert_eq!(ctx.default_branch, "main");
}

#[test]
fn scan_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = scan_local(dir.path()).unwrap();
    assert!(ctx.file_tree.is_empty());
    assert_eq!(ctx.primary_language, None);
}

#[test]
fn scan_majority_typescript() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..6 {
        fs::write(dir.path().join(format!("m{i}.ts")), "").unwrap();
    }
    for i in 0..4 {
        fs::write(dir.path().join(format!("s{i}.js")), "").unwrap();
    }
    assert_eq!(scan_local(dir.path()).unwrap().primary_language, Some(Language::TypeScript));
}

#[test]
fn scan_honors_git_metadata_and_ignores() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::create_dir_all(root.join(".git/objects")).unwrap();
    fs::write(root.join(".git/HEAD"), "ref: refs/heads/develop\n").unwrap();
    fs::write(root.join(".gitignore"), "target/\n*.log\n").unwrap();
    fs::create_dir_all(root.join("target/debug")).unwrap();
    fs::write(root.join("target/debug/app"), "").unwrap();
    fs::write(root.join("run.log"), "").unwrap();
    fs::create_dir_all(root.join(".github/workflows")).unwrap();
    fs::write(root.join(".github/workflows/ci.yml"), "on: push\n").unwrap();
    fs::write(root.join("Main.java"), "").unwrap();
    let ctx = scan_local(root).unwrap();
    assert_eq!(ctx.default_branch, "develop");
    assert_eq!(
        ctx.file_tree,
        [".github/", ".github/workflows/", ".github/workflows/ci.yml", ".gitignore", "Main.java"]
    );
    assert_eq!(ctx.primary_language, Some(Language::Java));
    assert_eq!(scan_local(root).unwrap(), ctx);
}

#[test]
fn scan_rejects_files_and_missing_paths() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("f.txt");
    fs::write(&file, "").unwrap();
    assert!(matches!(scan_local(&file), Err(ContextError::NotADirectory(_))));
    assert!(matches!(scan_local(&dir.path().join("nope")), Err(ContextError::Io { .. })));
}

#[test]
fn remote_echo_of_mock() {
    let gh = MockGitHub::new();
    gh.add_repo("acme/tool", "master", 250, &[("a.py", ""), ("b/c.py", "")]);
    let ctx = fetch_remote("acme/tool", &gh).unwrap();
    assert_eq!(ctx.default_branch, "master");
    assert_eq!(ctx.file_tree, ["a.py", "b/", "b/c.py"]);
    assert_eq!(ctx.star_count, Some(250));
    assert!(matches!(fetch_remote("acme/none", &gh), Err(ContextError::NotFound(_))));
}

#[test]
fn truncated_tree_falls_back_to_two_levels() {
    let gh = MockGitHub::new();
    gh.add_repo(
        "acme/big",
        "main",
        100,
        &[
            ("README.md", ""),
            ("src/lib.ts", ""),
            ("src/deep/nested/x.ts", ""),
            ("test/a.test.ts", ""),
        ],
    );
    gh.set_truncated("acme/big", true);
    assert!(matches!(fetch_remote("acme/big", &gh), Err(ContextError::Truncated(_))));
    let ctx = fetch_remote_or_shallow("acme/big", &gh).unwrap();
    assert_eq!(
        ctx.file_tree,
        ["README.md", "src/", "src/deep/", "src/lib.ts", "test/", "test/a.test.ts"]
    );
    assert!(gh.writes().is_empty());
}

#[test]
fn prompt_tree_of_large_repository() {
    let mut tree = Vec::new();
    for d in 0..100 {
        tree.push(format!("pkg{d:03}/"));
        for f in 0..99 {
            tree.push(format!("pkg{d:03}/file{f:02}.py"));
        }
    }
    assert_eq!(tree.len(), 10_000);
    let out = prompt_tree(&tree, 400);
    assert!(out.len() <= 400);
    // Every directory is admitted first; files then fill pkg000, pkg001
    // and four of pkg002, and the other 98 directories carry a marker.
    assert_eq!(out.len(), 400);
    assert_eq!(out.iter().filter(|l| l.ends_with('/')).count(), 100);
    assert_eq!(out.iter().filter(|l| l.ends_with('…')).count(), 98);
    assert_eq!(out.iter().filter(|l| l.starts_with("pkg002/file")).count(), 4);
}
