//! Per-language build/test command patterns and the registry of build/setup
//! actions, used to tell build/test workflows (and jobs) apart from the rest.

use std::collections::BTreeSet;
use std::path::Path;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::language::Language;
use crate::workflow::{Job, Workflow};

const BUILTIN: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Build,
    Test,
    /// Matches a `uses` reference rather than a command.
    Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Build,
    Test,
    Other,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: expected `language<TAB>tag<TAB>regex`")]
    Malformed { line: usize },
    #[error("line {line}: unknown tag `{tag}`")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: {source}")]
    BadPattern {
        line: usize,
        #[source]
        source: regex::Error,
    },
    #[error("{language} has no {tag} pattern")]
    MissingCoverage { language: Language, tag: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct LexiconEntry {
    /// `None` for entries that apply to every language (`*`).
    pub language: Option<Language>,
    pub tag: Tag,
    pub pattern: Regex,
}

#[derive(Debug, Clone)]
pub struct CommandLexicon {
    entries: Vec<LexiconEntry>,
}

impl CommandLexicon {
    /// The lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("builtin lexicon is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut fields = raw.splitn(3, '\t');
            let (Some(lang), Some(tag), Some(pattern)) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(LexiconError::Malformed { line });
            };
            let tag = match tag {
                "build" => Tag::Build,
                "test" => Tag::Test,
                "action" => Tag::Action,
                other => {
                    return Err(LexiconError::UnknownTag {
                        line,
                        tag: other.to_string(),
                    })
                }
            };
            let pattern = Regex::new(pattern).map_err(|source| LexiconError::BadPattern { line, source })?;
            let language = (lang != "*").then(|| lang.parse().expect("infallible"));
            entries.push(LexiconEntry {
                language,
                tag,
                pattern,
            });
        }
        let lexicon = CommandLexicon { entries };
        lexicon.check_coverage()?;
        Ok(lexicon)
    }

    fn check_coverage(&self) -> Result<(), LexiconError> {
        for language in Language::SUPPORTED {
            for (tag, label) in [(Tag::Build, "build"), (Tag::Test, "test")] {
                let covered = self
                    .entries
                    .iter()
                    .any(|e| e.tag == tag && e.language.as_ref() == Some(&language));
                if !covered {
                    return Err(LexiconError::MissingCoverage { language, tag: label });
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    /// Build/test tags whose patterns match any line of a `run` block.
    pub fn command_tags(&self, run: &str) -> BTreeSet<Tag> {
        let mut tags = BTreeSet::new();
        for line in run.lines() {
            for entry in &self.entries {
                if entry.tag != Tag::Action && entry.pattern.is_match(line) {
                    tags.insert(entry.tag);
                }
            }
        }
        tags
    }

    pub fn is_build_action(&self, uses: &str) -> bool {
        self.entries
            .iter()
            .any(|e| e.tag == Tag::Action && e.pattern.is_match(uses))
    }

    /// Whether a job counts as build/test: its id or name carries a build/test
    /// keyword, one of its commands matches the lexicon, or it uses a known
    /// build/setup action.
    pub fn is_build_test_job(&self, job: &Job) -> bool {
        let named = std::iter::once(job.id.as_str())
            .chain(job.name.as_deref())
            .any(has_build_test_keyword);
        named
            || job.steps().iter().any(|step| {
                step.run.as_deref().is_some_and(|run| !self.command_tags(run).is_empty())
                    || step.uses.as_deref().is_some_and(|uses| self.is_build_action(uses))
            })
    }
}

impl Default for CommandLexicon {
    fn default() -> Self {
        Self::builtin()
    }
}

const JOB_KEYWORDS: &[&str] = &["build", "test", "ci", "check", "compile", "verify"];

/// Keyword match on word starts, so `unit-tests` and `Verify on JDK` match
/// but `dependencies` does not match `ci`.
fn has_build_test_keyword(label: &str) -> bool {
    words(label).iter().any(|word| {
        let word = word.to_ascii_lowercase();
        JOB_KEYWORDS.iter().any(|kw| word.starts_with(kw))
    })
}

/// Split on non-alphanumerics and lower→upper camel-case boundaries.
fn words(label: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for c in label.chars() {
        if !c.is_alphanumeric() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        current.push(c);
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Tags describing what a workflow does: `build`/`test` when some step's
/// command matches a pattern with that tag (a known build action counts as
/// `build`), otherwise `{other}`.
pub fn classify_workflow_purpose(w: &Workflow, lexicon: &CommandLexicon) -> BTreeSet<Purpose> {
    let mut purposes = BTreeSet::new();
    for step in w.all_steps() {
        if let Some(run) = &step.run {
            for tag in lexicon.command_tags(run) {
                match tag {
                    Tag::Build => purposes.insert(Purpose::Build),
                    Tag::Test => purposes.insert(Purpose::Test),
                    Tag::Action => false,
                };
            }
        }
        if step.uses.as_deref().is_some_and(|u| lexicon.is_build_action(u)) {
            purposes.insert(Purpose::Build);
        }
    }
    if purposes.is_empty() {
        purposes.insert(Purpose::Other);
    }
    purposes
}
