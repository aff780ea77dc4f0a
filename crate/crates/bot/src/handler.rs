//! The two bot actions: open a pull request with a generated workflow, and
//! revise that workflow from a pull request comment.

use std::sync::OnceLock;
use std::time::Instant;

use regex::Regex;
use thiserror::Error;
use wfgen_core::context::{fetch_remote_or_shallow, ContextError};
use wfgen_core::github::{GitHubApi, GitHubError};
use wfgen_core::llm::{complete, Backend, GenerationParams, LlmError};
use wfgen_core::prompt::{build_generation_prompt, build_revision_prompt, extract_workflow_text, PromptBundle};
use wfgen_core::{parse_workflow, Validator};

use crate::event::{WebhookEvent, REVISE_PREFIX};
use crate::session::{with_marker, BotSession, TurnMarker};

pub const BOT_LOGIN: &str = "devops-llm-bot[bot]";
pub const DEFAULT_WORKFLOW_PATH: &str = ".github/workflows/build-test.yml";
pub const BRANCH_PREFIX: &str = "devops-llm-bot/issue-";
const MAX_BRANCH_ATTEMPTS: u32 = 20;

pub const ACK_TEXT: &str = "Working on a build and test workflow for this repository. \
I will open a pull request here when it is ready.";

#[derive(Debug, Error)]
pub enum BotError {
    #[error("generated workflow is invalid after retry: {}", .0.join("; "))]
    GenerationInvalid(Vec<String>),
    #[error("model backend: {0}")]
    Llm(#[from] LlmError),
    #[error("GitHub API: {0}")]
    GitHub(#[from] GitHubError),
    #[error("repository context: {0}")]
    Context(#[from] ContextError),
    #[error("pull request #{0} was not opened by the bot")]
    NotBotPullRequest(u64),
    #[error("workflow {0} not found on the pull request branch")]
    WorkflowMissing(String),
    #[error("time budget exceeded")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PullRequestRef {
    pub number: u64,
    pub branch: String,
    pub path: String,
    pub commit: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRef {
    pub pr_number: u64,
    pub branch: String,
    pub path: String,
    pub commit: String,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub login: String,
    pub model: String,
    pub temperature: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let params = GenerationParams::bot(wfgen_core::llm::DEFAULT_MODEL);
        Settings {
            login: BOT_LOGIN.to_string(),
            model: params.model,
            temperature: params.temperature,
        }
    }
}

pub struct Handler<'a> {
    pub github: &'a dyn GitHubApi,
    pub backend: &'a dyn Backend,
    pub settings: &'a Settings,
    pub deadline: Option<Instant>,
}

/// Workflow path requested by a `filename: <name>.yml` line in the issue
/// body, else the default.
pub fn workflow_path(body: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?m)^\s*filename:\s*([A-Za-z0-9._-]+\.ya?ml)\s*$").unwrap());
    match re.captures(body) {
        Some(c) => format!(".github/workflows/{}", &c[1]),
        None => DEFAULT_WORKFLOW_PATH.to_string(),
    }
}

fn fenced(text: &str) -> String {
    format!("```yaml\n{}\n```", text.trim_end_matches('\n'))
}

fn generation_request(event: &WebhookEvent) -> String {
    let mut request = event.title.trim().to_string();
    if !event.body.trim().is_empty() {
        request.push_str("\n\n");
        request.push_str(event.body.trim());
    }
    request
}

impl Handler<'_> {
    fn check_deadline(&self) -> Result<(), BotError> {
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(BotError::Timeout),
            _ => Ok(()),
        }
    }

    /// Complete, extract and validate; one retry on an invalid result. The
    /// retry carries a seed so it is a distinct request.
    fn generate_valid(&self, bundle: &PromptBundle) -> Result<String, BotError> {
        let mut problems = Vec::new();
        for attempt in 0..2u64 {
            self.check_deadline()?;
            let params = GenerationParams {
                model: self.settings.model.clone(),
                temperature: self.settings.temperature,
                seed: (attempt > 0).then_some(attempt),
            };
            let exchange = complete(bundle, &params, self.backend)?;
            problems = match extract_workflow_text(&exchange.response) {
                Err(e) => vec![e.to_string()],
                Ok(text) => {
                    let errors: Vec<String> = Validator::default()
                        .validate(&parse_workflow(&text))
                        .iter()
                        .filter(|d| d.is_error())
                        .map(ToString::to_string)
                        .collect();
                    if errors.is_empty() {
                        let mut text = text;
                        if !text.ends_with('\n') {
                            text.push('\n');
                        }
                        return Ok(text);
                    }
                    errors
                }
            };
            log::warn!("attempt {} produced an invalid workflow: {}", attempt + 1, problems.join("; "));
        }
        Err(BotError::GenerationInvalid(problems))
    }

    fn create_unique_branch(&self, repo: &str, issue: u64, sha: &str) -> Result<String, BotError> {
        for n in 1..=MAX_BRANCH_ATTEMPTS {
            let name = if n == 1 {
                format!("{BRANCH_PREFIX}{issue}")
            } else {
                format!("{BRANCH_PREFIX}{issue}-{n}")
            };
            match self.github.create_branch(repo, &name, sha) {
                Ok(()) => return Ok(name),
                Err(GitHubError::AlreadyExists(_)) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(GitHubError::AlreadyExists(format!("{BRANCH_PREFIX}{issue} and its suffixes")).into())
    }

    /// Acknowledge, generate, then branch, commit and open the pull request
    /// on the issue.
    pub fn handle_generate(&self, event: &WebhookEvent) -> Result<PullRequestRef, BotError> {
        let repo = event.repo.as_str();
        let ack = self.github.create_issue_comment(repo, event.issue_number, ACK_TEXT)?;
        match self.generate_and_open(event) {
            Ok((pr, text)) => {
                let visible = format!(
                    "Opened pull request #{} with `{}` on branch `{}`.\n\n{}",
                    pr.number,
                    pr.path,
                    pr.branch,
                    fenced(&text)
                );
                let marker = TurnMarker {
                    user: generation_request(event),
                    path: pr.path.clone(),
                };
                if let Err(e) = self.github.update_issue_comment(repo, ack, &with_marker(&visible, &marker)) {
                    log::warn!("{repo}#{}: could not update acknowledgement: {e}", event.issue_number);
                }
                Ok(pr)
            }
            Err(BotError::GenerationInvalid(problems)) => {
                let body = format!(
                    "I could not generate a valid workflow for this repository.\n\n{}",
                    problems.iter().map(|p| format!("- {p}")).collect::<Vec<_>>().join("\n")
                );
                if let Err(e) = self.github.create_issue_comment(repo, event.issue_number, &body) {
                    log::warn!("{repo}#{}: could not post failure: {e}", event.issue_number);
                }
                Err(BotError::GenerationInvalid(problems))
            }
            Err(err) => {
                let body = format!("Workflow generation failed: {err}");
                if let Err(e) = self.github.update_issue_comment(repo, ack, &body) {
                    log::warn!("{repo}#{}: could not post failure: {e}", event.issue_number);
                }
                Err(err)
            }
        }
    }

    fn generate_and_open(&self, event: &WebhookEvent) -> Result<(PullRequestRef, String), BotError> {
        let repo = event.repo.as_str();
        let ctx = fetch_remote_or_shallow(repo, self.github)?;
        let path = workflow_path(&event.body);
        let bundle = build_generation_prompt(&ctx, Some(&event.body));
        let text = self.generate_valid(&bundle)?;
        self.check_deadline()?;
        let base_sha = self.github.get_branch_sha(repo, &ctx.default_branch)?;
        let branch = self.create_unique_branch(repo, event.issue_number, &base_sha)?;
        let opened = self.commit_and_open(event, &ctx.default_branch, &branch, &path, &text);
        match opened {
            Ok(pr) => Ok((pr, text)),
            Err(err) => {
                if let Err(e) = self.github.delete_branch(repo, &branch) {
                    log::warn!("{repo}: could not delete {branch}: {e}");
                }
                Err(err)
            }
        }
    }

    fn commit_and_open(
        &self,
        event: &WebhookEvent,
        base: &str,
        branch: &str,
        path: &str,
        text: &str,
    ) -> Result<PullRequestRef, BotError> {
        let repo = event.repo.as_str();
        self.check_deadline()?;
        let prior = self.github.get_file(repo, path, branch)?.map(|f| f.sha);
        let commit = self.github.put_file(
            repo,
            branch,
            path,
            text,
            &format!("Add build and test workflow (#{})", event.issue_number),
            prior.as_deref(),
        )?;
        self.check_deadline()?;
        let pr = match self.github.create_pull_from_issue(repo, event.issue_number, branch, base) {
            Err(GitHubError::Unsupported(why)) => {
                log::info!("{repo}: issue conversion unavailable ({why}), opening a linked pull request");
                self.github.create_pull(
                    repo,
                    &event.title,
                    &format!("Closes #{}", event.issue_number),
                    branch,
                    base,
                )?
            }
            other => other?,
        };
        Ok(PullRequestRef {
            number: pr.number,
            branch: branch.to_string(),
            path: path.to_string(),
            commit,
        })
    }

    /// Regenerate the workflow on a bot pull request from a comment, commit
    /// it to the head branch and reply.
    pub fn handle_revise(&self, event: &WebhookEvent) -> Result<CommitRef, BotError> {
        let repo = event.repo.as_str();
        let number = event.issue_number;
        let pr = self.github.get_pull(repo, number)?;
        if pr.user != self.settings.login {
            return Err(BotError::NotBotPullRequest(number));
        }
        let result = self.revise(event, &pr.head_ref);
        let reply = match &result {
            Ok(_) => return result,
            Err(BotError::GenerationInvalid(problems)) => format!(
                "I could not produce a valid revision, so nothing was committed.\n\n{}",
                problems.iter().map(|p| format!("- {p}")).collect::<Vec<_>>().join("\n")
            ),
            Err(e) => format!("Revision failed: {e}"),
        };
        if let Err(e) = self.github.create_issue_comment(repo, number, &reply) {
            log::warn!("{repo}#{number}: could not post failure: {e}");
        }
        result
    }

    fn revise(&self, event: &WebhookEvent, head: &str) -> Result<CommitRef, BotError> {
        let repo = event.repo.as_str();
        let number = event.issue_number;
        let comments = self.github.list_issue_comments(repo, number)?;
        let session = BotSession::from_comments(repo, number, &comments, &self.settings.login, event.comment_id);
        let path = session
            .current_workflow_path
            .clone()
            .unwrap_or_else(|| DEFAULT_WORKFLOW_PATH.to_string());
        let current = self
            .github
            .get_file(repo, &path, head)?
            .ok_or_else(|| BotError::WorkflowMissing(path.clone()))?;
        let request = event.body.trim_start().trim_start_matches(REVISE_PREFIX).trim().to_string();
        let bundle = build_revision_prompt(&current.text, &session.conversation, &request);
        let text = self.generate_valid(&bundle)?;
        self.check_deadline()?;
        let commit = self.github.put_file(
            repo,
            head,
            &path,
            &text,
            &format!("Revise workflow (#{number})"),
            Some(&current.sha),
        )?;
        let visible = format!("Updated `{path}` in {commit}.\n\n{}", fenced(&text));
        let marker = TurnMarker { user: request, path: path.clone() };
        self.github.create_issue_comment(repo, number, &with_marker(&visible, &marker))?;
        Ok(CommitRef {
            pr_number: number,
            branch: head.to_string(),
            path,
            commit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filename_override() {
        assert_eq!(workflow_path(""), DEFAULT_WORKFLOW_PATH);
        assert_eq!(workflow_path("Please\nfilename: ci.yml\n"), ".github/workflows/ci.yml");
        assert_eq!(workflow_path("filename: ../x.sh"), DEFAULT_WORKFLOW_PATH);
        assert_eq!(workflow_path("my filename: ci.yml"), DEFAULT_WORKFLOW_PATH);
    }
}
