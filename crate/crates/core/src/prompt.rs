//! Prompt construction for workflow generation and revision, and extraction
//! of the workflow text from a model reply.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{prompt_tree, RepoContext, PROMPT_TREE_CAP};

/// Ceiling for the estimated token count of a whole prompt.
pub const TOKEN_BUDGET: usize = 100_000;

pub const SYSTEM_PROMPT: &str = "You are a DevOps engineer who writes GitHub Actions workflows. \
Write exactly one GitHub Actions workflow YAML file that builds and tests the repository the user describes. \
The workflow must run on push and pull_request events for the repository's default branch. \
Use the file structure to choose the language setup, dependency installation, build and test commands. \
Reply with only the workflow in a single fenced ```yaml code block.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// A system instruction plus the conversation, ending with a user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub turns: Vec<ChatMessage>,
}

/// Token estimate of ⌈chars / 4⌉.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

impl PromptBundle {
    pub fn token_estimate(&self) -> usize {
        estimate_tokens(&self.system) + self.turns.iter().map(|t| estimate_tokens(&t.content)).sum::<usize>()
    }
}

fn generation_message(ctx: &RepoContext, tree: &[String], custom_request: Option<&str>) -> String {
    let mut msg = format!("Repository: {}\nDefault branch: {}\n", ctx.full_name, ctx.default_branch);
    if let Some(lang) = &ctx.primary_language {
        msg.push_str(&format!("Primary language: {lang}\n"));
    }
    msg.push_str("\nFile structure:\n");
    for line in tree {
        msg.push_str(line);
        msg.push('\n');
    }
    if let Some(request) = custom_request.filter(|r| !r.trim().is_empty()) {
        msg.push_str("\nAdditional request:\n");
        msg.push_str(request);
        msg.push('\n');
    }
    msg
}

/// Generation prompt: default branch, language, the (truncated) file tree
/// and the user's request verbatim.
pub fn build_generation_prompt(ctx: &RepoContext, custom_request: Option<&str>) -> PromptBundle {
    let mut cap = PROMPT_TREE_CAP;
    loop {
        let tree = prompt_tree(&ctx.file_tree, cap);
        let bundle = PromptBundle {
            system: SYSTEM_PROMPT.to_string(),
            turns: vec![ChatMessage::user(generation_message(ctx, &tree, custom_request))],
        };
        if bundle.token_estimate() <= TOKEN_BUDGET || cap == 0 {
            return bundle;
        }
        cap /= 2;
    }
}

fn revision_message(existing_workflow: &str, new_comment: &str) -> String {
    format!(
        "Current workflow:\n```yaml\n{}\n```\n\nRequested change:\n{}\n\nReply with the complete updated workflow.",
        existing_workflow.trim_end_matches('\n'),
        new_comment
    )
}

/// Revision prompt with the default budget.
pub fn build_revision_prompt(existing_workflow: &str, conversation: &[ChatMessage], new_comment: &str) -> PromptBundle {
    build_revision_prompt_within(existing_workflow, conversation, new_comment, TOKEN_BUDGET)
}

/// Prior conversation followed by a user turn carrying the current workflow
/// and the new comment. Oldest turns are dropped until the estimate fits
/// `budget`; the system text and the final turn always stay.
pub fn build_revision_prompt_within(
    existing_workflow: &str,
    conversation: &[ChatMessage],
    new_comment: &str,
    budget: usize,
) -> PromptBundle {
    let mut turns = conversation.to_vec();
    turns.push(ChatMessage::user(revision_message(existing_workflow, new_comment)));
    let mut bundle = PromptBundle {
        system: SYSTEM_PROMPT.to_string(),
        turns,
    };
    while bundle.turns.len() > 1 && bundle.token_estimate() > budget {
        bundle.turns.remove(0);
    }
    bundle
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no workflow found in the model response")]
    NoWorkflowFound,
}

fn is_yaml_mapping(text: &str) -> bool {
    matches!(serde_yaml::from_str::<serde_yaml::Value>(text), Ok(serde_yaml::Value::Mapping(_)))
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn first_fenced_block(response: &str) -> Option<String> {
    let mut lines = response.split_inclusive('\n');
    lines.find(|l| is_fence(l))?;
    let mut body = String::new();
    for line in lines {
        if is_fence(line) {
            break;
        }
        body.push_str(line);
    }
    Some(body)
}

fn workflow_suffix(response: &str) -> Option<String> {
    let lines: Vec<&str> = response.split_inclusive('\n').collect();
    let start = lines
        .iter()
        .position(|l| l.starts_with("name:") || l.starts_with("on:"))?;
    let mut end = lines.len();
    while end > start {
        let candidate: String = lines[start..end].concat();
        if is_yaml_mapping(&candidate) {
            return Some(candidate);
        }
        end -= 1;
    }
    None
}

/// Workflow text in a model reply: the first fenced code block, else the
/// text from the first `name:`/`on:` line, shortened from the end until it
/// parses as a YAML mapping.
pub fn extract_workflow_text(response: &str) -> Result<String, PromptError> {
    if let Some(block) = first_fenced_block(response) {
        if is_yaml_mapping(&block) {
            return Ok(block);
        }
    }
    workflow_suffix(response).ok_or(PromptError::NoWorkflowFound)
}
