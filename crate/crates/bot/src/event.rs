//! Webhook deliveries: signature check, payload decoding and routing.

use hmac::{Hmac, Mac};
use serde::Deserialize;
use sha2::Sha256;

pub const GENERATE_PREFIX: &str = "@devops";
pub const REVISE_PREFIX: &str = "@devops-llm-bot";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    IssueOpened,
    IssueCommentCreated,
    Other,
}

/// A verified webhook event. For comment events `body` is the comment text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WebhookEvent {
    pub kind: EventKind,
    pub repo: String,
    pub sender: String,
    pub issue_number: u64,
    pub title: String,
    pub body: String,
    pub is_pull_request: bool,
    pub comment_id: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Generate,
    Revise,
    Ignore,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EventError {
    #[error("signature mismatch")]
    BadSignature,
    #[error("malformed payload: {0}")]
    Malformed(String),
}

/// `sha256=<hex>` header value for `payload`.
pub fn sign(payload: &[u8], secret: &[u8]) -> String {
    let mut mac = Hmac::<Sha256>::new_from_slice(secret).expect("any key length");
    mac.update(payload);
    format!("sha256={}", hex::encode(mac.finalize().into_bytes()))
}

/// Constant-time check of an `X-Hub-Signature-256` header.
pub fn verify_signature(payload: &[u8], signature_header: &str, secret: &[u8]) -> bool {
    let Some(hex_digest) = signature_header.strip_prefix("sha256=") else {
        return false;
    };
    let Ok(expected) = hex::decode(hex_digest) else {
        return false;
    };
    let mut mac = Hmac::<Sha256>::new_from_slice(secret).expect("any key length");
    mac.update(payload);
    mac.verify_slice(&expected).is_ok()
}

#[derive(Deserialize)]
struct Payload {
    action: Option<String>,
    repository: Option<Repository>,
    sender: Option<User>,
    issue: Option<Issue>,
    comment: Option<CommentPayload>,
}

#[derive(Deserialize)]
struct Repository {
    full_name: String,
}

#[derive(Deserialize)]
struct User {
    login: String,
}

#[derive(Deserialize)]
struct Issue {
    number: u64,
    #[serde(default)]
    title: String,
    body: Option<String>,
    pull_request: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct CommentPayload {
    id: u64,
    body: Option<String>,
}

impl WebhookEvent {
    /// Verify the signature, then decode. Unverified payloads never become
    /// events.
    pub fn from_delivery(
        event_name: &str,
        payload: &[u8],
        signature_header: &str,
        secret: &[u8],
    ) -> Result<WebhookEvent, EventError> {
        if !verify_signature(payload, signature_header, secret) {
            return Err(EventError::BadSignature);
        }
        decode(event_name, payload)
    }
}

fn decode(event_name: &str, payload: &[u8]) -> Result<WebhookEvent, EventError> {
    let p: Payload = serde_json::from_slice(payload).map_err(|e| EventError::Malformed(e.to_string()))?;
    let action = p.action.as_deref().unwrap_or("");
    let kind = match (event_name, action) {
        ("issues", "opened") => EventKind::IssueOpened,
        ("issue_comment", "created") => EventKind::IssueCommentCreated,
        _ => EventKind::Other,
    };
    let mut event = WebhookEvent {
        kind,
        repo: p.repository.map(|r| r.full_name).unwrap_or_default(),
        sender: p.sender.map(|s| s.login).unwrap_or_default(),
        issue_number: 0,
        title: String::new(),
        body: String::new(),
        is_pull_request: false,
        comment_id: None,
    };
    if kind == EventKind::Other {
        return Ok(event);
    }
    let issue = p.issue.ok_or_else(|| EventError::Malformed("missing issue".into()))?;
    if event.repo.is_empty() {
        return Err(EventError::Malformed("missing repository".into()));
    }
    event.issue_number = issue.number;
    event.title = issue.title;
    event.is_pull_request = issue.pull_request.is_some();
    event.body = issue.body.unwrap_or_default();
    if kind == EventKind::IssueCommentCreated {
        let comment = p.comment.ok_or_else(|| EventError::Malformed("missing comment".into()))?;
        event.comment_id = Some(comment.id);
        event.body = comment.body.unwrap_or_default();
    }
    Ok(event)
}

/// Decide what a verified event asks for. `bot_login` is the bot's own
/// identity; its events are always ignored.
pub fn route(event: &WebhookEvent, bot_login: &str) -> Action {
    if event.sender == bot_login {
        return Action::Ignore;
    }
    match event.kind {
        EventKind::IssueOpened if event.title.trim_start().starts_with(GENERATE_PREFIX) => Action::Generate,
        EventKind::IssueCommentCreated
            if event.is_pull_request && event.body.trim_start().starts_with(REVISE_PREFIX) =>
        {
            Action::Revise
        }
        _ => Action::Ignore,
    }
}
