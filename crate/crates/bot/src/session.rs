//! Conversation state of a bot pull request, rebuilt from its comments.
//!
//! Every bot comment that answers a request ends with a hidden marker
//! carrying the request text and the workflow path, so the thread itself is
//! the session store.

use serde::{Deserialize, Serialize};
use wfgen_core::github::Comment;
use wfgen_core::prompt::ChatMessage;

const MARKER_OPEN: &str = "<!-- devops-llm-bot:turn ";
const MARKER_CLOSE: &str = " -->";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnMarker {
    pub user: String,
    pub path: String,
}

/// Append the hidden marker to a visible reply.
pub fn with_marker(visible: &str, marker: &TurnMarker) -> String {
    let json = serde_json::to_string(marker)
        .expect("marker serialization")
        .replace("--", "-\\u002d")
        .replace('>', "\\u003e")
        .replace('<', "\\u003c");
    format!("{}\n\n{MARKER_OPEN}{json}{MARKER_CLOSE}\n", visible.trim_end())
}

/// Split a comment into its visible text and marker, if it has one.
pub fn parse_marker(body: &str) -> Option<(String, TurnMarker)> {
    let start = body.rfind(MARKER_OPEN)?;
    let rest = &body[start + MARKER_OPEN.len()..];
    let end = rest.find(MARKER_CLOSE)?;
    let marker: TurnMarker = serde_json::from_str(&rest[..end]).ok()?;
    Some((body[..start].trim_end().to_string(), marker))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BotSession {
    pub repo: String,
    pub pr_number: u64,
    /// Alternating user/assistant turns, starting with a user turn.
    pub conversation: Vec<ChatMessage>,
    pub current_workflow_path: Option<String>,
}

impl BotSession {
    /// Rebuild from the PR's comments. Only bot comments written before
    /// `before_id` count; each contributes the request it answered and its
    /// own reply.
    pub fn from_comments(
        repo: &str,
        pr_number: u64,
        comments: &[Comment],
        bot_login: &str,
        before_id: Option<u64>,
    ) -> BotSession {
        let mut ordered: Vec<&Comment> = comments
            .iter()
            .filter(|c| c.user == bot_login && before_id.is_none_or(|id| c.id < id))
            .collect();
        ordered.sort_by(|a, b| (&a.created_at, a.id).cmp(&(&b.created_at, b.id)));
        let mut session = BotSession {
            repo: repo.to_string(),
            pr_number,
            conversation: Vec::new(),
            current_workflow_path: None,
        };
        for comment in ordered {
            if let Some((visible, marker)) = parse_marker(&comment.body) {
                session.conversation.push(ChatMessage::user(marker.user));
                session.conversation.push(ChatMessage::assistant(visible));
                session.current_workflow_path = Some(marker.path);
            }
        }
        session
    }
}
