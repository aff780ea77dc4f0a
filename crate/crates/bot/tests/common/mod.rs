#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use wfgen_bot::{sign, Bot, BotConfig, Outcome};
use wfgen_core::github::MockGitHub;
use wfgen_core::llm::{Backend, BackendReply, ChatRequest, LlmError};

pub const REPO: &str = "acme/webapp";
pub const SECRET: &[u8] = b"webhook-secret";
pub const HUMAN: &str = "alice";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn replay_dir() -> PathBuf {
    fixtures().join("bot/replay")
}

/// Model replies for the scenario, keyed by a phrase of the latest request.
pub fn scripted_replies() -> BTreeMap<String, String> {
    let text = std::fs::read_to_string(fixtures().join("bot/replies.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Answers with the reply whose key occurs in the final user turn; records
/// every request it sees.
pub struct ScriptBackend {
    pub replies: BTreeMap<String, String>,
    pub requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptBackend {
    pub fn new() -> Self {
        ScriptBackend {
            replies: scripted_replies(),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl Backend for ScriptBackend {
    fn send(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        self.requests.lock().unwrap().push(request.clone());
        let last = &request.messages.last().unwrap().content;
        let text = self
            .replies
            .iter()
            .filter(|(key, _)| last.contains(key.as_str()))
            .max_by_key(|(key, _)| key.len())
            .map(|(_, reply)| reply.clone())
            .ok_or_else(|| LlmError::BackendUnavailable("no scripted reply".into()))?;
        Ok(BackendReply { text, latency_ms: 1 })
    }
}

/// Always answers with prose.
pub struct ProseBackend;

impl Backend for ProseBackend {
    fn send(&self, _: &ChatRequest) -> Result<BackendReply, LlmError> {
        Ok(BackendReply {
            text: "I am not sure how this project is built.".into(),
            latency_ms: 1,
        })
    }
}

pub fn mock_repo() -> Arc<MockGitHub> {
    let gh = Arc::new(MockGitHub::new());
    gh.add_repo(
        REPO,
        "main",
        250,
        &[
            ("README.md", "# webapp\n"),
            ("package.json", "{\"scripts\":{\"test\":\"jest\",\"lint\":\"eslint .\"}}\n"),
            ("package-lock.json", "{}\n"),
            ("src/index.js", "module.exports = () => 1;\n"),
            ("test/index.test.js", "test('x', () => {});\n"),
        ],
    );
    gh.open_issue(REPO, 1);
    gh
}

pub fn bot(gh: Arc<MockGitHub>, backend: Arc<dyn Backend>) -> Bot {
    Bot::new(gh, backend, BotConfig::new(SECRET))
}

pub fn issue_payload(number: u64, title: &str, body: &str, sender: &str) -> Vec<u8> {
    serde_json::json!({
        "action": "opened",
        "repository": {"full_name": REPO},
        "sender": {"login": sender},
        "issue": {"number": number, "title": title, "body": body},
    })
    .to_string()
    .into_bytes()
}

pub fn comment_payload(number: u64, comment_id: u64, body: &str, sender: &str) -> Vec<u8> {
    serde_json::json!({
        "action": "created",
        "repository": {"full_name": REPO},
        "sender": {"login": sender},
        "issue": {"number": number, "title": "@devops add CI", "pull_request": {"url": "https://example.invalid"}},
        "comment": {"id": comment_id, "body": body, "user": {"login": sender}},
    })
    .to_string()
    .into_bytes()
}

/// Deliver a correctly signed payload.
pub fn deliver(bot: &Bot, event: &str, delivery: &str, payload: &[u8]) -> Outcome {
    bot.handle_delivery(event, delivery, &sign(payload, SECRET), payload)
}

/// Post a human PR comment on the mock, then deliver its webhook.
pub fn comment(bot: &Bot, gh: &MockGitHub, number: u64, body: &str, delivery: &str) -> Outcome {
    let id = gh.seed_comment(REPO, number, HUMAN, body);
    deliver(bot, "issue_comment", delivery, &comment_payload(number, id, body, HUMAN))
}

pub fn write_ops(gh: &MockGitHub) -> Vec<&'static str> {
    gh.writes().iter().map(|c| c.op).collect()
}
