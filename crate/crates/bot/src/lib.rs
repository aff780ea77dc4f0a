//! GitHub webhook service: `@devops` issues become pull requests with a
//! generated build/test workflow, and `@devops-llm-bot` comments on those
//! pull requests revise it.

pub mod event;
pub mod handler;
pub mod service;
pub mod session;

pub use event::{route, sign, verify_signature, Action, EventKind, WebhookEvent};
pub use handler::{BotError, CommitRef, Handler, PullRequestRef, Settings, BOT_LOGIN, DEFAULT_WORKFLOW_PATH};
pub use service::{router, serve, Bot, BotConfig, Outcome};
pub use session::BotSession;
