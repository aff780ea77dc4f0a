//! Delivery handling and the HTTP endpoint.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::Router;
use wfgen_core::github::GitHubApi;
use wfgen_core::llm::Backend;

use crate::event::{route, Action, EventError, WebhookEvent};
use crate::handler::{BotError, CommitRef, Handler, PullRequestRef, Settings};

pub const DELIVERY_TTL: Duration = Duration::from_secs(24 * 60 * 60);
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone)]
pub struct BotConfig {
    pub secret: Vec<u8>,
    pub settings: Settings,
    pub timeout: Duration,
}

impl BotConfig {
    pub fn new(secret: impl Into<Vec<u8>>) -> Self {
        BotConfig {
            secret: secret.into(),
            settings: Settings::default(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// `WEBHOOK_SECRET` (required), `BOT_LOGIN`, `LLM_MODEL`, `LLM_TEMPERATURE`.
    pub fn from_env() -> Result<Self, String> {
        let secret = std::env::var("WEBHOOK_SECRET").map_err(|_| "WEBHOOK_SECRET is not set".to_string())?;
        let mut config = BotConfig::new(secret);
        if let Ok(login) = std::env::var("BOT_LOGIN") {
            config.settings.login = login;
        }
        if let Ok(model) = std::env::var("LLM_MODEL") {
            config.settings.model = model;
        }
        if let Ok(t) = std::env::var("LLM_TEMPERATURE") {
            config.settings.temperature = t.parse().map_err(|_| format!("LLM_TEMPERATURE: not a number: {t}"))?;
        }
        Ok(config)
    }
}

#[derive(Debug)]
pub enum Outcome {
    Rejected(EventError),
    Duplicate,
    Ignored,
    Generated(PullRequestRef),
    Revised(CommitRef),
    Failed(BotError),
}

/// A verified, routed event that still has to be processed.
#[derive(Debug, Clone)]
pub struct Accepted {
    pub event: WebhookEvent,
    pub action: Action,
}

pub struct Bot {
    github: Arc<dyn GitHubApi>,
    backend: Arc<dyn Backend>,
    config: BotConfig,
    deliveries: Mutex<HashMap<String, Instant>>,
    repo_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Bot {
    pub fn new(github: Arc<dyn GitHubApi>, backend: Arc<dyn Backend>, config: BotConfig) -> Self {
        Bot {
            github,
            backend,
            config,
            deliveries: Mutex::new(HashMap::new()),
            repo_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &BotConfig {
        &self.config
    }

    /// True the first time a delivery id is seen within the TTL.
    fn first_delivery(&self, delivery_id: &str) -> bool {
        let now = Instant::now();
        let mut seen = self.deliveries.lock().unwrap();
        seen.retain(|_, at| now.duration_since(*at) < DELIVERY_TTL);
        if seen.contains_key(delivery_id) {
            return false;
        }
        seen.insert(delivery_id.to_string(), now);
        true
    }

    /// Verify, deduplicate and route a delivery without side effects.
    pub fn accept(
        &self,
        event_name: &str,
        delivery_id: &str,
        signature: &str,
        payload: &[u8],
    ) -> Result<Accepted, Outcome> {
        let event = WebhookEvent::from_delivery(event_name, payload, signature, &self.config.secret)
            .map_err(Outcome::Rejected)?;
        if !delivery_id.is_empty() && !self.first_delivery(delivery_id) {
            log::info!("delivery {delivery_id} already handled");
            return Err(Outcome::Duplicate);
        }
        let action = route(&event, &self.config.settings.login);
        Ok(Accepted { event, action })
    }

    fn repo_lock(&self, repo: &str) -> Arc<Mutex<()>> {
        self.repo_locks.lock().unwrap().entry(repo.to_string()).or_default().clone()
    }

    /// Run an accepted event to completion; actions on one repository are
    /// serialized.
    pub fn process(&self, accepted: &Accepted) -> Outcome {
        let event = &accepted.event;
        if accepted.action == Action::Ignore {
            return Outcome::Ignored;
        }
        let lock = self.repo_lock(&event.repo);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let handler = Handler {
            github: self.github.as_ref(),
            backend: self.backend.as_ref(),
            settings: &self.config.settings,
            deadline: Some(Instant::now() + self.config.timeout),
        };
        let outcome = match accepted.action {
            Action::Generate => handler.handle_generate(event).map(Outcome::Generated),
            Action::Revise => handler.handle_revise(event).map(Outcome::Revised),
            Action::Ignore => unreachable!(),
        };
        match outcome {
            Ok(o) => o,
            Err(BotError::NotBotPullRequest(n)) => {
                log::info!("{}#{n}: not a bot pull request, ignoring", event.repo);
                Outcome::Ignored
            }
            Err(e) => {
                log::error!("{}#{}: {e}", event.repo, event.issue_number);
                Outcome::Failed(e)
            }
        }
    }

    pub fn handle_delivery(&self, event_name: &str, delivery_id: &str, signature: &str, payload: &[u8]) -> Outcome {
        match self.accept(event_name, delivery_id, signature, payload) {
            Ok(accepted) => self.process(&accepted),
            Err(outcome) => outcome,
        }
    }
}

fn header<'a>(headers: &'a HeaderMap, name: &str) -> &'a str {
    headers.get(name).and_then(|v| v.to_str().ok()).unwrap_or("")
}

async fn webhook(State(bot): State<Arc<Bot>>, headers: HeaderMap, body: Bytes) -> (StatusCode, &'static str) {
    let accepted = bot.accept(
        header(&headers, "x-github-event"),
        header(&headers, "x-github-delivery"),
        header(&headers, "x-hub-signature-256"),
        &body,
    );
    match accepted {
        Err(Outcome::Rejected(EventError::BadSignature)) => (StatusCode::UNAUTHORIZED, "bad signature"),
        Err(Outcome::Rejected(_)) => (StatusCode::BAD_REQUEST, "malformed payload"),
        Err(_) => (StatusCode::OK, "duplicate"),
        Ok(a) if a.action == Action::Ignore => (StatusCode::OK, "ignored"),
        Ok(a) => {
            let limit = bot.config.timeout;
            let worker = bot.clone();
            tokio::spawn(async move {
                let task = tokio::task::spawn_blocking(move || worker.process(&a));
                match tokio::time::timeout(limit + Duration::from_secs(5), task).await {
                    Ok(Ok(outcome)) => log::info!("webhook processed: {outcome:?}"),
                    Ok(Err(e)) => log::error!("webhook worker panicked: {e}"),
                    Err(_) => log::error!("webhook processing exceeded {limit:?}"),
                }
            });
            (StatusCode::ACCEPTED, "accepted")
        }
    }
}

pub fn router(bot: Arc<Bot>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/webhook", post(webhook))
        .with_state(bot)
}

/// Serve until Ctrl-C.
pub async fn serve(bot: Arc<Bot>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(bot))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
