//! Minimal GitHub REST v3 client: the read endpoints used to build repository
//! context and the write endpoints the bot needs (refs, contents, comments,
//! pulls). [`HttpGitHub`] talks to the real API; [`MockGitHub`] is an
//! in-memory stand-in that records every call.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GitHubError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("rate limited until {reset_at:?} (unix seconds)")]
    RateLimited { reset_at: Option<u64> },
    #[error("authentication failed")]
    AuthFailure,
    #[error("already exists: {0}")]
    AlreadyExists(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoInfo {
    pub full_name: String,
    pub default_branch: String,
    pub stargazers_count: u64,
    pub language: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Blob,
    Tree,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEntry {
    pub path: String,
    pub kind: EntryKind,
    pub sha: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeListing {
    pub entries: Vec<TreeEntry>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileContent {
    pub path: String,
    pub text: String,
    pub sha: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub id: u64,
    pub user: String,
    pub body: String,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PullRequest {
    pub number: u64,
    pub head_ref: String,
    pub base_ref: String,
    pub user: String,
}

/// The GitHub operations used by context extraction, curation and the bot.
pub trait GitHubApi: Send + Sync {
    fn get_repo(&self, repo: &str) -> Result<RepoInfo, GitHubError>;
    fn get_branch_sha(&self, repo: &str, branch: &str) -> Result<String, GitHubError>;
    fn get_tree(&self, repo: &str, sha: &str, recursive: bool) -> Result<TreeListing, GitHubError>;
    /// `Ok(None)` when the path does not exist at `git_ref`.
    fn get_file(&self, repo: &str, path: &str, git_ref: &str) -> Result<Option<FileContent>, GitHubError>;
    fn create_branch(&self, repo: &str, branch: &str, sha: &str) -> Result<(), GitHubError>;
    fn delete_branch(&self, repo: &str, branch: &str) -> Result<(), GitHubError>;
    /// Create or update a file; `prior_sha` is the blob being replaced.
    /// Returns the commit sha.
    fn put_file(
        &self,
        repo: &str,
        branch: &str,
        path: &str,
        text: &str,
        message: &str,
        prior_sha: Option<&str>,
    ) -> Result<String, GitHubError>;
    fn create_issue_comment(&self, repo: &str, issue: u64, body: &str) -> Result<u64, GitHubError>;
    fn update_issue_comment(&self, repo: &str, comment_id: u64, body: &str) -> Result<(), GitHubError>;
    fn list_issue_comments(&self, repo: &str, issue: u64) -> Result<Vec<Comment>, GitHubError>;
    fn get_pull(&self, repo: &str, number: u64) -> Result<PullRequest, GitHubError>;
    /// Turn an existing issue into a pull request.
    fn create_pull_from_issue(
        &self,
        repo: &str,
        issue: u64,
        head: &str,
        base: &str,
    ) -> Result<PullRequest, GitHubError>;
    fn create_pull(
        &self,
        repo: &str,
        title: &str,
        body: &str,
        head: &str,
        base: &str,
    ) -> Result<PullRequest, GitHubError>;
}

fn b64() -> base64::engine::GeneralPurpose {
    base64::engine::general_purpose::STANDARD
}

/// Client for the GitHub REST API (or anything serving the same routes).
pub struct HttpGitHub {
    agent: ureq::Agent,
    base: String,
    token: Option<String>,
    blocked_until: Mutex<Option<u64>>,
    max_wait: Duration,
}

impl HttpGitHub {
    pub const DEFAULT_BASE: &'static str = "https://api.github.com";

    pub fn new(base: &str, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        HttpGitHub {
            agent,
            base: base.trim_end_matches('/').to_string(),
            token,
            blocked_until: Mutex::new(None),
            max_wait: Duration::from_secs(10),
        }
    }

    /// Base URL from `GITHUB_API_URL` (default api.github.com), token from
    /// `GITHUB_TOKEN`.
    pub fn from_env() -> Self {
        let base = std::env::var("GITHUB_API_URL").unwrap_or_else(|_| Self::DEFAULT_BASE.into());
        Self::new(&base, std::env::var("GITHUB_TOKEN").ok())
    }

    /// Longest rate-limit pause honored by sleeping instead of failing.
    pub fn with_max_wait(mut self, max_wait: Duration) -> Self {
        self.max_wait = max_wait;
        self
    }

    fn wait_for_budget(&self) -> Result<(), GitHubError> {
        let until = *self.blocked_until.lock().unwrap();
        if let Some(until) = until {
            let now = unix_now();
            if until > now {
                let wait = Duration::from_secs(until - now);
                if wait > self.max_wait {
                    return Err(GitHubError::RateLimited { reset_at: Some(until) });
                }
                std::thread::sleep(wait);
            }
        }
        Ok(())
    }

    fn send(&self, method: &str, path: &str, body: Option<&Value>) -> Result<Value, GitHubError> {
        let mut retried = false;
        loop {
            self.wait_for_budget()?;
            let mut req = ureq::http::Request::builder()
                .method(method)
                .uri(format!("{}{}", self.base, path))
                .header("Accept", "application/vnd.github+json")
                .header("User-Agent", "wfgen")
                .header("X-GitHub-Api-Version", "2022-11-28");
            if let Some(token) = &self.token {
                req = req.header("Authorization", format!("Bearer {token}"));
            }
            let payload = match body {
                Some(b) => {
                    req = req.header("Content-Type", "application/json");
                    b.to_string()
                }
                None => String::new(),
            };
            let req = req.body(payload).map_err(|e| GitHubError::Transport(e.to_string()))?;
            let mut resp = self
                .agent
                .run(req)
                .map_err(|e| GitHubError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            let header = |name: &str| {
                resp.headers()
                    .get(name)
                    .and_then(|v| v.to_str().ok())
                    .map(str::to_string)
            };
            let remaining = header("x-ratelimit-remaining");
            let reset = header("x-ratelimit-reset").and_then(|v| v.parse::<u64>().ok());
            let retry_after = header("retry-after").and_then(|v| v.parse::<u64>().ok());
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| GitHubError::Transport(e.to_string()))?;

            let limited = status == 429
                || (status == 403 && (remaining.as_deref() == Some("0") || retry_after.is_some()));
            if limited {
                let reset_at = retry_after.map(|s| unix_now() + s).or(reset);
                *self.blocked_until.lock().unwrap() = reset_at;
                let wait = reset_at.map(|r| r.saturating_sub(unix_now()));
                if !retried && wait.is_some_and(|w| Duration::from_secs(w) <= self.max_wait) {
                    retried = true;
                    continue;
                }
                return Err(GitHubError::RateLimited { reset_at });
            }

            let message = || {
                serde_json::from_str::<Value>(&text)
                    .ok()
                    .and_then(|v| v.get("message").and_then(Value::as_str).map(str::to_string))
                    .unwrap_or_else(|| text.clone())
            };
            return match status {
                200..=299 if text.trim().is_empty() => Ok(Value::Null),
                200..=299 => serde_json::from_str(&text).map_err(|e| GitHubError::Decode(e.to_string())),
                401 | 403 => Err(GitHubError::AuthFailure),
                404 => Err(GitHubError::NotFound(path.to_string())),
                422 if message().to_ascii_lowercase().contains("already exists") => {
                    Err(GitHubError::AlreadyExists(message()))
                }
                _ => Err(GitHubError::Http { status, message: message() }),
            };
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn str_field(v: &Value, pointer: &str) -> Result<String, GitHubError> {
    v.pointer(pointer)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GitHubError::Decode(format!("missing {pointer}")))
}

fn u64_field(v: &Value, pointer: &str) -> Result<u64, GitHubError> {
    v.pointer(pointer)
        .and_then(Value::as_u64)
        .ok_or_else(|| GitHubError::Decode(format!("missing {pointer}")))
}

fn pull_from_json(v: &Value) -> Result<PullRequest, GitHubError> {
    Ok(PullRequest {
        number: u64_field(v, "/number")?,
        head_ref: str_field(v, "/head/ref")?,
        base_ref: str_field(v, "/base/ref")?,
        user: str_field(v, "/user/login")?,
    })
}

fn encode_path(path: &str) -> String {
    path.split('/')
        .map(|seg| {
            seg.bytes()
                .map(|b| match b {
                    b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                        (b as char).to_string()
                    }
                    _ => format!("%{b:02X}"),
                })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("/")
}

impl GitHubApi for HttpGitHub {
    fn get_repo(&self, repo: &str) -> Result<RepoInfo, GitHubError> {
        let v = self.send("GET", &format!("/repos/{repo}"), None)?;
        Ok(RepoInfo {
            full_name: str_field(&v, "/full_name")?,
            default_branch: str_field(&v, "/default_branch")?,
            stargazers_count: u64_field(&v, "/stargazers_count")?,
            language: v.get("language").and_then(Value::as_str).map(str::to_string),
        })
    }

    fn get_branch_sha(&self, repo: &str, branch: &str) -> Result<String, GitHubError> {
        let v = self.send("GET", &format!("/repos/{repo}/git/ref/heads/{}", encode_path(branch)), None)?;
        str_field(&v, "/object/sha")
    }

    fn get_tree(&self, repo: &str, sha: &str, recursive: bool) -> Result<TreeListing, GitHubError> {
        let suffix = if recursive { "?recursive=1" } else { "" };
        let v = self.send("GET", &format!("/repos/{repo}/git/trees/{sha}{suffix}"), None)?;
        let mut entries = Vec::new();
        for item in v.get("tree").and_then(Value::as_array).into_iter().flatten() {
            let kind = match item.get("type").and_then(Value::as_str) {
                Some("blob") => EntryKind::Blob,
                Some("tree") => EntryKind::Tree,
                _ => continue,
            };
            entries.push(TreeEntry {
                path: str_field(item, "/path")?,
                kind,
                sha: str_field(item, "/sha")?,
            });
        }
        Ok(TreeListing {
            entries,
            truncated: v.get("truncated").and_then(Value::as_bool).unwrap_or(false),
        })
    }

    fn get_file(&self, repo: &str, path: &str, git_ref: &str) -> Result<Option<FileContent>, GitHubError> {
        let route = format!("/repos/{repo}/contents/{}?ref={}", encode_path(path), encode_path(git_ref));
        let v = match self.send("GET", &route, None) {
            Ok(v) => v,
            Err(GitHubError::NotFound(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let encoded: String = str_field(&v, "/content")?.split_whitespace().collect();
        let bytes = b64()
            .decode(encoded)
            .map_err(|e| GitHubError::Decode(e.to_string()))?;
        Ok(Some(FileContent {
            path: path.to_string(),
            text: String::from_utf8_lossy(&bytes).into_owned(),
            sha: str_field(&v, "/sha")?,
        }))
    }

    fn create_branch(&self, repo: &str, branch: &str, sha: &str) -> Result<(), GitHubError> {
        let body = json!({ "ref": format!("refs/heads/{branch}"), "sha": sha });
        self.send("POST", &format!("/repos/{repo}/git/refs"), Some(&body)).map(|_| ())
    }

    fn delete_branch(&self, repo: &str, branch: &str) -> Result<(), GitHubError> {
        self.send("DELETE", &format!("/repos/{repo}/git/refs/heads/{}", encode_path(branch)), None)
            .map(|_| ())
    }

    fn put_file(
        &self,
        repo: &str,
        branch: &str,
        path: &str,
        text: &str,
        message: &str,
        prior_sha: Option<&str>,
    ) -> Result<String, GitHubError> {
        let mut body = json!({
            "message": message,
            "content": b64().encode(text),
            "branch": branch,
        });
        if let Some(sha) = prior_sha {
            body["sha"] = json!(sha);
        }
        let v = self.send("PUT", &format!("/repos/{repo}/contents/{}", encode_path(path)), Some(&body))?;
        str_field(&v, "/commit/sha")
    }

    fn create_issue_comment(&self, repo: &str, issue: u64, body: &str) -> Result<u64, GitHubError> {
        let v = self.send(
            "POST",
            &format!("/repos/{repo}/issues/{issue}/comments"),
            Some(&json!({ "body": body })),
        )?;
        u64_field(&v, "/id")
    }

    fn update_issue_comment(&self, repo: &str, comment_id: u64, body: &str) -> Result<(), GitHubError> {
        self.send(
            "PATCH",
            &format!("/repos/{repo}/issues/comments/{comment_id}"),
            Some(&json!({ "body": body })),
        )
        .map(|_| ())
    }

    fn list_issue_comments(&self, repo: &str, issue: u64) -> Result<Vec<Comment>, GitHubError> {
        let mut out = Vec::new();
        for page in 1.. {
            let v = self.send(
                "GET",
                &format!("/repos/{repo}/issues/{issue}/comments?per_page=100&page={page}"),
                None,
            )?;
            let items = v.as_array().cloned().unwrap_or_default();
            let n = items.len();
            for item in items {
                out.push(Comment {
                    id: u64_field(&item, "/id")?,
                    user: str_field(&item, "/user/login")?,
                    body: str_field(&item, "/body").unwrap_or_default(),
                    created_at: str_field(&item, "/created_at")?,
                });
            }
            if n < 100 {
                break;
            }
        }
        Ok(out)
    }

    fn get_pull(&self, repo: &str, number: u64) -> Result<PullRequest, GitHubError> {
        pull_from_json(&self.send("GET", &format!("/repos/{repo}/pulls/{number}"), None)?)
    }

    fn create_pull_from_issue(
        &self,
        repo: &str,
        issue: u64,
        head: &str,
        base: &str,
    ) -> Result<PullRequest, GitHubError> {
        let body = json!({ "issue": issue, "head": head, "base": base });
        match self.send("POST", &format!("/repos/{repo}/pulls"), Some(&body)) {
            Ok(v) => pull_from_json(&v),
            Err(GitHubError::Http { status: 422, message }) => Err(GitHubError::Unsupported(message)),
            Err(e) => Err(e),
        }
    }

    fn create_pull(
        &self,
        repo: &str,
        title: &str,
        body: &str,
        head: &str,
        base: &str,
    ) -> Result<PullRequest, GitHubError> {
        let payload = json!({ "title": title, "body": body, "head": head, "base": base });
        pull_from_json(&self.send("POST", &format!("/repos/{repo}/pulls"), Some(&payload))?)
    }
}

/// One recorded call against [`MockGitHub`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiCall {
    pub op: &'static str,
    pub repo: String,
    pub detail: String,
    pub write: bool,
}

#[derive(Debug, Clone, Default)]
struct MockBranch {
    head: String,
    files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
struct MockRepo {
    info: RepoInfo,
    branches: BTreeMap<String, MockBranch>,
    truncate_recursive: bool,
    issue_conversion: bool,
    comments: BTreeMap<u64, Vec<Comment>>,
    issues: BTreeSet<u64>,
    pulls: BTreeMap<u64, PullRequest>,
}

#[derive(Debug, Default)]
struct MockState {
    repos: BTreeMap<String, MockRepo>,
    /// Commit sha → branch it was made on.
    commits: HashMap<String, (String, String)>,
    calls: Vec<ApiCall>,
    failing: BTreeSet<&'static str>,
    next_id: u64,
}

impl MockState {
    fn tick(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn log(&mut self, op: &'static str, repo: &str, detail: String, write: bool) -> Result<(), GitHubError> {
        self.calls.push(ApiCall {
            op,
            repo: repo.to_string(),
            detail,
            write,
        });
        if self.failing.contains(op) {
            return Err(GitHubError::Http {
                status: 500,
                message: format!("injected failure in {op}"),
            });
        }
        Ok(())
    }

    fn repo(&mut self, repo: &str) -> Result<&mut MockRepo, GitHubError> {
        self.repos
            .get_mut(repo)
            .ok_or_else(|| GitHubError::NotFound(repo.to_string()))
    }

    fn new_commit(&mut self, repo: &str, branch: &str) -> String {
        let sha = format!("{:040x}", 0xc0ff_ee00_0000u64 + self.tick());
        self.commits.insert(sha.clone(), (repo.to_string(), branch.to_string()));
        sha
    }
}

fn timestamp(n: u64) -> String {
    format!("2024-01-01T{:02}:{:02}:{:02}Z", n / 3600 % 24, n / 60 % 60, n % 60)
}

fn blob_sha(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(text.as_bytes())[..20])
}

/// In-memory GitHub with scripted repositories and a log of every call.
#[derive(Debug, Default)]
pub struct MockGitHub {
    state: Mutex<MockState>,
}

impl MockGitHub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a repository whose default branch holds `files`.
    pub fn add_repo(&self, full_name: &str, default_branch: &str, stars: u64, files: &[(&str, &str)]) {
        let mut st = self.state.lock().unwrap();
        let head = st.new_commit(full_name, default_branch);
        let branch = MockBranch {
            head,
            files: files.iter().map(|(p, t)| (p.to_string(), t.to_string())).collect(),
        };
        st.repos.insert(
            full_name.to_string(),
            MockRepo {
                info: RepoInfo {
                    full_name: full_name.to_string(),
                    default_branch: default_branch.to_string(),
                    stargazers_count: stars,
                    language: None,
                },
                branches: BTreeMap::from([(default_branch.to_string(), branch)]),
                truncate_recursive: false,
                issue_conversion: true,
                comments: BTreeMap::new(),
                issues: BTreeSet::new(),
                pulls: BTreeMap::new(),
            },
        );
    }

    /// Recursive tree listings of this repository report `truncated`.
    pub fn set_truncated(&self, repo: &str, truncated: bool) {
        self.state.lock().unwrap().repos.get_mut(repo).expect("repo").truncate_recursive = truncated;
    }

    /// Whether the issue-to-pull conversion endpoint is available.
    pub fn set_issue_conversion(&self, repo: &str, supported: bool) {
        self.state.lock().unwrap().repos.get_mut(repo).expect("repo").issue_conversion = supported;
    }

    /// Make every call of `op` fail with HTTP 500 (the call is still logged).
    pub fn fail_op(&self, op: &'static str) {
        self.state.lock().unwrap().failing.insert(op);
    }

    /// Open an issue without logging a call.
    pub fn open_issue(&self, repo: &str, number: u64) {
        self.state.lock().unwrap().repos.get_mut(repo).expect("repo").issues.insert(number);
    }

    /// Seed a comment without logging a call. Returns its id.
    pub fn seed_comment(&self, repo: &str, issue: u64, user: &str, body: &str) -> u64 {
        let mut st = self.state.lock().unwrap();
        let id = st.tick();
        st.repos
            .get_mut(repo)
            .expect("repo")
            .comments
            .entry(issue)
            .or_default()
            .push(Comment {
                id,
                user: user.to_string(),
                body: body.to_string(),
                created_at: timestamp(id),
            });
        id
    }

    /// Seed a pull request (and its head branch as a copy of the default
    /// branch) without logging a call.
    pub fn seed_pull(&self, repo: &str, number: u64, head: &str, user: &str) {
        let mut st = self.state.lock().unwrap();
        let base = st.repos[repo].info.default_branch.clone();
        let mut branch = st.repos[repo].branches[&base].clone();
        branch.head = st.new_commit(repo, head);
        let r = st.repos.get_mut(repo).expect("repo");
        r.branches.insert(head.to_string(), branch);
        r.pulls.insert(
            number,
            PullRequest {
                number,
                head_ref: head.to_string(),
                base_ref: base,
                user: user.to_string(),
            },
        );
    }

    /// Seed a file on a branch without logging a call.
    pub fn seed_file(&self, repo: &str, branch: &str, path: &str, text: &str) {
        let mut st = self.state.lock().unwrap();
        let r = st.repos.get_mut(repo).expect("repo");
        r.branches
            .get_mut(branch)
            .expect("branch")
            .files
            .insert(path.to_string(), text.to_string());
    }

    pub fn calls(&self) -> Vec<ApiCall> {
        self.state.lock().unwrap().calls.clone()
    }

    pub fn writes(&self) -> Vec<ApiCall> {
        self.calls().into_iter().filter(|c| c.write).collect()
    }

    pub fn clear_calls(&self) {
        self.state.lock().unwrap().calls.clear();
    }

    pub fn branches(&self, repo: &str) -> Vec<String> {
        self.state.lock().unwrap().repos[repo].branches.keys().cloned().collect()
    }

    pub fn file(&self, repo: &str, branch: &str, path: &str) -> Option<String> {
        let st = self.state.lock().unwrap();
        st.repos[repo].branches.get(branch)?.files.get(path).cloned()
    }

    pub fn comments(&self, repo: &str, issue: u64) -> Vec<Comment> {
        let st = self.state.lock().unwrap();
        st.repos[repo].comments.get(&issue).cloned().unwrap_or_default()
    }

    pub fn pulls(&self, repo: &str) -> Vec<PullRequest> {
        self.state.lock().unwrap().repos[repo].pulls.values().cloned().collect()
    }

    fn list_tree(files: &BTreeMap<String, String>, branch: &str, prefix: &str, recursive: bool) -> Vec<TreeEntry> {
        let mut dirs = BTreeSet::new();
        let mut entries = Vec::new();
        for (path, text) in files {
            let Some(rest) = path.strip_prefix(prefix) else { continue };
            let parts: Vec<&str> = rest.split('/').collect();
            let limit = if recursive { parts.len() - 1 } else { parts.len().min(2) - 1 };
            for i in 0..limit {
                dirs.insert(parts[..=i].join("/"));
            }
            if recursive || parts.len() == 1 {
                entries.push(TreeEntry {
                    path: rest.to_string(),
                    kind: EntryKind::Blob,
                    sha: blob_sha(text),
                });
            }
        }
        for dir in dirs {
            entries.push(TreeEntry {
                sha: format!("tree:{branch}:{prefix}{dir}/"),
                path: dir,
                kind: EntryKind::Tree,
            });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        entries
    }
}

impl GitHubApi for MockGitHub {
    fn get_repo(&self, repo: &str) -> Result<RepoInfo, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("get_repo", repo, String::new(), false)?;
        Ok(st.repo(repo)?.info.clone())
    }

    fn get_branch_sha(&self, repo: &str, branch: &str) -> Result<String, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("get_branch_sha", repo, branch.to_string(), false)?;
        st.repo(repo)?
            .branches
            .get(branch)
            .map(|b| b.head.clone())
            .ok_or_else(|| GitHubError::NotFound(format!("branch {branch}")))
    }

    fn get_tree(&self, repo: &str, sha: &str, recursive: bool) -> Result<TreeListing, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("get_tree", repo, format!("{sha} recursive={recursive}"), false)?;
        let (branch, prefix) = if let Some(rest) = sha.strip_prefix("tree:") {
            let (branch, prefix) = rest.split_once(':').ok_or_else(|| GitHubError::NotFound(sha.into()))?;
            (branch.to_string(), prefix.to_string())
        } else {
            let (_, branch) = st
                .commits
                .get(sha)
                .cloned()
                .ok_or_else(|| GitHubError::NotFound(format!("tree {sha}")))?;
            (branch, String::new())
        };
        let r = st.repo(repo)?;
        let files = &r.branches.get(&branch).ok_or_else(|| GitHubError::NotFound(branch.clone()))?.files;
        let mut entries = Self::list_tree(files, &branch, &prefix, recursive);
        let truncated = recursive && r.truncate_recursive;
        if truncated {
            entries.truncate(entries.len() / 2);
        }
        Ok(TreeListing { entries, truncated })
    }

    fn get_file(&self, repo: &str, path: &str, git_ref: &str) -> Result<Option<FileContent>, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("get_file", repo, format!("{git_ref}:{path}"), false)?;
        let r = st.repo(repo)?;
        let branch = r
            .branches
            .get(git_ref)
            .ok_or_else(|| GitHubError::NotFound(format!("ref {git_ref}")))?;
        Ok(branch.files.get(path).map(|text| FileContent {
            path: path.to_string(),
            text: text.clone(),
            sha: blob_sha(text),
        }))
    }

    fn create_branch(&self, repo: &str, branch: &str, sha: &str) -> Result<(), GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("create_branch", repo, branch.to_string(), true)?;
        let source = st
            .commits
            .get(sha)
            .map(|(_, b)| b.clone())
            .ok_or_else(|| GitHubError::Http { status: 422, message: "Object does not exist".into() })?;
        let head = st.new_commit(repo, branch);
        let r = st.repo(repo)?;
        if r.branches.contains_key(branch) {
            return Err(GitHubError::AlreadyExists(format!("Reference refs/heads/{branch} already exists")));
        }
        let files = r.branches[&source].files.clone();
        r.branches.insert(branch.to_string(), MockBranch { head, files });
        Ok(())
    }

    fn delete_branch(&self, repo: &str, branch: &str) -> Result<(), GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("delete_branch", repo, branch.to_string(), true)?;
        st.repo(repo)?
            .branches
            .remove(branch)
            .map(|_| ())
            .ok_or_else(|| GitHubError::NotFound(format!("branch {branch}")))
    }

    fn put_file(
        &self,
        repo: &str,
        branch: &str,
        path: &str,
        text: &str,
        message: &str,
        prior_sha: Option<&str>,
    ) -> Result<String, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("put_file", repo, format!("{branch}:{path} {message}"), true)?;
        let sha = st.new_commit(repo, branch);
        let b = st
            .repo(repo)?
            .branches
            .get_mut(branch)
            .ok_or_else(|| GitHubError::NotFound(format!("branch {branch}")))?;
        let current = b.files.get(path).map(|t| blob_sha(t));
        if current.as_deref() != prior_sha {
            return Err(GitHubError::Http {
                status: 409,
                message: format!("{path} does not match the given sha"),
            });
        }
        b.files.insert(path.to_string(), text.to_string());
        b.head = sha.clone();
        Ok(sha)
    }

    fn create_issue_comment(&self, repo: &str, issue: u64, body: &str) -> Result<u64, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("create_issue_comment", repo, format!("#{issue}"), true)?;
        let id = st.tick();
        st.repo(repo)?.comments.entry(issue).or_default().push(Comment {
            id,
            user: "devops-llm-bot[bot]".to_string(),
            body: body.to_string(),
            created_at: timestamp(id),
        });
        Ok(id)
    }

    fn update_issue_comment(&self, repo: &str, comment_id: u64, body: &str) -> Result<(), GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("update_issue_comment", repo, comment_id.to_string(), true)?;
        let comment = st
            .repo(repo)?
            .comments
            .values_mut()
            .flatten()
            .find(|c| c.id == comment_id)
            .ok_or_else(|| GitHubError::NotFound(format!("comment {comment_id}")))?;
        comment.body = body.to_string();
        Ok(())
    }

    fn list_issue_comments(&self, repo: &str, issue: u64) -> Result<Vec<Comment>, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("list_issue_comments", repo, format!("#{issue}"), false)?;
        Ok(st.repo(repo)?.comments.get(&issue).cloned().unwrap_or_default())
    }

    fn get_pull(&self, repo: &str, number: u64) -> Result<PullRequest, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("get_pull", repo, format!("#{number}"), false)?;
        st.repo(repo)?
            .pulls
            .get(&number)
            .cloned()
            .ok_or_else(|| GitHubError::NotFound(format!("pull {number}")))
    }

    fn create_pull_from_issue(
        &self,
        repo: &str,
        issue: u64,
        head: &str,
        base: &str,
    ) -> Result<PullRequest, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("create_pull_from_issue", repo, format!("#{issue} {head}->{base}"), true)?;
        let r = st.repo(repo)?;
        if !r.issue_conversion {
            return Err(GitHubError::Unsupported("issue conversion".into()));
        }
        if !r.branches.contains_key(head) {
            return Err(GitHubError::Http { status: 422, message: format!("unknown head {head}") });
        }
        let pr = PullRequest {
            number: issue,
            head_ref: head.to_string(),
            base_ref: base.to_string(),
            user: "devops-llm-bot[bot]".to_string(),
        };
        r.pulls.insert(issue, pr.clone());
        Ok(pr)
    }

    fn create_pull(
        &self,
        repo: &str,
        title: &str,
        _body: &str,
        head: &str,
        base: &str,
    ) -> Result<PullRequest, GitHubError> {
        let mut st = self.state.lock().unwrap();
        st.log("create_pull", repo, format!("{title} {head}->{base}"), true)?;
        let r = st.repo(repo)?;
        if !r.branches.contains_key(head) {
            return Err(GitHubError::Http { status: 422, message: format!("unknown head {head}") });
        }
        let number = r
            .issues
            .iter()
            .chain(r.pulls.keys())
            .chain(r.comments.keys())
            .max()
            .map_or(1, |n| n + 1);
        let pr = PullRequest {
            number,
            head_ref: head.to_string(),
            base_ref: base.to_string(),
            user: "devops-llm-bot[bot]".to_string(),
        };
        r.pulls.insert(number, pr.clone());
        Ok(pr)
    }
}
