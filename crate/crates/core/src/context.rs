//! Repository context for prompts: file structure, default branch and
//! language, read from a local checkout or through the GitHub API.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::github::{EntryKind, GitHubApi, GitHubError, TreeEntry};
use crate::language::Language;

/// Entry cap for file trees rendered into prompts.
pub const PROMPT_TREE_CAP: usize = 400;

/// Marker standing in for elided directory contents.
pub const ELIDED: &str = "…";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoContext {
    pub full_name: String,
    pub default_branch: String,
    /// Relative slash-separated paths, directories suffixed `/`, unique and
    /// in depth-first order.
    pub file_tree: Vec<String>,
    pub primary_language: Option<Language>,
    pub star_count: Option<u64>,
}

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not a directory")]
    NotADirectory(String),
    #[error("repository not found: {0}")]
    NotFound(String),
    #[error("GitHub rate limit exceeded (resets at {reset_at:?})")]
    RateLimited { reset_at: Option<u64> },
    #[error("GitHub authentication failed")]
    AuthFailure,
    /// The recursive tree listing was cut short; the context carries the
    /// partial tree.
    #[error("recursive tree listing truncated ({} entries)", .0.file_tree.len())]
    Truncated(Box<RepoContext>),
    #[error("GitHub API: {0}")]
    Api(GitHubError),
}

impl From<GitHubError> for ContextError {
    fn from(e: GitHubError) -> Self {
        match e {
            GitHubError::NotFound(what) => ContextError::NotFound(what),
            GitHubError::RateLimited { reset_at } => ContextError::RateLimited { reset_at },
            GitHubError::AuthFailure => ContextError::AuthFailure,
            other => ContextError::Api(other),
        }
    }
}

/// Sort key putting every directory's contents right after it.
fn depth_first_key(path: &str) -> Vec<&str> {
    path.trim_end_matches('/').split('/').collect()
}

/// Deduplicate and order tree entries depth-first.
pub fn sort_tree(mut tree: Vec<String>) -> Vec<String> {
    tree.sort_by(|a, b| depth_first_key(a).cmp(&depth_first_key(b)).then(a.cmp(b)));
    tree.dedup();
    tree
}

/// Most common language among file extensions. Ties go to the
/// alphabetically first name.
pub fn majority_language<'a, I: IntoIterator<Item = &'a str>>(paths: I) -> Option<Language> {
    let mut counts: HashMap<Language, usize> = HashMap::new();
    for path in paths {
        if path.ends_with('/') {
            continue;
        }
        let file = path.rsplit('/').next().unwrap_or(path);
        let Some((stem, ext)) = file.rsplit_once('.') else { continue };
        if stem.is_empty() {
            continue;
        }
        if let Some(lang) = Language::from_extension(ext) {
            *counts.entry(lang).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|(la, a), (lb, b)| a.cmp(b).then_with(|| lb.name().cmp(la.name())))
        .map(|(lang, _)| lang)
}

fn read_head(root: &Path) -> Option<String> {
    let git = root.join(".git");
    let git_dir = if git.is_file() {
        let text = std::fs::read_to_string(&git).ok()?;
        let target = text.trim().strip_prefix("gitdir:")?.trim().to_string();
        root.join(target)
    } else {
        git
    };
    let head = std::fs::read_to_string(git_dir.join("HEAD")).ok()?;
    let branch = head.trim().strip_prefix("ref: refs/heads/")?.trim();
    (!branch.is_empty()).then(|| branch.to_string())
}

/// Context of a local directory. Skips `.git/`, honors `.gitignore` files,
/// reads the branch from `.git/HEAD` (falling back to `main`).
pub fn scan_local(path: &Path) -> Result<RepoContext, ContextError> {
    let label = path.display().to_string();
    let meta = std::fs::metadata(path).map_err(|source| ContextError::Io {
        path: label.clone(),
        source,
    })?;
    if !meta.is_dir() {
        return Err(ContextError::NotADirectory(label));
    }

    let walker = ignore::WalkBuilder::new(path)
        .hidden(false)
        .parents(false)
        .require_git(false)
        .git_global(false)
        .git_exclude(false)
        .ignore(false)
        .filter_entry(|e| e.file_name() != ".git")
        .build();
    let mut tree = Vec::new();
    for entry in walker {
        let entry = entry.map_err(|e| ContextError::Io {
            path: label.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
        let Ok(rel) = entry.path().strip_prefix(path) else { continue };
        if rel.as_os_str().is_empty() {
            continue;
        }
        let mut rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        if entry.file_type().is_some_and(|t| t.is_dir()) {
            rel.push('/');
        }
        tree.push(rel);
    }
    let file_tree = sort_tree(tree);
    let name = std::fs::canonicalize(path)
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or(label);
    Ok(RepoContext {
        full_name: name,
        default_branch: read_head(path).unwrap_or_else(|| "main".to_string()),
        primary_language: majority_language(file_tree.iter().map(String::as_str)),
        file_tree,
        star_count: None,
    })
}

fn tree_paths(entries: &[TreeEntry], prefix: &str) -> Vec<String> {
    entries
        .iter()
        .map(|e| match e.kind {
            EntryKind::Tree => format!("{prefix}{}/", e.path),
            EntryKind::Blob => format!("{prefix}{}", e.path),
        })
        .collect()
}

/// Context of a GitHub repository from read-only endpoints. A truncated
/// recursive listing is reported as [`ContextError::Truncated`].
pub fn fetch_remote(owner_repo: &str, api: &dyn GitHubApi) -> Result<RepoContext, ContextError> {
    let info = api.get_repo(owner_repo)?;
    let sha = api.get_branch_sha(owner_repo, &info.default_branch)?;
    let listing = api.get_tree(owner_repo, &sha, true)?;
    let file_tree = sort_tree(tree_paths(&listing.entries, ""));
    let primary_language = match &info.language {
        Some(name) => Some(name.parse().expect("infallible")),
        None => majority_language(file_tree.iter().map(String::as_str)),
    };
    let ctx = RepoContext {
        full_name: info.full_name,
        default_branch: info.default_branch,
        file_tree,
        primary_language,
        star_count: Some(info.stargazers_count),
    };
    if listing.truncated {
        return Err(ContextError::Truncated(Box::new(ctx)));
    }
    Ok(ctx)
}

/// [`fetch_remote`], degrading to a two-level listing (root entries plus the
/// direct children of each top-level directory) when the recursive tree is
/// truncated.
pub fn fetch_remote_or_shallow(owner_repo: &str, api: &dyn GitHubApi) -> Result<RepoContext, ContextError> {
    match fetch_remote(owner_repo, api) {
        Err(ContextError::Truncated(partial)) => {
            log::warn!("{owner_repo}: recursive tree truncated, listing two levels");
            let mut ctx = *partial;
            let sha = api.get_branch_sha(owner_repo, &ctx.default_branch)?;
            let root = api.get_tree(owner_repo, &sha, false)?;
            let mut tree = tree_paths(&root.entries, "");
            for dir in root.entries.iter().filter(|e| e.kind == EntryKind::Tree) {
                let sub = api.get_tree(owner_repo, &dir.sha, false)?;
                tree.extend(tree_paths(&sub.entries, &format!("{}/", dir.path)));
            }
            ctx.file_tree = sort_tree(tree);
            Ok(ctx)
        }
        other => other,
    }
}

struct Node {
    path: String,
    is_dir: bool,
    children: Vec<usize>,
}

/// File tree limited to `cap` lines for a prompt.
///
/// Entries are admitted breadth-first by depth, directories before files
/// within a directory. Every directory (including the root) with admitted
/// but incomplete contents gets one `dir/…` marker line, and markers count
/// toward the cap. The result keeps depth-first order.
pub fn prompt_tree(file_tree: &[String], cap: usize) -> Vec<String> {
    // Node 0 is the root; missing parent directories are synthesized.
    let mut nodes = vec![Node {
        path: String::new(),
        is_dir: true,
        children: Vec::new(),
    }];
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for entry in file_tree {
        let is_dir = entry.ends_with('/');
        let parts: Vec<&str> = entry.trim_end_matches('/').split('/').collect();
        let mut parent = 0;
        for i in 0..parts.len() {
            let path = parts[..=i].join("/");
            let dir_here = i + 1 < parts.len() || is_dir;
            parent = match index.get(&path) {
                Some(&id) => {
                    nodes[id].is_dir |= dir_here;
                    id
                }
                None => {
                    let id = nodes.len();
                    nodes.push(Node {
                        path: path.clone(),
                        is_dir: dir_here,
                        children: Vec::new(),
                    });
                    nodes[parent].children.push(id);
                    index.insert(path, id);
                    id
                }
            };
        }
    }

    let mut parent_of = vec![usize::MAX; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut queue = VecDeque::from([0usize]);
    while let Some(dir) = queue.pop_front() {
        let mut kids = nodes[dir].children.clone();
        kids.sort_by(|&a, &b| nodes[b].is_dir.cmp(&nodes[a].is_dir).then(nodes[a].path.cmp(&nodes[b].path)));
        for kid in kids {
            parent_of[kid] = dir;
            order.push(kid);
            if nodes[kid].is_dir {
                queue.push_back(kid);
            }
        }
    }

    let included_upto = |k: usize| {
        let mut included = vec![false; nodes.len()];
        included[0] = true;
        for &id in &order[..k] {
            included[id] = true;
        }
        included
    };
    let markers = |included: &[bool]| {
        (0..nodes.len())
            .filter(|&d| included[d] && nodes[d].is_dir && nodes[d].children.iter().any(|&c| !included[c]))
            .count()
    };
    // k + markers(k) never decreases as k grows, so binary search the
    // largest admissible prefix.
    let cost = |k: usize| k + markers(&included_upto(k));
    let (mut lo, mut hi) = (0usize, order.len());
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if cost(mid) <= cap {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let included = included_upto(lo);

    fn render(nodes: &[Node], included: &[bool], id: usize, out: &mut Vec<String>) {
        let mut kids = nodes[id].children.clone();
        kids.sort_by(|&a, &b| nodes[a].path.cmp(&nodes[b].path));
        let mut elided = false;
        for kid in kids {
            if !included[kid] {
                elided = true;
                continue;
            }
            let node = &nodes[kid];
            out.push(if node.is_dir { format!("{}/", node.path) } else { node.path.clone() });
            if node.is_dir {
                render(nodes, included, kid, out);
            }
        }
        if elided {
            out.push(if id == 0 {
                ELIDED.to_string()
            } else {
                format!("{}/{ELIDED}", nodes[id].path)
            });
        }
    }
    let mut out = Vec::new();
    render(&nodes, &included, 0, &mut out);
    out
}
