use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use wfgen_core::context::{fetch_remote_or_shallow, scan_local, RepoContext};
use wfgen_core::github::{GitHubApi, HttpGitHub};
use wfgen_core::harness::{
    curate_with_failures, read_candidates, read_jsonl, run_experiment, write_jsonl, write_results, DirectorySource,
    EvalRecord, GitHubSource,
};
use wfgen_core::llm::{complete, Backend, GenerationParams, HttpBackend, ReplayBackend, DEFAULT_MODEL};
use wfgen_core::prompt::{build_generation_prompt, extract_workflow_text};
use wfgen_core::{parse_workflow, score_texts, CommandLexicon, ScoreOptions, Validator};

const EXIT_OK: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID_GENERATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "wfgen", version, about = "Generate, validate and score GitHub Actions build/test workflows")]
struct Cli {
    /// Only machine output on stdout; no log messages.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a workflow for a local checkout or an `owner/name` repository.
    Generate {
        #[arg(long)]
        repo: String,
        /// Extra instructions passed to the model verbatim.
        #[arg(long)]
        request: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// `live` or `replay:DIR`.
        #[arg(long, default_value = "live")]
        backend: String,
        #[arg(long, default_value = DEFAULT_MODEL)]
        model: String,
    },
    /// Check a workflow file; exit 1 when it has errors.
    Validate { file: PathBuf },
    /// Score a generated workflow against a ground truth, as JSON.
    Score {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// A different `@ref` on the same action scores 0 instead of 0.5.
        #[arg(long)]
        strict_uses: bool,
        /// File-level exact match on raw text instead of canonical form.
        #[arg(long)]
        raw_em: bool,
    },
    /// Build an evaluation corpus from a candidate CSV export.
    Curate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "per-lang", default_value_t = 100)]
        per_lang: usize,
        #[arg(long)]
        out: PathBuf,
        /// Read repositories from `DIR/<owner>/<name>` instead of the GitHub API.
        #[arg(long)]
        repos: Option<PathBuf>,
    },
    /// Generate and score workflows for every corpus record.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// `live` or `replay:DIR`.
        #[arg(long, default_value = "live")]
        backend: String,
        #[arg(long, default_value_t = 3)]
        runs: u64,
        #[arg(long, default_value = DEFAULT_MODEL)]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the webhook service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
    },
}

struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_FAILURE, e.to_string())
    }
}

fn backend(spec: &str) -> Result<Box<dyn Backend>, Failure> {
    match spec.split_once(':') {
        None if spec == "live" => Ok(Box::new(HttpBackend::from_env())),
        Some(("replay", dir)) if !dir.is_empty() => {
            if !Path::new(dir).is_dir() {
                return Err(Failure(EXIT_FAILURE, format!("replay store {dir} is not a directory")));
            }
            Ok(Box::new(ReplayBackend::new(dir)))
        }
        _ => Err(Failure(EXIT_USAGE, format!("--backend must be `live` or `replay:DIR`, got `{spec}`"))),
    }
}

fn repo_context(repo: &str) -> Result<RepoContext, Failure> {
    let path = Path::new(repo);
    if path.exists() {
        return Ok(scan_local(path)?);
    }
    let is_remote = repo.split('/').count() == 2 && !repo.starts_with('/') && !repo.contains("..");
    if !is_remote {
        return Err(Failure(EXIT_FAILURE, format!("{repo}: no such directory")));
    }
    let github = HttpGitHub::from_env();
    Ok(fetch_remote_or_shallow(repo, &github)?)
}

fn print_stdout(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn generate(
    repo: &str,
    request: Option<&str>,
    out: Option<&Path>,
    backend_spec: &str,
    model: &str,
) -> Result<u8, Failure> {
    let ctx = repo_context(repo)?;
    let backend = backend(backend_spec)?;
    let bundle = build_generation_prompt(&ctx, request);
    let exchange = complete(&bundle, &GenerationParams::bot(model), backend.as_ref())?;
    let text = match extract_workflow_text(&exchange.response) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{e}");
            return Ok(EXIT_INVALID_GENERATION);
        }
    };
    let diagnostics = Validator::default().validate(&parse_workflow(&text));
    for d in &diagnostics {
        eprintln!("{d}");
    }
    if diagnostics.iter().any(|d| d.is_error()) {
        return Ok(EXIT_INVALID_GENERATION);
    }
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, &text)?;
            log::info!("wrote {}", path.display());
        }
        None => print_stdout(&text)?,
    }
    Ok(EXIT_OK)
}

fn validate(file: &Path, quiet: bool) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let diagnostics = Validator::default().validate(&parse_workflow(&text));
    let invalid = diagnostics.iter().any(|d| d.is_error());
    for d in diagnostics.iter().filter(|d| d.is_error() || !quiet) {
        eprintln!("{}: {d}", file.display());
    }
    Ok(if invalid { EXIT_FAILURE } else { EXIT_OK })
}

fn score(generated: &Path, truth: &Path, opts: ScoreOptions) -> Result<u8, Failure> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()));
    let report = score_texts(&read(generated)?, &read(truth)?, &CommandLexicon::builtin(), &opts)?;
    print_stdout(&format!("{}\n", serde_json::to_string(&report)?))?;
    Ok(EXIT_OK)
}

fn curate(input: &Path, per_lang: usize, out: &Path, repos: Option<&Path>) -> Result<u8, Failure> {
    let candidates = read_candidates(input)?;
    let lexicon = CommandLexicon::builtin();
    let (records, failures) = match repos {
        Some(root) => {
            let source = DirectorySource { root: root.to_path_buf() };
            curate_with_failures(&candidates, &source, &lexicon, per_lang)
        }
        None => {
            let github = HttpGitHub::from_env();
            let api: &dyn GitHubApi = &github;
            curate_with_failures(&candidates, &GitHubSource { api }, &lexicon, per_lang)
        }
    };
    write_jsonl(out, &records)?;
    log::info!("{} records written to {}", records.len(), out.display());
    for (repo, why) in &failures {
        eprintln!("skipped {repo}: {why}");
    }
    Ok(if failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn eval(corpus: &Path, backend_spec: &str, runs: u64, model: &str, out: &Path) -> Result<u8, Failure> {
    if runs == 0 {
        return Err(Failure(EXIT_USAGE, "--runs must be at least 1".into()));
    }
    let records: Vec<EvalRecord> = read_jsonl(corpus)?;
    let backend = backend(backend_spec)?;
    let filled = run_experiment(&records, backend.as_ref(), runs, model, &CommandLexicon::builtin())?;
    let rows = write_results(out, &filled)?;
    for row in rows.iter().filter(|r| r.language.is_none()) {
        log::info!(
            "{}: devops_aware {:?}, bleu {:?}, em {:?}, valid {:.2}%",
            row.group(),
            row.devops_aware,
            row.bleu,
            row.em,
            row.syntax_valid_pct
        );
    }
    let failed: usize = filled
        .iter()
        .flat_map(|r| &r.runs)
        .filter(|run| run.generated_text.is_none())
        .count();
    if failed > 0 {
        eprintln!("{failed} runs failed at the model backend");
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn serve(host: &str, port: u16) -> Result<u8, Failure> {
    let addr: SocketAddr = format!("{host}:{port}").parse().map_err(|e| Failure(EXIT_USAGE, format!("{host}:{port}: {e}")))?;
    let config = wfgen_bot::BotConfig::from_env()?;
    let bot = Arc::new(wfgen_bot::Bot::new(
        Arc::new(HttpGitHub::from_env()),
        Arc::new(HttpBackend::from_env()),
        config,
    ));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(wfgen_bot::serve(bot, addr))?;
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Generate {
            repo,
            request,
            out,
            backend,
            model,
        } => generate(&repo, request.as_deref(), out.as_deref(), &backend, &model),
        Command::Validate { file } => validate(&file, cli.quiet),
        Command::Score {
            generated,
            truth,
            strict_uses,
            raw_em,
        } => score(
            &generated,
            &truth,
            ScoreOptions {
                strict_uses,
                raw_exact_match: raw_em,
            },
        ),
        Command::Curate {
            input,
            per_lang,
            out,
            repos,
        } => curate(&input, per_lang, &out, repos.as_deref()),
        Command::Eval {
            corpus,
            backend,
            runs,
            model,
            out,
        } => eval(&corpus, &backend, runs, &model, &out),
        Command::Serve { port, host } => serve(&host, port),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { log::LevelFilter::Off } else { log::LevelFilter::Info };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("WFGEN_LOG")
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
