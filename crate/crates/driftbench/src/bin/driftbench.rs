//! Command-line entry point. Each subcommand runs one pipeline stage and
//! composes with the others through files; every output directory gets a
//! manifest describing the run.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 remote failure.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use driftbench::config::{load_config, RunConfig};
use driftbench::harness::{run_stream, PersonaMode, StepRecord};
use driftbench::index::{
    base_cluster_with, load_index, sample_coverage, save_index, update_blacklist, write_trending,
    ClusterIndex, HashingEmbedder, TrendingTable,
};
use driftbench::ingest::{
    detect_pi_spans, load_user_meta, load_user_stream, safety_net_scan, PatternDetector,
    Redactable,
};
use driftbench::metrics::{aggregate, tradeoff_decompose, StepScore};
use driftbench::model::{Post, StreamBatch, UserMeta};
use driftbench::pipeline::{attach_anchors, build_registry, filter_posts, score_records, BenchUser};
use driftbench::report::{
    config_digest, emit_recall_plane_plot, emit_report, emit_tradeoff_plot, write_manifest,
    NamedReport, RunManifest,
};
use driftbench::synth::{generate_stream, OracleAgent, OracleKind};
use driftbench::task::{build_user_tasks, StepTask};

#[derive(Parser)]
#[command(name = "driftbench", version, about = "Streaming interest-drift benchmark toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentKind {
    Perfect,
    CopyHistory,
    Random,
    Popularity,
    /// A chat-completions endpoint; requires the `remote` build feature and
    /// the DRIFTBENCH_API_KEY environment variable.
    Remote,
}

impl AgentKind {
    fn oracle(self) -> Option<OracleKind> {
        match self {
            AgentKind::Perfect => Some(OracleKind::Perfect),
            AgentKind::CopyHistory => Some(OracleKind::CopyHistory),
            AgentKind::Random => Some(OracleKind::Random),
            AgentKind::Popularity => Some(OracleKind::Popularity),
            AgentKind::Remote => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus (users.jsonl, posts.jsonl).
    Synth(Common),
    /// Load, validate, and anonymize raw users.jsonl/posts.jsonl.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        posts: PathBuf,
    },
    /// Attach anchors and apply the per-user-day coarse filter.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Directory holding posts.jsonl (from ingest or synth).
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Slice each user's curated stream into count-triggered batches.
    Buffer {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Build the tag registry, cluster index, and trending table.
    Index {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Assemble per-step candidate-pool tasks from batches and the index.
    BuildTasks {
        #[command(flatten)]
        common: Common,
        /// Directory holding batches.jsonl.
        #[arg(long)]
        batches: PathBuf,
        /// Directory holding index.json and trending.tsv.
        #[arg(long)]
        index: PathBuf,
    },
    /// Run an agent over the tasks, writing a transcript.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, value_enum)]
        agent: AgentKind,
        /// Carry the persona between steps.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        persona: bool,
        /// Chat-completions endpoint URL (remote agent only).
        #[arg(long)]
        endpoint: Option<String>,
        /// Model name (remote agent only).
        #[arg(long)]
        model: Option<String>,
    },
    /// Score a transcript against its tasks.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        transcripts: PathBuf,
    },
    /// Emit delimited tables and plots from one or more score files.
    Report {
        #[command(flatten)]
        common: Common,
        /// score.json files, one column each, as name=path.
        #[arg(long, required = true)]
        scores: Vec<String>,
    },
    /// Anonymize a corpus without the rest of the pipeline.
    Anonymize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        posts: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Remote(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Remote(m) => write!(f, "{m}"),
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version output through the error
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(1),
                CliError::Data(_) => ExitCode::from(2),
                CliError::Remote(_) => ExitCode::from(3),
            }
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    digest: String,
    seed: u64,
    out: PathBuf,
    started: Instant,
}

fn ctx(common: &Common) -> Result<Ctx, CliError> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let serialized = toml::to_string(&cfg).map_err(usage)?;
    Ok(Ctx {
        digest: config_digest(&serialized),
        seed: cfg.seed,
        out: common.out.clone(),
        cfg,
        started: Instant::now(),
    })
}

fn finish(ctx: &Ctx, command: &str, mode: &str, inputs: &[&Path], outputs: &[PathBuf]) -> Result<(), CliError> {
    let mut manifest = RunManifest::new(command, ctx.digest.clone(), ctx.seed, mode);
    manifest.inputs = inputs.iter().map(|p| p.display().to_string()).collect();
    manifest.outputs = outputs
        .iter()
        .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    manifest.wall_clock_ms = ctx.started.elapsed().as_millis();
    write_manifest(&ctx.out, &manifest).map_err(data)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp).map_err(data)?;
        for item in items {
            serde_json::to_writer(&mut file, &item).map_err(data)?;
            file.write_all(b"\n").map_err(data)?;
        }
    }
    fs::rename(&tmp, path).map_err(data)?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| data(format!("read {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn anonymize_corpus(
    users: &mut [UserMeta],
    posts: &mut [Post],
) -> Result<usize, CliError> {
    let detector = PatternDetector;
    let mut redacted = 0;
    for user in users.iter_mut() {
        let spans: Vec<_> = user
            .text_fields()
            .iter()
            .flat_map(|f| detect_pi_spans(f, &detector).0)
            .collect();
        if !spans.is_empty() {
            user.redact_fields(&spans);
            redacted += 1;
        }
        let violations = safety_net_scan(user);
        if !violations.is_empty() {
            return Err(data(format!(
                "user {} still leaks {} identifier(s) after redaction",
                user.user_id,
                violations.len()
            )));
        }
    }
    for post in posts.iter_mut() {
        let spans: Vec<_> = post
            .text_fields()
            .iter()
            .flat_map(|f| detect_pi_spans(f, &detector).0)
            .collect();
        if !spans.is_empty() {
            post.redact_fields(&spans);
            redacted += 1;
        }
        let violations = safety_net_scan(post);
        if !violations.is_empty() {
            return Err(data(format!(
                "post {} still leaks {} identifier(s) after redaction",
                post.post_id,
                violations.len()
            )));
        }
    }
    Ok(redacted)
}

fn load_corpus_dir(dir: &Path) -> Result<(Vec<UserMeta>, BTreeMap<String, Vec<Post>>), CliError> {
    let (users, user_errors) = load_user_meta(&dir.join("users.jsonl")).map_err(data)?;
    let (by_user, post_errors) = load_user_stream(&dir.join("posts.jsonl")).map_err(data)?;
    if !user_errors.is_empty() || !post_errors.is_empty() {
        let first = user_errors.iter().chain(&post_errors).next().unwrap();
        return Err(data(format!(
            "{} malformed line(s), first at line {}: {}",
            user_errors.len() + post_errors.len(),
            first.line,
            first.message
        )));
    }
    Ok((users, by_user))
}

fn run_ingest(
    common: Common,
    users: PathBuf,
    posts: PathBuf,
    command_name: &str,
) -> Result<(), CliError> {
    let ctx = ctx(&common)?;
    let (mut metas, errors) = load_user_meta(&users).map_err(data)?;
    let (by_user, post_errors) = load_user_stream(&posts).map_err(data)?;
    if !errors.is_empty() || !post_errors.is_empty() {
        eprintln!("warning: skipped {} malformed line(s)", errors.len() + post_errors.len());
    }
    let mut flat: Vec<Post> = by_user.into_values().flatten().collect();
    flat.sort_by(|a, b| {
        a.user_id
            .cmp(&b.user_id)
            .then(a.timestamp.cmp(&b.timestamp))
            .then(a.post_id.cmp(&b.post_id))
    });
    let redacted = anonymize_corpus(&mut metas, &mut flat)?;
    fs::create_dir_all(&ctx.out).map_err(data)?;
    let users_path = ctx.out.join("users.jsonl");
    let posts_path = ctx.out.join("posts.jsonl");
    write_jsonl(&users_path, metas.iter())?;
    write_jsonl(&posts_path, flat.iter())?;
    println!("anonymized {} record(s)", redacted);
    finish(
        &ctx,
        command_name,
        "offline",
        &[users.as_path(), posts.as_path()],
        &[users_path, posts_path],
    )
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(common) => {
            let ctx = ctx(&common)?;
            let mut synth_cfg = ctx.cfg.synth.clone();
            synth_cfg.seed = ctx.seed;
            let users = generate_stream(&synth_cfg).map_err(usage)?;
            fs::create_dir_all(&ctx.out).map_err(data)?;
            let users_path = ctx.out.join("users.jsonl");
            let posts_path = ctx.out.join("posts.jsonl");
            write_jsonl(&users_path, users.iter().map(|u| &u.meta))?;
            write_jsonl(&posts_path, users.iter().flat_map(|u| u.posts.iter()))?;
            finish(&ctx, "synth", "offline", &[], &[users_path, posts_path])
        }
        Command::Ingest { common, users, posts } => run_ingest(common, users, posts, "ingest"),
        Command::Anonymize { common, users, posts } => {
            run_ingest(common, users, posts, "anonymize")
        }
        Command::Filter { common, input } => {
            let ctx = ctx(&common)?;
            let (metas, by_user) = load_corpus_dir(&input)?;
            let profile = &ctx.cfg.platform;

            // first pass attaches anchors so trending and the blacklist can
            // be computed from the raw anchor stream
            let mut all: Vec<Post> = by_user.values().flatten().cloned().collect();
            attach_anchors(&mut all, profile, &HashSet::new());
            let date = all
                .first()
                .map(|p| p.timestamp.date_naive())
                .ok_or_else(|| data("empty corpus"))?;
            let trending = sample_coverage(date, &all);
            let mut blacklist = BTreeSet::new();
            if ctx.cfg.pipeline.blacklist && profile.blacklist_enabled {
                update_blacklist(&mut blacklist, &trending, driftbench::index::BLACKLIST_TAU);
            }
            let blacklist_set: HashSet<String> = blacklist.iter().cloned().collect();

            let mut kept_users = Vec::new();
            let mut kept_posts: Vec<Post> = Vec::new();
            for meta in metas {
                let Some(posts) = by_user.get(&meta.user_id) else { continue };
                let mut posts = posts.clone();
                attach_anchors(&mut posts, profile, &blacklist_set);
                let survivors = if ctx.cfg.pipeline.coarse_filter {
                    filter_posts(&posts, profile, &ctx.cfg.curation)
                } else {
                    posts
                };
                if !survivors.is_empty() {
                    kept_users.push(meta);
                    kept_posts.extend(survivors);
                }
            }
            fs::create_dir_all(&ctx.out).map_err(data)?;
            let users_path = ctx.out.join("users.jsonl");
            let posts_path = ctx.out.join("posts.jsonl");
            let blacklist_path = ctx.out.join("blacklist.json");
            write_jsonl(&users_path, kept_users.iter())?;
            write_jsonl(&posts_path, kept_posts.iter())?;
            fs::write(&blacklist_path, serde_json::to_string_pretty(&blacklist).map_err(data)?)
                .map_err(data)?;
            finish(&ctx, "filter", "offline", &[input.as_path()], &[users_path, posts_path, blacklist_path])
        }
        Command::Buffer { common, input } => {
            let ctx = ctx(&common)?;
            let (metas, by_user) = load_corpus_dir(&input)?;
            let re_audit = driftbench::buffer::ReAudit { enabled: ctx.cfg.pipeline.re_audit };
            let mut batches: Vec<StreamBatch> = Vec::new();
            for meta in &metas {
                if let Some(posts) = by_user.get(&meta.user_id) {
                    batches.extend(driftbench::buffer::batch_stream(
                        &meta.user_id,
                        posts,
                        &ctx.cfg.platform,
                        re_audit,
                    ));
                }
            }
            fs::create_dir_all(&ctx.out).map_err(data)?;
            let batches_path = ctx.out.join("batches.jsonl");
            write_jsonl(&batches_path, batches.iter())?;
            finish(&ctx, "buffer", "offline", &[input.as_path()], &[batches_path])
        }
        Command::Index { common, input } => {
            let ctx = ctx(&common)?;
            let (_, by_user) = load_corpus_dir(&input)?;
            let all: Vec<&Post> = by_user.values().flatten().collect();
            let registry = build_registry(all.iter().copied());
            let embedder = HashingEmbedder::new(ctx.seed);
            let index = base_cluster_with(
                &registry,
                &embedder,
                &ctx.cfg.platform,
                ctx.seed,
                &ctx.cfg.pipeline.kmeans(),
            );
            let date = all
                .first()
                .map(|p| p.timestamp.date_naive())
                .ok_or_else(|| data("empty corpus"))?;
            let owned: Vec<Post> = all.iter().map(|p| (*p).clone()).collect();
            let trending = sample_coverage(date, &owned);
            fs::create_dir_all(&ctx.out).map_err(data)?;
            let index_path = ctx.out.join("index.json");
            save_index(&index_path, &index).map_err(data)?;
            let trending_path = write_trending(&ctx.out, &trending).map_err(data)?;
            let pool: Vec<&String> = registry.keys().collect();
            let pool_path = ctx.out.join("pool.json");
            fs::write(&pool_path, serde_json::to_string_pretty(&pool).map_err(data)?)
                .map_err(data)?;
            finish(&ctx, "index", "offline", &[input.as_path()], &[index_path, trending_path, pool_path])
        }
        Command::BuildTasks { common, batches, index } => {
            let ctx = ctx(&common)?;
            let all_batches: Vec<StreamBatch> = read_jsonl(&batches.join("batches.jsonl"))?;
            let cluster_index: ClusterIndex =
                load_index(&index.join("index.json")).map_err(data)?;
            let pool: Vec<String> = serde_json::from_str(
                &fs::read_to_string(index.join("pool.json")).map_err(data)?,
            )
            .map_err(data)?;
            let trending = read_trending_dir(&index)?;
            let mut by_user: BTreeMap<String, Vec<StreamBatch>> = BTreeMap::new();
            for batch in all_batches {
                by_user.entry(batch.user_id.clone()).or_default().push(batch);
            }
            let mut tasks: Vec<StepTask> = Vec::new();
            for (_, mut user_batches) in by_user {
                user_batches.sort_by_key(|b| b.step_index);
                tasks.extend(
                    build_user_tasks(
                        &user_batches,
                        &cluster_index,
                        trending.as_ref(),
                        &pool,
                        ctx.seed,
                        ctx.cfg.pipeline.max_positives,
                    )
                    .map_err(data)?,
                );
            }
            fs::create_dir_all(&ctx.out).map_err(data)?;
            let tasks_path = ctx.out.join("tasks.jsonl");
            write_jsonl(&tasks_path, tasks.iter())?;
            finish(&ctx, "build-tasks", "offline", &[batches.as_path(), index.as_path()], &[tasks_path])
        }
        Command::Evaluate { common, tasks, agent, persona, endpoint, model } => {
            let ctx = ctx(&common)?;
            let all_tasks: Vec<StepTask> = read_jsonl(&tasks.join("tasks.jsonl"))?;
            let trending = read_trending_dir(&tasks).ok().flatten();
            let mode = if persona { PersonaMode::Full } else { PersonaMode::None };
            let mut by_user: BTreeMap<String, Vec<StepTask>> = BTreeMap::new();
            for task in all_tasks {
                by_user.entry(task.user_id.clone()).or_default().push(task);
            }
            for user_tasks in by_user.values_mut() {
                user_tasks.sort_by_key(|t| t.step_index);
            }
            let (records, run_mode) = match agent.oracle() {
                Some(kind) => {
                    let mut records: Vec<StepRecord> = Vec::new();
                    for user_tasks in by_user.values() {
                        let mut oracle =
                            OracleAgent::new(kind, ctx.seed).with_answer_keys(user_tasks);
                        oracle.trending = trending.clone();
                        let mut user_records = run_stream(user_tasks, &mut oracle, mode);
                        // latency is wall-clock noise; zero it so identical
                        // runs produce identical transcripts
                        for r in &mut user_records {
                            r.latency_ms = 0;
                        }
                        records.extend(user_records);
                    }
                    (records, "oracle")
                }
                None => (evaluate_remote(&ctx, &by_user, mode, endpoint, model)?, "remote"),
            };
            fs::create_dir_all(&ctx.out).map_err(data)?;
            let transcript_path = ctx.out.join("transcripts.jsonl");
            write_jsonl(&transcript_path, records.iter())?;
            finish(&ctx, "evaluate", run_mode, &[tasks.as_path()], &[transcript_path])
        }
        Command::Score { common, tasks, transcripts } => {
            let ctx = ctx(&common)?;
            let all_tasks: Vec<StepTask> = read_jsonl(&tasks.join("tasks.jsonl"))?;
            let all_records: Vec<StepRecord> = read_jsonl(&transcripts.join("transcripts.jsonl"))?;
            let mut tasks_by_user: BTreeMap<String, Vec<StepTask>> = BTreeMap::new();
            for task in all_tasks {
                tasks_by_user.entry(task.user_id.clone()).or_default().push(task);
            }
            let mut records_by_user: BTreeMap<String, Vec<StepRecord>> = BTreeMap::new();
            for record in all_records {
                records_by_user.entry(record.user_id.clone()).or_default().push(record);
            }
            let users: Vec<BenchUser> = tasks_by_user
                .into_iter()
                .map(|(user_id, mut user_tasks)| {
                    user_tasks.sort_by_key(|t| t.step_index);
                    BenchUser {
                        meta: UserMeta {
                            user_id,
                            username: String::new(),
                            bio: String::new(),
                            gender: None,
                            location: None,
                            followers_count: 0,
                            following_count: 0,
                            posts_count: 0,
                            verified_type: None,
                        },
                        batches: Vec::new(),
                        tasks: user_tasks,
                    }
                })
                .collect();
            let record_lists: Vec<Vec<StepRecord>> = users
                .iter()
                .map(|u| records_by_user.remove(&u.meta.user_id).unwrap_or_default())
                .collect();
            let scores: Vec<Vec<StepScore>> = score_records(&users, &record_lists);
            let report = aggregate(&scores);
            fs::create_dir_all(&ctx.out).map_err(data)?;
            let score_path = ctx.out.join("score.json");
            #[derive(Serialize)]
            struct ScoreFile<'a> {
                aggregate: &'a driftbench::metrics::AggregateReport,
                per_user: &'a [Vec<StepScore>],
            }
            fs::write(
                &score_path,
                serde_json::to_string_pretty(&ScoreFile { aggregate: &report, per_user: &scores })
                    .map_err(data)?,
            )
            .map_err(data)?;
            finish(&ctx, "score", "offline", &[tasks.as_path(), transcripts.as_path()], &[score_path])
        }
        Command::Report { common, scores } => {
            let ctx = ctx(&common)?;
            let mut columns = Vec::new();
            let mut points = Vec::new();
            let mut inputs = Vec::new();
            for entry in &scores {
                let (name, path) = entry
                    .split_once('=')
                    .ok_or_else(|| usage(format!("--scores expects name=path, got {entry:?}")))?;
                let path = PathBuf::from(path);
                let text = fs::read_to_string(&path)
                    .map_err(|e| data(format!("read {}: {e}", path.display())))?;
                let value: serde_json::Value = serde_json::from_str(&text).map_err(data)?;
                let report: driftbench::metrics::AggregateReport =
                    serde_json::from_value(value["aggregate"].clone()).map_err(data)?;
                let per_user: Vec<Vec<StepScore>> =
                    serde_json::from_value(value["per_user"].clone()).map_err(data)?;
                if let Some(point) = mean_tradeoff(&per_user) {
                    points.push((name.to_string(), point));
                }
                columns.push(NamedReport { name: name.to_string(), report });
                inputs.push(path);
            }
            if columns.is_empty() {
                return Err(usage("at least one --scores name=path is required"));
            }
            fs::create_dir_all(&ctx.out).map_err(data)?;
            let mut outputs = emit_report(&ctx.out, &columns).map_err(data)?;
            outputs.push(emit_tradeoff_plot(&ctx.out, &points).map_err(data)?);
            let alpha = ctx.cfg.alpha_ratio().map_err(usage)?;
            let alpha_f = *alpha.numer() as f64 / *alpha.denom() as f64;
            let b = columns
                .iter()
                .filter_map(|c| c.report.r)
                .fold(0.0_f64, f64::max)
                .max(0.5);
            outputs.push(
                emit_recall_plane_plot(&ctx.out, alpha_f, b, &ctx.cfg.report.f1_levels)
                    .map_err(data)?,
            );
            let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
            finish(&ctx, "report", "offline", &input_refs, &outputs)
        }
    }
}

/// Run a chat-completions agent over the grouped tasks. Aborts without
/// writing anything when every call fails, so an unreachable endpoint
/// leaves no partial transcript behind.
#[cfg(feature = "remote")]
fn evaluate_remote(
    ctx: &Ctx,
    by_user: &BTreeMap<String, Vec<StepTask>>,
    mode: PersonaMode,
    endpoint: Option<String>,
    model: Option<String>,
) -> Result<Vec<StepRecord>, CliError> {
    use driftbench::harness::{ChatAgent, HttpChatClient, ModelClientConfig, PlatformContext};

    let api_key = std::env::var("DRIFTBENCH_API_KEY")
        .map_err(|_| usage("set DRIFTBENCH_API_KEY for remote evaluation"))?;
    let client = HttpChatClient { api_key };
    let mut client_cfg = ModelClientConfig::default();
    if let Some(e) = endpoint {
        client_cfg.endpoint = e;
    }
    if let Some(m) = model {
        client_cfg.model = m;
    }
    let platform_ctx = PlatformContext::builtin(&ctx.cfg.platform.platform_id)
        .ok_or_else(|| usage(format!("no built-in context for platform {}", ctx.cfg.platform.platform_id)))?;
    let mut records = Vec::new();
    let mut failures = 0usize;
    for (user_id, user_tasks) in by_user {
        let mut agent = ChatAgent {
            client: &client,
            cfg: client_cfg.clone(),
            ctx: platform_ctx.clone(),
            user: UserMeta {
                user_id: user_id.clone(),
                username: String::new(),
                bio: String::new(),
                gender: None,
                location: None,
                followers_count: 0,
                following_count: 0,
                posts_count: 0,
                verified_type: None,
            },
        };
        let user_records = run_stream(user_tasks, &mut agent, mode);
        failures += user_records.iter().filter(|r| r.failure.is_some()).count();
        records.extend(user_records);
    }
    if !records.is_empty() && failures == records.len() {
        return Err(CliError::Remote(format!(
            "all {} model calls failed; check the endpoint and credentials",
            records.len()
        )));
    }
    Ok(records)
}

#[cfg(not(feature = "remote"))]
fn evaluate_remote(
    _ctx: &Ctx,
    _by_user: &BTreeMap<String, Vec<StepTask>>,
    _mode: PersonaMode,
    _endpoint: Option<String>,
    _model: Option<String>,
) -> Result<Vec<StepRecord>, CliError> {
    Err(usage("this binary was built without the `remote` feature"))
}

/// Mean trade-off point of a scored run: average budget, ratio of mean
/// recalls.
fn mean_tradeoff(per_user: &[Vec<StepScore>]) -> Option<driftbench::metrics::TradeoffPoint> {
    let steps: Vec<&StepScore> = per_user.iter().flatten().collect();
    let first = steps.first()?;
    let points: Vec<_> = steps.iter().map(|s| tradeoff_decompose(s)).collect();
    let mut b_sum = num_rational::Ratio::new(0, 1);
    for p in &points {
        b_sum += p.b;
    }
    let b = b_sum / num_rational::Ratio::new(points.len() as i64, 1);
    let stab: Vec<f64> = steps
        .iter()
        .filter_map(|s| s.r_stab.map(|r| *r.numer() as f64 / *r.denom() as f64))
        .collect();
    let nov: Vec<f64> = steps
        .iter()
        .filter_map(|s| s.r_nov.map(|r| *r.numer() as f64 / *r.denom() as f64))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (ms, mn) = (mean(&stab), mean(&nov));
    let rho = if stab.is_empty() || nov.is_empty() {
        None
    } else if ms == 0.0 && mn == 0.0 {
        None
    } else if ms == 0.0 {
        Some(driftbench::metrics::Rho::Infinite)
    } else {
        let scale = 1_000_000i64;
        Some(driftbench::metrics::Rho::Finite(num_rational::Ratio::new(
            (mn / ms * scale as f64).round() as i64,
            scale,
        )))
    };
    Some(driftbench::metrics::TradeoffPoint { b, rho, alpha: first.alpha })
}

/// Find the single trending TSV in a directory, if present.
fn read_trending_dir(dir: &Path) -> Result<Option<TrendingTable>, CliError> {
    let Ok(entries) = fs::read_dir(dir) else { return Ok(None) };
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(date_part) = name.strip_prefix("trending-").and_then(|s| s.strip_suffix(".tsv"))
        {
            let date = date_part
                .parse()
                .map_err(|e| data(format!("bad trending file name {name}: {e}")))?;
            let text = fs::read_to_string(entry.path()).map_err(data)?;
            let mut table = TrendingTable { date, entries: Vec::new() };
            for line in text.lines() {
                if let Some((tag, cov)) = line.split_once('\t') {
                    table
                        .entries
                        .push((tag.to_string(), cov.parse().map_err(data)?));
                }
            }
            return Ok(Some(table));
        }
    }
    Ok(None)
}
