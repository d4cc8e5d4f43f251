//! Drives an agent through the read-update-write loop: prompt rendering,
//! model invocation with retries, answer extraction, and the ablation modes.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::buffer::{batch_stream, ReAudit};
use crate::error::HarnessError;
use crate::model::{
    PersonaState, PlatformProfile, Post, Prediction, StreamBatch, UserMeta, COLD_START_PERSONA,
};
use crate::task::{AgentTaskView, StepTask};

/// Minimum observed steps for the long-context ablation.
pub const MIN_LONG_CONTEXT_STEPS: usize = 4;

/// System message used for every benchmark call.
pub const SYSTEM_MESSAGE: &str = "You are a user profiling system that maintains evolving user personas from streaming social-media data. Output valid JSON only.";

// ---------------------------------------------------------------------------
// Configuration

/// Platform-dependent strings injected into the prompt; nothing else in the
/// template varies across platforms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatformContext {
    pub name: String,
    pub description: String,
    pub tag_meaning: String,
    pub analysis_hint: String,
}

impl PlatformContext {
    /// Bundled context table, keyed by platform id.
    pub fn builtin(platform_id: &str) -> Option<PlatformContext> {
        let (name, description, tag_meaning, analysis_hint) = match platform_id {
            "WB" => (
                "Weibo",
                "A Chinese microblog platform; users engage with topics through posts, reposts and comments.",
                "A tag is a #hashtag# used when posting or reposting, reflecting the user's current focus (trends, celebrity fandom, daily-life topics).",
                "Distinguish long-term interests (e.g. a celebrity the user consistently follows) from transient trends (e.g. breaking news). Reposts often signal real interest more faithfully than original posts.",
            ),
            "XHS" => (
                "Xiaohongshu",
                "A lifestyle-sharing platform; users publish image/video notes on beauty, fashion, food, travel, parenting, etc.",
                "A tag is a topic label attached to a note, reflecting the user's content-creation direction and lifestyle interests.",
                "Interests usually revolve around concrete lifestyle scenes. Keywords in note titles are often more informative about the topic than the body text.",
            ),
            "TT" => (
                "Toutiao",
                "A news and short-video platform; users mainly browse and produce short videos or picture-text articles.",
                "A tag is a topic label placed in a creator's title, reflecting the user's content-creation niche.",
                "Most content is short video where the title carries the strongest signal. Watch for users who concentrate on a single niche (food, travel, parenting, ...).",
            ),
            "ZH" => (
                "Zhihu",
                "A Q&A and long-form community; users ask questions, write answers and publish articles to share knowledge.",
                "A tag is the title (or topic) of a question the user browses, answers or posts, reflecting their knowledge interests and expertise.",
                "Zhihu tags tend to be full question titles (and therefore long). Pay attention to how concentrated the user's answers are; expert users typically specialise in 2-3 areas.",
            ),
            "DB" => (
                "Douban",
                "A reviews community for films, books and music; users tag works with states such as \"want to watch\" or \"watched\".",
                "A tag has the form 'action:work-name' (e.g. watched_film:Title, want_to_read_book:Title), reflecting cultural-consumption preferences.",
                "Interests show through work categories (film/book/music) and genre preferences. Distinguish \"want to watch\" (intent) from \"watched\" (consumed).",
            ),
            _ => return None,
        };
        Some(PlatformContext {
            name: name.into(),
            description: description.into(),
            tag_meaning: tag_meaning.into(),
            analysis_hint: analysis_hint.into(),
        })
    }
}

/// Remote-model client settings; temperature is pinned at 0.0 for benchmark
/// runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelClientConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub structured_output: bool,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl Default for ModelClientConfig {
    fn default() -> Self {
        ModelClientConfig {
            endpoint: String::new(),
            model: String::new(),
            temperature: 0.0,
            max_output_tokens: 5120,
            structured_output: true,
            timeout_secs: 120,
            max_retries: 3,
            max_in_flight: 4,
        }
    }
}

/// Persona handling across steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaMode {
    Full,
    None,
}

/// How history reaches the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    Streaming,
    LongContext,
}

/// Batching granularity groups for the rebatching ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Fine,
    Default,
    Coarse,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RunMode {
    pub persona: PersonaMode,
    pub history: HistoryMode,
    pub granularity: Granularity,
}

impl Default for RunMode {
    fn default() -> Self {
        RunMode {
            persona: PersonaMode::Full,
            history: HistoryMode::Streaming,
            granularity: Granularity::Default,
        }
    }
}

// ---------------------------------------------------------------------------
// Prompt rendering

/// Render the single user-turn prompt for one step. The system message is
/// passed to the client separately.
pub fn render_prompt(
    view: &AgentTaskView,
    persona: &PersonaState,
    ctx: &PlatformContext,
    user: &UserMeta,
) -> String {
    let bio = if user.bio.trim().is_empty() { "not provided" } else { user.bio.trim() };
    let persona_block =
        if persona.step_index == 0 { COLD_START_PERSONA } else { persona.text.as_str() };
    let posts = view.posts.join("\n");
    let pool_json = serde_json::to_string(&view.pool_tags).expect("string array");
    let k = view.k;
    format!(
        "# Task: Streaming User-Profile Maintenance and Interest Prediction\n\
\n\
You are a user-profiling system that processes streaming social-media data. For every new batch of user activities you must:\n\
1. Update the persona. Using the new activities together with the existing persona, maintain a comprehensive understanding of this user's interests, preferences, and behavioural patterns.\n\
2. Predict interests. From the candidate pool, select the tags that this user is most likely to engage with in the next activity cycle.\n\
\n\
# Platform Context\n\
- Platform: {name} --- {desc}\n\
- Tag semantics: {tag_meaning}\n\
- Analysis hint: {hint}\n\
\n\
# User Profile (static)\n\
- Username: {username}\n\
- Bio: {bio}\n\
\n\
# Current Persona (accumulated from prior observations)\n\
\n\
{persona}\n\
\n\
# New Activity Data (batch #{step})\n\
\n\
{posts}\n\
\n\
# Candidate Tag Pool ({pool_size} tags total)\n\
\n\
From the candidate pool below, select exactly {k} tags that this user is most likely to engage with in the next activity cycle, where k = max(1, round(0.25 * |C_n|)).\n\
- You must return exactly {k} tags from the pool --- no more, no fewer.\n\
- Your goal is to predict future behaviour, not to summarise the past.\n\
- Interests evolve over time: some currently hot topics are transient and may not reappear next cycle; other topics absent from the current batch may surface later because of latent preferences.\n\
\n\
{pool}\n\
\n\
# Output Format (Return strict JSON)\n\
{{\n\
  \"persona_summary\": \"Updated persona covering the user's core interest areas, behavioural patterns, and preference traits. (forwarded to the next batch)\",\n\
  \"predicted_tags\": [\"tag1\", \"tag2\", ...],\n\
  \"reasoning\": \"Briefly state which persona features support your tag selection.\"\n\
}}\n",
        name = ctx.name,
        desc = ctx.description,
        tag_meaning = ctx.tag_meaning,
        hint = ctx.analysis_hint,
        username = user.username,
        bio = bio,
        persona = persona_block,
        step = view.step_index,
        posts = posts,
        pool_size = view.pool_tags.len(),
        k = k,
        pool = pool_json,
    )
}

// ---------------------------------------------------------------------------
// Model client

/// Failure classification used by the retry loop.
#[derive(Debug)]
pub enum ClientError {
    /// Worth retrying (timeouts, rate limits, 5xx).
    Transient(String),
    /// Credential problems abort the run.
    Auth(String),
    /// Anything else; not retried.
    Fatal(String),
}

/// A chat-completion backend: one system message, one user turn, one string
/// back.
pub trait ChatClient {
    fn complete(
        &self,
        system: &str,
        user: &str,
        cfg: &ModelClientConfig,
    ) -> Result<String, ClientError>;
}

/// Invoke the client with exponential backoff on transient failures.
pub fn call_model(
    client: &dyn ChatClient,
    prompt: &str,
    cfg: &ModelClientConfig,
) -> Result<String, HarnessError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match client.complete(SYSTEM_MESSAGE, prompt, cfg) {
            Ok(raw) => return Ok(raw),
            Err(ClientError::Auth(msg)) => return Err(HarnessError::Auth(msg)),
            Err(ClientError::Fatal(msg)) => {
                return Err(HarnessError::CallFailed { attempts: attempt, detail: msg })
            }
            Err(ClientError::Transient(msg)) => {
                if attempt > cfg.max_retries {
                    return Err(HarnessError::CallFailed { attempts: attempt, detail: msg });
                }
                let backoff_ms = 50u64.saturating_mul(1 << attempt.min(6));
                std::thread::sleep(std::time::Duration::from_millis(backoff_ms));
            }
        }
    }
}

/// Offline client returning canned responses, with optional injected
/// transient failures for the first N calls.
pub struct StubClient {
    pub responses: Vec<String>,
    pub fail_first: usize,
    calls: std::cell::Cell<usize>,
}

impl StubClient {
    pub fn new(responses: Vec<String>) -> Self {
        StubClient { responses, fail_first: 0, calls: std::cell::Cell::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl ChatClient for StubClient {
    fn complete(
        &self,
        _system: &str,
        _user: &str,
        _cfg: &ModelClientConfig,
    ) -> Result<String, ClientError> {
        let n = self.calls.get();
        self.calls.set(n + 1);
        if n < self.fail_first {
            return Err(ClientError::Transient("injected 429".into()));
        }
        let idx = (n - self.fail_first).min(self.responses.len().saturating_sub(1));
        self.responses
            .get(idx)
            .cloned()
            .ok_or_else(|| ClientError::Fatal("stub has no responses".into()))
    }
}

/// HTTP client for OpenAI-style chat-completion endpoints.
#[cfg(feature = "remote")]
pub struct HttpChatClient {
    pub api_key: String,
}

#[cfg(feature = "remote")]
impl ChatClient for HttpChatClient {
    fn complete(
        &self,
        system: &str,
        user: &str,
        cfg: &ModelClientConfig,
    ) -> Result<String, ClientError> {
        let mut body = serde_json::json!({
            "model": cfg.model,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        if cfg.structured_output {
            body["response_format"] = serde_json::json!({"type": "json_object"});
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| ClientError::Fatal(e.to_string()))?;
        let resp = client
            .post(&cfg.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() {
                    ClientError::Transient(e.to_string())
                } else {
                    ClientError::Fatal(e.to_string())
                }
            })?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(ClientError::Auth(format!("status {status}")));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ClientError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(ClientError::Fatal(format!("status {status}")));
        }
        let value: serde_json::Value =
            resp.json().map_err(|e| ClientError::Fatal(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Fatal("response lacks message content".into()))
    }
}

// ---------------------------------------------------------------------------
// Answer extraction

/// Remove leading/trailing Markdown code-fence markers.
pub fn strip_code_fences(raw: &str) -> String {
    raw.replace("```json", "").replace("```", "").trim().to_string()
}

/// Parse a model response into a [`Prediction`]. Missing fields default;
/// a response with no JSON object at all is an extraction error.
pub fn extract_answer(raw: &str) -> Result<Prediction, HarnessError> {
    let stripped = strip_code_fences(raw);
    let value: serde_json::Value = serde_json::from_str(&stripped)
        .map_err(|e| HarnessError::Extraction(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| HarnessError::Extraction("response is not a JSON object".into()))?;
    let predicted_tags = obj
        .get("predicted_tags")
        .and_then(|v| v.as_array())
        .map(|a| {
            a.iter()
                .filter_map(|t| t.as_str())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    let get_str = |key: &str| {
        obj.get(key).and_then(|v| v.as_str()).unwrap_or("").to_string()
    };
    Ok(Prediction {
        predicted_tags,
        persona_summary: get_str("persona_summary"),
        reasoning: get_str("reasoning"),
        raw_response: raw.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Agents and the step loop

/// Anything that can answer one step: remote chat models and offline oracles
/// share this interface.
pub trait Agent {
    fn respond(
        &mut self,
        view: &AgentTaskView,
        persona: &PersonaState,
    ) -> Result<Prediction, HarnessError>;
}

/// Agent backed by a chat client and the prompt template.
pub struct ChatAgent<'a> {
    pub client: &'a dyn ChatClient,
    pub cfg: ModelClientConfig,
    pub ctx: PlatformContext,
    pub user: UserMeta,
}

impl Agent for ChatAgent<'_> {
    fn respond(
        &mut self,
        view: &AgentTaskView,
        persona: &PersonaState,
    ) -> Result<Prediction, HarnessError> {
        let prompt = render_prompt(view, persona, &self.ctx, &self.user);
        let raw = call_model(self.client, &prompt, &self.cfg)?;
        extract_answer(&raw)
    }
}

/// One transcript line: enough to audit and re-score a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub user_id: String,
    pub step_index: usize,
    pub prompt_hash: String,
    pub prediction: Option<Prediction>,
    pub failure: Option<String>,
    pub latency_ms: u64,
}

fn view_hash(view: &AgentTaskView, persona: &PersonaState) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(view).expect("serializable view"));
    h.update(persona.text.as_bytes());
    format!("{:x}", h.finalize())
}

/// Run a user's tasks in order. With `PersonaMode::Full` the returned
/// persona is carried forward, falling back to the previous state when a
/// step emits an empty or failed persona; with `PersonaMode::None` every
/// step sees the cold-start placeholder. A failed step is recorded but does
/// not abort the user.
pub fn run_stream(
    tasks: &[StepTask],
    agent: &mut dyn Agent,
    persona_mode: PersonaMode,
) -> Vec<StepRecord> {
    debug_assert!(tasks.windows(2).all(|w| w[0].step_index < w[1].step_index));
    let mut persona = PersonaState::cold_start();
    let mut records = Vec::with_capacity(tasks.len());
    for task in tasks {
        let view = task.agent_view();
        let prompt_persona = match persona_mode {
            PersonaMode::Full => persona.clone(),
            PersonaMode::None => PersonaState::cold_start(),
        };
        let started = Instant::now();
        let result = agent.respond(&view, &prompt_persona);
        let latency_ms = started.elapsed().as_millis() as u64;
        let record = match result {
            Ok(prediction) => {
                if persona_mode == PersonaMode::Full
                    && !prediction.persona_summary.trim().is_empty()
                {
                    persona = PersonaState {
                        text: prediction.persona_summary.clone(),
                        step_index: task.step_index,
                    };
                }
                StepRecord {
                    user_id: task.user_id.clone(),
                    step_index: task.step_index,
                    prompt_hash: view_hash(&view, &prompt_persona),
                    prediction: Some(prediction),
                    failure: None,
                    latency_ms,
                }
            }
            Err(e) => StepRecord {
                user_id: task.user_id.clone(),
                step_index: task.step_index,
                prompt_hash: view_hash(&view, &prompt_persona),
                prediction: None,
                failure: Some(e.to_string()),
                latency_ms,
            },
        };
        records.push(record);
    }
    records
}

/// Long-context ablation: one prompt holding every prior post under date
/// headers, answering the final step's pool. Users with fewer than
/// [`MIN_LONG_CONTEXT_STEPS`] steps are excluded (`None`).
pub fn run_long_context(
    tasks: &[StepTask],
    agent: &mut dyn Agent,
) -> Option<(usize, StepRecord)> {
    if tasks.len() < MIN_LONG_CONTEXT_STEPS {
        return None;
    }
    let last = tasks.last().expect("non-empty");
    let mut posts: Vec<String> = Vec::new();
    let mut current_date = None;
    for task in tasks {
        for post in &task.input_batch.posts {
            let date = post.timestamp.date_naive();
            if current_date != Some(date) {
                posts.push(format!("--- {date} ---"));
                current_date = Some(date);
            }
            posts.push(post.full_text());
        }
    }
    // same pool, k, and ground truth as the streaming run's final step
    let view = AgentTaskView {
        user_id: last.user_id.clone(),
        step_index: last.step_index,
        posts,
        pool_tags: last.pool.tags.iter().map(|(t, _)| t.clone()).collect(),
        k: last.pool.k,
    };
    let persona = PersonaState::cold_start();
    let started = Instant::now();
    let result = agent.respond(&view, &persona);
    let latency_ms = started.elapsed().as_millis() as u64;
    let record = match result {
        Ok(p) => StepRecord {
            user_id: last.user_id.clone(),
            step_index: last.step_index,
            prompt_hash: view_hash(&view, &persona),
            prediction: Some(p),
            failure: None,
            latency_ms,
        },
        Err(e) => StepRecord {
            user_id: last.user_id.clone(),
            step_index: last.step_index,
            prompt_hash: view_hash(&view, &persona),
            prediction: None,
            failure: Some(e.to_string()),
            latency_ms,
        },
    };
    Some((tasks.len() - 1, record))
}

/// Re-run the buffer with the granularity group's trigger override:
/// (3, 1) fine, (5, 3) default, (8, 5) coarse for (high, low) frequency
/// platform classes. The high-frequency class is the one with the larger
/// main-benchmark trigger.
pub fn rebatch_granularity(
    posts: &[Post],
    group: Granularity,
    profile: &PlatformProfile,
) -> Vec<StreamBatch> {
    let high_freq = profile.buffer_trigger >= 5;
    let trigger = match (group, high_freq) {
        (Granularity::Fine, true) => 3,
        (Granularity::Fine, false) => 1,
        (Granularity::Default, true) => 5,
        (Granularity::Default, false) => 3,
        (Granularity::Coarse, true) => 8,
        (Granularity::Coarse, false) => 5,
    };
    let mut overridden = profile.clone();
    overridden.buffer_trigger = trigger;
    overridden.buffer_cap = 3 * trigger;
    let user_id = posts.first().map(|p| p.user_id.clone()).unwrap_or_default();
    batch_stream(&user_id, posts, &overridden, ReAudit::default())
}

/// Append transcript records as line-delimited JSON.
pub fn write_transcript(
    path: &std::path::Path,
    records: &[StepRecord],
) -> std::io::Result<()> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    for r in records {
        serde_json::to_writer(&mut file, r)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}
