//! Interest-anchor extraction per platform rule, anchor cleaning, and the
//! coarse daily + longitudinal user filters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{normalize_tag, Anchor, AnchorRule, PlatformProfile, Post};

/// A post counts as valid content when its combined text reaches the
/// platform's minimum length. Shared by the daily filter and the buffer.
pub fn post_is_valid(post: &Post, profile: &PlatformProfile) -> bool {
    post.full_text().chars().count() >= profile.min_post_length
}

/// Per-user activity summary over the observation window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserActivitySummary {
    pub user_id: String,
    pub active_days: u32,
    pub valid_post_count: usize,
    pub duplicate_rate: f64,
    /// valid anchors / interacting posts
    pub tag_density: f64,
}

/// TF-IDF over a user's window, used by the question-title extraction rule.
/// The tokenizer is pluggable; the default splits into character bigrams.
pub struct TfidfModel {
    doc_count: usize,
    doc_freq: HashMap<String, usize>,
    tokenizer: fn(&str) -> Vec<String>,
}

/// Default tokenizer: character bigrams over non-whitespace runs.
pub fn bigram_tokenizer(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() == 1 {
            tokens.push(chars[0].to_string());
        }
        for w in chars.windows(2) {
            tokens.push(w.iter().collect());
        }
    }
    tokens
}

impl TfidfModel {
    pub fn fit(docs: &[String]) -> Self {
        Self::fit_with(docs, bigram_tokenizer)
    }

    pub fn fit_with(docs: &[String], tokenizer: fn(&str) -> Vec<String>) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let uniq: HashSet<String> = tokenizer(doc).into_iter().collect();
            for t in uniq {
                *doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        TfidfModel { doc_count: docs.len().max(1), doc_freq, tokenizer }
    }

    /// Top-n tokens of one document by tf-idf, ties broken lexicographically.
    pub fn top_keywords(&self, doc: &str, n: usize) -> Vec<String> {
        let tokens = (self.tokenizer)(doc);
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_insert(0) += 1;
        }
        let mut scored: Vec<(f64, String)> = tf
            .into_iter()
            .map(|(t, f)| {
                let df = self.doc_freq.get(&t).copied().unwrap_or(0);
                let idf = ((self.doc_count as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0;
                (f as f64 * idf, t)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        scored.into_iter().take(n).map(|(_, t)| t).collect()
    }
}

const ITEM_ACTION_VERBS: [&str; 9] =
    ["看过", "想看", "在看", "读过", "想读", "在读", "听过", "想听", "在听"];

pub(crate) fn extract_double_hash(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('#') {
        let after = &rest[start + 1..];
        match after.find('#') {
            Some(end) => {
                let tag = &after[..end];
                if !tag.is_empty() {
                    out.push(tag.to_string());
                }
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

fn is_tag_delimiter(c: char) -> bool {
    c.is_whitespace()
        || matches!(c, '#' | ',' | '，' | '。' | '.' | '!' | '！' | '?' | '？' | ';' | '；' | ':' | '：' | '、' | '(' | ')' | '（' | '）' | '[' | ']' | '【' | '】')
}

fn extract_single_hash(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find('#') {
        let tail = &rest[pos + 1..];
        let end = tail.find(is_tag_delimiter).unwrap_or(tail.len());
        let tag = &tail[..end];
        if !tag.is_empty() {
            out.push(tag.to_string());
        }
        rest = &tail[end..];
    }
    out
}

fn extract_item_action(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    // already-composed "action·item" lines pass through
    if let Some(pos) = text.find('·') {
        let (action, item) = text.split_at(pos);
        let item = item.trim_start_matches('·');
        if !action.trim().is_empty() && !item.trim().is_empty() {
            out.push(format!("{}·{}", action.trim(), item.trim()));
            return out;
        }
    }
    for verb in ITEM_ACTION_VERBS {
        let mut rest = text;
        while let Some(pos) = rest.find(verb) {
            let after = &rest[pos + verb.len()..];
            if let Some(open) = after.find('《') {
                if let Some(close) = after[open..].find('》') {
                    let item = &after[open..open + close + '》'.len_utf8()];
                    out.push(format!("{verb}·{item}"));
                    rest = &after[open + close..];
                    continue;
                }
            }
            break;
        }
    }
    out
}

/// Extract raw interest anchors from one post under the platform's rule.
/// Duplicates within one post are collapsed. The TF-IDF model (for the
/// question-title rule) is fit over the user's window of body texts.
pub fn extract_anchors(
    post: &Post,
    profile: &PlatformProfile,
    tfidf: Option<&TfidfModel>,
) -> Vec<Anchor> {
    let raw: Vec<String> = match profile.anchor_rule {
        AnchorRule::DoubleHash => extract_double_hash(&post.full_text()),
        AnchorRule::SingleHash => extract_single_hash(&post.full_text()),
        AnchorRule::QuestionTitleTfidf => {
            let mut v = Vec::new();
            if !post.title.trim().is_empty() {
                v.push(post.title.trim().to_string());
            }
            if let Some(model) = tfidf {
                if !post.content.trim().is_empty() {
                    v.extend(model.top_keywords(&post.content, 5));
                }
            }
            v
        }
        AnchorRule::ItemAction => {
            let mut v = extract_item_action(&post.title);
            v.extend(extract_item_action(&post.content));
            v
        }
    };
    let mut seen = HashSet::new();
    raw.into_iter()
        .filter_map(|t| {
            let norm = normalize_tag(&t);
            if norm.is_empty() || !seen.insert(norm.clone()) {
                None
            } else {
                Some(Anchor { text: norm, source_post: post.post_id.clone() })
            }
        })
        .collect()
}

/// Why an anchor was rejected by the cleaner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorReject {
    PureNumeric,
    PureSymbol,
    Length,
    Blacklisted,
}

fn is_symbolic(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Clean one raw anchor: whitespace normalization, length bounds [2, 30],
/// pure-numeric and pure-symbol rejection, and the dynamic trending blacklist
/// when the profile enables it.
pub fn clean_anchor(
    raw: &str,
    source_post: &str,
    blacklist: &HashSet<String>,
    profile: &PlatformProfile,
) -> Result<Anchor, AnchorReject> {
    let text = normalize_tag(raw);
    let len = text.chars().count();
    if !(2..=30).contains(&len) {
        return Err(AnchorReject::Length);
    }
    if text.chars().all(|c| c.is_ascii_digit()) {
        return Err(AnchorReject::PureNumeric);
    }
    if text.chars().all(is_symbolic) {
        return Err(AnchorReject::PureSymbol);
    }
    if profile.blacklist_enabled && blacklist.contains(&text) {
        return Err(AnchorReject::Blacklisted);
    }
    Ok(Anchor { text, source_post: source_post.to_string() })
}

/// Thresholds for the daily coarse filter. The duplication, burst, and
/// entropy values are documented defaults; none of them come from a fixed
/// published setting.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseRules {
    pub min_daily_posts: usize,
    pub max_daily_posts: usize,
    /// Exact + fuzzy duplicate-rate ceiling.
    pub max_duplicate_rate: f64,
    /// Fuzzy duplication: normalized 3-gram overlap at or above this counts
    /// as a duplicate pair.
    pub fuzzy_overlap: f64,
    /// Burst: at least this many posts ...
    pub burst_posts: usize,
    /// ... within this many seconds.
    pub burst_window_secs: i64,
    /// Gzip compressed/raw ratio below this flags low-entropy text.
    pub min_compression_ratio: f64,
    /// Keyword rule lists for platform-specific account families.
    #[serde(default)]
    pub blocked_keywords: Vec<String>,
}

impl Default for CoarseRules {
    fn default() -> Self {
        CoarseRules {
            min_daily_posts: 1,
            max_daily_posts: 200,
            max_duplicate_rate: 0.5,
            fuzzy_overlap: 0.9,
            burst_posts: 5,
            burst_window_secs: 60,
            min_compression_ratio: 0.2,
            blocked_keywords: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    PostCount,
    Duplication,
    Burst,
    MinLength,
    LowEntropy,
    Density,
    BlockedKeyword,
}

#[derive(Debug, Clone)]
pub enum CoarseVerdict {
    /// Indices of the valid posts that survive.
    Keep { valid_posts: Vec<usize> },
    Drop(DropReason),
}

fn trigram_set(text: &str) -> HashSet<String> {
    let chars: Vec<char> = normalize_tag(text).chars().collect();
    if chars.len() < 3 {
        return chars.iter().map(|c| c.to_string()).collect();
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

fn fuzzy_overlap(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / a.len().min(b.len()) as f64
}

fn gzip_ratio(text: &str) -> f64 {
    if text.is_empty() {
        return 1.0;
    }
    let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    enc.write_all(text.as_bytes()).unwrap();
    let compressed = enc.finish().unwrap();
    compressed.len() as f64 / text.len() as f64
}

/// Daily coarse filter over one user-day of records. Stages run in order;
/// the first failure drops the user-day with its reason.
pub fn coarse_filter_user(
    day_records: &[Post],
    profile: &PlatformProfile,
    rules: &CoarseRules,
) -> CoarseVerdict {
    let n = day_records.len();
    if n < rules.min_daily_posts || n > rules.max_daily_posts {
        return CoarseVerdict::Drop(DropReason::PostCount);
    }

    // exact + fuzzy duplication rate
    let texts: Vec<String> = day_records.iter().map(|p| normalize_tag(&p.full_text())).collect();
    let grams: Vec<HashSet<String>> = texts.iter().map(|t| trigram_set(t)).collect();
    let mut duplicate = vec![false; n];
    for i in 0..n {
        for j in 0..i {
            if texts[i] == texts[j] || fuzzy_overlap(&grams[i], &grams[j]) >= rules.fuzzy_overlap {
                duplicate[i] = true;
                break;
            }
        }
    }
    let dup_rate = duplicate.iter().filter(|d| **d).count() as f64 / n as f64;
    if dup_rate > rules.max_duplicate_rate {
        return CoarseVerdict::Drop(DropReason::Duplication);
    }

    // burst detection over a sliding count window
    if n >= rules.burst_posts {
        let mut times: Vec<i64> = day_records.iter().map(|p| p.timestamp.timestamp()).collect();
        times.sort_unstable();
        for w in times.windows(rules.burst_posts) {
            if w[w.len() - 1] - w[0] <= rules.burst_window_secs {
                return CoarseVerdict::Drop(DropReason::Burst);
            }
        }
    }

    for kw in &rules.blocked_keywords {
        if texts.iter().any(|t| t.contains(kw.as_str())) {
            return CoarseVerdict::Drop(DropReason::BlockedKeyword);
        }
    }

    let valid: Vec<usize> =
        (0..n).filter(|&i| post_is_valid(&day_records[i], profile)).collect();
    if valid.is_empty() {
        return CoarseVerdict::Drop(DropReason::MinLength);
    }

    let joined = texts.join("\n");
    if gzip_ratio(&joined) < rules.min_compression_ratio {
        return CoarseVerdict::Drop(DropReason::LowEntropy);
    }

    let anchor_count: usize = valid.iter().map(|&i| day_records[i].anchors.len()).sum();
    let density = anchor_count as f64 / valid.len() as f64;
    let (lo, hi) = profile.density_interval;
    if density < lo || density > hi {
        return CoarseVerdict::Drop(DropReason::Density);
    }

    CoarseVerdict::Keep { valid_posts: valid }
}

/// One stratum of the activity-based sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrataBand {
    pub min_days: u32,
    /// Inclusive; use u32::MAX for an open tail.
    pub max_days: u32,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrataConfig {
    pub min_active_days: u32,
    pub bands: Vec<StrataBand>,
    pub seed: u64,
}

impl Default for StrataConfig {
    fn default() -> Self {
        StrataConfig {
            min_active_days: 3,
            bands: vec![
                StrataBand { min_days: 3, max_days: 5, ratio: 0.5 },
                StrataBand { min_days: 6, max_days: u32::MAX, ratio: 0.2 },
            ],
            seed: 0,
        }
    }
}

/// Activity floor plus stratified sampling with a seeded generator. Output is
/// sorted by user id and byte-identical across runs for a fixed seed.
pub fn longitudinal_filter(
    summaries: &[UserActivitySummary],
    config: &StrataConfig,
) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut selected = Vec::new();
    for band in &config.bands {
        let mut members: Vec<&UserActivitySummary> = summaries
            .iter()
            .filter(|s| {
                s.active_days >= config.min_active_days
                    && s.active_days >= band.min_days
                    && s.active_days <= band.max_days
            })
            .collect();
        if members.is_empty() {
            continue;
        }
        members.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        let take = ((members.len() as f64) * band.ratio).round() as usize;
        members.shuffle(&mut rng);
        selected.extend(members.into_iter().take(take).map(|s| s.user_id.clone()));
    }
    selected.sort();
    selected.dedup();
    selected
}

/// Judge verdict classes for the personality audit, spelled as they appear
/// on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum AuditClass {
    High_Quality_User,
    Low_Value_Human,
    Non_Human_Noise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub class: AuditClass,
    pub is_gold: bool,
    pub profilability_score: u8,
    pub reasoning: String,
}

/// Judge endpoint abstraction; the real judge is a hosted chat model, tests
/// use stubs.
pub trait JudgeClient {
    fn judge(&self, prompt: &str) -> Result<String, String>;
}

/// Qualification prompt rendered for the persona audit.
pub fn render_audit_prompt(user_id: &str, stream_text: &str) -> String {
    format!(
        r#"# Role
You are a "Digital Persona Evaluation Expert." Your task is to screen social-media users along three dimensions: cognitive depth, expressive subjectivity, and information entropy.

# Classification Categories
CLASS A: High_Quality_User (keep) --- A well-defined individual with a sharp persona profile, idiosyncratic expression, and cognitive coherence.
CLASS B: Low_Value_Human (reject) --- A genuine human, but with sparse analytical value (low-SNR). Features: semantic poverty (pure emojis, fragmented interjections), high homogeneity, or passive interaction (pure reposts).
CLASS C: Non_Human_Noise (reject) --- Accounts driven by explicit tooling intent (marketing, bots, SEO). Features: rigid template structures, commercial markers (price lists, DM for coupons).

# Profilability Score (1-5 Likert scale)
5 Exceptional: Sharp persona; rich narrative; distinctive perspective.
4 Good: Clear traits and concrete experiences, but slightly lacking in depth.
3 Adequate: Persona silhouette is visible but not vivid.
2 Marginal: Mostly templated/fragmented; occasional traces of a real person.
1 Poor: No personal signal; purely tool-like output.

# User Stream
user_id: {user_id}
{stream_text}

# Output Format (Return strict JSON; reasoning in Chinese)
{{
  "user_id": "string",
  "class": "High_Quality_User" | "Low_Value_Human" | "Non_Human_Noise",
  "is_gold": boolean,
  "profilability_score": 1-5,
  "reasoning": "string (2-3 sentences in Chinese)"
}}"#
    )
}

fn parse_verdict(raw: &str) -> Result<AuditVerdict, String> {
    let stripped = crate::harness::strip_code_fences(raw);
    let v: serde_json::Value = serde_json::from_str(&stripped).map_err(|e| e.to_string())?;
    let class = match v.get("class").and_then(|c| c.as_str()) {
        Some("High_Quality_User") => AuditClass::High_Quality_User,
        Some("Low_Value_Human") => AuditClass::Low_Value_Human,
        Some("Non_Human_Noise") => AuditClass::Non_Human_Noise,
        other => return Err(format!("unknown class {other:?}")),
    };
    let is_gold = v.get("is_gold").and_then(|b| b.as_bool()).unwrap_or(false);
    let score = v
        .get("profilability_score")
        .and_then(|s| s.as_u64())
        .ok_or("missing profilability_score")?;
    if !(1..=5).contains(&score) {
        return Err(format!("profilability_score {score} out of range"));
    }
    if is_gold && class != AuditClass::High_Quality_User {
        return Err("is_gold requires High_Quality_User".into());
    }
    let reasoning =
        v.get("reasoning").and_then(|r| r.as_str()).unwrap_or_default().to_string();
    Ok(AuditVerdict { class, is_gold, profilability_score: score as u8, reasoning })
}

/// Outcome of the persona audit; unparseable responses after one retry leave
/// the user unaudited (excluded by default).
#[derive(Debug, Clone)]
pub enum AuditOutcome {
    Verdict(AuditVerdict),
    Unaudited,
}

pub fn audit_user(user_id: &str, stream_text: &str, judge: &dyn JudgeClient) -> AuditOutcome {
    let prompt = render_audit_prompt(user_id, stream_text);
    for _ in 0..2 {
        match judge.judge(&prompt) {
            Ok(raw) => match parse_verdict(&raw) {
                Ok(v) => return AuditOutcome::Verdict(v),
                Err(_) => continue,
            },
            Err(_) => continue,
        }
    }
    AuditOutcome::Unaudited
}
