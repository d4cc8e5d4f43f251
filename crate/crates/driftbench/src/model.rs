//! Shared domain types and the two small contracts everything else builds on:
//! tag equality and the selection budget.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Per-platform anchor extraction strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorRule {
    /// Substrings between paired `#...#` markers.
    DoubleHash,
    /// `#` up to the next delimiter.
    SingleHash,
    /// Question title plus top-5 TF-IDF keywords of the body.
    QuestionTitleTfidf,
    /// `action·item` composite string.
    ItemAction,
}

/// Per-platform configuration for filtering, buffering, and clustering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatformProfile {
    pub platform_id: String,
    /// Buffer trigger θ: minimum valid posts before a batch is emitted.
    pub buffer_trigger: usize,
    /// Maximum posts per emitted batch.
    pub buffer_cap: usize,
    pub anchor_rule: AnchorRule,
    /// Admissible tag-density interval `[lo, hi]` (valid anchors / interacting posts).
    pub density_interval: (f64, f64),
    /// Minimum cumulative tag frequency for clustering.
    pub min_tag_frequency: u64,
    /// Cluster count for the base clustering pass.
    pub cluster_count: usize,
    /// Minimum character count for a post to be counted as valid.
    pub min_post_length: usize,
    /// Whether the dynamic trending blacklist applies at anchor cleaning.
    pub blacklist_enabled: bool,
}

impl PlatformProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.buffer_trigger < 1 {
            return Err(ModelError::InvalidProfile("buffer_trigger must be >= 1".into()));
        }
        if self.buffer_cap < self.buffer_trigger {
            return Err(ModelError::InvalidProfile(
                "buffer_cap must be >= buffer_trigger".into(),
            ));
        }
        if self.density_interval.0 > self.density_interval.1 || self.density_interval.0 < 0.0 {
            return Err(ModelError::InvalidProfile("density interval must satisfy 0 <= lo <= hi".into()));
        }
        Ok(())
    }

    /// A profile resembling a short-form microblog platform: double-hash tags,
    /// trigger 5, blacklist on.
    pub fn weibo_like() -> Self {
        PlatformProfile {
            platform_id: "WB".into(),
            buffer_trigger: 5,
            buffer_cap: 15,
            anchor_rule: AnchorRule::DoubleHash,
            density_interval: (0.2, 1.0),
            min_tag_frequency: 3,
            cluster_count: 1024,
            min_post_length: 2,
            blacklist_enabled: true,
        }
    }
}

/// Stable user-level attributes from the normalized metadata file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserMeta {
    pub user_id: String,
    #[serde(default)]
    pub username: String,
    #[serde(default)]
    pub bio: String,
    #[serde(default)]
    pub gender: Option<String>,
    #[serde(default)]
    pub location: Option<String>,
    #[serde(default)]
    pub followers_count: u64,
    #[serde(default)]
    pub following_count: u64,
    #[serde(default)]
    pub posts_count: u64,
    #[serde(default)]
    pub verified_type: Option<String>,
}

/// One interest anchor: a canonical tag string plus its source post.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub text: String,
    pub source_post: String,
}

/// One normalized UGC record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub quote_content: String,
    #[serde(default)]
    pub anchors: Vec<Anchor>,
}

impl Post {
    /// Concatenated text of all content-bearing fields.
    pub fn full_text(&self) -> String {
        let mut s = String::new();
        for part in [&self.title, &self.content, &self.quote_content] {
            if !part.is_empty() {
                if !s.is_empty() {
                    s.push('\n');
                }
                s.push_str(part);
            }
        }
        s
    }
}

/// One emitted streaming step: an ordered slice of a user's posts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamBatch {
    pub user_id: String,
    /// 1-based step index, strictly increasing per user.
    pub step_index: usize,
    pub posts: Vec<Post>,
    /// Deduplicated anchor tags of the batch.
    pub anchors: Vec<String>,
    pub window: (DateTime<Utc>, DateTime<Utc>),
}

/// Placeholder text injected when no persona has been accumulated yet.
pub const COLD_START_PERSONA: &str =
    "No prior observations yet; this is the user's first activity batch. Build the persona from scratch.";

/// The free-form profile text an agent maintains across steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonaState {
    pub text: String,
    /// 0 = cold start.
    pub step_index: usize,
}

impl PersonaState {
    pub fn cold_start() -> Self {
        PersonaState { text: COLD_START_PERSONA.to_string(), step_index: 0 }
    }
}

/// Label of a candidate-pool entry. Positives are `Keep`/`New`; the other four
/// are the distractor families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolLabel {
    Keep,
    New,
    Decay,
    Peer,
    Viral,
    Random,
}

impl PoolLabel {
    pub fn is_positive(self) -> bool {
        matches!(self, PoolLabel::Keep | PoolLabel::New)
    }
}

/// The closed tag set an agent selects from at one step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidatePool {
    /// Shuffled (tag, label) pairs. Labels are for scoring only and are never
    /// rendered into any agent-facing view.
    pub tags: Vec<(String, PoolLabel)>,
    /// Selection budget k = max(1, round(0.25 * |tags|)).
    pub k: usize,
}

impl CandidatePool {
    pub fn tag_strings(&self) -> Vec<&str> {
        self.tags.iter().map(|(t, _)| t.as_str()).collect()
    }
}

/// An agent's parsed output for one step.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted_tags: Vec<String>,
    pub persona_summary: String,
    pub reasoning: String,
    pub raw_response: String,
}

/// Normalize whitespace: trim the ends, collapse internal runs to one space.
pub fn normalize_tag(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Tag identity: exact string equality after light whitespace normalization.
/// No case folding.
pub fn tags_equal(a: &str, b: &str) -> bool {
    normalize_tag(a) == normalize_tag(b)
}

/// Selection budget k = max(1, round(0.25 * pool_size)), rounding half away
/// from zero.
pub fn selection_budget(pool_size: usize) -> Result<usize, ModelError> {
    if pool_size == 0 {
        return Err(ModelError::EmptyPool);
    }
    // 0.25 * n rounded half away from zero, in integer arithmetic: (n + 2) / 4.
    Ok(((pool_size + 2) / 4).max(1))
}
