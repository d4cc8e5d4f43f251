//! Information-load slicing: a durable per-user reservoir that emits a
//! streaming batch once enough valid posts have accumulated, instead of
//! slicing by calendar day.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::anchor::post_is_valid;
use crate::error::StoreError;
use crate::model::{PlatformProfile, Post, StreamBatch};

/// Durable per-user buffer state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BufferState {
    pub user_id: String,
    pub pending: Vec<Post>,
    pub valid_count: usize,
    pub time_cursor: DateTime<Utc>,
    /// post_ids of already-emitted posts whose timestamp equals the cursor;
    /// needed to deduplicate replays at the batch boundary.
    #[serde(default)]
    pub boundary_ids: Vec<String>,
    pub emitted_steps: usize,
}

impl BufferState {
    pub fn new(user_id: &str) -> Self {
        BufferState {
            user_id: user_id.to_string(),
            pending: Vec::new(),
            valid_count: 0,
            time_cursor: DateTime::<Utc>::MIN_UTC,
            boundary_ids: Vec::new(),
            emitted_steps: 0,
        }
    }
}

/// Outcome of a pop attempt.
#[derive(Debug)]
pub enum PopOutcome {
    /// Not enough valid posts yet.
    Pending,
    Emitted(StreamBatch),
    /// The batch failed the density re-audit and was discarded; the user is
    /// flagged for review.
    DiscardedDensity { step_index: usize },
}

/// Append posts in chronological order and update the valid count. Posts
/// older than the cursor are reorder-inserted with a warning flag; posts
/// already present (same post_id) are dropped, which makes re-pushes after a
/// crash idempotent.
pub fn push(state: &mut BufferState, posts: &[Post], profile: &PlatformProfile) -> usize {
    let mut reordered = 0;
    for post in posts {
        if state.pending.iter().any(|p| p.post_id == post.post_id) {
            continue;
        }
        if post.timestamp < state.time_cursor
            || (post.timestamp == state.time_cursor
                && state.boundary_ids.contains(&post.post_id))
        {
            // already covered by an emitted batch; drop to preserve the
            // no-duplication guarantee across restarts
            continue;
        }
        let in_order = state
            .pending
            .last()
            .map(|last| post.timestamp >= last.timestamp)
            .unwrap_or(true);
        if in_order {
            state.pending.push(post.clone());
        } else {
            reordered += 1;
            let idx = state
                .pending
                .partition_point(|p| p.timestamp <= post.timestamp);
            state.pending.insert(idx, post.clone());
        }
    }
    state.valid_count = state.pending.iter().filter(|p| post_is_valid(p, profile)).count();
    reordered
}

/// Whether the pop-time density re-audit is applied and against which
/// interval. Disabled by default; the main pipeline enables it with the
/// platform's density interval.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReAudit {
    pub enabled: bool,
}

/// Emit one batch if the trigger is reached: the oldest
/// `min(valid_count, buffer_cap)` posts leave the buffer, the time cursor
/// advances, and the step index increments.
pub fn try_pop(
    state: &mut BufferState,
    profile: &PlatformProfile,
    re_audit: ReAudit,
) -> PopOutcome {
    if state.valid_count < profile.buffer_trigger {
        return PopOutcome::Pending;
    }
    // take oldest posts until the emitted batch holds min(valid, cap) valid
    // posts; invalid posts travel with their chronological neighbours
    let target_valid = state.valid_count.min(profile.buffer_cap);
    let mut taken = 0;
    let mut seen_valid = 0;
    for (i, post) in state.pending.iter().enumerate() {
        if post_is_valid(post, profile) {
            seen_valid += 1;
        }
        if seen_valid == target_valid {
            taken = i + 1;
            break;
        }
    }
    let batch_posts: Vec<Post> = state.pending.drain(..taken).collect();
    state.valid_count = state.pending.iter().filter(|p| post_is_valid(p, profile)).count();
    if let Some(last) = batch_posts.last() {
        if last.timestamp != state.time_cursor {
            state.boundary_ids.clear();
        }
        state.time_cursor = last.timestamp;
        for p in &batch_posts {
            if p.timestamp == state.time_cursor {
                state.boundary_ids.push(p.post_id.clone());
            }
        }
    }
    state.emitted_steps += 1;

    let window = (
        batch_posts.first().map(|p| p.timestamp).unwrap_or(state.time_cursor),
        batch_posts.last().map(|p| p.timestamp).unwrap_or(state.time_cursor),
    );
    let mut anchors: Vec<String> = Vec::new();
    for p in &batch_posts {
        for a in &p.anchors {
            if !anchors.iter().any(|t| t == &a.text) {
                anchors.push(a.text.clone());
            }
        }
    }

    if re_audit.enabled {
        let valid_in_batch =
            batch_posts.iter().filter(|p| post_is_valid(p, profile)).count();
        let density = anchors.len() as f64 / valid_in_batch.max(1) as f64;
        let (lo, hi) = profile.density_interval;
        if density < lo || density > hi {
            return PopOutcome::DiscardedDensity { step_index: state.emitted_steps };
        }
    }

    PopOutcome::Emitted(StreamBatch {
        user_id: state.user_id.clone(),
        step_index: state.emitted_steps,
        posts: batch_posts,
        anchors,
        window,
    })
}

/// Drive push + repeated pops for one user's post stream. The final partial
/// buffer is never emitted as a step.
pub fn batch_stream(
    user_id: &str,
    posts: &[Post],
    profile: &PlatformProfile,
    re_audit: ReAudit,
) -> Vec<StreamBatch> {
    let mut state = BufferState::new(user_id);
    let mut batches = Vec::new();
    // posts arrive one at a time; a batch is emitted the moment the trigger
    // is reached, so batches normally hold exactly `buffer_trigger` valid
    // posts and the cap only matters for bulk re-ingestion
    for post in posts {
        push(&mut state, std::slice::from_ref(post), profile);
        loop {
            match try_pop(&mut state, profile, re_audit) {
                PopOutcome::Emitted(b) => batches.push(b),
                PopOutcome::DiscardedDensity { .. } => continue,
                PopOutcome::Pending => break,
            }
        }
    }
    batches
}

const STORE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct StoreFile {
    version: u32,
    states: BTreeMap<String, BufferState>,
}

/// Persist all buffer states to the store file (atomic rename).
pub fn persist(path: &Path, states: &BTreeMap<String, BufferState>) -> Result<(), StoreError> {
    let file = StoreFile { version: STORE_VERSION, states: states.clone() };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec(&file).expect("serializable store"))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Restore buffer states; a missing file is an empty map.
pub fn restore(path: &Path) -> Result<BTreeMap<String, BufferState>, StoreError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return Ok(BTreeMap::new());
    }
    let file: StoreFile = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    if file.version != STORE_VERSION {
        return Err(StoreError::Version { found: file.version, expected: STORE_VERSION });
    }
    Ok(file.states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Anchor;
    use chrono::TimeZone;

    fn mk_post(id: &str, ts: i64) -> Post {
        Post {
            post_id: id.into(),
            user_id: "u".into(),
            timestamp: chrono::Utc.timestamp_opt(ts, 0).unwrap(),
            title: String::new(),
            content: format!("内容{id}足够长了"),
            quote_content: String::new(),
            anchors: vec![Anchor { text: format!("tag{id}"), source_post: id.into() }],
        }
    }

    fn profile() -> PlatformProfile {
        let mut p = PlatformProfile::weibo_like();
        p.density_interval = (0.0, 100.0);
        p
    }

    #[test]
    fn below_trigger_no_emission() {
        let p = profile();
        let mut s = BufferState::new("u");
        let posts: Vec<Post> = (0..4).map(|i| mk_post(&format!("p{i}"), i * 100)).collect();
        push(&mut s, &posts, &p);
        assert_eq!(s.valid_count, 4);
        assert!(matches!(try_pop(&mut s, &p, ReAudit::default()), PopOutcome::Pending));

        push(&mut s, &[], &p);
        assert_eq!(s.valid_count, 4);
    }

    #[test]
    fn trigger_emits_and_clears() {
        let p = profile();
        let mut s = BufferState::new("u");
        let posts: Vec<Post> = (0..5).map(|i| mk_post(&format!("p{i}"), i * 100)).collect();
        push(&mut s, &posts, &p);
        match try_pop(&mut s, &p, ReAudit::default()) {
            PopOutcome::Emitted(b) => {
                assert_eq!(b.posts.len(), 5);
                assert_eq!(b.step_index, 1);
            }
            _ => panic!("expected emission"),
        }
        assert_eq!(s.valid_count, 0);
        assert!(s.pending.is_empty());
    }

    #[test]
    fn invalid_posts_do_not_count() {
        let mut p = profile();
        p.min_post_length = 5;
        let mut s = BufferState::new("u");
        let mut posts: Vec<Post> = (0..4).map(|i| mk_post(&format!("p{i}"), i * 100)).collect();
        let mut short = mk_post("tiny", 500);
        short.content = "短".into();
        posts.push(short);
        push(&mut s, &posts, &p);
        assert_eq!(s.valid_count, 4);
    }

    #[test]
    fn cap_limits_batch() {
        let mut p = profile();
        p.buffer_cap = 12;
        let mut s = BufferState::new("u");
        let posts: Vec<Post> = (0..14).map(|i| mk_post(&format!("p{i:02}"), i * 100)).collect();
        push(&mut s, &posts, &p);
        match try_pop(&mut s, &p, ReAudit::default()) {
            PopOutcome::Emitted(b) => assert_eq!(b.posts.len(), 12),
            _ => panic!(),
        }
        assert_eq!(s.valid_count, 2);
    }

    #[test]
    fn zhihu_trigger_three() {
        let mut p = profile();
        p.buffer_trigger = 3;
        let mut s = BufferState::new("u");
        push(&mut s, &[mk_post("a", 0), mk_post("b", 1)], &p);
        assert!(matches!(try_pop(&mut s, &p, ReAudit::default()), PopOutcome::Pending));
    }

    #[test]
    fn persist_restore_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        let mut states = BTreeMap::new();
        let p = profile();
        for i in 0..100 {
            let mut s = BufferState::new(&format!("u{i}"));
            push(&mut s, &[mk_post(&format!("x{i}"), i)], &p);
            states.insert(s.user_id.clone(), s);
        }
        persist(&path, &states).unwrap();
        let loaded = restore(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&states).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );

        let missing = dir.path().join("nope.json");
        assert!(restore(&missing).unwrap().is_empty());

        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(restore(&path), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn crash_replay_deduplicates() {
        let p = profile();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");

        let mut s = BufferState::new("u");
        let posts: Vec<Post> = (0..7).map(|i| mk_post(&format!("p{i}"), i * 100)).collect();
        push(&mut s, &posts[..5], &p);
        let PopOutcome::Emitted(first) = try_pop(&mut s, &p, ReAudit::default()) else {
            panic!()
        };
        let mut states = BTreeMap::new();
        states.insert("u".to_string(), s);
        persist(&path, &states).unwrap();

        // restart: posts 3..7 are pushed again; 3 and 4 precede the cursor
        let mut restored = restore(&path).unwrap().remove("u").unwrap();
        push(&mut restored, &posts[3..], &p);
        assert_eq!(restored.pending.len(), 2);
        assert_eq!(first.posts.len() + restored.pending.len(), 7);
    }
}
