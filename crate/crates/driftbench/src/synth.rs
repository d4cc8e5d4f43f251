//! Synthetic UGC streams with controllable interest drift, plus the oracle
//! agents used to validate the whole framework without a real corpus.

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ModelError;
use crate::harness::Agent;
use crate::index::TrendingTable;
use crate::model::{normalize_tag, PersonaState, Post, Prediction, UserMeta};
use crate::task::{AgentTaskView, StepTask};

/// Parameters of the drift process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub seed: u64,
    pub users: usize,
    /// Rounds per user, drawn uniformly from this inclusive range.
    pub steps_min: usize,
    pub steps_max: usize,
    /// Initial active interests per user, inclusive range.
    pub interests_min: usize,
    pub interests_max: usize,
    /// Per-step survival probability of an active interest (before aging).
    pub keep_prob: f64,
    /// Aging horizon in steps: survival is keep_prob^(1 + age/half_life),
    /// so older interests churn faster unless keep_prob is 1.
    pub half_life: f64,
    /// Expected new interests per step.
    pub arrival_rate: f64,
    /// Tag universe shape.
    pub clusters: usize,
    pub tags_per_cluster: usize,
    /// Posts emitted per active interest per step, inclusive range.
    pub posts_min: usize,
    pub posts_max: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            seed: 0,
            users: 50,
            steps_min: 4,
            steps_max: 8,
            interests_min: 3,
            interests_max: 6,
            keep_prob: 0.7,
            half_life: 4.0,
            arrival_rate: 1.5,
            clusters: 40,
            tags_per_cluster: 12,
            posts_min: 1,
            posts_max: 2,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.users == 0 {
            return Err(ModelError::InvalidInput("users must be >= 1".into()));
        }
        if self.steps_min < 2 || self.steps_max < self.steps_min {
            return Err(ModelError::InvalidInput(
                "steps range must satisfy 2 <= min <= max".into(),
            ));
        }
        if self.interests_min == 0 || self.interests_max < self.interests_min {
            return Err(ModelError::InvalidInput(
                "interests range must satisfy 1 <= min <= max".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.keep_prob) {
            return Err(ModelError::InvalidInput("keep_prob must lie in [0, 1]".into()));
        }
        if self.half_life <= 0.0 || self.arrival_rate < 0.0 {
            return Err(ModelError::InvalidInput(
                "half_life must be positive and arrival_rate non-negative".into(),
            ));
        }
        if self.clusters == 0 || self.tags_per_cluster == 0 {
            return Err(ModelError::InvalidInput("cluster shape counts must be >= 1".into()));
        }
        if self.posts_min == 0 || self.posts_max < self.posts_min {
            return Err(ModelError::InvalidInput(
                "posts range must satisfy 1 <= min <= max".into(),
            ));
        }
        Ok(())
    }

    /// Full deterministic tag universe. Tags in one cluster repeat a shared
    /// topic token (so hashed embeddings land close together) and carry a
    /// hashed suffix so lexicographic order is unrelated to generation order.
    pub fn tag_universe(&self) -> Vec<String> {
        let mut tags = Vec::with_capacity(self.clusters * self.tags_per_cluster);
        for c in 0..self.clusters {
            for j in 0..self.tags_per_cluster {
                let mut h = Sha256::new();
                h.update(self.seed.to_le_bytes());
                h.update(b"tag");
                h.update((c as u64).to_le_bytes());
                h.update((j as u64).to_le_bytes());
                let digest = h.finalize();
                tags.push(format!(
                    "主题{c:03} 主题{c:03} {:02x}{:02x}",
                    digest[0], digest[1]
                ));
            }
        }
        tags
    }
}

const TEMPLATES: [(&str, &str); 4] = [
    ("今天又刷到了 #", "# 相关的内容，越看越喜欢，顺手记录一下。"),
    ("最近一直在关注 #", "#，感觉这个方向值得长期跟下去。"),
    ("分享一条关于 #", "# 的心得，欢迎同好一起交流讨论。"),
    ("周末花了点时间研究 #", "#，进展不错，下次继续更新。"),
];

fn derive_seed(seed: u64, label: &str, n: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    h.update(n.to_le_bytes());
    u64::from_le_bytes(h.finalize()[0..8].try_into().unwrap())
}

/// One generated user: profile, posts in chronological order, and the latent
/// per-round interest sets (kept for test oracles; the pipeline never reads
/// them).
#[derive(Debug, Clone)]
pub struct SynthUser {
    pub meta: UserMeta,
    pub posts: Vec<Post>,
    pub latent_interests: Vec<Vec<String>>,
}

/// Generate the full corpus. Deterministic for a fixed config.
pub fn generate_stream(cfg: &DriftConfig) -> Result<Vec<SynthUser>, ModelError> {
    cfg.validate()?;
    let universe = cfg.tag_universe();
    let mut users = Vec::with_capacity(cfg.users);
    for u in 0..cfg.users {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "user", u as u64));
        let user_id = format!("su{u:05}");
        let steps = rng.gen_range(cfg.steps_min..=cfg.steps_max);
        let initial = rng.gen_range(cfg.interests_min..=cfg.interests_max);

        // age per active interest, in steps since adoption
        let mut active: Vec<(String, u32)> = Vec::new();
        let pick_new = |active: &[(String, u32)], rng: &mut ChaCha8Rng| loop {
            let tag = universe[rng.gen_range(0..universe.len())].clone();
            if !active.iter().any(|(t, _)| *t == tag) {
                return tag;
            }
        };
        for _ in 0..initial.min(universe.len()) {
            let tag = pick_new(&active, &mut rng);
            active.push((tag, 0));
        }

        let mut posts = Vec::new();
        let mut latent = Vec::with_capacity(steps);
        let mut clock = 0i64;
        for step in 0..steps {
            if step > 0 {
                active.retain(|(_, age)| {
                    let survival =
                        cfg.keep_prob.powf(1.0 + *age as f64 / cfg.half_life);
                    rng.gen::<f64>() < survival
                });
                for (_, age) in &mut active {
                    *age += 1;
                }
                let mut arrivals = cfg.arrival_rate.floor() as usize;
                if rng.gen::<f64>() < cfg.arrival_rate.fract() {
                    arrivals += 1;
                }
                for _ in 0..arrivals {
                    if active.len() >= universe.len() {
                        break;
                    }
                    let tag = pick_new(&active, &mut rng);
                    active.push((tag, 0));
                }
            }
            latent.push(active.iter().map(|(t, _)| t.clone()).collect());
            for (tag, _) in &active {
                let n_posts = rng.gen_range(cfg.posts_min..=cfg.posts_max);
                for _ in 0..n_posts {
                    let (pre, post_part) = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
                    clock += rng.gen_range(60..3600);
                    // serial suffix keeps every post textually unique so
                    // generated corpora pass the duplication filters
                    let serial = posts.len();
                    posts.push(Post {
                        post_id: format!("{user_id}-p{serial:04}"),
                        user_id: user_id.clone(),
                        timestamp: Utc
                            .timestamp_opt(1_700_000_000 + clock, 0)
                            .unwrap(),
                        title: String::new(),
                        content: format!("{pre}{tag}{post_part} 第{serial:04}条记录。"),
                        quote_content: String::new(),
                        anchors: Vec::new(),
                    });
                }
            }
        }
        users.push(SynthUser {
            meta: UserMeta {
                user_id: user_id.clone(),
                username: format!("user{u}"),
                bio: String::new(),
                gender: None,
                location: None,
                followers_count: 0,
                following_count: 0,
                posts_count: posts.len() as u64,
                verified_type: None,
            },
            posts,
            latent_interests: latent,
        });
    }
    Ok(users)
}

// ---------------------------------------------------------------------------
// Oracles

/// Validation agents with known behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Answers with exactly the positives; needs answer-key access.
    Perfect,
    /// Projects historical tags forward: the k pool tags with the highest
    /// observed frequency so far, ties lexicographic.
    CopyHistory,
    /// k uniform pool tags, seeded.
    Random,
    /// k pool tags ranked by global trending coverage.
    Popularity,
}

/// Pure single-step oracle prediction.
pub fn oracle_predict(
    kind: OracleKind,
    view: &AgentTaskView,
    history_freq: &BTreeMap<String, u64>,
    answer_key: Option<&StepTask>,
    trending: Option<&TrendingTable>,
    seed: u64,
) -> Prediction {
    let k = view.k;
    let tags = match kind {
        OracleKind::Perfect => {
            let key = answer_key.expect("perfect oracle requires the answer key");
            key.gt_keep.iter().chain(&key.gt_new).cloned().collect()
        }
        OracleKind::CopyHistory => {
            let mut pool: Vec<(&String, u64)> = view
                .pool_tags
                .iter()
                .map(|t| {
                    (t, history_freq.get(&normalize_tag(t)).copied().unwrap_or(0))
                })
                .collect();
            pool.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            pool.into_iter().take(k).map(|(t, _)| t.clone()).collect()
        }
        OracleKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pool = view.pool_tags.clone();
            pool.shuffle(&mut rng);
            pool.truncate(k);
            pool
        }
        OracleKind::Popularity => {
            let coverage: BTreeMap<&str, f64> = trending
                .map(|t| {
                    t.entries.iter().map(|(tag, c)| (tag.as_str(), *c)).collect()
                })
                .unwrap_or_default();
            let mut pool: Vec<(&String, f64)> = view
                .pool_tags
                .iter()
                .map(|t| (t, coverage.get(t.as_str()).copied().unwrap_or(0.0)))
                .collect();
            pool.sort_by(|a, b| {
                b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0))
            });
            pool.into_iter().take(k).map(|(t, _)| t.clone()).collect()
        }
    };
    Prediction {
        predicted_tags: tags,
        persona_summary: String::new(),
        reasoning: String::new(),
        raw_response: String::new(),
    }
}

/// Stateful oracle wrapper fitting the harness agent interface. History is
/// accumulated from the double-hash anchors visible in each batch's posts,
/// never from the answer key (except for the perfect oracle).
pub struct OracleAgent {
    pub kind: OracleKind,
    pub seed: u64,
    pub trending: Option<TrendingTable>,
    /// step_index -> answer key, required by the perfect oracle.
    pub answer_keys: BTreeMap<usize, StepTask>,
    history: BTreeMap<String, u64>,
}

impl OracleAgent {
    pub fn new(kind: OracleKind, seed: u64) -> Self {
        OracleAgent {
            kind,
            seed,
            trending: None,
            answer_keys: BTreeMap::new(),
            history: BTreeMap::new(),
        }
    }

    pub fn with_answer_keys(mut self, tasks: &[StepTask]) -> Self {
        for t in tasks {
            self.answer_keys.insert(t.step_index, t.clone());
        }
        self
    }
}

impl Agent for OracleAgent {
    fn respond(
        &mut self,
        view: &AgentTaskView,
        _persona: &PersonaState,
    ) -> Result<Prediction, crate::error::HarnessError> {
        for post in &view.posts {
            for anchor in crate::anchor::extract_double_hash(post) {
                *self.history.entry(normalize_tag(&anchor)).or_insert(0) += 1;
            }
        }
        // domain-separate from the task builder's per-step seed: with the
        // same run seed the random oracle would otherwise replay the pool
        // shuffle's ChaCha stream and stop being uniform over the pool
        let step_seed =
            derive_seed(self.seed, &format!("oracle/{}", view.user_id), view.step_index as u64);
        Ok(oracle_predict(
            self.kind,
            view,
            &self.history,
            self.answer_keys.get(&view.step_index),
            self.trending.as_ref(),
            step_seed,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CandidatePool, PoolLabel, StreamBatch};
    use num_rational::Ratio;

    fn corpus_signature(users: &[SynthUser]) -> String {
        users
            .iter()
            .flat_map(|u| u.posts.iter())
            .map(|p| format!("{}|{}|{}", p.post_id, p.timestamp, p.content))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn deterministic_generation() {
        let cfg = DriftConfig { users: 5, ..Default::default() };
        let a = generate_stream(&cfg).unwrap();
        let b = generate_stream(&cfg).unwrap();
        assert_eq!(corpus_signature(&a), corpus_signature(&b));
        let other = generate_stream(&DriftConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(corpus_signature(&a), corpus_signature(&other));
    }

    #[test]
    fn frozen_interests() {
        let cfg = DriftConfig {
            users: 3,
            keep_prob: 1.0,
            arrival_rate: 0.0,
            ..Default::default()
        };
        for user in generate_stream(&cfg).unwrap() {
            let first = &user.latent_interests[0];
            for step in &user.latent_interests {
                assert_eq!(step, first);
            }
        }
    }

    #[test]
    fn full_churn() {
        let cfg = DriftConfig { users: 3, keep_prob: 0.0, ..Default::default() };
        for user in generate_stream(&cfg).unwrap() {
            for pair in user.latent_interests.windows(2) {
                for tag in &pair[1] {
                    assert!(!pair[0].contains(tag), "tag survived with keep_prob 0");
                }
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = DriftConfig::default();
        cfg.interests_min = 0;
        assert!(generate_stream(&cfg).is_err());
        let mut cfg = DriftConfig::default();
        cfg.keep_prob = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = DriftConfig::default();
        cfg.steps_min = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn posts_carry_double_hash_anchors() {
        let cfg = DriftConfig { users: 2, ..Default::default() };
        for user in generate_stream(&cfg).unwrap() {
            assert!(!user.posts.is_empty());
            for post in &user.posts {
                let anchors = crate::anchor::extract_double_hash(&post.content);
                assert_eq!(anchors.len(), 1, "post {:?}", post.content);
            }
            // chronological order
            for w in user.posts.windows(2) {
                assert!(w[0].timestamp < w[1].timestamp);
            }
        }
    }

    fn view_of(pool: &[&str], k: usize) -> AgentTaskView {
        AgentTaskView {
            user_id: "u".into(),
            step_index: 1,
            posts: Vec::new(),
            pool_tags: pool.iter().map(|s| s.to_string()).collect(),
            k,
        }
    }

    #[test]
    fn perfect_oracle_returns_positives() {
        let ts = Utc.timestamp_opt(0, 0).unwrap();
        let task = StepTask {
            user_id: "u".into(),
            step_index: 1,
            input_batch: StreamBatch {
                user_id: "u".into(),
                step_index: 1,
                posts: Vec::new(),
                anchors: Vec::new(),
                window: (ts, ts),
            },
            pool: CandidatePool {
                tags: vec![
                    ("a".into(), PoolLabel::Keep),
                    ("b".into(), PoolLabel::New),
                    ("c".into(), PoolLabel::Random),
                    ("d".into(), PoolLabel::Random),
                    ("e".into(), PoolLabel::Random),
                    ("f".into(), PoolLabel::Random),
                    ("g".into(), PoolLabel::Random),
                    ("h".into(), PoolLabel::Random),
                ],
                k: 2,
            },
            gt_keep: vec!["a".into()],
            gt_new: vec!["b".into()],
            alpha: Ratio::new(1, 2),
        };
        let p = oracle_predict(
            OracleKind::Perfect,
            &task.agent_view(),
            &BTreeMap::new(),
            Some(&task),
            None,
            0,
        );
        assert_eq!(p.predicted_tags, vec!["a", "b"]);
    }

    #[test]
    fn copy_history_frequency_then_lexicographic() {
        let mut history = BTreeMap::new();
        history.insert("c".to_string(), 5u64);
        history.insert("a".to_string(), 5);
        history.insert("d".to_string(), 9);
        let view = view_of(&["a", "b", "c", "d"], 3);
        let p = oracle_predict(OracleKind::CopyHistory, &view, &history, None, None, 0);
        assert_eq!(p.predicted_tags, vec!["d", "a", "c"]);
    }

    #[test]
    fn random_oracle_seeded() {
        let view = view_of(&["a", "b", "c", "d", "e", "f", "g", "h"], 2);
        let empty = BTreeMap::new();
        let p1 = oracle_predict(OracleKind::Random, &view, &empty, None, None, 3);
        let p2 = oracle_predict(OracleKind::Random, &view, &empty, None, None, 3);
        assert_eq!(p1.predicted_tags, p2.predicted_tags);
        assert_eq!(p1.predicted_tags.len(), 2);
        for t in &p1.predicted_tags {
            assert!(view.pool_tags.contains(t));
        }
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..50 {
            let p = oracle_predict(OracleKind::Random, &view, &empty, None, None, seed);
            seen.insert(p.predicted_tags.clone());
        }
        assert!(seen.len() > 10, "seeded draws should vary across seeds");
    }

    #[test]
    fn popularity_ranks_by_coverage() {
        let trending = TrendingTable {
            date: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            entries: vec![("b".into(), 0.5), ("d".into(), 0.2)],
        };
        let view = view_of(&["a", "b", "c", "d"], 2);
        let p = oracle_predict(
            OracleKind::Popularity,
            &view,
            &BTreeMap::new(),
            None,
            Some(&trending),
            0,
        );
        assert_eq!(p.predicted_tags, vec!["b", "d"]);
    }
}
