//! Per-step task assembly: ground-truth splits from the next batch and the
//! four-family distractor pool at a fixed 25% positive ratio.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::TaskError;
use crate::index::{peer_lookup, ClusterIndex, TrendingTable};
use crate::model::{normalize_tag, selection_budget, CandidatePool, PoolLabel, StreamBatch};

/// Default cap on positives per step; larger ground-truth sets are subsampled.
pub const MAX_POSITIVES: usize = 12;

/// One evaluation step: the observed batch, the candidate pool, and the
/// answer key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepTask {
    pub user_id: String,
    pub step_index: usize,
    pub input_batch: StreamBatch,
    pub pool: CandidatePool,
    pub gt_keep: Vec<String>,
    pub gt_new: Vec<String>,
    /// Share of carried-over tags among positives.
    pub alpha: Ratio<i64>,
}

/// The label-free projection handed to agents. Serializing a [`StepTask`]
/// directly would leak the answer key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentTaskView {
    pub user_id: String,
    pub step_index: usize,
    pub posts: Vec<String>,
    pub pool_tags: Vec<String>,
    pub k: usize,
}

impl StepTask {
    pub fn agent_view(&self) -> AgentTaskView {
        AgentTaskView {
            user_id: self.user_id.clone(),
            step_index: self.step_index,
            posts: self.input_batch.posts.iter().map(|p| p.full_text()).collect(),
            pool_tags: self.pool.tags.iter().map(|(t, _)| t.clone()).collect(),
            k: self.pool.k,
        }
    }

    pub fn positives(&self) -> Vec<&str> {
        self.gt_keep.iter().chain(&self.gt_new).map(|s| s.as_str()).collect()
    }
}

/// Split the next batch's anchors against the accumulated history:
/// carried-over tags vs genuinely new ones.
pub fn split_ground_truth(
    history: &BTreeSet<String>,
    future: &[String],
) -> (Vec<String>, Vec<String>) {
    let mut keep = Vec::new();
    let mut new = Vec::new();
    let mut seen = BTreeSet::new();
    for tag in future {
        let tag = normalize_tag(tag);
        if !seen.insert(tag.clone()) {
            continue;
        }
        if history.contains(&tag) {
            keep.push(tag);
        } else {
            new.push(tag);
        }
    }
    (keep, new)
}

/// Historical anchors absent from the future batch, ordered by cumulative
/// frequency descending (lexicographic within ties).
pub fn build_decay_candidates(
    history_freq: &BTreeMap<String, u64>,
    future: &BTreeSet<String>,
) -> Vec<String> {
    let mut out: Vec<(&String, u64)> = history_freq
        .iter()
        .filter(|(tag, _)| !future.contains(*tag))
        .map(|(t, f)| (t, *f))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    out.into_iter().map(|(t, _)| t.clone()).collect()
}

/// Eligible distractor candidates per family, in draw order. Lists may
/// overlap; duplicates are resolved at draw time in class order.
#[derive(Debug, Clone, Default)]
pub struct DistractorSources {
    pub decay: Vec<String>,
    pub peer: Vec<String>,
    pub viral: Vec<String>,
    pub random: Vec<String>,
}

const CLASS_ORDER: [PoolLabel; 4] =
    [PoolLabel::Decay, PoolLabel::Peer, PoolLabel::Viral, PoolLabel::Random];

/// Fill 3·t_plus distractor slots. Targets start near-equal across the four
/// families (remainder assigned in decay, peer, viral, random order); any
/// family that runs short has its deficit redistributed uniformly across the
/// families that still have candidates left.
pub fn build_distractors(
    t_plus: usize,
    sources: &DistractorSources,
    positives: &[String],
    _seed: u64,
) -> Result<Vec<(String, PoolLabel)>, TaskError> {
    let budget = 3 * t_plus;
    let mut used: BTreeSet<String> = positives.iter().map(|t| normalize_tag(t)).collect();

    // de-duplicated availability per class, earlier classes claim shared tags
    let mut avail: Vec<Vec<String>> = Vec::with_capacity(4);
    {
        let mut claimed = used.clone();
        for list in [&sources.decay, &sources.peer, &sources.viral, &sources.random] {
            let mut cleaned = Vec::new();
            for tag in list.iter() {
                let tag = normalize_tag(tag);
                if claimed.insert(tag.clone()) {
                    cleaned.push(tag);
                }
            }
            avail.push(cleaned);
        }
    }
    let total_avail: usize = avail.iter().map(|a| a.len()).sum();
    if total_avail < budget {
        return Err(TaskError::InsufficientCandidates { needed: budget, available: total_avail });
    }

    let mut targets = [budget / 4; 4];
    for t in targets.iter_mut().take(budget % 4) {
        *t += 1;
    }

    let mut taken = [0usize; 4];
    loop {
        for c in 0..4 {
            taken[c] = targets[c].min(avail[c].len());
        }
        let filled: usize = taken.iter().sum();
        if filled == budget {
            break;
        }
        let shortfall = budget - filled;
        let open: Vec<usize> =
            (0..4).filter(|&c| avail[c].len() > taken[c]).collect();
        debug_assert!(!open.is_empty(), "total availability checked above");
        let per = shortfall / open.len();
        let rem = shortfall % open.len();
        for (i, &c) in open.iter().enumerate() {
            targets[c] = taken[c] + per + usize::from(i < rem);
        }
    }

    let mut out = Vec::with_capacity(budget);
    for (c, label) in CLASS_ORDER.iter().enumerate() {
        for tag in avail[c].iter().take(taken[c]) {
            if !used.insert(tag.clone()) {
                return Err(TaskError::DuplicateTag(tag.clone()));
            }
            out.push((tag.clone(), *label));
        }
    }
    Ok(out)
}

/// Subsample the positive set down to `max`, preserving the keep/new
/// proportion (keep share rounded half away from zero) with a seeded draw.
pub fn subsample_positives(
    gt_keep: &[String],
    gt_new: &[String],
    max: usize,
    seed: u64,
) -> (Vec<String>, Vec<String>) {
    let total = gt_keep.len() + gt_new.len();
    if total <= max {
        return (gt_keep.to_vec(), gt_new.to_vec());
    }
    let mut keep_quota =
        ((gt_keep.len() as f64 / total as f64) * max as f64).round() as usize;
    keep_quota = keep_quota.min(gt_keep.len()).min(max);
    let mut new_quota = max - keep_quota;
    if new_quota > gt_new.len() {
        keep_quota += new_quota - gt_new.len();
        new_quota = gt_new.len();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |src: &[String], n: usize, rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..src.len()).collect();
        idx.shuffle(rng);
        idx.truncate(n);
        idx.sort_unstable();
        idx.into_iter().map(|i| src[i].clone()).collect::<Vec<_>>()
    };
    let keep = pick(gt_keep, keep_quota, &mut rng);
    let new = pick(gt_new, new_quota, &mut rng);
    (keep, new)
}

/// Combine positives and distractors into the final shuffled pool.
pub fn assemble_task(
    batch: &StreamBatch,
    gt_keep: Vec<String>,
    gt_new: Vec<String>,
    distractors: Vec<(String, PoolLabel)>,
    seed: u64,
) -> Result<StepTask, TaskError> {
    let positives = gt_keep.len() + gt_new.len();
    if positives == 0 {
        return Err(TaskError::Inconsistent("no positive tags for the step".into()));
    }
    if distractors.len() != 3 * positives {
        return Err(TaskError::Inconsistent(format!(
            "expected {} distractors for {} positives, got {}",
            3 * positives,
            positives,
            distractors.len()
        )));
    }
    let mut tags: Vec<(String, PoolLabel)> = Vec::with_capacity(4 * positives);
    let mut seen = BTreeSet::new();
    for tag in &gt_keep {
        tags.push((tag.clone(), PoolLabel::Keep));
    }
    for tag in &gt_new {
        tags.push((tag.clone(), PoolLabel::New));
    }
    tags.extend(distractors);
    for (tag, _) in &tags {
        if !seen.insert(normalize_tag(tag)) {
            return Err(TaskError::DuplicateTag(tag.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tags.shuffle(&mut rng);
    let k = selection_budget(tags.len()).expect("non-empty pool");
    debug_assert_eq!(k, positives);
    let alpha = Ratio::new(gt_keep.len() as i64, positives as i64);
    Ok(StepTask {
        user_id: batch.user_id.clone(),
        step_index: batch.step_index,
        input_batch: batch.clone(),
        pool: CandidatePool { tags, k },
        gt_keep,
        gt_new,
        alpha,
    })
}

/// Deterministic per-(user, step) seed derived from the run seed.
pub fn derive_seed(run_seed: u64, user_id: &str, step_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(user_id.as_bytes());
    h.update((step_index as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[0..8].try_into().unwrap())
}

/// Build the full task list for one user's emitted batches: m batches yield
/// m-1 tasks, each scored against the following batch. Steps whose future
/// batch has no anchors are skipped.
/// How far down the trending table the viral distractor source reaches. A
/// platform's hot list is a bounded leaderboard, not the full vocabulary;
/// without a cap the viral class would absorb every tag and starve the
/// random class during cross-class deduplication.
pub const TRENDING_TOP_N: usize = 50;

pub fn build_user_tasks(
    batches: &[StreamBatch],
    index: &ClusterIndex,
    trending: Option<&TrendingTable>,
    global_pool: &[String],
    run_seed: u64,
    max_positives: usize,
) -> Result<Vec<StepTask>, TaskError> {
    let mut tasks = Vec::new();
    let mut history_freq: BTreeMap<String, u64> = BTreeMap::new();
    for pair in batches.windows(2) {
        let (batch, future) = (&pair[0], &pair[1]);
        for tag in &batch.anchors {
            *history_freq.entry(normalize_tag(tag)).or_insert(0) += 1;
        }
        if future.anchors.is_empty() {
            continue;
        }
        let seed = derive_seed(run_seed, &batch.user_id, batch.step_index);
        let history: BTreeSet<String> = history_freq.keys().cloned().collect();
        let (gt_keep, gt_new) = split_ground_truth(&history, &future.anchors);
        let (gt_keep, gt_new) =
            subsample_positives(&gt_keep, &gt_new, max_positives, seed);
        let positives: Vec<String> =
            gt_keep.iter().chain(&gt_new).cloned().collect();
        if positives.is_empty() {
            continue;
        }

        let future_set: BTreeSet<String> =
            future.anchors.iter().map(|t| normalize_tag(t)).collect();
        let decay = build_decay_candidates(&history_freq, &future_set);

        let mut peer: Vec<String> = Vec::new();
        for tag in history.iter() {
            for p in peer_lookup(index, tag, &history) {
                if !future_set.contains(&p) && !peer.contains(&p) {
                    peer.push(p);
                }
            }
        }
        peer.sort_by(|a, b| {
            let fa = index.tag_registry.get(a).map(|r| r.frequency).unwrap_or(0);
            let fb = index.tag_registry.get(b).map(|r| r.frequency).unwrap_or(0);
            fb.cmp(&fa).then_with(|| a.cmp(b))
        });

        let user_clusters: BTreeSet<usize> =
            history.iter().filter_map(|t| index.cluster_of(t)).collect();
        let viral: Vec<String> = trending
            .map(|table| {
                table
                    .entries
                    .iter()
                    .take(TRENDING_TOP_N)
                    .map(|(t, _)| t.clone())
                    .filter(|t| {
                        !history.contains(t)
                            && !future_set.contains(t)
                            && index
                                .cluster_of(t)
                                .map(|c| !user_clusters.contains(&c))
                                .unwrap_or(true)
                    })
                    .collect()
            })
            .unwrap_or_default();

        let mut random: Vec<String> = global_pool
            .iter()
            .map(|t| normalize_tag(t))
            .filter(|t| !history.contains(t) && !future_set.contains(t))
            .collect();
        random.sort();
        random.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        random.shuffle(&mut rng);

        let sources = DistractorSources { decay, peer, viral, random };
        let distractors =
            build_distractors(positives.len(), &sources, &positives, seed)?;
        tasks.push(assemble_task(batch, gt_keep, gt_new, distractors, seed)?);
    }
    Ok(tasks)
}
