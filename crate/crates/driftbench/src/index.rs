//! Offline distractor sources: the daily trending table with blacklist
//! feedback, and the incremental tag-clustering index used for peer lookups.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::StoreError;
use crate::model::{normalize_tag, PlatformProfile, Post};

/// Default embedding dimension.
pub const EMBED_DIM: usize = 512;
/// Outlier distance threshold for incremental assignment.
pub const OUTLIER_THRESHOLD: f64 = 0.85;
/// Blacklist coverage threshold (0.02%).
pub const BLACKLIST_TAU: f64 = 0.0002;

// ---------------------------------------------------------------------------
// Trending table

/// Daily table of tag coverage over a sampled post set, sorted by coverage
/// descending.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendingTable {
    pub date: NaiveDate,
    pub entries: Vec<(String, f64)>,
}

/// Coverage(t) = |posts containing t| / |sample|, over per-post-deduplicated
/// anchors.
pub fn sample_coverage(date: NaiveDate, posts: &[Post]) -> TrendingTable {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for post in posts {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for a in &post.anchors {
            seen.insert(normalize_tag(&a.text));
        }
        for tag in seen {
            *counts.entry(tag).or_insert(0) += 1;
        }
    }
    let n = posts.len();
    let mut entries: Vec<(String, f64)> = counts
        .into_iter()
        .map(|(tag, c)| (tag, c as f64 / n.max(1) as f64))
        .collect();
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    TrendingTable { date, entries }
}

/// Add tags at or above coverage τ to the blacklist; returns the newly added
/// tags. Re-running on the same table yields an empty delta.
pub fn update_blacklist(
    blacklist: &mut BTreeSet<String>,
    table: &TrendingTable,
    tau: f64,
) -> Vec<String> {
    let mut delta = Vec::new();
    for (tag, coverage) in &table.entries {
        if *coverage >= tau && blacklist.insert(tag.clone()) {
            delta.push(tag.clone());
        }
    }
    delta
}

/// Write a trending table as a dated tab-delimited file.
pub fn write_trending(dir: &Path, table: &TrendingTable) -> Result<std::path::PathBuf, StoreError> {
    let path = dir.join(format!("trending-{}.tsv", table.date));
    let mut out = String::new();
    for (tag, cov) in &table.entries {
        out.push_str(&format!("{tag}\t{cov}\n"));
    }
    fs::write(&path, out)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Embedding

/// Text-to-unit-vector encoder.
pub trait Embedder {
    fn dimension(&self) -> usize;
    /// Must return a unit-norm vector of length `dimension()`.
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Seeded feature-hashing embedder: tokens are whitespace words plus
/// character bigrams, hashed into `dim` signed buckets, then L2-normalized.
/// Hermetic stand-in for a remote sentence encoder.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashingEmbedder {
    pub fn new(seed: u64) -> Self {
        HashingEmbedder { dim: EMBED_DIM, seed }
    }

    fn bucket(&self, token: &str) -> (usize, f64) {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let idx = u64::from_le_bytes(digest[0..8].try_into().unwrap()) as usize % self.dim;
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        (idx, sign)
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let normalized = normalize_tag(text);
        for word in normalized.split_whitespace() {
            let (i, s) = self.bucket(word);
            v[i] += s;
            let chars: Vec<char> = word.chars().collect();
            for pair in chars.windows(2) {
                let bigram: String = pair.iter().collect();
                let (i, s) = self.bucket(&bigram);
                v[i] += s;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        } else {
            // degenerate input: deterministic fallback direction
            v[0] = 1.0;
        }
        v
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Distance between a unit vector and a unit centroid via the inner-product
/// identity sqrt(2 - 2*e*mu).
pub fn unit_distance(e: &[f64], mu: &[f64]) -> f64 {
    (2.0 - 2.0 * dot(e, mu)).max(0.0).sqrt()
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

// ---------------------------------------------------------------------------
// Cluster index

/// Per-tag bookkeeping: first-seen date and cumulative frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagRecord {
    pub first_seen: NaiveDate,
    pub frequency: u64,
}

/// The clustering index: unit centroids, cluster membership, and the outlier
/// registry. Every indexed tag is in exactly one cluster or in `outliers`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClusterIndex {
    pub centroids: Vec<Vec<f64>>,
    pub members: BTreeMap<usize, Vec<String>>,
    pub outliers: Vec<String>,
    pub tag_registry: BTreeMap<String, TagRecord>,
    /// Tag to cluster id, for O(1) lookup.
    pub assignments: BTreeMap<String, usize>,
}

impl ClusterIndex {
    pub fn cluster_of(&self, tag: &str) -> Option<usize> {
        self.assignments.get(&normalize_tag(tag)).copied()
    }
}

/// Mini-batch k-means schedule. The defaults match the reference setting;
/// smaller budgets are useful for synthetic-scale corpora.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KmeansParams {
    pub batch_size: usize,
    pub iterations: usize,
    pub initializations: u64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        KmeansParams { batch_size: 4096, iterations: 300, initializations: 3 }
    }
}

fn kmeans_run(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    params: &KmeansParams,
) -> (Vec<Vec<f64>>, f64) {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();

    // k-means++ style seeding on a sample keeps initial centers spread out
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].clone());
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| {
                        let d = unit_distance(p, c);
                        d * d
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            centroids.push(points[rng.gen_range(0..n)].clone());
            continue;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = n - 1;
        for (i, w) in weights.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        centroids.push(points[chosen].clone());
    }

    let mut counts = vec![0u64; k];
    let batch = params.batch_size.min(n);
    for _ in 0..params.iterations {
        let sample: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..n)).collect();
        for &i in &sample {
            let p = &points[i];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, mu) in centroids.iter().enumerate() {
                let d = unit_distance(p, mu);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            counts[best] += 1;
            let eta = 1.0 / counts[best] as f64;
            for (cx, px) in centroids[best].iter_mut().zip(p) {
                *cx = (1.0 - eta) * *cx + eta * px;
            }
        }
    }
    for c in &mut centroids {
        l2_normalize(c);
    }

    let wcss: f64 = points
        .iter()
        .map(|p| {
            centroids
                .iter()
                .map(|c| {
                    let d = unit_distance(p, c);
                    d * d
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    (centroids, wcss)
}

/// Build the cluster index over all registry tags with frequency at or above
/// the platform's minimum. Runs 3 seeded initializations and keeps the one
/// with the lowest within-cluster sum of squares. Deterministic for a fixed
/// seed. If fewer tags than clusters exist, the cluster count is reduced.
pub fn base_cluster(
    registry: &BTreeMap<String, TagRecord>,
    embedder: &dyn Embedder,
    profile: &PlatformProfile,
    seed: u64,
) -> ClusterIndex {
    base_cluster_with(registry, embedder, profile, seed, &KmeansParams::default())
}

/// [`base_cluster`] with an explicit training schedule.
pub fn base_cluster_with(
    registry: &BTreeMap<String, TagRecord>,
    embedder: &dyn Embedder,
    profile: &PlatformProfile,
    seed: u64,
    params: &KmeansParams,
) -> ClusterIndex {
    let tags: Vec<&String> = registry
        .iter()
        .filter(|(_, rec)| rec.frequency >= profile.min_tag_frequency)
        .map(|(t, _)| t)
        .collect();
    let mut index = ClusterIndex {
        centroids: Vec::new(),
        members: BTreeMap::new(),
        outliers: Vec::new(),
        tag_registry: registry.clone(),
        assignments: BTreeMap::new(),
    };
    if tags.is_empty() {
        return index;
    }
    let k = profile.cluster_count.min(tags.len());
    if k < profile.cluster_count {
        eprintln!(
            "warning: only {} eligible tags, reducing cluster count from {} to {}",
            tags.len(),
            profile.cluster_count,
            k
        );
    }
    let points: Vec<Vec<f64>> = tags.iter().map(|t| embedder.embed(t)).collect();

    let mut best: Option<(Vec<Vec<f64>>, f64)> = None;
    for init in 0..params.initializations {
        let run = kmeans_run(&points, k, seed.wrapping_add(init), params);
        if best.as_ref().map(|(_, w)| run.1 < *w).unwrap_or(true) {
            best = Some(run);
        }
    }
    let (centroids, _) = best.unwrap();
    index.centroids = centroids;

    for (tag, point) in tags.iter().zip(&points) {
        let mut best_c = 0;
        let mut best_d = f64::INFINITY;
        for (c, mu) in index.centroids.iter().enumerate() {
            let d = unit_distance(point, mu);
            if d < best_d {
                best_d = d;
                best_c = c;
            }
        }
        index.assignments.insert((*tag).clone(), best_c);
        index.members.entry(best_c).or_default().push((*tag).clone());
    }
    index
}

/// Assign new tags against the fixed centroids: nearest centroid by
/// sqrt(2 - 2*e*mu), ties to the lowest cluster id; tags farther than
/// `delta_out` from every centroid go to the outlier registry instead.
pub fn assign_incremental(
    index: &mut ClusterIndex,
    new_tags: &[String],
    embedder: &dyn Embedder,
    delta_out: f64,
) {
    for tag in new_tags {
        let tag = normalize_tag(tag);
        if index.assignments.contains_key(&tag) || index.outliers.contains(&tag) {
            continue;
        }
        let e = embedder.embed(&tag);
        let mut best: Option<(usize, f64)> = None;
        for (c, mu) in index.centroids.iter().enumerate() {
            let d = unit_distance(&e, mu);
            let better = best.map(|(_, bd)| d < bd).unwrap_or(true);
            if better {
                best = Some((c, d));
            }
        }
        match best {
            Some((c, d)) if d < delta_out => {
                index.assignments.insert(tag.clone(), c);
                index.members.entry(c).or_default().push(tag);
            }
            _ => index.outliers.push(tag),
        }
    }
}

/// Other members of the tag's cluster, minus the exclusion set, ordered by
/// registry frequency descending then lexicographic. Outlier-registry and
/// unknown tags yield an empty list.
pub fn peer_lookup(index: &ClusterIndex, tag: &str, exclude: &BTreeSet<String>) -> Vec<String> {
    let tag = normalize_tag(tag);
    let Some(cluster) = index.assignments.get(&tag) else {
        return Vec::new();
    };
    let mut peers: Vec<String> = index
        .members
        .get(cluster)
        .map(|m| {
            m.iter()
                .filter(|t| **t != tag && !exclude.contains(*t))
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    peers.sort_by(|a, b| {
        let fa = index.tag_registry.get(a).map(|r| r.frequency).unwrap_or(0);
        let fb = index.tag_registry.get(b).map(|r| r.frequency).unwrap_or(0);
        fb.cmp(&fa).then_with(|| a.cmp(b))
    });
    peers
}

const INDEX_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct IndexFile {
    version: u32,
    index: ClusterIndex,
}

pub fn save_index(path: &Path, index: &ClusterIndex) -> Result<(), StoreError> {
    let file = IndexFile { version: INDEX_VERSION, index: index.clone() };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec(&file).expect("serializable index"))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<ClusterIndex, StoreError> {
    let bytes = fs::read(path)?;
    let file: IndexFile = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    if file.version != INDEX_VERSION {
        return Err(StoreError::Version { found: file.version, expected: INDEX_VERSION });
    }
    Ok(file.index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Anchor;
    use chrono::{TimeZone, Utc};

    fn post_with_tags(id: &str, tags: &[&str]) -> Post {
        Post {
            post_id: id.into(),
            user_id: "u".into(),
            timestamp: Utc.timestamp_opt(0, 0).unwrap(),
            title: String::new(),
            content: String::new(),
            quote_content: String::new(),
            anchors: tags
                .iter()
                .map(|t| Anchor { text: (*t).to_string(), source_post: id.into() })
                .collect(),
        }
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
    }

    #[test]
    fn coverage_ratios() {
        let posts = vec![
            post_with_tags("a", &["旅行", "美食"]),
            post_with_tags("b", &["旅行"]),
            post_with_tags("c", &["旅行", "旅行"]),
            post_with_tags("d", &["健身"]),
        ];
        let table = sample_coverage(date(), &posts);
        let get = |t: &str| table.entries.iter().find(|(x, _)| x == t).unwrap().1;
        assert_eq!(get("旅行"), 0.75);
        assert_eq!(get("美食"), 0.25);
        assert_eq!(get("健身"), 0.25);
        // sorted descending
        assert_eq!(table.entries[0].0, "旅行");
        for w in table.entries.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn coverage_empty_sample() {
        assert!(sample_coverage(date(), &[]).entries.is_empty());
    }

    #[test]
    fn planted_frequency_coverage() {
        // 150 occurrences in a 500k sample
        let mut posts: Vec<Post> = (0..150)
            .map(|i| post_with_tags(&format!("hit{i}"), &["热搜词"]))
            .collect();
        posts.extend((0..499_850).map(|i| post_with_tags(&format!("p{i}"), &[])));
        let table = sample_coverage(date(), &posts);
        let cov = table.entries.iter().find(|(t, _)| t == "热搜词").unwrap().1;
        assert!((cov - 0.0003).abs() < 1e-12);

        let mut blacklist = BTreeSet::new();
        let delta = update_blacklist(&mut blacklist, &table, BLACKLIST_TAU);
        assert_eq!(delta, vec!["热搜词".to_string()]);
        // idempotent
        assert!(update_blacklist(&mut blacklist, &table, BLACKLIST_TAU).is_empty());
    }

    #[test]
    fn blacklist_threshold_boundary() {
        let table = TrendingTable {
            date: date(),
            entries: vec![("hot".into(), 0.0003), ("cool".into(), 0.0001)],
        };
        let mut blacklist = BTreeSet::new();
        update_blacklist(&mut blacklist, &table, 0.0002);
        assert!(blacklist.contains("hot"));
        assert!(!blacklist.contains("cool"));
    }

    #[test]
    fn embedder_unit_norm_and_deterministic() {
        let e = HashingEmbedder::new(7);
        for text in ["滑雪", "滑雪 雪板", "a", ""] {
            let v = e.embed(text);
            assert_eq!(v.len(), EMBED_DIM);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "norm for {text:?}");
        }
        assert_eq!(e.embed("滑雪"), e.embed("滑雪"));
        assert_ne!(e.embed("滑雪"), e.embed("烘焙"));
        // different seeds give different maps
        assert_ne!(HashingEmbedder::new(8).embed("滑雪"), e.embed("滑雪"));
    }

    #[test]
    fn distance_identity_hand_check() {
        let e = [1.0, 0.0];
        let mu = [0.8, 0.6];
        let d = unit_distance(&e, &mu);
        assert!((d - 0.4f64.sqrt()).abs() < 1e-12);
        assert!(d < OUTLIER_THRESHOLD);
        assert_eq!(unit_distance(&e, &e), 0.0);
        let orth = [0.0, 1.0];
        assert!((unit_distance(&e, &orth) - 2f64.sqrt()).abs() < 1e-12);
    }

    fn registry_of(tags: &[(&str, u64)]) -> BTreeMap<String, TagRecord> {
        tags.iter()
            .map(|(t, f)| {
                ((*t).to_string(), TagRecord { first_seen: date(), frequency: *f })
            })
            .collect()
    }

    #[test]
    fn two_blob_recovery() {
        // two topical families that share internal vocabulary
        let ski: Vec<String> = (0..8).map(|i| format!("滑雪 单板 雪场 第{i}次")).collect();
        let bake: Vec<String> = (0..8).map(|i| format!("烘焙 面包 蛋糕 第{i}炉")).collect();
        let mut registry = BTreeMap::new();
        for t in ski.iter().chain(&bake) {
            registry.insert(t.clone(), TagRecord { first_seen: date(), frequency: 5 });
        }
        let mut profile = PlatformProfile::weibo_like();
        profile.cluster_count = 2;
        let embedder = HashingEmbedder::new(3);
        let index = base_cluster(&registry, &embedder, &profile, 11);
        assert_eq!(index.centroids.len(), 2);
        for c in &index.centroids {
            let norm: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
        let ski_clusters: BTreeSet<usize> =
            ski.iter().map(|t| index.cluster_of(t).unwrap()).collect();
        let bake_clusters: BTreeSet<usize> =
            bake.iter().map(|t| index.cluster_of(t).unwrap()).collect();
        assert_eq!(ski_clusters.len(), 1);
        assert_eq!(bake_clusters.len(), 1);
        assert_ne!(ski_clusters, bake_clusters);
    }

    #[test]
    fn min_frequency_excludes_and_k_reduction() {
        let registry = registry_of(&[("常见词甲", 5), ("常见词乙", 4), ("罕见词", 2)]);
        let mut profile = PlatformProfile::weibo_like();
        profile.cluster_count = 1024;
        let embedder = HashingEmbedder::new(1);
        let index = base_cluster(&registry, &embedder, &profile, 1);
        assert!(index.cluster_of("罕见词").is_none());
        assert!(index.cluster_of("常见词甲").is_some());
        assert_eq!(index.centroids.len(), 2);
    }

    #[test]
    fn single_cluster_centroid_is_mean_direction() {
        let registry = registry_of(&[("甲词条", 5), ("乙词条", 5), ("丙词条", 5)]);
        let mut profile = PlatformProfile::weibo_like();
        profile.cluster_count = 1;
        let embedder = HashingEmbedder::new(2);
        let index = base_cluster(&registry, &embedder, &profile, 9);
        assert_eq!(index.centroids.len(), 1);
        assert_eq!(index.members.get(&0).map(|m| m.len()), Some(3));
        // centroid must point along the mean of the members
        let mut mean = vec![0.0; EMBED_DIM];
        for t in ["甲词条", "乙词条", "丙词条"] {
            for (m, x) in mean.iter_mut().zip(embedder.embed(t)) {
                *m += x;
            }
        }
        l2_normalize(&mut mean);
        assert!(dot(&index.centroids[0], &mean) > 0.999);
    }

    #[test]
    fn incremental_assignment_and_outliers() {
        let registry = registry_of(&[("滑雪 雪场", 9), ("滑雪 单板", 8)]);
        let mut profile = PlatformProfile::weibo_like();
        profile.cluster_count = 1;
        let embedder = HashingEmbedder::new(5);
        let mut index = base_cluster(&registry, &embedder, &profile, 4);

        // a near-duplicate of a member should land in the cluster
        assign_incremental(
            &mut index,
            &["滑雪 雪场 单板".to_string(), "量子 引力 论文".to_string()],
            &embedder,
            OUTLIER_THRESHOLD,
        );
        assert_eq!(index.cluster_of("滑雪 雪场 单板"), Some(0));
        // unrelated vocabulary is near-orthogonal under feature hashing
        assert!(index.outliers.contains(&"量子 引力 论文".to_string()));
        // every indexed tag is in exactly one place
        for tag in index.assignments.keys() {
            assert!(!index.outliers.contains(tag));
        }
    }

    #[test]
    fn incremental_matches_exhaustive_search() {
        let registry = registry_of(&[
            ("滑雪 雪场", 9),
            ("烘焙 面包", 8),
            ("滑雪 装备", 7),
            ("烘焙 蛋糕", 6),
        ]);
        let mut profile = PlatformProfile::weibo_like();
        profile.cluster_count = 2;
        let embedder = HashingEmbedder::new(6);
        let mut index = base_cluster(&registry, &embedder, &profile, 8);
        let new: Vec<String> =
            (0..20).map(|i| format!("词{i} 组合 {}", i % 3)).collect();
        assign_incremental(&mut index, &new, &embedder, 2.0);
        for tag in &new {
            let e = embedder.embed(tag);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, mu) in index.centroids.iter().enumerate() {
                let d = unit_distance(&e, mu);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assert_eq!(index.cluster_of(tag), Some(best));
        }
    }

    #[test]
    fn peer_lookup_ordering_and_exclusions() {
        let mut index = ClusterIndex {
            centroids: vec![vec![1.0]],
            members: BTreeMap::new(),
            outliers: vec!["孤例".into()],
            tag_registry: registry_of(&[("a", 3), ("b", 9), ("c", 3), ("d", 1)]),
            assignments: BTreeMap::new(),
        };
        for t in ["a", "b", "c", "d"] {
            index.assignments.insert(t.into(), 0);
            index.members.entry(0).or_default().push(t.into());
        }
        // frequency descending, lexicographic within ties
        assert_eq!(peer_lookup(&index, "d", &BTreeSet::new()), vec!["b", "a", "c"]);
        let exclude: BTreeSet<String> = ["b".to_string()].into();
        assert_eq!(peer_lookup(&index, "d", &exclude), vec!["a", "c"]);
        // singleton cluster and unknown/outlier tags
        assert!(peer_lookup(&index, "孤例", &BTreeSet::new()).is_empty());
        assert!(peer_lookup(&index, "不存在", &BTreeSet::new()).is_empty());
    }

    #[test]
    fn index_roundtrip() {
        let registry = registry_of(&[("甲词条", 5), ("乙词条", 5)]);
        let mut profile = PlatformProfile::weibo_like();
        profile.cluster_count = 1;
        let embedder = HashingEmbedder::new(5);
        let index = base_cluster(&registry, &embedder, &profile, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        save_index(&path, &index).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&index).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
        std::fs::write(&path, b"{bad").unwrap();
        assert!(matches!(load_index(&path), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn base_cluster_deterministic() {
        let registry = registry_of(&[
            ("滑雪 雪场", 9),
            ("烘焙 面包", 8),
            ("滑雪 装备", 7),
            ("烘焙 蛋糕", 6),
            ("露营 帐篷", 5),
        ]);
        let mut profile = PlatformProfile::weibo_like();
        profile.cluster_count = 2;
        let embedder = HashingEmbedder::new(6);
        let a = base_cluster(&registry, &embedder, &profile, 8);
        let b = base_cluster(&registry, &embedder, &profile, 8);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
