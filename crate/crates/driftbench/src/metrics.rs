//! Step scoring, two-level macro aggregation, the novelty/stability F1, the
//! budget/ratio decomposition, and the exact trade-off identity.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::model::{normalize_tag, PoolLabel, Prediction};
use crate::task::StepTask;

/// Aggregation tolerance for floating-point comparisons.
pub const AGG_TOLERANCE: f64 = 1e-12;

/// Exact per-step scores. All ratios are rationals so the trade-off identity
/// holds with zero residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepScore {
    pub user_id: String,
    pub step_index: usize,
    /// Selection budget K (= number of positives).
    pub k: usize,
    /// Recall over all positives.
    pub r: Ratio<i64>,
    /// Recall over carried-over tags; undefined when the step has none.
    pub r_stab: Option<Ratio<i64>>,
    /// Recall over novel tags; undefined when the step has none.
    pub r_nov: Option<Ratio<i64>>,
    pub e_decay: Option<Ratio<i64>>,
    pub e_peer: Option<Ratio<i64>>,
    pub e_viral: Option<Ratio<i64>>,
    pub e_random: Option<Ratio<i64>>,
    /// Distractor hits plus out-of-pool predictions.
    pub delta: usize,
    /// Selections not hitting positives: K - |T̂ ∩ C+|. Drives the identity.
    pub delta_gt: usize,
    /// Share of carried-over tags among positives.
    pub alpha: Ratio<i64>,
}

fn ratio(num: usize, den: usize) -> Ratio<i64> {
    Ratio::new(num as i64, den as i64)
}

fn class_rate(hits: usize, size: usize) -> Option<Ratio<i64>> {
    if size == 0 {
        None
    } else {
        Some(ratio(hits, size))
    }
}

/// Score one step. A `None` prediction is a failed step: zero hits with the
/// full budget charged as noise.
pub fn score_step(task: &StepTask, prediction: Option<&Prediction>) -> StepScore {
    let k = task.pool.k;
    let keep: BTreeSet<String> = task.gt_keep.iter().map(|t| normalize_tag(t)).collect();
    let new: BTreeSet<String> = task.gt_new.iter().map(|t| normalize_tag(t)).collect();
    let mut class_sizes: BTreeMap<PoolLabel, usize> = BTreeMap::new();
    let mut pool_labels: BTreeMap<String, PoolLabel> = BTreeMap::new();
    for (tag, label) in &task.pool.tags {
        pool_labels.insert(normalize_tag(tag), *label);
        if !label.is_positive() {
            *class_sizes.entry(*label).or_insert(0) += 1;
        }
    }

    let mut predicted: Vec<String> = Vec::new();
    if let Some(p) = prediction {
        for tag in &p.predicted_tags {
            let tag = normalize_tag(tag);
            if !predicted.contains(&tag) {
                predicted.push(tag);
            }
        }
    }

    let mut hits_keep = 0;
    let mut hits_new = 0;
    let mut class_hits: BTreeMap<PoolLabel, usize> = BTreeMap::new();
    let mut out_of_pool = 0;
    for tag in &predicted {
        match pool_labels.get(tag) {
            Some(PoolLabel::Keep) | Some(PoolLabel::New) => {
                if keep.contains(tag) {
                    hits_keep += 1;
                } else if new.contains(tag) {
                    hits_new += 1;
                }
            }
            Some(label) => *class_hits.entry(*label).or_insert(0) += 1,
            None => out_of_pool += 1,
        }
    }
    let hits_pos = hits_keep + hits_new;
    let distractor_hits: usize = class_hits.values().sum();
    let rate = |label: PoolLabel| {
        class_rate(
            class_hits.get(&label).copied().unwrap_or(0),
            class_sizes.get(&label).copied().unwrap_or(0),
        )
    };

    StepScore {
        user_id: task.user_id.clone(),
        step_index: task.step_index,
        k,
        r: ratio(hits_pos, k),
        r_stab: class_rate(hits_keep, keep.len()),
        r_nov: class_rate(hits_new, new.len()),
        e_decay: rate(PoolLabel::Decay),
        e_peer: rate(PoolLabel::Peer),
        e_viral: rate(PoolLabel::Viral),
        e_random: rate(PoolLabel::Random),
        delta: distractor_hits + out_of_pool,
        delta_gt: k - hits_pos,
        alpha: ratio(keep.len(), keep.len() + new.len()),
    }
}

// ---------------------------------------------------------------------------
// Aggregation

/// Two-level macro average: mean over defined steps within each user, then
/// mean over users with at least one defined step. `None` when no step
/// anywhere defines the metric.
pub fn two_level_macro(users: &[Vec<Option<f64>>]) -> Option<f64> {
    let user_means: Vec<f64> = users
        .iter()
        .filter_map(|steps| {
            let defined: Vec<f64> = steps.iter().flatten().copied().collect();
            if defined.is_empty() {
                None
            } else {
                Some(defined.iter().sum::<f64>() / defined.len() as f64)
            }
        })
        .collect();
    if user_means.is_empty() {
        None
    } else {
        Some(user_means.iter().sum::<f64>() / user_means.len() as f64)
    }
}

/// Single-level (micro) mean over all defined steps, for the unbiasedness
/// comparison; weights users by their step counts.
pub fn micro_average(users: &[Vec<Option<f64>>]) -> Option<f64> {
    let all: Vec<f64> = users.iter().flatten().flatten().copied().collect();
    if all.is_empty() {
        None
    } else {
        Some(all.iter().sum::<f64>() / all.len() as f64)
    }
}

/// Macro aggregates over one cohort of scored users.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AggregateReport {
    pub r: Option<f64>,
    pub r_stab: Option<f64>,
    pub r_nov: Option<f64>,
    pub e_decay: Option<f64>,
    pub e_peer: Option<f64>,
    pub e_viral: Option<f64>,
    pub e_random: Option<f64>,
    pub f1_ns: Option<f64>,
    pub users: usize,
    pub steps: usize,
}

fn to_f64(r: &Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Aggregate scored steps grouped by user.
pub fn aggregate(users: &[Vec<StepScore>]) -> AggregateReport {
    fn field(
        users: &[Vec<StepScore>],
        get: impl Fn(&StepScore) -> Option<Ratio<i64>>,
    ) -> Option<f64> {
        let table: Vec<Vec<Option<f64>>> = users
            .iter()
            .map(|steps| steps.iter().map(|s| get(s).map(|r| to_f64(&r))).collect())
            .collect();
        two_level_macro(&table)
    }
    let r_stab = field(users, |s| s.r_stab);
    let r_nov = field(users, |s| s.r_nov);
    AggregateReport {
        r: field(users, |s| Some(s.r)),
        r_stab,
        r_nov,
        e_decay: field(users, |s| s.e_decay),
        e_peer: field(users, |s| s.e_peer),
        e_viral: field(users, |s| s.e_viral),
        e_random: field(users, |s| s.e_random),
        f1_ns: match (r_stab, r_nov) {
            (Some(s), Some(n)) => Some(f1_ns(n, s)),
            _ => None,
        },
        users: users.iter().filter(|u| !u.is_empty()).count(),
        steps: users.iter().map(|u| u.len()).sum(),
    }
}

/// Harmonic mean of the novelty and stability recalls; 0 when both are 0.
pub fn f1_ns(r_nov: f64, r_stab: f64) -> f64 {
    if r_nov + r_stab == 0.0 {
        0.0
    } else {
        2.0 * r_nov * r_stab / (r_nov + r_stab)
    }
}

// ---------------------------------------------------------------------------
// Trade-off decomposition and the identity

/// Novelty-to-stability recall ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rho {
    Finite(Ratio<i64>),
    /// R_stab = 0 with R_nov > 0.
    Infinite,
}

/// One point in the (budget, ratio) plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// Achievable budget B = 1 - δ_gt/K.
    pub b: Ratio<i64>,
    /// ρ = R_nov/R_stab; `None` when both recalls are zero or undefined.
    pub rho: Option<Rho>,
    pub alpha: Ratio<i64>,
}

pub fn tradeoff_decompose(score: &StepScore) -> TradeoffPoint {
    let b = Ratio::one() - ratio(score.delta_gt, score.k);
    let rho = match (score.r_stab, score.r_nov) {
        (Some(s), Some(n)) => {
            if s.is_zero() && n.is_zero() {
                None
            } else if s.is_zero() {
                Some(Rho::Infinite)
            } else {
                Some(Rho::Finite(n / s))
            }
        }
        _ => None,
    };
    TradeoffPoint { b, rho, alpha: score.alpha }
}

/// Residual of the identity α·R_stab + (1-α)·R_nov - (1 - δ_gt/K), in exact
/// arithmetic. Zero for every scored step with both recalls defined.
pub fn verify_identity(score: &StepScore) -> Option<Ratio<i64>> {
    let (s, n) = (score.r_stab?, score.r_nov?);
    let lhs = score.alpha * s + (Ratio::one() - score.alpha) * n;
    let rhs = Ratio::one() - ratio(score.delta_gt, score.k);
    Some(lhs - rhs)
}

// ---------------------------------------------------------------------------
// Coarse-level stability

/// Total anchor-to-cluster mapping; anchors absent from the underlying index
/// fall back to singleton clusters keyed by the anchor itself.
#[derive(Debug, Clone, Default)]
pub struct ClusterMap {
    pub map: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ClusterKey {
    Cluster(usize),
    Singleton(String),
}

impl ClusterMap {
    fn key(&self, anchor: &str) -> ClusterKey {
        let anchor = normalize_tag(anchor);
        match self.map.get(&anchor) {
            Some(id) => ClusterKey::Cluster(*id),
            None => ClusterKey::Singleton(anchor),
        }
    }
}

/// Fine and coarse carry-over shares, both two-level macro averaged. Under
/// the coarse view a future anchor counts as kept when its cluster was seen
/// in the user's history, so the coarse share can never be smaller.
pub fn coarse_alpha(users: &[Vec<StepTask>], map: &ClusterMap) -> (Option<f64>, Option<f64>) {
    let mut fine_table: Vec<Vec<Option<f64>>> = Vec::new();
    let mut coarse_table: Vec<Vec<Option<f64>>> = Vec::new();
    for tasks in users {
        let mut fine_steps = Vec::new();
        let mut coarse_steps = Vec::new();
        let mut history_clusters: BTreeSet<ClusterKey> = BTreeSet::new();
        let mut history_started = false;
        for task in tasks {
            for anchor in &task.input_batch.anchors {
                history_clusters.insert(map.key(anchor));
                history_started = true;
            }
            let future: Vec<&String> =
                task.gt_keep.iter().chain(&task.gt_new).collect();
            if future.is_empty() || !history_started {
                fine_steps.push(None);
                coarse_steps.push(None);
                continue;
            }
            fine_steps.push(Some(to_f64(&task.alpha)));
            let coarse_kept = future
                .iter()
                .filter(|a| history_clusters.contains(&map.key(a)))
                .count();
            coarse_steps.push(Some(coarse_kept as f64 / future.len() as f64));
        }
        fine_table.push(fine_steps);
        coarse_table.push(coarse_steps);
    }
    (two_level_macro(&fine_table), two_level_macro(&coarse_table))
}

// ---------------------------------------------------------------------------
// Geometry

/// Sampled curves for the stability/novelty plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryCurves {
    /// Points on α·x + (1-α)·y = B within the feasible box.
    pub constraint: Vec<(f64, f64)>,
    /// Points on the iso-F1 contour y = c·x/(2x - c).
    pub iso_f1: Vec<(f64, f64)>,
}

/// Sample the budget constraint line and an iso-F1 contour. The line is cut
/// off where either recall would exceed its capacity:
/// x ≤ min(1, B/α), y ≤ min(1, B/(1-α)).
pub fn geometry_curves(
    alpha: f64,
    b: f64,
    f1_level: f64,
) -> Result<GeometryCurves, MetricError> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(MetricError::InvalidInput(format!(
            "alpha must lie strictly inside (0, 1), got {alpha}"
        )));
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(MetricError::InvalidInput(format!("budget must lie in [0, 1], got {b}")));
    }
    const SAMPLES: usize = 200;
    let x_max = (b / alpha).min(1.0);
    let y_max = (b / (1.0 - alpha)).min(1.0);
    let mut constraint = Vec::new();
    for i in 0..=SAMPLES {
        let x = x_max * i as f64 / SAMPLES as f64;
        let y = (b - alpha * x) / (1.0 - alpha);
        if y >= -AGG_TOLERANCE {
            constraint.push((x, y.clamp(0.0, y_max)));
        }
    }
    let mut iso_f1 = Vec::new();
    let c = f1_level;
    if c > 0.0 {
        // y ≤ 1 requires x ≥ c/(2-c)
        let x_lo = c / (2.0 - c);
        for i in 0..=SAMPLES {
            let x = x_lo + (1.0 - x_lo) * i as f64 / SAMPLES as f64;
            let den = 2.0 * x - c;
            if den > AGG_TOLERANCE {
                iso_f1.push((x, c * x / den));
            }
        }
    }
    Ok(GeometryCurves { constraint, iso_f1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CandidatePool, StreamBatch};
    use chrono::{TimeZone, Utc};

    fn pred(tags: &[&str]) -> Prediction {
        Prediction {
            predicted_tags: tags.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    /// A 28-tag task with 3 carried-over and 4 novel positives, mirroring
    /// the class split 9 decay / 4 peer / 3 viral / 5 random.
    fn grad_student_task() -> StepTask {
        let keep = ["研究生", "研二", "学习"];
        let new = ["毕业是一场巨大的戒断", "毕业生", "奖学金", "找实习"];
        let decay = [
            "黄黑皮爆改",
            "美白水乳",
            "茶漾虾青素水乳",
            "熬夜水乳",
            "HBN",
            "我的好物分享",
            "女大学生水乳推荐",
            "计划赶不上变化系列",
            "期待下一个假期",
        ];
        let peer = ["26口腔考研", "工作台", "学历歧视", "毕业礼物创意"];
        let viral = ["立白", "清洁护理", "身体放松舒缓"];
        let random = ["申鹤", "无印良品穿搭", "身体与心理", "英签攻略", "山东红色文化"];
        let mut tags: Vec<(String, PoolLabel)> = Vec::new();
        for t in keep {
            tags.push((t.into(), PoolLabel::Keep));
        }
        for t in new {
            tags.push((t.into(), PoolLabel::New));
        }
        for t in decay {
            tags.push((t.into(), PoolLabel::Decay));
        }
        for t in peer {
            tags.push((t.into(), PoolLabel::Peer));
        }
        for t in viral {
            tags.push((t.into(), PoolLabel::Viral));
        }
        for t in random {
            tags.push((t.into(), PoolLabel::Random));
        }
        let ts = Utc.timestamp_opt(0, 0).unwrap();
        StepTask {
            user_id: "u1".into(),
            step_index: 1,
            input_batch: StreamBatch {
                user_id: "u1".into(),
                step_index: 1,
                posts: Vec::new(),
                anchors: keep.iter().map(|s| s.to_string()).collect(),
                window: (ts, ts),
            },
            pool: CandidatePool { tags, k: 7 },
            gt_keep: keep.iter().map(|s| s.to_string()).collect(),
            gt_new: new.iter().map(|s| s.to_string()).collect(),
            alpha: Ratio::new(3, 7),
        }
    }

    #[test]
    fn conservative_prediction_scores() {
        let task = grad_student_task();
        // all three carried-over tags plus four stale ones
        let p = pred(&[
            "研究生",
            "研二",
            "学习",
            "黄黑皮爆改",
            "美白水乳",
            "熬夜水乳",
            "HBN",
        ]);
        let s = score_step(&task, Some(&p));
        assert_eq!(s.r, ratio(3, 7));
        assert_eq!(s.r_stab, Some(Ratio::one()));
        assert_eq!(s.r_nov, Some(Ratio::zero()));
        assert_eq!(s.e_decay, Some(ratio(4, 9)));
        assert_eq!(s.e_peer, Some(Ratio::zero()));
        assert_eq!(s.delta, 4);
        assert_eq!(s.delta_gt, 4);
        assert_eq!(s.alpha, ratio(3, 7));

        // identity: 3/7 * 1 + 4/7 * 0 = 1 - 4/7
        assert_eq!(verify_identity(&s), Some(Ratio::zero()));
        let point = tradeoff_decompose(&s);
        assert_eq!(point.b, ratio(3, 7));
        assert_eq!(point.rho, Some(Rho::Finite(Ratio::zero())));
    }

    #[test]
    fn perfect_prediction_scores() {
        let task = grad_student_task();
        let all: Vec<&str> =
            task.gt_keep.iter().chain(&task.gt_new).map(|s| s.as_str()).collect();
        let s = score_step(&task, Some(&pred(&all)));
        assert_eq!(s.r, Ratio::one());
        assert_eq!(s.r_stab, Some(Ratio::one()));
        assert_eq!(s.r_nov, Some(Ratio::one()));
        for e in [s.e_decay, s.e_peer, s.e_viral, s.e_random] {
            assert_eq!(e, Some(Ratio::zero()));
        }
        assert_eq!(s.delta, 0);
        assert_eq!(s.delta_gt, 0);
        assert_eq!(verify_identity(&s), Some(Ratio::zero()));
        assert_eq!(tradeoff_decompose(&s).b, Ratio::one());
    }

    #[test]
    fn out_of_pool_counts_as_noise() {
        let task = grad_student_task();
        let s = score_step(&task, Some(&pred(&["研究生", "量子物理", "火星移民"])));
        assert_eq!(s.r, ratio(1, 7));
        assert_eq!(s.delta, 2);
        assert_eq!(s.delta_gt, 6);
        // out-of-pool tags hit no class rate
        assert_eq!(s.e_decay, Some(Ratio::zero()));
    }

    #[test]
    fn failed_step_is_full_noise() {
        let task = grad_student_task();
        let s = score_step(&task, None);
        assert_eq!(s.r, Ratio::zero());
        assert_eq!(s.delta_gt, 7);
        assert_eq!(tradeoff_decompose(&s).b, Ratio::zero());
    }

    #[test]
    fn duplicate_predictions_collapse() {
        let task = grad_student_task();
        let s = score_step(&task, Some(&pred(&["研究生", "研究生", " 研究生 "])));
        assert_eq!(s.r, ratio(1, 7));
    }

    #[test]
    fn macro_average_example() {
        let users = vec![
            vec![Some(0.2), Some(0.4)],
            vec![Some(1.0)],
        ];
        assert!((two_level_macro(&users).unwrap() - 0.65).abs() < AGG_TOLERANCE);
        // constant steps
        let users = vec![vec![Some(0.3); 5], vec![Some(0.3); 2]];
        assert!((two_level_macro(&users).unwrap() - 0.3).abs() < AGG_TOLERANCE);
        // undefined steps excluded, empty users excluded
        let users = vec![vec![None, Some(0.5)], vec![None]];
        assert!((two_level_macro(&users).unwrap() - 0.5).abs() < AGG_TOLERANCE);
        assert!(two_level_macro(&[vec![None], vec![]]).is_none());
    }

    #[test]
    fn f1_values() {
        assert_eq!(f1_ns(0.7, 0.7), 0.7);
        assert_eq!(f1_ns(0.0, 1.0), 0.0);
        assert_eq!(f1_ns(0.0, 0.0), 0.0);
        assert!((f1_ns(0.4, 0.8) - 0.5333333333333333).abs() < AGG_TOLERANCE);
    }

    #[test]
    fn aggregate_report_fields() {
        let task = grad_student_task();
        let perfect: Vec<&str> =
            task.gt_keep.iter().chain(&task.gt_new).map(|s| s.as_str()).collect();
        let s1 = score_step(&task, Some(&pred(&perfect)));
        let s2 = score_step(&task, None);
        let report = aggregate(&[vec![s1], vec![s2]]);
        assert!((report.r.unwrap() - 0.5).abs() < AGG_TOLERANCE);
        assert!((report.r_stab.unwrap() - 0.5).abs() < AGG_TOLERANCE);
        assert!((report.f1_ns.unwrap() - 0.5).abs() < AGG_TOLERANCE);
        assert_eq!(report.users, 2);
        assert_eq!(report.steps, 2);
    }

    #[test]
    fn rho_markers() {
        let task = grad_student_task();
        // novel hit with zero stability recall
        let s = score_step(&task, Some(&pred(&["奖学金"])));
        assert_eq!(tradeoff_decompose(&s).rho, Some(Rho::Infinite));
        let s = score_step(&task, None);
        assert_eq!(tradeoff_decompose(&s).rho, None);
    }

    fn coarse_fixture_tasks(anchors: &[&str], future_keep: &[&str], future_new: &[&str]) -> StepTask {
        let ts = Utc.timestamp_opt(0, 0).unwrap();
        let positives = future_keep.len() + future_new.len();
        StepTask {
            user_id: "u".into(),
            step_index: 1,
            input_batch: StreamBatch {
                user_id: "u".into(),
                step_index: 1,
                posts: Vec::new(),
                anchors: anchors.iter().map(|s| s.to_string()).collect(),
                window: (ts, ts),
            },
            pool: CandidatePool { tags: Vec::new(), k: positives.max(1) },
            gt_keep: future_keep.iter().map(|s| s.to_string()).collect(),
            gt_new: future_new.iter().map(|s| s.to_string()).collect(),
            alpha: Ratio::new(future_keep.len() as i64, positives.max(1) as i64),
        }
    }

    #[test]
    fn coarse_alpha_cases() {
        let task = coarse_fixture_tasks(&["滑雪"], &["滑雪"], &["单板", "烘焙"]);
        // injective map: coarse equals fine
        let (fine, coarse) = coarse_alpha(&[vec![task.clone()]], &ClusterMap::default());
        assert_eq!(fine, coarse);
        assert!((fine.unwrap() - 1.0 / 3.0).abs() < AGG_TOLERANCE);

        // constant map: everything counts as kept
        let constant = ClusterMap {
            map: ["滑雪", "单板", "烘焙"]
                .iter()
                .map(|t| (t.to_string(), 0))
                .collect(),
        };
        let (fine, coarse) = coarse_alpha(&[vec![task.clone()]], &constant);
        assert!((fine.unwrap() - 1.0 / 3.0).abs() < AGG_TOLERANCE);
        assert_eq!(coarse, Some(1.0));

        // 2-cluster map checked against hand arithmetic: 滑雪+单板 share a
        // cluster, 烘焙 is elsewhere -> coarse keep 2 of 3
        let two = ClusterMap {
            map: [("滑雪", 0), ("单板", 0), ("烘焙", 1)]
                .iter()
                .map(|(t, c)| (t.to_string(), *c))
                .collect(),
        };
        let (_, coarse) = coarse_alpha(&[vec![task]], &two);
        assert!((coarse.unwrap() - 2.0 / 3.0).abs() < AGG_TOLERANCE);
    }

    #[test]
    fn geometry_shapes() {
        let curves = geometry_curves(0.24, 1.0, 0.5).unwrap();
        // noise-free corner: line from (0, ...) truncated at both capacities,
        // endpoint (1, 1)
        let last = *curves.constraint.last().unwrap();
        assert!((last.0 - 1.0).abs() < 1e-9 && (last.1 - 1.0).abs() < 1e-9);
        // slope -alpha/(1-alpha) on an unclamped segment (B below capacity)
        let partial = geometry_curves(0.24, 0.5, 0.5).unwrap();
        let (x0, y0) = partial.constraint[0];
        let (x1, y1) = partial.constraint[1];
        let slope = (y1 - y0) / (x1 - x0);
        assert!((slope + 0.24 / 0.76).abs() < 1e-9, "slope {slope}");
        // iso-F1 passes through (c, c)
        let c = 0.5;
        let near = curves
            .iso_f1
            .iter()
            .map(|(x, y)| ((x - c).abs(), *y))
            .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc });
        assert!((near.1 - c).abs() < 0.01);
        // all curve points stay in the unit box
        for (x, y) in curves.constraint.iter().chain(&curves.iso_f1) {
            assert!((0.0..=1.0 + 1e-9).contains(x));
            assert!((0.0..=1.0 + 1e-9).contains(y));
        }
        assert!(geometry_curves(0.0, 0.5, 0.5).is_err());
        assert!(geometry_curves(1.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn micro_vs_macro() {
        let users = vec![vec![Some(1.0); 9], vec![Some(0.0)]];
        assert!((two_level_macro(&users).unwrap() - 0.5).abs() < AGG_TOLERANCE);
        assert!((micro_average(&users).unwrap() - 0.9).abs() < AGG_TOLERANCE);
    }
}
