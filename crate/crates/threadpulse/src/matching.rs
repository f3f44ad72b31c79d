//! Coarsened exact matching between two thread corpora, covariate balance
//! diagnostics, and paired outcome contrasts.
//!
//! Threads are coarsened onto three covariates: a deterministic coarse
//! topic (tech/meta/general/spam), the exact UTC posting hour, and an
//! early-engagement bin counting comments within thirty minutes of the
//! root. Matching is exact on the stratum key: within each stratum both
//! sides are sorted by thread id and paired positionally up to the smaller
//! count, so identical inputs always produce identical pairs. The bin
//! edges and topic map are configuration, echoed into every result for
//! provenance.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::Category;
use crate::resample::{
    cluster_bootstrap, wilcoxon_signed_rank, BootstrapSpec, ClusterKey, ResampleError,
};
use crate::threadgraph::ThreadTree;

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("corpus {0} is empty")]
    EmptyCorpus(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Corpus {
    A,
    B,
}

/// Coarse topic label used as the exact-match stratum dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseTopic {
    Tech,
    Meta,
    General,
    Spam,
}

/// Deterministic category -> coarse-topic map (configuration default).
pub fn default_topic_map() -> BTreeMap<Category, CoarseTopic> {
    BTreeMap::from([
        (Category::BuilderTechnical, CoarseTopic::Tech),
        (Category::PhilosophyMeta, CoarseTopic::Meta),
        (Category::SocialCasual, CoarseTopic::General),
        (Category::Creative, CoarseTopic::General),
        (Category::Other, CoarseTopic::General),
        (Category::SpamLowSignal, CoarseTopic::Spam),
    ])
}

/// Early-engagement bin edges (comment counts within 30 minutes): the
/// default bins are {0}, {1}, {2-4}, {5-9}, {>= 10}.
pub const DEFAULT_EARLY_BIN_EDGES: [usize; 4] = [1, 2, 5, 10];

pub const EARLY_WINDOW_S: f64 = 30.0 * 60.0;

#[derive(Debug, Clone, Serialize)]
pub struct ThreadCovariates {
    pub thread_id: String,
    pub corpus: Corpus,
    pub coarse_topic: CoarseTopic,
    pub post_hour_utc: u32,
    /// Comments within thirty minutes of the root.
    pub early_engagement: usize,
    pub early_bin: usize,
}

/// Coarsen threads onto the matching covariates.
pub fn coarsen(
    trees: &[&ThreadTree],
    categories: &BTreeMap<String, Category>,
    corpus: Corpus,
    topic_map: &BTreeMap<Category, CoarseTopic>,
    bin_edges: &[usize],
) -> Vec<ThreadCovariates> {
    trees
        .iter()
        .map(|tree| {
            let category = categories
                .get(&tree.thread_id)
                .copied()
                .unwrap_or(Category::Other);
            let early = tree.nodes[1..]
                .iter()
                .filter(|n| n.offset_s <= EARLY_WINDOW_S)
                .count();
            ThreadCovariates {
                thread_id: tree.thread_id.clone(),
                corpus,
                coarse_topic: topic_map
                    .get(&category)
                    .copied()
                    .unwrap_or(CoarseTopic::General),
                post_hour_utc: tree.root_time.hour_utc(),
                early_engagement: early,
                early_bin: bin_edges.iter().filter(|&&e| early >= e).count(),
            }
        })
        .collect()
}

type StratumKey = (CoarseTopic, u32, usize);

#[derive(Debug, Clone, Serialize)]
pub struct MatchResult {
    /// Stratum key -> (A ids, B ids) retained in the overlap.
    pub strata: BTreeMap<String, (Vec<String>, Vec<String>)>,
    pub pairs: Vec<(String, String)>,
    pub input_a: usize,
    pub input_b: usize,
    pub retained_a: usize,
    pub retained_b: usize,
    pub shared_strata: usize,
    /// No stratum was shared between the corpora.
    pub empty_overlap: bool,
    /// Configuration echo for provenance.
    pub bin_edges: Vec<usize>,
}

/// Exact matching on (topic, hour, early bin). Within each shared stratum
/// both sides are sorted by thread id and paired positionally.
pub fn cem_match(
    cov_a: &[ThreadCovariates],
    cov_b: &[ThreadCovariates],
    bin_edges: &[usize],
) -> Result<MatchResult, MatchingError> {
    if cov_a.is_empty() {
        return Err(MatchingError::EmptyCorpus("A"));
    }
    if cov_b.is_empty() {
        return Err(MatchingError::EmptyCorpus("B"));
    }
    let mut by_key: BTreeMap<StratumKey, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for c in cov_a {
        by_key
            .entry((c.coarse_topic, c.post_hour_utc, c.early_bin))
            .or_default()
            .0
            .push(&c.thread_id);
    }
    for c in cov_b {
        by_key
            .entry((c.coarse_topic, c.post_hour_utc, c.early_bin))
            .or_default()
            .1
            .push(&c.thread_id);
    }

    let mut strata = BTreeMap::new();
    let mut pairs = Vec::new();
    let mut retained_a = 0;
    let mut retained_b = 0;
    let mut shared = 0;
    for ((topic, hour, bin), (mut ids_a, mut ids_b)) in by_key {
        if ids_a.is_empty() || ids_b.is_empty() {
            continue;
        }
        shared += 1;
        retained_a += ids_a.len();
        retained_b += ids_b.len();
        ids_a.sort_unstable();
        ids_b.sort_unstable();
        for (a, b) in ids_a.iter().zip(ids_b.iter()) {
            pairs.push((a.to_string(), b.to_string()));
        }
        strata.insert(
            format!("{topic:?}|h{hour:02}|bin{bin}"),
            (
                ids_a.iter().map(|s| s.to_string()).collect(),
                ids_b.iter().map(|s| s.to_string()).collect(),
            ),
        );
    }
    Ok(MatchResult {
        strata,
        empty_overlap: shared == 0,
        pairs,
        input_a: cov_a.len(),
        input_b: cov_b.len(),
        retained_a,
        retained_b,
        shared_strata: shared,
        bin_edges: bin_edges.to_vec(),
    })
}

/// One row of the balance table. Numeric covariates report |SMD| with the
/// pooled-SD denominator; categorical covariates report total variation
/// distance. `smd` is absent when the pooled SD is zero.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub smd_before: Option<f64>,
    pub smd_after: Option<f64>,
    pub tvd_before: Option<f64>,
    pub tvd_after: Option<f64>,
}

fn abs_smd(a: &[f64], b: &[f64]) -> Option<f64> {
    let va = crate::stats::sample_variance(a).unwrap_or(0.0);
    let vb = crate::stats::sample_variance(b).unwrap_or(0.0);
    let pooled = ((va + vb) / 2.0).sqrt();
    if pooled == 0.0 {
        let diff = crate::stats::mean(a) - crate::stats::mean(b);
        // Identical constants are perfectly balanced; differing constants
        // have no scale, so the SMD is undefined.
        return (diff == 0.0).then_some(0.0);
    }
    Some((crate::stats::mean(a) - crate::stats::mean(b)).abs() / pooled)
}

fn tvd<K: Ord>(a: impl Iterator<Item = K>, b: impl Iterator<Item = K>) -> f64 {
    let mut pa: BTreeMap<K, f64> = BTreeMap::new();
    let mut na = 0.0;
    for k in a {
        *pa.entry(k).or_default() += 1.0;
        na += 1.0;
    }
    let mut pb: BTreeMap<K, f64> = BTreeMap::new();
    let mut nb = 0.0;
    for k in b {
        *pb.entry(k).or_default() += 1.0;
        nb += 1.0;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let mut keys: Vec<&K> = pa.keys().chain(pb.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| {
            (pa.get(k).copied().unwrap_or(0.0) / na - pb.get(k).copied().unwrap_or(0.0) / nb)
                .abs()
        })
        .sum::<f64>()
}

/// Covariate balance before and after matching.
pub fn balance(
    cov_a: &[ThreadCovariates],
    cov_b: &[ThreadCovariates],
    pairs: &[(String, String)],
) -> Vec<BalanceRow> {
    let matched_a: std::collections::BTreeSet<&str> =
        pairs.iter().map(|(a, _)| a.as_str()).collect();
    let matched_b: std::collections::BTreeSet<&str> =
        pairs.iter().map(|(_, b)| b.as_str()).collect();
    let after_a: Vec<&ThreadCovariates> = cov_a
        .iter()
        .filter(|c| matched_a.contains(c.thread_id.as_str()))
        .collect();
    let after_b: Vec<&ThreadCovariates> = cov_b
        .iter()
        .filter(|c| matched_b.contains(c.thread_id.as_str()))
        .collect();

    let numeric = |name: &str, f: &dyn Fn(&ThreadCovariates) -> f64| -> BalanceRow {
        let all_a: Vec<f64> = cov_a.iter().map(f).collect();
        let all_b: Vec<f64> = cov_b.iter().map(f).collect();
        let m_a: Vec<f64> = after_a.iter().map(|c| f(c)).collect();
        let m_b: Vec<f64> = after_b.iter().map(|c| f(c)).collect();
        BalanceRow {
            covariate: name.to_string(),
            smd_before: abs_smd(&all_a, &all_b),
            smd_after: if m_a.is_empty() { None } else { abs_smd(&m_a, &m_b) },
            tvd_before: None,
            tvd_after: None,
        }
    };
    let categorical = |name: &str, f: &dyn Fn(&ThreadCovariates) -> String| -> BalanceRow {
        BalanceRow {
            covariate: name.to_string(),
            smd_before: None,
            smd_after: None,
            tvd_before: Some(tvd(cov_a.iter().map(f), cov_b.iter().map(f))),
            tvd_after: Some(tvd(after_a.iter().map(|c| f(c)), after_b.iter().map(|c| f(c)))),
        }
    };

    vec![
        numeric("post_hour_utc", &|c| c.post_hour_utc as f64),
        numeric("early_engagement", &|c| c.early_engagement as f64),
        categorical("coarse_topic", &|c| format!("{:?}", c.coarse_topic)),
        categorical("post_hour_bin", &|c| format!("{:02}", c.post_hour_utc)),
        categorical("early_engagement_bin", &|c| format!("{}", c.early_bin)),
    ]
}

/// One paired-contrast row: mean A-minus-B difference with pair-cluster
/// bootstrap interval and signed-rank p-value.
#[derive(Debug, Clone, Serialize)]
pub struct PairedEffect {
    pub outcome: String,
    pub n_pairs: usize,
    /// Pairs dropped because the outcome was undefined on either side.
    pub dropped: usize,
    pub mean_diff: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub wilcoxon_p: f64,
    pub wilcoxon_log10_p: f64,
}

/// Minimum defined pairs for a contrast row.
pub const MIN_PAIRS: usize = 5;

/// Paired contrast of one outcome. `outcome_a`/`outcome_b` map thread ids
/// to outcome values; pairs where either side is undefined are dropped and
/// counted. `None` when fewer than [`MIN_PAIRS`] pairs remain.
pub fn paired_effect(
    outcome: &str,
    pairs: &[(String, String)],
    outcome_a: &BTreeMap<String, f64>,
    outcome_b: &BTreeMap<String, f64>,
    spec: &BootstrapSpec,
) -> Result<Option<PairedEffect>, ResampleError> {
    let diffs: Vec<f64> = pairs
        .iter()
        .filter_map(|(a, b)| match (outcome_a.get(a), outcome_b.get(b)) {
            (Some(&va), Some(&vb)) => Some(va - vb),
            _ => None,
        })
        .collect();
    let dropped = pairs.len() - diffs.len();
    if diffs.len() < MIN_PAIRS {
        return Ok(None);
    }
    let ci = cluster_bootstrap(
        &diffs,
        |ds| Some(ds.iter().copied().sum::<f64>() / ds.len() as f64),
        spec,
    )?;
    let w = wilcoxon_signed_rank(&diffs)?;
    Ok(Some(PairedEffect {
        outcome: outcome.to_string(),
        n_pairs: diffs.len(),
        dropped,
        mean_diff: ci.point,
        ci_lo: ci.lo,
        ci_hi: ci.hi,
        wilcoxon_p: w.p,
        wilcoxon_log10_p: w.log10_p,
    }))
}

/// Bootstrap spec for paired effects (pair clusters, 1000 reps).
pub fn paired_effect_spec(seed: u64) -> BootstrapSpec {
    BootstrapSpec::new(1000, seed, ClusterKey::Pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threadgraph::TreeNode;
    use crate::time::Timestamp;

    fn tree(id: &str, root_epoch: i64, comment_offsets: &[f64]) -> ThreadTree {
        let mut nodes = vec![TreeNode {
            id: id.to_string(),
            offset_s: 0.0,
            author: Some("root".into()),
            parent: None,
            depth: 0,
            child_count: comment_offsets.len() as u32,
        }];
        for (i, &off) in comment_offsets.iter().enumerate() {
            nodes.push(TreeNode {
                id: format!("{id}-c{i}"),
                offset_s: off,
                author: Some(format!("a{i}")),
                parent: Some(0),
                depth: 1,
                child_count: 0,
            });
        }
        ThreadTree {
            thread_id: id.to_string(),
            root_time: Timestamp(root_epoch),
            nodes,
        }
    }

    fn cov(
        id: &str,
        corpus: Corpus,
        topic: CoarseTopic,
        hour: u32,
        early: usize,
    ) -> ThreadCovariates {
        ThreadCovariates {
            thread_id: id.into(),
            corpus,
            coarse_topic: topic,
            post_hour_utc: hour,
            early_engagement: early,
            early_bin: DEFAULT_EARLY_BIN_EDGES.iter().filter(|&&e| early >= e).count(),
        }
    }

    #[test]
    fn coarsen_maps_topics_hours_and_bins() {
        let t = tree("t1", 13 * 3600, &[60.0, 120.0, 7200.0]);
        let categories = BTreeMap::from([("t1".to_string(), Category::BuilderTechnical)]);
        let cov = coarsen(
            &[&t],
            &categories,
            Corpus::A,
            &default_topic_map(),
            &DEFAULT_EARLY_BIN_EDGES,
        );
        assert_eq!(cov[0].coarse_topic, CoarseTopic::Tech);
        assert_eq!(cov[0].post_hour_utc, 13);
        // Two comments inside thirty minutes -> bin {2-4}.
        assert_eq!(cov[0].early_engagement, 2);
        assert_eq!(cov[0].early_bin, 2);
    }

    #[test]
    fn zero_early_comments_take_the_lowest_bin() {
        let t = tree("t1", 0, &[3600.0]);
        let cov = coarsen(
            &[&t],
            &BTreeMap::new(),
            Corpus::A,
            &default_topic_map(),
            &DEFAULT_EARLY_BIN_EDGES,
        );
        assert_eq!(cov[0].early_bin, 0);
    }

    #[test]
    fn single_shared_stratum_yields_one_pair() {
        let a = vec![cov("a1", Corpus::A, CoarseTopic::General, 10, 3)];
        let b = vec![cov("b1", Corpus::B, CoarseTopic::General, 10, 4)];
        // Same bin (2-4) despite different raw counts.
        let m = cem_match(&a, &b, &DEFAULT_EARLY_BIN_EDGES).unwrap();
        assert_eq!(m.pairs, vec![("a1".to_string(), "b1".to_string())]);
        assert_eq!(m.shared_strata, 1);
    }

    #[test]
    fn disjoint_hours_have_empty_overlap() {
        let a = vec![cov("a1", Corpus::A, CoarseTopic::General, 3, 0)];
        let b = vec![cov("b1", Corpus::B, CoarseTopic::General, 17, 0)];
        let m = cem_match(&a, &b, &DEFAULT_EARLY_BIN_EDGES).unwrap();
        assert!(m.pairs.is_empty());
        assert!(m.empty_overlap);
    }

    #[test]
    fn matching_is_deterministic_under_input_order() {
        let mut a = vec![
            cov("a2", Corpus::A, CoarseTopic::General, 10, 0),
            cov("a1", Corpus::A, CoarseTopic::General, 10, 0),
            cov("a3", Corpus::A, CoarseTopic::Tech, 4, 2),
        ];
        let mut b = vec![
            cov("b9", Corpus::B, CoarseTopic::General, 10, 0),
            cov("b2", Corpus::B, CoarseTopic::General, 10, 0),
        ];
        let m1 = cem_match(&a, &b, &DEFAULT_EARLY_BIN_EDGES).unwrap();
        a.reverse();
        b.reverse();
        let m2 = cem_match(&a, &b, &DEFAULT_EARLY_BIN_EDGES).unwrap();
        assert_eq!(m1.pairs, m2.pairs);
        // Positional pairing after the id sort.
        assert_eq!(m1.pairs[0], ("a1".to_string(), "b2".to_string()));
        assert_eq!(m1.pairs[1], ("a2".to_string(), "b9".to_string()));
    }

    #[test]
    fn pair_counts_bounded_by_stratum_minima() {
        use rand::Rng;
        let mut rng = crate::exec::stream_rng(71, 0);
        for _ in 0..20 {
            let topics = [CoarseTopic::Tech, CoarseTopic::General, CoarseTopic::Spam];
            let mk = |corpus: Corpus, n: usize, rng: &mut rand_chacha::ChaCha12Rng| {
                (0..n)
                    .map(|i| {
                        cov(
                            &format!("{corpus:?}{i}"),
                            corpus,
                            topics[rng.gen_range(0..3)],
                            rng.gen_range(0..4),
                            rng.gen_range(0..12),
                        )
                    })
                    .collect::<Vec<_>>()
            };
            let a = mk(Corpus::A, rng.gen_range(1..60), &mut rng);
            let b = mk(Corpus::B, rng.gen_range(1..60), &mut rng);
            let m = cem_match(&a, &b, &DEFAULT_EARLY_BIN_EDGES).unwrap();
            let bound: usize = m
                .strata
                .values()
                .map(|(ia, ib)| ia.len().min(ib.len()))
                .sum();
            assert_eq!(m.pairs.len(), bound);
            // Each id appears in at most one pair.
            let mut seen = std::collections::BTreeSet::new();
            for (x, y) in &m.pairs {
                assert!(seen.insert(x.clone()));
                assert!(seen.insert(format!("B:{y}")));
            }
        }
    }

    #[test]
    fn after_matching_balance_is_exactly_zero_on_matched_covariates() {
        use rand::Rng;
        let mut rng = crate::exec::stream_rng(73, 0);
        for round in 0..10 {
            let topics = [CoarseTopic::Tech, CoarseTopic::Meta, CoarseTopic::General];
            let mk = |corpus: Corpus, n: usize, rng: &mut rand_chacha::ChaCha12Rng| {
                (0..n)
                    .map(|i| {
                        cov(
                            &format!("{corpus:?}{round}_{i}"),
                            corpus,
                            topics[rng.gen_range(0..3)],
                            rng.gen_range(0..24),
                            rng.gen_range(0..15),
                        )
                    })
                    .collect::<Vec<_>>()
            };
            let a = mk(Corpus::A, 120, &mut rng);
            let b = mk(Corpus::B, 90, &mut rng);
            let m = cem_match(&a, &b, &DEFAULT_EARLY_BIN_EDGES).unwrap();
            if m.pairs.is_empty() {
                continue;
            }
            let rows = balance(&a, &b, &m.pairs);
            let by_name: BTreeMap<&str, &BalanceRow> =
                rows.iter().map(|r| (r.covariate.as_str(), r)).collect();
            // Exactly zero, not approximately: hour sums are integers and
            // category counts match exactly after exact matching.
            assert_eq!(by_name["post_hour_utc"].smd_after, Some(0.0));
            assert_eq!(by_name["coarse_topic"].tvd_after, Some(0.0));
            assert_eq!(by_name["post_hour_bin"].tvd_after, Some(0.0));
            assert_eq!(by_name["early_engagement_bin"].tvd_after, Some(0.0));
        }
    }

    #[test]
    fn identical_corpora_have_zero_before_smd() {
        let a = vec![
            cov("a1", Corpus::A, CoarseTopic::General, 10, 2),
            cov("a2", Corpus::A, CoarseTopic::Tech, 4, 7),
        ];
        let b = vec![
            cov("b1", Corpus::B, CoarseTopic::General, 10, 2),
            cov("b2", Corpus::B, CoarseTopic::Tech, 4, 7),
        ];
        let rows = balance(&a, &b, &[]);
        for row in rows {
            if let Some(s) = row.smd_before {
                assert_eq!(s, 0.0);
            }
            if let Some(t) = row.tvd_before {
                assert_eq!(t, 0.0);
            }
        }
    }

    #[test]
    fn zero_pooled_sd_with_differing_means_is_flagged_absent() {
        let a = vec![
            cov("a1", Corpus::A, CoarseTopic::General, 10, 2),
            cov("a2", Corpus::A, CoarseTopic::General, 10, 2),
        ];
        let b = vec![
            cov("b1", Corpus::B, CoarseTopic::General, 11, 2),
            cov("b2", Corpus::B, CoarseTopic::General, 11, 2),
        ];
        let rows = balance(&a, &b, &[]);
        let hour = rows.iter().find(|r| r.covariate == "post_hour_utc").unwrap();
        assert!(hour.smd_before.is_none());
    }

    #[test]
    fn paired_effects_identical_outcomes() {
        let pairs: Vec<(String, String)> = (0..8)
            .map(|i| (format!("a{i}"), format!("b{i}")))
            .collect();
        let values_a: BTreeMap<String, f64> =
            (0..8).map(|i| (format!("a{i}"), i as f64)).collect();
        let values_b: BTreeMap<String, f64> =
            (0..8).map(|i| (format!("b{i}"), i as f64)).collect();
        let spec = paired_effect_spec(1);
        let row = paired_effect("identity", &pairs, &values_a, &values_b, &spec)
            .unwrap()
            .unwrap();
        assert_eq!(row.mean_diff, 0.0);
        assert_eq!(row.wilcoxon_p, 1.0);
        assert_eq!((row.ci_lo, row.ci_hi), (0.0, 0.0));
    }

    #[test]
    fn paired_effects_drop_undefined_rows() {
        let pairs: Vec<(String, String)> = (0..10)
            .map(|i| (format!("a{i}"), format!("b{i}")))
            .collect();
        let values_a: BTreeMap<String, f64> = (0..10)
            .filter(|i| i % 3 != 0)
            .map(|i| (format!("a{i}"), 2.0 + i as f64))
            .collect();
        let values_b: BTreeMap<String, f64> =
            (0..10).map(|i| (format!("b{i}"), 1.0)).collect();
        let spec = paired_effect_spec(2);
        let row = paired_effect("depth", &pairs, &values_a, &values_b, &spec)
            .unwrap()
            .unwrap();
        assert_eq!(row.n_pairs, 6);
        assert_eq!(row.dropped, 4);
        assert!(row.mean_diff > 0.0);
    }

    #[test]
    fn too_few_pairs_yields_no_row() {
        let pairs = vec![("a0".to_string(), "b0".to_string())];
        let values_a = BTreeMap::from([("a0".to_string(), 1.0)]);
        let values_b = BTreeMap::from([("b0".to_string(), 2.0)]);
        let spec = paired_effect_spec(3);
        assert!(paired_effect("x", &pairs, &values_a, &values_b, &spec)
            .unwrap()
            .is_none());
    }
}
