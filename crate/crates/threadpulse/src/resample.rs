//! Cluster bootstrap confidence intervals and the Wilcoxon signed-rank
//! test.
//!
//! The bootstrap resamples whole clusters with replacement (threads,
//! categories, or matched pairs) and reports percentile intervals whose
//! endpoints are order statistics of the replicate vector. Replicates run
//! on counter-based RNG streams keyed by `(seed, replicate)`, so intervals
//! are bit-identical across thread counts and reruns.
//!
//! The signed-rank test drops zero differences, mid-ranks ties, and uses
//! exact enumeration of the sign pattern distribution up to n = 25 (a
//! subset-sum table over doubled ranks), switching to the
//! continuity-corrected normal approximation with tie correction above
//! that. Extremely small p-values are also reported as log10(p), which
//! stays finite long after the p-value itself underflows.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exec::{indexed_map, stream_rng};
use crate::stats::quantile_order_stat;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("need at least {need} {what}, got {got}")]
    TooFew { what: &'static str, need: usize, got: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// What one cluster represents; carried through to outputs for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKey {
    Thread,
    Category,
    Pair,
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapSpec {
    pub reps: usize,
    pub seed: u64,
    pub cluster_key: ClusterKey,
    pub ci_level: f64,
}

impl BootstrapSpec {
    pub fn new(reps: usize, seed: u64, cluster_key: ClusterKey) -> Self {
        BootstrapSpec { reps, seed, cluster_key, ci_level: 0.95 }
    }

    fn validate(&self) -> Result<(), ResampleError> {
        if self.reps < 100 {
            return Err(ResampleError::InvalidSpec("reps must be >= 100".into()));
        }
        if !(0.0..1.0).contains(&self.ci_level) || self.ci_level == 0.0 {
            return Err(ResampleError::InvalidSpec("ci_level must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub reps_total: usize,
    /// Replicates on which the statistic was defined; the interval uses
    /// only these.
    pub reps_defined: usize,
    pub ci_level: f64,
}

/// One bootstrap replicate: resample clusters with replacement on stream
/// `(seed, rep)` and evaluate the statistic.
pub fn bootstrap_replicate<C, F>(clusters: &[C], stat: &F, seed: u64, rep: u64) -> Option<f64>
where
    F: Fn(&[&C]) -> Option<f64>,
{
    let mut rng = stream_rng(seed, rep);
    let resampled: Vec<&C> = (0..clusters.len())
        .map(|_| &clusters[rng.gen_range(0..clusters.len())])
        .collect();
    stat(&resampled)
}

/// Percentile cluster-bootstrap interval for `stat`.
///
/// Replicates where the statistic is undefined (for example a stratum with
/// zero events) are recorded as absent and excluded from the interval; the
/// defined count is reported. Fails when the point statistic itself is
/// undefined or there are fewer than two clusters.
pub fn cluster_bootstrap<C, F>(
    clusters: &[C],
    stat: F,
    spec: &BootstrapSpec,
) -> Result<BootstrapCi, ResampleError>
where
    C: Sync,
    F: Fn(&[&C]) -> Option<f64> + Send + Sync,
{
    spec.validate()?;
    if clusters.len() < 2 {
        return Err(ResampleError::TooFew {
            what: "clusters",
            need: 2,
            got: clusters.len(),
        });
    }
    let original: Vec<&C> = clusters.iter().collect();
    let point = stat(&original).ok_or(ResampleError::TooFew {
        what: "defined statistic values",
        need: 1,
        got: 0,
    })?;
    let replicates = indexed_map(spec.reps, |i| {
        bootstrap_replicate(clusters, &stat, spec.seed, i as u64)
    });
    let mut defined: Vec<f64> = replicates.into_iter().flatten().collect();
    defined.sort_unstable_by(f64::total_cmp);
    if defined.is_empty() {
        return Err(ResampleError::TooFew {
            what: "defined replicates",
            need: 1,
            got: 0,
        });
    }
    let tail = (1.0 - spec.ci_level) / 2.0;
    Ok(BootstrapCi {
        point,
        lo: quantile_order_stat(&defined, tail),
        hi: quantile_order_stat(&defined, 1.0 - tail),
        reps_total: spec.reps,
        reps_defined: defined.len(),
        ci_level: spec.ci_level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Serialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    pub n_nonzero: usize,
    /// Two-sided p-value; 0 when it underflows f64 (see `log10_p`).
    pub p: f64,
    /// log10 of the two-sided p-value, computed stably.
    pub log10_p: f64,
    pub method: WilcoxonMethod,
    /// Every difference was zero; `p` is reported as 1.
    pub all_zero: bool,
}

const EXACT_LIMIT: usize = 25;

/// Two-sided Wilcoxon signed-rank test on paired differences.
pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<WilcoxonResult, ResampleError> {
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() && !differences.is_empty() {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            n_nonzero: 0,
            p: 1.0,
            log10_p: 0.0,
            method: WilcoxonMethod::Exact,
            all_zero: true,
        });
    }
    if nonzero.len() < 5 {
        return Err(ResampleError::TooFew {
            what: "nonzero differences",
            need: 5,
            got: nonzero.len(),
        });
    }

    let ranks = midranks(&nonzero);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    let (p, log10_p, method) = if nonzero.len() <= EXACT_LIMIT {
        let p = exact_two_sided_p(&ranks, w_plus);
        (p, p.log10(), WilcoxonMethod::Exact)
    } else {
        let (p, lp) = normal_two_sided_p(&ranks, w_plus);
        (p, lp, WilcoxonMethod::NormalApproximation)
    };
    Ok(WilcoxonResult {
        w_plus,
        n_nonzero: nonzero.len(),
        p,
        log10_p,
        method,
        all_zero: false,
    })
}

/// Mid-ranks of |d|, ties averaged.
fn midranks(diffs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0.0; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p by full enumeration of the 2^n sign patterns via a
/// subset-sum table over doubled ranks (mid-ranks step in halves).
pub(crate) fn exact_two_sided_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut table = vec![0.0f64; total + 1];
    table[0] = 1.0;
    let mut reach = 0usize;
    for &r in &doubled {
        reach += r;
        for s in (r..=reach).rev() {
            table[s] += table[s - r];
        }
    }
    let patterns = 2f64.powi(ranks.len() as i32);
    let w = (2.0 * w_plus).round() as usize;
    let le: f64 = table[..=w].iter().sum();
    let ge: f64 = table[w..].iter().sum();
    (2.0 * le.min(ge) / patterns).min(1.0)
}

/// Normal approximation with continuity and tie corrections; returns
/// `(p, log10 p)`.
pub(crate) fn normal_two_sided_p(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    // Tie correction: subtract sum(t^3 - t)/48 over tie groups.
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let centered = w_plus - mean;
    let z = if centered == 0.0 {
        0.0
    } else {
        (centered - 0.5 * centered.signum()) / sd
    };
    let p = 2.0 * crate::stats::normal_sf(z.abs());
    (p.min(1.0), crate::stats::log10_two_sided_normal_p(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_statistic_gives_point_interval() {
        let clusters: Vec<Vec<f64>> = (0..10).map(|_| vec![3.0]).collect();
        let spec = BootstrapSpec::new(400, 1, ClusterKey::Thread);
        let ci = cluster_bootstrap(&clusters, |_| Some(42.0), &spec).unwrap();
        assert_eq!((ci.point, ci.lo, ci.hi), (42.0, 42.0, 42.0));
        assert_eq!(ci.reps_defined, 400);
    }

    #[test]
    fn three_singleton_clusters_match_exhaustive_enumeration() {
        // Mean of {1,2,3} resampled as three singleton clusters: all 27
        // equally likely resamples enumerate the exact replicate law.
        let clusters = vec![1.0, 2.0, 3.0];
        let spec = BootstrapSpec::new(10_000, 7, ClusterKey::Thread);
        let ci = cluster_bootstrap(
            &clusters,
            |cs| Some(cs.iter().copied().sum::<f64>() / cs.len() as f64),
            &spec,
        )
        .unwrap();
        assert_eq!(ci.point, 2.0);
        assert!(ci.lo <= 2.0 && 2.0 <= ci.hi);

        let mut exhaustive = Vec::new();
        for a in 1..=3 {
            for b in 1..=3 {
                for c in 1..=3 {
                    exhaustive.push((a + b + c) as f64 / 3.0);
                }
            }
        }
        exhaustive.sort_unstable_by(f64::total_cmp);
        let lo_exact = quantile_order_stat(&exhaustive, 0.025);
        let hi_exact = quantile_order_stat(&exhaustive, 0.975);
        // The replicate quantiles take values on the same 7-point support;
        // at 10k reps they land on the exact endpoints.
        assert_eq!(ci.lo, lo_exact);
        assert_eq!(ci.hi, hi_exact);
    }

    #[test]
    fn endpoints_are_order_statistics_of_the_replicates() {
        let clusters: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let spec = BootstrapSpec::new(500, 3, ClusterKey::Thread);
        let stat = |cs: &[&f64]| Some(cs.iter().copied().sum::<f64>() / cs.len() as f64);
        let ci = cluster_bootstrap(&clusters, stat, &spec).unwrap();
        let replicates: Vec<f64> = (0..500)
            .filter_map(|i| bootstrap_replicate(&clusters, &stat, 3, i as u64))
            .collect();
        assert!(replicates.contains(&ci.lo));
        assert!(replicates.contains(&ci.hi));
        let mut sorted = replicates;
        sorted.sort_unstable_by(f64::total_cmp);
        assert_eq!(ci.lo, sorted[(0.025f64 * 500.0).ceil() as usize - 1]);
        assert_eq!(ci.hi, sorted[(0.975f64 * 500.0).ceil() as usize - 1]);
    }

    #[test]
    fn bootstrap_is_bit_reproducible() {
        let clusters: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let spec = BootstrapSpec::new(300, 11, ClusterKey::Category);
        let stat = |cs: &[&f64]| Some(cs.iter().copied().sum::<f64>());
        let a = cluster_bootstrap(&clusters, stat, &spec).unwrap();
        let b = cluster_bootstrap(&clusters, stat, &spec).unwrap();
        assert_eq!(a.lo.to_bits(), b.lo.to_bits());
        assert_eq!(a.hi.to_bits(), b.hi.to_bits());
    }

    #[test]
    fn undefined_replicates_are_reported() {
        // Statistic undefined whenever cluster 0 is absent from the draw.
        let clusters: Vec<u32> = (0..8).collect();
        let spec = BootstrapSpec::new(200, 5, ClusterKey::Thread);
        let ci = cluster_bootstrap(
            &clusters,
            |cs| cs.iter().any(|&&c| c == 0).then(|| cs.len() as f64),
            &spec,
        )
        .unwrap();
        assert!(ci.reps_defined < ci.reps_total);
        assert!(ci.reps_defined > 0);
    }

    #[test]
    fn too_few_clusters_is_an_error() {
        let spec = BootstrapSpec::new(100, 1, ClusterKey::Thread);
        assert!(cluster_bootstrap(&[1.0], |_| Some(0.0), &spec).is_err());
    }

    #[test]
    fn wilcoxon_six_positive_differences_exact() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert_eq!(r.p, 1.0 / 32.0);
        assert_eq!(r.w_plus, 21.0);
    }

    #[test]
    fn wilcoxon_symmetric_pairs_near_one() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0]).unwrap();
        assert!(r.p > 0.9, "p = {}", r.p);
    }

    #[test]
    fn wilcoxon_all_zero_flags() {
        let r = wilcoxon_signed_rank(&[0.0, 0.0, 0.0]).unwrap();
        assert!(r.all_zero);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn wilcoxon_too_few_nonzero() {
        assert!(wilcoxon_signed_rank(&[1.0, -2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn wilcoxon_zeros_dropped_ties_midranked() {
        // Nonzero diffs {2, 2, -1, 3, 3}: |d| ranks are 1, then {2,3}
        // midranked 2.5 each, then {4,5} midranked 4.5 each.
        let r = wilcoxon_signed_rank(&[2.0, 2.0, -1.0, 0.0, 3.0, 3.0]).unwrap();
        assert_eq!(r.n_nonzero, 5);
        assert_eq!(r.w_plus, 2.5 + 2.5 + 4.5 + 4.5);
    }

    #[test]
    fn exact_and_normal_branches_agree_at_n20() {
        use rand::Rng;
        let mut rng = stream_rng(31, 0);
        for _ in 0..20 {
            let diffs: Vec<f64> = (0..20)
                .map(|_| {
                    let mag: f64 = rng.gen_range(0.5..10.0);
                    if rng.gen_bool(0.55) {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            let ranks = midranks(&diffs);
            let w_plus: f64 = diffs
                .iter()
                .zip(&ranks)
                .filter(|(d, _)| **d > 0.0)
                .map(|(_, r)| *r)
                .sum();
            let exact = exact_two_sided_p(&ranks, w_plus);
            let (normal, _) = normal_two_sided_p(&ranks, w_plus);
            let rel = (exact - normal).abs() / exact.max(1e-12);
            assert!(rel < 0.10, "exact {exact} vs normal {normal}");
        }
    }

    #[test]
    fn extreme_differences_report_finite_log10_p() {
        // 400 strongly one-sided pairs: p underflows printable ranges but
        // log10(p) stays finite and very negative.
        let diffs: Vec<f64> = (1..=400).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&diffs).unwrap();
        assert_eq!(r.method, WilcoxonMethod::NormalApproximation);
        assert!(r.log10_p < -30.0);
        assert!(r.log10_p.is_finite());
    }
}
