//! Complementary log-log incidence regression with two-way cluster-robust
//! covariance.
//!
//! The event indicator of each candidate parent is modeled through
//! `log(-log(1 - pi)) = x' eta`, which aligns with a discrete-time hazard
//! reading of rare-event incidence. Fitting is iteratively reweighted least
//! squares with step-halving; inference uses a sandwich covariance with
//! cluster sums taken by thread and by author and combined by
//! inclusion-exclusion:
//!
//! ```text
//! V = A^{-1} (M_thread + M_author - M_thread_x_author) A^{-1}
//! ```
//!
//! where `A` is the weighted information `X' W X` and each `M` sums outer
//! products of cluster-aggregated scores. Negative eigenvalues (possible
//! with inclusion-exclusion) are floored at zero and flagged.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::ingest::Category;
use crate::persistence::SurvivalUnit;

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("design must contain both events and non-events")]
    DegenerateResponse,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("apparent perfect separation: |{column}| diverged past {bound}")]
    Separation { column: String, bound: f64 },
    #[error("IRLS did not converge after {iterations} iterations (max |score| = {score:.3e})")]
    NonConvergence { iterations: usize, score: f64 },
    #[error("no rows with resolved authors")]
    EmptyDesign,
}

/// Design matrix for the incidence model: intercept, category indicators
/// against a reference level, and a claim-status indicator when claim data
/// carries both levels.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Vec<String>,
    /// Cluster index per row, one labeling per dimension.
    pub thread_clusters: Vec<usize>,
    pub author_clusters: Vec<usize>,
    pub n_thread_clusters: usize,
    pub n_author_clusters: usize,
}

pub const REFERENCE_CATEGORY: Category = Category::SocialCasual;

/// Build the design from survival units.
///
/// Rows with missing authors are dropped: claim status is undefined for
/// them and the claimed/unclaimed strata elsewhere exclude them as well,
/// so the model N matches those strata. Category indicator columns exist
/// only for non-reference categories actually present; the claimed column
/// exists only when both claim levels occur.
pub fn build_design(units: &[SurvivalUnit]) -> Result<DesignMatrix, GlmError> {
    let rows: Vec<&SurvivalUnit> = units.iter().filter(|u| u.author_id.is_some()).collect();
    if rows.is_empty() {
        return Err(GlmError::EmptyDesign);
    }
    let mut present: Vec<Category> = Vec::new();
    for c in Category::ALL {
        if c != REFERENCE_CATEGORY && rows.iter().any(|u| u.category == c) {
            present.push(c);
        }
    }
    let has_claim_variation = rows.iter().any(|u| u.claimed == Some(true))
        && rows.iter().any(|u| u.claimed == Some(false));

    let mut column_names = vec!["intercept".to_string()];
    column_names.extend(present.iter().map(|c| format!("category:{c}")));
    if has_claim_variation {
        column_names.push("claimed".to_string());
    }
    let p = column_names.len();
    let n = rows.len();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, u) in rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, c) in present.iter().enumerate() {
            if u.category == *c {
                x[(i, j + 1)] = 1.0;
            }
        }
        if has_claim_variation && u.claimed == Some(true) {
            x[(i, p - 1)] = 1.0;
        }
        y[i] = if u.event { 1.0 } else { 0.0 };
    }

    let mut thread_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut author_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut thread_clusters = Vec::with_capacity(n);
    let mut author_clusters = Vec::with_capacity(n);
    for u in &rows {
        let next = thread_ids.len();
        thread_clusters.push(*thread_ids.entry(u.thread_id.as_str()).or_insert(next));
        let next = author_ids.len();
        author_clusters.push(
            *author_ids
                .entry(u.author_id.as_deref().unwrap())
                .or_insert(next),
        );
    }
    Ok(DesignMatrix {
        x,
        y,
        column_names,
        n_thread_clusters: thread_ids.len(),
        n_author_clusters: author_ids.len(),
        thread_clusters,
        author_clusters,
    })
}

// Coefficients past this magnitude indicate separation: a cloglog linear
// predictor of +/-20 is an incidence of 1 - exp(-e^20) or exp(-20), far
// beyond anything identifiable from finite data.
const SEPARATION_BOUND: f64 = 20.0;
// Linear predictors clamp well above the separation bound so a diverging
// coefficient is seen as divergence rather than silently saturating.
const ETA_CLAMP: f64 = 40.0;
const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n: usize,
    /// Fitted probabilities per row.
    #[serde(skip)]
    pub fitted: DVector<f64>,
    /// IRLS weights at the optimum (for the bread matrix).
    #[serde(skip)]
    pub weights: DVector<f64>,
    /// Score residuals `(y - mu) g' / (mu (1 - mu))` at the optimum.
    #[serde(skip)]
    pub score_residuals: DVector<f64>,
}

fn inverse_link(eta: f64) -> f64 {
    // pi = 1 - exp(-exp(eta)), kept away from {0, 1}.
    (1.0 - (-eta.exp()).exp()).clamp(1e-12, 1.0 - 1e-12)
}

fn link_derivative(eta: f64) -> f64 {
    // d pi / d eta = exp(eta - exp(eta)).
    (eta - eta.exp()).exp().max(1e-300)
}

fn bernoulli_loglik(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    y.iter()
        .zip(mu.iter())
        .map(|(&yi, &m)| if yi > 0.5 { m.ln() } else { (1.0 - m).ln() })
        .sum()
}

/// Fit the cloglog model by IRLS with step-halving. Convergence requires
/// the maximum absolute score component below 1e-8.
pub fn fit_cloglog(design: &DesignMatrix) -> Result<GlmFit, GlmError> {
    let n_events = design.y.iter().filter(|&&v| v > 0.5).count();
    if n_events == 0 || n_events == design.y.len() {
        return Err(GlmError::DegenerateResponse);
    }
    let (n, p) = design.x.shape();
    let rate = n_events as f64 / n as f64;
    let mut beta = DVector::zeros(p);
    beta[0] = (-(1.0 - rate).ln()).ln(); // cloglog of the event rate

    let eval = |beta: &DVector<f64>| {
        let eta = (&design.x * beta).map(|e: f64| e.clamp(-ETA_CLAMP, ETA_CLAMP));
        let mu = eta.map(inverse_link);
        let ll = bernoulli_loglik(&design.y, &mu);
        (eta, mu, ll)
    };
    let (mut eta, mut mu, mut ll) = eval(&beta);

    let mut iterations = 0;
    loop {
        iterations += 1;
        let gprime = eta.map(link_derivative);
        let mut w = DVector::zeros(n);
        let mut resid = DVector::zeros(n);
        for i in 0..n {
            let v = (mu[i] * (1.0 - mu[i])).max(1e-12);
            w[i] = gprime[i] * gprime[i] / v;
            resid[i] = (design.y[i] - mu[i]) * gprime[i] / v;
        }
        let score = design.x.transpose() * &resid;
        let max_score = score.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
        if max_score < SCORE_TOL {
            return Ok(GlmFit {
                coefficients: beta.iter().copied().collect(),
                column_names: design.column_names.clone(),
                loglik: ll,
                iterations,
                converged: true,
                n,
                fitted: mu,
                weights: w,
                score_residuals: resid,
            });
        }
        if iterations > MAX_ITER {
            return Err(GlmError::NonConvergence {
                iterations,
                score: max_score,
            });
        }

        // Weighted normal equations for the Newton step.
        let xw = {
            let mut xt = design.x.transpose();
            for i in 0..n {
                xt.column_mut(i).scale_mut(w[i]);
            }
            xt
        };
        let a = &xw * &design.x;
        let z = {
            let mut z = eta.clone();
            for i in 0..n {
                z[i] += (design.y[i] - mu[i]) / gprime[i];
            }
            z
        };
        let rhs = &xw * z;
        let chol = a.cholesky().ok_or(GlmError::RankDeficient)?;
        let target = chol.solve(&rhs);

        // Step-halving from beta toward the IRLS target. The slack absorbs
        // float noise in the log-likelihood sum near the optimum.
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut accepted = false;
        let mut step = 1.0;
        for _ in 0..30 {
            let cand = &beta * (1.0 - step) + &target * step;
            let (ceta, cmu, cll) = eval(&cand);
            if cll > ll - slack {
                beta = cand;
                eta = ceta;
                mu = cmu;
                ll = cll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        for (j, b) in beta.iter().enumerate() {
            if b.abs() >= SEPARATION_BOUND {
                return Err(GlmError::Separation {
                    column: design.column_names[j].clone(),
                    bound: SEPARATION_BOUND,
                });
            }
        }
        if !accepted {
            return Err(GlmError::NonConvergence {
                iterations,
                score: max_score,
            });
        }
    }
}

/// Two-way cluster-robust covariance via inclusion-exclusion.
#[derive(Debug, Clone)]
pub struct ClusteredCovariance {
    pub cov: DMatrix<f64>,
    /// Negative eigenvalues were floored at zero.
    pub eigenvalue_floored: bool,
    /// Small-sample G/(G-1) factors applied per dimension.
    pub small_sample_correction: bool,
}

fn cluster_meat(
    x: &DMatrix<f64>,
    resid: &DVector<f64>,
    clusters: &[usize],
    n_clusters: usize,
) -> DMatrix<f64> {
    let p = x.ncols();
    let mut sums: DMatrix<f64> = DMatrix::zeros(p, n_clusters);
    for i in 0..x.nrows() {
        let c = clusters[i];
        for j in 0..p {
            sums[(j, c)] += x[(i, j)] * resid[i];
        }
    }
    &sums * sums.transpose()
}

/// Sandwich covariance clustered by thread and author:
/// `A^{-1} (M_t + M_a - M_ta) A^{-1}`. Rows lacking a label must arrive as
/// singleton clusters. `small_sample` applies the G/(G-1) factor to each
/// meat term.
pub fn two_way_cluster_cov(
    design: &DesignMatrix,
    fit: &GlmFit,
    small_sample: bool,
) -> ClusteredCovariance {
    let n = design.x.nrows();
    // Intersection clusters: distinct (thread, author) pairs.
    let mut pair_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut pair_clusters = Vec::with_capacity(n);
    for i in 0..n {
        let key = (design.thread_clusters[i], design.author_clusters[i]);
        let next = pair_ids.len();
        pair_clusters.push(*pair_ids.entry(key).or_insert(next));
    }

    let correction = |g: usize| -> f64 {
        if small_sample && g > 1 {
            g as f64 / (g as f64 - 1.0)
        } else {
            1.0
        }
    };
    let m_thread = cluster_meat(
        &design.x,
        &fit.score_residuals,
        &design.thread_clusters,
        design.n_thread_clusters,
    ) * correction(design.n_thread_clusters);
    let m_author = cluster_meat(
        &design.x,
        &fit.score_residuals,
        &design.author_clusters,
        design.n_author_clusters,
    ) * correction(design.n_author_clusters);
    let m_pair = cluster_meat(&design.x, &fit.score_residuals, &pair_clusters, pair_ids.len())
        * correction(pair_ids.len());
    let meat = m_thread + m_author - m_pair;

    let xw = {
        let mut xt = design.x.transpose();
        for i in 0..n {
            xt.column_mut(i).scale_mut(fit.weights[i]);
        }
        xt
    };
    let bread = (&xw * &design.x)
        .try_inverse()
        .expect("information matrix invertible at a converged fit");
    let cov = &bread * meat * bread.transpose();

    // Inclusion-exclusion can push small eigenvalues negative; floor them.
    let sym = (&cov + cov.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max).max(1e-300);
    if min_eig < -1e-12 * scale {
        let mut vals = eig.eigenvalues.clone();
        for v in vals.iter_mut() {
            *v = v.max(0.0);
        }
        let floored =
            &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        ClusteredCovariance {
            cov: floored,
            eigenvalue_floored: true,
            small_sample_correction: small_sample,
        }
    } else {
        ClusteredCovariance {
            cov: sym,
            eigenvalue_floored: false,
            small_sample_correction: small_sample,
        }
    }
}

/// Heteroskedasticity-robust sandwich (every row its own cluster); the
/// singleton limit of the two-way estimator.
pub fn plain_sandwich(design: &DesignMatrix, fit: &GlmFit) -> DMatrix<f64> {
    let n = design.x.nrows();
    let singletons: Vec<usize> = (0..n).collect();
    let meat = cluster_meat(&design.x, &fit.score_residuals, &singletons, n);
    let xw = {
        let mut xt = design.x.transpose();
        for i in 0..n {
            xt.column_mut(i).scale_mut(fit.weights[i]);
        }
        xt
    };
    let bread = (&xw * &design.x)
        .try_inverse()
        .expect("information matrix invertible at a converged fit");
    &bread * meat * bread.transpose()
}

/// One coefficient row of the model report.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Full incidence-model report: coefficients with two-way clustered Wald
/// intervals plus the calibration line (observed vs mean fitted).
#[derive(Debug, Clone, Serialize)]
pub struct GlmReport {
    pub coefficients: Vec<CoefficientRow>,
    pub n: usize,
    pub n_thread_clusters: usize,
    pub n_author_clusters: usize,
    pub observed_rate: f64,
    pub mean_fitted: f64,
    pub calibration_abs_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub eigenvalue_floored: bool,
}

const Z_975: f64 = 1.959_963_984_540_054;

pub fn glm_report(design: &DesignMatrix, fit: &GlmFit, small_sample: bool) -> GlmReport {
    let cov = two_way_cluster_cov(design, fit, small_sample);
    let coefficients = fit
        .coefficients
        .iter()
        .enumerate()
        .map(|(j, &est)| {
            let se = cov.cov[(j, j)].max(0.0).sqrt();
            CoefficientRow {
                name: fit.column_names[j].clone(),
                estimate: est,
                se,
                ci_lo: est - Z_975 * se,
                ci_hi: est + Z_975 * se,
            }
        })
        .collect();
    let observed = design.y.iter().sum::<f64>() / design.y.len() as f64;
    let mean_fitted = fit.fitted.iter().sum::<f64>() / fit.fitted.len() as f64;
    GlmReport {
        coefficients,
        n: fit.n,
        n_thread_clusters: design.n_thread_clusters,
        n_author_clusters: design.n_author_clusters,
        observed_rate: observed,
        mean_fitted,
        calibration_abs_error: (mean_fitted - observed).abs(),
        iterations: fit.iterations,
        converged: fit.converged,
        eigenvalue_floored: cov.eigenvalue_floored,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn unit(event: bool, category: Category, thread: &str, author: &str) -> SurvivalUnit {
        SurvivalUnit {
            parent_comment_id: "c".into(),
            thread_id: thread.into(),
            author_id: Some(author.into()),
            claimed: None,
            category,
            parent_time_s: 0.0,
            s: if event { 5.0 } else { 100.0 },
            event,
            censor_s: 100.0,
        }
    }

    fn random_units(n: usize, rate: f64, seed: u64) -> Vec<SurvivalUnit> {
        let mut rng = crate::exec::stream_rng(seed, 0);
        (0..n)
            .map(|i| {
                unit(
                    rng.gen_bool(rate),
                    Category::SocialCasual,
                    &format!("t{}", i / 5),
                    &format!("a{}", i % 97),
                )
            })
            .collect()
    }

    #[test]
    fn intercept_only_mean_fitted_equals_event_rate() {
        let units = random_units(4000, 0.13, 41);
        let design = build_design(&units).unwrap();
        assert_eq!(design.column_names, vec!["intercept"]);
        let fit = fit_cloglog(&design).unwrap();
        let rate = design.y.iter().sum::<f64>() / design.y.len() as f64;
        let mean_fitted = fit.fitted.iter().sum::<f64>() / fit.fitted.len() as f64;
        assert!((mean_fitted - rate).abs() < 1e-10, "{mean_fitted} vs {rate}");
    }

    #[test]
    fn link_sanity_fitted_match_linear_predictor() {
        let units = random_units(500, 0.2, 43);
        let design = build_design(&units).unwrap();
        let fit = fit_cloglog(&design).unwrap();
        let beta = DVector::from_vec(fit.coefficients.clone());
        let eta = &design.x * beta;
        for i in 0..design.x.nrows() {
            assert!((inverse_link(eta[i]) - fit.fitted[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_known_coefficients() {
        // DGP: eta = -2.0 + 0.8 * claimed, cloglog link.
        let mut rng = crate::exec::stream_rng(47, 0);
        let mut units = Vec::new();
        for i in 0..40_000 {
            let claimed = i % 4 == 0;
            let eta: f64 = -2.0 + if claimed { 0.8 } else { 0.0 };
            let p = 1.0 - (-eta.exp()).exp();
            let mut u = unit(
                rng.gen_bool(p),
                Category::SocialCasual,
                &format!("t{i}"),
                &format!("a{}", i % 500),
            );
            u.claimed = Some(claimed);
            units.push(u);
        }
        let design = build_design(&units).unwrap();
        assert_eq!(design.column_names, vec!["intercept", "claimed"]);
        let fit = fit_cloglog(&design).unwrap();
        assert!((fit.coefficients[0] + 2.0).abs() < 0.1, "{:?}", fit.coefficients);
        assert!((fit.coefficients[1] - 0.8).abs() < 0.12, "{:?}", fit.coefficients);
        let report = glm_report(&design, &fit, false);
        let claimed = &report.coefficients[1];
        assert!(claimed.ci_lo < 0.8 && 0.8 < claimed.ci_hi);
    }

    #[test]
    fn singleton_clusters_reduce_to_plain_sandwich() {
        // Six rows, each its own thread and author: exact matrix identity.
        let categories = [
            Category::SocialCasual,
            Category::BuilderTechnical,
            Category::SocialCasual,
            Category::BuilderTechnical,
            Category::SocialCasual,
            Category::SocialCasual,
        ];
        let events = [true, false, false, true, true, false];
        let units: Vec<SurvivalUnit> = (0..6)
            .map(|i| unit(events[i], categories[i], &format!("t{i}"), &format!("a{i}")))
            .collect();
        let design = build_design(&units).unwrap();
        let fit = fit_cloglog(&design).unwrap();
        let twoway = two_way_cluster_cov(&design, &fit, false);
        let plain = plain_sandwich(&design, &fit);
        for j in 0..plain.nrows() {
            for k in 0..plain.ncols() {
                assert!(
                    (twoway.cov[(j, k)] - plain[(j, k)]).abs()
                        <= 1e-12 * plain[(j, k)].abs().max(1e-12),
                    "({j},{k}): {} vs {}",
                    twoway.cov[(j, k)],
                    plain[(j, k)]
                );
            }
        }
    }

    #[test]
    fn six_row_fixture_matches_hand_computed_cluster_sums() {
        // Two threads x three authors; meat terms recomputed by explicit
        // loops, independent of the library path.
        let units: Vec<SurvivalUnit> = vec![
            unit(true, Category::SocialCasual, "t1", "a1"),
            unit(false, Category::SocialCasual, "t1", "a2"),
            unit(false, Category::SocialCasual, "t1", "a1"),
            unit(true, Category::SocialCasual, "t2", "a2"),
            unit(false, Category::SocialCasual, "t2", "a3"),
            unit(true, Category::SocialCasual, "t2", "a3"),
        ];
        let design = build_design(&units).unwrap();
        let fit = fit_cloglog(&design).unwrap();
        let twoway = two_way_cluster_cov(&design, &fit, false);

        // Hand path: 1-column design, scalar algebra.
        let r: Vec<f64> = fit.score_residuals.iter().copied().collect();
        let thread_sums = [r[0] + r[1] + r[2], r[3] + r[4] + r[5]];
        let author_sums = [r[0] + r[2], r[1] + r[3], r[4] + r[5]];
        let pair_sums = [r[0] + r[2], r[1], r[3], r[4] + r[5]];
        let meat: f64 = thread_sums.iter().map(|s| s * s).sum::<f64>()
            + author_sums.iter().map(|s| s * s).sum::<f64>()
            - pair_sums.iter().map(|s| s * s).sum::<f64>();
        let a: f64 = fit.weights.iter().sum();
        let expected = meat / (a * a);
        assert!(
            (twoway.cov[(0, 0)] - expected).abs() < 1e-12 * expected.abs().max(1e-12),
            "{} vs {expected}",
            twoway.cov[(0, 0)]
        );
    }

    #[test]
    fn duplicating_rows_with_same_clusters_preserves_variance() {
        let units = random_units(600, 0.25, 53);
        let design = build_design(&units).unwrap();
        let fit = fit_cloglog(&design).unwrap();
        let v1 = two_way_cluster_cov(&design, &fit, false);

        let mut doubled = units.clone();
        doubled.extend(units.iter().cloned());
        let design2 = build_design(&doubled).unwrap();
        let fit2 = fit_cloglog(&design2).unwrap();
        let v2 = two_way_cluster_cov(&design2, &fit2, false);
        // Meat scales by 4, bread by 1/2 on each side: variance unchanged
        // (no small-sample factor applied).
        assert!(
            (v1.cov[(0, 0)] - v2.cov[(0, 0)]).abs() < 1e-8 * v1.cov[(0, 0)],
            "{} vs {}",
            v1.cov[(0, 0)],
            v2.cov[(0, 0)]
        );
    }

    #[test]
    fn covariance_is_positive_semidefinite_after_floor() {
        let units = random_units(900, 0.1, 59);
        let design = build_design(&units).unwrap();
        let fit = fit_cloglog(&design).unwrap();
        let v = two_way_cluster_cov(&design, &fit, false);
        let eig = v.cov.symmetric_eigen();
        for &e in eig.eigenvalues.iter() {
            assert!(e >= -1e-12, "eigenvalue {e}");
        }
    }

    #[test]
    fn separation_errors_name_the_column() {
        // Claimed accounts always reply, unclaimed never: perfectly
        // separated claimed indicator.
        let mut units = Vec::new();
        for i in 0..200 {
            let claimed = i % 2 == 0;
            let mut u = unit(
                claimed,
                Category::SocialCasual,
                &format!("t{i}"),
                &format!("a{i}"),
            );
            u.claimed = Some(claimed);
            units.push(u);
        }
        let design = build_design(&units).unwrap();
        match fit_cloglog(&design) {
            Err(GlmError::Separation { column, .. }) => {
                assert!(column.contains("claimed") || column == "intercept");
            }
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_response_is_rejected() {
        let units: Vec<SurvivalUnit> = (0..10)
            .map(|i| unit(true, Category::SocialCasual, &format!("t{i}"), "a"))
            .collect();
        let design = build_design(&units).unwrap();
        assert!(matches!(fit_cloglog(&design), Err(GlmError::DegenerateResponse)));
    }

    #[test]
    fn missing_author_rows_are_dropped_from_the_design() {
        let mut units = random_units(50, 0.3, 61);
        units[0].author_id = None;
        units[1].author_id = None;
        let design = build_design(&units).unwrap();
        assert_eq!(design.x.nrows(), 48);
    }

    #[test]
    fn small_sample_correction_inflates_variance() {
        let units = random_units(400, 0.2, 67);
        let design = build_design(&units).unwrap();
        let fit = fit_cloglog(&design).unwrap();
        let plainv = two_way_cluster_cov(&design, &fit, false);
        let corrected = two_way_cluster_cov(&design, &fit, true);
        assert!(corrected.cov[(0, 0)] > plainv.cov[(0, 0)]);
    }
}
