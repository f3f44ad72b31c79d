//! Censored first-direct-reply survival analysis and the two-part
//! (incidence x conditional-timing) persistence readout.
//!
//! Every non-root comment is one candidate-parent survival unit. With
//! first-direct-reply time `T` and censoring time `C` (observation end minus
//! the parent timestamp), the unit records `s = min(T, C)` and the event
//! flag `delta = 1{T <= C}`. Incidence at horizon `h` is measured on the
//! explicit risk set `R_h = {C >= h or T <= h}`; the throughput identity
//! `q_h = pi_h * phi_h` factorizes reply probability within `h` into a
//! participation margin and a conditional-speed margin on that risk set.
//!
//! The kernel diagnostic fits an exponential reply hazard
//! `lambda(s) = alpha * exp(-beta s)` by censored maximum likelihood,
//!
//! ```text
//! l(alpha, beta) = sum_m [ delta_m (log alpha - beta s_m)
//!                          - (alpha/beta) (1 - exp(-beta s_m)) ]
//! ```
//!
//! with `alpha` profiled in closed form and a one-dimensional search over
//! `log beta`. Its half-life `ln 2 / beta` is a kernel-decay timescale, not
//! a thread lifetime, and is reported as a secondary diagnostic; the same
//! convention applies to `p_inf = 1 - exp(-alpha/beta)`.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{Category, Segment, SegmentSet};
use crate::stats::quantile_linear;
use crate::threadgraph::ThreadTree;
use crate::time::Timestamp;

/// Event durations of exactly zero (reply in the same second as the parent)
/// are clamped to this value before kernel/Weibull likelihood evaluation;
/// raw zeros are kept for quantiles.
pub const ZERO_DURATION_CLAMP_S: f64 = 0.5;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("no events to fit")]
    NoEvents,
    #[error("did not converge: {trace}")]
    NonConvergence { trace: String },
}

/// One candidate-parent survival unit.
#[derive(Debug, Clone, Serialize)]
pub struct SurvivalUnit {
    pub parent_comment_id: String,
    pub thread_id: String,
    pub author_id: Option<String>,
    /// Account claim status of the author, when an agents table is provided.
    pub claimed: Option<bool>,
    pub category: Category,
    /// Parent comment creation time (seconds since epoch, fractional for
    /// simulated corpora).
    pub parent_time_s: f64,
    /// Observed duration `min(T, C)` in seconds.
    pub s: f64,
    /// 1 iff the first direct reply arrived within the censoring window.
    pub event: bool,
    /// Censoring duration in seconds.
    pub censor_s: f64,
}

impl SurvivalUnit {
    /// Reply time when observed.
    pub fn reply_time(&self) -> Option<f64> {
        self.event.then_some(self.s)
    }
}

/// Build one survival unit per non-root comment.
///
/// `T` is the smallest direct-child offset, `C` is `observation_end` minus
/// the comment time. Comments after the observation end are ignored, and a
/// childless unit with zero censoring time carries no information and is
/// skipped. No replies are imputed across coverage gaps: a reply beyond `C`
/// leaves the unit censored.
pub fn build_survival_units(trees: &[ThreadTree], observation_end: Timestamp) -> Vec<SurvivalUnit> {
    let per_tree: Vec<Vec<SurvivalUnit>> = crate::exec::indexed_map(trees.len(), |ti| {
        let tree = &trees[ti];
        let end = observation_end.0 as f64;
        let root = tree.root_time.0 as f64;
        // first_child[n] = min offset lag among direct children of node n.
        let mut first_child: Vec<Option<f64>> = vec![None; tree.nodes.len()];
        for node in tree.nodes.iter().skip(1) {
            let p = node.parent.unwrap();
            let lag = node.offset_s - tree.nodes[p].offset_s;
            let e = &mut first_child[p];
            *e = Some(e.map_or(lag, |cur: f64| cur.min(lag)));
        }
        let mut units = Vec::with_capacity(tree.n_comments());
        for (n, node) in tree.nodes.iter().enumerate().skip(1) {
            let t_abs = root + node.offset_s;
            if t_abs > end {
                continue;
            }
            let censor = end - t_abs;
            let reply = first_child[n].filter(|&t| t <= censor);
            if reply.is_none() && censor <= 0.0 {
                continue;
            }
            let (s, event) = match reply {
                Some(t) => (t, true),
                None => (censor, false),
            };
            units.push(SurvivalUnit {
                parent_comment_id: node.id.clone(),
                thread_id: tree.thread_id.clone(),
                author_id: node.author.clone(),
                claimed: None,
                category: Category::Other,
                parent_time_s: t_abs,
                s,
                event,
                censor_s: censor,
            });
        }
        units
    });
    per_tree.into_iter().flatten().collect()
}

/// Attach thread categories and author claim status to units in place.
pub fn annotate_units(
    units: &mut [SurvivalUnit],
    categories: &BTreeMap<String, Category>,
    claimed: &BTreeMap<String, bool>,
) {
    for u in units.iter_mut() {
        if let Some(c) = categories.get(&u.thread_id) {
            u.category = *c;
        }
        u.claimed = u.author_id.as_ref().and_then(|a| claimed.get(a).copied());
    }
}

/// Horizon-standardized incidence on the explicit risk set
/// `R_h = {C >= h or T <= h}`. `None` when the risk set is empty.
pub fn horizon_incidence(units: &[SurvivalUnit], horizon_s: f64) -> Option<(f64, usize)> {
    let mut risk = 0usize;
    let mut replied = 0usize;
    for u in units {
        let replied_within = u.event && u.s <= horizon_s;
        if u.censor_s >= horizon_s || replied_within {
            risk += 1;
            if replied_within {
                replied += 1;
            }
        }
    }
    (risk > 0).then(|| (replied as f64 / risk as f64, risk))
}

/// Conditional reply-timing summary over `{s : delta = 1}`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionalTiming {
    pub n_events: usize,
    /// Quantiles use linear interpolation between closest order statistics.
    pub t50_s: f64,
    pub t90_s: f64,
    pub t95_s: f64,
    /// P(T <= 30 s | delta = 1).
    pub frac_30s: f64,
    /// P(T <= 5 min | delta = 1).
    pub frac_5m: f64,
}

pub fn conditional_timing(units: &[SurvivalUnit]) -> Option<ConditionalTiming> {
    let mut events: Vec<f64> = units.iter().filter_map(SurvivalUnit::reply_time).collect();
    if events.is_empty() {
        return None;
    }
    events.sort_unstable_by(f64::total_cmp);
    let n = events.len();
    let frac = |cut: f64| events.iter().filter(|&&t| t <= cut).count() as f64 / n as f64;
    Some(ConditionalTiming {
        n_events: n,
        t50_s: quantile_linear(&events, 0.5),
        t90_s: quantile_linear(&events, 0.9),
        t95_s: quantile_linear(&events, 0.95),
        frac_30s: frac(30.0),
        frac_5m: frac(300.0),
    })
}

/// Exponential-kernel hazard fit.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentialFit {
    pub alpha: f64,
    pub beta: f64,
    /// ln 2 / beta, in minutes. A kernel-decay timescale (diagnostic), not a
    /// thread lifetime.
    pub half_life_min: f64,
    /// 1 - exp(-alpha/beta): modeled probability of ever receiving a reply.
    pub p_inf: f64,
    pub loglik: f64,
    pub n_units: usize,
    pub n_events: usize,
    pub clamped_zero_durations: usize,
}

impl ExponentialFit {
    /// Cumulative kernel hazard `Lambda(t) = (alpha/beta) (1 - exp(-beta t))`.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        self.alpha / self.beta * (1.0 - (-self.beta * t).exp())
    }
}

/// Log-likelihood at `(alpha, beta)` over clamped `(s, delta)` pairs.
pub fn exponential_loglik(data: &[(f64, bool)], alpha: f64, beta: f64) -> f64 {
    let mut ll = 0.0;
    for &(s, event) in data {
        if event {
            ll += alpha.ln() - beta * s;
        }
        ll -= alpha / beta * (1.0 - (-beta * s).exp());
    }
    ll
}

/// Analytic gradient of the log-likelihood, for the finite-difference check.
pub fn exponential_loglik_grad(data: &[(f64, bool)], alpha: f64, beta: f64) -> (f64, f64) {
    let mut da = 0.0;
    let mut db = 0.0;
    for &(s, event) in data {
        let ebs = (-beta * s).exp();
        if event {
            da += 1.0 / alpha;
            db -= s;
        }
        da -= (1.0 - ebs) / beta;
        db += alpha / (beta * beta) * (1.0 - ebs) - alpha / beta * s * ebs;
    }
    (da, db)
}

/// Clamp event durations for likelihood work; see [`ZERO_DURATION_CLAMP_S`].
pub fn clamped_data(units: &[SurvivalUnit]) -> (Vec<(f64, bool)>, usize) {
    let mut clamped = 0usize;
    let data = units
        .iter()
        .map(|u| {
            let mut s = u.s;
            if u.event && s < ZERO_DURATION_CLAMP_S {
                s = ZERO_DURATION_CLAMP_S;
                clamped += 1;
            }
            (s, u.event)
        })
        .collect();
    (data, clamped)
}

/// Profiled alpha at fixed beta: `alpha(beta) = beta * n_events / sum(1 - exp(-beta s))`.
fn profiled_alpha(data: &[(f64, bool)], beta: f64) -> f64 {
    let n_events = data.iter().filter(|d| d.1).count() as f64;
    let denom: f64 = data.iter().map(|&(s, _)| 1.0 - (-beta * s).exp()).sum();
    if denom <= 0.0 {
        0.0
    } else {
        beta * n_events / denom
    }
}

// Search bracket for log beta: decay half-lives from ~1 ms up to 30 days.
const LOG_BETA_LO: f64 = -14.768; // ln(1 / 30 days)
const LOG_BETA_HI: f64 = 6.908; // ln(1000 / s)
const LOG_BETA_TOL: f64 = 1e-10;

/// Censored maximum-likelihood fit of the exponential reply kernel.
///
/// Alpha is profiled in closed form; the remaining one-dimensional profile
/// likelihood is maximized over `log beta` by golden-section search with a
/// Newton polish. With zero events the boundary `alpha = 0` carries no
/// timescale information and the caller receives [`FitError::NoEvents`].
pub fn fit_exponential_kernel(units: &[SurvivalUnit]) -> Result<ExponentialFit, FitError> {
    let (data, clamped) = clamped_data(units);
    let n_events = data.iter().filter(|d| d.1).count();
    if n_events == 0 {
        return Err(FitError::NoEvents);
    }

    let profile = |log_beta: f64| -> f64 {
        let beta = log_beta.exp();
        let alpha = profiled_alpha(&data, beta);
        if alpha <= 0.0 {
            return f64::NEG_INFINITY;
        }
        exponential_loglik(&data, alpha, beta)
    };

    // Golden-section search (the profile is unimodal in practice).
    let inv_phi = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (LOG_BETA_LO, LOG_BETA_HI);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (profile(c), profile(d));
    while b - a > 1e-6 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile(d);
        }
    }
    let mut x = 0.5 * (a + b);

    // Newton polish on the profile via central differences.
    let h = 1e-5;
    for _ in 0..60 {
        let fp = (profile(x + h) - profile(x - h)) / (2.0 * h);
        let fpp = (profile(x + h) - 2.0 * profile(x) + profile(x - h)) / (h * h);
        if fpp >= 0.0 {
            break;
        }
        let step = (fp / fpp).clamp(-0.5, 0.5);
        let next = (x - step).clamp(LOG_BETA_LO, LOG_BETA_HI);
        if (next - x).abs() < LOG_BETA_TOL {
            x = next;
            break;
        }
        x = next;
    }

    let beta = x.exp();
    let alpha = profiled_alpha(&data, beta);
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(FitError::NonConvergence {
            trace: format!("alpha={alpha}, beta={beta} at log beta={x}"),
        });
    }
    Ok(ExponentialFit {
        alpha,
        beta,
        half_life_min: std::f64::consts::LN_2 / beta / 60.0,
        p_inf: 1.0 - (-alpha / beta).exp(),
        loglik: exponential_loglik(&data, alpha, beta),
        n_units: units.len(),
        n_events,
        clamped_zero_durations: clamped,
    })
}

/// Weibull survival fit `S(s) = exp(-(s/lambda)^gamma)`.
#[derive(Debug, Clone, Serialize)]
pub struct WeibullFit {
    pub lambda: f64,
    pub gamma: f64,
    pub loglik: f64,
    pub iterations: usize,
    /// Set when the shape hit the configured upper bound (degenerate
    /// near-point-mass durations push gamma upward without limit).
    pub gamma_capped: bool,
}

pub const WEIBULL_GAMMA_CAP: f64 = 50.0;

fn weibull_loglik(data: &[(f64, bool)], log_lambda: f64, log_gamma: f64) -> f64 {
    let lambda = log_lambda.exp();
    let gamma = log_gamma.exp();
    let mut ll = 0.0;
    for &(s, event) in data {
        let z = s / lambda;
        let zg = z.powf(gamma);
        if event {
            ll += gamma.ln() - lambda.ln() + (gamma - 1.0) * (s.ln() - lambda.ln());
        }
        ll -= zg;
    }
    ll
}

/// Censored Weibull maximum likelihood via Newton iteration with
/// step-halving on `(log lambda, log gamma)`.
pub fn fit_weibull(units: &[SurvivalUnit]) -> Result<WeibullFit, FitError> {
    let (data, _) = clamped_data(units);
    let events: Vec<f64> = data.iter().filter(|d| d.1).map(|d| d.0).collect();
    if events.is_empty() {
        return Err(FitError::NoEvents);
    }

    let mean_event = crate::stats::mean(&events);
    let mut u = mean_event.max(ZERO_DURATION_CLAMP_S).ln(); // log lambda
    let mut v: f64 = 0.0; // log gamma
    let cap = WEIBULL_GAMMA_CAP.ln();
    let h = 1e-5;
    let mut ll = weibull_loglik(&data, u, v);
    let mut trace = String::new();
    let mut iterations = 0;
    for iter in 0..200 {
        iterations = iter + 1;
        let f = |du: f64, dv: f64| weibull_loglik(&data, u + du, v + dv);
        let gu = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
        let gv = (f(0.0, h) - f(0.0, -h)) / (2.0 * h);
        let huu = (f(h, 0.0) - 2.0 * ll + f(-h, 0.0)) / (h * h);
        let hvv = (f(0.0, h) - 2.0 * ll + f(0.0, -h)) / (h * h);
        let huv = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        let det = huu * hvv - huv * huv;
        // Newton step -H^{-1} g, falling back to gradient ascent when the
        // Hessian is not negative definite.
        let (mut su, mut sv) = if det > 0.0 && huu < 0.0 {
            (-(hvv * gu - huv * gv) / det, -(huu * gv - huv * gu) / det)
        } else {
            (gu * 0.1, gv * 0.1)
        };
        let norm = (su * su + sv * sv).sqrt();
        if norm > 2.0 {
            su *= 2.0 / norm;
            sv *= 2.0 / norm;
        }
        // The slack absorbs float noise in the likelihood sum; the gradient
        // criterion is per-datum so sample size does not tighten it.
        let slack = 1e-12 * (1.0 + ll.abs());
        let gtol = 1e-8 * data.len().max(1) as f64;
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let (nu, nv) = (u + step * su, (v + step * sv).min(cap));
            let nll = weibull_loglik(&data, nu, nv);
            if nll > ll - slack {
                u = nu;
                v = nv;
                ll = nll;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        let gnorm = (gu * gu + gv * gv).sqrt();
        if gnorm < gtol || (!improved && gnorm < 1e3 * gtol) || (v >= cap - 1e-12 && gv > 0.0) {
            return Ok(WeibullFit {
                lambda: u.exp(),
                gamma: v.exp(),
                loglik: ll,
                iterations,
                gamma_capped: v >= cap - 1e-9,
            });
        }
        if !improved {
            trace = format!("iter {iter}: no ascent step, |g|={gnorm:.3e}, ll={ll:.6}");
            break;
        }
    }
    if trace.is_empty() {
        trace = format!("gradient never settled after {iterations} iterations");
    }
    Err(FitError::NonConvergence { trace })
}

/// Two-part persistence summary for one stratum.
#[derive(Debug, Clone, Serialize)]
pub struct TwoPartSummary {
    pub n_parents: usize,
    pub n_events: usize,
    /// Horizon-standardized incidence rows (primary metric).
    pub horizons: Vec<HorizonIncidence>,
    /// In-window ever-reply share. Secondary, coverage-conditional.
    pub p_obs_secondary: Option<f64>,
    pub timing: Option<ConditionalTiming>,
    /// Unconditional P(delta = 1, T <= 30 s).
    pub joint_30s: Option<f64>,
    /// Unconditional P(delta = 1, T <= 5 min).
    pub joint_5m: Option<f64>,
    /// Secondary kernel diagnostic; absent when the stratum has no events.
    pub kernel: Option<ExponentialFit>,
    /// Weibull shape diagnostic fitted to conditional reply times.
    pub weibull: Option<WeibullFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonIncidence {
    pub label: String,
    pub horizon_s: f64,
    pub risk_set_n: usize,
    pub p: f64,
}

/// Compute the full two-part summary for one stratum of units.
pub fn two_part_summary(units: &[SurvivalUnit], horizons: &[(String, f64)]) -> TwoPartSummary {
    let n = units.len();
    let n_events = units.iter().filter(|u| u.event).count();
    let horizons = horizons
        .iter()
        .filter_map(|(label, h)| {
            horizon_incidence(units, *h).map(|(p, risk)| HorizonIncidence {
                label: label.clone(),
                horizon_s: *h,
                risk_set_n: risk,
                p,
            })
        })
        .collect();
    let joint = |cut: f64| {
        (n > 0).then(|| units.iter().filter(|u| u.event && u.s <= cut).count() as f64 / n as f64)
    };
    let event_units: Vec<SurvivalUnit> = units.iter().filter(|u| u.event).cloned().collect();
    TwoPartSummary {
        n_parents: n,
        n_events,
        horizons,
        p_obs_secondary: (n > 0).then(|| n_events as f64 / n as f64),
        timing: conditional_timing(units),
        joint_30s: joint(30.0),
        joint_5m: joint(300.0),
        kernel: fit_exponential_kernel(units).ok(),
        weibull: fit_weibull(&event_units).ok(),
    }
}

/// Keep exactly one unit per thread: the earliest-created candidate parent,
/// ties broken by comment id. Deterministic.
pub fn one_parent_per_thread(units: &[SurvivalUnit]) -> Vec<SurvivalUnit> {
    let mut best: BTreeMap<&str, &SurvivalUnit> = BTreeMap::new();
    for u in units {
        let key = u.thread_id.as_str();
        match best.get(key) {
            Some(cur)
                if (cur.parent_time_s, cur.parent_comment_id.as_str())
                    <= (u.parent_time_s, u.parent_comment_id.as_str()) => {}
            _ => {
                best.insert(key, u);
            }
        }
    }
    best.into_values().cloned().collect()
}

/// One recomputed scenario row of the coverage-gap robustness table.
#[derive(Debug, Clone, Serialize)]
pub struct GapScenario {
    pub scenario: String,
    pub summary: Option<TwoPartSummary>,
}

/// Re-censor a unit to a sub-window `[start, end]` of the observation
/// period. `None` when the parent falls outside the window or the
/// re-censored unit carries no information.
fn recensor(u: &SurvivalUnit, start: f64, end: f64) -> Option<SurvivalUnit> {
    if u.parent_time_s < start || u.parent_time_s > end {
        return None;
    }
    let censor = end - u.parent_time_s;
    let reply = u.reply_time().filter(|&t| t <= censor);
    if reply.is_none() && censor <= 0.0 {
        return None;
    }
    let mut out = u.clone();
    out.censor_s = censor;
    match reply {
        Some(t) => {
            out.s = t;
            out.event = true;
        }
        None => {
            out.s = censor;
            out.event = false;
        }
    }
    Some(out)
}

/// Recompute the two-part summary across coverage scenarios: the full
/// window, the contiguous windows before and after the primary gap, and
/// variants that drop parents created within `X` hours before the gap
/// start. The primary gap is the largest inter-segment gap; a stream with a
/// single segment reproduces the full-window row everywhere.
pub fn gap_scenarios(
    units: &[SurvivalUnit],
    segments: &SegmentSet,
    exclusion_hours: &[f64],
    horizons: &[(String, f64)],
) -> Vec<GapScenario> {
    let mut rows = vec![GapScenario {
        scenario: "full_window".into(),
        summary: Some(two_part_summary(units, horizons)),
    }];

    let gap = primary_gap(segments);
    let window_row = |name: &str, seg: Option<&Segment>| -> GapScenario {
        let summary = seg.and_then(|seg| {
            let sub: Vec<SurvivalUnit> = units
                .iter()
                .filter_map(|u| recensor(u, seg.start.0 as f64, seg.end.0 as f64))
                .collect();
            // Windows with no informative units are reported absent.
            (!sub.is_empty()).then(|| two_part_summary(&sub, horizons))
        });
        GapScenario {
            scenario: name.into(),
            summary,
        }
    };

    match gap {
        Some((pre_idx, post_idx)) => {
            rows.push(window_row("pre_gap", Some(&segments.segments[pre_idx])));
            rows.push(window_row("post_gap", Some(&segments.segments[post_idx])));
            let gap_start = segments.segments[pre_idx].end.0 as f64;
            for &x in exclusion_hours {
                let cutoff = gap_start - x * 3600.0;
                let sub: Vec<SurvivalUnit> = units
                    .iter()
                    .filter(|u| u.parent_time_s <= cutoff || u.parent_time_s > gap_start)
                    .cloned()
                    .collect();
                rows.push(GapScenario {
                    scenario: format!("exclude_gap_overlap_{}h", x),
                    summary: (!sub.is_empty()).then(|| two_part_summary(&sub, horizons)),
                });
            }
        }
        None => {
            // No gap: every scenario equals the full window.
            let full = rows[0].summary.clone();
            rows.push(GapScenario {
                scenario: "pre_gap".into(),
                summary: full.clone(),
            });
            rows.push(GapScenario {
                scenario: "post_gap".into(),
                summary: full.clone(),
            });
            for &x in exclusion_hours {
                rows.push(GapScenario {
                    scenario: format!("exclude_gap_overlap_{}h", x),
                    summary: full.clone(),
                });
            }
        }
    }
    rows
}

/// Indices of the segments flanking the largest inter-segment gap.
fn primary_gap(segments: &SegmentSet) -> Option<(usize, usize)> {
    if segments.segments.len() < 2 {
        return None;
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..segments.segments.len() - 1 {
        let gap = segments.segments[i + 1]
            .start
            .seconds_since(segments.segments[i].end);
        if gap > best.1 {
            best = (i, gap);
        }
    }
    Some((best.0, best.0 + 1))
}

/// Budgeted control-panel readout at one horizon.
#[derive(Debug, Clone, Serialize)]
pub struct PriorityPanel {
    pub horizon_s: f64,
    pub risk_set_n: Option<usize>,
    /// Throughput: P(reply within horizon | risk set).
    pub q: f64,
    /// Participation margin pi = P(delta = 1 | risk set).
    pub pi: f64,
    /// Conditional speed margin phi = P(T <= h | delta = 1, risk set).
    pub phi: f64,
    pub cost_incidence: f64,
    pub cost_timing: f64,
    pub delta_pi: f64,
    pub delta_phi: f64,
    /// Priority index phi * delta_pi / c_pi.
    pub index_incidence: f64,
    /// Priority index pi * delta_phi / c_phi.
    pub index_timing: f64,
    /// Max throughput lift from incidence alone: phi (1 - pi).
    pub bounded_lift_incidence: f64,
    /// Max throughput lift from timing alone: pi (1 - phi).
    pub bounded_lift_timing: f64,
    /// Depth proxy P(D >= K) ~ q^{K-1} for the requested K.
    pub depth_k: u32,
    pub depth_proxy: f64,
    pub recommendation: Recommendation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    Incidence,
    Timing,
    Tie,
}

/// Panel arithmetic from already-measured margins `(q, phi)`.
#[allow(clippy::too_many_arguments)]
pub fn panel_from_margins(
    horizon_s: f64,
    q: f64,
    phi: f64,
    cost_incidence: f64,
    cost_timing: f64,
    delta_pi: f64,
    delta_phi: f64,
    depth_k: u32,
) -> PriorityPanel {
    let pi = if phi > 0.0 { q / phi } else { 0.0 };
    let index_incidence = phi * delta_pi / cost_incidence;
    let index_timing = pi * delta_phi / cost_timing;
    let recommendation = if (index_incidence - index_timing).abs() < 1e-15 {
        Recommendation::Tie
    } else if index_incidence > index_timing {
        Recommendation::Incidence
    } else {
        Recommendation::Timing
    };
    PriorityPanel {
        horizon_s,
        risk_set_n: None,
        q,
        pi,
        phi,
        cost_incidence,
        cost_timing,
        delta_pi,
        delta_phi,
        index_incidence,
        index_timing,
        bounded_lift_incidence: phi * (1.0 - pi),
        bounded_lift_timing: pi * (1.0 - phi),
        depth_k,
        depth_proxy: q.powi(depth_k.saturating_sub(1) as i32),
        recommendation,
    }
}

#[derive(Debug, Error)]
#[error("priority panel undefined: {0}")]
pub struct PanelUndefined(pub String);

/// Measure `(pi, phi, q)` on the horizon risk set and assemble the panel.
/// The factorization `q = pi * phi` is a counting identity on the shared
/// risk set and holds to machine precision.
#[allow(clippy::too_many_arguments)]
pub fn throughput_panel(
    units: &[SurvivalUnit],
    horizon_s: f64,
    cost_incidence: f64,
    cost_timing: f64,
    delta_pi: f64,
    delta_phi: f64,
    depth_k: u32,
) -> Result<PriorityPanel, PanelUndefined> {
    let mut risk = 0usize;
    let mut ever = 0usize;
    let mut within = 0usize;
    for u in units {
        let replied_within = u.event && u.s <= horizon_s;
        if u.censor_s >= horizon_s || replied_within {
            risk += 1;
            if u.event {
                ever += 1;
            }
            if replied_within {
                within += 1;
            }
        }
    }
    if risk == 0 {
        return Err(PanelUndefined("empty risk set".into()));
    }
    if ever == 0 {
        return Err(PanelUndefined("no events in risk set; phi undefined".into()));
    }
    let pi = ever as f64 / risk as f64;
    let phi = within as f64 / ever as f64;
    let q = within as f64 / risk as f64;
    let mut panel = panel_from_margins(
        horizon_s,
        q,
        phi,
        cost_incidence,
        cost_timing,
        delta_pi,
        delta_phi,
        depth_k,
    );
    panel.pi = pi;
    panel.risk_set_n = Some(risk);
    Ok(panel)
}

/// Observed-vs-fitted row of the timing diagnostics table.
#[derive(Debug, Clone, Serialize)]
pub struct TimingDiagnosticRow {
    pub metric: String,
    pub observed: f64,
    pub fitted: f64,
    pub residual: f64,
}

/// Observed vs model-implied event probability and conditional reply-time
/// quantiles under the fitted exponential kernel.
///
/// The model-implied event probability averages `1 - exp(-Lambda(C_m))`
/// over units; implied conditional quantiles invert the censoring-pooled
/// event-time distribution
/// `F(t) = sum_m [1 - exp(-Lambda(min(t, C_m)))] / sum_m [1 - exp(-Lambda(C_m))]`.
pub fn timing_fit_diagnostics(
    units: &[SurvivalUnit],
    fit: &ExponentialFit,
) -> Vec<TimingDiagnosticRow> {
    let n = units.len().max(1) as f64;
    let obs_event = units.iter().filter(|u| u.event).count() as f64 / n;
    let fitted_mass: f64 = units
        .iter()
        .map(|u| 1.0 - (-fit.cumulative_hazard(u.censor_s)).exp())
        .sum();
    let fitted_event = fitted_mass / n;

    let pooled_cdf = |t: f64| -> f64 {
        if fitted_mass <= 0.0 {
            return 0.0;
        }
        units
            .iter()
            .map(|u| 1.0 - (-fit.cumulative_hazard(t.min(u.censor_s))).exp())
            .sum::<f64>()
            / fitted_mass
    };
    let max_c = units.iter().map(|u| u.censor_s).fold(0.0, f64::max);
    let invert = |p: f64| -> f64 {
        let (mut lo, mut hi) = (0.0, max_c.max(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if pooled_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-9 * hi.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    };

    let mut events: Vec<f64> = units.iter().filter_map(SurvivalUnit::reply_time).collect();
    events.sort_unstable_by(f64::total_cmp);
    let mut rows = vec![TimingDiagnosticRow {
        metric: "event_probability".into(),
        observed: obs_event,
        fitted: fitted_event,
        residual: fitted_event - obs_event,
    }];
    if !events.is_empty() {
        for (name, p) in [("p10_s", 0.1), ("p50_s", 0.5), ("p90_s", 0.9)] {
            let observed = quantile_linear(&events, p);
            let fitted = invert(p);
            rows.push(TimingDiagnosticRow {
                metric: name.into(),
                observed,
                fitted,
                residual: fitted - observed,
            });
        }
    }
    rows
}

/// Predicted-vs-observed coherence row mapping the fitted kernel to
/// geometry observables through the homogeneous branching approximation:
/// predicted incidence `p_inf`, predicted non-root branching
/// `mu = alpha/beta`, and predicted depth tails `P(D >= K) ~ mu^{K-1}`.
#[derive(Debug, Clone, Serialize)]
pub struct ModelObservableRow {
    pub group: String,
    pub predicted_incidence: f64,
    pub observed_incidence: f64,
    pub predicted_branching: f64,
    pub observed_branching: f64,
    pub predicted_p_depth_ge3: f64,
    pub observed_p_depth_ge3: f64,
    pub predicted_p_depth_ge5: f64,
    pub observed_p_depth_ge5: f64,
}

pub fn model_observable_check(
    group: &str,
    fit: &ExponentialFit,
    units: &[SurvivalUnit],
    trees: &[&ThreadTree],
) -> ModelObservableRow {
    let mu = fit.alpha / fit.beta;
    let n_units = units.len().max(1) as f64;
    let observed_incidence = units.iter().filter(|u| u.event).count() as f64 / n_units;
    let total_comments: usize = trees.iter().map(|t| t.n_comments()).sum();
    let deeper: usize = trees
        .iter()
        .map(|t| t.nodes.iter().filter(|n| n.depth >= 2).count())
        .sum();
    let observed_branching = if total_comments > 0 {
        deeper as f64 / total_comments as f64
    } else {
        0.0
    };
    let n_threads = trees.len().max(1) as f64;
    let tail = |k: u32| trees.iter().filter(|t| t.max_depth() >= k).count() as f64 / n_threads;
    ModelObservableRow {
        group: group.to_string(),
        predicted_incidence: fit.p_inf,
        observed_incidence,
        predicted_branching: mu,
        observed_branching,
        predicted_p_depth_ge3: mu.powi(2),
        observed_p_depth_ge3: tail(3),
        predicted_p_depth_ge5: mu.powi(4),
        observed_p_depth_ge5: tail(5),
    }
}
