//! Generative cascade simulator: the ground-truth oracle for the estimators.
//!
//! Each comment `m` born at `t_m` spawns direct replies from an
//! inhomogeneous point process with intensity
//!
//! ```text
//! lambda_m(t) = b(t) * alpha * exp(-beta (t - t_m)),   t > t_m,
//! ```
//!
//! truncated at the simulation horizon, where `b(t)` is a periodic
//! availability profile with mean one on full cycles. Parent identity is
//! implicit: each comment's own process generates its children, which is
//! equivalent to competing-risks parent selection under superposition of
//! the per-comment intensities. Depth-1 replies to the root come from a
//! separate stream with total mean `mu0` over the window, making the
//! root-special structure of the size law `E[N] = mu0 / (1 - mu)` explicit.
//!
//! Sampling uses adaptive thinning: candidates are drawn from an
//! exponential majorant `b_max * alpha * exp(-beta (s_prev - t_m))` that is
//! refreshed at each candidate, and accepted with probability
//! `lambda(candidate) / majorant`. Acceptance counters are kept so
//! rejection rates stay visible.
//!
//! The amplitude can be decomposed as a baseline propensity times an
//! exposure multiplier; only their product is ever identified from data,
//! so the multiplier exists here (and only here) as a generative knob.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::persistence::{self, SurvivalUnit};
use crate::threadgraph::{ThreadTree, TreeNode};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("supercritical offspring mean {mu} >= 1")]
    Supercritical { mu: f64 },
}

/// Periodic availability profile `b(t)`, mean one over full cycles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Availability {
    Constant,
    /// `1 + depth * cos(2 pi t / period - phase)`; `depth` in `[0, 1)`.
    Cosine { period_s: f64, depth: f64, phase: f64 },
    /// On/off profile: `1` while `(t mod period)/period < duty`, else `0`.
    Square { period_s: f64, duty: f64 },
}

impl Availability {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Availability::Constant => 1.0,
            Availability::Cosine { period_s, depth, phase } => {
                1.0 + depth * (2.0 * std::f64::consts::PI * t / period_s - phase).cos()
            }
            Availability::Square { period_s, duty } => {
                let frac = (t / period_s).rem_euclid(1.0);
                if frac < duty {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            Availability::Constant => 1.0,
            Availability::Cosine { depth, .. } => 1.0 + depth,
            Availability::Square { .. } => 1.0,
        }
    }

    /// Integral of `b` over `[0, horizon]`.
    pub fn integral(&self, horizon: f64) -> f64 {
        match *self {
            Availability::Constant => horizon,
            Availability::Cosine { period_s, depth, phase } => {
                let w = 2.0 * std::f64::consts::PI / period_s;
                horizon + depth / w * ((w * horizon - phase).sin() + phase.sin())
            }
            Availability::Square { period_s, duty } => {
                let cycles = (horizon / period_s).floor();
                let rem = horizon - cycles * period_s;
                cycles * duty * period_s + rem.min(duty * period_s)
            }
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        match *self {
            Availability::Constant => Ok(()),
            Availability::Cosine { period_s, depth, .. } => {
                if period_s <= 0.0 || !(0.0..1.0).contains(&depth) {
                    Err(SimError::InvalidConfig(
                        "cosine availability needs period > 0 and depth in [0, 1)".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            Availability::Square { period_s, duty } => {
                if period_s <= 0.0 || !(0.0..=1.0).contains(&duty) || duty == 0.0 {
                    Err(SimError::InvalidConfig(
                        "square availability needs period > 0 and duty in (0, 1]".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Cascade generation parameters.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// Baseline reply amplitude per second.
    pub alpha: f64,
    /// Exposure multiplier; the effective amplitude is `alpha * exposure`.
    pub exposure: f64,
    /// Kernel decay rate per second.
    pub beta: f64,
    /// Expected direct replies to the root over the window (mu0).
    pub root_mean: f64,
    pub availability: Availability,
    /// Simulation window in seconds.
    pub horizon_s: f64,
    pub n_threads: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            alpha: 0.001,
            exposure: 1.0,
            beta: 0.01,
            root_mean: 5.57,
            availability: Availability::Constant,
            horizon_s: 20_000.0,
            n_threads: 1000,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl SimConfig {
    pub fn effective_alpha(&self) -> f64 {
        self.alpha * self.exposure
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.alpha < 0.0 || self.exposure < 0.0 {
            return Err(SimError::InvalidConfig("alpha and exposure must be >= 0".into()));
        }
        if self.beta <= 0.0 {
            return Err(SimError::InvalidConfig("beta must be > 0".into()));
        }
        if self.horizon_s <= 0.0 {
            return Err(SimError::InvalidConfig("horizon must be > 0".into()));
        }
        if self.root_mean < 0.0 {
            return Err(SimError::InvalidConfig("root_mean must be >= 0".into()));
        }
        self.availability.validate()
    }
}

/// Thinning acceptance counters.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ThinningStats {
    pub proposals: u64,
    pub accepts: u64,
}

impl ThinningStats {
    pub fn rejection_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            1.0 - self.accepts as f64 / self.proposals as f64
        }
    }
}

/// Root time shared by all simulated threads.
pub fn sim_epoch() -> Timestamp {
    Timestamp::parse("2026-01-28T00:00:00Z").unwrap()
}

/// Simulate one thread on its own RNG stream; `stream` is typically the
/// thread index.
pub fn simulate_thread(config: &SimConfig, stream: u64) -> ThreadTree {
    simulate_thread_counted(config, stream, &mut ThinningStats::default())
}

fn simulate_thread_counted(
    config: &SimConfig,
    stream: u64,
    stats: &mut ThinningStats,
) -> ThreadTree {
    let mut rng = crate::exec::stream_rng(config.seed, stream);
    let a_eff = config.effective_alpha();
    let horizon = config.horizon_s;
    let b = &config.availability;
    let b_max = b.max();

    // (birth time, parent event id); event id 0 is the root.
    let mut events: Vec<(f64, usize)> = Vec::new();

    // Depth-1 replies: rate mu0 * b(t) / integral(b), thinned against the
    // homogeneous bound mu0 * b_max / integral(b).
    let b_total = b.integral(horizon);
    if config.root_mean > 0.0 && b_total > 0.0 {
        let bound = config.root_mean * b_max / b_total;
        let mut t = 0.0f64;
        loop {
            t += exp_draw(&mut rng, bound);
            if t > horizon {
                break;
            }
            stats.proposals += 1;
            if rng.gen::<f64>() * b_max <= b.value(t) {
                stats.accepts += 1;
                events.push((t, 0));
            }
        }
    }

    // Each comment spawns children from the decaying kernel, truncated at
    // the horizon. The worklist grows as events are appended.
    let mut cursor = 0usize;
    while cursor < events.len() {
        let (birth, _) = events[cursor];
        let my_id = cursor + 1;
        if a_eff > 0.0 {
            let mut s = birth;
            loop {
                let bound = b_max * a_eff * (-config.beta * (s - birth)).exp();
                if bound < 1e-300 {
                    break;
                }
                s += exp_draw(&mut rng, bound);
                if s > horizon {
                    break;
                }
                stats.proposals += 1;
                let intensity = b.value(s) * a_eff * (-config.beta * (s - birth)).exp();
                if rng.gen::<f64>() * bound <= intensity {
                    stats.accepts += 1;
                    events.push((s, my_id));
                }
            }
        }
        cursor += 1;
    }

    // Re-index in time order; generation order breaks exact ties.
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&i, &j| events[i].0.total_cmp(&events[j].0).then(i.cmp(&j)));
    let mut node_of_event: Vec<usize> = vec![0; events.len() + 1];
    let thread_id = format!("sim{stream:06}");
    let mut nodes = vec![TreeNode {
        id: thread_id.clone(),
        offset_s: 0.0,
        author: Some(format!("{thread_id}-a00000")),
        parent: None,
        depth: 0,
        child_count: 0,
    }];
    for (pos, &ev) in order.iter().enumerate() {
        let (t, parent_event) = events[ev];
        let parent_node = node_of_event[parent_event];
        let depth = nodes[parent_node].depth + 1;
        nodes[parent_node].child_count += 1;
        node_of_event[ev + 1] = pos + 1;
        nodes.push(TreeNode {
            id: format!("{thread_id}-c{:05}", ev + 1),
            offset_s: t,
            author: Some(format!("{thread_id}-a{:05}", ev + 1)),
            parent: Some(parent_node),
            depth,
            child_count: 0,
        });
    }
    ThreadTree {
        thread_id,
        root_time: sim_epoch(),
        nodes,
    }
}

fn exp_draw(rng: &mut ChaCha12Rng, rate: f64) -> f64 {
    let u: f64 = rng.gen::<f64>();
    -(1.0 - u).ln() / rate
}

/// Simulated corpus with pooled thinning counters. All threads share the
/// same root time, so a single observation end (`sim_epoch + horizon`)
/// censors every thread at its own full window.
pub struct SimCorpus {
    pub trees: Vec<ThreadTree>,
    pub thinning: ThinningStats,
}

impl SimCorpus {
    pub fn observation_end(&self, config: &SimConfig) -> Timestamp {
        Timestamp(sim_epoch().0 + config.horizon_s.ceil() as i64)
    }
}

pub fn simulate_corpus(config: &SimConfig) -> Result<SimCorpus, SimError> {
    config.validate()?;
    let results: Vec<(ThreadTree, ThinningStats)> =
        crate::exec::indexed_map(config.n_threads, |i| {
            let mut stats = ThinningStats::default();
            let tree = simulate_thread_counted(config, i as u64, &mut stats);
            (tree, stats)
        });
    let mut thinning = ThinningStats::default();
    let trees = results
        .into_iter()
        .map(|(tree, s)| {
            thinning.proposals += s.proposals;
            thinning.accepts += s.accepts;
            tree
        })
        .collect();
    Ok(SimCorpus { trees, thinning })
}

/// Expected thread size under the root-special subcritical size law
/// `E[N] = mu0 / (1 - mu)` (comments, root excluded).
pub fn expected_size(mu0: f64, mu: f64) -> Result<f64, SimError> {
    if !(0.0..1.0).contains(&mu) {
        return Err(SimError::Supercritical { mu });
    }
    Ok(mu0 / (1.0 - mu))
}

/// Independent candidate-parent units drawn from the exponential-kernel
/// first-reply law with fixed censoring: survival `P(T > t) = exp(-Lambda(t))`
/// with `Lambda(t) = (alpha/beta)(1 - exp(-beta t))`, sampled by inversion.
///
/// This is the estimand-level ground truth for the kernel MLE: it stays
/// well-defined for any `alpha/beta`, including ratios at which a full
/// cascade would be supercritical.
pub fn simulate_survival_units(
    alpha: f64,
    beta: f64,
    censor_s: f64,
    n: usize,
    seed: u64,
) -> Vec<SurvivalUnit> {
    crate::exec::indexed_map(n, |i| {
        let mut rng = crate::exec::stream_rng(seed, i as u64);
        let e = exp_draw(&mut rng, 1.0);
        let lambda_max = alpha / beta * (1.0 - (-beta * censor_s).exp());
        let (s, event) = if e < lambda_max {
            (-(1.0 - beta * e / alpha).ln() / beta, true)
        } else {
            (censor_s, false)
        };
        SurvivalUnit {
            parent_comment_id: format!("u{i:07}"),
            thread_id: format!("u{i:07}"),
            author_id: None,
            claimed: None,
            category: crate::ingest::Category::Other,
            parent_time_s: 0.0,
            s,
            event,
            censor_s,
        }
    })
}

/// Realized corpus statistics for validating the generative model.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusStats {
    pub n_threads: usize,
    pub mean_comments: f64,
    pub mean_root_offspring: f64,
    /// Mean direct-children count over non-root nodes.
    pub mean_nonroot_offspring: f64,
    pub depth_tail: BTreeMap<u32, f64>,
    pub thinning: ThinningStats,
}

pub fn corpus_stats(corpus: &SimCorpus) -> CorpusStats {
    let trees = &corpus.trees;
    let n = trees.len().max(1) as f64;
    let total_comments: usize = trees.iter().map(|t| t.n_comments()).sum();
    let root_children: u32 = trees.iter().map(|t| t.nodes[0].child_count).sum();
    let nonroot_children: usize = trees
        .iter()
        .map(|t| t.nodes.iter().filter(|m| m.depth >= 2).count())
        .sum();
    let refs: Vec<&ThreadTree> = trees.iter().collect();
    CorpusStats {
        n_threads: trees.len(),
        mean_comments: total_comments as f64 / n,
        mean_root_offspring: root_children as f64 / n,
        mean_nonroot_offspring: if total_comments > 0 {
            nonroot_children as f64 / total_comments as f64
        } else {
            0.0
        },
        depth_tail: crate::threadgraph::depth_tail(&refs),
        thinning: corpus.thinning,
    }
}

/// Parameter-recovery report binding the simulator to the kernel MLE.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub alpha_true: f64,
    pub beta_true: f64,
    pub n_units: usize,
    pub n_events: usize,
    pub alpha_hat: Option<f64>,
    pub beta_hat: Option<f64>,
    pub alpha_rel_err: Option<f64>,
    pub beta_rel_err: Option<f64>,
    /// Set when no unit drew a reply: the fit sits at the alpha = 0 boundary.
    pub no_event_boundary: bool,
    /// Realized cascade statistics; present only for subcritical configs
    /// where a full corpus is feasible.
    pub realized: Option<CorpusStats>,
    pub seed: u64,
}

/// Simulate `n_units` candidate parents under `config` (constant
/// availability), refit the kernel, and report relative errors. Subcritical
/// configs additionally realize a full cascade corpus for size/depth checks.
pub fn oracle_recover(config: &SimConfig, n_units: usize) -> Result<SimReport, SimError> {
    config.validate()?;
    if config.availability != Availability::Constant {
        return Err(SimError::InvalidConfig(
            "parameter recovery assumes constant availability".into(),
        ));
    }
    let a_eff = config.effective_alpha();
    let units =
        simulate_survival_units(a_eff, config.beta, config.horizon_s, n_units, config.seed);
    let n_events = units.iter().filter(|u| u.event).count();
    let fit = persistence::fit_exponential_kernel(&units).ok();
    let realized = if a_eff < config.beta && config.n_threads > 0 {
        Some(corpus_stats(&simulate_corpus(config)?))
    } else {
        None
    };
    Ok(SimReport {
        alpha_true: a_eff,
        beta_true: config.beta,
        n_units,
        n_events,
        alpha_hat: fit.as_ref().map(|f| f.alpha),
        beta_hat: fit.as_ref().map(|f| f.beta),
        alpha_rel_err: fit.as_ref().map(|f| (f.alpha - a_eff).abs() / a_eff),
        beta_rel_err: fit.as_ref().map(|f| (f.beta - config.beta).abs() / config.beta),
        no_event_boundary: n_events == 0,
        realized,
        seed: config.seed,
    })
}

/// Inhomogeneous Poisson event stream with rate proportional to `b(t)`,
/// total mean `config.root_mean` over the horizon, sampled by thinning.
/// Returns event times in seconds from the window start.
pub fn simulate_periodic_stream(config: &SimConfig, seed: u64) -> Result<Vec<f64>, SimError> {
    config.validate()?;
    let b = &config.availability;
    let horizon = config.horizon_s;
    let b_total = b.integral(horizon);
    if b_total <= 0.0 || config.root_mean <= 0.0 {
        return Ok(Vec::new());
    }
    let b_max = b.max();
    let bound = config.root_mean * b_max / b_total;
    let mut rng = crate::exec::stream_rng(seed, 0);
    let mut out = Vec::new();
    let mut t = 0.0f64;
    loop {
        t += exp_draw(&mut rng, bound);
        if t > horizon {
            break;
        }
        if rng.gen::<f64>() * b_max <= b.value(t) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Write a simulated corpus in the ingest CSV schema (comments + posts),
/// rounding times down to whole seconds.
pub fn corpus_to_csv(
    trees: &[ThreadTree],
    comments_path: &std::path::Path,
    posts_path: &std::path::Path,
    submolt: &str,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut posts = std::io::BufWriter::new(std::fs::File::create(posts_path)?);
    writeln!(posts, "id,agent_id,submolt,created_at_utc")?;
    let mut comments = std::io::BufWriter::new(std::fs::File::create(comments_path)?);
    writeln!(comments, "id,post_id,parent_id,agent_id,created_at_utc,score,dump_date")?;
    for tree in trees {
        let root = &tree.nodes[0];
        writeln!(
            posts,
            "{},{},{},{}",
            tree.thread_id,
            root.author.as_deref().unwrap_or(""),
            submolt,
            tree.root_time
        )?;
        for node in &tree.nodes[1..] {
            let t = Timestamp(tree.root_time.0 + node.offset_s.floor() as i64);
            let parent = node.parent.unwrap();
            let parent_id = if parent == 0 { "" } else { tree.nodes[parent].id.as_str() };
            writeln!(
                comments,
                "{},{},{},{},{},0,",
                node.id,
                tree.thread_id,
                parent_id,
                node.author.as_deref().unwrap_or(""),
                t
            )?;
        }
    }
    Ok(())
}
