//! Reply-tree reconstruction and thread-geometry estimands.
//!
//! A thread is a root post plus its comments linked by parent ids. Node 0 is
//! the root; comments are ordered by `(created_at, comment_id)` subject to
//! parents preceding children, so node indices are deterministic and every
//! parent index is smaller than its child's. Depth follows the recursion
//! `d(root) = 0`, `d(n) = d(parent(n)) + 1`.
//!
//! On top of the trees this module computes the geometry estimands: maximum
//! depth and its tail `P(D >= k)`, a geometric depth-tail slope fitted by
//! zero-intercept least squares on `log P(D >= k)`, branching-by-depth
//! profiles, dyadic reciprocity with maximal alternating chain lengths,
//! re-entry rates, and per-thread descriptives.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::Serialize;

use crate::ingest::CanonicalTable;
use crate::time::Timestamp;

#[derive(Debug, Clone, Serialize)]
pub struct TreeNode {
    /// Comment id; the root node carries the post id.
    pub id: String,
    /// Seconds since the root post (clamped at zero for anomalous rows).
    pub offset_s: f64,
    pub author: Option<String>,
    /// Parent node index; `None` for the root.
    pub parent: Option<usize>,
    pub depth: u32,
    pub child_count: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThreadTree {
    /// Root post id.
    pub thread_id: String,
    pub root_time: Timestamp,
    pub nodes: Vec<TreeNode>,
}

impl ThreadTree {
    pub fn n_comments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Hours from the root to the last comment. A single comment at the root
    /// plus sixty seconds yields 1/60 h, not zero.
    pub fn duration_hours(&self) -> f64 {
        self.nodes.iter().map(|n| n.offset_s).fold(0.0, f64::max) / 3600.0
    }

    /// Distinct resolved comment authors. The post author is not counted
    /// separately; threads where every comment author is missing record zero.
    pub fn unique_participants(&self) -> usize {
        self.nodes[1..]
            .iter()
            .filter_map(|n| n.author.as_deref())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn root_author(&self) -> Option<&str> {
        self.nodes[0].author.as_deref()
    }
}

/// A thread that could not be reconstructed, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct ExcludedThread {
    pub thread_id: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct Forest {
    /// One tree per post, including posts without comments.
    pub trees: Vec<ThreadTree>,
    pub excluded: Vec<ExcludedThread>,
}

impl Forest {
    /// Trees with at least one comment, the unit of all geometry summaries.
    pub fn with_comments(&self) -> Vec<&ThreadTree> {
        self.trees.iter().filter(|t| t.n_comments() > 0).collect()
    }
}

/// Reconstruct one reply tree per post from the canonical table.
///
/// Parent links in canonical data always point backward in time, so ordering
/// by `(created_at, comment_id)` with a parent-first constraint is always
/// feasible; a residual cycle (possible only through equal-timestamp mutual
/// links) flags the thread and excludes it.
pub fn build_trees(table: &CanonicalTable) -> Forest {
    let mut by_post: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in table.comments.iter().enumerate() {
        by_post.entry(c.post_id.as_str()).or_default().push(i);
    }

    let mut trees = Vec::with_capacity(table.posts.len());
    let mut excluded = Vec::new();
    for post in &table.posts {
        let comment_idx = by_post.get(post.post_id.as_str()).cloned().unwrap_or_default();
        match build_one(
            table,
            post.post_id.as_str(),
            post.created_at,
            post.author_id.clone(),
            &comment_idx,
        ) {
            Ok(tree) => trees.push(tree),
            Err(reason) => excluded.push(ExcludedThread {
                thread_id: post.post_id.clone(),
                reason,
            }),
        }
    }
    Forest { trees, excluded }
}

fn build_one(
    table: &CanonicalTable,
    post_id: &str,
    root_time: Timestamp,
    root_author: Option<String>,
    comment_idx: &[usize],
) -> Result<ThreadTree, String> {
    // Rank comments by (created_at, comment_id); the heap below releases them
    // in rank order once their parent is placed.
    let mut order: Vec<usize> = comment_idx.to_vec();
    order.sort_by(|&a, &b| {
        let ca = &table.comments[a];
        let cb = &table.comments[b];
        (ca.created_at, ca.comment_id.as_str()).cmp(&(cb.created_at, cb.comment_id.as_str()))
    });
    let rank_of: BTreeMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| (table.comments[i].comment_id.as_str(), rank))
        .collect();

    // children[r] = ranks whose parent is rank r; root children tracked apart.
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
    let mut root_children = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        match table.comments[i].parent_id.as_deref() {
            Some(pid) => match rank_of.get(pid) {
                Some(&pr) => children[pr].push(rank),
                None => root_children.push(rank), // parent in another thread; keep as root reply
            },
            None => root_children.push(rank),
        }
    }

    let mut nodes = Vec::with_capacity(order.len() + 1);
    nodes.push(TreeNode {
        id: post_id.to_string(),
        offset_s: 0.0,
        author: root_author,
        parent: None,
        depth: 0,
        child_count: 0,
    });

    let mut heap: BinaryHeap<Reverse<usize>> = root_children.iter().map(|&r| Reverse(r)).collect();
    let mut parent_node: Vec<usize> = vec![0; order.len()];
    while let Some(Reverse(rank)) = heap.pop() {
        let c = &table.comments[order[rank]];
        let p = parent_node[rank];
        let node_index = nodes.len();
        let depth = nodes[p].depth + 1;
        nodes[p].child_count += 1;
        nodes.push(TreeNode {
            id: c.comment_id.clone(),
            offset_s: c.created_at.seconds_since(root_time).max(0.0),
            author: c.author_id.clone(),
            parent: Some(p),
            depth,
            child_count: 0,
        });
        for &child in &children[rank] {
            parent_node[child] = node_index;
            heap.push(Reverse(child));
        }
    }

    if nodes.len() != order.len() + 1 {
        return Err(format!(
            "cycle detected: {} of {} comments unreachable",
            order.len() + 1 - nodes.len(),
            order.len()
        ));
    }
    Ok(ThreadTree {
        thread_id: post_id.to_string(),
        root_time,
        nodes,
    })
}

/// Tail probabilities P(D >= k), k = 1..=10, over the given trees.
pub fn depth_tail(trees: &[&ThreadTree]) -> BTreeMap<u32, f64> {
    let n = trees.len().max(1) as f64;
    (1..=10)
        .map(|k| {
            let c = trees.iter().filter(|t| t.max_depth() >= k).count();
            (k, c as f64 / n)
        })
        .collect()
}

/// Geometric depth-tail slope: fits `log P(D >= k) = k log(s)` by
/// zero-intercept least squares over the `k >= 2` entries with positive
/// mass. `None` when every such entry is zero.
pub fn depth_tail_slope(tail: &BTreeMap<u32, f64>) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&k, &p) in tail.iter().filter(|&(&k, &p)| k >= 2 && p > 0.0) {
        let k = k as f64;
        num += k * p.ln();
        den += k * k;
    }
    if den == 0.0 {
        None
    } else {
        Some((num / den).exp())
    }
}

/// Mean direct-children count by node depth; roots are the depth-0 entry.
pub fn branching_by_depth(trees: &[&ThreadTree]) -> BTreeMap<u32, f64> {
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for tree in trees {
        for node in &tree.nodes {
            let e = sums.entry(node.depth).or_insert((0.0, 0));
            e.0 += node.child_count as f64;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Reciprocity readout for one thread.
#[derive(Debug, Clone, Serialize)]
pub struct ThreadReciprocity {
    /// Fraction of dyads with both reply directions; `None` when the thread
    /// has no cross-author reply dyads.
    pub rate: Option<f64>,
    pub dyads: usize,
    pub bidirectional: usize,
    /// Maximal alternating chain length (consecutive parent-link reply edges
    /// strictly alternating between the two authors) for each dyad that
    /// exchanged at least twice.
    pub chain_lengths: Vec<u32>,
}

/// Dyadic reciprocity within one thread.
///
/// Directed edges are author pairs `(replier, parent author)` with both ids
/// resolved and distinct; replies to the root count against the root author.
/// Maximal alternating chains follow ancestor paths only: a chain breaks as
/// soon as a third author interposes.
pub fn reciprocity(tree: &ThreadTree) -> ThreadReciprocity {
    let mut edges: BTreeSet<(&str, &str)> = BTreeSet::new();
    // alt_len[n] = alternating run length in edges ending at node n.
    let mut alt_len: Vec<u32> = vec![0; tree.nodes.len()];
    let mut chain_max: BTreeMap<(&str, &str), u32> = BTreeMap::new();

    for (n, node) in tree.nodes.iter().enumerate().skip(1) {
        let p = node.parent.unwrap();
        let (Some(u), Some(v)) = (node.author.as_deref(), tree.nodes[p].author.as_deref()) else {
            continue;
        };
        if u == v {
            continue;
        }
        edges.insert((u, v));
        let mut run = 1;
        if alt_len[p] > 0 {
            let g = tree.nodes[p].parent.unwrap();
            if tree.nodes[g].author.as_deref() == Some(u) {
                run = alt_len[p] + 1;
            }
        }
        alt_len[n] = run;
        let key = if u < v { (u, v) } else { (v, u) };
        let e = chain_max.entry(key).or_insert(0);
        *e = (*e).max(run);
    }

    let dyad_set: BTreeSet<(&str, &str)> = edges
        .iter()
        .map(|&(u, v)| if u < v { (u, v) } else { (v, u) })
        .collect();
    let bidirectional = dyad_set
        .iter()
        .filter(|&&(u, v)| edges.contains(&(u, v)) && edges.contains(&(v, u)))
        .count();
    let dyads = dyad_set.len();
    ThreadReciprocity {
        rate: (dyads > 0).then(|| bidirectional as f64 / dyads as f64),
        dyads,
        bidirectional,
        chain_lengths: chain_max.into_values().filter(|&l| l >= 2).collect(),
    }
}

/// Fraction of comments whose author already appeared among earlier comment
/// authors in the same thread. The root author counts only by commenting
/// again; missing authors never match. `None` when the thread has no
/// resolved comment authors at all.
pub fn reentry(tree: &ThreadTree) -> Option<f64> {
    let n = tree.n_comments();
    if n == 0 {
        return None;
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut repeats = 0usize;
    let mut resolved = 0usize;
    for node in &tree.nodes[1..] {
        if let Some(a) = node.author.as_deref() {
            resolved += 1;
            if !seen.insert(a) {
                repeats += 1;
            }
        }
    }
    (resolved > 0).then(|| repeats as f64 / n as f64)
}

/// Per-thread metrics row (one line of the geometry CSV output).
#[derive(Debug, Clone, Serialize)]
pub struct ThreadMetrics {
    pub thread_id: String,
    pub n_comments: usize,
    pub max_depth: u32,
    pub duration_h: f64,
    pub participants: usize,
    pub reentry: Option<f64>,
    pub reciprocity: Option<f64>,
}

pub fn thread_metrics(tree: &ThreadTree) -> ThreadMetrics {
    ThreadMetrics {
        thread_id: tree.thread_id.clone(),
        n_comments: tree.n_comments(),
        max_depth: tree.max_depth(),
        duration_h: tree.duration_hours(),
        participants: tree.unique_participants(),
        reentry: reentry(tree),
        reciprocity: reciprocity(tree).rate,
    }
}

/// Forest-level geometry summary over threads with at least one comment.
#[derive(Debug, Clone, Serialize)]
pub struct GeometrySummary {
    pub thread_count: usize,
    pub mean_max_depth: f64,
    pub median_max_depth: f64,
    /// P(D >= k) for k = 1..=10.
    pub depth_tail: BTreeMap<u32, f64>,
    pub depth_tail_slope: Option<f64>,
    pub branching_by_depth: BTreeMap<u32, f64>,
    pub mean_comments_per_thread: f64,
    pub mean_duration_hours: f64,
    pub mean_unique_participants: f64,
}

/// Pooled reciprocity/re-entry summary over threads with at least one comment.
#[derive(Debug, Clone, Serialize)]
pub struct ReciprocitySummary {
    pub pooled_bidirectional: usize,
    pub pooled_dyads: usize,
    pub pooled_rate: Option<f64>,
    pub chain_length_median: Option<f64>,
    pub chain_length_mean: Option<f64>,
    pub mean_reentry: Option<f64>,
    pub median_reentry: Option<f64>,
}

/// Compute the geometry summary for a set of threads (callers pass
/// [`Forest::with_comments`] for the standard conditioning).
pub fn descriptives(trees: &[&ThreadTree]) -> GeometrySummary {
    let n = trees.len().max(1) as f64;
    let mut depths: Vec<f64> = trees.iter().map(|t| t.max_depth() as f64).collect();
    depths.sort_unstable_by(f64::total_cmp);
    let tail = depth_tail(trees);
    GeometrySummary {
        thread_count: trees.len(),
        mean_max_depth: depths.iter().sum::<f64>() / n,
        median_max_depth: if depths.is_empty() {
            0.0
        } else {
            crate::stats::quantile_linear(&depths, 0.5)
        },
        depth_tail_slope: depth_tail_slope(&tail),
        depth_tail: tail,
        branching_by_depth: branching_by_depth(trees),
        mean_comments_per_thread: trees.iter().map(|t| t.n_comments() as f64).sum::<f64>() / n,
        mean_duration_hours: trees.iter().map(|t| t.duration_hours()).sum::<f64>() / n,
        mean_unique_participants: trees
            .iter()
            .map(|t| t.unique_participants() as f64)
            .sum::<f64>()
            / n,
    }
}

pub fn reciprocity_summary(trees: &[&ThreadTree]) -> ReciprocitySummary {
    let per_thread: Vec<ThreadReciprocity> =
        crate::exec::indexed_map(trees.len(), |i| reciprocity(trees[i]));
    let pooled_dyads: usize = per_thread.iter().map(|r| r.dyads).sum();
    let pooled_bidirectional: usize = per_thread.iter().map(|r| r.bidirectional).sum();
    let mut chains: Vec<f64> = per_thread
        .iter()
        .flat_map(|r| r.chain_lengths.iter().map(|&l| l as f64))
        .collect();
    chains.sort_unstable_by(f64::total_cmp);
    let mut reentries: Vec<f64> = trees.iter().filter_map(|t| reentry(t)).collect();
    reentries.sort_unstable_by(f64::total_cmp);
    ReciprocitySummary {
        pooled_bidirectional,
        pooled_dyads,
        pooled_rate: (pooled_dyads > 0).then(|| pooled_bidirectional as f64 / pooled_dyads as f64),
        chain_length_median: (!chains.is_empty())
            .then(|| crate::stats::quantile_linear(&chains, 0.5)),
        chain_length_mean: (!chains.is_empty()).then(|| crate::stats::mean(&chains)),
        mean_reentry: (!reentries.is_empty()).then(|| crate::stats::mean(&reentries)),
        median_reentry: (!reentries.is_empty())
            .then(|| crate::stats::quantile_linear(&reentries, 0.5)),
    }
}
