//! Parse, canonicalize, and validate comment/post tables.
//!
//! Archives arrive as incremental exports with possible backfills, so the
//! same comment id can appear in several rows. [`canonicalize`] builds a
//! latest-state view (greatest `dump_date`, then greatest `created_at`, then
//! last file order), repairs referential anomalies instead of dropping rows
//! where possible, and reports every repair in an [`IntegrityReport`].
//!
//! Community names are mapped to six coarse categories by deterministic
//! keyword triggers embedded in `keywords.json`; three trigger-list variants
//! support sensitivity runs. [`detect_gaps`] splits an event stream into
//! contiguous segments at a configurable inter-event gap threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty event stream")]
    EmptyStream,
}

/// One raw comment row after parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: String,
    pub post_id: String,
    /// Absent means a direct reply to the root post.
    pub parent_id: Option<String>,
    pub author_id: Option<String>,
    pub created_at: Timestamp,
    pub score: i64,
    /// Snapshot identifier for incremental exports.
    pub dump_date: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub author_id: Option<String>,
    pub submolt: String,
    pub created_at: Timestamp,
}

/// A malformed input row, reported rather than silently dropped.
#[derive(Debug, Clone, Serialize)]
pub struct RowError {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Jsonl,
}

/// Counts of anomalies observed (and repaired) during canonicalization.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IntegrityReport {
    pub raw_rows: usize,
    pub canonical_rows: usize,
    pub missing_author_count: usize,
    /// Threads (with at least one comment) where every comment author is missing.
    pub missing_author_threads: usize,
    /// Comments whose parent id did not resolve; they were kept as root replies.
    pub orphan_parent_count: usize,
    /// Comments timestamped before their parent (parent link dropped) or
    /// before their post (offset clamps to the root).
    pub negative_lag_count: usize,
    /// Comments referencing a post absent from the posts table; dropped.
    pub unresolved_post_count: usize,
}

/// Deduplicated, referentially repaired view of the raw tables.
#[derive(Debug, Clone)]
pub struct CanonicalTable {
    /// Sorted by (created_at, comment_id); parent links all resolve.
    pub comments: Vec<CommentRecord>,
    /// Sorted by post_id, deduplicated.
    pub posts: Vec<PostRecord>,
    pub integrity: IntegrityReport,
}

impl CanonicalTable {
    /// Event timestamps of all canonical comments, ascending.
    pub fn comment_times(&self) -> Vec<Timestamp> {
        self.comments.iter().map(|c| c.created_at).collect()
    }

    pub fn max_event_time(&self) -> Option<Timestamp> {
        self.comments
            .iter()
            .map(|c| c.created_at)
            .chain(self.posts.iter().map(|p| p.created_at))
            .max()
    }
}

/// Result of loading one pair of input files.
#[derive(Debug)]
pub struct LoadedTables {
    pub comments: Vec<CommentRecord>,
    pub posts: Vec<PostRecord>,
    pub row_errors: Vec<RowError>,
}

/// Parse the comments and posts tables. Malformed rows become [`RowError`]s
/// with their originating line; well-formed rows always load.
pub fn load_tables(
    comments_path: &Path,
    posts_path: &Path,
    format: TableFormat,
) -> Result<LoadedTables, IngestError> {
    let mut row_errors = Vec::new();
    let comments = match format {
        TableFormat::Csv => read_csv(comments_path, &mut row_errors, parse_comment_fields)?,
        TableFormat::Jsonl => read_jsonl(comments_path, &mut row_errors, parse_comment_fields)?,
    };
    let posts = match format {
        TableFormat::Csv => read_csv(posts_path, &mut row_errors, parse_post_fields)?,
        TableFormat::Jsonl => read_jsonl(posts_path, &mut row_errors, parse_post_fields)?,
    };
    Ok(LoadedTables { comments, posts, row_errors })
}

/// Field accessor shared by the CSV and JSONL readers: `get(name)` returns
/// the raw field if present and non-null.
struct RawRow<'a> {
    get: &'a dyn Fn(&str) -> Option<String>,
}

fn parse_comment_fields(row: &RawRow) -> Result<CommentRecord, String> {
    let comment_id = require_nonempty(row, "id")?;
    let post_id = require_nonempty(row, "post_id")?;
    let parent_id = optional(row, "parent_id");
    if parent_id.as_deref() == Some(comment_id.as_str()) {
        return Err("parent_id equals comment id".into());
    }
    let created_at = Timestamp::parse(&require_nonempty(row, "created_at_utc")?)
        .map_err(|e| e.to_string())?;
    let score = match optional(row, "score") {
        Some(s) => s.parse::<i64>().map_err(|_| format!("unparseable score {s:?}"))?,
        None => 0,
    };
    let dump_date = match optional(row, "dump_date") {
        Some(s) => Some(Timestamp::parse_date_or_time(&s).map_err(|e| e.to_string())?),
        None => None,
    };
    Ok(CommentRecord {
        comment_id,
        post_id,
        parent_id,
        author_id: optional(row, "agent_id"),
        created_at,
        score,
        dump_date,
    })
}

fn parse_post_fields(row: &RawRow) -> Result<PostRecord, String> {
    Ok(PostRecord {
        post_id: require_nonempty(row, "id")?,
        author_id: optional(row, "agent_id"),
        submolt: optional(row, "submolt").unwrap_or_default(),
        created_at: Timestamp::parse(&require_nonempty(row, "created_at_utc")?)
            .map_err(|e| e.to_string())?,
    })
}

fn require_nonempty(row: &RawRow, name: &str) -> Result<String, String> {
    match optional(row, name) {
        Some(v) => Ok(v),
        None => Err(format!("missing required field {name:?}")),
    }
}

fn optional(row: &RawRow, name: &str) -> Option<String> {
    (row.get)(name).filter(|v| !v.is_empty())
}

fn read_csv<T>(
    path: &Path,
    errors: &mut Vec<RowError>,
    parse: fn(&RawRow) -> Result<T, String>,
) -> Result<Vec<T>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| io_like(path, e.to_string()))?
        .clone();
    let index: BTreeMap<&str, usize> =
        headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    file: path.display().to_string(),
                    line: e.position().map(|p| p.line()).unwrap_or(0),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |name: &str| -> Option<String> {
            index.get(name).and_then(|&i| record.get(i)).map(str::to_string)
        };
        match parse(&RawRow { get: &get }) {
            Ok(v) => out.push(v),
            Err(reason) => errors.push(RowError {
                file: path.display().to_string(),
                line,
                reason,
            }),
        }
    }
    Ok(out)
}

fn read_jsonl<T>(
    path: &Path,
    errors: &mut Vec<RowError>,
    parse: fn(&RawRow) -> Result<T, String>,
) -> Result<Vec<T>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = (i + 1) as u64;
        let line = line.map_err(|e| io_like(path, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                errors.push(RowError {
                    file: path.display().to_string(),
                    line: lineno,
                    reason: format!("invalid JSON: {e}"),
                });
                continue;
            }
        };
        let get = |name: &str| -> Option<String> {
            match value.get(name) {
                None | Some(serde_json::Value::Null) => None,
                Some(serde_json::Value::String(s)) => Some(s.clone()),
                Some(other) => Some(other.to_string()),
            }
        };
        match parse(&RawRow { get: &get }) {
            Ok(v) => out.push(v),
            Err(reason) => errors.push(RowError {
                file: path.display().to_string(),
                line: lineno,
                reason,
            }),
        }
    }
    Ok(out)
}

fn io_like(path: &Path, msg: String) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, msg),
    }
}

/// Build the canonical latest-state view.
///
/// Duplicate comment ids keep the record with the greatest `dump_date`
/// (tie-break: greatest `created_at`, then last file order). Referential
/// anomalies are repaired and counted, never thrown:
/// unresolvable or self-referential parents degrade to root replies;
/// comments timestamped before their parent lose the parent link; comments
/// timestamped before their own post keep their row (tree construction
/// clamps the offset); comments whose post id is absent from the posts
/// table are dropped, since they cannot join any thread.
pub fn canonicalize(comments: Vec<CommentRecord>, posts: Vec<PostRecord>) -> CanonicalTable {
    let mut integrity = IntegrityReport {
        raw_rows: comments.len(),
        ..Default::default()
    };

    // Dedup posts by id, last file order wins.
    let mut post_map: BTreeMap<String, PostRecord> = BTreeMap::new();
    for p in posts {
        post_map.insert(p.post_id.clone(), p);
    }

    // Dedup comments on primary key.
    let mut best: BTreeMap<String, (Option<Timestamp>, Timestamp, usize, CommentRecord)> =
        BTreeMap::new();
    for (order, c) in comments.into_iter().enumerate() {
        let key = (c.dump_date, c.created_at, order);
        match best.get(&c.comment_id) {
            Some((d, t, o, _)) if (*d, *t, *o) >= key => {}
            _ => {
                best.insert(c.comment_id.clone(), (key.0, key.1, key.2, c));
            }
        }
    }
    let mut comments: Vec<CommentRecord> = best.into_values().map(|(_, _, _, c)| c).collect();
    comments.sort_by(|a, b| {
        (a.created_at, a.comment_id.as_str()).cmp(&(b.created_at, b.comment_id.as_str()))
    });

    let ids: BTreeSet<&str> = comments.iter().map(|c| c.comment_id.as_str()).collect();
    let times: BTreeMap<&str, Timestamp> = comments
        .iter()
        .map(|c| (c.comment_id.as_str(), c.created_at))
        .collect();

    let mut repaired = Vec::with_capacity(comments.len());
    for c in &comments {
        let post = match post_map.get(&c.post_id) {
            Some(p) => p,
            None => {
                integrity.unresolved_post_count += 1;
                continue;
            }
        };
        let mut c = c.clone();
        if let Some(parent) = c.parent_id.clone() {
            if parent == c.comment_id || !ids.contains(parent.as_str()) {
                integrity.orphan_parent_count += 1;
                c.parent_id = None;
            } else if times[parent.as_str()] > c.created_at {
                integrity.negative_lag_count += 1;
                c.parent_id = None;
            }
        }
        if c.created_at < post.created_at {
            integrity.negative_lag_count += 1;
        }
        if c.author_id.is_none() {
            integrity.missing_author_count += 1;
        }
        repaired.push(c);
    }

    // Threads where every comment author is missing.
    let mut thread_any_author: BTreeMap<&str, bool> = BTreeMap::new();
    for c in &repaired {
        let e = thread_any_author.entry(c.post_id.as_str()).or_insert(false);
        *e |= c.author_id.is_some();
    }
    integrity.missing_author_threads = thread_any_author.values().filter(|v| !**v).count();
    integrity.canonical_rows = repaired.len();

    CanonicalTable {
        comments: repaired,
        posts: post_map.into_values().collect(),
        integrity,
    }
}

/// Coarse community category, in classification priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "Spam/Low-Signal")]
    SpamLowSignal,
    #[serde(rename = "Builder/Technical")]
    BuilderTechnical,
    #[serde(rename = "Philosophy/Meta")]
    PhilosophyMeta,
    #[serde(rename = "Creative")]
    Creative,
    #[serde(rename = "Social/Casual")]
    SocialCasual,
    #[serde(rename = "Other")]
    Other,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::SpamLowSignal,
        Category::BuilderTechnical,
        Category::PhilosophyMeta,
        Category::Creative,
        Category::SocialCasual,
        Category::Other,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Category::SpamLowSignal => "Spam/Low-Signal",
            Category::BuilderTechnical => "Builder/Technical",
            Category::PhilosophyMeta => "Philosophy/Meta",
            Category::Creative => "Creative",
            Category::SocialCasual => "Social/Casual",
            Category::Other => "Other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trigger-list variant for community classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierVariant {
    /// Baseline lists; keywords match whole tokens or substrings.
    BaselineTokenSubstring,
    /// Baseline lists; keywords match whole delimiter-separated tokens only.
    BaselineTokenOnly,
    /// Baseline plus the expanded extras; token or substring matching.
    Expanded,
}

impl ClassifierVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline_token_substring" => Some(Self::BaselineTokenSubstring),
            "baseline_token_only" => Some(Self::BaselineTokenOnly),
            "expanded" => Some(Self::Expanded),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::BaselineTokenSubstring => "baseline_token_substring",
            Self::BaselineTokenOnly => "baseline_token_only",
            Self::Expanded => "expanded",
        }
    }
}

#[derive(Deserialize)]
struct KeywordFile {
    baseline: KeywordLists,
    expanded_extra: KeywordLists,
}

#[derive(Deserialize)]
struct KeywordLists {
    spam_low_signal: Vec<String>,
    builder_technical: Vec<String>,
    philosophy_meta: Vec<String>,
    creative: Vec<String>,
    social_casual: Vec<String>,
}

impl KeywordLists {
    fn for_category(&self, c: Category) -> &[String] {
        match c {
            Category::SpamLowSignal => &self.spam_low_signal,
            Category::BuilderTechnical => &self.builder_technical,
            Category::PhilosophyMeta => &self.philosophy_meta,
            Category::Creative => &self.creative,
            Category::SocialCasual => &self.social_casual,
            Category::Other => &[],
        }
    }
}

fn keyword_file() -> &'static KeywordFile {
    static FILE: OnceLock<KeywordFile> = OnceLock::new();
    FILE.get_or_init(|| {
        serde_json::from_str(include_str!("keywords.json"))
            .expect("embedded keywords.json is well-formed")
    })
}

/// Classify a community name into a coarse [`Category`].
///
/// Categories are tried in priority order (Spam/Low-Signal first); the first
/// category with a matching trigger wins, and names matching no trigger fall
/// through to `Other`. Matching is case-insensitive.
pub fn classify_submolt(name: &str, variant: ClassifierVariant) -> Category {
    let lower = name.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    let file = keyword_file();
    let substring_ok = variant != ClassifierVariant::BaselineTokenOnly;
    for category in &Category::ALL[..5] {
        let mut lists: Vec<&[String]> = vec![file.baseline.for_category(*category)];
        if variant == ClassifierVariant::Expanded {
            lists.push(file.expanded_extra.for_category(*category));
        }
        for list in lists {
            for kw in list {
                let hit = if substring_ok {
                    lower.contains(kw.as_str())
                } else {
                    tokens.iter().any(|t| t == kw)
                };
                if hit {
                    return *category;
                }
            }
        }
    }
    Category::Other
}

/// A maximal run of events with no internal gap above the threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub start: Timestamp,
    pub end: Timestamp,
    pub event_count: usize,
}

impl Segment {
    pub fn duration_hours(&self) -> f64 {
        self.end.seconds_since(self.start) / 3600.0
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Contiguous coverage segments of an event stream.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentSet {
    pub segments: Vec<Segment>,
    pub gap_threshold_hours: f64,
    /// Index of the maximum-duration segment (earliest wins ties).
    pub longest_index: usize,
}

impl SegmentSet {
    pub fn longest(&self) -> &Segment {
        &self.segments[self.longest_index]
    }
}

/// Split sorted event times into contiguous segments: any inter-event gap
/// strictly greater than `gap_threshold_hours` starts a new segment.
pub fn detect_gaps(
    event_times: &[Timestamp],
    gap_threshold_hours: f64,
) -> Result<SegmentSet, IngestError> {
    if event_times.is_empty() {
        return Err(IngestError::EmptyStream);
    }
    debug_assert!(event_times.windows(2).all(|w| w[0] <= w[1]));
    let threshold_s = gap_threshold_hours * 3600.0;
    let mut segments = Vec::new();
    let mut start = 0usize;
    for i in 1..event_times.len() {
        if event_times[i].seconds_since(event_times[i - 1]) > threshold_s {
            segments.push(Segment {
                start: event_times[start],
                end: event_times[i - 1],
                event_count: i - start,
            });
            start = i;
        }
    }
    segments.push(Segment {
        start: event_times[start],
        end: event_times[event_times.len() - 1],
        event_count: event_times.len() - start,
    });
    let longest_index = segments
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            let da = a.end.seconds_since(a.start);
            let db = b.end.seconds_since(b.start);
            da.total_cmp(&db).then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
        .unwrap();
    Ok(SegmentSet {
        segments,
        gap_threshold_hours,
        longest_index,
    })
}
