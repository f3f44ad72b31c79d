//! Command-line pipelines over threaded event streams: ingestion and
//! integrity checks, thread geometry, the two-part persistence readout,
//! incidence regression, periodicity diagnostics, cross-corpus matching,
//! cascade simulation, the budget panel, gap disambiguation counts, and
//! table-shaped report collation.

mod commands;
mod runctx;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "threadpulse",
    version,
    about = "Two-part conversational persistence analytics for threaded event streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Output directory for artifacts and the run manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// RNG seed. Defaults to the THREADPULSE_SEED environment variable when
    /// set, else the built-in default (periodicity uses its own default).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Comments table.
    #[arg(long)]
    comments: PathBuf,
    /// Posts table.
    #[arg(long)]
    posts: PathBuf,
    /// Optional agents table with claim status (columns: id, claimed).
    #[arg(long)]
    agents: Option<PathBuf>,
    /// Input format: csv or jsonl.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Community classifier trigger-list variant: baseline_token_substring,
    /// baseline_token_only, or expanded.
    #[arg(long, default_value = "baseline_token_substring")]
    classifier_variant: String,
    /// Observation end (ISO 8601). Defaults to the latest event timestamp.
    #[arg(long)]
    observation_end: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, canonicalize, and validate the input tables.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        /// Coverage-gap threshold in hours.
        #[arg(long, default_value_t = 6.0)]
        gap_hours: f64,
    },
    /// Thread-geometry estimands: depth tails, branching, reciprocity,
    /// re-entry, descriptives.
    Geometry {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Two-part persistence readout with gap-robustness scenarios.
    Twopart {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 6.0)]
        gap_hours: f64,
        /// Follow-up horizons (comma-separated durations).
        #[arg(long, default_value = "30s,5m,1h")]
        horizons: String,
        /// Thread-cluster bootstrap replicates for stratum intervals.
        #[arg(long, default_value_t = 400)]
        reps: usize,
        /// Restrict the primary sample to one earliest parent per thread.
        #[arg(long)]
        one_parent: bool,
    },
    /// Complementary log-log incidence regression with two-way clustered
    /// covariance.
    Glm {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        /// Apply the G/(G-1) small-sample factor to each cluster dimension.
        #[arg(long)]
        cluster_small_sample: bool,
    },
    /// Phase-concentration test, detectability grid, and binned-count PSD
    /// on the longest contiguous segment.
    Periodicity {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 6.0)]
        gap_hours: f64,
        /// Target period in hours.
        #[arg(long, default_value_t = 4.0)]
        tau: f64,
        /// PSD bin widths in minutes (comma-separated; first is primary).
        #[arg(long, default_value = "15,5,30")]
        bins: String,
        /// Null-calibration Monte Carlo replicates.
        #[arg(long, default_value_t = 200_000)]
        null_reps: usize,
        /// Power replicates per kappa grid point.
        #[arg(long, default_value_t = 50_000)]
        power_reps: usize,
        /// AR(1) surrogate replicates per PSD bin width.
        #[arg(long, default_value_t = 2000)]
        psd_reps: usize,
    },
    /// Coarsened exact matching between two corpora with balance and
    /// paired-effect diagnostics.
    Match {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        /// Comments table of the comparison corpus.
        #[arg(long)]
        comments_b: PathBuf,
        /// Posts table of the comparison corpus.
        #[arg(long)]
        posts_b: PathBuf,
        /// Pair-cluster bootstrap replicates for paired effects.
        #[arg(long, default_value_t = 1000)]
        reps: usize,
    },
    /// Simulate a cascade corpus and write it in the ingest CSV schema.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Reply amplitude per second.
        #[arg(long, default_value_t = 0.00154)]
        alpha: f64,
        /// Kernel decay rate per second.
        #[arg(long, default_value_t = 0.01)]
        beta: f64,
        /// Exposure multiplier on the amplitude.
        #[arg(long, default_value_t = 1.0)]
        exposure: f64,
        /// Expected direct root replies per thread over the window.
        #[arg(long, default_value_t = 5.57)]
        root_mean: f64,
        /// Simulation window (duration, e.g. 2h).
        #[arg(long, default_value = "20000s")]
        horizon: String,
        #[arg(long, default_value_t = 1000)]
        n_threads: usize,
        /// Availability profile: constant, cosine, or square.
        #[arg(long, default_value = "constant")]
        availability: String,
        /// Availability period (duration) for cosine/square profiles.
        #[arg(long, default_value = "4h")]
        period: String,
        /// Cosine modulation depth in [0, 1).
        #[arg(long, default_value_t = 0.5)]
        modulation: f64,
        /// Square duty fraction in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        duty: f64,
        /// Community name stamped on simulated posts.
        #[arg(long, default_value = "general")]
        submolt: String,
        /// Skip the corpus and draw this many independent candidate-parent
        /// units instead (valid for any alpha/beta, including ratios where
        /// a full cascade would be supercritical).
        #[arg(long)]
        units_only: Option<usize>,
    },
    /// Budgeted incidence-vs-timing priority panel.
    Panel {
        #[command(flatten)]
        common: CommonArgs,
        /// Horizon throughput q (with --phi, skips data inputs).
        #[arg(long)]
        q: Option<f64>,
        /// Conditional speed margin phi.
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        comments: Option<PathBuf>,
        #[arg(long)]
        posts: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Horizon for data-driven margins.
        #[arg(long, default_value = "5m")]
        horizon: String,
        #[arg(long, default_value_t = 1.0)]
        cost_incidence: f64,
        #[arg(long, default_value_t = 1.0)]
        cost_timing: f64,
        /// Contemplated incidence improvement (absolute).
        #[arg(long, default_value_t = 0.01)]
        delta_incidence: f64,
        /// Contemplated timing improvement (absolute).
        #[arg(long, default_value_t = 0.01)]
        delta_timing: f64,
        /// Depth K for the q^{K-1} proxy.
        #[arg(long, default_value_t = 3)]
        depth_k: u32,
    },
    /// Gap disambiguation counts across event tables.
    Gapcheck {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 6.0)]
        gap_hours: f64,
        /// Extra event tables: NAME=PATH or NAME=PATH=TIME_COLUMN.
        #[arg(long)]
        aux: Vec<String>,
    },
    /// Collate existing artifacts into table-shaped CSVs (no recomputation).
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { common, input, gap_hours } => {
            commands::cmd_ingest(&common, &input, gap_hours)
        }
        Command::Geometry { common, input } => commands::cmd_geometry(&common, &input),
        Command::Twopart { common, input, gap_hours, horizons, reps, one_parent } => {
            commands::cmd_twopart(&common, &input, gap_hours, &horizons, reps, one_parent)
        }
        Command::Glm { common, input, cluster_small_sample } => {
            commands::cmd_glm(&common, &input, cluster_small_sample)
        }
        Command::Periodicity {
            common,
            input,
            gap_hours,
            tau,
            bins,
            null_reps,
            power_reps,
            psd_reps,
        } => commands::cmd_periodicity(
            &common, &input, gap_hours, tau, &bins, null_reps, power_reps, psd_reps,
        ),
        Command::Match { common, input, comments_b, posts_b, reps } => {
            commands::cmd_match(&common, &input, &comments_b, &posts_b, reps)
        }
        Command::Simulate {
            common,
            alpha,
            beta,
            exposure,
            root_mean,
            horizon,
            n_threads,
            availability,
            period,
            modulation,
            duty,
            submolt,
            units_only,
        } => commands::cmd_simulate(commands::SimulateArgs {
            common,
            alpha,
            beta,
            exposure,
            root_mean,
            horizon,
            n_threads,
            availability,
            period,
            modulation,
            duty,
            submolt,
            units_only,
        }),
        Command::Panel {
            common,
            q,
            phi,
            comments,
            posts,
            format,
            horizon,
            cost_incidence,
            cost_timing,
            delta_incidence,
            delta_timing,
            depth_k,
        } => commands::cmd_panel(commands::PanelArgs {
            common,
            q,
            phi,
            comments,
            posts,
            format,
            horizon,
            cost_incidence,
            cost_timing,
            delta_incidence,
            delta_timing,
            depth_k,
        }),
        Command::Gapcheck { common, input, gap_hours, aux } => {
            commands::cmd_gapcheck(&common, &input, gap_hours, &aux)
        }
        Command::Report { common } => commands::cmd_report(&common),
    }
}
