//! End-to-end tests of the `threadpulse` binary: every stochastic command
//! must be byte-identical under a fixed seed, pipelines must compose, and
//! the reference panel numbers must come out of the panel command.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_threadpulse"))
}

fn run_ok(args: &[&str]) {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn simulate_corpus(dir: &Path, seed: &str) -> (PathBuf, PathBuf) {
    let out = dir.join(format!("sim{seed}"));
    run_ok(&[
        "simulate",
        "--out",
        out.to_str().unwrap(),
        "--n-threads",
        "250",
        "--horizon",
        "4000s",
        "--alpha",
        "0.002",
        "--beta",
        "0.01",
        "--root-mean",
        "4",
        "--seed",
        seed,
    ]);
    (out.join("sim_comments.csv"), out.join("sim_posts.csv"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|_| panic!("{name} exists in {dir:?}"))
}

#[test]
fn stochastic_commands_are_byte_identical_under_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (comments, posts) = simulate_corpus(tmp.path(), "7");

    for run in ["a", "b"] {
        let out = tmp.path().join(format!("two_{run}"));
        run_ok(&[
            "twopart",
            "--comments",
            comments.to_str().unwrap(),
            "--posts",
            posts.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--reps",
            "150",
            "--seed",
            "5",
        ]);
        let per = tmp.path().join(format!("per_{run}"));
        run_ok(&[
            "periodicity",
            "--comments",
            comments.to_str().unwrap(),
            "--posts",
            posts.to_str().unwrap(),
            "--out",
            per.to_str().unwrap(),
            "--null-reps",
            "2000",
            "--power-reps",
            "2000",
            "--psd-reps",
            "100",
            "--seed",
            "5",
        ]);
    }
    for name in ["twopart.json", "gap_robustness.csv", "horizon_standardized.csv", "manifest.json"]
    {
        assert_eq!(
            read(&tmp.path().join("two_a"), name),
            read(&tmp.path().join("two_b"), name),
            "{name} differs between identical runs"
        );
    }
    assert_eq!(
        read(&tmp.path().join("per_a"), "periodicity.json"),
        read(&tmp.path().join("per_b"), "periodicity.json")
    );

    // Match bootstraps paired effects; same seed, same bytes.
    let (comments_b, posts_b) = simulate_corpus(tmp.path(), "8");
    for run in ["a", "b"] {
        let out = tmp.path().join(format!("match_{run}"));
        run_ok(&[
            "match",
            "--comments",
            comments.to_str().unwrap(),
            "--posts",
            posts.to_str().unwrap(),
            "--comments-b",
            comments_b.to_str().unwrap(),
            "--posts-b",
            posts_b.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--reps",
            "150",
            "--seed",
            "5",
        ]);
    }
    for name in ["matching_flow.json", "balance.csv", "paired_effects.csv"] {
        assert_eq!(
            read(&tmp.path().join("match_a"), name),
            read(&tmp.path().join("match_b"), name),
            "{name} differs between identical runs"
        );
    }

    // Simulate itself is reproducible too.
    let again = tmp.path().join("sim7_again");
    run_ok(&[
        "simulate",
        "--out",
        again.to_str().unwrap(),
        "--n-threads",
        "250",
        "--horizon",
        "4000s",
        "--alpha",
        "0.002",
        "--beta",
        "0.01",
        "--root-mean",
        "4",
        "--seed",
        "7",
    ]);
    assert_eq!(
        std::fs::read(&comments).unwrap(),
        read(&again, "sim_comments.csv")
    );
}

#[test]
fn seed_resolution_env_and_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let (comments, posts) = simulate_corpus(tmp.path(), "9");

    let run_with = |out: &Path, env_seed: Option<&str>, flag_seed: Option<&str>| {
        let mut cmd = bin();
        cmd.args([
            "twopart",
            "--comments",
            comments.to_str().unwrap(),
            "--posts",
            posts.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--reps",
            "120",
        ]);
        if let Some(s) = flag_seed {
            cmd.args(["--seed", s]);
        }
        match env_seed {
            Some(s) => cmd.env("THREADPULSE_SEED", s),
            None => cmd.env_remove("THREADPULSE_SEED"),
        };
        let output = cmd.output().unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    };

    let a = tmp.path().join("env41");
    let b = tmp.path().join("flag41");
    let c = tmp.path().join("flag42_env41");
    run_with(&a, Some("41"), None);
    run_with(&b, None, Some("41"));
    run_with(&c, Some("41"), Some("42"));
    // Env var supplies the default; the explicit flag wins over it.
    let seed_of = |dir: &Path| -> u64 {
        let v: serde_json::Value =
            serde_json::from_slice(&read(dir, "twopart.json")).unwrap();
        v["run"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&a), 41);
    assert_eq!(seed_of(&b), 41);
    assert_eq!(seed_of(&c), 42);
}

#[test]
fn panel_reproduces_reference_margins() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("panel");
    run_ok(&[
        "panel",
        "--q",
        "0.0942",
        "--phi",
        "0.9806",
        "--out",
        out.to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&read(&out, "panel.json")).unwrap();
    assert!((v["pi"].as_f64().unwrap() - 0.0961).abs() < 5e-5);
    assert!((v["bounded_lift_incidence"].as_f64().unwrap() - 0.8864).abs() < 5e-5);
    assert!((v["bounded_lift_timing"].as_f64().unwrap() - 0.00186).abs() < 5e-6);
    assert_eq!(v["recommendation"].as_str().unwrap(), "incidence");
}

#[test]
fn ingest_reports_malformed_rows_and_integrity() {
    let tmp = tempfile::tempdir().unwrap();
    let comments = tmp.path().join("comments.csv");
    let posts = tmp.path().join("posts.csv");
    std::fs::write(
        &comments,
        "id,post_id,parent_id,agent_id,created_at_utc,score,dump_date\n\
         c1,p1,,a1,2026-01-28T00:00:10Z,1,\n\
         c2,p1,ghost,a2,2026-01-28T00:00:20Z,0,\n\
         c3,p1,,a3,not-a-date,0,\n",
    )
    .unwrap();
    std::fs::write(
        &posts,
        "id,agent_id,submolt,created_at_utc\np1,root,general,2026-01-28T00:00:00Z\n",
    )
    .unwrap();
    let out = tmp.path().join("ing");
    run_ok(&[
        "ingest",
        "--comments",
        comments.to_str().unwrap(),
        "--posts",
        posts.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&read(&out, "ingest.json")).unwrap();
    assert_eq!(v["n_canonical_comments"].as_u64(), Some(2));
    assert_eq!(v["integrity"]["orphan_parent_count"].as_u64(), Some(1));
    let malformed = String::from_utf8(read(&out, "malformed_rows.jsonl")).unwrap();
    assert_eq!(malformed.lines().count(), 1);
    assert!(malformed.contains("timestamp"));
}

#[test]
fn geometry_glm_match_and_report_compose() {
    let tmp = tempfile::tempdir().unwrap();
    let (comments, posts) = simulate_corpus(tmp.path(), "11");
    let (comments_b, posts_b) = simulate_corpus(tmp.path(), "12");
    let out = tmp.path().join("full");
    let o = out.to_str().unwrap();

    run_ok(&["geometry", "--comments", comments.to_str().unwrap(), "--posts", posts.to_str().unwrap(), "--out", o]);
    run_ok(&[
        "twopart",
        "--comments",
        comments.to_str().unwrap(),
        "--posts",
        posts.to_str().unwrap(),
        "--out",
        o,
        "--reps",
        "120",
    ]);
    run_ok(&["glm", "--comments", comments.to_str().unwrap(), "--posts", posts.to_str().unwrap(), "--out", o]);
    run_ok(&[
        "periodicity",
        "--comments",
        comments.to_str().unwrap(),
        "--posts",
        posts.to_str().unwrap(),
        "--out",
        o,
        "--null-reps",
        "2000",
        "--power-reps",
        "2000",
        "--psd-reps",
        "100",
    ]);
    run_ok(&[
        "match",
        "--comments",
        comments.to_str().unwrap(),
        "--posts",
        posts.to_str().unwrap(),
        "--comments-b",
        comments_b.to_str().unwrap(),
        "--posts-b",
        posts_b.to_str().unwrap(),
        "--out",
        o,
        "--reps",
        "150",
    ]);
    run_ok(&[
        "gapcheck",
        "--comments",
        comments.to_str().unwrap(),
        "--posts",
        posts.to_str().unwrap(),
        "--out",
        o,
        "--aux",
        &format!("posts_again={}", posts.display()),
    ]);
    run_ok(&["report", "--out", o]);

    let geometry: serde_json::Value = serde_json::from_slice(&read(&out, "geometry.json")).unwrap();
    assert!(geometry["summary"]["thread_count"].as_u64().unwrap() > 0);
    let glm: serde_json::Value = serde_json::from_slice(&read(&out, "glm.json")).unwrap();
    assert!(glm["converged"].as_bool().unwrap());
    assert!(glm["calibration_abs_error"].as_f64().unwrap() < 1e-8);

    let table1 = String::from_utf8(read(&out, "table1_headline.csv")).unwrap();
    assert!(table1.starts_with("group,parents,p_5m_pct,p_1h_pct,p_obs_pct_secondary"));
    assert!(table1.lines().count() >= 2);
    let balance = String::from_utf8(read(&out, "s4_balance.csv")).unwrap();
    assert!(balance.contains("coarse_topic"));
    let gaps = String::from_utf8(read(&out, "gapcheck.csv")).unwrap();
    assert!(gaps.lines().count() == 4); // header + comments + posts + aux

    // The matching flow accounting stays within the pair-count bound.
    let flow: serde_json::Value =
        serde_json::from_slice(&read(&out, "matching_flow.json")).unwrap();
    let pairs = flow["n_pairs"].as_u64().unwrap();
    assert!(pairs <= flow["retained_a"].as_u64().unwrap());
    assert!(pairs <= flow["retained_b"].as_u64().unwrap());
}

#[test]
fn agents_table_enables_claim_strata_and_regressor() {
    let tmp = tempfile::tempdir().unwrap();
    let (comments, posts) = simulate_corpus(tmp.path(), "21");
    // Claim half the simulated authors.
    let body = std::fs::read_to_string(&comments).unwrap();
    let mut agents = String::from("id,claimed\n");
    for (i, line) in body.lines().skip(1).enumerate() {
        let author = line.split(',').nth(3).unwrap();
        agents.push_str(&format!("{author},{}\n", i % 2 == 0));
    }
    let agents_path = tmp.path().join("agents.csv");
    std::fs::write(&agents_path, agents).unwrap();

    let out = tmp.path().join("claims");
    run_ok(&[
        "twopart",
        "--comments",
        comments.to_str().unwrap(),
        "--posts",
        posts.to_str().unwrap(),
        "--agents",
        agents_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--reps",
        "120",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&read(&out, "twopart.json")).unwrap();
    assert!(v["strata"].get("claimed").is_some());
    assert!(v["strata"].get("unclaimed").is_some());

    run_ok(&[
        "glm",
        "--comments",
        comments.to_str().unwrap(),
        "--posts",
        posts.to_str().unwrap(),
        "--agents",
        agents_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let g: serde_json::Value = serde_json::from_slice(&read(&out, "glm.json")).unwrap();
    let names: Vec<&str> = g["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"claimed"), "{names:?}");
}

#[test]
fn jsonl_inputs_flow_through_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let comments = tmp.path().join("comments.jsonl");
    let posts = tmp.path().join("posts.jsonl");
    std::fs::write(
        &comments,
        concat!(
            r#"{"id":"c1","post_id":"p1","parent_id":null,"agent_id":"a1","created_at_utc":"2026-01-28T00:00:10Z","score":1}"#,
            "\n",
            r#"{"id":"c2","post_id":"p1","parent_id":"c1","agent_id":"a2","created_at_utc":"2026-01-28T00:00:25Z","score":0}"#,
            "\n",
        ),
    )
    .unwrap();
    std::fs::write(
        &posts,
        concat!(
            r#"{"id":"p1","agent_id":"root","submolt":"general","created_at_utc":"2026-01-28T00:00:00Z"}"#,
            "\n",
        ),
    )
    .unwrap();
    let out = tmp.path().join("jsonl");
    run_ok(&[
        "ingest",
        "--comments",
        comments.to_str().unwrap(),
        "--posts",
        posts.to_str().unwrap(),
        "--format",
        "jsonl",
        "--out",
        out.to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&read(&out, "ingest.json")).unwrap();
    assert_eq!(v["n_canonical_comments"].as_u64(), Some(2));
    assert_eq!(v["integrity"]["orphan_parent_count"].as_u64(), Some(0));
}

#[test]
fn supercritical_corpus_simulation_is_refused_with_guidance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("super");
    let output = bin()
        .args([
            "simulate",
            "--out",
            out.to_str().unwrap(),
            "--alpha",
            "0.02",
            "--beta",
            "0.01",
            "--horizon",
            "1h",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("supercritical"), "{stderr}");
    assert!(stderr.contains("--units-only"), "{stderr}");

    // The units-only path handles the same parameters.
    run_ok(&[
        "simulate",
        "--out",
        out.to_str().unwrap(),
        "--alpha",
        "0.02",
        "--beta",
        "0.01",
        "--horizon",
        "1h",
        "--units-only",
        "5000",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&read(&out, "sim_report.json")).unwrap();
    let alpha_err = v["report"]["alpha_rel_err"].as_f64().unwrap();
    assert!(alpha_err < 0.15, "alpha rel err {alpha_err}");
}

#[test]
fn missing_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "twopart",
            "--comments",
            "/nonexistent/comments.csv",
            "--posts",
            "/nonexistent/posts.csv",
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());

    let output = bin()
        .args(["report", "--out", tmp.path().join("empty").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
}
