//! Acceptance: the end-to-end desk run, plan-script round trip, and
//! pipeline determinism, all driven through the real binary.
//!
//! Run with `--nocapture` for the per-criterion lines:
//! `cargo test -p fleetctl --test acceptance -- --nocapture`

mod util;

use std::path::Path;
use std::time::Instant;

use util::{fleetctl, write_mock_campaign};

use fleetbench::results::{decode_csv, DecodeMode, Status};

fn verdict(name: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

/// Desk-scale bench on the build machine: every metric family present, under
/// the five-minute budget.
#[test]
fn criterion_end_to_end_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let run = fleetctl(&["bench", "--out", "results", "--site", "DESK"], tmp.path(), &[]);
    let elapsed = started.elapsed();
    assert_eq!(run.status, Some(0), "bench failed: {}", run.stderr);

    let mut entries: Vec<_> =
        std::fs::read_dir(tmp.path().join("results")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "bench writes exactly one CSV");
    let text = std::fs::read_to_string(entries.pop().unwrap()).unwrap();
    let records = decode_csv(&text, DecodeMode::Strict).unwrap().records;
    let ok = |m: &str| records.iter().filter(|r| r.metric == m && r.status == Status::Ok).count();

    let families_ok = ok("op_latency") == 14
        && ok("bogomflops") == 2
        && ok("mem_latency") >= 8
        && ok("cache_level") >= 1
        && ok("stream_bw") == 4
        && ok("stream_lat") == 4
        && ok("stream2_bw") == 4
        && ok("stream2_lat") == 4
        && ok("inventory") >= 8;
    let in_budget = elapsed.as_secs_f64() < 300.0;
    verdict(
        "end-to-end-bench",
        families_ok && in_budget,
        &format!(
            "op={} bogo={} mem={} cache={} stream={}/{} stream2={}/{} inv={} in {elapsed:.1?}",
            ok("op_latency"),
            ok("bogomflops"),
            ok("mem_latency"),
            ok("cache_level"),
            ok("stream_bw"),
            ok("stream_lat"),
            ok("stream2_bw"),
            ok("stream2_lat"),
            ok("inventory"),
        ),
    );
}

/// Three synthetic sites with hand-computed statistics flow through
/// collect -> aggregate -> report; pie wedge angles close to 360 and the
/// ranking table marks the right best cells.
#[test]
fn criterion_end_to_end_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_mock_campaign(tmp.path(), "SA", "wn01");
    let inbox = tmp.path().join("inbox");
    std::fs::create_dir_all(&inbox).unwrap();

    let header = "hostname,site,timestamp,metric,class,kind,value,unit,status,note\n";
    let row = |host: &str, site: &str, metric: &str, class: &str, kind: &str, value: &str, unit: &str| {
        format!("{host},{site},2007-05-01T12:00:00Z,{metric},{class},{kind},{value},{unit},ok,\n")
    };
    // Site SA: double add mean 2.0 (two nodes), triad bandwidth 5000 = best.
    let mut sa = String::from(header);
    sa += &row("a1", "SA", "op_latency", "double", "add", "2", "ns");
    sa += &row("a2", "SA", "op_latency", "double", "add", "2", "ns");
    sa += &row("a1", "SA", "stream_bw", "", "triad", "5000", "MBps");
    sa += &row("a2", "SA", "stream_bw", "", "triad", "5000", "MBps");
    sa += &row("a1", "SA", "inventory", "", "kernel_base", "", "");
    sa = sa.replace("inventory,,kernel_base,,,ok,\n", "inventory,,kernel_base,,,ok,2.4\n");
    // Site SB: double add mean 1.5 = best latency.
    let mut sb = String::from(header);
    sb += &row("b1", "SB", "op_latency", "double", "add", "1.4", "ns");
    sb += &row("b2", "SB", "op_latency", "double", "add", "1.6", "ns");
    sb += &row("b1", "SB", "stream_bw", "", "triad", "4000", "MBps");
    sb += "b1,SB,2007-05-01T12:00:00Z,inventory,,kernel_base,,,ok,2.6\n";
    // Site SC: slowest.
    let mut sc = String::from(header);
    sc += &row("c1", "SC", "op_latency", "double", "add", "3", "ns");
    sc += &row("c1", "SC", "stream_bw", "", "triad", "3000", "MBps");
    sc += "c1,SC,2007-05-01T12:00:00Z,inventory,,kernel_base,,,ok,2.6\n";
    std::fs::write(inbox.join("sa.csv"), sa).unwrap();
    std::fs::write(inbox.join("sb.csv"), sb).unwrap();
    std::fs::write(inbox.join("sc.csv"), sc).unwrap();

    for step in ["collect", "aggregate", "report"] {
        let run = fleetctl(&[step, "--config", config.to_str().unwrap()], tmp.path(), &[]);
        assert_eq!(run.status, Some(0), "{step} failed: {}", run.stderr);
    }

    // Every pie's wedge angles sum to 360 within 1e-6.
    let report_dir = tmp.path().join("out/report");
    let mut pies = 0;
    let mut worst_angle_err = 0.0f64;
    for entry in std::fs::read_dir(&report_dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if !name.starts_with("pie_") {
            continue;
        }
        pies += 1;
        let svg = std::fs::read_to_string(&path).unwrap();
        let sum: f64 = svg
            .split("data-angle=\"")
            .skip(1)
            .map(|rest| rest.split('"').next().unwrap().parse::<f64>().unwrap())
            .sum();
        worst_angle_err = worst_angle_err.max((sum - 360.0).abs());
    }

    // Hand computation: SB owns the lowest double-add mean, SA the highest
    // triad bandwidth.
    let table = std::fs::read_to_string(report_dir.join("ranking_table.csv")).unwrap();
    let mut lines = table.lines();
    let headers: Vec<&str> = lines.next().unwrap().split(',').collect();
    let add_col = headers.iter().position(|h| *h == "op_latency/double/add").unwrap();
    let bw_col = headers.iter().position(|h| *h == "stream_bw/triad").unwrap();
    let mut best_add = None;
    let mut best_bw = None;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells[add_col].ends_with('*') {
            best_add = Some(cells[0].to_string());
        }
        if cells[bw_col].ends_with('*') {
            best_bw = Some(cells[0].to_string());
        }
    }
    let markers_ok = best_add.as_deref() == Some("SB") && best_bw.as_deref() == Some("SA");

    // The per-key ranking artifact agrees with the hand ordering.
    let ranking =
        std::fs::read_to_string(report_dir.join("ranking_op_latency_double_add.txt")).unwrap();
    let ranking_ok = ranking.contains("1. SB") && ranking.contains("2. SA") && ranking.contains("3. SC");

    verdict(
        "end-to-end-pipeline",
        pies >= 2 && worst_angle_err <= 1e-6 && markers_ok && ranking_ok,
        &format!(
            "{pies} pies (worst angle error {worst_angle_err:.2e}), best add={best_add:?}, best bw={best_bw:?}"
        ),
    );
}

/// The emitted job plan, executed locally with the toolkit on PATH, produces
/// a file that collect ingests with zero rejected rows.
#[test]
fn criterion_plan_script_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_mock_campaign(tmp.path(), "SA", "wn01");

    let plan = fleetctl(&["plan", "--config", config.to_str().unwrap()], tmp.path(), &[]);
    assert_eq!(plan.status, Some(0), "{}", plan.stderr);
    let script_path = tmp.path().join("job.sh");
    std::fs::write(&script_path, &plan.stdout).unwrap();

    let bin_dir = Path::new(env!("CARGO_BIN_EXE_fleetctl")).parent().unwrap();
    let path_var = format!("{}:{}", bin_dir.display(), std::env::var("PATH").unwrap_or_default());
    let sh = std::process::Command::new("sh")
        .arg(&script_path)
        .arg("inbox")
        .current_dir(tmp.path())
        .env("PATH", path_var)
        .output()
        .expect("run job script");
    assert!(
        sh.status.success(),
        "script failed: {}",
        String::from_utf8_lossy(&sh.stderr)
    );
    let produced: Vec<_> = std::fs::read_dir(tmp.path().join("inbox"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(produced.len(), 1, "plan produces exactly one output file");

    let collect =
        fleetctl(&["collect", "--strict", "--config", config.to_str().unwrap()], tmp.path(), &[]);
    assert_eq!(collect.status, Some(0), "strict collect rejected rows: {}", collect.stderr);
    let zero_skipped = !collect.stdout.contains("skipped");
    verdict(
        "plan-script-round-trip",
        zero_skipped,
        &format!("one output file, strict collect clean: {}", collect.stdout.lines().next().unwrap_or("")),
    );
}

/// Probe fixtures + mock clock + fixed seed give byte-identical artifacts
/// across two full pipeline executions.
#[test]
fn criterion_pipeline_determinism() {
    let mut digests = Vec::new();
    for _ in 0..2 {
        let tmp = tempfile::tempdir().unwrap();
        let config = write_mock_campaign(tmp.path(), "SA", "wn01");
        let bench = fleetctl(
            &["bench", "--config", config.to_str().unwrap(), "--out", "inbox"],
            tmp.path(),
            &[],
        );
        assert_eq!(bench.status, Some(0), "{}", bench.stderr);
        for step in ["collect", "aggregate", "report"] {
            let run = fleetctl(&[step, "--config", config.to_str().unwrap()], tmp.path(), &[]);
            assert_eq!(run.status, Some(0), "{step}: {}", run.stderr);
        }
        // Digest = sorted (relative path, bytes) of everything produced.
        let mut artifacts: Vec<(String, Vec<u8>)> = Vec::new();
        let mut stack = vec![tmp.path().join("out")];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(tmp.path()).unwrap().to_string_lossy().into_owned();
                    artifacts.push((rel, std::fs::read(&path).unwrap()));
                }
            }
        }
        artifacts.sort();
        digests.push(artifacts);
    }
    let identical = digests[0] == digests[1];
    verdict(
        "pipeline-determinism",
        identical && !digests[0].is_empty(),
        &format!("{} artifacts byte-identical across runs", digests[0].len()),
    );
}
