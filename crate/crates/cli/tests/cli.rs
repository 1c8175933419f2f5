use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazereview"))
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .unwrap()
}

fn ok(store: &Path, args: &[&str]) -> String {
    let out = run(store, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(store: &Path, args: &[&str], code: i32) -> Value {
    let out = run(store, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "error must be one line: {err}");
    serde_json::from_str(err.trim_end()).unwrap()
}

fn scenario(dir: &Path, sigma_ml: f64) -> String {
    let path = dir.join("scenario.json");
    let cfg = json!({
        "frame_count": 1000, "fps": 5.0, "sigma_on": 0.05, "lookaway_rate": 1.5,
        "duration_range": [5, 30], "lookaway_angle_range": [0.5, 1.0],
        "sigma_ml": sigma_ml, "seed": 0
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn panel(dir: &Path, voter_accuracy: f64) -> String {
    let p = |seed: u64, acc: f64| {
        json!({"p_detect": 0.6, "p_false_alarm": 0.2, "boundary_jitter": 2,
               "p_verify_correct": acc, "seed": seed})
    };
    let path = dir.join("panel.json");
    let cfg = json!({"human": p(1, 0.95), "hybrid": p(2, 0.95), "voters": [p(3, voter_accuracy)]});
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_is_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), 0.1);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out_a = ok(&a, &["simulate", "--config", &cfg, "--n", "1", "--seed", "7"]);
    let out_b = ok(&b, &["simulate", "--config", &cfg, "--n", "1", "--seed", "7"]);
    assert_eq!(out_a, out_b);
    for f in ["manifest.json", "predictions.jsonl", "events.json", "ground_truth.json"] {
        let pa = std::fs::read(a.join("sessions/sim-7-0000").join(f)).unwrap();
        let pb = std::fs::read(b.join("sessions/sim-7-0000").join(f)).unwrap();
        assert_eq!(pa, pb, "{f}");
    }
}

#[test]
fn perfect_ml_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let cfg = scenario(dir.path(), 0.0);
    ok(&store, &["simulate", "--config", &cfg, "--n", "3", "--seed", "11"]);
    let labeled = ok(&store, &["label-ml", "--session", "all", "--theta", "0.3"]);
    assert_eq!(labeled.lines().count(), 3);
    let out = ok(
        &store,
        &["evaluate", "--sessions", "all", "--k", "3", "--simulate-proctors", &panel(dir.path(), 1.0), "--format", "json"],
    );
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["report"]["n_sessions"], 3);
    assert_eq!(v["report"]["per_system"]["ml_only"]["mean_precision"], 1.0);

    let id = v["report_id"].as_str().unwrap();
    let exported: Value = serde_json::from_str(&ok(&store, &["export-report", id])).unwrap();
    assert_eq!(exported, v["report"]);
    let text = ok(&store, &["export-report", id, "--format", "text"]);
    assert!(text.contains("ml_only") && text.contains("complementarity"));

    // re-evaluating stored labels without fabrication gives the same report
    let again = ok(&store, &["evaluate", "--sessions", "all", "--k", "3", "--format", "json"]);
    assert_eq!(serde_json::from_str::<Value>(&again).unwrap()["report_id"], id);
}

#[test]
fn theta_near_pi_labels_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    ok(&store, &["simulate", "--config", &scenario(dir.path(), 0.1), "--n", "1", "--seed", "3"]);
    let out = ok(&store, &["label-ml", "--session", "sim-3-0000", "--theta", "3.14159"]);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["positive_frames"], 0);
    assert_eq!(v["version"], 1);
    let labels: Value = serde_json::from_slice(
        &std::fs::read(store.join("sessions/sim-3-0000/labels/ml_only.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(labels["intervals"], json!([]));
}

#[test]
fn ingest_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let preds = dir.path().join("p.jsonl");
    std::fs::write(
        &preds,
        "{\"frame\":0,\"t_ms\":0,\"pitch\":0.0,\"yaw\":0.0,\"face\":true,\"conf\":0.9}\n\
         {\"frame\":1,\"t_ms\":500,\"pitch\":0.1,\"yaw\":0.9,\"face\":true,\"conf\":0.9}\n",
    )
    .unwrap();
    let p = preds.to_str().unwrap();
    let out = ok(
        &store,
        &["ingest", p, "--id", "exam-1", "--fps", "2", "--video-uri", "file:///v.mp4", "--created-at", "2024-05-01T10:00:00Z"],
    );
    let m: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(m["frame_count"], 2);
    assert_eq!(m["source"], "ingested");
    // identical re-ingest is a no-op
    ok(&store, &["ingest", p, "--id", "exam-1", "--fps", "2", "--created-at", "2024-05-01T10:00:00Z"]);

    let other = dir.path().join("q.jsonl");
    std::fs::write(&other, std::fs::read_to_string(&preds).unwrap().replace("0.9}", "0.8}")).unwrap();
    let e = fails(&store, &["ingest", other.to_str().unwrap(), "--id", "exam-1", "--fps", "2"], 6);
    assert_eq!(e["error"], "conflict");
    fails(&store, &["ingest", p, "--id", "exam-2", "--fps", "4"], 4);
    fails(&store, &["label-ml", "--session", "nope", "--theta", "0.3"], 3);
    fails(&store, &["label-ml", "--session", "exam-1", "--theta", "0"], 4);
    fails(&store, &["label-ml", "--session", "exam-1", "--theta", "0.3", "--missing-face", "maybe"], 4);
    fails(&store, &["export-report", "0000000000000000"], 3);
    fails(&store, &["evaluate", "--sessions", "exam-1", "--k", "1"], 3);
    fails(&store, &["simulate", "--config", "/does/not/exist.json", "--n", "1", "--seed", "1"], 4);

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"frame\":0}\n").unwrap();
    let e = fails(&store, &["ingest", bad.to_str().unwrap(), "--id", "x", "--fps", "2"], 4);
    assert!(e["message"].as_str().unwrap().contains("line 1"));

    let ml = ok(&store, &["label-ml", "--session", "exam-1", "--theta", "0.5"]);
    assert_eq!(serde_json::from_str::<Value>(ml.trim()).unwrap()["positive_frames"], 1);

    // corrupt predictions are a store error
    let pj = store.join("sessions/exam-1/predictions.jsonl");
    let mut bytes = std::fs::read(&pj).unwrap();
    bytes[10] ^= 1;
    std::fs::write(&pj, bytes).unwrap();
    let e = fails(&store, &["label-ml", "--session", "exam-1", "--theta", "0.5"], 5);
    assert_eq!(e["error"], "store");
}
