use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn partune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partune"))
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let out = partune(&all);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

#[test]
fn analyze_worked_example() {
    let v = json(&["analyze", "graphs/inception-module4.json"]);
    assert_eq!(v["command"], "analyze");
    assert_eq!(v["results"]["avg_width"], 2);
    assert_eq!(v["results"]["heavy_count"], 7);
    assert_eq!(v["results"]["heavy_depth"], 3);
    let digest = v["inputs"]["graph"]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(v["tool_version"].as_str().unwrap().starts_with("partune "));
    assert!(v.get("measured").is_none());
}

#[test]
fn recommend_widedeep() {
    let v = json(&["recommend", "graphs/widedeep-like.json", "--hw", "hw/two-socket-24.json"]);
    let c = &v["results"]["config"];
    assert_eq!((c["pools"].as_u64(), c["intra_threads"].as_u64(), c["kernel_threads"].as_u64()), (Some(3), Some(16), Some(16)));
    assert_eq!(v["results"]["basis"], "guideline");

    let out = partune(&["recommend", "graphs/widedeep-like.json", "--hw", "hw/two-socket-24.json", "--preset", "tf", "--format", "csv"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "pools,intra_threads,kernel_threads,basis\n2,48,48,preset_tensorflow\n");
}

#[test]
fn simulate_fig2_toy() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let trace_arg = trace.to_str().unwrap();
    let v = json(&[
        "simulate", "graphs/fig2-toy.json", "--pools", "4", "--threads", "1", "--hw", "hw/four-core.json", "--trace", trace_arg,
    ]);
    assert_eq!(v["results"]["makespan"], 5.0);
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("node_id,pool_id,socket_id,start,end\n"));
    assert_eq!(csv.lines().count(), 1 + 9);

    let sync = json(&["simulate", "graphs/fig2-toy.json", "--pools", "4", "--threads", "1", "--hw", "hw/four-core.json", "--mode", "sync"]);
    assert_eq!(sync["results"]["makespan"], 9.0);
}

#[test]
fn reports_are_replayable() {
    for args in [
        &["analyze", "graphs/resnet-like.json"][..],
        &["sweep", "graphs/ncf-like.json", "--hw", "hw/two-socket-24.json", "--compare-presets", "--format", "json"][..],
        &["simulate", "graphs/ncf-like.json", "--hw", "hw/two-socket-24.json", "--pools", "4", "--threads", "12", "--placement", "model"][..],
    ] {
        let a = partune(args);
        let b = partune(args);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn compare_presets_lists_every_row() {
    let v = json(&["sweep", "graphs/inceptionv3-like.json", "--hw", "hw/two-socket-24.json", "--compare-presets"]);
    let labels: Vec<&str> = v["results"]["presets"].as_array().unwrap().iter().map(|p| p["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["guideline", "tensorflow", "intel", "default", "argmin"]);
    let default = &v["results"]["presets"][3];
    assert_eq!(default["status"], "oversubscribed");
    assert!(default["makespan"].is_null());

    let text = partune(&["sweep", "graphs/inceptionv3-like.json", "--hw", "hw/two-socket-24.json", "--compare-presets"]);
    let text = String::from_utf8(text.stdout).unwrap();
    for label in ["guideline", "tensorflow", "intel", "default", "argmin"] {
        assert!(text.contains(label));
    }
}

#[test]
fn sweep_rows_sorted() {
    let v = json(&["sweep", "graphs/chain-5.json", "--hw", "hw/four-core.json", "--max-pools", "2"]);
    let rows = v["results"]["rows"].as_array().unwrap();
    // (1,1..4) and (2,1..2)
    assert_eq!(rows.len(), 6);
    let ms: Vec<f64> = rows.iter().map(|r| r["makespan"].as_f64().unwrap()).collect();
    assert!(ms.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn exit_codes() {
    assert_eq!(partune(&["bogus"]).status.code(), Some(2));
    assert_eq!(partune(&["simulate", "graphs/fig2-toy.json", "--hw", "hw/four-core.json", "--pools", "1"]).status.code(), Some(2));
    assert_eq!(partune(&["analyze", "graphs/missing.json"]).status.code(), Some(1));
    // 3 pools x 3 threads on 8 logical cores.
    let over = partune(&["simulate", "graphs/fig2-toy.json", "--hw", "hw/four-core.json", "--pools", "3", "--threads", "3"]);
    assert_eq!(over.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&over.stderr).contains("over-threading"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("cyclic.json");
    std::fs::write(
        &bad,
        r#"{"name":"c","nodes":[{"id":"a","kind":"MatMul","serial_prep":0,"parallel_prep":0,"flops":1,"bytes":0}],"edges":[["a","a"]]}"#,
    )
    .unwrap();
    let out = partune(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a"));
}

#[test]
fn benches_are_marked_measured() {
    let v = json(&["bench", "threadpool", "--tasks", "500", "--sizes", "1,2"]);
    assert_eq!(v["measured"], true);
    let runs = v["results"]["runs"].as_array().unwrap();
    assert!(runs.iter().all(|r| r["final_counter"] == 500));

    let out = partune(&["bench", "matmul", "--sizes", "64", "--threads", "2", "--trials", "1", "--seed", "3", "--format", "csv"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("size,threads,design,latency_us,speedup\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn bundled_files_exist() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    for name in partune::bundled::graph_names() {
        assert!(root.join("graphs").join(format!("{name}.json")).exists());
    }
}
