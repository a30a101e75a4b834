mod common;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Mutex;

use common::MockServer;
use drift_client::{run_plan, RunOptions};
use drift_core::corpus::{build_plan, load_corpus, PrimeId};
use drift_core::inference::{latest_per_key, read_raw_log, ResponseStatus};
use drift_core::{InferenceConfig, TrialPlan};
use serde_json::json;

fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn fixture(n_images: usize) -> (tempfile::TempDir, TrialPlan, BTreeMap<String, PathBuf>) {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    std::fs::create_dir(&images).unwrap();
    for i in 0..n_images {
        std::fs::write(images.join(format!("img{i}.jpg")), [0xff, 0xd8, i as u8]).unwrap();
    }
    let corpus = load_corpus(&images, None).unwrap();
    let plan = build_plan(&corpus, &[PrimeId::P0, PrimeId::P1], &[0], &[0.7]).unwrap();
    let paths = corpus
        .iter()
        .map(|s| (s.image_id.clone(), s.image_path.clone()))
        .collect();
    (dir, plan, paths)
}

fn config(url: &str) -> InferenceConfig {
    InferenceConfig {
        endpoint_url: url.into(),
        model_id: "test-model".into(),
        backoff_base_secs: 0.001,
        timeout_secs: 10.0,
        ..InferenceConfig::default()
    }
}

#[test]
fn every_trial_is_logged_with_request_shape() {
    let server = MockServer::start(|_| (200, completion(r#"{"objects": []}"#)));
    let (dir, plan, images) = fixture(2);
    let log = dir.path().join("raw/responses.jsonl");
    let opts = RunOptions {
        api_key: Some("secret".into()),
        ..Default::default()
    };
    let summary = run_plan(&plan, &images, &config(&server.url), &log, &opts).unwrap();
    assert_eq!((summary.planned, summary.ok, summary.errors), (4, 4, 0));
    let records = read_raw_log(&log).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.status == ResponseStatus::Ok));

    let reqs = server.recorded();
    assert_eq!(reqs.len(), 4);
    for r in &reqs {
        assert_eq!(r.method, "POST");
        assert_eq!(r.path, "/v1/chat/completions");
        assert_eq!(r.header("authorization"), Some("Bearer secret"));
        let body = r.json();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["max_tokens"], 512);
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["seed"], 0);
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
    }
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let calls: Mutex<HashMap<String, usize>> = Mutex::new(HashMap::new());
    let server = MockServer::start(move |r| {
        let mut calls = calls.lock().unwrap();
        let n = calls.entry(r.body.clone()).or_default();
        *n += 1;
        if *n <= 2 {
            (503, "{}".into())
        } else {
            (200, completion("fine"))
        }
    });
    let (dir, plan, images) = fixture(1);
    let log = dir.path().join("raw.jsonl");
    let summary = run_plan(&plan, &images, &config(&server.url), &log, &RunOptions::default()).unwrap();
    assert_eq!(summary.ok, 2);
    assert_eq!(server.recorded().len(), 6);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_| (400, r#"{"error": "bad"}"#.into()));
    let (dir, plan, images) = fixture(1);
    let log = dir.path().join("raw.jsonl");
    let summary = run_plan(&plan, &images, &config(&server.url), &log, &RunOptions::default()).unwrap();
    assert_eq!(summary.errors, 2);
    assert_eq!(server.recorded().len(), 2);
    let records = read_raw_log(&log).unwrap();
    assert!(records[0].error_detail.as_deref().unwrap().contains("400"));
}

#[test]
fn retries_give_up_after_the_limit() {
    let server = MockServer::start(|_| (500, "{}".into()));
    let (dir, plan, images) = fixture(1);
    let log = dir.path().join("raw.jsonl");
    let cfg = InferenceConfig {
        max_retries: 2,
        ..config(&server.url)
    };
    let summary = run_plan(&plan, &images, &cfg, &log, &RunOptions::default()).unwrap();
    assert_eq!(summary.errors, 2);
    assert_eq!(server.recorded().len(), 6);
    let records = read_raw_log(&log).unwrap();
    assert!(records.iter().all(|r| r
        .error_detail
        .as_deref()
        .unwrap()
        .starts_with("gave up after 3 attempts")));
}

#[test]
fn unreachable_endpoint_becomes_error_records() {
    let (dir, plan, images) = fixture(1);
    let log = dir.path().join("raw.jsonl");
    let cfg = InferenceConfig {
        max_retries: 0,
        ..config("http://127.0.0.1:9")
    };
    let summary = run_plan(&plan, &images, &cfg, &log, &RunOptions::default()).unwrap();
    assert_eq!(summary.errors, 2);
}

#[test]
fn resume_skips_ok_keys_and_retries_errors() {
    let fail_first = Mutex::new(true);
    let server = MockServer::start(move |_| {
        let mut f = fail_first.lock().unwrap();
        if *f {
            *f = false;
            (400, "{}".into())
        } else {
            (200, completion("ok"))
        }
    });
    let (dir, plan, images) = fixture(2);
    let log = dir.path().join("raw.jsonl");
    let cfg = InferenceConfig {
        parallelism: 1,
        ..config(&server.url)
    };
    let first = run_plan(&plan, &images, &cfg, &log, &RunOptions::default()).unwrap();
    assert_eq!((first.ok, first.errors), (3, 1));

    assert!(run_plan(&plan, &images, &cfg, &log, &RunOptions::default()).is_err());

    let resume = RunOptions {
        resume: true,
        ..Default::default()
    };
    let second = run_plan(&plan, &images, &cfg, &log, &resume).unwrap();
    assert_eq!((second.already_done, second.ok, second.errors), (3, 1, 0));
    assert_eq!(server.recorded().len(), 5);
    let latest = latest_per_key(read_raw_log(&log).unwrap());
    assert_eq!(latest.len(), 4);
    assert!(latest.iter().all(|r| r.status == ResponseStatus::Ok));

    let third = run_plan(&plan, &images, &cfg, &log, &resume).unwrap();
    assert_eq!(third.already_done, 4);
    assert_eq!(server.recorded().len(), 5);
}

#[test]
fn parallel_workers_write_whole_lines() {
    let server = MockServer::start(|r| {
        let body = r.json();
        (200, completion(&format!("seed {}", body["seed"])))
    });
    let (dir, plan, images) = fixture(6);
    let log = dir.path().join("raw.jsonl");
    let cfg = InferenceConfig {
        parallelism: 4,
        ..config(&server.url)
    };
    let summary = run_plan(&plan, &images, &cfg, &log, &RunOptions::default()).unwrap();
    assert_eq!(summary.ok, 12);
    let records = read_raw_log(&log).unwrap();
    let mut keys: Vec<_> = records.iter().map(|r| r.key.clone()).collect();
    keys.sort();
    assert_eq!(keys, plan.trials);
}
