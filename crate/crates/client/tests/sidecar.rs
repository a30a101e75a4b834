mod common;

use std::time::Duration;

use common::MockServer;
use drift_client::SidecarEmbedder;
use drift_core::embedding::{assemble_tensor, AssemblyOptions, EmbeddingProvider, EmbeddingVector};
use drift_core::extraction::{AffordanceObject, ParsedScene, ReferenceCondition};
use drift_core::{PrimeId, Temperature, TrialKey};
use serde_json::{json, Value};

const DIM: usize = 4;

/// Vector derived from the text so order can be checked.
fn vector_for(text: &str) -> Vec<f64> {
    let n = text.len() as f64;
    vec![n, 1.0, -n, 0.5]
}

fn healthy(dim: usize) -> MockServer {
    MockServer::start(move |r| match r.path.as_str() {
        "/health" => (
            200,
            json!({"status": "ok", "model_tag": "mini", "dim": dim}).to_string(),
        ),
        "/embed" => {
            let texts = r.json()["texts"].as_array().unwrap().clone();
            if texts.is_empty() {
                return (400, "{}".into());
            }
            let vectors: Vec<Value> = texts.iter().map(|t| json!(vector_for(t.as_str().unwrap()))).collect();
            (200, json!({"vectors": vectors, "model_tag": "mini"}).to_string())
        }
        _ => (404, "{}".into()),
    })
}

fn connect(url: &str, dim: Option<usize>) -> drift_core::Result<SidecarEmbedder> {
    SidecarEmbedder::connect(url, dim, Duration::from_secs(5))
}

#[test]
fn embeds_in_order_and_in_batches() {
    let server = healthy(DIM);
    let sidecar = connect(&server.url, Some(DIM)).unwrap();
    assert_eq!(EmbeddingProvider::<f64>::descriptor(&sidecar).dim, DIM);
    let texts: Vec<String> = (0..300).map(|i| "x".repeat(i + 1)).collect();
    let out: Vec<EmbeddingVector<f64>> = sidecar.embed(&texts).unwrap();
    assert_eq!(out.len(), 300);
    for (t, v) in texts.iter().zip(&out) {
        assert_eq!(v.values, vector_for(t));
        assert_eq!(v.model_tag, "mini");
    }
    let embed_calls = server.recorded().iter().filter(|r| r.path == "/embed").count();
    assert_eq!(embed_calls, 2);
}

#[test]
fn alone_equals_in_batch() {
    let server = healthy(DIM);
    let sidecar = connect(&server.url, None).unwrap();
    let batch: Vec<EmbeddingVector<f64>> = sidecar.embed(&["a".into(), "bbb".into()]).unwrap();
    let alone: Vec<EmbeddingVector<f64>> = sidecar.embed(&["bbb".into()]).unwrap();
    assert_eq!(batch[1], alone[0]);
}

#[test]
fn health_gates_connection() {
    let loading = MockServer::start(|_| (503, "{}".into()));
    assert!(connect(&loading.url, None).is_err());

    let server = healthy(DIM);
    let err = connect(&server.url, Some(384)).unwrap_err();
    assert!(err.to_string().contains("dim 4"), "{err}");

    assert!(connect("http://127.0.0.1:9", None).is_err());
}

#[test]
fn wrong_vector_count_or_dim_is_rejected() {
    let short = MockServer::start(|r| match r.path.as_str() {
        "/health" => (200, json!({"status": "ok", "model_tag": "m", "dim": 2}).to_string()),
        _ => (200, json!({"vectors": [[1.0, 2.0]]}).to_string()),
    });
    let s = connect(&short.url, None).unwrap();
    assert!(EmbeddingProvider::<f64>::embed(&s, &["a".into(), "b".into()]).is_err());

    let wide = MockServer::start(|r| match r.path.as_str() {
        "/health" => (200, json!({"status": "ok", "model_tag": "m", "dim": 2}).to_string()),
        _ => (200, json!({"vectors": [[1.0, 2.0, 3.0]]}).to_string()),
    });
    let s = connect(&wide.url, None).unwrap();
    assert!(EmbeddingProvider::<f64>::embed(&s, &["a".into()]).is_err());
}

#[test]
fn tensor_assembly_through_the_sidecar() {
    let server = healthy(DIM);
    let sidecar = connect(&server.url, Some(DIM)).unwrap();
    let t = Temperature::new(0.7).unwrap();
    let scenes: Vec<ParsedScene> = PrimeId::ALL
        .iter()
        .map(|&p| ParsedScene {
            key: TrialKey {
                image_id: "img".into(),
                prime_id: p,
                seed: 0,
                temperature: t,
            },
            objects: vec![AffordanceObject {
                obj_id: 1,
                name: "cup".into(),
                affordance: "drink".into(),
                reasoning: String::new(),
            }],
            affordance_text: "x".repeat(p.index() + 1),
            missing_optional: false,
        })
        .collect();
    let (tensor, _) = assemble_tensor::<f64, _>(
        &scenes,
        &sidecar,
        ReferenceCondition {
            seed: 0,
            temperature: t,
        },
        AssemblyOptions::default(),
    )
    .unwrap();
    assert_eq!(tensor.shape(), [1, 7, DIM]);
    assert_eq!(tensor.data.fibre(0, 2), vector_for("xxx").as_slice());
    assert_eq!(tensor.model_tag, "mini");
}
