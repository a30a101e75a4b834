use drift_core::extraction::{parse_scene, strip_fences, ExclusionReason};
use drift_core::inference::ResponseStatus;
use drift_core::{Extraction, PrimeId, RawResponse, Temperature, TrialKey};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    case: String,
    image_id: String,
    status: ResponseStatus,
    text: String,
    label: String,
    names: Option<Vec<String>>,
}

fn load_cases() -> Vec<Case> {
    include_str!("fixtures/extraction_cases.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn raw(image_id: &str, status: ResponseStatus, text: &str) -> RawResponse {
    RawResponse {
        key: TrialKey {
            image_id: image_id.into(),
            prime_id: PrimeId::P0,
            seed: 0,
            temperature: Temperature::new(0.7).unwrap(),
        },
        status,
        text: text.into(),
        latency_ms: 0.0,
        timestamp: "2026-01-01T00:00:00Z".into(),
        error_detail: (status == ResponseStatus::InferenceError).then(|| "timeout".into()),
    }
}

fn label(e: &Extraction) -> &'static str {
    match e {
        Extraction::Parsed(_) => "valid",
        Extraction::Excluded(x) => x.reason.as_str(),
    }
}

#[test]
fn forty_hand_labelled_cases_agree() {
    let cases = load_cases();
    assert_eq!(cases.len(), 40);
    let mut disagreements = Vec::new();
    for c in &cases {
        let got = parse_scene(&raw(&c.image_id, c.status, &c.text));
        if label(&got) != c.label {
            disagreements.push(format!("{}: expected {}, got {}", c.case, c.label, label(&got)));
        }
        if let (Some(names), Extraction::Parsed(s)) = (&c.names, &got) {
            let parsed: Vec<&str> = s.objects.iter().map(|o| o.name.as_str()).collect();
            assert_eq!(&parsed, names, "{}", c.case);
            for n in names {
                assert!(s.affordance_text.contains(n.as_str()), "{}", c.case);
            }
        }
    }
    assert!(disagreements.is_empty(), "{disagreements:#?}");
}

#[test]
fn fixture_covers_every_outcome() {
    let cases = load_cases();
    for l in [
        "valid",
        "inference_error",
        "parse_failure",
        "schema_mismatch",
        "empty_objects",
    ] {
        assert!(cases.iter().filter(|c| c.label == l).count() >= 2, "{l}");
    }
}

#[test]
fn cascade_order_is_fixed() {
    // Each input fails several checks; the earliest stage decides.
    let broken = raw("a", ResponseStatus::InferenceError, "not json");
    assert_eq!(label(&parse_scene(&broken)), "inference_error");
    let empty_wrong_key = raw("a", ResponseStatus::InferenceError, r#"{"items": []}"#);
    assert_eq!(label(&parse_scene(&empty_wrong_key)), "inference_error");
    let bad_and_empty = raw("a", ResponseStatus::Ok, r#"{"objects": [{"name": ""}, {"name": 1}]}"#);
    assert_eq!(label(&parse_scene(&bad_and_empty)), "schema_mismatch");
    let order: Vec<&str> = ExclusionReason::ALL.iter().map(|r| r.as_str()).collect();
    assert_eq!(
        order,
        ["inference_error", "parse_failure", "schema_mismatch", "empty_objects"]
    );
}

#[test]
fn exclusions_keep_the_raw_timestamp() {
    let r = raw("a", ResponseStatus::Ok, "nope");
    let Extraction::Excluded(e) = parse_scene(&r) else {
        panic!()
    };
    assert_eq!(e.timestamp, r.timestamp);
    assert_eq!(e.key, r.key);
}

fn json_like() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z ]{0,12}".prop_map(|name| format!(r#"{{"objects": [{{"name": "{name}", "affordance": "use"}}]}}"#)),
        Just(r#"{"objects": []}"#.to_string()),
        Just(r#"{"items": 1}"#.to_string()),
        "[ -~]{0,30}",
    ]
}

proptest! {
    #[test]
    fn fencing_does_not_change_the_outcome(body in json_like(), tag in prop_oneof![Just(""), Just("json")]) {
        let fenced = format!("```{tag}\n{body}\n```");
        let a = parse_scene(&raw("a", ResponseStatus::Ok, &body));
        let b = parse_scene(&raw("a", ResponseStatus::Ok, &fenced));
        prop_assert_eq!(label(&a), label(&b));
        if let (Extraction::Parsed(x), Extraction::Parsed(y)) = (&a, &b) {
            prop_assert_eq!(x, y);
        }
        prop_assert_eq!(strip_fences(strip_fences(&fenced)), strip_fences(&fenced));
    }
}
