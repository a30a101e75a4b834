//! Turns raw model output into parsed scenes or typed exclusions.
//!
//! The cascade is fixed: an inference error is reported first, then JSON
//! parse failures, then schema mismatches, then empty object lists.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{PrimeId, Temperature, TrialKey};
use crate::error::{Error, Result};
use crate::inference::{RawResponse, ResponseStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffordanceObject {
    pub obj_id: i64,
    pub name: String,
    pub affordance: String,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedScene {
    pub key: TrialKey,
    pub objects: Vec<AffordanceObject>,
    pub affordance_text: String,
    /// Set when an object lacked `affordance` or `reasoning` (or carried a
    /// non-string value there).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing_optional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    InferenceError,
    ParseFailure,
    SchemaMismatch,
    EmptyObjects,
}

impl ExclusionReason {
    pub const ALL: [ExclusionReason; 4] = [
        ExclusionReason::InferenceError,
        ExclusionReason::ParseFailure,
        ExclusionReason::SchemaMismatch,
        ExclusionReason::EmptyObjects,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::InferenceError => "inference_error",
            ExclusionReason::ParseFailure => "parse_failure",
            ExclusionReason::SchemaMismatch => "schema_mismatch",
            ExclusionReason::EmptyObjects => "empty_objects",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRecord {
    pub key: TrialKey,
    pub reason: ExclusionReason,
    pub detail: String,
    /// Timestamp of the originating response, so extraction stays a pure
    /// function of the raw log.
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extraction {
    Parsed(ParsedScene),
    Excluded(ExclusionRecord),
}

impl Extraction {
    pub fn key(&self) -> &TrialKey {
        match self {
            Extraction::Parsed(p) => &p.key,
            Extraction::Excluded(e) => &e.key,
        }
    }
}

/// Removes a leading fence line (three backticks plus an optional language
/// tag) and a trailing fence, then trims surrounding whitespace.
pub fn strip_fences(text: &str) -> &str {
    let mut s = text.trim();
    if let Some(rest) = s.strip_prefix("```") {
        let tag_len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '+'))
            .unwrap_or(rest.len());
        let after_tag = &rest[tag_len..];
        // A tag must be followed by whitespace or the payload itself.
        let tag_ends =
            after_tag.is_empty() || after_tag.starts_with(char::is_whitespace) || after_tag.starts_with(['{', '[']);
        s = if tag_len > 0 && !tag_ends { rest } else { after_tag };
        s = s.trim_start();
    }
    if let Some(rest) = s.strip_suffix("```") {
        s = rest;
    }
    s.trim()
}

fn optional_text(obj: &serde_json::Map<String, Value>, field: &str, missing: &mut bool) -> String {
    match obj.get(field) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => {
            *missing = true;
            String::new()
        }
        Some(other) => {
            *missing = true;
            other.to_string()
        }
    }
}

/// Classifies one raw response.
pub fn parse_scene(raw: &RawResponse) -> Extraction {
    let exclude = |reason, detail: String| {
        Extraction::Excluded(ExclusionRecord {
            key: raw.key.clone(),
            reason,
            detail,
            timestamp: raw.timestamp.clone(),
        })
    };

    if raw.status == ResponseStatus::InferenceError {
        let detail = raw.error_detail.clone().unwrap_or_else(|| "inference error".into());
        return exclude(ExclusionReason::InferenceError, detail);
    }

    let body = strip_fences(&raw.text);
    let value: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => return exclude(ExclusionReason::ParseFailure, e.to_string()),
    };

    let Some(objects) = value.as_object().and_then(|o| o.get("objects")) else {
        return exclude(ExclusionReason::SchemaMismatch, "missing `objects` key".into());
    };
    let Some(items) = objects.as_array() else {
        return exclude(ExclusionReason::SchemaMismatch, "`objects` is not a list".into());
    };

    let mut parsed = Vec::with_capacity(items.len());
    let mut missing_optional = false;
    for (i, item) in items.iter().enumerate() {
        let Some(obj) = item.as_object() else {
            return exclude(
                ExclusionReason::SchemaMismatch,
                format!("objects[{i}] is not an object"),
            );
        };
        let name = match obj.get("name") {
            Some(Value::String(s)) => s.trim().to_lowercase(),
            Some(_) => {
                return exclude(
                    ExclusionReason::SchemaMismatch,
                    format!("objects[{i}].name is not a string"),
                )
            }
            None => return exclude(ExclusionReason::SchemaMismatch, format!("objects[{i}] has no name")),
        };
        if name.is_empty() {
            // Blank names are not valid entries; they count towards emptiness.
            continue;
        }
        let obj_id = obj
            .get("id")
            .and_then(|v| v.as_i64().or_else(|| v.as_str().and_then(|s| s.trim().parse().ok())))
            .unwrap_or(i as i64 + 1);
        parsed.push(AffordanceObject {
            obj_id,
            name,
            affordance: optional_text(obj, "affordance", &mut missing_optional),
            reasoning: optional_text(obj, "reasoning", &mut missing_optional),
        });
    }

    if parsed.is_empty() {
        let detail = if items.is_empty() {
            "`objects` is empty".to_string()
        } else {
            "no object with a non-blank name".to_string()
        };
        return exclude(ExclusionReason::EmptyObjects, detail);
    }

    let affordance_text = affordance_text(&parsed);
    Extraction::Parsed(ParsedScene {
        key: raw.key.clone(),
        objects: parsed,
        affordance_text,
        missing_optional,
    })
}

/// Space-joined `name affordance reasoning` of every object, lowercased.
pub fn affordance_text(objects: &[AffordanceObject]) -> String {
    objects
        .iter()
        .flat_map(|o| [o.name.as_str(), o.affordance.as_str(), o.reasoning.as_str()])
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Which seed/temperature is treated as the primary experimental condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceCondition {
    pub seed: u64,
    pub temperature: Temperature,
}

impl ReferenceCondition {
    pub fn matches(&self, key: &TrialKey) -> bool {
        key.seed == self.seed && key.temperature == self.temperature
    }

    /// Temperature 0.7 when present, otherwise the lowest; the lowest seed.
    pub fn infer(keys: impl IntoIterator<Item = TrialKey>) -> Option<Self> {
        let mut seeds = BTreeSet::new();
        let mut temps = BTreeSet::new();
        for k in keys {
            seeds.insert(k.seed);
            temps.insert(k.temperature);
        }
        let preferred = Temperature::new(0.7).ok()?;
        let temperature = if temps.contains(&preferred) {
            preferred
        } else {
            *temps.iter().next()?
        };
        Some(Self {
            seed: *seeds.iter().next()?,
            temperature,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub attempted: usize,
    pub valid: usize,
    pub failures: BTreeMap<String, usize>,
    pub failures_by_prime: BTreeMap<String, BTreeMap<String, usize>>,
    pub valid_by_prime: BTreeMap<String, usize>,
    pub missing_optional_fields: usize,
    pub reference: Option<ReferenceCondition>,
    pub images: usize,
    /// Images with every registered prime valid at the reference condition.
    pub complete_coverage: Vec<String>,
}

impl ExtractionReport {
    pub fn failure_count(&self) -> usize {
        self.failures.values().sum()
    }
}

pub fn extraction_report(records: &[Extraction], reference: Option<ReferenceCondition>) -> ExtractionReport {
    let mut report = ExtractionReport {
        attempted: records.len(),
        reference,
        ..Default::default()
    };
    for reason in ExclusionReason::ALL {
        report.failures.insert(reason.as_str().into(), 0);
    }
    for p in PrimeId::ALL {
        report.valid_by_prime.insert(p.to_string(), 0);
        report.failures_by_prime.insert(
            p.to_string(),
            ExclusionReason::ALL
                .iter()
                .map(|r| (r.as_str().to_string(), 0))
                .collect(),
        );
    }

    let mut images = BTreeSet::new();
    let mut reference_primes: BTreeMap<&str, BTreeSet<PrimeId>> = BTreeMap::new();
    for r in records {
        let key = r.key();
        images.insert(key.image_id.as_str());
        match r {
            Extraction::Parsed(p) => {
                report.valid += 1;
                *report.valid_by_prime.entry(key.prime_id.to_string()).or_default() += 1;
                if p.missing_optional {
                    report.missing_optional_fields += 1;
                }
                if reference.is_none_or(|c| c.matches(key)) {
                    reference_primes
                        .entry(key.image_id.as_str())
                        .or_default()
                        .insert(key.prime_id);
                }
            }
            Extraction::Excluded(e) => {
                *report.failures.entry(e.reason.as_str().into()).or_default() += 1;
                *report
                    .failures_by_prime
                    .entry(key.prime_id.to_string())
                    .or_default()
                    .entry(e.reason.as_str().into())
                    .or_default() += 1;
            }
        }
    }
    report.images = images.len();
    report.complete_coverage = reference_primes
        .into_iter()
        .filter(|(_, primes)| primes.len() == PrimeId::ALL.len())
        .map(|(image, _)| image.to_string())
        .collect();
    report
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                line: n + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(prime: PrimeId, text: &str) -> RawResponse {
        RawResponse::ok(
            TrialKey {
                image_id: "img".into(),
                prime_id: prime,
                seed: 0,
                temperature: Temperature::new(0.7).unwrap(),
            },
            text.into(),
            1.0,
            "2025-01-01T00:00:00.000Z".into(),
        )
        .unwrap()
    }

    fn reason(e: &Extraction) -> Option<ExclusionReason> {
        match e {
            Extraction::Excluded(x) => Some(x.reason),
            Extraction::Parsed(_) => None,
        }
    }

    #[test]
    fn strip_fence_cases() {
        assert_eq!(strip_fences("```json\n{\"objects\":[]}\n```"), "{\"objects\":[]}");
        assert_eq!(strip_fences("{}"), "{}");
        assert_eq!(strip_fences("``` \n{\"a\":1}\n``` "), "{\"a\":1}");
        assert_eq!(strip_fences("```{\"a\":1}```"), "{\"a\":1}");
        assert_eq!(strip_fences("```json{\"a\":1}```"), "{\"a\":1}");
        assert_eq!(strip_fences("  ```JSON\r\n[1]\r\n```\n"), "[1]");
    }

    #[test]
    fn strip_is_idempotent_on_fenced_input() {
        for s in ["```json\n{\"a\":1}\n```", "```\n[]\n```", "```js {} ```"] {
            let once = strip_fences(s);
            assert_eq!(strip_fences(once), once);
        }
    }

    #[test]
    fn parses_listing_example() {
        let text = r#"{
  "objects": [
    {"id": 1, "name": "dining table",
     "affordance": "providing a flat surface for eating",
     "reasoning": "The table is rectangular..."}
  ]
}"#;
        let Extraction::Parsed(scene) = parse_scene(&raw(PrimeId::P0, text)) else {
            panic!("expected parse");
        };
        assert_eq!(scene.objects.len(), 1);
        assert_eq!(scene.objects[0].name, "dining table");
        assert_eq!(scene.objects[0].obj_id, 1);
        assert_eq!(
            scene.affordance_text,
            "dining table providing a flat surface for eating the table is rectangular..."
        );
        assert!(!scene.missing_optional);
    }

    #[test]
    fn cascade_reasons() {
        assert_eq!(
            reason(&parse_scene(&raw(PrimeId::P0, "not json"))),
            Some(ExclusionReason::ParseFailure)
        );
        assert_eq!(
            reason(&parse_scene(&raw(PrimeId::P0, "{\"items\":[]}"))),
            Some(ExclusionReason::SchemaMismatch)
        );
        assert_eq!(
            reason(&parse_scene(&raw(PrimeId::P0, "{\"objects\":[]}"))),
            Some(ExclusionReason::EmptyObjects)
        );
        assert_eq!(
            reason(&parse_scene(&raw(PrimeId::P0, "{\"objects\":[{\"name\":5}]}"))),
            Some(ExclusionReason::SchemaMismatch)
        );
        assert_eq!(
            reason(&parse_scene(&raw(PrimeId::P0, "{\"objects\":{\"name\":\"x\"}}"))),
            Some(ExclusionReason::SchemaMismatch)
        );
        assert_eq!(
            reason(&parse_scene(&raw(PrimeId::P0, "{\"objects\":[{\"name\":\"  \"}]}"))),
            Some(ExclusionReason::EmptyObjects)
        );
        let mut err = raw(PrimeId::P0, "{\"objects\":[{\"name\":\"x\"}]}");
        err.status = ResponseStatus::InferenceError;
        err.error_detail = Some("timeout".into());
        assert_eq!(reason(&parse_scene(&err)), Some(ExclusionReason::InferenceError));
    }

    #[test]
    fn missing_optional_fields_become_empty() {
        let Extraction::Parsed(scene) = parse_scene(&raw(PrimeId::P0, "{\"objects\":[{\"name\":\" Chair \"}]}")) else {
            panic!()
        };
        assert!(scene.missing_optional);
        assert_eq!(scene.objects[0].name, "chair");
        assert_eq!(scene.objects[0].affordance, "");
        assert!(scene.affordance_text.contains("chair"));
    }

    #[test]
    fn fenced_and_unfenced_agree() {
        let body = "{\"objects\":[{\"id\":2,\"name\":\"Knife\",\"affordance\":\"Cut\",\"reasoning\":\"sharp\"}]}";
        let fenced = format!("```json\n{body}\n```");
        let a = parse_scene(&raw(PrimeId::P1, body));
        let b = parse_scene(&raw(PrimeId::P1, &fenced));
        let c = parse_scene(&raw(PrimeId::P1, strip_fences(&fenced)));
        assert_eq!(a, b);
        assert_eq!(b, c);
        let Extraction::Parsed(s) = a else { panic!() };
        assert_eq!(s.affordance_text, "knife cut sharp");
    }

    #[test]
    fn duplicate_names_kept_in_text() {
        let body = r#"{"objects":[{"name":"cup","affordance":"a","reasoning":"b"},{"name":"Cup","affordance":"c","reasoning":"d"}]}"#;
        let Extraction::Parsed(s) = parse_scene(&raw(PrimeId::P0, body)) else {
            panic!()
        };
        assert_eq!(s.affordance_text, "cup a b cup c d");
    }

    #[test]
    fn report_counts_and_coverage() {
        let good = "{\"objects\":[{\"name\":\"x\",\"affordance\":\"y\",\"reasoning\":\"z\"}]}";
        let mut records: Vec<Extraction> = PrimeId::ALL.iter().map(|&p| parse_scene(&raw(p, good))).collect();
        let mut other: Vec<Extraction> = PrimeId::ALL
            .iter()
            .map(|&p| {
                let mut r = raw(p, if p == PrimeId::P3 { "oops" } else { good });
                r.key.image_id = "img2".into();
                parse_scene(&r)
            })
            .collect();
        records.append(&mut other);
        let reference = ReferenceCondition::infer(records.iter().map(|r| r.key().clone()));
        let report = extraction_report(&records, reference);
        assert_eq!(report.attempted, 14);
        assert_eq!(report.valid, 13);
        assert_eq!(report.failures["parse_failure"], 1);
        assert_eq!(report.failures_by_prime["P3"]["parse_failure"], 1);
        assert_eq!(report.complete_coverage, vec!["img".to_string()]);

        let all_good: Vec<Extraction> = PrimeId::ALL.iter().map(|&p| parse_scene(&raw(p, good))).collect();
        let report = extraction_report(&all_good, None);
        assert_eq!(report.failure_count(), 0);
    }
}
