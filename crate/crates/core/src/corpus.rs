//! Context primes, the scene corpus, trial plans and the region-description
//! keyword filter.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Identifier of one of the seven context primes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrimeId {
    P0,
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

impl PrimeId {
    pub const ALL: [PrimeId; 7] = [
        PrimeId::P0,
        PrimeId::P1,
        PrimeId::P2,
        PrimeId::P3,
        PrimeId::P4,
        PrimeId::P5,
        PrimeId::P6,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        PRIMES[self.index()].label
    }

    pub fn prime(self) -> &'static ContextPrime {
        &PRIMES[self.index()]
    }
}

impl fmt::Display for PrimeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.index())
    }
}

impl FromStr for PrimeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let idx = s
            .strip_prefix('P')
            .or_else(|| s.strip_prefix('p'))
            .and_then(|d| d.parse::<usize>().ok());
        idx.and_then(Self::from_index)
            .or_else(|| PRIMES.iter().find(|p| p.label.eq_ignore_ascii_case(s)).map(|p| p.id))
            .ok_or_else(|| Error::InvalidInput(format!("unknown prime id {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextPrime {
    pub id: PrimeId,
    pub label: &'static str,
    pub prompt_text: &'static str,
}

/// The registered primes, in id order.
pub static PRIMES: [ContextPrime; 7] = [
    ContextPrime {
        id: PrimeId::P0,
        label: "Neutral",
        prompt_text: "Analyze this image objectively. List the 3 most prominent objects, their geometric properties, and standard functions.",
    },
    ContextPrime {
        id: PrimeId::P1,
        label: "Chef",
        prompt_text: "You are a professional chef examining this scene for cooking-related possibilities. Identify the 3 most critical items for food preparation and list their affordances (what you can do with them).",
    },
    ContextPrime {
        id: PrimeId::P2,
        label: "Security",
        prompt_text: "You are a security professional assessing this space for vulnerabilities and tactical assets. Identify 3 objects that represent risks or defensive tools and their affordances.",
    },
    ContextPrime {
        id: PrimeId::P3,
        label: "Child",
        prompt_text: "Imagine you are a 4-year-old child. Identify 3 interesting things to play with in this scene and how you would use them.",
    },
    ContextPrime {
        id: PrimeId::P4,
        label: "Mobility",
        prompt_text: "You are navigating this space in a wheelchair. Identify 3 objects that either obstruct your path or enable your movement.",
    },
    ContextPrime {
        id: PrimeId::P5,
        label: "Urgent",
        prompt_text: "EMERGENCY: You have 30 seconds to find a tool for immediate survival. What do you see first and how do you use it?",
    },
    ContextPrime {
        id: PrimeId::P6,
        label: "Leisure",
        prompt_text: "You are casually exploring this space with absolutely no time pressure. What catches your eye for pure enjoyment or relaxation?",
    },
];

pub fn primes() -> &'static [ContextPrime] {
    &PRIMES
}

/// Sampling temperature, totally ordered and hashable by bit pattern.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&value) {
            return Err(Error::InvalidInput(format!("temperature {value} outside [0, 2]")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl PartialEq for Temperature {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Temperature {}

impl Hash for Temperature {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl PartialOrd for Temperature {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Temperature {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One image file in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub image_id: String,
    pub image_path: PathBuf,
    pub byte_len: u64,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

/// Lists the JPEG/PNG files of `dir` sorted by file name, optionally keeping
/// only the first `limit`.
pub fn load_corpus(dir: &Path, limit: Option<usize>) -> Result<Vec<SceneRecord>> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !is_image {
            continue;
        }
        let Ok(meta) = std::fs::metadata(&path) else {
            continue;
        };
        if !meta.is_file() || std::fs::File::open(&path).is_err() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        records.push(SceneRecord {
            image_id: stem.to_string(),
            image_path: path.clone(),
            byte_len: meta.len(),
        });
    }
    records.sort_by(|a, b| a.image_path.file_name().cmp(&b.image_path.file_name()));
    let mut seen = BTreeSet::new();
    for r in &records {
        if !seen.insert(r.image_id.clone()) {
            return Err(Error::InvalidInput(format!(
                "duplicate image id {:?} in {}",
                r.image_id,
                dir.display()
            )));
        }
    }
    if let Some(limit) = limit {
        records.truncate(limit);
    }
    if records.is_empty() {
        return Err(Error::NoImages(dir.to_path_buf()));
    }
    Ok(records)
}

/// Identifies one inference: an image under a prime at a seed and temperature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialKey {
    pub image_id: String,
    pub prime_id: PrimeId,
    pub seed: u64,
    pub temperature: Temperature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub trials: Vec<TrialKey>,
    pub config_hash: String,
}

/// Cartesian product of images × primes × seeds × temperatures, ordered by
/// image id, then prime, then seed, then temperature (all ascending,
/// duplicates removed).
pub fn build_plan(corpus: &[SceneRecord], primes: &[PrimeId], seeds: &[u64], temps: &[f64]) -> Result<TrialPlan> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    if primes.is_empty() {
        return Err(Error::InvalidInput("empty prime list".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidInput("empty seed list".into()));
    }
    if temps.is_empty() {
        return Err(Error::InvalidInput("empty temperature list".into()));
    }
    let mut temps = temps.iter().map(|&t| Temperature::new(t)).collect::<Result<Vec<_>>>()?;
    temps.sort_unstable();
    temps.dedup();
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();

    let mut images: Vec<&str> = corpus.iter().map(|s| s.image_id.as_str()).collect();
    images.sort_unstable();
    let mut primes = primes.to_vec();
    primes.sort_unstable();
    primes.dedup();

    let mut trials = Vec::with_capacity(images.len() * primes.len() * seeds.len() * temps.len());
    for image in &images {
        for &prime_id in &primes {
            for &seed in &seeds {
                for &temperature in &temps {
                    trials.push(TrialKey {
                        image_id: image.to_string(),
                        prime_id,
                        seed,
                        temperature,
                    });
                }
            }
        }
    }

    let canonical = serde_json::json!({
        "images": images,
        "primes": primes,
        "seeds": seeds,
        "temperatures": temps,
    });
    let config_hash = sha256_hex(canonical.to_string().as_bytes());
    Ok(TrialPlan { trials, config_hash })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl TrialPlan {
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.trials {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a plan back; the hash is recomputed over the file contents.
    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut trials = Vec::new();
        for (n, line) in bytes.split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            trials.push(serde_json::from_slice(line).map_err(|e| Error::Malformed {
                line: n + 1,
                detail: e.to_string(),
            })?);
        }
        Ok(Self {
            trials,
            config_hash: sha256_hex(&bytes),
        })
    }
}

/// Whole-token keywords used by default for the region-description filter.
pub const DEFAULT_AFFORDANCE_KEYWORDS: [&str; 8] = ["walk", "table", "chair", "stand", "sit", "desk", "eat", "bed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordMatch {
    /// Keyword must equal a whitespace-delimited token of the lowercased text.
    #[default]
    Token,
    /// Keyword may appear anywhere in the lowercased text.
    Substring,
}

/// Keeps the descriptions mentioning at least one keyword.
pub fn filter_affordance_regions(descriptions: &[String], keywords: &[String], mode: KeywordMatch) -> Vec<String> {
    descriptions
        .iter()
        .filter(|d| {
            let lower = d.to_lowercase();
            match mode {
                KeywordMatch::Token => {
                    let tokens: BTreeSet<&str> = lower.split_whitespace().collect();
                    keywords.iter().any(|k| tokens.contains(k.as_str()))
                }
                KeywordMatch::Substring => keywords.iter().any(|k| lower.contains(k.as_str())),
            }
        })
        .cloned()
        .collect()
}

/// Reads a newline-delimited keyword file; blank lines and `#` comments are
/// skipped and keywords are lowercased.
pub fn read_keyword_file(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let word = line.trim();
        if word.is_empty() || word.starts_with('#') {
            continue;
        }
        out.push(word.to_lowercase());
    }
    Ok(out)
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for l in lines {
        writeln!(f, "{l}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
