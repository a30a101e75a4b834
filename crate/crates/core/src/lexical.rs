//! Whitespace tokenisation, exact Jaccard similarity and the all-pairs
//! comparison engine.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::corpus::{PrimeId, TrialKey};
use crate::embedding::{cosine, EmbeddingVector};
use crate::error::{Error, Result};
use crate::extraction::ParsedScene;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Object,
}

/// A set of lowercase, non-empty tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSet {
    pub tokens: BTreeSet<String>,
    pub kind: TokenKind,
    pub source_key: Option<TrialKey>,
}

impl TokenSet {
    pub fn new(kind: TokenKind, tokens: impl IntoIterator<Item = String>) -> Self {
        Self {
            tokens: tokens
                .into_iter()
                .map(|t| t.to_lowercase())
                .filter(|t| !t.is_empty())
                .collect(),
            kind,
            source_key: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn with_source(mut self, key: TrialKey) -> Self {
        self.source_key = Some(key);
        self
    }
}

/// Lowercases, splits on runs of whitespace and deduplicates. Punctuation
/// stays attached to its token.
pub fn tokenize(text: &str) -> TokenSet {
    TokenSet::new(
        TokenKind::Word,
        text.to_lowercase().split_whitespace().map(str::to_owned),
    )
}

/// Lowercased, trimmed object names, each kept as one atomic token.
pub fn object_name_set(scene: &ParsedScene) -> TokenSet {
    TokenSet::new(
        TokenKind::Object,
        scene.objects.iter().map(|o| o.name.trim().to_lowercase()),
    )
    .with_source(scene.key.clone())
}

pub fn stopword_filter(ts: &TokenSet, stopwords: &BTreeSet<String>) -> TokenSet {
    TokenSet {
        tokens: ts.tokens.difference(stopwords).cloned().collect(),
        kind: ts.kind,
        source_key: ts.source_key.clone(),
    }
}

const EMBEDDED_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// The built-in English stopword list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(EMBEDDED_STOPWORDS)
}

pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

pub fn read_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

/// Exact Jaccard counts `|A ∩ B|` and `|A ∪ B|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Jaccard {
    pub intersection: usize,
    pub union: usize,
}

impl Jaccard {
    /// Both sets empty; the similarity is defined as 1.
    pub fn is_degenerate(&self) -> bool {
        self.union == 0
    }

    pub fn ratio(&self) -> Ratio<usize> {
        if self.union == 0 {
            Ratio::from_integer(1)
        } else {
            Ratio::new(self.intersection, self.union)
        }
    }

    pub fn value<T: Scalar>(&self) -> T {
        if self.union == 0 {
            T::one()
        } else {
            T::from_usize_lossy(self.intersection) / T::from_usize_lossy(self.union)
        }
    }
}

pub fn jaccard(a: &TokenSet, b: &TokenSet) -> Jaccard {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let intersection = small.tokens.iter().filter(|t| large.tokens.contains(*t)).count();
    Jaccard {
        intersection,
        union: a.len() + b.len() - intersection,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    JaccardWord,
    JaccardObject,
    JaccardStopfiltered,
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::JaccardWord,
        Metric::JaccardObject,
        Metric::JaccardStopfiltered,
        Metric::Cosine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::JaccardWord => "jaccard_word",
            Metric::JaccardObject => "jaccard_object",
            Metric::JaccardStopfiltered => "jaccard_stopfiltered",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "word" | "jaccard_word" => Ok(Metric::JaccardWord),
            "object" | "jaccard_object" => Ok(Metric::JaccardObject),
            "stopfiltered" | "jaccard_stopfiltered" => Ok(Metric::JaccardStopfiltered),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::InvalidInput(format!("unknown metric {other:?}"))),
        }
    }
}

/// One prime-pair comparison for one image under one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSimilarity {
    pub image_id: String,
    pub prime_a: PrimeId,
    pub prime_b: PrimeId,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairTable {
    pub rows: Vec<PairwiseSimilarity>,
    /// Rows whose Jaccard compared two empty sets.
    pub degenerate: usize,
}

impl PairTable {
    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn metrics(&self) -> BTreeSet<Metric> {
        self.rows.iter().map(|r| r.metric).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<PairwiseSimilarity>, _>>()?;
        Ok(Self { rows, degenerate: 0 })
    }
}

/// Inputs for [`all_pairs`] beyond the scenes themselves.
#[derive(Debug, Clone)]
pub struct PairOptions<'a> {
    pub metrics: Vec<Metric>,
    pub stopwords: BTreeSet<String>,
    /// Embedding per trial; required when `Metric::Cosine` is requested.
    pub embeddings: Option<&'a HashMap<TrialKey, EmbeddingVector<f64>>>,
}

impl Default for PairOptions<'_> {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::JaccardWord, Metric::JaccardObject, Metric::JaccardStopfiltered],
            stopwords: default_stopwords(),
            embeddings: None,
        }
    }
}

/// Every unordered prime pair of every image with at least two valid
/// primes, one row per requested metric. Rows are ordered by image, then
/// pair, then metric.
pub fn all_pairs(
    scenes: &BTreeMap<String, BTreeMap<PrimeId, ParsedScene>>,
    options: &PairOptions<'_>,
) -> Result<PairTable> {
    let mut metrics = options.metrics.clone();
    metrics.sort_unstable();
    metrics.dedup();
    if metrics.contains(&Metric::Cosine) && options.embeddings.is_none() {
        return Err(Error::InvalidInput("cosine metric requested without embeddings".into()));
    }

    let mut table = PairTable::default();
    for (image_id, by_prime) in scenes {
        if by_prime.len() < 2 {
            continue;
        }
        let words: Vec<(PrimeId, &ParsedScene, TokenSet)> = by_prime
            .iter()
            .map(|(&p, s)| (p, s, tokenize(&s.affordance_text)))
            .collect();
        for (i, (pa, sa, wa)) in words.iter().enumerate() {
            for (pb, sb, wb) in &words[i + 1..] {
                for &metric in &metrics {
                    let (value, degenerate) = match metric {
                        Metric::JaccardWord => {
                            let j = jaccard(wa, wb);
                            (j.value::<f64>(), j.is_degenerate())
                        }
                        Metric::JaccardObject => {
                            let j = jaccard(&object_name_set(sa), &object_name_set(sb));
                            (j.value::<f64>(), j.is_degenerate())
                        }
                        Metric::JaccardStopfiltered => {
                            let fa = stopword_filter(wa, &options.stopwords);
                            let fb = stopword_filter(wb, &options.stopwords);
                            let j = jaccard(&fa, &fb);
                            (j.value::<f64>(), j.is_degenerate())
                        }
                        Metric::Cosine => {
                            let emb = options.embeddings.expect("checked above");
                            let lookup = |s: &ParsedScene| {
                                emb.get(&s.key)
                                    .ok_or_else(|| Error::Provider(format!("no embedding for {:?}", s.key)))
                            };
                            (cosine(lookup(sa)?, lookup(sb)?)?, false)
                        }
                    };
                    if degenerate {
                        table.degenerate += 1;
                    }
                    table.rows.push(PairwiseSimilarity {
                        image_id: image_id.clone(),
                        prime_a: *pa,
                        prime_b: *pb,
                        metric,
                        value,
                    });
                }
            }
        }
    }
    Ok(table)
}

/// Groups scenes by image and prime, keeping those at the given condition.
pub fn group_by_image<'a>(
    scenes: impl IntoIterator<Item = &'a ParsedScene>,
    keep: impl Fn(&TrialKey) -> bool,
) -> BTreeMap<String, BTreeMap<PrimeId, ParsedScene>> {
    let mut out: BTreeMap<String, BTreeMap<PrimeId, ParsedScene>> = BTreeMap::new();
    for s in scenes {
        if keep(&s.key) {
            out.entry(s.key.image_id.clone())
                .or_default()
                .insert(s.key.prime_id, s.clone());
        }
    }
    out
}
