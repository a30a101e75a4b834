//! Run configuration: one TOML document covering every stage.

use std::path::{Path, PathBuf};
use std::time::Duration;

use drift_client::SidecarEmbedder;
use drift_core::corpus::sha256_hex;
use drift_core::embedding::{EmbeddingProvider, FallbackEmbedder, PrecomputedEmbeddings};
use drift_core::extraction::ReferenceCondition;
use drift_core::lexical::Metric;
use drift_core::stats::StatsParams;
use drift_core::synthetic::SyntheticSpec;
use drift_core::tucker::{BootstrapOptions, HooiOptions};
use drift_core::{Error, InferenceConfig, PrimeId, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub dir: Option<PathBuf>,
    pub limit: Option<usize>,
    pub primes: Vec<PrimeId>,
    pub seeds: Vec<u64>,
    pub temperatures: Vec<f64>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            dir: None,
            limit: None,
            primes: PrimeId::ALL.to_vec(),
            seeds: vec![0],
            temperatures: vec![0.7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub metrics: Vec<Metric>,
    /// Newline-delimited stopword list replacing the built-in one.
    pub stopwords: Option<PathBuf>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::JaccardWord, Metric::JaccardObject, Metric::JaccardStopfiltered],
            stopwords: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    Fallback {
        dim: usize,
        seed: u64,
    },
    Sidecar {
        url: String,
        dim: Option<usize>,
        timeout_secs: f64,
    },
    Precomputed {
        path: PathBuf,
        model_tag: String,
    },
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        let f = FallbackEmbedder::default();
        EmbedderConfig::Fallback {
            dim: f.dim,
            seed: f.seed,
        }
    }
}

impl EmbedderConfig {
    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider<f64>>> {
        Ok(match self {
            EmbedderConfig::Fallback { dim, seed } => Box::new(FallbackEmbedder::new(*dim, *seed)),
            EmbedderConfig::Sidecar { url, dim, timeout_secs } => Box::new(SidecarEmbedder::connect(
                url,
                *dim,
                Duration::from_secs_f64(*timeout_secs),
            )?),
            EmbedderConfig::Precomputed { path, model_tag } => {
                Box::new(PrecomputedEmbeddings::load(path, model_tag.clone())?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TensorConfig {
    pub ranks: [usize; 3],
    pub bootstrap: usize,
    pub bootstrap_seed: u64,
    pub phi_threshold: f64,
    pub level: f64,
    pub normalize: bool,
    pub center_mode: Option<usize>,
    /// Rank triples for the sweep; empty skips it.
    pub sweep: Vec<[usize; 3]>,
    pub hooi: HooiOptions,
}

impl Default for TensorConfig {
    fn default() -> Self {
        let b = BootstrapOptions::default();
        Self {
            ranks: [10, 3, 10],
            bootstrap: b.iterations,
            bootstrap_seed: b.seed,
            phi_threshold: b.phi_threshold,
            level: b.level,
            normalize: false,
            center_mode: None,
            sweep: vec![[5, 3, 5], [10, 3, 10], [15, 3, 15], [20, 3, 20]],
            hooi: HooiOptions::default(),
        }
    }
}

impl TensorConfig {
    pub fn bootstrap_options(&self) -> BootstrapOptions {
        BootstrapOptions {
            iterations: self.bootstrap,
            seed: self.bootstrap_seed,
            level: self.level,
            phi_threshold: self.phi_threshold,
            hooi: self.hooi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub inference: InferenceConfig,
    /// Seed and temperature analysed by the metrics and tensor stages;
    /// inferred from the parsed scenes when absent.
    pub reference: Option<ReferenceCondition>,
    pub metrics: MetricsConfig,
    pub stats: StatsParams,
    pub embedder: EmbedderConfig,
    pub tensor: TensorConfig,
    pub synthetic: SyntheticSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml()?.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        if c.primes.is_empty() || c.seeds.is_empty() || c.temperatures.is_empty() {
            return Err(Error::InvalidInput(
                "corpus needs at least one prime, seed and temperature".into(),
            ));
        }
        if c.temperatures.iter().any(|t| !(0.0..=2.0).contains(t)) {
            return Err(Error::InvalidInput("temperatures must lie in [0, 2]".into()));
        }
        self.inference.validate()?;
        if self.metrics.metrics.is_empty() {
            return Err(Error::InvalidInput("no metrics selected".into()));
        }
        let s = &self.stats;
        if !(0.0..1.0).contains(&s.level) || s.level <= 0.0 || s.iterations == 0 {
            return Err(Error::InvalidInput(
                "stats level must be in (0, 1) with iterations > 0".into(),
            ));
        }
        let t = &self.tensor;
        if t.ranks.contains(&0) {
            return Err(Error::InvalidInput("tensor ranks must be positive".into()));
        }
        if t.center_mode.is_some_and(|m| m > 2) {
            return Err(Error::InvalidInput("center_mode must be 0, 1 or 2".into()));
        }
        if let EmbedderConfig::Fallback { dim: 0, .. } = self.embedder {
            return Err(Error::InvalidInput("embedding dim must be positive".into()));
        }
        self.synthetic.texts.validate()?;
        if let Some(p) = &self.synthetic.tensor {
            p.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
        c.validate().unwrap();
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c =
            RunConfig::from_toml("[tensor]\nranks = [4, 2, 4]\n[embedder]\nkind = \"fallback\"\ndim = 16\nseed = 1\n")
                .unwrap();
        assert_eq!(c.tensor.ranks, [4, 2, 4]);
        assert_eq!(c.tensor.bootstrap, 1000);
        assert_eq!(c.embedder, EmbedderConfig::Fallback { dim: 16, seed: 1 });
        assert_eq!(c.corpus.primes.len(), 7);
    }

    #[test]
    fn hash_tracks_content() {
        let mut c = RunConfig::default();
        let h = c.hash().unwrap();
        c.stats.seed = 7;
        assert_ne!(c.hash().unwrap(), h);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = RunConfig::default();
        c.corpus.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.tensor.ranks = [0, 3, 10];
        assert!(c.validate().is_err());
        assert!(RunConfig::from_toml("[stats]\nmu0 = \"x\"").is_err());
    }
}
