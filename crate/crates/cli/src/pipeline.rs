//! Stage orchestration over a working directory.
//!
//! Layout under the workdir:
//!
//! ```text
//! run_config.toml       configuration used by the last stage (hash in run_config.sha256)
//! plan.jsonl            trial plan
//! raw/responses.jsonl   append-only inference log
//! parsed/               scenes.jsonl, exclusions.jsonl, extraction.json
//! pairs/                pairs.csv, metrics.json, stats.json
//! tensor/               tensor.f32 + tensor.json, model/, stability.json, rank_sweep.json, summary.json
//! reports/              rendered tables (.csv and .txt), histograms, summary.txt
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use drift_client::{run_plan, RunOptions, RunSummary};
use drift_core::corpus::{
    build_plan, filter_affordance_regions, load_corpus, read_keyword_file, sha256_hex, write_lines, KeywordMatch,
    DEFAULT_AFFORDANCE_KEYWORDS,
};
use drift_core::embedding::{assemble_tensor, embed_scenes, AffordanceTensor, AssemblyOptions, AssemblyReport};
use drift_core::extraction::{
    extraction_report, parse_scene, read_jsonl, write_jsonl, ExclusionRecord, ExtractionReport,
};
use drift_core::inference::{append_raw, latest_per_key, read_raw_log};
use drift_core::lexical::{all_pairs, default_stopwords, group_by_image, read_stopwords, PairOptions};
use drift_core::report::{
    correlation_table, decomposition_table, drift_table, extraction_table, histogram, loadings_table, rank_sweep_table,
    stability_table, variance_table, Provenance, ReportBundle, HISTOGRAM_BINS,
};
use drift_core::stats::{
    metric_correlations, summarize_metric, variance_decomposition, CorrelationMatrix, MetricSummary, StatsParams,
};
use drift_core::synthetic::{generate_tensor, generate_texts};
use drift_core::tucker::{bootstrap_stability, hooi, rank_sweep, RankSweepResult, TuckerModel};
use drift_core::{
    Error, Metric, PairTable, ParsedScene, PrimeId, ReferenceCondition, Result, StabilityReport64, Temperature,
    TrialPlan, VarianceDecomposition64,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Paths of every artifact inside a working directory.
#[derive(Debug, Clone)]
pub struct Workdir {
    pub root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("run_config.toml")
    }
    pub fn config_hash(&self) -> PathBuf {
        self.root.join("run_config.sha256")
    }
    pub fn plan(&self) -> PathBuf {
        self.root.join("plan.jsonl")
    }
    pub fn raw_log(&self) -> PathBuf {
        self.root.join("raw/responses.jsonl")
    }
    pub fn parsed(&self) -> PathBuf {
        self.root.join("parsed")
    }
    pub fn pairs_dir(&self) -> PathBuf {
        self.root.join("pairs")
    }
    pub fn pairs(&self) -> PathBuf {
        self.pairs_dir().join("pairs.csv")
    }
    pub fn stats(&self) -> PathBuf {
        self.pairs_dir().join("stats.json")
    }
    pub fn tensor(&self) -> PathBuf {
        self.root.join("tensor")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

/// Files written by the extract stage inside its output directory.
pub const SCENES_FILE: &str = "scenes.jsonl";
pub const EXCLUSIONS_FILE: &str = "exclusions.jsonl";
pub const EXTRACTION_FILE: &str = "extraction.json";

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            stage: stage.into(),
            path: path.to_path_buf(),
        })
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Output of the metrics stage besides the pair table itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub reference: ReferenceCondition,
    pub images: usize,
    pub rows: BTreeMap<String, usize>,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsOutput {
    pub params: StatsParams,
    pub drift: Vec<MetricSummary>,
    pub correlations: Option<CorrelationMatrix>,
    pub variance: Vec<VarianceDecomposition64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSummary {
    pub shape: [usize; 3],
    pub prime_index: Vec<PrimeId>,
    pub model_tag: String,
    pub ranks: [usize; 3],
    pub explained_variance: f64,
    pub init_explained_variance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub variance_shares: Vec<f64>,
    pub excluded_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSummary {
    pub responses: usize,
    pub extraction: ExtractionReport,
    pub planted_tensor: Option<[usize; 3]>,
}

/// A run configuration bound to a working directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub work: Workdir,
    pub config: RunConfig,
}

impl Pipeline {
    /// Uses `config_path` when given, else the workdir's saved configuration,
    /// else defaults.
    pub fn open(workdir: impl Into<PathBuf>, config_path: Option<&Path>) -> Result<Self> {
        let work = Workdir::new(workdir);
        let config = match config_path {
            Some(p) => RunConfig::load(p)?,
            None if work.config().exists() => RunConfig::load(&work.config())?,
            None => RunConfig::default(),
        };
        Ok(Self { work, config })
    }

    pub fn with_config(workdir: impl Into<PathBuf>, config: RunConfig) -> Self {
        Self {
            work: Workdir::new(workdir),
            config,
        }
    }

    /// Validates the configuration and records it, with its hash, in the
    /// workdir.
    pub fn persist_config(&self) -> Result<String> {
        self.config.validate()?;
        std::fs::create_dir_all(&self.work.root).map_err(|e| Error::io(&self.work.root, e))?;
        let text = self.config.to_toml()?;
        let hash = sha256_hex(text.as_bytes());
        std::fs::write(self.work.config(), &text).map_err(|e| Error::io(self.work.config(), e))?;
        std::fs::write(self.work.config_hash(), format!("{hash}\n"))
            .map_err(|e| Error::io(self.work.config_hash(), e))?;
        Ok(hash)
    }

    fn corpus_dir(&self) -> Result<&Path> {
        self.config
            .corpus
            .dir
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("no corpus directory configured (use --corpus)".into()))
    }

    pub fn plan(&self) -> Result<TrialPlan> {
        self.persist_config()?;
        let c = &self.config.corpus;
        let corpus = load_corpus(self.corpus_dir()?, c.limit)?;
        let plan = build_plan(&corpus, &c.primes, &c.seeds, &c.temperatures)?;
        plan.write_jsonl(&self.work.plan())?;
        Ok(plan)
    }

    pub fn infer(&self, options: &RunOptions) -> Result<RunSummary> {
        self.persist_config()?;
        require(&self.work.plan(), "plan")?;
        let plan = TrialPlan::read_jsonl(&self.work.plan())?;
        let corpus = load_corpus(self.corpus_dir()?, None)?;
        let images = corpus.into_iter().map(|s| (s.image_id, s.image_path)).collect();
        run_plan(&plan, &images, &self.config.inference, &self.work.raw_log(), options)
    }

    /// Parses every logged response into `out`; the latest attempt per key
    /// wins and output is sorted by key.
    pub fn extract(&self, raw: &Path, out: &Path) -> Result<ExtractionReport> {
        self.persist_config()?;
        if !raw.exists() {
            return Err(Error::MissingArtifact {
                stage: "infer (or synthetic)".into(),
                path: raw.to_path_buf(),
            });
        }
        let records: Vec<_> = latest_per_key(read_raw_log(raw)?).iter().map(parse_scene).collect();
        let mut scenes = Vec::new();
        let mut exclusions: Vec<&ExclusionRecord> = Vec::new();
        for r in &records {
            match r {
                drift_core::Extraction::Parsed(s) => scenes.push(s),
                drift_core::Extraction::Excluded(e) => exclusions.push(e),
            }
        }
        let reference = self
            .config
            .reference
            .or_else(|| ReferenceCondition::infer(scenes.iter().map(|s| s.key.clone())));
        let report = extraction_report(&records, reference);
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_jsonl(&out.join(SCENES_FILE), &scenes)?;
        write_jsonl(&out.join(EXCLUSIONS_FILE), &exclusions)?;
        write_json(&out.join(EXTRACTION_FILE), &report)?;
        Ok(report)
    }

    fn load_scenes(&self, parsed: &Path) -> Result<Vec<ParsedScene>> {
        let path = parsed.join(SCENES_FILE);
        require(&path, "extract")?;
        read_jsonl(&path)
    }

    fn reference_for(&self, scenes: &[ParsedScene]) -> Result<ReferenceCondition> {
        self.config
            .reference
            .or_else(|| ReferenceCondition::infer(scenes.iter().map(|s| s.key.clone())))
            .ok_or_else(|| Error::InvalidInput("no parsed scenes to analyse".into()))
    }

    /// Pairwise prime similarities at the reference condition.
    pub fn metrics(&self, parsed: &Path) -> Result<(PairTable, MetricsSummary)> {
        self.persist_config()?;
        let scenes = self.load_scenes(parsed)?;
        let reference = self.reference_for(&scenes)?;
        let grouped = group_by_image(&scenes, |k| reference.matches(k));
        let stopwords = match &self.config.metrics.stopwords {
            Some(p) => read_stopwords(p)?,
            None => default_stopwords(),
        };
        let metrics = self.config.metrics.metrics.clone();
        let embeddings = if metrics.contains(&Metric::Cosine) {
            let provider = self.config.embedder.provider()?;
            let refs: Vec<&ParsedScene> = scenes.iter().filter(|s| reference.matches(&s.key)).collect();
            Some(embed_scenes(&refs, provider.as_ref(), 256)?)
        } else {
            None
        };
        let options = PairOptions {
            metrics,
            stopwords,
            embeddings: embeddings.as_ref(),
        };
        let table = all_pairs(&grouped, &options)?;
        let mut rows = BTreeMap::new();
        for r in &table.rows {
            *rows.entry(r.metric.to_string()).or_insert(0) += 1;
        }
        let summary = MetricsSummary {
            reference,
            images: grouped.values().filter(|p| p.len() >= 2).count(),
            rows,
            degenerate: table.degenerate,
        };
        create_parent(&self.work.pairs())?;
        table.write_csv(&self.work.pairs())?;
        write_json(&self.work.pairs_dir().join("metrics.json"), &summary)?;
        Ok((table, summary))
    }

    /// Drift tests per metric, metric correlations and, when the parsed
    /// scenes span several seeds, the within/cross-prime decomposition.
    pub fn stats(&self, pairs: &Path) -> Result<StatsOutput> {
        self.persist_config()?;
        require(pairs, "metrics")?;
        let table = PairTable::read_csv(pairs)?;
        let params = self.config.stats;
        let drift = table
            .metrics()
            .into_iter()
            .map(|m| summarize_metric(m, &table.values(m), &params))
            .collect::<Result<Vec<_>>>()?;
        let correlations = if table.metrics().len() >= 2 {
            metric_correlations(&table).ok()
        } else {
            None
        };
        let variance = if self.work.parsed().join(SCENES_FILE).exists() {
            self.variance_rows(&self.load_scenes(&self.work.parsed())?)?
        } else {
            Vec::new()
        };
        let out = StatsOutput {
            params,
            drift,
            correlations,
            variance,
        };
        write_json(&self.work.stats(), &out)?;
        Ok(out)
    }

    fn variance_rows(&self, scenes: &[ParsedScene]) -> Result<Vec<VarianceDecomposition64>> {
        let mut seeds: BTreeMap<Temperature, BTreeSet<u64>> = BTreeMap::new();
        for s in scenes {
            seeds.entry(s.key.temperature).or_default().insert(s.key.seed);
        }
        if seeds.values().all(|s| s.len() < 2) {
            return Ok(Vec::new());
        }
        let provider = self.config.embedder.provider()?;
        let mut rows = Vec::new();
        for (&t, s) in &seeds {
            if s.len() < 2 {
                continue;
            }
            let at_t: Vec<&ParsedScene> = scenes.iter().filter(|x| x.key.temperature == t).collect();
            let embeddings = embed_scenes(&at_t, provider.as_ref(), 256)?;
            rows.push(variance_decomposition(&embeddings, t)?);
        }
        Ok(rows)
    }

    /// Assembles (or loads) the affordance tensor, fits the Tucker model and
    /// runs the bootstrap and rank sweep.
    pub fn tensor(&self, input: Option<&Path>) -> Result<TensorSummary> {
        self.persist_config()?;
        let dir = self.work.tensor();
        let (tensor, assembly) = match input {
            Some(p) => {
                require(&p.join("tensor.json"), "tensor (or synthetic)")?;
                (AffordanceTensor::<f64>::load(p)?, AssemblyReport::default())
            }
            None => {
                let scenes = self.load_scenes(&self.work.parsed())?;
                let reference = self.reference_for(&scenes)?;
                let provider = self.config.embedder.provider()?;
                let options = AssemblyOptions {
                    normalize: self.config.tensor.normalize,
                    center_mode: self.config.tensor.center_mode,
                };
                assemble_tensor(&scenes, provider.as_ref(), reference, options)?
            }
        };
        tensor.save(&dir)?;
        write_json(&dir.join("assembly.json"), &assembly)?;

        let tc = &self.config.tensor;
        let model = hooi(&tensor.data, tc.ranks, &tc.hooi)?;
        model.save(&dir.join("model"))?;
        let shares = model.factor_variance_shares()?;
        if tc.bootstrap > 0 {
            let stability = bootstrap_stability(&tensor.data, tc.ranks, &tc.bootstrap_options())?;
            write_json(&dir.join("stability.json"), &stability)?;
        } else {
            remove_if_exists(&dir.join("stability.json"))?;
        }
        let dims = tensor.shape();
        let sweep_ranks: Vec<[usize; 3]> = tc
            .sweep
            .iter()
            .copied()
            .filter(|r| r.iter().zip(&dims).all(|(r, d)| r <= d))
            .collect();
        if sweep_ranks.is_empty() {
            remove_if_exists(&dir.join("rank_sweep.json"))?;
        } else {
            let sweep = rank_sweep(&tensor.data, &sweep_ranks, &tc.hooi)?;
            write_json(&dir.join("rank_sweep.json"), &sweep)?;
        }
        let summary = TensorSummary {
            shape: dims,
            prime_index: tensor.prime_index.clone(),
            model_tag: tensor.model_tag.clone(),
            ranks: model.ranks,
            explained_variance: model.explained_variance,
            init_explained_variance: model.init_explained_variance,
            iterations: model.iterations,
            converged: model.converged,
            variance_shares: shares,
            excluded_images: assembly.excluded.len(),
        };
        write_json(&dir.join("summary.json"), &summary)?;
        Ok(summary)
    }

    /// Writes a generated response log, extracts it, and optionally writes a
    /// planted tensor with its ground-truth model under `tensor/planted`.
    pub fn synthetic(&self) -> Result<SyntheticSummary> {
        self.persist_config()?;
        let spec = &self.config.synthetic;
        let responses = generate_texts(&spec.texts)?;
        let raw = self.work.raw_log();
        create_parent(&raw)?;
        let file = File::create(&raw).map_err(|e| Error::io(&raw, e))?;
        let mut w = BufWriter::new(file);
        for r in &responses {
            append_raw(&mut w, r)?;
        }
        drop(w);
        let extraction = self.extract(&raw, &self.work.parsed())?;
        let planted_tensor = match &spec.tensor {
            Some(p) => {
                let planted = generate_tensor::<f64>(p)?;
                let dir = self.work.tensor().join("planted");
                planted.tensor.save(&dir)?;
                planted.truth.save(&dir.join("truth"))?;
                Some(planted.tensor.shape())
            }
            None => None,
        };
        Ok(SyntheticSummary {
            responses: responses.len(),
            extraction,
            planted_tensor,
        })
    }

    /// Renders every available table into `out`. Pair metrics and stats are
    /// required; extraction and tensor tables are added when present.
    pub fn report(&self, out: &Path) -> Result<ReportBundle> {
        let config_hash = self.persist_config()?;
        let w = &self.work;
        require(&w.pairs(), "metrics")?;
        require(&w.stats(), "stats")?;

        let mut inputs: Vec<(&str, PathBuf)> = vec![("pairs/pairs.csv", w.pairs()), ("pairs/stats.json", w.stats())];
        let extraction_path = w.parsed().join(EXTRACTION_FILE);
        let tensor_dir = w.tensor();
        let optional = [
            ("parsed/extraction.json", extraction_path.clone()),
            ("tensor/summary.json", tensor_dir.join("summary.json")),
            ("tensor/model/model.json", tensor_dir.join("model/model.json")),
            ("tensor/model/core.f64", tensor_dir.join("model/core.f64")),
            ("tensor/model/u_context.f64", tensor_dir.join("model/u_context.f64")),
            ("tensor/stability.json", tensor_dir.join("stability.json")),
            ("tensor/rank_sweep.json", tensor_dir.join("rank_sweep.json")),
        ];
        inputs.extend(optional.into_iter().filter(|(_, p)| p.exists()));
        let mut provenance = Provenance {
            config_hash,
            inputs: BTreeMap::new(),
        };
        for (name, path) in &inputs {
            provenance.inputs.insert((*name).into(), file_digest(path)?);
        }

        let mut bundle = ReportBundle::default();
        let stats: StatsOutput = read_json(&w.stats())?;
        bundle.add_table("drift", &drift_table(&stats.drift, stats.params.mu0), &provenance)?;
        if !stats.variance.is_empty() {
            bundle.add_table("variance", &variance_table(&stats.variance), &provenance)?;
        }
        if let Some(c) = &stats.correlations {
            bundle.add_table("correlation", &correlation_table(c), &provenance)?;
        }
        let pairs = PairTable::read_csv(&w.pairs())?;
        for m in pairs.metrics() {
            let h = histogram(&pairs.values(m), HISTOGRAM_BINS, 0.0, 1.0)?;
            let csv = h.table(&format!("Distribution of {m}")).to_csv()?;
            bundle
                .files
                .insert(format!("hist_{m}.csv"), provenance.header("#") + &csv);
        }
        if extraction_path.exists() {
            let r: ExtractionReport = read_json(&extraction_path)?;
            bundle.add_table("extraction", &extraction_table(&r), &provenance)?;
        }
        if tensor_dir.join("summary.json").exists() {
            let summary: TensorSummary = read_json(&tensor_dir.join("summary.json"))?;
            let model = TuckerModel::<f64>::load(&tensor_dir.join("model"))?;
            bundle.add_table(
                "decomposition",
                &decomposition_table(&model, &summary.variance_shares),
                &provenance,
            )?;
            let title = format!("Context factor loadings, ranks {:?}", model.ranks);
            bundle.add_table(
                "loadings",
                &loadings_table(&model.context_loadings(), &summary.prime_index, &title),
                &provenance,
            )?;
            if tensor_dir.join("stability.json").exists() {
                let s: StabilityReport64 = read_json(&tensor_dir.join("stability.json"))?;
                bundle.add_table("stability", &stability_table(&s, &summary.prime_index), &provenance)?;
            }
            if tensor_dir.join("rank_sweep.json").exists() {
                let r: RankSweepResult<f64> = read_json(&tensor_dir.join("rank_sweep.json"))?;
                bundle.add_table("rank_sweep", &rank_sweep_table(&r), &provenance)?;
            }
        }
        let summary = bundle.summary_text(&provenance);
        bundle.files.insert("summary.txt".into(), summary);
        bundle.write(out)?;
        Ok(bundle)
    }

    /// The offline path: synthetic, metrics, stats, tensor, report.
    pub fn run_offline(&self) -> Result<ReportBundle> {
        self.synthetic()?;
        self.metrics(&self.work.parsed())?;
        self.stats(&self.work.pairs())?;
        self.tensor(None)?;
        self.report(&self.work.reports())
    }
}

fn remove_if_exists(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

/// Keeps the region descriptions in `input` (one per line) that mention an
/// affordance keyword; returns the number kept.
pub fn filter_regions(input: &Path, output: &Path, keywords: Option<&Path>, mode: KeywordMatch) -> Result<usize> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let descriptions: Vec<String> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(String::from)
        .collect();
    let keywords = match keywords {
        Some(p) => read_keyword_file(p)?,
        None => DEFAULT_AFFORDANCE_KEYWORDS.iter().map(|k| k.to_string()).collect(),
    };
    let kept = filter_affordance_regions(&descriptions, &keywords, mode);
    create_parent(output)?;
    write_lines(output, &kept)?;
    Ok(kept.len())
}
