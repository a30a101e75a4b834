//! `drift`: affordance drift measurement pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drift_cli::pipeline::filter_regions;
use drift_cli::Pipeline;
use drift_client::RunOptions;
use drift_core::corpus::KeywordMatch;
use drift_core::synthetic::SyntheticSpec;
use drift_core::tucker::parse_ranks;
use drift_core::{Error, Metric, PrimeId, Result};

/// Environment variable holding the inference endpoint's bearer token.
const API_KEY_VAR: &str = "DRIFT_API_KEY";

#[derive(Parser)]
#[command(
    name = "drift",
    version,
    about = "Measure context-dependent affordance drift in vision-language models"
)]
struct Cli {
    /// Working directory holding every stage's artifacts.
    #[arg(long, global = true, default_value = "work")]
    workdir: PathBuf,

    /// TOML run configuration; defaults to the workdir's saved one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the trial plan from an image directory.
    Plan {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        primes: Option<Vec<PrimeId>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, alias = "temperature", value_delimiter = ',')]
        temperatures: Option<Vec<f64>>,
    },
    /// Query the model for every planned trial.
    Infer {
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        max_tokens: Option<u32>,
        #[arg(long)]
        parallel: Option<usize>,
        /// Skip trials already logged as ok.
        #[arg(long)]
        resume: bool,
    },
    /// Parse the raw log into scenes and exclusions.
    Extract {
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute pairwise prime similarities.
    Metrics {
        #[arg(long)]
        parsed: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<Metric>>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Drift tests, metric correlations and stochastic controls.
    Stats {
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mu0: Option<f64>,
    },
    /// Tucker decomposition with bootstrap stability and rank sweep.
    Tensor {
        #[arg(long, value_parser = parse_ranks)]
        ranks: Option<[usize; 3]>,
        #[arg(long)]
        bootstrap: Option<usize>,
        /// Decompose a saved tensor directory instead of assembling one.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Generate an offline corpus with planted structure.
    Synthetic {
        /// TOML synthetic spec (`texts` and optional `tensor` tables).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render report tables.
    Report {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep region descriptions that mention affordance keywords.
    FilterRegions {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        keywords: Option<PathBuf>,
        /// Match keywords anywhere instead of as whole tokens.
        #[arg(long)]
        substring: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Command::FilterRegions {
        input,
        out,
        keywords,
        substring,
    } = &cli.command
    {
        let mode = if *substring {
            KeywordMatch::Substring
        } else {
            KeywordMatch::Token
        };
        let kept = filter_regions(input, out, keywords.as_deref(), mode)?;
        println!("kept {kept} descriptions -> {}", out.display());
        return Ok(());
    }

    let mut p = Pipeline::open(&cli.workdir, cli.config.as_deref())?;
    let c = &mut p.config;
    match cli.command {
        Command::Plan {
            corpus,
            limit,
            primes,
            seeds,
            temperatures,
        } => {
            c.corpus.dir = corpus.or(c.corpus.dir.take());
            c.corpus.limit = limit.or(c.corpus.limit);
            if let Some(v) = primes {
                c.corpus.primes = v;
            }
            if let Some(v) = seeds {
                c.corpus.seeds = v;
            }
            if let Some(v) = temperatures {
                c.corpus.temperatures = v;
            }
            let plan = p.plan()?;
            println!("planned {} trials -> {}", plan.trials.len(), p.work.plan().display());
        }
        Command::Infer {
            endpoint,
            model,
            max_tokens,
            parallel,
            resume,
        } => {
            let inf = &mut c.inference;
            inf.endpoint_url = endpoint.unwrap_or(std::mem::take(&mut inf.endpoint_url));
            inf.model_id = model.unwrap_or(std::mem::take(&mut inf.model_id));
            inf.max_tokens = max_tokens.unwrap_or(inf.max_tokens);
            inf.parallelism = parallel.unwrap_or(inf.parallelism);
            let options = RunOptions {
                resume,
                api_key: std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty()),
            };
            let s = p.infer(&options)?;
            println!(
                "planned {}, already done {}, ok {}, errors {} -> {}",
                s.planned,
                s.already_done,
                s.ok,
                s.errors,
                p.work.raw_log().display()
            );
        }
        Command::Extract { raw, out } => {
            let raw = raw.unwrap_or_else(|| p.work.raw_log());
            let out = out.unwrap_or_else(|| p.work.parsed());
            let r = p.extract(&raw, &out)?;
            println!(
                "{} attempted, {} valid, {} excluded, {} images with complete coverage -> {}",
                r.attempted,
                r.valid,
                r.failure_count(),
                r.complete_coverage.len(),
                out.display()
            );
        }
        Command::Metrics {
            parsed,
            metrics,
            stopwords,
        } => {
            if let Some(m) = metrics {
                c.metrics.metrics = m;
            }
            c.metrics.stopwords = stopwords.or(c.metrics.stopwords.take());
            let parsed = parsed.unwrap_or_else(|| p.work.parsed());
            let (table, s) = p.metrics(&parsed)?;
            println!(
                "{} rows over {} images ({} degenerate) -> {}",
                table.rows.len(),
                s.images,
                s.degenerate,
                p.work.pairs().display()
            );
        }
        Command::Stats {
            pairs,
            iterations,
            seed,
            mu0,
        } => {
            c.stats.iterations = iterations.unwrap_or(c.stats.iterations);
            c.stats.seed = seed.unwrap_or(c.stats.seed);
            c.stats.mu0 = mu0.unwrap_or(c.stats.mu0);
            let pairs = pairs.unwrap_or_else(|| p.work.pairs());
            let s = p.stats(&pairs)?;
            for d in &s.drift {
                println!("{}: n {} mean {:.4} t {:.2}", d.metric, d.n, d.mean, d.t.statistic);
            }
            for v in &s.variance {
                println!(
                    "T={}: var_ratio {:.2} eta_sq {:.3}",
                    v.temperature, v.var_ratio, v.eta_sq
                );
            }
        }
        Command::Tensor {
            ranks,
            bootstrap,
            input,
        } => {
            c.tensor.ranks = ranks.unwrap_or(c.tensor.ranks);
            c.tensor.bootstrap = bootstrap.unwrap_or(c.tensor.bootstrap);
            let s = p.tensor(input.as_deref())?;
            println!(
                "{:?} at ranks {:?}: explained variance {:.4} after {} iterations -> {}",
                s.shape,
                s.ranks,
                s.explained_variance,
                s.iterations,
                p.work.tensor().display()
            );
        }
        Command::Synthetic { spec, seed } => {
            if let Some(path) = spec {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                c.synthetic =
                    toml::from_str::<SyntheticSpec>(&text).map_err(|e| Error::InvalidInput(format!("spec: {e}")))?;
            }
            if let Some(s) = seed {
                c.synthetic.texts.seed = s;
                if let Some(t) = c.synthetic.tensor.as_mut() {
                    t.seed = s;
                }
            }
            let s = p.synthetic()?;
            println!(
                "{} responses, {} valid -> {}",
                s.responses,
                s.extraction.valid,
                p.work.raw_log().display()
            );
        }
        Command::Report { out } => {
            let out = out.unwrap_or_else(|| p.work.reports());
            let bundle = p.report(&out)?;
            println!("{} report files -> {}", bundle.files.len(), out.display());
        }
        Command::FilterRegions { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
