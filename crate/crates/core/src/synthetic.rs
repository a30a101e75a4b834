//! Ground-truth generators: Tucker tensors with a planted context factor and
//! raw response logs whose wording depends on the prime in a known way.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{sha256_hex, PrimeId, Temperature, TrialKey};
use crate::embedding::AffordanceTensor;
use crate::error::{Error, Result};
use crate::inference::RawResponse;
use crate::linalg::{orthonormalize_columns, Matrix};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;
use crate::tucker::{canonicalize_signs, expand_all, explained_variance, TuckerModel};

/// Default context loadings: a near-uniform salience factor, a factor
/// isolating Chef, and one opposing Child against Mobility.
pub const DEFAULT_CONTEXT_PATTERN: [[f64; 3]; 7] = [
    [0.41, -0.12, -0.07],
    [0.26, 0.95, 0.09],
    [0.42, -0.16, -0.21],
    [0.37, -0.13, 0.72],
    [0.41, 0.03, -0.60],
    [0.38, -0.15, -0.06],
    [0.37, -0.10, 0.24],
];

fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut text = seed.to_string();
    for p in parts {
        text.push('/');
        text.push_str(p);
    }
    let digest = sha256_hex(text.as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

fn rng_for(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedSpec {
    pub n_images: usize,
    pub d: usize,
    pub image_rank: usize,
    pub embed_rank: usize,
    /// Seven rows of target loadings; columns are orthonormalised in order.
    pub context_factors: Vec<Vec<f64>>,
    /// Relative energy of each context dimension in the core; must be
    /// strictly decreasing so the dimensions are identifiable.
    pub context_scales: Vec<f64>,
    /// Noise standard deviation relative to a unit-RMS signal.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n_images: 360,
            d: 384,
            image_rank: 10,
            embed_rank: 10,
            context_factors: DEFAULT_CONTEXT_PATTERN.iter().map(|r| r.to_vec()).collect(),
            context_scales: vec![3.0, 2.0, 1.0],
            noise_sigma: 0.0,
            seed: 42,
        }
    }
}

impl PlantedSpec {
    pub fn ranks(&self) -> [usize; 3] {
        [self.image_rank, self.context_rank(), self.embed_rank]
    }

    pub fn context_rank(&self) -> usize {
        self.context_factors.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let r2 = self.context_rank();
        if self.context_factors.len() != PrimeId::ALL.len() {
            return Err(Error::InvalidInput("context_factors needs one row per prime".into()));
        }
        if r2 == 0 || self.context_factors.iter().any(|r| r.len() != r2) {
            return Err(Error::InvalidInput(
                "context_factors rows must share a positive width".into(),
            ));
        }
        if self.context_scales.len() != r2 {
            return Err(Error::InvalidInput("one context scale per context dimension".into()));
        }
        let gt = |a: f64, b: f64| a.partial_cmp(&b) == Some(Ordering::Greater);
        if self.context_scales.windows(2).any(|w| !gt(w[0], w[1])) || self.context_scales.iter().any(|&s| !gt(s, 0.0)) {
            return Err(Error::InvalidInput(
                "context scales must be positive and strictly decreasing".into(),
            ));
        }
        if self.image_rank == 0 || self.image_rank > self.n_images || self.embed_rank == 0 || self.embed_rank > self.d {
            return Err(Error::InvalidInput(
                "image/embed ranks must lie in 1..=dimension".into(),
            ));
        }
        if r2 > self.image_rank * self.embed_rank {
            return Err(Error::InvalidInput(
                "context rank exceeds image_rank × embed_rank".into(),
            ));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidInput("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// The target pattern with orthonormal columns.
    pub fn context_factor<T: Scalar>(&self) -> Matrix<T> {
        let r2 = self.context_rank();
        orthonormalize_columns(&Matrix::from_fn(7, r2, |r, c| T::lit(self.context_factors[r][c])))
    }
}

/// Planted tensor plus the exact model it was built from.
#[derive(Debug, Clone)]
pub struct PlantedTensor<T> {
    pub tensor: AffordanceTensor<T>,
    pub truth: TuckerModel<T>,
}

fn random_orthonormal<T: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    orthonormalize_columns(&Matrix::from_fn(rows, cols, |_, _| T::lit(StandardNormal.sample(rng))))
}

/// `T = G ×₁ U₁ ×₂ U_context ×₃ U₃ + σ·N(0, 1)` with the signal scaled to
/// unit RMS. The core's context unfolding has orthogonal rows with norms
/// proportional to `context_scales`.
pub fn generate_tensor<T: Scalar>(spec: &PlantedSpec) -> Result<PlantedTensor<T>> {
    spec.validate()?;
    let [r1, r2, r3] = spec.ranks();
    let dims = [spec.n_images, PrimeId::ALL.len(), spec.d];
    let mut rng = rng_for(spec.seed, &["tensor"]);

    let u_image = random_orthonormal::<T>(dims[0], r1, &mut rng);
    let u_embed = random_orthonormal::<T>(dims[2], r3, &mut rng);
    let u_context = spec.context_factor::<T>();

    // Rows of the mode-1 unfolding: orthonormal, then scaled.
    let rows = random_orthonormal::<T>(r1 * r3, r2, &mut rng);
    let mut core = Tensor3::zeros([r1, r2, r3]);
    for j in 0..r2 {
        let s = T::lit(spec.context_scales[j]);
        for i in 0..r1 {
            for k in 0..r3 {
                core.set(i, j, k, rows[(i * r3 + k, j)] * s);
            }
        }
    }
    let n_entries = T::from_usize_lossy(dims.iter().product());
    let scale = n_entries.sqrt() / core.frobenius_norm();
    core.as_mut_slice().iter_mut().for_each(|x| *x *= scale);

    let mut factors = [u_image, u_context, u_embed];
    canonicalize_signs(&mut core, &mut factors);
    let signal = expand_all(&core, &factors)?;

    let mut data = signal;
    if spec.noise_sigma > 0.0 {
        let sigma = T::lit(spec.noise_sigma);
        let mut noise_rng = rng_for(spec.seed, &["noise"]);
        for x in data.as_mut_slice() {
            *x += sigma * T::lit(StandardNormal.sample(&mut noise_rng));
        }
    }
    let recon = expand_all(&core, &factors)?;
    let ev = explained_variance(&data, &recon)?;
    Ok(PlantedTensor {
        tensor: AffordanceTensor {
            data,
            image_index: (0..dims[0]).map(|i| format!("synthetic_{i:06}")).collect(),
            prime_index: PrimeId::ALL.to_vec(),
            model_tag: format!("planted-s{}", spec.seed),
        },
        truth: TuckerModel {
            core,
            factors,
            ranks: [r1, r2, r3],
            explained_variance: ev,
            iterations: 0,
            converged: true,
            init_explained_variance: ev,
        },
    })
}

/// One sampling condition of the text generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureNoise {
    pub temperature: f64,
    /// Probability that a word is resampled independently for each seed.
    pub seed_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextSpec {
    pub n_images: usize,
    pub seeds: Vec<u64>,
    pub conditions: Vec<TemperatureNoise>,
    /// Seven rows of loadings steering which factor pools a prime draws from.
    pub context_factors: Vec<Vec<f64>>,
    /// Weight of the image's own scene vocabulary against the factor pools.
    pub shared_weight: f64,
    pub pool_size: usize,
    pub scene_vocab: usize,
    pub objects_per_scene: usize,
    pub words_per_object: usize,
    /// Share of slots filled with a common function word.
    pub stopword_rate: f64,
    /// Share of responses turned into malformed output.
    pub failure_rate: f64,
    pub seed: u64,
}

impl Default for TextSpec {
    fn default() -> Self {
        Self {
            n_images: 24,
            seeds: vec![0, 1, 2],
            conditions: vec![
                TemperatureNoise {
                    temperature: 0.0,
                    seed_noise: 0.02,
                },
                TemperatureNoise {
                    temperature: 0.3,
                    seed_noise: 0.08,
                },
                TemperatureNoise {
                    temperature: 0.7,
                    seed_noise: 0.12,
                },
                TemperatureNoise {
                    temperature: 1.0,
                    seed_noise: 0.15,
                },
            ],
            context_factors: DEFAULT_CONTEXT_PATTERN.iter().map(|r| r.to_vec()).collect(),
            shared_weight: 0.2,
            pool_size: 20,
            scene_vocab: 30,
            objects_per_scene: 6,
            words_per_object: 6,
            stopword_rate: 0.15,
            failure_rate: 0.0,
            seed: 42,
        }
    }
}

const FUNCTION_WORDS: [&str; 8] = ["the", "a", "to", "with", "on", "for", "of", "and"];

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ru", "te", "san", "vo", "pel", "dri", "ne", "xa", "bu", "gor", "fi", "tam", "zel",
];

/// A pronounceable pseudo-word unique to `(tag, index)`.
fn pseudo_word(tag: usize, index: usize) -> String {
    let mut n = tag * 7919 + index * 104_729 + 1;
    let mut w = String::new();
    for _ in 0..3 {
        w.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
    }
    format!("{w}{tag}x{index}")
}

impl TextSpec {
    pub fn validate(&self) -> Result<()> {
        if self.context_factors.len() != PrimeId::ALL.len() || self.context_factors.iter().any(|r| r.is_empty()) {
            return Err(Error::InvalidInput("context_factors needs seven non-empty rows".into()));
        }
        let width = self.context_factors[0].len();
        if self.context_factors.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput("context_factors rows differ in width".into()));
        }
        if self.n_images == 0 || self.seeds.is_empty() || self.conditions.is_empty() {
            return Err(Error::InvalidInput("need images, seeds and conditions".into()));
        }
        if self.pool_size == 0 || self.scene_vocab == 0 || self.objects_per_scene == 0 || self.words_per_object < 3 {
            return Err(Error::InvalidInput(
                "pools must be non-empty and objects need ≥ 3 words".into(),
            ));
        }
        for p in [self.shared_weight, self.stopword_rate, self.failure_rate] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
            }
        }
        for c in &self.conditions {
            Temperature::new(c.temperature)?;
            if !(0.0..=1.0).contains(&c.seed_noise) {
                return Err(Error::InvalidInput("seed_noise outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn image_ids(&self) -> Vec<String> {
        (0..self.n_images).map(|i| format!("synthetic_{i:06}")).collect()
    }

    /// Factor pool index for `(dimension, sign)`.
    fn pool_tag(dim: usize, negative: bool) -> usize {
        1 + 2 * dim + usize::from(negative)
    }

    fn prime_weights(&self, prime: PrimeId) -> Vec<(usize, f64)> {
        self.context_factors[prime.index()]
            .iter()
            .enumerate()
            .map(|(c, &l)| (Self::pool_tag(c, l < 0.0), l * l))
            .collect()
    }

    /// One word for a slot: stopword, scene word or factor-pool word.
    fn draw_word(&self, rng: &mut ChaCha8Rng, image: usize, weights: &[(usize, f64)]) -> String {
        if rng.random::<f64>() < self.stopword_rate {
            return FUNCTION_WORDS[rng.random_range(0..FUNCTION_WORDS.len())].to_string();
        }
        if rng.random::<f64>() < self.shared_weight {
            // Scene vocabulary: tag 0, offset per image.
            return pseudo_word(0, image * self.scene_vocab + rng.random_range(0..self.scene_vocab));
        }
        let total: f64 = weights.iter().map(|w| w.1).sum();
        let mut pick = rng.random::<f64>() * total;
        let mut tag = weights.last().map_or(1, |w| w.0);
        for &(t, w) in weights {
            if pick < w {
                tag = t;
                break;
            }
            pick -= w;
        }
        pseudo_word(tag, rng.random_range(0..self.pool_size))
    }

    fn base_words(&self, image: usize, prime: PrimeId) -> Vec<String> {
        let mut rng = rng_for(self.seed, &["base", &image.to_string(), &prime.to_string()]);
        let weights = self.prime_weights(prime);
        (0..self.objects_per_scene * self.words_per_object)
            .map(|_| self.draw_word(&mut rng, image, &weights))
            .collect()
    }
}

fn render_objects(words: &[String], per_object: usize) -> serde_json::Value {
    let objects: Vec<serde_json::Value> = words
        .chunks(per_object)
        .enumerate()
        .map(|(i, w)| {
            let split = 1 + (w.len() - 1) / 2;
            json!({
                "id": i + 1,
                "name": w[0],
                "affordance": w[1..split].join(" "),
                "reasoning": w[split..].join(" "),
            })
        })
        .collect();
    json!({ "objects": objects })
}

/// Raw responses for every (image, prime, seed, condition), in key order.
/// Timestamps are synthetic so the output is byte-stable.
pub fn generate_texts(spec: &TextSpec) -> Result<Vec<RawResponse>> {
    spec.validate()?;
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let mut conditions = spec.conditions.clone();
    conditions.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));

    let mut out = Vec::new();
    for (i, image_id) in spec.image_ids().into_iter().enumerate() {
        for prime in PrimeId::ALL {
            let base = spec.base_words(i, prime);
            let weights = spec.prime_weights(prime);
            for &seed in &seeds {
                for cond in &conditions {
                    let temperature = Temperature::new(cond.temperature)?;
                    let key = TrialKey {
                        image_id: image_id.clone(),
                        prime_id: prime,
                        seed,
                        temperature,
                    };
                    let mut rng = rng_for(
                        spec.seed,
                        &[
                            "sample",
                            &image_id,
                            &prime.to_string(),
                            &seed.to_string(),
                            &temperature.to_string(),
                        ],
                    );
                    let words: Vec<String> = base
                        .iter()
                        .map(|w| {
                            if rng.random::<f64>() < cond.seed_noise {
                                spec.draw_word(&mut rng, i, &weights)
                            } else {
                                w.clone()
                            }
                        })
                        .collect();
                    let n = out.len();
                    let timestamp = format!("2000-01-01T00:00:00.{:03}Z", n % 1000);
                    let latency = 100.0 + (n % 17) as f64;
                    let failure = rng.random::<f64>() < spec.failure_rate;
                    let record = if failure {
                        match rng.random_range(0..4u8) {
                            0 => RawResponse::error(key, "synthetic timeout", latency, timestamp),
                            1 => RawResponse::ok(key, "{\"objects\": [".into(), latency, timestamp)?,
                            2 => RawResponse::ok(key, "{\"items\": []}".into(), latency, timestamp)?,
                            _ => RawResponse::ok(key, "{\"objects\": []}".into(), latency, timestamp)?,
                        }
                    } else {
                        let body = render_objects(&words, spec.words_per_object);
                        let text = if n % 3 == 0 {
                            format!("```json\n{}\n```", serde_json::to_string_pretty(&body)?)
                        } else {
                            serde_json::to_string(&body)?
                        };
                        RawResponse::ok(key, text, latency, timestamp)?
                    };
                    out.push(record);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SyntheticSpec {
    pub texts: TextSpec,
    pub tensor: Option<PlantedSpec>,
}
