//! Embedding vectors, the provider abstraction and assembly of the
//! images × primes × embedding tensor.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{sha256_hex, PrimeId, TrialKey};
use crate::error::{Error, Result};
use crate::extraction::{read_jsonl, ParsedScene, ReferenceCondition};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    pub values: Vec<T>,
    pub model_tag: String,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == T::zero() {
            return Err(Error::Degenerate("cannot normalise a zero vector".into()));
        }
        Ok(Self {
            values: self.values.iter().map(|&x| x / n).collect(),
            model_tag: self.model_tag.clone(),
        })
    }
}

/// Cosine similarity in `[-1, 1]`.
pub fn cosine<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<T> {
    cosine_slices(&a.values, &b.values)
}

pub fn cosine_slices<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "cosine of {}-dim and {}-dim vectors",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return Err(Error::Degenerate("cosine with a zero-norm vector".into()));
    }
    let c = dot / (na.sqrt() * nb.sqrt());
    Ok(c.max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub model_tag: String,
    pub dim: usize,
}

/// Source of text embeddings. Implementations must be deterministic for a
/// fixed model and input and must preserve batch order.
pub trait EmbeddingProvider<T: Scalar> {
    fn descriptor(&self) -> ProviderDescriptor;

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<T>>>;
}

/// Offline embedder: every token gets a seeded Gaussian direction and a text
/// is the unit-normalised sum over its whitespace tokens (with multiplicity).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FallbackEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl FallbackEmbedder {
    pub const DEFAULT_DIM: usize = 384;

    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn model_tag(&self) -> String {
        format!("fallback-hash-d{}-s{}", self.dim, self.seed)
    }
}

impl Default for FallbackEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM, 42)
    }
}

/// Output of [`fallback_embed`]; `empty_input` marks texts without tokens,
/// which map to the first canonical basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FallbackEmbedding<T> {
    pub vector: EmbeddingVector<T>,
    pub empty_input: bool,
}

fn token_direction(token: &str, seed: u64, dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(bytes);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn fallback_embed<T: Scalar>(text: &str, seed: u64, dim: usize) -> FallbackEmbedding<T> {
    let embedder = FallbackEmbedder::new(dim, seed);
    let mut cache = HashMap::new();
    embedder.embed_one(text, &mut cache)
}

impl FallbackEmbedder {
    fn embed_one<T: Scalar>(&self, text: &str, cache: &mut HashMap<String, Vec<f64>>) -> FallbackEmbedding<T> {
        let lower = text.to_lowercase();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for tok in lower.split_whitespace() {
            *counts.entry(tok).or_default() += 1;
        }
        let mut acc = vec![0.0f64; self.dim];
        for (tok, n) in &counts {
            let dir = cache
                .entry(tok.to_string())
                .or_insert_with(|| token_direction(tok, self.seed, self.dim));
            for (a, d) in acc.iter_mut().zip(dir.iter()) {
                *a += *n as f64 * d;
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        let empty_input = counts.is_empty() || norm == 0.0;
        let values = if empty_input {
            let mut e = vec![T::zero(); self.dim];
            if let Some(first) = e.first_mut() {
                *first = T::one();
            }
            e
        } else {
            acc.iter().map(|&x| T::lit(x / norm)).collect()
        };
        FallbackEmbedding {
            vector: EmbeddingVector {
                values,
                model_tag: self.model_tag(),
            },
            empty_input,
        }
    }
}

impl<T: Scalar> EmbeddingProvider<T> for FallbackEmbedder {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            model_tag: self.model_tag(),
            dim: self.dim,
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<T>>> {
        let mut cache = HashMap::new();
        Ok(texts.iter().map(|t| self.embed_one(t, &mut cache).vector).collect())
    }
}

/// Key under which precomputed vectors are stored: SHA-256 hex of the text.
pub fn text_hash(text: &str) -> String {
    sha256_hex(text.as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecomputedLine {
    pub text_hash: String,
    pub vector: Vec<f64>,
}

/// Vectors loaded from a JSONL file of `{text_hash, vector}` lines.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbeddings {
    model_tag: String,
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn load(path: &Path, model_tag: impl Into<String>) -> Result<Self> {
        let lines: Vec<PrecomputedLine> = read_jsonl(path)?;
        Self::from_lines(lines, model_tag)
    }

    pub fn from_lines(lines: Vec<PrecomputedLine>, model_tag: impl Into<String>) -> Result<Self> {
        let dim = lines.first().map_or(0, |l| l.vector.len());
        let mut vectors = HashMap::with_capacity(lines.len());
        for (i, l) in lines.into_iter().enumerate() {
            if l.vector.len() != dim {
                return Err(Error::Malformed {
                    line: i + 1,
                    detail: format!("vector of dim {} in a dim-{dim} file", l.vector.len()),
                });
            }
            if l.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::Malformed {
                    line: i + 1,
                    detail: "non-finite vector entry".into(),
                });
            }
            vectors.insert(l.text_hash, l.vector);
        }
        Ok(Self {
            model_tag: model_tag.into(),
            dim,
            vectors,
        })
    }
}

impl<T: Scalar> EmbeddingProvider<T> for PrecomputedEmbeddings {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            model_tag: self.model_tag.clone(),
            dim: self.dim,
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<T>>> {
        texts
            .iter()
            .map(|t| {
                let h = text_hash(t);
                let v = self
                    .vectors
                    .get(&h)
                    .ok_or_else(|| Error::Provider(format!("no precomputed vector for text hash {h}")))?;
                Ok(EmbeddingVector {
                    values: v.iter().map(|&x| T::lit(x)).collect(),
                    model_tag: self.model_tag.clone(),
                })
            })
            .collect()
    }
}

/// Embeds every scene's affordance text, in batches of `batch`.
pub fn embed_scenes<T: Scalar, P: EmbeddingProvider<T> + ?Sized>(
    scenes: &[&ParsedScene],
    provider: &P,
    batch: usize,
) -> Result<HashMap<TrialKey, EmbeddingVector<T>>> {
    let dim = provider.descriptor().dim;
    let mut out = HashMap::with_capacity(scenes.len());
    for chunk in scenes.chunks(batch.max(1)) {
        let texts: Vec<String> = chunk.iter().map(|s| s.affordance_text.clone()).collect();
        let vectors = provider.embed(&texts)?;
        if vectors.len() != texts.len() {
            return Err(Error::Provider(format!(
                "{} vectors returned for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        for (scene, v) in chunk.iter().zip(vectors) {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "provider declared dim {dim} but returned {}",
                    v.dim()
                )));
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::Provider("non-finite embedding entry".into()));
            }
            out.insert(scene.key.clone(), v);
        }
    }
    Ok(out)
}

/// Dense images × primes × embedding tensor with its index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct AffordanceTensor<T> {
    pub data: Tensor3<T>,
    pub image_index: Vec<String>,
    pub prime_index: Vec<PrimeId>,
    pub model_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssemblyOptions {
    /// L2-normalise each embedding before stacking.
    pub normalize: bool,
    /// Subtract the per-mode mean along this mode after stacking.
    pub center_mode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssemblyReport {
    /// Images dropped for missing primes, with the primes they lacked.
    pub excluded: BTreeMap<String, Vec<PrimeId>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorSidecar {
    shape: [usize; 3],
    image_index: Vec<String>,
    prime_index: Vec<PrimeId>,
    model_tag: String,
    dtype: String,
}

/// Stacks the reference-condition embedding of every image that has all
/// seven primes. Images are ordered by id.
pub fn assemble_tensor<T: Scalar, P: EmbeddingProvider<T> + ?Sized>(
    scenes: &[ParsedScene],
    provider: &P,
    reference: ReferenceCondition,
    options: AssemblyOptions,
) -> Result<(AffordanceTensor<T>, AssemblyReport)> {
    let mut by_image: BTreeMap<&str, BTreeMap<PrimeId, &ParsedScene>> = BTreeMap::new();
    for s in scenes.iter().filter(|s| reference.matches(&s.key)) {
        by_image.entry(&s.key.image_id).or_default().insert(s.key.prime_id, s);
    }
    let mut report = AssemblyReport::default();
    let mut complete = Vec::new();
    for (image, primes) in &by_image {
        if primes.len() == PrimeId::ALL.len() {
            complete.push(*image);
        } else {
            let missing = PrimeId::ALL
                .iter()
                .filter(|p| !primes.contains_key(p))
                .copied()
                .collect();
            report.excluded.insert(image.to_string(), missing);
        }
    }
    if complete.is_empty() {
        let listing = report
            .excluded
            .iter()
            .map(|(img, miss)| {
                let m: Vec<String> = miss.iter().map(|p| p.to_string()).collect();
                format!("{img} (missing {})", m.join(","))
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::IncompleteCoverage(if listing.is_empty() {
            "no scenes at the reference condition".into()
        } else {
            format!("no image has all primes: {listing}")
        }));
    }

    let ordered: Vec<&ParsedScene> = complete
        .iter()
        .flat_map(|img| PrimeId::ALL.iter().map(move |p| (img, p)))
        .map(|(img, p)| by_image[img][p])
        .collect();
    let descriptor = provider.descriptor();
    let embeddings = embed_scenes(&ordered, provider, 256)?;
    let dim = descriptor.dim;

    let mut data = Tensor3::zeros([complete.len(), PrimeId::ALL.len(), dim]);
    for (i, img) in complete.iter().enumerate() {
        for (j, p) in PrimeId::ALL.iter().enumerate() {
            let v = &embeddings[&by_image[img][p].key];
            let v = if options.normalize { v.normalized()? } else { v.clone() };
            data.fibre_mut(i, j).copy_from_slice(&v.values);
        }
    }
    if let Some(mode) = options.center_mode {
        if mode > 2 {
            return Err(Error::InvalidInput(format!("centering mode {mode} out of range")));
        }
        data.center_mode(mode);
    }
    if !data.is_finite() {
        return Err(Error::Provider("tensor contains non-finite values".into()));
    }
    Ok((
        AffordanceTensor {
            data,
            image_index: complete.iter().map(|s| s.to_string()).collect(),
            prime_index: PrimeId::ALL.to_vec(),
            model_tag: descriptor.model_tag,
        },
        report,
    ))
}

impl<T: Scalar> AffordanceTensor<T> {
    pub fn shape(&self) -> [usize; 3] {
        self.data.dims()
    }

    /// Writes `tensor.f32` (little-endian, row-major) and `tensor.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut bytes = Vec::with_capacity(self.data.as_slice().len() * 4);
        for &x in self.data.as_slice() {
            bytes.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
        let bin = dir.join("tensor.f32");
        std::fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let sidecar = TensorSidecar {
            shape: self.shape(),
            image_index: self.image_index.clone(),
            prime_index: self.prime_index.clone(),
            model_tag: self.model_tag.clone(),
            dtype: "f32-le".into(),
        };
        let meta = dir.join("tensor.json");
        std::fs::write(&meta, serde_json::to_string_pretty(&sidecar)? + "\n").map_err(|e| Error::io(&meta, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = dir.join("tensor.json");
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let sidecar: TensorSidecar = serde_json::from_str(&text)?;
        let bin = dir.join("tensor.f32");
        let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        let n: usize = sidecar.shape.iter().product();
        if bytes.len() != n * 4 {
            return Err(Error::DimensionMismatch(format!(
                "{} bytes for shape {:?}",
                bytes.len(),
                sidecar.shape
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        if sidecar.image_index.len() != sidecar.shape[0] || sidecar.prime_index.len() != sidecar.shape[1] {
            return Err(Error::DimensionMismatch("index maps disagree with shape".into()));
        }
        Ok(Self {
            data: Tensor3::from_vec(sidecar.shape, values)?,
            image_index: sidecar.image_index,
            prime_index: sidecar.prime_index,
            model_tag: sidecar.model_tag,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Temperature;
    use crate::extraction::AffordanceObject;

    fn v(values: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector {
            values: values.to_vec(),
            model_tag: "t".into(),
        }
    }

    fn scene(image: &str, prime: PrimeId, text: &str) -> ParsedScene {
        ParsedScene {
            key: TrialKey {
                image_id: image.into(),
                prime_id: prime,
                seed: 0,
                temperature: Temperature::new(0.7).unwrap(),
            },
            objects: vec![AffordanceObject {
                obj_id: 1,
                name: text.split(' ').next().unwrap().into(),
                affordance: String::new(),
                reasoning: String::new(),
            }],
            affordance_text: text.into(),
            missing_optional: false,
        }
    }

    fn reference() -> ReferenceCondition {
        ReferenceCondition {
            seed: 0,
            temperature: Temperature::new(0.7).unwrap(),
        }
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&v(&[0.3, -2.0]), &v(&[0.3, -2.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = cosine(&v(&[1.0, 0.0]), &v(&[s, s])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).is_err());
        assert!(cosine(&v(&[1.0]), &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn fallback_is_deterministic_and_unit() {
        let a = fallback_embed::<f64>("a chair to sit on", 42, 64);
        let b = fallback_embed::<f64>("a chair to sit on", 42, 64);
        assert_eq!(a, b);
        assert!((a.vector.norm() - 1.0).abs() < 1e-12);
        assert!(!a.empty_input);
        let other_seed = fallback_embed::<f64>("a chair to sit on", 7, 64);
        assert_ne!(a.vector.values, other_seed.vector.values);
    }

    #[test]
    fn fallback_empty_text_maps_to_basis_vector() {
        let e = fallback_embed::<f32>("   ", 1, 8);
        assert!(e.empty_input);
        assert_eq!(e.vector.values, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn assemble_small_tensor_and_exclusion() {
        let mut scenes: Vec<ParsedScene> = PrimeId::ALL
            .iter()
            .map(|&p| scene("img1", p, &format!("word{} x", p.index())))
            .collect();
        scenes.extend(
            PrimeId::ALL
                .iter()
                .filter(|&&p| p != PrimeId::P2)
                .map(|&p| scene("img2", p, "y z")),
        );
        let provider = FallbackEmbedder::new(8, 1);
        let (t, report) =
            assemble_tensor::<f64, _>(&scenes, &provider, reference(), AssemblyOptions::default()).unwrap();
        assert_eq!(t.shape(), [1, 7, 8]);
        assert_eq!(t.image_index, vec!["img1".to_string()]);
        assert_eq!(report.excluded["img2"], vec![PrimeId::P2]);
    }

    #[test]
    fn assemble_errors_without_complete_images() {
        let scenes: Vec<ParsedScene> = vec![scene("only", PrimeId::P0, "a")];
        let provider = FallbackEmbedder::new(4, 1);
        let err = assemble_tensor::<f64, _>(&scenes, &provider, reference(), AssemblyOptions::default()).unwrap_err();
        assert!(err.to_string().contains("only (missing P1,P2,P3,P4,P5,P6)"));
    }

    #[test]
    fn precomputed_provider_lookup() {
        let lines = vec![PrecomputedLine {
            text_hash: text_hash("hello"),
            vector: vec![1.0, 2.0],
        }];
        let p = PrecomputedEmbeddings::from_lines(lines, "pre").unwrap();
        let out: Vec<EmbeddingVector<f64>> = p.embed(&["hello".to_string()]).unwrap();
        assert_eq!(out[0].values, vec![1.0, 2.0]);
        assert!(EmbeddingProvider::<f64>::embed(&p, &["nope".to_string()]).is_err());
    }

    #[test]
    fn tensor_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let data = Tensor3::from_fn([2, 7, 3], |i, j, k| {
            (i as f32 * 0.1) - (j as f32 * 0.37) + k as f32 / 3.0
        });
        let t = AffordanceTensor {
            data,
            image_index: vec!["a".into(), "b".into()],
            prime_index: PrimeId::ALL.to_vec(),
            model_tag: "m".into(),
        };
        t.save(dir.path()).unwrap();
        let back = AffordanceTensor::<f32>::load(dir.path()).unwrap();
        assert_eq!(back, t);
        let first = std::fs::read(dir.path().join("tensor.f32")).unwrap();
        back.save(dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("tensor.f32")).unwrap(), first);
    }
}
