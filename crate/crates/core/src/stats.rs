//! One-sample tests against a similarity threshold, bootstrap intervals,
//! effect sizes, the seed-versus-prime variance split and metric
//! correlations.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{PrimeId, Temperature, TrialKey};
use crate::embedding::{cosine_slices, EmbeddingVector};
use crate::error::{Error, Result};
use crate::lexical::{Metric, PairTable};
use crate::parallel::{default_threads, par_map};
use crate::scalar::Scalar;

pub const DEFAULT_MU0: f64 = 0.5;
pub const DEFAULT_ITERATIONS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Permutation,
    TOneSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult<T> {
    pub statistic: T,
    pub p_value: f64,
    pub n: usize,
    pub method: TestMethod,
}

/// Sample mean and standard deviation (n − 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub n: usize,
    pub mean: T,
    pub sd: T,
}

pub fn summarize<T: Scalar>(values: &[T]) -> Result<Summary<T>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("summary of an empty sample".into()));
    }
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let sd = if values.len() < 2 {
        T::zero()
    } else {
        let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
        (ss / (n - T::one())).sqrt()
    };
    Ok(Summary {
        n: values.len(),
        mean,
        sd,
    })
}

fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(iteration as u64))
}

/// One-sided sign-randomisation test of H0: μ ≥ `mu0` against μ < `mu0`.
///
/// Each resample flips the sign of every deviation `v − mu0` with
/// probability ½; the p-value is the share of resampled mean deviations at
/// or below the observed one, floored at `1/(iters+1)`.
pub fn permutation_test_below<T: Scalar>(values: &[T], mu0: T, iters: usize, seed: u64) -> Result<TestResult<T>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("permutation test on an empty sample".into()));
    }
    if iters == 0 {
        return Err(Error::InvalidInput(
            "permutation test needs at least one iteration".into(),
        ));
    }
    let dev: Vec<T> = values.iter().map(|&v| v - mu0).collect();
    let n = T::from_usize_lossy(dev.len());
    let observed = dev.iter().copied().sum::<T>() / n;
    let hits = par_map(iters, default_threads(), |b| {
        let mut rng = iteration_rng(seed, b);
        let mut sum = T::zero();
        for block in dev.chunks(64) {
            let bits: u64 = rng.random();
            for (i, &d) in block.iter().enumerate() {
                if bits >> i & 1 == 1 {
                    sum -= d;
                } else {
                    sum += d;
                }
            }
        }
        sum / n <= observed
    });
    let count = hits.iter().filter(|&&h| h).count();
    let p = (count as f64 / iters as f64).max(1.0 / (iters as f64 + 1.0));
    Ok(TestResult {
        statistic: observed,
        p_value: p.min(1.0),
        n: values.len(),
        method: TestMethod::Permutation,
    })
}

/// One-sample t-test; the p-value is the lower tail of Student's t.
pub fn t_one_sample<T: Scalar>(values: &[T], mu0: T) -> Result<TestResult<T>> {
    if values.len() < 2 {
        return Err(Error::InvalidInput("t-test needs at least two values".into()));
    }
    let s = summarize(values)?;
    t_from_summary(s.mean, s.sd, s.n, mu0)
}

/// The t-test from reported summary statistics.
pub fn t_from_summary<T: Scalar>(mean: T, sd: T, n: usize, mu0: T) -> Result<TestResult<T>> {
    if n < 2 {
        return Err(Error::InvalidInput("t-test needs n ≥ 2".into()));
    }
    if sd.partial_cmp(&T::zero()) != Some(Ordering::Greater) {
        return Err(Error::Degenerate("t-test with zero standard deviation".into()));
    }
    let t = (mean - mu0) / (sd / T::from_usize_lossy(n).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p = dist.cdf(t.as_f64());
    let p = if p.is_nan() {
        if t < T::zero() {
            0.0
        } else {
            1.0
        }
    } else {
        p.clamp(0.0, 1.0)
    };
    Ok(TestResult {
        statistic: t,
        p_value: p,
        n,
        method: TestMethod::TOneSample,
    })
}

pub fn cohens_d<T: Scalar>(mean: T, mu0: T, sd: T) -> Result<T> {
    if sd.partial_cmp(&T::zero()) != Some(Ordering::Greater) {
        return Err(Error::Degenerate("Cohen's d with zero standard deviation".into()));
    }
    Ok((mean - mu0) / sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI<T> {
    pub mean: T,
    pub lo: T,
    pub hi: T,
    pub level: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap interval for the mean. Iteration `b` resamples with
/// its own generator seeded by `seed + b`. The bounds are clamped around the
/// sample mean, which only matters for tiny or heavily skewed samples.
pub fn bootstrap_ci<T: Scalar>(values: &[T], level: f64, iters: usize, seed: u64) -> Result<BootstrapCI<T>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("bootstrap of an empty sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {level} outside (0, 1)")));
    }
    if iters == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one iteration".into()));
    }
    let n = values.len();
    let nt = T::from_usize_lossy(n);
    let mean = values.iter().copied().sum::<T>() / nt;
    let mut means = par_map(iters, default_threads(), |b| {
        let mut rng = iteration_rng(seed, b);
        (0..n).map(|_| values[rng.random_range(0..n)]).sum::<T>() / nt
    });
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite bootstrap means"));
    let alpha = (1.0 - level) / 2.0;
    let lo = quantile_sorted(&means, alpha).min(mean);
    let hi = quantile_sorted(&means, 1.0 - alpha).max(mean);
    Ok(BootstrapCI {
        mean,
        lo,
        hi,
        level,
        iterations: iters,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct VarianceDecomposition<T> {
    pub temperature: f64,
    pub within_sim: T,
    pub cross_sim: T,
    #[serde(with = "extended_float")]
    pub var_ratio: T,
    pub eta_sq: T,
    pub within_pairs: usize,
    pub cross_pairs: usize,
}

/// JSON has no infinities: non-finite values travel as "inf", "-inf" or "nan".
mod extended_float {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::scalar::Scalar;

    pub fn serialize<T: Scalar + Serialize, S: Serializer>(x: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
        if x.is_finite() {
            x.serialize(s)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if x.is_sign_positive() {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> std::result::Result<T, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(T::lit(x)),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(T::infinity()),
                "-inf" => Ok(T::neg_infinity()),
                "nan" => Ok(T::nan()),
                other => Err(D::Error::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}

/// `(1 − cross)/(1 − within)`; `+∞` when within-prime outputs are identical.
pub fn variance_ratio<T: Scalar>(within_sim: T, cross_sim: T) -> T {
    let denom = T::one() - within_sim;
    if denom <= T::zero() {
        T::infinity()
    } else {
        (T::one() - cross_sim) / denom
    }
}

/// Trace η² of the prime grouping: between-prime sum of squares over the
/// total sum of squares, both summed over embedding dimensions.
pub fn eta_squared<T: Scalar>(groups: &BTreeMap<PrimeId, Vec<&[T]>>) -> Result<T> {
    let dim = groups
        .values()
        .flat_map(|g| g.first())
        .map(|v| v.len())
        .next()
        .ok_or_else(|| Error::InvalidInput("η² of empty groups".into()))?;
    if groups.values().flatten().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch("embeddings of different dimension".into()));
    }
    let total_n: usize = groups.values().map(Vec::len).sum();
    let mut grand = vec![T::zero(); dim];
    for v in groups.values().flatten() {
        for (g, &x) in grand.iter_mut().zip(v.iter()) {
            *g += x;
        }
    }
    let nt = T::from_usize_lossy(total_n);
    grand.iter_mut().for_each(|g| *g /= nt);

    let mut ss_total = T::zero();
    let mut ss_between = T::zero();
    for members in groups.values().filter(|g| !g.is_empty()) {
        let k = T::from_usize_lossy(members.len());
        let mut mean = vec![T::zero(); dim];
        for v in members {
            for (m, &x) in mean.iter_mut().zip(v.iter()) {
                *m += x;
            }
        }
        for (m, &g) in mean.iter_mut().zip(&grand) {
            *m /= k;
            ss_between += k * (*m - g) * (*m - g);
        }
        for v in members {
            for (&x, &g) in v.iter().zip(&grand) {
                ss_total += (x - g) * (x - g);
            }
        }
    }
    if ss_total <= T::zero() {
        return Ok(T::zero());
    }
    Ok((ss_between / ss_total).max(T::zero()).min(T::one()))
}

/// Within-prime (across seeds) versus cross-prime (within a seed) similarity
/// for the embeddings sampled at `temperature`.
pub fn variance_decomposition<T: Scalar>(
    embeddings: &HashMap<TrialKey, EmbeddingVector<T>>,
    temperature: Temperature,
) -> Result<VarianceDecomposition<T>> {
    let mut by_image_prime: BTreeMap<(&str, PrimeId), BTreeMap<u64, &[T]>> = BTreeMap::new();
    let mut by_image_seed: BTreeMap<(&str, u64), BTreeMap<PrimeId, &[T]>> = BTreeMap::new();
    let mut by_prime: BTreeMap<PrimeId, Vec<(&TrialKey, &[T])>> = BTreeMap::new();
    for (key, v) in embeddings.iter().filter(|(k, _)| k.temperature == temperature) {
        let values = v.values.as_slice();
        by_image_prime
            .entry((&key.image_id, key.prime_id))
            .or_default()
            .insert(key.seed, values);
        by_image_seed
            .entry((&key.image_id, key.seed))
            .or_default()
            .insert(key.prime_id, values);
        by_prime.entry(key.prime_id).or_default().push((key, values));
    }
    if by_prime.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "variance decomposition at T={temperature} needs at least two primes"
        )));
    }

    let mean_pairwise = |groups: Vec<Vec<&[T]>>| -> Result<(T, usize)> {
        let mut sum = T::zero();
        let mut count = 0usize;
        for g in &groups {
            for i in 0..g.len() {
                for j in i + 1..g.len() {
                    sum += cosine_slices(g[i], g[j])?;
                    count += 1;
                }
            }
        }
        Ok((sum / T::from_usize_lossy(count.max(1)), count))
    };

    let (within_sim, within_pairs) =
        mean_pairwise(by_image_prime.values().map(|m| m.values().copied().collect()).collect())?;
    if within_pairs == 0 {
        return Err(Error::InvalidInput(format!(
            "variance decomposition at T={temperature} needs at least two seeds per image and prime"
        )));
    }
    let (cross_sim, cross_pairs) =
        mean_pairwise(by_image_seed.values().map(|m| m.values().copied().collect()).collect())?;
    if cross_pairs == 0 {
        return Err(Error::InvalidInput("no image/seed group with two primes".into()));
    }

    let grouped: BTreeMap<PrimeId, Vec<&[T]>> = by_prime
        .into_iter()
        .map(|(p, mut v)| {
            v.sort_by(|a, b| a.0.cmp(b.0));
            (p, v.into_iter().map(|(_, x)| x).collect())
        })
        .collect();
    let eta_sq = eta_squared(&grouped)?;
    Ok(VarianceDecomposition {
        temperature: temperature.value(),
        within_sim,
        cross_sim,
        var_ratio: variance_ratio(within_sim, cross_sim),
        eta_sq,
        within_pairs,
        cross_pairs,
    })
}

pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} observations",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(
            "correlation needs at least two observations".into(),
        ));
    }
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::Degenerate("correlation with a zero-variance metric".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub metrics: Vec<Metric>,
    /// Row-major `metrics.len()²` Pearson coefficients.
    pub r: Vec<f64>,
    pub n_rows: usize,
}

impl CorrelationMatrix {
    pub fn get(&self, a: Metric, b: Metric) -> Option<f64> {
        let i = self.metrics.iter().position(|&m| m == a)?;
        let j = self.metrics.iter().position(|&m| m == b)?;
        Some(self.r[i * self.metrics.len() + j])
    }
}

/// Pearson r between every pair of metrics over the (image, prime pair)
/// rows that carry all of them.
pub fn metric_correlations(table: &PairTable) -> Result<CorrelationMatrix> {
    let metrics: Vec<Metric> = table.metrics().into_iter().collect();
    if metrics.len() < 2 {
        return Err(Error::InvalidInput("correlations need at least two metrics".into()));
    }
    let mut rows: BTreeMap<(&str, PrimeId, PrimeId), BTreeMap<Metric, f64>> = BTreeMap::new();
    for r in &table.rows {
        rows.entry((&r.image_id, r.prime_a, r.prime_b))
            .or_default()
            .insert(r.metric, r.value);
    }
    let complete: Vec<&BTreeMap<Metric, f64>> = rows.values().filter(|m| m.len() == metrics.len()).collect();
    let columns: Vec<Vec<f64>> = metrics
        .iter()
        .map(|m| complete.iter().map(|row| row[m]).collect())
        .collect();
    let k = metrics.len();
    let mut r = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v = if i == j {
                pearson(&columns[i], &columns[i]).map(|_| 1.0)?
            } else {
                pearson(&columns[i], &columns[j])?
            };
            r[i * k + j] = v;
            r[j * k + i] = v;
        }
    }
    Ok(CorrelationMatrix {
        metrics,
        r,
        n_rows: complete.len(),
    })
}

/// One Table-2-shaped row: the drift of a metric below the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci: BootstrapCI<f64>,
    pub t: TestResult<f64>,
    pub permutation: TestResult<f64>,
    pub cohens_d: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsParams {
    pub mu0: f64,
    pub iterations: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for StatsParams {
    fn default() -> Self {
        Self {
            mu0: DEFAULT_MU0,
            iterations: DEFAULT_ITERATIONS,
            seed: DEFAULT_SEED,
            level: 0.95,
        }
    }
}

pub fn summarize_metric(metric: Metric, values: &[f64], params: &StatsParams) -> Result<MetricSummary> {
    let s = summarize(values)?;
    let ci = bootstrap_ci(values, params.level, params.iterations, params.seed)?;
    let permutation = permutation_test_below(values, params.mu0, params.iterations, params.seed)?;
    let t = t_from_summary(s.mean, s.sd, s.n, params.mu0)?;
    Ok(MetricSummary {
        metric,
        n: s.n,
        mean: s.mean,
        sd: s.sd,
        ci,
        t,
        permutation,
        cohens_d: cohens_d(s.mean, params.mu0, s.sd).ok(),
    })
}
