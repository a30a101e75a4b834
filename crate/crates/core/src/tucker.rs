//! Tucker decomposition by higher-order orthogonal iteration, with factor
//! loadings, Procrustes-aligned bootstrap stability and rank sweeps.

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::PrimeId;
use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, leading_left_singular_vectors, orthonormalize_columns, Matrix};
use crate::parallel::{default_threads, par_map};
use crate::scalar::Scalar;
use crate::stats::quantile_sorted;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Init {
    /// Truncated SVD of every unfolding.
    Hosvd,
    /// Range finder on a Gaussian sketch of every unfolding.
    RandomizedSketch { seed: u64, oversample: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HooiOptions {
    pub max_iters: usize,
    /// Stop once an iteration improves explained variance by less than this.
    pub tol: f64,
    pub init: Init,
}

impl Default for HooiOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            init: Init::Hosvd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel<T> {
    pub core: Tensor3<T>,
    /// Image, context and embedding factors, each with orthonormal columns.
    pub factors: [Matrix<T>; 3],
    pub ranks: [usize; 3],
    pub explained_variance: T,
    pub iterations: usize,
    pub converged: bool,
    /// Explained variance of the initialisation, before any sweep.
    pub init_explained_variance: T,
}

fn orthonormality_tol<T: Scalar>() -> T {
    T::lit(1e4) * T::epsilon()
}

fn project_all<T: Scalar>(t: &Tensor3<T>, factors: &[Matrix<T>; 3]) -> Result<Tensor3<T>> {
    t.contract(0, &factors[0])?
        .contract(1, &factors[1])?
        .contract(2, &factors[2])
}

pub(crate) fn expand_all<T: Scalar>(core: &Tensor3<T>, factors: &[Matrix<T>; 3]) -> Result<Tensor3<T>> {
    core.contract(0, &factors[0].transpose())?
        .contract(1, &factors[1].transpose())?
        .contract(2, &factors[2].transpose())
}

/// `1 − ‖T − T̂‖/‖T‖` from norms alone, valid for orthonormal factors.
fn ev_from_norms<T: Scalar>(norm_sq: T, core_norm_sq: T) -> T {
    let resid = (norm_sq - core_norm_sq).max(T::zero()).sqrt();
    T::one() - resid / norm_sq.sqrt()
}

pub fn explained_variance<T: Scalar>(t: &Tensor3<T>, reconstruction: &Tensor3<T>) -> Result<T> {
    let norm = t.frobenius_norm();
    if norm == T::zero() {
        return Err(Error::Degenerate("explained variance of a zero tensor".into()));
    }
    Ok(T::one() - t.sub(reconstruction)?.frobenius_norm() / norm)
}

fn sketch_basis<T: Scalar>(
    unfolding: &Matrix<T>,
    rank: usize,
    oversample: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix<T>> {
    let width = (rank + oversample)
        .min(unfolding.rows())
        .min(unfolding.cols())
        .max(rank);
    let omega = Matrix::from_fn(unfolding.cols(), width, |_, _| T::lit(StandardNormal.sample(rng)));
    let q = orthonormalize_columns(&unfolding.matmul(&omega)?);
    let small = q.t_matmul(unfolding)?;
    let w = leading_left_singular_vectors(&small, rank)?;
    Ok(orthonormalize_columns(&q.matmul(&w)?))
}

fn check_orthonormal<T: Scalar>(factors: &[Matrix<T>; 3]) -> Result<()> {
    for (mode, u) in factors.iter().enumerate() {
        let err = u.orthonormality_error();
        if err.partial_cmp(&orthonormality_tol::<T>()) != Some(Ordering::Less) {
            return Err(Error::Degenerate(format!(
                "mode-{mode} factor lost orthonormality (‖UᵀU − I‖ = {err})"
            )));
        }
    }
    Ok(())
}

/// Flips factor columns so each one's largest-magnitude entry is positive,
/// compensating in the core so the reconstruction is unchanged.
pub(crate) fn canonicalize_signs<T: Scalar>(core: &mut Tensor3<T>, factors: &mut [Matrix<T>; 3]) {
    for (mode, u) in factors.iter_mut().enumerate() {
        for c in 0..u.cols() {
            let col = u.column(c);
            let pivot = col
                .iter()
                .copied()
                .fold((T::zero(), T::zero()), |(best, val), x| {
                    if x.abs() > best {
                        (x.abs(), x)
                    } else {
                        (best, val)
                    }
                })
                .1;
            if pivot < T::zero() {
                u.scale_column(c, -T::one());
                let [a, b, d] = core.dims();
                for i in 0..a {
                    for j in 0..b {
                        for k in 0..d {
                            if [i, j, k][mode] == c {
                                core.set(i, j, k, -core.get(i, j, k));
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Higher-order orthogonal iteration. Non-convergence within `max_iters` is
/// not an error: the model comes back with `converged = false`.
pub fn hooi<T: Scalar>(t: &Tensor3<T>, ranks: [usize; 3], options: &HooiOptions) -> Result<TuckerModel<T>> {
    let dims = t.dims();
    for m in 0..3 {
        if ranks[m] == 0 || ranks[m] > dims[m] {
            return Err(Error::InvalidInput(format!(
                "rank {} invalid for mode {m} of size {}",
                ranks[m], dims[m]
            )));
        }
    }
    if !t.is_finite() {
        return Err(Error::InvalidInput("tensor has non-finite entries".into()));
    }
    let norm_sq = t.frobenius_norm_sq();
    if norm_sq == T::zero() {
        return Err(Error::Degenerate("cannot decompose a zero tensor".into()));
    }

    let mut factors: [Matrix<T>; 3] = match options.init {
        Init::Hosvd => [
            leading_left_singular_vectors(&t.unfold(0), ranks[0])?,
            leading_left_singular_vectors(&t.unfold(1), ranks[1])?,
            leading_left_singular_vectors(&t.unfold(2), ranks[2])?,
        ],
        Init::RandomizedSketch { seed, oversample } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            [
                sketch_basis(&t.unfold(0), ranks[0], oversample, &mut rng)?,
                sketch_basis(&t.unfold(1), ranks[1], oversample, &mut rng)?,
                sketch_basis(&t.unfold(2), ranks[2], oversample, &mut rng)?,
            ]
        }
    };
    check_orthonormal(&factors)?;
    let init_ev = ev_from_norms(norm_sq, project_all(t, &factors)?.frobenius_norm_sq());

    let mut ev = init_ev;
    let mut iterations = 0;
    let mut converged = false;
    let tol = T::lit(options.tol);
    while iterations < options.max_iters {
        iterations += 1;
        let y = t.contract(1, &factors[1])?.contract(2, &factors[2])?;
        factors[0] = leading_left_singular_vectors(&y.unfold(0), ranks[0])?;
        let y = t.contract(0, &factors[0])?.contract(2, &factors[2])?;
        factors[1] = leading_left_singular_vectors(&y.unfold(1), ranks[1])?;
        let y = t.contract(0, &factors[0])?.contract(1, &factors[1])?;
        factors[2] = leading_left_singular_vectors(&y.unfold(2), ranks[2])?;
        check_orthonormal(&factors)?;

        let core_sq = y.contract(2, &factors[2])?.frobenius_norm_sq();
        let next = ev_from_norms(norm_sq, core_sq);
        let gain = next - ev;
        ev = next;
        if gain < tol {
            converged = true;
            break;
        }
    }

    let mut core = project_all(t, &factors)?;
    canonicalize_signs(&mut core, &mut factors);
    let explained_variance = explained_variance(t, &expand_all(&core, &factors)?)?;
    Ok(TuckerModel {
        core,
        factors,
        ranks,
        explained_variance,
        iterations,
        converged,
        init_explained_variance: init_ev,
    })
}

impl<T: Scalar> TuckerModel<T> {
    pub fn u_image(&self) -> &Matrix<T> {
        &self.factors[0]
    }

    pub fn u_context(&self) -> &Matrix<T> {
        &self.factors[1]
    }

    pub fn u_embed(&self) -> &Matrix<T> {
        &self.factors[2]
    }

    pub fn reconstruct(&self) -> Result<Tensor3<T>> {
        expand_all(&self.core, &self.factors)
    }

    /// Context factor: one row per prime, one column per dimension, signs
    /// fixed by the max-|entry|-positive convention.
    pub fn context_loadings(&self) -> Matrix<T> {
        self.factors[1].clone()
    }

    /// Share of the core's energy in each context slice, `‖G[:, j, :]‖²/‖G‖²`.
    pub fn factor_variance_shares(&self) -> Result<Vec<T>> {
        let total = self.core.frobenius_norm_sq();
        if total == T::zero() {
            return Err(Error::Degenerate("variance shares of a zero core".into()));
        }
        let [a, b, _] = self.core.dims();
        Ok((0..b)
            .map(|j| {
                (0..a)
                    .map(|i| self.core.fibre(i, j).iter().map(|&x| x * x).sum::<T>())
                    .sum::<T>()
                    / total
            })
            .collect())
    }
}

/// Orthogonal `Q` minimising `‖U_boot·Q − U_ref‖_F`. With the SVD
/// `U_bootᵀ·U_ref = A·Σ·Bᵀ` this is `Q = A·Bᵀ`. Returns `(U_boot·Q, Q)`.
pub fn procrustes_align<T: Scalar>(u_boot: &Matrix<T>, u_ref: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    if u_boot.rows() != u_ref.rows() || u_boot.cols() != u_ref.cols() {
        return Err(Error::DimensionMismatch(format!(
            "Procrustes between {}x{} and {}x{}",
            u_boot.rows(),
            u_boot.cols(),
            u_ref.rows(),
            u_ref.cols()
        )));
    }
    let m = u_boot.t_matmul(u_ref)?;
    let svd = jacobi_svd(&m)?;
    let q = svd.u.matmul(&svd.v.transpose())?;
    Ok((u_boot.matmul(&q)?, q))
}

/// Tucker's congruence coefficient `Σxy / √(Σx²·Σy²)`.
pub fn congruence<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} entries", x.len(), y.len())));
    }
    let (mut xy, mut xx, mut yy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == T::zero() || yy == T::zero() {
        return Err(Error::Degenerate("congruence with a zero vector".into()));
    }
    Ok((xy / (xx * yy).sqrt()).max(-T::one()).min(T::one()))
}

/// Row index of the largest-magnitude entry in each column.
pub fn argmax_abs_per_column<T: Scalar>(m: &Matrix<T>) -> Vec<usize> {
    (0..m.cols())
        .map(|c| {
            let col = m.column(c);
            (0..col.len()).fold(0, |best, r| if col[r].abs() > col[best].abs() { r } else { best })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSample<T> {
    pub iteration: usize,
    /// Aligned context loadings, row-major primes × dimensions.
    pub loadings: Vec<T>,
    pub phi: Vec<T>,
    pub argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport<T> {
    pub ranks: [usize; 3],
    pub iterations: usize,
    pub skipped: usize,
    pub seed: u64,
    pub phi_threshold: f64,
    /// Reference loadings, row-major primes × dimensions.
    pub reference: Vec<T>,
    pub reference_argmax: Vec<usize>,
    pub loading_mean: Vec<T>,
    pub loading_lo: Vec<T>,
    pub loading_hi: Vec<T>,
    pub phi_mean: Vec<T>,
    pub phi_fraction_above: Vec<f64>,
    pub argmax_agreement: Vec<f64>,
    pub samples: Vec<BootstrapSample<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub iterations: usize,
    pub seed: u64,
    pub level: f64,
    pub phi_threshold: f64,
    pub hooi: HooiOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            iterations: 1000,
            seed: 42,
            level: 0.95,
            phi_threshold: 0.95,
            hooi: HooiOptions::default(),
        }
    }
}

/// Resamples images with replacement, refits, aligns each context factor
/// to the full-data fit and summarises the spread. Iteration `b` draws from
/// a generator seeded with `seed + b`; failed fits are counted as skipped.
pub fn bootstrap_stability<T: Scalar>(
    t: &Tensor3<T>,
    ranks: [usize; 3],
    options: &BootstrapOptions,
) -> Result<StabilityReport<T>> {
    if options.iterations == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one iteration".into()));
    }
    let reference = hooi(t, ranks, &options.hooi)?;
    let u_ref = reference.context_loadings();
    let ref_argmax = argmax_abs_per_column(&u_ref);
    let n = t.dims()[0];
    let (p, r) = (u_ref.rows(), u_ref.cols());

    let fits = par_map(
        options.iterations,
        default_threads(),
        |b| -> Option<BootstrapSample<T>> {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(b as u64));
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let model = hooi(&t.select_mode0(&idx), ranks, &options.hooi).ok()?;
            let (aligned, _) = procrustes_align(model.u_context(), &u_ref).ok()?;
            let phi = (0..r)
                .map(|c| congruence(&aligned.column(c), &u_ref.column(c)))
                .collect::<Result<Vec<T>>>()
                .ok()?;
            Some(BootstrapSample {
                iteration: b,
                argmax: argmax_abs_per_column(&aligned),
                loadings: aligned.into_vec(),
                phi,
            })
        },
    );
    let samples: Vec<BootstrapSample<T>> = fits.into_iter().flatten().collect();
    let skipped = options.iterations - samples.len();
    if samples.is_empty() {
        return Err(Error::Degenerate("every bootstrap fit failed".into()));
    }

    let kept = samples.len() as f64;
    let alpha = (1.0 - options.level) / 2.0;
    let mut loading_mean = vec![T::zero(); p * r];
    let mut loading_lo = vec![T::zero(); p * r];
    let mut loading_hi = vec![T::zero(); p * r];
    for cell in 0..p * r {
        let mut vals: Vec<T> = samples.iter().map(|s| s.loadings[cell]).collect();
        loading_mean[cell] = vals.iter().copied().sum::<T>() / T::lit(kept);
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite loadings"));
        loading_lo[cell] = quantile_sorted(&vals, alpha);
        loading_hi[cell] = quantile_sorted(&vals, 1.0 - alpha);
    }
    let threshold = T::lit(options.phi_threshold);
    let phi_mean = (0..r)
        .map(|c| samples.iter().map(|s| s.phi[c]).sum::<T>() / T::lit(kept))
        .collect();
    let phi_fraction_above = (0..r)
        .map(|c| samples.iter().filter(|s| s.phi[c] > threshold).count() as f64 / kept)
        .collect();
    let argmax_agreement = (0..r)
        .map(|c| samples.iter().filter(|s| s.argmax[c] == ref_argmax[c]).count() as f64 / kept)
        .collect();

    Ok(StabilityReport {
        ranks,
        iterations: options.iterations,
        skipped,
        seed: options.seed,
        phi_threshold: options.phi_threshold,
        reference: u_ref.into_vec(),
        reference_argmax: ref_argmax,
        loading_mean,
        loading_lo,
        loading_hi,
        phi_mean,
        phi_fraction_above,
        argmax_agreement,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSweepEntry<T> {
    pub ranks: [usize; 3],
    pub explained_variance: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSweepResult<T> {
    pub entries: Vec<RankSweepEntry<T>>,
}

impl<T: Scalar> RankSweepResult<T> {
    /// True when every rank tuple that dominates an earlier one (entrywise)
    /// has at least its explained variance, up to `slack`.
    pub fn is_monotone(&self, slack: T) -> bool {
        self.entries.iter().enumerate().all(|(i, later)| {
            self.entries[..i].iter().all(|earlier| {
                let nested = (0..3).all(|m| earlier.ranks[m] <= later.ranks[m]);
                !nested || later.explained_variance + slack >= earlier.explained_variance
            })
        })
    }
}

pub fn rank_sweep<T: Scalar>(
    t: &Tensor3<T>,
    ranks: &[[usize; 3]],
    options: &HooiOptions,
) -> Result<RankSweepResult<T>> {
    let entries = ranks
        .iter()
        .map(|&r| {
            hooi(t, r, options).map(|m| RankSweepEntry {
                ranks: r,
                explained_variance: m.explained_variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankSweepResult { entries })
}

/// Parses `10,3,10` into a rank triple.
pub fn parse_ranks(text: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::InvalidInput(format!("expected three ranks, got {text:?}")));
    }
    let mut out = [0usize; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad rank {p:?} in {text:?}")))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelManifest {
    ranks: [usize; 3],
    dims: [usize; 3],
    explained_variance: f64,
    init_explained_variance: f64,
    iterations: usize,
    converged: bool,
    dtype: String,
    blobs: [String; 4],
}

const BLOBS: [&str; 4] = ["core.f64", "u_image.f64", "u_context.f64", "u_embed.f64"];

fn write_blob<T: Scalar>(path: &Path, values: &[T]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for &v in values {
        bytes.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_blob<T: Scalar>(path: &Path, expected: usize) -> Result<Vec<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::DimensionMismatch(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}

impl<T: Scalar> TuckerModel<T> {
    /// Writes the core and factors as little-endian f64 blobs plus `model.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_blob(&dir.join(BLOBS[0]), self.core.as_slice())?;
        for (f, name) in self.factors.iter().zip(&BLOBS[1..]) {
            write_blob(&dir.join(name), f.as_slice())?;
        }
        let manifest = ModelManifest {
            ranks: self.ranks,
            dims: [self.factors[0].rows(), self.factors[1].rows(), self.factors[2].rows()],
            explained_variance: self.explained_variance.as_f64(),
            init_explained_variance: self.init_explained_variance.as_f64(),
            iterations: self.iterations,
            converged: self.converged,
            dtype: "f64-le".into(),
            blobs: BLOBS.map(String::from),
        };
        let path = dir.join("model.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("model.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: ModelManifest = serde_json::from_str(&text)?;
        let core = Tensor3::from_vec(m.ranks, read_blob(&dir.join(BLOBS[0]), m.ranks.iter().product())?)?;
        let factor = |mode: usize| -> Result<Matrix<T>> {
            let data = read_blob(&dir.join(BLOBS[mode + 1]), m.dims[mode] * m.ranks[mode])?;
            Matrix::from_row_major(m.dims[mode], m.ranks[mode], data)
        };
        Ok(Self {
            core,
            factors: [factor(0)?, factor(1)?, factor(2)?],
            ranks: m.ranks,
            explained_variance: T::lit(m.explained_variance),
            iterations: m.iterations,
            converged: m.converged,
            init_explained_variance: T::lit(m.init_explained_variance),
        })
    }
}

/// Context loadings as CSV: one row per prime, one column per dimension.
pub fn loadings_csv<T: Scalar>(loadings: &Matrix<T>, primes: &[PrimeId]) -> String {
    let mut out = String::from("prime,label");
    for c in 0..loadings.cols() {
        out.push_str(&format!(",dim{}", c + 1));
    }
    out.push('\n');
    for (r, p) in primes.iter().enumerate() {
        out.push_str(&format!("{p},{}", p.label()));
        for c in 0..loadings.cols() {
            out.push_str(&format!(",{:.4}", loadings[(r, c)].as_f64()));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        orthonormalize_columns(&Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng)))
    }

    fn planted(dims: [usize; 3], ranks: [usize; 3], seed: u64) -> (Tensor3<f64>, [Matrix<f64>; 3]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let core = Tensor3::from_fn(ranks, |_, _, _| StandardNormal.sample(&mut rng));
        let factors = [
            random_orthonormal(dims[0], ranks[0], &mut rng),
            random_orthonormal(dims[1], ranks[1], &mut rng),
            random_orthonormal(dims[2], ranks[2], &mut rng),
        ];
        (expand_all(&core, &factors).unwrap(), factors)
    }

    #[test]
    fn exact_low_rank_tensor_is_recovered() {
        let (t, truth) = planted([20, 7, 15], [4, 3, 5], 1);
        let m = hooi(&t, [4, 3, 5], &HooiOptions::default()).unwrap();
        assert!((m.explained_variance - 1.0).abs() < 1e-6, "{}", m.explained_variance);
        for u in &m.factors {
            assert!(u.orthonormality_error() < 1e-8);
        }
        let (aligned, _) = procrustes_align(m.u_context(), &truth[1]).unwrap();
        for c in 0..3 {
            assert!(congruence(&aligned.column(c), &truth[1].column(c)).unwrap() > 0.999999);
        }
    }

    #[test]
    fn full_ranks_are_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t: Tensor3<f64> = Tensor3::from_fn([6, 7, 5], |_, _, _| StandardNormal.sample(&mut rng));
        let m = hooi(&t, [6, 7, 5], &HooiOptions::default()).unwrap();
        assert!((m.explained_variance - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hooi_never_loses_to_its_initialisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t: Tensor3<f64> = Tensor3::from_fn([12, 7, 10], |_, _, _| StandardNormal.sample(&mut rng));
        let m = hooi(&t, [3, 2, 3], &HooiOptions::default()).unwrap();
        assert!(m.explained_variance >= m.init_explained_variance - 1e-12);
    }

    #[test]
    fn randomized_init_matches_on_exact_tensor() {
        let (t, _) = planted([30, 7, 20], [3, 3, 3], 4);
        let opts = HooiOptions {
            init: Init::RandomizedSketch { seed: 5, oversample: 5 },
            ..HooiOptions::default()
        };
        let m = hooi(&t, [3, 3, 3], &opts).unwrap();
        assert!((m.explained_variance - 1.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_inputs() {
        let t = Tensor3::<f64>::zeros([3, 7, 4]);
        assert!(hooi(&t, [2, 2, 2], &HooiOptions::default()).is_err());
        let t: Tensor3<f64> = Tensor3::from_fn([3, 7, 4], |i, j, k| (i + j + k) as f64);
        assert!(hooi(&t, [4, 2, 2], &HooiOptions::default()).is_err());
        assert!(hooi(&t, [0, 2, 2], &HooiOptions::default()).is_err());
    }

    #[test]
    fn sign_convention_makes_max_entry_positive() {
        let (t, _) = planted([10, 7, 8], [2, 3, 2], 8);
        let m = hooi(&t, [2, 3, 2], &HooiOptions::default()).unwrap();
        for u in &m.factors {
            for (c, r) in argmax_abs_per_column(u).into_iter().enumerate() {
                assert!(u[(r, c)] > 0.0);
            }
        }
        let back = m.reconstruct().unwrap();
        assert!(explained_variance(&t, &back).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn variance_shares() {
        let (t, _) = planted([10, 7, 8], [2, 1, 2], 2);
        let m = hooi(&t, [2, 1, 2], &HooiOptions::default()).unwrap();
        assert_eq!(m.factor_variance_shares().unwrap(), vec![1.0]);
        let (t, _) = planted([10, 7, 8], [2, 3, 2], 2);
        let shares = hooi(&t, [2, 3, 2], &HooiOptions::default())
            .unwrap()
            .factor_variance_shares()
            .unwrap();
        assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn procrustes_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u_ref = random_orthonormal(7, 3, &mut rng);
        let q = random_orthonormal(3, 3, &mut rng);
        let rotated = u_ref.matmul(&q.transpose()).unwrap();
        let (aligned, _) = procrustes_align(&rotated, &u_ref).unwrap();
        let diff = Matrix::from_fn(7, 3, |r, c| aligned[(r, c)] - u_ref[(r, c)]);
        assert!(diff.frobenius_norm() < 1e-8);

        let (_, ident) = procrustes_align(&u_ref, &u_ref).unwrap();
        let off = Matrix::from_fn(3, 3, |r, c| ident[(r, c)] - if r == c { 1.0 } else { 0.0 });
        assert!(off.frobenius_norm() < 1e-10);

        let col = Matrix::from_fn(7, 1, |r, _| u_ref[(r, 0)]);
        let neg = col.map(|x| -x);
        let (flipped, _) = procrustes_align(&neg, &col).unwrap();
        assert!(congruence(&flipped.column(0), &col.column(0)).unwrap() > 1.0 - 1e-12);
        assert!(procrustes_align(&col, &u_ref).is_err());
    }

    #[test]
    fn congruence_cases() {
        let x = [1.0f64, 2.0, -0.5];
        assert!((congruence(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((congruence(&x, &x.map(|v| -v)).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(congruence::<f64>(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(congruence::<f64>(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn single_iteration_bootstrap_is_degenerate_interval() {
        let (t, _) = planted([15, 7, 6], [2, 2, 2], 6);
        let opts = BootstrapOptions {
            iterations: 1,
            ..BootstrapOptions::default()
        };
        let r = bootstrap_stability(&t, [2, 2, 2], &opts).unwrap();
        assert_eq!(r.loading_lo, r.loading_hi);
        assert_eq!(r.loading_lo, r.loading_mean);
    }

    #[test]
    fn bootstrap_is_deterministic_and_leaves_reference_alone() {
        let (t, _) = planted([15, 7, 6], [2, 2, 2], 6);
        let opts = BootstrapOptions {
            iterations: 8,
            ..BootstrapOptions::default()
        };
        let a = bootstrap_stability(&t, [2, 2, 2], &opts).unwrap();
        let b = bootstrap_stability(&t, [2, 2, 2], &opts).unwrap();
        assert_eq!(a, b);
        let reference = hooi(&t, [2, 2, 2], &opts.hooi).unwrap();
        assert_eq!(a.reference, reference.context_loadings().into_vec());
    }

    #[test]
    fn rank_sweep_full_rank_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t: Tensor3<f64> = Tensor3::from_fn([8, 7, 6], |_, _, _| StandardNormal.sample(&mut rng));
        let sweep = rank_sweep(
            &t,
            &[[2, 3, 2], [4, 3, 4], [6, 3, 5], [8, 7, 6]],
            &HooiOptions::default(),
        )
        .unwrap();
        assert!(sweep.is_monotone(1e-12));
        assert!((sweep.entries[3].explained_variance - 1.0).abs() < 1e-8);
    }

    #[test]
    fn model_round_trip() {
        let (t, _) = planted([9, 7, 5], [2, 3, 2], 13);
        let m = hooi(&t, [2, 3, 2], &HooiOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(TuckerModel::<f64>::load(dir.path()).unwrap(), m);
    }

    #[test]
    fn ranks_parse() {
        assert_eq!(parse_ranks("10,3,10").unwrap(), [10, 3, 10]);
        assert!(parse_ranks("10,3").is_err());
        assert!(parse_ranks("a,b,c").is_err());
    }
}
