//! Measuring how context primes shift the affordances a vision-language
//! model reports for the same scene.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the command-line tool. Jaccard
//! counts are exact and also available as a rational via
//! [`lexical::Jaccard::ratio`].

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod extraction;
pub mod inference;
pub mod lexical;
pub mod linalg;
pub mod parallel;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod synthetic;
pub mod tensor;
pub mod tucker;

pub use corpus::{PrimeId, Temperature, TrialKey, TrialPlan};
pub use error::{Error, Result};
pub use extraction::{Extraction, ParsedScene, ReferenceCondition};
pub use inference::{InferenceConfig, RawResponse};
pub use lexical::{Jaccard, Metric, PairTable};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Tensor64 = tensor::Tensor3<f64>;
pub type TuckerModel64 = tucker::TuckerModel<f64>;
pub type AffordanceTensor64 = embedding::AffordanceTensor<f64>;
pub type AffordanceTensor32 = embedding::AffordanceTensor<f32>;
pub type EmbeddingVector64 = embedding::EmbeddingVector<f64>;
pub type StabilityReport64 = tucker::StabilityReport<f64>;
pub type VarianceDecomposition64 = stats::VarianceDecomposition<f64>;
/// Exact Jaccard value.
pub type JaccardRatio = num_rational::Ratio<usize>;
