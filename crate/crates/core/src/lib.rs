//! Inference for variable-length Markov chains observed through i.i.d.
//! additive or multiplicative noise.
//!
//! The hidden chain is re-coded as an HMM over blocks of `k` symbols and
//! fitted by Baum-Welch over a grid of noise levels; the context tree is then
//! selected by BIC pruning of a sample drawn from the fitted block chain.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for common use.

pub mod baum_welch;
pub mod bic_ctm;
pub mod contamination;
pub mod context_tree;
pub mod error;
pub mod hmm_embedding;
pub mod pipeline;
pub mod presets;
pub mod rng;
pub mod scalar;
pub mod sequences;
pub mod vlmc_source;

pub use error::{Error, Result};
pub use scalar::Real;
pub use sequences::{Alphabet, ContextString, Symbol, SymbolSequence};

pub type ContextTreeF64 = context_tree::ContextTree<f64>;
pub type ContextTreeF32 = context_tree::ContextTree<f32>;
pub type HmmParamsF64 = hmm_embedding::HmmParams<f64>;
pub type HmmParamsF32 = hmm_embedding::HmmParams<f32>;
pub type NoiseSpecF64 = contamination::NoiseSpec<f64>;
pub type NoiseSpecF32 = contamination::NoiseSpec<f32>;
pub type FitResultF64 = baum_welch::FitResult<f64>;
pub type FitResultF32 = baum_welch::FitResult<f32>;
