//! Ground-truth spike generation and spiked-tensor sampling.
//!
//! The model is `S = Σ_i β_i x_i^⊗d + (noise_scale/√n) W` with unit-norm
//! components `x_i` whose pairwise inner products are prescribed by a Gram
//! matrix, and `W` a symmetrized i.i.d. Gaussian tensor. Everything is a pure
//! function of `(params, seed)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::{substream, STREAM_FRAME, STREAM_NOISE};
use crate::symtensor::{SymmetricTensor, TensorError, UnitVector};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("signal weights must be positive, beta[{index}] = {value}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("rank {r} exceeds dimension {n}")]
    RankExceedsDim { r: usize, n: usize },
    #[error("gram matrix must be square with unit diagonal and symmetric")]
    MalformedGram,
    #[error("gram matrix is not positive semidefinite")]
    GramNotPsd,
    #[error("noise scale must be nonnegative, got {0}")]
    NegativeNoiseScale(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Ground-truth parameters of the spiked model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeParams {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    /// Signal weights, all positive.
    pub beta: Vec<f64>,
    /// Target correlations `⟨x_i, x_j⟩`; symmetric with unit diagonal.
    pub gram: DMatrix<f64>,
    /// 1 for the noisy model, 0 for noiseless tests.
    pub noise_scale: f64,
    pub seed: u64,
}

impl SpikeParams {
    pub fn new(
        n: usize,
        d: usize,
        beta: Vec<f64>,
        gram: DMatrix<f64>,
        noise_scale: f64,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let r = beta.len();
        for (index, &value) in beta.iter().enumerate() {
            if !(value > 0.0) {
                return Err(ModelError::NonPositiveWeight { index, value });
            }
        }
        if r > n {
            return Err(ModelError::RankExceedsDim { r, n });
        }
        check_gram_shape(&gram, r)?;
        if !(noise_scale >= 0.0) {
            return Err(ModelError::NegativeNoiseScale(noise_scale));
        }
        Ok(Self {
            n,
            d,
            r,
            beta,
            gram,
            noise_scale,
            seed,
        })
    }
}

/// Spike components realized for a concrete seed.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub components: Vec<UnitVector>,
    pub params: SpikeParams,
}

impl GroundTruth {
    /// Draws the components for `params` from the frame stream of
    /// `params.seed`.
    pub fn generate(params: SpikeParams) -> Result<Self, ModelError> {
        let components = correlated_unit_vectors(params.n, &params.gram, params.seed)?;
        Ok(Self { components, params })
    }
}

fn check_gram_shape(gram: &DMatrix<f64>, r: usize) -> Result<(), ModelError> {
    if gram.nrows() != r || gram.ncols() != r {
        return Err(ModelError::MalformedGram);
    }
    for i in 0..r {
        if (gram[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(ModelError::MalformedGram);
        }
        for j in 0..i {
            if (gram[(i, j)] - gram[(j, i)]).abs() > 1e-12 {
                return Err(ModelError::MalformedGram);
            }
        }
    }
    Ok(())
}

/// Unit vectors with pairwise inner products prescribed by `gram`.
///
/// Construction: a random orthonormal `n×r` frame (QR of an i.i.d. Gaussian
/// matrix) times the upper Cholesky factor of `gram`, so the correlations are
/// exact at any `n`.
pub fn correlated_unit_vectors(
    n: usize,
    gram: &DMatrix<f64>,
    seed: u64,
) -> Result<Vec<UnitVector>, ModelError> {
    let r = gram.nrows();
    check_gram_shape(gram, r)?;
    if r > n {
        return Err(ModelError::RankExceedsDim { r, n });
    }
    let chol = nalgebra::Cholesky::new(gram.clone()).ok_or(ModelError::GramNotPsd)?;
    let upper = chol.l().transpose(); // gram = UᵀU

    let mut rng = substream(seed, STREAM_FRAME);
    let gaussian = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = gaussian.qr().q(); // n×r orthonormal columns

    let frame = q * upper;
    (0..r)
        .map(|i| {
            let col = DVector::from_column_slice(frame.column(i).as_slice());
            UnitVector::normalized(col).map_err(ModelError::Tensor)
        })
        .collect()
}

/// Symmetrized standard Gaussian tensor from the noise stream of `seed`.
///
/// Same seed, same tensor, bit for bit.
pub fn sample_noise(n: usize, d: usize, seed: u64) -> Result<SymmetricTensor, ModelError> {
    let mut rng = substream(seed, STREAM_NOISE);
    let raw: Vec<f64> = (0..n.pow(d as u32))
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    SymmetricTensor::symmetrize(&raw, d, n).map_err(ModelError::Tensor)
}

/// The spiked tensor `Σ_i β_i x_i^⊗d + (noise_scale/√n) W`.
pub fn sample_spiked_tensor(truth: &GroundTruth) -> Result<SymmetricTensor, ModelError> {
    let p = &truth.params;
    let mut tensor = SymmetricTensor::zeros(p.d, p.n)?;
    for (beta, x) in p.beta.iter().zip(truth.components.iter()) {
        tensor.add_rank1_in_place(*beta, x);
    }
    if p.noise_scale > 0.0 {
        let noise = sample_noise(p.n, p.d, p.seed)?;
        tensor.axpy_in_place(p.noise_scale / (p.n as f64).sqrt(), &noise);
    }
    Ok(tensor)
}
