//! Best rank-one approximation and the Hotelling deflation loop.
//!
//! A best rank-one fit `λ̂ u^⊗d` of a symmetric tensor is found by tensor
//! power iteration `u ← normalize(T · u^{d−1})` from several random unit
//! initializations, keeping the converged candidate with the largest
//! objective `T · u^d`. Deflation subtracts each fit before computing the
//! next, and summary statistics record the alignments of the fitted
//! directions with the ground-truth components and with each other.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::{substream, STREAM_RESTART_BASE};
use crate::spike_model::GroundTruth;
use crate::symtensor::{SymmetricTensor, TensorError, UnitVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Error)]
pub enum DeflationError {
    #[error(
        "power iteration did not converge at deflation step {step}: best iterate distance {best_delta:e} after {max_iters} iterations"
    )]
    NoConvergence {
        step: usize,
        best_delta: f64,
        max_iters: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Power-iteration controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerIterOptions {
    pub max_iters: usize,
    /// Tolerance on the successive-iterate distance
    /// `min(‖u_{k+1} − u_k‖, ‖u_{k+1} + u_k‖)`.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for PowerIterOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-10,
            restarts: 10,
            seed: 0,
        }
    }
}

/// A converged rank-one fit `λ̂ u^⊗d`.
#[derive(Debug, Clone)]
pub struct RankOneFit {
    pub lambda_hat: f64,
    pub u: UnitVector,
    /// `T · u^d`; equals `lambda_hat`.
    pub objective: f64,
    /// `‖T·u^{d−1} − λ̂ u‖`, the eigenpair certificate.
    pub eig_residual: f64,
    /// Iterations used by the winning restart.
    pub iterations: usize,
    /// How many of the restarts converged.
    pub converged_restarts: usize,
    /// False when some iteration of the winning restart decreased the
    /// objective by more than 1e-12 relative to two steps earlier
    /// (diagnostic; plain tensor power iteration has no universal
    /// monotonicity guarantee).
    pub monotone: bool,
    /// Always false: the fit is the best over finitely many restarts, which
    /// certifies a critical point but not the global maximizer.
    pub certified_global: bool,
}

/// Fits and (optionally) the intermediate tensors of a deflation run.
#[derive(Debug, Clone)]
pub struct DeflationResult {
    pub fits: Vec<RankOneFit>,
    /// `S_0, …, S_r` when requested (spectrum diagnostics); `S_{i}` is the
    /// input tensor minus the first `i` fitted rank-one terms.
    pub intermediates: Option<Vec<SymmetricTensor>>,
}

/// Observable statistics of a deflation run against ground truth:
/// `lambda_hat[i] = λ̂_i`, `rho_hat[(i,j)] = ⟨u_i, x_j⟩`,
/// `eta_hat[(i,j)] = ⟨u_i, u_j⟩`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryStatistics {
    pub lambda_hat: Vec<f64>,
    pub rho_hat: DMatrix<f64>,
    pub eta_hat: DMatrix<f64>,
}

struct Candidate {
    u: UnitVector,
    objective: f64,
    iterations: usize,
    monotone: bool,
}

fn random_unit(rng: &mut impl Rng, n: usize) -> UnitVector {
    loop {
        let v = nalgebra::DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(u) = UnitVector::normalized(v) {
            return u;
        }
    }
}

/// Candidate comparison: larger objective wins; exact ties go to the
/// lexicographically larger direction so parallel or reordered reductions
/// agree.
fn better(a: &Candidate, b: &Candidate) -> bool {
    if a.objective != b.objective {
        return a.objective > b.objective;
    }
    let (ac, bc) = (a.u.coords(), b.u.coords());
    for i in 0..ac.len() {
        if ac[i] != bc[i] {
            return ac[i] > bc[i];
        }
    }
    false
}

fn power_iterate(
    tensor: &SymmetricTensor,
    mut u: UnitVector,
    opts: &PowerIterOptions,
) -> Result<(Option<Candidate>, f64), TensorError> {
    let mut best_delta = f64::INFINITY;
    let mut monotone = true;
    // objectives two and one steps back, for the even-step safeguard
    // against the sign oscillation of odd orders
    let mut prev2 = f64::NEG_INFINITY;
    let mut prev1 = f64::NEG_INFINITY;
    for it in 1..=opts.max_iters {
        let v = tensor.contract_vector(&u)?;
        let objective = v.dot(u.coords()); // T·u^d at the current iterate
        if objective < prev2 - 1e-12 {
            monotone = false;
        }
        prev2 = prev1;
        prev1 = objective;

        let norm = v.norm();
        if norm <= 1e-300 {
            // degenerate direction (zero tensor): accept as a trivial fit
            return Ok((
                Some(Candidate {
                    u,
                    objective: 0.0,
                    iterations: it,
                    monotone,
                }),
                0.0,
            ));
        }
        let next = UnitVector::normalized(v)?;
        let diff = (next.coords() - u.coords()).norm();
        let sum = (next.coords() + u.coords()).norm();
        let delta = diff.min(sum);
        best_delta = best_delta.min(delta);
        u = next;
        if delta <= opts.tol {
            let objective = tensor.contract_scalar(&u)?;
            return Ok((
                Some(Candidate {
                    u,
                    objective,
                    iterations: it,
                    monotone,
                }),
                best_delta,
            ));
        }
    }
    Ok((None, best_delta))
}

fn best_rank1_step(
    tensor: &SymmetricTensor,
    opts: &PowerIterOptions,
    step: usize,
) -> Result<RankOneFit, DeflationError> {
    let n = tensor.dim();
    let d = tensor.order();
    let mut best: Option<Candidate> = None;
    let mut converged_restarts = 0usize;
    let mut best_delta_overall = f64::INFINITY;

    for k in 0..opts.restarts {
        let stream = STREAM_RESTART_BASE + (step * opts.restarts + k) as u64;
        let mut rng = substream(opts.seed, stream);
        let init = random_unit(&mut rng, n);
        let (candidate, best_delta) = power_iterate(tensor, init, opts)?;
        best_delta_overall = best_delta_overall.min(best_delta);
        if let Some(c) = candidate {
            converged_restarts += 1;
            if best.as_ref().is_none_or(|b| better(&c, b)) {
                best = Some(c);
            }
        }
    }

    let Some(winner) = best else {
        return Err(DeflationError::NoConvergence {
            step,
            best_delta: best_delta_overall,
            max_iters: opts.max_iters,
        });
    };

    let mut u = winner.u;
    let v = tensor.contract_vector(&u)?;
    let mut lambda_hat = v.dot(u.coords());
    let mut eig_vec = v;
    // the maximizer convention for odd orders: u → −u negates the
    // objective, so report the nonnegative representative
    if d % 2 == 1 && lambda_hat < 0.0 {
        u = u.flipped();
        lambda_hat = -lambda_hat;
        eig_vec = -eig_vec;
    }
    let eig_residual = (&eig_vec - u.coords() * lambda_hat).norm();
    Ok(RankOneFit {
        lambda_hat,
        objective: lambda_hat,
        u,
        eig_residual,
        iterations: winner.iterations,
        converged_restarts,
        monotone: winner.monotone,
        certified_global: false,
    })
}

/// Best rank-one approximation of a symmetric tensor by power iteration
/// with random restarts.
pub fn best_rank1(
    tensor: &SymmetricTensor,
    opts: &PowerIterOptions,
) -> Result<RankOneFit, DeflationError> {
    best_rank1_step(tensor, opts, 0)
}

/// `r` deflation steps: fit, subtract, repeat; statistics are computed
/// against `truth.components`. `S_0` is the input and `λ̂_0 = 0` by
/// convention, so the first fit sees the tensor untouched.
pub fn deflate(
    tensor: &SymmetricTensor,
    r: usize,
    truth: &GroundTruth,
    opts: &PowerIterOptions,
    keep_intermediates: bool,
) -> Result<(DeflationResult, SummaryStatistics), DeflationError> {
    let mut fits = Vec::with_capacity(r);
    let mut intermediates = keep_intermediates.then(|| vec![tensor.clone()]);
    let mut current = tensor.clone();
    for step in 0..r {
        let fit = best_rank1_step(&current, opts, step)?;
        current = current.subtract_rank1(fit.lambda_hat, &fit.u)?;
        if let Some(store) = intermediates.as_mut() {
            store.push(current.clone());
        }
        fits.push(fit);
    }
    let stats = summary_statistics(&fits, truth);
    Ok((DeflationResult { fits, intermediates }, stats))
}

/// Summary statistics of fitted directions against ground truth. No sign
/// canonicalization is applied beyond the odd-order convention of
/// [`best_rank1`].
pub fn summary_statistics(fits: &[RankOneFit], truth: &GroundTruth) -> SummaryStatistics {
    let k = fits.len();
    let r = truth.components.len();
    let lambda_hat = fits.iter().map(|f| f.lambda_hat).collect();
    let rho_hat = DMatrix::from_fn(k, r, |i, j| fits[i].u.dot(&truth.components[j]));
    let mut eta_hat = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = fits[i].u.dot(&fits[j].u);
            eta_hat[(i, j)] = v;
            eta_hat[(j, i)] = v;
        }
    }
    SummaryStatistics {
        lambda_hat,
        rho_hat,
        eta_hat,
    }
}
