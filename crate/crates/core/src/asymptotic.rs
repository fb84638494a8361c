//! The asymptotic equation system for limiting summary statistics, and its
//! numerical solution.
//!
//! In the large-`n` limit the deflation statistics `(λ_i, ρ_ij, η_ij)`
//! satisfy a coupled system of `r + r² + r(r−1)/2` equations in which the
//! model parameters `(β_j, α_ij)` appear polynomially and the eigenvalues
//! enter through the kernels `f`, `h`, `q` of [`crate::rmt`]:
//!
//! ```text
//!   block 1 (i ∈ [r]):      f(λ_i) = Σ_j β_j ρ_ij^d − Σ_{j<i} λ_j η_ij^d
//!   block 2 (i,j ∈ [r]):    h(λ_i) ρ_ij = Σ_k β_k α_jk ρ_ik^{d−1}
//!                                         − Σ_{k<i} λ_k ρ_kj η_ik^{d−1}
//!   block 3 (i, j < i):     [h(λ_i) + q(λ_j) η_ij^{d−2}] η_ij
//!                             = Σ_k β_k ρ_jk ρ_ik^{d−1}
//!                               − Σ_{k<i} λ_k η_kj η_ik^{d−1}
//! ```
//!
//! with the conventions `α_jj = 1`, `η_ii = 1`, and `η` symmetric. The same
//! residual map is solved in two directions:
//!
//! * **forward** — `(β, α)` known, solve for `(λ, ρ, η)`: predicts what
//!   deflation will measure;
//! * **inverse** — observed `(λ̂_1, λ̂_2, η̂_12)` fixed, solve for
//!   `(β_1, β_2, α, ρ)`: estimates the model from deflation output
//!   (rank 2, order 3).
//!
//! Both use damped Newton iteration on the analytic Jacobian, backtracking
//! on `½‖F‖²`, with a Levenberg–Marquardt step as fallback whenever the
//! Newton direction is unusable or leaves the domain `λ_i > γ_d (d−1)`.
//! Existence and uniqueness of roots is not claimed anywhere: a report
//! records which initialization produced the converged root.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deflation::SummaryStatistics;
use crate::rmt::{
    f_func, f_func_prime, h_func, h_func_prime, lambda_threshold, q_func, q_func_prime, RmtError,
};

/// Relative safety margin above `γ_d (d−1)` required of every eigenvalue
/// iterate; keeps Newton away from the branch-point singularity of `g`.
const DOMAIN_MARGIN: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("lambda = {lambda} is not above the domain threshold {threshold}")]
    Domain { lambda: f64, threshold: f64 },
    #[error(
        "observed eigenvalue {lambda} is below the detectability threshold {threshold}; estimation is undefined there"
    )]
    InfeasibleObservation { lambda: f64, threshold: f64 },
    #[error("jacobian is singular to working precision at iteration {at_iteration}; re-initialize the solve")]
    RankDeficient { at_iteration: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("operation requires order d = 3 and rank r = 2, got d = {d}, r = {r}")]
    Unsupported { d: usize, r: usize },
    #[error("model parameters invalid: {0}")]
    BadParams(String),
}

impl From<RmtError> for SolverError {
    fn from(e: RmtError) -> Self {
        match e {
            RmtError::BelowThreshold { z, threshold } => SolverError::Domain {
                lambda: z,
                threshold,
            },
            RmtError::InsideBulk { z, gamma } => SolverError::Domain {
                lambda: z,
                threshold: gamma,
            },
            other => SolverError::BadParams(other.to_string()),
        }
    }
}

/// Limiting summary statistics: eigenvalues, alignments with the model
/// components, and the strictly-lower triangle of the alignments between
/// fitted directions (`η_ii = 1` implicitly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitStats {
    pub lambda: Vec<f64>,
    pub rho: DMatrix<f64>,
    pub eta_lower: Vec<f64>,
}

impl LimitStats {
    pub fn new(lambda: Vec<f64>, rho: DMatrix<f64>, eta_lower: Vec<f64>) -> Result<Self, SolverError> {
        let r = lambda.len();
        if rho.nrows() != r || rho.ncols() != r {
            return Err(SolverError::Shape(format!(
                "rho must be {r}x{r}, got {}x{}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        if eta_lower.len() != tri_len(r) {
            return Err(SolverError::Shape(format!(
                "eta_lower must have length {}, got {}",
                tri_len(r),
                eta_lower.len()
            )));
        }
        Ok(Self {
            lambda,
            rho,
            eta_lower,
        })
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// `η_ij` with the symmetric/unit-diagonal convention.
    pub fn eta(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            self.eta_lower[tri_index(i.max(j), i.min(j))]
        }
    }

    /// Empirical initialization: read the statistics of one finite-`n` run
    /// as a starting point for the limiting system.
    pub fn from_summary(stats: &SummaryStatistics) -> Self {
        let r = stats.lambda_hat.len();
        let mut eta_lower = Vec::with_capacity(tri_len(r));
        for i in 1..r {
            for j in 0..i {
                eta_lower.push(stats.eta_hat[(i, j)]);
            }
        }
        Self {
            lambda: stats.lambda_hat.clone(),
            rho: stats.rho_hat.clone(),
            eta_lower,
        }
    }
}

/// Model-side unknowns of the system: positive weights and the component
/// Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub gram: DMatrix<f64>,
}

impl ModelParams {
    pub fn new(beta: Vec<f64>, gram: DMatrix<f64>) -> Result<Self, SolverError> {
        let r = beta.len();
        if let Some(&bad) = beta.iter().find(|&&b| !(b > 0.0)) {
            return Err(SolverError::BadParams(format!(
                "weights must be positive, got {bad}"
            )));
        }
        if gram.nrows() != r || gram.ncols() != r {
            return Err(SolverError::BadParams(format!(
                "gram must be {r}x{r}, got {}x{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        for i in 0..r {
            if (gram[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(SolverError::BadParams("gram diagonal must be 1".into()));
            }
            for j in 0..i {
                if (gram[(i, j)] - gram[(j, i)]).abs() > 1e-12 {
                    return Err(SolverError::BadParams("gram must be symmetric".into()));
                }
            }
        }
        Ok(Self { beta, gram })
    }

    /// Rank-2 parameters with a single correlation `α`.
    pub fn rank2(beta1: f64, beta2: f64, alpha: f64) -> Result<Self, SolverError> {
        Self::new(
            vec![beta1, beta2],
            DMatrix::from_row_slice(2, 2, &[1.0, alpha, alpha, 1.0]),
        )
    }

    pub fn rank(&self) -> usize {
        self.beta.len()
    }
}

/// Where the converged root's initialization came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitSource {
    /// Simulated summary statistics of a finite-`n` run.
    Empirical,
    /// Caller-provided starting point.
    User,
    /// Warm-started path from a strongly supercritical rescaling of the
    /// weights.
    Continuation,
}

/// Inverse-mode solution: recovered model parameters plus the alignment
/// matrix consistent with them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InverseSolution {
    pub params: ModelParams,
    pub rho: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveSolution {
    Forward(LimitStats),
    Inverse(InverseSolution),
}

/// Outcome of a forward or inverse solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: SolveSolution,
    /// `‖F‖_∞` at the final iterate.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub init_source: InitSource,
}

/// Newton controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 200,
        }
    }
}

pub(crate) fn tri_len(r: usize) -> usize {
    r * (r - 1) / 2
}

/// Packed index of the strictly-lower-triangular pair `(i, j)`, `i > j`.
pub(crate) fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(i > j);
    i * (i - 1) / 2 + j
}

struct Kernels {
    f: Vec<f64>,
    h: Vec<f64>,
    q: Vec<f64>,
    f_prime: Vec<f64>,
    h_prime: Vec<f64>,
    q_prime: Vec<f64>,
}

impl Kernels {
    fn eval(lambda: &[f64], d: usize) -> Result<Self, SolverError> {
        let n = lambda.len();
        let mut k = Kernels {
            f: Vec::with_capacity(n),
            h: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f_prime: Vec::with_capacity(n),
            h_prime: Vec::with_capacity(n),
            q_prime: Vec::with_capacity(n),
        };
        for &z in lambda {
            k.f.push(f_func(z, d)?);
            k.h.push(h_func(z, d)?);
            k.q.push(q_func(z, d)?);
            k.f_prime.push(f_func_prime(z, d)?);
            k.h_prime.push(h_func_prime(z, d)?);
            k.q_prime.push(q_func_prime(z, d)?);
        }
        Ok(k)
    }
}

/// Stacked residual of the limiting system at `(stats, params)`:
/// `r` eigenvalue equations, `r²` component-alignment equations, and
/// `r(r−1)/2` cross-alignment equations, in that order.
pub fn system_residual(
    stats: &LimitStats,
    params: &ModelParams,
    d: usize,
) -> Result<DVector<f64>, SolverError> {
    check_shapes(stats, params)?;
    let r = stats.rank();
    let kernels = Kernels::eval(&stats.lambda, d)?;
    let di = d as i32;
    let rho = &stats.rho;
    let beta = &params.beta;
    let gram = &params.gram;
    let rows = r + r * r + tri_len(r);
    let mut out = DVector::zeros(rows);

    // block 1: eigenvalue equations
    for i in 0..r {
        let mut acc = 0.0;
        for j in 0..r {
            acc += beta[j] * rho[(i, j)].powi(di);
        }
        acc -= kernels.f[i];
        for j in 0..i {
            acc -= stats.lambda[j] * stats.eta(i, j).powi(di);
        }
        out[i] = acc;
    }

    // block 2: alignments with model components
    for i in 0..r {
        for j in 0..r {
            let mut acc = 0.0;
            for k in 0..r {
                acc += beta[k] * gram[(j, k)] * rho[(i, k)].powi(di - 1);
            }
            acc -= kernels.h[i] * rho[(i, j)];
            for k in 0..i {
                acc -= stats.lambda[k] * rho[(k, j)] * stats.eta(i, k).powi(di - 1);
            }
            out[r + i * r + j] = acc;
        }
    }

    // block 3: cross-alignments between fitted directions
    for i in 1..r {
        for j in 0..i {
            let eta_ij = stats.eta(i, j);
            let mut acc = 0.0;
            for k in 0..r {
                acc += beta[k] * rho[(j, k)] * rho[(i, k)].powi(di - 1);
            }
            acc -= (kernels.h[i] + kernels.q[j] * eta_ij.powi(di - 2)) * eta_ij;
            for k in 0..i {
                acc -= stats.lambda[k] * stats.eta(k, j) * stats.eta(i, k).powi(di - 1);
            }
            out[r + r * r + tri_index(i, j)] = acc;
        }
    }
    Ok(out)
}

fn check_shapes(stats: &LimitStats, params: &ModelParams) -> Result<(), SolverError> {
    let r = stats.rank();
    if params.rank() != r {
        return Err(SolverError::Shape(format!(
            "stats have rank {r} but params have rank {}",
            params.rank()
        )));
    }
    if stats.rho.nrows() != r || stats.rho.ncols() != r || stats.eta_lower.len() != tri_len(r) {
        return Err(SolverError::Shape("stats fields disagree on rank".into()));
    }
    Ok(())
}

/// Analytic Jacobian of [`system_residual`] with respect to every quantity,
/// columns ordered `[λ | ρ (row-major) | η (lower) | β | α (lower)]`.
pub fn system_jacobian(
    stats: &LimitStats,
    params: &ModelParams,
    d: usize,
) -> Result<DMatrix<f64>, SolverError> {
    check_shapes(stats, params)?;
    let r = stats.rank();
    let tri = tri_len(r);
    let kernels = Kernels::eval(&stats.lambda, d)?;
    let di = d as i32;
    let dm1 = (d - 1) as f64;
    let df = d as f64;
    let rho = &stats.rho;
    let lambda = &stats.lambda;
    let beta = &params.beta;
    let gram = &params.gram;

    let rows = r + r * r + tri;
    let cols = r + r * r + tri + r + tri;
    let col_lambda = |i: usize| i;
    let col_rho = |i: usize, j: usize| r + i * r + j;
    let col_eta = |i: usize, j: usize| r + r * r + tri_index(i.max(j), i.min(j));
    let col_beta = |j: usize| r + r * r + tri + j;
    let col_alpha = |i: usize, j: usize| r + r * r + tri + r + tri_index(i.max(j), i.min(j));
    let mut jac = DMatrix::zeros(rows, cols);

    // block 1 rows
    for i in 0..r {
        let row = i;
        jac[(row, col_lambda(i))] -= kernels.f_prime[i];
        for j in 0..r {
            jac[(row, col_rho(i, j))] += df * beta[j] * rho[(i, j)].powi(di - 1);
            jac[(row, col_beta(j))] += rho[(i, j)].powi(di);
        }
        for j in 0..i {
            let eta_ij = stats.eta(i, j);
            jac[(row, col_lambda(j))] -= eta_ij.powi(di);
            jac[(row, col_eta(i, j))] -= df * lambda[j] * eta_ij.powi(di - 1);
        }
    }

    // block 2 rows
    for i in 0..r {
        for j in 0..r {
            let row = r + i * r + j;
            jac[(row, col_lambda(i))] -= kernels.h_prime[i] * rho[(i, j)];
            jac[(row, col_rho(i, j))] -= kernels.h[i];
            for k in 0..r {
                jac[(row, col_rho(i, k))] += dm1 * beta[k] * gram[(j, k)] * rho[(i, k)].powi(di - 2);
                jac[(row, col_beta(k))] += gram[(j, k)] * rho[(i, k)].powi(di - 1);
                if k != j {
                    jac[(row, col_alpha(j, k))] += beta[k] * rho[(i, k)].powi(di - 1);
                }
            }
            for k in 0..i {
                let eta_ik = stats.eta(i, k);
                jac[(row, col_lambda(k))] -= rho[(k, j)] * eta_ik.powi(di - 1);
                jac[(row, col_rho(k, j))] -= lambda[k] * eta_ik.powi(di - 1);
                jac[(row, col_eta(i, k))] -= dm1 * lambda[k] * rho[(k, j)] * eta_ik.powi(di - 2);
            }
        }
    }

    // block 3 rows
    for i in 1..r {
        for j in 0..i {
            let row = r + r * r + tri_index(i, j);
            let eta_ij = stats.eta(i, j);
            jac[(row, col_lambda(i))] -= kernels.h_prime[i] * eta_ij;
            jac[(row, col_lambda(j))] -= kernels.q_prime[j] * eta_ij.powi(di - 1);
            jac[(row, col_eta(i, j))] -=
                kernels.h[i] + dm1 * kernels.q[j] * eta_ij.powi(di - 2);
            for k in 0..r {
                jac[(row, col_beta(k))] += rho[(j, k)] * rho[(i, k)].powi(di - 1);
                jac[(row, col_rho(j, k))] += beta[k] * rho[(i, k)].powi(di - 1);
                jac[(row, col_rho(i, k))] += dm1 * beta[k] * rho[(j, k)] * rho[(i, k)].powi(di - 2);
            }
            for k in 0..i {
                let eta_ik = stats.eta(i, k);
                if k == j {
                    // η_kj = η_jj = 1 and η_ik = η_ij
                    jac[(row, col_lambda(j))] -= eta_ij.powi(di - 1);
                    jac[(row, col_eta(i, j))] -= dm1 * lambda[j] * eta_ij.powi(di - 2);
                } else {
                    jac[(row, col_lambda(k))] -= stats.eta(k, j) * eta_ik.powi(di - 1);
                    jac[(row, col_eta(k, j))] -= lambda[k] * eta_ik.powi(di - 1);
                    jac[(row, col_eta(i, k))] -=
                        dm1 * lambda[k] * stats.eta(k, j) * eta_ik.powi(di - 2);
                }
            }
        }
    }
    Ok(jac)
}

/// The seven-component residual map for rank 2, order 3, in its printed
/// row order: inputs are `(λ_1, λ_2, η_12)`, `(β_1, β_2, α)` and the 2×2
/// alignment matrix `ρ`.
pub fn psi(
    lambda_eta: &[f64; 3],
    beta_alpha: &[f64; 3],
    rho: &DMatrix<f64>,
) -> Result<[f64; 7], SolverError> {
    if rho.nrows() != 2 || rho.ncols() != 2 {
        return Err(SolverError::Shape("psi needs a 2x2 rho".into()));
    }
    let d = 3usize;
    let [l1, l2, eta] = *lambda_eta;
    let [b1, b2, alpha] = *beta_alpha;
    let (r11, r12, r21, r22) = (rho[(0, 0)], rho[(0, 1)], rho[(1, 0)], rho[(1, 1)]);
    let (f1, h1, q1) = (f_func(l1, d)?, h_func(l1, d)?, q_func(l1, d)?);
    let (f2, h2) = (f_func(l2, d)?, h_func(l2, d)?);

    Ok([
        b1 * r11.powi(3) + b2 * r12.powi(3) - f1,
        b1 * r11.powi(2) + b2 * alpha * r12.powi(2) - h1 * r11,
        b1 * alpha * r11.powi(2) + b2 * r12.powi(2) - h1 * r12,
        b1 * r21.powi(3) + b2 * r22.powi(3) - f2 - l1 * eta.powi(3),
        b1 * r21.powi(2) + b2 * alpha * r22.powi(2) - h2 * r21 - l1 * r11 * eta.powi(2),
        b1 * alpha * r21.powi(2) + b2 * r22.powi(2) - h2 * r22 - l1 * r12 * eta.powi(2),
        b1 * r11 * r21.powi(2) + b2 * r12 * r22.powi(2) - h2 * eta - (l1 + q1) * eta.powi(2),
    ])
}

/// Row permutation aligning [`system_residual`] (rank 2, order 3) with the
/// printed order of [`psi`]: `psi[k] = system[PSI_ROW_ORDER[k]]`.
pub const PSI_ROW_ORDER: [usize; 7] = [0, 2, 3, 1, 4, 5, 6];

// ---------------------------------------------------------------------------
// Newton machinery
// ---------------------------------------------------------------------------

struct NewtonOutcome {
    x: DVector<f64>,
    residual_norm: f64,
    iterations: usize,
    converged: bool,
}

fn is_domain_error(e: &SolverError) -> bool {
    matches!(e, SolverError::Domain { .. })
}

/// Damped Newton with Armijo backtracking on `½‖F‖²`; steps that leave the
/// domain are rejected by the line search, and a Levenberg–Marquardt step
/// stands in whenever the Newton direction is unusable.
fn damped_newton<E>(
    x0: DVector<f64>,
    opts: &SolverOptions,
    mut eval: E,
) -> Result<NewtonOutcome, SolverError>
where
    E: FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), SolverError>,
{
    let mut x = x0;
    let (mut f, mut jac) = eval(&x)?;
    let mut iterations = 0usize;

    while iterations < opts.max_iters {
        let norm = f.amax();
        if norm <= opts.tol {
            return Ok(NewtonOutcome {
                x,
                residual_norm: norm,
                iterations,
                converged: true,
            });
        }

        let f_sq = f.norm_squared();
        let newton_dir = jac
            .clone()
            .lu()
            .solve(&(-&f))
            .filter(|d| d.iter().all(|v| v.is_finite()) && d.norm() <= 1e12);
        let singular = newton_dir.is_none();

        let mut accepted: Option<(DVector<f64>, DVector<f64>, DMatrix<f64>)> = None;
        if let Some(dir) = newton_dir {
            let mut t = 1.0;
            for _ in 0..30 {
                let xt = &x + &dir * t;
                match eval(&xt) {
                    Ok((ft, jt)) => {
                        if ft.norm_squared() <= (1.0 - 1e-4 * t) * f_sq {
                            accepted = Some((xt, ft, jt));
                            break;
                        }
                    }
                    Err(e) if is_domain_error(&e) => {}
                    Err(e) => return Err(e),
                }
                t *= 0.5;
            }
        }

        if accepted.is_none() {
            // Levenberg–Marquardt fallback on the normal equations
            let jt = jac.transpose();
            let jtj = &jt * &jac;
            let jtf = &jt * &f;
            let scale = jtj.diagonal().amax().max(1e-30);
            let mut mu = 1e-8 * scale;
            for _ in 0..40 {
                let mut damped = jtj.clone();
                for k in 0..damped.nrows() {
                    damped[(k, k)] += mu;
                }
                if let Some(dir) = damped.lu().solve(&(-&jtf)) {
                    if dir.iter().all(|v| v.is_finite()) {
                        let xt = &x + &dir;
                        match eval(&xt) {
                            Ok((ft, jt_new)) => {
                                if ft.norm_squared() < f_sq {
                                    accepted = Some((xt, ft, jt_new));
                                    break;
                                }
                            }
                            Err(e) if is_domain_error(&e) => {}
                            Err(e) => return Err(e),
                        }
                    }
                }
                mu *= 10.0;
            }
            if accepted.is_none() {
                if singular {
                    return Err(SolverError::RankDeficient {
                        at_iteration: iterations,
                    });
                }
                // stalled: no descent direction makes progress
                return Ok(NewtonOutcome {
                    x,
                    residual_norm: norm,
                    iterations,
                    converged: false,
                });
            }
        }

        let (xt, ft, jt) = accepted.expect("step accepted");
        x = xt;
        f = ft;
        jac = jt;
        iterations += 1;
    }

    let norm = f.amax();
    Ok(NewtonOutcome {
        x,
        residual_norm: norm,
        iterations,
        converged: norm <= opts.tol,
    })
}

// ---------------------------------------------------------------------------
// Forward mode
// ---------------------------------------------------------------------------

fn pack_forward(stats: &LimitStats) -> DVector<f64> {
    let r = stats.rank();
    let mut x = DVector::zeros(r + r * r + tri_len(r));
    for i in 0..r {
        x[i] = stats.lambda[i];
    }
    for i in 0..r {
        for j in 0..r {
            x[r + i * r + j] = stats.rho[(i, j)];
        }
    }
    for (k, &e) in stats.eta_lower.iter().enumerate() {
        x[r + r * r + k] = e;
    }
    x
}

fn unpack_forward(x: &DVector<f64>, r: usize) -> LimitStats {
    let lambda = (0..r).map(|i| x[i]).collect();
    let rho = DMatrix::from_fn(r, r, |i, j| x[r + i * r + j]);
    let eta_lower = (0..tri_len(r)).map(|k| x[r + r * r + k]).collect();
    LimitStats {
        lambda,
        rho,
        eta_lower,
    }
}

/// Predicts limiting summary statistics from model parameters by solving
/// the system over `(λ, ρ, η)` with `(β, α)` fixed, starting at `init`.
pub fn solve_forward(
    params: &ModelParams,
    d: usize,
    init: &LimitStats,
    source: InitSource,
    opts: &SolverOptions,
) -> Result<SolveReport, SolverError> {
    check_shapes(init, params)?;
    let r = params.rank();
    let threshold = lambda_threshold(d) * (1.0 + DOMAIN_MARGIN);
    for &l in &init.lambda {
        if l < threshold {
            return Err(SolverError::Domain {
                lambda: l,
                threshold,
            });
        }
    }
    let n_unknowns = r + r * r + tri_len(r);
    let eval = |x: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>), SolverError> {
        let stats = unpack_forward(x, r);
        for &l in &stats.lambda {
            if l < threshold {
                return Err(SolverError::Domain {
                    lambda: l,
                    threshold,
                });
            }
        }
        let f = system_residual(&stats, params, d)?;
        let jac = system_jacobian(&stats, params, d)?;
        Ok((f, jac.columns(0, n_unknowns).into_owned()))
    };

    let outcome = damped_newton(pack_forward(init), opts, eval)?;
    Ok(SolveReport {
        solution: SolveSolution::Forward(unpack_forward(&outcome.x, r)),
        residual_norm: outcome.residual_norm,
        iterations: outcome.iterations,
        converged: outcome.converged,
        init_source: source,
    })
}

/// Aligned-deflation heuristic: assume each fitted direction locks onto the
/// strongest remaining component. Good deep in the supercritical regime.
fn aligned_init(params: &ModelParams, d: usize) -> LimitStats {
    let r = params.rank();
    let threshold = lambda_threshold(d);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        params.beta[b]
            .partial_cmp(&params.beta[a])
            .expect("finite weights")
            .then(a.cmp(&b))
    });

    let mut rho = DMatrix::zeros(r, r);
    let mut eta_lower = vec![0.0; tri_len(r)];
    let mut lambda = vec![0.0; r];
    for step in 0..r {
        let target = order[step];
        for j in 0..r {
            rho[(step, j)] = params.gram[(target, j)];
        }
        for prev in 0..step {
            eta_lower[tri_index(step, prev)] = params.gram[(target, order[prev])];
        }
        let mut l = 0.0;
        for j in 0..r {
            l += params.beta[j] * rho[(step, j)].powi(d as i32);
        }
        for prev in 0..step {
            l -= lambda[prev] * eta_lower[tri_index(step, prev)].powi(d as i32);
        }
        lambda[step] = l.max(threshold * 1.05);
    }
    LimitStats {
        lambda,
        rho,
        eta_lower,
    }
}

/// Forward solve with fallback: try the provided initialization first (the
/// usual choice is the simulated summary statistics of one run), then fall
/// back to a continuation path from a strongly supercritical rescaling of
/// the weights.
pub fn solve_forward_auto(
    params: &ModelParams,
    d: usize,
    init: Option<&LimitStats>,
    opts: &SolverOptions,
) -> Result<SolveReport, SolverError> {
    if let Some(start) = init {
        match solve_forward(params, d, start, InitSource::Empirical, opts) {
            Ok(report) if report.converged => return Ok(report),
            Ok(_) | Err(SolverError::Domain { .. }) | Err(SolverError::RankDeficient { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    continuation_solve(params, d, opts)
}

fn continuation_solve(
    params: &ModelParams,
    d: usize,
    opts: &SolverOptions,
) -> Result<SolveReport, SolverError> {
    let threshold = lambda_threshold(d);
    let beta_min = params.beta.iter().cloned().fold(f64::INFINITY, f64::min);
    let target_min = 4.0 * threshold;
    let scale_max = (target_min / beta_min).max(1.0);

    // geometric path scale_max → 1
    let steps = if scale_max > 1.0 { 8 } else { 0 };
    let mut current = aligned_init(
        &scaled_params(params, scale_max),
        d,
    );
    let mut last_report = None;
    for k in 0..=steps {
        let s = if steps == 0 {
            1.0
        } else {
            scale_max.powf(1.0 - k as f64 / steps as f64)
        };
        let scaled = scaled_params(params, s);
        let report = solve_forward(&scaled, d, &current, InitSource::Continuation, opts)?;
        if let SolveSolution::Forward(stats) = &report.solution {
            current = stats.clone();
        }
        let done = report.converged;
        last_report = Some(report);
        if !done {
            break;
        }
    }
    Ok(last_report.expect("at least one continuation step"))
}

fn scaled_params(params: &ModelParams, s: f64) -> ModelParams {
    ModelParams {
        beta: params.beta.iter().map(|b| b * s).collect(),
        gram: params.gram.clone(),
    }
}

// ---------------------------------------------------------------------------
// Inverse mode (rank 2, order 3)
// ---------------------------------------------------------------------------

/// Deflation output fed to the inverse solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObservedStats {
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta12: f64,
}

/// Starting point for the inverse solve: model parameters plus an alignment
/// guess.
#[derive(Debug, Clone)]
pub struct InverseInit {
    pub params: ModelParams,
    pub rho: DMatrix<f64>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

const CLAMP: f64 = 0.999;

/// Estimates `(β_1, β_2, α)` and the alignments `ρ` from observed
/// `(λ̂_1, λ̂_2, η̂_12)` by solving the seven equations over seven unknowns,
/// with `β > 0` and `ρ_ii ∈ (0, 1)` enforced through log/logit/tanh
/// reparameterizations of the search variables. Order 3 only.
pub fn estimate_params(
    observed: &ObservedStats,
    d: usize,
    init: &InverseInit,
    source: InitSource,
    opts: &SolverOptions,
) -> Result<SolveReport, SolverError> {
    if d != 3 || init.params.rank() != 2 {
        return Err(SolverError::Unsupported {
            d,
            r: init.params.rank(),
        });
    }
    let threshold = lambda_threshold(d);
    for l in [observed.lambda1, observed.lambda2] {
        if l <= threshold {
            return Err(SolverError::InfeasibleObservation {
                lambda: l,
                threshold,
            });
        }
    }
    if init.rho.nrows() != 2 || init.rho.ncols() != 2 {
        return Err(SolverError::Shape("inverse init rho must be 2x2".into()));
    }

    let lambda = vec![observed.lambda1, observed.lambda2];
    let eta_lower = vec![observed.eta12];

    // search variables: [ln β1, ln β2, atanh α, logit ρ11, atanh ρ12,
    //                    atanh ρ21, logit ρ22]
    let mut z0 = DVector::zeros(7);
    z0[0] = init.params.beta[0].max(1e-6).ln();
    z0[1] = init.params.beta[1].max(1e-6).ln();
    z0[2] = init.params.gram[(0, 1)].clamp(-CLAMP, CLAMP).atanh();
    z0[3] = logit(init.rho[(0, 0)].clamp(1.0 - CLAMP, CLAMP));
    z0[4] = init.rho[(0, 1)].clamp(-CLAMP, CLAMP).atanh();
    z0[5] = init.rho[(1, 0)].clamp(-CLAMP, CLAMP).atanh();
    z0[6] = logit(init.rho[(1, 1)].clamp(1.0 - CLAMP, CLAMP));

    let eval = |z: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>), SolverError> {
        let beta = vec![z[0].exp(), z[1].exp()];
        let alpha = z[2].tanh();
        let rho = DMatrix::from_row_slice(
            2,
            2,
            &[sigmoid(z[3]), z[4].tanh(), z[5].tanh(), sigmoid(z[6])],
        );
        if beta.iter().any(|b| !b.is_finite() || *b <= 0.0) {
            return Err(SolverError::Domain {
                lambda: f64::NAN,
                threshold,
            });
        }
        let params = ModelParams {
            beta: beta.clone(),
            gram: DMatrix::from_row_slice(2, 2, &[1.0, alpha, alpha, 1.0]),
        };
        let stats = LimitStats {
            lambda: lambda.clone(),
            rho: rho.clone(),
            eta_lower: eta_lower.clone(),
        };
        let f = system_residual(&stats, &params, 3)?;
        let full = system_jacobian(&stats, &params, 3)?;

        // gather [β1, β2, α, ρ11, ρ12, ρ21, ρ22] columns and chain through
        // the reparameterization
        let r = 2usize;
        let col_rho = |i: usize, j: usize| r + i * r + j;
        let col_beta = |j: usize| r + r * r + tri_len(r) + j;
        let col_alpha = r + r * r + tri_len(r) + r; // single lower pair (1,0)
        let sources = [
            col_beta(0),
            col_beta(1),
            col_alpha,
            col_rho(0, 0),
            col_rho(0, 1),
            col_rho(1, 0),
            col_rho(1, 1),
        ];
        let chain = [
            beta[0],
            beta[1],
            1.0 - alpha * alpha,
            rho[(0, 0)] * (1.0 - rho[(0, 0)]),
            1.0 - rho[(0, 1)] * rho[(0, 1)],
            1.0 - rho[(1, 0)] * rho[(1, 0)],
            rho[(1, 1)] * (1.0 - rho[(1, 1)]),
        ];
        let mut jac = DMatrix::zeros(7, 7);
        for (c, (&src, &factor)) in sources.iter().zip(chain.iter()).enumerate() {
            for row in 0..7 {
                jac[(row, c)] = full[(row, src)] * factor;
            }
        }
        Ok((f, jac))
    };

    let outcome = damped_newton(z0, opts, eval)?;
    let z = &outcome.x;
    let params = ModelParams::new(
        vec![z[0].exp(), z[1].exp()],
        DMatrix::from_row_slice(2, 2, &[1.0, z[2].tanh(), z[2].tanh(), 1.0]),
    )?;
    let rho = DMatrix::from_row_slice(
        2,
        2,
        &[sigmoid(z[3]), z[4].tanh(), z[5].tanh(), sigmoid(z[6])],
    );
    Ok(SolveReport {
        solution: SolveSolution::Inverse(InverseSolution { params, rho }),
        residual_norm: outcome.residual_norm,
        iterations: outcome.iterations,
        converged: outcome.converged,
        init_source: source,
    })
}

/// Inverse solve with automatic initialization.
///
/// The observation `(λ̂_1, λ̂_2, η̂_12)` cannot distinguish a model from its
/// component-relabeled twin, so the labeling must come from the alignment
/// guess: when `rho_guess` (typically the measured `ρ̂`) is given, its
/// dominant entry in the first row selects which component the first
/// deflation step followed. Without a guess both hypotheses are tried and
/// the strongest-first labeling wins ties.
pub fn estimate_params_auto(
    observed: &ObservedStats,
    d: usize,
    rho_guess: Option<&DMatrix<f64>>,
    opts: &SolverOptions,
) -> Result<SolveReport, SolverError> {
    if d != 3 {
        return Err(SolverError::Unsupported { d, r: 2 });
    }
    let threshold = lambda_threshold(d);
    for l in [observed.lambda1, observed.lambda2] {
        if l <= threshold {
            return Err(SolverError::InfeasibleObservation {
                lambda: l,
                threshold,
            });
        }
    }
    let alpha0 = observed.eta12.clamp(-0.9, 0.9);
    let b_strong = f_func(observed.lambda1, 3)?.max(0.2);
    let b_weak = f_func(observed.lambda2, 3)?.max(0.2);
    let cross = (alpha0 * 0.9).clamp(-0.9, 0.9);
    let diag = 0.9;
    let off = cross.max(0.1); // ρ_ii stays positive in the parameterization

    // first fitted direction follows component 1 (β1 ≥ β2)
    let branch_a = InverseInit {
        params: ModelParams::rank2(b_strong, b_weak, alpha0)?,
        rho: DMatrix::from_row_slice(2, 2, &[diag, cross, cross, diag]),
    };
    // first fitted direction follows component 2 (β2 > β1)
    let branch_b = InverseInit {
        params: ModelParams::rank2(b_weak, b_strong, alpha0)?,
        rho: DMatrix::from_row_slice(2, 2, &[off, diag, diag, off]),
    };

    let mut attempts: Vec<InverseInit> = Vec::with_capacity(3);
    if let Some(guess) = rho_guess {
        if guess.nrows() != 2 || guess.ncols() != 2 {
            return Err(SolverError::Shape("rho guess must be 2x2".into()));
        }
        let first_follows_first = guess[(0, 0)].abs() >= guess[(0, 1)].abs();
        let beta_init = if first_follows_first {
            (b_strong, b_weak)
        } else {
            (b_weak, b_strong)
        };
        attempts.push(InverseInit {
            params: ModelParams::rank2(beta_init.0, beta_init.1, alpha0)?,
            rho: guess.clone(),
        });
    }
    attempts.push(branch_a);
    attempts.push(branch_b);

    let mut best: Option<SolveReport> = None;
    for init in &attempts {
        let report = match estimate_params(observed, 3, init, InitSource::Empirical, opts) {
            Ok(rep) => rep,
            Err(SolverError::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        };
        if report.converged {
            return Ok(report);
        }
        let replace = best
            .as_ref()
            .is_none_or(|b| report.residual_norm < b.residual_norm);
        if replace {
            best = Some(report);
        }
    }
    best.ok_or(SolverError::RankDeficient { at_iteration: 0 })
}
