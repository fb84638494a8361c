//! Semicircle law, Stieltjes-transform kernels, and spectrum diagnostics.
//!
//! The bulk spectrum of the noise contraction matrices is a semicircle
//! supported on `[-γ_d, γ_d]` with `γ_d = 2/√(d(d−1))`. Its Stieltjes
//! transform on the real axis outside the bulk,
//!
//! ```text
//!     g(z) = (2/γ_d²) (−z + sign(z)·√(z² − γ_d²)),
//! ```
//!
//! solves `(γ_d²/4) g² + z g + 1 = 0` and behaves like `−1/z` at infinity.
//! The kernels `h`, `q`, `f` entering the limiting summary-statistics
//! equations are thin wrappers around `g` evaluated at `z/(d−1)`, defined for
//! `z ≥ γ_d (d−1)` (the detectability threshold for spike eigenvalues).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symtensor::{SymmetricTensor, TensorError, UnitVector};

/// Eigenvalues farther than this relative margin beyond `γ_d` are reported
/// as outliers; finite-`n` edge fluctuation stays inside at `n ≥ 100`.
pub const OUTLIER_MARGIN: f64 = 0.02;

#[derive(Debug, Error)]
pub enum RmtError {
    #[error("z = {z} is inside the bulk support [-{gamma}, {gamma}]")]
    InsideBulk { z: f64, gamma: f64 },
    #[error("z = {z} is below the domain threshold {threshold} = gamma_d (d-1)")]
    BelowThreshold { z: f64, threshold: f64 },
    #[error("symmetric eigendecomposition did not converge")]
    EigenFailed,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Support radius `γ_d = 2/√(d(d−1))` of the limiting bulk spectrum.
pub fn gamma_d(d: usize) -> f64 {
    assert!(d >= 2, "tensor order must be at least 2");
    2.0 / ((d * (d - 1)) as f64).sqrt()
}

/// Lower edge `γ_d (d−1)` of the valid domain for `h`, `q`, `f` and for
/// limiting spike eigenvalues.
pub fn lambda_threshold(d: usize) -> f64 {
    gamma_d(d) * (d - 1) as f64
}

/// Stieltjes transform of the semicircle law on the real axis, `|z| ≥ γ_d`.
pub fn stieltjes_g(z: f64, d: usize) -> Result<f64, RmtError> {
    let gamma = gamma_d(d);
    if z.abs() < gamma {
        return Err(RmtError::InsideBulk { z, gamma });
    }
    let root = (z * z - gamma * gamma).sqrt();
    Ok(2.0 / (gamma * gamma) * (-z + z.signum() * root))
}

/// Derivative `g'(z)` on the same domain (unbounded at the edges).
pub fn stieltjes_g_prime(z: f64, d: usize) -> Result<f64, RmtError> {
    let gamma = gamma_d(d);
    if z.abs() < gamma {
        return Err(RmtError::InsideBulk { z, gamma });
    }
    let root = (z * z - gamma * gamma).sqrt();
    Ok(2.0 / (gamma * gamma) * (-1.0 + z.abs() / root))
}

fn check_threshold(z: f64, d: usize) -> Result<f64, RmtError> {
    let threshold = lambda_threshold(d);
    if z < threshold {
        return Err(RmtError::BelowThreshold { z, threshold });
    }
    Ok(z / (d - 1) as f64)
}

/// `h(z) = z + g(z/(d−1))/d` for `z ≥ γ_d (d−1)`.
pub fn h_func(z: f64, d: usize) -> Result<f64, RmtError> {
    let w = check_threshold(z, d)?;
    Ok(z + stieltjes_g(w, d)? / d as f64)
}

/// `q(z) = g(z/(d−1)) / (d(d−1))` for `z ≥ γ_d (d−1)`.
pub fn q_func(z: f64, d: usize) -> Result<f64, RmtError> {
    let w = check_threshold(z, d)?;
    Ok(stieltjes_g(w, d)? / (d * (d - 1)) as f64)
}

/// `f(z) = z + g(z/(d−1))/(d−1)` for `z ≥ γ_d (d−1)`; the eigenvalue-side
/// kernel of the limiting equations.
pub fn f_func(z: f64, d: usize) -> Result<f64, RmtError> {
    let w = check_threshold(z, d)?;
    Ok(z + stieltjes_g(w, d)? / (d - 1) as f64)
}

/// `h'(z)`.
pub fn h_func_prime(z: f64, d: usize) -> Result<f64, RmtError> {
    let w = check_threshold(z, d)?;
    Ok(1.0 + stieltjes_g_prime(w, d)? / (d * (d - 1)) as f64)
}

/// `q'(z)`.
pub fn q_func_prime(z: f64, d: usize) -> Result<f64, RmtError> {
    let w = check_threshold(z, d)?;
    let dd = (d * (d - 1)) as f64;
    Ok(stieltjes_g_prime(w, d)? / (dd * (d - 1) as f64))
}

/// `f'(z)`.
pub fn f_func_prime(z: f64, d: usize) -> Result<f64, RmtError> {
    let w = check_threshold(z, d)?;
    let dm1 = (d - 1) as f64;
    Ok(1.0 + stieltjes_g_prime(w, d)? / (dm1 * dm1))
}

/// Semicircle distribution with support `[-γ, γ]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SemicircleLaw {
    pub gamma: f64,
}

impl SemicircleLaw {
    pub fn new(gamma: f64) -> Self {
        assert!(gamma > 0.0);
        Self { gamma }
    }

    /// The law matching the bulk of order-`d` noise contractions.
    pub fn for_order(d: usize) -> Self {
        Self::new(gamma_d(d))
    }

    /// Density `(2/(πγ²))·√(γ²−x²)` on the support, 0 outside.
    pub fn density(&self, x: f64) -> f64 {
        let g = self.gamma;
        if x.abs() >= g {
            return 0.0;
        }
        2.0 / (std::f64::consts::PI * g * g) * (g * g - x * x).sqrt()
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        let g = self.gamma;
        if x <= -g {
            return 0.0;
        }
        if x >= g {
            return 1.0;
        }
        let pi = std::f64::consts::PI;
        0.5 + x * (g * g - x * x).sqrt() / (pi * g * g) + (x / g).asin() / pi
    }
}

/// Eigenvalue report for a contraction matrix: sorted spectrum, outliers
/// beyond the bulk edge, and Kolmogorov–Smirnov distance of the bulk to the
/// semicircle law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub outliers: Vec<f64>,
    pub ks_distance: f64,
    pub gamma: f64,
}

/// Two-sided KS distance between sorted samples and a semicircle CDF.
pub fn ks_distance(law: &SemicircleLaw, sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m == 0 {
        return 1.0;
    }
    let mf = m as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = law.cdf(x);
        sup = sup.max((c - i as f64 / mf).abs());
        sup = sup.max(((i + 1) as f64 / mf - c).abs());
    }
    sup
}

/// Spectrum of the symmetric matrix `T · u^{d−2}` against the semicircle
/// bulk prediction. Outliers (beyond `γ_d (1 + margin)`) are excluded from
/// the KS statistic, which concerns the limiting bulk only.
pub fn contraction_spectrum(
    tensor: &SymmetricTensor,
    u: &UnitVector,
) -> Result<SpectrumReport, RmtError> {
    let matrix = tensor.contract_matrix(u)?;
    let gamma = gamma_d(tensor.order());
    let mut eigenvalues = symmetric_eigenvalues(&matrix)?;
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));

    let edge = gamma * (1.0 + OUTLIER_MARGIN);
    let (bulk, outliers): (Vec<f64>, Vec<f64>) =
        eigenvalues.iter().partition(|&&x| x.abs() <= edge);
    let law = SemicircleLaw::new(gamma);
    let ks = ks_distance(&law, &bulk);
    Ok(SpectrumReport {
        eigenvalues,
        outliers,
        ks_distance: ks,
        gamma,
    })
}

fn symmetric_eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<f64>, RmtError> {
    let eig = nalgebra::SymmetricEigen::try_new(matrix.clone(), f64::EPSILON, 0)
        .ok_or(RmtError::EigenFailed)?;
    Ok(eig.eigenvalues.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn gamma_values_match_closed_form() {
        assert_relative_eq!(gamma_d(2), 2.0f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(gamma_d(3), 2.0 / 6.0f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(gamma_d(3), 0.81650, epsilon = 1e-5);
        for d in 2..6 {
            assert!(gamma_d(d + 1) < gamma_d(d));
        }
    }

    #[test]
    fn g_satisfies_its_quadratic_on_both_branches() {
        for d in [2usize, 3, 4] {
            let gamma = gamma_d(d);
            for k in 0..100 {
                let z = (gamma + 1e-3 + 9.0 * k as f64 / 99.0) * if k % 2 == 0 { 1.0 } else { -1.0 };
                let g = stieltjes_g(z, d).unwrap();
                let res = gamma * gamma / 4.0 * g * g + z * g + 1.0;
                assert!(res.abs() < 1e-12, "residual {res:e} at z={z}, d={d}");
            }
        }
    }

    #[test]
    fn g_closed_form_value_at_one() {
        // d=3: g(1) = 3(−1 + √(1/3))
        let expect = 3.0 * (-1.0 + (1.0f64 / 3.0).sqrt());
        assert_relative_eq!(stieltjes_g(1.0, 3).unwrap(), expect, epsilon = 1e-14);
        assert_relative_eq!(expect, -1.26795, epsilon = 1e-5);
    }

    #[test]
    fn g_decays_like_reciprocal() {
        let g = stieltjes_g(10.0, 3).unwrap();
        assert_relative_eq!(g, -0.1, max_relative = 0.01);
        let g_neg = stieltjes_g(-10.0, 3).unwrap();
        assert_relative_eq!(g_neg, 0.1, max_relative = 0.01);
    }

    #[test]
    fn g_rejects_bulk_interior() {
        assert!(matches!(
            stieltjes_g(0.5, 3),
            Err(RmtError::InsideBulk { .. })
        ));
    }

    #[test]
    fn hqf_values_at_two() {
        let g1 = stieltjes_g(1.0, 3).unwrap();
        assert_relative_eq!(h_func(2.0, 3).unwrap(), 2.0 + g1 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(q_func(2.0, 3).unwrap(), g1 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(f_func(2.0, 3).unwrap(), 2.0 + g1 / 2.0, epsilon = 1e-14);
        assert_relative_eq!(h_func(2.0, 3).unwrap(), 1.57735, epsilon = 1e-5);
        assert_relative_eq!(q_func(2.0, 3).unwrap(), -0.21132, epsilon = 1e-5);
        assert_relative_eq!(f_func(2.0, 3).unwrap(), 1.36603, epsilon = 1e-5);
    }

    #[test]
    fn h_minus_identity_is_proportional_to_q() {
        for d in [2usize, 3, 4, 5] {
            let threshold = lambda_threshold(d);
            for k in 0..20 {
                let z = threshold + 1e-6 + 0.5 * k as f64;
                let h = h_func(z, d).unwrap();
                let q = q_func(z, d).unwrap();
                assert_relative_eq!(h - z, (d - 1) as f64 * q, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn kernels_reject_below_threshold() {
        let z = lambda_threshold(3) - 0.01;
        assert!(matches!(
            h_func(z, 3),
            Err(RmtError::BelowThreshold { .. })
        ));
        assert!(q_func(z, 3).is_err());
        assert!(f_func(z, 3).is_err());
    }

    #[test]
    fn semicircle_cdf_is_symmetric_and_normalized() {
        let law = SemicircleLaw::for_order(3);
        assert_relative_eq!(law.cdf(0.0), 0.5, epsilon = 1e-15);
        assert_eq!(law.cdf(-10.0), 0.0);
        assert_eq!(law.cdf(10.0), 1.0);
        assert_relative_eq!(law.cdf(0.3) + law.cdf(-0.3), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        // samples at CDF midpoints ((i+1/2)/m) have KS distance 1/(2m)
        let law = SemicircleLaw::for_order(3);
        let m = 200;
        let mut samples = Vec::with_capacity(m);
        for i in 0..m {
            let target = (i as f64 + 0.5) / m as f64;
            // bisection for the quantile
            let (mut lo, mut hi) = (-law.gamma, law.gamma);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if law.cdf(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            samples.push(0.5 * (lo + hi));
        }
        let d = ks_distance(&law, &samples);
        assert!(d <= 0.5 / m as f64 + 1e-9, "ks = {d}");
    }

    #[test]
    fn spectrum_of_pure_rank1_contraction_has_spike_outlier() {
        let x = UnitVector::normalized(DVector::from_fn(30, |i, _| (i as f64 * 0.37).sin()))
            .unwrap();
        let t = SymmetricTensor::rank1(5.0, &x, 3).unwrap();
        let report = contraction_spectrum(&t, &x).unwrap();
        assert_eq!(report.outliers.len(), 1);
        assert_relative_eq!(report.outliers[0], 5.0, epsilon = 1e-10);
    }
}
