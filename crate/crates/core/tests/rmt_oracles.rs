//! Quadrature and Monte-Carlo oracles for the semicircle kernels and the
//! spectrum diagnostics.

use tensor_deflation::rmt::{self, SemicircleLaw};
use tensor_deflation::*;

/// Adaptive Simpson quadrature, independent of the library code.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let split = left + right;
        if depth == 0 || (split - whole).abs() <= 15.0 * tol {
            return split + (split - whole) / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `∫ μ(dx)/(x − z)` via the substitution `x = γ sin θ`, which removes the
/// square-root edge singularities of the density.
fn stieltjes_by_quadrature(z: f64, gamma: f64) -> f64 {
    let integrand = move |theta: f64| {
        let c = theta.cos();
        2.0 / std::f64::consts::PI * c * c / (gamma * theta.sin() - z)
    };
    adaptive_simpson(
        &integrand,
        -std::f64::consts::FRAC_PI_2,
        std::f64::consts::FRAC_PI_2,
        1e-10,
    )
}

#[test]
fn quadrature_confirms_stieltjes_closed_form() {
    // the square-root closed form against direct numerical integration of
    // the density transform, on both sides of the bulk
    for d in [2usize, 3, 4] {
        let gamma = rmt::gamma_d(d);
        for k in 0..10 {
            let z = gamma * 1.05 * (10.0f64 / (1.05 * gamma)).powf(k as f64 / 9.0);
            let numeric = stieltjes_by_quadrature(z, gamma);
            let closed = stieltjes_g(z, d).unwrap();
            assert!(
                (numeric - closed).abs() <= 1e-6,
                "d={d}, z={z}: quadrature {numeric} vs closed form {closed}"
            );
            let closed_neg = stieltjes_g(-z, d).unwrap();
            let numeric_neg = stieltjes_by_quadrature(-z, gamma);
            assert!((numeric_neg - closed_neg).abs() <= 1e-6);
        }
    }
    // the spot value from the kernel layer
    let g2 = stieltjes_g(2.0, 3).unwrap();
    assert!((stieltjes_by_quadrature(2.0, rmt::gamma_d(3)) - g2).abs() <= 1e-6);
}

#[test]
fn semicircle_density_is_normalized() {
    for d in [2usize, 3, 4] {
        let law = SemicircleLaw::for_order(d);
        let gamma = law.gamma;
        let integrand = move |theta: f64| law.density(gamma * theta.sin()) * gamma * theta.cos();
        let total = adaptive_simpson(
            &integrand,
            -std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            1e-10,
        );
        assert!((total - 1.0).abs() <= 1e-8, "d={d}: ∫μ = {total}");
    }
}

#[test]
fn cdf_matches_density_integral() {
    let law = SemicircleLaw::for_order(3);
    for x in [-0.7, -0.2, 0.0, 0.33, 0.79] {
        let numeric = adaptive_simpson(&|t| law.density(t), -law.gamma, x, 1e-10);
        assert!(
            (numeric - law.cdf(x)).abs() <= 1e-7,
            "x={x}: {numeric} vs {}",
            law.cdf(x)
        );
    }
}

#[test]
fn noise_contraction_bulk_is_semicircular_at_n200() {
    let n = 200;
    let w = sample_noise(n, 3, 1).unwrap();
    let scaled = w.scaled(1.0 / (n as f64).sqrt());
    let u = test_direction(n, 999);
    let report = contraction_spectrum(&scaled, &u).unwrap();
    assert!(
        report.ks_distance <= 0.05,
        "ks = {} at n = {n}",
        report.ks_distance
    );
    assert_eq!(report.eigenvalues.len(), n);
}

fn test_direction(n: usize, seed: u64) -> UnitVector {
    // independent of the noise stream used by sample_noise
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    UnitVector::normalized(nalgebra::DVector::from_fn(n, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    }))
    .unwrap()
}

#[test]
fn ks_distance_decreases_with_dimension() {
    let median_ks = |n: usize| {
        let mut ks: Vec<f64> = (0..3u64)
            .map(|seed| {
                let w = sample_noise(n, 3, 10 + seed).unwrap();
                let scaled = w.scaled(1.0 / (n as f64).sqrt());
                let u = test_direction(n, 500 + seed);
                contraction_spectrum(&scaled, &u).unwrap().ks_distance
            })
            .collect();
        ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ks[1]
    };
    let (k50, k100, k200) = (median_ks(50), median_ks(100), median_ks(200));
    assert!(
        k50 > k100 && k100 > k200,
        "ks medians not decreasing: {k50} {k100} {k200}"
    );
}

#[test]
fn spiked_contraction_shows_outlier_at_fitted_eigenvalue() {
    let n = 100;
    let gram = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
    let params = SpikeParams::new(n, 3, vec![8.0, 5.0], gram, 1.0, 12).unwrap();
    let truth = GroundTruth::generate(params).unwrap();
    let s = sample_spiked_tensor(&truth).unwrap();
    let fit = best_rank1(&s, &PowerIterOptions::default()).unwrap();
    let report = contraction_spectrum(&s, &fit.u).unwrap();
    assert!(!report.outliers.is_empty());
    let gap = report
        .outliers
        .iter()
        .map(|o| (o - fit.lambda_hat).abs())
        .fold(f64::INFINITY, f64::min);
    assert!(gap <= 1e-6, "no outlier near lambda_hat, gap = {gap:e}");
}
