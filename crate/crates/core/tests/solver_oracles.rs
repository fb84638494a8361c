//! Independent oracles for the limiting-statistics system: symbolic
//! agreement of the two residual routes, finite-difference Jacobians, and
//! Monte-Carlo validation of forward predictions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensor_deflation::asymptotic::{system_jacobian, PSI_ROW_ORDER};
use tensor_deflation::rmt::lambda_threshold;
use tensor_deflation::*;

fn tri_len(r: usize) -> usize {
    r * (r - 1) / 2
}

fn random_point(rng: &mut ChaCha8Rng, r: usize, d: usize) -> (LimitStats, ModelParams) {
    let threshold = lambda_threshold(d);
    let lambda: Vec<f64> = (0..r)
        .map(|_| threshold + 0.15 + rng.random_range(0.0..3.5))
        .collect();
    let rho = DMatrix::from_fn(r, r, |_, _| rng.random_range(-0.9..0.9));
    let eta_lower: Vec<f64> = (0..tri_len(r))
        .map(|_| rng.random_range(-0.9..0.9))
        .collect();
    let beta: Vec<f64> = (0..r).map(|_| rng.random_range(0.3..5.5)).collect();
    let mut gram = DMatrix::identity(r, r);
    for i in 0..r {
        for j in 0..i {
            let a = rng.random_range(-0.7..0.7);
            gram[(i, j)] = a;
            gram[(j, i)] = a;
        }
    }
    (
        LimitStats::new(lambda, rho, eta_lower).unwrap(),
        ModelParams::new(beta, gram).unwrap(),
    )
}

/// The printed seven-row map and the reordered generic residual agree to
/// 1e-14 at 100 random domain points: the two transcriptions compute the
/// same polynomials.
#[test]
fn psi_equals_reordered_system_residual_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5150);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (stats, params) = random_point(&mut rng, 2, 3);
        let lambda_eta = [stats.lambda[0], stats.lambda[1], stats.eta(1, 0)];
        let beta_alpha = [params.beta[0], params.beta[1], params.gram[(0, 1)]];
        let p = psi(&lambda_eta, &beta_alpha, &stats.rho).unwrap();
        let sys = system_residual(&stats, &params, 3).unwrap();
        for (k, &row) in PSI_ROW_ORDER.iter().enumerate() {
            worst = worst.max((p[k] - sys[row]).abs());
        }
    }
    assert!(worst <= 1e-14, "max deviation {worst:e}");
}

fn pack_all(stats: &LimitStats, params: &ModelParams) -> DVector<f64> {
    let r = stats.rank();
    let tri = tri_len(r);
    let mut x = DVector::zeros(r + r * r + tri + r + tri);
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
    for j in 0..r {
        x[r + r * r + tri + j] = params.beta[j];
    }
    let mut k = 0;
    for i in 1..r {
        for j in 0..i {
            x[r + r * r + tri + r + k] = params.gram[(i, j)];
            k += 1;
        }
    }
    x
}

fn unpack_all(x: &DVector<f64>, r: usize) -> (LimitStats, ModelParams) {
    let tri = tri_len(r);
    let lambda: Vec<f64> = (0..r).map(|i| x[i]).collect();
    let rho = DMatrix::from_fn(r, r, |i, j| x[r + i * r + j]);
    let eta_lower: Vec<f64> = (0..tri).map(|k| x[r + r * r + k]).collect();
    let beta: Vec<f64> = (0..r).map(|j| x[r + r * r + tri + j]).collect();
    let mut gram = DMatrix::identity(r, r);
    let mut k = 0;
    for i in 1..r {
        for j in 0..i {
            gram[(i, j)] = x[r + r * r + tri + r + k];
            gram[(j, i)] = gram[(i, j)];
            k += 1;
        }
    }
    (
        LimitStats {
            lambda,
            rho,
            eta_lower,
        },
        ModelParams { beta, gram },
    )
}

/// Analytic Jacobian against central differences (step 1e-6), all blocks
/// `[λ | ρ | η | β | α]`, 50 random points across ranks 2 and 3 and orders
/// 3 and 4.
#[test]
fn analytic_jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFD12);
    let cases = [(2usize, 3usize, 20), (3, 3, 20), (2, 4, 10)];
    let h = 1e-6;
    for (r, d, count) in cases {
        for _ in 0..count {
            let (stats, params) = random_point(&mut rng, r, d);
            let analytic = system_jacobian(&stats, &params, d).unwrap();
            let x0 = pack_all(&stats, &params);
            for c in 0..x0.len() {
                let mut xp = x0.clone();
                let mut xm = x0.clone();
                xp[c] += h;
                xm[c] -= h;
                let (sp, pp) = unpack_all(&xp, r);
                let (sm, pm) = unpack_all(&xm, r);
                let fp = system_residual(&sp, &pp, d).unwrap();
                let fm = system_residual(&sm, &pm, d).unwrap();
                for row in 0..fp.len() {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    let an = analytic[(row, c)];
                    let rel = (fd - an).abs() / an.abs().max(1.0);
                    assert!(
                        rel <= 1e-5,
                        "r={r} d={d} row={row} col={c}: analytic {an} vs fd {fd}"
                    );
                }
            }
        }
    }
}

/// Rank-1 forward prediction against Monte-Carlo at n = 200: the limiting
/// alignment matches the measured mean within 0.03.
#[test]
fn rank1_forward_prediction_matches_monte_carlo() {
    let beta = 3.0;
    let params = ModelParams::new(vec![beta], DMatrix::from_row_slice(1, 1, &[1.0])).unwrap();
    let report = solve_forward_auto(&params, 3, None, &SolverOptions::default()).unwrap();
    assert!(report.converged);
    let SolveSolution::Forward(stats) = &report.solution else {
        panic!()
    };
    let rho_pred = stats.rho[(0, 0)];
    assert!(stats.lambda[0] > lambda_threshold(3));
    assert!(rho_pred > 0.0 && rho_pred < 1.0);

    let n = 200;
    let mut mean = 0.0;
    let seeds = 10u64;
    for seed in 0..seeds {
        let sp = SpikeParams::new(
            n,
            3,
            vec![beta],
            DMatrix::from_row_slice(1, 1, &[1.0]),
            1.0,
            9000 + seed,
        )
        .unwrap();
        let truth = GroundTruth::generate(sp).unwrap();
        let s = sample_spiked_tensor(&truth).unwrap();
        let opts = PowerIterOptions {
            restarts: 3,
            seed,
            ..PowerIterOptions::default()
        };
        let fit = best_rank1(&s, &opts).unwrap();
        mean += fit.u.dot(&truth.components[0]).abs();
    }
    mean /= seeds as f64;
    assert!(
        (mean - rho_pred).abs() <= 0.03,
        "MC mean {mean} vs predicted {rho_pred}"
    );
}

/// The empirical statistics of one finite-n run sit close to the limiting
/// fixed point: the system residual at the measured values is small.
#[test]
fn empirical_statistics_nearly_solve_the_system() {
    let params = SpikeParams::new(
        100,
        3,
        vec![8.0, 5.0],
        DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]),
        1.0,
        4242,
    )
    .unwrap();
    let truth = GroundTruth::generate(params).unwrap();
    let s = sample_spiked_tensor(&truth).unwrap();
    let (_, stats) = deflate(&s, 2, &truth, &PowerIterOptions::default(), false).unwrap();
    let limit = LimitStats::from_summary(&stats);
    let model = ModelParams::rank2(8.0, 5.0, 0.4).unwrap();
    let res = system_residual(&limit, &model, 3).unwrap();
    assert!(res.amax() <= 0.15, "residual {:.3}", res.amax());
}

/// Forward-then-inverse round trip at equal weights, plus idempotent
/// re-verification of the converged reports through the residual.
#[test]
fn round_trip_at_equal_weights() {
    let opts = SolverOptions::default();
    let (b1, b2, alpha) = (6.0, 6.0, 0.2);
    let params = ModelParams::rank2(b1, b2, alpha).unwrap();
    let forward = solve_forward_auto(&params, 3, None, &opts).unwrap();
    assert!(forward.converged);
    let SolveSolution::Forward(stats) = &forward.solution else {
        panic!()
    };
    let res = system_residual(stats, &params, 3).unwrap();
    assert!(res.amax() <= 1e-9);

    let obs = ObservedStats {
        lambda1: stats.lambda[0],
        lambda2: stats.lambda[1],
        eta12: stats.eta(1, 0),
    };
    let inverse = estimate_params_auto(&obs, 3, Some(&stats.rho), &opts).unwrap();
    assert!(inverse.converged);
    let SolveSolution::Inverse(sol) = &inverse.solution else {
        panic!()
    };
    assert!((sol.params.beta[0] - b1).abs() <= 1e-6);
    assert!((sol.params.beta[1] - b2).abs() <= 1e-6);
    assert!((sol.params.gram[(0, 1)] - alpha).abs() <= 1e-6);
}

/// Estimation from a single noisy realization at n = 100 recovers the model
/// within 10%.
#[test]
fn single_realization_estimation_recovers_model() {
    let (b1, b2, alpha) = (8.0, 5.0, 0.4);
    let params = SpikeParams::new(
        100,
        3,
        vec![b1, b2],
        DMatrix::from_row_slice(2, 2, &[1.0, alpha, alpha, 1.0]),
        1.0,
        606,
    )
    .unwrap();
    let truth = GroundTruth::generate(params).unwrap();
    let s = sample_spiked_tensor(&truth).unwrap();
    let (_, stats) = deflate(&s, 2, &truth, &PowerIterOptions::default(), false).unwrap();

    let obs = ObservedStats {
        lambda1: stats.lambda_hat[0],
        lambda2: stats.lambda_hat[1],
        eta12: stats.eta_hat[(1, 0)],
    };
    let report =
        estimate_params_auto(&obs, 3, Some(&stats.rho_hat), &SolverOptions::default()).unwrap();
    assert!(report.converged);
    let SolveSolution::Inverse(sol) = &report.solution else {
        panic!()
    };
    assert!((sol.params.beta[0] - b1).abs() / b1 <= 0.1);
    assert!((sol.params.beta[1] - b2).abs() / b2 <= 0.1);
    assert!((sol.params.gram[(0, 1)] - alpha).abs() / alpha <= 0.1);
}
