//! Structural invariants of the tensor layer and statistical checks of the
//! noise/spike generators.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tensor_deflation::symtensor::Contracted;
use tensor_deflation::*;

fn random_symmetric(n: usize, d: usize, seed: u64) -> SymmetricTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n.pow(d as u32))
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    SymmetricTensor::symmetrize(&raw, d, n).unwrap()
}

fn random_unit(n: usize, seed: u64) -> UnitVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    UnitVector::normalized(DVector::from_fn(n, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }))
    .unwrap()
}

/// Spot-check permutation symmetry on 100 random index tuples.
fn assert_symmetric(t: &SymmetricTensor, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = t.order();
    let n = t.dim();
    for _ in 0..100 {
        let idx: Vec<usize> = (0..d).map(|_| rng.random_range(0..n)).collect();
        let reference = t.get(&idx);
        let mut shuffled = idx.clone();
        for i in (1..d).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        assert!(
            (t.get(&shuffled) - reference).abs() <= 1e-12,
            "asymmetry at {idx:?} vs {shuffled:?}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constructed_tensors_are_permutation_symmetric(
        n in 2usize..7,
        d in 2usize..5,
        seed in any::<u64>(),
    ) {
        let w = random_symmetric(n, d, seed);
        assert_symmetric(&w, seed ^ 1);

        let u = random_unit(n, seed ^ 2);
        let r1 = SymmetricTensor::rank1(1.7, &u, d).unwrap();
        assert_symmetric(&r1, seed ^ 3);

        let diff = w.subtract_rank1(0.8, &u).unwrap();
        assert_symmetric(&diff, seed ^ 4);

        if d > 2 {
            if let Contracted::Tensor(c) = w.contract(&u, 1).unwrap() {
                assert_symmetric(&c, seed ^ 5);
            } else {
                panic!("one-fold contraction of d>2 stays a tensor");
            }
        }
    }

    #[test]
    fn contraction_is_multilinear_in_the_vector(
        n in 2usize..7,
        seed in any::<u64>(),
        a in 0.25f64..4.0,
    ) {
        let t = random_symmetric(n, 3, seed);
        let u = random_unit(n, seed ^ 7);
        let scaled = u.coords() * a;
        let (Contracted::Vector(v1), Contracted::Vector(v2)) = (
            t.contract_raw(&scaled, 2).unwrap(),
            t.contract_raw(u.coords(), 2).unwrap(),
        ) else {
            panic!("two-fold contraction of an order-3 tensor is a vector");
        };
        let err = (&v1 - &v2 * a.powi(2)).norm();
        prop_assert!(err <= 1e-9 * v1.norm().max(1.0), "err = {err:e}");
    }

    #[test]
    fn rank1_contraction_returns_scaled_direction(
        n in 2usize..8,
        d in 2usize..5,
        beta in 0.1f64..10.0,
        seed in any::<u64>(),
    ) {
        let x = random_unit(n, seed);
        let t = SymmetricTensor::rank1(beta, &x, d).unwrap();
        let v = t.contract_vector(&x).unwrap();
        let err = (&v - x.coords() * beta).norm();
        prop_assert!(err <= 1e-10 * beta.max(1.0));
    }

    #[test]
    fn subtract_then_add_round_trips(
        n in 2usize..7,
        seed in any::<u64>(),
        lambda in -5.0f64..5.0,
    ) {
        let t = random_symmetric(n, 3, seed);
        let u = random_unit(n, seed ^ 11);
        let back = t
            .subtract_rank1(lambda, &u)
            .unwrap()
            .subtract_rank1(-lambda, &u)
            .unwrap();
        prop_assert!(t.max_abs_diff(&back) <= 1e-12);
    }
}

#[test]
fn symmetrized_gaussian_variance_on_distinct_triples() {
    // entries on distinct-index triples average 6 i.i.d. normals: variance 1/6
    let n = 25;
    let w = sample_noise(n, 3, 2024).unwrap();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i != j && j != k && i != k {
                    let v = w.get(&[i, j, k]);
                    sum += v;
                    sum_sq += v * v;
                    count += 1;
                }
            }
        }
    }
    assert!(count >= 10_000, "need at least 1e4 distinct triples");
    let mean = sum / count as f64;
    let var = sum_sq / count as f64 - mean * mean;
    assert!(
        (var - 1.0 / 6.0).abs() <= 0.1 / 6.0,
        "variance {var} should be within 10% of 1/6"
    );
}

#[test]
fn noise_entries_have_negligible_mean() {
    let w = sample_noise(50, 3, 17).unwrap();
    let mean = w.entries().iter().sum::<f64>() / w.entries().len() as f64;
    assert!(mean.abs() < 0.01, "mean = {mean}");
}

#[test]
fn spiked_tensor_is_bitwise_deterministic() {
    let gram = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
    let make = || {
        let params =
            SpikeParams::new(30, 3, vec![8.0, 5.0], gram.clone(), 1.0, 321).unwrap();
        let truth = GroundTruth::generate(params).unwrap();
        sample_spiked_tensor(&truth).unwrap()
    };
    let (a, b) = (make(), make());
    assert_eq!(a.entries(), b.entries());
}

#[test]
fn gram_reproduction_is_exact_to_1e10() {
    for seed in [1u64, 9, 77] {
        let gram = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.4, -0.2, 0.4, 1.0, 0.1, -0.2, 0.1, 1.0],
        );
        let xs = correlated_unit_vectors(60, &gram, seed).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (xs[i].dot(&xs[j]) - gram[(i, j)]).abs() <= 1e-10,
                    "seed {seed}: gram mismatch at ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn noisy_contraction_concentrates_at_signal_value() {
    // S·x1^3 = β1 + β2 α^3 + n^{-1/2}·N(0,1): within 5/√n for every seed here
    let n = 100;
    let (b1, b2, alpha) = (8.0f64, 5.0f64, 0.4f64);
    let gram = DMatrix::from_row_slice(2, 2, &[1.0, alpha, alpha, 1.0]);
    let expect = b1 + b2 * alpha.powi(3);
    let bound = 5.0 / (n as f64).sqrt();
    for seed in 0..20u64 {
        let params = SpikeParams::new(n, 3, vec![b1, b2], gram.clone(), 1.0, seed).unwrap();
        let truth = GroundTruth::generate(params).unwrap();
        let s = sample_spiked_tensor(&truth).unwrap();
        let v = s.contract_scalar(&truth.components[0]).unwrap();
        assert!(
            (v - expect).abs() <= bound,
            "seed {seed}: |{v} - {expect}| > {bound}"
        );
    }
}

#[test]
fn noise_contraction_variance_is_direction_independent() {
    // full contractions W·u^d over independent noise draws have the same
    // variance whatever the direction
    let n = 30;
    let u = random_unit(n, 5);
    let v = random_unit(n, 6);
    let mut var = [0.0f64; 2];
    for (slot, dir) in var.iter_mut().zip([&u, &v]) {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for seed in 0..100u64 {
            let w = sample_noise(n, 3, 1000 + seed).unwrap();
            let s = w.contract_scalar(dir).unwrap();
            sum += s;
            sum_sq += s * s;
        }
        let mean = sum / 100.0;
        *slot = sum_sq / 100.0 - mean * mean;
    }
    let ratio = var[0] / var[1];
    assert!(
        (0.8..=1.25).contains(&ratio),
        "variance ratio {ratio} outside 20%"
    );
}
