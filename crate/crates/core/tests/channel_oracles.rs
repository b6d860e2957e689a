//! Independent oracles for the channel algebra: a naive triple-loop
//! implementation of channel application, sequential-application checks
//! for composition, SVD-based rank cross-checks for the Choi spectrum, and
//! action-equality comparisons for recovered operator families.

use krauskge_core::channel::{compose_path, KrausChannel, DEFAULT_KAPPA_CAP};
use krauskge_core::choi::{choi_matrix, kraus_from_choi, DEFAULT_RANK_REL_TOL};
use krauskge_core::train::derive_seed;
use krauskge_core::{
    build_channel, elliptic_channel, init_entity, init_relation, lorentz_cayley, DensityMatrix,
    Geometry,
};
use nalgebra::DMatrix;

fn random_channel(seed: u64, kappa: usize, d: usize, sigma: f64) -> KrausChannel {
    let skew = init_relation(kappa, d, sigma, seed);
    build_channel(&skew, &Geometry::euclidean(d), kappa, d).unwrap()
}

fn random_density(seed: u64, d: usize, k: usize) -> DensityMatrix {
    init_entity(d, k, seed).density().unwrap()
}

/// Elementwise triple-loop evaluation of sum_i K_i rho K_i^T.
fn apply_naive(ops: &[DMatrix<f64>], rho: &DMatrix<f64>) -> DMatrix<f64> {
    let d = rho.nrows();
    let mut out = DMatrix::zeros(d, d);
    for k in ops {
        for a in 0..d {
            for b in 0..d {
                let mut acc = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        acc += k[(a, i)] * rho[(i, j)] * k[(b, j)];
                    }
                }
                out[(a, b)] += acc;
            }
        }
    }
    out
}

#[test]
fn apply_matches_naive_loop_oracle() {
    // kappa = 2 Cayley operators on d = 4, maximally mixed input.
    let ch = random_channel(41, 2, 4, 0.6);
    let rho = DensityMatrix::maximally_mixed(4);
    let fast = ch.apply(&rho).unwrap();
    let slow = apply_naive(ch.ops(), rho.mat());
    assert!((fast.mat() - &slow).amax() < 1e-13);
    assert!((fast.trace() - 1.0).abs() < 1e-10);

    for seed in 0..10u64 {
        let ch = random_channel(derive_seed(7, 1, seed), 3, 5, 0.8);
        let rho = random_density(derive_seed(7, 2, seed), 5, 2);
        let fast = ch.apply(&rho).unwrap();
        let slow = apply_naive(ch.ops(), rho.mat());
        assert!((fast.mat() - &slow).amax() < 1e-13);
    }
}

#[test]
fn compose_matches_sequential_application() {
    for seed in 0..20u64 {
        let a = random_channel(derive_seed(8, 1, seed), 2, 4, 0.5);
        let b = random_channel(derive_seed(8, 2, seed), 3, 4, 0.5);
        let composed = a.compose(&b).unwrap();
        for probe in 0..5u64 {
            let rho = random_density(derive_seed(8, 3, seed * 8 + probe), 4, 2);
            let direct = composed.apply(&rho).unwrap();
            let sequential = b.apply(&a.apply(&rho).unwrap()).unwrap();
            assert!(
                (direct.mat() - sequential.mat()).amax() <= 1e-10,
                "seed {seed} probe {probe}"
            );
        }
    }
}

#[test]
fn three_hop_fold_matches_nested_application() {
    for seed in 0..10u64 {
        let chain = vec![
            random_channel(derive_seed(9, 1, seed), 2, 4, 0.4),
            random_channel(derive_seed(9, 2, seed), 2, 4, 0.4),
            random_channel(derive_seed(9, 3, seed), 2, 4, 0.4),
        ];
        let folded = compose_path(&chain, DEFAULT_KAPPA_CAP).unwrap();
        assert_eq!(folded.kappa(), 8);
        assert!(folded.completeness_residual() <= 1e-7);
        let rho = random_density(derive_seed(9, 4, seed), 4, 3);
        let mut sequential = rho.clone();
        for ch in &chain {
            sequential = ch.apply(&sequential).unwrap();
        }
        let direct = folded.apply(&rho).unwrap();
        assert!((direct.mat() - sequential.mat()).amax() <= 1e-9);
    }
}

#[test]
fn composition_residual_additive_bound() {
    // residual(compose(a, b)) <= residual(a) + residual(b) + slack for
    // constraint-satisfying inputs.
    for seed in 0..20u64 {
        let a = random_channel(derive_seed(10, 1, seed), 2, 5, 0.7);
        let b = random_channel(derive_seed(10, 2, seed), 2, 5, 0.7);
        let c = a.compose(&b).unwrap();
        assert!(
            c.completeness_residual()
                <= a.completeness_residual() + b.completeness_residual() + 1e-10
        );
    }
}

#[test]
fn choi_rank_matches_svd_oracle() {
    // Random Cayley operators are linearly independent as vectors, so the
    // Choi rank equals kappa; cross-check against an SVD with the same
    // relative cutoff.
    for (seed, kappa) in [(1u64, 1usize), (2, 2), (3, 3), (4, 4)] {
        let ch = random_channel(seed, kappa, 4, 0.8);
        let c = choi_matrix(&ch).unwrap();
        assert_eq!(c.rank(DEFAULT_RANK_REL_TOL), kappa);
        let sv = c.mat().clone().svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let svd_rank = sv.iter().filter(|&&s| s > 1e-8 * smax).count();
        assert_eq!(svd_rank, kappa);
    }
}

#[test]
fn recovered_channel_acts_identically_under_degenerate_spectrum() {
    // E11 and E22 give a Choi matrix with a repeated eigenvalue, so the
    // recovered operator list is basis-ambiguous; compare by action on the
    // matrix-unit basis instead of operator-by-operator.
    let mut k1 = DMatrix::zeros(2, 2);
    k1[(0, 0)] = 1.0;
    let mut k2 = DMatrix::zeros(2, 2);
    k2[(1, 1)] = 1.0;
    let ch = KrausChannel::new_unchecked(vec![k1, k2], Geometry::euclidean(2)).unwrap();
    let c = choi_matrix(&ch).unwrap();
    let rec = kraus_from_choi(&c, DEFAULT_RANK_REL_TOL).unwrap();
    assert_eq!(rec.kappa(), 2);
    for a in 0..2 {
        for b in 0..2 {
            let mut e = DMatrix::zeros(2, 2);
            e[(a, b)] = 1.0;
            let apply_ops = |ops: &[DMatrix<f64>]| -> DMatrix<f64> {
                ops.iter().map(|k| k * &e * k.transpose()).sum()
            };
            let lhs = apply_ops(ch.ops());
            let rhs = apply_ops(rec.ops());
            assert!((lhs - rhs).amax() < 1e-12, "action differs on E{a}{b}");
        }
    }
}

#[test]
fn w_trace_preserved_across_geometries() {
    // Elliptic change of variables.
    for seed in 0..20u64 {
        let base = random_channel(derive_seed(11, 1, seed), 2, 4, 0.5);
        let g = Geometry::elliptic(vec![2.0, 0.5, 3.0, 1.0]).unwrap();
        let ch = elliptic_channel(&base, &g).unwrap();
        let rho = random_density(derive_seed(11, 2, seed), 4, 2);
        let out = ch.apply(&rho).unwrap();
        assert!((out.w_trace(&g).unwrap() - rho.w_trace(&g).unwrap()).abs() <= 1e-8);
    }
    // Lorentzian W-skew construction.
    for seed in 0..20u64 {
        let g = Geometry::hyperbolic(4);
        let skew = init_relation(2, 4, 0.05, derive_seed(12, 1, seed));
        let ch = lorentz_cayley(&skew, &g, 2, 4).unwrap();
        let rho = random_density(derive_seed(12, 2, seed), 4, 2);
        let out = ch.apply(&rho).unwrap();
        assert!((out.w_trace(&g).unwrap() - rho.w_trace(&g).unwrap()).abs() <= 1e-8);
    }
    // Product geometry through the same W-skew route.
    for seed in 0..20u64 {
        let g = Geometry::product(vec![
            krauskge_core::GeometryBlock::Euclidean(2),
            krauskge_core::GeometryBlock::Hyperbolic(2),
        ])
        .unwrap();
        let skew = init_relation(2, 4, 0.05, derive_seed(13, 1, seed));
        let ch = build_channel(&skew, &g, 2, 4).unwrap();
        assert!(ch.completeness_residual() <= 1e-7);
        let rho = random_density(derive_seed(13, 2, seed), 4, 2);
        let out = ch.apply(&rho).unwrap();
        assert!((out.w_trace(&g).unwrap() - rho.w_trace(&g).unwrap()).abs() <= 1e-8);
    }
}

#[test]
fn purity_bounded_with_equality_only_for_projectors() {
    use krauskge_core::hs_overlap;
    // tr(rho^2) <= 1, equality iff rank one.
    for seed in 0..30u64 {
        let k = 1 + (seed % 3) as usize;
        let rho = random_density(derive_seed(14, 0, seed), 5, k);
        let purity = hs_overlap(&rho, &rho).unwrap();
        assert!(purity <= 1.0 + 1e-12);
        if k == 1 {
            assert!((purity - 1.0).abs() < 1e-10, "rank-one purity {purity}");
        } else {
            // Random rank >= 2 factors are full-rank almost surely.
            assert!(purity < 1.0 - 1e-6);
        }
    }
}
