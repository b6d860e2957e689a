//! Randomized property suite over all module contracts: completeness by
//! construction, trace/PSD preservation, composition closure, Choi round
//! trips, gradient correctness, w-geometry residuals, and baseline
//! recoveries. A hidden fault-injection flag perturbs one operator to
//! prove the suite can fail.

use krauskge_core::channel::{compose_path, KrausChannel, DEFAULT_KAPPA_CAP};
use krauskge_core::choi::{choi_matrix, kraus_from_choi, DEFAULT_RANK_REL_TOL};
use krauskge_core::data::{split_triples, synth_relation, SynthKind, TripleStore};
use krauskge_core::density::hs_overlap;
use krauskge_core::train::{
    derive_seed, gradient_check, sample_negatives, Batch, ModelParams, TrainConfig,
    GRAD_CHECK_STEP, GRAD_CHECK_TOL,
};
use krauskge_core::{
    build_channel, elliptic_channel, init_entity, init_relation, lorentz_cayley, Geometry,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::errors::{CliError, CliResult};

struct Suite {
    name: &'static str,
    checks: usize,
    failures: usize,
    worst: f64,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite {
            name,
            checks: 0,
            failures: 0,
            worst: 0.0,
        }
    }

    fn check(&mut self, value: f64, bound: f64) {
        self.checks += 1;
        self.worst = self.worst.max(value);
        // NaN counts as a failure.
        if value.is_nan() || value > bound {
            self.failures += 1;
        }
    }

    fn report(&self) -> bool {
        let status = if self.failures == 0 { "ok" } else { "FAIL" };
        println!(
            "{:<22} {:>5} checks  worst {:>10.3e}  {status}",
            self.name, self.checks, self.worst
        );
        self.failures == 0
    }
}

fn random_channel(seed: u64, kappa: usize, d: usize, sigma: f64) -> KrausChannel {
    let skew = init_relation(kappa, d, sigma, seed);
    build_channel(&skew, &Geometry::euclidean(d), kappa, d).expect("cayley build")
}

fn random_density(seed: u64, d: usize, k: usize) -> krauskge_core::DensityMatrix {
    init_entity(d, k, seed).density().expect("nonzero factor")
}

pub fn run(seed: u64, inject_fault: bool) -> CliResult<()> {
    let mut all_ok = true;

    // Completeness & spectral norms of Cayley channels.
    let mut completeness = Suite::new("completeness");
    for i in 0..200u64 {
        let kappa = [1, 2, 4][(i % 3) as usize];
        let d = [4, 8][(i % 2) as usize];
        let mut ch = random_channel(derive_seed(seed, 10, i), kappa, d, 0.5);
        if inject_fault && i == 57 {
            let mut ops = ch.ops().to_vec();
            ops[0][(0, 0)] += 0.1;
            ch = KrausChannel::new_unchecked(ops, ch.geometry().clone()).unwrap();
        }
        completeness.check(ch.completeness_residual(), 1e-10);
        for n in ch.spectral_norms() {
            completeness.check(n - 1.0, 1e-8);
        }
    }
    all_ok &= completeness.report();

    // Trace and PSD preservation, plus norm boundedness (outputs stay
    // inside the density ball with no clipping anywhere).
    let mut preservation = Suite::new("trace/psd");
    for i in 0..200u64 {
        let d = [4, 6, 8][(i % 3) as usize];
        let ch = random_channel(derive_seed(seed, 11, i), 2, d, 0.6);
        let rho = random_density(derive_seed(seed, 12, i), d, 1 + (i % 3) as usize);
        let out = ch.apply(&rho).map_err(|e| CliError::Property(e.to_string()))?;
        preservation.check((out.trace() - rho.trace()).abs(), 1e-9);
        preservation.check(-out.min_eigenvalue(), 1e-8);
        preservation.check(out.frobenius_norm() - 1.0, 1e-8);
    }
    all_ok &= preservation.report();

    // Composition closure.
    let mut composition = Suite::new("composition");
    for i in 0..60u64 {
        let d = 4;
        let a = random_channel(derive_seed(seed, 13, i), 2, d, 0.5);
        let b = random_channel(derive_seed(seed, 14, i), 3, d, 0.5);
        let c = random_channel(derive_seed(seed, 15, i), 2, d, 0.5);
        let path = compose_path(&[a.clone(), b.clone(), c.clone()], DEFAULT_KAPPA_CAP)
            .map_err(|e| CliError::Property(e.to_string()))?;
        composition.check(path.completeness_residual(), 1e-7);
        let rho = random_density(derive_seed(seed, 16, i), d, 2);
        let seq = c
            .apply(&b.apply(&a.apply(&rho).unwrap()).unwrap())
            .unwrap();
        let direct = path.apply(&rho).unwrap();
        composition.check((seq.mat() - direct.mat()).amax(), 1e-9);
    }
    all_ok &= composition.report();

    // Choi round trip and rank.
    let mut choi = Suite::new("choi roundtrip");
    for i in 0..40u64 {
        let kappa = 1 + (i % 3) as usize;
        let d = 4;
        let ch = random_channel(derive_seed(seed, 17, i), kappa, d, 0.7);
        let c = choi_matrix(&ch).map_err(|e| CliError::Property(e.to_string()))?;
        choi.check((c.rank(DEFAULT_RANK_REL_TOL) as f64 - kappa as f64).abs(), 0.0);
        let rec = kraus_from_choi(&c, DEFAULT_RANK_REL_TOL)
            .map_err(|e| CliError::Property(e.to_string()))?;
        let c2 = choi_matrix(&rec).map_err(|e| CliError::Property(e.to_string()))?;
        choi.check((c.mat() - c2.mat()).norm(), 1e-8);
    }
    all_ok &= choi.report();

    // Gradient correctness on small random instances.
    let mut gradients = Suite::new("gradients");
    for i in 0..6u64 {
        let geometry = match i % 3 {
            0 | 1 => Geometry::euclidean(4),
            2 => Geometry::hyperbolic(4),
            _ => unreachable!(),
        };
        let report = gradcheck_instance(derive_seed(seed, 18, i), geometry)
            .map_err(|e| CliError::Property(e.to_string()))?;
        gradients.check(report, GRAD_CHECK_TOL);
    }
    all_ok &= gradients.report();

    // w-geometry completeness.
    let mut wgeom = Suite::new("w-geometry");
    for i in 0..100u64 {
        let d = 4;
        let base = random_channel(derive_seed(seed, 19, i), 2, d, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 20, i));
        let w: Vec<f64> = (0..d).map(|_| 0.25 + 3.0 * rng.random::<f64>()).collect();
        let ell = elliptic_channel(&base, &Geometry::elliptic(w).unwrap())
            .map_err(|e| CliError::Property(e.to_string()))?;
        wgeom.check(ell.completeness_residual(), 1e-7);

        let skew = init_relation(2, d, 0.01, derive_seed(seed, 21, i));
        let lor = lorentz_cayley(&skew, &Geometry::hyperbolic(d), 2, d)
            .map_err(|e| CliError::Property(e.to_string()))?;
        wgeom.check(lor.completeness_residual(), 1e-7);
    }
    all_ok &= wgeom.report();

    // Baseline recoveries.
    let mut recovery = Suite::new("recovery");
    for model in ["rescal", "distmult", "rotate", "golde"] {
        let (dev, residual) = super::recover::equivalence_trials(model, seed, 6, 200)
            .map_err(|e| CliError::Property(e.to_string()))?;
        recovery.check(dev, 1e-10);
        recovery.check(residual, 1e-8);
    }
    all_ok &= recovery.report();

    // Identity sanity: applying the identity channel is exact.
    let rho = random_density(derive_seed(seed, 22, 0), 4, 2);
    let id_out = KrausChannel::identity(4).apply(&rho).unwrap();
    let overlap_drift = (hs_overlap(&id_out, &rho).unwrap()
        - hs_overlap(&rho, &rho).unwrap())
    .abs();
    if overlap_drift > 1e-12 {
        all_ok = false;
    }

    if all_ok {
        println!("verify: all property suites passed");
        Ok(())
    } else {
        Err(CliError::Property("verify: property suite failed".into()))
    }
}

fn gradcheck_instance(seed: u64, geometry: Geometry) -> krauskge_core::Result<f64> {
    let triples = synth_relation(SynthKind::Permutation { n: 6 }, "r", "", seed)?;
    let (train, valid, test) = split_triples(triples, 0.15, 0.15, seed);
    let store = TripleStore::from_named_splits(&train, &valid, &test)?;
    let mut cfg = TrainConfig::euclidean(4, 2, 2);
    cfg.geometry = geometry;
    cfg.gamma = 1.5;
    cfg.seed = seed;
    let params = ModelParams::init(&store, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = store.triples(krauskge_core::Split::Train)[0];
    let negatives = sample_negatives(p, &store, 3, &mut rng)?;
    let batch = Batch {
        positives: vec![p],
        negatives: vec![negatives],
    };
    Ok(gradient_check(&params, &batch, GRAD_CHECK_STEP)?.max_rel_err)
}

/// Shared with `recover`: random unit vector.
pub(super) fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Shared with `recover`: rank-one entity from a vector.
pub(super) fn pure_entity(v: &DVector<f64>) -> krauskge_core::EntityParam {
    let f = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    krauskge_core::EntityParam::new(0, f)
}
