//! Recursion engines against the dense statevector reference.

use qdtree::coarse::coarse_evolve;
use qdtree::exact::evolve_exact;
use qdtree::exact::ExactConfig;
use qdtree::oracle::{
    build_isometry, certification_matrix, compare_ensembles, completeness_error, enumerate_measurement,
    enumerate_total_spin, ORACLE_TOL,
};
use qdtree::{branch_weight, initial_ensemble, rotate, BlochPoint, ModelParams, Peak, Variant, WeightedEnsemble};

#[test]
fn certification_matrix_passes() {
    let cases = certification_matrix(50, 11).unwrap();
    assert_eq!(cases.len(), 2 * 3 * 10);
    for c in &cases {
        assert!(c.pass, "{c:?}");
    }
}

#[test]
fn total_spin_matches_coarse_recursion() {
    for j in [0.2, 0.4, 0.5, 0.8] {
        for n in 2..=4 {
            for k in 1..n {
                let t = n - k;
                let params = ModelParams::new(Variant::Deterministic, j, k).unwrap();
                let iso = build_isometry(n, &params, &[]).unwrap();
                let dense = enumerate_total_spin(&iso, t, k).unwrap();
                let rec = &coarse_evolve(&params, t)[t];
                assert_eq!(dense.len(), rec.len());
                for i in 0..rec.len() {
                    let err = (dense.p[i] - rec.p[i])
                        .abs()
                        .max((dense.a[i] - rec.a[i]).abs())
                        .max((dense.b[i] - rec.b[i]).abs());
                    assert!(err < 1e-10, "J={j} t={t} k={k} M index {i}: {err:e}");
                }
            }
        }
    }
}

#[test]
fn measurements_are_complete_and_positive() {
    for variant in [Variant::Deterministic, Variant::Random] {
        let params = ModelParams::new(variant, 0.37, 1).unwrap();
        let signs: Vec<bool> = (0..qdtree::exact::sign_count(4)).map(|i| i % 3 == 0).collect();
        let iso = build_isometry(4, &params, &signs).unwrap();
        assert!(iso.isometry_error() < 1e-12);
        for k in 1..=4 {
            let (err, min_eig) = completeness_error(&iso, 4 - k, k).unwrap();
            assert!(err < 1e-12, "{variant} k={k}: {err:e}");
            assert!(min_eig > -1e-12, "{variant} k={k}: {min_eig:e}");
        }
    }
}

/// Deterministic exact step written out by hand, optionally with the sign of
/// the posterior v component flipped.
fn hand_step(ens: &WeightedEnsemble, params: &ModelParams, flip_v: bool) -> WeightedEnsemble {
    let rot: Vec<Peak> = ens
        .peaks
        .iter()
        .map(|p| Peak::new(p.w, rotate(p.point, params.theta())))
        .collect();
    let sign = if flip_v { -1.0 } else { 1.0 };
    let mut out = Vec::new();
    for l in &rot {
        for r in &rot {
            let phi = branch_weight(l.point, r.point);
            if phi < 1e-14 {
                continue;
            }
            let q = BlochPoint {
                u: (l.point.u + r.point.u) / phi,
                v: sign * l.point.v * r.point.v / phi,
            };
            out.push(Peak::new(l.w * r.w * phi, q));
        }
    }
    let mut e = WeightedEnsemble::new(ens.t + 1, out);
    e.normalize().unwrap();
    e
}

#[test]
fn oracle_catches_a_sign_mutation() {
    let (t, k) = (2, 2);
    let params = ModelParams::new(Variant::Deterministic, 0.4, k).unwrap();
    let oracle = enumerate_measurement(&build_isometry(t + k, &params, &[]).unwrap(), t, k).unwrap();

    let run = |flip| {
        let mut e = initial_ensemble(&params);
        for _ in 0..t {
            e = hand_step(&e, &params, flip);
        }
        compare_ensembles(&oracle, &e, 1e-11, 1e-15).max_error()
    };
    let clean = run(false);
    let mutated = run(true);
    assert!(clean < ORACLE_TOL, "unmutated step disagrees: {clean:e}");
    assert!(mutated > ORACLE_TOL, "mutation went unnoticed: {mutated:e}");

    let library = evolve_exact(&params, t, &ExactConfig::default()).unwrap().pop().unwrap();
    assert!(compare_ensembles(&oracle, &library, 1e-11, 1e-15).max_error() < ORACLE_TOL);
}
