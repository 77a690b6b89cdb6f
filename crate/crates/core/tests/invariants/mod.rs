//! Randomized invariants of the kernel, the engines and the coarse arrays.
//! Shared by the property tests and the acceptance run.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use qdtree::clifford::{clifford_step, CliffordState};
use qdtree::coarse::{coarse_evolve, SpinResolvedTriple, P_FLOOR};
use qdtree::exact::step_exact;
use qdtree::sampler::{step_biased, Resampling};
use qdtree::{branch_map, branch_weight, initial_ensemble, rotate, BlochPoint, ModelParams, Peak, Variant, WeightedEnsemble};
use std::f64::consts::PI;

pub type Check = fn(u32) -> Result<(), String>;

/// Every invariant with its name.
pub const SUITE: &[(&str, Check)] = &[
    ("unit circle pairs stay on circle", unit_circle_pairs),
    ("weight in range, map in disk", weight_and_disk),
    ("rotation keeps norm", rotation_norm),
    ("biased step symmetric and centered", biased_symmetry),
    ("exact steps keep weight and zero mean", exact_steps),
    ("coarse arrays conserve and stay valid", coarse_arrays),
    ("clifford region invariant", clifford_region),
    ("clifford fixed points", clifford_fixed_points),
];

fn run<S: Strategy>(cases: u32, s: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&s, f).map_err(|e| e.to_string())
}

fn unit(a: f64) -> BlochPoint {
    BlochPoint::new(a.cos(), a.sin()).unwrap()
}

fn disk() -> impl Strategy<Value = BlochPoint> {
    (0.0..=1.0f64, 0.0..2.0 * PI).prop_map(|(r, a)| BlochPoint::new(r.sqrt() * a.cos(), r.sqrt() * a.sin()).unwrap())
}

pub fn unit_circle_pairs(cases: u32) -> Result<(), String> {
    run(cases, (0.0..2.0 * PI, 0.0..2.0 * PI), |(a, b)| {
        let (l, r) = (unit(a), unit(b));
        let phi = branch_weight(l, r);
        prop_assume!(phi > 1e-14);
        let out = branch_map(l, r).unwrap();
        let dev = (out.r2() - 1.0).abs();
        // Rounding in the inputs is amplified by 1/phi near the forbidden branch.
        prop_assert!(dev < 64.0 * f64::EPSILON / phi, "phi={phi} dev={dev:e}");
        if phi >= 1e-3 {
            prop_assert!(dev < 1e-12, "phi={phi} dev={dev:e}");
        }
        Ok(())
    })
}

pub fn weight_and_disk(cases: u32) -> Result<(), String> {
    run(cases, (disk(), disk()), |(l, r)| {
        let phi = branch_weight(l, r);
        prop_assert!((0.0..=2.0).contains(&phi));
        if phi > 1e-14 {
            let out = branch_map(l, r).unwrap();
            prop_assert!(out.r2() <= 1.0 + 1e-12);
        }
        Ok(())
    })
}

pub fn rotation_norm(cases: u32) -> Result<(), String> {
    run(cases, (disk(), -10.0..10.0f64), |(p, th)| {
        prop_assert!((rotate(p, th).r2() - p.r2()).abs() < 1e-14);
        Ok(())
    })
}

pub fn biased_symmetry(cases: u32) -> Result<(), String> {
    let s = (prop::collection::vec(disk(), 8), 0.01..0.99f64, any::<u64>());
    run(cases, s, |(pts, j, seed)| {
        // Symmetrize the input so that it is a legitimate random-model ensemble.
        let peaks: Vec<Peak> = pts
            .iter()
            .flat_map(|p| [Peak::new(1.0, *p), Peak::new(1.0, BlochPoint { u: -p.u, v: -p.v })])
            .collect();
        let mut ens = WeightedEnsemble::new(3, peaks);
        ens.normalize().unwrap();
        let params = ModelParams::new(Variant::Random, j, 2).unwrap();
        let out = step_biased(&ens, 16, &params, seed, Resampling::Systematic).unwrap();
        let m = out.moments();
        prop_assert!((m.total - 1.0).abs() < 1e-12);
        prop_assert!(m.mean_u.abs() < 1e-14 && m.mean_v.abs() < 1e-14, "means {} {}", m.mean_u, m.mean_v);
        let key = |p: &Peak| (p.w.to_bits(), p.point.u.to_bits(), p.point.v.to_bits());
        let mut orig: Vec<_> = out.peaks.iter().map(key).collect();
        orig.sort_unstable();
        for (su, sv) in [(-1.0, 1.0), (1.0, -1.0)] {
            let mut refl: Vec<_> = out
                .peaks
                .iter()
                .map(|p| key(&Peak::new(p.w, BlochPoint { u: su * p.point.u, v: sv * p.point.v })))
                .collect();
            refl.sort_unstable();
            prop_assert_eq!(&orig, &refl);
        }
        Ok(())
    })
}

pub fn exact_steps(cases: u32) -> Result<(), String> {
    run(cases, (0.01..0.99f64, 1usize..6, any::<bool>()), |(j, k, random)| {
        let variant = if random { Variant::Random } else { Variant::Deterministic };
        let params = ModelParams::new(variant, j, k).unwrap();
        let mut ens = initial_ensemble(&params);
        for _ in 0..2 {
            ens = step_exact(&ens, &params).unwrap();
            let m = ens.moments();
            prop_assert!((m.total - 1.0).abs() < 1e-10);
            prop_assert!(m.mean_u.abs() < 1e-10 && m.mean_v.abs() < 1e-10);
            if k == 1 {
                let wdev = ens.average(|p| (p.r2() - 1.0).abs());
                prop_assert!(wdev < 1e-12, "weighted deviation {wdev:e}");
            }
        }
        Ok(())
    })
}

fn check_triple(tr: &SpinResolvedTriple) -> Result<(), TestCaseError> {
    let sp: f64 = tr.p.iter().sum();
    let sa: f64 = tr.a.iter().sum();
    let sb: f64 = tr.b.iter().sum();
    prop_assert!((sp - 1.0).abs() < 1e-10, "sum p = {sp}");
    prop_assert!(sa.abs() < 1e-10 && sb.abs() < 1e-10, "sum a = {sa}, sum b = {sb}");
    let mean_m: f64 = (0..tr.len()).map(|i| tr.spin(i) as f64 * tr.p[i]).sum();
    prop_assert!(mean_m.abs() < 1e-9 * (tr.len() as f64), "<M> = {mean_m}");
    let mv: f64 = (0..tr.len()).map(|i| tr.spin(i) as f64 * tr.b[i]).sum();
    prop_assert!(mv.abs() < 1e-10, "<M v> = {mv}");
    for i in 0..tr.len() {
        let (p, a, b) = (tr.p[i], tr.a[i], tr.b[i]);
        prop_assert!(p >= 0.0);
        if p > P_FLOOR {
            prop_assert!(a * a + b * b <= p * p * (1.0 + 1e-9) + 1e-300, "entry {i}: a={a} b={b} p={p}");
        }
    }
    Ok(())
}

pub fn coarse_arrays(cases: u32) -> Result<(), String> {
    run(cases, (0.001..0.999f64, 1usize..8, 1usize..7), |(j, k, t)| {
        let params = ModelParams::new(Variant::Deterministic, j, k).unwrap();
        for tr in coarse_evolve(&params, t).iter().skip(1) {
            check_triple(tr)?;
        }
        Ok(())
    })
}

/// Samples the Clifford step ten times as often as the other checks.
pub fn clifford_region(cases: u32) -> Result<(), String> {
    run(cases.saturating_mul(10), (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64), |(x, y, j)| {
        // Fold the unit square onto the simplex.
        let (pz, px) = if x + y > 1.0 { (1.0 - x, 1.0 - y) } else { (x, y) };
        let s = CliffordState::new(pz, px).unwrap();
        let n = clifford_step(s, j);
        prop_assert!(n.pi_z >= 0.0 && n.pi_x >= 0.0 && n.pi_z + n.pi_x <= 1.0 + 1e-15, "{n:?}");
        Ok(())
    })
}

/// Roots in [0, 1] of the fixed-point condition on the line pi_z + pi_x = 1.
fn line_fixed_points(j: f64) -> Vec<CliffordState> {
    let (a, b, c) = ((1.0 - 2.0 * j).powi(2), 2.0 * j * (1.0 - 2.0 * j) - 1.0, j * j);
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    [(-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a)]
        .into_iter()
        .filter(|x| (0.0..=1.0).contains(x))
        .map(|x| CliffordState { pi_z: 1.0 - x, pi_x: x })
        .collect()
}

/// Lattice scan: the only near-fixed points are the origin and the line roots.
pub fn clifford_fixed_points(_cases: u32) -> Result<(), String> {
    let n = 1000;
    let h = 1.0 / (n - 1) as f64;
    for j in [0.2, 0.3, 0.45, 0.55, 0.7, 0.9] {
        let fixed = line_fixed_points(j);
        if fixed.is_empty() {
            return Err(format!("J={j}: no fixed point on the line"));
        }
        for f in &fixed {
            let g = clifford_step(*f, j);
            if (g.pi_z - f.pi_z).abs() >= 1e-12 || (g.pi_x - f.pi_x).abs() >= 1e-12 {
                return Err(format!("J={j}: {f:?} is not fixed"));
            }
        }
        for i in 0..n {
            for k in 0..n - i {
                let s = CliffordState { pi_z: i as f64 * h, pi_x: k as f64 * h };
                let g = clifford_step(s, j);
                let res = (g.pi_z - s.pi_z).abs().max((g.pi_x - s.pi_x).abs());
                if res <= 1e-6 {
                    let near = |f: &CliffordState| (f.pi_z - s.pi_z).hypot(f.pi_x - s.pi_x) < 2.0 * h;
                    if !(near(&CliffordState::ENCODING) || fixed.iter().any(near)) {
                        return Err(format!("J={j}: stray near-fixed point {s:?} with residual {res:e}"));
                    }
                }
            }
        }
    }
    Ok(())
}
