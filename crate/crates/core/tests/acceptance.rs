//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! Runs without the test harness so the lines always reach stdout. The
//! process exits 0 whether or not every criterion passes; the verdicts are
//! the output.

mod invariants;

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use qdtree::clifford::{clifford_flow, clifford_step, critical_line_point, CliffordState};
use qdtree::coarse::{
    coarse_deficit, coarse_evolve, fixed_point_moments, moment_predictions, small_theta_deficits, spin_moments,
};
use qdtree::criticality::{
    collapse_curve, collapse_spread, estimate_jd, lambda_d_point, redundancy_empirical, redundancy_exponent, JdConfig,
};
use qdtree::exact::step_exact;
use qdtree::observables::{decay_slope, encoding_eigenvalue, purity, redundancy_prediction, window_average};
use qdtree::oracle::certification_matrix;
use qdtree::run::{evolve_records, Engine};
use qdtree::{initial_ensemble, ModelParams, Variant};

// Tolerances and run sizes.
const ORACLE_RUNTIME_S: f64 = 300.0;
const LAMBDA_C_REL: f64 = 0.01;
const EPS_RATIO: (f64, f64) = (0.8, 1.2);
const JD_RANDOM: (f64, f64) = (0.375, 0.010);
const JD_DETERMINISTIC: (f64, f64) = (0.35, 0.02);
const DECAY_SLOPE_TOL: f64 = 0.15;
const COLLAPSE_SPREAD: f64 = 0.15;
const COLLAPSE_WINDOW: f64 = 0.5;
const PREFACTOR_RATIO: (f64, f64) = (0.9, 1.1);
const DEFICIT_TOL: f64 = 1e-3;
const MOMENT_REL: f64 = 1e-10;
const FIXED_POINT_REL: f64 = 0.02;
const GAUSSIAN_TOL: f64 = 0.05;
const CLIFFORD_TOL: f64 = 1e-10;
const CLIFFORD_LINE_TOL: f64 = 1e-12;
const PROPERTY_CASES: u32 = 100_000;
const REDUNDANCY_REL: f64 = 0.25;
const EXPONENT_REL: f64 = 0.15;

const M_BIASED: usize = 100_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

fn theta(j: f64) -> f64 {
    j * FRAC_PI_2
}

fn oracle() -> Verdict {
    let start = Instant::now();
    let cases = match certification_matrix(200, 11) {
        Ok(c) => c,
        Err(e) => return verdict(false, format!("error: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let failed = cases.iter().filter(|c| !c.pass).count();
    let worst = cases.iter().map(|c| c.comparison.max_error()).fold(0.0, f64::max);
    verdict(
        failed == 0 && secs < ORACLE_RUNTIME_S,
        format!("{} cases, {failed} failed, max per-peak error {worst:.2e}, {secs:.1} s", cases.len()),
    )
}

fn encoding_transition() -> Verdict {
    let at_half = (encoding_eigenvalue(0.5) - 1.0).abs();
    let crosses = at_half < 1e-15 && encoding_eigenvalue(0.499) > 1.0 && encoding_eigenvalue(0.501) < 1.0;
    let mut worst = 0.0f64;
    for j in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9] {
        let c = theta(j).cos();
        // Smallest k whose initial purity c^(2(k-1)) lies below 1e-4.
        let k = 2 + ((1e-4f64).ln() / (2.0 * c.ln())).floor() as usize;
        for variant in [Variant::Deterministic, Variant::Random] {
            let p = ModelParams::new(variant, j, k).unwrap();
            let e0 = initial_ensemble(&p);
            assert!(purity(&e0) < 1e-4);
            let e1 = step_exact(&e0, &p).unwrap();
            let gain = e1.moments().mean_u2 / e0.moments().mean_u2;
            worst = worst.max((gain / encoding_eigenvalue(j) - 1.0).abs());
        }
    }
    verdict(
        crosses && worst < LAMBDA_C_REL,
        format!("|lambda_c(1/2) - 1| = {at_half:.1e}, max relative amplification error {worst:.2e}"),
    )
}

fn eight_eps() -> Verdict {
    let (k, t, seed) = (6, 160, 7);
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.005, 0.01, 0.02] {
        let j = (0.5f64 + eps).sqrt().acos() / FRAC_PI_2;
        let p = ModelParams::new(Variant::Random, j, k).unwrap();
        let recs = evolve_records(&p, &Engine::biased(M_BIASED), t, seed).unwrap();
        let series: Vec<(usize, f64)> = recs.iter().map(|r| (r.t, r.purity)).collect();
        let ratio = window_average(&series, t).unwrap() / (8.0 * eps);
        ok &= within(ratio, EPS_RATIO);
        parts.push(format!("eps={eps}: {ratio:.3}"));
    }
    verdict(ok, format!("<r2>/(8 eps) at k={k}, t={t}: {}", parts.join(", ")))
}

fn jd_estimates() -> (Verdict, Option<f64>) {
    let mut rnd = JdConfig::new(Variant::Random, Engine::biased(M_BIASED), 10);
    rnd.seeds = (1..=8).collect();
    rnd.tol = 2e-3;
    let mut det = JdConfig::new(Variant::Deterministic, Engine::compressed(100), 9);
    det.seeds = (1..=4).collect();
    det.tol = 2e-3;
    let r = estimate_jd(&rnd, (0.3, 0.45));
    let d = estimate_jd(&det, (0.3, 0.45));
    let show = |x: &qdtree::QdResult<qdtree::criticality::JdEstimate>| match x {
        Ok(e) => format!("{:.4}", e.jd),
        Err(e) => format!("error: {e}"),
    };
    let ok_r = r.as_ref().map_or(false, |e| (e.jd - JD_RANDOM.0).abs() <= JD_RANDOM.1);
    let ok_d = d.as_ref().map_or(false, |e| (e.jd - JD_DETERMINISTIC.0).abs() <= JD_DETERMINISTIC.1);
    (
        verdict(
            ok_r && ok_d,
            format!(
                "random {} (target {} +- {}) {}, deterministic {} (target {} +- {}) {}",
                show(&r),
                JD_RANDOM.0,
                JD_RANDOM.1,
                if ok_r { "ok" } else { "miss" },
                show(&d),
                JD_DETERMINISTIC.0,
                JD_DETERMINISTIC.1,
                if ok_d { "ok" } else { "miss" },
            ),
        ),
        r.ok().map(|e| e.jd),
    )
}

fn averaged_slope(j: f64) -> f64 {
    let (k, t) = (3, 160);
    let p = ModelParams::new(Variant::Random, j, k).unwrap();
    let seeds = 1..=8u64;
    let n = seeds.clone().count() as f64;
    let mut acc = vec![0.0; t + 1];
    for s in seeds {
        for r in evolve_records(&p, &Engine::biased(M_BIASED), t, s).unwrap() {
            acc[r.t] += r.purity / n;
        }
    }
    let series: Vec<(usize, f64)> = acc.into_iter().enumerate().collect();
    decay_slope(&series, 40, 160)
}

fn critical_decay(jd: Option<f64>) -> Verdict {
    let Some(jd) = jd else {
        return verdict(false, "no random J_d estimate".into());
    };
    let s = averaged_slope(jd);
    let lo = averaged_slope(jd - 0.002);
    let hi = averaged_slope(jd + 0.002);
    verdict(
        (s + 1.0).abs() <= DECAY_SLOPE_TOL,
        format!("slope {s:.3} at J_d = {jd:.4}; {lo:.3} at J_d - 0.002, {hi:.3} at J_d + 0.002"),
    )
}

fn collapse() -> Verdict {
    let (jd, k, n) = (0.35, 2, 200);
    let times = [7usize, 8, 9, 10];
    let seeds: Vec<u64> = (1..=4).collect();
    let js: Vec<f64> = (0..=16).map(|i| 0.27 + 0.01 * i as f64).collect();
    let mut data = vec![Vec::new(); times.len()];
    for &j in &js {
        let p = ModelParams::new(Variant::Deterministic, j, k).unwrap();
        let mut avg = vec![0.0; times.len()];
        for &s in &seeds {
            let recs = evolve_records(&p, &Engine::compressed(n), 10, s).unwrap();
            for (i, &t) in times.iter().enumerate() {
                avg[i] += recs[t].purity / seeds.len() as f64;
            }
        }
        for (i, a) in avg.into_iter().enumerate() {
            data[i].push((j, a));
        }
    }
    let curves: Vec<_> = times.iter().zip(&data).map(|(&t, d)| collapse_curve(t, d, jd)).collect();
    match collapse_spread(&curves, -COLLAPSE_WINDOW, COLLAPSE_WINDOW, 41) {
        Some(s) => verdict(
            s < COLLAPSE_SPREAD,
            format!("relative spread {s:.3} over (J - J_d) t in [-{COLLAPSE_WINDOW}, {COLLAPSE_WINDOW}], J_d = {jd}"),
        ),
        None => verdict(false, "curves do not cover the window".into()),
    }
}

fn coarse_prefactor() -> Verdict {
    let j = 0.02;
    let tr = coarse_evolve(&ModelParams::new(Variant::Deterministic, j, 2).unwrap(), 11)
        .pop()
        .unwrap();
    let def = coarse_deficit(&tr) / theta(j).powi(4);
    let ratio = def / 1.75;
    let ok_ratio = within(ratio, PREFACTOR_RATIO);

    let th = 1e-3;
    let mut worst = 0.0f64;
    for t in [3usize, 4] {
        let d = small_theta_deficits(t, th);
        let at = |m: i64| d.iter().find(|e| e.0 == m).map(|e| e.1 / th.powi(4)).unwrap_or(f64::NAN);
        let side = 1i64 << (t - 2);
        worst = worst
            .max((at(0) - 1.0).abs())
            .max((at(side) - 2.0 / 3.0).abs())
            .max((at(-side) - 2.0 / 3.0).abs());
    }
    let ok_def = worst < DEFICIT_TOL;
    verdict(
        ok_ratio && ok_def,
        format!(
            "deficit / (7/4 theta^4) = {ratio:.4} {}, / (7/3 theta^4) = {:.4}; deficit ratios max error {worst:.1e} {}",
            if ok_ratio { "ok" } else { "miss" },
            def / (7.0 / 3.0),
            if ok_def { "ok" } else { "miss" },
        ),
    )
}

fn moments() -> Verdict {
    let mut worst_m2 = 0.0f64;
    for &(j, k) in &[(0.2, 1), (0.3, 2), (0.45, 3), (0.5, 2), (0.6, 1), (0.8, 2)] {
        for tr in coarse_evolve(&ModelParams::new(Variant::Deterministic, j, k).unwrap(), 14) {
            let pred = moment_predictions(j, k, tr.t).m2;
            worst_m2 = worst_m2.max((spin_moments(&tr).m2 / pred - 1.0).abs());
        }
    }
    let ok_m2 = worst_m2 < MOMENT_REL;

    let j = 0.3;
    let tr = coarse_evolve(&ModelParams::new(Variant::Deterministic, j, 2).unwrap(), 16)
        .pop()
        .unwrap();
    let got = spin_moments(&tr);
    let fp = fixed_point_moments(j);
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    let e_skew = rel(-got.skewness, fp.skewness);
    let e_kurt = rel(-got.excess_kurtosis, fp.excess_kurtosis_negative);
    let e_mu = rel(got.covariance_mu, fp.covariance_mu);
    let ok_fp = e_skew < FIXED_POINT_REL && e_kurt < FIXED_POINT_REL && e_mu < FIXED_POINT_REL;

    let g = spin_moments(
        &coarse_evolve(&ModelParams::new(Variant::Deterministic, 0.6, 2).unwrap(), 12)
            .pop()
            .unwrap(),
    );
    let ok_g = g.skewness.abs() < GAUSSIAN_TOL && g.excess_kurtosis.abs() < GAUSSIAN_TOL;
    verdict(
        ok_m2 && ok_fp && ok_g,
        format!(
            "<M2> max rel error {worst_m2:.1e}; J=0.3 t=16 rel errors skew {e_skew:.3}, kurt {e_kurt:.3}, <mu> {e_mu:.3}; \
             J=0.6 t=12 skew {:.3}, excess kurt {:.3}",
            g.skewness, g.excess_kurtosis
        ),
    )
}

fn clifford() -> Verdict {
    let s0 = CliffordState::new(0.5, 0.0).unwrap();
    let qd = clifford_flow(s0, 0.45, 1000).unwrap();
    let enc = clifford_flow(s0, 0.55, 1000).unwrap();
    let e_qd = (qd.last().purity() - 1.0).abs();
    let e_enc = enc.last().purity().abs();
    let mut e_line = 0.0f64;
    for i in 0..=100 {
        let p = critical_line_point(i as f64 / 100.0);
        e_line = e_line.max(clifford_step(p, 0.5).distance(&p));
    }
    verdict(
        e_qd < CLIFFORD_TOL && e_enc < CLIFFORD_TOL && e_line < CLIFFORD_LINE_TOL,
        format!(
            "J=0.45 limit error {e_qd:.1e} after {} steps, J=0.55 limit {e_enc:.1e} after {} steps, line residual {e_line:.1e}",
            qd.trajectory.len() - 1,
            enc.trajectory.len() - 1
        ),
    )
}

fn properties() -> Verdict {
    let mut failed = Vec::new();
    for (name, check) in invariants::SUITE {
        if let Err(e) = check(PROPERTY_CASES) {
            failed.push(format!("{name}: {e}"));
        }
    }
    let n = invariants::SUITE.len();
    if failed.is_empty() {
        verdict(true, format!("{n} invariants, {PROPERTY_CASES} cases each"))
    } else {
        verdict(false, failed.join("; "))
    }
}

fn measured_lambda_d(variant: Variant, j: f64) -> Option<f64> {
    let (engine, t, seeds) = match variant {
        Variant::Random => (Engine::biased(M_BIASED), 10, 8),
        _ => (Engine::compressed(100), 9, 4),
    };
    let mut cfg = JdConfig::new(variant, engine, t);
    cfg.seeds = (1..=seeds).collect();
    lambda_d_point(&cfg, j).ok().map(|p| p.lambda_d)
}

fn redundancy() -> Verdict {
    // The worked values are quoted for lambda_d = 0.75 at J = 0.2.
    let (j, stated) = (0.2, 0.75);
    let r = |delta: f64, env: f64, ld: f64| redundancy_prediction(j, delta, env, ld).unwrap_or(f64::NAN);
    let (r20, r10) = (r(0.2, 1e5, stated), r(0.1, 1e3, stated));
    let ok_values = (r20 / 256.0 - 1.0).abs() < REDUNDANCY_REL && (r10 / 0.5 - 1.0).abs() < REDUNDANCY_REL;

    let mut measured = Vec::new();
    for variant in [Variant::Random, Variant::Deterministic] {
        match measured_lambda_d(variant, j) {
            Some(ld) => measured.push(format!(
                "{variant} lambda_d {ld:.3} gives {:.0} and {:.2}",
                r(0.2, 1e5, ld),
                r(0.1, 1e3, ld)
            )),
            None => measured.push(format!("{variant} lambda_d unavailable")),
        }
    }

    let scans: Vec<_> = (12..=18)
        .map(|n| redundancy_empirical(Variant::Random, j, 0.2, n, &Engine::biased(M_BIASED), 3).unwrap())
        .collect();
    let analytic = encoding_eigenvalue(j).ln() / std::f64::consts::LN_2;
    let empirical = redundancy_exponent(&scans).unwrap_or(f64::NAN);
    let ok_exp = (empirical / analytic - 1.0).abs() < EXPONENT_REL;
    verdict(
        ok_values && ok_exp,
        format!(
            "at lambda_d = {stated}: R_20% (|E|=1e5) = {r20:.1}, R_10% (|E|=1e3) = {r10:.3}; \
             exponent empirical {empirical:.3} vs analytic {analytic:.3}; measured: {}",
            measured.join(", ")
        ),
    )
}

fn main() {
    // Cargo passes harness flags such as --list; only run on a plain invocation.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let mut passed = 0;
    let mut show = |n: usize, title: &str, v: Verdict| {
        if v.pass {
            passed += 1;
        }
        println!("criterion {n:>2} {}: {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };
    show(1, "oracle equivalence", oracle());
    show(2, "encoding transition", encoding_transition());
    show(3, "8 eps law", eight_eps());
    let (v, jd) = jd_estimates();
    show(4, "J_d estimates", v);
    show(5, "critical decay", critical_decay(jd));
    show(6, "scaling collapse", collapse());
    show(7, "coarse-grained prefactor", coarse_prefactor());
    show(8, "moment analytics", moments());
    show(9, "clifford limits", clifford());
    show(10, "invariant suite", properties());
    show(11, "redundancy", redundancy());
    println!("acceptance: {passed}/11 criteria pass, {:.0} s", start.elapsed().as_secs_f64());
}
