//! Critical-point estimation, redundancy scans and finite-size collapse.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{ModelParams, Variant};
use crate::error::{QdError, QdResult};
use crate::observables::{conditional_entropy, linear_fit, purity, qd_stability_eigenvalue};
use crate::run::{evolve, Engine};

#[derive(Clone, Debug)]
pub struct JdConfig {
    pub variant: Variant,
    pub engine: Engine,
    /// First generation entering the estimate.
    pub t_converge: usize,
    /// Number of consecutive generations averaged, at least 2.
    pub window: usize,
    pub seeds: Vec<u64>,
    /// Bisection stops once the bracket is narrower than this.
    pub tol: f64,
    /// Allowed change of λ_d between consecutive generations, on top of
    /// three standard errors of the replica spread.
    pub drift_tol: f64,
    /// Fail instead of flagging when a point misses the convergence gate.
    pub strict: bool,
}

impl JdConfig {
    pub fn new(variant: Variant, engine: Engine, t_converge: usize) -> Self {
        JdConfig {
            variant,
            engine,
            t_converge,
            window: 2,
            seeds: vec![1],
            tol: 1e-3,
            drift_tol: 1e-3,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub j: f64,
    pub lambda_d: f64,
    /// Standard error over replicas (0 for a single replica).
    pub stderr: f64,
    /// |mean λ_d(t+1) − mean λ_d(t)| at the start of the window.
    pub drift: f64,
    /// max |<r²> − 1| over the window.
    pub r2_gap: f64,
    pub converged: bool,
    /// Replica mean per generation of the window.
    pub per_t: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JdEstimate {
    pub jd: f64,
    pub curve: Vec<LambdaPoint>,
    pub converged: bool,
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let var = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// λ_d of the k = 1 flow at `j`, averaged over the window and the replicas.
pub fn lambda_d_point(cfg: &JdConfig, j: f64) -> QdResult<LambdaPoint> {
    let params = ModelParams::new(cfg.variant, j, 1)?;
    let window = cfg.window.max(2);
    let t_end = cfg.t_converge + window - 1;

    let runs: Vec<QdResult<Vec<(f64, f64)>>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut vals = Vec::with_capacity(window);
            let mut err = None;
            evolve(&params, &cfg.engine, t_end, seed, |e| {
                if e.t >= cfg.t_converge && err.is_none() {
                    match qd_stability_eigenvalue(e, &params) {
                        Ok(l) => vals.push((l, purity(e))),
                        Err(x) => err = Some(x),
                    }
                }
            })?;
            match err {
                Some(e) => Err(e),
                None => Ok(vals),
            }
        })
        .collect();
    let runs = runs.into_iter().collect::<QdResult<Vec<_>>>()?;

    let per_t: Vec<(usize, f64)> = (0..window)
        .map(|i| {
            let m = runs.iter().map(|r| r[i].0).sum::<f64>() / runs.len() as f64;
            (cfg.t_converge + i, m)
        })
        .collect();
    let per_seed: Vec<f64> = runs
        .iter()
        .map(|r| r.iter().map(|x| x.0).sum::<f64>() / window as f64)
        .collect();
    let diffs: Vec<f64> = runs.iter().map(|r| r[1].0 - r[0].0).collect();
    let (lambda_d, stderr) = mean_se(&per_seed);
    let (drift, drift_se) = mean_se(&diffs);
    let r2_gap = runs
        .iter()
        .flat_map(|r| r.iter().map(|x| (x.1 - 1.0).abs()))
        .fold(0.0, f64::max);
    let converged = r2_gap < 1e-6 && drift.abs() < cfg.drift_tol + 3.0 * drift_se;
    Ok(LambdaPoint {
        j,
        lambda_d,
        stderr,
        drift: drift.abs(),
        r2_gap,
        converged,
        per_t,
    })
}

/// Bisection for the J at which λ_d crosses 1.
///
/// The returned estimate interpolates linearly inside the final bracket.
pub fn estimate_jd(cfg: &JdConfig, bracket: (f64, f64)) -> QdResult<JdEstimate> {
    let (mut lo, mut hi) = bracket;
    let mut curve = Vec::new();
    let eval = |j: f64, curve: &mut Vec<LambdaPoint>| -> QdResult<f64> {
        let p = lambda_d_point(cfg, j)?;
        if cfg.strict && !p.converged {
            return Err(QdError::NotConverged(format!(
                "lambda_d at J={j}: drift {:.2e}, r2 gap {:.2e}",
                p.drift, p.r2_gap
            )));
        }
        let f = p.lambda_d - 1.0;
        curve.push(p);
        Ok(f)
    };
    let mut f_lo = eval(lo, &mut curve)?;
    let mut f_hi = eval(hi, &mut curve)?;
    if f_lo.signum() == f_hi.signum() {
        return Err(QdError::NoSignChange { lo, hi });
    }
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = eval(mid, &mut curve)?;
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    let jd = lo + (hi - lo) * f_lo / (f_lo - f_hi);
    curve.sort_by(|a, b| a.j.total_cmp(&b.j));
    let converged = curve.iter().all(|p| p.converged);
    Ok(JdEstimate { jd, curve, converged })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundancyScan {
    /// Tree depth; the environment holds 2^n qubits.
    pub n: usize,
    pub delta: f64,
    /// χ of the fraction with relative size 2^-k, for k = 1..=n.
    pub chi: Vec<(usize, f64)>,
    /// Interpolated k at which χ drops through (1−δ) ln 2.
    pub k_star: Option<f64>,
    /// 2^k_star.
    pub redundancy: Option<f64>,
}

/// Scan the fraction depth k at fixed environment depth n and locate the
/// smallest fraction still holding (1−δ) ln 2 of conditional entropy.
pub fn redundancy_empirical(
    variant: Variant,
    j: f64,
    delta: f64,
    n: usize,
    engine: &Engine,
    seed: u64,
) -> QdResult<RedundancyScan> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(QdError::InvalidParam(format!("delta must lie in (0,1), got {delta}")));
    }
    let chi: Vec<QdResult<(usize, f64)>> = (1..=n)
        .into_par_iter()
        .map(|k| {
            let params = ModelParams::new(variant, j, k)?;
            let last = evolve(&params, engine, n - k, seed, |_| {})?;
            Ok((k, conditional_entropy(&last)))
        })
        .collect();
    let chi = chi.into_iter().collect::<QdResult<Vec<_>>>()?;

    let thr = (1.0 - delta) * LN_2;
    let mut k_star = None;
    for w in chi.windows(2) {
        let ((k0, c0), (_, c1)) = (w[0], w[1]);
        if c0 >= thr && c1 < thr {
            k_star = Some(k0 as f64 + (c0 - thr) / (c0 - c1));
        }
    }
    Ok(RedundancyScan {
        n,
        delta,
        chi,
        k_star,
        redundancy: k_star.map(|k| k.exp2()),
    })
}

/// Slope of log2 R against n over scans with a defined crossing.
pub fn redundancy_exponent(scans: &[RedundancyScan]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = scans
        .iter()
        .filter_map(|s| s.k_star.map(|k| (s.n as f64, k)))
        .unzip();
    if x.len() < 2 {
        None
    } else {
        Some(linear_fit(&x, &y).0)
    }
}

/// One curve of the scaling plot: points (x, y) sorted by x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseCurve {
    pub t: usize,
    pub points: Vec<(f64, f64)>,
}

/// Build the curve `((J − J_d) t, (1 − <r²>) t)` from `(J, purity)` data.
pub fn collapse_curve(t: usize, data: &[(f64, f64)], jd: f64) -> CollapseCurve {
    let tf = t as f64;
    let mut points: Vec<(f64, f64)> = data.iter().map(|&(j, r2)| ((j - jd) * tf, (1.0 - r2) * tf)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    CollapseCurve { t, points }
}

fn interp(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let i = points.partition_point(|p| p.0 < x);
    if i == 0 {
        return (points.first()?.0 == x).then(|| points[0].1);
    }
    if i == points.len() {
        return None;
    }
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// Largest vertical spread between curves over `[x_lo, x_hi]`, relative to
/// the range of all curve values there.
pub fn collapse_spread(curves: &[CollapseCurve], x_lo: f64, x_hi: f64, samples: usize) -> Option<f64> {
    let mut worst: f64 = 0.0;
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..samples {
        let x = x_lo + (x_hi - x_lo) * i as f64 / (samples - 1).max(1) as f64;
        let ys: Vec<f64> = curves.iter().map(|c| interp(&c.points, x)).collect::<Option<_>>()?;
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(hi - lo);
        ymin = ymin.min(lo);
        ymax = ymax.max(hi);
    }
    (ymax > ymin).then(|| worst / (ymax - ymin))
}
