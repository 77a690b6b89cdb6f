//! Scalar functionals of ensembles and closed-form predictions.

use std::f64::consts::{FRAC_PI_2, LN_2};

use serde::{Deserialize, Serialize};

use crate::bloch::{ModelParams, Variant};
use crate::ensemble::WeightedEnsemble;
use crate::error::{QdError, QdResult};

/// Peaks this far from the unit circle are not a converged broadcasting state.
pub const CIRCLE_TOL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub lambda_c: f64,
    pub lambda_d: f64,
    pub j: f64,
    pub t: usize,
}

/// Average posterior purity `Σ w (u² + v²)`.
pub fn purity(ens: &WeightedEnsemble) -> f64 {
    ens.average(|p| p.r2())
}

/// Entropy reduction `ln 2 − S` of a qubit with Bloch radius `r`.
///
/// Written as `((1+r) ln(1+r) + (1−r) ln(1−r)) / 2`, which avoids the
/// cancellation near `r = 0`; the `r → 1` branch uses `d ln d` with `d = 1−r`.
pub fn entropy_gain(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    let d = 1.0 - r;
    if d < 1e-8 {
        let tail = if d > 0.0 { d * d.ln() } else { 0.0 };
        0.5 * ((1.0 + r) * r.ln_1p() + tail)
    } else {
        0.5 * ((1.0 + r) * r.ln_1p() + d * (-r).ln_1p())
    }
}

/// Conditional entropy χ of the reference given the measured fraction.
pub fn conditional_entropy(ens: &WeightedEnsemble) -> f64 {
    ens.average(|p| entropy_gain(p.r2().sqrt())).clamp(0.0, LN_2)
}

/// Linear instability eigenvalue of the encoding fixed point, `2 cos²(Jπ/2)`.
pub fn encoding_eigenvalue(j: f64) -> f64 {
    2.0 * (j * FRAC_PI_2).cos().powi(2)
}

/// Stability estimate `2 <1−u²> / <1−u'²>` of the broadcasting fixed point.
///
/// The primed average uses the model's rotation; the random model averages
/// over both signs, which gives `1 − (c²u² + s²v²)`.
pub fn qd_stability_eigenvalue(ens: &WeightedEnsemble, params: &ModelParams) -> QdResult<f64> {
    let dev = ens.max_circle_deviation();
    if dev > CIRCLE_TOL {
        return Err(QdError::NotOnCircle(dev));
    }
    let (c, s) = (params.c(), params.s());
    let num = ens.average(|p| 1.0 - p.u * p.u);
    let den = match params.variant() {
        Variant::Deterministic => ens.average(|p| {
            let up = c * p.u - s * p.v;
            1.0 - up * up
        }),
        Variant::Random => ens.average(|p| 1.0 - (c * c * p.u * p.u + s * s * p.v * p.v)),
        Variant::Clifford => {
            return Err(QdError::WrongVariant {
                expected: "deterministic or random",
                got: "clifford".into(),
            })
        }
    };
    if den.abs() < 1e-12 {
        return Err(QdError::Degenerate(format!("lambda_d denominator {den:e}")));
    }
    Ok(2.0 * num / den)
}

pub fn stability_report(ens: &WeightedEnsemble, params: &ModelParams) -> QdResult<StabilityReport> {
    Ok(StabilityReport {
        lambda_c: encoding_eigenvalue(params.j()),
        lambda_d: qd_stability_eigenvalue(ens, params)?,
        j: params.j(),
        t: ens.t,
    })
}

/// Leading-order plateau purity `8ε`, with `ε = cos²(Jπ/2) − 1/2`.
pub fn near_critical_purity_prediction(j: f64) -> f64 {
    8.0 * ((j * FRAC_PI_2).cos().powi(2) - 0.5)
}

/// Redundancy `|E|^(ln λc / ln 2) (δ/|ln δ|)^(ln λc / |ln λd|)`.
pub fn redundancy_prediction(j: f64, delta: f64, env_size: f64, lambda_d: f64) -> QdResult<f64> {
    if !(lambda_d > 0.0 && lambda_d < 1.0) {
        return Err(QdError::InvalidParam(format!(
            "lambda_d = {lambda_d} is outside the broadcasting phase"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(QdError::InvalidParam(format!("delta must lie in (0,1), got {delta}")));
    }
    let lc = encoding_eigenvalue(j).ln();
    Ok(env_size.powf(lc / LN_2) * (delta / delta.ln().abs()).powf(lc / lambda_d.ln().abs()))
}

/// Mean over the generations in `[0.9 t_end, t_end]` of a `(t, value)` series.
pub fn window_average(series: &[(usize, f64)], t_end: usize) -> Option<f64> {
    let lo = 0.9 * t_end as f64;
    let vals: Vec<f64> = series
        .iter()
        .filter(|(t, _)| *t as f64 >= lo && *t <= t_end)
        .map(|(_, v)| *v)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Log-log slope of `1 − purity` over `t ∈ [t_lo, t_hi]`.
pub fn decay_slope(series: &[(usize, f64)], t_lo: usize, t_hi: usize) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(t, r2)| *t >= t_lo && *t <= t_hi && *r2 < 1.0)
        .map(|(t, r2)| ((*t as f64).ln(), (1.0 - r2).ln()))
        .unzip();
    linear_fit(&x, &y).0
}
