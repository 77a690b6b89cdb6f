//! Monte Carlo engines: compressed resampling (deterministic model) and the
//! biased symmetrized sampler (random model).

use std::str::FromStr;

use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{branch_map_unchecked, branch_weight, rotate_cs, BlochPoint, ModelParams, Variant, PHI_MIN};
use crate::ensemble::{Peak, WeightedEnsemble};
use crate::error::{QdError, QdResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    /// One uniform offset, evenly spaced pointers. Inputs are visited in a
    /// random order so neighbouring peaks are not selected in lockstep.
    #[default]
    Systematic,
    /// One uniform draw inside each of `n` equal strata.
    Stratified,
    /// Independent draws.
    Multinomial,
}

impl FromStr for Resampling {
    type Err = QdError;

    fn from_str(s: &str) -> QdResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "systematic" => Ok(Resampling::Systematic),
            "stratified" => Ok(Resampling::Stratified),
            "multinomial" => Ok(Resampling::Multinomial),
            other => Err(QdError::InvalidParam(format!("unknown resampling scheme '{other}'"))),
        }
    }
}

/// Generator for stream `(t, round)` under a master seed.
pub fn stream_rng(seed: u64, t: usize, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((t as u64) << 32) ^ round as u64);
    rng
}

/// Draw `n` indices with probability proportional to `weights`.
pub fn resample_indices<R: Rng + ?Sized>(
    weights: &[f64],
    n: usize,
    scheme: Resampling,
    rng: &mut R,
) -> QdResult<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || !(total > 0.0) || !total.is_finite() {
        return Err(QdError::Degenerate(format!("cannot resample, total weight {total}")));
    }
    if scheme == Resampling::Multinomial {
        let dist = WeightedIndex::new(weights).map_err(|e| QdError::Degenerate(e.to_string()))?;
        return Ok((0..n).map(|_| dist.sample(rng)).collect());
    }

    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.shuffle(rng);
    let step = total / n as f64;
    let offset = rng.gen::<f64>();
    let unit = Uniform::new(0.0, 1.0);

    let mut out = Vec::with_capacity(n);
    let mut pos = 0;
    let mut cum = weights[order[0]];
    for j in 0..n {
        let frac = match scheme {
            Resampling::Systematic => offset,
            _ => unit.sample(rng),
        };
        let target = (j as f64 + frac) * step;
        while cum <= target && pos + 1 < order.len() {
            pos += 1;
            cum += weights[order[pos]];
        }
        let mut pick = pos;
        while weights[order[pick]] <= 0.0 && pick > 0 {
            pick -= 1;
        }
        out.push(order[pick]);
    }
    Ok(out)
}

/// `n_out` equal-weight peaks drawn from `ens` proportionally to weight.
pub fn compress<R: Rng + ?Sized>(ens: &WeightedEnsemble, n_out: usize, rng: &mut R) -> QdResult<WeightedEnsemble> {
    compress_with(ens, n_out, Resampling::Systematic, rng)
}

pub fn compress_with<R: Rng + ?Sized>(
    ens: &WeightedEnsemble,
    n_out: usize,
    scheme: Resampling,
    rng: &mut R,
) -> QdResult<WeightedEnsemble> {
    if n_out == 0 {
        return Err(QdError::InvalidParam("compress needs n_out >= 1".into()));
    }
    let weights: Vec<f64> = ens.peaks.iter().map(|p| p.w).collect();
    let idx = resample_indices(&weights, n_out, scheme, rng)?;
    let w = 1.0 / n_out as f64;
    let mut out = WeightedEnsemble::new(ens.t, idx.into_iter().map(|i| Peak::new(w, ens.peaks[i].point)).collect());
    out.dropped = ens.dropped;
    Ok(out)
}

fn tilted_mean(ens: &WeightedEnsemble, base: &[f64], a: f64, b: f64) -> (f64, f64) {
    let shift = ens
        .peaks
        .iter()
        .map(|p| a * p.point.u + b * p.point.v)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut mu, mut mv) = (0.0, 0.0, 0.0);
    for (p, &w0) in ens.peaks.iter().zip(base) {
        let w = w0 * (a * p.point.u + b * p.point.v - shift).exp();
        z += w;
        mu += w * p.point.u;
        mv += w * p.point.v;
    }
    (mu / z, mv / z)
}

/// Reweight by `exp(a u + b v)` so that the weighted means of u and v vanish.
///
/// The tilt minimizes the log-partition function, whose Hessian is the
/// tilted covariance, so Newton's method converges quadratically. Returns
/// the applied coefficients.
pub fn pin_mean(ens: &mut WeightedEnsemble, tol: f64) -> QdResult<(f64, f64)> {
    let base: Vec<f64> = ens.peaks.iter().map(|p| p.w).collect();
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let shift = ens
            .peaks
            .iter()
            .map(|p| a * p.point.u + b * p.point.v)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut mu, mut mv, mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, &w0) in ens.peaks.iter().zip(&base) {
            let (u, v) = (p.point.u, p.point.v);
            let w = w0 * (a * u + b * v - shift).exp();
            z += w;
            mu += w * u;
            mv += w * v;
            suu += w * u * u;
            suv += w * u * v;
            svv += w * v * v;
        }
        let (mu, mv) = (mu / z, mv / z);
        let (cuu, cuv, cvv) = (suu / z - mu * mu, suv / z - mu * mv, svv / z - mv * mv);
        if mu.abs() <= tol && mv.abs() <= tol {
            for (p, &w0) in ens.peaks.iter_mut().zip(&base) {
                p.w = w0 * (a * p.point.u + b * p.point.v - shift).exp() / z;
            }
            return Ok((a, b));
        }
        let det = cuu * cvv - cuv * cuv;
        let (da, db) = if det > 1e-14 * (cuu * cvv).max(1e-300) {
            ((cvv * mu - cuv * mv) / det, (cuu * mv - cuv * mu) / det)
        } else {
            // One direction carries no spread; solve the other alone.
            let da = if cuu > 1e-300 { mu / cuu } else { 0.0 };
            let db = if cvv > 1e-300 { mv / cvv } else { 0.0 };
            if da == 0.0 && db == 0.0 {
                break;
            }
            (da, db)
        };
        // Backtrack on the residual mean so the step cannot overshoot.
        let r0 = mu.hypot(mv);
        let mut step = 1.0;
        loop {
            let (na, nb) = (a - step * da, b - step * db);
            let (nu, nv) = tilted_mean(ens, &base, na, nb);
            if nu.hypot(nv) < r0 || step < 1e-10 {
                a = na;
                b = nb;
                break;
            }
            step *= 0.5;
        }
    }
    Err(QdError::NotConverged("mean pinning tilt did not converge".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressedConfig {
    pub scheme: Resampling,
    /// Apply the exponential tilt that pins the first moments after each step.
    pub pin_mean: bool,
}

impl Default for CompressedConfig {
    fn default() -> Self {
        CompressedConfig {
            scheme: Resampling::Systematic,
            pin_mean: true,
        }
    }
}

/// One generation of the compressed-resampling engine with `n^2` output peaks.
///
/// Each of the `n` rounds draws `n` peaks from the rotated input, forms all
/// `n^2` ordered pairs weighted by the branch weight, and draws `n` of them.
/// Rounds use independent streams and run in parallel.
pub fn step_compressed(
    ens: &WeightedEnsemble,
    n: usize,
    params: &ModelParams,
    seed: u64,
    cfg: &CompressedConfig,
) -> QdResult<WeightedEnsemble> {
    if params.variant() != Variant::Deterministic {
        return Err(QdError::WrongVariant {
            expected: "deterministic",
            got: params.variant().to_string(),
        });
    }
    if n < 2 {
        return Err(QdError::InvalidParam("compressed engine needs N >= 2".into()));
    }
    let (c, s) = (params.c(), params.s());
    let rotated = WeightedEnsemble::new(
        ens.t,
        ens.peaks.iter().map(|p| Peak::new(p.w, rotate_cs(p.point, c, s))).collect(),
    );

    let rounds: Vec<QdResult<Vec<BlochPoint>>> = (0..n)
        .into_par_iter()
        .map(|round| {
            let mut rng = stream_rng(seed, ens.t, round);
            let drawn = compress_with(&rotated, n, cfg.scheme, &mut rng)?;
            let mut pairs = Vec::with_capacity(n * n);
            for l in &drawn.peaks {
                for r in &drawn.peaks {
                    let phi = branch_weight(l.point, r.point);
                    if phi < PHI_MIN {
                        pairs.push(Peak::new(0.0, BlochPoint::ORIGIN));
                    } else {
                        pairs.push(Peak::new(phi, branch_map_unchecked(l.point, r.point, phi)));
                    }
                }
            }
            let pairs = WeightedEnsemble::new(ens.t, pairs);
            Ok(compress_with(&pairs, n, cfg.scheme, &mut rng)?
                .peaks
                .into_iter()
                .map(|p| p.point)
                .collect())
        })
        .collect();

    let mut points = Vec::with_capacity(n * n);
    for r in rounds {
        points.extend(r?);
    }
    let mut out = WeightedEnsemble::uniform(ens.t + 1, points);
    out.dropped = ens.dropped;
    if cfg.pin_mean {
        pin_mean(&mut out, 1e-14)?;
    }
    Ok(out)
}

/// One generation of the biased sampler for the random model, `m` output peaks.
///
/// Left and right partners are drawn independently with bias `w (1 + u')`
/// from the ±θ rotated copies. Every resulting posterior is emitted with its
/// three mirror images, so the output is exactly symmetric under
/// `u -> -u` and `v -> -v`.
pub fn step_biased(
    ens: &WeightedEnsemble,
    m: usize,
    params: &ModelParams,
    seed: u64,
    scheme: Resampling,
) -> QdResult<WeightedEnsemble> {
    if params.variant() != Variant::Random {
        return Err(QdError::WrongVariant {
            expected: "random",
            got: params.variant().to_string(),
        });
    }
    if m == 0 || m % 4 != 0 {
        return Err(QdError::InvalidParam(format!("biased sampler needs M divisible by 4, got {m}")));
    }
    let (c, s) = (params.c(), params.s());
    let mut rotated = Vec::with_capacity(2 * ens.len());
    for p in &ens.peaks {
        rotated.push(rotate_cs(p.point, c, s));
        rotated.push(rotate_cs(p.point, c, -s));
    }
    let bias: Vec<f64> = ens
        .peaks
        .iter()
        .flat_map(|p| [p.w, p.w])
        .zip(&rotated)
        .map(|(w, q)| w * (1.0 + q.u).max(0.0))
        .collect();
    if !bias.iter().any(|&b| b > 0.0) {
        return Err(QdError::Degenerate("all bias weights vanish".into()));
    }

    let pairs = m / 4;
    let mut rng = stream_rng(seed, ens.t, 0);
    let left = resample_indices(&bias, pairs, scheme, &mut rng)?;
    let mut right = resample_indices(&bias, pairs, scheme, &mut rng)?;
    right.shuffle(&mut rng);

    let mut points = Vec::with_capacity(m);
    for (&i, &j) in left.iter().zip(&right) {
        let (l, r) = (rotated[i], rotated[j]);
        let phi = branch_weight(l, r);
        // Both partners were drawn with bias 1 + u' > 0, so phi > 0 here.
        let q = branch_map_unchecked(l, r, phi.max(PHI_MIN));
        points.push(BlochPoint { u: q.u, v: q.v });
        points.push(BlochPoint { u: -q.u, v: q.v });
        points.push(BlochPoint { u: q.u, v: -q.v });
        points.push(BlochPoint { u: -q.u, v: -q.v });
    }
    let mut out = WeightedEnsemble::uniform(ens.t + 1, points);
    out.dropped = ens.dropped;
    Ok(out)
}
