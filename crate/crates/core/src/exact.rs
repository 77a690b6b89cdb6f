//! Brute-force evolution of the full delta-peak distribution.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::bloch::{
    branch_map_unchecked, branch_weight, initial_ensemble, rotate_cs, BlochPoint, ModelParams,
    Variant, DROPPED_MASS_CAP, PHI_MIN,
};
use crate::ensemble::{Peak, WeightedEnsemble};
use crate::error::{QdError, QdResult};

pub const DEFAULT_PEAK_CAP: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactConfig {
    /// Largest number of pairs a single step may form.
    pub peak_cap: usize,
    /// Merge radius applied after each step; `None` keeps every peak.
    pub merge_eps: Option<f64>,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig {
            peak_cap: DEFAULT_PEAK_CAP,
            merge_eps: None,
        }
    }
}

/// Rotated copies entering the pairing, with their weights.
fn rotated_inputs(ens: &WeightedEnsemble, params: &ModelParams) -> QdResult<Vec<Peak>> {
    let (c, s) = (params.c(), params.s());
    match params.variant() {
        Variant::Deterministic => Ok(ens
            .peaks
            .iter()
            .map(|p| Peak::new(p.w, rotate_cs(p.point, c, s)))
            .collect()),
        Variant::Random => Ok(ens
            .peaks
            .iter()
            .flat_map(|p| {
                [
                    Peak::new(0.5 * p.w, rotate_cs(p.point, c, s)),
                    Peak::new(0.5 * p.w, rotate_cs(p.point, c, -s)),
                ]
            })
            .collect()),
        Variant::Clifford => Err(QdError::WrongVariant {
            expected: "deterministic or random",
            got: "clifford".into(),
        }),
    }
}

/// All ordered pairs of `left` x `right`, in row-major order.
///
/// Rows are processed in parallel and concatenated in order, and the
/// normalization is a sequential sum, so the output does not depend on the
/// thread count.
fn pair_all(left: &[Peak], right: &[Peak], t: usize, dropped_before: f64) -> QdResult<WeightedEnsemble> {
    let rows: Vec<(Vec<Peak>, f64)> = left
        .par_iter()
        .map(|l| {
            let mut out = Vec::with_capacity(right.len());
            let mut lost = 0.0;
            for r in right {
                let phi = branch_weight(l.point, r.point);
                let w = l.w * r.w * phi;
                if phi < PHI_MIN {
                    lost += w;
                    continue;
                }
                out.push(Peak::new(w, branch_map_unchecked(l.point, r.point, phi)));
            }
            (out, lost)
        })
        .collect();

    let mut peaks = Vec::with_capacity(rows.iter().map(|r| r.0.len()).sum());
    let mut lost = 0.0;
    for (row, l) in rows {
        peaks.extend(row);
        lost += l;
    }
    let total: f64 = peaks.iter().map(|p| p.w).sum::<f64>() + lost;
    if lost > DROPPED_MASS_CAP * total {
        return Err(QdError::DroppedMass {
            dropped: lost / total,
            cap: DROPPED_MASS_CAP,
        });
    }
    let mut out = WeightedEnsemble::new(t, peaks);
    out.normalize()?;
    out.dropped = dropped_before + lost / total;
    Ok(out)
}

/// One exact generation with the default configuration.
pub fn step_exact(ens: &WeightedEnsemble, params: &ModelParams) -> QdResult<WeightedEnsemble> {
    step_exact_with(ens, params, &ExactConfig::default())
}

pub fn step_exact_with(
    ens: &WeightedEnsemble,
    params: &ModelParams,
    cfg: &ExactConfig,
) -> QdResult<WeightedEnsemble> {
    let rot = rotated_inputs(ens, params)?;
    let n = rot.len().saturating_mul(rot.len());
    if n > cfg.peak_cap {
        return Err(QdError::PeakCap {
            requested: n,
            cap: cfg.peak_cap,
        });
    }
    let out = pair_all(&rot, &rot, ens.t + 1, ens.dropped)?;
    Ok(match cfg.merge_eps {
        Some(eps) => merge_duplicates(&out, eps),
        None => out,
    })
}

/// Exact ensembles for generations `0..=t` from the model's initial condition.
pub fn evolve_exact(params: &ModelParams, t: usize, cfg: &ExactConfig) -> QdResult<Vec<WeightedEnsemble>> {
    let mut out = vec![initial_ensemble(params)];
    for _ in 0..t {
        let next = step_exact_with(out.last().unwrap(), params, cfg)?;
        out.push(next);
    }
    Ok(out)
}

/// Merge peaks closer than `eps`, summing weights and averaging positions.
///
/// With `eps = 0` only bitwise-identical positions are merged. Clusters keep
/// the order of their first member.
pub fn merge_duplicates(ens: &WeightedEnsemble, eps: f64) -> WeightedEnsemble {
    // (sum w, sum w u, sum w v, first point)
    let mut acc: Vec<(f64, f64, f64, BlochPoint)> = Vec::new();

    if eps <= 0.0 {
        let mut index: HashMap<(u64, u64), usize> = HashMap::with_capacity(ens.len());
        for p in &ens.peaks {
            let key = ((p.point.u + 0.0).to_bits(), (p.point.v + 0.0).to_bits());
            let i = *index.entry(key).or_insert_with(|| {
                acc.push((0.0, 0.0, 0.0, p.point));
                acc.len() - 1
            });
            let a = &mut acc[i];
            a.0 += p.w;
            a.1 += p.w * p.point.u;
            a.2 += p.w * p.point.v;
        }
    } else {
        let cell = |x: f64| (x / eps).floor() as i64;
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for p in &ens.peaks {
            let (cu, cv) = (cell(p.point.u), cell(p.point.v));
            let mut found = None;
            'search: for du in -1..=1 {
                for dv in -1..=1 {
                    if let Some(list) = grid.get(&(cu + du, cv + dv)) {
                        for &i in list {
                            let q = acc[i].3;
                            if (q.u - p.point.u).hypot(q.v - p.point.v) <= eps {
                                found = Some(i);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let i = match found {
                Some(i) => i,
                None => {
                    acc.push((0.0, 0.0, 0.0, p.point));
                    grid.entry((cu, cv)).or_default().push(acc.len() - 1);
                    acc.len() - 1
                }
            };
            let a = &mut acc[i];
            a.0 += p.w;
            a.1 += p.w * p.point.u;
            a.2 += p.w * p.point.v;
        }
    }

    let peaks = acc
        .into_iter()
        .map(|(w, wu, wv, first)| {
            let point = if w > 0.0 && eps > 0.0 {
                BlochPoint { u: wu / w, v: wv / w }
            } else {
                first
            };
            Peak::new(w, point)
        })
        .collect();
    WeightedEnsemble {
        t: ens.t,
        peaks,
        dropped: ens.dropped,
    }
}

/// Number of rotation signs in a depth-`n` tree (two per internal vertex
/// above the leaves' parents).
pub fn sign_count(n: usize) -> usize {
    (1usize << n) - 2
}

/// Exact ensemble of one fixed realization of the rotation signs.
///
/// `signs` lists the rotation sign of every edge of the depth `t + k` tree in
/// preorder (left edge, right edge, then left subtree, then right subtree);
/// `true` rotates by `+θ`. Signs inside the depth-`k` subtrees do not affect
/// the measured fraction and are skipped.
pub fn realization_ensemble(params: &ModelParams, t: usize, signs: &[bool]) -> QdResult<WeightedEnsemble> {
    let n = t + params.k();
    if signs.len() != sign_count(n) {
        return Err(QdError::InvalidParam(format!(
            "expected {} signs for depth {n}, got {}",
            sign_count(n),
            signs.len()
        )));
    }
    let mut pos = 0;
    let mut out = realization_rec(params, t, signs, &mut pos)?;
    out.t = t;
    Ok(out)
}

fn realization_rec(params: &ModelParams, t: usize, signs: &[bool], pos: &mut usize) -> QdResult<WeightedEnsemble> {
    if t == 0 {
        *pos += sign_count(params.k());
        return Ok(initial_ensemble(params));
    }
    let (sl, sr) = (signs[*pos], signs[*pos + 1]);
    *pos += 2;
    let left = realization_rec(params, t - 1, signs, pos)?;
    let right = realization_rec(params, t - 1, signs, pos)?;
    let (c, s) = (params.c(), params.s());
    let rot = |e: &WeightedEnsemble, plus: bool| -> Vec<Peak> {
        let s = if plus { s } else { -s };
        e.peaks.iter().map(|p| Peak::new(p.w, rotate_cs(p.point, c, s))).collect()
    };
    pair_all(&rot(&left, sl), &rot(&right, sr), t, 0.0)
}
