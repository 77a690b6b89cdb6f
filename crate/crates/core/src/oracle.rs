//! Dense statevector reference for small trees.
//!
//! `V_n` maps the input qubit into the `2^n` leaves. It is stored as two real
//! columns of length `2^(2^n)`; leaf 0 is the most significant bit of the
//! basis index and bit value 0 is spin up (`m = +1`).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bloch::{BlochPoint, ModelParams, Variant};
use crate::coarse::SpinResolvedTriple;
use crate::ensemble::{Peak, WeightedEnsemble};
use crate::error::{QdError, QdResult};
use crate::exact::{evolve_exact, merge_duplicates, realization_ensemble, sign_count, ExactConfig};
use crate::observables::conditional_entropy;
use crate::sampler::stream_rng;

pub const MAX_DEPTH: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseIsometry {
    pub n: usize,
    /// Column 0 followed by column 1.
    pub data: Vec<f64>,
    pub variant: Variant,
    pub signs: Vec<bool>,
}

impl DenseIsometry {
    pub fn dim(&self) -> usize {
        self.data.len() / 2
    }

    pub fn col(&self, c: usize) -> &[f64] {
        let d = self.dim();
        &self.data[c * d..(c + 1) * d]
    }

    /// Largest entry of |V†V − 1|.
    pub fn isometry_error(&self) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (c0, c1) = (self.col(0), self.col(1));
        (dot(c0, c0) - 1.0).abs().max((dot(c1, c1) - 1.0).abs()).max(dot(c0, c1).abs())
    }
}

/// One-qubit gate whose Heisenberg action rotates (u, v) by `angle`, i.e.
/// `G† (1 + u σz + v σx) G = 1 + u' σz + v' σx` with `(u', v') = rotate((u, v), angle)`.
/// This is `exp(+i σy angle/2)`, stored row-major.
pub fn rotation_gate(angle: f64) -> [[f64; 2]; 2] {
    let (c, s) = ((0.5 * angle).cos(), (0.5 * angle).sin());
    [[c, s], [-s, c]]
}

/// Assemble `V_n` by the backward recursion `V_{n+1} = (V_n ⊗ V_n)(G ⊗ G) Y`.
///
/// `signs` follows the preorder layout of `exact::realization_ensemble`;
/// the deterministic variant ignores it and rotates every edge by `+θ`.
pub fn build_isometry(n: usize, params: &ModelParams, signs: &[bool]) -> QdResult<DenseIsometry> {
    if n == 0 || n > MAX_DEPTH {
        return Err(QdError::DepthCap { n, cap: MAX_DEPTH });
    }
    let signs: Vec<bool> = match params.variant() {
        Variant::Deterministic => vec![true; sign_count(n)],
        Variant::Random => {
            if signs.len() != sign_count(n) {
                return Err(QdError::InvalidParam(format!(
                    "expected {} signs, got {}",
                    sign_count(n),
                    signs.len()
                )));
            }
            signs.to_vec()
        }
        Variant::Clifford => {
            return Err(QdError::WrongVariant {
                expected: "deterministic or random",
                got: "clifford".into(),
            })
        }
    };
    let mut pos = 0;
    let data = build_rec(n, params.theta(), &signs, &mut pos);
    Ok(DenseIsometry {
        n,
        data,
        variant: params.variant(),
        signs,
    })
}

fn build_rec(n: usize, theta: f64, signs: &[bool], pos: &mut usize) -> Vec<f64> {
    if n == 1 {
        // Y: |0> -> |00>, |1> -> |11>
        return vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
    }
    let gl = rotation_gate(if signs[*pos] { theta } else { -theta });
    let gr = rotation_gate(if signs[*pos + 1] { theta } else { -theta });
    *pos += 2;
    let left = build_rec(n - 1, theta, signs, pos);
    let right = build_rec(n - 1, theta, signs, pos);
    let d = left.len() / 2;

    let mix = |v: &[f64], g: &[[f64; 2]; 2], c: usize| -> Vec<f64> {
        (0..d).map(|i| g[0][c] * v[i] + g[1][c] * v[d + i]).collect()
    };
    let mut out = Vec::with_capacity(2 * d * d);
    for c in 0..2 {
        let l = mix(&left, &gl, c);
        let r = mix(&right, &gr, c);
        for x in &l {
            out.extend(r.iter().map(|y| x * y));
        }
    }
    out
}

/// Leaves of the measured fraction: the first leaf of each depth-k subtree.
pub fn fraction_leaves(t: usize, k: usize) -> Vec<usize> {
    (0..1usize << t).map(|j| j << k).collect()
}

/// Unnormalized 2x2 blocks `(q00, q11, q01)` of `V† π V` per outcome pattern.
fn outcome_blocks(iso: &DenseIsometry, t: usize, k: usize) -> QdResult<Vec<[f64; 3]>> {
    if t + k != iso.n || k == 0 {
        return Err(QdError::BadFraction { t, k, n: iso.n });
    }
    let leaves = 1usize << iso.n;
    let f = fraction_leaves(t, k);
    let nf = f.len();
    let mut blocks = vec![[0.0; 3]; 1 << nf];
    let (c0, c1) = (iso.col(0), iso.col(1));
    for x in 0..iso.dim() {
        let mut o = 0;
        for &leaf in &f {
            o = (o << 1) | ((x >> (leaves - 1 - leaf)) & 1);
        }
        let b = &mut blocks[o];
        b[0] += c0[x] * c0[x];
        b[1] += c1[x] * c1[x];
        b[2] += c0[x] * c1[x];
    }
    Ok(blocks)
}

/// Exact ensemble of posteriors for the fraction `F_{t,k}`, one peak per
/// outcome with nonzero probability, outcomes in binary order.
pub fn enumerate_measurement(iso: &DenseIsometry, t: usize, k: usize) -> QdResult<WeightedEnsemble> {
    let blocks = outcome_blocks(iso, t, k)?;
    let peaks = blocks
        .iter()
        .filter_map(|&[q00, q11, q01]| {
            let p = 0.5 * (q00 + q11);
            (p > 0.0).then(|| {
                Peak::new(
                    p,
                    BlochPoint {
                        u: (q00 - q11) / (2.0 * p),
                        v: q01 / p,
                    },
                )
            })
        })
        .collect();
    Ok(WeightedEnsemble::new(t, peaks))
}

/// Largest entry of |Σ_m Q_m − 1| and the most negative posterior eigenvalue.
pub fn completeness_error(iso: &DenseIsometry, t: usize, k: usize) -> QdResult<(f64, f64)> {
    let blocks = outcome_blocks(iso, t, k)?;
    let (mut s00, mut s11, mut s01) = (0.0, 0.0, 0.0);
    let mut min_eig = f64::INFINITY;
    for &[q00, q11, q01] in &blocks {
        s00 += q00;
        s11 += q11;
        s01 += q01;
        let tr = q00 + q11;
        if tr > 0.0 {
            let disc = ((q00 - q11).powi(2) + 4.0 * q01 * q01).sqrt();
            min_eig = min_eig.min(0.5 * (tr - disc) / tr);
        }
    }
    Ok(((s00 - 1.0).abs().max((s11 - 1.0).abs()).max(s01.abs()), min_eig))
}

/// Total-spin triple of the fraction, summing blocks with equal `Σ m_i`.
pub fn enumerate_total_spin(iso: &DenseIsometry, t: usize, k: usize) -> QdResult<SpinResolvedTriple> {
    let blocks = outcome_blocks(iso, t, k)?;
    let len = (1usize << t) + 1;
    let mut out = SpinResolvedTriple {
        t,
        p: vec![0.0; len],
        a: vec![0.0; len],
        b: vec![0.0; len],
    };
    for (o, &[q00, q11, q01]) in blocks.iter().enumerate() {
        // bit 1 is m = -1, so the grid index is the number of up spins
        let i = (1usize << t) - o.count_ones() as usize;
        out.p[i] += 0.5 * (q00 + q11);
        out.a[i] += 0.5 * (q00 - q11);
        out.b[i] += q01;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscordReport {
    pub mutual_information: f64,
    pub chi: f64,
    pub deviation: f64,
}

fn entropy(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-15)
        .map(|&l| -l * l.ln())
        .sum()
}

/// Compare the mutual information of F and the reference in the CJ state
/// with the conditional entropy of the microscopic measurement.
pub fn verify_discord_free(iso: &DenseIsometry, t: usize, k: usize) -> QdResult<DiscordReport> {
    if t + k != iso.n || k == 0 {
        return Err(QdError::BadFraction { t, k, n: iso.n });
    }
    let leaves = 1usize << iso.n;
    let f = fraction_leaves(t, k);
    let nf = f.len();
    let ne = leaves - nf;
    let in_f: Vec<bool> = (0..leaves).map(|l| f.contains(&l)).collect();

    // A[(f, r), e] = V[x(f, e), r] / sqrt(2)
    let mut a = DMatrix::<f64>::zeros(2 << nf, 1 << ne);
    let norm = std::f64::consts::FRAC_1_SQRT_2;
    for x in 0..iso.dim() {
        let (mut fi, mut ei) = (0usize, 0usize);
        for leaf in 0..leaves {
            let bit = (x >> (leaves - 1 - leaf)) & 1;
            if in_f[leaf] {
                fi = (fi << 1) | bit;
            } else {
                ei = (ei << 1) | bit;
            }
        }
        for r in 0..2 {
            a[(2 * fi + r, ei)] = iso.col(r)[x] * norm;
        }
    }
    let rho_fr = &a * a.transpose();
    let dim_f = 1 << nf;
    let mut rho_f = DMatrix::<f64>::zeros(dim_f, dim_f);
    let mut rho_r = DMatrix::<f64>::zeros(2, 2);
    for i in 0..dim_f {
        for j in 0..dim_f {
            rho_f[(i, j)] = rho_fr[(2 * i, 2 * j)] + rho_fr[(2 * i + 1, 2 * j + 1)];
        }
        for r in 0..2 {
            for s in 0..2 {
                rho_r[(r, s)] += rho_fr[(2 * i + r, 2 * i + s)];
            }
        }
    }
    let mi = entropy(rho_f) + entropy(rho_r) - entropy(rho_fr);
    let chi = conditional_entropy(&enumerate_measurement(iso, t, k)?);
    Ok(DiscordReport {
        mutual_information: mi,
        chi,
        deviation: (mi - chi).abs(),
    })
}

/// Per-peak agreement of two ensembles after merging coincident peaks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleComparison {
    pub peaks_a: usize,
    pub peaks_b: usize,
    pub max_weight_error: f64,
    pub max_position_error: f64,
}

impl EnsembleComparison {
    pub fn max_error(&self) -> f64 {
        if self.peaks_a != self.peaks_b {
            return f64::INFINITY;
        }
        self.max_weight_error.max(self.max_position_error)
    }
}

/// Merge peaks within `merge_eps`, drop weights below `w_min`, and match
/// every peak of `a` to its nearest unmatched peak of `b`.
pub fn compare_ensembles(a: &WeightedEnsemble, b: &WeightedEnsemble, merge_eps: f64, w_min: f64) -> EnsembleComparison {
    let prep = |e: &WeightedEnsemble| -> Vec<Peak> {
        let mut v: Vec<Peak> = merge_duplicates(e, merge_eps)
            .peaks
            .into_iter()
            .filter(|p| p.w > w_min)
            .collect();
        v.sort_by(|x, y| x.point.u.total_cmp(&y.point.u));
        v
    };
    let (pa, pb) = (prep(a), prep(b));
    let mut used = vec![false; pb.len()];
    let (mut werr, mut perr) = (0.0f64, 0.0f64);
    let window = 1e-6;
    for p in &pa {
        let lo = pb.partition_point(|q| q.point.u < p.point.u - window);
        let mut best: Option<(usize, f64)> = None;
        for (i, q) in pb.iter().enumerate().skip(lo) {
            if q.point.u > p.point.u + window {
                break;
            }
            if used[i] {
                continue;
            }
            let d = (q.point.u - p.point.u).hypot(q.point.v - p.point.v);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, d)) => {
                used[i] = true;
                perr = perr.max(d);
                werr = werr.max((pb[i].w - p.w).abs());
            }
            None => {
                perr = f64::INFINITY;
                werr = werr.max(p.w);
            }
        }
    }
    EnsembleComparison {
        peaks_a: pa.len(),
        peaks_b: pb.len(),
        max_weight_error: werr,
        max_position_error: perr,
    }
}

/// One row of the certification matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub variant: Variant,
    pub j: f64,
    pub t: usize,
    pub k: usize,
    /// Number of sign assignments averaged on both sides.
    pub realizations: usize,
    pub comparison: EnsembleComparison,
    pub isometry_error: f64,
    pub completeness_error: f64,
    pub pass: bool,
}

/// Tolerance on per-peak weight and position errors.
pub const ORACLE_TOL: f64 = 1e-9;

fn average(ensembles: Vec<WeightedEnsemble>, t: usize) -> WeightedEnsemble {
    let n = ensembles.len() as f64;
    let peaks = ensembles
        .into_iter()
        .flat_map(|e| e.peaks.into_iter().map(move |p| Peak::new(p.w / n, p.point)))
        .collect();
    WeightedEnsemble::new(t, peaks)
}

/// Certify one (variant, J, t, k) configuration.
///
/// Deterministic: the oracle against `t` exact steps. Random with
/// `t + k ≤ 3`: the oracle averaged over every sign assignment against the
/// sign-averaged exact steps. Random with `t + k = 4`: both sides averaged
/// over the same `samples` seeded sign assignments.
pub fn certify_case(variant: Variant, j: f64, t: usize, k: usize, samples: usize, seed: u64) -> QdResult<OracleCase> {
    let params = ModelParams::new(variant, j, k)?;
    let n = t + k;
    let m = sign_count(n);
    let mut iso_err = 0.0f64;
    let mut comp_err = 0.0f64;
    let mut oracle_of = |signs: &[bool]| -> QdResult<WeightedEnsemble> {
        let iso = build_isometry(n, &params, signs)?;
        iso_err = iso_err.max(iso.isometry_error());
        comp_err = comp_err.max(completeness_error(&iso, t, k)?.0);
        enumerate_measurement(&iso, t, k)
    };

    let (oracle, reference, realizations) = match variant {
        Variant::Deterministic => {
            let o = oracle_of(&vec![true; m])?;
            let r = evolve_exact(&params, t, &ExactConfig::default())?.pop().unwrap();
            (o, r, 1)
        }
        Variant::Random if n <= 3 => {
            let all: Vec<Vec<bool>> = (0..1usize << m).map(|mask| (0..m).map(|i| mask >> i & 1 == 1).collect()).collect();
            let o = average(all.iter().map(|s| oracle_of(s)).collect::<QdResult<_>>()?, t);
            let r = evolve_exact(&params, t, &ExactConfig::default())?.pop().unwrap();
            (o, r, all.len())
        }
        Variant::Random => {
            let mut rng = stream_rng(seed, n, k);
            let sets: Vec<Vec<bool>> = (0..samples).map(|_| (0..m).map(|_| rng.gen::<bool>()).collect()).collect();
            let o = average(sets.iter().map(|s| oracle_of(s)).collect::<QdResult<_>>()?, t);
            let r = average(
                sets.iter().map(|s| realization_ensemble(&params, t, s)).collect::<QdResult<_>>()?,
                t,
            );
            (o, r, samples)
        }
        Variant::Clifford => {
            return Err(QdError::WrongVariant {
                expected: "deterministic or random",
                got: "clifford".into(),
            })
        }
    };
    let comparison = compare_ensembles(&oracle, &reference, 1e-11, 1e-15);
    let pass = comparison.max_error() < ORACLE_TOL && iso_err < 1e-12 && comp_err < 1e-12;
    Ok(OracleCase {
        variant,
        j,
        t,
        k,
        realizations,
        comparison,
        isometry_error: iso_err,
        completeness_error: comp_err,
        pass,
    })
}

/// Every (variant, J ∈ {0.2, 0.5, 0.8}, t + k ≤ 4) configuration.
pub fn certification_matrix(samples: usize, seed: u64) -> QdResult<Vec<OracleCase>> {
    let mut out = Vec::new();
    for variant in [Variant::Deterministic, Variant::Random] {
        for j in [0.2, 0.5, 0.8] {
            for n in 1..=MAX_DEPTH {
                for k in 1..=n {
                    out.push(certify_case(variant, j, n - k, k, samples, seed)?);
                }
            }
        }
    }
    Ok(out)
}
