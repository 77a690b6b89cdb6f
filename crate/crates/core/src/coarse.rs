//! Total-spin (coarse-grained) measurement recursions of the deterministic
//! model, their τ-resolved refinements, and moment analytics.

use serde::{Deserialize, Serialize};

use crate::bloch::ModelParams;
use crate::error::{QdError, QdResult};

/// Entries with probability below this are clipped to zero.
pub const P_FLOOR: f64 = 1e-300;

/// Largest τ-resolved table materialized by default.
pub const DEFAULT_TABLE_CAP: usize = 20_000_000;

/// Non-normalized posterior of one total-spin outcome: `p`, `p u`, `p v`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pab {
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

impl Pab {
    /// `p (1 − r²)`, evaluated without forming r².
    pub fn deficit(&self) -> f64 {
        if self.p <= P_FLOOR {
            return 0.0;
        }
        ((self.p - self.a) * (self.p + self.a) - self.b * self.b) / self.p
    }

    /// `p r²`.
    pub fn weighted_r2(&self) -> f64 {
        if self.p <= P_FLOOR {
            0.0
        } else {
            (self.a * self.a + self.b * self.b) / self.p
        }
    }
}

/// Arrays `p`, `a`, `b` over the total-spin grid `M = 2i − 2^t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinResolvedTriple {
    pub t: usize,
    pub p: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl SpinResolvedTriple {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Total spin at grid index `i`.
    pub fn spin(&self, i: usize) -> i64 {
        2 * i as i64 - (1i64 << self.t)
    }

    /// Grid index of total spin `m`, if it lies on the grid.
    pub fn index(&self, m: i64) -> Option<usize> {
        let twice = m + (1i64 << self.t);
        (twice >= 0 && twice % 2 == 0 && (twice / 2) < self.len() as i64).then(|| (twice / 2) as usize)
    }

    pub fn entry(&self, i: usize) -> Pab {
        Pab {
            p: self.p[i],
            a: self.a[i],
            b: self.b[i],
        }
    }

    /// Check conservation and posterior validity to `tol`.
    pub fn check_invariants(&self, tol: f64) -> QdResult<()> {
        let sp = neumaier(self.p.iter().copied());
        let sa = neumaier(self.a.iter().copied());
        let sb = neumaier(self.b.iter().copied());
        if (sp - 1.0).abs() > tol || sa.abs() > tol || sb.abs() > tol {
            return Err(QdError::Degenerate(format!("sums p={sp}, a={sa:e}, b={sb:e}")));
        }
        for i in 0..self.len() {
            let e = self.entry(i);
            if e.p < -1e-14 || e.a * e.a + e.b * e.b > e.p * e.p * (1.0 + 1e-10) + 1e-300 {
                return Err(QdError::Degenerate(format!("invalid posterior at M={}", self.spin(i))));
            }
        }
        Ok(())
    }
}

fn neumaier<I: Iterator<Item = f64>>(it: I) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Direct convolution with compensated summation in every output cell.
fn convolve(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() + y.len() - 1;
    (0..n)
        .map(|m| {
            let lo = m.saturating_sub(y.len() - 1);
            let hi = m.min(x.len() - 1);
            neumaier((lo..=hi).map(|i| x[i] * y[m - i]))
        })
        .collect()
}

/// `x ⋆ x`, using the symmetry of the sum to halve the work.
fn self_convolve(x: &[f64]) -> Vec<f64> {
    let l = x.len();
    (0..2 * l - 1)
        .map(|m| {
            let lo = m.saturating_sub(l - 1);
            let off = (lo..).take_while(|&i| 2 * i < m).map(|i| 2.0 * x[i] * x[m - i]);
            let mid = (m % 2 == 0).then(|| x[m / 2] * x[m / 2]);
            neumaier(off.chain(mid))
        })
        .collect()
}

/// Two outcomes `M = ±1` with `a = M c^(k−1) / 2`.
pub fn coarse_initial(params: &ModelParams) -> SpinResolvedTriple {
    let a = 0.5 * params.initial_amplitude();
    SpinResolvedTriple {
        t: 0,
        p: vec![0.5, 0.5],
        a: vec![-a, a],
        b: vec![0.0, 0.0],
    }
}

/// One generation of the total-spin recursion with rotation angle `theta`.
pub fn coarse_step(tr: &SpinResolvedTriple, theta: f64) -> SpinResolvedTriple {
    let (c, s) = (theta.cos(), theta.sin());
    let ar: Vec<f64> = tr.a.iter().zip(&tr.b).map(|(a, b)| c * a - s * b).collect();
    let br: Vec<f64> = tr.a.iter().zip(&tr.b).map(|(a, b)| s * a + c * b).collect();

    let pp = self_convolve(&tr.p);
    let aa = self_convolve(&ar);
    let mut p: Vec<f64> = pp.iter().zip(&aa).map(|(x, y)| x + y).collect();
    let mut a: Vec<f64> = convolve(&tr.p, &ar).into_iter().map(|x| 2.0 * x).collect();
    let mut b = self_convolve(&br);
    for i in 0..p.len() {
        if p[i] < P_FLOOR {
            p[i] = 0.0;
            a[i] = 0.0;
            b[i] = 0.0;
        }
    }
    SpinResolvedTriple { t: tr.t + 1, p, a, b }
}

/// Triples for generations `0..=t`.
pub fn coarse_evolve(params: &ModelParams, t: usize) -> Vec<SpinResolvedTriple> {
    let mut out = vec![coarse_initial(params)];
    for _ in 0..t {
        let next = coarse_step(out.last().unwrap(), params.theta());
        out.push(next);
    }
    out
}

/// Per-outcome purity (None where `p` vanishes) and the outcome average.
pub fn coarse_purity(tr: &SpinResolvedTriple) -> (Vec<Option<f64>>, f64) {
    let per: Vec<Option<f64>> = (0..tr.len())
        .map(|i| {
            let e = tr.entry(i);
            (e.p > P_FLOOR).then(|| (e.a * e.a + e.b * e.b) / (e.p * e.p))
        })
        .collect();
    let avg = neumaier((0..tr.len()).map(|i| tr.entry(i).weighted_r2()));
    (per, avg)
}

/// `Σ p (1 − r²)`, summed entrywise to keep small deficits accurate.
pub fn coarse_deficit(tr: &SpinResolvedTriple) -> f64 {
    neumaier((0..tr.len()).map(|i| tr.entry(i).deficit()))
}

/// `(M, p_M (1 − r²_M))` at generation `t` of the k = 1 flow at angle `theta`.
pub fn small_theta_deficits(t: usize, theta: f64) -> Vec<(i64, f64)> {
    let mut tr = SpinResolvedTriple {
        t: 0,
        p: vec![0.5, 0.5],
        a: vec![-0.5, 0.5],
        b: vec![0.0, 0.0],
    };
    for _ in 0..t {
        tr = coarse_step(&tr, theta);
    }
    (0..tr.len()).map(|i| (tr.spin(i), tr.entry(i).deficit())).collect()
}

/// Table of non-normalized posteriors indexed by the total spins of the
/// `2^tau` subtrees at depth `tau` below the root.
#[derive(Clone, Debug, PartialEq)]
pub struct TauResolvedArray {
    pub tau: usize,
    pub t: usize,
    /// Grid length per subtree, `2^(t−tau) + 1`.
    pub side: usize,
    /// Row-major over the `2^tau` subtree indices, leftmost subtree slowest.
    pub entries: Vec<Pab>,
}

impl TauResolvedArray {
    pub fn from_triple(tr: &SpinResolvedTriple) -> Self {
        TauResolvedArray {
            tau: 0,
            t: tr.t,
            side: tr.len(),
            entries: (0..tr.len()).map(|i| tr.entry(i)).collect(),
        }
    }

    /// Sum entries with equal total spin, giving the τ = 0 triple.
    pub fn marginal(&self) -> SpinResolvedTriple {
        let n_sub = 1usize << self.tau;
        let len = (1usize << self.t) + 1;
        let mut acc = vec![Pab::default(); len];
        for (flat, e) in self.entries.iter().enumerate() {
            let mut rest = flat;
            let mut idx = 0;
            for _ in 0..n_sub {
                idx += rest % self.side;
                rest /= self.side;
            }
            acc[idx].p += e.p;
            acc[idx].a += e.a;
            acc[idx].b += e.b;
        }
        SpinResolvedTriple {
            t: self.t,
            p: acc.iter().map(|e| e.p).collect(),
            a: acc.iter().map(|e| e.a).collect(),
            b: acc.iter().map(|e| e.b).collect(),
        }
    }

    pub fn averaged_purity(&self) -> f64 {
        neumaier(self.entries.iter().map(Pab::weighted_r2))
    }

    pub fn deficit(&self) -> f64 {
        neumaier(self.entries.iter().map(Pab::deficit))
    }
}

#[inline]
fn branch_pab(l: Pab, r: Pab, c: f64, s: f64) -> Pab {
    let (al, bl) = (c * l.a - s * l.b, s * l.a + c * l.b);
    let (ar, br) = (c * r.a - s * r.b, s * r.a + c * r.b);
    Pab {
        p: l.p * r.p + al * ar,
        a: l.p * ar + al * r.p,
        b: bl * br,
    }
}

/// Branch two tables into one with both `t` and `tau` raised by one.
pub fn tau_refined_step(
    left: &TauResolvedArray,
    right: &TauResolvedArray,
    theta: f64,
    cap: usize,
) -> QdResult<TauResolvedArray> {
    if left.t != right.t || left.tau != right.tau || left.side != right.side {
        return Err(QdError::InvalidParam("tables must share t and tau".into()));
    }
    if left.tau >= 2 {
        return Err(QdError::TableCap {
            requested: left.tau + 1,
            cap: 2,
        });
    }
    let n = left.entries.len().saturating_mul(right.entries.len());
    if n > cap {
        return Err(QdError::TableCap { requested: n, cap });
    }
    let (c, s) = (theta.cos(), theta.sin());
    let mut entries = Vec::with_capacity(n);
    for l in &left.entries {
        for r in &right.entries {
            entries.push(branch_pab(*l, *r, c, s));
        }
    }
    Ok(TauResolvedArray {
        tau: left.tau + 1,
        t: left.t + 1,
        side: left.side,
        entries,
    })
}

/// Averaged purity and deficit of the table that `tau_refined_step` would
/// produce, without materializing it.
pub fn tau_refined_purity(left: &TauResolvedArray, right: &TauResolvedArray, theta: f64) -> (f64, f64) {
    let (c, s) = (theta.cos(), theta.sin());
    let mut r2 = Vec::with_capacity(left.entries.len());
    let mut def = Vec::with_capacity(left.entries.len());
    for l in &left.entries {
        let row: Vec<Pab> = right.entries.iter().map(|r| branch_pab(*l, *r, c, s)).collect();
        r2.push(neumaier(row.iter().map(Pab::weighted_r2)));
        def.push(neumaier(row.iter().map(Pab::deficit)));
    }
    (neumaier(r2.into_iter()), neumaier(def.into_iter()))
}

/// Averaged purity and deficit of the τ-resolved measurement at generation `t`.
pub fn tau_resolved_purity(params: &ModelParams, t: usize, tau: usize, cap: usize) -> QdResult<(f64, f64)> {
    if tau > t {
        return Err(QdError::InvalidParam(format!("tau={tau} exceeds t={t}")));
    }
    if tau > 2 {
        return Err(QdError::TableCap { requested: tau, cap: 2 });
    }
    let base = coarse_evolve(params, t - tau).pop().unwrap();
    if tau == 0 {
        return Ok((coarse_purity(&base).1, coarse_deficit(&base)));
    }
    let mut table = TauResolvedArray::from_triple(&base);
    for _ in 1..tau {
        table = tau_refined_step(&table, &table, params.theta(), cap)?;
    }
    Ok(tau_refined_purity(&table, &table, params.theta()))
}

/// Closed-form moment predictions of the total-spin distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPrediction {
    pub t: usize,
    /// `<M u>_t = c^(k−1) (2c)^t`.
    pub mu: f64,
    /// Exact solution of the second-moment recursion.
    pub m2: f64,
    /// Leading asymptotic form of `<M²>_t`.
    pub m2_asymptotic: f64,
}

/// `<M u>_t` and `<M²>_t` from the linear moment recursion, started from
/// `<M²>_0 = 1`, `<M u>_0 = c^(k−1)`.
pub fn moment_predictions(j: f64, k: usize, t: usize) -> MomentPrediction {
    let c = (j * std::f64::consts::FRAC_PI_2).cos();
    let q = 2.0 * c * c;
    let c2k = c.powi(2 * k as i32);
    let two_t = 2f64.powi(t as i32);
    let growth = if (q - 1.0).abs() < 1e-12 {
        t as f64
    } else {
        (q.powi(t as i32) - 1.0) / (q - 1.0)
    };
    let m2 = two_t * (1.0 + c2k * growth);
    let m2_asymptotic = if (q - 1.0).abs() < 1e-12 {
        c2k * t as f64 * two_t
    } else if q < 1.0 {
        encoding_prefactor(j, k) * two_t
    } else {
        intermediate_prefactor(j, k) * (2.0 * c).powi(2 * t as i32)
    };
    MomentPrediction {
        t,
        mu: c.powi(k as i32 - 1) * (2.0 * c).powi(t as i32),
        m2,
        m2_asymptotic,
    }
}

/// Limit of `<M²>_t / 2^t` for J > 1/2: `1 + c^(2k) / (1 − 2c²)`.
pub fn encoding_prefactor(j: f64, k: usize) -> f64 {
    let c = (j * std::f64::consts::FRAC_PI_2).cos();
    1.0 + c.powi(2 * k as i32) / (1.0 - 2.0 * c * c)
}

/// Limit of `<M²>_t / (2c)^(2t)` for J < 1/2: `c^(2k) / (2c² − 1)`.
pub fn intermediate_prefactor(j: f64, k: usize) -> f64 {
    let c = (j * std::f64::consts::FRAC_PI_2).cos();
    c.powi(2 * k as i32) / (2.0 * c * c - 1.0)
}

/// Closed-form fixed-point moments of the rescaled spin for 0 < J < 1/2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointMoments {
    /// `<m³>`
    pub skewness: f64,
    /// `3 − <m⁴>`
    pub excess_kurtosis_negative: f64,
    /// `<m u>`
    pub covariance_mu: f64,
}

fn kurtosis_poly(c: f64) -> f64 {
    let coeffs = [-2.0, -1.0, 2.0, 7.0, 4.0, -11.0, -6.0, -1.0, 14.0, -8.0, 16.0];
    coeffs.iter().rev().fold(0.0, |acc, &x| acc * c + x)
}

pub fn fixed_point_moments(j: f64) -> FixedPointMoments {
    let th = j * std::f64::consts::FRAC_PI_2;
    let c = th.cos();
    FixedPointMoments {
        skewness: 3.0 * (2.0 * th).cos().powf(1.5) * th.tan().powi(3)
            / ((2.0 * c - 1.0) * (4.0 * c.powi(3) - 1.0)),
        excess_kurtosis_negative: fixed_point_kurtosis_deficit(c),
        covariance_mu: (2.0 - 1.0 / (c * c)).sqrt(),
    }
}

/// `3 − <m⁴>` as a function of `c = cos θ`.
pub fn fixed_point_kurtosis_deficit(c: f64) -> f64 {
    3.0 * (2.0 * c * c - 1.0).powi(2) * kurtosis_poly(c)
        / (c.powi(7) * (2.0 * c - 1.0).powi(2) * (2.0 * c + 1.0) * (8.0 * c.powi(4) - 1.0))
}

/// Moments of the total spin measured on a triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinMoments {
    pub mean: f64,
    pub m2: f64,
    pub mu: f64,
    pub mv: f64,
    /// `<M³> / σ³`
    pub skewness: f64,
    /// `<M⁴> / σ⁴ − 3`
    pub excess_kurtosis: f64,
    /// `<M u> / σ`
    pub covariance_mu: f64,
}

pub fn spin_moments(tr: &SpinResolvedTriple) -> SpinMoments {
    let m = |i: usize| tr.spin(i) as f64;
    let n = tr.len();
    let mean = neumaier((0..n).map(|i| m(i) * tr.p[i]));
    let m2 = neumaier((0..n).map(|i| m(i).powi(2) * tr.p[i]));
    let m3 = neumaier((0..n).map(|i| m(i).powi(3) * tr.p[i]));
    let m4 = neumaier((0..n).map(|i| m(i).powi(4) * tr.p[i]));
    let mu = neumaier((0..n).map(|i| m(i) * tr.a[i]));
    let mv = neumaier((0..n).map(|i| m(i) * tr.b[i]));
    let sd = m2.sqrt();
    SpinMoments {
        mean,
        m2,
        mu,
        mv,
        skewness: m3 / sd.powi(3),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        covariance_mu: mu / sd,
    }
}

/// One row of the rescaled figure export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub spin: i64,
    /// `M / σ`
    pub m: f64,
    /// Probability density of m (`p σ / 2`, the grid step being `2/σ`).
    pub density: f64,
    pub r2: Option<f64>,
    /// `atan2(v, u)` of the posterior.
    pub angle: Option<f64>,
}

pub fn figure_rows(tr: &SpinResolvedTriple) -> Vec<FigureRow> {
    let sd = spin_moments(tr).m2.sqrt();
    let (r2, _) = coarse_purity(tr);
    (0..tr.len())
        .map(|i| FigureRow {
            spin: tr.spin(i),
            m: tr.spin(i) as f64 / sd,
            density: 0.5 * tr.p[i] * sd,
            r2: r2[i],
            angle: (tr.p[i] > P_FLOOR).then(|| tr.b[i].atan2(tr.a[i])),
        })
        .collect()
}
