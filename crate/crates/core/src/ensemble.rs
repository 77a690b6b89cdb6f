//! Weighted delta-peak representation of the posterior distribution.

use serde::{Deserialize, Serialize};

use crate::bloch::BlochPoint;
use crate::error::{QdError, QdResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub w: f64,
    pub point: BlochPoint,
}

impl Peak {
    pub fn new(w: f64, point: BlochPoint) -> Self {
        Peak { w, point }
    }

    pub fn u(&self) -> f64 {
        self.point.u
    }

    pub fn v(&self) -> f64 {
        self.point.v
    }
}

/// Finite mixture of delta peaks at generation `t`.
///
/// `dropped` accumulates the mass discarded on forbidden branches over the
/// whole run, before renormalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedEnsemble {
    pub t: usize,
    pub peaks: Vec<Peak>,
    pub dropped: f64,
}

/// First and second moments of an ensemble.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub total: f64,
    pub mean_u: f64,
    pub mean_v: f64,
    pub mean_u2: f64,
    pub mean_v2: f64,
    pub mean_r2: f64,
}

impl WeightedEnsemble {
    pub fn new(t: usize, peaks: Vec<Peak>) -> Self {
        WeightedEnsemble { t, peaks, dropped: 0.0 }
    }

    /// Single peak of unit weight.
    pub fn delta(t: usize, point: BlochPoint) -> Self {
        WeightedEnsemble::new(t, vec![Peak::new(1.0, point)])
    }

    /// Equal weights `1/len` on the given points.
    pub fn uniform(t: usize, points: Vec<BlochPoint>) -> Self {
        let w = 1.0 / points.len() as f64;
        WeightedEnsemble::new(t, points.into_iter().map(|p| Peak::new(w, p)).collect())
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.peaks.iter().map(|p| p.w).sum()
    }

    /// Rescale weights so they sum to one. Fails on an empty or massless ensemble.
    pub fn normalize(&mut self) -> QdResult<()> {
        let total = self.total_weight();
        if !(total > 0.0) || !total.is_finite() {
            return Err(QdError::Degenerate(format!("total weight {total}")));
        }
        let inv = 1.0 / total;
        for p in &mut self.peaks {
            p.w *= inv;
        }
        Ok(())
    }

    pub fn moments(&self) -> Moments {
        let mut m = Moments::default();
        for p in &self.peaks {
            let (u, v) = (p.point.u, p.point.v);
            m.total += p.w;
            m.mean_u += p.w * u;
            m.mean_v += p.w * v;
            m.mean_u2 += p.w * u * u;
            m.mean_v2 += p.w * v * v;
        }
        m.mean_r2 = m.mean_u2 + m.mean_v2;
        m
    }

    /// Weighted average of an arbitrary function of the peak position.
    pub fn average<F: Fn(BlochPoint) -> f64>(&self, f: F) -> f64 {
        self.peaks.iter().map(|p| p.w * f(p.point)).sum()
    }

    /// Largest |r² − 1| over all peaks.
    pub fn max_circle_deviation(&self) -> f64 {
        self.peaks
            .iter()
            .map(|p| (p.point.r2() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Check normalization and vanishing first moments to `tol`.
    pub fn check_invariants(&self, tol: f64) -> QdResult<()> {
        let m = self.moments();
        if (m.total - 1.0).abs() > tol {
            return Err(QdError::Degenerate(format!("total weight {}", m.total)));
        }
        if m.mean_u.abs() > tol || m.mean_v.abs() > tol {
            return Err(QdError::Degenerate(format!(
                "nonzero mean ({:e}, {:e})",
                m.mean_u, m.mean_v
            )));
        }
        if let Some(p) = self.peaks.iter().find(|p| p.w < 0.0 || !p.w.is_finite()) {
            return Err(QdError::Degenerate(format!("bad weight {}", p.w)));
        }
        Ok(())
    }
}
