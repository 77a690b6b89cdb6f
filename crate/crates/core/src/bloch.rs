//! Model parameters and the elementary recursion kernel.
//!
//! A posterior operator is written as `1 + u σz + v σx`, so a point of the
//! Bloch disk carries everything the recursions need.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{Peak, WeightedEnsemble};
use crate::error::{QdError, QdResult};

/// Slack allowed beyond the unit disk before a point is rejected.
pub const DISK_SLACK: f64 = 1e-12;

/// Branches with weight below this are treated as forbidden outcomes.
pub const PHI_MIN: f64 = 1e-14;

/// Largest dropped mass tolerated in a single step.
pub const DROPPED_MASS_CAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Deterministic,
    Random,
    Clifford,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Deterministic => "deterministic",
            Variant::Random => "random",
            Variant::Clifford => "clifford",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = QdError;

    fn from_str(s: &str) -> QdResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deterministic" | "det" => Ok(Variant::Deterministic),
            "random" | "rand" => Ok(Variant::Random),
            "clifford" => Ok(Variant::Clifford),
            other => Err(QdError::InvalidParam(format!("unknown variant '{other}'"))),
        }
    }
}

/// Scrambling parameter, variant and initial depth, with the derived angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    j: f64,
    variant: Variant,
    k: usize,
    theta: f64,
    c: f64,
    s: f64,
}

impl ModelParams {
    pub fn new(variant: Variant, j: f64, k: usize) -> QdResult<Self> {
        if !(j > 0.0 && j < 1.0) {
            return Err(QdError::InvalidParam(format!("J must lie in (0,1), got {j}")));
        }
        if k < 1 {
            return Err(QdError::InvalidParam("k must be at least 1".into()));
        }
        let theta = j * FRAC_PI_2;
        Ok(ModelParams {
            j,
            variant,
            k,
            theta,
            c: theta.cos(),
            s: theta.sin(),
        })
    }

    pub fn j(&self) -> f64 {
        self.j
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// cos θ
    pub fn c(&self) -> f64 {
        self.c
    }

    /// sin θ
    pub fn s(&self) -> f64 {
        self.s
    }

    /// k = 1 starts from perfect broadcasting.
    pub fn is_perfect_qd(&self) -> bool {
        self.k == 1
    }

    pub fn with_k(&self, k: usize) -> QdResult<Self> {
        ModelParams::new(self.variant, self.j, k)
    }

    pub fn with_j(&self, j: f64) -> QdResult<Self> {
        ModelParams::new(self.variant, j, self.k)
    }

    /// Initial Bloch amplitude c^(k-1).
    pub fn initial_amplitude(&self) -> f64 {
        self.c.powi(self.k as i32 - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochPoint {
    pub u: f64,
    pub v: f64,
}

impl BlochPoint {
    pub const ORIGIN: BlochPoint = BlochPoint { u: 0.0, v: 0.0 };

    /// Checked constructor; rejects points outside the disk.
    pub fn new(u: f64, v: f64) -> QdResult<Self> {
        if !(u.is_finite() && v.is_finite()) || u * u + v * v > 1.0 + DISK_SLACK {
            return Err(QdError::OutsideDisk { u, v });
        }
        Ok(BlochPoint { u, v })
    }

    pub fn r2(&self) -> f64 {
        self.u * self.u + self.v * self.v
    }
}

/// Rotation by `theta` in the (u, v) plane.
pub fn rotate(p: BlochPoint, theta: f64) -> BlochPoint {
    rotate_cs(p, theta.cos(), theta.sin())
}

#[inline]
pub fn rotate_cs(p: BlochPoint, c: f64, s: f64) -> BlochPoint {
    BlochPoint {
        u: p.u * c - p.v * s,
        v: p.u * s + p.v * c,
    }
}

/// Branch weight `1 + u_l u_r` for already rotated inputs.
#[inline]
pub fn branch_weight(left: BlochPoint, right: BlochPoint) -> f64 {
    1.0 + left.u * right.u
}

/// Posterior after branching, for already rotated inputs.
pub fn branch_map(left: BlochPoint, right: BlochPoint) -> QdResult<BlochPoint> {
    let phi = branch_weight(left, right);
    if phi < PHI_MIN {
        return Err(QdError::ForbiddenBranch(phi));
    }
    Ok(branch_map_unchecked(left, right, phi))
}

#[inline]
pub(crate) fn branch_map_unchecked(left: BlochPoint, right: BlochPoint, phi: f64) -> BlochPoint {
    BlochPoint {
        u: (left.u + right.u) / phi,
        v: left.v * right.v / phi,
    }
}

/// Two half-weight peaks at (±c^(k-1), 0).
pub fn initial_ensemble(params: &ModelParams) -> WeightedEnsemble {
    let a = params.initial_amplitude();
    WeightedEnsemble::new(
        0,
        vec![
            Peak::new(0.5, BlochPoint { u: a, v: 0.0 }),
            Peak::new(0.5, BlochPoint { u: -a, v: 0.0 }),
        ],
    )
}
