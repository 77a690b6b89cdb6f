//! Two-parameter recursion of the Clifford tree model.
//!
//! The posterior distribution is supported on `(0,0)`, `(±1,0)`, `(0,±1)`;
//! `pi_z` and `pi_x` are the weights of the pure z and x pairs.

use serde::{Deserialize, Serialize};

use crate::error::{QdError, QdResult};

pub const CONVERGENCE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CliffordState {
    pub pi_z: f64,
    pub pi_x: f64,
}

impl CliffordState {
    pub const ENCODING: CliffordState = CliffordState { pi_z: 0.0, pi_x: 0.0 };

    pub fn new(pi_z: f64, pi_x: f64) -> QdResult<Self> {
        let s = CliffordState { pi_z, pi_x };
        if s.is_valid(0.0) {
            Ok(s)
        } else {
            Err(QdError::InvalidParam(format!("({pi_z}, {pi_x}) is outside the simplex")))
        }
    }

    pub fn is_valid(&self, slack: f64) -> bool {
        self.pi_z >= -slack && self.pi_x >= -slack && self.pi_z + self.pi_x <= 1.0 + slack
    }

    /// Average purity `pi_z + pi_x`.
    pub fn purity(&self) -> f64 {
        self.pi_z + self.pi_x
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &CliffordState) -> f64 {
        (self.pi_z - other.pi_z).abs().max((self.pi_x - other.pi_x).abs())
    }
}

pub fn clifford_step(s: CliffordState, j: f64) -> CliffordState {
    let a = s.pi_z * (1.0 - j) + s.pi_x * j;
    let b = s.pi_x * (1.0 - j) + s.pi_z * j;
    CliffordState {
        pi_z: 2.0 * a - a * a,
        pi_x: b * b,
    }
}

/// Point `(a − a²/4, a²/4)` of the fixed line at J = 1/2.
pub fn critical_line_point(a: f64) -> CliffordState {
    CliffordState {
        pi_z: a - a * a / 4.0,
        pi_x: a * a / 4.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CliffordLimit {
    /// Purity tends to one.
    Qd,
    /// Flow reaches the origin.
    Encoding,
    /// Stops on the fixed line at J = 1/2.
    Critical,
    /// Stopped without reaching one of the above.
    Unconverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CliffordFlow {
    pub j: f64,
    pub trajectory: Vec<CliffordState>,
    pub converged: bool,
    pub limit: CliffordLimit,
}

impl CliffordFlow {
    pub fn last(&self) -> CliffordState {
        *self.trajectory.last().unwrap()
    }
}

/// Iterate until the sup-norm step falls below `CONVERGENCE_TOL` or `t_max`.
pub fn clifford_flow(s0: CliffordState, j: f64, t_max: usize) -> QdResult<CliffordFlow> {
    if !s0.is_valid(0.0) {
        return Err(QdError::InvalidParam("initial state outside the simplex".into()));
    }
    if !(0.0..=1.0).contains(&j) {
        return Err(QdError::InvalidParam(format!("J must lie in [0,1], got {j}")));
    }
    let mut trajectory = vec![s0];
    let mut converged = false;
    let mut s = s0;
    for _ in 0..t_max {
        let next = clifford_step(s, j);
        trajectory.push(next);
        let d = next.distance(&s);
        s = next;
        if d < CONVERGENCE_TOL {
            converged = true;
            break;
        }
    }
    let sum = s.purity();
    let limit = if (j - 0.5).abs() < 1e-12 && s.distance(&critical_line_point(sum)) < 1e-10 {
        CliffordLimit::Critical
    } else if converged && (sum - 1.0).abs() < 1e-9 {
        CliffordLimit::Qd
    } else if converged && sum < 1e-9 {
        CliffordLimit::Encoding
    } else {
        CliffordLimit::Unconverged
    };
    Ok(CliffordFlow {
        j,
        trajectory,
        converged,
        limit,
    })
}

/// Step vectors `(pi_z, pi_x, Δpi_z, Δpi_x)` on an `n x n` lattice of the simplex.
pub fn vector_field(j: f64, n: usize) -> Vec<[f64; 4]> {
    let mut out = Vec::new();
    let h = 1.0 / (n.max(2) - 1) as f64;
    for i in 0..n {
        for l in 0..n - i {
            let s = CliffordState {
                pi_z: i as f64 * h,
                pi_x: l as f64 * h,
            };
            if !s.is_valid(1e-12) {
                continue;
            }
            let d = clifford_step(s, j);
            out.push([s.pi_z, s.pi_x, d.pi_z - s.pi_z, d.pi_x - s.pi_x]);
        }
    }
    out
}
