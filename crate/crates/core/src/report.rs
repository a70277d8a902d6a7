//! Problem description shared by the solvers, and the report they return.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::costs::TrackingObjective;
use crate::error::Error;
use crate::ilqr::Trajectory;
use crate::vehicle::{Control, State, VehicleParams};

/// A single open-loop planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub x0: State,
    /// Number of control stamps `T`.
    pub horizon: usize,
    pub vehicle: VehicleParams,
    pub objective: TrackingObjective,
    pub constraints: ConstraintSet,
}

impl Problem {
    /// Largest constraint violation along `traj`, zero when feasible.
    ///
    /// Input limits are measured in their own units; keep-out regions by the
    /// ellipse value `1 - d^T A d`.
    pub fn max_violation(&self, traj: &Trajectory) -> f64 {
        let bounds = &self.constraints.bounds;
        let inputs = traj
            .controls
            .iter()
            .map(|u| bounds.violation(&Control::from_vector(u)))
            .fold(0.0, f64::max);
        let obstacles = traj
            .states
            .iter()
            .enumerate()
            .map(|(tau, x)| {
                self.constraints
                    .obstacle_violation(tau, &Vector2::new(x[0], x[1]), x[2])
            })
            .fold(0.0, f64::max);
        inputs.max(obstacles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Admm,
    Barrier,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Admm => "admm",
            Method::Barrier => "barrier",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Failed,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::Failed => "failed",
        }
    }
}

/// One outer iteration (ADMM iteration, or barrier tightening step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// `|Ay - z|` in the max norm; absent for methods without a split.
    pub residual_inf: Option<f64>,
    pub residual_2: Option<f64>,
    /// Unaugmented tracking cost of the trajectory.
    pub cost: f64,
    pub ilqr_iters: usize,
    /// Wall-clock since the start of the solve (s).
    pub seconds: f64,
}

#[derive(Debug)]
pub struct SolveReport {
    pub method: Method,
    pub status: SolveStatus,
    /// Final dynamically feasible trajectory.
    pub trajectory: Trajectory,
    pub iterations: Vec<IterationRecord>,
    /// Trajectory after each outer iteration, tagged with the 1-based iteration.
    pub snapshots: Vec<(usize, Trajectory)>,
    /// Largest constraint violation of `trajectory`.
    pub max_violation: f64,
    /// Tracking cost of `trajectory`.
    pub cost: f64,
    /// Wall-clock of the whole solve (s).
    pub seconds: f64,
    /// Set when `status` is `Failed`.
    pub failure: Option<Error>,
}

impl SolveReport {
    pub fn final_residual(&self) -> Option<f64> {
        self.iterations.last().and_then(|r| r.residual_inf)
    }
}
