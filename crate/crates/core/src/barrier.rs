//! Log-barrier constrained iLQR, the interior-point baseline.
//!
//! Every inequality `g <= 0` contributes `-(1/t) log(-g)` to the cost; an outer
//! loop grows `t` geometrically and re-solves from the previous trajectory.
//! The method needs a strictly feasible starting rollout.

use std::time::Instant;

use nalgebra::{Matrix2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSet, HeadingConvention, Obstacle};
use crate::error::{ConstraintKind, Error, Result};
use crate::ilqr::{self, IlqrSettings, IlqrStatus, Objective, StageExpansion, TerminalExpansion, Trajectory};
use crate::report::{IterationRecord, Method, Problem, SolveReport, SolveStatus};
use crate::{ControlVec, StateVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierSettings {
    /// Initial barrier sharpness `t`; the barrier weight is `1/t`.
    pub initial_t: f64,
    /// Factor applied to `t` after every outer iteration.
    pub growth: f64,
    pub outer_iters: usize,
    /// Constraints with `g >= -margin` count as leaving the barrier domain.
    pub margin: f64,
    pub ilqr: IlqrSettings,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            initial_t: 1.0,
            growth: 5.0,
            outer_iters: 5,
            margin: 1e-6,
            ilqr: IlqrSettings::default(),
        }
    }
}

impl BarrierSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_t > 0.0) || !(self.growth > 1.0) || self.outer_iters == 0 || !(self.margin >= 0.0) {
            return Err(Error::Config(format!(
                "barrier needs initial_t > 0, growth > 1, outer_iters >= 1, margin >= 0: {self:?}"
            )));
        }
        self.ilqr.validate()
    }
}

/// One inequality `g <= 0` with its gradient in `(x, u)` coordinates.
struct Inequality {
    kind: ConstraintKind,
    value: f64,
    grad_x: Vector4<f64>,
    grad_u: Vector2<f64>,
}

/// Tracking cost plus log barriers on all inequality constraints.
pub struct BarrierObjective<'a, O> {
    pub base: &'a O,
    pub constraints: &'a ConstraintSet,
    /// Barrier weight `1/t`.
    pub weight: f64,
    pub margin: f64,
    /// Final stamp `T`, where moving obstacles are evaluated for the terminal cost.
    pub horizon: usize,
}

impl<O> BarrierObjective<'_, O> {
    fn obstacle_inequality(&self, index: usize, obstacle: &Obstacle, tau: usize, x: &StateVec) -> Inequality {
        let center = obstacle.center_at(tau, self.constraints.time_step);
        let d = Vector2::new(x[0], x[1]) - center;
        let mut grad_x = Vector4::zeros();
        let heading = match self.constraints.heading_convention {
            HeadingConvention::Obstacle => obstacle.heading,
            HeadingConvention::Ego => x[2],
        };
        let shape = obstacle.shape(heading);
        let g = -2.0 * (shape.matrix * d);
        grad_x[0] = g[0];
        grad_x[1] = g[1];
        if self.constraints.heading_convention == HeadingConvention::Ego {
            // A(theta) = R D R^T, dA/dtheta = R' D R^T + R D R'^T
            let (a, b) = shape.semi_axes();
            let (s, c) = x[2].sin_cos();
            let rot = Matrix2::new(c, -s, s, c);
            let drot = Matrix2::new(-s, -c, c, -s);
            let diag = Matrix2::new(a.powi(-2), 0.0, 0.0, b.powi(-2));
            let da = drot * diag * rot.transpose() + rot * diag * drot.transpose();
            grad_x[2] = -d.dot(&(da * d));
        }
        Inequality {
            kind: ConstraintKind::Obstacle(index),
            value: shape.violation(&Vector2::new(x[0], x[1]), &center),
            grad_x,
            grad_u: Vector2::zeros(),
        }
    }

    fn inequalities(&self, tau: usize, x: &StateVec, u: Option<&ControlVec>) -> Vec<Inequality> {
        let mut out = Vec::with_capacity(4 + self.constraints.obstacles.len());
        if let Some(u) = u {
            let b = &self.constraints.bounds;
            let ux = |kind, value, sign: f64, slot: usize| {
                let mut grad_u = Vector2::zeros();
                grad_u[slot] = sign;
                Inequality {
                    kind,
                    value,
                    grad_x: Vector4::zeros(),
                    grad_u,
                }
            };
            out.push(ux(ConstraintKind::SteeringUpper, u[0] - b.max_steering, 1.0, 0));
            out.push(ux(ConstraintKind::SteeringLower, -b.max_steering - u[0], -1.0, 0));
            out.push(ux(ConstraintKind::AccelerationUpper, u[1] - b.max_acceleration, 1.0, 1));
            out.push(ux(ConstraintKind::AccelerationLower, b.max_deceleration - u[1], -1.0, 1));
        }
        for (i, obstacle) in self.constraints.obstacles.iter().enumerate() {
            out.push(self.obstacle_inequality(i, obstacle, tau, x));
        }
        out
    }

    fn barrier_value(&self, ineqs: &[Inequality]) -> f64 {
        let mut total = 0.0;
        for g in ineqs {
            if !(g.value < -self.margin) {
                return f64::INFINITY;
            }
            total -= (-g.value).ln();
        }
        self.weight * total
    }

    /// Adds `weight * (grad g / -g)` and the Gauss-Newton Hessian
    /// `weight * grad g grad g^T / g^2`.
    fn add_barrier(&self, ineqs: &[Inequality], exp: &mut StageExpansion) {
        for g in ineqs {
            let inv = 1.0 / (-g.value);
            let s = self.weight * inv;
            let h = self.weight * inv * inv;
            exp.lx += g.grad_x * s;
            exp.lu += g.grad_u * s;
            exp.lxx += g.grad_x * g.grad_x.transpose() * h;
            exp.lux += g.grad_u * g.grad_x.transpose() * h;
            exp.luu += g.grad_u * g.grad_u.transpose() * h;
        }
    }

    /// First stamp and constraint whose value is not below `-margin`.
    pub fn first_violation(&self, traj: &Trajectory) -> Option<(usize, ConstraintKind, f64)> {
        let horizon = traj.horizon();
        (0..=horizon).find_map(|tau| {
            let u = traj.controls.get(tau);
            self.inequalities(tau, &traj.states[tau], u)
                .into_iter()
                .find(|g| !(g.value < -self.margin))
                .map(|g| (tau, g.kind, g.value))
        })
    }
}

impl<O: Objective> Objective for BarrierObjective<'_, O> {
    fn stage_cost(&self, tau: usize, x: &StateVec, u: &ControlVec) -> f64 {
        let barrier = self.barrier_value(&self.inequalities(tau, x, Some(u)));
        if barrier.is_infinite() {
            return barrier;
        }
        self.base.stage_cost(tau, x, u) + barrier
    }

    fn stage_expansion(&self, tau: usize, x: &StateVec, u: &ControlVec) -> StageExpansion {
        let mut exp = self.base.stage_expansion(tau, x, u);
        self.add_barrier(&self.inequalities(tau, x, Some(u)), &mut exp);
        exp
    }

    fn terminal_cost(&self, x: &StateVec) -> f64 {
        let horizon = self.horizon;
        let barrier = self.barrier_value(&self.inequalities(horizon, x, None));
        if barrier.is_infinite() {
            return barrier;
        }
        self.base.terminal_cost(x) + barrier
    }

    fn terminal_expansion(&self, x: &StateVec) -> TerminalExpansion {
        let mut stage = StageExpansion::zeros();
        self.add_barrier(&self.inequalities(self.horizon, x, None), &mut stage);
        let mut exp = self.base.terminal_expansion(x);
        exp += TerminalExpansion {
            lx: stage.lx,
            lxx: stage.lxx,
        };
        exp
    }
}

/// Solves a [`Problem`] with the outer-inner log-barrier scheme.
///
/// Fails with [`Error::BarrierDomainViolation`] when the zero-control rollout
/// is not strictly feasible.
pub fn barrier_solve(problem: &Problem, settings: &BarrierSettings) -> Result<SolveReport> {
    settings.validate()?;
    let start = Instant::now();
    let base = &problem.objective;
    let dynamics = &problem.vehicle;
    let mut y = Trajectory::zero_control(dynamics, &problem.x0.to_vector(), problem.horizon)?;

    let probe = BarrierObjective {
        base,
        constraints: &problem.constraints,
        weight: 1.0 / settings.initial_t,
        margin: settings.margin,
        horizon: problem.horizon,
    };
    if let Some((tau, constraint, value)) = probe.first_violation(&y) {
        return Err(Error::BarrierDomainViolation { tau, constraint, value });
    }

    let mut iterations = Vec::with_capacity(settings.outer_iters);
    let mut snapshots = Vec::with_capacity(settings.outer_iters);
    let mut t = settings.initial_t;
    let mut inner_status = IlqrStatus::MaxIters;
    for outer in 1..=settings.outer_iters {
        let objective = BarrierObjective {
            weight: 1.0 / t,
            ..probe
        };
        let sol = ilqr::solve_from(y, &objective, dynamics, &settings.ilqr)?;
        y = sol.trajectory;
        inner_status = sol.status;
        iterations.push(IterationRecord {
            iteration: outer,
            residual_inf: None,
            residual_2: None,
            cost: y.cost(base),
            ilqr_iters: sol.iterations,
            seconds: start.elapsed().as_secs_f64(),
        });
        snapshots.push((outer, y.clone()));
        t *= settings.growth;
    }

    let cost = y.cost(base);
    Ok(SolveReport {
        method: Method::Barrier,
        status: match inner_status {
            IlqrStatus::MaxIters => SolveStatus::MaxIters,
            IlqrStatus::Converged | IlqrStatus::Stalled => SolveStatus::Converged,
        },
        max_violation: problem.max_violation(&y),
        trajectory: y,
        iterations,
        snapshots,
        cost,
        seconds: start.elapsed().as_secs_f64(),
        failure: None,
    })
}
