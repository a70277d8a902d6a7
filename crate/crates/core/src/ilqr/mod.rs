//! Gauss-Newton iterative LQR.
//!
//! Each iteration linearizes the dynamics and quadratizes the cost around the
//! nominal trajectory, runs the Riccati-like backward recursion for affine
//! control corrections, and rolls the corrected policy through the nonlinear
//! dynamics with a backtracking line search. Dynamics curvature terms are
//! dropped, so only first derivatives of the model are needed.

use std::ops::AddAssign;

use nalgebra::{Cholesky, Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{Control, State};
use crate::{ControlVec, StateVec};

pub mod linear;

/// Discrete-time dynamics `x' = f(x, u)` with first derivatives.
pub trait Dynamics {
    fn step(&self, x: &StateVec, u: &ControlVec) -> Result<StateVec>;
    fn jacobians(&self, x: &StateVec, u: &ControlVec) -> Result<(Matrix4<f64>, Matrix4x2<f64>)>;
}

/// Additive stage-plus-terminal cost with quadratic expansions.
pub trait Objective {
    fn stage_cost(&self, tau: usize, x: &StateVec, u: &ControlVec) -> f64;
    fn stage_expansion(&self, tau: usize, x: &StateVec, u: &ControlVec) -> StageExpansion;
    fn terminal_cost(&self, x: &StateVec) -> f64;
    fn terminal_expansion(&self, x: &StateVec) -> TerminalExpansion;
}

impl<O: Objective + ?Sized> Objective for &O {
    fn stage_cost(&self, tau: usize, x: &StateVec, u: &ControlVec) -> f64 {
        (**self).stage_cost(tau, x, u)
    }
    fn stage_expansion(&self, tau: usize, x: &StateVec, u: &ControlVec) -> StageExpansion {
        (**self).stage_expansion(tau, x, u)
    }
    fn terminal_cost(&self, x: &StateVec) -> f64 {
        (**self).terminal_cost(x)
    }
    fn terminal_expansion(&self, x: &StateVec) -> TerminalExpansion {
        (**self).terminal_expansion(x)
    }
}

/// Gradient and Hessian blocks of a stage cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageExpansion {
    pub lx: Vector4<f64>,
    pub lu: Vector2<f64>,
    pub lxx: Matrix4<f64>,
    pub lux: Matrix2x4<f64>,
    pub luu: Matrix2<f64>,
}

impl StageExpansion {
    pub fn zeros() -> Self {
        Self {
            lx: Vector4::zeros(),
            lu: Vector2::zeros(),
            lxx: Matrix4::zeros(),
            lux: Matrix2x4::zeros(),
            luu: Matrix2::zeros(),
        }
    }
}

impl AddAssign for StageExpansion {
    fn add_assign(&mut self, rhs: Self) {
        self.lx += rhs.lx;
        self.lu += rhs.lu;
        self.lxx += rhs.lxx;
        self.lux += rhs.lux;
        self.luu += rhs.luu;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalExpansion {
    pub lx: Vector4<f64>,
    pub lxx: Matrix4<f64>,
}

impl TerminalExpansion {
    pub fn zeros() -> Self {
        Self {
            lx: Vector4::zeros(),
            lxx: Matrix4::zeros(),
        }
    }
}

impl AddAssign for TerminalExpansion {
    fn add_assign(&mut self, rhs: Self) {
        self.lx += rhs.lx;
        self.lxx += rhs.lxx;
    }
}

/// Paired state and control sequences: `T + 1` states and `T` controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVec>,
    pub controls: Vec<ControlVec>,
}

impl Trajectory {
    /// Simulates `controls` from `x0`.
    pub fn rollout<D: Dynamics + ?Sized>(dynamics: &D, x0: &StateVec, controls: &[ControlVec]) -> Result<Self> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(*x0);
        for u in controls {
            let next = dynamics.step(states.last().unwrap(), u)?;
            states.push(next);
        }
        Ok(Self {
            states,
            controls: controls.to_vec(),
        })
    }

    /// Rollout with every control at zero.
    pub fn zero_control<D: Dynamics + ?Sized>(dynamics: &D, x0: &StateVec, horizon: usize) -> Result<Self> {
        Self::rollout(dynamics, x0, &vec![ControlVec::zeros(); horizon])
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn state(&self, tau: usize) -> State {
        State::from_vector(&self.states[tau])
    }

    pub fn control(&self, tau: usize) -> Control {
        Control::from_vector(&self.controls[tau])
    }

    pub fn cost<O: Objective + ?Sized>(&self, objective: &O) -> f64 {
        let stages: f64 = self
            .controls
            .iter()
            .enumerate()
            .map(|(tau, u)| objective.stage_cost(tau, &self.states[tau], u))
            .sum();
        stages + objective.terminal_cost(self.states.last().unwrap())
    }

    /// Largest componentwise mismatch `|x[t+1] - f(x[t], u[t])|`.
    pub fn dynamics_defect<D: Dynamics + ?Sized>(&self, dynamics: &D) -> f64 {
        self.controls
            .iter()
            .enumerate()
            .map(|(tau, u)| match dynamics.step(&self.states[tau], u) {
                Ok(next) => (next - self.states[tau + 1]).abs().max(),
                Err(_) => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

/// Affine control corrections `du = k + K dx` for every stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub feedforward: Vec<Vector2<f64>>,
    pub feedback: Vec<Matrix2x4<f64>>,
}

impl GainSchedule {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            feedforward: vec![Vector2::zeros(); horizon],
            feedback: vec![Matrix2x4::zeros(); horizon],
        }
    }
}

/// Local quadratic model of the cost-to-go.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueExpansion {
    pub vx: Vector4<f64>,
    pub vxx: Matrix4<f64>,
    /// Predicted change of total cost from applying the full feedforward step.
    pub expected_change: f64,
}

impl ValueExpansion {
    pub fn zeros() -> Self {
        Self {
            vx: Vector4::zeros(),
            vxx: Matrix4::zeros(),
            expected_change: 0.0,
        }
    }
}

/// Quadratic model of `l + V(f(x, u))` around the nominal point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QExpansion {
    pub qx: Vector4<f64>,
    pub qu: Vector2<f64>,
    pub qxx: Matrix4<f64>,
    pub qux: Matrix2x4<f64>,
    pub quu: Matrix2<f64>,
}

pub fn q_expansion(
    stage: &StageExpansion,
    next: &ValueExpansion,
    fx: &Matrix4<f64>,
    fu: &Matrix4x2<f64>,
) -> QExpansion {
    let vxx_fx = next.vxx * fx;
    let vxx_fu = next.vxx * fu;
    QExpansion {
        qx: stage.lx + fx.transpose() * next.vx,
        qu: stage.lu + fu.transpose() * next.vx,
        qxx: stage.lxx + fx.transpose() * vxx_fx,
        qux: stage.lux + fu.transpose() * vxx_fx,
        quu: stage.luu + fu.transpose() * vxx_fu,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IlqrSettings {
    pub max_iters: usize,
    /// Stop once an accepted step changes the cost by less than this.
    pub cost_tolerance: f64,
    pub mu_init: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_growth: f64,
    pub mu_shrink: f64,
    /// Step scales tried in order by the line search.
    pub line_search: Vec<f64>,
}

impl Default for IlqrSettings {
    fn default() -> Self {
        Self {
            max_iters: 100,
            cost_tolerance: 1e-4,
            mu_init: 1e-6,
            mu_min: 1e-9,
            mu_max: 1e10,
            mu_growth: 10.0,
            mu_shrink: 0.5,
            line_search: (0..=10).map(|i| 0.5f64.powi(i)).collect(),
        }
    }
}

impl IlqrSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = self.max_iters == 0
            || !(self.cost_tolerance > 0.0)
            || !(self.mu_init >= 0.0)
            || !(self.mu_max > self.mu_init)
            || !(self.mu_growth > 1.0)
            || !(self.mu_shrink > 0.0 && self.mu_shrink <= 1.0)
            || self.line_search.is_empty()
            || self.line_search.iter().any(|a| !(*a > 0.0 && *a <= 1.0));
        if bad {
            return Err(Error::Config(format!("invalid iLQR settings: {self:?}")));
        }
        Ok(())
    }
}

/// Derivatives of dynamics and cost along a nominal trajectory.
struct Linearization {
    fx: Vec<Matrix4<f64>>,
    fu: Vec<Matrix4x2<f64>>,
    stages: Vec<StageExpansion>,
    terminal: TerminalExpansion,
}

fn linearize<D: Dynamics + ?Sized, O: Objective + ?Sized>(
    traj: &Trajectory,
    objective: &O,
    dynamics: &D,
) -> Result<Linearization> {
    let horizon = traj.horizon();
    let mut lin = Linearization {
        fx: Vec::with_capacity(horizon),
        fu: Vec::with_capacity(horizon),
        stages: Vec::with_capacity(horizon),
        terminal: objective.terminal_expansion(&traj.states[horizon]),
    };
    for tau in 0..horizon {
        let (x, u) = (&traj.states[tau], &traj.controls[tau]);
        let (fx, fu) = dynamics.jacobians(x, u)?;
        lin.fx.push(fx);
        lin.fu.push(fu);
        lin.stages.push(objective.stage_expansion(tau, x, u));
    }
    Ok(lin)
}

/// Output of one backward recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardPass {
    pub gains: GainSchedule,
    /// Cost-to-go model at stamp 0.
    pub value: ValueExpansion,
    /// Predicted cost change for step scale 1 is `linear + quadratic`; for scale
    /// `alpha` it is `alpha * linear + alpha^2 * quadratic`.
    pub linear: f64,
    pub quadratic: f64,
    /// Largest `|Q_u|` entry along the horizon; zero at a stationary point.
    pub max_qu: f64,
    /// Regularization actually used.
    pub mu: f64,
}

impl BackwardPass {
    /// Predicted decrease (positive) of the total cost for a full step.
    pub fn expected_improvement(&self) -> f64 {
        -(self.linear + self.quadratic)
    }
}

enum Recursion {
    Done(BackwardPass),
    NotPositiveDefinite,
}

fn recurse(lin: &Linearization, mu: f64) -> Recursion {
    let horizon = lin.stages.len();
    let mut gains = GainSchedule::zeros(horizon);
    let mut vx = lin.terminal.lx;
    let mut vxx = lin.terminal.lxx;
    let (mut linear, mut quadratic, mut max_qu) = (0.0, 0.0, 0.0f64);
    for tau in (0..horizon).rev() {
        let next = ValueExpansion {
            vx,
            vxx,
            expected_change: 0.0,
        };
        let q = q_expansion(&lin.stages[tau], &next, &lin.fx[tau], &lin.fu[tau]);
        max_qu = max_qu.max(q.qu.abs().max());
        let Some(chol) = Cholesky::new(q.quu + Matrix2::identity() * mu) else {
            return Recursion::NotPositiveDefinite;
        };
        let k = -chol.solve(&q.qu);
        let big_k = -chol.solve(&q.qux);
        linear += k.dot(&q.qu);
        quadratic += 0.5 * k.dot(&(q.quu * k));
        // Exact-minimizer form, still consistent when mu > 0.
        let kt_quu = big_k.transpose() * q.quu;
        vx = q.qx + kt_quu * k + big_k.transpose() * q.qu + q.qux.transpose() * k;
        vxx = q.qxx + kt_quu * big_k + big_k.transpose() * q.qux + q.qux.transpose() * big_k;
        vxx = 0.5 * (vxx + vxx.transpose());
        gains.feedforward[tau] = k;
        gains.feedback[tau] = big_k;
    }
    Recursion::Done(BackwardPass {
        gains,
        value: ValueExpansion {
            vx,
            vxx,
            expected_change: linear + quadratic,
        },
        linear,
        quadratic,
        max_qu,
        mu,
    })
}

fn regularized_recursion(lin: &Linearization, mu_start: f64, settings: &IlqrSettings) -> Result<BackwardPass> {
    let mut mu = mu_start;
    loop {
        match recurse(lin, mu) {
            Recursion::Done(bp) => return Ok(bp),
            Recursion::NotPositiveDefinite => {
                mu = (mu * settings.mu_growth).max(settings.mu_init.max(settings.mu_min));
                if mu > settings.mu_max {
                    return Err(Error::RegularizationExhausted { mu });
                }
            }
        }
    }
}

/// Computes feedforward and feedback gains along `traj`, raising the
/// regularization `mu` until every `Q_uu + mu I` is positive definite.
pub fn backward_pass<D: Dynamics + ?Sized, O: Objective + ?Sized>(
    traj: &Trajectory,
    objective: &O,
    dynamics: &D,
    mu: f64,
) -> Result<BackwardPass> {
    let lin = linearize(traj, objective, dynamics)?;
    regularized_recursion(&lin, mu, &IlqrSettings::default())
}

/// Rolls out `u = u_hat + alpha k + K (x - x_hat)` from the nominal initial state.
pub fn forward_pass<D: Dynamics + ?Sized>(
    nominal: &Trajectory,
    gains: &GainSchedule,
    alpha: f64,
    dynamics: &D,
) -> Result<Trajectory> {
    let horizon = nominal.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    let mut x = nominal.states[0];
    states.push(x);
    for tau in 0..horizon {
        let u = nominal.controls[tau]
            + gains.feedforward[tau] * alpha
            + gains.feedback[tau] * (x - nominal.states[tau]);
        x = dynamics.step(&x, &u)?;
        controls.push(u);
        states.push(x);
    }
    Ok(Trajectory { states, controls })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IlqrStatus {
    /// The cost change or the predicted improvement fell below tolerance.
    Converged,
    MaxIters,
    /// No step scale decreased the cost even at maximal regularization.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct IlqrSolution {
    pub trajectory: Trajectory,
    /// Initial cost followed by the cost after every accepted step.
    pub cost_history: Vec<f64>,
    /// Backward/forward iterations performed.
    pub iterations: usize,
    pub status: IlqrStatus,
    /// Backward pass evaluated at the returned trajectory, when the solver
    /// computed one there. Use [`backward_pass`] to get it otherwise.
    pub final_pass: Option<BackwardPass>,
}

impl IlqrSolution {
    pub fn cost(&self) -> f64 {
        *self.cost_history.last().unwrap()
    }
}

/// Minimizes `objective` subject to `dynamics` starting from the rollout of
/// `initial_controls`.
pub fn solve<D: Dynamics + ?Sized, O: Objective + ?Sized>(
    x0: &StateVec,
    objective: &O,
    dynamics: &D,
    settings: &IlqrSettings,
    initial_controls: &[ControlVec],
) -> Result<IlqrSolution> {
    let initial = Trajectory::rollout(dynamics, x0, initial_controls)?;
    solve_from(initial, objective, dynamics, settings)
}

/// Same as [`solve`], starting from an already simulated trajectory.
pub fn solve_from<D: Dynamics + ?Sized, O: Objective + ?Sized>(
    initial: Trajectory,
    objective: &O,
    dynamics: &D,
    settings: &IlqrSettings,
) -> Result<IlqrSolution> {
    let mut traj = initial;
    let mut cost = traj.cost(objective);
    let mut cost_history = vec![cost];
    let mut mu = settings.mu_init;
    let mut status = IlqrStatus::MaxIters;
    let mut iterations = 0;
    let mut final_pass = None;

    'outer: while iterations < settings.max_iters {
        iterations += 1;
        let lin = linearize(&traj, objective, dynamics)?;
        loop {
            let bp = regularized_recursion(&lin, mu, settings)?;
            mu = bp.mu;
            if bp.expected_improvement() < settings.cost_tolerance {
                final_pass = Some(bp);
                status = IlqrStatus::Converged;
                break 'outer;
            }
            let accepted = settings.line_search.iter().find_map(|&alpha| {
                let candidate = forward_pass(&traj, &bp.gains, alpha, dynamics).ok()?;
                let candidate_cost = candidate.cost(objective);
                (candidate_cost < cost).then_some((candidate, candidate_cost))
            });
            match accepted {
                Some((candidate, candidate_cost)) => {
                    let change = cost - candidate_cost;
                    traj = candidate;
                    cost = candidate_cost;
                    cost_history.push(cost);
                    mu = (mu * settings.mu_shrink).max(settings.mu_min);
                    if change < settings.cost_tolerance {
                        status = IlqrStatus::Converged;
                        break 'outer;
                    }
                    break;
                }
                None => {
                    mu = (mu * settings.mu_growth).max(settings.mu_init.max(settings.mu_min));
                    if mu > settings.mu_max {
                        final_pass = Some(bp);
                        status = IlqrStatus::Stalled;
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(IlqrSolution {
        trajectory: traj,
        cost_history,
        iterations,
        status,
        final_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::linear::{LinearDynamics, QuadraticObjective};
    use super::*;

    fn double_integrator() -> (LinearDynamics, QuadraticObjective) {
        let dt = 0.1;
        let mut a = Matrix4::identity();
        a[(0, 1)] = dt;
        a[(2, 3)] = dt;
        let mut b = Matrix4x2::zeros();
        b[(1, 0)] = dt;
        b[(3, 1)] = dt;
        let obj = QuadraticObjective {
            q: Matrix4::identity(),
            r: Matrix2::identity() * 0.1,
            qf: Matrix4::identity() * 10.0,
            ..QuadraticObjective::zeros()
        };
        (LinearDynamics::new(a, b), obj)
    }

    #[test]
    fn zero_value_gives_stage_blocks() {
        let stage = StageExpansion {
            lx: Vector4::new(1.0, 2.0, 3.0, 4.0),
            lu: Vector2::new(5.0, 6.0),
            lxx: Matrix4::identity() * 2.0,
            lux: Matrix2x4::from_element(0.5),
            luu: Matrix2::identity() * 3.0,
        };
        let fx = Matrix4::from_fn(|i, j| (i + 2 * j) as f64);
        let fu = Matrix4x2::from_fn(|i, j| (i * j) as f64 - 1.0);
        let q = q_expansion(&stage, &ValueExpansion::zeros(), &fx, &fu);
        assert_eq!(q.qx, stage.lx);
        assert_eq!(q.qu, stage.lu);
        assert_eq!(q.qxx, stage.lxx);
        assert_eq!(q.qux, stage.lux);
        assert_eq!(q.quu, stage.luu);
    }

    #[test]
    fn symmetric_inputs_give_symmetric_q() {
        let stage = StageExpansion {
            lxx: Matrix4::from_fn(|i, j| 1.0 / (1 + i + j) as f64),
            luu: Matrix2::new(2.0, 0.3, 0.3, 1.0),
            ..StageExpansion::zeros()
        };
        let next = ValueExpansion {
            vx: Vector4::new(0.1, -0.2, 0.3, 0.4),
            vxx: Matrix4::from_fn(|i, j| (i + j) as f64 + if i == j { 5.0 } else { 0.0 }),
            expected_change: 0.0,
        };
        let fx = Matrix4::from_fn(|i, j| ((i * 3 + j) % 5) as f64 * 0.1);
        let fu = Matrix4x2::from_fn(|i, j| (i as f64 - j as f64) * 0.2);
        let q = q_expansion(&stage, &next, &fx, &fu);
        assert!((q.qxx - q.qxx.transpose()).abs().max() < 1e-14);
        assert!((q.quu - q.quu.transpose()).abs().max() < 1e-14);
    }

    #[test]
    fn zero_cost_gives_zero_gains() {
        let (dynamics, _) = double_integrator();
        let obj = QuadraticObjective {
            r: Matrix2::identity(),
            ..QuadraticObjective::zeros()
        };
        let traj = Trajectory::zero_control(&dynamics, &Vector4::new(1.0, 2.0, 3.0, 4.0), 10).unwrap();
        let bp = backward_pass(&traj, &obj, &dynamics, 0.0).unwrap();
        assert!(bp.gains.feedforward.iter().all(|k| k.norm() == 0.0));
        assert!(bp.gains.feedback.iter().all(|k| k.norm() == 0.0));
    }

    #[test]
    fn zero_gains_reproduce_the_nominal() {
        let (dynamics, _) = double_integrator();
        let controls: Vec<_> = (0..8).map(|i| Vector2::new(i as f64 * 0.1, -0.2)).collect();
        let nominal = Trajectory::rollout(&dynamics, &Vector4::new(1.0, 0.0, -1.0, 0.5), &controls).unwrap();
        let gains = GainSchedule::zeros(8);
        assert_eq!(forward_pass(&nominal, &gains, 1.0, &dynamics).unwrap(), nominal);
        let mut fb = GainSchedule::zeros(8);
        fb.feedforward = vec![Vector2::new(1.0, 1.0); 8];
        fb.feedback = vec![Matrix2x4::from_element(0.3); 8];
        assert_eq!(forward_pass(&nominal, &fb, 0.0, &dynamics).unwrap(), nominal);
    }

    #[test]
    fn negative_definite_control_hessian_is_regularized_or_rejected() {
        let (dynamics, _) = double_integrator();
        let obj = QuadraticObjective {
            r: -Matrix2::identity(),
            ..QuadraticObjective::zeros()
        };
        let traj = Trajectory::zero_control(&dynamics, &Vector4::zeros(), 3).unwrap();
        let bp = backward_pass(&traj, &obj, &dynamics, 1e-6).unwrap();
        assert!(bp.mu > 1.0);

        let strict = IlqrSettings {
            mu_max: 0.5,
            ..IlqrSettings::default()
        };
        let err = solve(&Vector4::zeros(), &obj, &dynamics, &strict, &[Vector2::zeros(); 3]).unwrap_err();
        assert!(matches!(err, Error::RegularizationExhausted { .. }));
    }

    #[test]
    fn optimal_warm_start_converges_immediately() {
        let (dynamics, obj) = double_integrator();
        let x0 = Vector4::new(1.0, 0.0, -1.0, 0.5);
        let settings = IlqrSettings {
            cost_tolerance: 1e-12,
            ..IlqrSettings::default()
        };
        let first = solve(&x0, &obj, &dynamics, &settings, &[Vector2::zeros(); 30]).unwrap();
        let again = solve(&x0, &obj, &dynamics, &settings, &first.trajectory.controls).unwrap();
        assert_eq!(again.iterations, 1);
        assert_eq!(again.status, IlqrStatus::Converged);
        let bp = backward_pass(&again.trajectory, &obj, &dynamics, settings.mu_min).unwrap();
        assert!(bp.gains.feedforward.iter().all(|k| k.norm() < 1e-6));
    }

    #[test]
    fn accepted_steps_decrease_cost() {
        let (dynamics, obj) = double_integrator();
        let sol = solve(
            &Vector4::new(3.0, 1.0, -2.0, 0.0),
            &obj,
            &dynamics,
            &IlqrSettings::default(),
            &[Vector2::new(1.0, -1.0); 25],
        )
        .unwrap();
        assert!(sol.cost_history.windows(2).all(|w| w[1] < w[0]));
    }
}
