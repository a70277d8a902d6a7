//! ADMM consensus splitting around iLQR.
//!
//! The constrained problem is split into a smooth part, dynamics plus
//! tracking cost, and a non-smooth part, the indicator of the constraint set.
//! They are coupled through a copy `z` of the constraint-relevant components
//! `(px, py, w, a)` of every stamp. Each iteration:
//!
//! 1. runs iLQR on the tracking cost plus `sigma/2 |Ay - z + lambda/sigma|^2`,
//! 2. projects `Ay + lambda/sigma` onto the constraints, stamp by stamp,
//! 3. takes a dual ascent step `lambda += sigma (Ay - z)`.
//!
//! Only the primal residual `|Ay - z|` is monitored for termination.

use std::time::Instant;

use nalgebra::{Vector2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::ilqr::{self, Dynamics, IlqrSettings, Objective, StageExpansion, TerminalExpansion, Trajectory};
use crate::report::{IterationRecord, Method, Problem, SolveReport, SolveStatus};
use crate::{ControlVec, StateVec};

/// `(px, py, w, a)` at one stamp.
pub type Block = Vector4<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmSettings {
    /// Augmented Lagrangian penalty.
    pub sigma: f64,
    pub max_iters: usize,
    /// Stop once `|Ay - z|_inf` drops below this.
    pub primal_tolerance: f64,
    /// Run the per-stamp projections on the rayon pool.
    pub parallel_projection: bool,
    pub ilqr: IlqrSettings,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            max_iters: 20,
            primal_tolerance: 1e-3,
            parallel_projection: false,
            ilqr: IlqrSettings::default(),
        }
    }
}

impl AdmmSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || self.max_iters == 0 || !(self.primal_tolerance > 0.0) {
            return Err(Error::Config(format!(
                "ADMM needs sigma > 0, max_iters >= 1, primal_tolerance > 0 (sigma = {}, max_iters = {}, tol = {})",
                self.sigma, self.max_iters, self.primal_tolerance
            )));
        }
        self.ilqr.validate()
    }
}

/// Consensus copies `z` and multipliers `lambda`, one block per stamp `0..=T`.
///
/// Stamp `T` carries no control, so its `(w, a)` slots stay at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub z: Vec<Block>,
    pub lambda: Vec<Block>,
    pub sigma: f64,
}

impl ConsensusState {
    pub fn new(z: Vec<Block>, sigma: f64) -> Self {
        let lambda = vec![Block::zeros(); z.len()];
        Self { z, lambda, sigma }
    }

    /// Projects `selected + lambda/sigma` onto the constraints at every stamp.
    pub fn update_z(
        &mut self,
        selected: &[Block],
        headings: &[f64],
        constraints: &ConstraintSet,
        parallel: bool,
    ) -> Result<()> {
        let sigma = self.sigma;
        let last = selected.len() - 1;
        let project = |tau: usize| -> Result<Block> {
            let target = selected[tau] + self.lambda[tau] / sigma;
            let mut z = constraints.project_block(tau, &target, headings[tau])?;
            if tau == last {
                z[2] = 0.0;
                z[3] = 0.0;
            }
            Ok(z)
        };
        self.z = if parallel {
            (0..selected.len()).into_par_iter().map(project).collect::<Result<_>>()?
        } else {
            (0..selected.len()).map(project).collect::<Result<_>>()?
        };
        Ok(())
    }

    /// `lambda += sigma (selected - z)`.
    pub fn update_lambda(&mut self, selected: &[Block]) {
        let last = selected.len() - 1;
        for (tau, (l, (s, z))) in self.lambda.iter_mut().zip(selected.iter().zip(&self.z)).enumerate() {
            *l += (s - z) * self.sigma;
            if tau == last {
                l[2] = 0.0;
                l[3] = 0.0;
            }
        }
    }
}

/// Extracts `(px, py, w, a)` per stamp; the final stamp gets zero controls.
pub fn select(traj: &Trajectory) -> Vec<Block> {
    let horizon = traj.horizon();
    (0..=horizon)
        .map(|tau| {
            let x = &traj.states[tau];
            let u = traj.controls.get(tau).copied().unwrap_or_else(ControlVec::zeros);
            Block::new(x[0], x[1], u[0], u[1])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub inf: f64,
    pub two: f64,
}

/// `|select(y) - z|` in the max and Euclidean norms.
pub fn primal_residual(selected: &[Block], z: &[Block]) -> Residual {
    let (mut inf, mut sq) = (0.0f64, 0.0);
    for (s, z) in selected.iter().zip(z) {
        let d = s - z;
        inf = inf.max(d.abs().max());
        sq += d.norm_squared();
    }
    Residual { inf, two: sq.sqrt() }
}

/// Tracking cost plus the consensus penalty `sigma/2 |Ay - z + lambda/sigma|^2`.
pub struct PenalizedObjective<'a, O> {
    pub base: &'a O,
    pub consensus: &'a ConsensusState,
}

impl<O> PenalizedObjective<'_, O> {
    fn offset(&self, tau: usize, x: &StateVec, u: &ControlVec) -> Block {
        let c = self.consensus;
        Block::new(x[0], x[1], u[0], u[1]) - c.z[tau] + c.lambda[tau] / c.sigma
    }

    fn terminal_offset(&self, x: &StateVec) -> Vector2<f64> {
        let c = self.consensus;
        let last = c.z.len() - 1;
        Vector2::new(x[0] - c.z[last][0], x[1] - c.z[last][1])
            + Vector2::new(c.lambda[last][0], c.lambda[last][1]) / c.sigma
    }
}

impl<O: Objective> Objective for PenalizedObjective<'_, O> {
    fn stage_cost(&self, tau: usize, x: &StateVec, u: &ControlVec) -> f64 {
        let e = self.offset(tau, x, u);
        self.base.stage_cost(tau, x, u) + 0.5 * self.consensus.sigma * e.norm_squared()
    }

    fn stage_expansion(&self, tau: usize, x: &StateVec, u: &ControlVec) -> StageExpansion {
        let sigma = self.consensus.sigma;
        let e = self.offset(tau, x, u) * sigma;
        let mut exp = self.base.stage_expansion(tau, x, u);
        exp.lx[0] += e[0];
        exp.lx[1] += e[1];
        exp.lu[0] += e[2];
        exp.lu[1] += e[3];
        exp.lxx[(0, 0)] += sigma;
        exp.lxx[(1, 1)] += sigma;
        exp.luu[(0, 0)] += sigma;
        exp.luu[(1, 1)] += sigma;
        exp
    }

    fn terminal_cost(&self, x: &StateVec) -> f64 {
        let e = self.terminal_offset(x);
        self.base.terminal_cost(x) + 0.5 * self.consensus.sigma * e.norm_squared()
    }

    fn terminal_expansion(&self, x: &StateVec) -> TerminalExpansion {
        let sigma = self.consensus.sigma;
        let e = self.terminal_offset(x) * sigma;
        let mut exp = self.base.terminal_expansion(x);
        exp.lx[0] += e[0];
        exp.lx[1] += e[1];
        exp.lxx[(0, 0)] += sigma;
        exp.lxx[(1, 1)] += sigma;
        exp
    }
}

/// Solves a [`Problem`] with ADMM around iLQR.
pub fn admm_solve(problem: &Problem, settings: &AdmmSettings) -> Result<SolveReport> {
    settings.validate()?;
    let x0 = problem.x0.to_vector();
    let mut report = admm_solve_with(
        &x0,
        problem.horizon,
        &problem.objective,
        &problem.vehicle,
        &problem.constraints,
        settings,
    );
    report.max_violation = problem.max_violation(&report.trajectory);
    Ok(report)
}

/// ADMM over arbitrary dynamics and objective.
///
/// Solver failures do not abort with an error; they end the loop with status
/// `Failed`, keeping whatever iterations completed. The returned
/// `max_violation` covers only the consensus components and is recomputed by
/// [`admm_solve`] for full problems.
pub fn admm_solve_with<D: Dynamics + Sync, O: Objective>(
    x0: &StateVec,
    horizon: usize,
    objective: &O,
    dynamics: &D,
    constraints: &ConstraintSet,
    settings: &AdmmSettings,
) -> SolveReport {
    let start = Instant::now();
    let mut report = SolveReport {
        method: Method::Admm,
        status: SolveStatus::MaxIters,
        trajectory: Trajectory {
            states: vec![*x0],
            controls: Vec::new(),
        },
        iterations: Vec::new(),
        snapshots: Vec::new(),
        max_violation: f64::NAN,
        cost: f64::NAN,
        seconds: 0.0,
        failure: None,
    };
    let fail = |mut report: SolveReport, err: Error, start: Instant| {
        report.status = SolveStatus::Failed;
        report.failure = Some(err);
        report.seconds = start.elapsed().as_secs_f64();
        report
    };

    let mut y = match Trajectory::zero_control(dynamics, x0, horizon) {
        Ok(y) => y,
        Err(e) => return fail(report, e, start),
    };
    report.trajectory = y.clone();
    let mut consensus: Option<ConsensusState> = None;

    for iteration in 1..=settings.max_iters {
        // No consensus target exists before the first projection, so the first
        // trajectory update is the plain tracking problem.
        let solved = match &consensus {
            None => ilqr::solve_from(y.clone(), objective, dynamics, &settings.ilqr),
            Some(c) => {
                let penalized = PenalizedObjective { base: objective, consensus: c };
                ilqr::solve_from(y.clone(), &penalized, dynamics, &settings.ilqr)
            }
        };
        let sol = match solved {
            Ok(sol) => sol,
            Err(e) => return fail(report, e, start),
        };
        y = sol.trajectory;

        let selected = select(&y);
        let headings: Vec<f64> = y.states.iter().map(|x| x[2]).collect();
        let state = consensus.get_or_insert_with(|| ConsensusState::new(selected.clone(), settings.sigma));
        if let Err(e) = state.update_z(&selected, &headings, constraints, settings.parallel_projection) {
            report.trajectory = y;
            return fail(report, e, start);
        }
        state.update_lambda(&selected);
        let residual = primal_residual(&selected, &state.z);

        let cost = y.cost(objective);
        report.iterations.push(IterationRecord {
            iteration,
            residual_inf: Some(residual.inf),
            residual_2: Some(residual.two),
            cost,
            ilqr_iters: sol.iterations,
            seconds: start.elapsed().as_secs_f64(),
        });
        report.snapshots.push((iteration, y.clone()));
        report.trajectory = y.clone();
        report.cost = cost;
        if residual.inf < settings.primal_tolerance {
            report.status = SolveStatus::Converged;
            break;
        }
    }
    report.max_violation = consensus_violation(&report.trajectory, constraints);
    report.seconds = start.elapsed().as_secs_f64();
    report
}

fn consensus_violation(traj: &Trajectory, constraints: &ConstraintSet) -> f64 {
    let mut worst = 0.0f64;
    for (tau, x) in traj.states.iter().enumerate() {
        worst = worst.max(constraints.obstacle_violation(tau, &Vector2::new(x[0], x[1]), x[2]));
    }
    for u in &traj.controls {
        worst = worst.max(constraints.bounds.violation(&crate::vehicle::Control::from_vector(u)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::InputBounds;
    use crate::costs::{CostWeights, Reference, TrackingObjective};
    use crate::vehicle::VehicleParams;

    fn straight_rollout(horizon: usize) -> Trajectory {
        Trajectory::zero_control(&VehicleParams::default(), &StateVec::new(0.0, 0.0, 0.0, 4.0), horizon).unwrap()
    }

    #[test]
    fn select_examples() {
        let y = straight_rollout(60);
        let blocks = select(&y);
        assert_eq!(blocks.len(), 61);
        assert!((blocks[1] - Block::new(0.4, 0.0, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(select(&straight_rollout(1)).len(), 2);
    }

    #[test]
    fn select_is_linear() {
        let a = Trajectory {
            states: vec![StateVec::new(1.0, 2.0, 3.0, 4.0), StateVec::new(5.0, 6.0, 7.0, 8.0)],
            controls: vec![ControlVec::new(0.1, 0.2)],
        };
        let b = Trajectory {
            states: vec![StateVec::new(-1.0, 0.5, 0.0, 2.0), StateVec::new(3.0, -6.0, 1.0, 0.0)],
            controls: vec![ControlVec::new(-0.3, 0.7)],
        };
        let sum = Trajectory {
            states: a.states.iter().zip(&b.states).map(|(x, y)| x + y).collect(),
            controls: a.controls.iter().zip(&b.controls).map(|(x, y)| x + y).collect(),
        };
        let expected: Vec<Block> = select(&a).iter().zip(select(&b)).map(|(x, y)| x + y).collect();
        assert_eq!(select(&sum), expected);
    }

    #[test]
    fn residual_examples() {
        let y = select(&straight_rollout(5));
        assert_eq!(primal_residual(&y, &y).inf, 0.0);
        let mut z = y.clone();
        z[3][0] += 0.5;
        let r = primal_residual(&y, &z);
        assert_eq!(r.inf, 0.5);
        assert_eq!(r.two, 0.5);
    }

    #[test]
    fn penalty_vanishes_at_consensus() {
        let y = straight_rollout(10);
        let base = TrackingObjective::new(CostWeights::default(), Reference::lateral(1.0, Some(8.0)));
        let consensus = ConsensusState::new(select(&y), 10.0);
        let penalized = PenalizedObjective {
            base: &base,
            consensus: &consensus,
        };
        assert_eq!(y.cost(&penalized), y.cost(&base));
    }

    #[test]
    fn tiny_sigma_recovers_the_base_cost() {
        let y = straight_rollout(10);
        let base = TrackingObjective::new(CostWeights::default(), Reference::lateral(1.0, Some(8.0)));
        let mut consensus = ConsensusState::new(vec![Block::new(1.0, -2.0, 0.3, 0.1); 11], 1e-12);
        consensus.lambda = vec![Block::zeros(); 11];
        let penalized = PenalizedObjective {
            base: &base,
            consensus: &consensus,
        };
        assert!((y.cost(&penalized) - y.cost(&base)).abs() < 1e-9);
    }

    #[test]
    fn dual_update_identity() {
        let y = straight_rollout(20);
        let selected = select(&y);
        let constraints = ConstraintSet::new(
            InputBounds::default(),
            vec![crate::constraints::Obstacle::fixed([4.0, 0.5], 5.0, 2.5)],
            0.1,
        );
        let mut state = ConsensusState::new(selected.clone(), 10.0);
        state.lambda = (0..21).map(|i| Block::new(0.1 * i as f64, -0.2, 0.05, 0.0)).collect();
        state.lambda[20][2] = 0.0;
        let before = state.lambda.clone();
        state.update_z(&selected, &[0.0; 21], &constraints, false).unwrap();
        state.update_lambda(&selected);
        for tau in 0..21 {
            let expected = before[tau] + (selected[tau] - state.z[tau]) * 10.0;
            assert!((state.lambda[tau] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn parallel_and_serial_projection_agree() {
        let y = straight_rollout(60);
        let selected = select(&y);
        let constraints = ConstraintSet::new(
            InputBounds::default(),
            vec![crate::constraints::Obstacle::fixed([15.0, -1.0], 5.0, 2.5)],
            0.1,
        );
        let mut a = ConsensusState::new(selected.clone(), 10.0);
        let mut b = a.clone();
        let headings = vec![0.0; 61];
        a.update_z(&selected, &headings, &constraints, false).unwrap();
        b.update_z(&selected, &headings, &constraints, true).unwrap();
        assert_eq!(a, b);
    }
}
