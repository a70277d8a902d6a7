//! Linear dynamics and quadratic costs, mostly useful as a reference problem
//! whose optimum is known in closed form.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};

use super::{Dynamics, Objective, StageExpansion, TerminalExpansion};
use crate::error::Result;
use crate::{ControlVec, StateVec};

/// `x' = A x + B u + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDynamics {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub c: Vector4<f64>,
}

impl LinearDynamics {
    pub fn new(a: Matrix4<f64>, b: Matrix4x2<f64>) -> Self {
        Self {
            a,
            b,
            c: Vector4::zeros(),
        }
    }
}

impl Dynamics for LinearDynamics {
    fn step(&self, x: &StateVec, u: &ControlVec) -> Result<StateVec> {
        Ok(self.a * x + self.b * u + self.c)
    }

    fn jacobians(&self, _x: &StateVec, _u: &ControlVec) -> Result<(Matrix4<f64>, Matrix4x2<f64>)> {
        Ok((self.a, self.b))
    }
}

/// Time-invariant quadratic cost
/// `1/2 x'Qx + 1/2 u'Ru + u'Nx + q'x + r'u` per stage and `1/2 x'Q_f x + q_f'x` at the end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticObjective {
    pub q: Matrix4<f64>,
    pub r: Matrix2<f64>,
    pub n: Matrix2x4<f64>,
    pub q_lin: Vector4<f64>,
    pub r_lin: Vector2<f64>,
    pub qf: Matrix4<f64>,
    pub qf_lin: Vector4<f64>,
}

impl QuadraticObjective {
    pub fn zeros() -> Self {
        Self {
            q: Matrix4::zeros(),
            r: Matrix2::zeros(),
            n: Matrix2x4::zeros(),
            q_lin: Vector4::zeros(),
            r_lin: Vector2::zeros(),
            qf: Matrix4::zeros(),
            qf_lin: Vector4::zeros(),
        }
    }
}

impl Objective for QuadraticObjective {
    fn stage_cost(&self, _tau: usize, x: &StateVec, u: &ControlVec) -> f64 {
        0.5 * x.dot(&(self.q * x)) + 0.5 * u.dot(&(self.r * u)) + u.dot(&(self.n * x)) + self.q_lin.dot(x) + self.r_lin.dot(u)
    }

    fn stage_expansion(&self, _tau: usize, x: &StateVec, u: &ControlVec) -> StageExpansion {
        StageExpansion {
            lx: self.q * x + self.n.transpose() * u + self.q_lin,
            lu: self.r * u + self.n * x + self.r_lin,
            lxx: self.q,
            lux: self.n,
            luu: self.r,
        }
    }

    fn terminal_cost(&self, x: &StateVec) -> f64 {
        0.5 * x.dot(&(self.qf * x)) + self.qf_lin.dot(x)
    }

    fn terminal_expansion(&self, x: &StateVec) -> TerminalExpansion {
        TerminalExpansion {
            lx: self.qf * x + self.qf_lin,
            lxx: self.qf,
        }
    }
}
