//! Discrete kinematic bicycle model.
//!
//! The state is `(px, py, theta, v)`: the rear-axle midpoint, the heading and
//! the front-wheel speed. The control is `(w, a)`: steering angle and
//! front-wheel acceleration. One step of length `h` rolls the front wheels a
//! distance `f = h v`; the rear wheels follow along a chord whose length comes
//! from the rigid-wheelbase geometry.

use nalgebra::{Matrix4, Matrix4x2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilqr::Dynamics;
use crate::{ControlVec, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    /// Rear-axle X position (m).
    pub px: f64,
    /// Rear-axle Y position (m).
    pub py: f64,
    /// Heading (rad), never wrapped.
    pub theta: f64,
    /// Front-wheel speed (m/s).
    pub v: f64,
}

impl State {
    pub fn new(px: f64, py: f64, theta: f64, v: f64) -> Self {
        Self { px, py, theta, v }
    }

    pub fn to_vector(self) -> StateVec {
        StateVec::new(self.px, self.py, self.theta, self.v)
    }

    pub fn from_vector(x: &StateVec) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.theta.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    /// Steering angle (rad).
    pub w: f64,
    /// Front-wheel acceleration (m/s^2).
    pub a: f64,
}

impl Control {
    pub fn new(w: f64, a: f64) -> Self {
        Self { w, a }
    }

    pub fn to_vector(self) -> ControlVec {
        ControlVec::new(self.w, self.a)
    }

    pub fn from_vector(u: &ControlVec) -> Self {
        Self::new(u[0], u[1])
    }
}

/// Geometry and sampling of the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Distance between the front and rear axles (m).
    pub wheelbase: f64,
    /// Sampling time (s).
    pub time_step: f64,
    pub body_length: f64,
    pub body_width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.0,
            time_step: 0.1,
            body_length: 3.0,
            body_width: 2.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.wheelbase) || !ok(self.time_step) || !ok(self.body_length) || !ok(self.body_width) {
            return Err(Error::Config(format!(
                "vehicle parameters must be finite and positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Front-wheel rolling distance over one step.
    pub fn front_roll(&self, v: f64) -> f64 {
        self.time_step * v
    }

    /// Rear-wheel rolling distance over one step.
    pub fn back_roll(&self, v: f64, w: f64) -> Result<f64> {
        let f = self.front_roll(v);
        let d = self.wheelbase;
        let lateral = f * w.sin();
        let radicand = d * d - lateral * lateral;
        if !(radicand >= 0.0) {
            return Err(Error::Domain { speed: v, steering: w });
        }
        Ok(d + f * w.cos() - radicand.sqrt())
    }

    /// Advances the state by one sampling period.
    pub fn step(&self, x: &State, u: &Control) -> Result<State> {
        let b = self.back_roll(x.v, u.w)?;
        let turn = (self.front_roll(x.v) * u.w.sin() / self.wheelbase).clamp(-1.0, 1.0);
        let (sin_t, cos_t) = x.theta.sin_cos();
        Ok(State {
            px: x.px + b * cos_t,
            py: x.py + b * sin_t,
            theta: x.theta + turn.asin(),
            v: x.v + self.time_step * u.a,
        })
    }

    /// Exact Jacobians of [`step`](Self::step) with respect to state and control.
    ///
    /// Requires the strict interior of the kinematic domain; on its boundary the
    /// square root and arcsine are not differentiable.
    pub fn jacobians(&self, x: &State, u: &Control) -> Result<(Matrix4<f64>, Matrix4x2<f64>)> {
        let h = self.time_step;
        let d = self.wheelbase;
        let f = h * x.v;
        let (sw, cw) = u.w.sin_cos();
        let radicand = d * d - f * f * sw * sw;
        if !(radicand > 0.0) {
            return Err(Error::Domain { speed: x.v, steering: u.w });
        }
        let root = radicand.sqrt();
        let b = d + f * cw - root;
        // d(root)/df = -f sw^2 / root, d(root)/dw = -f^2 sw cw / root
        let db_dv = h * (cw + f * sw * sw / root);
        let db_dw = -f * sw + f * f * sw * cw / root;
        // asin(g) with g = f sw / d has derivative 1/sqrt(1 - g^2) = d / root
        let dturn_dv = h * sw / root;
        let dturn_dw = f * cw / root;

        let (st, ct) = x.theta.sin_cos();
        let mut fx = Matrix4::identity();
        fx[(0, 2)] = -b * st;
        fx[(0, 3)] = db_dv * ct;
        fx[(1, 2)] = b * ct;
        fx[(1, 3)] = db_dv * st;
        fx[(2, 3)] = dturn_dv;

        let mut fu = Matrix4x2::zeros();
        fu[(0, 0)] = db_dw * ct;
        fu[(1, 0)] = db_dw * st;
        fu[(2, 0)] = dturn_dw;
        fu[(3, 1)] = h;
        Ok((fx, fu))
    }
}

impl Dynamics for VehicleParams {
    fn step(&self, x: &StateVec, u: &ControlVec) -> Result<StateVec> {
        VehicleParams::step(self, &State::from_vector(x), &Control::from_vector(u)).map(State::to_vector)
    }

    fn jacobians(&self, x: &StateVec, u: &ControlVec) -> Result<(Matrix4<f64>, Matrix4x2<f64>)> {
        VehicleParams::jacobians(self, &State::from_vector(x), &Control::from_vector(u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn front_roll_is_linear_in_speed() {
        let p = params();
        assert_eq!(p.front_roll(4.0), 0.4);
        assert_eq!(p.front_roll(0.0), 0.0);
        assert_eq!(p.front_roll(8.0), 0.8);
    }

    #[test]
    fn back_roll_special_cases() {
        let p = params();
        assert!((p.back_roll(4.0, 0.0).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(p.back_roll(0.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn back_roll_matches_high_precision_value() {
        // mpmath, 50 digits: 2 + 0.8 cos 0.6 - sqrt(4 - 0.64 sin^2 0.6)
        let expected = 0.711_947_552_905_494_3;
        let got = params().back_roll(8.0, 0.6).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got}");
    }

    #[test]
    fn back_roll_rejects_impossible_steps() {
        let p = VehicleParams { time_step: 1.0, ..params() };
        // f = 10, |f sin w| > d = 2
        let err = p.back_roll(10.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    #[test]
    fn step_examples() {
        let p = params();
        let x = p.step(&State::new(0.0, 0.0, 0.0, 4.0), &Control::new(0.0, 0.0)).unwrap();
        assert!((x.px - 0.4).abs() < 1e-15 && x.py == 0.0 && x.theta == 0.0 && x.v == 4.0);

        let x = p.step(&State::new(0.0, 0.0, FRAC_PI_2, 4.0), &Control::new(0.0, 1.0)).unwrap();
        assert!(x.px.abs() < 1e-15);
        assert!((x.py - 0.4).abs() < 1e-15);
        assert_eq!(x.theta, FRAC_PI_2);
        assert!((x.v - 4.1).abs() < 1e-15);
    }

    #[test]
    fn step_with_steering_matches_high_precision_value() {
        // mpmath, 50 digits, x = (0,0,0,4), u = (0.3, 0)
        let x = params().step(&State::new(0.0, 0.0, 0.0, 4.0), &Control::new(0.3, 0.0)).unwrap();
        assert!((x.px - 0.385_630_939_457_052_7).abs() < 1e-14);
        assert_eq!(x.py, 0.0);
        assert!((x.theta - 0.059_138_506_775_558_343).abs() < 1e-14);
        assert_eq!(x.v, 4.0);
    }

    #[test]
    fn straight_line_jacobian_row() {
        let p = params();
        let (fx, _) = p.jacobians(&State::new(0.0, 0.0, 0.0, 4.0), &Control::new(0.0, 0.0)).unwrap();
        let row = fx.row(0);
        assert!((row[0] - 1.0).abs() < 1e-15);
        assert_eq!(row[1], 0.0);
        assert_eq!(row[2], 0.0);
        assert!((row[3] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_speed_turn_has_no_steering_sensitivity() {
        let p = params();
        let (_, fu) = p.jacobians(&State::new(1.0, 2.0, 0.3, 0.0), &Control::new(0.4, 0.0)).unwrap();
        assert_eq!(fu[(2, 0)], 0.0);
    }

    #[test]
    fn jacobians_reject_the_domain_boundary() {
        let p = VehicleParams { time_step: 1.0, ..params() };
        // f sin w = d exactly
        let err = p.jacobians(&State::new(0.0, 0.0, 0.0, 2.0), &Control::new(FRAC_PI_2, 0.0));
        assert!(err.is_err());
    }
}
