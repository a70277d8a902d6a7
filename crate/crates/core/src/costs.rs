//! Tracking objective: squared distance to a reference path, squared speed
//! error, and quadratic steering/acceleration effort.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix6, Vector2, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilqr::{Objective, StageExpansion, TerminalExpansion};
use crate::vehicle::{Control, State};
use crate::{ControlVec, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    /// Weight on the squared distance to the reference path.
    pub position: f64,
    /// Weight on the squared speed error.
    pub velocity: f64,
    pub steering: f64,
    pub acceleration: f64,
    /// Multiplier on the state terms at the final stamp.
    pub terminal_scale: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            velocity: 0.5,
            steering: 1.0,
            acceleration: 0.5,
            terminal_scale: 1.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.position,
            self.velocity,
            self.steering,
            self.acceleration,
            self.terminal_scale,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("cost weights must be finite and >= 0: {self:?}")));
        }
        if all[..4].iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one cost weight must be positive".into()));
        }
        Ok(())
    }
}

/// An ordered chain of 2-D points describing the path to follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polyline {
    points: Vec<[f64; 2]>,
}

/// Result of [`Polyline::distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineDistance {
    pub distance: f64,
    pub closest: Vector2<f64>,
    /// Unit direction of the segment holding the closest point.
    pub tangent: Vector2<f64>,
    /// Whether the closest point lies strictly inside its segment, as opposed
    /// to on a vertex.
    pub interior: bool,
}

impl Polyline {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        let line = Self { points };
        line.validate()?;
        Ok(line)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::Config("a reference polyline needs at least two points".into()));
        }
        if self.points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Config("reference polyline has non-finite coordinates".into()));
        }
        if self.points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("reference polyline repeats a consecutive point".into()));
        }
        Ok(())
    }

    /// Euclidean distance from `p` to the polyline. Ties go to the earliest segment.
    pub fn distance(&self, p: &Vector2<f64>) -> PolylineDistance {
        let mut best: Option<PolylineDistance> = None;
        for w in self.points.windows(2) {
            let a = Vector2::new(w[0][0], w[0][1]);
            let b = Vector2::new(w[1][0], w[1][1]);
            let ab = b - a;
            let len2 = ab.norm_squared();
            let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
            let closest = a + ab * t;
            let distance = (p - closest).norm();
            if best.is_none_or(|b| distance < b.distance) {
                best = Some(PolylineDistance {
                    distance,
                    closest,
                    tangent: ab / len2.sqrt(),
                    interior: t > 0.0 && t < 1.0,
                });
            }
        }
        best.expect("validated polyline has at least one segment")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathReference {
    /// Follow the horizontal line `py = target`.
    Lateral(f64),
    Polyline(Polyline),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub path: PathReference,
    /// Reference speed (m/s); `None` disables speed tracking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
}

impl Reference {
    pub fn lateral(py: f64, speed: Option<f64>) -> Self {
        Self {
            path: PathReference::Lateral(py),
            speed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.path {
            PathReference::Lateral(py) if !py.is_finite() => {
                Err(Error::Config("lateral reference must be finite".into()))
            }
            PathReference::Polyline(line) => line.validate(),
            _ => Ok(()),
        }?;
        if self.speed.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Config("reference speed must be finite".into()));
        }
        Ok(())
    }
}

/// Stage and terminal tracking cost for the bicycle model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingObjective {
    pub weights: CostWeights,
    pub reference: Reference,
}

impl TrackingObjective {
    pub fn new(weights: CostWeights, reference: Reference) -> Self {
        Self { weights, reference }
    }

    /// Position and speed terms shared by the stage and terminal costs.
    fn state_terms(&self, x: &State) -> f64 {
        let w = &self.weights;
        let position = match &self.reference.path {
            PathReference::Lateral(py) => (x.py - py).powi(2),
            PathReference::Polyline(line) => line.distance(&Vector2::new(x.px, x.py)).distance.powi(2),
        };
        let speed = self.reference.speed.map_or(0.0, |vr| w.velocity * (x.v - vr).powi(2));
        w.position * position + speed
    }

    fn state_terms_expansion(&self, x: &State) -> (Vector4<f64>, Matrix4<f64>) {
        let w = &self.weights;
        let mut lx = Vector4::zeros();
        let mut lxx = Matrix4::zeros();
        match &self.reference.path {
            PathReference::Lateral(py) => {
                lx[1] = 2.0 * w.position * (x.py - py);
                lxx[(1, 1)] = 2.0 * w.position;
            }
            PathReference::Polyline(line) => {
                let p = Vector2::new(x.px, x.py);
                let near = line.distance(&p);
                let g = (p - near.closest) * (2.0 * w.position);
                lx[0] = g[0];
                lx[1] = g[1];
                // Inside a segment only the normal offset matters; at a vertex
                // the squared distance is isotropic.
                let hess = if near.interior {
                    let n = Vector2::new(-near.tangent[1], near.tangent[0]);
                    n * n.transpose()
                } else {
                    Matrix2::identity()
                } * (2.0 * w.position);
                lxx.fixed_view_mut::<2, 2>(0, 0).copy_from(&hess);
            }
        }
        if let Some(vr) = self.reference.speed {
            lx[3] = 2.0 * w.velocity * (x.v - vr);
            lxx[(3, 3)] = 2.0 * w.velocity;
        }
        (lx, lxx)
    }

    pub fn stage_cost(&self, x: &State, u: &Control) -> f64 {
        let w = &self.weights;
        self.state_terms(x) + w.steering * u.w * u.w + w.acceleration * u.a * u.a
    }

    pub fn stage_expansion(&self, x: &State, u: &Control) -> StageExpansion {
        let w = &self.weights;
        let (lx, lxx) = self.state_terms_expansion(x);
        StageExpansion {
            lx,
            lu: Vector2::new(2.0 * w.steering * u.w, 2.0 * w.acceleration * u.a),
            lxx,
            lux: Matrix2x4::zeros(),
            luu: Matrix2::new(2.0 * w.steering, 0.0, 0.0, 2.0 * w.acceleration),
        }
    }

    pub fn terminal_cost(&self, x: &State) -> f64 {
        self.weights.terminal_scale * self.state_terms(x)
    }

    pub fn terminal_expansion(&self, x: &State) -> TerminalExpansion {
        let (lx, lxx) = self.state_terms_expansion(x);
        let s = self.weights.terminal_scale;
        TerminalExpansion { lx: lx * s, lxx: lxx * s }
    }

    /// Matrix form of the stage cost, available for a lateral reference.
    pub fn quadratic_form(&self) -> Option<QuadraticCostForm> {
        match self.reference.path {
            PathReference::Lateral(py) => Some(QuadraticCostForm::new(&self.weights, py, self.reference.speed)),
            PathReference::Polyline(_) => None,
        }
    }
}

impl Objective for TrackingObjective {
    fn stage_cost(&self, _tau: usize, x: &StateVec, u: &ControlVec) -> f64 {
        TrackingObjective::stage_cost(self, &State::from_vector(x), &Control::from_vector(u))
    }

    fn stage_expansion(&self, _tau: usize, x: &StateVec, u: &ControlVec) -> StageExpansion {
        TrackingObjective::stage_expansion(self, &State::from_vector(x), &Control::from_vector(u))
    }

    fn terminal_cost(&self, x: &StateVec) -> f64 {
        TrackingObjective::terminal_cost(self, &State::from_vector(x))
    }

    fn terminal_expansion(&self, x: &StateVec) -> TerminalExpansion {
        TrackingObjective::terminal_expansion(self, &State::from_vector(x))
    }
}

/// `l(x, u) = s^T C s - 2 s^T C r` over the stacked vector `s = [x; u]`.
///
/// The tracking cost equals this plus the constant `r^T C r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCostForm {
    pub c: Matrix6<f64>,
    pub r: Vector6<f64>,
}

impl QuadraticCostForm {
    pub fn new(weights: &CostWeights, py_ref: f64, v_ref: Option<f64>) -> Self {
        let q2 = if v_ref.is_some() { weights.velocity } else { 0.0 };
        let c = Matrix6::from_diagonal(&Vector6::new(
            0.0,
            weights.position,
            0.0,
            q2,
            weights.steering,
            weights.acceleration,
        ));
        let r = Vector6::new(0.0, py_ref, 0.0, v_ref.unwrap_or(0.0), 0.0, 0.0);
        Self { c, r }
    }

    pub fn evaluate(&self, x: &State, u: &Control) -> f64 {
        let s = Vector6::new(x.px, x.py, x.theta, x.v, u.w, u.a);
        (s.transpose() * self.c * s)[0] - 2.0 * (s.transpose() * self.c * self.r)[0]
    }

    pub fn constant(&self) -> f64 {
        (self.r.transpose() * self.c * self.r)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> Polyline {
        Polyline::new(vec![[0.0, 0.0], [2.0, 0.0]]).unwrap()
    }

    #[test]
    fn polyline_distance_examples() {
        let line = straight();
        let d = line.distance(&Vector2::new(1.0, 1.0));
        assert!((d.distance - 1.0).abs() < 1e-15);
        assert_eq!(d.closest, Vector2::new(1.0, 0.0));

        assert_eq!(line.distance(&Vector2::new(0.5, 0.0)).distance, 0.0);

        let d = line.distance(&Vector2::new(3.0, 1.0));
        assert!((d.distance - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.closest, Vector2::new(2.0, 0.0));
    }

    #[test]
    fn polyline_ties_go_to_the_first_segment() {
        let line = Polyline::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        // Equidistant from (1,0) on both segments; the corner is shared.
        let d = line.distance(&Vector2::new(2.0, -1.0));
        assert_eq!(d.tangent, Vector2::new(1.0, 0.0));
    }

    #[test]
    fn polyline_validation() {
        assert!(Polyline::new(vec![[0.0, 0.0]]).is_err());
        assert!(Polyline::new(vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]).is_err());
    }

    #[test]
    fn stage_cost_examples() {
        let w = CostWeights {
            position: 1.0,
            velocity: 1.0,
            steering: 0.0,
            acceleration: 0.0,
            terminal_scale: 1.0,
        };
        let obj = TrackingObjective::new(w, Reference::lateral(0.0, Some(8.0)));
        assert_eq!(obj.stage_cost(&State::new(0.0, 1.0, 0.0, 4.0), &Control::default()), 17.0);
        assert_eq!(obj.stage_cost(&State::new(3.0, 0.0, 0.2, 8.0), &Control::default()), 0.0);
    }

    #[test]
    fn lateral_hessian_is_exact() {
        let w = CostWeights::default();
        let obj = TrackingObjective::new(w, Reference::lateral(4.0, Some(8.0)));
        let e = obj.stage_expansion(&State::new(1.0, 2.0, 0.1, 5.0), &Control::new(0.1, 0.2));
        let expected = Matrix4::from_diagonal(&Vector4::new(0.0, 2.0 * w.position, 0.0, 2.0 * w.velocity));
        assert_eq!(e.lxx, expected);
    }

    #[test]
    fn perfect_tracking_is_stationary() {
        let obj = TrackingObjective::new(CostWeights::default(), Reference::lateral(0.0, Some(8.0)));
        let e = obj.stage_expansion(&State::new(5.0, 0.0, 0.0, 8.0), &Control::default());
        assert_eq!(e.lx, Vector4::zeros());
        assert_eq!(e.lu, Vector2::zeros());
    }

    #[test]
    fn missing_speed_reference_drops_the_speed_term() {
        let obj = TrackingObjective::new(CostWeights::default(), Reference::lateral(0.0, None));
        assert_eq!(obj.stage_cost(&State::new(0.0, 0.0, 0.0, 30.0), &Control::default()), 0.0);
    }

    #[test]
    fn terminal_cost_scaling() {
        let mut w = CostWeights::default();
        let x = State::new(1.0, 2.0, 0.3, 6.0);
        w.terminal_scale = 0.0;
        let obj = TrackingObjective::new(w, Reference::lateral(0.0, Some(8.0)));
        assert_eq!(obj.terminal_cost(&x), 0.0);
        w.terminal_scale = 1.0;
        let obj = TrackingObjective::new(w, Reference::lateral(0.0, Some(8.0)));
        assert_eq!(obj.terminal_cost(&x), obj.stage_cost(&x, &Control::default()));
    }

    #[test]
    fn weights_validation() {
        assert!(CostWeights::default().validate().is_ok());
        let zero = CostWeights {
            position: 0.0,
            velocity: 0.0,
            steering: 0.0,
            acceleration: 0.0,
            terminal_scale: 1.0,
        };
        assert!(zero.validate().is_err());
        assert!(CostWeights { steering: -1.0, ..Default::default() }.validate().is_err());
    }
}
