//! Input boxes, elliptical keep-out regions, and the Euclidean projections
//! onto them used by the consensus update.

use nalgebra::{Matrix2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::Control;

/// Violations at or below this are treated as satisfied by the cyclic projection.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-10;

/// Sweep budget for cyclic projection over overlapping ellipses.
pub const MAX_PROJECTION_SWEEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputBounds {
    /// Symmetric steering limit (rad).
    pub max_steering: f64,
    pub max_acceleration: f64,
    /// Largest braking, as a negative acceleration.
    pub max_deceleration: f64,
}

impl Default for InputBounds {
    fn default() -> Self {
        Self {
            max_steering: 0.6,
            max_acceleration: 3.0,
            max_deceleration: -3.0,
        }
    }
}

impl InputBounds {
    /// Bounds wide enough never to bind.
    pub fn unbounded() -> Self {
        Self {
            max_steering: 1e9,
            max_acceleration: 1e9,
            max_deceleration: -1e9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_steering > 0.0 && self.max_deceleration < 0.0 && self.max_acceleration > 0.0) {
            return Err(Error::Config(format!(
                "input bounds need max_steering > 0 and max_deceleration < 0 < max_acceleration: {self:?}"
            )));
        }
        Ok(())
    }

    /// Euclidean projection onto the box.
    pub fn project(&self, u: &Control) -> Control {
        Control {
            w: u.w.clamp(-self.max_steering, self.max_steering),
            a: u.a.clamp(self.max_deceleration, self.max_acceleration),
        }
    }

    /// Largest amount by which `u` exceeds the box, zero when inside.
    pub fn violation(&self, u: &Control) -> f64 {
        [
            u.w - self.max_steering,
            -self.max_steering - u.w,
            u.a - self.max_acceleration,
            self.max_deceleration - u.a,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Quadratic form of an ellipse: points with `d^T A d <= 1` are inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseShape {
    pub matrix: Matrix2<f64>,
    heading: f64,
    semi_major: f64,
    semi_minor: f64,
}

impl EllipseShape {
    /// `A = R diag(1/e_a^2, 1/e_b^2) R^T` with `R` the rotation by `heading`.
    pub fn new(heading: f64, semi_major: f64, semi_minor: f64) -> Self {
        // keep the first axis the long one so the projection's root bracket holds
        let (heading, semi_major, semi_minor) = if semi_major >= semi_minor {
            (heading, semi_major, semi_minor)
        } else {
            (heading + std::f64::consts::FRAC_PI_2, semi_minor, semi_major)
        };
        let (s, c) = heading.sin_cos();
        let rot = Matrix2::new(c, -s, s, c);
        let diag = Matrix2::new(semi_major.powi(-2), 0.0, 0.0, semi_minor.powi(-2));
        Self {
            matrix: rot * diag * rot.transpose(),
            heading,
            semi_major,
            semi_minor,
        }
    }

    pub fn semi_axes(&self) -> (f64, f64) {
        (self.semi_major, self.semi_minor)
    }

    /// `1 - d^T A d`: positive inside, zero on the boundary, negative outside.
    pub fn violation(&self, p: &Vector2<f64>, center: &Vector2<f64>) -> f64 {
        let d = p - center;
        1.0 - d.dot(&(self.matrix * d))
    }

    fn local_coords(&self, p: &Vector2<f64>, center: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.heading.sin_cos();
        let d = p - center;
        Vector2::new(c * d[0] + s * d[1], -s * d[0] + c * d[1])
    }

    fn world_coords(&self, q: &Vector2<f64>, center: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.heading.sin_cos();
        center + Vector2::new(c * q[0] - s * q[1], s * q[0] + c * q[1])
    }

    /// Nearest point to `p` that is not inside the ellipse.
    pub fn project_outside(&self, p: &Vector2<f64>, center: &Vector2<f64>) -> EllipseProjection {
        if self.violation(p, center) <= 0.0 {
            return EllipseProjection {
                point: *p,
                degenerate: false,
            };
        }
        let q = self.local_coords(p, center);
        let (local, degenerate) = nearest_on_axis_aligned(self.semi_major, self.semi_minor, q[0], q[1]);
        EllipseProjection {
            point: self.world_coords(&local, center),
            degenerate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseProjection {
    pub point: Vector2<f64>,
    /// Set when the input sat exactly on the center, where the nearest
    /// boundary point is not unique; the minor-axis vertex is returned.
    pub degenerate: bool,
}

/// Nearest boundary point of `x^2/a^2 + y^2/b^2 = 1` (with `a >= b`) to `(x0, y0)`.
///
/// The minimizer is `(a^2 x0 / (a^2 + t), b^2 y0 / (b^2 + t))` where `t` is the
/// unique root above `-b^2` of the secular equation
/// `(a x0 / (a^2 + t))^2 + (b y0 / (b^2 + t))^2 = 1`, found by bisection.
fn nearest_on_axis_aligned(a: f64, b: f64, x0: f64, y0: f64) -> (Vector2<f64>, bool) {
    let (sx, sy) = (x0.signum(), y0.signum());
    let (x0, y0) = (x0.abs(), y0.abs());
    if x0 == 0.0 && y0 == 0.0 {
        return (Vector2::new(0.0, b), true);
    }
    let (x, y) = if y0 > 0.0 {
        if x0 > 0.0 {
            let secular = |t: f64| (a * x0 / (a * a + t)).powi(2) + (b * y0 / (b * b + t)).powi(2) - 1.0;
            let mut lo = -b * b + b * y0;
            let mut hi = -b * b + (a * a * x0 * x0 + b * b * y0 * y0).sqrt();
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if secular(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            (a * a * x0 / (a * a + t), b * b * y0 / (b * b + t))
        } else {
            (0.0, b)
        }
    } else {
        // On the major axis: deep inside the nearest point leaves the axis.
        let focal = (a * a - b * b) / a;
        if x0 < focal {
            let x = a * a * x0 / (a * a - b * b);
            (x, b * (1.0 - (x / a).powi(2)).max(0.0).sqrt())
        } else {
            (a, 0.0)
        }
    };
    let sy = if sy == 0.0 { 1.0 } else { sy };
    (Vector2::new(sx * x, sy * y), false)
}

/// A vehicle-shaped keep-out region moving at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    /// Center at stamp 0 (m).
    pub center: [f64; 2],
    /// Constant velocity (m/s).
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Orientation of the major axis (rad).
    #[serde(default)]
    pub heading: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
}

impl Obstacle {
    pub fn fixed(center: [f64; 2], semi_major: f64, semi_minor: f64) -> Self {
        Self {
            center,
            velocity: [0.0, 0.0],
            heading: 0.0,
            semi_major,
            semi_minor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.center.iter().chain(&self.velocity).all(|c| c.is_finite()) && self.heading.is_finite();
        if !finite || !(self.semi_major >= self.semi_minor && self.semi_minor > 0.0) {
            return Err(Error::Config(format!(
                "obstacle needs finite values and semi_major >= semi_minor > 0: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn center_at(&self, tau: usize, time_step: f64) -> Vector2<f64> {
        let t = tau as f64 * time_step;
        Vector2::new(self.center[0] + t * self.velocity[0], self.center[1] + t * self.velocity[1])
    }

    pub fn shape(&self, heading: f64) -> EllipseShape {
        EllipseShape::new(heading, self.semi_major, self.semi_minor)
    }

    /// Keep-out value at stamp `tau` using the obstacle's own heading.
    pub fn violation(&self, p: &Vector2<f64>, tau: usize, time_step: f64) -> f64 {
        self.shape(self.heading).violation(p, &self.center_at(tau, time_step))
    }
}

/// Whose heading orients the keep-out ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingConvention {
    /// The obstacle's fixed heading; projections are purely positional.
    #[default]
    Obstacle,
    /// The ego vehicle's heading at the same stamp.
    Ego,
}

/// Everything the consensus projection has to satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub bounds: InputBounds,
    pub obstacles: Vec<Obstacle>,
    pub heading_convention: HeadingConvention,
    pub time_step: f64,
}

impl ConstraintSet {
    pub fn new(bounds: InputBounds, obstacles: Vec<Obstacle>, time_step: f64) -> Self {
        Self {
            bounds,
            obstacles,
            heading_convention: HeadingConvention::Obstacle,
            time_step,
        }
    }

    /// Center and shape of every obstacle at stamp `tau`.
    pub fn ellipses_at(&self, tau: usize, ego_heading: f64) -> Vec<(Vector2<f64>, EllipseShape)> {
        self.obstacles
            .iter()
            .map(|o| {
                let heading = match self.heading_convention {
                    HeadingConvention::Obstacle => o.heading,
                    HeadingConvention::Ego => ego_heading,
                };
                (o.center_at(tau, self.time_step), o.shape(heading))
            })
            .collect()
    }

    /// Largest keep-out value at stamp `tau` (negative when clear of all obstacles).
    pub fn obstacle_violation(&self, tau: usize, p: &Vector2<f64>, ego_heading: f64) -> f64 {
        self.ellipses_at(tau, ego_heading)
            .iter()
            .map(|(c, shape)| shape.violation(p, c))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Projects one `(px, py, w, a)` block onto the constraints active at stamp `tau`.
    pub fn project_block(&self, tau: usize, block: &Vector4<f64>, ego_heading: f64) -> Result<Vector4<f64>> {
        project_timestep(tau, block, &self.ellipses_at(tau, ego_heading), &self.bounds)
    }
}

/// Box-clamps the inputs and cyclically projects the position out of every
/// ellipse until none is violated.
pub fn project_timestep(
    tau: usize,
    block: &Vector4<f64>,
    ellipses: &[(Vector2<f64>, EllipseShape)],
    bounds: &InputBounds,
) -> Result<Vector4<f64>> {
    let u = bounds.project(&Control::new(block[2], block[3]));
    let mut p = Vector2::new(block[0], block[1]);
    let mut sweeps = 0;
    loop {
        let violated = ellipses
            .iter()
            .any(|(c, shape)| shape.violation(&p, c) > FEASIBILITY_TOLERANCE);
        if !violated {
            break;
        }
        if sweeps == MAX_PROJECTION_SWEEPS {
            return Err(Error::NonConvergence { tau, sweeps });
        }
        for (c, shape) in ellipses {
            if shape.violation(&p, c) > FEASIBILITY_TOLERANCE {
                p = shape.project_outside(&p, c).point;
            }
        }
        sweeps += 1;
    }
    Ok(Vector4::new(p[0], p[1], u.w, u.a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: &Matrix2<f64>, b: &Matrix2<f64>) -> bool {
        (a - b).abs().max() < 1e-15
    }

    #[test]
    fn ellipse_shape_examples() {
        let diag = Matrix2::new(0.04, 0.0, 0.0, 0.16);
        assert!(close(&EllipseShape::new(0.0, 5.0, 2.5).matrix, &diag));
        let swapped = Matrix2::new(0.16, 0.0, 0.0, 0.04);
        assert!(close(&EllipseShape::new(FRAC_PI_2, 5.0, 2.5).matrix, &swapped));
        assert!(close(&EllipseShape::new(PI, 5.0, 2.5).matrix, &diag));
    }

    #[test]
    fn obstacle_violation_examples() {
        let obs = Obstacle {
            center: [15.0, -1.0],
            velocity: [0.0, 0.0],
            heading: 0.3,
            semi_major: 5.0,
            semi_minor: 2.5,
        };
        let c = obs.center_at(0, 0.1);
        assert_eq!(obs.violation(&c, 0, 0.1), 1.0);
        let edge = c + Vector2::new(5.0 * 0.3f64.cos(), 5.0 * 0.3f64.sin());
        assert!(obs.violation(&edge, 0, 0.1).abs() < 1e-14);

        let parked = Obstacle::fixed([15.0, -1.0], 5.0, 2.5);
        assert!((parked.violation(&Vector2::new(15.0, 2.0), 0, 0.1) + 0.44).abs() < 1e-14);
    }

    #[test]
    fn moving_obstacle_center() {
        let obs = Obstacle {
            velocity: [6.0, 0.0],
            ..Obstacle::fixed([0.0, 4.0], 5.0, 2.5)
        };
        let c = obs.center_at(10, 0.1);
        assert!((c - Vector2::new(6.0, 4.0)).norm() < 1e-14);
    }

    #[test]
    fn input_projection_examples() {
        let b = InputBounds::default();
        assert_eq!(b.project(&Control::new(0.9, 0.0)), Control::new(0.6, 0.0));
        assert_eq!(b.project(&Control::new(0.0, -5.0)), Control::new(0.0, -3.0));
        let ok = Control::new(0.2, -1.0);
        assert_eq!(b.project(&ok), ok);
    }

    #[test]
    fn projection_leaves_feasible_points_alone() {
        let shape = EllipseShape::new(0.0, 5.0, 2.5);
        let c = Vector2::new(1.0, 1.0);
        let outside = Vector2::new(10.0, 1.0);
        assert_eq!(shape.project_outside(&outside, &c).point, outside);
        let boundary = c + Vector2::new(0.0, 2.5);
        assert_eq!(shape.project_outside(&boundary, &c).point, boundary);
    }

    #[test]
    fn center_projection_is_flagged() {
        let shape = EllipseShape::new(0.0, 5.0, 2.5);
        let c = Vector2::new(3.0, -2.0);
        let proj = shape.project_outside(&c, &c);
        assert!(proj.degenerate);
        assert!((proj.point - Vector2::new(3.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn near_center_on_major_axis_goes_to_the_minor_side() {
        let shape = EllipseShape::new(0.0, 5.0, 2.5);
        let c = Vector2::zeros();
        let proj = shape.project_outside(&Vector2::new(1.0, 0.0), &c);
        assert!(!proj.degenerate);
        assert!(proj.point[1] > 2.0, "{:?}", proj.point);
        assert!(shape.violation(&proj.point, &c).abs() < 1e-12);
    }

    #[test]
    fn projection_lands_on_the_boundary() {
        let shape = EllipseShape::new(0.7, 5.0, 2.5);
        let c = Vector2::new(-4.0, 2.0);
        for p in [Vector2::new(-3.0, 2.5), Vector2::new(-4.1, 1.0), Vector2::new(-6.0, 0.5)] {
            let q = shape.project_outside(&p, &c).point;
            assert!(shape.violation(&q, &c).abs() < 1e-9);
        }
    }

    #[test]
    fn timestep_projection_examples() {
        let b = InputBounds::default();
        let block = Vector4::new(1.0, 2.0, 0.1, 0.5);
        assert_eq!(project_timestep(0, &block, &[], &b).unwrap(), block);

        let shape = EllipseShape::new(0.0, 5.0, 2.5);
        let c = Vector2::new(2.0, 2.0);
        let out = project_timestep(0, &block, &[(c, shape)], &b).unwrap();
        let single = shape.project_outside(&Vector2::new(1.0, 2.0), &c).point;
        assert_eq!(Vector2::new(out[0], out[1]), single);
        assert_eq!((out[2], out[3]), (0.1, 0.5));

        let far = (Vector2::new(100.0, 0.0), shape);
        let both = project_timestep(0, &block, &[(c, shape), far], &b).unwrap();
        assert_eq!(both, out);
    }

    #[test]
    fn overlapping_ellipses_are_all_cleared() {
        let b = InputBounds::default();
        let shape = EllipseShape::new(0.0, 5.0, 2.5);
        let ellipses = [(Vector2::new(0.0, 0.0), shape), (Vector2::new(4.0, 0.0), shape)];
        let out = project_timestep(0, &Vector4::new(2.0, 0.3, 0.0, 0.0), &ellipses, &b).unwrap();
        let p = Vector2::new(out[0], out[1]);
        for (c, s) in &ellipses {
            assert!(s.violation(&p, c) <= 1e-6);
        }
    }

    #[test]
    fn symmetric_overlap_reports_nonconvergence() {
        // Two unit circles 1.5 apart: projecting out of one along the axis
        // lands inside the other, forever.
        let b = InputBounds::default();
        let circle = EllipseShape::new(0.0, 1.0, 1.0);
        let ellipses = [(Vector2::new(-0.75, 0.0), circle), (Vector2::new(0.75, 0.0), circle)];
        let res = project_timestep(7, &Vector4::new(0.1, 0.0, 0.0, 0.0), &ellipses, &b);
        match res {
            Err(Error::NonConvergence { tau, sweeps }) => assert_eq!((tau, sweeps), (7, MAX_PROJECTION_SWEEPS)),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
