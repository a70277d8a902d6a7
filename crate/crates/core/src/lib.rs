//! Constrained trajectory optimization for on-road vehicles.
//!
//! A kinematic bicycle model is steered along a reference by iterative LQR,
//! while steering/acceleration limits and moving elliptical keep-out regions
//! are enforced through an ADMM consensus split: iLQR handles the smooth,
//! dynamics-constrained part, and a per-stamp projection handles the
//! inequality constraints. A log-barrier constrained iLQR is included as a
//! baseline, along with the two reference driving scenarios and a benchmark
//! harness that writes CSV output.
//!
//! ```no_run
//! use admm_ilqr::harness::builtin_scenario;
//!
//! let scenario = builtin_scenario(1).unwrap();
//! let report = admm_ilqr::admm::admm_solve(&scenario.problem(), &scenario.admm).unwrap();
//! println!("{:?} after {} iterations", report.status, report.iterations.len());
//! ```

pub mod admm;
pub mod barrier;
pub mod constraints;
pub mod costs;
pub mod error;
pub mod harness;
pub mod ilqr;
pub mod report;
pub mod vehicle;

pub use error::{Error, Result};

/// `(px, py, theta, v)`
pub type StateVec = nalgebra::Vector4<f64>;
/// `(w, a)`
pub type ControlVec = nalgebra::Vector2<f64>;
