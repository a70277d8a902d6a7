//! iLQR on a linear-quadratic problem converges in one step to the Riccati
//! solution; on the vehicle it needs a handful of iterations.

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector4};

use admm_ilqr::costs::{CostWeights, Reference, TrackingObjective};
use admm_ilqr::ilqr::linear::{LinearDynamics, QuadraticObjective};
use admm_ilqr::ilqr::{self, IlqrSettings};
use admm_ilqr::vehicle::{State, VehicleParams};
use admm_ilqr::ControlVec;

fn main() -> admm_ilqr::Result<()> {
    // Two decoupled double integrators.
    let dt = 0.1;
    let mut a = Matrix4::identity();
    a[(0, 1)] = dt;
    a[(2, 3)] = dt;
    let mut b = Matrix4x2::zeros();
    b[(1, 0)] = dt;
    b[(3, 1)] = dt;
    let dynamics = LinearDynamics::new(a, b);
    let objective = QuadraticObjective {
        q: Matrix4::identity(),
        r: Matrix2::identity() * 0.1,
        qf: Matrix4::identity() * 50.0,
        ..QuadraticObjective::zeros()
    };
    let x0 = Vector4::new(1.0, 0.0, -2.0, 0.5);
    let sol = ilqr::solve(&x0, &objective, &dynamics, &IlqrSettings::default(), &vec![ControlVec::zeros(); 50])?;
    println!(
        "linear-quadratic: {:?} after {} iterations, cost {:.6} -> {:.6}",
        sol.status,
        sol.iterations,
        sol.cost_history[0],
        sol.cost()
    );

    let vehicle = VehicleParams::default();
    let tracking = TrackingObjective::new(CostWeights::default(), Reference::lateral(2.0, Some(8.0)));
    let start = State::new(0.0, 0.0, 0.0, 4.0).to_vector();
    let sol = ilqr::solve(&start, &tracking, &vehicle, &IlqrSettings::default(), &vec![ControlVec::zeros(); 60])?;
    let end = sol.trajectory.state(60);
    println!(
        "vehicle: {:?} after {} iterations, final py {:.3}, v {:.3}",
        sol.status, sol.iterations, end.py, end.v
    );
    Ok(())
}
