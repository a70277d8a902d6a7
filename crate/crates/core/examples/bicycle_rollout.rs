//! Simulate the kinematic bicycle under a constant steer and check its
//! Jacobians against central differences.

use admm_ilqr::ilqr::Trajectory;
use admm_ilqr::vehicle::{Control, State, VehicleParams};

fn main() -> admm_ilqr::Result<()> {
    let vehicle = VehicleParams::default();
    let x0 = State::new(0.0, 0.0, 0.0, 6.0);
    let controls = vec![Control::new(0.15, 0.5).to_vector(); 40];
    let traj = Trajectory::rollout(&vehicle, &x0.to_vector(), &controls)?;

    println!("tau      px      py   theta       v");
    for tau in (0..=traj.horizon()).step_by(8) {
        let x = traj.state(tau);
        println!("{tau:>3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}", x.px, x.py, x.theta, x.v);
    }

    let (x, u) = (State::new(1.0, 2.0, 0.3, 7.0), Control::new(0.2, -1.0));
    let (fx, _) = vehicle.jacobians(&x, &u)?;
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for j in 0..4 {
        let (mut hi, mut lo) = (x.to_vector(), x.to_vector());
        hi[j] += eps;
        lo[j] -= eps;
        let d = (vehicle.step(&State::from_vector(&hi), &u)?.to_vector()
            - vehicle.step(&State::from_vector(&lo), &u)?.to_vector())
            / (2.0 * eps);
        worst = worst.max((d - fx.column(j)).amax());
    }
    println!("state Jacobian vs central differences: {worst:.1e}");
    Ok(())
}
