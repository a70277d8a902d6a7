//! Change lanes between two moving cars.

use admm_ilqr::admm::admm_solve;
use admm_ilqr::harness::builtin_scenario;

fn main() -> admm_ilqr::Result<()> {
    let scenario = builtin_scenario(2)?;
    let problem = scenario.problem();
    let report = admm_solve(&problem, &scenario.admm)?;

    println!("   t      px     py      v  clearance");
    for tau in (0..=scenario.horizon).step_by(6) {
        let x = report.trajectory.state(tau);
        // Negative keep-out values mean the ego is outside every ellipse.
        let clearance = -problem
            .constraints
            .obstacle_violation(tau, &nalgebra::Vector2::new(x.px, x.py), x.theta);
        println!("{:>4.1} {:>7.2} {:>6.2} {:>6.2} {:>10.3}", tau as f64 * 0.1, x.px, x.py, x.v, clearance);
    }
    println!(
        "{} in {} iterations, {:.2} ms",
        report.status.as_str(),
        report.iterations.len(),
        report.seconds * 1e3
    );
    Ok(())
}
