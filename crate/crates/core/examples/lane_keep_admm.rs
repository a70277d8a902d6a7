//! Pass a parked car with ADMM and print the consensus residual per iteration.

use admm_ilqr::admm::admm_solve;
use admm_ilqr::harness::builtin_scenario;

fn main() -> admm_ilqr::Result<()> {
    let scenario = builtin_scenario(1)?;
    let report = admm_solve(&scenario.problem(), &scenario.admm)?;

    println!("iter  residual      cost  ilqr");
    for r in &report.iterations {
        println!(
            "{:>4}  {:>8.2e}  {:>8.3}  {:>4}",
            r.iteration,
            r.residual_inf.unwrap_or(f64::NAN),
            r.cost,
            r.ilqr_iters
        );
    }

    let closest = report
        .trajectory
        .states
        .iter()
        .map(|x| x[1])
        .fold(f64::INFINITY, f64::min);
    let end = report.trajectory.state(scenario.horizon);
    println!(
        "{}: lowest py {closest:.3}, final speed {:.3}, max violation {:.1e}",
        report.status.as_str(),
        end.v,
        report.max_violation
    );
    Ok(())
}
