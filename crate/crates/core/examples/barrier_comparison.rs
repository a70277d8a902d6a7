//! ADMM against the log-barrier baseline.
//!
//! The barrier needs a strictly feasible start, which the zero-control
//! rollout of the stock scenarios is not. Starting slower makes it feasible.

use admm_ilqr::harness::{builtin_scenario, run_trials, RunOptions};
use admm_ilqr::report::Method;

fn main() -> admm_ilqr::Result<()> {
    let stock = builtin_scenario(1)?;
    let refused = run_trials(&stock, Method::Barrier, &RunOptions::default())?;
    println!("stock start: {}", refused.records[0].failure.as_deref().unwrap_or("accepted"));

    let options = RunOptions {
        trials: 10,
        ..RunOptions::default()
    };
    for (id, v0) in [(1, 0.0), (2, 4.0)] {
        let mut config = builtin_scenario(id)?;
        config.ego.v = v0;
        let admm = run_trials(&config, Method::Admm, &options)?;
        let barrier = run_trials(&config, Method::Barrier, &options)?;
        println!(
            "{} at {v0} m/s: ADMM {:.3} ms (cost {:.3}), barrier {:.3} ms (cost {:.3}), ratio {:.1}",
            config.name,
            admm.mean_seconds() * 1e3,
            admm.records[0].final_cost,
            barrier.mean_seconds() * 1e3,
            barrier.records[0].final_cost,
            barrier.mean_seconds() / admm.mean_seconds()
        );
    }
    Ok(())
}
