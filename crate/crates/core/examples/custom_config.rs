//! Export a scenario, edit it, and run it from the file with full output.

use admm_ilqr::constraints::Obstacle;
use admm_ilqr::harness::{self, builtin_scenario, RunOptions, ScenarioConfig, SnapshotPolicy};
use admm_ilqr::report::Method;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("admm-ilqr-custom");
    std::fs::create_dir_all(&dir)?;

    let mut config = builtin_scenario(1)?;
    config.name = "two-parked-cars".into();
    config.obstacles.push(Obstacle::fixed([40.0, 3.0], 5.0, 2.5));
    let path = dir.join("scenario.toml");
    config.save(&path)?;

    let loaded = ScenarioConfig::load(&path)?;
    let options = RunOptions {
        snapshots: SnapshotPolicy::All,
        ..RunOptions::default()
    };
    let runs = harness::run(&loaded, &[Method::Admm], &options, &dir.join("out"))?;
    let record = &runs[0].records[0];
    println!(
        "{}: {} with cost {:.3}, output in {}",
        record.scenario,
        record.status.as_str(),
        record.final_cost,
        dir.join("out").display()
    );
    Ok(())
}
