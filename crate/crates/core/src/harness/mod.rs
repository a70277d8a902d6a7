//! Scenario definitions, configuration files, benchmark trials and CSV output.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, AdmmSettings};
use crate::barrier::{barrier_solve, BarrierSettings};
use crate::constraints::{ConstraintSet, HeadingConvention, InputBounds, Obstacle};
use crate::costs::{CostWeights, Reference, TrackingObjective};
use crate::error::{Error, Result};
use crate::report::{Method, Problem, SolveReport, SolveStatus};
use crate::vehicle::{State, VehicleParams};

mod output;

pub use output::{emit_iterates, write_comparison, write_residuals, write_timing, write_trajectory, SnapshotPolicy};

pub const TRAJECTORY_HEADER: &str = "tau,t,px,py,theta,v,w,a";
pub const RESIDUAL_HEADER: &str = "iter,residual_inf,residual_2,cost,ilqr_iters,seconds";
pub const TIMING_HEADER: &str = "method,scenario,trial,seconds,status,final_cost,max_violation";

/// Everything needed to reproduce one planning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Number of control stamps.
    pub horizon: usize,
    /// Reserved; the solvers are deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub heading_convention: HeadingConvention,
    pub ego: State,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub weights: CostWeights,
    pub reference: Reference,
    #[serde(default)]
    pub bounds: InputBounds,
    #[serde(default)]
    pub admm: AdmmSettings,
    #[serde(default)]
    pub barrier: BarrierSettings,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !self.ego.is_finite() {
            return Err(Error::Config("initial state must be finite".into()));
        }
        self.vehicle.validate()?;
        self.weights.validate()?;
        self.reference.validate()?;
        self.bounds.validate()?;
        for o in &self.obstacles {
            o.validate()?;
        }
        self.admm.validate()?;
        self.barrier.validate()
    }

    pub fn problem(&self) -> Problem {
        let mut constraints = ConstraintSet::new(self.bounds, self.obstacles.clone(), self.vehicle.time_step);
        constraints.heading_convention = self.heading_convention;
        Problem {
            x0: self.ego,
            horizon: self.horizon,
            vehicle: self.vehicle,
            objective: TrackingObjective::new(self.weights, self.reference.clone()),
            constraints,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

// Hand-tuned: a soft lateral pull with a heavy terminal term lets the keep-out
// constraint shape the path instead of fighting the tracking cost.
fn scenario_weights(id: u32) -> CostWeights {
    match id {
        1 => CostWeights {
            position: 0.03,
            velocity: 0.2,
            steering: 1.0,
            acceleration: 2.0,
            terminal_scale: 100.0,
        },
        _ => CostWeights {
            position: 0.03,
            velocity: 0.5,
            steering: 30.0,
            acceleration: 0.3,
            terminal_scale: 10.0,
        },
    }
}

/// The two reference driving scenarios.
///
/// 1. A parked car at (15, -1) on the ego lane; the ego starts at 4 m/s and
///    tracks `py = 0` at 8 m/s.
/// 2. A lane change to `py = 4` with a slower car ahead in the ego lane and a
///    car alongside in the target lane; no speed tracking.
pub fn builtin_scenario(id: u32) -> Result<ScenarioConfig> {
    let ellipse = |center, velocity| Obstacle {
        center,
        velocity,
        heading: 0.0,
        semi_major: 5.0,
        semi_minor: 2.5,
    };
    let base = |name: &str, ego, reference, obstacles| ScenarioConfig {
        weights: scenario_weights(id),
        name: name.to_string(),
        horizon: 60,
        seed: 0,
        heading_convention: HeadingConvention::Obstacle,
        ego,
        vehicle: VehicleParams::default(),
        reference,
        bounds: InputBounds::default(),
        admm: AdmmSettings::default(),
        // Eight tightenings end at t = 5^7, where the barrier's suboptimality
        // bound (constraint count / t) is below 1e-2.
        barrier: BarrierSettings {
            outer_iters: 8,
            ..BarrierSettings::default()
        },
        obstacles,
    };
    match id {
        1 => Ok(base(
            "scenario-1",
            State::new(0.0, 0.0, 0.0, 4.0),
            Reference::lateral(0.0, Some(8.0)),
            vec![ellipse([15.0, -1.0], [0.0, 0.0])],
        )),
        2 => Ok(base(
            "scenario-2",
            State::new(0.0, 0.0, 0.0, 8.0),
            Reference::lateral(4.0, None),
            vec![ellipse([20.0, 0.0], [3.0, 0.0]), ellipse([0.0, 4.0], [6.0, 0.0])],
        )),
        other => Err(Error::UnknownScenario(other)),
    }
}

/// Runs the configured solver once.
pub fn solve_once(config: &ScenarioConfig, method: Method) -> Result<SolveReport> {
    let problem = config.problem();
    match method {
        Method::Admm => admm_solve(&problem, &config.admm),
        Method::Barrier => barrier_solve(&problem, &config.barrier),
    }
}

/// One row of the timing table.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: Method,
    pub scenario: String,
    /// 1-based.
    pub trial: usize,
    /// Wall-clock of the solver call only.
    pub seconds: f64,
    pub status: SolveStatus,
    pub final_cost: f64,
    pub max_violation: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub trials: usize,
    pub snapshots: SnapshotPolicy,
    /// Fill the `seconds` column of the residual file. Off by default so that
    /// repeated runs produce identical files.
    pub record_iteration_times: bool,
    /// Run trials on the rayon pool; timings then include contention.
    pub parallel_trials: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            trials: 1,
            snapshots: SnapshotPolicy::FirstSecondLast,
            record_iteration_times: false,
            parallel_trials: false,
        }
    }
}

/// Trials of one method plus the report of the last trial.
#[derive(Debug)]
pub struct MethodRun {
    pub records: Vec<TrialRecord>,
    pub last_report: Option<SolveReport>,
}

impl MethodRun {
    pub fn any_failed(&self) -> bool {
        self.records.iter().any(|r| r.status == SolveStatus::Failed)
    }

    pub fn mean_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.seconds).sum::<f64>() / self.records.len().max(1) as f64
    }
}

fn trial(config: &ScenarioConfig, method: Method, index: usize) -> (TrialRecord, Option<SolveReport>) {
    let outcome = solve_once(config, method);
    let (seconds, status, final_cost, max_violation, failure, report) = match outcome {
        Ok(report) => (
            report.seconds,
            report.status,
            report.cost,
            report.max_violation,
            report.failure.as_ref().map(|e| e.to_string()),
            Some(report),
        ),
        Err(e) => (0.0, SolveStatus::Failed, f64::NAN, f64::NAN, Some(e.to_string()), None),
    };
    let record = TrialRecord {
        method,
        scenario: config.name.clone(),
        trial: index,
        seconds,
        status,
        final_cost,
        max_violation,
        failure,
    };
    (record, report)
}

/// Runs `options.trials` identical solves. Solver failures are recorded per
/// trial; only configuration errors abort.
pub fn run_trials(config: &ScenarioConfig, method: Method, options: &RunOptions) -> Result<MethodRun> {
    config.validate()?;
    let trials = options.trials.max(1);
    let mut results: Vec<(TrialRecord, Option<SolveReport>)> = if options.parallel_trials {
        (1..=trials).into_par_iter().map(|i| trial(config, method, i)).collect()
    } else {
        (1..=trials).map(|i| trial(config, method, i)).collect()
    };
    let last_report = results.last_mut().and_then(|(_, r)| r.take());
    Ok(MethodRun {
        records: results.into_iter().map(|(r, _)| r).collect(),
        last_report,
    })
}

/// Runs the trials and writes every artifact under `output_dir`:
/// `config.toml`, `timing.csv`, and per method `<method>/residuals.csv` plus
/// the selected `<method>/trajectory_iterNNN.csv` snapshots.
pub fn run(config: &ScenarioConfig, methods: &[Method], options: &RunOptions, output_dir: &Path) -> Result<Vec<MethodRun>> {
    config.validate()?;
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    config.save(output_dir.join("config.toml"))?;
    let mut runs = Vec::with_capacity(methods.len());
    for &method in methods {
        let run = run_trials(config, method, options)?;
        if let Some(report) = &run.last_report {
            let dir = output_dir.join(method.as_str());
            emit_iterates(report, &config.problem(), options, &dir)?;
        }
        runs.push(run);
    }
    let records: Vec<TrialRecord> = runs.iter().flat_map(|r| r.records.iter().cloned()).collect();
    write_timing(&records, &output_dir.join("timing.csv"))?;
    if methods.len() > 1 {
        write_comparison(&runs, &output_dir.join("comparison.csv"))?;
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_scenario_one() {
        let s = builtin_scenario(1).unwrap();
        assert_eq!(s.obstacles.len(), 1);
        assert_eq!(s.obstacles[0].center, [15.0, -1.0]);
        assert_eq!(s.obstacles[0].velocity, [0.0, 0.0]);
        assert_eq!((s.obstacles[0].semi_major, s.obstacles[0].semi_minor), (5.0, 2.5));
        assert_eq!(s.ego, State::new(0.0, 0.0, 0.0, 4.0));
        assert_eq!(s.reference, Reference::lateral(0.0, Some(8.0)));
        assert_eq!((s.horizon, s.vehicle.time_step), (60, 0.1));
        assert_eq!((s.admm.sigma, s.admm.max_iters, s.admm.ilqr.max_iters), (10.0, 20, 100));
        assert_eq!(s.bounds, InputBounds::default());
        s.validate().unwrap();
    }

    #[test]
    fn builtin_scenario_two() {
        let s = builtin_scenario(2).unwrap();
        let b = s.obstacles[1];
        assert_eq!(b.center, [0.0, 4.0]);
        assert_eq!(b.velocity, [6.0, 0.0]);
        assert_eq!(s.obstacles[0].center, [20.0, 0.0]);
        assert_eq!(s.obstacles[0].velocity, [3.0, 0.0]);
        assert_eq!(s.ego.v, 8.0);
        assert_eq!(s.reference.speed, None);
        s.validate().unwrap();
    }

    #[test]
    fn unknown_scenario() {
        assert!(matches!(builtin_scenario(3), Err(Error::UnknownScenario(3))));
    }

    #[test]
    fn config_round_trip() {
        for id in [1, 2] {
            let s = builtin_scenario(id).unwrap();
            let text = s.to_toml().unwrap();
            assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), s);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut s = builtin_scenario(1).unwrap();
        s.horizon = 0;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        assert!(matches!(ScenarioConfig::from_toml("horizon = 'x'"), Err(Error::Config(_))));
    }
}
