use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{MethodRun, RunOptions, TrialRecord, RESIDUAL_HEADER, TIMING_HEADER, TRAJECTORY_HEADER};
use crate::error::{Error, Result};
use crate::ilqr::Trajectory;
use crate::report::{Problem, SolveReport};

/// Tolerance on `|x[t+1] - f(x[t], u[t])|` checked before a trajectory is written.
const WRITE_DEFECT_TOLERANCE: f64 = 1e-8;

/// Which outer iterations get a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotPolicy {
    All,
    /// Iterations 1, 2 and the last one.
    FirstSecondLast,
}

impl FromStr for SnapshotPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_start_matches('{').trim_end_matches('}').replace(' ', "").as_str() {
            "all" => Ok(SnapshotPolicy::All),
            "1,2,last" => Ok(SnapshotPolicy::FirstSecondLast),
            other => Err(format!("unknown snapshot policy '{other}' (expected 'all' or '1,2,last')")),
        }
    }
}

impl SnapshotPolicy {
    pub fn selects(self, iteration: usize, last: usize) -> bool {
        match self {
            SnapshotPolicy::All => true,
            SnapshotPolicy::FirstSecondLast => iteration == 1 || iteration == 2 || iteration == last,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `traj` as `tau,t,px,py,theta,v,w,a`, leaving the controls of the
/// final row empty.
pub fn write_trajectory(traj: &Trajectory, problem: &Problem, path: &Path) -> Result<()> {
    let defect = traj.dynamics_defect(&problem.vehicle);
    if !(defect <= WRITE_DEFECT_TOLERANCE) {
        return Err(Error::Config(format!(
            "refusing to write {}: dynamics defect {defect:e} exceeds {WRITE_DEFECT_TOLERANCE:e}",
            path.display()
        )));
    }
    let h = problem.vehicle.time_step;
    let mut out = String::with_capacity(64 * (traj.states.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (tau, x) in traj.states.iter().enumerate() {
        let t = (tau as f64 * h * 1e9).round() / 1e9;
        let _ = write!(out, "{tau},{t},{},{},{},{},", x[0], x[1], x[2], x[3]);
        match traj.controls.get(tau) {
            Some(u) => {
                let _ = writeln!(out, "{},{}", u[0], u[1]);
            }
            None => out.push_str(",\n"),
        }
    }
    write_file(path, &out)
}

pub fn write_residuals(report: &SolveReport, record_times: bool, path: &Path) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::new();
    out.push_str(RESIDUAL_HEADER);
    out.push('\n');
    for r in &report.iterations {
        let seconds = if record_times { r.seconds.to_string() } else { String::new() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration,
            opt(r.residual_inf),
            opt(r.residual_2),
            r.cost,
            r.ilqr_iters,
            seconds
        );
    }
    write_file(path, &out)
}

/// Writes the selected trajectory snapshots and the residual history of one
/// solve into `dir`.
pub fn emit_iterates(report: &SolveReport, problem: &Problem, options: &RunOptions, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // Snapshots from an earlier, longer run would otherwise survive.
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let stale = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("trajectory_iter") && n.ends_with(".csv"));
        if stale {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    let last = report.snapshots.last().map_or(0, |(i, _)| *i);
    for (iteration, traj) in &report.snapshots {
        if options.snapshots.selects(*iteration, last) {
            write_trajectory(traj, problem, &dir.join(format!("trajectory_iter{iteration:03}.csv")))?;
        }
    }
    write_residuals(report, options.record_iteration_times, &dir.join("residuals.csv"))
}

pub fn write_timing(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(TIMING_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            r.scenario,
            r.trial,
            r.seconds,
            r.status.as_str(),
            r.final_cost,
            r.max_violation
        );
    }
    write_file(path, &out)
}

/// Side-by-side trial times for several methods with a trailing `mean` row.
pub fn write_comparison(runs: &[MethodRun], path: &Path) -> Result<()> {
    let mut out = String::from("trial");
    for run in runs {
        if let Some(first) = run.records.first() {
            let _ = write!(out, ",{}_seconds", first.method);
        }
    }
    out.push('\n');
    let rows = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
    for i in 0..rows {
        let _ = write!(out, "{}", i + 1);
        for run in runs {
            match run.records.get(i) {
                Some(r) if r.status != crate::report::SolveStatus::Failed => {
                    let _ = write!(out, ",{}", r.seconds);
                }
                _ => out.push_str(",failed"),
            }
        }
        out.push('\n');
    }
    out.push_str("mean");
    for run in runs {
        if run.any_failed() {
            out.push_str(",failed");
        } else {
            let _ = write!(out, ",{}", run.mean_seconds());
        }
    }
    out.push('\n');
    write_file(path, &out)
}
