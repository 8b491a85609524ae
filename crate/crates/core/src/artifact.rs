//! Output files of a solve and trajectory probes. The command line and the
//! HTTP service both go through here, so the bytes they write agree.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::ParametricLake;
use crate::grid::CellSet;
use crate::par::Execution;
use crate::scenario::{RunReport, Scenario};
use crate::solver::{guaranteed_kernel_observed, RegulationMap, SolveReport, SweepObserver};
use crate::trajectory::{simulate, simulate_on_grid, Policy, SelectorRule, Trajectory};
use crate::{Error, Result};

pub const RASTER_FILE: &str = "kernel.rst";
pub const REPORT_FILE: &str = "report.json";
pub const BOUNDARY_FILE: &str = "boundary.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

/// Steps simulated after the last demo phase starts.
const DEMO_TAIL: usize = 50;

/// Everything a solve writes to disk.
#[derive(Clone, Debug)]
pub struct SolveArtifacts {
    pub report: RunReport,
    pub raster: String,
    pub boundary: String,
    /// The scenario's demo rollout, when it has one.
    pub trajectory: Option<String>,
}

impl SolveArtifacts {
    pub fn report_json(&self) -> String {
        self.report.to_json()
    }

    /// `(file name, contents)` pairs in a fixed order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut files = vec![
            (RASTER_FILE, self.raster.clone()),
            (REPORT_FILE, self.report_json()),
            (BOUNDARY_FILE, self.boundary.clone()),
        ];
        if let Some(t) = &self.trajectory {
            files.push((TRAJECTORY_FILE, t.clone()));
        }
        files
    }
}

/// `viability` for a lone point member, `guaranteed` otherwise.
pub fn solve_kind(scenario: &Scenario) -> &'static str {
    match scenario.members.as_slice() {
        [m] if m.is_point() => "viability",
        _ => "guaranteed",
    }
}

/// Solves the scenario's group problem and renders its artifacts.
pub fn solve(scenario: &Scenario, exec: Execution, observer: &dyn SweepObserver) -> Result<(SolveReport, SolveArtifacts)> {
    let problem = scenario.group_problem(exec)?;
    let report = guaranteed_kernel_observed(&problem, observer)?;
    let artifacts = SolveArtifacts {
        report: RunReport::new(scenario, &problem, &report, solve_kind(scenario)),
        raster: report.kernel.to_raster(&scenario.hash),
        boundary: boundary_csv(&report.kernel),
        trajectory: demo_trajectory(scenario, &report.kernel)?.map(|t| t.to_csv()),
    };
    Ok((report, artifacts))
}

/// The first member's nominal model driven through the demo phases and
/// one pass of the cycle, stopping if it leaves `kernel`.
pub fn demo_trajectory(scenario: &Scenario, kernel: &CellSet) -> Result<Option<Trajectory>> {
    let Some(demo) = &scenario.file.demo else {
        return Ok(None);
    };
    let phases: Vec<(f64, f64)> = demo.phases.iter().chain(&demo.cycle).map(|p| (p[0], p[1])).collect();
    if phases.is_empty() {
        return Ok(None);
    }
    let policy = Policy::inflow_targets(demo.start[0], &phases, scenario.tau)?;
    let Policy::Schedule(switches) = &policy else { unreachable!("inflow targets build a schedule") };
    let last = switches.last().map_or(0.0, |s| s.0);
    let steps = (last / scenario.tau).round() as usize + DEMO_TAIL;
    let m = &scenario.members[0];
    let model = ParametricLake::point(m.family, m.nominal());
    simulate(&model, &[], demo.start, &policy, scenario.tau, steps, Some(kernel)).map(Some)
}

/// `L,P` node coordinates of the boundary cells in flat index order.
pub fn boundary_csv(set: &CellSet) -> String {
    let mut out = String::from("L,P\n");
    for cell in set.boundary().iter() {
        let x = set.grid().node(cell);
        let _ = writeln!(out, "{},{}", x[0], x[1]);
    }
    out
}

/// Control policy as written in probe requests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Constant(f64),
    /// `[start time, u]` pairs.
    Schedule(Vec<[f64; 2]>),
    /// Reads the regulation map of a solved kernel.
    Selector(SelectorRule),
}

/// A rollout request from one start state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub start: [f64; 2],
    pub policy: PolicySpec,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Only this member; all members when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member: Option<String>,
    /// Snap the state to its nearest node after every step.
    #[serde(default)]
    pub snap: bool,
}

fn default_steps() -> usize {
    200
}

#[derive(Clone, Debug, Serialize)]
pub struct MemberTrajectory {
    pub member: String,
    pub trajectory: Trajectory,
}

/// Rolls out every requested member's nominal model from `spec.start`.
/// With a kernel, states are flagged by membership and the rollout stops
/// on leaving it; the selector policy needs the kernel's regulation map.
pub fn probe(
    scenario: &Scenario,
    spec: &ProbeSpec,
    kernel: Option<(&CellSet, &RegulationMap)>,
) -> Result<Vec<MemberTrajectory>> {
    let policy = match &spec.policy {
        PolicySpec::Constant(u) => Policy::Constant(*u),
        PolicySpec::Schedule(phases) => Policy::schedule(phases.iter().map(|p| (p[0], p[1])).collect())?,
        PolicySpec::Selector(rule) => {
            let (_, map) = kernel.ok_or_else(|| Error::ContractViolation("the selector policy needs a solved kernel".into()))?;
            Policy::Selector { map: Arc::new(map.clone()), rule: *rule }
        }
    };
    let members: Vec<_> = match &spec.member {
        Some(id) => {
            let m = scenario
                .members
                .iter()
                .find(|m| &m.id == id)
                .ok_or_else(|| Error::ContractViolation(format!("no member `{id}`")))?;
            vec![m]
        }
        None => scenario.members.iter().collect(),
    };
    let stop = kernel.map(|(k, _)| k);
    members
        .into_iter()
        .map(|m| {
            let model = ParametricLake::point(m.family, m.nominal());
            let trajectory = match (spec.snap, stop) {
                (true, Some(k)) => simulate_on_grid(&model, &[], spec.start, &policy, scenario.tau, spec.steps, k)?,
                (true, None) => {
                    simulate_on_grid(&model, &[], spec.start, &policy, scenario.tau, spec.steps, &scenario.constraint)?
                }
                (false, _) => simulate(&model, &[], spec.start, &policy, scenario.tau, spec.steps, stop)?,
            };
            Ok(MemberTrajectory { member: m.id.clone(), trajectory })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Quiet;

    #[test]
    fn boundary_rows_are_boundary_nodes() {
        let s = Scenario::packaged("fig1").unwrap().with_nodes([41, 41]).unwrap();
        let (report, a) = solve(&s, Execution::Sequential, &Quiet).unwrap();
        let rows: Vec<&str> = a.boundary.lines().skip(1).collect();
        assert_eq!(rows.len(), report.kernel.boundary().count());
        let first = report.kernel.boundary().iter().next().unwrap();
        let x = s.grid.node(first);
        assert_eq!(rows[0], format!("{},{}", x[0], x[1]));
        assert_eq!(a.report.kind, "viability");
        assert_eq!(a.report.kernel_cells, report.kernel.count());
        let demo = a.trajectory.clone().expect("fig1 has a demo");
        assert!(demo.starts_with("t,L,P,u,inside\n0,0.5,0.4,"));
        assert_eq!(a.files().len(), 4);
    }

    #[test]
    fn selector_probe_needs_a_kernel() {
        let s = Scenario::packaged("fig1").unwrap();
        let spec = ProbeSpec {
            start: [0.5, 0.4],
            policy: PolicySpec::Selector(SelectorRule::FirstViable),
            steps: 10,
            member: None,
            snap: false,
        };
        assert!(probe(&s, &spec, None).is_err());
        let spec = ProbeSpec { policy: PolicySpec::Constant(0.0), member: Some("nobody".into()), ..spec };
        assert!(probe(&s, &spec, None).is_err());
    }

    #[test]
    fn probe_spec_round_trips() {
        let text = r#"{"start":[0.5,0.4],"policy":{"selector":"first-viable"},"steps":20}"#;
        let spec: ProbeSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.policy, PolicySpec::Selector(SelectorRule::FirstViable));
        assert!(!spec.snap);
        let back: ProbeSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
