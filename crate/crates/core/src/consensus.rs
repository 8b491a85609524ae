//! Several members: individual kernels, intersections, consensus checks
//! and counterexamples to "the intersection is a consensus".

use serde::Serialize;

use crate::dynamics::TychasticSystem;
use crate::grid::CellSet;
use crate::par::{self, Execution};
use crate::scenario::Scenario;
use crate::solver::{bits, guaranteed_kernel, DiscreteProblem, RegulationMap, SolveReport, TransitionTable};
use crate::trajectory::{simulate_on_grid, ExitReason, Policy, SelectorRule, Trajectory};
use crate::{Error, Result};

/// Witness cells kept per member in a verdict.
pub const MAX_WITNESSES: usize = 64;

/// Default rollout length when searching for counterexamples.
pub const DEFAULT_HORIZON: usize = 200;

#[derive(Clone, Debug)]
pub struct MemberResult {
    pub id: String,
    /// Solved over the member's own tyche box rather than a single model.
    pub guaranteed: bool,
    pub report: SolveReport,
}

/// Kernel of every member on the scenario grid.
pub fn member_kernels(scenario: &Scenario, exec: Execution) -> Result<Vec<MemberResult>> {
    let indices: Vec<usize> = (0..scenario.members.len()).collect();
    par::map_items(exec, &indices, |&i| {
        let member = &scenario.members[i];
        let problem = scenario.member_problem(i, exec);
        guaranteed_kernel(&problem)
            .map(|report| MemberResult { id: member.id.clone(), guaranteed: !member.is_point(), report })
            .map_err(|e| Error::Member { id: member.id.clone(), source: Box::new(e) })
    })
    .into_iter()
    .collect()
}

/// Intersection of the members' kernels.
pub fn kernel_intersection(results: &[MemberResult]) -> Result<CellSet> {
    let (first, rest) =
        results.split_first().ok_or_else(|| Error::ContractViolation("no member kernels".into()))?;
    rest.iter().try_fold(first.report.kernel.clone(), |acc, r| acc.intersection(&r.report.kernel))
}

/// A member's discrete problem, named.
#[derive(Clone, Copy, Debug)]
pub struct MemberProblem<'a> {
    pub id: &'a str,
    pub problem: &'a DiscreteProblem,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberVerdict {
    pub id: String,
    /// Every cell of the candidate has a shared control keeping this
    /// member's successors in the candidate.
    pub viable: bool,
    pub failing_cells: usize,
    /// Up to [`MAX_WITNESSES`] failing cells, ascending.
    pub witnesses: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsensusVerdict {
    #[serde(skip)]
    pub candidate: CellSet,
    pub candidate_cells: usize,
    pub members: Vec<MemberVerdict>,
    /// Every candidate cell has at least one shared control.
    pub coverage: bool,
    pub uncovered_cells: usize,
    /// Some single shared control works for all members at once, at every
    /// cell. Stronger than the per-member condition.
    pub joint: bool,
    /// The candidate is empty, so the verdict holds vacuously.
    pub degenerate: bool,
    pub consensus: bool,
}

/// Checks that `candidate` is viable for every member under `shared`.
///
/// A member passes when each candidate cell has some control of `shared`
/// whose successors for that member (over all its tyche samples, with the
/// member problem's safety margin) stay in the candidate.
pub fn check_consensus(
    candidate: &CellSet,
    members: &[MemberProblem<'_>],
    shared: &RegulationMap,
) -> Result<ConsensusVerdict> {
    if shared.grid().as_ref() != candidate.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let cells: Vec<usize> = candidate.iter().collect();
    let uncovered_cells = cells.iter().filter(|&&c| shared.mask(c) == 0).count();
    let mut joint_masks: Vec<u64> = cells.iter().map(|&c| shared.mask(c)).collect();
    let mut verdicts = Vec::with_capacity(members.len());
    for m in members {
        if m.problem.grid.as_ref() != candidate.grid().as_ref() {
            return Err(Error::GridMismatch);
        }
        if !candidate.is_subset(&m.problem.constraint)? {
            return Err(Error::ContractViolation(format!(
                "candidate leaves the constraint set of member `{}`",
                m.id
            )));
        }
        let table = TransitionTable::build(m.problem).map_err(|e| Error::Member { id: m.id.into(), source: Box::new(e) })?;
        let target = table.target_for(candidate);
        let exec = m.problem.execution;
        let masks: Vec<u64> = par::map_ranges(exec, cells.len(), 1024, |range| {
            range.map(|k| table.viable_mask_among(cells[k], shared.mask(cells[k]), &target)).collect::<Vec<_>>()
        })
        .concat();
        let failing: Vec<usize> = cells.iter().zip(&masks).filter(|(_, &m)| m == 0).map(|(&c, _)| c).collect();
        for (j, m) in joint_masks.iter_mut().zip(&masks) {
            *j &= m;
        }
        verdicts.push(MemberVerdict {
            id: m.id.to_string(),
            viable: failing.is_empty(),
            failing_cells: failing.len(),
            witnesses: failing.into_iter().take(MAX_WITNESSES).collect(),
        });
    }
    let coverage = uncovered_cells == 0;
    Ok(ConsensusVerdict {
        candidate: candidate.clone(),
        candidate_cells: cells.len(),
        consensus: coverage && verdicts.iter().all(|v| v.viable),
        members: verdicts,
        coverage,
        uncovered_cells,
        joint: joint_masks.iter().all(|&m| m != 0),
        degenerate: cells.is_empty(),
    })
}

/// A member trajectory leaving the candidate set under the shared map.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub cell: usize,
    pub state: Vec<f64>,
    pub member: String,
    /// Shared controls available at the start cell.
    pub controls: Vec<f64>,
    /// Tyche sample of the member used for the rollout.
    pub tyche: Vec<f64>,
    pub trajectory: Trajectory,
}

impl Witness {
    fn rank(&self) -> u8 {
        match (self.trajectory.exit, self.controls.len()) {
            (Some(ExitReason::LeftSet), 1) => 0,
            (Some(ExitReason::LeftSet), _) => 1,
            _ => 2,
        }
    }
}

/// Scans the boundary of `candidate` and rolls out every member's grid
/// system from each boundary node under the first viable shared control,
/// for at most `horizon` steps.
///
/// Returns the best exiting rollout: one leaving the set from a cell with
/// a single shared control if any, then any leaving the set, then one that
/// runs out of shared controls. Ties go to the lowest cell, then member
/// order.
pub fn find_counterexample(
    candidate: &CellSet,
    members: &[MemberProblem<'_>],
    shared: &RegulationMap,
    horizon: usize,
) -> Result<Option<Witness>> {
    if shared.grid().as_ref() != candidate.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let policy = Policy::Selector { map: std::sync::Arc::new(shared.clone()), rule: SelectorRule::FirstViable };
    let grid = candidate.grid().clone();
    let boundary: Vec<usize> = candidate.boundary().iter().collect();
    let exec = members.first().map_or(Execution::Sequential, |m| m.problem.execution);
    let found = par::map_items(exec, &boundary, |&cell| -> Result<Option<Witness>> {
        let x = grid.node(cell);
        let mut best: Option<Witness> = None;
        for m in members {
            let system: &dyn TychasticSystem = m.problem.system.as_ref();
            for tyche in &m.problem.tyches {
                let traj = simulate_on_grid(system, tyche, [x[0], x[1]], &policy, m.problem.tau, horizon, candidate)?;
                if traj.exited() {
                    let w = Witness {
                        cell,
                        state: x.clone(),
                        member: m.id.to_string(),
                        controls: bits(shared.mask(cell)).map(|i| shared.controls()[i]).collect(),
                        tyche: tyche.clone(),
                        trajectory: traj,
                    };
                    if best.as_ref().is_none_or(|b| w.rank() < b.rank()) {
                        best = Some(w);
                    }
                    break;
                }
            }
        }
        Ok(best)
    });
    let mut best: Option<Witness> = None;
    for w in found {
        if let Some(w) = w? {
            if best.as_ref().is_none_or(|b| w.rank() < b.rank()) {
                best = Some(w);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Family, ModelParams, ParametricLake};
    use crate::grid::{Axis, Edge, Grid};
    use crate::solver::intersect_regulation;
    use std::sync::Arc;

    fn problem(b: f64) -> DiscreteProblem {
        let grid = Arc::new(
            Grid::new(vec![
                Axis::new(0.1, 2.0, 41).with_edges(Edge::Exit, Edge::Clamp),
                Axis::new(0.0, 1.4, 41).with_edges(Edge::Clamp, Edge::Exit),
            ])
            .unwrap(),
        );
        let lake = ParametricLake::point(Family::Sigmoid, ModelParams::sigmoid(b, 1.0, 8.0, 1.0));
        let controls = (0..11).map(|k| -0.9 + 0.18 * k as f64).collect();
        DiscreteProblem::new(Arc::new(lake), CellSet::full(grid), controls, vec![vec![]], 0.1)
    }

    #[test]
    fn own_kernel_is_a_consensus_for_one_member() {
        let p = problem(0.7);
        let r = guaranteed_kernel(&p).unwrap();
        let v = check_consensus(&r.kernel, &[MemberProblem { id: "a", problem: &p }], &r.regulation).unwrap();
        assert!(v.consensus && v.coverage && v.joint && !v.degenerate);
        assert!(find_counterexample(&r.kernel, &[MemberProblem { id: "a", problem: &p }], &r.regulation, 50)
            .unwrap()
            .is_none());
    }

    #[test]
    fn empty_candidate_is_degenerate() {
        let p = problem(0.7);
        let empty = CellSet::empty(p.grid.clone());
        let map = RegulationMap::empty(p.grid.clone(), p.controls.clone());
        let v = check_consensus(&empty, &[MemberProblem { id: "a", problem: &p }], &map).unwrap();
        assert!(v.consensus && v.degenerate);
    }

    #[test]
    fn uncovered_cells_fail_coverage() {
        let p = problem(0.7);
        let r = guaranteed_kernel(&p).unwrap();
        let mut map = r.regulation.clone();
        let c = r.kernel.iter().next().unwrap();
        map.set_mask(c, 0);
        let v = check_consensus(&r.kernel, &[MemberProblem { id: "a", problem: &p }], &map).unwrap();
        assert!(!v.coverage && !v.consensus);
        assert_eq!(v.uncovered_cells, 1);
        assert_eq!(v.members[0].witnesses, vec![c]);
    }

    #[test]
    fn intersection_verdict_matches_counterexample_search() {
        let (pa, pb) = (problem(0.7), problem(0.75));
        let (ra, rb) = (guaranteed_kernel(&pa).unwrap(), guaranteed_kernel(&pb).unwrap());
        let h = ra.kernel.intersection(&rb.kernel).unwrap();
        let shared = intersect_regulation(&[&ra.regulation, &rb.regulation], &h).unwrap();
        let members = [MemberProblem { id: "a", problem: &pa }, MemberProblem { id: "b", problem: &pb }];
        let v = check_consensus(&h, &members, &shared).unwrap();
        let w = find_counterexample(&h, &members, &shared, 200).unwrap();
        if v.consensus {
            assert!(w.is_none());
        }
        if let Some(w) = w {
            assert!(h.contains(w.cell));
            assert!(w.trajectory.exited());
        }
    }

    #[test]
    fn candidate_outside_constraint_is_rejected() {
        let mut p = problem(0.7);
        let full = p.constraint.clone();
        p.constraint = CellSet::from_nodes(p.grid.clone(), |x| x[1] < 1.0);
        let map = RegulationMap::empty(p.grid.clone(), p.controls.clone());
        assert!(check_consensus(&full, &[MemberProblem { id: "a", problem: &p }], &map).is_err());
    }
}
