//! Euler rollouts of lake models under control policies.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{step_discrete, TychasticSystem};
use crate::grid::CellSet;
use crate::solver::{bits, RegulationMap};
use crate::{Error, Result};

/// How a regulation-map selector picks among viable controls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorRule {
    Minimum,
    Maximum,
    /// The first viable sample in ascending index order.
    #[default]
    FirstViable,
}

#[derive(Clone, Debug)]
pub enum Policy {
    Constant(f64),
    /// `(start time, u)` pairs with strictly increasing times; the control
    /// in force at time `t` is the last one started at or before `t`.
    Schedule(Vec<(f64, f64)>),
    /// Reads viable controls of the cell nearest to the current state.
    Selector { map: Arc<RegulationMap>, rule: SelectorRule },
}

impl Policy {
    pub fn schedule(phases: Vec<(f64, f64)>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::ContractViolation("empty schedule".into()));
        }
        if phases.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::ContractViolation("schedule times must increase strictly".into()));
        }
        Ok(Policy::Schedule(phases))
    }

    /// A schedule switching control whenever the inflow reaches the next
    /// target: phase `k` applies `u_k` for the fewest Euler steps of size
    /// `tau` that take `L` to `l_k` or past it. `L` is affine in the
    /// control, so the switch steps are known in advance.
    pub fn inflow_targets(l0: f64, phases: &[(f64, f64)], tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::ContractViolation(format!("time step must be positive, got {tau}")));
        }
        let mut step = 0usize;
        let mut l = l0;
        let mut out = Vec::with_capacity(phases.len());
        for &(u, target) in phases {
            let steps = ((target - l) / (u * tau) - 1e-9).ceil();
            if !(steps >= 1.0) {
                return Err(Error::ContractViolation(format!(
                    "control {u} does not move the inflow from {l} to {target}"
                )));
            }
            out.push((step as f64 * tau, u));
            step += steps as usize;
            l += steps * u * tau;
        }
        Self::schedule(out)
    }

    /// Control at time `t` and state `x`; `None` when a selector finds no
    /// viable control.
    pub fn control(&self, t: f64, x: &[f64]) -> Option<f64> {
        match self {
            Policy::Constant(u) => Some(*u),
            Policy::Schedule(phases) => {
                let k = phases.partition_point(|&(start, _)| start <= t + 1e-12);
                Some(phases[k.saturating_sub(1)].1)
            }
            Policy::Selector { map, rule } => {
                let cell = map.grid().project_flat(x)?;
                let mask = map.mask(cell);
                let controls = map.controls();
                let mut viable = bits(mask).map(|i| controls[i]);
                match rule {
                    SelectorRule::FirstViable => viable.next(),
                    SelectorRule::Minimum => viable.min_by(f64::total_cmp),
                    SelectorRule::Maximum => viable.max_by(f64::total_cmp),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitReason {
    /// A state fell outside the stop set.
    LeftSet,
    /// The selector found no viable control.
    NoViableControl,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub tau: f64,
    pub states: Vec<[f64; 2]>,
    /// Control applied from each state; one shorter than `states`.
    pub controls: Vec<f64>,
    /// Membership of each state in the stop set.
    pub inside: Vec<bool>,
    pub exit: Option<ExitReason>,
}

impl Trajectory {
    pub fn exited(&self) -> bool {
        self.exit.is_some()
    }

    /// `t,L,P,u,inside` rows; the final state has no control.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,L,P,u,inside\n");
        for (k, x) in self.states.iter().enumerate() {
            let t = k as f64 * self.tau;
            let u = self.controls.get(k).map(|u| u.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{t},{},{},{u},{}", x[0], x[1], self.inside[k]);
        }
        out
    }
}

/// Euler rollout for at most `horizon` steps. With a stop set, the rollout
/// ends at the first state whose nearest cell is outside it.
pub fn simulate(
    system: &dyn TychasticSystem,
    tyche: &[f64],
    x0: [f64; 2],
    policy: &Policy,
    tau: f64,
    horizon: usize,
    stop: Option<&CellSet>,
) -> Result<Trajectory> {
    rollout(system, tyche, x0, policy, tau, horizon, stop, false)
}

/// Rollout of the grid system the solver works with: every state is
/// replaced by its nearest node in the stop set's grid before the next step.
pub fn simulate_on_grid(
    system: &dyn TychasticSystem,
    tyche: &[f64],
    x0: [f64; 2],
    policy: &Policy,
    tau: f64,
    horizon: usize,
    stop: &CellSet,
) -> Result<Trajectory> {
    rollout(system, tyche, x0, policy, tau, horizon, Some(stop), true)
}

#[allow(clippy::too_many_arguments)]
fn rollout(
    system: &dyn TychasticSystem,
    tyche: &[f64],
    x0: [f64; 2],
    policy: &Policy,
    tau: f64,
    horizon: usize,
    stop: Option<&CellSet>,
    snap: bool,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::ContractViolation("horizon must be at least one step".into()));
    }
    if system.state_dim() != 2 {
        return Err(Error::ContractViolation("trajectories are two-dimensional".into()));
    }
    let in_set = |x: &[f64; 2]| match stop {
        Some(set) => set.grid().project_flat(x).is_some_and(|c| set.contains(c)),
        None => true,
    };
    let mut traj = Trajectory {
        tau,
        states: vec![x0],
        controls: Vec::with_capacity(horizon),
        inside: vec![in_set(&x0)],
        exit: None,
    };
    if !traj.inside[0] {
        traj.exit = Some(ExitReason::LeftSet);
        return Ok(traj);
    }
    let mut x = x0;
    let mut next = [0.0; 2];
    for step in 0..horizon {
        let Some(u) = policy.control(step as f64 * tau, &x) else {
            traj.exit = Some(ExitReason::NoViableControl);
            break;
        };
        step_discrete(system, &x, u, tyche, tau, &mut next).map_err(|_| Error::NonFiniteTrajectory { step })?;
        if !(next[0].is_finite() && next[1].is_finite()) {
            return Err(Error::NonFiniteTrajectory { step });
        }
        x = next;
        if snap {
            if let Some(c) = stop.and_then(|set| set.grid().project_flat(&x)) {
                let node = stop.expect("snapping needs a grid").grid().node(c);
                x = [node[0], node[1]];
            }
        }
        traj.controls.push(u);
        traj.states.push(x);
        let inside = in_set(&x);
        traj.inside.push(inside);
        if !inside {
            traj.exit = Some(ExitReason::LeftSet);
            break;
        }
    }
    Ok(traj)
}
