//! Discrete viability and guaranteed viability kernels.
//!
//! The kernel is the largest fixed point of
//!
//! ```text
//! G_{n+1} = { c in G_n : exists u, for all v, cell(step(node(c), u, v)) in G_n }
//! ```
//!
//! starting from the constraint set. With a single tyche sample this is the
//! plain viability kernel. Sweeps are synchronous: every cell of `G_{n+1}` is
//! computed from `G_n` alone, so the result does not depend on how cells are
//! distributed over workers.
//!
//! Successor cells are precomputed once into a [`TransitionTable`]. For each
//! cell and control the table stores the set of successor cells over all
//! tyche samples as runs of consecutive flat indices. When every state axis
//! depends on either the control or the tyche but not both (true for all lake
//! models), the tyche part is shared by all controls and only a per-control
//! offset is stored.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dynamics::TychasticSystem;
use crate::grid::{CellSet, Edge, Grid, MAX_DIM};
use crate::par::{self, Execution};
use crate::{Error, Result};

/// Upper bound on control samples (regulation maps use one bit per control).
pub const MAX_CONTROLS: usize = 64;

const CELL_CHUNK: usize = 1024;
const WORD_CHUNK: usize = 256;

/// How the safety-dilation radius is applied to successor cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DilationMode {
    /// A successor is accepted when any cell within the radius is in the set.
    #[default]
    Optimistic,
    /// A successor is accepted only when every cell within the radius is in
    /// the set (the successor lies in the erosion of the set).
    Guaranteed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Safety {
    pub radius: usize,
    pub mode: DilationMode,
}

impl Safety {
    pub fn guaranteed(radius: usize) -> Self {
        Self { radius, mode: DilationMode::Guaranteed }
    }
}

/// A discretised (guaranteed) viability problem.
#[derive(Clone)]
pub struct DiscreteProblem {
    pub system: Arc<dyn TychasticSystem>,
    pub grid: Arc<Grid>,
    /// Discrete constraint set `K_d`.
    pub constraint: CellSet,
    /// Control samples, ascending.
    pub controls: Vec<f64>,
    /// Tyche samples; a single sample gives plain viability.
    pub tyches: Vec<Vec<f64>>,
    pub tau: f64,
    pub safety: Safety,
    /// Sweep cap; defaults to ten times the largest per-axis node count.
    pub max_iterations: Option<usize>,
    pub execution: Execution,
}

impl std::fmt::Debug for DiscreteProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteProblem")
            .field("grid", &self.grid)
            .field("constraint_cells", &self.constraint.count())
            .field("controls", &self.controls)
            .field("tyches", &self.tyches.len())
            .field("tau", &self.tau)
            .field("safety", &self.safety)
            .finish()
    }
}

impl DiscreteProblem {
    pub fn new(
        system: Arc<dyn TychasticSystem>,
        constraint: CellSet,
        controls: Vec<f64>,
        tyches: Vec<Vec<f64>>,
        tau: f64,
    ) -> Self {
        Self {
            system,
            grid: constraint.grid().clone(),
            constraint,
            controls,
            tyches,
            tau,
            safety: Safety::default(),
            max_iterations: None,
            execution: Execution::default(),
        }
    }

    pub fn with_safety(mut self, safety: Safety) -> Self {
        self.safety = safety;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ContractViolation(m));
        if self.controls.is_empty() {
            return bad("control sample list is empty".into());
        }
        if self.controls.len() > MAX_CONTROLS {
            return bad(format!("at most {MAX_CONTROLS} control samples are supported"));
        }
        if self.tyches.is_empty() {
            return bad("tyche sample list is empty".into());
        }
        if let Some(v) = self.tyches.iter().find(|v| v.len() != self.system.tyche_dim()) {
            return bad(format!(
                "tyche sample of dimension {} for a system with tyche dimension {}",
                v.len(),
                self.system.tyche_dim()
            ));
        }
        if !(self.tau > 0.0) {
            return bad(format!("time step must be positive, got {}", self.tau));
        }
        if self.system.state_dim() != self.grid.dim() {
            return bad("system and grid dimensions differ".into());
        }
        if self.constraint.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn iteration_cap(&self) -> usize {
        self.max_iterations
            .unwrap_or_else(|| 10 * self.grid.axes().iter().map(|a| a.nodes).max().unwrap_or(2))
    }
}

/// Per-sweep progress callback; returning `false` cancels the solve.
pub trait SweepObserver: Sync {
    fn on_sweep(&self, iteration: usize, removed: usize, remaining: usize) -> bool;
}

/// Observer that never cancels.
pub struct Quiet;

impl SweepObserver for Quiet {
    fn on_sweep(&self, _: usize, _: usize, _: usize) -> bool {
        true
    }
}

/// Observer backed by a cancellation flag.
pub struct CancelFlag<'a>(pub &'a AtomicBool);

impl SweepObserver for CancelFlag<'_> {
    fn on_sweep(&self, _: usize, _: usize, _: usize) -> bool {
        !self.0.load(Ordering::Relaxed)
    }
}

/// Viable control samples per cell, one bit per control index.
#[derive(Clone, Debug, PartialEq)]
pub struct RegulationMap {
    grid: Arc<Grid>,
    controls: Vec<f64>,
    masks: Vec<u64>,
}

impl RegulationMap {
    pub fn empty(grid: Arc<Grid>, controls: Vec<f64>) -> Self {
        let n = grid.len();
        Self { grid, controls, masks: vec![0; n] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    #[inline]
    pub fn mask(&self, flat: usize) -> u64 {
        self.masks[flat]
    }

    pub fn set_mask(&mut self, flat: usize, mask: u64) {
        self.masks[flat] = mask;
    }

    /// Viable control indices at a cell, ascending.
    pub fn indices(&self, flat: usize) -> Vec<usize> {
        bits(self.masks[flat]).collect()
    }

    pub fn values(&self, flat: usize) -> Vec<f64> {
        bits(self.masks[flat]).map(|i| self.controls[i]).collect()
    }

    /// Cells with at least one viable control.
    pub fn domain(&self) -> CellSet {
        let mut set = CellSet::empty(self.grid.clone());
        for (flat, m) in self.masks.iter().enumerate() {
            if *m != 0 {
                set.insert(flat);
            }
        }
        set
    }

    /// Restriction to `domain` (masks outside it are cleared).
    pub fn restrict(&self, domain: &CellSet) -> Result<RegulationMap> {
        if domain.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::GridMismatch);
        }
        let mut out = self.clone();
        for (flat, m) in out.masks.iter_mut().enumerate() {
            if !domain.contains(flat) {
                *m = 0;
            }
        }
        Ok(out)
    }
}

pub(crate) fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            return None;
        }
        let t = m.trailing_zeros() as usize;
        m &= m - 1;
        Some(t)
    })
}

/// Per-cell intersection of control sets, restricted to `domain`.
///
/// Cells of `domain` may end up with an empty set; callers check coverage.
pub fn intersect_regulation(maps: &[&RegulationMap], domain: &CellSet) -> Result<RegulationMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::ContractViolation("no regulation maps to intersect".into()))?;
    for m in maps {
        if m.grid.as_ref() != first.grid.as_ref() || m.controls != first.controls {
            return Err(Error::GridMismatch);
        }
    }
    if domain.grid().as_ref() != first.grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    let mut out = RegulationMap::empty(first.grid.clone(), first.controls.clone());
    for flat in domain.iter() {
        out.masks[flat] = maps.iter().fold(!0u64, |acc, m| acc & m.masks[flat]);
    }
    Ok(out)
}

/// Result of a fixed-point solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub kernel: CellSet,
    pub regulation: RegulationMap,
    /// Sweeps performed, including the final sweep that removed nothing.
    pub iterations: usize,
    pub removed_per_iteration: Vec<usize>,
    pub wall_time: Duration,
    pub empty: bool,
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    pattern: u32,
    bases_start: u32,
    /// Zero marks a control whose successors leave the domain.
    bases_len: u32,
}

const DEAD: Entry = Entry { pattern: 0, bases_start: 0, bases_len: 0 };

/// Successor cells of every (cell, control) pair over all tyche samples.
pub struct TransitionTable {
    grid: Arc<Grid>,
    n_controls: usize,
    entries: Vec<Entry>,
    /// `(start, len)` into `runs` per pattern.
    patterns: Vec<(u32, u32)>,
    /// `(offset, len)` runs of flat offsets.
    runs: Vec<(u32, u32)>,
    bases: Vec<u32>,
    safety: Safety,
}

#[derive(Default)]
struct LocalTable {
    entries: Vec<Entry>,
    patterns: Vec<(u32, u32)>,
    runs: Vec<(u32, u32)>,
    bases: Vec<u32>,
}

struct CellScratch {
    drift: Vec<f64>,
    effect: Vec<f64>,
    offsets: Vec<u32>,
    tuples: Vec<[usize; MAX_DIM]>,
}

impl TransitionTable {
    pub fn build(problem: &DiscreteProblem) -> Result<Self> {
        problem.validate()?;
        let grid = problem.grid.clone();
        let n_u = problem.controls.len();
        let locals = par::map_ranges(problem.execution, grid.len(), CELL_CHUNK, |range| {
            let mut local = LocalTable::default();
            let mut scratch = CellScratch {
                drift: vec![0.0; problem.tyches.len() * grid.dim()],
                effect: vec![0.0; n_u * grid.dim()],
                offsets: Vec::new(),
                tuples: Vec::new(),
            };
            for cell in range {
                if problem.constraint.contains(cell) {
                    build_cell(problem, cell, &mut scratch, &mut local)?;
                } else {
                    local.entries.extend(std::iter::repeat_n(DEAD, n_u));
                }
            }
            Ok::<_, Error>(local)
        });

        let mut table = TransitionTable {
            grid,
            n_controls: n_u,
            entries: Vec::new(),
            patterns: Vec::new(),
            runs: Vec::new(),
            bases: Vec::new(),
            safety: problem.safety,
        };
        for local in locals {
            let local = local?;
            let pattern_off = table.patterns.len() as u32;
            let run_off = table.runs.len() as u32;
            let base_off = table.bases.len() as u32;
            table.entries.extend(local.entries.into_iter().map(|e| {
                if e.bases_len == 0 {
                    e
                } else {
                    Entry {
                        pattern: e.pattern + pattern_off,
                        bases_start: e.bases_start + base_off,
                        bases_len: e.bases_len,
                    }
                }
            }));
            table.patterns.extend(local.patterns.into_iter().map(|(s, l)| (s + run_off, l)));
            table.runs.extend(local.runs);
            table.bases.extend(local.bases);
        }
        Ok(table)
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    /// Whether every successor of `(cell, control)` is in `target`.
    #[inline]
    pub fn control_viable(&self, cell: usize, control: usize, target: &CellSet) -> bool {
        let e = self.entries[cell * self.n_controls + control];
        if e.bases_len == 0 {
            return false;
        }
        let (rs, rl) = self.patterns[e.pattern as usize];
        let runs = &self.runs[rs as usize..(rs + rl) as usize];
        let bases = &self.bases[e.bases_start as usize..(e.bases_start + e.bases_len) as usize];
        bases.iter().all(|&b| {
            runs.iter().all(|&(off, len)| target.contains_run((b + off) as usize, len as usize))
        })
    }

    /// Mask of viable controls at `cell` against `target`.
    pub fn viable_mask(&self, cell: usize, target: &CellSet) -> u64 {
        let mut mask = 0;
        for u in 0..self.n_controls {
            if self.control_viable(cell, u, target) {
                mask |= 1 << u;
            }
        }
        mask
    }

    /// Mask of viable controls among `candidates`.
    pub fn viable_mask_among(&self, cell: usize, candidates: u64, target: &CellSet) -> u64 {
        bits(candidates).filter(|&u| self.control_viable(cell, u, target)).fold(0, |m, u| m | 1 << u)
    }

    fn any_viable(&self, cell: usize, target: &CellSet) -> bool {
        (0..self.n_controls).any(|u| self.control_viable(cell, u, target))
    }

    /// The set successors are tested against for a current set `g`.
    pub fn target_for(&self, g: &CellSet) -> CellSet {
        match self.safety.mode {
            DilationMode::Optimistic if self.safety.radius > 0 => g.dilate(self.safety.radius),
            _ => g.clone(),
        }
    }

    /// Greatest fixed point below `start`.
    pub fn fixed_point(
        &self,
        start: &CellSet,
        cap: usize,
        exec: Execution,
        observer: &dyn SweepObserver,
    ) -> Result<(CellSet, Vec<usize>)> {
        let mut g = start.clone();
        let mut removed_log = Vec::new();
        if g.is_empty() {
            return Ok((g, removed_log));
        }
        let mut remaining = g.count();
        loop {
            if removed_log.len() >= cap {
                return Err(Error::NonConvergence { iterations: removed_log.len() });
            }
            let target = self.target_for(&g);
            let words = g.words();
            let chunks = par::map_ranges(exec, words.len(), WORD_CHUNK, |range| {
                range
                    .map(|wi| {
                        let mut w = words[wi];
                        let mut out = w;
                        while w != 0 {
                            let t = w.trailing_zeros() as usize;
                            w &= w - 1;
                            if !self.any_viable(wi * 64 + t, &target) {
                                out &= !(1u64 << t);
                            }
                        }
                        out
                    })
                    .collect::<Vec<u64>>()
            });
            let next = CellSet::from_words(g.grid().clone(), chunks.concat());
            let now = next.count();
            let removed = remaining - now;
            removed_log.push(removed);
            remaining = now;
            g = next;
            if !observer.on_sweep(removed_log.len(), removed, remaining) {
                return Err(Error::Cancelled);
            }
            if removed == 0 || remaining == 0 {
                return Ok((g, removed_log));
            }
        }
    }

    /// Viable controls of every kernel cell, tested against the kernel itself.
    pub fn regulation(&self, kernel: &CellSet, controls: &[f64], exec: Execution) -> Result<RegulationMap> {
        let target = self.target_for(kernel);
        let cells: Vec<usize> = kernel.iter().collect();
        let masks = par::map_ranges(exec, cells.len(), CELL_CHUNK, |range| {
            cells[range].iter().map(|&c| (c, self.viable_mask(c, &target))).collect::<Vec<_>>()
        });
        let mut map = RegulationMap::empty(self.grid.clone(), controls.to_vec());
        for (cell, mask) in masks.into_iter().flatten() {
            if mask == 0 {
                return Err(Error::InternalInconsistency(format!(
                    "kernel cell {cell} has no viable control; the set is not a fixed point"
                )));
            }
            map.masks[cell] = mask;
        }
        Ok(map)
    }
}

/// Index of `x` on axis `k`, applying the Chebyshev offset `delta`; `None`
/// when the result crosses an exit edge.
#[inline]
fn offset_index(grid: &Grid, k: usize, idx: usize, delta: isize) -> Option<usize> {
    let axis = &grid.axes()[k];
    let j = idx as isize + delta;
    if j < 0 {
        return match axis.lower {
            Edge::Exit => None,
            Edge::Clamp => Some(0),
        };
    }
    if j as usize >= axis.nodes {
        return match axis.upper {
            Edge::Exit => None,
            Edge::Clamp => Some(axis.nodes - 1),
        };
    }
    Some(j as usize)
}

/// Expands index tuples over `axes` by the guaranteed-safety radius.
/// Returns `false` when a neighbour crosses an exit edge.
fn dilate_tuples(grid: &Grid, axes: &[usize], radius: usize, tuples: &mut Vec<[usize; MAX_DIM]>) -> bool {
    if radius == 0 || axes.is_empty() {
        return true;
    }
    let r = radius as isize;
    for &k in axes {
        let mut out = Vec::with_capacity(tuples.len() * (2 * radius + 1));
        for t in tuples.iter() {
            for delta in -r..=r {
                match offset_index(grid, k, t[k], delta) {
                    Some(j) => {
                        let mut n = *t;
                        n[k] = j;
                        out.push(n);
                    }
                    None => return false,
                }
            }
        }
        *tuples = out;
    }
    true
}

fn push_pattern(offsets: &mut Vec<u32>, local: &mut LocalTable) -> u32 {
    offsets.sort_unstable();
    offsets.dedup();
    let start = local.runs.len() as u32;
    let mut iter = offsets.iter();
    if let Some(&first) = iter.next() {
        let (mut s, mut len) = (first, 1u32);
        for &o in iter {
            if o == s + len {
                len += 1;
            } else {
                local.runs.push((s, len));
                s = o;
                len = 1;
            }
        }
        local.runs.push((s, len));
    }
    local.patterns.push((start, local.runs.len() as u32 - start));
    local.patterns.len() as u32 - 1
}

fn build_cell(problem: &DiscreteProblem, cell: usize, scratch: &mut CellScratch, local: &mut LocalTable) -> Result<()> {
    let grid = problem.grid.as_ref();
    let system = problem.system.as_ref();
    let d = grid.dim();
    let n_u = problem.controls.len();
    let n_v = problem.tyches.len();
    let tau = problem.tau;
    let radius = match problem.safety.mode {
        DilationMode::Guaranteed => problem.safety.radius,
        DilationMode::Optimistic => 0,
    };
    let mut x = [0.0; MAX_DIM];
    grid.node_into(cell, &mut x[..d]);
    let x = &x[..d];

    for (vi, v) in problem.tyches.iter().enumerate() {
        let out = &mut scratch.drift[vi * d..(vi + 1) * d];
        system
            .drift(x, v, out)
            .map_err(|_| Error::NonFiniteDynamics { cell, state: x.to_vec() })?;
        if out.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteDynamics { cell, state: x.to_vec() });
        }
    }
    for (ui, &u) in problem.controls.iter().enumerate() {
        system.control_effect(x, u, &mut scratch.effect[ui * d..(ui + 1) * d]);
    }
    let drift = |vi: usize, k: usize| scratch.drift[vi * d + k];
    let effect = |ui: usize, k: usize| scratch.effect[ui * d + k];

    // Classify axes: tyche-independent (u-axes), control-independent
    // (v-axes) or mixed.
    let mut u_axes = [0usize; MAX_DIM];
    let mut v_axes = [0usize; MAX_DIM];
    let (mut nu_ax, mut nv_ax) = (0, 0);
    let mut mixed = false;
    for k in 0..d {
        let d0 = drift(0, k).to_bits();
        if (1..n_v).all(|vi| drift(vi, k).to_bits() == d0) {
            u_axes[nu_ax] = k;
            nu_ax += 1;
        } else if (0..n_u).all(|ui| effect(ui, k) == 0.0) {
            v_axes[nv_ax] = k;
            nv_ax += 1;
        } else {
            mixed = true;
        }
    }
    let successor = |vi: usize, ui: usize, k: usize| -> f64 {
        system.clamp_axis(k, x[k] + tau * (drift(vi, k) + effect(ui, k)))
    };
    let strides = grid.strides();

    if !mixed {
        // tyche part, shared by all controls
        scratch.tuples.clear();
        let mut exits = false;
        for vi in 0..n_v {
            let mut t = [0usize; MAX_DIM];
            for &k in &v_axes[..nv_ax] {
                match grid.axes()[k].project(successor(vi, 0, k)) {
                    Some(i) => t[k] = i,
                    None => {
                        exits = true;
                        break;
                    }
                }
            }
            if exits {
                break;
            }
            scratch.tuples.push(t);
        }
        if exits || !dilate_tuples(grid, &v_axes[..nv_ax], radius, &mut scratch.tuples) {
            local.entries.extend(std::iter::repeat_n(DEAD, n_u));
            return Ok(());
        }
        scratch.offsets.clear();
        scratch
            .offsets
            .extend(scratch.tuples.iter().map(|t| v_axes[..nv_ax].iter().map(|&k| t[k] * strides[k]).sum::<usize>() as u32));
        let pattern = push_pattern(&mut scratch.offsets, local);

        for ui in 0..n_u {
            let mut tuples = vec![[0usize; MAX_DIM]];
            let mut ok = true;
            for &k in &u_axes[..nu_ax] {
                match grid.axes()[k].project(successor(0, ui, k)) {
                    Some(i) => tuples[0][k] = i,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                ok = dilate_tuples(grid, &u_axes[..nu_ax], radius, &mut tuples);
            }
            if !ok {
                local.entries.push(DEAD);
                continue;
            }
            let mut bases: Vec<u32> = tuples
                .iter()
                .map(|t| u_axes[..nu_ax].iter().map(|&k| t[k] * strides[k]).sum::<usize>() as u32)
                .collect();
            bases.sort_unstable();
            bases.dedup();
            let start = local.bases.len() as u32;
            local.bases.extend_from_slice(&bases);
            local.entries.push(Entry { pattern, bases_start: start, bases_len: bases.len() as u32 });
        }
    } else {
        let all_axes: Vec<usize> = (0..d).collect();
        for ui in 0..n_u {
            scratch.tuples.clear();
            let mut exits = false;
            'v: for vi in 0..n_v {
                let mut t = [0usize; MAX_DIM];
                for (k, slot) in t.iter_mut().enumerate().take(d) {
                    match grid.axes()[k].project(successor(vi, ui, k)) {
                        Some(i) => *slot = i,
                        None => {
                            exits = true;
                            break 'v;
                        }
                    }
                }
                scratch.tuples.push(t);
            }
            if exits || !dilate_tuples(grid, &all_axes, radius, &mut scratch.tuples) {
                local.entries.push(DEAD);
                continue;
            }
            scratch.offsets.clear();
            scratch.offsets.extend(scratch.tuples.iter().map(|t| grid.flat(&t[..d]) as u32));
            let pattern = push_pattern(&mut scratch.offsets, local);
            let start = local.bases.len() as u32;
            local.bases.push(0);
            local.entries.push(Entry { pattern, bases_start: start, bases_len: 1 });
        }
    }
    Ok(())
}

/// A solver holding the transition table of one problem.
pub struct Solver<'a> {
    problem: &'a DiscreteProblem,
    table: TransitionTable,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a DiscreteProblem) -> Result<Self> {
        let table = TransitionTable::build(problem)?;
        Ok(Self { problem, table })
    }

    pub fn table(&self) -> &TransitionTable {
        &self.table
    }

    pub fn solve(&self, observer: &dyn SweepObserver) -> Result<SolveReport> {
        let t0 = Instant::now();
        let (kernel, removed) = self.table.fixed_point(
            &self.problem.constraint,
            self.problem.iteration_cap(),
            self.problem.execution,
            observer,
        )?;
        let regulation = self.table.regulation(&kernel, &self.problem.controls, self.problem.execution)?;
        Ok(SolveReport {
            empty: kernel.is_empty(),
            iterations: removed.len(),
            removed_per_iteration: removed,
            kernel,
            regulation,
            wall_time: t0.elapsed(),
        })
    }

    pub fn regulation(&self, kernel: &CellSet) -> Result<RegulationMap> {
        self.table.regulation(kernel, &self.problem.controls, self.problem.execution)
    }
}

/// Plain viability kernel; the problem must carry exactly one tyche sample.
pub fn viability_kernel(problem: &DiscreteProblem) -> Result<SolveReport> {
    if problem.tyches.len() != 1 {
        return Err(Error::ContractViolation(format!(
            "plain viability needs a single tyche sample, got {}",
            problem.tyches.len()
        )));
    }
    guaranteed_kernel_observed(problem, &Quiet)
}

/// Guaranteed viability kernel over all tyche samples.
pub fn guaranteed_kernel(problem: &DiscreteProblem) -> Result<SolveReport> {
    guaranteed_kernel_observed(problem, &Quiet)
}

pub fn guaranteed_kernel_observed(problem: &DiscreteProblem, observer: &dyn SweepObserver) -> Result<SolveReport> {
    let t0 = Instant::now();
    let solver = Solver::new(problem)?;
    let mut report = solver.solve(observer)?;
    report.wall_time = t0.elapsed();
    Ok(report)
}

/// Viable controls of every kernel cell.
pub fn extract_regulation(problem: &DiscreteProblem, kernel: &CellSet) -> Result<RegulationMap> {
    Solver::new(problem)?.regulation(kernel)
}
