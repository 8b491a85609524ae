//! Brute-force reference for discrete (guaranteed) viability kernels and
//! random problem generators shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use viab_core::dynamics::{step_discrete, Family, ModelParams, ParametricLake, Param, TychasticSystem};
use viab_core::grid::{Axis, CellSet, Edge, Grid};
use viab_core::solver::{DilationMode, DiscreteProblem, Safety};
use viab_core::Result;

/// `x0' = u + v0 x1`, `x1' = -v1 x0 + u / 2`: every axis depends on both
/// the control and the tyche.
pub struct Twist;

impl TychasticSystem for Twist {
    fn state_dim(&self) -> usize {
        2
    }

    fn tyche_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = v[0] * x[1];
        out[1] = -v[1] * x[0];
        Ok(())
    }

    fn control_effect(&self, _x: &[f64], u: f64, out: &mut [f64]) {
        out[0] = u;
        out[1] = 0.5 * u;
    }
}

/// Index of the node nearest to `x` on an axis; ties go down. `None` when
/// `x` lies beyond an exit edge.
fn nearest(axis: &Axis, x: f64) -> Option<usize> {
    let n = axis.nodes;
    if !x.is_finite() {
        return None;
    }
    if x < axis.lo {
        return (axis.lower == Edge::Clamp).then_some(0);
    }
    if x > axis.hi {
        return (axis.upper == Edge::Clamp).then_some(n - 1);
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let d = (axis.node(i) - x).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    Some(best)
}

fn flat(grid: &Grid, idx: &[usize]) -> usize {
    idx.iter().zip(grid.axes()).fold(0, |acc, (&i, a)| acc * a.nodes + i)
}

fn coords(grid: &Grid, mut c: usize) -> Vec<usize> {
    let mut out = vec![0; grid.dim()];
    for k in (0..grid.dim()).rev() {
        let n = grid.axes()[k].nodes;
        out[k] = c % n;
        c /= n;
    }
    out
}

/// Cells of the Chebyshev block of radius `r` around `idx`; `None` if the
/// block crosses an exit edge. Clamp edges fold the block back inside.
fn block(grid: &Grid, idx: &[usize], r: usize) -> Option<Vec<usize>> {
    let mut cells = vec![idx.to_vec()];
    for (k, axis) in grid.axes().iter().enumerate() {
        let mut next = Vec::new();
        for c in &cells {
            for delta in -(r as isize)..=(r as isize) {
                let j = c[k] as isize + delta;
                let j = if j < 0 {
                    if axis.lower == Edge::Exit {
                        return None;
                    }
                    0
                } else if j >= axis.nodes as isize {
                    if axis.upper == Edge::Exit {
                        return None;
                    }
                    axis.nodes - 1
                } else {
                    j as usize
                };
                let mut d = c.clone();
                d[k] = j;
                next.push(d);
            }
        }
        cells = next;
    }
    Some(cells.iter().map(|c| flat(grid, c)).collect())
}

/// Chebyshev dilation of a membership vector, clipped to the grid.
fn dilate(grid: &Grid, set: &[bool], r: usize) -> Vec<bool> {
    let mut out = vec![false; set.len()];
    for (c, &inside) in set.iter().enumerate() {
        if !inside {
            continue;
        }
        let idx = coords(grid, c);
        let mut ranges: Vec<Vec<usize>> = vec![vec![]];
        for (k, axis) in grid.axes().iter().enumerate() {
            let lo = idx[k].saturating_sub(r);
            let hi = (idx[k] + r).min(axis.nodes - 1);
            ranges = ranges
                .into_iter()
                .flat_map(|p| (lo..=hi).map(move |j| [p.clone(), vec![j]].concat()))
                .collect();
        }
        for n in ranges {
            out[flat(grid, &n)] = true;
        }
    }
    out
}

/// Greatest fixed point of `G -> {c in G : some u keeps every successor in G}`,
/// computed one cell at a time from the definition.
pub fn brute_force_kernel(problem: &DiscreteProblem) -> Vec<bool> {
    let grid = problem.grid.as_ref();
    let n = grid.len();
    let d = grid.dim();
    let mut g: Vec<bool> = (0..n).map(|c| problem.constraint.contains(c)).collect();
    let (optimistic, guaranteed) = match problem.safety.mode {
        DilationMode::Optimistic => (problem.safety.radius, 0),
        DilationMode::Guaranteed => (0, problem.safety.radius),
    };
    loop {
        let target = if optimistic > 0 { dilate(grid, &g, optimistic) } else { g.clone() };
        let mut next = g.clone();
        for c in 0..n {
            if !g[c] {
                continue;
            }
            let x = grid.node(c);
            let viable = problem.controls.iter().any(|&u| {
                problem.tyches.iter().all(|v| {
                    let mut y = vec![0.0; d];
                    step_discrete(problem.system.as_ref(), &x, u, v, problem.tau, &mut y).unwrap();
                    let idx: Option<Vec<usize>> =
                        grid.axes().iter().zip(&y).map(|(a, &yk)| nearest(a, yk)).collect();
                    match idx.and_then(|idx| block(grid, &idx, guaranteed)) {
                        Some(cells) => cells.iter().all(|&s| target[s]),
                        None => false,
                    }
                })
            });
            if !viable {
                next[c] = false;
            }
        }
        if next == g {
            return g;
        }
        g = next;
    }
}

pub fn to_bools(set: &CellSet) -> Vec<bool> {
    (0..set.grid().len()).map(|c| set.contains(c)).collect()
}

fn random_edge(rng: &mut impl Rng) -> Edge {
    if rng.gen_bool(0.5) {
        Edge::Exit
    } else {
        Edge::Clamp
    }
}

/// A random lake problem: grid at most 20 x 20, 1 to 5 controls, 1 to 3
/// tyche samples over a random subset of (b, q, r), random constraint and
/// safety margin. One in four problems uses [`Twist`] instead of the lake.
pub fn random_problem(rng: &mut ChaCha8Rng) -> DiscreteProblem {
    // guaranteed margins erode everything next to an exit edge, so those
    // problems get clamping edges to keep nonempty kernels in the mix
    let safety = match rng.gen_range(0..4) {
        0 => Safety { radius: 1, mode: DilationMode::Optimistic },
        1 => Safety::guaranteed(1),
        _ => Safety::default(),
    };
    let edge = |rng: &mut ChaCha8Rng, exit_ok: bool| {
        if exit_ok && safety.mode == DilationMode::Optimistic { random_edge(rng) } else { Edge::Clamp }
    };
    let nl = rng.gen_range(2..=20);
    let np = rng.gen_range(2..=20);
    let twist = rng.gen_bool(0.25);
    let grid = if twist {
        Arc::new(
            Grid::new(vec![
                Axis::new(-1.0, 1.0, nl).with_edges(edge(rng, true), edge(rng, true)),
                Axis::new(-1.0, 1.0, np).with_edges(edge(rng, true), edge(rng, true)),
            ])
            .unwrap(),
        )
    } else {
        let l_hi = rng.gen_range(1.0..2.5);
        Arc::new(
            Grid::new(vec![
                Axis::new(0.1, l_hi, nl).with_edges(edge(rng, true), edge(rng, true)),
                Axis::new(0.0, rng.gen_range(0.8..1.6), np).with_edges(Edge::Clamp, edge(rng, true)),
            ])
            .unwrap(),
        )
    };
    let n_u = rng.gen_range(1..=5);
    let mut controls: Vec<f64> = (0..n_u).map(|_| rng.gen_range(-0.9..0.9)).collect();
    controls.sort_by(f64::total_cmp);
    let n_v = rng.gen_range(1..=3);
    let (system, tyches): (Arc<dyn TychasticSystem>, Vec<Vec<f64>>) = if twist {
        let tyches = (0..n_v).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        (Arc::new(Twist), tyches)
    } else {
        let all = [Param::B, Param::Q, Param::R];
        let axes: Vec<Param> = all.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        let base = ModelParams::sigmoid(rng.gen_range(0.5..0.9), rng.gen_range(0.7..1.3), rng.gen_range(2.0..8.0), 1.0);
        let lake = ParametricLake { family: Family::Sigmoid, base, axes: axes.clone() };
        let tyches = if axes.is_empty() {
            vec![vec![]]
        } else {
            (0..n_v)
                .map(|_| {
                    axes.iter()
                        .map(|p| {
                            let c = base.get(*p);
                            c * rng.gen_range(0.85..1.15)
                        })
                        .collect()
                })
                .collect()
        };
        (Arc::new(lake), tyches)
    };
    let cut = rng.gen_range(0.0..0.4);
    let constraint = CellSet::from_nodes(grid.clone(), |x| {
        let (a, b) = (&grid.axes()[0], &grid.axes()[1]);
        (x[0] - a.lo) / (a.hi - a.lo) + (b.hi - x[1]) / (b.hi - b.lo) >= cut
    });
    let tau = rng.gen_range(0.05..0.3);
    DiscreteProblem::new(system, constraint, controls, tyches, tau).with_safety(safety)
}
