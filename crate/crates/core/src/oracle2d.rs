//! Analytic kernel boundaries for point-parameter lake models.
//!
//! With the inflow bounded below by `L_min`, the concentration capped at
//! `P_max` and the most negative inflow change `u_min`, the viability
//! kernel is enclosed by the `L = L_min` edge and the integral curve of the
//! dynamics with `u = u_min` that just touches the cap:
//!
//! - when the equilibria curve reaches `P = P_max` at some `L_e >= L_min`,
//!   the curve arrives at `(L_e, P_max)` and the cap edge between `L_min`
//!   and `L_e` belongs to the boundary;
//! - otherwise the curve passes through `(L_min, P_e)`, where `P_e` is the
//!   highest equilibrium below the cap at `L_min`.
//!
//! Curves are produced by adaptive RK4 with step doubling.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dynamics::ModelParams;
use crate::grid::{CellSet, Grid};
use crate::{Error, Result};

/// Per-step relative tolerance of [`integrate_curve`].
pub const RELATIVE_TOLERANCE: f64 = 1e-8;

const MIN_STEP: f64 = 1e-14;
const ROOT_SCAN_STEPS: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCase {
    /// The equilibria curve meets `P = P_max` at `L_e >= L_min`.
    EquilibriaMeetCap,
    /// The curve runs through the highest equilibrium `(L_min, P_e)`.
    HighestEquilibrium,
}

/// Closed polygon enclosing the kernel, listed clockwise in the `(L, P)`
/// plane from `(L_min, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelBoundary {
    pub vertices: Vec<[f64; 2]>,
    pub case: BoundaryCase,
    /// `L_e` or `P_e`, depending on the case.
    pub anchor: f64,
    /// Index range of the `u_min` integral curve within `vertices`.
    pub curve: std::ops::Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum OracleOutcome {
    Boundary(KernelBoundary),
    /// `P_max` lies below every equilibrium at `L_min`.
    Empty,
    /// The equilibria curve has more roots at `L_min` than the case
    /// analysis covers.
    Unsupported { roots: usize },
}

/// Bounds of the constraint window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LakeBounds {
    pub l_min: f64,
    pub p_max: f64,
    /// Truncation of the unbounded inflow direction.
    pub l_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Limits for [`integrate_curve`].
#[derive(Clone, Copy, Debug)]
pub struct CurveLimits {
    pub max_step: f64,
    pub max_arc_length: f64,
    pub max_steps: usize,
}

impl Default for CurveLimits {
    fn default() -> Self {
        Self { max_step: 1e-2, max_arc_length: 1e4, max_steps: 1_000_000 }
    }
}

fn field(model: &ModelParams, u: f64, sign: f64, x: [f64; 2]) -> [f64; 2] {
    [sign * u, sign * model.phosphorus_rate(x[0], x[1])]
}

fn rk4(model: &ModelParams, u: f64, sign: f64, x: [f64; 2], h: f64) -> [f64; 2] {
    let add = |a: [f64; 2], k: [f64; 2], s: f64| [a[0] + s * k[0], a[1] + s * k[1]];
    let k1 = field(model, u, sign, x);
    let k2 = field(model, u, sign, add(x, k1, h / 2.0));
    let k3 = field(model, u, sign, add(x, k2, h / 2.0));
    let k4 = field(model, u, sign, add(x, k3, h));
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integral curve of `(u, dP/dt)` from `start`, stopping at the first
/// accepted point for which `stop` holds (that point is included), or at
/// the arc-length or step caps.
pub fn integrate_curve(
    model: &ModelParams,
    start: [f64; 2],
    u: f64,
    direction: Direction,
    stop: impl Fn([f64; 2]) -> bool,
    limits: CurveLimits,
) -> Result<Vec<[f64; 2]>> {
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let mut points = vec![start];
    let mut x = start;
    let mut h = limits.max_step;
    let mut arc = 0.0;
    for _ in 0..limits.max_steps {
        if stop(x) || arc >= limits.max_arc_length {
            break;
        }
        let full = rk4(model, u, sign, x, h);
        let half = rk4(model, u, sign, rk4(model, u, sign, x, h / 2.0), h / 2.0);
        if !(half[0].is_finite() && half[1].is_finite()) {
            return Err(Error::StepUnderflow { state: x.to_vec() });
        }
        let err = ((half[0] - full[0]).hypot(half[1] - full[1])) / 15.0;
        let scale = RELATIVE_TOLERANCE * half[0].hypot(half[1]).max(1.0);
        if err <= scale {
            // Richardson extrapolation of the accepted step
            let next = [half[0] + (half[0] - full[0]) / 15.0, half[1] + (half[1] - full[1]) / 15.0];
            let moved = (next[0] - x[0]).hypot(next[1] - x[1]);
            arc += moved;
            if moved == 0.0 {
                // a fixed point: nothing further will happen
                break;
            }
            x = next;
            points.push(x);
            let grow = if err > 0.0 { 0.9 * (scale / err).powf(0.2) } else { 2.0 };
            h = (h * grow.clamp(1.0, 2.0)).min(limits.max_step);
        } else {
            h *= (0.9 * (scale / err).powf(0.2)).clamp(0.1, 0.5);
            if h < MIN_STEP {
                return Err(Error::StepUnderflow { state: x.to_vec() });
            }
        }
    }
    Ok(points)
}

/// Equilibrium concentrations at inflow `l` over the whole physical range.
pub fn equilibria_at(model: &ModelParams, l: f64) -> Vec<f64> {
    // beyond (l + r) / b the loss dominates any recycling
    let p_hi = (l + model.r) / model.b + 1.0;
    model.equilibria_at_inflow(l, 0.0, p_hi, ROOT_SCAN_STEPS)
}

/// Analytic kernel boundary for a point-parameter model.
pub fn analytic_boundary(model: &ModelParams, bounds: LakeBounds, u_min: f64) -> Result<OracleOutcome> {
    model.validate()?;
    if !(u_min < 0.0) {
        return Err(Error::ContractViolation("the boundary curve needs u_min < 0".into()));
    }
    let roots = equilibria_at(model, bounds.l_min);
    if roots.len() > 3 {
        return Ok(OracleOutcome::Unsupported { roots: roots.len() });
    }
    match roots.first() {
        Some(&lowest) if lowest <= bounds.p_max => {}
        _ => return Ok(OracleOutcome::Empty),
    }
    let l_e = model.equilibria_inflow(bounds.p_max);
    let (case, anchor, head, start) = if l_e >= bounds.l_min {
        let head = vec![[bounds.l_min, 0.0], [bounds.l_min, bounds.p_max], [l_e, bounds.p_max]];
        (BoundaryCase::EquilibriaMeetCap, l_e, head, [l_e, bounds.p_max])
    } else {
        let p_e = roots.iter().copied().filter(|&p| p <= bounds.p_max).fold(f64::NAN, f64::max);
        let head = vec![[bounds.l_min, 0.0], [bounds.l_min, p_e]];
        (BoundaryCase::HighestEquilibrium, p_e, head, [bounds.l_min, p_e])
    };
    let diag = (bounds.l_max - bounds.l_min).hypot(bounds.p_max);
    let limits = CurveLimits { max_step: 5e-5 * diag / u_min.abs().max(1e-3), ..CurveLimits::default() };
    let mut curve = integrate_curve(
        model,
        start,
        u_min,
        Direction::Backward,
        |x| x[1] <= 0.0 || x[0] >= bounds.l_max,
        limits,
    )?;
    clip_last_segment(&mut curve, bounds.l_max);

    let mut vertices = head;
    let curve_start = vertices.len() - 1;
    vertices.extend_from_slice(&curve[1..]);
    let curve_end = vertices.len();
    let last = *vertices.last().unwrap();
    if last[1] > 0.0 {
        vertices.push([last[0], 0.0]);
    }
    Ok(OracleOutcome::Boundary(KernelBoundary {
        vertices,
        case,
        anchor,
        curve: curve_start..curve_end,
    }))
}

/// Moves the final point of a curve onto `P = 0` or `L = l_max`, whichever
/// the last segment crosses first.
fn clip_last_segment(curve: &mut [[f64; 2]], l_max: f64) {
    let n = curve.len();
    if n < 2 {
        return;
    }
    let (a, b) = (curve[n - 2], curve[n - 1]);
    let mut t: f64 = 1.0;
    if b[1] < 0.0 && a[1] > b[1] {
        t = t.min(a[1] / (a[1] - b[1]));
    }
    if b[0] > l_max && b[0] > a[0] {
        t = t.min((l_max - a[0]) / (b[0] - a[0]));
    }
    curve[n - 1] = [a[0] + t * (b[0] - a[0]), (a[1] + t * (b[1] - a[1])).max(0.0)];
}

impl KernelBoundary {
    /// Even-odd membership; points on an edge count as inside.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            if on_segment(a, b, x) {
                return true;
            }
            if (a[1] > x[1]) != (b[1] > x[1]) {
                let cross = a[0] + (x[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if x[0] < cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Grid nodes inside the polygon (scanline form of [`Self::contains`]).
    pub fn region(&self, grid: std::sync::Arc<Grid>) -> CellSet {
        let mut set = CellSet::empty(grid.clone());
        let (lx, ly) = (&grid.axes()[0], &grid.axes()[1]);
        let v = &self.vertices;
        let n = v.len();
        let tol = 1e-12 * (1.0 + lx.lo.abs().max(lx.hi.abs()));
        let mut spans: Vec<(f64, f64)> = Vec::new();
        for j in 0..ly.nodes {
            let y = ly.node(j);
            let mut crossings: Vec<f64> = Vec::new();
            spans.clear();
            for i in 0..n {
                let (a, b) = (v[i], v[(i + 1) % n]);
                if (a[1] > y) != (b[1] > y) {
                    crossings.push(a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
                }
                if a[1] == y && b[1] == y {
                    spans.push((a[0].min(b[0]), a[0].max(b[0])));
                } else if a[1] == y {
                    spans.push((a[0], a[0]));
                }
            }
            crossings.sort_by(f64::total_cmp);
            spans.extend(crossings.chunks_exact(2).map(|c| (c[0], c[1])));
            for i in 0..lx.nodes {
                let x = lx.node(i);
                if spans.iter().any(|&(lo, hi)| x >= lo - tol && x <= hi + tol) {
                    set.insert(grid.flat(&[i, j]));
                }
            }
        }
        set
    }

    /// Largest outward component of the normalised `u_min` field over the
    /// vertices away from the `L = L_min` edge. Nonpositive (up to
    /// round-off) when the field is tangent or inward everywhere.
    pub fn max_outward_flow(&self, model: &ModelParams, u_min: f64, l_min: f64) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            let x = v[i];
            if x[0] <= l_min {
                continue;
            }
            let prev = v[(i + n - 1) % n];
            let next = v[(i + 1) % n];
            // second-order tangent for unevenly spaced vertices; the polygon
            // runs clockwise, so the outward normal is the tangent rotated
            // counter-clockwise
            let h1 = (x[0] - prev[0]).hypot(x[1] - prev[1]);
            let h2 = (next[0] - x[0]).hypot(next[1] - x[1]);
            let t = [
                h1 * h1 * (next[0] - x[0]) + h2 * h2 * (x[0] - prev[0]),
                h1 * h1 * (next[1] - x[1]) + h2 * h2 * (x[1] - prev[1]),
            ];
            let norm_t = t[0].hypot(t[1]);
            if norm_t == 0.0 {
                continue;
            }
            let normal = [-t[1] / norm_t, t[0] / norm_t];
            let f = [u_min, model.phosphorus_rate(x[0], x[1])];
            let norm_f = f[0].hypot(f[1]);
            if norm_f == 0.0 {
                continue;
            }
            worst = worst.max((f[0] * normal[0] + f[1] * normal[1]) / norm_f);
        }
        worst
    }

    /// Two-column `L,P` text with a header line.
    pub fn to_csv(&self) -> String {
        polyline_csv(&self.vertices)
    }
}

pub fn polyline_csv(points: &[[f64; 2]]) -> String {
    let mut out = String::from("L,P\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p[0], p[1]);
    }
    out
}

fn on_segment(a: [f64; 2], b: [f64; 2], x: [f64; 2]) -> bool {
    let scale = 1e-12 * (1.0 + a[0].abs() + a[1].abs() + b[0].abs() + b[1].abs());
    let cross = (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]);
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    if cross.abs() > scale * len.max(1.0) {
        return false;
    }
    x[0] >= a[0].min(b[0]) - scale
        && x[0] <= a[0].max(b[0]) + scale
        && x[1] >= a[1].min(b[1]) - scale
        && x[1] <= a[1].max(b[1]) + scale
}
