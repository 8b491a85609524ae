//! Uniform rectangular state grids and sets of grid cells.
//!
//! Cells are addressed by a flat index in row-major order (last axis
//! fastest). Each cell is represented by its node; continuous states are
//! projected to the nearest node, ties going to the lower index.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_DIM: usize = 4;

/// Behaviour of a grid edge for states that cross it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    /// The edge is a binding constraint: crossing it leaves the domain.
    Exit,
    /// The edge truncates a non-binding direction: crossing states stick to it.
    Clamp,
}

impl Edge {
    fn name(self) -> &'static str {
        match self {
            Edge::Exit => "exit",
            Edge::Clamp => "clamp",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "exit" => Some(Edge::Exit),
            "clamp" => Some(Edge::Clamp),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub lower: Edge,
    pub upper: Edge,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Self {
        Self { lo, hi, nodes, lower: Edge::Exit, upper: Edge::Exit }
    }

    pub fn with_edges(mut self, lower: Edge, upper: Edge) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    /// Nearest node index, or `None` when `x` crosses an exit edge.
    #[inline]
    pub fn project(&self, x: f64) -> Option<usize> {
        if !x.is_finite() {
            return None;
        }
        if x < self.lo {
            return match self.lower {
                Edge::Exit => None,
                Edge::Clamp => Some(0),
            };
        }
        if x > self.hi {
            return match self.upper {
                Edge::Exit => None,
                Edge::Clamp => Some(self.nodes - 1),
            };
        }
        let t = (x - self.lo) / self.step();
        let base = t.floor();
        let idx = if t - base > 0.5 { base + 1.0 } else { base };
        Some((idx as usize).min(self.nodes - 1))
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::ContractViolation(format!("axis {k}: need at least 2 nodes")));
        }
        if !self.lo.is_finite() || !self.hi.is_finite() || !(self.hi > self.lo) {
            return Err(Error::ContractViolation(format!(
                "axis {k}: invalid bounds [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Uniform rectangular grid of nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::ContractViolation(format!(
                "grid dimension must be 1..={MAX_DIM}, got {}",
                axes.len()
            )));
        }
        for (k, axis) in axes.iter().enumerate() {
            axis.validate(k)?;
        }
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len() - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].nodes;
        }
        strides[0]
            .checked_mul(axes[0].nodes)
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| Error::ContractViolation("grid too large".into()))?;
        Ok(Self { axes, strides })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.strides[0] * self.axes[0].nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::step).collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, flat: usize) -> CellIndex {
        let mut out = [0; MAX_DIM];
        self.coords_into(flat, &mut out);
        CellIndex { coords: out[..self.dim()].to_vec() }
    }

    #[inline]
    pub fn coords_into(&self, mut flat: usize, out: &mut [usize; MAX_DIM]) {
        for (k, s) in self.strides.iter().enumerate() {
            out[k] = flat / s;
            flat %= s;
        }
    }

    /// Node coordinates of a cell.
    #[inline]
    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let mut idx = [0; MAX_DIM];
        self.coords_into(flat, &mut idx);
        for (k, axis) in self.axes.iter().enumerate() {
            out[k] = axis.node(idx[k]);
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(flat, &mut out);
        out
    }

    /// Projects a continuous state onto its nearest node. `None` marks a
    /// state beyond an exit edge; states beyond clamp edges stick to them.
    pub fn project(&self, x: &[f64]) -> Option<CellIndex> {
        self.project_flat(x).map(|f| self.coords(f))
    }

    #[inline]
    pub fn project_flat(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for ((axis, s), xi) in self.axes.iter().zip(&self.strides).zip(x) {
            flat += axis.project(*xi)? * s;
        }
        Some(flat)
    }

    /// Calls `f` for every in-grid cell within Chebyshev distance `radius`
    /// of `flat` (including `flat` itself).
    pub fn for_each_neighbor(&self, flat: usize, radius: usize, mut f: impl FnMut(usize)) {
        let mut center = [0; MAX_DIM];
        self.coords_into(flat, &mut center);
        let d = self.dim();
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        for k in 0..d {
            lo[k] = center[k].saturating_sub(radius);
            hi[k] = (center[k] + radius).min(self.axes[k].nodes - 1);
        }
        let mut cur = lo;
        loop {
            f(self.flat(&cur[..d]));
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
            }
        }
    }

    fn header(&self, scenario_hash: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "viab-raster 1");
        let _ = writeln!(s, "dims {}", self.dim());
        for (k, a) in self.axes.iter().enumerate() {
            let _ = writeln!(
                s,
                "axis {k} {} {} {} {} {}",
                a.lo,
                a.hi,
                a.nodes,
                a.lower.name(),
                a.upper.name()
            );
        }
        let _ = writeln!(s, "scenario {scenario_hash}");
        s
    }
}

/// Per-axis integer cell coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub coords: Vec<usize>,
}

/// A subset of grid cells stored as a dense bitmap.
#[derive(Clone, Debug)]
pub struct CellSet {
    grid: Arc<Grid>,
    bits: Vec<u64>,
}

impl PartialEq for CellSet {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid) && self.bits == other.bits
    }
}

impl CellSet {
    pub fn empty(grid: Arc<Grid>) -> Self {
        let words = grid.len().div_ceil(64);
        Self { grid, bits: vec![0; words] }
    }

    pub fn full(grid: Arc<Grid>) -> Self {
        let mut set = Self::empty(grid);
        let n = set.grid.len();
        for w in set.bits.iter_mut() {
            *w = !0;
        }
        set.clear_tail(n);
        set
    }

    /// Cells whose node satisfies `pred`.
    pub fn from_nodes(grid: Arc<Grid>, mut pred: impl FnMut(&[f64]) -> bool) -> Self {
        let mut set = Self::empty(grid);
        let mut x = [0.0; MAX_DIM];
        let d = set.grid.dim();
        for flat in 0..set.grid.len() {
            set.grid.node_into(flat, &mut x[..d]);
            if pred(&x[..d]) {
                set.insert(flat);
            }
        }
        set
    }

    pub(crate) fn from_words(grid: Arc<Grid>, bits: Vec<u64>) -> Self {
        debug_assert_eq!(bits.len(), grid.len().div_ceil(64));
        Self { grid, bits }
    }

    fn clear_tail(&mut self, n: usize) {
        let rem = n % 64;
        if rem != 0 {
            if let Some(last) = self.bits.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    #[inline]
    pub fn contains(&self, flat: usize) -> bool {
        self.bits[flat >> 6] >> (flat & 63) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, flat: usize) {
        self.bits[flat >> 6] |= 1 << (flat & 63);
    }

    #[inline]
    pub fn remove(&mut self, flat: usize) {
        self.bits[flat >> 6] &= !(1 << (flat & 63));
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Whether every cell in `start .. start + len` is a member.
    #[inline]
    pub fn contains_run(&self, start: usize, len: usize) -> bool {
        let end = start + len;
        let mut i = start;
        while i < end {
            let word = i >> 6;
            let bit = i & 63;
            let take = (64 - bit).min(end - i);
            let mask = if take == 64 { !0u64 } else { ((1u64 << take) - 1) << bit };
            if self.bits[word] & mask != mask {
                return false;
            }
            i += take;
        }
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let t = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + t)
            })
        })
    }

    fn check_grid(&self, other: &CellSet) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn zip_with(&self, other: &CellSet, op: impl Fn(u64, u64) -> u64) -> Result<CellSet> {
        self.check_grid(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| op(*a, *b)).collect();
        Ok(CellSet { grid: self.grid.clone(), bits })
    }

    pub fn intersection(&self, other: &CellSet) -> Result<CellSet> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn union(&self, other: &CellSet) -> Result<CellSet> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn difference(&self, other: &CellSet) -> Result<CellSet> {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn symmetric_difference(&self, other: &CellSet) -> Result<CellSet> {
        self.zip_with(other, |a, b| a ^ b)
    }

    pub fn is_subset(&self, other: &CellSet) -> Result<bool> {
        self.check_grid(other)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0))
    }

    pub fn complement(&self) -> CellSet {
        let mut out = CellSet { grid: self.grid.clone(), bits: self.bits.iter().map(|w| !w).collect() };
        out.clear_tail(self.grid.len());
        out
    }

    /// Chebyshev (box) dilation by `radius` cells, clipped to the grid.
    pub fn dilate(&self, radius: usize) -> CellSet {
        if radius == 0 {
            return self.clone();
        }
        // separable: a box dilation is a sequence of 1-D dilations per axis
        let mut cur = self.clone();
        let grid = self.grid.clone();
        for k in 0..grid.dim() {
            let mut next = cur.clone();
            let n = grid.axes()[k].nodes;
            let stride = grid.strides()[k];
            let mut idx = [0; MAX_DIM];
            for flat in cur.iter() {
                grid.coords_into(flat, &mut idx);
                let lo = idx[k].saturating_sub(radius);
                let hi = (idx[k] + radius).min(n - 1);
                let base = flat - idx[k] * stride;
                for i in lo..=hi {
                    next.insert(base + i * stride);
                }
            }
            cur = next;
        }
        cur
    }

    /// Member cells with at least one in-grid non-member neighbour among
    /// the `3^d - 1` surrounding cells.
    pub fn boundary(&self) -> CellSet {
        let mut out = CellSet::empty(self.grid.clone());
        for flat in self.iter() {
            let mut edge = false;
            self.grid.for_each_neighbor(flat, 1, |n| {
                if !self.contains(n) {
                    edge = true;
                }
            });
            if edge {
                out.insert(flat);
            }
        }
        out
    }

    /// Chebyshev distance (in cells) from every cell to the nearest member,
    /// `usize::MAX` when the set is empty.
    pub fn distance_field(&self) -> Vec<usize> {
        let n = self.grid.len();
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        for flat in self.iter() {
            dist[flat] = 0;
            queue.push_back(flat);
        }
        while let Some(c) = queue.pop_front() {
            let dc = dist[c];
            self.grid.for_each_neighbor(c, 1, |nb| {
                if dist[nb] == usize::MAX {
                    dist[nb] = dc + 1;
                    queue.push_back(nb);
                }
            });
        }
        dist
    }

    /// Hausdorff distance in cells (Chebyshev metric) between two sets.
    /// Two empty sets are at distance 0; one empty set gives `None`.
    pub fn hausdorff(&self, other: &CellSet) -> Result<Option<usize>> {
        self.check_grid(other)?;
        match (self.is_empty(), other.is_empty()) {
            (true, true) => return Ok(Some(0)),
            (true, false) | (false, true) => return Ok(None),
            _ => {}
        }
        let to_other = other.distance_field();
        let to_self = self.distance_field();
        let a = self.iter().map(|c| to_other[c]).max().unwrap_or(0);
        let b = other.iter().map(|c| to_self[c]).max().unwrap_or(0);
        Ok(Some(a.max(b)))
    }

    /// Serialises the set in the text raster format (see `docs/formats.md`).
    pub fn to_raster(&self, scenario_hash: &str) -> String {
        let mut s = self.grid.header(scenario_hash);
        let _ = writeln!(s, "cells {}", self.count());
        s.push_str("data\n");
        let last = self.grid.axes()[self.grid.dim() - 1].nodes;
        let lines = self.grid.len() / last;
        for line in 0..lines {
            let base = line * last;
            let mut runs: Vec<usize> = Vec::new();
            let mut current = false;
            let mut run = 0;
            for i in 0..last {
                let bit = self.contains(base + i);
                if bit != current {
                    runs.push(run);
                    run = 0;
                    current = bit;
                }
                run += 1;
            }
            runs.push(run);
            let text: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
            s.push_str(&text.join(" "));
            s.push('\n');
        }
        s.push_str("end\n");
        s
    }

    /// Parses a raster; returns the set and the scenario hash it carries.
    pub fn from_raster(text: &str) -> Result<(CellSet, String)> {
        let err = |line: usize, message: &str| Error::Raster { line, message: message.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("missing {what}")));

        let (n, magic) = next("magic")?;
        if magic != "viab-raster 1" {
            return Err(err(n, "bad magic line"));
        }
        let (n, dims) = next("dims")?;
        let d: usize = dims
            .strip_prefix("dims ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(n, "bad dims line"))?;
        let mut axes = Vec::with_capacity(d);
        for k in 0..d {
            let (n, line) = next("axis")?;
            let f: Vec<&str> = line.split(' ').collect();
            if f.len() != 7 || f[0] != "axis" || f[1] != k.to_string() {
                return Err(err(n, "bad axis line"));
            }
            let lo: f64 = f[2].parse().map_err(|_| err(n, "bad axis lower bound"))?;
            let hi: f64 = f[3].parse().map_err(|_| err(n, "bad axis upper bound"))?;
            let nodes: usize = f[4].parse().map_err(|_| err(n, "bad node count"))?;
            let lower = Edge::parse(f[5]).ok_or_else(|| err(n, "bad lower edge"))?;
            let upper = Edge::parse(f[6]).ok_or_else(|| err(n, "bad upper edge"))?;
            axes.push(Axis { lo, hi, nodes, lower, upper });
        }
        let grid = Arc::new(Grid::new(axes).map_err(|e| err(0, &e.to_string()))?);
        let (n, sc) = next("scenario")?;
        let hash = sc.strip_prefix("scenario ").ok_or_else(|| err(n, "bad scenario line"))?.to_string();
        let (n, cells) = next("cells")?;
        let count: usize = cells
            .strip_prefix("cells ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(n, "bad cells line"))?;
        let (n, data) = next("data")?;
        if data != "data" {
            return Err(err(n, "expected `data`"));
        }
        let last = grid.axes()[d - 1].nodes;
        let mut set = CellSet::empty(grid.clone());
        for line_no in 0..grid.len() / last {
            let (n, line) = next("raster line")?;
            let mut pos = 0;
            let mut bit = false;
            for tok in line.split(' ') {
                let run: usize = tok.parse().map_err(|_| err(n, "bad run length"))?;
                if pos + run > last {
                    return Err(err(n, "runs exceed line length"));
                }
                if bit {
                    for i in pos..pos + run {
                        set.insert(line_no * last + i);
                    }
                }
                pos += run;
                bit = !bit;
            }
            if pos != last {
                return Err(err(n, "runs do not cover the line"));
            }
        }
        let (n, end) = next("end")?;
        if end != "end" {
            return Err(err(n, "expected `end`"));
        }
        if set.count() != count {
            return Err(err(0, "cell count does not match data"));
        }
        Ok((set, hash))
    }
}
