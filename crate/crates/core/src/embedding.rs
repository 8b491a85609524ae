//! Tychastic systems embedding every member's dynamics.
//!
//! Three constructions are provided:
//!
//! - parameter box: all members share one parametric family and the tyche
//!   ranges over the hull of their parameters;
//! - ball: the first member's field plus a perturbation whose radius is the
//!   largest disagreement with any other member at that grid cell;
//! - convex hull: the first member's field plus nonnegative weights on the
//!   differences to the other members.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    ControlBox, Family, Interval, ModelParams, Param, ParametricLake, TycheBox, TychasticSystem,
};
use crate::grid::Grid;
use crate::{Error, Result};

/// Order of tyche coordinates in parameter-box embeddings.
pub const EMBEDDING_ORDER: [Param; 6] =
    [Param::B, Param::Alpha, Param::Q, Param::Lambda, Param::R, Param::M];

/// Largest residual accepted by [`verify_embedding`].
pub const EMBEDDING_TOLERANCE: f64 = 1e-9;

/// Most members supported by the convex-hull embedding.
pub const MAX_HULL_MEMBERS: usize = 8;

/// One stakeholder's beliefs about the dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberModel {
    pub id: String,
    pub family: Family,
    pub beliefs: BTreeMap<Param, Interval>,
}

impl MemberModel {
    pub fn new(id: impl Into<String>, family: Family, beliefs: BTreeMap<Param, Interval>) -> Result<Self> {
        let id = id.into();
        for &p in required_params(family) {
            if !beliefs.contains_key(&p) {
                return Err(Error::Scenario {
                    field: format!("members.{id}.params.{}", p.name()),
                    message: format!("required for family {}", family.tag()),
                });
            }
        }
        let member = Self { id, family, beliefs };
        member.nominal().validate().map_err(|e| Error::Member { id: member.id.clone(), source: Box::new(e) })?;
        Ok(member)
    }

    /// A member with exact parameters.
    pub fn point(id: impl Into<String>, family: Family, params: ModelParams) -> Self {
        let beliefs = required_params(family)
            .iter()
            .map(|&p| (p, Interval::point(params.get(p))))
            .collect();
        Self { id: id.into(), family, beliefs }
    }

    pub fn relevant(&self, param: Param) -> bool {
        match param {
            Param::Alpha => true,
            Param::Q => self.family != Family::Logistic,
            Param::Lambda => self.family != Family::Sigmoid,
            _ => true,
        }
    }

    /// Believed range of `param`, `None` when it does not enter the model.
    pub fn interval(&self, param: Param) -> Option<Interval> {
        if !self.relevant(param) {
            return None;
        }
        match (param, self.family) {
            (Param::Alpha, Family::Sigmoid) => Some(Interval::point(0.0)),
            (Param::Alpha, Family::Logistic) => Some(Interval::point(1.0)),
            _ => self.beliefs.get(&param).copied(),
        }
    }

    pub fn is_point(&self) -> bool {
        self.uncertain_axes().is_empty()
    }

    /// Parameters at the lower end of every belief; irrelevant parameters
    /// take their family defaults.
    pub fn nominal(&self) -> ModelParams {
        let mut params = ModelParams { b: 1.0, r: 0.0, q: 1.0, m: 1.0, lambda: 1.0, alpha: 0.0 };
        for p in Param::ALL {
            if let Some(iv) = self.interval(p) {
                params.set(p, iv.lo);
            }
        }
        params
    }

    /// Parameters believed to lie in a nondegenerate range.
    pub fn uncertain_axes(&self) -> Vec<(Param, Interval)> {
        EMBEDDING_ORDER
            .iter()
            .filter_map(|&p| self.interval(p).filter(|iv| iv.width() > 0.0).map(|iv| (p, iv)))
            .collect()
    }

    /// The member's own system; interval beliefs become tyche coordinates.
    pub fn system(&self) -> ParametricLake {
        ParametricLake {
            family: self.family,
            base: self.nominal(),
            axes: self.uncertain_axes().into_iter().map(|(p, _)| p).collect(),
        }
    }

    pub fn tyche_box(&self) -> TycheBox {
        TycheBox {
            axes: self.uncertain_axes().into_iter().map(|(p, iv)| (p.name().to_string(), iv)).collect(),
        }
    }

    /// Samples of the member's own tyche box (a single empty vector for
    /// point members).
    pub fn tyche_samples(&self, sampling: &TycheSampling) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> =
            self.uncertain_axes().iter().map(|(p, iv)| iv.samples(sampling.count(*p))).collect();
        cartesian(&axes)
    }

    /// Point models at every tyche sample.
    pub fn sample_models(&self, sampling: &TycheSampling) -> Vec<ParametricLake> {
        let sys = self.system();
        self.tyche_samples(sampling)
            .iter()
            .map(|v| ParametricLake::point(self.family, sys.params_at(v)))
            .collect()
    }

    /// Uniformly drawn parameters within the beliefs.
    pub fn draw_params(&self, rng: &mut impl Rng) -> ModelParams {
        let mut params = self.nominal();
        for (p, iv) in self.uncertain_axes() {
            params.set(p, rng.gen_range(iv.lo..=iv.hi));
        }
        params
    }
}

/// Parameters a family needs.
pub fn required_params(family: Family) -> &'static [Param] {
    match family {
        Family::Sigmoid => &[Param::B, Param::R, Param::Q, Param::M],
        Family::Logistic => &[Param::B, Param::R, Param::M, Param::Lambda],
        Family::Blended => &[Param::B, Param::R, Param::Q, Param::M, Param::Lambda, Param::Alpha],
    }
}

/// Sample counts per tyche coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TycheSampling {
    pub default_count: usize,
    #[serde(default)]
    pub per_param: BTreeMap<Param, usize>,
}

impl Default for TycheSampling {
    fn default() -> Self {
        Self { default_count: 5, per_param: BTreeMap::from([(Param::Alpha, 11)]) }
    }
}

impl TycheSampling {
    pub fn count(&self, param: Param) -> usize {
        self.per_param.get(&param).copied().unwrap_or(self.default_count)
    }
}

/// Cartesian product with the last axis varying fastest.
pub fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    ParameterBox,
    Ball,
    ConvexHull,
}

/// Group embedding over a parameter box.
#[derive(Clone, Debug)]
pub struct ParameterBoxEmbedding {
    pub system: ParametricLake,
    /// Tyche coordinates with their ranges, in [`EMBEDDING_ORDER`].
    pub axes: Vec<(Param, Interval)>,
    /// Whether `axes` was replaced by a box that need not contain every
    /// member's parameters.
    pub literal: bool,
}

/// Hulls member parameters into a single box.
///
/// Parameters listed in `shared` must agree (as exact values) across every
/// member in which they appear; the others become tyche coordinates when
/// their hull has positive width.
pub fn build_parameter_box_embedding(members: &[MemberModel], shared: &[Param]) -> Result<ParameterBoxEmbedding> {
    if members.is_empty() {
        return Err(Error::ContractViolation("embedding needs at least one member".into()));
    }
    let mut base = members[0].nominal();
    let mut axes = Vec::new();
    for &p in &EMBEDDING_ORDER {
        let ranges: Vec<Interval> = members.iter().filter_map(|m| m.interval(p)).collect();
        let Some(first) = ranges.first().copied() else { continue };
        if shared.contains(&p) {
            if ranges.iter().any(|iv| *iv != first || iv.width() > 0.0) {
                return Err(Error::NonEmbeddable { parameter: p.name().to_string() });
            }
            base.set(p, first.lo);
            continue;
        }
        let hull = ranges.iter().fold(first, |acc, iv| acc.hull(iv));
        base.set(p, hull.lo);
        if hull.width() > 0.0 {
            axes.push((p, hull));
        }
    }
    let blended = axes.iter().any(|(p, _)| *p == Param::Alpha) || (base.alpha > 0.0 && base.alpha < 1.0);
    let family = if blended { Family::Blended } else { members[0].family };
    let system = ParametricLake { family, base, axes: axes.iter().map(|(p, _)| *p).collect() };
    Ok(ParameterBoxEmbedding { system, axes, literal: false })
}

impl ParameterBoxEmbedding {
    /// Replaces the hulled ranges by `ranges` (same coordinates).
    pub fn with_literal_box(mut self, ranges: &[(Param, Interval)]) -> Result<Self> {
        for (p, iv) in self.axes.iter_mut() {
            match ranges.iter().find(|(q, _)| q == p) {
                Some((_, r)) => *iv = *r,
                None => {
                    return Err(Error::ContractViolation(format!("literal box lacks tyche `{}`", p.name())));
                }
            }
        }
        self.literal = true;
        Ok(self)
    }

    /// Widens coordinate `param` to cover `range`, adding it as a tyche when
    /// it was not one. Members stay embedded since ranges only grow.
    pub fn with_extra_axis(mut self, param: Param, range: Interval) -> Self {
        match self.axes.iter_mut().find(|(p, _)| *p == param) {
            Some((_, iv)) => *iv = iv.hull(&range),
            None => {
                let base = Interval::point(self.system.base.get(param));
                let iv = base.hull(&range);
                self.system.base.set(param, iv.lo);
                self.axes.push((param, iv));
                self.system.axes.push(param);
                if param == Param::Alpha {
                    self.system.family = Family::Blended;
                }
            }
        }
        self
    }

    pub fn tyche_box(&self) -> TycheBox {
        TycheBox { axes: self.axes.iter().map(|(p, iv)| (p.name().to_string(), *iv)).collect() }
    }

    /// Tyche samples: a uniform grid on each range, joined with every
    /// member's own samples that fall in range, so each member sample is
    /// realised exactly by some group sample.
    ///
    /// Coordinates that do not enter the model at a sample (the sigmoid
    /// steepness when `alpha = 1`, the logistic one when `alpha = 0`) are
    /// reset to the base value and duplicates removed.
    pub fn tyche_samples(&self, members: &[MemberModel], sampling: &TycheSampling) -> Vec<Vec<f64>> {
        let per_axis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|&(p, iv)| {
                let mut xs = iv.samples(sampling.count(p));
                for m in members {
                    if let Some(own) = m.interval(p) {
                        xs.extend(own.samples(sampling.count(p)).into_iter().filter(|x| iv.contains(*x)));
                    }
                }
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                xs
            })
            .collect();
        let alpha = self.axes.iter().position(|(p, _)| *p == Param::Alpha);
        let q = self.axes.iter().position(|(p, _)| *p == Param::Q);
        let lambda = self.axes.iter().position(|(p, _)| *p == Param::Lambda);
        let mut seen = std::collections::HashSet::new();
        cartesian(&per_axis)
            .into_iter()
            .map(|mut v| {
                let a = alpha.map_or(self.system.base.alpha, |i| v[i]);
                if a <= 0.0 {
                    if let Some(i) = lambda {
                        v[i] = self.system.base.lambda;
                    }
                }
                if a >= 1.0 {
                    if let Some(i) = q {
                        v[i] = self.system.base.q;
                    }
                }
                v
            })
            .filter(|v| seen.insert(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()))
            .collect()
    }

    /// Tyche value reproducing a model with parameters `params`, clamped
    /// into the box.
    pub fn tyche_for(&self, params: &ModelParams) -> Vec<f64> {
        self.axes.iter().map(|(p, iv)| params.get(*p).clamp(iv.lo, iv.hi)).collect()
    }
}

/// `f(x, u, v) = f_1(x, u) + M(x) v` with `v` in the unit ball.
#[derive(Clone, Debug)]
pub struct BallEmbedding {
    pub base: ParametricLake,
    pub grid: Arc<Grid>,
    /// Radius per grid cell.
    pub radii: Vec<f64>,
}

/// Ball embedding around the first member. Interval members contribute
/// every sampled model; the radius at a cell is the largest difference to
/// the base field over all models and `controls`.
pub fn build_ball_embedding(
    members: &[MemberModel],
    grid: Arc<Grid>,
    controls: &[f64],
    sampling: &TycheSampling,
) -> Result<BallEmbedding> {
    if members.len() < 2 {
        return Err(Error::ContractViolation("ball embedding needs at least two members".into()));
    }
    if controls.is_empty() || grid.is_empty() {
        return Err(Error::ContractViolation("empty probe set".into()));
    }
    if grid.dim() != 2 {
        return Err(Error::ContractViolation("lake models live on a two-dimensional grid".into()));
    }
    let base = ParametricLake::point(members[0].family, members[0].nominal());
    let models: Vec<ParametricLake> = members.iter().flat_map(|m| m.sample_models(sampling)).collect();
    let mut radii = vec![0.0; grid.len()];
    let mut x = [0.0; 2];
    let (mut f1, mut fi, mut e1, mut ei) = ([0.0; 2], [0.0; 2], [0.0; 2], [0.0; 2]);
    for (cell, radius) in radii.iter_mut().enumerate() {
        grid.node_into(cell, &mut x);
        base.drift(&x, &[], &mut f1)?;
        for model in &models {
            model.drift(&x, &[], &mut fi)?;
            for &u in controls {
                base.control_effect(&x, u, &mut e1);
                model.control_effect(&x, u, &mut ei);
                let d = (f1[0] + e1[0] - fi[0] - ei[0]).hypot(f1[1] + e1[1] - fi[1] - ei[1]);
                *radius = f64::max(*radius, d);
            }
        }
    }
    Ok(BallEmbedding { base, grid, radii })
}

impl BallEmbedding {
    /// Radius at the grid cell nearest to `x` (coordinates clamped into
    /// the grid window).
    pub fn radius_at(&self, x: &[f64]) -> f64 {
        let idx: Vec<usize> = self
            .grid
            .axes()
            .iter()
            .zip(x)
            .map(|(a, &xi)| a.project(xi.clamp(a.lo, a.hi)).unwrap_or(0))
            .collect();
        self.radii[self.grid.flat(&idx)]
    }

    /// Unit-disk samples: the centre and `rings` rings of eight directions.
    pub fn tyche_samples(&self, rings: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0, 0.0]];
        for ring in 1..=rings {
            let rho = ring as f64 / rings as f64;
            for k in 0..8 {
                let (s, c) = (TAU * k as f64 / 8.0).sin_cos();
                out.push(vec![rho * c, rho * s]);
            }
        }
        out
    }
}

impl TychasticSystem for BallEmbedding {
    fn state_dim(&self) -> usize {
        2
    }

    fn tyche_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        self.base.drift(x, &[], out)?;
        let m = self.radius_at(x);
        out[0] += m * v[0];
        out[1] += m * v[1];
        Ok(())
    }

    fn control_effect(&self, x: &[f64], u: f64, out: &mut [f64]) {
        self.base.control_effect(x, u, out)
    }

    fn clamp_axis(&self, axis: usize, value: f64) -> f64 {
        self.base.clamp_axis(axis, value)
    }
}

/// `f(x, u, v) = f_1(x, u) + sum_i v_i (f_{i+1}(x, u) - f_1(x, u))` with
/// `v_i >= 0` and `sum v_i <= 1`.
#[derive(Clone, Debug)]
pub struct HullEmbedding {
    pub models: Vec<ParametricLake>,
}

pub fn build_hull_embedding(members: &[MemberModel]) -> Result<HullEmbedding> {
    if members.is_empty() || members.len() > MAX_HULL_MEMBERS {
        return Err(Error::ContractViolation(format!(
            "convex-hull embedding supports 1 to {MAX_HULL_MEMBERS} members"
        )));
    }
    if let Some(m) = members.iter().find(|m| !m.is_point()) {
        return Err(Error::ContractViolation(format!(
            "convex-hull embedding needs point beliefs; member `{}` has ranges",
            m.id
        )));
    }
    Ok(HullEmbedding { models: members.iter().map(|m| ParametricLake::point(m.family, m.nominal())).collect() })
}

impl HullEmbedding {
    /// Weight vectors on the simplex lattice with `resolution` steps.
    pub fn tyche_samples(&self, resolution: usize) -> Vec<Vec<f64>> {
        let dim = self.models.len() - 1;
        let n = resolution.max(1);
        let mut out = Vec::new();
        let mut k = vec![0usize; dim];
        loop {
            if k.iter().sum::<usize>() <= n {
                out.push(k.iter().map(|&ki| ki as f64 / n as f64).collect());
            }
            // odometer over [0, n]^dim, last axis fastest
            let mut axis = dim;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                k[axis] += 1;
                if k[axis] <= n {
                    break;
                }
                k[axis] = 0;
            }
        }
    }
}

impl TychasticSystem for HullEmbedding {
    fn state_dim(&self) -> usize {
        2
    }

    fn tyche_dim(&self) -> usize {
        self.models.len() - 1
    }

    fn drift(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let mut base = [0.0; 2];
        self.models[0].drift(x, &[], &mut base)?;
        out[..2].copy_from_slice(&base);
        let mut fi = [0.0; 2];
        for (model, &w) in self.models[1..].iter().zip(v) {
            if w != 0.0 {
                model.drift(x, &[], &mut fi)?;
                out[0] += w * (fi[0] - base[0]);
                out[1] += w * (fi[1] - base[1]);
            }
        }
        Ok(())
    }

    fn control_effect(&self, x: &[f64], u: f64, out: &mut [f64]) {
        self.models[0].control_effect(x, u, out)
    }

    fn clamp_axis(&self, axis: usize, value: f64) -> f64 {
        self.models[0].clamp_axis(axis, value)
    }
}

/// Any of the three embeddings.
#[derive(Clone, Debug)]
pub enum Embedding {
    ParameterBox(ParameterBoxEmbedding),
    Ball(BallEmbedding),
    Hull(HullEmbedding),
}

impl Embedding {
    pub fn kind(&self) -> EmbeddingKind {
        match self {
            Embedding::ParameterBox(_) => EmbeddingKind::ParameterBox,
            Embedding::Ball(_) => EmbeddingKind::Ball,
            Embedding::Hull(_) => EmbeddingKind::ConvexHull,
        }
    }

    pub fn system(&self) -> Arc<dyn TychasticSystem> {
        match self {
            Embedding::ParameterBox(e) => Arc::new(e.system.clone()),
            Embedding::Ball(e) => Arc::new(e.clone()),
            Embedding::Hull(e) => Arc::new(e.clone()),
        }
    }

    /// Tyche samples for solving; `resolution` is the ring count (ball) or
    /// lattice step count (hull) and is ignored for parameter boxes.
    pub fn tyche_samples(&self, members: &[MemberModel], sampling: &TycheSampling, resolution: usize) -> Vec<Vec<f64>> {
        match self {
            Embedding::ParameterBox(e) => e.tyche_samples(members, sampling),
            Embedding::Ball(e) => e.tyche_samples(resolution),
            Embedding::Hull(e) => e.tyche_samples(resolution),
        }
    }
}

/// Outcome of [`verify_embedding`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub samples: usize,
    pub max_residual: f64,
    pub worst_member: Option<usize>,
    pub worst_state: Vec<f64>,
    pub worst_control: f64,
}

/// Checks `f_i(x, u) = f(x, u, v)` on random `(x, u, i)`, with `v` chosen in
/// closed form for each embedding kind and kept inside the tyche set.
///
/// States are drawn uniformly in `window` (parameter box, hull) or among
/// grid nodes (ball, whose radius is defined per node). Interval members
/// are evaluated at parameters drawn uniformly within their beliefs.
pub fn verify_embedding(
    embedding: &Embedding,
    members: &[MemberModel],
    window: &[Interval],
    controls: &ControlBox,
    samples: usize,
    seed: u64,
) -> Result<EmbeddingReport> {
    if members.is_empty() {
        return Err(Error::ContractViolation("no members to verify".into()));
    }
    let system = embedding.system();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EmbeddingReport {
        samples,
        max_residual: 0.0,
        worst_member: None,
        worst_state: Vec::new(),
        worst_control: 0.0,
    };
    let mut fi = [0.0; 2];
    let mut f = [0.0; 2];
    let ball_samples: Vec<Vec<ParametricLake>> = match embedding {
        Embedding::Ball(_) => members.iter().map(|m| m.sample_models(&TycheSampling::default())).collect(),
        _ => Vec::new(),
    };
    for _ in 0..samples {
        let i = rng.gen_range(0..members.len());
        let u = if controls.u_min < controls.u_max {
            rng.gen_range(controls.u_min..=controls.u_max)
        } else {
            controls.u_min
        };
        let x: Vec<f64> = match embedding {
            Embedding::Ball(e) => e.grid.node(rng.gen_range(0..e.grid.len())),
            _ => window.iter().map(|iv| if iv.width() > 0.0 { rng.gen_range(iv.lo..=iv.hi) } else { iv.lo }).collect(),
        };
        let (member, v) = match embedding {
            Embedding::ParameterBox(e) => {
                let params = members[i].draw_params(&mut rng);
                (ParametricLake::point(members[i].family, params), e.tyche_for(&params))
            }
            Embedding::Hull(_) => {
                let mut v = vec![0.0; members.len() - 1];
                if i > 0 {
                    v[i - 1] = 1.0;
                }
                (ParametricLake::point(members[i].family, members[i].nominal()), v)
            }
            Embedding::Ball(e) => {
                let models = &ball_samples[i];
                let model = models[rng.gen_range(0..models.len())].clone();
                let mut f1 = [0.0; 2];
                e.base.drift(&x, &[], &mut f1)?;
                model.drift(&x, &[], &mut fi)?;
                let m = e.radius_at(&x);
                let mut v = if m > 0.0 {
                    vec![(fi[0] - f1[0]) / m, (fi[1] - f1[1]) / m]
                } else {
                    vec![0.0, 0.0]
                };
                let norm = v[0].hypot(v[1]);
                if norm > 1.0 {
                    v.iter_mut().for_each(|c| *c /= norm);
                }
                (model, v)
            }
        };
        crate::dynamics::eval_vector_field(&member, &x, u, &[], &mut fi)?;
        crate::dynamics::eval_vector_field(system.as_ref(), &x, u, &v, &mut f)?;
        let residual = (fi[0] - f[0]).hypot(fi[1] - f[1]);
        if residual > report.max_residual || report.worst_member.is_none() {
            report.max_residual = report.max_residual.max(residual);
            report.worst_member = Some(i);
            report.worst_state = x.clone();
            report.worst_control = u;
        }
    }
    if report.max_residual > EMBEDDING_TOLERANCE {
        return Err(Error::EmbeddingViolation {
            residual: report.max_residual,
            member: report.worst_member.unwrap_or(0),
            state: report.worst_state,
            control: report.worst_control,
        });
    }
    Ok(report)
}
