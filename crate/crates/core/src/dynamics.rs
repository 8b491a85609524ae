//! Phosphorus models for the lake and neighbouring farms problem.
//!
//! Every model family shares the same state `(L, P)`: the phosphorus inflow
//! rate and the in-lake concentration. The inflow is driven directly by the
//! control (`dL/dt = u`), the concentration follows
//!
//! ```text
//! dP/dt = -b P + L + r [ (1 - a) P^q / (m^q + P^q) + a P / (P + m exp(-l (P - m))) ]
//! ```
//!
//! where `a = 0` gives the sigmoid family `S`, `a = 1` the logistic family
//! `S'` and anything in between the blended family `B`. All families are
//! evaluated through the same expression so that a blended model at `a = 0`
//! is bit-identical to the corresponding `S` model.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::{Error, Result};

/// Cap on the magnitude of the exponent in the logistic recycling term.
pub const MAX_EXPONENT: f64 = 700.0;

/// Default explicit Euler time step (years).
pub const DEFAULT_TAU: f64 = 0.1;

/// Lake volume (10^9 m^3) used to convert tonnage to concentrations.
pub const LAKE_VOLUME: f64 = 3.6;

/// A continuous-time system `x' = f(x, u, v)` with scalar control `u` and
/// tyche vector `v`, split as `f(x, u, v) = drift(x, v) + control_effect(x, u)`.
///
/// The split lets the solver evaluate the expensive tyche-dependent part
/// once per state and reuse it for every control sample.
pub trait TychasticSystem: Send + Sync {
    fn state_dim(&self) -> usize;

    fn tyche_dim(&self) -> usize;

    /// `f(x, 0, v)`, written into `out`.
    fn drift(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()>;

    /// `f(x, u, v) - f(x, 0, v)`. Must not depend on `v`.
    fn control_effect(&self, x: &[f64], u: f64, out: &mut [f64]);

    /// Maps one coordinate of a raw Euler successor back onto the physical
    /// domain.
    fn clamp_axis(&self, _axis: usize, value: f64) -> f64 {
        value
    }
}

/// Evaluates `f(x, u, v)`.
pub fn eval_vector_field(
    system: &dyn TychasticSystem,
    x: &[f64],
    u: f64,
    v: &[f64],
    out: &mut [f64],
) -> Result<()> {
    check_dims(system, x, v, out)?;
    let mut effect = [0.0; 4];
    let effect = &mut effect[..x.len()];
    system.drift(x, v, out)?;
    system.control_effect(x, u, effect);
    for (o, c) in out.iter_mut().zip(effect.iter()) {
        *o += *c;
    }
    if out.iter().any(|c| !c.is_finite()) {
        return Err(Error::NumericOverflow { state: x.to_vec() });
    }
    Ok(())
}

/// One explicit Euler step `x + tau f(x, u, v)`, followed by the system's
/// per-axis domain clamp.
pub fn step_discrete(
    system: &dyn TychasticSystem,
    x: &[f64],
    u: f64,
    v: &[f64],
    tau: f64,
    out: &mut [f64],
) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::ContractViolation(format!("time step must be positive, got {tau}")));
    }
    let mut field = [0.0; 4];
    let field = &mut field[..x.len()];
    eval_vector_field(system, x, u, v, field)?;
    for (k, ((o, xi), fi)) in out.iter_mut().zip(x).zip(field.iter()).enumerate() {
        *o = system.clamp_axis(k, xi + tau * fi);
    }
    Ok(())
}

fn check_dims(system: &dyn TychasticSystem, x: &[f64], v: &[f64], out: &[f64]) -> Result<()> {
    let n = system.state_dim();
    if x.len() != n || out.len() != n || n > 4 {
        return Err(Error::ContractViolation(format!(
            "state dimension {} does not match system dimension {n}",
            x.len()
        )));
    }
    if v.len() != system.tyche_dim() {
        return Err(Error::ContractViolation(format!(
            "tyche dimension {} does not match system tyche dimension {}",
            v.len(),
            system.tyche_dim()
        )));
    }
    Ok(())
}

/// Lake state: phosphorus inflow `L` and concentration `P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LakeState {
    pub l: f64,
    pub p: f64,
}

impl LakeState {
    pub fn new(l: f64, p: f64) -> Result<Self> {
        if !(l >= 0.0 && p >= 0.0) {
            return Err(Error::ContractViolation(format!(
                "lake state must be nonnegative, got L={l}, P={p}"
            )));
        }
        Ok(Self { l, p })
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.l, self.p]
    }
}

/// Model parameters; see the module documentation for their roles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub b: f64,
    pub r: f64,
    pub q: f64,
    pub m: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl ModelParams {
    /// Sigmoid family `S(b, r, q, m)`.
    pub fn sigmoid(b: f64, r: f64, q: f64, m: f64) -> Self {
        Self { b, r, q, m, lambda: 1.0, alpha: 0.0 }
    }

    /// Logistic family `S'(b, r, m, lambda)`.
    pub fn logistic(b: f64, r: f64, m: f64, lambda: f64) -> Self {
        Self { b, r, q: 1.0, m, lambda, alpha: 1.0 }
    }

    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::B => self.b,
            Param::R => self.r,
            Param::Q => self.q,
            Param::M => self.m,
            Param::Lambda => self.lambda,
            Param::Alpha => self.alpha,
        }
    }

    pub fn set(&mut self, param: Param, value: f64) {
        match param {
            Param::B => self.b = value,
            Param::R => self.r = value,
            Param::Q => self.q = value,
            Param::M => self.m = value,
            Param::Lambda => self.lambda = value,
            Param::Alpha => self.alpha = value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::ContractViolation(format!("invalid parameters: {what}")));
        if !(self.b > 0.0) {
            return bad("b must be positive");
        }
        if !(self.r >= 0.0) {
            return bad("r must be nonnegative");
        }
        if !(self.m > 0.0) {
            return bad("m must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.alpha < 1.0 && !(self.q > 0.0) {
            return bad("q must be positive when alpha < 1");
        }
        if self.alpha > 0.0 && !(self.lambda > 0.0) {
            return bad("lambda must be positive when alpha > 0");
        }
        Ok(())
    }

    /// Blended recycling fraction in `[0, 1]` (multiply by `r` for the rate).
    #[inline]
    pub fn recycling(&self, p: f64) -> f64 {
        let hill = if self.alpha < 1.0 { hill(p, self.m, self.q) } else { 0.0 };
        let logi = if self.alpha > 0.0 { logistic(p, self.m, self.lambda) } else { 0.0 };
        (1.0 - self.alpha) * hill + self.alpha * logi
    }

    /// `dP/dt` at `(L, P)`.
    #[inline]
    pub fn phosphorus_rate(&self, l: f64, p: f64) -> f64 {
        -self.b * p + l + self.r * self.recycling(p)
    }

    /// Inflow `L(P)` on the curve of equilibria (`dP/dt = 0`).
    pub fn equilibria_inflow(&self, p: f64) -> f64 {
        self.b * p - self.r * self.recycling(p)
    }

    /// Equilibrium concentrations in `[p_lo, p_hi]` at fixed inflow `l`,
    /// located by a sign-change scan with `steps` cells refined by bisection.
    pub fn equilibria_at_inflow(&self, l: f64, p_lo: f64, p_hi: f64, steps: usize) -> Vec<f64> {
        let g = |p: f64| self.phosphorus_rate(l, p);
        let mut roots = Vec::new();
        let h = (p_hi - p_lo) / steps as f64;
        let mut a = p_lo;
        let mut ga = g(a);
        if ga == 0.0 {
            roots.push(a);
        }
        for k in 1..=steps {
            let b = if k == steps { p_hi } else { p_lo + k as f64 * h };
            let gb = g(b);
            if gb == 0.0 {
                roots.push(b);
            } else if ga != 0.0 && ga.signum() != gb.signum() {
                roots.push(bisect(&g, a, b, ga));
            }
            a = b;
            ga = gb;
        }
        roots
    }
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm.signum() == ga.signum() {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// `P^q / (m^q + P^q)`.
#[inline]
pub fn hill(p: f64, m: f64, q: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 + (m / p).powf(q))
}

/// `P / (P + m exp(-lambda (P - m)))`, exponent clamped to `MAX_EXPONENT`.
#[inline]
pub fn logistic(p: f64, m: f64, lambda: f64) -> f64 {
    let e = (-lambda * (p - m)).clamp(-MAX_EXPONENT, MAX_EXPONENT);
    p / (p + m * e.exp())
}

/// Model parameter names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    B,
    R,
    Q,
    M,
    Lambda,
    Alpha,
}

impl Param {
    pub const ALL: [Param; 6] = [Param::B, Param::R, Param::Q, Param::M, Param::Lambda, Param::Alpha];

    pub fn name(self) -> &'static str {
        match self {
            Param::B => "b",
            Param::R => "r",
            Param::Q => "q",
            Param::M => "m",
            Param::Lambda => "lambda",
            Param::Alpha => "alpha",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Param::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Closed interval; point values have `lo == hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::ContractViolation(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    /// `n` endpoint-inclusive uniform samples (at least both endpoints); a
    /// degenerate interval yields its single value.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        if self.lo == self.hi {
            return vec![self.lo];
        }
        let n = n.max(2);
        let step = (self.hi - self.lo) / (n - 1) as f64;
        (0..n)
            .map(|k| if k == n - 1 { self.hi } else { self.lo + k as f64 * step })
            .collect()
    }
}

/// A parameter that is either known exactly or believed to lie in a range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Point(f64),
    Range([f64; 2]),
}

impl ParamValue {
    pub fn interval(&self) -> Interval {
        match *self {
            ParamValue::Point(x) => Interval::point(x),
            ParamValue::Range([lo, hi]) => Interval { lo, hi },
        }
    }

    pub fn is_point(&self) -> bool {
        let i = self.interval();
        i.lo == i.hi
    }

    pub fn scaled(&self, factor: f64) -> ParamValue {
        match *self {
            ParamValue::Point(x) => ParamValue::Point(x * factor),
            ParamValue::Range([lo, hi]) => ParamValue::Range([lo * factor, hi * factor]),
        }
    }
}

/// Model family of a member's belief.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Sigmoid recycling (`alpha = 0`).
    #[serde(rename = "S")]
    Sigmoid,
    /// Logistic-exponential recycling (`alpha = 1`).
    #[serde(rename = "S'")]
    Logistic,
    /// Blend of both with weight `alpha`.
    #[serde(rename = "B")]
    Blended,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::Sigmoid => "S",
            Family::Logistic => "S'",
            Family::Blended => "B",
        }
    }
}

/// Control interval `[u_min, u_max]` for the inflow variation rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    pub u_min: f64,
    pub u_max: f64,
}

impl ControlBox {
    pub fn new(u_min: f64, u_max: f64) -> Result<Self> {
        if !(u_min <= u_max) {
            return Err(Error::ContractViolation(format!("u_min {u_min} exceeds u_max {u_max}")));
        }
        Ok(Self { u_min, u_max })
    }

    /// `U = [-delta / 2, delta]`.
    pub fn from_delta(delta: f64) -> Result<Self> {
        Self::new(-0.5 * delta, delta)
    }

    /// Endpoint-inclusive uniform control samples, ascending.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        Interval { lo: self.u_min, hi: self.u_max }.samples(n)
    }
}

/// Named tyche intervals `v_1 ... v_q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TycheBox {
    pub axes: Vec<(String, Interval)>,
}

impl TycheBox {
    pub fn new(axes: Vec<(String, Interval)>) -> Result<Self> {
        for (i, (name, iv)) in axes.iter().enumerate() {
            if !(iv.lo <= iv.hi) {
                return Err(Error::ContractViolation(format!("tyche `{name}` is empty")));
            }
            if axes[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::ContractViolation(format!("duplicate tyche `{name}`")));
            }
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn get(&self, name: &str) -> Option<Interval> {
        self.axes.iter().find(|(n, _)| n == name).map(|(_, iv)| *iv)
    }
}

/// A lake model whose parameters listed in `axes` are read from the tyche
/// vector (in that order); all others come from `base`.
///
/// With no axes this is a plain point-parameter model. With axes
/// `(b, alpha, q, lambda)` it is the group embedding `f_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricLake {
    pub family: Family,
    pub base: ModelParams,
    pub axes: Vec<Param>,
}

impl ParametricLake {
    pub fn point(family: Family, base: ModelParams) -> Self {
        Self { family, base, axes: Vec::new() }
    }

    /// The group embedding `f_B`: tyche `v = (b, alpha, q, lambda)`.
    pub fn group_embedding(base: ModelParams) -> Self {
        Self {
            family: Family::Blended,
            base,
            axes: vec![Param::B, Param::Alpha, Param::Q, Param::Lambda],
        }
    }

    #[inline]
    pub fn params_at(&self, v: &[f64]) -> ModelParams {
        let mut p = self.base;
        for (axis, value) in self.axes.iter().zip(v) {
            p.set(*axis, *value);
        }
        p
    }
}

impl TychasticSystem for ParametricLake {
    fn state_dim(&self) -> usize {
        2
    }

    fn tyche_dim(&self) -> usize {
        self.axes.len()
    }

    fn drift(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let params = self.params_at(v);
        out[0] = 0.0;
        out[1] = params.phosphorus_rate(x[0], x[1]);
        if !out[1].is_finite() {
            return Err(Error::NumericOverflow { state: x.to_vec() });
        }
        Ok(())
    }

    fn control_effect(&self, _x: &[f64], u: f64, out: &mut [f64]) {
        out[0] = u;
        out[1] = 0.0;
    }

    fn clamp_axis(&self, axis: usize, value: f64) -> f64 {
        if axis == 1 && value < 0.0 {
            0.0
        } else {
            value
        }
    }
}

/// Largest value of `L(P)` over `P` in `[0, p_max]` across the given models.
pub fn max_equilibrium_inflow(models: &[ModelParams], p_max: f64) -> f64 {
    const STEPS: usize = 2000;
    let mut best = f64::NEG_INFINITY;
    for model in models {
        for k in 0..=STEPS {
            let p = p_max * k as f64 / STEPS as f64;
            best = best.max(model.equilibria_inflow(p));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> ModelParams {
        ModelParams::sigmoid(2.2676, 101.96, 2.222, 26.90)
    }

    fn fig1() -> ModelParams {
        ModelParams::sigmoid(0.7, 1.0, 8.0, 1.0)
    }

    fn field(model: &ParametricLake, x: [f64; 2], u: f64, v: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        eval_vector_field(model, &x, u, v, &mut out).unwrap();
        out
    }

    #[test]
    fn half_saturation_equilibrium() {
        let model = ParametricLake::point(Family::Sigmoid, table1());
        let l = table1().equilibria_inflow(26.90);
        // closed form at P = m: b m - r / 2
        assert!((l - (2.2676 * 26.90 - 101.96 / 2.0)).abs() < 1e-12);
        assert!((l - 10.02).abs() < 5e-3);
        let f = field(&model, [l, 26.90], 0.0, &[]);
        assert_eq!(f[0], 0.0);
        assert!(f[1].abs() <= 1e-12 * 61.0);
    }

    #[test]
    fn origin_is_stationary() {
        for params in [table1(), ModelParams::logistic(2.2676, 101.96, 26.9, 1.0 / 19.0), fig1()] {
            let model = ParametricLake::point(Family::Blended, params);
            assert_eq!(field(&model, [0.0, 0.0], 0.0, &[]), [0.0, 0.0]);
        }
    }

    #[test]
    fn group_embedding_at_alpha_zero_is_sigmoid() {
        let fb = ParametricLake::group_embedding(ModelParams { alpha: 0.0, ..table1() });
        let s = ParametricLake::point(Family::Sigmoid, table1());
        let x = [10.02, 26.90];
        assert_eq!(field(&fb, x, 0.0, &[2.2676, 0.0, 2.222, 0.05]), field(&s, x, 0.0, &[]));
    }

    #[test]
    fn tyche_dimension_is_checked() {
        let fb = ParametricLake::group_embedding(table1());
        let mut out = [0.0; 2];
        assert!(matches!(
            eval_vector_field(&fb, &[1.0, 1.0], 0.0, &[2.2], &mut out),
            Err(Error::ContractViolation(_))
        ));
        let s = ParametricLake::point(Family::Sigmoid, table1());
        assert!(eval_vector_field(&s, &[1.0, 1.0], 0.0, &[1.0], &mut out).is_err());
    }

    #[test]
    fn overflow_reported_with_state() {
        let model = ParametricLake::point(Family::Sigmoid, table1());
        let mut out = [0.0; 2];
        let err = eval_vector_field(&model, &[f64::MAX, f64::MAX], 0.0, &[], &mut out).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { .. }));
    }

    #[test]
    fn euler_step_examples() {
        let model = ParametricLake::point(Family::Sigmoid, fig1());
        let mut next = [0.0; 2];
        step_discrete(&model, &[0.1, 0.5], 0.0, &[], 0.1, &mut next).unwrap();
        let p8 = 0.5f64.powi(8);
        let expected = 0.5 + 0.1 * (-0.35 + 0.1 + p8 / (1.0 + p8));
        assert_eq!(next[0], 0.1);
        assert!((next[1] - expected).abs() < 1e-15);

        step_discrete(&model, &[0.1, 0.5], 0.9, &[], 0.1, &mut next).unwrap();
        assert!((next[0] - 0.19).abs() < 1e-15);

        let eq = ParametricLake::point(Family::Sigmoid, table1());
        let l = table1().equilibria_inflow(26.90);
        step_discrete(&eq, &[l, 26.90], 0.0, &[], 0.1, &mut next).unwrap();
        assert_eq!(next[0], l);
        assert!((next[1] - 26.90).abs() < 1e-12);

        assert!(step_discrete(&eq, &[l, 26.90], 0.0, &[], 0.0, &mut next).is_err());
    }

    #[test]
    fn negative_concentration_is_clamped() {
        let model = ParametricLake::point(Family::Sigmoid, fig1());
        let mut next = [0.0; 2];
        step_discrete(&model, &[0.0, 0.01], 0.0, &[], 5.0, &mut next).unwrap();
        assert_eq!(next[1], 0.0);
    }

    #[test]
    fn fig1_highest_equilibrium_under_pmax() {
        // independent scan of L(P) - 0.1 on [0, 1.4] at step 1e-4
        let model = fig1();
        let mut last = None;
        let mut prev = model.equilibria_inflow(0.0) - 0.1;
        for k in 1..=14_000 {
            let p = k as f64 * 1e-4;
            let g = model.equilibria_inflow(p) - 0.1;
            if prev.signum() != g.signum() {
                last = Some(p);
            }
            prev = g;
        }
        let scan = last.unwrap();
        let roots = model.equilibria_at_inflow(0.1, 0.0, 1.4, 1400);
        let highest = *roots.last().unwrap();
        assert!((highest - scan).abs() < 1e-4);
        assert!((highest - 1.08).abs() < 1e-2, "P_e = {highest}");
        assert_eq!(roots.len(), 2);
        assert_eq!(model.equilibria_at_inflow(0.1, 0.0, 3.0, 3000).len(), 3);
    }

    #[test]
    fn blend_extremes_match_pure_families() {
        let b = ModelParams { b: 2.2, r: 90.0, q: 2.3, m: 26.0, lambda: 0.06, alpha: 0.0 };
        let s = ModelParams::sigmoid(2.2, 90.0, 2.3, 26.0);
        let sp = ModelParams::logistic(2.2, 90.0, 26.0, 0.06);
        for p in [0.0, 0.3, 5.0, 26.0, 40.0, 1e3] {
            assert_eq!(b.phosphorus_rate(3.0, p), s.phosphorus_rate(3.0, p));
            let b1 = ModelParams { alpha: 1.0, ..b };
            assert_eq!(b1.phosphorus_rate(3.0, p), sp.phosphorus_rate(3.0, p));
        }
    }

    #[test]
    fn samples_include_endpoints() {
        let s = ControlBox::new(-0.9, 0.9).unwrap().samples(11);
        assert_eq!(s.len(), 11);
        assert_eq!(s[0], -0.9);
        assert_eq!(s[10], 0.9);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(Interval::point(2.0).samples(5), vec![2.0]);
        let u = ControlBox::from_delta(3.15).unwrap();
        assert_eq!((u.u_min, u.u_max), (-1.575, 3.15));
    }

    #[test]
    fn lake_state_rejects_negative() {
        assert!(LakeState::new(-1.0, 0.0).is_err());
        assert!(LakeState::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn tyche_box_names_unique() {
        let iv = Interval::new(0.0, 1.0).unwrap();
        assert!(TycheBox::new(vec![("b".into(), iv), ("b".into(), iv)]).is_err());
        assert!(TycheBox::new(vec![("b".into(), iv), ("q".into(), iv)]).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn equilibria_curve_zeroes_rate(p in 0.0f64..60.0, b in 2.0f64..2.5, q in 2.0f64..3.0) {
                let model = ModelParams::sigmoid(b, 101.96, q, 26.9);
                let l = model.equilibria_inflow(p);
                let rate = model.phosphorus_rate(l, p);
                let scale = (b * p).abs().max(l.abs()).max(1e-300);
                prop_assert!(rate.abs() <= 1e-12 * scale.max(1.0));
            }

            #[test]
            fn step_is_affine_in_control(l in 0.0f64..50.0, p in 0.0f64..30.0, u1 in -2.0f64..3.0, u2 in -2.0f64..3.0) {
                let model = ParametricLake::point(Family::Sigmoid, ModelParams::sigmoid(2.2676, 101.96, 2.222, 26.9));
                let mut a = [0.0; 2];
                let mut b = [0.0; 2];
                step_discrete(&model, &[l, p], u1, &[], 0.1, &mut a).unwrap();
                step_discrete(&model, &[l, p], u2, &[], 0.1, &mut b).unwrap();
                prop_assert_eq!(a[1], b[1]);
                prop_assert_eq!(a[0], l + 0.1 * u1);
                prop_assert_eq!(b[0], l + 0.1 * u2);
            }
        }
    }
}
