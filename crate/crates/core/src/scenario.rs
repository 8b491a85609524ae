//! Scenario files: the group project `(K, U)`, member beliefs and
//! discretisation settings, plus run reports.
//!
//! Scenario files are JSON. A file is kept exactly as written
//! ([`ScenarioFile`]) so that it round-trips, and is resolved separately
//! into solver inputs ([`Scenario`]).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    max_equilibrium_inflow, ControlBox, Family, Interval, Param, ParamValue, LAKE_VOLUME,
};
use crate::embedding::{
    build_ball_embedding, build_hull_embedding, build_parameter_box_embedding, Embedding, EmbeddingKind,
    MemberModel, TycheSampling,
};
use crate::grid::{Axis, CellSet, Edge, Grid};
use crate::oracle2d::LakeBounds;
use crate::par::Execution;
use crate::solver::{DilationMode, DiscreteProblem, Safety, SolveReport, MAX_CONTROLS};
use crate::{Error, Result};

/// Names of the scenarios shipped with the crate.
pub const PACKAGED: [&str; 5] = ["fig1", "two_member_2.3", "bourget_group", "bourget_pmax15", "bourget_pmax15_mtyche"];

/// Source text of a packaged scenario.
pub fn packaged(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".scn").unwrap_or(name);
    Some(match name {
        "fig1" => include_str!("../scenarios/fig1.scn"),
        "two_member_2.3" => include_str!("../scenarios/two_member_2.3.scn"),
        "bourget_group" => include_str!("../scenarios/bourget_group.scn"),
        "bourget_pmax15" => include_str!("../scenarios/bourget_pmax15.scn"),
        "bourget_pmax15_mtyche" => include_str!("../scenarios/bourget_pmax15_mtyche.scn"),
        _ => return None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// µg/L for concentrations and inflows.
    Concentration,
    /// Tons in the whole lake; converted with the lake volume.
    Tons,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub l_min: f64,
    pub p_max: f64,
    /// Truncation of the unbounded inflow direction; defaults to four times
    /// the largest equilibrium inflow below `p_max` over all member models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ControlSpec {
    /// `U = [-delta / 2, delta]`.
    Delta { delta: f64 },
    Bounds { u_min: f64, u_max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    pub id: String,
    pub family: Family,
    pub params: BTreeMap<String, ParamValue>,
    /// Alternative beliefs used when `member_params` is `table`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub table_params: BTreeMap<String, ParamValue>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSource {
    #[default]
    Scenario,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub kind: EmbeddingKind,
    /// Parameters all members must agree on (parameter box only).
    #[serde(default)]
    pub shared: Vec<Param>,
    /// Further tyche coordinates added to the group box.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_tyches: BTreeMap<String, ParamValue>,
    /// Replaces the hulled box; members outside it are not embedded exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub literal_box: Option<BTreeMap<String, ParamValue>>,
    #[serde(default = "default_rings")]
    pub ball_rings: usize,
    #[serde(default = "default_hull_resolution")]
    pub hull_resolution: usize,
}

fn default_rings() -> usize {
    2
}

fn default_hull_resolution() -> usize {
    4
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::ParameterBox,
            shared: Vec::new(),
            extra_tyches: BTreeMap::new(),
            literal_box: None,
            ball_rings: default_rings(),
            hull_resolution: default_hull_resolution(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Nodes along `L` and `P`.
    pub nodes: [usize; 2],
    /// Lower end of the `L` axis; defaults to `l_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_lo: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nodes: [401, 401], l_lo: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSpec {
    pub tau: f64,
    pub control_samples: usize,
    pub tyche_samples: usize,
    /// Per-parameter overrides of `tyche_samples`.
    #[serde(default)]
    pub tyche_samples_per_param: BTreeMap<Param, usize>,
    pub dilation_radius: usize,
    pub dilation_mode: DilationMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        Self {
            tau: crate::dynamics::DEFAULT_TAU,
            control_samples: 11,
            tyche_samples: 5,
            tyche_samples_per_param: BTreeMap::from([(Param::Alpha, 11)]),
            dilation_radius: 0,
            dilation_mode: DilationMode::Optimistic,
            max_iterations: None,
        }
    }
}

/// Trajectory demo: a start state and `(u, L target)` phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSpec {
    pub start: [f64; 2],
    pub phases: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cycle: Vec<[f64; 2]>,
}

/// A scenario file as written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Required: stating it removes any doubt about the numbers below.
    #[serde(default)]
    pub units: Option<Units>,
    pub constraints: ConstraintSpec,
    pub controls: ControlSpec,
    pub members: Vec<MemberSpec>,
    #[serde(default)]
    pub member_params: ParamSource,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub discretization: DiscretizationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo: Option<DemoSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
}

/// A validation problem tied to a field path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl From<FieldError> for Error {
    fn from(e: FieldError) -> Self {
        Error::Scenario { field: e.field, message: e.message }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::scenario(json_field(&e), e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serialises");
        s.push('\n');
        s
    }

    /// SHA-256 of the canonical (compact) JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serialises");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every validation problem, in field order.
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, field: &str, msg: &str| {
            if !ok {
                errs.push(FieldError::new(field, msg));
            }
        };
        check(!self.name.trim().is_empty(), "name", "must not be empty");
        check(self.units.is_some(), "units", "must be stated as `concentration` or `tons`");
        let c = &self.constraints;
        check(c.l_min.is_finite() && c.l_min >= 0.0, "constraints.l_min", "must be a nonnegative number");
        check(c.p_max.is_finite() && c.p_max > 0.0, "constraints.p_max", "must be a positive number");
        if let Some(l_max) = c.l_max {
            check(l_max.is_finite() && l_max > c.l_min, "constraints.l_max", "must exceed l_min");
        }
        match self.controls {
            ControlSpec::Delta { delta } => {
                check(delta.is_finite() && delta > 0.0, "controls.delta", "must be a positive number")
            }
            ControlSpec::Bounds { u_min, u_max } => {
                check(u_min.is_finite() && u_max.is_finite() && u_min <= u_max, "controls", "needs u_min <= u_max")
            }
        }
        let d = &self.discretization;
        check(d.tau.is_finite() && d.tau > 0.0, "discretization.tau", "must be positive");
        check(
            (1..=MAX_CONTROLS).contains(&d.control_samples),
            "discretization.control_samples",
            "must lie in 1..=64",
        );
        check(d.tyche_samples >= 1, "discretization.tyche_samples", "must be at least 1");
        check(
            self.grid.nodes.iter().all(|&n| n >= 2),
            "grid.nodes",
            "needs at least two nodes per axis",
        );
        if let Some(l_lo) = self.grid.l_lo {
            check(l_lo.is_finite() && l_lo <= c.l_min, "grid.l_lo", "must not exceed l_min");
        }
        check(!self.members.is_empty(), "members", "at least one member is required");
        for (i, m) in self.members.iter().enumerate() {
            let prefix = format!("members.{}", if m.id.is_empty() { i.to_string() } else { m.id.clone() });
            check(!m.id.is_empty(), &format!("{prefix}.id"), "must not be empty");
            check(
                !self.members[..i].iter().any(|o| o.id == m.id),
                &format!("{prefix}.id"),
                "duplicate member id",
            );
            for (table, params) in [("params", &m.params), ("table_params", &m.table_params)] {
                for (name, value) in params {
                    let field = format!("{prefix}.{table}.{name}");
                    match Param::from_name(name) {
                        None => check(false, &field, "unknown parameter"),
                        Some(_) => {
                            let iv = value.interval();
                            check(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi, &field, "needs lo <= hi");
                        }
                    }
                }
            }
            for &p in crate::embedding::required_params(m.family) {
                check(
                    m.params.contains_key(p.name()),
                    &format!("{prefix}.params.{}", p.name()),
                    &format!("required for family {}", m.family.tag()),
                );
            }
        }
        for name in self.embedding.extra_tyches.keys() {
            check(Param::from_name(name).is_some(), &format!("embedding.extra_tyches.{name}"), "unknown parameter");
        }
        if let Some(lit) = &self.embedding.literal_box {
            for name in lit.keys() {
                check(Param::from_name(name).is_some(), &format!("embedding.literal_box.{name}"), "unknown parameter");
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        match self.field_errors().into_iter().next() {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }
}

fn json_field(e: &serde_json::Error) -> String {
    // serde reports missing fields as "missing field `x`"
    let msg = e.to_string();
    msg.split('`').nth(1).map(str::to_string).unwrap_or_else(|| "$".into())
}

/// Reads a scenario from a path, or a packaged scenario by name.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => match path.file_name().and_then(|n| n.to_str()).and_then(packaged) {
            Some(t) if !path.exists() => t.to_string(),
            _ => return Err(e.into()),
        },
    };
    Scenario::from_text(&text)
}

/// Solver inputs derived from a scenario file.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub hash: String,
    pub bounds: LakeBounds,
    pub control_box: ControlBox,
    pub controls: Vec<f64>,
    pub members: Vec<MemberModel>,
    pub grid: Arc<Grid>,
    pub constraint: CellSet,
    pub tau: f64,
    pub safety: Safety,
    pub sampling: TycheSampling,
    pub max_iterations: Option<usize>,
}

impl Scenario {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::resolve(ScenarioFile::parse(text)?)
    }

    pub fn packaged(name: &str) -> Result<Self> {
        let text = packaged(name).ok_or_else(|| Error::scenario("name", format!("no packaged scenario `{name}`")))?;
        Self::from_text(text)
    }

    pub fn resolve(file: ScenarioFile) -> Result<Self> {
        file.validate()?;
        let scale = match file.units {
            Some(Units::Tons) => 1.0 / LAKE_VOLUME,
            _ => 1.0,
        };
        let convert = |p: Param, v: &ParamValue| -> Interval {
            match p {
                Param::R | Param::M => v.scaled(scale).interval(),
                Param::Lambda => v.scaled(1.0 / scale).interval(),
                _ => v.interval(),
            }
        };
        let mut members = Vec::with_capacity(file.members.len());
        for m in &file.members {
            let mut beliefs = BTreeMap::new();
            for (name, value) in &m.params {
                let p = Param::from_name(name).expect("validated");
                beliefs.insert(p, convert(p, value));
            }
            if file.member_params == ParamSource::Table {
                for (name, value) in &m.table_params {
                    let p = Param::from_name(name).expect("validated");
                    beliefs.insert(p, convert(p, value));
                }
            }
            members.push(MemberModel::new(m.id.clone(), m.family, beliefs)?);
        }
        let l_min = file.constraints.l_min * scale;
        let p_max = file.constraints.p_max * scale;
        let sampling = TycheSampling {
            default_count: file.discretization.tyche_samples,
            per_param: file.discretization.tyche_samples_per_param.clone(),
        };
        let l_max = match file.constraints.l_max {
            Some(l) => l * scale,
            None => {
                let models: Vec<_> =
                    members.iter().flat_map(|m| m.sample_models(&sampling)).map(|m| m.base).collect();
                4.0 * max_equilibrium_inflow(&models, p_max)
            }
        };
        if !(l_max > l_min) {
            return Err(Error::scenario("constraints.l_max", format!("default truncation {l_max} does not exceed l_min")));
        }
        let control_box = match file.controls {
            ControlSpec::Delta { delta } => ControlBox::from_delta(delta * scale)?,
            ControlSpec::Bounds { u_min, u_max } => ControlBox::new(u_min * scale, u_max * scale)?,
        };
        let controls = control_box.samples(file.discretization.control_samples);
        let l_lo = file.grid.l_lo.map_or(l_min, |l| l * scale);
        let grid = Arc::new(Grid::new(vec![
            Axis::new(l_lo, l_max, file.grid.nodes[0]).with_edges(Edge::Exit, Edge::Clamp),
            Axis::new(0.0, p_max, file.grid.nodes[1]).with_edges(Edge::Clamp, Edge::Exit),
        ])?);
        let constraint = CellSet::from_nodes(grid.clone(), |x| x[0] >= l_min && x[1] <= p_max);
        Ok(Self {
            hash: file.hash(),
            bounds: LakeBounds { l_min, p_max, l_max },
            control_box,
            controls,
            members,
            grid,
            constraint,
            tau: file.discretization.tau,
            safety: Safety { radius: file.discretization.dilation_radius, mode: file.discretization.dilation_mode },
            sampling,
            max_iterations: file.discretization.max_iterations,
            file,
        })
    }

    /// The same scenario on a different grid resolution.
    pub fn with_nodes(&self, nodes: [usize; 2]) -> Result<Self> {
        let mut file = self.file.clone();
        file.grid.nodes = nodes;
        Self::resolve(file)
    }

    pub fn with_safety(mut self, safety: Safety) -> Self {
        self.safety = safety;
        self.file.discretization.dilation_radius = safety.radius;
        self.file.discretization.dilation_mode = safety.mode;
        self.hash = self.file.hash();
        self
    }

    pub fn problem(
        &self,
        system: Arc<dyn crate::dynamics::TychasticSystem>,
        tyches: Vec<Vec<f64>>,
        execution: Execution,
    ) -> DiscreteProblem {
        let mut p = DiscreteProblem::new(system, self.constraint.clone(), self.controls.clone(), tyches, self.tau)
            .with_safety(self.safety)
            .with_execution(execution);
        p.max_iterations = self.max_iterations;
        p
    }

    /// Problem for member `i` alone (guaranteed when it holds ranges).
    pub fn member_problem(&self, i: usize, execution: Execution) -> DiscreteProblem {
        let m = &self.members[i];
        self.problem(Arc::new(m.system()), m.tyche_samples(&self.sampling), execution)
    }

    /// The group embedding chosen by the scenario.
    pub fn embedding(&self) -> Result<Embedding> {
        let spec = &self.file.embedding;
        match spec.kind {
            EmbeddingKind::ParameterBox => {
                let mut e = build_parameter_box_embedding(&self.members, &spec.shared)?;
                for (name, value) in &spec.extra_tyches {
                    let p = Param::from_name(name).expect("validated");
                    e = e.with_extra_axis(p, value.interval());
                }
                if let Some(lit) = &spec.literal_box {
                    let ranges: Vec<(Param, Interval)> = lit
                        .iter()
                        .map(|(n, v)| (Param::from_name(n).expect("validated"), v.interval()))
                        .collect();
                    e = e.with_literal_box(&ranges)?;
                }
                Ok(Embedding::ParameterBox(e))
            }
            EmbeddingKind::Ball => Ok(Embedding::Ball(build_ball_embedding(
                &self.members,
                self.grid.clone(),
                &self.controls,
                &self.sampling,
            )?)),
            EmbeddingKind::ConvexHull => Ok(Embedding::Hull(build_hull_embedding(&self.members)?)),
        }
    }

    /// Problem for the whole group: the member's own problem for a single
    /// member, the embedded guaranteed problem otherwise.
    pub fn group_problem(&self, execution: Execution) -> Result<DiscreteProblem> {
        if self.members.len() == 1 {
            return Ok(self.member_problem(0, execution));
        }
        let e = self.embedding()?;
        let resolution = match e.kind() {
            EmbeddingKind::Ball => self.file.embedding.ball_rings,
            _ => self.file.embedding.hull_resolution,
        };
        let tyches = e.tyche_samples(&self.members, &self.sampling, resolution);
        Ok(self.problem(e.system(), tyches, execution))
    }
}

/// Machine-readable summary of a solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub kind: String,
    pub grid_nodes: Vec<usize>,
    pub control_samples: usize,
    pub tyche_samples: usize,
    /// How interval samples are placed.
    pub sampling: String,
    pub safety: Safety,
    pub iterations: usize,
    pub removed_per_iteration: Vec<usize>,
    pub kernel_cells: usize,
    pub empty: bool,
    pub wall_time_ms: f64,
}

impl RunReport {
    pub fn new(scenario: &Scenario, problem: &DiscreteProblem, report: &SolveReport, kind: &str) -> Self {
        Self {
            scenario: scenario.file.name.clone(),
            scenario_hash: scenario.hash.clone(),
            kind: kind.to_string(),
            grid_nodes: problem.grid.axes().iter().map(|a| a.nodes).collect(),
            control_samples: problem.controls.len(),
            tyche_samples: problem.tyches.len(),
            sampling: "endpoint-inclusive uniform".to_string(),
            safety: problem.safety,
            iterations: report.iterations,
            removed_per_iteration: report.removed_per_iteration.clone(),
            kernel_cells: report.kernel.count(),
            empty: report.empty,
            wall_time_ms: report.wall_time.as_secs_f64() * 1e3,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}
