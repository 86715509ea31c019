//! Versioned JSON scenario files.
//!
//! Chains (the manikin's and each guide's) are given inline or as a path
//! relative to the scenario file. `--set a.b.0=value` overrides are applied
//! to the JSON tree after chain paths are inlined, so chain parameters can
//! be overridden too.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix6, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::chain::{ChainFile, OriginFile};
use crate::constraints::{DEFAULT_BAUMGARTE, LCP_MAX_ITER, LCP_TOLERANCE};
use crate::{Error, Result};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub chain: ChainRef,
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleFile>,
    #[serde(default)]
    pub constraints: ConstraintConfig,
    #[serde(default)]
    pub tasks: Vec<TaskFile>,
    #[serde(default)]
    pub guides: Vec<GuideFile>,
    #[serde(default)]
    pub monitors: Vec<AxisMonitorFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal: Option<InternalFile>,
    #[serde(default)]
    pub passivity: PassivityConfig,
    #[serde(default)]
    pub coupling: CouplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainRef {
    Path(String),
    Inline(Box<ChainFile>),
}

impl ChainRef {
    pub fn inline(&self) -> Result<&ChainFile> {
        match self {
            ChainRef::Inline(c) => Ok(c),
            ChainRef::Path(p) => Err(Error::schema("chain", format!("unresolved chain path {p}"))),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<OriginFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleFile {
    HalfSpace {
        name: String,
        normal: [f64; 3],
        offset: f64,
    },
    Sphere {
        name: String,
        center: [f64; 3],
        radius: f64,
    },
}

impl ObstacleFile {
    pub fn name(&self) -> &str {
        match self {
            ObstacleFile::HalfSpace { name, .. } | ObstacleFile::Sphere { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintConfig {
    pub enabled: bool,
    pub joint_limits: bool,
    pub activation_margin: f64,
    pub baumgarte: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            joint_limits: true,
            activation_margin: 0.02,
            baumgarte: DEFAULT_BAUMGARTE,
            tolerance: LCP_TOLERANCE,
            max_iter: LCP_MAX_ITER,
        }
    }
}

/// Scalar (times identity), 6-entry diagonal, or full 6×6.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Gain {
    pub fn to_matrix(&self, path: &str) -> Result<Matrix6<f64>> {
        match self {
            Gain::Scalar(k) => Ok(Matrix6::identity() * *k),
            Gain::Diagonal(d) if d.len() == 6 => Ok(Matrix6::from_diagonal(
                &nalgebra::Vector6::from_column_slice(d),
            )),
            Gain::Full(rows) if rows.len() == 6 && rows.iter().all(|r| r.len() == 6) => {
                Ok(Matrix6::from_fn(|i, j| rows[i][j]))
            }
            _ => Err(Error::schema(
                path,
                "gain must be a scalar, 6 diagonal entries or a 6x6 matrix",
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFile {
    pub link: String,
    #[serde(default)]
    pub point: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub name: String,
    pub link: String,
    #[serde(default)]
    pub point: [f64; 3],
    pub stiffness: Gain,
    pub damping: Gain,
    #[serde(default)]
    pub target: TargetFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseFile>,
}

/// Piecewise-linear schedule. With `relative`, positions are offsets from
/// the frame's initial position and rotations (rotation vectors) are
/// applied on the left of its initial orientation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetFile {
    pub relative: bool,
    pub waypoints: Vec<Waypoint>,
}

impl Default for TargetFile {
    fn default() -> Self {
        Self {
            relative: true,
            waypoints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub rotation: [f64; 3],
}

/// Ornstein-Uhlenbeck jitter added to the target, stationary standard
/// deviation `sigma` and correlation time `tau`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFile {
    #[serde(default)]
    pub position_sigma: f64,
    #[serde(default)]
    pub rotation_sigma: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuideFile {
    pub name: String,
    pub chain: ChainRef,
    pub tool: FrameFile,
    pub manikin: FrameFile,
    pub stiffness: Gain,
    pub damping: Gain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub enabled: bool,
    /// `(t, enabled)` switches applied when the simulation time reaches `t`.
    #[serde(default)]
    pub schedule: Vec<GuideSwitch>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuideSwitch {
    pub t: f64,
    pub enabled: bool,
}

/// Angle between a link axis and a fixed world axis, recorded every step.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisMonitorFile {
    pub name: String,
    pub link: String,
    pub axis_local: [f64; 3],
    pub ideal_axis: [f64; 3],
}

/// Posture potential projected against one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalFile {
    pub task: String,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassivityConfig {
    /// Defaults to the task-spring energy at t = 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_sq: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    #[default]
    Implicit,
    Explicit,
}

/// Two constant external wrenches with port 2 prioritized below port 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleFile {
    pub port1: FrameFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port2: Option<FrameFile>,
    pub w2: [f64; 6],
}

/// Loads chain files referenced by path.
pub trait ChainResolver {
    fn read(&self, path: &str) -> Result<String>;
}

/// Resolves paths against a directory on disk.
pub struct DirResolver(pub PathBuf);

impl ChainResolver for DirResolver {
    fn read(&self, path: &str) -> Result<String> {
        let full = self.0.join(path);
        std::fs::read_to_string(&full)
            .map_err(|e| Error::schema("chain", format!("cannot read {}: {e}", full.display())))
    }
}

/// Scenario after chain inlining, overrides and validation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// SHA-256 of the canonical resolved JSON.
    pub hash: String,
    canonical: String,
}

impl Scenario {
    pub fn from_path(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &DirResolver(dir), overrides)
    }

    pub fn from_json(
        text: &str,
        resolver: &dyn ChainResolver,
        overrides: &[String],
    ) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::schema("", e.to_string()))?;
        inline_chain(&mut value, "chain", resolver)?;
        if let Some(Value::Array(guides)) = value.get_mut("guides") {
            for (i, g) in guides.iter_mut().enumerate() {
                inline_chain(g, "chain", resolver)
                    .map_err(|e| prefix(e, &format!("guides[{i}]")))?;
            }
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let file: ScenarioFile = serde_path_to_error::deserialize(value.clone())
            .map_err(|e| Error::schema(e.path().to_string(), e.inner().to_string()))?;
        validate(&file)?;
        let canonical = serde_json::to_string(&value).expect("JSON value serializes");
        let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
        Ok(Self {
            file,
            hash,
            canonical,
        })
    }

    /// Resolved scenario as compact JSON (chains inlined, overrides applied).
    pub fn canonical_json(&self) -> &str {
        &self.canonical
    }

    pub fn steps(&self) -> usize {
        (self.file.duration / self.file.dt).round() as usize
    }
}

fn prefix(e: Error, p: &str) -> Error {
    match e {
        Error::Schema { path, message } => Error::schema(format!("{p}.{path}"), message),
        other => other,
    }
}

fn inline_chain(obj: &mut Value, key: &str, resolver: &dyn ChainResolver) -> Result<()> {
    let Some(Value::String(path)) = obj.get(key) else {
        return Ok(());
    };
    let text = resolver.read(path)?;
    let chain: Value =
        serde_json::from_str(&text).map_err(|e| Error::schema(key, format!("{path}: {e}")))?;
    obj[key] = chain;
    Ok(())
}

/// Applies `a.b.0.c=value`; the value is parsed as JSON and falls back to a
/// plain string. Missing object keys are created.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::schema(spec, "override must have the form key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            Value::Array(items) => {
                let i: usize = key
                    .parse()
                    .map_err(|_| Error::schema(path, format!("`{key}` is not an array index")))?;
                let len = items.len();
                items.get_mut(i).ok_or_else(|| {
                    Error::schema(path, format!("index {i} out of range ({len} items)"))
                })?
            }
            Value::Object(map) => {
                if last || map.contains_key(*key) {
                    map.entry(key.to_string()).or_insert(Value::Null)
                } else {
                    map.entry(key.to_string())
                        .or_insert_with(|| Value::Object(Default::default()))
                }
            }
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut()
                    .unwrap()
                    .entry(key.to_string())
                    .or_insert(Value::Null)
            }
            _ => return Err(Error::schema(path, format!("cannot descend into `{key}`"))),
        };
    }
    *node = value;
    Ok(())
}

fn validate(f: &ScenarioFile) -> Result<()> {
    if f.version != SCENARIO_VERSION {
        return Err(Error::schema(
            "version",
            format!(
                "unsupported scenario version {} (expected {SCENARIO_VERSION})",
                f.version
            ),
        ));
    }
    if !(f.dt > 0.0) || !f.dt.is_finite() {
        return Err(Error::schema("dt", "dt must be positive"));
    }
    if !(f.duration >= f.dt) || !f.duration.is_finite() {
        return Err(Error::schema("duration", "duration must be at least dt"));
    }
    let chain = f.chain.inline()?;
    let has = |link: &str| chain.links.iter().any(|l| l.name == link);
    for (i, t) in f.tasks.iter().enumerate() {
        if !has(&t.link) {
            return Err(Error::schema(
                format!("tasks[{i}].link"),
                format!("unknown link {}", t.link),
            ));
        }
        t.stiffness.to_matrix(&format!("tasks[{i}].stiffness"))?;
        t.damping.to_matrix(&format!("tasks[{i}].damping"))?;
        if f.tasks[..i].iter().any(|o| o.name == t.name) {
            return Err(Error::schema(
                format!("tasks[{i}].name"),
                "duplicate task name",
            ));
        }
        if t.target.waypoints.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::schema(
                format!("tasks[{i}].target.waypoints"),
                "waypoint times must increase",
            ));
        }
        if let Some(n) = &t.noise {
            if !(n.tau > 0.0) || n.position_sigma < 0.0 || n.rotation_sigma < 0.0 {
                return Err(Error::schema(
                    format!("tasks[{i}].noise"),
                    "noise needs tau > 0 and non-negative sigmas",
                ));
            }
        }
    }
    for (i, g) in f.guides.iter().enumerate() {
        let gc = g
            .chain
            .inline()
            .map_err(|e| prefix(e, &format!("guides[{i}]")))?;
        if !has(&g.manikin.link) {
            return Err(Error::schema(
                format!("guides[{i}].manikin.link"),
                format!("unknown link {}", g.manikin.link),
            ));
        }
        if !gc.links.iter().any(|l| l.name == g.tool.link) {
            return Err(Error::schema(
                format!("guides[{i}].tool.link"),
                format!("unknown guide link {}", g.tool.link),
            ));
        }
        g.stiffness.to_matrix(&format!("guides[{i}].stiffness"))?;
        g.damping.to_matrix(&format!("guides[{i}].damping"))?;
        if f.guides[..i].iter().any(|o| o.name == g.name) {
            return Err(Error::schema(
                format!("guides[{i}].name"),
                "duplicate guide name",
            ));
        }
    }
    for (i, m) in f.monitors.iter().enumerate() {
        if !has(&m.link) {
            return Err(Error::schema(
                format!("monitors[{i}].link"),
                format!("unknown link {}", m.link),
            ));
        }
        for (what, a) in [("axis_local", m.axis_local), ("ideal_axis", m.ideal_axis)] {
            if (Vector3::from(a).norm() - 1.0).abs() > 1e-9 {
                return Err(Error::schema(
                    format!("monitors[{i}].{what}"),
                    "axis must have unit norm",
                ));
            }
        }
    }
    if let Some(int) = &f.internal {
        if !f.tasks.iter().any(|t| t.name == int.task) {
            return Err(Error::schema(
                "internal.task",
                format!("unknown task {}", int.task),
            ));
        }
        if !(int.alpha >= 0.0) {
            return Err(Error::schema(
                "internal.alpha",
                "alpha must be non-negative",
            ));
        }
    }
    if let Some(ce) = &f.counterexample {
        if !f.tasks.is_empty() || !f.guides.is_empty() || f.internal.is_some() {
            return Err(Error::schema(
                "counterexample",
                "counterexample scenarios take no tasks, guides or internal control",
            ));
        }
        for (what, fr) in [("port1", Some(&ce.port1)), ("port2", ce.port2.as_ref())] {
            if let Some(fr) = fr {
                if !has(&fr.link) {
                    return Err(Error::schema(
                        format!("counterexample.{what}.link"),
                        format!("unknown link {}", fr.link),
                    ));
                }
            }
        }
    }
    let c = &f.constraints;
    if !(c.activation_margin > 0.0)
        || !(c.baumgarte >= 0.0)
        || !(c.tolerance > 0.0)
        || c.max_iter == 0
    {
        return Err(Error::schema(
            "constraints",
            "margin and tolerance must be positive, baumgarte non-negative",
        ));
    }
    if let Some(b) = f.passivity.beta_sq {
        if !(b >= 0.0) {
            return Err(Error::schema(
                "passivity.beta_sq",
                "beta_sq must be non-negative",
            ));
        }
    }
    Ok(())
}
