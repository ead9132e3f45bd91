//! Run configuration: TOML files of `section.key = value` entries layered
//! over a preset, plus command-line overrides applied last.
//!
//! Every key is checked against a fixed set; unknown keys, type mismatches
//! and out-of-range values are errors naming the offending key. The manifest
//! written next to each run uses the same format with sorted keys, so a
//! manifest is itself a valid configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::{Error, Result};
use crate::experiments::{example1_setup, example2_setup, example3_setup, ConvergenceStudy, ExperimentSetup};
use crate::mesh::{read_polymesh, MeshFamily, MeshSpec, PolygonalMesh, Rectangle};
use crate::model::{DiffusionLaw, FhnKinetics, InitialData, ModelSpec, Stimulus};
use crate::solver::LinearSolveConfig;
use crate::timestepper::{PicardConfig, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Example1,
    Example2,
    Example3,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Example1 => "example1",
            Preset::Example2 => "example2",
            Preset::Example3 => "example3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "example1" => Some(Preset::Example1),
            "example2" => Some(Preset::Example2),
            "example3" => Some(Preset::Example3),
            _ => None,
        }
    }

    pub fn setup(&self) -> ExperimentSetup {
        match self {
            Preset::Example1 => example1_setup(64, 80),
            Preset::Example2 => example2_setup(),
            Preset::Example3 => example3_setup(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionKind {
    Linear,
    Constant,
}

/// Fully validated run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub mesh_family: String,
    pub mesh_n: usize,
    pub mesh_amplitude: f64,
    pub mesh_seed: u64,
    pub mesh_lloyd_iterations: usize,
    /// Regularity constant for the mesh quality report.
    pub mesh_c_t: f64,
    /// Mesh file that replaces the generated mesh.
    pub mesh_file: Option<PathBuf>,
    pub kinetics: FhnKinetics,
    pub diffusion_kind: DiffusionKind,
    pub diffusion_slope: f64,
    pub diffusion_floor: f64,
    pub diffusion_value: f64,
    pub stimulus_enabled: bool,
    pub stimulus: Stimulus,
    pub initial: String,
    pub initial_v: f64,
    pub initial_w: f64,
    pub t_final: f64,
    pub steps: usize,
    pub picard: PicardConfig,
    pub linsolve: LinearSolveConfig,
    /// Snapshot every `stride` steps (0: only `output_times`, start and end).
    pub output_stride: usize,
    pub output_times: Vec<f64>,
    pub output_dir: PathBuf,
    /// Mesh levels `n` and step counts of a convergence study.
    pub convergence_levels: Vec<usize>,
    pub convergence_steps: Vec<usize>,
    pub convergence_reference_level: usize,
    pub convergence_reference_steps: usize,
}

const DEFAULT_STIMULUS: Stimulus = Stimulus {
    amplitude: 1.0,
    center: [0.5, 0.5],
    radius: 0.2,
    t_on: 4.0,
    t_off: f64::INFINITY,
};

/// Every accepted key; `provenance.*` is free-form and ignored on input.
pub const KNOWN_KEYS: &[&str] = &[
    "convergence.levels",
    "convergence.reference_level",
    "convergence.reference_steps",
    "convergence.steps",
    "diffusion.floor",
    "diffusion.kind",
    "diffusion.slope",
    "diffusion.value",
    "experiment.preset",
    "initial.preset",
    "initial.v",
    "initial.w",
    "kinetics.a",
    "kinetics.b",
    "kinetics.lambda",
    "kinetics.theta",
    "linsolve.max_iters",
    "linsolve.tol",
    "mesh.amplitude",
    "mesh.c_t",
    "mesh.family",
    "mesh.file",
    "mesh.lloyd_iterations",
    "mesh.n",
    "mesh.seed",
    "output.dir",
    "output.stride",
    "output.times",
    "picard.damping",
    "picard.max_iters",
    "picard.tol",
    "stimulus.amplitude",
    "stimulus.enabled",
    "stimulus.radius",
    "stimulus.t_off",
    "stimulus.t_on",
    "stimulus.x0",
    "stimulus.y0",
    "time.N",
    "time.T",
];

impl RunConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let s = preset.setup();
        let study = ConvergenceStudy::example1();
        let (mesh_family, mesh_amplitude, mesh_seed, mesh_lloyd_iterations) = match s.mesh.family {
            MeshFamily::Squares => ("squares", MeshFamily::DEFAULT_AMPLITUDE, 0, MeshFamily::DEFAULT_LLOYD_ITERATIONS),
            MeshFamily::Distorted { amplitude, seed } => ("distorted", amplitude, seed, MeshFamily::DEFAULT_LLOYD_ITERATIONS),
            MeshFamily::Voronoi { seed, lloyd_iterations } => ("voronoi", MeshFamily::DEFAULT_AMPLITUDE, seed, lloyd_iterations),
        };
        let (diffusion_kind, diffusion_slope, diffusion_floor, diffusion_value) = match s.model.diffusion {
            DiffusionLaw::Linear { slope, floor } => (DiffusionKind::Linear, slope, floor, 0.01),
            DiffusionLaw::Constant { value } => (DiffusionKind::Constant, 0.01, DiffusionLaw::DEFAULT_FLOOR, value),
        };
        let (initial_v, initial_w) = match s.model.initial {
            InitialData::Constant { v, w } => (v, w),
            _ => (0.0, 0.0),
        };
        RunConfig {
            preset,
            mesh_family: mesh_family.to_string(),
            mesh_n: s.mesh.n,
            mesh_amplitude,
            mesh_seed,
            mesh_lloyd_iterations,
            mesh_c_t: 0.05,
            mesh_file: None,
            kinetics: s.model.kinetics,
            diffusion_kind,
            diffusion_slope,
            diffusion_floor,
            diffusion_value,
            stimulus_enabled: s.model.stimulus.is_some(),
            stimulus: s.model.stimulus.unwrap_or(DEFAULT_STIMULUS),
            initial: s.model.initial.name().to_string(),
            initial_v,
            initial_w,
            t_final: s.grid.t_final,
            steps: s.grid.steps,
            picard: s.picard,
            linsolve: s.linsolve,
            output_stride: 0,
            output_times: s.snapshot_times,
            output_dir: PathBuf::from("output"),
            convergence_levels: study.levels,
            convergence_steps: study.steps,
            convergence_reference_level: study.reference_level,
            convergence_reference_steps: study.reference_steps,
        }
    }

    /// Parses configuration text over its preset, then applies `overrides`.
    pub fn parse(text: &str, origin: &str, overrides: &[(String, Value)]) -> Result<Self> {
        let mut entries = flatten_toml(text, origin)?;
        for (k, v) in overrides {
            entries.insert(k.clone(), v.clone());
        }
        Self::from_entries(&entries)
    }

    pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), overrides)
    }

    pub fn from_entries(entries: &BTreeMap<String, Value>) -> Result<Self> {
        let preset = match entries.get("experiment.preset") {
            Some(v) => {
                let name = as_str("experiment.preset", v)?;
                Preset::from_name(name).ok_or_else(|| {
                    Error::config("experiment.preset", format!("unknown preset `{name}` (expected example1, example2 or example3)"))
                })?
            }
            None => Preset::Example1,
        };
        let mut cfg = Self::from_preset(preset);
        for (key, value) in entries {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "experiment.preset" => {}
            "mesh.family" => self.mesh_family = as_str(key, v)?.to_string(),
            "mesh.n" => self.mesh_n = as_usize(key, v)?,
            "mesh.amplitude" => self.mesh_amplitude = as_f64(key, v)?,
            "mesh.seed" => self.mesh_seed = as_usize(key, v)? as u64,
            "mesh.lloyd_iterations" => self.mesh_lloyd_iterations = as_usize(key, v)?,
            "mesh.c_t" => self.mesh_c_t = as_f64(key, v)?,
            "mesh.file" => self.mesh_file = Some(PathBuf::from(as_str(key, v)?)),
            "kinetics.a" => self.kinetics.a = as_f64(key, v)?,
            "kinetics.b" => self.kinetics.b = as_f64(key, v)?,
            "kinetics.lambda" => self.kinetics.lambda = as_f64(key, v)?,
            "kinetics.theta" => self.kinetics.theta = as_f64(key, v)?,
            "diffusion.kind" => {
                self.diffusion_kind = match as_str(key, v)? {
                    "linear" => DiffusionKind::Linear,
                    "constant" => DiffusionKind::Constant,
                    other => return Err(Error::config(key, format!("unknown kind `{other}` (expected linear or constant)"))),
                }
            }
            "diffusion.slope" => self.diffusion_slope = as_f64(key, v)?,
            "diffusion.floor" => self.diffusion_floor = as_f64(key, v)?,
            "diffusion.value" => self.diffusion_value = as_f64(key, v)?,
            "stimulus.enabled" => {
                self.stimulus_enabled = v.as_bool().ok_or_else(|| type_error(key, "a boolean", v))?
            }
            "stimulus.amplitude" => self.stimulus.amplitude = as_f64(key, v)?,
            "stimulus.x0" => self.stimulus.center[0] = as_f64(key, v)?,
            "stimulus.y0" => self.stimulus.center[1] = as_f64(key, v)?,
            "stimulus.radius" => self.stimulus.radius = as_f64(key, v)?,
            "stimulus.t_on" => self.stimulus.t_on = as_f64(key, v)?,
            "stimulus.t_off" => self.stimulus.t_off = as_f64(key, v)?,
            "initial.preset" => self.initial = as_str(key, v)?.to_string(),
            "initial.v" => self.initial_v = as_f64(key, v)?,
            "initial.w" => self.initial_w = as_f64(key, v)?,
            "time.T" => self.t_final = as_f64(key, v)?,
            "time.N" => self.steps = as_usize(key, v)?,
            "picard.tol" => self.picard.tol = as_f64(key, v)?,
            "picard.max_iters" => self.picard.max_iters = as_usize(key, v)?,
            "picard.damping" => self.picard.damping = as_f64(key, v)?,
            "linsolve.tol" => self.linsolve.tol = as_f64(key, v)?,
            "linsolve.max_iters" => self.linsolve.max_iters = as_usize(key, v)?,
            "output.stride" => self.output_stride = as_usize(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(as_str(key, v)?),
            "output.times" => {
                let arr = v.as_array().ok_or_else(|| type_error(key, "an array of numbers", v))?;
                self.output_times = arr.iter().map(|x| as_f64(key, x)).collect::<Result<_>>()?;
            }
            "convergence.levels" => self.convergence_levels = as_usize_list(key, v)?,
            "convergence.steps" => self.convergence_steps = as_usize_list(key, v)?,
            "convergence.reference_level" => self.convergence_reference_level = as_usize(key, v)?,
            "convergence.reference_steps" => self.convergence_reference_steps = as_usize(key, v)?,
            k if k.starts_with("provenance.") => {}
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {x}")))
            }
        };
        let finite = |key: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be finite, got {x}")))
            }
        };
        MeshFamily::from_name(&self.mesh_family, self.mesh_seed)?;
        if self.mesh_n == 0 {
            return Err(Error::config("mesh.n", "must be at least 1"));
        }
        if !(0.0..0.3).contains(&self.mesh_amplitude) {
            return Err(Error::config("mesh.amplitude", format!("must lie in [0, 0.3), got {}", self.mesh_amplitude)));
        }
        if !(self.mesh_c_t > 0.0 && self.mesh_c_t <= 1.0) {
            return Err(Error::config("mesh.c_t", "must lie in (0, 1]"));
        }
        for (k, x) in [
            ("kinetics.a", self.kinetics.a),
            ("kinetics.b", self.kinetics.b),
            ("kinetics.lambda", self.kinetics.lambda),
            ("kinetics.theta", self.kinetics.theta),
            ("diffusion.slope", self.diffusion_slope),
            ("stimulus.amplitude", self.stimulus.amplitude),
            ("stimulus.x0", self.stimulus.center[0]),
            ("stimulus.y0", self.stimulus.center[1]),
            ("stimulus.t_on", self.stimulus.t_on),
            ("initial.v", self.initial_v),
            ("initial.w", self.initial_w),
        ] {
            finite(k, x)?;
        }
        positive("diffusion.floor", self.diffusion_floor)?;
        positive("diffusion.value", self.diffusion_value)?;
        if !(self.stimulus.radius >= 0.0 && self.stimulus.radius.is_finite()) {
            return Err(Error::config("stimulus.radius", "must be non-negative"));
        }
        if !(self.stimulus.t_off >= self.stimulus.t_on) {
            return Err(Error::config("stimulus.t_off", "must not precede stimulus.t_on"));
        }
        self.initial_data()?;
        positive("time.T", self.t_final)?;
        if self.steps == 0 {
            return Err(Error::config("time.N", "must be at least 1"));
        }
        self.picard.validate()?;
        positive("linsolve.tol", self.linsolve.tol)?;
        if self.linsolve.max_iters == 0 {
            return Err(Error::config("linsolve.max_iters", "must be at least 1"));
        }
        if let Some(t) = self.output_times.iter().find(|t| !(**t >= 0.0 && **t <= self.t_final)) {
            return Err(Error::config("output.times", format!("time {t} outside [0, time.T]")));
        }
        Ok(())
    }

    fn initial_data(&self) -> Result<InitialData> {
        match self.initial.as_str() {
            "example1" => Ok(InitialData::Example1),
            "example2" => Ok(InitialData::Example2),
            "example3" => Ok(InitialData::Example3),
            "constant" => Ok(InitialData::Constant {
                v: self.initial_v,
                w: self.initial_w,
            }),
            other => Err(Error::config(
                "initial.preset",
                format!("unknown initial data `{other}` (expected example1, example2, example3 or constant)"),
            )),
        }
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec {
            diffusion: match self.diffusion_kind {
                DiffusionKind::Linear => DiffusionLaw::Linear {
                    slope: self.diffusion_slope,
                    floor: self.diffusion_floor,
                },
                DiffusionKind::Constant => DiffusionLaw::Constant {
                    value: self.diffusion_value,
                },
            },
            kinetics: self.kinetics,
            stimulus: self.stimulus_enabled.then_some(self.stimulus),
            initial: self.initial_data().expect("validated"),
        }
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        let family = match MeshFamily::from_name(&self.mesh_family, self.mesh_seed).expect("validated") {
            MeshFamily::Distorted { seed, .. } => MeshFamily::Distorted {
                amplitude: self.mesh_amplitude,
                seed,
            },
            MeshFamily::Voronoi { seed, .. } => MeshFamily::Voronoi {
                seed,
                lloyd_iterations: self.mesh_lloyd_iterations,
            },
            f => f,
        };
        MeshSpec {
            family,
            n: self.mesh_n,
            domain: Rectangle::unit_square(),
        }
    }

    /// The mesh file if one is configured, otherwise the generated mesh.
    pub fn build_mesh(&self) -> Result<PolygonalMesh> {
        match &self.mesh_file {
            Some(p) => read_polymesh(p),
            None => self.mesh_spec().build(),
        }
    }

    pub fn setup(&self) -> ExperimentSetup {
        ExperimentSetup {
            mesh: self.mesh_spec(),
            model: self.model(),
            grid: TimeGrid {
                t_final: self.t_final,
                steps: self.steps,
            },
            picard: self.picard,
            linsolve: self.linsolve,
            snapshot_times: self.output_times.clone(),
        }
    }

    /// Every setting as a sorted key-value map.
    pub fn entries(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        let int = |x: usize| Value::Integer(x as i64);
        put("experiment.preset", Value::String(self.preset.name().into()));
        put("mesh.family", Value::String(self.mesh_family.clone()));
        put("mesh.n", int(self.mesh_n));
        put("mesh.amplitude", Value::Float(self.mesh_amplitude));
        put("mesh.seed", Value::Integer(self.mesh_seed as i64));
        put("mesh.lloyd_iterations", int(self.mesh_lloyd_iterations));
        put("mesh.c_t", Value::Float(self.mesh_c_t));
        if let Some(p) = &self.mesh_file {
            put("mesh.file", Value::String(p.display().to_string()));
        }
        put("kinetics.a", Value::Float(self.kinetics.a));
        put("kinetics.b", Value::Float(self.kinetics.b));
        put("kinetics.lambda", Value::Float(self.kinetics.lambda));
        put("kinetics.theta", Value::Float(self.kinetics.theta));
        put(
            "diffusion.kind",
            Value::String(match self.diffusion_kind {
                DiffusionKind::Linear => "linear".into(),
                DiffusionKind::Constant => "constant".into(),
            }),
        );
        put("diffusion.slope", Value::Float(self.diffusion_slope));
        put("diffusion.floor", Value::Float(self.diffusion_floor));
        put("diffusion.value", Value::Float(self.diffusion_value));
        put("stimulus.enabled", Value::Boolean(self.stimulus_enabled));
        put("stimulus.amplitude", Value::Float(self.stimulus.amplitude));
        put("stimulus.x0", Value::Float(self.stimulus.center[0]));
        put("stimulus.y0", Value::Float(self.stimulus.center[1]));
        put("stimulus.radius", Value::Float(self.stimulus.radius));
        put("stimulus.t_on", Value::Float(self.stimulus.t_on));
        put("stimulus.t_off", Value::Float(self.stimulus.t_off));
        put("initial.preset", Value::String(self.initial.clone()));
        put("initial.v", Value::Float(self.initial_v));
        put("initial.w", Value::Float(self.initial_w));
        put("time.T", Value::Float(self.t_final));
        put("time.N", int(self.steps));
        put("picard.tol", Value::Float(self.picard.tol));
        put("picard.max_iters", int(self.picard.max_iters));
        put("picard.damping", Value::Float(self.picard.damping));
        put("linsolve.tol", Value::Float(self.linsolve.tol));
        put("linsolve.max_iters", int(self.linsolve.max_iters));
        put("output.stride", int(self.output_stride));
        put("output.times", Value::Array(self.output_times.iter().map(|&t| Value::Float(t)).collect()));
        put("output.dir", Value::String(self.output_dir.display().to_string()));
        let ints = |xs: &[usize]| Value::Array(xs.iter().map(|&x| int(x)).collect());
        put("convergence.levels", ints(&self.convergence_levels));
        put("convergence.steps", ints(&self.convergence_steps));
        put("convergence.reference_level", int(self.convergence_reference_level));
        put("convergence.reference_steps", int(self.convergence_reference_steps));
        m
    }

    /// Convergence study over the configured family, model and solver settings.
    pub fn study(&self) -> ConvergenceStudy {
        ConvergenceStudy {
            family: self.mesh_spec().family,
            levels: self.convergence_levels.clone(),
            steps: self.convergence_steps.clone(),
            reference_level: self.convergence_reference_level,
            reference_steps: self.convergence_reference_steps,
            model: self.model(),
            t_final: self.t_final,
            picard: self.picard,
            linsolve: self.linsolve,
        }
    }

    /// SHA-256 of the manifest body without provenance.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(format_entries(&self.entries()).as_bytes()))
    }

    /// Manifest text: all settings plus `provenance.*` lines, sorted by key.
    pub fn manifest(&self, provenance: &[(&str, String)]) -> String {
        let mut all = self.entries();
        for (k, v) in provenance {
            all.insert(format!("provenance.{k}"), Value::String(v.clone()));
        }
        format_entries(&all)
    }
}

fn format_value(v: &Value) -> String {
    match v {
        // shortest round-trip form; inf is valid TOML
        Value::Float(x) if x.is_finite() => format!("{x:?}"),
        Value::Float(x) if *x > 0.0 => "inf".into(),
        Value::Float(_) => "-inf".into(),
        Value::Array(a) => format!("[{}]", a.iter().map(format_value).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

/// `key = value` lines in key order.
pub fn format_entries(entries: &BTreeMap<String, Value>) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {}", format_value(v));
    }
    out
}

/// Flattens nested TOML tables into dotted keys.
pub fn flatten_toml(text: &str, origin: &str) -> Result<BTreeMap<String, Value>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            path: origin.to_string(),
            line,
            message: e.message().to_string(),
        }
    })?;
    let mut out = BTreeMap::new();
    flatten_into(&mut out, "", &table);
    Ok(out)
}

fn flatten_into(out: &mut BTreeMap<String, Value>, prefix: &str, table: &toml::Table) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten_into(out, &key, t),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses `key=value` with a TOML value, falling back to a bare string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(s, "override must have the form key=value"))?;
    let k = k.trim();
    let v = v.trim();
    let value = format!("x = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

fn type_error(key: &str, expected: &str, v: &Value) -> Error {
    Error::config(key, format!("expected {expected}, found {}", v.type_str()))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(type_error(key, "a number", other)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(Error::config(key, format!("must be non-negative, got {i}"))),
        other => Err(type_error(key, "an integer", other)),
    }
}

fn as_usize_list(key: &str, v: &Value) -> Result<Vec<usize>> {
    let arr = v.as_array().ok_or_else(|| type_error(key, "an array of integers", v))?;
    arr.iter().map(|x| as_usize(key, x)).collect()
}

fn as_str<'v>(key: &str, v: &'v Value) -> Result<&'v str> {
    v.as_str().ok_or_else(|| type_error(key, "a string", v))
}
