//! Convergence study and the excitable-medium benchmark runs.
//!
//! Errors are measured against a reference solution computed on a finer mesh
//! and/or with a finer time step. The reference field is carried to a coarse
//! mesh vertex by vertex: exactly where vertices coincide, otherwise by
//! evaluating the `L^2` projection of the reference cell that contains it.

use std::collections::HashMap;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::assembly::{Discretization, FieldState};
use crate::error::{Error, Result};
use crate::mesh::{MeshFamily, MeshSpec, PolygonalMesh};
use crate::model::{DiffusionLaw, FhnKinetics, InitialData, ModelSpec, Stimulus};
use crate::solver::LinearSolveConfig;
use crate::sparse::CsrMatrix;
use crate::timestepper::{
    MemorySink, NullSink, PicardConfig, RunAborted, RunOutput, SnapshotSchedule, SnapshotSink, TimeGrid, TimeStepper,
};

impl From<RunAborted> for Error {
    fn from(e: RunAborted) -> Self {
        e.error
    }
}

/// Everything needed for one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSetup {
    pub mesh: MeshSpec,
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub picard: PicardConfig,
    pub linsolve: LinearSolveConfig,
    pub snapshot_times: Vec<f64>,
}

pub const EXAMPLE1_KINETICS: FhnKinetics = FhnKinetics {
    a: 0.2232,
    b: 0.9,
    lambda: -1.0,
    theta: 0.004,
};

/// Kinetics shared by the stimulated-wave and spiral-wave runs.
pub const EXCITABLE_KINETICS: FhnKinetics = FhnKinetics {
    a: 0.16875,
    b: 1.0,
    lambda: -100.0,
    theta: 0.25,
};

/// Picard settings for the stiff kinetics: the undamped fixed-point map is
/// not a contraction once `v` exceeds about 1.05 at `dt = 1/100`.
pub const EXCITABLE_PICARD: PicardConfig = PicardConfig {
    tol: 1e-8,
    max_iters: 200,
    damping: 0.5,
};

pub const EXAMPLE2_SNAPSHOTS: [f64; 9] = [0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0];
pub const EXAMPLE3_SNAPSHOTS: [f64; 6] = [0.1, 1.0, 1.5, 2.0, 10.0, 15.0];

pub fn example1_model() -> ModelSpec {
    ModelSpec {
        diffusion: DiffusionLaw::linear(0.01),
        kinetics: EXAMPLE1_KINETICS,
        stimulus: None,
        initial: InitialData::Example1,
    }
}

pub fn example2_model() -> ModelSpec {
    ModelSpec {
        diffusion: DiffusionLaw::linear(0.01),
        kinetics: EXCITABLE_KINETICS,
        stimulus: Some(Stimulus {
            amplitude: 1.0,
            center: [0.5, 0.5],
            radius: 0.2,
            t_on: 4.0,
            t_off: f64::INFINITY,
        }),
        initial: InitialData::Example2,
    }
}

pub fn example3_model() -> ModelSpec {
    ModelSpec {
        initial: InitialData::Example3,
        stimulus: None,
        ..example2_model()
    }
}

/// Square mesh `1/n`, `T = 1` with `steps` steps.
pub fn example1_setup(n: usize, steps: usize) -> ExperimentSetup {
    ExperimentSetup {
        mesh: MeshSpec::squares(n),
        model: example1_model(),
        grid: TimeGrid { t_final: 1.0, steps },
        picard: PicardConfig::default(),
        linsolve: LinearSolveConfig::default(),
        snapshot_times: Vec::new(),
    }
}

/// Square mesh `1/128`, `T = 5`, `dt = 1/100`.
pub fn example2_setup() -> ExperimentSetup {
    ExperimentSetup {
        mesh: MeshSpec::squares(128),
        model: example2_model(),
        grid: TimeGrid { t_final: 5.0, steps: 500 },
        picard: EXCITABLE_PICARD,
        linsolve: LinearSolveConfig::default(),
        snapshot_times: EXAMPLE2_SNAPSHOTS.to_vec(),
    }
}

/// Voronoi mesh `1/32` (1024 cells), `T = 15`, `dt = 1/100`.
pub fn example3_setup() -> ExperimentSetup {
    ExperimentSetup {
        mesh: MeshSpec {
            family: MeshFamily::Voronoi {
                seed: 3,
                lloyd_iterations: MeshFamily::DEFAULT_LLOYD_ITERATIONS,
            },
            ..MeshSpec::squares(32)
        },
        model: example3_model(),
        grid: TimeGrid { t_final: 15.0, steps: 1500 },
        picard: EXCITABLE_PICARD,
        linsolve: LinearSolveConfig::default(),
        snapshot_times: EXAMPLE3_SNAPSHOTS.to_vec(),
    }
}

/// A mesh with its assembled operators.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mesh: PolygonalMesh,
    pub disc: Discretization,
}

impl Prepared {
    pub fn new(mesh: PolygonalMesh) -> Result<Self> {
        let disc = Discretization::new(&mesh)?;
        Ok(Prepared { mesh, disc })
    }

    pub fn initial_state(&self, model: &ModelSpec) -> FieldState {
        FieldState::interpolate(&self.mesh, 0.0, |x, y| model.initial.eval(x, y))
    }

    /// Runs `setup` (whose mesh must be this one) from the interpolated initial data.
    pub fn simulate(
        &self,
        setup: &ExperimentSetup,
        schedule: &SnapshotSchedule,
        sink: &mut dyn SnapshotSink,
    ) -> std::result::Result<RunOutput, RunAborted> {
        let initial = self.initial_state(&setup.model);
        let stepper = match TimeStepper::new(&self.disc, &setup.model, setup.picard, setup.linsolve) {
            Ok(s) => s,
            Err(error) => {
                return Err(RunAborted {
                    error,
                    partial: RunOutput {
                        final_state: initial,
                        energy_log: Vec::new(),
                        diagnostics: Vec::new(),
                    },
                })
            }
        };
        stepper.run(initial, &setup.grid, schedule, sink)
    }
}

/// `sqrt(m_h(e, e) / m_h(ref, ref))` with `e = ref - coarse`.
pub fn discrete_relative_error(coarse: &[f64], reference: &[f64], mass: &CsrMatrix) -> Result<f64> {
    for x in [coarse, reference] {
        if x.len() != mass.dim() {
            return Err(Error::DimensionMismatch {
                expected: mass.dim(),
                got: x.len(),
            });
        }
    }
    let denom = mass.inner(reference, reference);
    if !(denom > 0.0) {
        return Err(Error::UndefinedError);
    }
    let e: Vec<f64> = reference.iter().zip(coarse).map(|(r, c)| r - c).collect();
    Ok((mass.inner(&e, &e).max(0.0) / denom).sqrt())
}

fn point_key(p: [f64; 2]) -> (u64, u64) {
    // +0.0 and -0.0 compare equal but differ in bits
    ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits())
}

/// Point evaluation of a discrete field through the cellwise `L^2` projections.
pub struct FieldEvaluator<'a> {
    mesh: &'a PolygonalMesh,
    disc: &'a Discretization,
    vertex_index: HashMap<(u64, u64), usize>,
    buckets: Vec<Vec<usize>>,
    nx: usize,
    ny: usize,
}

impl<'a> FieldEvaluator<'a> {
    pub fn new(mesh: &'a PolygonalMesh, disc: &'a Discretization) -> Self {
        let vertex_index = mesh
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| (point_key(v.coords()), i))
            .collect();
        let side = (mesh.num_cells() as f64).sqrt().ceil().max(1.0) as usize;
        let (nx, ny) = (side, side);
        let mut buckets = vec![Vec::new(); nx * ny];
        let ev = FieldEvaluator {
            mesh,
            disc,
            vertex_index,
            buckets: Vec::new(),
            nx,
            ny,
        };
        for c in 0..mesh.num_cells() {
            let pts = mesh.cell_points(c);
            let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
            for p in &pts {
                let (i, j) = ev.bucket_of(*p);
                i0 = i0.min(i);
                j0 = j0.min(j);
                i1 = i1.max(i);
                j1 = j1.max(j);
            }
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(c);
                }
            }
        }
        FieldEvaluator { buckets, ..ev }
    }

    fn bucket_of(&self, p: [f64; 2]) -> (usize, usize) {
        let d = self.mesh.domain();
        let fx = ((p[0] - d.x_min) / d.width() * self.nx as f64).floor();
        let fy = ((p[1] - d.y_min) / d.height() * self.ny as f64).floor();
        (
            (fx.max(0.0) as usize).min(self.nx - 1),
            (fy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    /// Cell containing `p`; on ties or round-off the closest candidate wins.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let (i, j) = self.bucket_of(p);
        let mut best: Option<(f64, usize)> = None;
        for &c in &self.buckets[j * self.nx + i] {
            let d = outside_distance(p, &self.mesh.cell_points(c));
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
            if d == 0.0 {
                break;
            }
        }
        best.map(|(_, c)| c)
    }

    /// Value of the field with DoFs `values` at `p`.
    pub fn eval(&self, values: &[f64], p: [f64; 2]) -> Result<f64> {
        if let Some(&i) = self.vertex_index.get(&point_key(p)) {
            return Ok(values[i]);
        }
        let c = self
            .locate(p)
            .ok_or_else(|| Error::Reference(format!("point ({}, {}) lies outside the reference mesh", p[0], p[1])))?;
        let ops = &self.disc.elements[c];
        let local: Vec<f64> = self.disc.dofs.cell_dofs(c).iter().map(|&g| values[g]).collect();
        Ok(ops.cell.basis.eval_expansion(&ops.project(&local), p))
    }
}

/// 0 inside or on the polygon, otherwise the distance to its boundary.
fn outside_distance(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut inside = false;
    let mut dist = f64::INFINITY;
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let t = (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
        dist = dist.min((a[0] + t * ex - p[0]).hypot(a[1] + t * ey - p[1]));
    }
    if inside {
        0.0
    } else {
        dist
    }
}

/// Terminal state of a fine run, ready to be compared against coarse runs.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub prepared: Prepared,
    pub state: FieldState,
    pub grid: TimeGrid,
    /// SHA-256 over the setup description and the reference mesh.
    pub provenance: String,
}

impl ReferenceSolution {
    pub fn compute(setup: &ExperimentSetup) -> Result<Self> {
        let mesh = setup
            .mesh
            .build()
            .map_err(|e| Error::Reference(format!("reference mesh: {e}")))?;
        let prepared = Prepared::new(mesh)?;
        let out = prepared
            .simulate(setup, &SnapshotSchedule::none(), &mut NullSink)
            .map_err(|e| Error::Reference(e.to_string()))?;
        let mut h = Sha256::new();
        h.update(format!("{setup:?}").as_bytes());
        h.update(prepared.mesh.content_hash().as_bytes());
        Ok(ReferenceSolution {
            prepared,
            state: out.final_state,
            grid: setup.grid,
            provenance: hex::encode(h.finalize()),
        })
    }

    /// Reference fields at the vertices of `coarse`.
    pub fn interpolate_onto(&self, coarse: &PolygonalMesh) -> Result<(Vec<f64>, Vec<f64>)> {
        let ev = FieldEvaluator::new(&self.prepared.mesh, &self.prepared.disc);
        let mut v = Vec::with_capacity(coarse.num_vertices());
        let mut w = Vec::with_capacity(coarse.num_vertices());
        for p in coarse.vertices() {
            v.push(ev.eval(&self.state.v, p.coords())?);
            w.push(ev.eval(&self.state.w, p.coords())?);
        }
        Ok((v, w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    V,
    W,
}

/// Error table: rows are mesh levels, columns time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub hs: Vec<f64>,
    pub dts: Vec<f64>,
    /// Step counts matching `dts`.
    pub steps: Vec<usize>,
    pub errors_v: Vec<Vec<f64>>,
    pub errors_w: Vec<Vec<f64>>,
    pub reference_provenance: String,
}

/// Least-squares slope of `log y` against `log x`.
pub fn fitted_order(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `log(y_k / y_{k+1}) / log(x_k / x_{k+1})` for consecutive entries.
pub fn pairwise_orders(x: &[f64], y: &[f64]) -> Vec<f64> {
    (0..x.len().saturating_sub(1))
        .map(|k| (y[k] / y[k + 1]).ln() / (x[k] / x[k + 1]).ln())
        .collect()
}

impl ErrorReport {
    pub fn errors(&self, field: Field) -> &[Vec<f64>] {
        match field {
            Field::V => &self.errors_v,
            Field::W => &self.errors_w,
        }
    }

    pub fn column(&self, field: Field, col: usize) -> Vec<f64> {
        self.errors(field).iter().map(|row| row[col]).collect()
    }

    /// Fitted order in `h` at the time step of column `col`.
    pub fn spatial_order(&self, field: Field, col: usize) -> f64 {
        fitted_order(&self.hs, &self.column(field, col))
    }

    /// Fitted order in `dt` on the mesh of row `row`.
    pub fn temporal_order(&self, field: Field, row: usize) -> f64 {
        fitted_order(&self.dts, &self.errors(field)[row])
    }
}

/// A grid of coarse runs compared against one reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub family: MeshFamily,
    pub levels: Vec<usize>,
    pub steps: Vec<usize>,
    pub reference_level: usize,
    pub reference_steps: usize,
    pub model: ModelSpec,
    pub t_final: f64,
    pub picard: PicardConfig,
    pub linsolve: LinearSolveConfig,
}

impl ConvergenceStudy {
    /// Levels 1/8..1/64 and steps 1/10..1/80 against 1/128 and 1/800 on squares.
    pub fn example1() -> Self {
        ConvergenceStudy {
            family: MeshFamily::Squares,
            levels: vec![8, 16, 32, 64],
            steps: vec![10, 20, 40, 80],
            reference_level: 128,
            reference_steps: 800,
            model: example1_model(),
            t_final: 1.0,
            picard: PicardConfig::default(),
            linsolve: LinearSolveConfig::default(),
        }
    }

    fn setup(&self, n: usize, steps: usize) -> ExperimentSetup {
        ExperimentSetup {
            mesh: MeshSpec {
                family: self.family,
                ..MeshSpec::squares(n)
            },
            model: self.model,
            grid: TimeGrid {
                t_final: self.t_final,
                steps,
            },
            picard: self.picard,
            linsolve: self.linsolve,
            snapshot_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.steps.is_empty() {
            return Err(Error::Reference("empty level or step list".into()));
        }
        let max_n = *self.levels.iter().max().unwrap();
        let max_steps = *self.steps.iter().max().unwrap();
        if self.reference_level < max_n || self.reference_steps < max_steps {
            return Err(Error::Reference("reference must be at least as fine as every test run".into()));
        }
        if self.reference_level == max_n && self.reference_steps == max_steps {
            return Err(Error::Reference("reference must be strictly finer in space or time".into()));
        }
        if self.levels.contains(&0) || self.steps.contains(&0) {
            return Err(Error::Reference("levels and step counts must be positive".into()));
        }
        if self.family == MeshFamily::Squares {
            if let Some(n) = self.levels.iter().find(|&&n| self.reference_level % n != 0) {
                return Err(Error::Reference(format!(
                    "square level {n} does not divide the reference level {}",
                    self.reference_level
                )));
            }
        }
        Ok(())
    }

    pub fn reference_setup(&self) -> ExperimentSetup {
        self.setup(self.reference_level, self.reference_steps)
    }

    /// Runs the reference and the full grid (grid cells in parallel).
    pub fn run(&self) -> Result<ErrorReport> {
        self.validate()?;
        let reference = ReferenceSolution::compute(&self.reference_setup())?;
        self.run_against(&reference)
    }

    pub fn run_against(&self, reference: &ReferenceSolution) -> Result<ErrorReport> {
        self.validate()?;
        let levels: Vec<(Prepared, Vec<f64>, Vec<f64>)> = self
            .levels
            .par_iter()
            .map(|&n| {
                let prepared = Prepared::new(self.setup(n, 1).mesh.build()?)?;
                let (vi, wi) = reference.interpolate_onto(&prepared.mesh)?;
                Ok((prepared, vi, wi))
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> = (0..self.levels.len())
            .flat_map(|r| (0..self.steps.len()).map(move |c| (r, c)))
            .collect();
        let results: Vec<(f64, f64)> = jobs
            .par_iter()
            .map(|&(r, c)| {
                let (prepared, vi, wi) = &levels[r];
                let setup = self.setup(self.levels[r], self.steps[c]);
                let out = prepared.simulate(&setup, &SnapshotSchedule::none(), &mut NullSink)?;
                let m = &prepared.disc.mass;
                Ok((
                    discrete_relative_error(&out.final_state.v, vi, m)?,
                    discrete_relative_error(&out.final_state.w, wi, m)?,
                ))
            })
            .collect::<Result<_>>()?;
        let cols = self.steps.len();
        let table = |pick: fn(&(f64, f64)) -> f64| -> Vec<Vec<f64>> {
            results.chunks(cols).map(|row| row.iter().map(pick).collect()).collect()
        };
        Ok(ErrorReport {
            hs: self.levels.iter().map(|&n| 1.0 / n as f64).collect(),
            dts: self.steps.iter().map(|&s| self.t_final / s as f64).collect(),
            steps: self.steps.clone(),
            errors_v: table(|e| e.0),
            errors_w: table(|e| e.1),
            reference_provenance: reference.provenance.clone(),
        })
    }
}

/// The convergence study with default settings.
pub fn run_example1(study: &ConvergenceStudy) -> Result<ErrorReport> {
    study.run()
}

/// Spatial statistics of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMetrics {
    pub step: usize,
    pub t: f64,
    /// `sqrt(m_h(v - mean, v - mean) / |Omega|)` with `mean = J(v) / |Omega|`.
    pub std_v: f64,
    pub min_v: f64,
    pub max_v: f64,
    /// Area fraction where `v` exceeds the excitation threshold.
    pub excited_fraction: f64,
    pub finite: bool,
}

pub fn snapshot_metrics(step: usize, state: &FieldState, disc: &Discretization, threshold: f64) -> SnapshotMetrics {
    let area: f64 = disc.weights.iter().sum();
    let mean = disc.functional(&state.v) / area;
    let dev: Vec<f64> = state.v.iter().map(|x| x - mean).collect();
    let excited: f64 = disc
        .weights
        .iter()
        .zip(&state.v)
        .filter(|(_, &v)| v > threshold)
        .fold(0.0, |acc, (u, _)| acc + u);
    SnapshotMetrics {
        step,
        t: state.t,
        std_v: (disc.mass.inner(&dev, &dev).max(0.0) / area).sqrt(),
        min_v: state.v.iter().cloned().fold(f64::INFINITY, f64::min),
        max_v: state.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        excited_fraction: excited / area,
        finite: state.is_finite(),
    }
}

/// Snapshots and their metrics from one benchmark run.
#[derive(Debug, Clone)]
pub struct ExampleOutcome {
    pub prepared: Prepared,
    pub output: RunOutput,
    pub snapshots: Vec<(usize, FieldState)>,
    pub metrics: Vec<SnapshotMetrics>,
}

struct Tee<'a> {
    memory: MemorySink,
    forward: &'a mut dyn SnapshotSink,
}

impl SnapshotSink for Tee<'_> {
    fn emit(&mut self, step: usize, state: &FieldState) -> Result<()> {
        self.memory.emit(step, state)?;
        self.forward.emit(step, state)
    }

    fn finish(&mut self) -> Result<()> {
        self.forward.finish()
    }
}

/// Runs a benchmark setup, keeping the snapshots at `setup.snapshot_times`
/// (plus `t = 0`) and forwarding them to `sink`.
pub fn run_example(setup: &ExperimentSetup, sink: &mut dyn SnapshotSink) -> Result<ExampleOutcome> {
    let prepared = Prepared::new(setup.mesh.build()?)?;
    let mut schedule = SnapshotSchedule::at_times(&setup.grid, &setup.snapshot_times);
    schedule.extra_steps.insert(0);
    let mut tee = Tee {
        memory: MemorySink::default(),
        forward: sink,
    };
    let output = prepared.simulate(setup, &schedule, &mut tee)?;
    let threshold = setup.model.kinetics.theta;
    let metrics = tee
        .memory
        .snapshots
        .iter()
        .map(|(n, s)| snapshot_metrics(*n, s, &prepared.disc, threshold))
        .collect();
    Ok(ExampleOutcome {
        prepared,
        output,
        snapshots: tee.memory.snapshots,
        metrics,
    })
}

/// Stimulated wave with the given (or default) setup.
pub fn run_example2(setup: &ExperimentSetup, sink: &mut dyn SnapshotSink) -> Result<ExampleOutcome> {
    run_example(setup, sink)
}

/// Spiral wave with the given (or default) setup.
pub fn run_example3(setup: &ExperimentSetup, sink: &mut dyn SnapshotSink) -> Result<ExampleOutcome> {
    run_example(setup, sink)
}
