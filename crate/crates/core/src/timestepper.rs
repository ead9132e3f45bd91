//! Backward Euler in time with a Picard loop for the nonlocal coefficient
//! and the reaction terms.
//!
//! Within a step the iterate `(v_s, w_s)` starts at the previous level and
//! is updated field by field:
//!
//! 1. `D_s = D(J(v_s))`;
//! 2. `(M/dt + D_s A) v^ = M v_prev/dt + I_app - b(v_s, w_s)`;
//! 3. `(M/dt) w^ = M w_prev/dt + c(v_{s+1}, w_s)`;
//!
//! with `x_{s+1} = (1 - omega) x_s + omega x^`. Every solve is SPD. The loop
//! stops when the largest relative sup-norm increment is at most `tol`.

use std::collections::BTreeSet;
use std::sync::mpsc;
use std::thread::JoinHandle;

use crate::assembly::{assemble_applied_current, assemble_gating, assemble_ionic, Discretization, FieldState};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::solver::{solve_spd, LinearSolveConfig, LinearSolveStats};

/// Uniform grid `t_n = n T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::config("time.T", format!("must be positive and finite, got {t_final}")));
        }
        Ok(TimeGrid { t_final, steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.t_final / self.steps as f64
        }
    }

    /// Index of the grid time closest to `t`.
    pub fn nearest_step(&self, t: f64) -> usize {
        ((t / self.t_final * self.steps as f64).round().max(0.0) as usize).min(self.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            tol: 1e-8,
            max_iters: 50,
            damping: 1.0,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::config("picard.tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("picard.max_iters", "must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("picard.damping", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// What happened inside one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub picard_iterations: usize,
    /// Relative increment after each Picard iteration.
    pub increments: Vec<f64>,
    /// `J(v^n)` and `D(J(v^n))` of the accepted state.
    pub functional: f64,
    pub diffusion: f64,
    pub v_solve: LinearSolveStats,
    pub w_solve: LinearSolveStats,
    /// CG iterations summed over the step.
    pub linear_iterations: usize,
}

/// Discrete energies of one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub step: usize,
    pub t: f64,
    /// `sqrt(v^T M v)`.
    pub norm_v: f64,
    pub norm_w: f64,
    /// `sum_{m <= n} dt v^m . A v^m`.
    pub dissipation: f64,
    pub functional: f64,
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn relative_increment(new: &[f64], old: &[f64]) -> f64 {
    let diff = new.iter().zip(old).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / sup_norm(new).max(1.0)
}

/// Backward Euler stepper bound to one discretization and model.
#[derive(Debug, Clone, Copy)]
pub struct TimeStepper<'a> {
    pub disc: &'a Discretization,
    pub model: &'a ModelSpec,
    pub picard: PicardConfig,
    pub linsolve: LinearSolveConfig,
}

impl<'a> TimeStepper<'a> {
    pub fn new(disc: &'a Discretization, model: &'a ModelSpec, picard: PicardConfig, linsolve: LinearSolveConfig) -> Result<Self> {
        picard.validate()?;
        Ok(TimeStepper {
            disc,
            model,
            picard,
            linsolve,
        })
    }

    /// Advances `prev` to `t_new = prev.t + dt`.
    pub fn step(&self, prev: &FieldState, step: usize, t_new: f64, dt: f64) -> Result<(FieldState, StepDiagnostics)> {
        let d = self.disc;
        let n = d.num_dofs();
        if prev.v.len() != n || prev.w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: prev.v.len().min(prev.w.len()),
            });
        }
        let kinetics = &self.model.kinetics;
        let omega = self.picard.damping;

        let m_vprev = d.mass.mul_vec(&prev.v);
        let m_wprev = d.mass.mul_vec(&prev.w);
        let i_app = assemble_applied_current(t_new, &d.dofs, &d.elements, self.model)?;
        let base_v: Vec<f64> = (0..n).map(|i| m_vprev[i] / dt + i_app[i]).collect();

        let mut iter = FieldState {
            v: prev.v.clone(),
            w: prev.w.clone(),
            t: t_new,
        };
        let mut increments = Vec::new();
        let mut v_solve;
        let mut w_solve;
        let mut linear_iterations = 0;
        let mut system = None;
        let mut system_coeff = f64::NAN;

        for _ in 0..self.picard.max_iters {
            let coeff = self.model.diffusion.eval(d.functional(&iter.v));
            if coeff != system_coeff {
                system = Some(d.mass.linear_combination(1.0 / dt, &d.stiffness, coeff)?);
                system_coeff = coeff;
            }
            let b = assemble_ionic(&iter, &d.dofs, &d.elements, kinetics)?;
            let rhs: Vec<f64> = base_v.iter().zip(&b).map(|(x, y)| x - y).collect();
            let (v_hat, stats) = solve_spd(system.as_ref().expect("system built above"), &rhs, &self.linsolve, Some(&iter.v))?;
            v_solve = stats;
            linear_iterations += stats.iterations;
            let v_new: Vec<f64> = iter.v.iter().zip(&v_hat).map(|(o, h)| (1.0 - omega) * o + omega * h).collect();

            let mixed = FieldState {
                v: v_new,
                w: std::mem::take(&mut iter.w),
                t: t_new,
            };
            let c = assemble_gating(&mixed, &d.dofs, &d.elements, kinetics)?;
            // (M/dt) w^ = M w_prev/dt + c, scaled by dt
            let rhs_w: Vec<f64> = m_wprev.iter().zip(&c).map(|(m, ci)| m + dt * ci).collect();
            let (w_hat, stats) = solve_spd(&d.mass, &rhs_w, &self.linsolve, Some(&mixed.w))?;
            w_solve = stats;
            linear_iterations += stats.iterations;
            let w_new: Vec<f64> = mixed.w.iter().zip(&w_hat).map(|(o, h)| (1.0 - omega) * o + omega * h).collect();

            let inc = relative_increment(&mixed.v, &iter.v).max(relative_increment(&w_new, &mixed.w));
            increments.push(inc);
            iter = FieldState {
                v: mixed.v,
                w: w_new,
                t: t_new,
            };
            if !iter.is_finite() {
                return Err(Error::NonFinite { step });
            }
            if inc <= self.picard.tol {
                let functional = d.functional(&iter.v);
                let diag = StepDiagnostics {
                    step,
                    t: t_new,
                    picard_iterations: increments.len(),
                    increments,
                    functional,
                    diffusion: self.model.diffusion.eval(functional),
                    v_solve,
                    w_solve,
                    linear_iterations,
                };
                return Ok((iter, diag));
            }
        }
        Err(Error::PicardNonConvergence {
            step,
            history: increments,
            last_iterate: Box::new(iter),
        })
    }

    fn energy(&self, state: &FieldState, step: usize, dissipation: f64) -> EnergyRecord {
        let m = &self.disc.mass;
        EnergyRecord {
            step,
            t: state.t,
            norm_v: m.inner(&state.v, &state.v).sqrt(),
            norm_w: m.inner(&state.w, &state.w).sqrt(),
            dissipation,
            functional: self.disc.functional(&state.v),
        }
    }

    /// Runs all steps of `grid` from `initial`, emitting scheduled snapshots to `sink`.
    pub fn run(
        &self,
        initial: FieldState,
        grid: &TimeGrid,
        schedule: &SnapshotSchedule,
        sink: &mut dyn SnapshotSink,
    ) -> std::result::Result<RunOutput, RunAborted> {
        let mut out = RunOutput {
            energy_log: vec![self.energy(&initial, 0, 0.0)],
            diagnostics: Vec::with_capacity(grid.steps),
            final_state: initial,
        };
        let abort = |error: Error, partial: RunOutput| RunAborted { error, partial };
        if schedule.includes(0, grid.steps) {
            if let Err(e) = sink.emit(0, &out.final_state) {
                return Err(abort(e, out));
            }
        }
        let dt = grid.dt();
        let mut dissipation = 0.0;
        for n in 1..=grid.steps {
            let t = grid.time(n);
            match self.step(&out.final_state, n, t, dt) {
                Ok((state, diag)) => {
                    let av = self.disc.stiffness.inner(&state.v, &state.v);
                    dissipation += dt * av;
                    out.energy_log.push(self.energy(&state, n, dissipation));
                    out.diagnostics.push(diag);
                    out.final_state = state;
                }
                Err(e) => return Err(abort(e, out)),
            }
            if schedule.includes(n, grid.steps) {
                if let Err(e) = sink.emit(n, &out.final_state) {
                    return Err(abort(e, out));
                }
            }
        }
        if let Err(e) = sink.finish() {
            return Err(abort(e, out));
        }
        Ok(out)
    }
}

/// Result of a completed (or partially completed) run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: FieldState,
    /// One record per time level, starting at `t = 0`.
    pub energy_log: Vec<EnergyRecord>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl RunOutput {
    pub fn completed_steps(&self) -> usize {
        self.diagnostics.len()
    }

    pub fn max_picard_iterations(&self) -> usize {
        self.diagnostics.iter().map(|d| d.picard_iterations).max().unwrap_or(0)
    }
}

/// A failed run with everything computed before the failure.
#[derive(Debug)]
pub struct RunAborted {
    pub error: Error,
    pub partial: RunOutput,
}

impl std::fmt::Display for RunAborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted after {} steps: {}", self.partial.completed_steps(), self.error)
    }
}

impl std::error::Error for RunAborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Which time levels are handed to the snapshot sink.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SnapshotSchedule {
    /// Every `stride`-th step (0 disables), plus the first and last level.
    pub stride: usize,
    pub extra_steps: BTreeSet<usize>,
}

impl SnapshotSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn every(stride: usize) -> Self {
        SnapshotSchedule {
            stride,
            extra_steps: BTreeSet::new(),
        }
    }

    /// Exactly the grid levels nearest to `times`.
    pub fn at_times(grid: &TimeGrid, times: &[f64]) -> Self {
        SnapshotSchedule {
            stride: 0,
            extra_steps: times.iter().map(|&t| grid.nearest_step(t)).collect(),
        }
    }

    pub fn includes(&self, n: usize, last: usize) -> bool {
        self.extra_steps.contains(&n) || (self.stride > 0 && (n == 0 || n == last || n % self.stride == 0))
    }
}

/// Receives snapshots while the run continues.
pub trait SnapshotSink {
    fn emit(&mut self, step: usize, state: &FieldState) -> Result<()>;

    /// Flushes pending output; called once after the last step.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl SnapshotSink for NullSink {
    fn emit(&mut self, _step: usize, _state: &FieldState) -> Result<()> {
        Ok(())
    }
}

/// Keeps every snapshot in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub snapshots: Vec<(usize, FieldState)>,
}

impl SnapshotSink for MemorySink {
    fn emit(&mut self, step: usize, state: &FieldState) -> Result<()> {
        self.snapshots.push((step, state.clone()));
        Ok(())
    }
}

/// Hands snapshots to a writer thread through a bounded channel.
///
/// The first writer error is reported by the next `emit` or by `finish`.
pub struct ThreadedSink {
    sender: Option<mpsc::SyncSender<(usize, FieldState)>>,
    worker: Option<JoinHandle<Result<()>>>,
}

impl ThreadedSink {
    pub fn spawn<F>(capacity: usize, mut write: F) -> Self
    where
        F: FnMut(usize, FieldState) -> Result<()> + Send + 'static,
    {
        let (sender, receiver) = mpsc::sync_channel::<(usize, FieldState)>(capacity.max(1));
        let worker = std::thread::spawn(move || {
            for (step, state) in receiver {
                write(step, state)?;
            }
            Ok(())
        });
        ThreadedSink {
            sender: Some(sender),
            worker: Some(worker),
        }
    }

    fn join(&mut self) -> Result<()> {
        self.sender.take();
        match self.worker.take() {
            Some(h) => h.join().unwrap_or_else(|_| Err(Error::Io {
                path: "<snapshot writer>".into(),
                source: std::io::Error::other("writer thread panicked"),
            })),
            None => Ok(()),
        }
    }
}

impl SnapshotSink for ThreadedSink {
    fn emit(&mut self, step: usize, state: &FieldState) -> Result<()> {
        let closed = || Error::Io {
            path: "<snapshot writer>".into(),
            source: std::io::Error::other("writer thread has stopped"),
        };
        let Some(sender) = &self.sender else {
            return Err(closed());
        };
        if sender.send((step, state.clone())).is_ok() {
            return Ok(());
        }
        // the writer stopped early; surface its error
        self.join().and_then(|_| Err(closed()))
    }

    fn finish(&mut self) -> Result<()> {
        self.join()
    }
}

impl Drop for ThreadedSink {
    fn drop(&mut self) {
        let _ = self.join();
    }
}
