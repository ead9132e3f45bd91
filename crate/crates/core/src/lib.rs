//! Lowest-order virtual element discretization of the nonlocal
//! FitzHugh-Nagumo reaction-diffusion system on polygonal meshes.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: rectangle meshes (squares, distorted quads, Lloyd-relaxed
//!   Voronoi), validation, regularity checks and the `POLYMESH` text format.
//! - [`quadrature`]: exact polygon integration of polynomials up to degree 4.
//! - [`vem`]: per-cell projectors, stiffness/mass matrices and the local
//!   nonlinear forms.
//! - [`assembly`]: global operators, the nonlocal functional and load vectors.
//! - [`model`]: diffusion law, ionic kinetics, stimulus and initial data.
//! - [`timestepper`]: backward Euler with a Picard loop, plus the linear solver.
//! - [`experiments`]: convergence study and the stimulated/spiral wave runs.
//! - [`config`], [`output`]: run configuration, manifests, VTK and CSV writers.
//! - [`runner`]: configured runs and convergence studies written to disk.

pub mod assembly;
pub mod config;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod model;
pub mod output;
pub mod quadrature;
pub mod runner;
pub mod solver;
pub mod sparse;
pub mod timestepper;
pub mod vem;

pub use error::{Error, Result};
