//! Declarative mesh descriptions, as used by configurations and experiments.

use super::{generate_distorted_quad_mesh, generate_square_mesh, generate_voronoi_mesh, PolygonalMesh, Rectangle};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshFamily {
    Squares,
    Distorted { amplitude: f64, seed: u64 },
    /// `n * n` random seeds relaxed by Lloyd sweeps.
    Voronoi { seed: u64, lloyd_iterations: usize },
}

impl MeshFamily {
    pub const DEFAULT_AMPLITUDE: f64 = 0.2;
    pub const DEFAULT_LLOYD_ITERATIONS: usize = 20;

    pub fn name(&self) -> &'static str {
        match self {
            MeshFamily::Squares => "squares",
            MeshFamily::Distorted { .. } => "distorted",
            MeshFamily::Voronoi { .. } => "voronoi",
        }
    }

    /// Family by name with default parameters and the given seed.
    pub fn from_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "squares" => Ok(MeshFamily::Squares),
            "distorted" => Ok(MeshFamily::Distorted {
                amplitude: Self::DEFAULT_AMPLITUDE,
                seed,
            }),
            "voronoi" => Ok(MeshFamily::Voronoi {
                seed,
                lloyd_iterations: Self::DEFAULT_LLOYD_ITERATIONS,
            }),
            other => Err(Error::config(
                "mesh.family",
                format!("unknown family `{other}` (expected squares, distorted or voronoi)"),
            )),
        }
    }
}

/// A mesh family at resolution `n`, i.e. nominal size `1/n` on the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub family: MeshFamily,
    pub n: usize,
    pub domain: Rectangle,
}

impl MeshSpec {
    pub fn squares(n: usize) -> Self {
        MeshSpec {
            family: MeshFamily::Squares,
            n,
            domain: Rectangle::unit_square(),
        }
    }

    pub fn build(&self) -> Result<PolygonalMesh> {
        match self.family {
            MeshFamily::Squares => generate_square_mesh(self.n, self.domain),
            MeshFamily::Distorted { amplitude, seed } => generate_distorted_quad_mesh(self.n, self.domain, amplitude, seed),
            MeshFamily::Voronoi { seed, lloyd_iterations } => {
                generate_voronoi_mesh(self.n * self.n, self.domain, lloyd_iterations, seed)
            }
        }
    }

    /// Nominal mesh size `1/n` (relative to the longer domain side).
    pub fn nominal_h(&self) -> f64 {
        self.domain.width().max(self.domain.height()) / self.n as f64
    }
}
