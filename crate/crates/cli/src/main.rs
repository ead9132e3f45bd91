use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fhn_vem::config::{parse_override, RunConfig};
use fhn_vem::experiments::Field;
use fhn_vem::mesh::{check_mesh_assumptions, write_polymesh, MeshFamily, MeshSpec, Rectangle};
use fhn_vem::runner::{execute_convergence, execute_run};
use toml::Value;

#[derive(Parser)]
#[command(name = "fhn-vem", version, about = "Virtual element solver for the nonlocal FitzHugh-Nagumo system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mesh and write it in polymesh format.
    Mesh(MeshArgs),
    /// Integrate in time and write VTK snapshots.
    Run(CommonArgs),
    /// Measure discrete L2 errors against a fine reference run.
    Convergence(ConvergenceArgs),
    /// Run one of the bundled benchmark experiments.
    Example {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        id: u8,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long, value_parser = ["squares", "distorted", "voronoi"])]
    family: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    c_t: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Configuration file of `section.key = value` entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set picard.tol=1e-10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (`output.dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Mesh family (`mesh.family`).
    #[arg(long)]
    family: Option<String>,
    /// Mesh resolution (`mesh.n`).
    #[arg(long)]
    n: Option<usize>,
    /// Mesh seed (`mesh.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of time steps (`time.N`).
    #[arg(long)]
    steps: Option<usize>,
    /// Final time (`time.T`).
    #[arg(long)]
    t_final: Option<f64>,
    /// Snapshot stride (`output.stride`).
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Mesh levels (`convergence.levels`), e.g. `8,16,32`.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    /// Step counts (`convergence.steps`), e.g. `10,20,40,80`.
    #[arg(long, value_delimiter = ',')]
    step_counts: Option<Vec<usize>>,
    #[arg(long)]
    reference_level: Option<usize>,
    #[arg(long)]
    reference_steps: Option<usize>,
}

impl CommonArgs {
    /// `--set` entries first, then dedicated flags, so flags win.
    fn overrides(&self, preset: Option<u8>) -> Result<Vec<(String, Value)>> {
        let mut o = Vec::new();
        if let Some(id) = preset {
            o.push(("experiment.preset".to_string(), Value::String(format!("example{id}"))));
        }
        for s in &self.sets {
            o.push(parse_override(s)?);
        }
        let mut put = |k: &str, v: Value| o.push((k.to_string(), v));
        if let Some(d) = &self.out_dir {
            put("output.dir", Value::String(d.display().to_string()));
        }
        if let Some(f) = &self.family {
            put("mesh.family", Value::String(f.clone()));
        }
        if let Some(n) = self.n {
            put("mesh.n", Value::Integer(n as i64));
        }
        if let Some(s) = self.seed {
            put("mesh.seed", Value::Integer(s as i64));
        }
        if let Some(n) = self.steps {
            put("time.N", Value::Integer(n as i64));
        }
        if let Some(t) = self.t_final {
            put("time.T", Value::Float(t));
        }
        if let Some(s) = self.stride {
            put("output.stride", Value::Integer(s as i64));
        }
        Ok(o)
    }

    fn load(&self, preset: Option<u8>, extra: Vec<(String, Value)>) -> Result<RunConfig> {
        let mut overrides = self.overrides(preset)?;
        overrides.extend(extra);
        let cfg = match &self.config {
            Some(path) => RunConfig::load(path, &overrides)?,
            None => RunConfig::parse("", "<defaults>", &overrides)?,
        };
        Ok(cfg)
    }
}

fn ints(xs: &[usize]) -> Value {
    Value::Array(xs.iter().map(|&x| Value::Integer(x as i64)).collect())
}

fn convergence_overrides(a: &ConvergenceArgs) -> Vec<(String, Value)> {
    let mut o = Vec::new();
    if let Some(l) = &a.levels {
        o.push(("convergence.levels".to_string(), ints(l)));
    }
    if let Some(s) = &a.step_counts {
        o.push(("convergence.steps".to_string(), ints(s)));
    }
    if let Some(r) = a.reference_level {
        o.push(("convergence.reference_level".to_string(), Value::Integer(r as i64)));
    }
    if let Some(r) = a.reference_steps {
        o.push(("convergence.reference_steps".to_string(), Value::Integer(r as i64)));
    }
    o
}

fn cmd_mesh(a: &MeshArgs) -> Result<()> {
    let family = MeshFamily::from_name(&a.family, a.seed)?;
    let spec = MeshSpec {
        family,
        n: a.n,
        domain: Rectangle::unit_square(),
    };
    let mesh = spec.build()?;
    write_polymesh(&mesh, &a.out)?;
    let q = check_mesh_assumptions(&mesh, a.c_t);
    println!(
        "{} cells, {} vertices, h = {:.6}, min edge ratio {:.4}, min kernel radius ratio {:.4}, quality {} (C_T = {})",
        mesh.num_cells(),
        mesh.num_vertices(),
        mesh.h(),
        q.min_edge_ratio,
        q.min_kernel_radius_ratio,
        if q.passes { "ok" } else { "FAILS" },
        a.c_t
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_run(cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    let summary = execute_run(cfg, dir).with_context(|| format!("run writing to {}", dir.display()))?;
    if !summary.quality.passes {
        eprintln!("warning: mesh fails the regularity check at C_T = {}", cfg.mesh_c_t);
    }
    let out = &summary.output;
    println!(
        "{} steps to t = {}, max Picard iterations {}, {} snapshots in {}",
        out.completed_steps(),
        out.final_state.t,
        out.max_picard_iterations(),
        summary.snapshots,
        dir.display()
    );
    Ok(())
}

fn cmd_convergence(cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    let report = execute_convergence(cfg, dir).with_context(|| format!("convergence study writing to {}", dir.display()))?;
    for (field, name) in [(Field::V, "v"), (Field::W, "w")] {
        println!("errors in {name}:");
        for (h, row) in report.hs.iter().zip(report.errors(field)) {
            let cells: Vec<String> = row.iter().map(|e| format!("{e:.6e}")).collect();
            println!("  h = {h:.6}: {}", cells.join("  "));
        }
        if report.hs.len() >= 2 {
            for j in 0..report.dts.len() {
                println!("  spatial order at dt = {:.6}: {:.3}", report.dts[j], report.spatial_order(field, j));
            }
        }
        if report.dts.len() >= 2 {
            for i in 0..report.hs.len() {
                println!("  temporal order at h = {:.6}: {:.3}", report.hs[i], report.temporal_order(field, i));
            }
        }
    }
    println!("wrote errors_v.csv, errors_w.csv, rates.csv to {}", dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mesh(a) => cmd_mesh(&a),
        Command::Run(c) => cmd_run(&c.load(None, Vec::new())?),
        Command::Convergence(a) => cmd_convergence(&a.common.load(None, convergence_overrides(&a))?),
        Command::Example { id: 1, common } => cmd_convergence(&common.load(Some(1), Vec::new())?),
        Command::Example { id, common } => cmd_run(&common.load(Some(id), Vec::new())?),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
