//! End-to-end jobs driven by a [`RunConfig`]: every job writes its manifest
//! before any computation that can fail midway.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::{ErrorReport, Prepared};
use crate::mesh::{check_mesh_assumptions, MeshQualityReport};
use crate::output::{snapshot_path, write_error_csv, write_vtk_snapshot};
use crate::timestepper::{EnergyRecord, RunOutput, SnapshotSchedule, ThreadedSink};

pub const MANIFEST_NAME: &str = "manifest.toml";
pub const ENERGY_NAME: &str = "energy.csv";

/// Bounded queue length between the stepper and the VTK writer thread.
const SNAPSHOT_QUEUE: usize = 4;

#[derive(Debug)]
pub struct RunSummary {
    pub output: RunOutput,
    pub quality: MeshQualityReport,
    pub manifest: PathBuf,
    pub snapshots: usize,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn format_energy_csv(log: &[EnergyRecord]) -> String {
    let mut s = String::from("step,t,norm_v,norm_w,dissipation,functional\n");
    for r in log {
        let _ = writeln!(
            s,
            "{},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e}",
            r.step, r.t, r.norm_v, r.norm_w, r.dissipation, r.functional
        );
    }
    s
}

fn base_provenance(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    vec![
        ("config_hash", cfg.hash()),
        ("version", env!("CARGO_PKG_VERSION").to_string()),
    ]
}

/// Time integration of `cfg` into `dir`: manifest, VTK snapshots at the
/// configured times (plus the initial and final levels) and the energy log.
///
/// On a failed step the energy log of the completed steps is still written.
pub fn execute_run(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mesh = cfg.build_mesh()?;
    let quality = check_mesh_assumptions(&mesh, cfg.mesh_c_t);
    let mut provenance = base_provenance(cfg);
    provenance.push(("mesh_hash", mesh.content_hash()));
    provenance.push(("mesh_quality_passes", quality.passes.to_string()));
    let manifest = dir.join(MANIFEST_NAME);
    write_text(&manifest, &cfg.manifest(&provenance))?;

    let setup = cfg.setup();
    let prepared = Prepared::new(mesh)?;
    let mut schedule = SnapshotSchedule::at_times(&setup.grid, &setup.snapshot_times);
    schedule.stride = cfg.output_stride;
    schedule.extra_steps.insert(0);
    schedule.extra_steps.insert(setup.grid.steps);
    let snapshots = (0..=setup.grid.steps)
        .filter(|&n| schedule.includes(n, setup.grid.steps))
        .count();

    let writer_mesh = prepared.mesh.clone();
    let writer_dir = dir.to_path_buf();
    let mut sink = ThreadedSink::spawn(SNAPSHOT_QUEUE, move |n, state| {
        write_vtk_snapshot(&writer_mesh, &state, &snapshot_path(&writer_dir, n))
    });
    let result = prepared.simulate(&setup, &schedule, &mut sink);
    let energy = dir.join(ENERGY_NAME);
    match result {
        Ok(output) => {
            write_text(&energy, &format_energy_csv(&output.energy_log))?;
            Ok(RunSummary {
                output,
                quality,
                manifest,
                snapshots,
            })
        }
        Err(aborted) => {
            write_text(&energy, &format_energy_csv(&aborted.partial.energy_log))?;
            Err(aborted.error)
        }
    }
}

/// Convergence study of `cfg` into `dir`: manifest, `errors_v.csv`,
/// `errors_w.csv` and `rates.csv`.
pub fn execute_convergence(cfg: &RunConfig, dir: &Path) -> Result<ErrorReport> {
    let study = cfg.study();
    study.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(MANIFEST_NAME), &cfg.manifest(&base_provenance(cfg)))?;
    let report = study.run()?;
    write_error_csv(&report, dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_override;

    fn small(extra: &[&str]) -> RunConfig {
        let mut o: Vec<_> = ["mesh.n=4", "time.N=4", "time.T=0.1", "output.times=[0.05]"]
            .iter()
            .map(|s| parse_override(s).unwrap())
            .collect();
        o.extend(extra.iter().map(|s| parse_override(s).unwrap()));
        RunConfig::parse("", "mem", &o).unwrap()
    }

    #[test]
    fn run_writes_manifest_snapshots_and_energy() {
        let dir = tempfile::tempdir().unwrap();
        let summary = execute_run(&small(&[]), dir.path()).unwrap();
        assert_eq!(summary.snapshots, 3);
        for n in [0, 2, 4] {
            assert!(snapshot_path(dir.path(), n).exists(), "{n}");
        }
        let energy = fs::read_to_string(dir.path().join(ENERGY_NAME)).unwrap();
        assert_eq!(energy.lines().count(), 1 + summary.output.energy_log.len());
        let manifest = fs::read_to_string(&summary.manifest).unwrap();
        assert!(manifest.contains("provenance.mesh_hash = "));
        let again = RunConfig::parse(&manifest, "manifest", &[]).unwrap();
        assert_eq!(again, small(&[]));
    }

    #[test]
    fn manifest_exists_when_the_run_fails() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(&["picard.max_iters=1", "picard.tol=1e-30"]);
        assert!(execute_run(&cfg, dir.path()).is_err());
        assert!(dir.path().join(MANIFEST_NAME).exists());
        assert!(dir.path().join(ENERGY_NAME).exists());
    }
}
