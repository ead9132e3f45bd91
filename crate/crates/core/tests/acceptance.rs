//! Acceptance suite. Each test prints one `criterion N ... PASS|FAIL` line;
//! run with `--nocapture` to see them all:
//!
//! ```text
//! cargo test --release -p fhn-vem --test acceptance -- --nocapture --test-threads=1
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use fhn_vem::config::{parse_override, RunConfig};
use fhn_vem::experiments::{
    example1_setup, example3_setup, fitted_order, pairwise_orders, run_example3, ConvergenceStudy, Field, Prepared,
    EXAMPLE1_KINETICS,
};
use fhn_vem::mesh::{MeshFamily, MeshSpec, PolygonalMesh, Rectangle};
use fhn_vem::model::InitialData;
use fhn_vem::runner::{execute_run, ENERGY_NAME};
use fhn_vem::timestepper::{MemorySink, NullSink, SnapshotSchedule};
use fhn_vem::vem::ElementOperators;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, title: &str, pass: bool, elapsed: Duration, detail: &str) {
    println!(
        "criterion {n} ({title}): {} [{:.1} s] {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ")
}

/// Polygon moments by Green's theorem: [1, x, y, x^2, xy, y^2].
fn moments(p: &[[f64; 2]]) -> [f64; 6] {
    let mut m = [0.0; 6];
    for i in 0..p.len() {
        let [x0, y0] = p[i];
        let [x1, y1] = p[(i + 1) % p.len()];
        let c = x0 * y1 - x1 * y0;
        m[0] += c / 2.0;
        m[1] += (x0 + x1) * c / 6.0;
        m[2] += (y0 + y1) * c / 6.0;
        m[3] += (x0 * x0 + x0 * x1 + x1 * x1) * c / 12.0;
        m[4] += (x0 * y1 + 2.0 * x0 * y0 + 2.0 * x1 * y1 + x1 * y0) * c / 24.0;
        m[5] += (y0 * y0 + y0 * y1 + y1 * y1) * c / 12.0;
    }
    m
}

/// `int_K p q` for `p = p0 + px x + py y` and likewise `q`.
fn exact_product_integral(m: &[f64; 6], p: [f64; 3], q: [f64; 3]) -> f64 {
    p[0] * q[0] * m[0]
        + (p[0] * q[1] + p[1] * q[0]) * m[1]
        + (p[0] * q[2] + p[2] * q[0]) * m[2]
        + p[1] * q[1] * m[3]
        + (p[1] * q[2] + p[2] * q[1]) * m[4]
        + p[2] * q[2] * m[5]
}

/// `int_K grad phi_i`: each edge contributes `|e|/2` times its outward unit
/// normal to both of its end vertices.
fn hat_gradient_integrals(p: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = p.len();
    let signed_area = moments(p)[0];
    let orient = signed_area.signum();
    let mut g = vec![[0.0; 2]; n];
    for j in 0..n {
        let a = p[j];
        let b = p[(j + 1) % n];
        // (dy, -dx) is |e| times the outward normal for counter-clockwise order
        let len_normal = [orient * (b[1] - a[1]), -orient * (b[0] - a[0])];
        for k in [j, (j + 1) % n] {
            g[k][0] += 0.5 * len_normal[0];
            g[k][1] += 0.5 * len_normal[1];
        }
    }
    g
}

fn sample_cells(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<[f64; 2]>> {
    let families: [fn(u64) -> MeshFamily; 3] = [
        |_: u64| MeshFamily::Squares,
        |s: u64| MeshFamily::Distorted {
            amplitude: MeshFamily::DEFAULT_AMPLITUDE,
            seed: s,
        },
        |s: u64| MeshFamily::Voronoi {
            seed: s,
            lloyd_iterations: 3,
        },
    ];
    let mut out = Vec::with_capacity(count);
    let mut k = 0;
    while out.len() < count {
        let family = families[k % 3](rng.gen());
        k += 1;
        let x0 = rng.gen_range(-5.0..5.0);
        let y0 = rng.gen_range(-5.0..5.0);
        let w = rng.gen_range(0.05..4.0);
        let h = w * rng.gen_range(0.5..2.0);
        let spec = MeshSpec {
            family,
            n: rng.gen_range(2..7),
            domain: Rectangle::new(x0, y0, x0 + w, y0 + h).unwrap(),
        };
        let mesh = spec.build().unwrap();
        for _ in 0..4 {
            let c = rng.gen_range(0..mesh.num_cells());
            out.push(mesh.cell_points(c));
        }
    }
    out.truncate(count);
    out
}

#[test]
fn criterion_1_patch_test() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20260101);
    let cells = sample_cells(&mut rng, 200);
    let mut worst_a = 0.0f64;
    let mut worst_m = 0.0f64;
    let linears = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for pts in &cells {
        let ops = ElementOperators::new(fhn_vem::vem::LocalCell::from_polygon(pts).unwrap()).unwrap();
        let n = pts.len();
        let h = ops.cell.diameter();
        let grad_int = hat_gradient_integrals(pts);
        let m = moments(pts);
        let max_abs = pts.iter().flat_map(|p| p.iter()).fold(1.0f64, |a, x| a.max(x.abs()));
        // magnitude of a linear function's values on the cell
        let size = |c: &[f64; 3]| c[0].abs() + (c[1].abs() + c[2].abs()) * max_abs;
        let mut extra = linears.to_vec();
        for _ in 0..2 {
            extra.push([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        }
        for p in &extra {
            let pv: Vec<f64> = pts.iter().map(|q| p[0] + p[1] * q[0] + p[2] * q[1]).collect();
            // row sums of the stiffness are O(1), so rounding scales with the values
            let grad_scale = size(p) + (p[1].abs() + p[2].abs()) * h;
            for i in 0..n {
                let discrete: f64 = (0..n).map(|j| ops.stiffness[(i, j)] * pv[j]).sum();
                let analytic = p[1] * grad_int[i][0] + p[2] * grad_int[i][1];
                worst_a = worst_a.max((discrete - analytic).abs() / grad_scale);
            }
            for q in &extra {
                let qv: Vec<f64> = pts.iter().map(|r| q[0] + q[1] * r[0] + q[2] * r[1]).collect();
                let discrete: f64 = (0..n).map(|i| pv[i] * (0..n).map(|j| ops.mass[(i, j)] * qv[j]).sum::<f64>()).sum();
                let exact = exact_product_integral(&m, *p, *q);
                let scale = m[0].abs() * size(p) * size(q);
                worst_m = worst_m.max((discrete - exact).abs() / scale);
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_a <= 1e-11 && worst_m <= 1e-11 && elapsed < Duration::from_secs(10);
    verdict(
        1,
        "patch test",
        pass,
        elapsed,
        &format!("200 polygons, max scaled stiffness error {worst_a:.2e}, mass error {worst_m:.2e} (limit 1e-11)"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_projector_identity() {
    let start = Instant::now();
    let mesh = example3_setup().mesh.build().unwrap();
    let mut worst = 0.0f64;
    for c in 0..mesh.num_cells() {
        let ops = ElementOperators::from_mesh(&mesh, c).unwrap();
        let diff = (&ops.energy_projector - &ops.l2_projector).amax();
        worst = worst.max(diff);
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && elapsed < Duration::from_secs(5);
    verdict(
        2,
        "projector identity",
        pass,
        elapsed,
        &format!("{} Voronoi cells, max entry difference {worst:.2e} (limit 1e-12)", mesh.num_cells()),
    );
    assert!(pass);
}

fn projection_error(mesh: &PolygonalMesh, u: impl Fn([f64; 2]) -> f64) -> f64 {
    let mut sum = 0.0;
    for c in 0..mesh.num_cells() {
        let ops = ElementOperators::from_mesh(mesh, c).unwrap();
        let local: Vec<f64> = ops.cell.points.iter().map(|&p| u(p)).collect();
        let coeffs = ops.project(&local);
        sum += ops
            .cell
            .quadrature
            .integrate(|q| (ops.cell.basis.eval_expansion(&coeffs, q) - u(q)).powi(2));
    }
    sum.sqrt()
}

#[test]
fn criterion_3_projection_rate() {
    let start = Instant::now();
    let u = |p: [f64; 2]| (PI * p[0]).sin() * (PI * p[1]).sin();
    let levels = [8usize, 16, 32, 64];
    let hs: Vec<f64> = levels.iter().map(|&n| 1.0 / n as f64).collect();
    let errors: Vec<f64> = levels
        .iter()
        .map(|&n| projection_error(&MeshSpec::squares(n).build().unwrap(), u))
        .collect();
    let order = fitted_order(&hs, &errors);
    let elapsed = start.elapsed();
    let pass = (1.9..=2.1).contains(&order) && elapsed < Duration::from_secs(30);
    verdict(
        3,
        "L2 projection rate",
        pass,
        elapsed,
        &format!("errors [{}], order {order:.3} (want [1.9, 2.1])", sci(&errors)),
    );
    assert!(pass);
}

/// The criterion 4 job: constant data on a Voronoi mesh with Example-1 kinetics.
fn constant_state_config(out: &Path) -> RunConfig {
    let o: Vec<_> = [
        "mesh.family=\"voronoi\"",
        "mesh.n=8",
        "mesh.seed=11",
        "initial.preset=\"constant\"",
        "initial.v=0.3",
        "initial.w=0.1",
        "time.T=1.0",
        "time.N=100",
        "output.stride=10",
        "linsolve.tol=1e-14",
    ]
    .iter()
    .map(|s| parse_override(s).unwrap())
    .chain([parse_override(&format!("output.dir=\"{}\"", out.display())).unwrap()])
    .collect();
    RunConfig::parse("", "acceptance", &o).unwrap()
}

/// Scalar backward Euler with the same Picard splitting: the ionic current
/// lagged in both fields, the gating update using the new `v`.
fn scalar_oracle(v0: f64, w0: f64, dt: f64, steps: usize, tol: f64, max_iters: usize) -> Vec<(f64, f64)> {
    let (a, b, lambda, theta) = (0.2232, 0.9, -1.0, 0.004);
    let ionic = |v: f64, w: f64| -lambda * (w - v * (1.0 - v) * (v - theta));
    let gating = |v: f64, w: f64| a * v - b * w;
    let mut out = vec![(v0, w0)];
    let (mut v, mut w) = (v0, w0);
    for _ in 0..steps {
        let (vp, wp) = (v, w);
        for _ in 0..max_iters {
            let vn = vp - dt * ionic(v, w);
            let wn = wp + dt * gating(vn, w);
            let inc = ((vn - v).abs() / vn.abs().max(1.0)).max((wn - w).abs() / wn.abs().max(1.0));
            v = vn;
            w = wn;
            if inc <= tol {
                break;
            }
        }
        out.push((v, w));
    }
    out
}

#[test]
fn criterion_4_zero_dimensional_oracle() {
    let start = Instant::now();
    let cfg = constant_state_config(Path::new("unused"));
    let setup = cfg.setup();
    assert_eq!(setup.model.kinetics, EXAMPLE1_KINETICS);
    assert!(setup.model.stimulus.is_none());
    let prepared = Prepared::new(cfg.build_mesh().unwrap()).unwrap();
    let mut sink = MemorySink::default();
    prepared.simulate(&setup, &SnapshotSchedule::every(1), &mut sink).unwrap();
    let oracle = scalar_oracle(0.3, 0.1, 0.01, 100, setup.picard.tol, setup.picard.max_iters);
    assert_eq!(sink.snapshots.len(), 101);
    let mut worst = 0.0f64;
    for (n, state) in &sink.snapshots {
        let (ov, ow) = oracle[*n];
        for (&v, &w) in state.v.iter().zip(&state.w) {
            worst = worst.max((v - ov).abs()).max((w - ow).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9 && elapsed < Duration::from_secs(30);
    verdict(
        4,
        "0-D reduction",
        pass,
        elapsed,
        &format!("max deviation from scalar integrator over 101 levels {worst:.2e} (limit 1e-9)"),
    );
    assert!(pass);
}

/// Published reference errors at the finest time step, shown next to ours.
const PUBLISHED_DT80_COLUMN: [(f64, f64); 4] = [
    (1.0 / 8.0, 0.016570898457504),
    (1.0 / 16.0, 0.005512035102741),
    (1.0 / 32.0, 0.002076778899273),
    (1.0 / 64.0, 0.001528339183782),
];

const PUBLISHED_H8_DT10: f64 = 0.039090164250364;

#[test]
fn criterion_5_spatial_convergence() {
    let start = Instant::now();
    let study = ConvergenceStudy {
        levels: vec![8, 16, 32],
        steps: vec![800],
        reference_level: 128,
        reference_steps: 800,
        ..ConvergenceStudy::example1()
    };
    let report = study.run().unwrap();
    let ev = report.column(Field::V, 0);
    let order = report.spatial_order(Field::V, 0);
    let pairs = pairwise_orders(&report.hs, &ev);
    let elapsed = start.elapsed();
    let soft: Vec<String> = PUBLISHED_DT80_COLUMN
        .iter()
        .map(|(h, e)| format!("h=1/{:.0}: {e}", 1.0 / h))
        .collect();
    let pass = (1.8..=2.3).contains(&order) && elapsed < Duration::from_secs(15 * 60);
    verdict(
        5,
        "spatial order",
        pass,
        elapsed,
        &format!(
            "E_v [{ev}] at dt=1/800, fitted order {order:.3} (want [1.8, 2.3]), pairwise {pairs:.3?}; \
             soft targets from the published table at dt=1/80 (not asserted): {}; at (1/8, 1/10): {PUBLISHED_H8_DT10}",
            soft.join(", "),
            ev = sci(&ev)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_temporal_convergence() {
    let start = Instant::now();
    let study = ConvergenceStudy {
        levels: vec![64],
        steps: vec![10, 20, 40, 80],
        reference_level: 64,
        reference_steps: 800,
        ..ConvergenceStudy::example1()
    };
    let report = study.run().unwrap();
    let ev = &report.errors_v[0];
    let order = report.temporal_order(Field::V, 0);
    let ratio = ev[2] / ev[3];
    let elapsed = start.elapsed();
    let pass = (0.7..=1.3).contains(&order) && ratio < 3.0 && elapsed < Duration::from_secs(15 * 60);
    verdict(
        6,
        "temporal order",
        pass,
        elapsed,
        &format!("E_v [{}], fitted order {order:.3} (want [0.7, 1.3]), E(1/40)/E(1/80) = {ratio:.3} (want < 3)", sci(ev)),
    );
    assert!(pass);
}

#[test]
fn criterion_7_energy_bound() {
    let start = Instant::now();
    let mut peaks = Vec::new();
    let mut picard = 0;
    for n in [16usize, 32] {
        let setup = example1_setup(n, 80);
        let prepared = Prepared::new(setup.mesh.build().unwrap()).unwrap();
        let out = prepared.simulate(&setup, &SnapshotSchedule::none(), &mut NullSink).unwrap();
        let peak = out.energy_log.iter().map(|r| r.norm_v + r.norm_w).fold(0.0, f64::max);
        peaks.push(peak);
        picard = picard.max(out.max_picard_iterations());
    }
    let rel = (peaks[0] - peaks[1]).abs() / peaks[0].min(peaks[1]);
    let elapsed = start.elapsed();
    let pass = rel < 0.1 && picard <= 50 && elapsed < Duration::from_secs(10 * 60);
    verdict(
        7,
        "energy bound",
        pass,
        elapsed,
        &format!("max_n(|v|+|w|) = {peaks:.6?}, relative difference {rel:.3e} (want < 0.1), max Picard iterations {picard}"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_spiral_wave_persists() {
    let start = Instant::now();
    let mut setup = example3_setup();
    setup.grid.t_final = 12.0;
    setup.grid.steps = 1200;
    setup.snapshot_times = vec![0.1, 1.0, 1.5, 2.0, 10.0, 12.0];
    let out = run_example3(&setup, &mut NullSink).unwrap();
    let finite = out.metrics.iter().all(|m| m.finite);
    let (lo, hi) = out
        .metrics
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m.min_v), hi.max(m.max_v)));
    let std10 = out.metrics.iter().find(|m| (m.t - 10.0).abs() < 1e-9).map(|m| m.std_v).unwrap();

    let mut control = setup.clone();
    control.model.initial = InitialData::Constant { v: 0.3, w: 0.1 };
    let ctl = run_example3(&control, &mut NullSink).unwrap();
    let ctl_std = ctl.metrics.iter().map(|m| m.std_v).fold(0.0, f64::max);

    let elapsed = start.elapsed();
    let pass = finite
        && lo >= -0.6
        && hi <= 2.0
        && std10 > 0.01
        && ctl_std < 1e-9
        && elapsed < Duration::from_secs(20 * 60);
    verdict(
        8,
        "spiral wave",
        pass,
        elapsed,
        &format!(
            "finite {finite}, v in [{lo:.4}, {hi:.4}] (want within [-0.6, 2]), std(v) at t=10 {std10:.4} (want > 0.01), \
             control std {ctl_std:.2e} (want < 1e-9), max Picard iterations {}",
            out.output.max_picard_iterations()
        ),
    );
    assert!(pass);
}

fn output_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "vtk"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<(String, Vec<u8>)>> = ["a", "b"]
        .iter()
        .map(|name| {
            let dir = tmp.path().join(name);
            let cfg = constant_state_config(&dir);
            pool.install(|| execute_run(&cfg, &cfg.output_dir)).unwrap();
            output_files(&dir)
        })
        .collect();
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    let pass = runs[0] == runs[1] && names.contains(&ENERGY_NAME) && names.iter().filter(|n| n.ends_with(".vtk")).count() == 11;
    verdict(
        9,
        "determinism",
        pass,
        start.elapsed(),
        &format!("{} files compared byte for byte", names.len()),
    );
    assert!(pass);
}
