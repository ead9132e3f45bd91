//! Property tests for mesh generation, local operators, assembly and time
//! stepping.

use fhn_vem::assembly::{assemble_ionic, Discretization, FieldState};
use fhn_vem::experiments::{discrete_relative_error, ConvergenceStudy, Field};
use fhn_vem::mesh::{check_mesh_assumptions, MeshFamily, MeshSpec, PolygonalMesh, Rectangle};
use fhn_vem::model::{DiffusionLaw, FhnKinetics, InitialData, ModelSpec};
use fhn_vem::solver::LinearSolveConfig;
use fhn_vem::timestepper::{PicardConfig, TimeStepper};
use fhn_vem::vem::{ElementOperators, LocalCell};
use proptest::prelude::*;

fn family_strategy() -> impl Strategy<Value = MeshFamily> {
    prop_oneof![
        Just(MeshFamily::Squares),
        (0u64..1000).prop_map(|seed| MeshFamily::Distorted {
            amplitude: MeshFamily::DEFAULT_AMPLITUDE,
            seed
        }),
        (0u64..1000).prop_map(|seed| MeshFamily::Voronoi {
            seed,
            lloyd_iterations: MeshFamily::DEFAULT_LLOYD_ITERATIONS
        }),
    ]
}

fn mesh_strategy() -> impl Strategy<Value = PolygonalMesh> {
    (family_strategy(), 2usize..9).prop_map(|(family, n)| {
        MeshSpec {
            family,
            n,
            domain: Rectangle::unit_square(),
        }
        .build()
        .unwrap()
    })
}

fn linear_at(p: [f64; 3], x: [f64; 2]) -> f64 {
    p[0] + p[1] * x[0] + p[2] * x[1]
}

/// `int_K grad phi_i` from the edge normals of a counter-clockwise polygon.
fn hat_gradient_integrals(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = pts.len();
    let mut g = vec![[0.0; 2]; n];
    for j in 0..n {
        let (a, b) = (pts[j], pts[(j + 1) % n]);
        for k in [j, (j + 1) % n] {
            g[k][0] += 0.5 * (b[1] - a[1]);
            g[k][1] -= 0.5 * (b[0] - a[0]);
        }
    }
    g
}

/// Energy of the minimal piecewise-linear extension of vertex values over the
/// fan of triangles around `center`, a stand-in for the harmonic extension.
fn fan_energy(pts: &[[f64; 2]], center: [f64; 2]) -> nalgebra::DMatrix<f64> {
    let n = pts.len();
    let mut k = nalgebra::DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        let ids = [i, (i + 1) % n, n];
        let p = [pts[i], pts[(i + 1) % n], center];
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let b: Vec<f64> = (0..3).map(|a| p[(a + 1) % 3][1] - p[(a + 2) % 3][1]).collect();
        let cc: Vec<f64> = (0..3).map(|a| p[(a + 2) % 3][0] - p[(a + 1) % 3][0]).collect();
        for a in 0..3 {
            for d in 0..3 {
                k[(ids[a], ids[d])] += (b[a] * b[d] + cc[a] * cc[d]) / (4.0 * area.abs());
            }
        }
    }
    // eliminate the centre value
    let kcc = k[(n, n)];
    let kbc = k.view((0, n), (n, 1)).clone_owned();
    k.view((0, 0), (n, n)).clone_owned() - &kbc * kbc.transpose() / kcc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn meshes_tile_the_domain(mesh in mesh_strategy()) {
        let area: f64 = mesh.cells().iter().map(|c| c.area).sum();
        prop_assert!((area - 1.0).abs() <= 1e-10);
        let euler = mesh.num_vertices() as i64 - mesh.edges().len() as i64 + mesh.num_cells() as i64;
        prop_assert_eq!(euler, 1);
        for e in mesh.edges() {
            // an interior edge is traversed in opposite directions by its two cells
            if e.boundary {
                continue;
            }
            let dir = |c: usize| {
                let ids = &mesh.cells()[c].vertex_ids;
                let k = ids.iter().position(|&v| v == e.vertices[0]).unwrap();
                ids[(k + 1) % ids.len()] == e.vertices[1]
            };
            prop_assert_ne!(dir(e.cells[0]), dir(e.cells[1]));
        }
    }

    #[test]
    fn generators_are_deterministic(family in family_strategy(), n in 2usize..7) {
        let spec = MeshSpec { family, n, domain: Rectangle::unit_square() };
        let a = spec.build().unwrap();
        let b = spec.build().unwrap();
        prop_assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn shipped_generators_pass_quality(mesh in mesh_strategy()) {
        prop_assert!(check_mesh_assumptions(&mesh, 0.05).passes);
    }

    #[test]
    fn projection_reproduces_linears(mesh in mesh_strategy(), p in prop::array::uniform3(-3.0f64..3.0)) {
        for c in 0..mesh.num_cells() {
            let ops = ElementOperators::from_mesh(&mesh, c).unwrap();
            let dofs: Vec<f64> = ops.cell.points.iter().map(|&x| linear_at(p, x)).collect();
            let coeffs = ops.project(&dofs);
            for (&x, &d) in ops.cell.points.iter().zip(&dofs) {
                prop_assert!((ops.cell.basis.eval_expansion(&coeffs, x) - d).abs() <= 1e-12 * (1.0 + d.abs()));
            }
        }
    }

    #[test]
    fn local_consistency_against_arbitrary_dofs(
        mesh in mesh_strategy(),
        p in prop::array::uniform3(-3.0f64..3.0),
        seed in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        for c in 0..mesh.num_cells() {
            let ops = ElementOperators::from_mesh(&mesh, c).unwrap();
            let n = ops.num_dofs();
            let phi: Vec<f64> = (0..n).map(|i| seed[i % seed.len()]).collect();
            let pv: Vec<f64> = ops.cell.points.iter().map(|&x| linear_at(p, x)).collect();
            let g = hat_gradient_integrals(&ops.cell.points);
            let discrete: f64 = (0..n).map(|i| phi[i] * (0..n).map(|j| ops.stiffness[(i, j)] * pv[j]).sum::<f64>()).sum();
            let analytic: f64 = (0..n).map(|i| phi[i] * (p[1] * g[i][0] + p[2] * g[i][1])).sum();
            prop_assert!((discrete - analytic).abs() <= 1e-12 * (1.0 + p.iter().map(|x| x.abs()).sum::<f64>()));
        }
    }

    #[test]
    fn stability_corridor(mesh in mesh_strategy(), seed in prop::collection::vec(-1.0f64..1.0, 12)) {
        for c in 0..mesh.num_cells() {
            let ops = ElementOperators::from_mesh(&mesh, c).unwrap();
            let n = ops.num_dofs();
            let phi = nalgebra::DVector::from_iterator(n, (0..n).map(|i| seed[i % seed.len()]));
            let mean = phi.mean();
            let centered = phi.add_scalar(-mean);
            if centered.amax() < 1e-6 {
                continue;
            }
            let fan = fan_energy(&ops.cell.points, ops.cell.basis.centroid);
            let discrete = (centered.transpose() * &ops.stiffness * &centered)[(0, 0)];
            let proxy = (centered.transpose() * &fan * &centered)[(0, 0)];
            let r = discrete / proxy;
            prop_assert!((0.01..=100.0).contains(&r), "stiffness quotient {}", r);
            let mass = (phi.transpose() * &ops.mass * &phi)[(0, 0)];
            let lumped = ops.cell.area * phi.norm_squared() / n as f64;
            let r = mass / lumped;
            prop_assert!((0.01..=100.0).contains(&r), "mass quotient {}", r);
        }
    }

    #[test]
    fn relative_error_is_homogeneous(c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], n in 2usize..6) {
        let disc = Discretization::new(&MeshSpec::squares(n).build().unwrap()).unwrap();
        let k = disc.num_dofs();
        let reference: Vec<f64> = (0..k).map(|i| 1.0 + (i as f64).sin()).collect();
        let coarse: Vec<f64> = (0..k).map(|i| 1.0 + (i as f64 * 1.3).cos()).collect();
        let e = discrete_relative_error(&coarse, &reference, &disc.mass).unwrap();
        let scale = |x: &[f64]| x.iter().map(|v| c * v).collect::<Vec<_>>();
        let es = discrete_relative_error(&scale(&coarse), &scale(&reference), &disc.mass).unwrap();
        prop_assert!((e - es).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn constant_states_stay_constant(
        mesh in mesh_strategy(),
        v in -1.0f64..1.5,
        w in -0.5f64..1.0,
        dt in 0.001f64..0.1,
    ) {
        let disc = Discretization::new(&mesh).unwrap();
        let model = ModelSpec {
            diffusion: DiffusionLaw::linear(0.01),
            kinetics: FhnKinetics { a: 0.2232, b: 0.9, lambda: -1.0, theta: 0.004 },
            stimulus: None,
            initial: InitialData::Constant { v, w },
        };
        let cfg = LinearSolveConfig { tol: 1e-14, ..Default::default() };
        let stepper = TimeStepper::new(&disc, &model, PicardConfig::default(), cfg).unwrap();
        let k = disc.num_dofs();
        let prev = FieldState::new(vec![v; k], vec![w; k], 0.0).unwrap();
        let (next, _) = stepper.step(&prev, 1, dt, dt).unwrap();
        for x in [&next.v, &next.w] {
            let spread = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(spread <= 1e-10, "spread {}", spread);
        }
    }

    #[test]
    fn ionic_assembly_is_linear_for_linear_kinetics(
        mesh in mesh_strategy(),
        s1 in prop::collection::vec(-1.0f64..1.0, 8),
        s2 in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        // with v = 0 the ionic current is linear in w
        let disc = Discretization::new(&mesh).unwrap();
        let k = disc.num_dofs();
        let kin = FhnKinetics { a: 0.3, b: 0.7, lambda: -2.0, theta: 0.1 };
        let field = |s: &[f64]| (0..k).map(|i| s[i % s.len()] * (1.0 + i as f64 * 0.01)).collect::<Vec<f64>>();
        let zero = vec![0.0; k];
        let w1 = field(&s1);
        let w2 = field(&s2);
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let b = |w: &[f64]| {
            let st = FieldState::new(zero.clone(), w.to_vec(), 0.0).unwrap();
            assemble_ionic(&st, &disc.dofs, &disc.elements, &kin).unwrap()
        };
        let (b1, b2, b12) = (b(&w1), b(&w2), b(&sum));
        for i in 0..k {
            prop_assert!((b12[i] - b1[i] - b2[i]).abs() <= 1e-12 * (1.0 + b12[i].abs()));
        }
    }
}

#[test]
fn functional_of_one_is_the_domain_area() {
    for family in [
        MeshFamily::Squares,
        MeshFamily::Distorted { amplitude: 0.2, seed: 4 },
        MeshFamily::Voronoi { seed: 4, lloyd_iterations: 5 },
    ] {
        let mesh = MeshSpec {
            family,
            n: 6,
            domain: Rectangle::new(0.0, 0.0, 2.0, 0.5).unwrap(),
        }
        .build()
        .unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let j = disc.functional(&vec![1.0; disc.num_dofs()]);
        assert!((j - 1.0).abs() < 1e-12, "{j}");
    }
}

#[test]
fn global_consistency_on_structured_meshes() {
    for n in [3usize, 7] {
        let mesh = MeshSpec::squares(n).build().unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let p = [0.4, -1.2, 2.5];
        let pv: Vec<f64> = mesh.vertices().iter().map(|v| linear_at(p, v.coords())).collect();
        let ap = disc.stiffness.mul_vec(&pv);
        let mut analytic = vec![0.0; mesh.num_vertices()];
        for (c, cell) in mesh.cells().iter().enumerate() {
            let g = hat_gradient_integrals(&mesh.cell_points(c));
            for (k, &vid) in cell.vertex_ids.iter().enumerate() {
                analytic[vid] += p[1] * g[k][0] + p[2] * g[k][1];
            }
        }
        for (a, b) in ap.iter().zip(&analytic) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn local_scaling() {
    let unit = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let big: Vec<[f64; 2]> = unit.iter().map(|p| [2.0 * p[0], 2.0 * p[1]]).collect();
    let a = ElementOperators::new(LocalCell::from_polygon(&unit).unwrap()).unwrap();
    let b = ElementOperators::new(LocalCell::from_polygon(&big).unwrap()).unwrap();
    assert!((&a.stiffness - &b.stiffness).amax() < 1e-14);
    assert!((&a.mass * 4.0 - &b.mass).amax() < 1e-14);
}

#[test]
fn errors_shrink_under_refinement() {
    let study = ConvergenceStudy {
        levels: vec![8, 16, 32],
        steps: vec![100],
        reference_level: 64,
        reference_steps: 100,
        ..ConvergenceStudy::example1()
    };
    let report = study.run().unwrap();
    for field in [Field::V, Field::W] {
        let col = report.column(field, 0);
        assert!(col.windows(2).all(|w| w[1] <= w[0]), "{col:?}");
    }
}
