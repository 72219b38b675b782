//! Integration tests for the fine-scale forms and solver.

use std::sync::Arc;

use gmsfem::fine::{bilinear_a, bilinear_l, functional_f, solve_fine, FineSystem};
use gmsfem::media::Rect;
use gmsfem::metrics::{norm_v, stability_sides};
use gmsfem::offline::isotropy_defect;
use gmsfem::{
    build_nested_mesh, eval_media, BoundaryData, KineticField, MediaSpec, OrdinateSet,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_field(
    mesh: &gmsfem::NestedMesh,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> KineticField {
    let blocks: Vec<usize> = (0..mesh.n_blocks()).collect();
    let mut field = KineticField::zeros(mesh, m, &blocks);
    for v in field.values_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    field
}

fn constant_media() -> MediaSpec {
    MediaSpec::Contrast { inclusions: vec![], background: 1.0, contrast: 1.0, power: 1 }
}

#[test]
fn transport_form_equals_v_norm_square_on_random_fields() {
    let mesh = build_nested_mesh(4, 3, 4).unwrap();
    let ords = OrdinateSet::equispaced(6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..25 {
        let u = random_field(&mesh, 6, &mut rng);
        let a = bilinear_a(&u, &u, &mesh, &ords).unwrap();
        let v2 = norm_v(&u, &mesh, &ords).powi(2);
        let scale = a.abs().max(v2).max(1e-300);
        assert!((a - v2).abs() / scale < 1e-10, "a = {a}, |u|_V^2 = {v2}");
    }
}

#[test]
fn continuous_zero_boundary_field_has_zero_transport_energy() {
    let mesh = build_nested_mesh(3, 3, 5).unwrap();
    let ords = OrdinateSet::equispaced(4).unwrap();
    // globally continuous bump, zero on the domain boundary
    let blocks: Vec<usize> = (0..mesh.n_blocks()).collect();
    let u = KineticField::from_fn(&mesh, 4, &blocks, |_, _, x, y| {
        (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
    });
    let a = bilinear_a(&u, &u, &mesh, &ords).unwrap();
    assert!(a.abs() < 1e-12, "a(u,u) = {a}");
}

#[test]
fn constant_field_transport_form_matches_outflow_perimeter() {
    let mesh = build_nested_mesh(1, 1, 6).unwrap();
    let ords = OrdinateSet::equispaced(6).unwrap();
    let u = KineticField::from_fn(&mesh, 6, &[0], |_, _, _, _| 1.0);
    let a = bilinear_a(&u, &u, &mesh, &ords).unwrap();
    let expect: f64 = (0..6)
        .map(|i| {
            let [vx, vy] = ords.direction(i);
            ords.weight(i) * (vx.abs() + vy.abs())
        })
        .sum();
    assert!((a - expect).abs() < 1e-13, "a = {a}, perimeter flux = {expect}");
}

#[test]
fn collision_form_vanishes_for_isotropic_fields() {
    let mesh = build_nested_mesh(2, 2, 3).unwrap();
    let ords = OrdinateSet::equispaced(4).unwrap();
    let blocks: Vec<usize> = (0..4).collect();
    let u = KineticField::from_fn(&mesh, 4, &blocks, |_, _, x, y| 1.0 + x * y);
    let eps = 0.37;
    let l = bilinear_l(&u, &u, &mesh, &ords, &MediaSpec::Oscillatory, eps).unwrap();
    // collision part vanishes; the absorption part is eps * int u^2
    // with int (1+xy)^2 = 1 + 2*(1/4) + 1/9 = 1.6111...
    let expect = eps * (1.0 + 0.5 + 1.0 / 9.0);
    assert!((l - expect).abs() < 1e-12, "l = {l}, expect {expect}");
}

#[test]
fn collision_form_nonnegative_on_random_fields() {
    let mesh = build_nested_mesh(2, 2, 3).unwrap();
    let ords = OrdinateSet::equispaced(6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let u = random_field(&mesh, 6, &mut rng);
        let l = bilinear_l(&u, &u, &mesh, &ords, &MediaSpec::Oscillatory, 0.05).unwrap();
        assert!(l >= -1e-12, "l(u,u) = {l}");
    }
}

#[test]
fn one_cell_collision_form_matches_hand_assembly() {
    let mesh = build_nested_mesh(1, 1, 1).unwrap();
    let ords = OrdinateSet::equispaced(2).unwrap();
    let u = KineticField::from_fn(&mesh, 2, &[0], |ord, _, _, _| if ord == 0 { 1.0 } else { 0.0 });
    let eps = 0.2;
    let media = MediaSpec::Oscillatory;
    let a_c = eval_media(&media, 0.5, 0.5);
    // collision: (1/(eps a)) u^T A u * area with u = (1,0), A = [[1/4,-1/4],[-1/4,1/4]]
    // absorption: eps * alpha_0 * |u_0|^2 * area
    let expect = 0.25 / (eps * a_c) + eps * 0.5;
    let l = bilinear_l(&u, &u, &mesh, &ords, &media, eps).unwrap();
    assert!((l - expect).abs() < 1e-14, "l = {l}, expect {expect}");
}

#[test]
fn inflow_functional_analytic_values() {
    let mesh = build_nested_mesh(2, 2, 5).unwrap();
    let ords = OrdinateSet::equispaced(6).unwrap();
    let blocks: Vec<usize> = (0..4).collect();
    let w = KineticField::from_fn(&mesh, 6, &blocks, |_, _, _, _| 1.0);

    let f0 = functional_f(&w, &BoundaryData::Zero, &mesh, &ords).unwrap();
    assert_eq!(f0, 0.0);

    // g = 1: per direction the inflow perimeter weight is |vx| + |vy|
    let f1 = functional_f(&w, &BoundaryData::One, &mesh, &ords).unwrap();
    let expect: f64 = (0..6)
        .map(|i| {
            let [vx, vy] = ords.direction(i);
            ords.weight(i) * (vx.abs() + vy.abs())
        })
        .sum();
    assert!((f1 - expect).abs() < 1e-13, "F = {f1}, expect {expect}");

    // paper inflow data against a dense quadrature oracle along each edge
    let fc = functional_f(&w, &BoundaryData::CosineRidge, &mesh, &ords).unwrap();
    let mut oracle = 0.0;
    let n_q = 2000;
    for i in 0..6 {
        let [vx, vy] = ords.direction(i);
        let alpha = ords.weight(i);
        // four domain sides, inflow where v.n < 0
        for side in 0..4 {
            let (nx, ny) = [(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)][side];
            let vn: f64 = vx * nx + vy * ny;
            if vn >= 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for q in 0..n_q {
                let t = (q as f64 + 0.5) / n_q as f64;
                let (x, y) = match side {
                    0 => (t, 0.0),
                    1 => (1.0, t),
                    2 => (t, 1.0),
                    _ => (0.0, t),
                };
                acc += (2.0 * std::f64::consts::PI * (x + y)).cos() + 1.0;
            }
            oracle += alpha * vn.abs() * acc / n_q as f64;
        }
    }
    assert!(
        (fc - oracle).abs() < 1e-6 * oracle.abs().max(1.0),
        "F = {fc}, oracle = {oracle}"
    );
    assert!(fc > 0.0);
}

#[test]
fn zero_inflow_gives_zero_solution() {
    let mesh = build_nested_mesh(2, 2, 3).unwrap();
    let ords = OrdinateSet::equispaced(4).unwrap();
    let u = solve_fine(&mesh, &ords, &MediaSpec::Oscillatory, 0.1, &BoundaryData::Zero).unwrap();
    let max = u.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    assert!(max < 1e-12, "max |u| = {max}");
}

#[test]
fn solution_inherits_mirror_symmetry() {
    // With centrally symmetric media and data, the solution satisfies
    // u(x, v) = u(1-x, -v); the antipode of direction i is i + m/2.
    let mesh = build_nested_mesh(3, 3, 3).unwrap();
    let m = 4;
    let ords = OrdinateSet::equispaced(m).unwrap();
    let media = constant_media();
    let u = solve_fine(&mesh, &ords, &media, 0.25, &BoundaryData::CosineRidge).unwrap();
    let nf = mesh.fine_per_block();
    let (ncx, ncy) = mesh.coarse_counts();
    let max = u.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    for ord in 0..m {
        let anti = (ord + m / 2) % m;
        for by in 0..ncy {
            for bx in 0..ncx {
                let b = mesh.block_id(bx, by);
                let bm = mesh.block_id(ncx - 1 - bx, ncy - 1 - by);
                for iy in 0..=nf {
                    for ix in 0..=nf {
                        let n = mesh.local_node(ix, iy);
                        let nm = mesh.local_node(nf - ix, nf - iy);
                        let a = u.get(ord, b, n);
                        let bb = u.get(anti, bm, nm);
                        assert!(
                            (a - bb).abs() < 1e-9 * max,
                            "asymmetry at ord {ord} block {b} node {n}: {a} vs {bb}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn solution_satisfies_stability_inequality() {
    let mesh = build_nested_mesh(3, 3, 4).unwrap();
    let ords = OrdinateSet::equispaced(6).unwrap();
    for media in [MediaSpec::Oscillatory, constant_media()] {
        for eps in [0.1, 0.01] {
            let g = BoundaryData::CosineRidge;
            let u = solve_fine(&mesh, &ords, &media, eps, &g).unwrap();
            let (lhs, rhs) = stability_sides(&u, &g, &mesh, &ords, &media, eps).unwrap();
            assert!(
                lhs <= rhs + 1e-10 * rhs.abs(),
                "stability violated: lhs {lhs} rhs {rhs} (eps {eps})"
            );
        }
    }
}

#[test]
fn anisotropy_shrinks_with_epsilon() {
    let mesh = build_nested_mesh(2, 2, 4).unwrap();
    let ords = OrdinateSet::equispaced(6).unwrap();
    let media = MediaSpec::Oscillatory;
    let mut defects = Vec::new();
    for eps in [1.0, 0.2, 0.04] {
        let u = solve_fine(&mesh, &ords, &media, eps, &BoundaryData::One).unwrap();
        defects.push(isotropy_defect(&u, &mesh, &ords));
    }
    println!("anisotropy defects across eps: {defects:?}");
    assert!(defects[2] < defects[0], "expected diffusive trend: {defects:?}");
}

#[test]
fn forms_reject_mismatched_layouts() {
    let mesh = build_nested_mesh(2, 2, 2).unwrap();
    let ords = OrdinateSet::equispaced(4).unwrap();
    let u = KineticField::zeros(&mesh, 4, &[0, 1, 2, 3]);
    let w = KineticField::zeros(&mesh, 4, &[0, 1]);
    assert!(bilinear_a(&u, &w, &mesh, &ords).is_err());
    assert!(bilinear_l(&u, &u, &mesh, &ords, &MediaSpec::Oscillatory, -1.0).is_err());
}

#[test]
fn contrast_media_solve_and_custom_data() {
    // exercise the custom boundary closure and an actual inclusion field
    let mesh = build_nested_mesh(2, 2, 4).unwrap();
    let ords = OrdinateSet::equispaced(4).unwrap();
    let media = MediaSpec::Contrast {
        inclusions: vec![Rect { x0: 0.25, x1: 0.5, y0: 0.25, y1: 0.5 }],
        background: 1.0,
        contrast: 10.0,
        power: 2,
    };
    let g = BoundaryData::Custom(Arc::new(|x, y, ord| 1.0 + 0.1 * (ord as f64) + x + y));
    let sys = FineSystem::new(&mesh, &ords, &media, 0.05).unwrap();
    assert_eq!(sys.n_dofs(), 4 * 4 * 25);
    let u = sys.solve(&g).unwrap();
    assert!(u.values().iter().all(|v| v.is_finite()));
    let max = u.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    assert!(max > 0.1);
}
