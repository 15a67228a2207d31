//! Independent oracles for the linear algebra and quadrature paths: dense
//! direct solves against the sparse saddle factorization, a basis-by-basis
//! quadrature evaluator against the fused convection kernel, an independent
//! re-integration of the error norms, and consistency of the prolongation
//! based self-error measure.

mod common;

use common::{
    dense_saddle_matrix, dense_solve, inf_diff, inf_norm, random_velocity, slow_convection,
};
use nsfem::assembly::DiscreteSystem;
use nsfem::femspace::{interpolate_pressure, interpolate_velocity, ElementPair, MixedSpace};
use nsfem::mesh::{build_hierarchy, build_structured_mesh};
use nsfem::quadrature::triangle_rule;
use nsfem::saddle::{SaddleSystem, VelocityBlock};
use nsfem::verification::{compute_errors, compute_self_errors, smooth_solution, ErrorSample};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::sync::Arc;

fn system(n: usize, pair: ElementPair) -> DiscreteSystem {
    let mesh = Arc::new(build_structured_mesh(n).unwrap());
    let space = MixedSpace::new(mesh, pair).unwrap();
    DiscreteSystem::assemble(space).unwrap()
}

#[test]
fn saddle_solves_match_dense_lu() {
    let mut rng = StdRng::seed_from_u64(2024);
    for pair in [ElementPair::Mini, ElementPair::TaylorHood] {
        let sys = system(2, pair);
        let mut saddle = SaddleSystem::new(&sys).unwrap();
        let n = saddle.n_total();
        let u = random_velocity(sys.space(), &mut rng);
        let cases: [(f64, f64, Option<nsfem::sparse::CsrMatrix>); 3] = [
            (128.0, 1.0, None),
            (10.0, 0.7, Some(sys.convection_jacobian(&u))),
            (32.0, 0.05, Some(sys.convection_picard(&u))),
        ];
        for (mass, stiff, conv) in cases {
            let fact = saddle
                .factorize(
                    &sys,
                    VelocityBlock {
                        mass_coeff: mass,
                        stiffness_coeff: stiff,
                    },
                    conv.as_ref(),
                )
                .unwrap();
            let dense = dense_saddle_matrix(&sys, mass, stiff, conv.as_ref());
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sparse_x = fact.solve(&rhs);
            let dense_x = dense_solve(&dense, &rhs);
            let diff = inf_diff(&sparse_x, &dense_x);
            let scale = 1.0 + inf_norm(&dense_x);
            assert!(
                diff <= 1e-10 * scale,
                "{}: dense/sparse mismatch {diff:.3e} (scale {scale:.3e})",
                pair.name()
            );
        }
    }
}

#[test]
fn convection_vector_matches_slow_quadrature() {
    let mut rng = StdRng::seed_from_u64(7701);
    for pair in [ElementPair::Mini, ElementPair::TaylorHood] {
        for n in [2, 3] {
            let sys = system(n, pair);
            for _ in 0..5 {
                let w = random_velocity(sys.space(), &mut rng);
                let u = random_velocity(sys.space(), &mut rng);
                let fast = sys.convection_apply(&w, &u);
                let slow = slow_convection(sys.space(), &w, &u);
                let diff = inf_diff(&fast, &slow);
                let scale = 1.0 + inf_norm(&slow);
                assert!(
                    diff <= 1e-12 * scale,
                    "{} n={n}: convection mismatch {diff:.3e}",
                    pair.name()
                );
            }
        }
    }
}

/// Re-integrates the three error norms with an independently written loop
/// over the same quadrature scheme (degree-5 on the four red quarters).
fn reintegrated_errors(
    sys: &DiscreteSystem,
    field: &nsfem::femspace::FieldPair,
    t: f64,
) -> ErrorSample {
    let exact = smooth_solution();
    let cf = exact.closed_form().unwrap();
    let space = sys.space();
    let mesh = space.mesh();
    let rule = triangle_rule(5).unwrap();
    let corners: [[[f64; 3]; 3]; 4] = [
        [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
        [[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]],
        [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]],
        [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    ];
    let shift: f64 = sys
        .pressure_mean
        .iter()
        .zip(&field.pressure)
        .map(|(&w, &p)| w * p)
        .sum();
    let (mut s_l2, mut s_h1, mut s_p) = (0.0, 0.0, 0.0);
    for tri in 0..mesh.n_triangles() {
        let xy = mesh.triangle_coords(tri);
        for sub in &corners {
            for (q, &wq) in rule.points.iter().zip(&rule.weights) {
                let mut lam = [0.0; 3];
                for (corner, &qc) in sub.iter().zip(q.iter()) {
                    for d in 0..3 {
                        lam[d] += qc * corner[d];
                    }
                }
                let x = [
                    lam[0] * xy[0][0] + lam[1] * xy[1][0] + lam[2] * xy[2][0],
                    lam[0] * xy[0][1] + lam[1] * xy[1][1] + lam[2] * xy[2][1],
                ];
                // quarter of the element, int = 2 area sum w f
                let scale = 2.0 * (space.element_area(tri) / 4.0) * wq;
                let du = {
                    let a = field.velocity_at(tri, lam);
                    let b = (cf.velocity)(x, t);
                    [a[0] - b[0], a[1] - b[1]]
                };
                s_l2 += scale * (du[0] * du[0] + du[1] * du[1]);
                let ga = field.velocity_gradient_at(tri, lam);
                let gb = (cf.velocity_gradient)(x, t);
                for c in 0..2 {
                    for d in 0..2 {
                        let g = ga[c][d] - gb[c][d];
                        s_h1 += scale * g * g;
                    }
                }
                let dp = field.pressure_at(tri, lam) - shift - (cf.pressure)(x, t);
                s_p += scale * dp * dp;
            }
        }
    }
    ErrorSample {
        velocity_l2: s_l2.sqrt(),
        velocity_h1: s_h1.sqrt(),
        pressure_l2: s_p.sqrt(),
    }
}

#[test]
fn error_norms_match_independent_integration() {
    let exact = smooth_solution();
    let cf = exact.closed_form().unwrap();
    for pair in [ElementPair::Mini, ElementPair::TaylorHood] {
        let sys = system(3, pair);
        let t = 0.3;
        let mut field = interpolate_velocity(sys.space(), |x| (cf.velocity)(x, t));
        field.pressure = interpolate_pressure(sys.space(), |x| (cf.pressure)(x, t));
        let a = compute_errors(&sys, &field, &exact, t).unwrap();
        let b = reintegrated_errors(&sys, &field, t);
        for (x, y) in [
            (a.velocity_l2, b.velocity_l2),
            (a.velocity_h1, b.velocity_h1),
            (a.pressure_l2, b.pressure_l2),
        ] {
            assert!(
                (x - y).abs() <= 1e-12 * (1.0 + y.abs()),
                "{}: {x:.15e} vs {y:.15e}",
                pair.name()
            );
        }
    }
}

#[test]
fn self_errors_satisfy_the_triangle_inequality() {
    let hierarchy = build_hierarchy(2, 2).unwrap();
    let exact = smooth_solution();
    let cf = exact.closed_form().unwrap();
    for pair in [ElementPair::Mini, ElementPair::TaylorHood] {
        let mut fields = Vec::new();
        for k in 0..3 {
            let space = MixedSpace::new(hierarchy.level(k).clone(), pair).unwrap();
            let mut f = interpolate_velocity(&space, |x| (cf.velocity)(x, 0.2));
            f.pressure = interpolate_pressure(&space, |x| (cf.pressure)(x, 0.2));
            fields.push(f);
        }
        let d01 = compute_self_errors(&fields[0], &fields[1], &hierarchy).unwrap();
        let d12 = compute_self_errors(&fields[1], &fields[2], &hierarchy).unwrap();
        let d02 = compute_self_errors(&fields[0], &fields[2], &hierarchy).unwrap();
        for (two, one_a, one_b, name) in [
            (d02.velocity_l2, d01.velocity_l2, d12.velocity_l2, "L2"),
            (d02.velocity_h1, d01.velocity_h1, d12.velocity_h1, "H1"),
            (d02.pressure_l2, d01.pressure_l2, d12.pressure_l2, "p"),
        ] {
            assert!(
                two <= one_a + one_b + 1e-12,
                "{} {name}: {two:.6e} > {one_a:.6e} + {one_b:.6e}",
                pair.name()
            );
            assert!(two > 0.0, "levels should differ");
        }
    }
}
