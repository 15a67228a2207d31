//! Shared helpers for the integration suites: independent oracles written
//! against the public API only, so they cannot inherit bugs from the
//! assembly or solver internals they are checking.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nsfem::assembly::DiscreteSystem;
use nsfem::femspace::{MixedSpace, MAX_SCALAR_BASIS};
use nsfem::quadrature::triangle_rule;
use nsfem::sparse::CsrMatrix;
use std::sync::Arc;

/// Assembles the augmented saddle matrix densely from the public operator
/// entries, duplicating the masking rules: Dirichlet velocity rows and
/// columns dropped with a unit diagonal, symmetric divergence coupling, and
/// the pressure-mean border in the last row and column.
pub fn dense_saddle_matrix(
    sys: &DiscreteSystem,
    mass_coeff: f64,
    stiffness_coeff: f64,
    convection: Option<&CsrMatrix>,
) -> DMatrix<f64> {
    let space = sys.space();
    let ns = space.n_scalar();
    let n_vel = 2 * ns;
    let n_p = space.n_pressure();
    let n = n_vel + n_p + 1;
    let bc = |i: usize| space.is_dirichlet_scalar(i % ns);
    let mut a = DMatrix::zeros(n, n);
    for comp in 0..2 {
        for (r, c, v) in sys.mass_scalar.entries() {
            let (gr, gc) = (comp * ns + r, comp * ns + c);
            if !bc(gr) && !bc(gc) {
                a[(gr, gc)] += mass_coeff * v;
            }
        }
        for (r, c, v) in sys.stiffness_scalar.entries() {
            let (gr, gc) = (comp * ns + r, comp * ns + c);
            if !bc(gr) && !bc(gc) {
                a[(gr, gc)] += stiffness_coeff * v;
            }
        }
    }
    if let Some(conv) = convection {
        for (r, c, v) in conv.entries() {
            if !bc(r) && !bc(c) {
                a[(r, c)] += v;
            }
        }
    }
    for (q, j, v) in sys.div.entries() {
        if !bc(j) {
            a[(n_vel + q, j)] += v;
            a[(j, n_vel + q)] += v;
        }
    }
    for q in 0..n_p {
        a[(n_vel + q, n - 1)] = sys.pressure_mean[q];
        a[(n - 1, n_vel + q)] = sys.pressure_mean[q];
    }
    for i in 0..n_vel {
        if bc(i) {
            a[(i, i)] = 1.0;
        }
    }
    a
}

pub fn dense_solve(a: &DMatrix<f64>, rhs: &[f64]) -> Vec<f64> {
    let b = DVector::from_column_slice(rhs);
    let x = a
        .clone()
        .lu()
        .solve(&b)
        .expect("dense saddle matrix is singular");
    x.iter().copied().collect()
}

/// Direct quadrature evaluation of the skew convection vector
/// N_i = 1/2 (w . grad u, phi_i) - 1/2 (w . grad phi_i, u), looping over
/// basis functions one at a time instead of the assembly's fused kernel.
/// Uses the same degree-5 rule, so agreement is expected at rounding level.
pub fn slow_convection(space: &Arc<MixedSpace>, w: &[f64], u: &[f64]) -> Vec<f64> {
    let mesh = space.mesh();
    let rule = triangle_rule(5).unwrap();
    let mut out = vec![0.0; 2 * space.n_scalar()];
    let mut vals = [0.0; MAX_SCALAR_BASIS];
    let mut grads = [[0.0; 2]; MAX_SCALAR_BASIS];
    for t in 0..mesh.n_triangles() {
        let area = space.element_area(t);
        let dofs: Vec<usize> = space.element_scalar_dofs(t).to_vec();
        for (&b, &wq) in rule.points.iter().zip(&rule.weights) {
            let nb = space.scalar_basis(t, b, &mut vals, &mut grads);
            let mut wv = [0.0; 2];
            let mut uv = [0.0; 2];
            let mut gu = [[0.0; 2]; 2];
            for l in 0..nb {
                for c in 0..2 {
                    let cw = w[space.velocity_dof(c, dofs[l])];
                    let cu = u[space.velocity_dof(c, dofs[l])];
                    wv[c] += cw * vals[l];
                    uv[c] += cu * vals[l];
                    gu[c][0] += cu * grads[l][0];
                    gu[c][1] += cu * grads[l][1];
                }
            }
            let adv = [
                wv[0] * gu[0][0] + wv[1] * gu[0][1],
                wv[0] * gu[1][0] + wv[1] * gu[1][1],
            ];
            // the 1/2 of the skew form times int_T f = 2 area sum w_q f
            let scale = wq * area;
            for l in 0..nb {
                let wdg = wv[0] * grads[l][0] + wv[1] * grads[l][1];
                for c in 0..2 {
                    out[space.velocity_dof(c, dofs[l])] +=
                        scale * (adv[c] * vals[l] - wdg * uv[c]);
                }
            }
        }
    }
    out
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

pub fn inf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

/// Random coefficient field with zeros on Dirichlet velocity dofs, the class
/// the steppers operate on.
pub fn random_velocity(space: &Arc<MixedSpace>, rng: &mut impl rand::Rng) -> Vec<f64> {
    let ns = space.n_scalar();
    let mut v = vec![0.0; 2 * ns];
    for i in 0..ns {
        if !space.is_dirichlet_scalar(i) {
            for c in 0..2 {
                v[space.velocity_dof(c, i)] = rng.gen_range(-1.0..1.0);
            }
        }
    }
    v
}
