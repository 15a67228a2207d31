//! Element assembly for the mixed Navier-Stokes system: mass, stiffness and
//! divergence operators, the skew-symmetrized convection term and its
//! Jacobian, and load vectors.
//!
//! The convection form is
//!   b(v, w, phi) = 1/2 (v . grad w, phi) - 1/2 (v . grad phi, w),
//! which satisfies b(v, w, w) = 0 identically, also at the quadrature level.

use crate::femspace::{MixedSpace, MAX_SCALAR_BASIS};
use crate::quadrature::{triangle_rule, QuadratureRule};
use crate::sparse::{CsrMatrix, TripletList};
use crate::Result;
use std::sync::Arc;

/// Quadrature degrees. Velocity mass products reach degree 6 for MINI
/// (bubble times bubble), so the mass rule is degree 6 and exact; stiffness
/// and divergence products stop at degree 4. Convection and loads use the
/// degree-5 rule.
const DEGREE_MASS: u32 = 6;
const DEGREE_STIFFNESS: u32 = 4;
const DEGREE_CONVECTION: u32 = 5;

/// Assembled time-independent operators on one mixed space.
#[derive(Debug)]
pub struct DiscreteSystem {
    space: Arc<MixedSpace>,
    /// Scalar-component velocity mass matrix (applied blockwise to both components).
    pub mass_scalar: CsrMatrix,
    /// Scalar-component velocity stiffness matrix.
    pub stiffness_scalar: CsrMatrix,
    /// Divergence operator: rows are pressure dofs, columns velocity dofs,
    /// entry (q, i) = int chi_q div phi_i.
    pub div: CsrMatrix,
    /// Pressure mean weights: c_q = int chi_q; used for the zero-mean constraint.
    pub pressure_mean: Vec<f64>,
    /// Sparsity of the convection Jacobian (explicit zeros), with slot table.
    conv_pattern: CsrMatrix,
    conv_slots: Vec<u32>,
    quad_conv: QuadratureRule,
}

impl DiscreteSystem {
    pub fn assemble(space: Arc<MixedSpace>) -> Result<Self> {
        let mesh = space.mesh().clone();
        let ns = space.n_scalar();
        let np = space.n_pressure();
        let nt = mesh.n_triangles();
        let stride = space.pair().local_scalar_dofs();

        let rule_mass = triangle_rule(DEGREE_MASS)?;
        let rule_stiff = triangle_rule(DEGREE_STIFFNESS)?;
        let rule_conv = triangle_rule(DEGREE_CONVECTION)?;

        let mut mass_t = TripletList::new(ns, ns);
        let mut stiff_t = TripletList::new(ns, ns);
        let mut div_t = TripletList::new(np, 2 * ns);
        let mut pressure_mean = vec![0.0; np];
        let mut values = [0.0; MAX_SCALAR_BASIS];
        let mut grads = [[0.0; 2]; MAX_SCALAR_BASIS];

        for t in 0..nt {
            let dofs = space.element_scalar_dofs(t).to_vec();
            let area2 = 2.0 * space.element_area(t);
            let mut local_m = [[0.0; MAX_SCALAR_BASIS]; MAX_SCALAR_BASIS];
            for (&b, &w) in rule_mass.points.iter().zip(&rule_mass.weights) {
                let n = space.scalar_basis(t, b, &mut values, &mut grads);
                let scale = w * area2;
                for i in 0..n {
                    for j in 0..n {
                        local_m[i][j] += scale * values[i] * values[j];
                    }
                }
            }
            let mut local_a = [[0.0; MAX_SCALAR_BASIS]; MAX_SCALAR_BASIS];
            let mut local_d = [[[0.0; 2]; MAX_SCALAR_BASIS]; 3];
            for (&b, &w) in rule_stiff.points.iter().zip(&rule_stiff.weights) {
                let n = space.scalar_basis(t, b, &mut values, &mut grads);
                let scale = w * area2;
                for i in 0..n {
                    for j in 0..n {
                        local_a[i][j] +=
                            scale * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                    }
                }
                // pressure basis is barycentric
                for q in 0..3 {
                    for i in 0..n {
                        for c in 0..2 {
                            local_d[q][i][c] += scale * b[q] * grads[i][c];
                        }
                    }
                }
            }
            let pdofs = space.element_pressure_dofs(t);
            for i in 0..stride {
                for j in 0..stride {
                    mass_t.push(dofs[i], dofs[j], local_m[i][j]);
                    stiff_t.push(dofs[i], dofs[j], local_a[i][j]);
                }
            }
            for q in 0..3 {
                for i in 0..stride {
                    for c in 0..2 {
                        div_t.push(pdofs[q], c * ns + dofs[i], local_d[q][i][c]);
                    }
                }
                pressure_mean[pdofs[q]] += space.element_area(t) / 3.0;
            }
        }

        // convection Jacobian pattern: all velocity dof pairs sharing an element,
        // including cross-component blocks
        let mut conv_t = TripletList::new(2 * ns, 2 * ns);
        for t in 0..nt {
            let dofs = space.element_scalar_dofs(t);
            for c in 0..2 {
                for d in 0..2 {
                    for &i in dofs {
                        for &j in dofs {
                            conv_t.push(c * ns + i, d * ns + j, 0.0);
                        }
                    }
                }
            }
        }
        let conv_pattern = conv_t.into_csr();
        let local2 = 2 * stride;
        let mut conv_slots = Vec::with_capacity(nt * local2 * local2);
        for t in 0..nt {
            let dofs = space.element_scalar_dofs(t);
            for c in 0..2 {
                for i in 0..stride {
                    let row = c * ns + dofs[i];
                    for d in 0..2 {
                        for j in 0..stride {
                            let col = d * ns + dofs[j];
                            let slot = conv_pattern
                                .slot(row, col)
                                .expect("pattern contains all element pairs");
                            conv_slots.push(slot as u32);
                        }
                    }
                }
            }
        }

        Ok(Self {
            space,
            mass_scalar: mass_t.into_csr(),
            stiffness_scalar: stiff_t.into_csr(),
            div: div_t.into_csr(),
            pressure_mean,
            conv_pattern,
            conv_slots,
            quad_conv: rule_conv,
        })
    }

    pub fn space(&self) -> &Arc<MixedSpace> {
        &self.space
    }

    /// y = M x blockwise on both velocity components.
    pub fn mass_matvec(&self, x: &[f64], y: &mut [f64]) {
        let ns = self.space.n_scalar();
        y.fill(0.0);
        for c in 0..2 {
            let span = c * ns..(c + 1) * ns;
            let (xs, ys) = (&x[span.clone()], &mut y[span]);
            self.mass_scalar.matvec_add(1.0, xs, ys);
        }
    }

    /// y += alpha A x blockwise.
    pub fn stiffness_matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        let ns = self.space.n_scalar();
        for c in 0..2 {
            let xs = &x[c * ns..(c + 1) * ns];
            let mut tmp = vec![0.0; ns];
            self.stiffness_scalar.matvec_add(alpha, xs, &mut tmp);
            for (yi, ti) in y[c * ns..(c + 1) * ns].iter_mut().zip(&tmp) {
                *yi += ti;
            }
        }
    }

    /// y += alpha M x blockwise.
    pub fn mass_matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        let ns = self.space.n_scalar();
        for c in 0..2 {
            let xs = &x[c * ns..(c + 1) * ns];
            let mut tmp = vec![0.0; ns];
            self.mass_scalar.matvec_add(alpha, xs, &mut tmp);
            for (yi, ti) in y[c * ns..(c + 1) * ns].iter_mut().zip(&tmp) {
                *yi += ti;
            }
        }
    }

    /// Discrete divergence B u.
    pub fn div_apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.space.n_pressure()];
        self.div.matvec(u, &mut out);
        out
    }

    /// y += alpha B^T p.
    pub fn div_transpose_add(&self, alpha: f64, p: &[f64], y: &mut [f64]) {
        self.div.matvec_transpose_add(alpha, p, y);
    }

    /// Energy norm sqrt(u^T M u) of a velocity coefficient vector.
    pub fn velocity_mass_norm(&self, u: &[f64]) -> f64 {
        let ns = self.space.n_scalar();
        let mut acc = 0.0;
        for c in 0..2 {
            let us = &u[c * ns..(c + 1) * ns];
            acc += self.mass_scalar.bilinear(us, us);
        }
        acc.sqrt()
    }

    /// Convection vector N_i = b(w, u, phi_i) for all velocity test functions.
    /// `w` and `u` are velocity coefficient vectors on this space.
    pub fn convection_apply(&self, w: &[f64], u: &[f64]) -> Vec<f64> {
        let space = &self.space;
        let ns = space.n_scalar();
        let mut out = vec![0.0; 2 * ns];
        let mut values = [0.0; MAX_SCALAR_BASIS];
        let mut grads = [[0.0; 2]; MAX_SCALAR_BASIS];
        for t in 0..space.mesh().n_triangles() {
            let dofs = space.element_scalar_dofs(t);
            let area2 = 2.0 * space.element_area(t);
            for (&b, &wq) in self.quad_conv.points.iter().zip(&self.quad_conv.weights) {
                let n = space.scalar_basis(t, b, &mut values, &mut grads);
                let mut w_val = [0.0; 2];
                let mut u_val = [0.0; 2];
                let mut u_grad = [[0.0; 2]; 2];
                for k in 0..n {
                    let i = dofs[k];
                    for c in 0..2 {
                        let wc = w[c * ns + i];
                        let uc = u[c * ns + i];
                        w_val[c] += wc * values[k];
                        u_val[c] += uc * values[k];
                        for d in 0..2 {
                            u_grad[c][d] += uc * grads[k][d];
                        }
                    }
                }
                let scale = 0.5 * wq * area2;
                for k in 0..n {
                    let w_dot_grad_nk = w_val[0] * grads[k][0] + w_val[1] * grads[k][1];
                    for c in 0..2 {
                        let adv = w_val[0] * u_grad[c][0] + w_val[1] * u_grad[c][1];
                        out[c * ns + dofs[k]] += scale * (adv * values[k] - w_dot_grad_nk * u_val[c]);
                    }
                }
            }
        }
        out
    }

    /// Sparsity of the convection Jacobian (explicit zero values). The same
    /// pattern is shared by the Picard matrix.
    pub fn convection_jacobian_pattern(&self) -> &CsrMatrix {
        &self.conv_pattern
    }

    /// Jacobian of `u -> convection_apply(u, u)`: the assembled matrix of
    /// L v = b(u, v, .) + b(v, u, .).
    pub fn convection_jacobian(&self, u: &[f64]) -> CsrMatrix {
        let mut jac = self.conv_pattern.clone();
        self.convection_jacobian_into(u, &mut jac);
        jac
    }

    /// Picard (lagged) convection matrix C with C v = b(u, v, .).
    pub fn convection_picard(&self, u: &[f64]) -> CsrMatrix {
        let mut mat = self.conv_pattern.clone();
        self.convection_matrix_into(u, &mut mat, false);
        mat
    }

    /// Refills `mat` with the Picard matrix (same pattern as the Jacobian).
    pub fn convection_picard_into(&self, u: &[f64], mat: &mut CsrMatrix) {
        self.convection_matrix_into(u, mat, false);
    }

    /// Refills `jac` (which must share the pattern of [`Self::convection_jacobian`]).
    pub fn convection_jacobian_into(&self, u: &[f64], jac: &mut CsrMatrix) {
        self.convection_matrix_into(u, jac, true);
    }

    fn convection_matrix_into(&self, u: &[f64], jac: &mut CsrMatrix, full_newton: bool) {
        let space = &self.space;
        let ns = space.n_scalar();
        let stride = space.pair().local_scalar_dofs();
        let local2 = 2 * stride;
        let vals = jac.values_mut();
        vals.fill(0.0);
        let mut values = [0.0; MAX_SCALAR_BASIS];
        let mut grads = [[0.0; 2]; MAX_SCALAR_BASIS];
        for t in 0..space.mesh().n_triangles() {
            let dofs = space.element_scalar_dofs(t);
            let area2 = 2.0 * space.element_area(t);
            let base = t * local2 * local2;
            for (&b, &wq) in self.quad_conv.points.iter().zip(&self.quad_conv.weights) {
                let n = space.scalar_basis(t, b, &mut values, &mut grads);
                let mut u_val = [0.0; 2];
                let mut u_grad = [[0.0; 2]; 2];
                for k in 0..n {
                    let i = dofs[k];
                    for c in 0..2 {
                        let uc = u[c * ns + i];
                        u_val[c] += uc * values[k];
                        for d in 0..2 {
                            u_grad[c][d] += uc * grads[k][d];
                        }
                    }
                }
                let scale = 0.5 * wq * area2;
                let mut u_dot_grad = [0.0; MAX_SCALAR_BASIS];
                for k in 0..n {
                    u_dot_grad[k] = u_val[0] * grads[k][0] + u_val[1] * grads[k][1];
                }
                for c in 0..2 {
                    for i in 0..n {
                        let row_base = base + (c * stride + i) * local2;
                        for d in 0..2 {
                            let same = c == d;
                            for j in 0..n {
                                let mut v = 0.0;
                                if full_newton {
                                    // derivative through the transporting slot
                                    v += values[i] * values[j] * u_grad[c][d]
                                        - values[j] * grads[i][d] * u_val[c];
                                }
                                if same {
                                    v += values[i] * u_dot_grad[j] - u_dot_grad[i] * values[j];
                                }
                                let slot = self.conv_slots[row_base + d * stride + j] as usize;
                                vals[slot] += scale * v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Load vector (f(., t), phi_i) for all velocity test functions.
    pub fn assemble_load<F: Fn([f64; 2], f64) -> [f64; 2]>(&self, f: &F, time: f64) -> Vec<f64> {
        let space = &self.space;
        let ns = space.n_scalar();
        let mesh = space.mesh();
        let mut out = vec![0.0; 2 * ns];
        let mut values = [0.0; MAX_SCALAR_BASIS];
        let mut grads = [[0.0; 2]; MAX_SCALAR_BASIS];
        for t in 0..mesh.n_triangles() {
            let dofs = space.element_scalar_dofs(t);
            let area2 = 2.0 * space.element_area(t);
            for (&b, &wq) in self.quad_conv.points.iter().zip(&self.quad_conv.weights) {
                let n = space.scalar_basis(t, b, &mut values, &mut grads);
                let x = mesh.point_in_triangle(t, b);
                let fx = f(x, time);
                let scale = wq * area2;
                for k in 0..n {
                    for c in 0..2 {
                        out[c * ns + dofs[k]] += scale * fx[c] * values[k];
                    }
                }
            }
        }
        out
    }

    /// Trilinear form value b(v, w, z) of three velocity coefficient vectors.
    pub fn trilinear(&self, v: &[f64], w: &[f64], z: &[f64]) -> f64 {
        let n = self.convection_apply(v, w);
        n.iter().zip(z).map(|(&a, &b)| a * b).sum()
    }
}
