//! Mixed velocity/pressure finite element spaces on a triangulation.
//!
//! Two inf-sup stable pairs are provided: MINI (linears enriched with a cubic
//! bubble per element, against linear pressure) and Taylor-Hood (quadratic
//! velocity, linear pressure). Velocity components share one scalar space;
//! coefficient vectors store the x-component block first, then the y-block.

use crate::mesh::{MeshHierarchy, Triangulation};
use crate::{Error, Result};
use std::sync::Arc;

pub const MAX_SCALAR_BASIS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementPair {
    Mini,
    TaylorHood,
}

impl ElementPair {
    pub fn name(self) -> &'static str {
        match self {
            ElementPair::Mini => "mini",
            ElementPair::TaylorHood => "taylor-hood",
        }
    }

    /// Scalar velocity basis functions per element.
    pub fn local_scalar_dofs(self) -> usize {
        match self {
            ElementPair::Mini => 4,
            ElementPair::TaylorHood => 6,
        }
    }
}

/// A mixed finite element space tied to one triangulation.
#[derive(Debug)]
pub struct MixedSpace {
    mesh: Arc<Triangulation>,
    pair: ElementPair,
    n_scalar: usize,
    n_pressure: usize,
    /// Flat element-to-scalar-dof map with stride `pair.local_scalar_dofs()`.
    element_dofs: Vec<usize>,
    dirichlet: Vec<bool>,
    /// Barycentric gradients per element: `grad_lambda[t][i]` is the physical
    /// gradient of the i-th barycentric coordinate.
    grad_lambda: Vec<[[f64; 2]; 3]>,
    area: Vec<f64>,
}

impl MixedSpace {
    pub fn new(mesh: Arc<Triangulation>, pair: ElementPair) -> Result<Arc<Self>> {
        let nv = mesh.n_vertices();
        let nt = mesh.n_triangles();
        let stride = pair.local_scalar_dofs();
        let n_scalar = match pair {
            ElementPair::Mini => nv + nt,
            ElementPair::TaylorHood => nv + mesh.n_edges(),
        };
        let mut element_dofs = Vec::with_capacity(nt * stride);
        for t in 0..nt {
            let [v0, v1, v2] = mesh.triangle(t);
            match pair {
                ElementPair::Mini => {
                    element_dofs.extend_from_slice(&[v0, v1, v2, nv + t]);
                }
                ElementPair::TaylorHood => {
                    let [e01, e12, e20] = mesh.triangle_edge_ids(t);
                    element_dofs.extend_from_slice(&[v0, v1, v2, nv + e01, nv + e12, nv + e20]);
                }
            }
        }
        let mut dirichlet = vec![false; n_scalar];
        for v in 0..nv {
            dirichlet[v] = mesh.is_boundary_vertex(v);
        }
        if pair == ElementPair::TaylorHood {
            for e in 0..mesh.n_edges() {
                dirichlet[nv + e] = mesh.is_boundary_edge(e);
            }
        }
        let mut grad_lambda = Vec::with_capacity(nt);
        let mut area = Vec::with_capacity(nt);
        for t in 0..nt {
            let [p, q, r] = mesh.triangle_coords(t);
            let a2 = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
            if a2 <= 0.0 {
                return Err(Error::Space(format!("element {t} has nonpositive area")));
            }
            // grad lambda_i is the inward normal of the opposite edge over 2|T|
            let g0 = [(q[1] - r[1]) / a2, (r[0] - q[0]) / a2];
            let g1 = [(r[1] - p[1]) / a2, (p[0] - r[0]) / a2];
            let g2 = [(p[1] - q[1]) / a2, (q[0] - p[0]) / a2];
            grad_lambda.push([g0, g1, g2]);
            area.push(0.5 * a2);
        }
        Ok(Arc::new(Self {
            mesh,
            pair,
            n_scalar,
            n_pressure: nv,
            element_dofs,
            dirichlet,
            grad_lambda,
            area,
        }))
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn pair(&self) -> ElementPair {
        self.pair
    }

    /// Scalar velocity dofs per component.
    pub fn n_scalar(&self) -> usize {
        self.n_scalar
    }

    /// Total velocity dofs (both components).
    pub fn n_velocity(&self) -> usize {
        2 * self.n_scalar
    }

    pub fn n_pressure(&self) -> usize {
        self.n_pressure
    }

    /// Global index of scalar dof `i` of velocity component `comp`.
    pub fn velocity_dof(&self, comp: usize, i: usize) -> usize {
        comp * self.n_scalar + i
    }

    pub fn element_scalar_dofs(&self, t: usize) -> &[usize] {
        let s = self.pair.local_scalar_dofs();
        &self.element_dofs[t * s..(t + 1) * s]
    }

    /// Pressure dofs of element `t` (vertex indices).
    pub fn element_pressure_dofs(&self, t: usize) -> [usize; 3] {
        self.mesh.triangle(t)
    }

    pub fn is_dirichlet_scalar(&self, i: usize) -> bool {
        self.dirichlet[i]
    }

    pub fn n_dirichlet_scalar(&self) -> usize {
        self.dirichlet.iter().filter(|&&d| d).count()
    }

    pub fn element_area(&self, t: usize) -> f64 {
        self.area[t]
    }

    pub fn grad_lambda(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.grad_lambda[t]
    }

    /// Evaluates the scalar velocity basis of element `t` at barycentric `b`.
    /// Fills `values` and `grads` and returns the number of basis functions.
    pub fn scalar_basis(
        &self,
        t: usize,
        b: [f64; 3],
        values: &mut [f64; MAX_SCALAR_BASIS],
        grads: &mut [[f64; 2]; MAX_SCALAR_BASIS],
    ) -> usize {
        let gl = &self.grad_lambda[t];
        match self.pair {
            ElementPair::Mini => {
                for i in 0..3 {
                    values[i] = b[i];
                    grads[i] = gl[i];
                }
                values[3] = 27.0 * b[0] * b[1] * b[2];
                for d in 0..2 {
                    grads[3][d] = 27.0
                        * (b[1] * b[2] * gl[0][d] + b[0] * b[2] * gl[1][d] + b[0] * b[1] * gl[2][d]);
                }
                4
            }
            ElementPair::TaylorHood => {
                for i in 0..3 {
                    values[i] = b[i] * (2.0 * b[i] - 1.0);
                    for d in 0..2 {
                        grads[i][d] = (4.0 * b[i] - 1.0) * gl[i][d];
                    }
                }
                let pairs = [(0usize, 1usize), (1, 2), (2, 0)];
                for (k, (i, j)) in pairs.into_iter().enumerate() {
                    values[3 + k] = 4.0 * b[i] * b[j];
                    for d in 0..2 {
                        grads[3 + k][d] = 4.0 * (b[j] * gl[i][d] + b[i] * gl[j][d]);
                    }
                }
                6
            }
        }
    }

    /// Physical coordinate of a scalar velocity dof (vertex, edge midpoint, or
    /// element barycenter for MINI bubbles).
    pub fn scalar_dof_point(&self, i: usize) -> [f64; 2] {
        let nv = self.mesh.n_vertices();
        if i < nv {
            return self.mesh.vertex(i);
        }
        match self.pair {
            ElementPair::Mini => self.mesh.point_in_triangle(i - nv, [1.0 / 3.0; 3]),
            ElementPair::TaylorHood => {
                let [p, q] = self.mesh.edge(i - nv);
                let a = self.mesh.vertex(p);
                let b = self.mesh.vertex(q);
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
            }
        }
    }
}

/// Velocity/pressure coefficient vectors on a [`MixedSpace`].
#[derive(Debug, Clone)]
pub struct FieldPair {
    space: Arc<MixedSpace>,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl FieldPair {
    pub fn zeros(space: Arc<MixedSpace>) -> Self {
        let velocity = vec![0.0; space.n_velocity()];
        let pressure = vec![0.0; space.n_pressure()];
        Self {
            space,
            velocity,
            pressure,
        }
    }

    pub fn space(&self) -> &Arc<MixedSpace> {
        &self.space
    }

    pub fn velocity_at(&self, t: usize, b: [f64; 3]) -> [f64; 2] {
        let mut values = [0.0; MAX_SCALAR_BASIS];
        let mut grads = [[0.0; 2]; MAX_SCALAR_BASIS];
        let n = self.space.scalar_basis(t, b, &mut values, &mut grads);
        let dofs = self.space.element_scalar_dofs(t);
        let ns = self.space.n_scalar();
        let mut u = [0.0; 2];
        for k in 0..n {
            let i = dofs[k];
            u[0] += self.velocity[i] * values[k];
            u[1] += self.velocity[ns + i] * values[k];
        }
        u
    }

    /// Velocity gradient; `grad[c][d]` is the derivative of component `c` in direction `d`.
    pub fn velocity_gradient_at(&self, t: usize, b: [f64; 3]) -> [[f64; 2]; 2] {
        let mut values = [0.0; MAX_SCALAR_BASIS];
        let mut grads = [[0.0; 2]; MAX_SCALAR_BASIS];
        let n = self.space.scalar_basis(t, b, &mut values, &mut grads);
        let dofs = self.space.element_scalar_dofs(t);
        let ns = self.space.n_scalar();
        let mut g = [[0.0; 2]; 2];
        for k in 0..n {
            let i = dofs[k];
            for d in 0..2 {
                g[0][d] += self.velocity[i] * grads[k][d];
                g[1][d] += self.velocity[ns + i] * grads[k][d];
            }
        }
        g
    }

    pub fn pressure_at(&self, t: usize, b: [f64; 3]) -> f64 {
        let [q0, q1, q2] = self.space.element_pressure_dofs(t);
        b[0] * self.pressure[q0] + b[1] * self.pressure[q1] + b[2] * self.pressure[q2]
    }

    /// Largest velocity magnitude over Dirichlet dofs; used to audit that
    /// homogeneous boundary conditions survived a solve.
    pub fn boundary_velocity_max(&self) -> f64 {
        let ns = self.space.n_scalar();
        let mut m: f64 = 0.0;
        for i in 0..ns {
            if self.space.is_dirichlet_scalar(i) {
                m = m.max(self.velocity[i].abs()).max(self.velocity[ns + i].abs());
            }
        }
        m
    }

    /// Shifts the pressure so its discrete mean `c^T p` vanishes.
    pub fn remove_pressure_mean(&mut self, mean_weights: &[f64]) {
        let total: f64 = mean_weights.iter().sum();
        let mean: f64 = self
            .pressure
            .iter()
            .zip(mean_weights)
            .map(|(&p, &w)| p * w)
            .sum::<f64>()
            / total;
        for p in &mut self.pressure {
            *p -= mean;
        }
    }
}

/// Nodal interpolation of an analytic velocity field. Vertex and edge dofs take
/// point values; MINI bubble coefficients correct the linear part so the field
/// value at the element barycenter is matched.
pub fn interpolate_velocity<F: Fn([f64; 2]) -> [f64; 2]>(space: &Arc<MixedSpace>, f: F) -> FieldPair {
    let mesh = space.mesh();
    let ns = space.n_scalar();
    let nv = mesh.n_vertices();
    let mut field = FieldPair::zeros(space.clone());
    for v in 0..nv {
        let val = f(mesh.vertex(v));
        field.velocity[v] = val[0];
        field.velocity[ns + v] = val[1];
    }
    match space.pair() {
        ElementPair::TaylorHood => {
            for e in 0..mesh.n_edges() {
                let val = f(space.scalar_dof_point(nv + e));
                field.velocity[nv + e] = val[0];
                field.velocity[ns + nv + e] = val[1];
            }
        }
        ElementPair::Mini => {
            for t in 0..mesh.n_triangles() {
                let bary = [1.0 / 3.0; 3];
                let x = mesh.point_in_triangle(t, bary);
                let val = f(x);
                let [v0, v1, v2] = mesh.triangle(t);
                for comp in 0..2 {
                    let lin = (field.velocity[comp * ns + v0]
                        + field.velocity[comp * ns + v1]
                        + field.velocity[comp * ns + v2])
                        / 3.0;
                    field.velocity[comp * ns + nv + t] = val[comp] - lin;
                }
            }
        }
    }
    field
}

/// Vertex interpolation of an analytic pressure.
pub fn interpolate_pressure<F: Fn([f64; 2]) -> f64>(space: &Arc<MixedSpace>, f: F) -> Vec<f64> {
    let mesh = space.mesh();
    (0..mesh.n_vertices()).map(|v| f(mesh.vertex(v))).collect()
}

/// Transfers a field from a coarse space to a nested finer space of the same
/// element pair. Vertex, edge and pressure dofs are exact; for MINI the bubble
/// part matches values at fine barycenters, so the transfer is exact on
/// bubble-free fields and first order otherwise.
pub fn prolong(
    field: &FieldPair,
    fine_space: &Arc<MixedSpace>,
    hierarchy: &MeshHierarchy,
) -> Result<FieldPair> {
    let coarse_space = field.space();
    if coarse_space.pair() != fine_space.pair() {
        return Err(Error::Space(
            "prolongation requires matching element pairs".into(),
        ));
    }
    let coarse_level = coarse_space.mesh().level() as usize;
    let fine_level = fine_space.mesh().level() as usize;
    if fine_level < coarse_level || fine_level >= hierarchy.n_levels() {
        return Err(Error::Space(format!(
            "cannot prolong from level {coarse_level} to level {fine_level} in a {}-level hierarchy",
            hierarchy.n_levels()
        )));
    }
    let coarse_mesh = coarse_space.mesh();
    let fine_mesh = fine_space.mesh();
    let ns_f = fine_space.n_scalar();
    let nv_f = fine_mesh.n_vertices();
    let mut out = FieldPair::zeros(fine_space.clone());
    let mut vertex_done = vec![false; ns_f];

    // pass 1: vertex and edge dofs plus pressure, by evaluating the coarse field
    for tf in 0..fine_mesh.n_triangles() {
        let tc = hierarchy.ancestor(fine_level, tf, coarse_level);
        let dofs = fine_space.element_scalar_dofs(tf);
        let n_nodal = match fine_space.pair() {
            ElementPair::Mini => 3,
            ElementPair::TaylorHood => 6,
        };
        for &i in &dofs[..n_nodal] {
            if vertex_done[i] {
                continue;
            }
            vertex_done[i] = true;
            let x = fine_space.scalar_dof_point(i);
            let bc = coarse_mesh.barycentric(tc, x);
            let u = field.velocity_at(tc, bc);
            out.velocity[i] = u[0];
            out.velocity[ns_f + i] = u[1];
        }
        let [q0, q1, q2] = fine_mesh.triangle(tf);
        for q in [q0, q1, q2] {
            let bc = coarse_mesh.barycentric(tc, fine_mesh.vertex(q));
            out.pressure[q] = field.pressure_at(tc, bc);
        }
    }

    // pass 2: MINI bubbles correct the already-transferred linear part
    if fine_space.pair() == ElementPair::Mini {
        for tf in 0..fine_mesh.n_triangles() {
            let tc = hierarchy.ancestor(fine_level, tf, coarse_level);
            let x = fine_mesh.point_in_triangle(tf, [1.0 / 3.0; 3]);
            let bc = coarse_mesh.barycentric(tc, x);
            let u = field.velocity_at(tc, bc);
            let [v0, v1, v2] = fine_mesh.triangle(tf);
            for comp in 0..2 {
                let lin = (out.velocity[comp * ns_f + v0]
                    + out.velocity[comp * ns_f + v1]
                    + out.velocity[comp * ns_f + v2])
                    / 3.0;
                out.velocity[comp * ns_f + nv_f + tf] = u[comp] - lin;
            }
        }
    }
    Ok(out)
}
