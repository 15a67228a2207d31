//! Direct sparse factorization of the augmented saddle-point system
//!
//! ```text
//!   [ K    B^T  0 ] [u]   [f]
//!   [ B    0    c ] [q] = [0]
//!   [ 0    c^T  0 ] [l]   [0]
//! ```
//!
//! where `K` is a velocity operator (mass/stiffness/convection combination),
//! `B` the discrete divergence, and `c` the pressure mean weights bordered as a
//! Lagrange multiplier to pin the pressure constant. Homogeneous Dirichlet
//! velocity dofs are eliminated by zeroing their rows and columns and placing a
//! unit diagonal.
//!
//! The block layout is symmetric when `K` is; the physical pressure is "-q".
//! The sparsity pattern is fixed at construction, so Newton refactorizations
//! reuse both the pattern and the symbolic analysis.

use crate::assembly::DiscreteSystem;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};
use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};

/// Scalar coefficients of the velocity block `K = mass_coeff * M + stiffness_coeff * A (+ L)`.
#[derive(Debug, Clone, Copy)]
pub struct VelocityBlock {
    pub mass_coeff: f64,
    pub stiffness_coeff: f64,
}

#[derive(Debug)]
pub struct SaddleSystem {
    n_vel: usize,
    n_p: usize,
    /// Total system size including the multiplier row (if enabled).
    n: usize,
    with_mean_constraint: bool,
    mat: SparseColMat<usize, f64>,
    symbolic: SymbolicLu<usize>,
    dirichlet: Vec<bool>,
    // slot maps into the CSC value array
    mass_slots: Vec<u32>,
    stiff_slots: Vec<u32>,
    conv_slots: Vec<u32>,
    fixed_slots: Vec<(u32, f64)>,
    n_factorizations: usize,
}

fn csc_slot(mat: &SparseColMat<usize, f64>, row: usize, col: usize) -> Option<usize> {
    let sym = mat.symbolic();
    let start = sym.col_ptr()[col];
    let end = sym.col_ptr()[col + 1];
    let rows = &sym.row_idx()[start..end];
    rows.binary_search(&row).ok().map(|k| start + k)
}

impl SaddleSystem {
    pub fn new(sys: &DiscreteSystem) -> Result<Self> {
        Self::with_options(sys, true)
    }

    /// `with_mean_constraint = false` drops the bordered multiplier row and
    /// column; the resulting matrix is singular (pressure is only determined
    /// up to a constant). Exposed to let tests observe that failure mode.
    pub fn with_options(sys: &DiscreteSystem, with_mean_constraint: bool) -> Result<Self> {
        let space = sys.space();
        let ns = space.n_scalar();
        let n_vel = 2 * ns;
        let n_p = space.n_pressure();
        let n = n_vel + n_p + usize::from(with_mean_constraint);
        let dirichlet: Vec<bool> = (0..n_vel)
            .map(|i| space.is_dirichlet_scalar(i % ns))
            .collect();

        // union pattern; values are filled per factorization
        let conv_pattern = sys.convection_jacobian_pattern();
        let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
        for (r, c, _) in conv_pattern.entries() {
            triplets.push(Triplet::new(r, c, 0.0));
        }
        for (q, j, _) in sys.div.entries() {
            triplets.push(Triplet::new(n_vel + q, j, 0.0));
            triplets.push(Triplet::new(j, n_vel + q, 0.0));
        }
        if with_mean_constraint {
            for q in 0..n_p {
                triplets.push(Triplet::new(n_vel + q, n - 1, 0.0));
                triplets.push(Triplet::new(n - 1, n_vel + q, 0.0));
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Solve(format!("saddle pattern construction failed: {e:?}")))?;

        let slot = |r: usize, c: usize| -> Result<u32> {
            csc_slot(&mat, r, c)
                .map(|s| s as u32)
                .ok_or_else(|| Error::Solve(format!("missing pattern slot ({r}, {c})")))
        };

        let mut mass_slots = Vec::new();
        let mut stiff_slots = Vec::new();
        for comp in 0..2 {
            for (r, c, _) in sys.mass_scalar.entries() {
                mass_slots.push(slot(comp * ns + r, comp * ns + c)?);
            }
            for (r, c, _) in sys.stiffness_scalar.entries() {
                stiff_slots.push(slot(comp * ns + r, comp * ns + c)?);
            }
        }
        let mut conv_slots = Vec::new();
        for (r, c, _) in conv_pattern.entries() {
            conv_slots.push(slot(r, c)?);
        }
        // entries that do not change between factorizations: divergence blocks,
        // mean constraint and the unit diagonal of eliminated rows
        let mut fixed_slots: Vec<(u32, f64)> = Vec::new();
        for (q, j, v) in sys.div.entries() {
            if !dirichlet[j] {
                fixed_slots.push((slot(n_vel + q, j)?, v));
                fixed_slots.push((slot(j, n_vel + q)?, v));
            }
        }
        if with_mean_constraint {
            for q in 0..n_p {
                let w = sys.pressure_mean[q];
                fixed_slots.push((slot(n_vel + q, n - 1)?, w));
                fixed_slots.push((slot(n - 1, n_vel + q)?, w));
            }
        }
        for (i, &is_bc) in dirichlet.iter().enumerate() {
            if is_bc {
                fixed_slots.push((slot(i, i)?, 1.0));
            }
        }

        let symbolic = SymbolicLu::try_new(mat.symbolic())
            .map_err(|e| Error::Solve(format!("symbolic analysis failed: {e:?}")))?;

        Ok(Self {
            n_vel,
            n_p,
            n,
            with_mean_constraint,
            mat,
            symbolic,
            dirichlet,
            mass_slots,
            stiff_slots,
            conv_slots,
            fixed_slots,
            n_factorizations: 0,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n
    }

    pub fn n_velocity(&self) -> usize {
        self.n_vel
    }

    pub fn n_pressure(&self) -> usize {
        self.n_p
    }

    pub fn n_factorizations(&self) -> usize {
        self.n_factorizations
    }

    /// Refills the matrix values for the given velocity block and factorizes.
    /// `convection` must share the pattern of `DiscreteSystem::convection_jacobian`.
    pub fn factorize(
        &mut self,
        sys: &DiscreteSystem,
        block: VelocityBlock,
        convection: Option<&CsrMatrix>,
    ) -> Result<SaddleFactorization> {
        let ns = sys.space().n_scalar();
        let vals = self.mat.val_mut();
        vals.fill(0.0);
        let masked = |r: usize, c: usize, d: &[bool]| d[r] || d[c];
        if block.mass_coeff != 0.0 {
            let mut k = 0;
            for comp in 0..2 {
                for (r, c, v) in sys.mass_scalar.entries() {
                    if !masked(comp * ns + r, comp * ns + c, &self.dirichlet) {
                        vals[self.mass_slots[k] as usize] += block.mass_coeff * v;
                    }
                    k += 1;
                }
            }
        }
        if block.stiffness_coeff != 0.0 {
            let mut k = 0;
            for comp in 0..2 {
                for (r, c, v) in sys.stiffness_scalar.entries() {
                    if !masked(comp * ns + r, comp * ns + c, &self.dirichlet) {
                        vals[self.stiff_slots[k] as usize] += block.stiffness_coeff * v;
                    }
                    k += 1;
                }
            }
        }
        if let Some(conv) = convection {
            for (k, (r, c, v)) in conv.entries().enumerate() {
                if !masked(r, c, &self.dirichlet) {
                    vals[self.conv_slots[k] as usize] += v;
                }
            }
        }
        for &(slot, v) in &self.fixed_slots {
            vals[slot as usize] += v;
        }
        self.n_factorizations += 1;
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), self.mat.as_ref()).map_err(
            |e| {
                Error::Solve(format!(
                    "saddle factorization failed ({} unknowns: {} velocity, {} pressure{}): {e:?}; \
                     the velocity block may be singular or the pressure space unstable",
                    self.n,
                    self.n_vel,
                    self.n_p,
                    if self.with_mean_constraint {
                        ", 1 multiplier"
                    } else {
                        ", no mean constraint"
                    }
                ))
            },
        )?;
        Ok(SaddleFactorization {
            lu,
            values: self.mat.val().to_vec(),
            n: self.n,
            n_vel: self.n_vel,
            n_p: self.n_p,
        })
    }

    /// Residual-checked solve. The factorization carries a snapshot of its
    /// matrix values, so the check stays valid after later refills of this
    /// system. Fails if the max-norm residual exceeds `tol * (1 + max|rhs|)`.
    pub fn solve_checked(
        &self,
        fact: &SaddleFactorization,
        rhs: &[f64],
        tol: f64,
    ) -> Result<Vec<f64>> {
        let x = fact.solve(rhs);
        let mut residual = rhs.to_vec();
        self.matvec_sub(&fact.values, &x, &mut residual);
        let rhs_inf = rhs.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let res_inf = residual.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if !res_inf.is_finite() || res_inf > tol * (1.0 + rhs_inf) {
            return Err(Error::Solve(format!(
                "saddle solve residual {res_inf:.3e} exceeds {:.3e} (rhs max {rhs_inf:.3e})",
                tol * (1.0 + rhs_inf)
            )));
        }
        Ok(x)
    }

    /// y -= A x for the shared pattern with the given values.
    fn matvec_sub(&self, vals: &[f64], x: &[f64], y: &mut [f64]) {
        let sym = self.mat.symbolic();
        for col in 0..self.n {
            let xc = x[col];
            if xc == 0.0 {
                continue;
            }
            for k in sym.col_ptr()[col]..sym.col_ptr()[col + 1] {
                y[sym.row_idx()[k]] -= vals[k] * xc;
            }
        }
    }
}

#[derive(Debug)]
pub struct SaddleFactorization {
    lu: Lu<usize, f64>,
    values: Vec<f64>,
    n: usize,
    n_vel: usize,
    n_p: usize,
}

impl SaddleFactorization {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let b = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Splits a solution vector into velocity, physical pressure (sign flipped
    /// from the symmetric form) and the multiplier value.
    pub fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let u = x[..self.n_vel].to_vec();
        let p: Vec<f64> = x[self.n_vel..self.n_vel + self.n_p]
            .iter()
            .map(|&q| -q)
            .collect();
        let l = if self.n > self.n_vel + self.n_p {
            x[self.n - 1]
        } else {
            0.0
        };
        (u, p, l)
    }
}
