//! Manufactured solutions, discretization error norms, and convergence-rate
//! bookkeeping. The smooth fixture carries a closed form in space and time, so
//! the forcing that makes it an exact solution is synthesized from its
//! derivatives. The rough fixture only provides initial data of limited
//! regularity; runs against it measure self-convergence, with error weights
//! that absorb the initial-layer singularity.

use crate::assembly::DiscreteSystem;
use crate::femspace::{prolong, FieldPair};
use crate::mesh::MeshHierarchy;
use crate::quadrature::triangle_rule;
use crate::{Error, Result};
use std::f64::consts::PI;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularity {
    /// Closed-form solution, smooth in space and time.
    Smooth,
    /// Initial data in H1 only (up to a controlled H2 blowup of the
    /// truncated series); no closed form for t > 0.
    H1Only,
}

type VecField = Box<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;
type MatField = Box<dyn Fn([f64; 2], f64) -> [[f64; 2]; 2] + Send + Sync>;
type ScalField = Box<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Space-time closed form with enough derivatives to synthesize the forcing.
pub struct ClosedForm {
    pub velocity: VecField,
    /// gradient[c][d] = d u_c / d x_d
    pub velocity_gradient: MatField,
    pub velocity_time: VecField,
    pub velocity_laplacian: VecField,
    pub pressure: ScalField,
    pub pressure_gradient: VecField,
}

pub struct ExactSolution {
    pub name: &'static str,
    pub regularity: Regularity,
    initial: Box<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>,
    closed: Option<ClosedForm>,
}

impl ExactSolution {
    pub fn initial_velocity(&self, x: [f64; 2]) -> [f64; 2] {
        (self.initial)(x)
    }

    pub fn closed_form(&self) -> Result<&ClosedForm> {
        self.closed.as_ref().ok_or_else(|| {
            Error::Verification(format!(
                "solution '{}' has no closed form ({:?} regularity); \
                 exact errors are only defined for smooth fixtures",
                self.name, self.regularity
            ))
        })
    }

    /// Forcing f = u_t + (u . grad) u - nu lap u + grad p for the given
    /// viscosity; zero when the run is driven by initial data alone.
    pub fn forcing(&self, nu: f64) -> impl Fn([f64; 2], f64) -> [f64; 2] + '_ {
        move |x, t| match &self.closed {
            None => [0.0, 0.0],
            Some(cf) => {
                let u = (cf.velocity)(x, t);
                let grad = (cf.velocity_gradient)(x, t);
                let ut = (cf.velocity_time)(x, t);
                let lap = (cf.velocity_laplacian)(x, t);
                let gp = (cf.pressure_gradient)(x, t);
                let mut f = [0.0; 2];
                for c in 0..2 {
                    let adv = u[0] * grad[c][0] + u[1] * grad[c][1];
                    f[c] = ut[c] + adv - nu * lap[c] + gp[c];
                }
                f
            }
        }
    }
}

/// Smooth fixture: stream function psi = sin^2(pi x) sin^2(pi y) g(t) with
/// g(t) = 1 + sin(t) / 2, pressure (x - 1/2)(y - 1/2) g(t). The velocity is
/// the curl of psi, so it is pointwise divergence free and vanishes on the
/// boundary of the unit square.
pub fn smooth_solution() -> ExactSolution {
    fn g(t: f64) -> f64 {
        1.0 + 0.5 * t.sin()
    }
    fn gp(t: f64) -> f64 {
        0.5 * t.cos()
    }
    fn shape(x: [f64; 2]) -> [f64; 2] {
        let sx = (PI * x[0]).sin();
        let sy = (PI * x[1]).sin();
        [
            PI * sx * sx * (2.0 * PI * x[1]).sin(),
            -PI * (2.0 * PI * x[0]).sin() * sy * sy,
        ]
    }
    let velocity: VecField = Box::new(move |x, t| {
        let s = shape(x);
        [s[0] * g(t), s[1] * g(t)]
    });
    let velocity_time: VecField = Box::new(move |x, t| {
        let s = shape(x);
        [s[0] * gp(t), s[1] * gp(t)]
    });
    let velocity_gradient: MatField = Box::new(move |x, t| {
        let (s2x, c2x) = (2.0 * PI * x[0]).sin_cos();
        let (s2y, c2y) = (2.0 * PI * x[1]).sin_cos();
        let sx2 = (PI * x[0]).sin().powi(2);
        let sy2 = (PI * x[1]).sin().powi(2);
        let p2 = PI * PI;
        [
            [p2 * s2x * s2y * g(t), 2.0 * p2 * sx2 * c2y * g(t)],
            [-2.0 * p2 * c2x * sy2 * g(t), -p2 * s2x * s2y * g(t)],
        ]
    });
    let velocity_laplacian: VecField = Box::new(move |x, t| {
        let c2x = (2.0 * PI * x[0]).cos();
        let c2y = (2.0 * PI * x[1]).cos();
        let p3 = PI * PI * PI;
        [
            2.0 * p3 * (2.0 * PI * x[1]).sin() * (2.0 * c2x - 1.0) * g(t),
            -2.0 * p3 * (2.0 * PI * x[0]).sin() * (2.0 * c2y - 1.0) * g(t),
        ]
    });
    let pressure: ScalField = Box::new(move |x, t| (x[0] - 0.5) * (x[1] - 0.5) * g(t));
    let pressure_gradient: VecField =
        Box::new(move |x, t| [(x[1] - 0.5) * g(t), (x[0] - 0.5) * g(t)]);
    ExactSolution {
        name: "smooth",
        regularity: Regularity::Smooth,
        initial: Box::new(move |x| shape(x)),
        closed: Some(ClosedForm {
            velocity,
            velocity_gradient,
            velocity_time,
            velocity_laplacian,
            pressure,
            pressure_gradient,
        }),
    }
}

pub const ROUGH_AMPLITUDE: f64 = 0.1;
pub const ROUGH_DECAY: f64 = 2.5;
pub const ROUGH_MODES: usize = 64;

/// Rough initial data: the curl of
/// psi0 = amp * sum_k k^{-2.5} sin^2(k pi x) sin^2(k pi y), k = 1..=modes.
/// Each mode is divergence free and vanishes on the boundary. The coefficient
/// decay keeps the H1 seminorm summable while the H2 seminorm of the
/// truncation grows without bound, mimicking data that is H1 but not H2.
pub fn rough_initial_velocity(modes: usize, x: [f64; 2]) -> [f64; 2] {
    let mut u = [0.0; 2];
    for k in 1..=modes {
        let kf = k as f64;
        let a = ROUGH_AMPLITUDE * kf.powf(-ROUGH_DECAY) * kf * PI;
        let sx2 = (kf * PI * x[0]).sin().powi(2);
        let sy2 = (kf * PI * x[1]).sin().powi(2);
        u[0] += a * sx2 * (2.0 * kf * PI * x[1]).sin();
        u[1] -= a * (2.0 * kf * PI * x[0]).sin() * sy2;
    }
    u
}

/// Squared H2 seminorm of the truncated rough data. Modes are orthogonal in
/// every second-derivative component, so the sum closes to
/// 12 amp^2 pi^6 sum_k k^{6 - 2 * 2.5} = 12 amp^2 pi^6 K (K + 1) / 2.
pub fn rough_h2_seminorm_sq(modes: usize) -> f64 {
    let k = modes as f64;
    12.0 * ROUGH_AMPLITUDE * ROUGH_AMPLITUDE * PI.powi(6) * k * (k + 1.0) / 2.0
}

pub fn rough_solution() -> ExactSolution {
    ExactSolution {
        name: "rough",
        regularity: Regularity::H1Only,
        initial: Box::new(|x| rough_initial_velocity(ROUGH_MODES, x)),
        closed: None,
    }
}

/// Singular weight tau*(t) = min(t, 1): error bounds for non-smooth initial
/// data degrade like tau*^{-1/2} near t = 0, so weighted errors
/// sqrt(tau*) * e(t) are the quantities with uniform rates.
pub fn tau_star(t: f64) -> f64 {
    t.min(1.0)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorSample {
    pub velocity_l2: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
}

impl ErrorSample {
    pub fn weighted(&self, t: f64) -> ErrorSample {
        let w = tau_star(t).sqrt();
        ErrorSample {
            velocity_l2: w * self.velocity_l2,
            velocity_h1: w * self.velocity_h1,
            pressure_l2: w * self.pressure_l2,
        }
    }
}

/// Errors of a discrete field against the closed-form solution at time t:
/// velocity L2 and H1 seminorm, pressure L2. Uses a degree-5 rule on each
/// quarter of every element so the non-polynomial exact solution is resolved
/// well below the discretization error. The discrete pressure is shifted to
/// zero mean before differencing, so the comparison is gauge invariant.
pub fn compute_errors(
    system: &DiscreteSystem,
    field: &FieldPair,
    exact: &ExactSolution,
    t: f64,
) -> Result<ErrorSample> {
    let cf = exact.closed_form()?;
    let p_shift: f64 = system
        .pressure_mean
        .iter()
        .zip(&field.pressure)
        .map(|(&w, &p)| w * p)
        .sum();
    let space = system.space();
    let mesh = space.mesh();
    let rule = triangle_rule(5)?;
    // barycentric vertices of the four red sub-triangles
    let sub: [[[f64; 3]; 3]; 4] = [
        [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
        [[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]],
        [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]],
        [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    ];
    let mut e_l2 = 0.0;
    let mut e_h1 = 0.0;
    let mut e_p = 0.0;
    for tri in 0..mesh.n_triangles() {
        let coords = mesh.triangle_coords(tri);
        let area4 = space.element_area(tri) / 4.0;
        for s in &sub {
            for (qp, &w) in rule.points.iter().zip(&rule.weights) {
                let mut lambda = [0.0; 3];
                for v in 0..3 {
                    for c in 0..3 {
                        lambda[c] += qp[v] * s[v][c];
                    }
                }
                let x = [
                    lambda[0] * coords[0][0] + lambda[1] * coords[1][0] + lambda[2] * coords[2][0],
                    lambda[0] * coords[0][1] + lambda[1] * coords[1][1] + lambda[2] * coords[2][1],
                ];
                let scale = 2.0 * area4 * w;
                let uh = field.velocity_at(tri, lambda);
                let gh = field.velocity_gradient_at(tri, lambda);
                let ph = field.pressure_at(tri, lambda) - p_shift;
                let ue = (cf.velocity)(x, t);
                let ge = (cf.velocity_gradient)(x, t);
                let pe = (cf.pressure)(x, t);
                let du = [uh[0] - ue[0], uh[1] - ue[1]];
                e_l2 += scale * (du[0] * du[0] + du[1] * du[1]);
                for c in 0..2 {
                    for d in 0..2 {
                        let dg = gh[c][d] - ge[c][d];
                        e_h1 += scale * dg * dg;
                    }
                }
                e_p += scale * (ph - pe) * (ph - pe);
            }
        }
    }
    Ok(ErrorSample {
        velocity_l2: e_l2.sqrt(),
        velocity_h1: e_h1.sqrt(),
        pressure_l2: e_p.sqrt(),
    })
}

/// Self-convergence errors: the coarse field is prolonged to the reference
/// space and the difference integrated there with a degree-6 rule, which is
/// exact for products of the basis functions involved.
pub fn compute_self_errors(
    coarse: &FieldPair,
    reference: &FieldPair,
    hierarchy: &MeshHierarchy,
) -> Result<ErrorSample> {
    let lifted = prolong(coarse, reference.space(), hierarchy)?;
    let space = reference.space();
    let mesh = space.mesh();
    let rule = triangle_rule(6)?;
    let mut e_l2 = 0.0;
    let mut e_h1 = 0.0;
    let mut e_p = 0.0;
    for tri in 0..mesh.n_triangles() {
        let area = space.element_area(tri);
        for (qp, &w) in rule.points.iter().zip(&rule.weights) {
            let lambda = [qp[0], qp[1], qp[2]];
            let scale = 2.0 * area * w;
            let ua = lifted.velocity_at(tri, lambda);
            let ub = reference.velocity_at(tri, lambda);
            let ga = lifted.velocity_gradient_at(tri, lambda);
            let gb = reference.velocity_gradient_at(tri, lambda);
            let pa = lifted.pressure_at(tri, lambda);
            let pb = reference.pressure_at(tri, lambda);
            let du = [ua[0] - ub[0], ua[1] - ub[1]];
            e_l2 += scale * (du[0] * du[0] + du[1] * du[1]);
            for c in 0..2 {
                for d in 0..2 {
                    let dg = ga[c][d] - gb[c][d];
                    e_h1 += scale * dg * dg;
                }
            }
            e_p += scale * (pa - pb) * (pa - pb);
        }
    }
    Ok(ErrorSample {
        velocity_l2: e_l2.sqrt(),
        velocity_h1: e_h1.sqrt(),
        pressure_l2: e_p.sqrt(),
    })
}

/// Observed orders ln(e_i / e_{i+1}) / ln(h_i / h_{i+1}) for consecutive
/// resolution pairs.
pub fn observed_orders(h: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    if h.len() != e.len() || h.len() < 2 {
        return Err(Error::Verification(format!(
            "need at least two matching (h, error) pairs, got {} and {}",
            h.len(),
            e.len()
        )));
    }
    for (&hi, &ei) in h.iter().zip(e) {
        if !(hi > 0.0) || !(ei > 0.0) || !hi.is_finite() || !ei.is_finite() {
            return Err(Error::Verification(format!(
                "orders need positive finite data, got h = {hi}, e = {ei}"
            )));
        }
    }
    Ok(h.windows(2)
        .zip(e.windows(2))
        .map(|(hw, ew)| (ew[0] / ew[1]).ln() / (hw[0] / hw[1]).ln())
        .collect())
}

/// Applies the singular weight to an error trace: e(t) * tau*(t)^power.
/// Used to check boundedness of t^{1/2}-weighted errors as t -> 0 in the
/// rough-data regime; t = 0 is excluded because the weight vanishes there.
pub fn weighted_error_trace(times: &[f64], errors: &[f64], power: f64) -> Result<Vec<f64>> {
    if times.len() != errors.len() {
        return Err(Error::Verification(format!(
            "trace length mismatch: {} times vs {} errors",
            times.len(),
            errors.len()
        )));
    }
    if let Some(&t) = times.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::Verification(format!(
            "weighted trace needs strictly positive times, got {t}"
        )));
    }
    Ok(times
        .iter()
        .zip(errors)
        .map(|(&t, &e)| e * tau_star(t).powf(power))
        .collect())
}

/// Single observed order for a whole study: least-squares slope of ln(e)
/// against ln(h), the usual summary estimator when more than two resolutions
/// are available.
pub fn fitted_order(h: &[f64], e: &[f64]) -> Result<f64> {
    observed_orders(h, e)?;
    let n = h.len() as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    Ok(num / den)
}

/// One row of a convergence table: errors of a run at one resolution and one
/// sample time. `coarse_h` is set for two-level rows.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub t: f64,
    pub h: f64,
    pub coarse_h: Option<f64>,
    pub errors: ErrorSample,
}

/// Writes rows in the fixed comma-separated layout used by all drivers; the
/// weighted columns repeat the errors scaled by sqrt(tau*).
pub fn write_error_table<W: Write>(rows: &[StudyRow], w: &mut W) -> std::io::Result<()> {
    writeln!(
        w,
        "t, h, H, err_u_L2, err_u_H1, err_p_L2, w_err_u_L2, w_err_u_H1, w_err_p_L2"
    )?;
    for row in rows {
        let wt = row.errors.weighted(row.t);
        writeln!(
            w,
            "{:.6e}, {:.6e}, {:.6e}, {:.12e}, {:.12e}, {:.12e}, {:.12e}, {:.12e}, {:.12e}",
            row.t,
            row.h,
            row.coarse_h.unwrap_or(row.h),
            row.errors.velocity_l2,
            row.errors.velocity_h1,
            row.errors.pressure_l2,
            wt.velocity_l2,
            wt.velocity_h1,
            wt.pressure_l2
        )?;
    }
    Ok(())
}
