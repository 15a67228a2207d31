//! Backward Euler time stepping for the discrete Navier-Stokes system, with
//! Newton linearization of the implicit convection term, a Picard fallback,
//! and a linear Stokes stepper used by the second level of the two-level
//! scheme.

use crate::assembly::DiscreteSystem;
use crate::femspace::{FieldPair, MixedSpace};
use crate::saddle::{SaddleFactorization, SaddleSystem, VelocityBlock};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

/// Absolute tolerance factor of the linear solve contract:
/// max-norm residual <= LINEAR_RESIDUAL_TOL * (1 + max|rhs|).
pub const LINEAR_RESIDUAL_TOL: f64 = 1e-10;
/// Max-norm bound enforced on the discrete divergence after every step.
pub const DIV_FREE_TOL: f64 = 1e-9;

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX_ITERS: usize = 25;

/// Uniform time grid on [0, t_final]. The requested step is rounded so that
/// an integer number of steps lands exactly on t_final.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub t_final: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub dt_adjusted: bool,
}

impl TimeGrid {
    pub fn new(t_final: f64, dt_request: f64) -> Result<Self> {
        if !t_final.is_finite() || t_final <= 0.0 {
            return Err(Error::Config(format!("t_final must be positive, got {t_final}")));
        }
        if !dt_request.is_finite() || dt_request <= 0.0 {
            return Err(Error::Config(format!("dt must be positive, got {dt_request}")));
        }
        let n_steps = (t_final / dt_request).round().max(1.0) as usize;
        let dt = t_final / n_steps as f64;
        let dt_adjusted = (dt - dt_request).abs() > 1e-12 * dt_request;
        Ok(Self {
            t_final,
            dt,
            n_steps,
            dt_adjusted,
        })
    }

    pub fn time_at(&self, step: usize) -> f64 {
        if step == self.n_steps {
            self.t_final
        } else {
            self.t_final * step as f64 / self.n_steps as f64
        }
    }
}

/// How the implicit convection term is resolved within each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearStrategy {
    /// Assembled-Jacobian Newton iteration with a Picard fallback.
    Newton,
    /// Defect correction against a single cached Stokes factorization: the
    /// convection term is lagged into the right side, so every iteration is
    /// one back-substitution. Contracts like dt * |grad u|, making it cheap
    /// for the small steps of a convergence study; escalates to Newton when
    /// contraction is poor. Converged states satisfy the same residual bound.
    StokesDefect,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub nu: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub strategy: NonlinearStrategy,
    pub picard_fallback: bool,
    /// Diagnostic hook: skip Newton and run the Picard iteration directly.
    pub force_picard: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iters: DEFAULT_NEWTON_MAX_ITERS,
            strategy: NonlinearStrategy::Newton,
            picard_fallback: true,
            force_picard: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub newton_iters: usize,
    pub picard_iters: usize,
    pub defect_iters: usize,
    pub factorizations: usize,
    pub residual_history: Vec<f64>,
    /// max|B u| after the step.
    pub div_inf: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub steps: usize,
    pub newton_iters: usize,
    pub picard_iters: usize,
    pub defect_iters: usize,
    pub factorizations: usize,
    pub max_div_inf: f64,
    pub max_boundary_velocity: f64,
    pub wall_seconds: f64,
}

impl RunStats {
    pub fn absorb_step(&mut self, rep: &StepReport) {
        self.steps += 1;
        self.newton_iters += rep.newton_iters;
        self.picard_iters += rep.picard_iters;
        self.defect_iters += rep.defect_iters;
        self.factorizations += rep.factorizations;
        self.max_div_inf = self.max_div_inf.max(rep.div_inf);
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Constrained L2 projection onto the discretely divergence-free subspace:
/// solves the mass-matrix saddle system with the analytic field as data.
pub fn project_initial_data<F: Fn([f64; 2]) -> [f64; 2]>(
    system: &DiscreteSystem,
    saddle: &mut SaddleSystem,
    u0: F,
) -> Result<FieldPair> {
    let space = system.space();
    let ns = space.n_scalar();
    let load = system.assemble_load(&|x, _| u0(x), 0.0);
    let mut rhs = vec![0.0; saddle.n_total()];
    for i in 0..2 * ns {
        if !space.is_dirichlet_scalar(i % ns) {
            rhs[i] = load[i];
        }
    }
    let fact = saddle.factorize(
        system,
        VelocityBlock {
            mass_coeff: 1.0,
            stiffness_coeff: 0.0,
        },
        None,
    )?;
    let sol = saddle.solve_checked(&fact, &rhs, LINEAR_RESIDUAL_TOL)?;
    let (mut u, _, _) = fact.split(&sol);
    for i in 0..2 * ns {
        if space.is_dirichlet_scalar(i % ns) {
            u[i] = 0.0;
        }
    }
    let div_inf = inf_norm(&system.div_apply(&u));
    if div_inf > DIV_FREE_TOL {
        return Err(Error::Solve(format!(
            "projected initial data violates the divergence constraint: max|Bu| = {div_inf:.3e}"
        )));
    }
    let mut field = FieldPair::zeros(space.clone());
    field.velocity = u;
    Ok(field)
}

/// One-level fully implicit stepper.
pub struct GalerkinStepper {
    system: DiscreteSystem,
    saddle: SaddleSystem,
    config: SolverConfig,
    dt: f64,
    jac: CsrMatrix,
    stokes_fact: Option<SaddleFactorization>,
}

impl GalerkinStepper {
    pub fn new(space: Arc<MixedSpace>, config: SolverConfig, dt: f64) -> Result<Self> {
        let system = DiscreteSystem::assemble(space)?;
        let saddle = SaddleSystem::new(&system)?;
        let jac = system.convection_jacobian_pattern().clone();
        Ok(Self {
            system,
            saddle,
            config,
            dt,
            jac,
            stokes_fact: None,
        })
    }

    pub fn system(&self) -> &DiscreteSystem {
        &self.system
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn project(&mut self, u0: impl Fn([f64; 2]) -> [f64; 2]) -> Result<FieldPair> {
        project_initial_data(&self.system, &mut self.saddle, u0)
    }

    /// Nonlinear residual of the backward Euler step equations; `g` is the
    /// combined right side `load + M u_old / dt`. Layout: velocity rows
    /// (Dirichlet rows replaced by the boundary values themselves), divergence
    /// rows, mean constraint row.
    fn residual_into(&self, u: &[f64], q: &[f64], g: &[f64], out: &mut [f64]) {
        let space = self.system.space();
        let ns = space.n_scalar();
        let nv = 2 * ns;
        let alpha = 1.0 / self.dt;
        let ru = &mut out[..nv];
        ru.fill(0.0);
        self.system.mass_matvec_add(alpha, u, ru);
        self.system.stiffness_matvec_add(self.config.nu, u, ru);
        let conv = self.system.convection_apply(u, u);
        for (r, (c, gi)) in ru.iter_mut().zip(conv.iter().zip(g)) {
            *r += c - gi;
        }
        self.system.div_transpose_add(1.0, q, ru);
        for i in 0..nv {
            if space.is_dirichlet_scalar(i % ns) {
                ru[i] = u[i];
            }
        }
        let div = self.system.div_apply(u);
        out[nv..nv + div.len()].copy_from_slice(&div);
        let mean: f64 = self
            .system
            .pressure_mean
            .iter()
            .zip(q)
            .map(|(&w, &qi)| w * qi)
            .sum();
        out[nv + div.len()] = mean;
    }

    /// Advances one backward Euler step; `load` is the assembled forcing at
    /// the new time level. Returns the new state.
    pub fn step(&mut self, state: &FieldPair, load: &[f64]) -> Result<(FieldPair, StepReport)> {
        let space = self.system.space().clone();
        let alpha = 1.0 / self.dt;
        let mut g = load.to_vec();
        self.system.mass_matvec_add(alpha, &state.velocity, &mut g);
        let scale = 1.0 + norm2(&g);

        let mut u = state.velocity.clone();
        let mut q: Vec<f64> = state.pressure.iter().map(|p| -p).collect();
        let mut report = StepReport::default();

        let mut converged = false;
        if self.config.strategy == NonlinearStrategy::StokesDefect && !self.config.force_picard {
            converged = self.defect_iterate(state, &mut u, &mut q, &g, scale, &mut report)?;
        }
        if !converged {
            self.newton_iterate(state, &mut u, &mut q, &g, scale, &mut report)?;
        }

        let mut next = FieldPair::zeros(space);
        next.velocity = u;
        next.pressure = q.iter().map(|&v| -v).collect();
        next.remove_pressure_mean(&self.system.pressure_mean);
        report.div_inf = inf_norm(&self.system.div_apply(&next.velocity));
        if report.div_inf > DIV_FREE_TOL {
            return Err(Error::Solve(format!(
                "discrete divergence audit failed after step: max|Bu| = {:.3e}",
                report.div_inf
            )));
        }
        Ok((next, report))
    }

    /// Lagged-convection fixed point: solve the constant Stokes operator with
    /// `g - N(u_k, u_k)` on the right, reusing one factorization for the whole
    /// run. Returns false (iterate left as a warm start, or reset to the
    /// previous level on divergence) when Newton should take over.
    fn defect_iterate(
        &mut self,
        state: &FieldPair,
        u: &mut [f64],
        q: &mut [f64],
        g: &[f64],
        scale: f64,
        report: &mut StepReport,
    ) -> Result<bool> {
        let space = self.system.space().clone();
        let ns = space.n_scalar();
        let nv = 2 * ns;
        let n = self.saddle.n_total();
        if self.stokes_fact.is_none() {
            let fact = self.saddle.factorize(
                &self.system,
                VelocityBlock {
                    mass_coeff: 1.0 / self.dt,
                    stiffness_coeff: self.config.nu,
                },
                None,
            )?;
            report.factorizations += 1;
            self.stokes_fact = Some(fact);
        }
        let fact = self.stokes_fact.as_ref().unwrap();
        let budget = self.config.newton_max_iters.max(8);
        let mut res = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        loop {
            self.residual_into(u, q, g, &mut res);
            let rn = norm2(&res);
            let prev = report.residual_history.last().copied();
            report.residual_history.push(rn);
            if rn.is_finite() && rn <= self.config.newton_tol * scale {
                return Ok(true);
            }
            if let Some(p) = prev {
                if !rn.is_finite() || rn > p {
                    // diverging: restart Newton from the previous time level
                    u.copy_from_slice(&state.velocity);
                    for (qi, &pv) in q.iter_mut().zip(&state.pressure) {
                        *qi = -pv;
                    }
                    return Ok(false);
                }
                if rn > 0.5 * p || report.defect_iters >= budget {
                    // contraction too slow for the cheap iteration to pay off
                    return Ok(false);
                }
            }
            let conv = self.system.convection_apply(u, u);
            rhs.fill(0.0);
            for i in 0..nv {
                if !space.is_dirichlet_scalar(i % ns) {
                    rhs[i] = g[i] - conv[i];
                }
            }
            let sol = self.saddle.solve_checked(fact, &rhs, LINEAR_RESIDUAL_TOL)?;
            u.copy_from_slice(&sol[..nv]);
            q.copy_from_slice(&sol[nv..nv + space.n_pressure()]);
            for i in 0..nv {
                if space.is_dirichlet_scalar(i % ns) {
                    u[i] = 0.0;
                }
            }
            report.defect_iters += 1;
        }
    }

    fn newton_iterate(
        &mut self,
        state: &FieldPair,
        u: &mut [f64],
        q: &mut [f64],
        g: &[f64],
        scale: f64,
        report: &mut StepReport,
    ) -> Result<()> {
        let space = self.system.space().clone();
        let ns = space.n_scalar();
        let nv = 2 * ns;
        let n = self.saddle.n_total();
        let block = VelocityBlock {
            mass_coeff: 1.0 / self.dt,
            stiffness_coeff: self.config.nu,
        };
        let mut res = vec![0.0; n];
        let mut mode_picard = self.config.force_picard;
        let mut increases = 0usize;
        let mut last: Option<f64> = None;
        loop {
            self.residual_into(u, q, g, &mut res);
            let rn = norm2(&res);
            if let Some(prev) = last {
                if !rn.is_finite() || rn > prev {
                    increases += 1;
                } else {
                    increases = 0;
                }
            }
            last = Some(rn);
            report.residual_history.push(rn);
            if rn.is_finite() && rn <= self.config.newton_tol * scale {
                return Ok(());
            }
            let iters = report.newton_iters + report.picard_iters;
            if iters >= self.config.newton_max_iters {
                return Err(Error::Solve(format!(
                    "nonlinear iteration did not converge in {} iterations \
                     (newton {}, picard {}); residual history: {:?}",
                    self.config.newton_max_iters,
                    report.newton_iters,
                    report.picard_iters,
                    report.residual_history
                )));
            }
            if !mode_picard && (increases >= 2 || !rn.is_finite()) {
                if !self.config.picard_fallback {
                    return Err(Error::Solve(format!(
                        "newton iteration diverged and the picard fallback is disabled; \
                         residual history: {:?}",
                        report.residual_history
                    )));
                }
                // restart from the previous time level with the lagged iteration
                mode_picard = true;
                increases = 0;
                u.copy_from_slice(&state.velocity);
                for (qi, &p) in q.iter_mut().zip(&state.pressure) {
                    *qi = -p;
                }
                self.residual_into(u, q, g, &mut res);
                let rn = norm2(&res);
                last = Some(rn);
                report.residual_history.push(rn);
            }

            if mode_picard {
                // fixed-point step: (M/dt + nu A + C(u_k)) u + B^T q = g
                self.system.convection_picard_into(u, &mut self.jac);
                let fact = self.saddle.factorize(&self.system, block, Some(&self.jac))?;
                report.factorizations += 1;
                let mut rhs = vec![0.0; n];
                for i in 0..nv {
                    if !space.is_dirichlet_scalar(i % ns) {
                        rhs[i] = g[i];
                    }
                }
                let sol = self.saddle.solve_checked(&fact, &rhs, LINEAR_RESIDUAL_TOL)?;
                u.copy_from_slice(&sol[..nv]);
                q.copy_from_slice(&sol[nv..nv + space.n_pressure()]);
                report.picard_iters += 1;
            } else {
                self.system.convection_jacobian_into(u, &mut self.jac);
                let fact = self.saddle.factorize(&self.system, block, Some(&self.jac))?;
                report.factorizations += 1;
                let neg: Vec<f64> = res.iter().map(|r| -r).collect();
                let delta = self.saddle.solve_checked(&fact, &neg, LINEAR_RESIDUAL_TOL)?;
                for (ui, di) in u.iter_mut().zip(&delta[..nv]) {
                    *ui += di;
                }
                for (qi, di) in q.iter_mut().zip(&delta[nv..nv + space.n_pressure()]) {
                    *qi += di;
                }
                report.newton_iters += 1;
            }
            for i in 0..nv {
                if space.is_dirichlet_scalar(i % ns) {
                    u[i] = 0.0;
                }
            }
        }
    }
}

/// Linear Stokes stepper with a single factorization of `M/dt + nu A`, used
/// for the frozen-convection second level. `step` performs no nonlinear work.
pub struct StokesStepper {
    system: DiscreteSystem,
    saddle: SaddleSystem,
    fact: SaddleFactorization,
    dt: f64,
}

impl StokesStepper {
    pub fn new(system: DiscreteSystem, mut saddle: SaddleSystem, nu: f64, dt: f64) -> Result<Self> {
        let fact = saddle.factorize(
            &system,
            VelocityBlock {
                mass_coeff: 1.0 / dt,
                stiffness_coeff: nu,
            },
            None,
        )?;
        Ok(Self {
            system,
            saddle,
            fact,
            dt,
        })
    }

    pub fn system(&self) -> &DiscreteSystem {
        &self.system
    }

    /// One backward Euler Stokes step with an optional frozen convection
    /// vector subtracted from the load.
    pub fn step(
        &self,
        state: &FieldPair,
        load: &[f64],
        frozen_convection: Option<&[f64]>,
    ) -> Result<(FieldPair, StepReport)> {
        let space = self.system.space().clone();
        let ns = space.n_scalar();
        let nv = 2 * ns;
        let mut g = load.to_vec();
        self.system.mass_matvec_add(1.0 / self.dt, &state.velocity, &mut g);
        if let Some(f) = frozen_convection {
            for (gi, fi) in g.iter_mut().zip(f) {
                *gi -= fi;
            }
        }
        let mut rhs = vec![0.0; self.saddle.n_total()];
        for i in 0..nv {
            if !space.is_dirichlet_scalar(i % ns) {
                rhs[i] = g[i];
            }
        }
        let sol = self.saddle.solve_checked(&self.fact, &rhs, LINEAR_RESIDUAL_TOL)?;
        let (mut u, p, _) = self.fact.split(&sol);
        for i in 0..nv {
            if space.is_dirichlet_scalar(i % ns) {
                u[i] = 0.0;
            }
        }
        let mut next = FieldPair::zeros(space);
        next.velocity = u;
        next.pressure = p;
        next.remove_pressure_mean(&self.system.pressure_mean);
        let report = StepReport {
            div_inf: inf_norm(&self.system.div_apply(&next.velocity)),
            ..Default::default()
        };
        if report.div_inf > DIV_FREE_TOL {
            return Err(Error::Solve(format!(
                "discrete divergence audit failed after Stokes step: max|Bu| = {:.3e}",
                report.div_inf
            )));
        }
        Ok((next, report))
    }
}

#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub time: f64,
    pub field: FieldPair,
}

#[derive(Debug)]
pub struct OneLevelRun {
    pub samples: Vec<TrajectorySample>,
    pub final_state: FieldPair,
    pub stats: RunStats,
}

/// Matches each requested sample time to a grid node; errors if one is not on
/// the grid.
pub fn sample_steps(grid: &TimeGrid, sample_times: &[f64]) -> Result<Vec<usize>> {
    let mut steps = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        let k = (t / grid.dt).round();
        let on_grid = k >= 0.0
            && k <= grid.n_steps as f64
            && (t - k * grid.dt).abs() <= 1e-9 * grid.t_final.max(1.0);
        if !on_grid {
            return Err(Error::Config(format!(
                "sample time {t} does not lie on the time grid (dt = {}, {} steps)",
                grid.dt, grid.n_steps
            )));
        }
        steps.push(k as usize);
    }
    Ok(steps)
}

/// Runs the one-level Galerkin scheme over the grid, capturing snapshots at
/// the requested sample times (which must be grid nodes).
pub fn run_one_level(
    stepper: &mut GalerkinStepper,
    u0: FieldPair,
    load: &dyn Fn(f64) -> Vec<f64>,
    grid: &TimeGrid,
    sample_times: &[f64],
) -> Result<OneLevelRun> {
    let steps = sample_steps(grid, sample_times)?;
    let start = Instant::now();
    let mut stats = RunStats::default();
    let mut samples = Vec::new();
    let mut state = u0;
    if let Some(pos) = steps.iter().position(|&k| k == 0) {
        samples.push(TrajectorySample {
            time: sample_times[pos],
            field: state.clone(),
        });
    }
    for k in 1..=grid.n_steps {
        let t = grid.time_at(k);
        let l = load(t);
        let (next, rep) = stepper.step(&state, &l)?;
        state = next;
        stats.absorb_step(&rep);
        stats.max_boundary_velocity = stats
            .max_boundary_velocity
            .max(state.boundary_velocity_max());
        if let Some(pos) = steps.iter().position(|&s| s == k) {
            samples.push(TrajectorySample {
                time: sample_times[pos],
                field: state.clone(),
            });
        }
    }
    stats.wall_seconds = start.elapsed().as_secs_f64();
    Ok(OneLevelRun {
        samples,
        final_state: state,
        stats,
    })
}

/// Writes a snapshot in the node-value text format: a `field t N` header, then
/// one value per line (x-velocity block, y-velocity block, pressure).
pub fn write_field<W: Write>(field: &FieldPair, time: f64, w: &mut W) -> std::io::Result<()> {
    let n = field.velocity.len() + field.pressure.len();
    writeln!(w, "field {time} {n}")?;
    for v in field.velocity.iter().chain(&field.pressure) {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femspace::ElementPair;
    use crate::mesh::build_structured_mesh;

    fn smooth_u0(x: [f64; 2]) -> [f64; 2] {
        let pi = std::f64::consts::PI;
        let sx = (pi * x[0]).sin();
        let sy = (pi * x[1]).sin();
        [
            pi * sx * sx * (2.0 * pi * x[1]).sin(),
            -pi * (2.0 * pi * x[0]).sin() * sy * sy,
        ]
    }

    fn mini_space(n: usize) -> Arc<MixedSpace> {
        let mesh = Arc::new(build_structured_mesh(n).unwrap());
        MixedSpace::new(mesh, ElementPair::Mini).unwrap()
    }

    #[test]
    fn time_grid_rounding() {
        let g = TimeGrid::new(1.0, 0.3).unwrap();
        assert_eq!(g.n_steps, 3);
        assert!(g.dt_adjusted);
        assert!((g.dt - 1.0 / 3.0).abs() < 1e-15);
        let g2 = TimeGrid::new(1.0, 0.25).unwrap();
        assert_eq!(g2.n_steps, 4);
        assert!(!g2.dt_adjusted);
        assert_eq!(g2.time_at(4), 1.0);
        assert!(TimeGrid::new(1.0, -0.1).is_err());
        assert!(TimeGrid::new(0.0, 0.1).is_err());
    }

    #[test]
    fn sample_alignment() {
        let g = TimeGrid::new(1.0, 0.25).unwrap();
        assert_eq!(sample_steps(&g, &[0.0, 0.5, 1.0]).unwrap(), vec![0, 2, 4]);
        assert!(sample_steps(&g, &[0.3]).is_err());
    }

    #[test]
    fn projection_is_divergence_free_and_zero_on_boundary() {
        let mut stepper =
            GalerkinStepper::new(mini_space(4), SolverConfig::default(), 0.01).unwrap();
        let u0 = stepper.project(smooth_u0).unwrap();
        assert!(inf_norm(&stepper.system().div_apply(&u0.velocity)) <= 1e-9);
        assert_eq!(u0.boundary_velocity_max(), 0.0);
        // projection of an L2-normalized-ish field keeps a comparable norm
        let norm = stepper.system().velocity_mass_norm(&u0.velocity);
        assert!(norm > 0.5 && norm < 5.0, "projection norm {norm}");
    }

    #[test]
    fn steady_discrete_state_is_a_fixed_point() {
        let mut stepper =
            GalerkinStepper::new(mini_space(3), SolverConfig::default(), 0.1).unwrap();
        let star = stepper.project(smooth_u0).unwrap();
        // forcing that makes `star` stationary: F = nu A u* + N(u*, u*)
        let mut load = vec![0.0; stepper.system().space().n_velocity()];
        stepper
            .system()
            .stiffness_matvec_add(stepper.config().nu, &star.velocity, &mut load);
        let conv = stepper.system().convection_apply(&star.velocity, &star.velocity);
        for (l, c) in load.iter_mut().zip(&conv) {
            *l += c;
        }
        let (next, rep) = stepper.step(&star, &load).unwrap();
        let diff = inf_norm(
            &next
                .velocity
                .iter()
                .zip(&star.velocity)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        assert!(diff <= 1e-9, "fixed point drifted by {diff}");
        assert!(rep.newton_iters <= 1);
    }

    #[test]
    fn energy_dissipates_without_forcing() {
        let mut stepper =
            GalerkinStepper::new(mini_space(4), SolverConfig::default(), 0.05).unwrap();
        let mut state = stepper.project(smooth_u0).unwrap();
        let zero = vec![0.0; stepper.system().space().n_velocity()];
        let mut prev = stepper.system().velocity_mass_norm(&state.velocity);
        for _ in 0..10 {
            let (next, rep) = stepper.step(&state, &zero).unwrap();
            state = next;
            let norm = stepper.system().velocity_mass_norm(&state.velocity);
            assert!(
                norm <= prev + 1e-12,
                "energy grew from {prev} to {norm} without forcing"
            );
            assert!(rep.div_inf <= 1e-9);
            prev = norm;
        }
    }

    #[test]
    fn newton_converges_fast_and_monotonically() {
        let config = SolverConfig {
            nu: 0.1,
            ..Default::default()
        };
        let mut stepper = GalerkinStepper::new(mini_space(4), config, 0.5).unwrap();
        let state = stepper.project(smooth_u0).unwrap();
        let zero = vec![0.0; stepper.system().space().n_velocity()];
        let (_, rep) = stepper.step(&state, &zero).unwrap();
        assert!(rep.newton_iters <= 6, "{} iterations", rep.newton_iters);
        assert!(rep.picard_iters == 0);
        for pair in rep.residual_history.windows(2) {
            assert!(pair[1] < pair[0], "history {:?}", rep.residual_history);
        }
    }

    #[test]
    fn picard_and_newton_agree() {
        let newton_cfg = SolverConfig {
            nu: 0.5,
            ..Default::default()
        };
        let picard_cfg = SolverConfig {
            nu: 0.5,
            force_picard: true,
            ..Default::default()
        };
        let mut a = GalerkinStepper::new(mini_space(3), newton_cfg, 0.1).unwrap();
        let mut b = GalerkinStepper::new(mini_space(3), picard_cfg, 0.1).unwrap();
        let u0 = a.project(smooth_u0).unwrap();
        let zero = vec![0.0; a.system().space().n_velocity()];
        let (ua, ra) = a.step(&u0, &zero).unwrap();
        let (ub, rb) = b.step(&u0, &zero).unwrap();
        assert!(ra.picard_iters == 0 && ra.newton_iters > 0);
        assert!(rb.picard_iters > 0 && rb.newton_iters == 0);
        let diff: Vec<f64> = ua
            .velocity
            .iter()
            .zip(&ub.velocity)
            .map(|(x, y)| x - y)
            .collect();
        assert!(inf_norm(&diff) < 1e-8, "methods disagree by {}", inf_norm(&diff));
    }

    #[test]
    fn defect_strategy_matches_newton() {
        let newton_cfg = SolverConfig {
            nu: 0.5,
            ..Default::default()
        };
        let defect_cfg = SolverConfig {
            nu: 0.5,
            strategy: NonlinearStrategy::StokesDefect,
            ..Default::default()
        };
        let mut a = GalerkinStepper::new(mini_space(4), newton_cfg, 0.01).unwrap();
        let mut b = GalerkinStepper::new(mini_space(4), defect_cfg, 0.01).unwrap();
        let u0 = a.project(smooth_u0).unwrap();
        let nvel = a.system().space().n_velocity();
        let grid = TimeGrid::new(0.05, 0.01).unwrap();
        let load = move |_t: f64| vec![0.0; nvel];
        let ra = run_one_level(&mut a, u0.clone(), &load, &grid, &[]).unwrap();
        let rb = run_one_level(&mut b, u0, &load, &grid, &[]).unwrap();
        assert!(rb.stats.defect_iters > 0);
        assert_eq!(rb.stats.newton_iters, 0, "defect iteration escalated");
        assert_eq!(rb.stats.factorizations, 1, "cached factorization not reused");
        let diff: Vec<f64> = ra
            .final_state
            .velocity
            .iter()
            .zip(&rb.final_state.velocity)
            .map(|(x, y)| x - y)
            .collect();
        assert!(inf_norm(&diff) < 1e-8, "strategies disagree by {}", inf_norm(&diff));
    }

    #[test]
    fn defect_strategy_escalates_on_large_steps() {
        let cfg = SolverConfig {
            nu: 0.05,
            strategy: NonlinearStrategy::StokesDefect,
            ..Default::default()
        };
        let mut stepper = GalerkinStepper::new(mini_space(4), cfg, 1.0).unwrap();
        let state = stepper.project(smooth_u0).unwrap();
        let zero = vec![0.0; stepper.system().space().n_velocity()];
        let (next, rep) = stepper.step(&state, &zero).unwrap();
        assert!(rep.newton_iters > 0, "expected escalation, got {rep:?}");
        assert!(rep.div_inf <= 1e-9);
        assert!(next.velocity.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn stokes_stepper_keeps_steady_state() {
        let space = mini_space(3);
        let system = DiscreteSystem::assemble(space.clone()).unwrap();
        let mut saddle = SaddleSystem::new(&system).unwrap();
        let star = project_initial_data(&system, &mut saddle, smooth_u0).unwrap();
        let nu = 0.7;
        let mut load = vec![0.0; system.space().n_velocity()];
        system.stiffness_matvec_add(nu, &star.velocity, &mut load);
        let stokes = StokesStepper::new(system, saddle, nu, 0.25).unwrap();
        let (next, rep) = stokes.step(&star, &load, None).unwrap();
        let diff: Vec<f64> = next
            .velocity
            .iter()
            .zip(&star.velocity)
            .map(|(a, b)| a - b)
            .collect();
        assert!(inf_norm(&diff) <= 1e-9);
        assert_eq!(rep.newton_iters, 0);
        assert_eq!(rep.factorizations, 0);
    }

    #[test]
    fn pressure_mean_is_zero_after_steps() {
        let mut stepper =
            GalerkinStepper::new(mini_space(3), SolverConfig::default(), 0.1).unwrap();
        let state = stepper.project(smooth_u0).unwrap();
        let zero = vec![0.0; stepper.system().space().n_velocity()];
        let (next, _) = stepper.step(&state, &zero).unwrap();
        let mean: f64 = stepper
            .system()
            .pressure_mean
            .iter()
            .zip(&next.pressure)
            .map(|(&w, &p)| w * p)
            .sum();
        assert!(mean.abs() <= 1e-12, "pressure mean {mean}");
    }

    #[test]
    fn run_one_level_samples_and_stats() {
        let mut stepper =
            GalerkinStepper::new(mini_space(3), SolverConfig::default(), 0.125).unwrap();
        let u0 = stepper.project(smooth_u0).unwrap();
        let nvel = stepper.system().space().n_velocity();
        let grid = TimeGrid::new(0.5, 0.125).unwrap();
        let load = move |_t: f64| vec![0.0; nvel];
        let run = run_one_level(&mut stepper, u0, &load, &grid, &[0.0, 0.25, 0.5]).unwrap();
        assert_eq!(run.samples.len(), 3);
        assert_eq!(run.samples[0].time, 0.0);
        assert_eq!(run.samples[2].time, 0.5);
        assert_eq!(run.stats.steps, 4);
        assert!(run.stats.max_div_inf <= 1e-9);
        assert_eq!(run.stats.max_boundary_velocity, 0.0);
        assert!(run.stats.factorizations >= run.stats.steps);
    }

    #[test]
    fn field_dump_format() {
        let space = mini_space(1);
        let f = FieldPair::zeros(space);
        let mut buf = Vec::new();
        write_field(&f, 0.5, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "field 0.5 16");
        assert_eq!(lines.count(), 16);
    }
}
