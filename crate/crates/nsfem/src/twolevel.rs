//! Two-level driver: a nonlinear coarse-grid solve followed by a linear
//! fine-grid Stokes evolution in which the convection term is frozen at the
//! prolonged coarse velocity. Both levels march the same time grid, so the
//! coarse state at each fine time node is available without interpolation.

use crate::femspace::{prolong, ElementPair, FieldPair, MixedSpace};
use crate::mesh::{choose_fine_level_for_coupling, MeshHierarchy};
use crate::saddle::SaddleSystem;
use crate::stepper::{
    project_initial_data, run_one_level, sample_steps, GalerkinStepper, OneLevelRun, RunStats,
    SolverConfig, StokesStepper, TimeGrid, TrajectorySample,
};
use crate::assembly::DiscreteSystem;
use crate::{Error, Result};
use std::sync::Arc;
use std::time::Instant;

/// How the fine level is selected inside the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FineLevelRule {
    /// Smallest level with h <= sqrt(2) H^2, the coupling that balances the
    /// coarse-grid and fine-grid error contributions.
    HSquared,
    /// Fixed level index; level 0 is allowed as a degenerate self-consistency
    /// configuration where both phases use the coarse mesh.
    Explicit(usize),
}

#[derive(Debug, Clone)]
pub struct TwoLevelConfig {
    pub pair: ElementPair,
    pub solver: SolverConfig,
    pub fine_level_rule: FineLevelRule,
    /// Test hook: drop the frozen convection term so the second level reduces
    /// to a plain Stokes evolution.
    pub disable_fine_convection: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub coarse_seconds: f64,
    pub prolong_seconds: f64,
    pub fine_seconds: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.coarse_seconds + self.prolong_seconds + self.fine_seconds
    }
}

#[derive(Debug)]
pub struct TwoLevelRun {
    pub coarse_samples: Vec<TrajectorySample>,
    pub fine_samples: Vec<TrajectorySample>,
    pub fine_final: FieldPair,
    pub coarse_h: f64,
    pub fine_h: f64,
    pub fine_level: usize,
    pub coarse_stats: RunStats,
    pub fine_stats: RunStats,
    pub timings: PhaseTimings,
}

/// Runs the two-level scheme over the grid. The coarse phase is the full
/// nonlinear march retaining every step; the fine phase then performs one
/// linear Stokes solve per step, with the convection vector of the prolonged
/// coarse state on the right side and a single factorization for the run.
pub fn run_two_level(
    hierarchy: &MeshHierarchy,
    config: &TwoLevelConfig,
    u0: &dyn Fn([f64; 2]) -> [f64; 2],
    forcing: &dyn Fn([f64; 2], f64) -> [f64; 2],
    grid: &TimeGrid,
    sample_times: &[f64],
) -> Result<TwoLevelRun> {
    let coarse_mesh = hierarchy.level(0).clone();
    let coarse_h = coarse_mesh.mesh_size();
    let fine_level = match config.fine_level_rule {
        // the coupling rule works with the axis-aligned cell width
        FineLevelRule::HSquared => {
            choose_fine_level_for_coupling(coarse_h / std::f64::consts::SQRT_2, hierarchy)?
        }
        FineLevelRule::Explicit(k) => {
            if k >= hierarchy.n_levels() {
                return Err(Error::Config(format!(
                    "explicit fine level {k} outside hierarchy with {} levels",
                    hierarchy.n_levels()
                )));
            }
            k
        }
    };
    let fine_mesh = hierarchy.level(fine_level).clone();
    let fine_h = fine_mesh.mesh_size();
    let steps = sample_steps(grid, sample_times)?;

    // first level: nonlinear coarse solve, keeping the state at every node
    let coarse_space = MixedSpace::new(coarse_mesh, config.pair)?;
    let mut coarse_stepper =
        GalerkinStepper::new(coarse_space, config.solver.clone(), grid.dt)?;
    let coarse_start = Instant::now();
    let mut coarse_states = Vec::with_capacity(grid.n_steps + 1);
    coarse_states.push(coarse_stepper.project(u0)?);
    let mut coarse_stats = RunStats::default();
    let system = coarse_stepper.system();
    let mut loads: Vec<Vec<f64>> = Vec::new();
    for k in 1..=grid.n_steps {
        loads.push(system.assemble_load(&|x, t| forcing(x, t), grid.time_at(k)));
    }
    for k in 1..=grid.n_steps {
        let (next, rep) = coarse_stepper.step(&coarse_states[k - 1], &loads[k - 1])?;
        coarse_stats.absorb_step(&rep);
        coarse_stats.max_boundary_velocity = coarse_stats
            .max_boundary_velocity
            .max(next.boundary_velocity_max());
        coarse_states.push(next);
    }
    let coarse_seconds = coarse_start.elapsed().as_secs_f64();
    coarse_stats.wall_seconds = coarse_seconds;
    let coarse_samples: Vec<TrajectorySample> = steps
        .iter()
        .zip(sample_times)
        .map(|(&k, &t)| TrajectorySample {
            time: t,
            field: coarse_states[k].clone(),
        })
        .collect();

    // second level: linear Stokes march with frozen coarse convection
    let fine_space = MixedSpace::new(fine_mesh, config.pair)?;
    let fine_system = DiscreteSystem::assemble(fine_space.clone())?;
    let mut fine_saddle = SaddleSystem::new(&fine_system)?;
    let fine_start = Instant::now();
    let u0h = project_initial_data(&fine_system, &mut fine_saddle, u0)?;
    let stokes = StokesStepper::new(fine_system, fine_saddle, config.solver.nu, grid.dt)?;
    let mut fine_stats = RunStats::default();
    let mut prolong_seconds = 0.0;
    let mut fine_samples = Vec::new();
    let mut state = u0h;
    if let Some(pos) = steps.iter().position(|&k| k == 0) {
        fine_samples.push(TrajectorySample {
            time: sample_times[pos],
            field: state.clone(),
        });
    }
    for k in 1..=grid.n_steps {
        let t = grid.time_at(k);
        let load = stokes
            .system()
            .assemble_load(&|x, tt| forcing(x, tt), t);
        let frozen = if config.disable_fine_convection {
            None
        } else {
            let p0 = Instant::now();
            let lifted = prolong(&coarse_states[k], fine_space_ref(&stokes), hierarchy)?;
            prolong_seconds += p0.elapsed().as_secs_f64();
            Some(
                stokes
                    .system()
                    .convection_apply(&lifted.velocity, &lifted.velocity),
            )
        };
        let (next, rep) = stokes.step(&state, &load, frozen.as_deref()).map_err(|e| {
            Error::Solve(format!("fine level step {k} failed: {e}"))
        })?;
        state = next;
        fine_stats.absorb_step(&rep);
        fine_stats.max_boundary_velocity = fine_stats
            .max_boundary_velocity
            .max(state.boundary_velocity_max());
        if let Some(pos) = steps.iter().position(|&s| s == k) {
            fine_samples.push(TrajectorySample {
                time: sample_times[pos],
                field: state.clone(),
            });
        }
    }
    let fine_seconds = fine_start.elapsed().as_secs_f64() - prolong_seconds;
    fine_stats.wall_seconds = fine_seconds;

    Ok(TwoLevelRun {
        coarse_samples,
        fine_samples,
        fine_final: state,
        coarse_h,
        fine_h,
        fine_level,
        coarse_stats,
        fine_stats,
        timings: PhaseTimings {
            coarse_seconds,
            prolong_seconds,
            fine_seconds,
        },
    })
}

fn fine_space_ref(stokes: &StokesStepper) -> &Arc<MixedSpace> {
    stokes.system().space()
}

#[derive(Debug)]
pub struct ComparisonRun {
    pub one_level: OneLevelRun,
    pub two_level: TwoLevelRun,
}

impl ComparisonRun {
    pub fn one_level_seconds(&self) -> f64 {
        self.one_level.stats.wall_seconds
    }

    pub fn two_level_seconds(&self) -> f64 {
        self.two_level.timings.total()
    }
}

/// Runs the one-level Galerkin scheme on the two-level method's fine mesh with
/// identical data and grid, for error and wall-time comparison.
pub fn run_comparison(
    hierarchy: &MeshHierarchy,
    config: &TwoLevelConfig,
    u0: &dyn Fn([f64; 2]) -> [f64; 2],
    forcing: &dyn Fn([f64; 2], f64) -> [f64; 2],
    grid: &TimeGrid,
    sample_times: &[f64],
) -> Result<ComparisonRun> {
    let two_level = run_two_level(hierarchy, config, u0, forcing, grid, sample_times)?;
    let fine_mesh = hierarchy.level(two_level.fine_level).clone();
    let fine_space = MixedSpace::new(fine_mesh, config.pair)?;
    let mut stepper = GalerkinStepper::new(fine_space.clone(), config.solver.clone(), grid.dt)?;
    let u0h = stepper.project(u0)?;
    let system = DiscreteSystem::assemble(fine_space)?;
    let load = move |t: f64| system.assemble_load(&|x, tt| forcing(x, tt), t);
    let one_level = run_one_level(&mut stepper, u0h, &load, grid, sample_times)?;
    Ok(ComparisonRun {
        one_level,
        two_level,
    })
}
