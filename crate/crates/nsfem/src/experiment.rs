//! Experiment driver: maps a validated configuration to solver runs and
//! on-disk artifacts. Every mode writes `report.txt` (config echo, run
//! summary, rate checks) plus CSV tables in the shared error-table layout.
//! Scientific pass/fail is carried by the rate checks so callers can gate on
//! the exit code.

use crate::assembly::DiscreteSystem;
use crate::config::{DtRule, ExperimentConfig, Fixture, Mode};
use crate::femspace::{ElementPair, FieldPair, MixedSpace};
use crate::mesh::{
    build_hierarchy, build_structured_mesh, choose_fine_level_for_coupling, MeshHierarchy,
};
use crate::stepper::{
    run_one_level, GalerkinStepper, NonlinearStrategy, RunStats, SolverConfig, TimeGrid,
    TrajectorySample,
};
use crate::twolevel::{run_comparison, run_two_level, FineLevelRule, TwoLevelConfig};
use crate::verification::{
    compute_errors, compute_self_errors, fitted_order, observed_orders, rough_solution,
    smooth_solution, weighted_error_trace, write_error_table, ErrorSample, ExactSolution,
    StudyRow,
};
use crate::{Error, Result};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct RateCheck {
    pub name: String,
    pub detail: String,
    pub passed: bool,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub checks: Vec<RateCheck>,
    pub report_path: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn fixture_solution(fixture: Fixture) -> ExactSolution {
    match fixture {
        Fixture::Smooth => smooth_solution(),
        Fixture::Nonsmooth => rough_solution(),
    }
}

/// Echo of the configuration in the config-file syntax, so every report is
/// self-describing and replayable.
pub fn config_echo(cfg: &ExperimentConfig) -> String {
    let dt = match cfg.dt {
        DtRule::Auto => "auto".to_string(),
        DtRule::Fixed(v) => format!("{v}"),
    };
    let coupling = match cfg.coupling {
        FineLevelRule::HSquared => "h-squared".to_string(),
        FineLevelRule::Explicit(k) => format!("explicit:{k}"),
    };
    let fixture = match cfg.fixture {
        Fixture::Smooth => "smooth",
        Fixture::Nonsmooth => "nonsmooth",
    };
    let samples = effective_samples(cfg)
        .iter()
        .map(|t| format!("{t}"))
        .collect::<Vec<_>>()
        .join(", ");
    let mut s = String::new();
    let _ = writeln!(s, "mode = {}", cfg.mode.name());
    let _ = writeln!(s, "nu = {}", cfg.nu);
    let _ = writeln!(s, "element = {}", cfg.element.name());
    let _ = writeln!(s, "n_coarse = {}", cfg.n_coarse);
    let _ = writeln!(s, "fine_levels = {}", cfg.fine_levels);
    let _ = writeln!(s, "coupling = {coupling}");
    let _ = writeln!(s, "t_final = {}", cfg.t_final);
    let _ = writeln!(s, "dt = {dt}");
    let _ = writeln!(s, "fixture = {fixture}");
    let _ = writeln!(s, "sample_times = {samples}");
    let _ = writeln!(s, "output_dir = {}", cfg.output_dir.display());
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "deterministic = {}", cfg.deterministic);
    s
}

struct ModeOutput {
    body: String,
    checks: Vec<RateCheck>,
    /// (file name, content) pairs written next to the report.
    tables: Vec<(String, String)>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let out = match cfg.mode {
        Mode::Galerkin => galerkin_mode(cfg)?,
        Mode::TwoLevel => two_level_mode(cfg)?,
        Mode::ConvergenceStudy => study_mode(cfg)?,
        Mode::SingularityStudy => singularity_mode(cfg)?,
        Mode::Comparison => comparison_mode(cfg)?,
    };
    let mut report = String::from("# configuration\n");
    report.push_str(&config_echo(cfg));
    report.push('\n');
    report.push_str(&out.body);
    if out.checks.is_empty() {
        report.push_str("\n# rate checks\nnone configured for this mode\n");
    } else {
        report.push_str("\n# rate checks\n");
        for c in &out.checks {
            let _ = writeln!(
                report,
                "[{}] {}: {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        let _ = writeln!(
            report,
            "overall: {}",
            if out.checks.iter().all(|c| c.passed) {
                "pass"
            } else {
                "FAIL"
            }
        );
    }
    let mut artifacts = Vec::new();
    for (name, content) in &out.tables {
        let path = cfg.output_dir.join(name);
        std::fs::write(&path, content)?;
        artifacts.push(path);
    }
    let report_path = cfg.output_dir.join("report.txt");
    std::fs::write(&report_path, report)?;
    Ok(ExperimentOutcome {
        checks: out.checks,
        report_path,
        artifacts,
    })
}

/// Writes the finest configured mesh as two CSVs (vertices and cells).
pub fn dump_mesh(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let n = cfg.n_coarse << cfg.fine_levels;
    let mesh = build_structured_mesh(n)?;
    let mut verts = String::from("id, x, y, boundary\n");
    for v in 0..mesh.n_vertices() {
        let [x, y] = mesh.vertex(v);
        let _ = writeln!(
            verts,
            "{v}, {x:.9e}, {y:.9e}, {}",
            u8::from(mesh.is_boundary_vertex(v))
        );
    }
    let mut cells = String::from("id, v0, v1, v2\n");
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle(t);
        let _ = writeln!(cells, "{t}, {a}, {b}, {c}");
    }
    let vp = cfg.output_dir.join("mesh_vertices.csv");
    let cp = cfg.output_dir.join("mesh_cells.csv");
    std::fs::write(&vp, verts)?;
    std::fs::write(&cp, cells)?;
    Ok(vec![vp, cp])
}

fn newton_solver(nu: f64) -> SolverConfig {
    SolverConfig {
        nu,
        ..SolverConfig::default()
    }
}

fn defect_solver(nu: f64) -> SolverConfig {
    SolverConfig {
        nu,
        strategy: NonlinearStrategy::StokesDefect,
        ..SolverConfig::default()
    }
}

/// Sample times sorted ascending with duplicates removed; singularity studies
/// default to a dyadic trace toward t = 0 instead of the final time only.
fn effective_samples(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut times = if cfg.sample_times.is_empty() {
        if cfg.mode == Mode::SingularityStudy {
            vec![
                cfg.t_final / 64.0,
                cfg.t_final / 16.0,
                cfg.t_final / 4.0,
                cfg.t_final,
            ]
        } else {
            vec![cfg.t_final]
        }
    } else {
        cfg.sample_times.clone()
    };
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    times
}

fn resolve_fine_level(hierarchy: &MeshHierarchy, rule: FineLevelRule) -> Result<usize> {
    match rule {
        FineLevelRule::HSquared => choose_fine_level_for_coupling(
            hierarchy.level(0).mesh_size() / std::f64::consts::SQRT_2,
            hierarchy,
        ),
        FineLevelRule::Explicit(k) => {
            if k >= hierarchy.n_levels() {
                return Err(Error::Config(format!(
                    "explicit fine level {k} outside hierarchy with {} levels",
                    hierarchy.n_levels()
                )));
            }
            Ok(k)
        }
    }
}

fn table_string(rows: &[StudyRow]) -> String {
    let mut buf = Vec::new();
    write_error_table(rows, &mut buf).expect("table write to memory");
    String::from_utf8(buf).expect("table is ascii")
}

fn stats_block(label: &str, stats: &RunStats) -> String {
    format!(
        "{label}: {} steps, {} newton + {} picard + {} defect iterations, \
         {} factorizations, max |Bu|_inf = {:.3e}, wall = {:.3} s\n",
        stats.steps,
        stats.newton_iters,
        stats.picard_iters,
        stats.defect_iters,
        stats.factorizations,
        stats.max_div_inf,
        stats.wall_seconds
    )
}

fn errors_text(prefix: &str, rows: &[StudyRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(
            s,
            "{prefix}t = {:.4}: |u - uh|_L2 = {:.6e}, |u - uh|_H1 = {:.6e}, \
             |p - ph|_L2 = {:.6e}",
            r.t, r.errors.velocity_l2, r.errors.velocity_h1, r.errors.pressure_l2
        );
    }
    s
}

fn band_check(name: &str, value: f64, lo: f64, hi: f64) -> RateCheck {
    RateCheck {
        name: name.to_string(),
        detail: format!("{value:.4} in [{lo}, {hi}]"),
        passed: value.is_finite() && value >= lo && value <= hi,
    }
}

/// Per-norm EOC bands used when a study configures rate checks. The MINI
/// bands match a first-order pressure / second-order velocity pair; the
/// Taylor-Hood velocity L2 band is wide because the backward Euler time error
/// of the dt = h^2/4 rule caps the observable order at two.
fn study_bands(pair: ElementPair) -> [(f64, f64); 3] {
    match pair {
        ElementPair::Mini => [(1.8, 2.3), (0.9, 1.3), (0.9, 1.3)],
        ElementPair::TaylorHood => [(1.8, 3.3), (1.7, 2.3), (1.7, 2.3)],
    }
}

fn vertex_state_csv(field: &FieldPair) -> String {
    let space = field.space();
    let mesh = space.mesh();
    let mut s = String::from("x, y, u_x, u_y, p\n");
    for v in 0..mesh.n_vertices() {
        let [x, y] = mesh.vertex(v);
        let ux = field.velocity[space.velocity_dof(0, v)];
        let uy = field.velocity[space.velocity_dof(1, v)];
        let p = field.pressure[v];
        let _ = writeln!(s, "{x:.9e}, {y:.9e}, {ux:.12e}, {uy:.12e}, {p:.12e}");
    }
    s
}

fn galerkin_mode(cfg: &ExperimentConfig) -> Result<ModeOutput> {
    let n = cfg.n_coarse << cfg.fine_levels;
    let mesh = Arc::new(build_structured_mesh(n)?);
    let space = MixedSpace::new(mesh, cfg.element)?;
    let h = space.mesh().mesh_size();
    let exact = fixture_solution(cfg.fixture);
    let mut body = String::from("# run\n");
    let _ = writeln!(
        body,
        "one-level galerkin, {} on n = {n} mesh (h = {:.6e})",
        cfg.element.name(),
        h
    );

    if cfg.t_final == 0.0 {
        // projection only: report the errors of the projected initial data
        let mut stepper = GalerkinStepper::new(space.clone(), newton_solver(cfg.nu), 1.0)?;
        let u0h = stepper.project(|x| exact.initial_velocity(x))?;
        let errors = compute_errors(stepper.system(), &u0h, &exact, 0.0)?;
        let rows = vec![StudyRow {
            t: 0.0,
            h,
            coarse_h: None,
            errors,
        }];
        body.push_str("t_final = 0: projection errors only\n\n# errors\n");
        body.push_str(&errors_text("", &rows));
        return Ok(ModeOutput {
            body,
            checks: Vec::new(),
            tables: vec![
                ("errors.csv".into(), table_string(&rows)),
                ("final_state.csv".into(), vertex_state_csv(&u0h)),
            ],
        });
    }

    let dt = cfg.dt_for(h);
    let grid = TimeGrid::new(cfg.t_final, dt)?;
    let samples = effective_samples(cfg);
    let _ = writeln!(
        body,
        "dt = {:.6e} ({} steps{})",
        grid.dt,
        grid.n_steps,
        if grid.dt_adjusted {
            ", adjusted to divide t_final"
        } else {
            ""
        }
    );
    let mut stepper = GalerkinStepper::new(space.clone(), newton_solver(cfg.nu), grid.dt)?;
    let u0h = stepper.project(|x| exact.initial_velocity(x))?;
    let system = DiscreteSystem::assemble(space)?;
    let forcing = exact.forcing(cfg.nu);
    let load = |t: f64| system.assemble_load(&|x, tt| forcing(x, tt), t);
    let run = run_one_level(&mut stepper, u0h, &load, &grid, &samples)?;
    let mut rows = Vec::new();
    for s in &run.samples {
        rows.push(StudyRow {
            t: s.time,
            h,
            coarse_h: None,
            errors: compute_errors(&system, &s.field, &exact, s.time)?,
        });
    }
    body.push_str(&stats_block("march", &run.stats));
    body.push_str("\n# errors\n");
    body.push_str(&errors_text("", &rows));
    Ok(ModeOutput {
        body,
        checks: Vec::new(),
        tables: vec![
            ("errors.csv".into(), table_string(&rows)),
            ("final_state.csv".into(), vertex_state_csv(&run.final_state)),
        ],
    })
}

fn two_level_mode(cfg: &ExperimentConfig) -> Result<ModeOutput> {
    let hierarchy = build_hierarchy(cfg.n_coarse, cfg.fine_levels)?;
    let fine_level = resolve_fine_level(&hierarchy, cfg.coupling)?;
    let fine_h = hierarchy.level(fine_level).mesh_size();
    let dt = cfg.dt_for(fine_h);
    let grid = TimeGrid::new(cfg.t_final, dt)?;
    let samples = effective_samples(cfg);
    let exact = fixture_solution(cfg.fixture);
    let forcing = exact.forcing(cfg.nu);
    let tl_cfg = TwoLevelConfig {
        pair: cfg.element,
        solver: newton_solver(cfg.nu),
        fine_level_rule: cfg.coupling,
        disable_fine_convection: false,
    };
    let run = run_two_level(
        &hierarchy,
        &tl_cfg,
        &|x| exact.initial_velocity(x),
        &forcing,
        &grid,
        &samples,
    )?;

    let fine_sys = DiscreteSystem::assemble(run.fine_final.space().clone())?;
    let mut rows = Vec::new();
    for s in &run.fine_samples {
        rows.push(StudyRow {
            t: s.time,
            h: run.fine_h,
            coarse_h: Some(run.coarse_h),
            errors: compute_errors(&fine_sys, &s.field, &exact, s.time)?,
        });
    }
    let coarse_sys = DiscreteSystem::assemble(run.coarse_samples[0].field.space().clone())?;
    let mut coarse_rows = Vec::new();
    for s in &run.coarse_samples {
        coarse_rows.push(StudyRow {
            t: s.time,
            h: run.coarse_h,
            coarse_h: None,
            errors: compute_errors(&coarse_sys, &s.field, &exact, s.time)?,
        });
    }

    let mut body = String::from("# run\n");
    let _ = writeln!(
        body,
        "two-level, {}: coarse H = {:.6e} (level 0), fine h = {:.6e} (level {})",
        cfg.element.name(),
        run.coarse_h,
        run.fine_h,
        run.fine_level
    );
    let _ = writeln!(
        body,
        "dt = {:.6e} ({} steps{})",
        grid.dt,
        grid.n_steps,
        if grid.dt_adjusted {
            ", adjusted to divide t_final"
        } else {
            ""
        }
    );
    body.push_str(&stats_block("coarse phase", &run.coarse_stats));
    body.push_str(&stats_block("fine phase", &run.fine_stats));
    let _ = writeln!(
        body,
        "phase wall times: coarse {:.3} s, prolongation {:.3} s, fine {:.3} s \
         (total {:.3} s)",
        run.timings.coarse_seconds,
        run.timings.prolong_seconds,
        run.timings.fine_seconds,
        run.timings.total()
    );
    body.push_str("\n# errors (two-level solution on the fine mesh)\n");
    body.push_str(&errors_text("", &rows));
    body.push_str("\n# errors (coarse phase, for reference)\n");
    body.push_str(&errors_text("", &coarse_rows));
    Ok(ModeOutput {
        body,
        checks: Vec::new(),
        tables: vec![
            ("errors.csv".into(), table_string(&rows)),
            ("final_state.csv".into(), vertex_state_csv(&run.fine_final)),
        ],
    })
}

struct StudyCell {
    level: usize,
    n: usize,
    h: f64,
    dt: f64,
    per_sample: Vec<(f64, ErrorSample)>,
    stats: RunStats,
}

fn run_study_cell(cfg: &ExperimentConfig, level: usize, samples: &[f64]) -> Result<StudyCell> {
    let n = cfg.n_coarse << level;
    let mesh = Arc::new(build_structured_mesh(n)?);
    let space = MixedSpace::new(mesh, cfg.element)?;
    let h = space.mesh().mesh_size();
    let grid = TimeGrid::new(cfg.t_final, cfg.dt_for(h))?;
    let exact = fixture_solution(cfg.fixture);
    let mut stepper = GalerkinStepper::new(space.clone(), defect_solver(cfg.nu), grid.dt)?;
    let u0h = stepper.project(|x| exact.initial_velocity(x))?;
    let system = DiscreteSystem::assemble(space)?;
    let forcing = exact.forcing(cfg.nu);
    let load = |t: f64| system.assemble_load(&|x, tt| forcing(x, tt), t);
    let run = run_one_level(&mut stepper, u0h, &load, &grid, samples)?;
    let mut per_sample = Vec::new();
    for s in &run.samples {
        per_sample.push((s.time, compute_errors(&system, &s.field, &exact, s.time)?));
    }
    Ok(StudyCell {
        level,
        n,
        h,
        dt: grid.dt,
        per_sample,
        stats: run.stats,
    })
}

fn study_mode(cfg: &ExperimentConfig) -> Result<ModeOutput> {
    let samples = effective_samples(cfg);
    let levels: Vec<usize> = (0..=cfg.fine_levels).collect();
    let jobs = if cfg.deterministic { 1 } else { cfg.jobs };
    let collected: Result<Vec<StudyCell>> = if jobs <= 1 {
        levels
            .iter()
            .map(|&k| run_study_cell(cfg, k, &samples))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.min(levels.len()))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            levels
                .par_iter()
                .map(|&k| run_study_cell(cfg, k, &samples))
                .collect()
        })
    };
    let mut cells = collected?;
    cells.sort_by_key(|c| c.level);

    let mut body = String::from("# study cells\n");
    for c in &cells {
        let _ = writeln!(
            body,
            "level {}: n = {}, h = {:.6e}, dt = {:.6e}",
            c.level, c.n, c.h, c.dt
        );
        body.push_str(&stats_block("  march", &c.stats));
    }

    // rows grouped by sample time, one per level
    let mut rows = Vec::new();
    for (si, &t) in samples.iter().enumerate() {
        for c in &cells {
            rows.push(StudyRow {
                t,
                h: c.h,
                coarse_h: None,
                errors: c.per_sample[si].1.clone(),
            });
        }
    }

    let mut checks = Vec::new();
    body.push_str("\n# observed orders\n");
    if cells.len() < 2 {
        body.push_str("single level: no rates to estimate\n");
    } else {
        let h: Vec<f64> = cells.iter().map(|c| c.h).collect();
        let bands = study_bands(cfg.element);
        let last = samples.len() - 1;
        for (si, &t) in samples.iter().enumerate() {
            let _ = writeln!(body, "t = {t:.4}:");
            let series = [
                ("velocity L2", 0usize),
                ("velocity H1", 1),
                ("pressure L2", 2),
            ];
            for (name, which) in series {
                let e: Vec<f64> = cells
                    .iter()
                    .map(|c| match which {
                        0 => c.per_sample[si].1.velocity_l2,
                        1 => c.per_sample[si].1.velocity_h1,
                        _ => c.per_sample[si].1.pressure_l2,
                    })
                    .collect();
                let pairs = observed_orders(&h, &e)?;
                let fit = fitted_order(&h, &e)?;
                let pair_text = pairs
                    .iter()
                    .map(|o| format!("{o:.3}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = writeln!(body, "  {name}: per-pair [{pair_text}], fitted {fit:.3}");
                if si == last {
                    let (lo, hi) = bands[which];
                    checks.push(band_check(
                        &format!("{} eoc at t = {t}", name.replace(' ', "-").to_lowercase()),
                        fit,
                        lo,
                        hi,
                    ));
                }
            }
        }
    }

    Ok(ModeOutput {
        body,
        checks,
        tables: vec![("errors.csv".into(), table_string(&rows))],
    })
}

fn singularity_mode(cfg: &ExperimentConfig) -> Result<ModeOutput> {
    let hierarchy = build_hierarchy(cfg.n_coarse, cfg.fine_levels)?;
    let h_fine = hierarchy.level(cfg.fine_levels).mesh_size();
    let grid = TimeGrid::new(cfg.t_final, cfg.dt_for(h_fine))?;
    let samples = effective_samples(cfg);
    let exact = fixture_solution(cfg.fixture);
    let forcing = exact.forcing(cfg.nu);

    // march every level on the shared grid so the time error cancels in the
    // self-differences
    let mut runs: Vec<(f64, Vec<TrajectorySample>, RunStats)> = Vec::new();
    for k in 0..=cfg.fine_levels {
        let space = MixedSpace::new(hierarchy.level(k).clone(), cfg.element)?;
        let h = space.mesh().mesh_size();
        let mut stepper = GalerkinStepper::new(space.clone(), defect_solver(cfg.nu), grid.dt)?;
        let u0h = stepper.project(|x| exact.initial_velocity(x))?;
        let system = DiscreteSystem::assemble(space)?;
        let load = |t: f64| system.assemble_load(&|x, tt| forcing(x, tt), t);
        let run = run_one_level(&mut stepper, u0h, &load, &grid, &samples)?;
        runs.push((h, run.samples, run.stats));
    }

    let reference = &runs[cfg.fine_levels];
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut body = String::from("# study\n");
    let _ = writeln!(
        body,
        "self-convergence against the level-{} reference (h = {:.6e}); \
         dt = {:.6e} shared by all levels",
        cfg.fine_levels, reference.0, grid.dt
    );
    if cfg.fixture == Fixture::Nonsmooth {
        body.push_str(
            "nonsmooth fixture: a 64-mode truncation, i.e. a finitely smooth \
             desk-scale proxy for rough initial data\n",
        );
    }
    for run in runs.iter().take(cfg.fine_levels) {
        let (h, samples_k, stats) = run;
        let mut errs = Vec::new();
        for (s, r) in samples_k.iter().zip(&reference.1) {
            errs.push(compute_self_errors(&s.field, &r.field, &hierarchy)?);
        }
        for (s, e) in samples_k.iter().zip(&errs) {
            rows.push(StudyRow {
                t: s.time,
                h: *h,
                coarse_h: None,
                errors: e.clone(),
            });
        }
        let _ = writeln!(body, "level with h = {h:.6e}:");
        body.push_str(&stats_block("  march", stats));
        let times: Vec<f64> = samples_k.iter().map(|s| s.time).collect();
        let l2: Vec<f64> = errs.iter().map(|e| e.velocity_l2).collect();
        if times.len() >= 2 && cfg.fixture == Fixture::Nonsmooth {
            let w = weighted_error_trace(&times, &l2, 0.5)?;
            let mut worst: f64 = 0.0;
            for i in 0..w.len() {
                for j in (i + 1)..w.len() {
                    worst = worst.max(w[i] / w[j]);
                }
            }
            checks.push(RateCheck {
                name: format!("weighted-l2-controlled h = {h:.3e}"),
                detail: format!(
                    "max ratio of sqrt(t)-weighted L2 error toward t -> 0 is \
                     {worst:.3} <= 2"
                ),
                passed: worst.is_finite() && worst <= 2.0,
            });
            let grows = l2.first().unwrap() > l2.last().unwrap();
            checks.push(RateCheck {
                name: format!("unweighted-l2-grows h = {h:.3e}"),
                detail: format!(
                    "L2 error {:.3e} at t = {:.4} exceeds {:.3e} at t = {:.4}",
                    l2.first().unwrap(),
                    times.first().unwrap(),
                    l2.last().unwrap(),
                    times.last().unwrap()
                ),
                passed: grows,
            });
        }
        for ((t, e), err) in times.iter().zip(&l2).zip(&errs) {
            let _ = writeln!(
                body,
                "  t = {t:.6}: |e|_L2 = {e:.6e}, sqrt(tau*) |e|_L2 = {:.6e}, \
                 |e|_H1 = {:.6e}",
                crate::verification::tau_star(*t).sqrt() * e,
                err.velocity_h1
            );
        }
    }

    Ok(ModeOutput {
        body,
        checks,
        tables: vec![("errors.csv".into(), table_string(&rows))],
    })
}

fn comparison_mode(cfg: &ExperimentConfig) -> Result<ModeOutput> {
    let hierarchy = build_hierarchy(cfg.n_coarse, cfg.fine_levels)?;
    let fine_level = resolve_fine_level(&hierarchy, cfg.coupling)?;
    let dt = cfg.dt_for(hierarchy.level(fine_level).mesh_size());
    let grid = TimeGrid::new(cfg.t_final, dt)?;
    let samples = effective_samples(cfg);
    let exact = fixture_solution(cfg.fixture);
    let forcing = exact.forcing(cfg.nu);
    let tl_cfg = TwoLevelConfig {
        pair: cfg.element,
        solver: newton_solver(cfg.nu),
        fine_level_rule: cfg.coupling,
        disable_fine_convection: false,
    };
    let cmp = run_comparison(
        &hierarchy,
        &tl_cfg,
        &|x| exact.initial_velocity(x),
        &forcing,
        &grid,
        &samples,
    )?;

    let fine_sys = DiscreteSystem::assemble(cmp.two_level.fine_final.space().clone())?;
    let mut tl_rows = Vec::new();
    let mut ol_rows = Vec::new();
    for (tl, ol) in cmp.two_level.fine_samples.iter().zip(&cmp.one_level.samples) {
        tl_rows.push(StudyRow {
            t: tl.time,
            h: cmp.two_level.fine_h,
            coarse_h: Some(cmp.two_level.coarse_h),
            errors: compute_errors(&fine_sys, &tl.field, &exact, tl.time)?,
        });
        ol_rows.push(StudyRow {
            t: ol.time,
            h: cmp.two_level.fine_h,
            coarse_h: None,
            errors: compute_errors(&fine_sys, &ol.field, &exact, ol.time)?,
        });
    }

    let mut body = String::from("# comparison\n");
    let _ = writeln!(
        body,
        "fine mesh h = {:.6e} (level {}), coarse H = {:.6e}, dt = {:.6e} \
         ({} steps)",
        cmp.two_level.fine_h,
        cmp.two_level.fine_level,
        cmp.two_level.coarse_h,
        grid.dt,
        grid.n_steps
    );
    body.push_str(&stats_block("one-level", &cmp.one_level.stats));
    body.push_str(&stats_block("two-level coarse", &cmp.two_level.coarse_stats));
    body.push_str(&stats_block("two-level fine", &cmp.two_level.fine_stats));
    let _ = writeln!(
        body,
        "wall: one-level {:.3} s, two-level {:.3} s (coarse {:.3} + prolong \
         {:.3} + fine {:.3})",
        cmp.one_level_seconds(),
        cmp.two_level_seconds(),
        cmp.two_level.timings.coarse_seconds,
        cmp.two_level.timings.prolong_seconds,
        cmp.two_level.timings.fine_seconds
    );
    body.push_str("\n# error ratios (two-level / one-level)\n");
    let mut checks = Vec::new();
    for (tl, ol) in tl_rows.iter().zip(&ol_rows) {
        let r_h1 = tl.errors.velocity_h1 / ol.errors.velocity_h1;
        let r_p = tl.errors.pressure_l2 / ol.errors.pressure_l2;
        let _ = writeln!(
            body,
            "t = {:.4}: velocity H1 ratio = {r_h1:.4}, pressure L2 ratio = {r_p:.4}",
            tl.t
        );
        if (tl.t - grid.t_final).abs() < 1e-12 {
            checks.push(band_check("two-level velocity h1 ratio", r_h1, 0.5, 2.0));
            checks.push(band_check("two-level pressure l2 ratio", r_p, 0.5, 2.0));
        }
    }

    Ok(ModeOutput {
        body,
        checks,
        tables: vec![
            ("two_level.csv".into(), table_string(&tl_rows)),
            ("one_level.csv".into(), table_string(&ol_rows)),
        ],
    })
}
