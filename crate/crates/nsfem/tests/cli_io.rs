//! End-to-end checks of the binary: config parsing diagnostics, the
//! exit-code contract (0 pass, 1 rate failure, 2 hard error), artifact
//! layout, and byte-level reproducibility of the CSV outputs.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nsfem"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nsfem-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn write_cfg(dir: &PathBuf, text: &str) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn galerkin_run_writes_artifacts_and_exits_zero() {
    let dir = scratch("run");
    let cfg = write_cfg(
        &dir,
        "mode = galerkin\nn_coarse = 2\nfine_levels = 1\nt_final = 0.04\ndt = 0.02\n",
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let report = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("mode = galerkin"), "{report}");
    assert!(report.contains("n_coarse = 2"), "{report}");
    let csv = std::fs::read_to_string(dir.join("errors.csv")).unwrap();
    assert!(csv.starts_with(
        "t, h, H, err_u_L2, err_u_H1, err_p_L2, w_err_u_L2, w_err_u_H1, w_err_p_L2"
    ));
    assert!(dir.join("final_state.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn failing_rate_checks_exit_one() {
    let dir = scratch("rate");
    // dt-dominated Taylor-Hood pair: the H1 order lands below its band, so
    // the run completes but the scientific check fails
    let cfg = write_cfg(
        &dir,
        "mode = convergence-study\nelement = taylor-hood\nn_coarse = 2\n\
         fine_levels = 1\nt_final = 0.2\ndt = 0.1\n",
    );
    let out = bin()
        .args(["study", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("rate checks failed"));
    let report = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("FAIL"), "{report}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_errors_exit_two_with_diagnostics() {
    let dir = scratch("diag");
    // unknown key: line number and a suggestion
    let cfg = write_cfg(&dir, "mode = galerkin\nviscosityy = 1.0\n");
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("exp.cfg:2"), "{err}");
    assert!(err.contains("did you mean `viscosity`?"), "{err}");

    // invalid value names the key
    let cfg = write_cfg(&dir, "mode = galerkin\nnu = -1\n");
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("`nu`"));

    // missing file
    let out = bin()
        .args(["run", "--config", "/nonexistent/nsfem.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn subcommand_rejects_mismatched_mode() {
    let dir = scratch("mismatch");
    let cfg = write_cfg(&dir, "mode = galerkin\n");
    let out = bin()
        .args(["study", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("galerkin"), "{err}");
    assert!(err.contains("convergence-study"), "{err}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn deterministic_reruns_reproduce_csv_bytes() {
    let d1 = scratch("det-a");
    let d2 = scratch("det-b");
    let text = "mode = galerkin\nn_coarse = 2\nt_final = 0.04\ndt = 0.02\n";
    for dir in [&d1, &d2] {
        let cfg = write_cfg(dir, text);
        let out = bin()
            .args(["run", "--deterministic", "--seed", "11", "--config"])
            .arg(&cfg)
            .arg("--output")
            .arg(dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    }
    for name in ["errors.csv", "final_state.csv"] {
        let a = std::fs::read(d1.join(name)).unwrap();
        let b = std::fs::read(d2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    let _ = std::fs::remove_dir_all(&d1);
    let _ = std::fs::remove_dir_all(&d2);
}

#[test]
fn dump_mesh_writes_vertex_and_cell_tables() {
    let dir = scratch("mesh");
    let cfg = write_cfg(&dir, "mode = galerkin\nn_coarse = 2\nfine_levels = 1\n");
    let out = bin()
        .args(["dump-mesh", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    // finest mesh is n = 4: 25 vertices, 32 cells
    let verts = std::fs::read_to_string(dir.join("mesh_vertices.csv")).unwrap();
    assert_eq!(verts.lines().count(), 1 + 25);
    assert!(verts.starts_with("id, x, y, boundary"));
    let cells = std::fs::read_to_string(dir.join("mesh_cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 32);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn comparison_mode_emits_both_tables() {
    let dir = scratch("cmp");
    let cfg = write_cfg(
        &dir,
        "mode = comparison\nn_coarse = 2\nfine_levels = 1\ncoupling = explicit:1\n\
         t_final = 0.04\ndt = 0.02\n",
    );
    let out = bin()
        .args(["compare", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        matches!(out.status.code(), Some(0) | Some(1)),
        "{}",
        stderr_of(&out)
    );
    assert!(dir.join("one_level.csv").exists());
    assert!(dir.join("two_level.csv").exists());
    let report = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("error ratios"), "{report}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn help_lists_all_subcommands() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for sub in ["run", "study", "compare", "dump-mesh"] {
        assert!(text.contains(sub), "missing {sub} in help");
    }
}
