use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const BIN: &str = env!("CARGO_BIN_EXE_cifsyn");
const BUNDLED: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/unicycle.cfg");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("FUNNEL_LOG", "error").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Solved {
    _root: tempfile::TempDir,
    dir: PathBuf,
    exit: i32,
}

/// Benchmark solved once and shared by the tests in this file.
fn solved() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("unicycle");
        let o = run(&["solve", "--config", BUNDLED, "--out", dir.to_str().unwrap()]);
        Solved {
            exit: code(&o),
            dir,
            _root: root,
        }
    })
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            std::fs::copy(&p, to.join(p.file_name().unwrap())).unwrap();
        }
    }
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn bundled_config_solves() {
    let s = solved();
    assert_eq!(s.exit, 0);
    for f in ["trajectory.csv", "funnel.csv", "iterations.csv", "verification.csv", "summary.json", "run.cfg"] {
        assert!(s.dir.join(f).is_file(), "{f} missing");
    }
    let (_, traj) = csv_rows(&s.dir.join("trajectory.csv"));
    let (_, funnel) = csv_rows(&s.dir.join("funnel.csv"));
    let (_, ver) = csv_rows(&s.dir.join("verification.csv"));
    assert_eq!(traj.len(), 31);
    assert_eq!(funnel.len(), 31);
    assert_eq!(ver.len(), 100 * 31);
    let text = std::fs::read_to_string(s.dir.join("trajectory.csv")).unwrap();
    assert!(text.ends_with('\n'));
    // every real-valued cell carries 17 significant digits
    let cell = text.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    assert_eq!(cell, "0.0000000000000000e0");
}

#[test]
fn negative_tolerance_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    let text = std::fs::read_to_string(BUNDLED).unwrap().replace("tol_trajectory = 0.001", "tol_trajectory = -1.0");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("convergence.tol_trajectory"), "{}", stderr(&o));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[problem]\nnodes = \"thirty\"\n").unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn iteration_budget_exhaustion_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.cfg");
    let text = std::fs::read_to_string(BUNDLED).unwrap().replace("max_iterations = 30", "max_iterations = 1");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("o");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--samples", "0"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let (_, it) = csv_rows(&out.join("iterations.csv"));
    assert_eq!(it.len(), 1);
}

#[test]
fn verify_converged_solution() {
    let s = solved();
    assert_eq!(s.exit, 0);
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("copy");
    copy_dir(&s.dir, &dir);
    let o = run(&["verify", "--out", dir.to_str().unwrap(), "--samples", "100", "--seed", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv_rows(&dir.join("verification.csv"));
    assert_eq!(rows.len(), 100 * 31);
}

#[test]
fn zero_samples_is_an_error() {
    let s = solved();
    let o = run(&["verify", "--out", s.dir.to_str().unwrap(), "--samples", "0"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_solution_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("run.cfg"), "{}", stderr(&o));
}

#[test]
fn shrunken_funnel_fails_containment() {
    let s = solved();
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("shrunk");
    copy_dir(&s.dir, &dir);
    let path = dir.join("funnel.csv");
    let (header, rows) = csv_rows(&path);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path).unwrap();
    w.write_record(&header).unwrap();
    for row in rows {
        let scaled: Vec<String> = row
            .iter()
            .zip(&header)
            .map(|(v, h)| {
                if h.starts_with("q_") {
                    format!("{:.16e}", v.parse::<f64>().unwrap() * 0.25)
                } else {
                    v.clone()
                }
            })
            .collect();
        w.write_record(&scaled).unwrap();
    }
    w.flush().unwrap();
    drop(w);
    let o = run(&["verify", "--out", dir.to_str().unwrap(), "--disturbance", "worst-case"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("containment failure at node"), "{}", stderr(&o));
}

#[test]
fn figure_data_export() {
    let s = solved();
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("fig");
    copy_dir(&s.dir, &dir);
    let o = run(&["export-figures", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let figs = dir.join("figures");
    let (_, ell) = csv_rows(&figs.join("fig2_ellipses.csv"));
    let nodes: BTreeSet<&str> = ell.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(nodes.len(), 31);
    assert_eq!(ell.len(), 31 * 64);
    let (_, obs) = csv_rows(&figs.join("fig2_obstacles.csv"));
    assert_eq!(obs.iter().map(|r| r[0].as_str()).collect::<BTreeSet<_>>().len(), 2);
    let (_, conv) = csv_rows(&figs.join("fig4_convergence.csv"));
    let (_, it) = csv_rows(&dir.join("iterations.csv"));
    assert_eq!(conv.len(), it.len());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(figs.join("figures.json")).unwrap()).unwrap();
    assert_eq!(manifest["ellipse_count"], 31);
    assert_eq!(manifest["obstacle_count"], 2);
}

#[test]
fn help_exits_zero_and_bad_flag_exits_one() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["solve", "--bogus"])), 1);
}
