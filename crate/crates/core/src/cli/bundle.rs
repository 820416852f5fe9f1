use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::funnel::Funnel;
use crate::pipeline::{IterationRecord, RunConfig};
use crate::trajectory::Trajectory;
use crate::verify::VerificationReport;

pub const CONFIG_FILE: &str = "run.cfg";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const FUNNEL_FILE: &str = "funnel.csv";
pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const VERIFICATION_FILE: &str = "verification.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const VERIFICATION_SUMMARY_FILE: &str = "verification.json";

/// Seventeen significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Numeric table; the first `int_cols` columns are written as integers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub int_cols: usize,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>, int_cols: usize) -> Self {
        Self {
            header,
            int_cols,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            let cells = row.iter().enumerate().map(|(i, v)| {
                if i < self.int_cols {
                    format!("{}", *v as i64)
                } else {
                    fmt_f64(*v)
                }
            });
            w.write_record(cells).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let bad = |reason: String| Error::Bundle {
            file: file.clone(),
            reason,
        };
        let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let row = rec
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| bad(format!("row {}: `{c}` is not a number", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let int_cols = header.iter().take_while(|h| is_index_column(h)).count();
        Ok(Self {
            header,
            int_cols,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of the columns `prefix_0, prefix_1, …` in `row`.
    pub fn vector(&self, row: usize, prefix: &str) -> DVector<f64> {
        let cols: Vec<usize> = (0..)
            .map_while(|i| self.column(&format!("{prefix}_{i}")))
            .collect();
        DVector::from_iterator(cols.len(), cols.iter().map(|&c| self.rows[row][c]))
    }
}

fn is_index_column(h: &str) -> bool {
    matches!(h, "k" | "node" | "sample" | "iteration" | "obstacle" | "point")
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

fn matrix_names(prefix: &str, rows: usize, cols: usize, upper: bool) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if !upper || j >= i {
                out.push(format!("{prefix}_{i}_{j}"));
            }
        }
    }
    out
}

fn nan_row(n: usize) -> impl Iterator<Item = f64> {
    std::iter::repeat_n(f64::NAN, n)
}

/// `k, t, x_*, u_*`; inputs are NaN on the terminal node.
pub fn trajectory_table(traj: &Trajectory) -> Table {
    let (nx, nu) = (traj.nx(), traj.nu());
    let header = ["k", "t"]
        .into_iter()
        .map(String::from)
        .chain(names("x", nx))
        .chain(names("u", nu))
        .collect();
    let mut t = Table::new(header, 1);
    for k in 0..=traj.horizon() {
        let mut row = vec![k as f64, traj.t[k]];
        row.extend(traj.x[k].iter());
        match traj.u.get(k) {
            Some(u) => row.extend(u.iter()),
            None => row.extend(nan_row(nu)),
        }
        t.push(row);
    }
    t
}

/// `k, beta, q_i_j (upper triangle), y_i_j, k_i_j`; `Y` and `K` are NaN on
/// the terminal node.
pub fn funnel_table(funnel: &Funnel) -> Table {
    let nx = funnel.q[0].nrows();
    let nu = funnel.k.first().map_or(0, |k| k.nrows());
    let header = ["k", "beta"]
        .into_iter()
        .map(String::from)
        .chain(matrix_names("q", nx, nx, true))
        .chain(matrix_names("y", nu, nx, false))
        .chain(matrix_names("k", nu, nx, false))
        .collect();
    let mut t = Table::new(header, 1);
    for k in 0..=funnel.horizon() {
        let mut row = vec![k as f64, funnel.beta[k]];
        let q = &funnel.q[k];
        for i in 0..nx {
            for j in i..nx {
                row.push(q[(i, j)]);
            }
        }
        for m in [funnel.y.get(k), funnel.k.get(k)] {
            match m {
                Some(m) => row.extend(m.transpose().iter()),
                None => row.extend(nan_row(nu * nx)),
            }
        }
        t.push(row);
    }
    t
}

pub fn iterations_table(records: &[IterationRecord]) -> Table {
    let header = [
        "iteration",
        "delta_t",
        "delta_f",
        "trajectory_cost",
        "funnel_objective",
        "virtual_control",
        "lambda_w",
        "max_gamma",
        "max_beta",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    let mut t = Table::new(header, 1);
    for r in records {
        t.push(vec![
            r.iteration as f64,
            r.delta_t,
            r.delta_f,
            r.trajectory_cost,
            r.funnel_objective,
            r.vc_norm,
            r.lambda_w,
            r.max_gamma,
            r.max_beta,
        ]);
    }
    t
}

/// One row per sample and node; inputs, disturbances and input margins are
/// NaN on the terminal node.
pub fn verification_table(traj: &Trajectory, nw: usize, report: Option<&VerificationReport>) -> Table {
    let (nx, nu, n) = (traj.nx(), traj.nu(), traj.horizon());
    let header = ["sample", "node", "t"]
        .into_iter()
        .map(String::from)
        .chain(names("x", nx))
        .chain(names("u", nu))
        .chain(names("w", nw))
        .chain(["containment", "state_margin", "input_margin"].map(String::from))
        .collect();
    let mut t = Table::new(header, 2);
    let Some(report) = report else { return t };
    for (s, rep) in report.samples.iter().enumerate() {
        for k in 0..=n {
            let mut row = vec![s as f64, k as f64, traj.t[k]];
            row.extend(rep.path.x[k].iter());
            if k < n {
                row.extend(rep.path.u[k].iter());
                row.extend(rep.path.w[k].iter());
            } else {
                row.extend(nan_row(nu + nw));
            }
            row.push(rep.containment[k]);
            row.push(rep.margins.min_state(k));
            row.push(if k < n { rep.margins.min_input(k) } else { f64::NAN });
            t.push(row);
        }
    }
    t
}

fn missing(path: &Path) -> Error {
    Error::Bundle {
        file: path.display().to_string(),
        reason: "missing from the solution directory".into(),
    }
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(missing(path))
    }
}

fn shape_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Bundle {
        file: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    require(path)?;
    let t = Table::read(path)?;
    let tc = t.column("t").ok_or_else(|| shape_error(path, "no `t` column"))?;
    let rows = t.rows.len();
    if rows < 2 {
        return Err(shape_error(path, "needs at least two nodes"));
    }
    let x = (0..rows).map(|r| t.vector(r, "x")).collect();
    let u = (0..rows - 1).map(|r| t.vector(r, "u")).collect();
    let times = t.rows.iter().map(|r| r[tc]).collect();
    Trajectory::new(times, x, u).map_err(|e| shape_error(path, e.to_string()))
}

pub fn read_funnel(path: &Path, nx: usize, nu: usize) -> Result<Funnel> {
    require(path)?;
    let t = Table::read(path)?;
    let bc = t.column("beta").ok_or_else(|| shape_error(path, "no `beta` column"))?;
    let col = |name: String| t.column(&name).ok_or_else(|| shape_error(path, format!("no `{name}` column")));
    let n = t.rows.len().checked_sub(1).ok_or_else(|| shape_error(path, "empty table"))?;
    let mut q = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n);
    let mut k = Vec::with_capacity(n);
    for r in 0..=n {
        let mut m = DMatrix::zeros(nx, nx);
        for i in 0..nx {
            for j in i..nx {
                let v = t.rows[r][col(format!("q_{i}_{j}"))?];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        q.push(m);
        if r < n {
            for (prefix, out) in [("y", &mut y), ("k", &mut k)] {
                let mut m = DMatrix::zeros(nu, nx);
                for i in 0..nu {
                    for j in 0..nx {
                        m[(i, j)] = t.rows[r][col(format!("{prefix}_{i}_{j}"))?];
                    }
                }
                out.push(m);
            }
        }
    }
    let beta = t.rows.iter().map(|r| r[bc]).collect();
    Ok(Funnel { q, y, k, beta })
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => missing(path),
        _ => Error::Io(e),
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Parses and validates TOML text; `origin` prefixes syntax diagnostics.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text)
        .map_err(|e| Error::Config(format!("{origin}: {}", e.to_string().trim_end())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    let text = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Bundle {
        file: path.display().to_string(),
        reason: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationSummary {
    pub samples: usize,
    pub seed: u64,
    pub disturbance: String,
    pub passed: bool,
    pub contained: bool,
    pub feasible: bool,
    pub worst_sample: usize,
    pub worst_node: usize,
    pub worst_containment: f64,
    pub min_state_margin: f64,
    pub min_input_margin: f64,
}

impl VerificationSummary {
    pub fn new(report: &VerificationReport, seed: u64, disturbance: &str) -> Self {
        Self {
            samples: report.samples.len(),
            seed,
            disturbance: disturbance.to_string(),
            passed: report.passed(),
            contained: report.contained,
            feasible: report.feasible,
            worst_sample: report.worst.0,
            worst_node: report.worst.1,
            worst_containment: report.worst.2,
            min_state_margin: report.min_state_margin,
            min_input_margin: report.min_input_margin,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub model: String,
    pub mode: String,
    pub nodes: usize,
    pub final_time: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_delta_t: f64,
    pub final_delta_f: f64,
    pub tol_trajectory: f64,
    pub tol_funnel: f64,
    pub trajectory_cost: f64,
    pub dynamic_defect: f64,
    pub alpha: f64,
    pub lambda_w: f64,
    pub lipschitz_seed: u64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub verification: Option<VerificationSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj() -> Trajectory {
        let x0 = DVector::from_vec(vec![0.1, -0.2]);
        let x1 = DVector::from_vec(vec![1.0 / 3.0, 2.0]);
        let mut t = Trajectory::straight_line(&x0, &x1, 1, 3, 0.7);
        t.u[1][0] = std::f64::consts::PI;
        t
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        for v in [1.0 / 3.0, 1e-300, 6.02e23, -7.5e-9] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(TRAJECTORY_FILE);
        let t = traj();
        let table = trajectory_table(&t);
        assert_eq!(table.rows.len(), 4);
        table.write(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("k,t,x_0,x_1,u_0\n0,"));
        assert!(text.ends_with('\n'));
        assert_eq!(read_trajectory(&p).unwrap(), t);
    }

    #[test]
    fn funnel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(FUNNEL_FILE);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0 / 7.0]);
        let k = DMatrix::from_row_slice(1, 2, &[-0.25, 1.0 / 3.0]);
        let mut f = Funnel::from_gains(vec![q.clone(), q.clone() * 2.0, q], vec![k.clone(), k]).unwrap();
        f.beta = vec![1.0, 0.95, 0.9];
        let table = funnel_table(&f);
        assert_eq!(
            table.header,
            ["k", "beta", "q_0_0", "q_0_1", "q_1_1", "y_0_0", "y_0_1", "k_0_0", "k_0_1"]
        );
        table.write(&p).unwrap();
        assert_eq!(read_funnel(&p, 2, 1).unwrap(), f);
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_trajectory(&dir.path().join(TRAJECTORY_FILE)).unwrap_err();
        assert!(err.to_string().contains(TRAJECTORY_FILE));
    }

    #[test]
    fn config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(CONFIG_FILE);
        let cfg = RunConfig::default();
        write_config(&p, &cfg).unwrap();
        assert_eq!(read_config(&p).unwrap(), cfg);
    }

    #[test]
    fn config_diagnostics_name_the_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.cfg");
        fs::write(&p, "[problem]\nnodes = 30\nfoo = 1\n").unwrap();
        let msg = read_config(&p).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("foo"), "{msg}");

        fs::write(&p, "[convergence]\ntol_trajectory = -1.0\n").unwrap();
        let msg = read_config(&p).unwrap_err().to_string();
        assert!(msg.contains("convergence.tol_trajectory"), "{msg}");
    }
}
