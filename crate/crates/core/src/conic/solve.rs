use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DVector;

use super::program::{Cone, ConeProgram};
use super::svec_unpack;
use crate::linalg::min_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// The solver stopped at a point meeting only its relaxed tolerances.
    Inaccurate,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Inaccurate)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_gap_abs: 1e-8,
            tol_gap_rel: 1e-8,
            tol_feas: 1e-8,
            max_iter: 200,
        }
    }
}

pub fn solve(p: &ConeProgram) -> SolveResult {
    solve_with(p, &SolverSettings::default())
}

/// Solves `p` with Clarabel. Rows `e(x) ∈ K` become `s = b − A x ∈ K` with
/// `A = −∇e` and `b = e(0)`.
pub fn solve_with(p: &ConeProgram, settings: &SolverSettings) -> SolveResult {
    let n = p.num_vars();
    let mut ii = Vec::new();
    let mut jj = Vec::new();
    let mut vv = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::with_capacity(p.blocks().len());
    let mut row = 0;
    for block in p.blocks() {
        for r in &block.rows {
            for &(j, c) in &r.terms {
                ii.push(row);
                jj.push(j);
                vv.push(-c);
            }
            b.push(r.constant);
            row += 1;
        }
        cones.push(match block.cone {
            Cone::Zero(k) => SupportedConeT::ZeroConeT(k),
            Cone::Nonneg(k) => SupportedConeT::NonnegativeConeT(k),
            Cone::SecondOrder(k) => SupportedConeT::SecondOrderConeT(k),
            Cone::Psd(k) => SupportedConeT::PSDTriangleConeT(k),
        });
    }
    let a = CscMatrix::new_from_triplets(row, n, ii, jj, vv);
    let (pi, pj, pv): (Vec<usize>, Vec<usize>, Vec<f64>) = p
        .quadratic()
        .iter()
        .fold((Vec::new(), Vec::new(), Vec::new()), |mut acc, &(i, j, v)| {
            acc.0.push(i);
            acc.1.push(j);
            acc.2.push(v);
            acc
        });
    let pmat = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    let q = p.objective().to_vec();

    let cfg = DefaultSettings {
        verbose: false,
        tol_gap_abs: settings.tol_gap_abs,
        tol_gap_rel: settings.tol_gap_rel,
        tol_feas: settings.tol_feas,
        max_iter: settings.max_iter,
        ..DefaultSettings::default()
    };
    let failed = |status| SolveResult {
        status,
        x: vec![f64::NAN; n],
        objective: f64::NAN,
        iterations: 0,
    };
    let mut solver = match DefaultSolver::new(&pmat, &q, &a, &b, &cones, cfg) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("conic solver rejected program: {e}");
            return failed(SolveStatus::NumericalFailure);
        }
    };
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        _ => SolveStatus::NumericalFailure,
    };
    SolveResult {
        status,
        objective: p.objective_value(&sol.x),
        x: sol.x.clone(),
        iterations: sol.iterations,
    }
}

/// Per-block cone membership margin at `x`: smallest entry for nonnegative
/// blocks, `t − ‖x‖` for second-order blocks, smallest eigenvalue for PSD
/// blocks and `−max |row|` for equality blocks. Negative means violated.
pub fn cone_margins(p: &ConeProgram, x: &[f64]) -> Vec<f64> {
    p.blocks()
        .iter()
        .map(|block| {
            let vals: Vec<f64> = block.rows.iter().map(|r| r.eval(x)).collect();
            match block.cone {
                Cone::Zero(_) => -vals.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                Cone::Nonneg(_) => vals.iter().copied().fold(f64::INFINITY, f64::min),
                Cone::SecondOrder(_) => {
                    vals[0] - vals[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
                }
                Cone::Psd(side) => {
                    let m = svec_unpack(&DVector::from_vec(vals), side)
                        .expect("packed length matches cone");
                    min_eigenvalue(&m)
                }
            }
        })
        .collect()
}
