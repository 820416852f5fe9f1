use nalgebra::{DMatrix, DVector};

use super::constraints::{linearize_constraints, tighten, ConstraintSet};
use crate::conic::{solve, AffineExpr, ConeProgram, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::model::DiscreteLinearization;
use crate::trajectory::Trajectory;

/// Penalty weights of the trajectory subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajWeights {
    /// Weight of `‖v_k‖₁`.
    pub w_v: f64,
    /// Weight of `‖x_k − x̂_k‖² + ‖u_k − û_k‖²`.
    pub w_tr: f64,
}

impl Default for TrajWeights {
    fn default() -> Self {
        Self {
            w_v: 1e3,
            w_tr: 0.5,
        }
    }
}

/// Convex quadratic trajectory cost `Σ_{k<N} xₖᵀ W_x xₖ + uₖᵀ W_u uₖ`.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub state_weight: DMatrix<f64>,
    pub input_weight: DMatrix<f64>,
}

impl QuadraticCost {
    pub fn input_energy(nx: usize, nu: usize) -> Self {
        Self {
            state_weight: DMatrix::zeros(nx, nx),
            input_weight: DMatrix::identity(nu, nu),
        }
    }

    pub fn eval(&self, traj: &Trajectory) -> f64 {
        (0..traj.horizon())
            .map(|k| {
                let x = &traj.x[k];
                let u = &traj.u[k];
                x.dot(&(&self.state_weight * x)) + u.dot(&(&self.input_weight * u))
            })
            .sum()
    }
}

/// Result of one trajectory update.
#[derive(Debug, Clone)]
pub struct TrajUpdate {
    pub trajectory: Trajectory,
    pub virtual_control: Vec<DVector<f64>>,
    /// `Σ_k ‖v_k‖₁`
    pub vc_norm: f64,
    /// `J_t` at the new trajectory.
    pub cost: f64,
    pub objective: f64,
    pub solver_iterations: u32,
}

fn factor_rows(l: &DMatrix<f64>, vars: &[usize], offset: Option<&DVector<f64>>) -> Vec<AffineExpr> {
    (0..l.nrows())
        .filter(|&i| l.row(i).iter().any(|&c| c != 0.0))
        .map(|i| {
            let mut e = AffineExpr::zero();
            for (j, &v) in vars.iter().enumerate() {
                e.add_scaled(&AffineExpr::var(v), l[(i, j)]);
            }
            if let Some(off) = offset {
                e.constant -= (l.row(i) * off)[0];
            }
            e
        })
        .collect()
}

/// Builds and solves the trajectory-update SOCP around `reference`.
///
/// `q_ref` (N+1 entries) and `k_ref` (N entries) are the fixed funnel used to
/// tighten the linearized state and input constraints.
#[allow(clippy::too_many_arguments)]
pub fn build_and_solve_traj_socp(
    reference: &Trajectory,
    lin: &DiscreteLinearization,
    q_ref: &[DMatrix<f64>],
    k_ref: &[DMatrix<f64>],
    cs: &ConstraintSet,
    weights: &TrajWeights,
    cost: &QuadraticCost,
    iteration: usize,
) -> Result<TrajUpdate> {
    let n = reference.horizon();
    if lin.len() != n || q_ref.len() != n + 1 || k_ref.len() != n {
        return Err(Error::contract(
            "reference trajectory, linearization and funnel must share the time grid",
        ));
    }
    if !(weights.w_v > 0.0 && weights.w_tr > 0.0) {
        return Err(Error::contract("trajectory weights must be positive"));
    }
    let nx = reference.nx();
    let nu = reference.nu();
    let halfspaces = linearize_constraints(cs, reference)?;

    let mut p = ConeProgram::new();
    let xs: Vec<Vec<usize>> = (0..=n).map(|_| p.add_vars(nx)).collect();
    let us: Vec<Vec<usize>> = (0..n).map(|_| p.add_vars(nu)).collect();
    let vs: Vec<Vec<usize>> = (0..n).map(|_| p.add_vars(nx)).collect();
    let ss: Vec<Vec<usize>> = (0..n).map(|_| p.add_vars(nx)).collect();

    // linearized dynamics with virtual control
    for k in 0..n {
        let node = &lin.nodes[k];
        let rows = (0..nx)
            .map(|i| {
                let mut e = AffineExpr::var(xs[k + 1][i]) - AffineExpr::var(vs[k][i]);
                for j in 0..nx {
                    e.add_scaled(&AffineExpr::var(xs[k][j]), -node.a[(i, j)]);
                }
                for j in 0..nu {
                    e.add_scaled(&AffineExpr::var(us[k][j]), -node.b[(i, j)]);
                }
                e.constant -= node.z[i];
                e
            })
            .collect();
        p.add_eq(rows);
        // s ≥ |v|
        let mut abs_rows = Vec::with_capacity(2 * nx);
        for i in 0..nx {
            abs_rows.push(AffineExpr::var(ss[k][i]) - AffineExpr::var(vs[k][i]));
            abs_rows.push(AffineExpr::var(ss[k][i]) + AffineExpr::var(vs[k][i]));
            p.add_cost(ss[k][i], weights.w_v);
        }
        p.add_nonneg(abs_rows);
    }

    // boundary conditions
    let bc = |vars: &[usize], target: &DVector<f64>| -> Vec<AffineExpr> {
        vars.iter()
            .zip(target.iter())
            .map(|(&v, &t)| AffineExpr::var(v) - AffineExpr::constant(t))
            .collect()
    };
    p.add_eq(bc(&xs[0], &cs.x_i));
    p.add_eq(bc(&xs[n], &cs.x_f));

    // funnel-tightened constraints
    for (k, hss) in halfspaces.state.iter().enumerate() {
        let rows = hss
            .iter()
            .map(|hs| {
                let b = tighten(hs, &q_ref[k], None)?;
                let mut e = AffineExpr::constant(b);
                for (j, &v) in xs[k].iter().enumerate() {
                    e.add_scaled(&AffineExpr::var(v), -hs.a[j]);
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        p.add_nonneg(rows);
    }
    for (k, hss) in halfspaces.input.iter().enumerate() {
        let rows = hss
            .iter()
            .map(|hs| {
                let b = tighten(hs, &q_ref[k], Some(&k_ref[k]))?;
                let mut e = AffineExpr::constant(b);
                for (j, &v) in us[k].iter().enumerate() {
                    e.add_scaled(&AffineExpr::var(v), -hs.a[j]);
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        p.add_nonneg(rows);
    }

    // J_t and the trust region enter the quadratic objective
    let lx = psd_sqrt(&cost.state_weight, 1e-12)?;
    let lu = psd_sqrt(&cost.input_weight, 1e-12)?;
    let mut jt_rows = Vec::new();
    for k in 0..n {
        jt_rows.extend(factor_rows(&lx, &xs[k], None));
        jt_rows.extend(factor_rows(&lu, &us[k], None));
    }
    p.add_sum_of_squares(&jt_rows, 1.0);

    let eye_x = DMatrix::identity(nx, nx);
    let eye_u = DMatrix::identity(nu, nu);
    let mut tr_rows = Vec::new();
    for k in 0..n {
        tr_rows.extend(factor_rows(&eye_x, &xs[k], Some(&reference.x[k])));
        tr_rows.extend(factor_rows(&eye_u, &us[k], Some(&reference.u[k])));
    }
    p.add_sum_of_squares(&tr_rows, weights.w_tr);

    let res = solve(&p);
    if !res.status.is_usable() {
        return Err(Error::TrajectoryUpdate {
            iteration,
            status: res.status.to_string(),
        });
    }
    if res.status == SolveStatus::Inaccurate {
        log::warn!("trajectory subproblem solved to reduced accuracy at iteration {iteration}");
    }
    let pick = |vars: &[usize]| DVector::from_iterator(vars.len(), vars.iter().map(|&v| res.x[v]));
    let mut x: Vec<DVector<f64>> = xs.iter().map(|v| pick(v)).collect();
    // boundary rows are equalities; pin them to remove solver round-off
    x[0] = cs.x_i.clone();
    x[n] = cs.x_f.clone();
    let u: Vec<DVector<f64>> = us.iter().map(|v| pick(v)).collect();
    let virtual_control: Vec<DVector<f64>> = vs.iter().map(|v| pick(v)).collect();
    let vc_norm = virtual_control.iter().map(|v| v.lp_norm(1)).sum();
    let trajectory = Trajectory::new(reference.t.clone(), x, u)?;
    Ok(TrajUpdate {
        cost: cost.eval(&trajectory),
        trajectory,
        virtual_control,
        vc_norm,
        objective: res.objective,
        solver_iterations: res.iterations,
    })
}
