use nalgebra::{DMatrix, DVector};

use super::config::{diag, RunConfig};
use crate::error::{Error, Result};
use crate::funnel::Funnel;
use crate::linalg::symmetrize;
use crate::model::{discretize_trajectory, SystemModel};
use crate::trajectory::Trajectory;

/// One backward step of the discrete Riccati recursion; returns
/// `(P_k, K_k)` with `K_k = −(R + BᵀPB)⁻¹ BᵀPA` for the law `u = Kη`.
pub fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p_next: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let bt_p = b.transpose() * p_next;
    let gram = r + &bt_p * b;
    let k = -gram.cholesky()?.solve(&(&bt_p * a));
    let a_cl = a + b * &k;
    let p = symmetrize(&(q + k.transpose() * r * &k + a_cl.transpose() * p_next * &a_cl));
    if p.iter().all(|v| v.is_finite()) && k.iter().all(|v| v.is_finite()) {
        Some((p, k))
    } else {
        None
    }
}

/// Finite-horizon LQR gains `K_0..K_{N−1}` with terminal cost `P_N = q`.
pub fn riccati_gains(
    a: &[DMatrix<f64>],
    b: &[DMatrix<f64>],
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let n = a.len();
    let mut p = q.clone();
    let mut gains = vec![DMatrix::zeros(0, 0); n];
    for k in (0..n).rev() {
        let (pk, kk) = riccati_step(&a[k], &b[k], q, r, &p).ok_or_else(|| {
            Error::Initialization(format!("Riccati recursion diverged at node {k}"))
        })?;
        p = pk;
        gains[k] = kk;
    }
    Ok(gains)
}

/// Straight-line states with zero inputs, LQR gains on the linearization
/// around that guess and diagonal shapes `diag(d²/4)`.
pub fn initial_guess(model: &dyn SystemModel, cfg: &RunConfig) -> Result<(Trajectory, Funnel)> {
    cfg.validate_for(model)?;
    let dims = model.dims();
    let n = cfg.problem.nodes;
    let x_i = DVector::from_column_slice(&cfg.boundary.x_initial);
    let x_f = DVector::from_column_slice(&cfg.boundary.x_final);
    let traj = Trajectory::straight_line(&x_i, &x_f, dims.nu, n, cfg.problem.final_time);
    let lin = discretize_trajectory(model, cfg.discretization(), &traj)?;
    let a: Vec<_> = lin.nodes.iter().map(|nd| nd.a.clone()).collect();
    let b: Vec<_> = lin.nodes.iter().map(|nd| nd.b.clone()).collect();
    let qw = DMatrix::identity(dims.nx, dims.nx) * cfg.initial_guess.lqr_state_weight;
    let rw = DMatrix::identity(dims.nu, dims.nu) * cfg.initial_guess.lqr_input_weight;
    let gains = riccati_gains(&a, &b, &qw, &rw)?;
    let shape: Vec<f64> = cfg
        .initial_guess
        .funnel_diameters
        .iter()
        .map(|d| d * d / 4.0)
        .collect();
    let funnel = Funnel::from_gains(vec![diag(&shape); n + 1], gains)?;
    Ok((traj, funnel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Unicycle;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_riccati_fixed_point() {
        let n = 200;
        let gains = riccati_gains(&vec![s(1.0); n], &vec![s(1.0); n], &s(1.0), &s(1.0)).unwrap();
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((gains[0][(0, 0)] + p / (1.0 + p)).abs() < 1e-8);
        // the recursion itself converges to the golden ratio
        let mut pk = s(1.0);
        for _ in 0..200 {
            pk = riccati_step(&s(1.0), &s(1.0), &s(1.0), &s(1.0), &pk).unwrap().0;
        }
        assert!((pk[(0, 0)] - p).abs() < 1e-8);
    }

    #[test]
    fn riccati_divergence_is_reported() {
        let r = riccati_gains(&vec![s(f64::MAX); 3], &vec![s(1.0); 3], &s(1.0), &s(1.0));
        assert!(matches!(r, Err(Error::Initialization(_))));
    }

    #[test]
    fn benchmark_guess() {
        let cfg = RunConfig::default();
        let (traj, funnel) = initial_guess(&Unicycle::default(), &cfg).unwrap();
        assert_eq!(traj.x[0].as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(traj.x[30].as_slice(), &[5.0, 5.0, 0.0]);
        assert!(traj.u.iter().all(|u| u.norm() == 0.0));
        assert_eq!(funnel.q.len(), 31);
        assert_eq!(funnel.k.len(), 30);
        assert_eq!(funnel.q[0], cfg.constraint_set().q_i);
    }

    #[test]
    fn coincident_endpoints_give_constant_guess() {
        let mut cfg = RunConfig::default();
        cfg.boundary.x_final = cfg.boundary.x_initial.clone();
        let (traj, _) = initial_guess(&Unicycle::default(), &cfg).unwrap();
        assert!(traj.x.iter().all(|x| x == &traj.x[0]));
        assert!(traj.u.iter().all(|u| u.norm() == 0.0));
    }
}
