//! Trajectory update: a convex subproblem built from the discrete
//! linearization, an L1-penalized virtual control, a quadratic trust region
//! and state/input constraints tightened by the current funnel.

mod constraints;
mod socp;

pub use constraints::{
    linearize, linearize_constraints, tighten, AffineConstraint, ConstraintSet, EllipseObstacle,
    HalfSpace, LinearizedConstraints, ScalarConstraint,
};
pub use socp::{build_and_solve_traj_socp, QuadraticCost, TrajUpdate, TrajWeights};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{discretize_trajectory, Discretization, LinearModel};
    use crate::trajectory::Trajectory;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn di_setup(n: usize) -> (LinearModel, ConstraintSet, Trajectory) {
        let m = LinearModel::double_integrator(0.0);
        let x_i = DVector::from_vec(vec![0.0, 0.0]);
        let x_f = DVector::from_vec(vec![1.0, 0.0]);
        let cs = ConstraintSet {
            state: vec![],
            input: vec![],
            x_i: x_i.clone(),
            x_f: x_f.clone(),
            q_i: DMatrix::zeros(2, 2),
            q_f: DMatrix::zeros(2, 2),
        };
        let traj = Trajectory::straight_line(&x_i, &x_f, 1, n, 1.0);
        (m, cs, traj)
    }

    /// Equality-constrained dense QP in the inputs only.
    fn dense_qp_oracle(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        reference: &Trajectory,
        x_i: &DVector<f64>,
        x_f: &DVector<f64>,
        w_tr: f64,
    ) -> Vec<f64> {
        let n = reference.horizon();
        let nx = a.nrows();
        // x_k = S_k x0 + T_k u
        let mut s = vec![DMatrix::<f64>::identity(nx, nx)];
        let mut t = vec![DMatrix::<f64>::zeros(nx, n)];
        for k in 0..n {
            let sk = a * &s[k];
            let mut tk = a * &t[k];
            for i in 0..nx {
                tk[(i, k)] += b[(i, 0)];
            }
            s.push(sk);
            t.push(tk);
        }
        let mut h = DMatrix::<f64>::identity(n, n) * (1.0 + w_tr);
        let mut g = DVector::<f64>::zeros(n);
        for k in 0..n {
            g[k] -= w_tr * reference.u[k][0];
            let off = &s[k] * x_i - &reference.x[k];
            h += t[k].transpose() * &t[k] * w_tr;
            g += t[k].transpose() * off * w_tr;
        }
        // KKT: [2H Cᵀ; C 0] [u; λ] = [−2g; d]
        let c = &t[n];
        let d = x_f - &s[n] * x_i;
        let mut kkt = DMatrix::<f64>::zeros(n + nx, n + nx);
        kkt.view_mut((0, 0), (n, n)).copy_from(&(h * 2.0));
        kkt.view_mut((n, 0), (nx, n)).copy_from(c);
        kkt.view_mut((0, n), (n, nx)).copy_from(&c.transpose());
        let mut rhs = DVector::<f64>::zeros(n + nx);
        rhs.rows_mut(0, n).copy_from(&(-g * 2.0));
        rhs.rows_mut(n, nx).copy_from(&d);
        let sol = kkt.lu().solve(&rhs).unwrap();
        sol.rows(0, n).iter().copied().collect()
    }

    #[test]
    fn matches_dense_qp_on_double_integrator() {
        let n = 10;
        let (m, cs, reference) = di_setup(n);
        let lin = discretize_trajectory(&m, Discretization::default(), &reference).unwrap();
        let zero_q = vec![DMatrix::zeros(2, 2); n + 1];
        let zero_k = vec![DMatrix::zeros(1, 2); n];
        let weights = TrajWeights::default();
        let cost = QuadraticCost::input_energy(2, 1);
        let up = build_and_solve_traj_socp(&reference, &lin, &zero_q, &zero_k, &cs, &weights, &cost, 1).unwrap();
        let oracle = dense_qp_oracle(&lin.nodes[0].a, &lin.nodes[0].b, &reference, &cs.x_i, &cs.x_f, weights.w_tr);
        for k in 0..n {
            assert!((up.trajectory.u[k][0] - oracle[k]).abs() < 1e-6, "node {k}");
        }
        assert!(up.vc_norm < 1e-6);
    }

    #[test]
    fn fixed_point_has_no_penalties() {
        let n = 10;
        let (m, cs, reference) = di_setup(n);
        let lin = discretize_trajectory(&m, Discretization::default(), &reference).unwrap();
        let zero_q = vec![DMatrix::zeros(2, 2); n + 1];
        let zero_k = vec![DMatrix::zeros(1, 2); n];
        let weights = TrajWeights::default();
        let cost = QuadraticCost::input_energy(2, 1);
        let mut traj = reference;
        // iterate to the fixed point of the trust-region penalty
        for it in 0..60 {
            let lin = discretize_trajectory(&m, Discretization::default(), &traj).unwrap();
            traj = build_and_solve_traj_socp(&traj, &lin, &zero_q, &zero_k, &cs, &weights, &cost, it).unwrap().trajectory;
        }
        let _ = lin;
        let lin = discretize_trajectory(&m, Discretization::default(), &traj).unwrap();
        let up = build_and_solve_traj_socp(&traj, &lin, &zero_q, &zero_k, &cs, &weights, &cost, 99).unwrap();
        let tr: f64 = (0..n)
            .map(|k| (&up.trajectory.x[k] - &traj.x[k]).norm_squared() + (&up.trajectory.u[k] - &traj.u[k]).norm_squared())
            .sum();
        assert!(tr * weights.w_tr < 1e-8, "trust region cost {tr}");
        assert!(up.vc_norm * weights.w_v < 1e-5);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let (m, cs, reference) = di_setup(5);
        let lin = discretize_trajectory(&m, Discretization::default(), &reference).unwrap();
        let r = build_and_solve_traj_socp(
            &reference,
            &lin,
            &vec![DMatrix::zeros(2, 2); 3],
            &vec![DMatrix::zeros(1, 2); 5],
            &cs,
            &TrajWeights::default(),
            &QuadraticCost::input_energy(2, 1),
            0,
        );
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn tightening_is_monotone_in_shape(
            entries in proptest::collection::vec(-1.0f64..1.0, 9),
            extra in proptest::collection::vec(-1.0f64..1.0, 9),
            a in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let l = DMatrix::from_vec(3, 3, entries);
            let e = DMatrix::from_vec(3, 3, extra);
            let q_small = &l * l.transpose();
            let q_big = &q_small + &e * e.transpose();
            let hs = HalfSpace { a: DVector::from_vec(a), b: 1.0 };
            let small = tighten(&hs, &q_small, None).unwrap();
            let big = tighten(&hs, &q_big, None).unwrap();
            prop_assert!(big <= small + 1e-12);
        }
    }
}
