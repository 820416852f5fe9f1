use nalgebra::DMatrix;

use crate::trajectory::Trajectory;

/// `Δ_T = ‖x_N − x̂_N‖² + Σ_{k<N} ‖x_k − x̂_k‖² + ‖u_k − û_k‖²`.
pub fn delta_t(current: &Trajectory, reference: &Trajectory) -> f64 {
    let n = current.horizon();
    (current.x[n].clone() - &reference.x[n]).norm_squared()
        + (0..n)
            .map(|k| {
                (&current.x[k] - &reference.x[k]).norm_squared()
                    + (&current.u[k] - &reference.u[k]).norm_squared()
            })
            .sum::<f64>()
}

/// `Δ_F = ‖Q_N − Q̂_N‖_F² + Σ_{k<N} ‖Q_k − Q̂_k‖_F² + ‖Y_k − Ŷ_k‖_F²`.
pub fn delta_f(
    q: &[DMatrix<f64>],
    y: &[DMatrix<f64>],
    q_ref: &[DMatrix<f64>],
    y_ref: &[DMatrix<f64>],
) -> f64 {
    let n = y.len();
    (&q[n] - &q_ref[n]).norm_squared()
        + (0..n)
            .map(|k| (&q[k] - &q_ref[k]).norm_squared() + (&y[k] - &y_ref[k]).norm_squared())
            .sum::<f64>()
}
