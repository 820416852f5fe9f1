use nalgebra::{DMatrix, DVector};

use super::{Decomposition, DomainBox, Jacobians, ModelDims, SystemModel};

/// Unicycle with additive position disturbances.
///
/// State `(r_x, r_y, θ)`, input `(u_v, u_θ)`, disturbance `(w₁, w₂)`.
#[derive(Debug, Clone, Copy)]
pub struct UnicycleParams {
    pub disturbance_gain: f64,
}

impl Default for UnicycleParams {
    fn default() -> Self {
        Self {
            disturbance_gain: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Unicycle {
    params: UnicycleParams,
    decomposition: Decomposition,
}

impl Unicycle {
    pub fn new(params: UnicycleParams) -> Self {
        let g = params.disturbance_gain;
        // q = (θ, u_v), φ(q) = (q₂ cos q₁, q₂ sin q₁); u_θ enters linearly.
        let decomposition = Decomposition {
            a_lin: DMatrix::zeros(3, 3),
            b_lin: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            f_lin: DMatrix::from_row_slice(3, 2, &[g, 0.0, 0.0, g, 0.0, 0.0]),
            offset: DVector::zeros(3),
            e: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            c: DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
            d: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            g: DMatrix::zeros(2, 2),
        };
        Self {
            params,
            decomposition,
        }
    }

    pub fn params(&self) -> UnicycleParams {
        self.params
    }
}

impl Default for Unicycle {
    fn default() -> Self {
        Self::new(UnicycleParams::default())
    }
}

impl SystemModel for Unicycle {
    fn name(&self) -> &str {
        "unicycle"
    }

    fn dims(&self) -> ModelDims {
        ModelDims {
            nx: 3,
            nu: 2,
            nw: 2,
            np: 2,
            nq: 2,
        }
    }

    fn rhs(&self, _t: f64, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let g = self.params.disturbance_gain;
        let (s, c) = x[2].sin_cos();
        DVector::from_vec(vec![u[0] * c + g * w[0], u[0] * s + g * w[1], u[1]])
    }

    fn rhs_jacobians(
        &self,
        _t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _w: &DVector<f64>,
    ) -> Jacobians {
        let g = self.params.disturbance_gain;
        let (s, c) = x[2].sin_cos();
        Jacobians {
            a: DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -u[0] * s, 0.0, 0.0, u[0] * c, 0.0, 0.0, 0.0]),
            b: DMatrix::from_row_slice(3, 2, &[c, 0.0, s, 0.0, 0.0, 1.0]),
            f: DMatrix::from_row_slice(3, 2, &[g, 0.0, 0.0, g, 0.0, 0.0]),
        }
    }

    fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    fn phi(&self, q: &DVector<f64>) -> DVector<f64> {
        let (s, c) = q[0].sin_cos();
        DVector::from_vec(vec![q[1] * c, q[1] * s])
    }

    fn phi_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (s, c) = q[0].sin_cos();
        DMatrix::from_row_slice(2, 2, &[-q[1] * s, c, q[1] * c, s])
    }

    fn domain(&self) -> DomainBox {
        let pi = std::f64::consts::PI;
        DomainBox {
            x_lo: DVector::from_vec(vec![-1.0, -1.0, -pi]),
            x_hi: DVector::from_vec(vec![6.0, 6.0, pi]),
            u_lo: DVector::from_vec(vec![-4.0, -2.5]),
            u_hi: DVector::from_vec(vec![4.0, 2.5]),
        }
    }
}
