use nalgebra::{DMatrix, DVector};

use super::{Decomposition, DomainBox, Jacobians, ModelDims, SystemModel};

/// `ẋ = A x + B u + F w` with an empty nonlinearity.
#[derive(Debug, Clone)]
pub struct LinearModel {
    name: String,
    decomposition: Decomposition,
}

impl LinearModel {
    pub fn new(name: &str, a: DMatrix<f64>, b: DMatrix<f64>, f: DMatrix<f64>) -> Self {
        let nx = a.nrows();
        let (nu, nw) = (b.ncols(), f.ncols());
        Self {
            name: name.to_string(),
            decomposition: Decomposition {
                a_lin: a,
                b_lin: b,
                f_lin: f,
                offset: DVector::zeros(nx),
                e: DMatrix::zeros(nx, 0),
                c: DMatrix::zeros(0, nx),
                d: DMatrix::zeros(0, nu),
                g: DMatrix::zeros(0, nw),
            },
        }
    }

    /// `ẋ = (v, u)` with one disturbance channel on the velocity.
    pub fn double_integrator(disturbance_gain: f64) -> Self {
        Self::new(
            "double_integrator",
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, disturbance_gain]),
        )
    }
}

impl SystemModel for LinearModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dims(&self) -> ModelDims {
        ModelDims {
            nx: self.decomposition.a_lin.nrows(),
            nu: self.decomposition.b_lin.ncols(),
            nw: self.decomposition.f_lin.ncols(),
            np: 0,
            nq: 0,
        }
    }

    fn rhs(&self, _t: f64, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let d = &self.decomposition;
        &d.a_lin * x + &d.b_lin * u + &d.f_lin * w
    }

    fn rhs_jacobians(
        &self,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _w: &DVector<f64>,
    ) -> Jacobians {
        let d = &self.decomposition;
        Jacobians {
            a: d.a_lin.clone(),
            b: d.b_lin.clone(),
            f: d.f_lin.clone(),
        }
    }

    fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    fn phi(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn domain(&self) -> DomainBox {
        let d = self.dims();
        DomainBox {
            x_lo: DVector::from_element(d.nx, -5.0),
            x_hi: DVector::from_element(d.nx, 5.0),
            u_lo: DVector::from_element(d.nu, -5.0),
            u_hi: DVector::from_element(d.nu, 5.0),
        }
    }
}
