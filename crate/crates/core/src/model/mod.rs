//! Continuous-time system models, their Jacobians, the lumped-nonlinearity
//! decomposition and zeroth-order-hold discretization.
//!
//! Every model is written as
//!
//! ```text
//! ẋ = A_lin x + B_lin u + F_lin w + c + E φ(C x + D u + G w)
//! ```
//!
//! where the linear part and the affine offset `c` are constant and `φ`
//! carries everything nonlinear.

mod discretize;
mod linear;
mod registry;
mod unicycle;

pub use discretize::{
    discrete_step, discretize_node, discretize_trajectory, DiscreteLinearization, DiscreteNode,
    Discretization,
};
pub use linear::LinearModel;
pub use registry::ModelRegistry;
pub use unicycle::{Unicycle, UnicycleParams};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dimensions of a model and of its lumped nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub nx: usize,
    pub nu: usize,
    pub nw: usize,
    pub np: usize,
    pub nq: usize,
}

/// Constant matrices of the converted model.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub a_lin: DMatrix<f64>,
    pub b_lin: DMatrix<f64>,
    pub f_lin: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// `nx × np`
    pub e: DMatrix<f64>,
    /// `nq × nx`
    pub c: DMatrix<f64>,
    /// `nq × nu`
    pub d: DMatrix<f64>,
    /// `nq × nw`
    pub g: DMatrix<f64>,
}

/// Axis-aligned box used for random test points.
#[derive(Debug, Clone)]
pub struct DomainBox {
    pub x_lo: DVector<f64>,
    pub x_hi: DVector<f64>,
    pub u_lo: DVector<f64>,
    pub u_hi: DVector<f64>,
}

/// Continuous Jacobians `(∂f/∂x, ∂f/∂u, ∂f/∂w)`.
#[derive(Debug, Clone)]
pub struct Jacobians {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

pub trait SystemModel: Send + Sync {
    fn name(&self) -> &str;

    fn dims(&self) -> ModelDims;

    /// Right-hand side `f_c(t, x, u, w)`.
    fn rhs(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobians. The default falls back to central differences.
    fn rhs_jacobians(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Jacobians {
        fd_jacobians(self, t, x, u, w, 1e-6)
    }

    fn decomposition(&self) -> &Decomposition;

    fn phi(&self, q: &DVector<f64>) -> DVector<f64>;

    /// Jacobian of `φ`; central differences unless overridden.
    fn phi_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let np = self.dims().np;
        let mut j = DMatrix::zeros(np, q.len());
        let h = 1e-6;
        for i in 0..q.len() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            j.set_column(i, &((self.phi(&qp) - self.phi(&qm)) / (2.0 * h)));
        }
        j
    }

    fn domain(&self) -> DomainBox;
}

fn check_len(what: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::contract(format!(
            "{what} has length {}, model expects {n}",
            v.len()
        )));
    }
    Ok(())
}

fn check_dims(
    model: &dyn SystemModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<()> {
    let d = model.dims();
    check_len("state", x, d.nx)?;
    check_len("input", u, d.nu)?;
    check_len("disturbance", w, d.nw)
}

/// Evaluates the continuous dynamics after checking dimensions.
pub fn eval_dynamics(
    model: &dyn SystemModel,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dims(model, x, u, w)?;
    Ok(model.rhs(t, x, u, w))
}

pub fn jacobians(
    model: &dyn SystemModel,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<Jacobians> {
    check_dims(model, x, u, w)?;
    Ok(model.rhs_jacobians(t, x, u, w))
}

/// Central finite-difference Jacobians of the right-hand side.
pub fn fd_jacobians<M: SystemModel + ?Sized>(
    model: &M,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    step: f64,
) -> Jacobians {
    let nx = x.len();
    let col = |dir: &dyn Fn(f64) -> DVector<f64>| (dir(step) - dir(-step)) / (2.0 * step);
    let mut a = DMatrix::zeros(nx, nx);
    for i in 0..nx {
        let c = col(&|s| {
            let mut xs = x.clone();
            xs[i] += s;
            model.rhs(t, &xs, u, w)
        });
        a.set_column(i, &c);
    }
    let mut b = DMatrix::zeros(nx, u.len());
    for i in 0..u.len() {
        let c = col(&|s| {
            let mut us = u.clone();
            us[i] += s;
            model.rhs(t, x, &us, w)
        });
        b.set_column(i, &c);
    }
    let mut f = DMatrix::zeros(nx, w.len());
    for i in 0..w.len() {
        let c = col(&|s| {
            let mut ws = w.clone();
            ws[i] += s;
            model.rhs(t, x, u, &ws)
        });
        f.set_column(i, &c);
    }
    Jacobians { a, b, f }
}

/// `q = C x + D u + G w`.
pub fn nonlinearity_q(
    model: &dyn SystemModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dims(model, x, u, w)?;
    let dec = model.decomposition();
    Ok(&dec.c * x + &dec.d * u + &dec.g * w)
}

pub fn phi(model: &dyn SystemModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("nonlinearity argument", q, model.dims().nq)?;
    Ok(model.phi(q))
}

/// Rebuilds `f_c` from the converted model. Used to validate decompositions.
pub fn reconstruct(
    model: &dyn SystemModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let dec = model.decomposition();
    let q = nonlinearity_q(model, x, u, w)?;
    Ok(&dec.a_lin * x + &dec.b_lin * u + &dec.f_lin * w + &dec.offset + &dec.e * model.phi(&q))
}
