use nalgebra::{DMatrix, DVector};

use super::SystemModel;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// How the continuous model is turned into a discrete map over one interval.
/// Inputs and disturbances are held constant over the interval in both cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    /// Classical RK4 on the state and the variational equations.
    Rk4 { substeps: usize },
    /// Forward Euler. The lumped nonlinearity then appears unchanged in the
    /// discrete map, which makes it the reference for cross-checking the
    /// Lipschitz estimators.
    Euler,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization::Rk4 { substeps: 10 }
    }
}

/// Affine model of one interval: `x⁺ ≈ A x + B u + F w + z`, exact at the
/// nominal point with `w = 0`.
#[derive(Debug, Clone)]
pub struct DiscreteNode {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub z: DVector<f64>,
    /// Discrete nonlinearity input matrix, `h·E`.
    pub e: DMatrix<f64>,
    /// `f(t_k, x̄_k, ū_k, 0)`
    pub x_next: DVector<f64>,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteLinearization {
    pub nodes: Vec<DiscreteNode>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl DiscreteLinearization {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Propagates the nonlinear model over one interval of length `h`.
pub fn discrete_step(
    model: &dyn SystemModel,
    disc: Discretization,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    match disc {
        Discretization::Euler => x + model.rhs(t, x, u, w) * h,
        Discretization::Rk4 { substeps } => {
            let m = substeps.max(1);
            let dt = h / m as f64;
            let mut xs = x.clone();
            for i in 0..m {
                let ti = t + i as f64 * dt;
                let k1 = model.rhs(ti, &xs, u, w);
                let k2 = model.rhs(ti + 0.5 * dt, &(&xs + &k1 * (0.5 * dt)), u, w);
                let k3 = model.rhs(ti + 0.5 * dt, &(&xs + &k2 * (0.5 * dt)), u, w);
                let k4 = model.rhs(ti + dt, &(&xs + &k3 * dt), u, w);
                xs += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
            xs
        }
    }
}

// Augmented state: x, Φ_x (nx×nx), Φ_u (nx×nu), Φ_w (nx×nw), all column-major.
struct Augmented {
    x: DVector<f64>,
    px: DMatrix<f64>,
    pu: DMatrix<f64>,
    pw: DMatrix<f64>,
}

impl Augmented {
    fn axpy(&self, k: &Augmented, s: f64) -> Augmented {
        Augmented {
            x: &self.x + &k.x * s,
            px: &self.px + &k.px * s,
            pu: &self.pu + &k.pu * s,
            pw: &self.pw + &k.pw * s,
        }
    }
}

fn augmented_rhs(
    model: &dyn SystemModel,
    t: f64,
    s: &Augmented,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Augmented {
    let j = model.rhs_jacobians(t, &s.x, u, w);
    Augmented {
        x: model.rhs(t, &s.x, u, w),
        px: &j.a * &s.px,
        pu: &j.a * &s.pu + &j.b,
        pw: &j.a * &s.pw + &j.f,
    }
}

/// Linearizes the discrete map around one nominal node.
pub fn discretize_node(
    model: &dyn SystemModel,
    disc: Discretization,
    node: usize,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<DiscreteNode> {
    if !(h > 0.0) {
        return Err(Error::Discretization {
            node,
            reason: format!("non-positive step {h}"),
        });
    }
    let dims = model.dims();
    let w0 = DVector::zeros(dims.nw);
    let (a, b, f, x_next) = match disc {
        Discretization::Euler => {
            let j = model.rhs_jacobians(t, x, u, &w0);
            let a = DMatrix::identity(dims.nx, dims.nx) + j.a * h;
            (a, j.b * h, j.f * h, x + model.rhs(t, x, u, &w0) * h)
        }
        Discretization::Rk4 { substeps } => {
            let m = substeps.max(1);
            let dt = h / m as f64;
            let mut s = Augmented {
                x: x.clone(),
                px: DMatrix::identity(dims.nx, dims.nx),
                pu: DMatrix::zeros(dims.nx, dims.nu),
                pw: DMatrix::zeros(dims.nx, dims.nw),
            };
            for i in 0..m {
                let ti = t + i as f64 * dt;
                let k1 = augmented_rhs(model, ti, &s, u, &w0);
                let k2 = augmented_rhs(model, ti + 0.5 * dt, &s.axpy(&k1, 0.5 * dt), u, &w0);
                let k3 = augmented_rhs(model, ti + 0.5 * dt, &s.axpy(&k2, 0.5 * dt), u, &w0);
                let k4 = augmented_rhs(model, ti + dt, &s.axpy(&k3, dt), u, &w0);
                s = Augmented {
                    x: &s.x + (k1.x + k2.x * 2.0 + k3.x * 2.0 + k4.x) * (dt / 6.0),
                    px: &s.px + (k1.px + k2.px * 2.0 + k3.px * 2.0 + k4.px) * (dt / 6.0),
                    pu: &s.pu + (k1.pu + k2.pu * 2.0 + k3.pu * 2.0 + k4.pu) * (dt / 6.0),
                    pw: &s.pw + (k1.pw + k2.pw * 2.0 + k3.pw * 2.0 + k4.pw) * (dt / 6.0),
                };
            }
            (s.px, s.pu, s.pw, s.x)
        }
    };
    let finite = a.iter().chain(b.iter()).chain(f.iter()).chain(x_next.iter()).all(|v| v.is_finite());
    if !finite {
        return Err(Error::Discretization {
            node,
            reason: "integration produced non-finite values".into(),
        });
    }
    let z = &x_next - &a * x - &b * u;
    Ok(DiscreteNode {
        a,
        b,
        f,
        z,
        e: &model.decomposition().e * h,
        x_next,
        h,
    })
}

/// Linearizes every interval of a trajectory.
pub fn discretize_trajectory(
    model: &dyn SystemModel,
    disc: Discretization,
    traj: &Trajectory,
) -> Result<DiscreteLinearization> {
    let nodes = (0..traj.horizon())
        .map(|k| discretize_node(model, disc, k, traj.t[k], &traj.x[k], &traj.u[k], traj.step(k)))
        .collect::<Result<Vec<_>>>()?;
    let dec = model.decomposition();
    Ok(DiscreteLinearization {
        nodes,
        c: dec.c.clone(),
        d: dec.d.clone(),
        g: dec.g.clone(),
    })
}
