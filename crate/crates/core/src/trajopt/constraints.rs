use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::trajectory::Trajectory;

/// Differentiable scalar constraint `h(v) ≤ 0` on a state or an input.
pub trait ScalarConstraint: Send + Sync + fmt::Debug {
    fn value(&self, v: &DVector<f64>) -> f64;
    fn gradient(&self, v: &DVector<f64>) -> DVector<f64>;
}

/// `aᵀ v − b ≤ 0`.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    pub a: DVector<f64>,
    pub b: f64,
}

impl ScalarConstraint for AffineConstraint {
    fn value(&self, v: &DVector<f64>) -> f64 {
        self.a.dot(v) - self.b
    }

    fn gradient(&self, _v: &DVector<f64>) -> DVector<f64> {
        self.a.clone()
    }
}

/// Keep-out ellipse `1 − ‖P (r − c)‖₂ ≤ 0` on two position coordinates.
#[derive(Debug, Clone)]
pub struct EllipseObstacle {
    pub center: [f64; 2],
    /// Principal diameters along the coordinate axes.
    pub diameters: [f64; 2],
    /// State indices holding the position.
    pub coords: [usize; 2],
}

impl EllipseObstacle {
    /// Norm floor guarding the gradient at the center.
    pub const NORM_FLOOR: f64 = 1e-6;

    pub fn new(center: [f64; 2], diameters: [f64; 2]) -> Self {
        Self {
            center,
            diameters,
            coords: [0, 1],
        }
    }

    fn scaled_offset(&self, v: &DVector<f64>) -> [f64; 2] {
        [
            2.0 / self.diameters[0] * (v[self.coords[0]] - self.center[0]),
            2.0 / self.diameters[1] * (v[self.coords[1]] - self.center[1]),
        ]
    }

    pub fn p_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            2.0 / self.diameters[0],
            2.0 / self.diameters[1],
        ]))
    }
}

impl ScalarConstraint for EllipseObstacle {
    fn value(&self, v: &DVector<f64>) -> f64 {
        let s = self.scaled_offset(v);
        1.0 - s[0].hypot(s[1])
    }

    fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        let s = self.scaled_offset(v);
        let n = s[0].hypot(s[1]).max(Self::NORM_FLOOR);
        let mut g = DVector::zeros(v.len());
        g[self.coords[0]] = -2.0 / self.diameters[0] * s[0] / n;
        g[self.coords[1]] = -2.0 / self.diameters[1] * s[1] / n;
        g
    }
}

/// Feasible sets and boundary data for the trajectory problem.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub state: Vec<std::sync::Arc<dyn ScalarConstraint>>,
    pub input: Vec<std::sync::Arc<dyn ScalarConstraint>>,
    pub x_i: DVector<f64>,
    pub x_f: DVector<f64>,
    pub q_i: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
}

impl ConstraintSet {
    /// `|u_j| ≤ bound_j` as two half-spaces per channel.
    pub fn box_input_constraints(bounds: &[f64]) -> Vec<std::sync::Arc<dyn ScalarConstraint>> {
        let n = bounds.len();
        let mut out: Vec<std::sync::Arc<dyn ScalarConstraint>> = Vec::with_capacity(2 * n);
        for (j, &b) in bounds.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let mut a = DVector::zeros(n);
                a[j] = sign;
                out.push(std::sync::Arc::new(AffineConstraint { a, b }));
            }
        }
        out
    }
}

/// Half-space `aᵀ v ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub a: DVector<f64>,
    pub b: f64,
}

/// First-order expansion `a = ∇h(v̂)`, `b = a·v̂ − h(v̂)`.
pub fn linearize(h: &dyn ScalarConstraint, index: usize, at: &DVector<f64>) -> Result<HalfSpace> {
    let a = h.gradient(at);
    let val = h.value(at);
    if !val.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Linearization {
            index,
            reason: "non-finite value or gradient".into(),
        });
    }
    let b = a.dot(at) - val;
    Ok(HalfSpace { a, b })
}

/// Per-node half-spaces: `state[k]` for `k ∈ 0..=N`, `input[k]` for `k ∈ 0..N`.
#[derive(Debug, Clone)]
pub struct LinearizedConstraints {
    pub state: Vec<Vec<HalfSpace>>,
    pub input: Vec<Vec<HalfSpace>>,
}

pub fn linearize_constraints(cs: &ConstraintSet, reference: &Trajectory) -> Result<LinearizedConstraints> {
    let state = reference
        .x
        .iter()
        .map(|x| {
            cs.state
                .iter()
                .enumerate()
                .map(|(i, h)| linearize(h.as_ref(), i, x))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let input = reference
        .u
        .iter()
        .map(|u| {
            cs.input
                .iter()
                .enumerate()
                .map(|(j, h)| linearize(h.as_ref(), cs.state.len() + j, u))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearizedConstraints { state, input })
}

/// Support-function tightening of `aᵀ v ≤ b` by the ellipsoid `E_Q` (state
/// form) or by `E_{K Q Kᵀ}` (input form): returns `b − ‖M^{1/2} a‖₂`.
pub fn tighten(hs: &HalfSpace, q: &DMatrix<f64>, gain: Option<&DMatrix<f64>>) -> Result<f64> {
    let m = match gain {
        Some(k) => k * q * k.transpose(),
        None => q.clone(),
    };
    if m.nrows() != hs.a.len() {
        return Err(Error::contract("half-space and shape matrix dimensions differ"));
    }
    let lam = min_eigenvalue(q);
    if lam < -1e-9 {
        return Err(Error::contract(format!(
            "shape matrix has negative eigenvalue {lam:e}"
        )));
    }
    // ‖M^{1/2} a‖² = aᵀ M a
    let s = hs.a.dot(&(&m * &hs.a)).max(0.0).sqrt();
    Ok(hs.b - s)
}
