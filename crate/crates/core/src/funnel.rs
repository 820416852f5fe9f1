use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::spd_inverse;

/// Time-varying ellipsoidal funnel `E_{β_k Q_k}` with feedback gains `K_k`.
///
/// `q` and `y` are the funnel-update solution (`Y_k = K_k Q_k`); `beta`
/// holds the support values that dilate it into a certified invariant set.
#[derive(Debug, Clone, PartialEq)]
pub struct Funnel {
    pub q: Vec<DMatrix<f64>>,
    pub y: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub beta: Vec<f64>,
}

impl Funnel {
    /// Builds a funnel from shape matrices and gains, with unit support values.
    pub fn from_gains(q: Vec<DMatrix<f64>>, k: Vec<DMatrix<f64>>) -> Result<Self> {
        if q.len() != k.len() + 1 {
            return Err(Error::contract("funnel needs N+1 shape matrices and N gains"));
        }
        let y = k.iter().zip(&q).map(|(k, q)| k * q).collect();
        let beta = vec![1.0; q.len()];
        Ok(Self { q, y, k, beta })
    }

    /// Builds a funnel from the `(Q, Y)` parameterization; `K = Y Q⁻¹`.
    pub fn from_qy(q: Vec<DMatrix<f64>>, y: Vec<DMatrix<f64>>) -> Result<Self> {
        if q.len() != y.len() + 1 {
            return Err(Error::contract("funnel needs N+1 shape matrices and N Y blocks"));
        }
        let k = y
            .iter()
            .zip(&q)
            .enumerate()
            .map(|(i, (y, q))| {
                spd_inverse(q).map(|qi| y * qi).ok_or(Error::Numerical {
                    node: i,
                    reason: "shape matrix is not positive definite".into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let beta = vec![1.0; q.len()];
        Ok(Self { q, y, k, beta })
    }

    /// All-zero funnel (no tightening); gains are zero.
    pub fn zero(n: usize, nx: usize, nu: usize) -> Self {
        Self {
            q: vec![DMatrix::zeros(nx, nx); n + 1],
            y: vec![DMatrix::zeros(nu, nx); n],
            k: vec![DMatrix::zeros(nu, nx); n],
            beta: vec![1.0; n + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.k.len()
    }

    /// Certified shape `β_k Q_k`.
    pub fn scaled_q(&self, k: usize) -> DMatrix<f64> {
        &self.q[k] * self.beta[k]
    }

    /// `K_k (β_k Q_k)`.
    pub fn scaled_y(&self, k: usize) -> DMatrix<f64> {
        &self.y[k] * self.beta[k]
    }

    pub fn scaled_qs(&self) -> Vec<DMatrix<f64>> {
        (0..self.q.len()).map(|k| self.scaled_q(k)).collect()
    }

    pub fn scaled_ys(&self) -> Vec<DMatrix<f64>> {
        (0..self.y.len()).map(|k| self.scaled_y(k)).collect()
    }
}
