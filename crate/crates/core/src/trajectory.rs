use nalgebra::DVector;

use crate::error::{Error, Result};

/// Nominal trajectory: `N+1` states and `N` inputs on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(t: Vec<f64>, x: Vec<DVector<f64>>, u: Vec<DVector<f64>>) -> Result<Self> {
        if x.len() != u.len() + 1 || t.len() != x.len() {
            return Err(Error::contract(format!(
                "trajectory lengths t={}, x={}, u={} (expected N+1, N+1, N)",
                t.len(),
                x.len(),
                u.len()
            )));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::contract("time grid must be strictly increasing"));
        }
        Ok(Self { t, x, u })
    }

    /// Even grid over `[0, t_f]` with states interpolated linearly and zero inputs.
    pub fn straight_line(
        x_i: &DVector<f64>,
        x_f: &DVector<f64>,
        nu: usize,
        n: usize,
        t_f: f64,
    ) -> Self {
        let t = (0..=n).map(|k| t_f * k as f64 / n as f64).collect();
        let x = (0..=n)
            .map(|k| {
                let s = k as f64 / n as f64;
                x_i * (1.0 - s) + x_f * s
            })
            .collect();
        let u = vec![DVector::zeros(nu); n];
        Self { t, x, u }
    }

    /// Number of intervals `N`.
    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    pub fn step(&self, k: usize) -> f64 {
        self.t[k + 1] - self.t[k]
    }

    pub fn nx(&self) -> usize {
        self.x[0].len()
    }

    pub fn nu(&self) -> usize {
        self.u.first().map_or(0, |u| u.len())
    }
}
