//! Monte Carlo verification of a synthesized funnel: closed-loop rollouts of
//! the continuous model from the boundary of the initial ellipsoid under held
//! unit-norm disturbances, checked for containment and constraint
//! satisfaction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::funnel::Funnel;
use crate::linalg::{inv_quad_form, psd_sqrt, spd_inverse};
use crate::lipschitz::{node_rng, unit_vector};
use crate::model::{discrete_step, discretize_trajectory, Discretization, SystemModel};
use crate::trajectory::Trajectory;
use crate::trajopt::ConstraintSet;

/// Slack on containment and constraint margins.
pub const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceMode {
    /// Uniform on the unit sphere, held over each interval.
    Random,
    /// Unit disturbance aligned with `F_kᵀ Q_{k+1}⁻¹ (A_k + B_k K_k) η_k`.
    WorstCase,
    Zero,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub samples: usize,
    pub seed: u64,
    pub disturbance: DisturbanceMode,
    /// RK4 substeps per interval for the rollouts.
    pub substeps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            seed: 0,
            disturbance: DisturbanceMode::Random,
            substeps: 100,
        }
    }
}

/// One closed-loop rollout.
#[derive(Debug, Clone)]
pub struct RolloutPath {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
}

/// Integrates the model with `u_k = ū_k + K_k (x_k − x̄_k)` and the held
/// disturbance chosen by `disturbance(k, η_k)`.
pub fn rollout<F>(
    model: &dyn SystemModel,
    traj: &Trajectory,
    funnel: &Funnel,
    eta0: &DVector<f64>,
    substeps: usize,
    sample: usize,
    mut disturbance: F,
) -> Result<RolloutPath>
where
    F: FnMut(usize, &DVector<f64>) -> DVector<f64>,
{
    let n = traj.horizon();
    if funnel.horizon() != n {
        return Err(Error::contract("funnel and trajectory horizons differ"));
    }
    let disc = Discretization::Rk4 { substeps };
    let mut x = vec![&traj.x[0] + eta0];
    let mut u = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for k in 0..n {
        let eta = &x[k] - &traj.x[k];
        let uk = &traj.u[k] + &funnel.k[k] * &eta;
        let wk = disturbance(k, &eta);
        let next = discrete_step(model, disc, traj.t[k], &x[k], &uk, &wk, traj.step(k));
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Rollout {
                sample,
                reason: format!("non-finite state at node {}", k + 1),
            });
        }
        x.push(next);
        u.push(uk);
        w.push(wk);
    }
    Ok(RolloutPath { x, u, w })
}

/// Per-node margins `−h(·)` of the original constraints; `input[k]` for `k < N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityMargins {
    pub state: Vec<Vec<f64>>,
    pub input: Vec<Vec<f64>>,
}

impl FeasibilityMargins {
    pub fn min_state(&self, k: usize) -> f64 {
        self.state[k].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_input(&self, k: usize) -> f64 {
        self.input[k].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn check_feasibility(x: &[DVector<f64>], u: &[DVector<f64>], cs: &ConstraintSet) -> FeasibilityMargins {
    FeasibilityMargins {
        state: x
            .iter()
            .map(|xk| cs.state.iter().map(|h| -h.value(xk)).collect())
            .collect(),
        input: u
            .iter()
            .map(|uk| cs.input.iter().map(|h| -h.value(uk)).collect())
            .collect(),
    }
}

/// Result of one verification sample.
#[derive(Debug, Clone)]
pub struct SampleReport {
    pub path: RolloutPath,
    /// `η_kᵀ (β_k Q_k)⁻¹ η_k`, `k ∈ 0..=N`.
    pub containment: Vec<f64>,
    pub margins: FeasibilityMargins,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub samples: Vec<SampleReport>,
    pub contained: bool,
    pub feasible: bool,
    /// `(sample, node, value)` of the largest containment value.
    pub worst: (usize, usize, f64),
    pub min_state_margin: f64,
    pub min_input_margin: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.contained && self.feasible
    }
}

/// Rolls out `cfg.samples` trajectories from `∂E_{β_0 Q_0}` and checks them.
pub fn verify(
    model: &dyn SystemModel,
    traj: &Trajectory,
    funnel: &Funnel,
    cs: &ConstraintSet,
    cfg: &VerifyConfig,
) -> Result<VerificationReport> {
    if cfg.samples == 0 {
        return Err(Error::contract("verification needs at least one sample"));
    }
    if cfg.substeps == 0 {
        return Err(Error::contract("rollouts need at least one substep"));
    }
    let n = traj.horizon();
    let nx = traj.nx();
    let nw = model.dims().nw;
    let shapes = funnel.scaled_qs();
    let root0 = psd_sqrt(&shapes[0], 1e-12)?;
    let inverses = shapes
        .iter()
        .enumerate()
        .map(|(k, q)| {
            spd_inverse(q).ok_or(Error::Numerical {
                node: k,
                reason: "certified shape is not positive definite".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_dirs = if cfg.disturbance == DisturbanceMode::WorstCase {
        let lin = discretize_trajectory(model, Discretization::default(), traj)?;
        (0..n)
            .map(|k| {
                let nd = &lin.nodes[k];
                let a_cl = &nd.a + &nd.b * &funnel.k[k];
                (nd.f.transpose() * &inverses[k + 1], a_cl)
            })
            .collect::<Vec<(DMatrix<f64>, DMatrix<f64>)>>()
    } else {
        Vec::new()
    };

    let mut samples = Vec::with_capacity(cfg.samples);
    for s in 0..cfg.samples {
        let mut rng = node_rng(cfg.seed, s);
        let eta0 = &root0 * unit_vector(nx, &mut rng);
        let path = rollout(model, traj, funnel, &eta0, cfg.substeps, s, |k, eta| match cfg.disturbance {
            DisturbanceMode::Zero => DVector::zeros(nw),
            DisturbanceMode::Random => unit_vector(nw, &mut rng),
            DisturbanceMode::WorstCase => {
                let (ftq, a_cl) = &worst_dirs[k];
                let dir = ftq * (a_cl * eta);
                let norm = dir.norm();
                if norm > 1e-12 {
                    dir / norm
                } else {
                    unit_vector(nw, &mut rng)
                }
            }
        })?;
        let containment = (0..=n)
            .map(|k| {
                let eta = &path.x[k] - &traj.x[k];
                eta.dot(&(&inverses[k] * &eta))
            })
            .collect();
        let margins = check_feasibility(&path.x, &path.u, cs);
        samples.push(SampleReport { path, containment, margins });
    }

    let mut worst = (0, 0, f64::NEG_INFINITY);
    let mut min_state_margin = f64::INFINITY;
    let mut min_input_margin = f64::INFINITY;
    for (s, rep) in samples.iter().enumerate() {
        for (k, &c) in rep.containment.iter().enumerate() {
            if c > worst.2 {
                worst = (s, k, c);
            }
        }
        for k in 0..=n {
            min_state_margin = min_state_margin.min(rep.margins.min_state(k));
        }
        for k in 0..n {
            min_input_margin = min_input_margin.min(rep.margins.min_input(k));
        }
    }
    Ok(VerificationReport {
        contained: worst.2 <= 1.0 + VERIFY_TOL,
        feasible: min_state_margin >= -VERIFY_TOL && min_input_margin >= -VERIFY_TOL,
        worst,
        min_state_margin,
        min_input_margin,
        samples,
    })
}

/// Containment value of a single state against the certified funnel node.
pub fn containment_value(funnel: &Funnel, traj: &Trajectory, k: usize, x: &DVector<f64>) -> Option<f64> {
    inv_quad_form(&funnel.scaled_q(k), &(x - &traj.x[k]))
}
