//! Sampling-based estimates of the local Lipschitz constants `γ_k` of the
//! lumped nonlinearity over the current funnel and the unit disturbance ball.
//!
//! The linear part of the dynamics at each node is the Jacobian, so the
//! nonlinearity seen by the funnel update is the first-order remainder
//! `φ(q) − φ(q̄) − ∂φ(q̄)(q − q̄)`. Two estimators are provided: the direct ratio
//! of that remainder, and the indirect minimum-norm gain that explains the
//! discrete propagation residual through `E`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{pinv, psd_sqrt};
use crate::model::{discrete_step, DiscreteLinearization, Discretization, SystemModel};
use crate::trajectory::Trajectory;

/// Samples with `‖δq‖` below this are discarded.
pub const DQ_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LipschitzMethod {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllipsoidSampling {
    Surface,
    Volume,
}

#[derive(Debug, Clone, Copy)]
pub struct LipschitzConfig {
    pub samples: usize,
    pub safety: f64,
    pub seed: u64,
    pub method: LipschitzMethod,
    pub sampling: EllipsoidSampling,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            safety: 1.1,
            seed: 0,
            method: LipschitzMethod::Indirect,
            sampling: EllipsoidSampling::Surface,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LipschitzEstimate {
    pub gamma: Vec<f64>,
    pub samples: usize,
    /// Retained ratios per node.
    pub ratios: Vec<Vec<f64>>,
}

/// One sampled funnel deviation and disturbance.
#[derive(Debug, Clone)]
pub struct FunnelSample {
    pub eta: DVector<f64>,
    pub w: DVector<f64>,
}

/// Random unit vector.
pub fn unit_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let d: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm = d.norm();
        if norm > 1e-12 {
            return d / norm;
        }
    }
}

/// Uniform sample from the unit ball.
pub fn unit_ball(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    if n == 0 {
        return DVector::zeros(0);
    }
    let r: f64 = Uniform::new(0.0, 1.0).unwrap().sample(rng);
    unit_vector(n, rng) * r.powf(1.0 / n as f64)
}

/// Deterministic per-node stream.
pub fn node_rng(seed: u64, node: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng
}

/// Draws `(η, w)` pairs with `η` on (or in) `E_Q` and `w` in the unit ball.
pub fn sample_funnel(
    q: &DMatrix<f64>,
    nw: usize,
    count: usize,
    sampling: EllipsoidSampling,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FunnelSample>> {
    let root = psd_sqrt(q, 1e-9)?;
    let nx = q.nrows();
    Ok((0..count)
        .map(|_| {
            let mut dir = unit_vector(nx, rng);
            if sampling == EllipsoidSampling::Volume {
                let r: f64 = Uniform::new(0.0, 1.0).unwrap().sample(rng);
                dir *= r.powf(1.0 / nx as f64);
            }
            let eta = &root * dir;
            let w = unit_ball(nw, rng);
            FunnelSample { eta, w }
        })
        .collect())
}

/// `‖φ(q) − φ(q̄)‖ / ‖q − q̄‖`, or `None` for a degenerate sample.
pub fn delta_ratio<F>(phi: F, q_bar: &DVector<f64>, q: &DVector<f64>) -> Option<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let dq = (q - q_bar).norm();
    if dq < DQ_FLOOR {
        return None;
    }
    Some((phi(q) - phi(q_bar)).norm() / dq)
}

/// Nominal values at one node.
#[derive(Debug, Clone, Copy)]
pub struct NominalNode<'a> {
    pub t: f64,
    pub x: &'a DVector<f64>,
    pub u: &'a DVector<f64>,
    pub x_next: &'a DVector<f64>,
    pub h: f64,
}

/// Direct ratio of the first-order remainder of `φ` around `q̄`.
pub fn delta_direct(
    model: &dyn SystemModel,
    nominal: NominalNode<'_>,
    gain: &DMatrix<f64>,
    sample: &FunnelSample,
) -> Option<f64> {
    let dec = model.decomposition();
    let q_bar = &dec.c * nominal.x + &dec.d * nominal.u;
    let dq = &dec.c * &sample.eta + &dec.d * (gain * &sample.eta) + &dec.g * &sample.w;
    let jac = model.phi_jacobian(&q_bar);
    let p_bar = model.phi(&q_bar);
    let remainder = |q: &DVector<f64>| model.phi(q) - &p_bar - &jac * (q - &q_bar);
    delta_ratio(remainder, &q_bar, &(&q_bar + dq))
}

/// Minimum induced 2-norm of `Δ` with `E Δ v = r`: `‖E⁺ r‖ / ‖v‖`.
///
/// Returns `Ok(None)` when `‖v‖` is below the floor and an error when `r` has
/// a component outside the range of `E`.
pub fn min_norm_gain(
    e: &DMatrix<f64>,
    r: &DVector<f64>,
    v: &DVector<f64>,
    node: usize,
) -> Result<Option<f64>> {
    let vn = v.norm();
    if vn < DQ_FLOOR {
        return Ok(None);
    }
    let e_pinv = pinv(e);
    let p = &e_pinv * r;
    let off_range = (r - e * &p).norm();
    if off_range > 1e-7 * r.norm().max(1.0) {
        return Err(Error::Estimation {
            node,
            reason: format!("propagation residual leaves range(E) by {off_range:e}"),
        });
    }
    Ok(Some(p.norm() / vn))
}

/// Indirect ratio from the discrete propagation residual
/// `r = f(x̄+η, ū+Kη, w) − f(x̄, ū, 0) − (A + B K) η − F w`.
#[allow(clippy::too_many_arguments)]
pub fn delta_indirect(
    model: &dyn SystemModel,
    disc: Discretization,
    node: usize,
    nominal: NominalNode<'_>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    e: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    sample: &FunnelSample,
) -> Result<Option<f64>> {
    let dec = model.decomposition();
    let xi = gain * &sample.eta;
    let next = discrete_step(
        model,
        disc,
        nominal.t,
        &(nominal.x + &sample.eta),
        &(nominal.u + &xi),
        &sample.w,
        nominal.h,
    );
    let eta_next = next - nominal.x_next;
    let r = eta_next - a * &sample.eta - b * &xi - f * &sample.w;
    let v = (&dec.c + &dec.d * gain) * &sample.eta + &dec.g * &sample.w;
    min_norm_gain(e, &r, &v, node)
}

/// `γ_k = κ · max_s δ_k^s`.
pub fn estimate_gamma(ratios: Vec<Vec<f64>>, samples: usize, safety: f64) -> Result<LipschitzEstimate> {
    let gamma = ratios
        .iter()
        .enumerate()
        .map(|(k, r)| {
            if r.is_empty() {
                return Err(Error::Estimation {
                    node: k,
                    reason: "no non-degenerate samples".into(),
                });
            }
            Ok(safety * r.iter().copied().fold(0.0f64, f64::max))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LipschitzEstimate {
        gamma,
        samples,
        ratios,
    })
}

/// Estimates `γ_k` for every node of `traj` by sampling the funnel
/// `(q[k], gains[k])`.
pub fn estimate_lipschitz(
    model: &dyn SystemModel,
    disc: Discretization,
    traj: &Trajectory,
    lin: &DiscreteLinearization,
    q: &[DMatrix<f64>],
    gains: &[DMatrix<f64>],
    cfg: &LipschitzConfig,
) -> Result<LipschitzEstimate> {
    let n = traj.horizon();
    let nw = model.dims().nw;
    if model.dims().np == 0 {
        return Ok(LipschitzEstimate {
            gamma: vec![0.0; n],
            samples: 0,
            ratios: vec![Vec::new(); n],
        });
    }
    let mut ratios = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = node_rng(cfg.seed, k);
        let samples = sample_funnel(&q[k], nw, cfg.samples, cfg.sampling, &mut rng)?;
        let node = &lin.nodes[k];
        let nominal = NominalNode {
            t: traj.t[k],
            x: &traj.x[k],
            u: &traj.u[k],
            x_next: &node.x_next,
            h: node.h,
        };
        let mut kept = Vec::with_capacity(samples.len());
        for s in &samples {
            let d = match cfg.method {
                LipschitzMethod::Direct => delta_direct(model, nominal, &gains[k], s),
                LipschitzMethod::Indirect => delta_indirect(
                    model, disc, k, nominal, &node.a, &node.b, &node.f, &node.e, &gains[k], s,
                )?,
            };
            kept.extend(d);
        }
        ratios.push(kept);
    }
    // Direct ratios live in the continuous-time nonlinearity, which enters
    // the discrete map through h·E; both estimators are therefore on the
    // same scale.
    estimate_gamma(ratios, cfg.samples, cfg.safety)
}
