//! The outer joint-synthesis loop: trajectory update, Lipschitz estimation,
//! funnel update and support scaling, repeated until both the trajectory and
//! the funnel stop moving.

mod config;
mod init;
mod metrics;

pub use config::{
    BoundarySection, ConstraintSection, ConvergenceSection, CostSection, GammaMethod,
    InitialGuessSection, LipschitzSection, LyapunovSection, Mode, ObstacleConfig, ProblemSection,
    RunConfig, WeightSection,
};
pub use init::{initial_guess, riccati_gains, riccati_step};
pub use metrics::{delta_f, delta_t};

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::funnel::Funnel;
use crate::conic::SolveStatus;
use crate::funnelopt::{build_and_solve_funnel_sdp, lambda_w_grid_search, FunnelProblem};
use crate::lipschitz::estimate_lipschitz;
use crate::model::{discrete_step, discretize_trajectory, DiscreteLinearization, SystemModel};
use crate::support::{apply_support_scaling, beta_recursion, support_bounds, BetaSequence};
use crate::trajectory::Trajectory;
use crate::trajopt::build_and_solve_traj_socp;

/// Wall time of the four steps of one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTimes {
    pub trajectory: Duration,
    pub lipschitz: Duration,
    pub funnel: Duration,
    pub support: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// One-based iteration index.
    pub iteration: usize,
    pub delta_t: f64,
    pub delta_f: f64,
    /// `J_t` of the new trajectory.
    pub trajectory_cost: f64,
    /// Funnel SDP objective; zero in trajectory-only mode.
    pub funnel_objective: f64,
    /// `Σ_k ‖v_k‖₁`.
    pub vc_norm: f64,
    pub lambda_w: f64,
    pub max_gamma: f64,
    pub max_beta: f64,
    pub times: StepTimes,
}

/// Final iterate of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    /// Funnel with support values applied.
    pub funnel: Funnel,
    pub beta: BetaSequence,
    pub gamma: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// `max_k ‖f(t_k, x̄_k, ū_k, 0) − x̄_{k+1}‖`.
    pub dynamic_defect: f64,
}

/// A failed run with the iterations completed before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub records: Vec<IterationRecord>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed iterations)", self.error, self.records.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Dynamic defect above which a finished run is reported as suspect.
pub const DEFECT_WARN: f64 = 1e-4;

/// Largest one-step mismatch of the nominal trajectory under the model.
pub fn dynamic_defect(
    model: &dyn SystemModel,
    cfg: &RunConfig,
    traj: &Trajectory,
) -> f64 {
    let w = nalgebra::DVector::zeros(model.dims().nw);
    (0..traj.horizon())
        .map(|k| {
            let next = discrete_step(
                model,
                cfg.discretization(),
                traj.t[k],
                &traj.x[k],
                &traj.u[k],
                &w,
                traj.step(k),
            );
            (next - &traj.x[k + 1]).norm()
        })
        .fold(0.0, f64::max)
}

struct FunnelStep {
    /// Pre-scaling solution.
    raw: Funnel,
    scaled: Funnel,
    beta: BetaSequence,
    gamma: Vec<f64>,
    objective: f64,
    lambda_w: f64,
}

fn funnel_step(
    model: &dyn SystemModel,
    cfg: &RunConfig,
    traj: &Trajectory,
    lin: &DiscreteLinearization,
    reference: &Funnel,
    times: &mut StepTimes,
) -> Result<FunnelStep> {
    let cs = cfg.constraint_set();
    let q_hat = reference.scaled_qs();
    let y_hat = reference.scaled_ys();

    let clock = Instant::now();
    let est = estimate_lipschitz(
        model,
        cfg.discretization(),
        traj,
        lin,
        &q_hat,
        &reference.k,
        &cfg.lipschitz_config(),
    )?;
    times.lipschitz = clock.elapsed();

    let clock = Instant::now();
    let sol = lambda_w_grid_search(&cfg.lambda_w_grid(), cfg.lyapunov.alpha, |params| {
        build_and_solve_funnel_sdp(&FunnelProblem {
            lin,
            gamma: &est.gamma,
            params,
            reference: Some((&q_hat, &y_hat)),
            weights: cfg.funnel_weights(),
            q_i: Some(&cs.q_i),
            q_f: Some(&cs.q_f),
        })
    })?;
    if sol.status == SolveStatus::Inaccurate {
        log::warn!("selected funnel SDP solved to reduced accuracy (lambda_w = {})", sol.lambda_w);
    }
    times.funnel = clock.elapsed();

    let clock = Instant::now();
    let duals = support_bounds(lin, &sol.funnel, &est.gamma)?;
    let hats: Vec<f64> = duals.iter().map(|d| d.beta_hat).collect();
    let beta = beta_recursion(&hats, cfg.lyapunov.alpha);
    let scaled = apply_support_scaling(&sol.funnel, &beta)?;
    times.support = clock.elapsed();

    Ok(FunnelStep {
        raw: sol.funnel,
        scaled,
        beta,
        gamma: est.gamma,
        objective: sol.objective,
        lambda_w: sol.lambda_w,
    })
}

/// Runs the joint synthesis (or the trajectory-only baseline) for `model`.
pub fn run(model: &dyn SystemModel, cfg: &RunConfig) -> std::result::Result<RunOutput, RunFailure> {
    let mut records = Vec::new();
    match run_inner(model, cfg, &mut records) {
        Ok(out) => Ok(out),
        Err(error) => Err(RunFailure { error, records }),
    }
}

fn run_inner(
    model: &dyn SystemModel,
    cfg: &RunConfig,
    records: &mut Vec<IterationRecord>,
) -> Result<RunOutput> {
    let (mut ref_traj, init_funnel) = initial_guess(model, cfg)?;
    let n = cfg.problem.nodes;
    let dims = model.dims();
    let cs = cfg.constraint_set();
    let cost = cfg.cost();
    let weights = cfg.traj_weights();
    let joint = cfg.problem.mode == Mode::Joint;

    let mut ref_funnel = if joint {
        init_funnel
    } else {
        Funnel::zero(n, dims.nx, dims.nu)
    };
    // pre-scaling (Q, Y) of the previous iterate, compared by Δ_F
    let mut prev_raw: (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) = (ref_funnel.q.clone(), ref_funnel.y.clone());
    let mut last_beta = beta_recursion(&vec![1.0; n], cfg.lyapunov.alpha);
    let mut last_gamma = vec![0.0; n];

    for iteration in 1..=cfg.convergence.max_iterations {
        let mut times = StepTimes::default();
        let clock = Instant::now();
        let lin_ref = discretize_trajectory(model, cfg.discretization(), &ref_traj)?;
        let q_hat = ref_funnel.scaled_qs();
        let up = build_and_solve_traj_socp(
            &ref_traj,
            &lin_ref,
            &q_hat,
            &ref_funnel.k,
            &cs,
            &weights,
            &cost,
            iteration,
        )?;
        times.trajectory = clock.elapsed();
        let traj = up.trajectory;

        let (funnel, d_f, objective, lambda_w) = if joint {
            let lin = discretize_trajectory(model, cfg.discretization(), &traj)?;
            let step = funnel_step(model, cfg, &traj, &lin, &ref_funnel, &mut times)?;
            let d_f = delta_f(&step.raw.q, &step.raw.y, &prev_raw.0, &prev_raw.1);
            prev_raw = (step.raw.q.clone(), step.raw.y.clone());
            last_beta = step.beta;
            last_gamma = step.gamma;
            (step.scaled, d_f, step.objective, step.lambda_w)
        } else {
            (Funnel::zero(n, dims.nx, dims.nu), 0.0, 0.0, 0.0)
        };
        let d_t = delta_t(&traj, &ref_traj);
        let record = IterationRecord {
            iteration,
            delta_t: d_t,
            delta_f: d_f,
            trajectory_cost: up.cost,
            funnel_objective: objective,
            vc_norm: up.vc_norm,
            lambda_w,
            max_gamma: last_gamma.iter().copied().fold(0.0, f64::max),
            max_beta: last_beta.beta.iter().copied().fold(0.0, f64::max),
            times,
        };
        log::info!(
            "iteration {iteration}: dT {d_t:.3e} dF {d_f:.3e} cost {:.6} vc {:.3e} lambda_w {lambda_w:.3} max beta {:.4} ({:.2?} / {:.2?} / {:.2?} / {:.2?})",
            up.cost,
            up.vc_norm,
            record.max_beta,
            times.trajectory,
            times.lipschitz,
            times.funnel,
            times.support,
        );
        records.push(record);
        let converged = d_t < cfg.convergence.tol_trajectory && d_f < cfg.convergence.tol_funnel;
        ref_traj = traj;
        ref_funnel = funnel;
        if converged {
            break;
        }
    }
    let converged = records
        .last()
        .is_some_and(|r| r.delta_t < cfg.convergence.tol_trajectory && r.delta_f < cfg.convergence.tol_funnel);
    let defect = dynamic_defect(model, cfg, &ref_traj);
    if defect > DEFECT_WARN {
        log::warn!("nominal trajectory violates the dynamics by {defect:.3e}; constraints may be infeasible");
    }
    Ok(RunOutput {
        dynamic_defect: defect,
        trajectory: ref_traj,
        funnel: ref_funnel,
        beta: last_beta,
        gamma: last_gamma,
        records: std::mem::take(records),
        converged,
    })
}
