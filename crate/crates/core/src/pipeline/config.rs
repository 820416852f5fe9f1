use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funnelopt::FunnelWeights;
use crate::lipschitz::{EllipsoidSampling, LipschitzConfig, LipschitzMethod};
use crate::model::{Discretization, SystemModel};
use crate::trajopt::{ConstraintSet, EllipseObstacle, QuadraticCost, ScalarConstraint, TrajWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Trajectory and funnel are optimized together.
    Joint,
    /// Trajectory only, without funnel tightening.
    ScpOnly,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Mode::Joint),
            "scp-only" => Ok(Mode::ScpOnly),
            other => Err(Error::Config(format!(
                "problem.mode: expected \"joint\" or \"scp-only\", got \"{other}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMethod {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub model: String,
    pub nodes: usize,
    pub final_time: f64,
    pub mode: Mode,
    /// RK4 substeps per interval.
    pub rk4_substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundarySection {
    pub x_initial: Vec<f64>,
    pub x_final: Vec<f64>,
    /// Diagonal of `Q_i`.
    pub q_initial: Vec<f64>,
    /// Diagonal of `Q_f`.
    pub q_final: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub center: [f64; 2],
    pub diameters: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintSection {
    /// `|u_j| ≤ input_bounds[j]`.
    pub input_bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    /// Diagonal state weight of `J_t`.
    pub state_weight: Vec<f64>,
    /// Diagonal input weight of `J_t`.
    pub input_weight: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSection {
    pub virtual_control: f64,
    pub trust_region: f64,
    pub funnel_trust_region: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovSection {
    pub alpha: f64,
    /// Candidate `λ^w` as fractions of `α`.
    pub lambda_w_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipschitzSection {
    pub samples: usize,
    pub safety: f64,
    pub seed: u64,
    pub method: GammaMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub tol_trajectory: f64,
    pub tol_funnel: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialGuessSection {
    /// Diameters of the initial funnel ellipsoids.
    pub funnel_diameters: Vec<f64>,
    pub lqr_state_weight: f64,
    pub lqr_input_weight: f64,
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub boundary: BoundarySection,
    #[serde(rename = "obstacle")]
    pub obstacles: Vec<ObstacleConfig>,
    pub constraints: ConstraintSection,
    pub cost: CostSection,
    pub weights: WeightSection,
    pub lyapunov: LyapunovSection,
    pub lipschitz: LipschitzSection,
    pub convergence: ConvergenceSection,
    pub initial_guess: InitialGuessSection,
}

fn deg(x: f64) -> f64 {
    x.to_radians()
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            model: "unicycle".into(),
            nodes: 30,
            final_time: 3.0,
            mode: Mode::Joint,
            rk4_substeps: 10,
        }
    }
}

impl Default for BoundarySection {
    fn default() -> Self {
        let th = deg(20.0).powi(2);
        Self {
            x_initial: vec![0.0, 0.0, 0.0],
            x_final: vec![5.0, 5.0, 0.0],
            q_initial: vec![0.4 * 0.4, 0.4 * 0.4, th],
            q_final: vec![0.5 * 0.5, 0.5 * 0.5, th],
        }
    }
}

impl Default for ConstraintSection {
    fn default() -> Self {
        Self {
            input_bounds: vec![4.0, 2.5],
        }
    }
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            state_weight: vec![0.0; 3],
            input_weight: vec![1.0; 2],
        }
    }
}

impl Default for WeightSection {
    fn default() -> Self {
        let t = TrajWeights::default();
        Self {
            virtual_control: t.w_v,
            trust_region: t.w_tr,
            funnel_trust_region: FunnelWeights::default().w_trf,
        }
    }
}

impl Default for LyapunovSection {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            lambda_w_fractions: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

impl Default for LipschitzSection {
    fn default() -> Self {
        Self {
            samples: 100,
            safety: 1.1,
            seed: 0,
            method: GammaMethod::Indirect,
        }
    }
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            tol_trajectory: 1e-3,
            tol_funnel: 1e-4,
            max_iterations: 30,
        }
    }
}

impl Default for InitialGuessSection {
    fn default() -> Self {
        Self {
            funnel_diameters: vec![0.8, 0.8, deg(40.0)],
            lqr_state_weight: 1.0,
            lqr_input_weight: 1.0,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSection::default(),
            boundary: BoundarySection::default(),
            obstacles: vec![
                ObstacleConfig {
                    center: [1.0, 2.0],
                    diameters: [1.5, 3.0],
                },
                ObstacleConfig {
                    center: [4.0, 3.0],
                    diameters: [1.5, 3.0],
                },
            ],
            constraints: ConstraintSection::default(),
            cost: CostSection::default(),
            weights: WeightSection::default(),
            lyapunov: LyapunovSection::default(),
            lipschitz: LipschitzSection::default(),
            convergence: ConvergenceSection::default(),
            initial_guess: InitialGuessSection::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{field} must be positive and finite, got {v}")))
    }
}

fn length(field: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Config(format!(
            "{field} must have {n} entries, got {}",
            v.len()
        )));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{field} has a non-finite entry {bad}")));
    }
    Ok(())
}

fn nonnegative_entries(field: &str, v: &[f64]) -> Result<()> {
    match v.iter().find(|x| **x < 0.0) {
        Some(bad) => Err(Error::Config(format!("{field} has a negative entry {bad}"))),
        None => Ok(()),
    }
}

impl RunConfig {
    /// Field checks that do not need the model.
    pub fn validate(&self) -> Result<()> {
        if self.problem.nodes == 0 {
            return Err(Error::Config("problem.nodes must be at least 1".into()));
        }
        positive("problem.final_time", self.problem.final_time)?;
        if self.problem.rk4_substeps == 0 {
            return Err(Error::Config("problem.rk4_substeps must be at least 1".into()));
        }
        positive("convergence.tol_trajectory", self.convergence.tol_trajectory)?;
        positive("convergence.tol_funnel", self.convergence.tol_funnel)?;
        if self.convergence.max_iterations == 0 {
            return Err(Error::Config("convergence.max_iterations must be at least 1".into()));
        }
        let a = self.lyapunov.alpha;
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Config(format!("lyapunov.alpha must lie in (0, 1], got {a}")));
        }
        if self.lyapunov.lambda_w_fractions.is_empty() {
            return Err(Error::Config("lyapunov.lambda_w_fractions must not be empty".into()));
        }
        if let Some(bad) = self.lyapunov.lambda_w_fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(Error::Config(format!(
                "lyapunov.lambda_w_fractions entries must lie in (0, 1), got {bad}"
            )));
        }
        positive("weights.virtual_control", self.weights.virtual_control)?;
        positive("weights.trust_region", self.weights.trust_region)?;
        if !(self.weights.funnel_trust_region >= 0.0) {
            return Err(Error::Config("weights.funnel_trust_region must be nonnegative".into()));
        }
        if self.lipschitz.samples == 0 {
            return Err(Error::Config("lipschitz.samples must be at least 1".into()));
        }
        positive("lipschitz.safety", self.lipschitz.safety)?;
        positive("initial_guess.lqr_state_weight", self.initial_guess.lqr_state_weight)?;
        positive("initial_guess.lqr_input_weight", self.initial_guess.lqr_input_weight)?;
        for (i, o) in self.obstacles.iter().enumerate() {
            positive(&format!("obstacle[{i}].diameters[0]"), o.diameters[0])?;
            positive(&format!("obstacle[{i}].diameters[1]"), o.diameters[1])?;
        }
        for (i, b) in self.constraints.input_bounds.iter().enumerate() {
            positive(&format!("constraints.input_bounds[{i}]"), *b)?;
        }
        nonnegative_entries("boundary.q_initial", &self.boundary.q_initial)?;
        nonnegative_entries("boundary.q_final", &self.boundary.q_final)?;
        nonnegative_entries("cost.state_weight", &self.cost.state_weight)?;
        nonnegative_entries("cost.input_weight", &self.cost.input_weight)?;
        for (i, d) in self.initial_guess.funnel_diameters.iter().enumerate() {
            positive(&format!("initial_guess.funnel_diameters[{i}]"), *d)?;
        }
        Ok(())
    }

    /// Dimension checks against the model.
    pub fn validate_for(&self, model: &dyn SystemModel) -> Result<()> {
        self.validate()?;
        let dims = model.dims();
        length("boundary.x_initial", &self.boundary.x_initial, dims.nx)?;
        length("boundary.x_final", &self.boundary.x_final, dims.nx)?;
        length("boundary.q_initial", &self.boundary.q_initial, dims.nx)?;
        length("boundary.q_final", &self.boundary.q_final, dims.nx)?;
        length("cost.state_weight", &self.cost.state_weight, dims.nx)?;
        length("cost.input_weight", &self.cost.input_weight, dims.nu)?;
        length("initial_guess.funnel_diameters", &self.initial_guess.funnel_diameters, dims.nx)?;
        if !self.constraints.input_bounds.is_empty() {
            length("constraints.input_bounds", &self.constraints.input_bounds, dims.nu)?;
        }
        if !self.obstacles.is_empty() && dims.nx < 2 {
            return Err(Error::Config("obstacles need at least two state coordinates".into()));
        }
        Ok(())
    }

    pub fn discretization(&self) -> Discretization {
        Discretization::Rk4 {
            substeps: self.problem.rk4_substeps,
        }
    }

    pub fn lambda_w_grid(&self) -> Vec<f64> {
        self.lyapunov
            .lambda_w_fractions
            .iter()
            .map(|f| f * self.lyapunov.alpha)
            .collect()
    }

    pub fn traj_weights(&self) -> TrajWeights {
        TrajWeights {
            w_v: self.weights.virtual_control,
            w_tr: self.weights.trust_region,
        }
    }

    pub fn funnel_weights(&self) -> FunnelWeights {
        FunnelWeights {
            w_trf: self.weights.funnel_trust_region,
            ..FunnelWeights::default()
        }
    }

    pub fn lipschitz_config(&self) -> LipschitzConfig {
        LipschitzConfig {
            samples: self.lipschitz.samples,
            safety: self.lipschitz.safety,
            seed: self.lipschitz.seed,
            method: match self.lipschitz.method {
                GammaMethod::Direct => LipschitzMethod::Direct,
                GammaMethod::Indirect => LipschitzMethod::Indirect,
            },
            sampling: EllipsoidSampling::Surface,
        }
    }

    pub fn cost(&self) -> QuadraticCost {
        QuadraticCost {
            state_weight: diag(&self.cost.state_weight),
            input_weight: diag(&self.cost.input_weight),
        }
    }

    pub fn obstacle_constraints(&self) -> Vec<EllipseObstacle> {
        self.obstacles
            .iter()
            .map(|o| EllipseObstacle::new(o.center, o.diameters))
            .collect()
    }

    pub fn constraint_set(&self) -> ConstraintSet {
        let state = self
            .obstacle_constraints()
            .into_iter()
            .map(|o| Arc::new(o) as Arc<dyn ScalarConstraint>)
            .collect();
        ConstraintSet {
            state,
            input: ConstraintSet::box_input_constraints(&self.constraints.input_bounds),
            x_i: DVector::from_column_slice(&self.boundary.x_initial),
            x_f: DVector::from_column_slice(&self.boundary.x_final),
            q_i: diag(&self.boundary.q_initial),
            q_f: diag(&self.boundary.q_final),
        }
    }
}

pub(crate) fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Unicycle;

    #[test]
    fn defaults_describe_the_benchmark() {
        let c = RunConfig::default();
        c.validate_for(&Unicycle::default()).unwrap();
        let cs = c.constraint_set();
        assert!((cs.q_i[(0, 0)] - 0.16).abs() < 1e-15);
        assert!((cs.q_i[(2, 2)] - (20f64.to_radians()).powi(2)).abs() < 1e-15);
        assert!((cs.q_f[(1, 1)] - 0.25).abs() < 1e-15);
        assert_eq!(cs.state.len(), 2);
        assert_eq!(cs.input.len(), 4);
        // initial funnel equals Q_i
        let d = &c.initial_guess.funnel_diameters;
        for i in 0..3 {
            assert!((d[i] * d[i] / 4.0 - cs.q_i[(i, i)]).abs() < 1e-15);
        }
        let grid = c.lambda_w_grid();
        assert!((grid[0] - 0.099).abs() < 1e-15);
    }

    #[test]
    fn bad_fields_are_named() {
        let mut c = RunConfig::default();
        c.convergence.tol_trajectory = -1.0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("convergence.tol_trajectory"));
        let mut c = RunConfig::default();
        c.boundary.x_initial = vec![0.0; 2];
        let msg = c.validate_for(&Unicycle::default()).unwrap_err().to_string();
        assert!(msg.contains("boundary.x_initial"));
        let mut c = RunConfig::default();
        c.lyapunov.alpha = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mode_parses() {
        assert_eq!("joint".parse::<Mode>().unwrap(), Mode::Joint);
        assert_eq!("scp-only".parse::<Mode>().unwrap(), Mode::ScpOnly);
        assert!("both".parse::<Mode>().is_err());
    }
}
