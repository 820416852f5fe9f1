//! `cifsyn` command line: `solve`, `verify` and `export-figures`.

pub mod bundle;
pub mod figures;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::model::{ModelRegistry, SystemModel};
use crate::pipeline::{self, Mode, RunConfig, RunOutput};
use crate::verify::{self, DisturbanceMode, VerificationReport, VerifyConfig};
use bundle::{RunSummary, VerificationSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONTAINMENT: i32 = 3;
pub const EXIT_CONSTRAINT: i32 = 4;

pub const LOG_ENV: &str = "FUNNEL_LOG";

#[derive(Debug, Parser)]
#[command(name = "cifsyn", version, about = "Joint trajectory and invariant funnel synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the synthesis loop and write the solution bundle.
    Solve(SolveArgs),
    /// Roll out sampled closed-loop trajectories against a solution.
    Verify(VerifyArgs),
    /// Write per-figure data files derived from a solution.
    ExportFigures(ExportArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `problem.mode`.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Overrides `lipschitz.seed`; also seeds the verification rollouts.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Verification rollouts written with the solution.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Disturbance {
    Random,
    WorstCase,
    Zero,
}

impl From<Disturbance> for DisturbanceMode {
    fn from(d: Disturbance) -> Self {
        match d {
            Disturbance::Random => DisturbanceMode::Random,
            Disturbance::WorstCase => DisturbanceMode::WorstCase,
            Disturbance::Zero => DisturbanceMode::Zero,
        }
    }
}

impl Disturbance {
    fn name(self) -> &'static str {
        match self {
            Disturbance::Random => "random",
            Disturbance::WorstCase => "worst-case",
            Disturbance::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct VerifyArgs {
    /// Solution directory written by `solve`.
    #[arg(long, visible_alias = "dir")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Disturbance::Random)]
    pub disturbance: Disturbance,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ExportArgs {
    /// Solution directory written by `solve`.
    #[arg(long, visible_alias = "dir")]
    pub out: PathBuf,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::ExportFigures(a) => cmd_export_figures(&a),
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn report_error(e: &dyn std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_ERROR
}

fn load_model(cfg: &RunConfig) -> Result<std::sync::Arc<dyn SystemModel>> {
    let model = ModelRegistry::with_builtin().get(&cfg.problem.model)?;
    cfg.validate_for(model.as_ref())?;
    Ok(model)
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Joint => "joint",
        Mode::ScpOnly => "scp-only",
    }
}

fn run_verification(
    model: &dyn SystemModel,
    cfg: &RunConfig,
    traj: &crate::Trajectory,
    funnel: &crate::funnel::Funnel,
    vcfg: &VerifyConfig,
) -> Result<VerificationReport> {
    verify::verify(model, traj, funnel, &cfg.constraint_set(), vcfg)
}

/// Writes the solution bundle for a finished run.
pub fn write_solution(
    dir: &Path,
    model: &dyn SystemModel,
    cfg: &RunConfig,
    out: &RunOutput,
    report: Option<(&VerificationReport, u64)>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    bundle::write_config(&dir.join(bundle::CONFIG_FILE), cfg)?;
    bundle::trajectory_table(&out.trajectory).write(&dir.join(bundle::TRAJECTORY_FILE))?;
    bundle::funnel_table(&out.funnel).write(&dir.join(bundle::FUNNEL_FILE))?;
    bundle::iterations_table(&out.records).write(&dir.join(bundle::ITERATIONS_FILE))?;
    let nw = model.dims().nw;
    bundle::verification_table(&out.trajectory, nw, report.map(|r| r.0))
        .write(&dir.join(bundle::VERIFICATION_FILE))?;
    let last = out.records.last();
    let summary = RunSummary {
        model: cfg.problem.model.clone(),
        mode: mode_name(cfg.problem.mode).into(),
        nodes: cfg.problem.nodes,
        final_time: cfg.problem.final_time,
        converged: out.converged,
        iterations: out.records.len(),
        final_delta_t: last.map_or(f64::NAN, |r| r.delta_t),
        final_delta_f: last.map_or(f64::NAN, |r| r.delta_f),
        tol_trajectory: cfg.convergence.tol_trajectory,
        tol_funnel: cfg.convergence.tol_funnel,
        trajectory_cost: last.map_or(f64::NAN, |r| r.trajectory_cost),
        dynamic_defect: out.dynamic_defect,
        alpha: cfg.lyapunov.alpha,
        lambda_w: last.map_or(f64::NAN, |r| r.lambda_w),
        lipschitz_seed: cfg.lipschitz.seed,
        gamma: out.gamma.clone(),
        beta: out.beta.beta.clone(),
        beta_hat: out.beta.beta_hat.clone(),
        verification: report.map(|(r, seed)| VerificationSummary::new(r, seed, Disturbance::Random.name())),
    };
    bundle::write_json(&dir.join(bundle::SUMMARY_FILE), &summary)
}

/// `solve`: exit 0 on convergence, 2 when the iteration budget runs out,
/// 1 on any error.
pub fn cmd_solve(args: &SolveArgs) -> i32 {
    match solve(args) {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("warning: iteration limit reached without convergence");
            EXIT_NOT_CONVERGED
        }
        Err(e) => report_error(&e),
    }
}

fn solve(args: &SolveArgs) -> std::result::Result<bool, Box<dyn std::error::Error>> {
    let mut cfg = bundle::read_config(&args.config)?;
    if let Some(mode) = args.mode {
        cfg.problem.mode = mode;
    }
    if let Some(seed) = args.seed {
        cfg.lipschitz.seed = seed;
    }
    let model = load_model(&cfg)?;
    let out = match pipeline::run(model.as_ref(), &cfg) {
        Ok(o) => o,
        Err(failure) => {
            std::fs::create_dir_all(&args.out)?;
            bundle::iterations_table(&failure.records).write(&args.out.join(bundle::ITERATIONS_FILE))?;
            return Err(Box::new(failure));
        }
    };
    let seed = cfg.lipschitz.seed;
    let report = if cfg.problem.mode == Mode::Joint && args.samples > 0 {
        let vcfg = VerifyConfig {
            samples: args.samples,
            seed,
            ..Default::default()
        };
        let r = run_verification(model.as_ref(), &cfg, &out.trajectory, &out.funnel, &vcfg)?;
        if !r.passed() {
            log::warn!(
                "verification failed: worst containment {:.6e} at node {} of sample {}",
                r.worst.2,
                r.worst.1,
                r.worst.0
            );
        }
        Some(r)
    } else {
        None
    };
    write_solution(&args.out, model.as_ref(), &cfg, &out, report.as_ref().map(|r| (r, seed)))?;
    println!(
        "{} after {} iterations; bundle written to {}",
        if out.converged { "converged" } else { "not converged" },
        out.records.len(),
        args.out.display()
    );
    Ok(out.converged)
}

/// `verify`: exit 0 when every sample stays in the funnel and feasible,
/// 3 on a containment failure, 4 on a constraint violation, 1 on errors.
pub fn cmd_verify(args: &VerifyArgs) -> i32 {
    match verify_dir(args) {
        Ok(report) => {
            let (s, k, v) = report.worst;
            println!(
                "{} samples: worst containment {:.6e} (sample {s}, node {k}); min state margin {:.6e}; min input margin {:.6e}",
                report.samples.len(),
                v,
                report.min_state_margin,
                report.min_input_margin
            );
            if !report.contained {
                eprintln!("containment failure at node {k} (sample {s}): value {v:.6e} exceeds 1");
                EXIT_CONTAINMENT
            } else if !report.feasible {
                eprintln!("constraint violation: min state margin {:.6e}, min input margin {:.6e}", report.min_state_margin, report.min_input_margin);
                EXIT_CONSTRAINT
            } else {
                EXIT_OK
            }
        }
        Err(e) => report_error(&e),
    }
}

fn verify_dir(args: &VerifyArgs) -> Result<VerificationReport> {
    if args.samples == 0 {
        return Err(Error::Contract("verification needs at least one sample".into()));
    }
    let cfg = bundle::read_config(&args.out.join(bundle::CONFIG_FILE))?;
    let model = load_model(&cfg)?;
    let traj = bundle::read_trajectory(&args.out.join(bundle::TRAJECTORY_FILE))?;
    let funnel = bundle::read_funnel(&args.out.join(bundle::FUNNEL_FILE), traj.nx(), traj.nu())?;
    let vcfg = VerifyConfig {
        samples: args.samples,
        seed: args.seed,
        disturbance: args.disturbance.into(),
        ..Default::default()
    };
    let report = run_verification(model.as_ref(), &cfg, &traj, &funnel, &vcfg)?;
    bundle::verification_table(&traj, model.dims().nw, Some(&report))
        .write(&args.out.join(bundle::VERIFICATION_FILE))?;
    bundle::write_json(
        &args.out.join(bundle::VERIFICATION_SUMMARY_FILE),
        &VerificationSummary::new(&report, args.seed, args.disturbance.name()),
    )?;
    Ok(report)
}

/// `export-figures`: exit 0 on success, 1 on IO or bundle errors.
pub fn cmd_export_figures(args: &ExportArgs) -> i32 {
    match figures::export(&args.out) {
        Ok(m) => {
            println!(
                "{} ellipses, {} obstacles, {} samples written to {}",
                m.ellipse_count,
                m.obstacle_count,
                m.sample_count,
                args.out.join(figures::FIGURES_DIR).display()
            );
            EXIT_OK
        }
        Err(e) => report_error(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUNDLED: &str = include_str!("../../configs/unicycle.cfg");

    #[test]
    fn bundled_config_is_the_benchmark() {
        let cfg: RunConfig = toml::from_str(BUNDLED).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn arguments_parse() {
        let cli = Cli::try_parse_from(["cifsyn", "solve", "--config", "a.cfg", "--out", "o", "--mode", "scp-only"]).unwrap();
        match cli.command {
            Command::Solve(a) => {
                assert_eq!(a.mode, Some(Mode::ScpOnly));
                assert_eq!(a.samples, 100);
            }
            _ => panic!("expected solve"),
        }
        assert!(Cli::try_parse_from(["cifsyn", "solve", "--config", "a", "--out", "o", "--mode", "both"]).is_err());
    }

    #[test]
    fn zero_samples_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let args = VerifyArgs {
            out: dir.path().to_path_buf(),
            samples: 0,
            seed: 0,
            disturbance: Disturbance::Random,
        };
        assert_eq!(cmd_verify(&args), EXIT_ERROR);
    }

    #[test]
    fn missing_bundle_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let args = VerifyArgs {
            out: dir.path().join("nowhere"),
            samples: 10,
            seed: 0,
            disturbance: Disturbance::Random,
        };
        assert_eq!(cmd_verify(&args), EXIT_ERROR);
        assert_eq!(cmd_export_figures(&ExportArgs { out: dir.path().to_path_buf() }), EXIT_ERROR);
    }

    #[test]
    fn invalid_tolerance_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.cfg");
        std::fs::write(&cfg, BUNDLED.replace("tol_trajectory = 0.001", "tol_trajectory = -1.0")).unwrap();
        let args = SolveArgs {
            config: cfg,
            out: dir.path().join("out"),
            mode: None,
            seed: None,
            samples: 100,
        };
        assert_eq!(cmd_solve(&args), EXIT_ERROR);
    }
}
