//! Pipeline stages shared by the subcommands, error-to-exit-code mapping,
//! and all-or-nothing output writing.

use std::fs;
use std::path::{Path, PathBuf};

use stackelberg_core::cost::{corrections, decay_profile, exact_costs, CorrectionReport, CostReport, DecayProfile};
use stackelberg_core::observer::{certify_user_gains, design_observer, DesignOptions, MethodChoice, ObserverDesign};
use stackelberg_core::sim::{simulate, LoopGains, SimState, Trajectory};
use stackelberg_core::solver::{solve_are, StackelbergSolution};
use stackelberg_core::Error as CoreError;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver: {0}")]
    Solver(CoreError),
    #[error("observer: {0}")]
    Observer(CoreError),
    #[error("analysis: {0}")]
    Analysis(CoreError),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Observer(_) => 4,
            RunError::Verification(_) => 5,
            RunError::Analysis(_) => 6,
            RunError::Io { .. } => 1,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub steps: Option<usize>,
    pub tol: Option<f64>,
    pub method: Option<MethodChoice>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(steps) = self.steps {
            cfg.steps = steps;
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) || !tol.is_finite() {
                return Err(ConfigError::Validation {
                    field: "--tol".into(),
                    reason: "must be positive".into(),
                });
            }
            cfg.solver.tol = tol;
        }
        if let Some(method) = self.method {
            cfg.observer.method = method;
        }
        Ok(())
    }
}

pub fn solve(cfg: &RunConfig) -> Result<StackelbergSolution, RunError> {
    solve_are(&cfg.model, &cfg.weights, cfg.solver).map_err(RunError::Solver)
}

/// User gains when the config has them, otherwise the configured synthesis.
pub fn design(cfg: &RunConfig, sol: &StackelbergSolution) -> Result<ObserverDesign, RunError> {
    let model = cfg.observer_model();
    let result = match &cfg.observer.gains {
        Some((l1, l2)) => certify_user_gains(&model, &sol.k1, &sol.k2, l1, l2),
        None => {
            let options = DesignOptions {
                lmi: cfg.observer.lmi,
                ..DesignOptions::default()
            };
            design_observer(&model, &sol.k1, &sol.k2, cfg.observer.method, &options)
        }
    };
    result.map_err(RunError::Observer)
}

pub fn loop_gains(sol: &StackelbergSolution, design: &ObserverDesign) -> LoopGains {
    LoopGains::new(sol.k1.clone(), sol.k2.clone(), design.l1.clone(), design.l2.clone())
}

pub fn initial_state(cfg: &RunConfig) -> SimState {
    SimState::new(cfg.x0.clone(), cfg.xhat1_0.clone(), cfg.xhat2_0.clone())
}

pub fn trajectory(cfg: &RunConfig, sol: &StackelbergSolution, design: &ObserverDesign) -> Result<Trajectory, RunError> {
    simulate(
        &cfg.observer_model(),
        &loop_gains(sol, design),
        &cfg.weights,
        &initial_state(cfg),
        cfg.steps,
    )
    .map_err(RunError::Analysis)
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub costs: CostReport,
    pub corrections: CorrectionReport,
    pub profile: DecayProfile,
    pub from: usize,
    /// `δJi(from, ∞)`.
    pub tail_gap: [f64; 2],
}

/// Exact costs, both closed-form corrections and the decay profile over
/// the configured `N` values at or after `from` (`from` itself is always
/// included).
pub fn analyze(
    cfg: &RunConfig,
    sol: &StackelbergSolution,
    design: &ObserverDesign,
    from: usize,
) -> Result<Analysis, RunError> {
    let model = cfg.observer_model();
    let gains = loop_gains(sol, design);
    let costs = exact_costs(&model, sol, &gains, &cfg.weights, &cfg.x0, &cfg.xhat1_0, &cfg.xhat2_0)
        .map_err(RunError::Analysis)?;
    let corrections = corrections(&model, sol, &gains, &cfg.weights, &costs).map_err(RunError::Analysis)?;
    let mut n_list: Vec<usize> = cfg.n_list.iter().copied().filter(|&n| n > from).collect();
    n_list.insert(0, from);
    let profile = decay_profile(&model, sol, &gains, &cfg.weights, &costs.z0, &n_list).map_err(RunError::Analysis)?;
    let tail_gap = [profile.delta_at_n[0][0], profile.delta_at_n[1][0]];
    Ok(Analysis {
        costs,
        corrections,
        profile,
        from,
        tail_gap,
    })
}

/// Files produced by one command, written only after every stage succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, String)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file into `dir`. If any write fails, the files already
    /// written by this call are removed.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
        let io_err = |path: &Path, e: std::io::Error| RunError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, contents) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(&path);
                return Err(io_err(&path, e));
            }
            written.push(path);
        }
        Ok(written)
    }
}
