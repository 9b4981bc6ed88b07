//! The level-set optimization loop: state solve, descent field,
//! nonlinear-diffusion update, clip-and-shift volume projection and the
//! `L^1` stopping test.

use crate::design::{coefficient, project_volume, volume, DesignField, MaterialParams};
use crate::error::{invalid, Error, Result};
use crate::fem::{
    assemble_stiffness, cg_solve_from, dirichlet_energy, l1_norm, lumped_mass, ScalarField, SparseMatrix,
    DEFAULT_MAX_ITER, DEFAULT_REL_TOL,
};
use crate::heat::{duality_steady, duality_time_average, solve_elliptic, FieldSeries, HeatStepper, InitialValue, RunParams, SourceSpec};
use crate::mesh::Mesh;
use crate::sensitivity::{descent_field, elliptic_descent_field, SensitivityField};
use serde::{Deserialize, Serialize};

/// Tolerance of the inner solve of the update equation.
const UPDATE_REL_TOL: f64 = 1e-12;

/// Which state problem drives the design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    Parabolic { horizon: f64, steps: usize },
    Elliptic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Weight of the Dirichlet energy of `phi`.
    pub epsilon: f64,
    /// Pseudo-time step of the update.
    pub tau: f64,
    /// Exponent of the degenerate weight `q |phi|^{q-1}`, in `(0, 1)`.
    pub q: f64,
    /// Exponent in the coefficient `kappa[phi_+^m]`.
    pub m: f64,
    /// Regularization in `(|phi| + delta)^{q-1}`.
    pub delta_reg: f64,
    /// Absolute volume tolerance.
    pub eta1: f64,
    /// `L^1` stopping tolerance on consecutive iterates.
    pub eta2: f64,
    pub max_iters: usize,
    pub mode: Mode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            tau: 1e-3,
            q: 0.9,
            m: 3.0,
            delta_reg: 1e-3,
            eta1: 1e-6,
            eta2: 8e-5,
            max_iters: 2000,
            mode: Mode::Elliptic,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.epsilon > 0.0, "epsilon must be positive"),
            (self.tau > 0.0, "tau must be positive"),
            (self.q > 0.0 && self.q < 1.0, "q must lie in (0, 1)"),
            (self.m >= 1.0, "m must be >= 1"),
            (self.delta_reg > 0.0, "delta_reg must be positive"),
            (self.eta1 > 0.0, "eta1 must be positive"),
            (self.eta2 > 0.0, "eta2 must be positive"),
            (self.max_iters > 0, "max_iters must be positive"),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(invalid(*msg));
        }
        if let Mode::Parabolic { horizon, steps } = self.mode {
            if !(horizon > 0.0) || steps == 0 {
                return Err(invalid("parabolic mode needs horizon > 0 and steps >= 1"));
            }
        }
        Ok(())
    }
}

/// Fixed data of one design problem.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub mesh: &'a Mesh,
    pub material: MaterialParams,
    pub source: SourceSpec,
    pub initial: InitialValue,
    /// Target volume fraction.
    pub gamma: f64,
}

/// One row of the convergence history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRecord {
    pub iter: usize,
    /// Time-averaged (or steady) pairing.
    pub energy: f64,
    /// `(eps/2) int |grad phi|^2`.
    pub dirichlet: f64,
    /// `energy + dirichlet`.
    pub objective: f64,
    pub volume: f64,
    pub lambda_shift: f64,
    /// `||phi_{i+1} - phi_i||_{L^1}`; absent for the initial design.
    pub phi_change_l1: Option<f64>,
    pub max_abs_phi: f64,
}

/// State of the current design.
#[derive(Debug, Clone)]
pub enum StateSnapshot {
    Parabolic(FieldSeries),
    Elliptic(ScalarField),
}

impl StateSnapshot {
    /// `u(T)` or the steady state.
    pub fn final_field(&self) -> &ScalarField {
        match self {
            StateSnapshot::Parabolic(s) => s.last(),
            StateSnapshot::Elliptic(u) => u,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub design: DesignField,
    pub history: Vec<ObjectiveRecord>,
    pub converged: bool,
    pub state: StateSnapshot,
}

impl OptimizationResult {
    pub fn final_record(&self) -> &ObjectiveRecord {
        self.history.last().expect("history is never empty")
    }
}

/// Solves the state for `design` and returns the pairing with the state.
pub fn evaluate_energy(problem: &Problem, cfg: &OptimizerConfig, design: &DesignField) -> Result<(f64, StateSnapshot)> {
    let mesh = problem.mesh;
    let coeff = coefficient(mesh, &design.phi, design.m, &problem.material)?;
    match cfg.mode {
        Mode::Elliptic => {
            let f_inf = problem.source.steady_limit(mesh);
            let u = solve_elliptic(mesh, &coeff, &f_inf, DEFAULT_REL_TOL)?;
            Ok((duality_steady(mesh, &u, &f_inf)?, StateSnapshot::Elliptic(u)))
        }
        Mode::Parabolic { horizon, steps } => {
            problem.source.validate(mesh)?;
            let run = RunParams::new(horizon, steps, problem.initial.clone())?;
            let series = HeatStepper::new(mesh, &coeff, run.dt())?.run(&problem.source, &run)?;
            let e = duality_time_average(mesh, &series, &problem.source)?;
            Ok((e, StateSnapshot::Parabolic(series)))
        }
    }
}

/// `J = E + (eps/2) int |grad phi|^2` for an admissible design.
pub fn objective(problem: &Problem, cfg: &OptimizerConfig, design: &DesignField) -> Result<ObjectiveRecord> {
    Ok(record(problem, cfg, design, evaluate_energy(problem, cfg, design)?.0, 0, 0.0, None))
}

fn record(
    problem: &Problem,
    cfg: &OptimizerConfig,
    design: &DesignField,
    energy: f64,
    iter: usize,
    lambda_shift: f64,
    change: Option<f64>,
) -> ObjectiveRecord {
    let mesh = problem.mesh;
    let dirichlet = 0.5 * cfg.epsilon * dirichlet_energy(mesh, &design.phi);
    ObjectiveRecord {
        iter,
        energy,
        dirichlet,
        objective: energy + dirichlet,
        volume: volume(&lumped_mass(mesh), &design.phi),
        lambda_shift,
        phi_change_l1: change,
        max_abs_phi: design.phi.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

/// Solver for the semi-implicit update
/// `(D + eps K1) phi_{i+1} = D phi_i + M g`, `D = M q (|phi_i| + delta)^{q-1} / tau`,
/// with a natural boundary condition on `phi`.
pub struct UpdateOperator {
    mass: Vec<f64>,
    unit_stiffness: SparseMatrix,
}

impl UpdateOperator {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        Ok(Self {
            mass: lumped_mass(mesh),
            unit_stiffness: assemble_stiffness(mesh, &vec![1.0; mesh.num_elements()])?,
        })
    }

    pub fn step(&self, phi: &[f64], g: &SensitivityField, cfg: &OptimizerConfig) -> Result<ScalarField> {
        let n = self.mass.len();
        if phi.len() != n || g.g.len() != n {
            return Err(invalid("update fields do not match mesh"));
        }
        let d: Vec<f64> = phi
            .iter()
            .zip(&self.mass)
            .map(|(p, m)| m * cfg.q * (p.abs() + cfg.delta_reg).powf(cfg.q - 1.0) / cfg.tau)
            .collect();
        if let Some(i) = d.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Internal(format!("update weight not positive at node {i}: {}", d[i])));
        }
        let a = self.unit_stiffness.linear_combination(cfg.epsilon, &SparseMatrix::diagonal(&d), 1.0)?;
        let rhs: Vec<f64> = (0..n).map(|i| d[i] * phi[i] + self.mass[i] * g.g[i]).collect();
        cg_solve_from(&a, &rhs, phi.to_vec(), UPDATE_REL_TOL, DEFAULT_MAX_ITER)
    }
}

/// One nonlinear-diffusion update of `phi_i` driven by `g`.
pub fn update_step(mesh: &Mesh, phi: &[f64], g: &SensitivityField, cfg: &OptimizerConfig) -> Result<ScalarField> {
    UpdateOperator::new(mesh)?.step(phi, g, cfg)
}

fn descent(problem: &Problem, design: &DesignField, state: &StateSnapshot) -> Result<SensitivityField> {
    match state {
        StateSnapshot::Parabolic(series) => descent_field(problem.mesh, design, series, &problem.material),
        StateSnapshot::Elliptic(u) => elliptic_descent_field(problem.mesh, design, u, &problem.material),
    }
}

/// Runs the optimization from `phi0`, projecting it onto the volume
/// constraint first when needed.
pub fn run(problem: &Problem, cfg: &OptimizerConfig, phi0: &ScalarField) -> Result<OptimizationResult> {
    run_with_observer(problem, cfg, phi0, |_| {})
}

/// Like [`run`], calling `observer` with every accepted record.
pub fn run_with_observer(
    problem: &Problem,
    cfg: &OptimizerConfig,
    phi0: &ScalarField,
    mut observer: impl FnMut(&ObjectiveRecord),
) -> Result<OptimizationResult> {
    cfg.validate()?;
    problem.material.validate_weak()?;
    let mesh = problem.mesh;
    phi0.check_mesh(mesh)?;
    let mass = lumped_mass(mesh);
    let target = problem.gamma * mesh.total_area();

    let start = project_volume(&mass, phi0, target, cfg.eta1)?;
    let mut design = DesignField::new(start.phi, problem.gamma, cfg.m)?;
    let (energy, mut state) = evaluate_energy(problem, cfg, &design)?;
    let first = record(problem, cfg, &design, energy, 0, start.lambda, None);
    observer(&first);
    let mut history = vec![first];

    let update = UpdateOperator::new(mesh)?;
    let mut converged = false;
    for iter in 1..=cfg.max_iters {
        let g = descent(problem, &design, &state)?;
        let raw = update.step(&design.phi, &g, cfg)?;
        let projected = project_volume(&mass, &raw, target, cfg.eta1)?;
        let diff: Vec<f64> = projected.phi.iter().zip(design.phi.iter()).map(|(a, b)| a - b).collect();
        let change = l1_norm(&mass, &diff);

        if projected.phi.iter().any(|v| v.abs() > 1.0) || (projected.volume - target).abs() > cfg.eta1 {
            return Err(Error::Internal(format!("iterate {iter} left the admissible set")));
        }
        design = DesignField {
            phi: projected.phi,
            ..design
        };
        let (energy, next_state) = evaluate_energy(problem, cfg, &design)?;
        state = next_state;
        let rec = record(problem, cfg, &design, energy, iter, projected.lambda, Some(change));
        observer(&rec);
        history.push(rec);
        if change <= cfg.eta2 {
            converged = true;
            break;
        }
    }
    Ok(OptimizationResult {
        design,
        history,
        converged,
        state,
    })
}
