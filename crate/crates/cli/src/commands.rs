//! Implementations of the subcommands. Each returns whether every check it
//! ran passed; runtime failures come back as errors.

use heatopt::config::{RunConfig, SweepParameter};
use heatopt::design::{coefficient, intermediate_fraction, DesignField};
use heatopt::export::{write_history, write_oracle_csv, write_text, write_vtk};
use heatopt::fem::ScalarField;
use heatopt::heat::{InitialValue, SourceSpec};
use heatopt::mesh::Mesh;
use heatopt::optimizer::{evaluate_energy, run as run_optimizer, Mode, OptimizationResult, Problem, StateSnapshot};
use heatopt::oracles::{all_passed, run_galerkin_suite, run_manufactured_suite, DerivativeSuite, OracleReport};
use heatopt::spectral::{check_source_assumption, dirichlet_eigenpair};
use heatopt::Result;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Environment variable bounding the sweep worker pool.
pub const WORKERS_ENV: &str = "HEATOPT_WORKERS";

fn problem<'a>(cfg: &RunConfig, mesh: &'a Mesh) -> Problem<'a> {
    Problem {
        mesh,
        material: cfg.material,
        source: cfg.source.clone(),
        initial: cfg.initial.clone(),
        gamma: cfg.design.gamma,
    }
}

fn write_fields(path: &Path, mesh: &Mesh, phi: &[f64], state: &StateSnapshot) -> Result<()> {
    let name = match state {
        StateSnapshot::Parabolic(_) => "u_T",
        StateSnapshot::Elliptic(_) => "u_steady",
    };
    write_vtk(path, mesh, &[("phi", phi), (name, state.final_field())])
}

fn optimize_into(cfg: &RunConfig, out: &Path) -> Result<OptimizationResult> {
    let mesh = cfg.build_mesh()?;
    let result = run_optimizer(
        &problem(cfg, &mesh),
        &cfg.optimizer_config(),
        &ScalarField::from(cfg.phi0(&mesh)),
    )?;
    write_text(&out.join("config.toml"), &cfg.to_toml()?)?;
    write_history(&out.join("history.csv"), &result.history)?;
    write_fields(&out.join("fields.vtk"), &mesh, &result.design.phi, &result.state)?;
    Ok(result)
}

pub fn optimize(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let r = optimize_into(cfg, out)?;
    let last = r.final_record();
    println!(
        "converged={} iterations={} J={:e} E={:e} volume={:e}",
        r.converged, last.iter, last.objective, last.energy, last.volume
    );
    Ok(true)
}

pub fn solve(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let mesh = cfg.build_mesh()?;
    let opt = cfg.optimizer_config();
    let phi = ScalarField::from(cfg.phi0(&mesh));
    let design = DesignField::new(phi, cfg.design.gamma, cfg.design.m)?;
    let (energy, state) = evaluate_energy(&problem(cfg, &mesh), &opt, &design)?;
    write_text(&out.join("solve.csv"), &format!("energy\n{energy:e}\n"))?;
    write_fields(&out.join("fields.vtk"), &mesh, &design.phi, &state)?;
    println!("E={energy:e}");
    Ok(true)
}

pub fn eigen(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let mesh = cfg.build_mesh()?;
    let coeff = coefficient(&mesh, &cfg.phi0(&mesh), cfg.design.m, &cfg.material)?;
    let pair = dirichlet_eigenpair(&mesh, &coeff, 1e-10, 500)?;
    let verdict = match (&cfg.source, &cfg.initial) {
        (SourceSpec::Constant { value: f }, InitialValue::Constant { value: u0 }) => {
            Some(check_source_assumption(*f, *u0, pair.lambda1)?)
        }
        _ => None,
    };
    let label = match verdict {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "N/A",
    };
    write_text(
        &out.join("eigen.csv"),
        &format!("lambda1,residual,iterations,assumption\n{:e},{:e},{},{label}\n", pair.lambda1, pair.residual, pair.iterations),
    )?;
    write_vtk(&out.join("eigenvector.vtk"), &mesh, &[("w1", &pair.w1)])?;
    println!("lambda1={:e} assumption={label}", pair.lambda1);
    Ok(verdict != Some(false))
}

pub fn verify(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let mut reports: Vec<OracleReport> = run_manufactured_suite(&cfg.verify.resolutions)?;
    reports.extend(run_galerkin_suite());
    let (horizon, steps) = match cfg.mode.resolve() {
        Mode::Parabolic { horizon, steps } => (horizon, steps),
        Mode::Elliptic => (1.0, 100),
    };
    let suite = DerivativeSuite {
        n: cfg.verify.derivative_mesh,
        horizon,
        steps,
        samples: cfg.verify.derivative_samples,
        seed: cfg.seed,
        material: cfg.material,
        m: cfg.design.m,
        gamma: cfg.design.gamma,
        source: cfg.source.clone(),
        initial: cfg.initial.clone(),
        ..Default::default()
    };
    reports.extend(suite.run()?);
    write_oracle_csv(&out.join("oracles.csv"), &reports)?;
    for r in &reports {
        println!(
            "{} {} measured={:e} expected={:e} tol={:e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.measured,
            r.expected,
            r.tolerance
        );
    }
    Ok(all_passed(&reports))
}

/// One sweep item: label and its configuration.
fn sweep_items(cfg: &RunConfig) -> Vec<(String, RunConfig)> {
    let mut items = Vec::new();
    for &v in &cfg.sweep.values {
        let mut c = cfg.clone();
        match cfg.sweep.parameter {
            SweepParameter::Horizon => {
                c.mode = heatopt::config::ModeConfig::Parabolic {
                    horizon: v,
                    steps: None,
                }
            }
            SweepParameter::Epsilon => c.optimizer.epsilon = v,
        }
        items.push((format!("{v:e}"), c));
    }
    if cfg.sweep.parameter == SweepParameter::Horizon && cfg.sweep.include_steady {
        let mut c = cfg.clone();
        c.mode = heatopt::config::ModeConfig::Elliptic;
        items.push(("inf".to_string(), c));
    }
    items
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let items = sweep_items(cfg);
    let results: Vec<Mutex<Option<Result<OptimizationResult>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = worker_count().min(items.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let (label, c) = &items[i];
                let r = optimize_into(c, &out.join(format!("run_{i:02}_{label}")));
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let param = match cfg.sweep.parameter {
        SweepParameter::Horizon => "horizon",
        SweepParameter::Epsilon => "epsilon",
    };
    let mut csv = format!("{param},converged,iterations,objective,energy,dirichlet,intermediate_fraction\n");
    for ((label, _), slot) in items.iter().zip(results) {
        let r = slot.into_inner().unwrap().expect("every sweep item ran")?;
        let last = r.final_record();
        let frac = intermediate_fraction(&r.design.phi, 0.05, 0.95);
        writeln!(
            csv,
            "{label},{},{},{:e},{:e},{:e},{frac:e}",
            r.converged, last.iter, last.objective, last.energy, last.dirichlet
        )
        .unwrap();
        println!("{param}={label} converged={} J={:e}", r.converged, last.objective);
    }
    write_text(&out.join("sweep.csv"), &csv)?;
    Ok(true)
}
