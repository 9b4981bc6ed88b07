//! TOML run configuration with defaults, `key=value` overrides and
//! validation of every section.

use crate::design::MaterialParams;
use crate::error::{invalid, Error, Result};
use crate::heat::{default_steps, InitialValue, SourceSpec};
use crate::mesh::{build_rect_mesh, Mesh, Rect};
use crate::optimizer::{Mode, OptimizerConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            domain: Rect::UNIT,
        }
    }
}

/// Initial level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phi0Spec {
    Constant { value: f64 },
    Nodal { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub gamma: f64,
    pub m: f64,
    pub phi0: Phi0Spec,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            m: 3.0,
            phi0: Phi0Spec::Constant { value: 0.5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub epsilon: f64,
    pub tau: f64,
    pub q: f64,
    pub delta_reg: f64,
    /// Absolute volume tolerance; `1e-6 |Omega|` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta1: Option<f64>,
    pub eta2: f64,
    pub max_iters: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            epsilon: d.epsilon,
            tau: d.tau,
            q: d.q,
            delta_reg: d.delta_reg,
            eta1: None,
            eta2: d.eta2,
            max_iters: d.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeConfig {
    Elliptic,
    Parabolic {
        horizon: f64,
        /// `100 T` clamped to `[50, 400]` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
}

impl ModeConfig {
    pub fn resolve(&self) -> Mode {
        match *self {
            ModeConfig::Elliptic => Mode::Elliptic,
            ModeConfig::Parabolic { horizon, steps } => Mode::Parabolic {
                horizon,
                steps: steps.unwrap_or_else(|| default_steps(horizon)),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Horizon,
    Epsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Adds the steady problem as the last row of a horizon sweep.
    pub include_steady: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            parameter: SweepParameter::Horizon,
            values: vec![0.1, 1.0, 5.0],
            include_steady: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub resolutions: Vec<usize>,
    pub derivative_samples: usize,
    pub derivative_mesh: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![32, 64],
            derivative_samples: 20,
            derivative_mesh: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub mesh: MeshConfig,
    pub material: MaterialParams,
    pub design: DesignConfig,
    pub optimizer: OptimizerSection,
    pub mode: ModeConfig,
    pub source: SourceSpec,
    pub initial: InitialValue,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            mesh: MeshConfig::default(),
            material: MaterialParams::default(),
            design: DesignConfig::default(),
            optimizer: OptimizerSection::default(),
            mode: ModeConfig::Parabolic {
                horizon: 1.0,
                steps: None,
            },
            source: SourceSpec::constant(10.0),
            initial: InitialValue::Constant { value: 1.0 },
            sweep: SweepConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

fn field_error(field: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(msg) => Error::InvalidArgument(format!("{field}: {msg}")),
        other => other,
    }
}

impl RunConfig {
    /// Checks every section; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return Err(invalid("mesh.nx, mesh.ny: must be at least 1"));
        }
        let d = self.mesh.domain;
        if !(d.width() > 0.0 && d.height() > 0.0) {
            return Err(invalid("mesh.domain: degenerate rectangle"));
        }
        self.material.validate().map_err(|e| field_error("material", e))?;
        if !(self.design.gamma > 0.0 && self.design.gamma < 1.0) {
            return Err(invalid(format!("design.gamma: must lie in (0, 1), got {}", self.design.gamma)));
        }
        match &self.design.phi0 {
            Phi0Spec::Constant { value } if value.abs() > 1.0 => {
                return Err(invalid("design.phi0: |value| must be <= 1"));
            }
            Phi0Spec::Nodal { values } if values.iter().any(|v| !(v.abs() <= 1.0)) => {
                return Err(invalid("design.phi0: |values| must be <= 1"));
            }
            _ => {}
        }
        if let Some(eta1) = self.optimizer.eta1 {
            if !(eta1 > 0.0) {
                return Err(invalid("optimizer.eta1: must be positive"));
            }
        }
        self.optimizer_config()
            .validate()
            .map_err(|e| field_error("optimizer", e))?;
        let mesh = self.build_mesh()?;
        self.source.validate(&mesh).map_err(|e| field_error("source", e))?;
        self.initial.interpolate(&mesh).map_err(|e| field_error("initial", e))?;
        if let Phi0Spec::Nodal { values } = &self.design.phi0 {
            if values.len() != mesh.num_nodes() {
                return Err(invalid("design.phi0: length does not match mesh"));
            }
        }
        if self.sweep.values.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("sweep.values: must be positive"));
        }
        if self.verify.resolutions.contains(&0) || self.verify.derivative_mesh == 0 {
            return Err(invalid("verify: resolutions must be at least 1"));
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        build_rect_mesh(self.mesh.nx, self.mesh.ny, self.mesh.domain).map_err(|e| field_error("mesh", e))
    }

    pub fn eta1(&self) -> f64 {
        self.optimizer.eta1.unwrap_or(1e-6 * self.mesh.domain.area())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            epsilon: o.epsilon,
            tau: o.tau,
            q: o.q,
            m: self.design.m,
            delta_reg: o.delta_reg,
            eta1: self.eta1(),
            eta2: o.eta2,
            max_iters: o.max_iters,
            mode: self.mode.resolve(),
        }
    }

    pub fn phi0(&self, mesh: &Mesh) -> Vec<f64> {
        match &self.design.phi0 {
            Phi0Spec::Constant { value } => vec![*value; mesh.num_nodes()],
            Phi0Spec::Nodal { values } => values.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }
}

/// Parses TOML text, applies `key=value` overrides (dotted keys; values in
/// TOML syntax, bare words taken as strings) and validates.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut root: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid(format!("config parse error: {e}")))?;
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let cfg: RunConfig = toml::Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| invalid(format!("config error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text, overrides)
}

fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{spec}` is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("override `{spec}` has an empty key segment")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| invalid(format!("override `{spec}`: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASELINE: &str = r#"
[material]
alpha = 1.0
beta = 10.0

[design]
gamma = 0.5
m = 3.0

[optimizer]
epsilon = 1e-4
eta2 = 8e-5

[mode]
kind = "parabolic"
horizon = 1.0

[source]
kind = "constant"
value = 10.0

[initial]
kind = "constant"
value = 1.0
"#;

    #[test]
    fn baseline_is_accepted() {
        let c = parse_config_str(BASELINE, &[]).unwrap();
        assert_eq!(c.mesh.nx, 64);
        assert_eq!(c.optimizer.q, 0.9);
        assert_eq!(
            c.optimizer_config().mode,
            Mode::Parabolic {
                horizon: 1.0,
                steps: 100
            }
        );
        assert_eq!(c.eta1(), 1e-6);
    }

    #[test]
    fn material_ordering_is_enforced() {
        let e = parse_config_str(BASELINE, &["material.beta=1.0".into()]).unwrap_err();
        assert!(e.to_string().contains("material"), "{e}");
        assert!(e.to_string().contains("beta > alpha"), "{e}");
    }

    #[test]
    fn gamma_bounds() {
        let e = parse_config_str(BASELINE, &["design.gamma=0".into()]).unwrap_err();
        assert!(e.to_string().contains("design.gamma"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config_str("[mesh]\nnx = 8\nbogus = 1\n", &[]).is_err());
        assert!(parse_config_str("extra = 1\n", &[]).is_err());
    }

    #[test]
    fn parse_error_reports_line() {
        let e = parse_config_str("[mesh]\nnx = 8\nny = = 3\n", &[]).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn overrides_apply() {
        assert!(parse_config_str(BASELINE, &["mode.kind=hyperbolic".into()]).is_err());
        let c = parse_config_str("", &["mesh.nx=16".into(), "mode={kind=\"elliptic\"}".into()]).unwrap();
        assert_eq!(c.mesh.nx, 16);
        assert_eq!(c.mode, ModeConfig::Elliptic);
        assert!(parse_config_str("", &["nokey".into()]).is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = parse_config_str(BASELINE, &["optimizer.eta1=2e-6".into()]).unwrap();
        c.output_dir = Some("runs/a".into());
        c.source = SourceSpec::damped_cosine();
        let text = c.to_toml().unwrap();
        assert_eq!(parse_config_str(&text, &[]).unwrap(), c);
        let d = RunConfig::default();
        assert_eq!(parse_config_str(&d.to_toml().unwrap(), &[]).unwrap(), d);
    }
}
