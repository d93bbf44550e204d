//! Experiment configuration: one JSON document per run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use stefan_core::domain::{BoundaryPath, FieldRole, PhysicalSetup, ReferenceGrid, SpaceTimeField};
use stefan_core::observability::ObservabilityOptions;
use stefan_core::{FixedPointConfig, HumConfig, SchemeConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Forward,
    Semilinear,
    Adjoint,
    Hum,
    Stefan,
    Fixedpoint,
    Carleman,
    Observability,
    Convergence,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Forward => "forward",
            Scenario::Semilinear => "semilinear",
            Scenario::Adjoint => "adjoint",
            Scenario::Hum => "hum",
            Scenario::Stefan => "stefan",
            Scenario::Fixedpoint => "fixedpoint",
            Scenario::Carleman => "carleman",
            Scenario::Observability => "observability",
            Scenario::Convergence => "convergence",
        }
    }
}

/// Prescribed boundary trajectory for the fixed-path scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// `R(t) = R0`.
    #[default]
    Constant,
    /// `R(t) = R0 + amplitude sin(frequency t)`.
    Sinusoid { amplitude: f64, frequency: f64 },
    /// `R(t) = R0 + rate t`.
    Linear { rate: f64 },
}

impl PathSpec {
    pub fn build(&self, setup: &PhysicalSetup, steps: usize) -> stefan_core::Result<BoundaryPath> {
        let (r0, horizon) = (setup.r0, setup.t_final);
        match *self {
            PathSpec::Constant => BoundaryPath::constant(r0, horizon, steps),
            PathSpec::Sinusoid { amplitude, frequency } => BoundaryPath::from_fn(
                horizon,
                steps,
                |t| r0 + amplitude * (frequency * t).sin(),
                |t| amplitude * frequency * (frequency * t).cos(),
            ),
            PathSpec::Linear { rate } => BoundaryPath::from_fn(horizon, steps, |t| r0 + rate * t, |_| rate),
        }
    }
}

/// Potential `a` of the linear scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    Constant { value: f64 },
}

impl PotentialSpec {
    pub fn build(&self, grid: &ReferenceGrid, path: &BoundaryPath) -> Option<SpaceTimeField> {
        match *self {
            PotentialSpec::Zero => None,
            PotentialSpec::Constant { value } => {
                Some(SpaceTimeField::from_fn(grid, path, FieldRole::Potential, |_, _| value))
            }
        }
    }

    pub fn constant_value(&self) -> f64 {
        match *self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Constant { value } => value,
        }
    }
}

/// Carleman battery settings: `s` is scanned over `2^e / alpha_min` for the
/// exponents `e` in `s_exponents`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanConfig {
    pub lambda: f64,
    pub k: u32,
    pub battery: usize,
    pub modes: usize,
    pub s_exponents: [i32; 2],
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            k: 2,
            battery: 20,
            modes: 6,
            s_exponents: [-3, 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub physical: PhysicalSetup,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub path: PathSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub hum: HumConfig,
    #[serde(default)]
    pub fixedpoint: FixedPointConfig,
    #[serde(default)]
    pub carleman: CarlemanConfig,
    #[serde(default)]
    pub observability: ObservabilityOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn field(name: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Config {
        field: name.to_string(),
        message: err.to_string(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config {
                field: if path == "." { "<root>".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks every section a scenario reads against its own invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        self.physical.validate().map_err(|e| field("physical", e))?;
        self.scheme.validate().map_err(|e| field("scheme", e))?;
        self.hum.validate().map_err(|e| field("hum", e))?;
        self.fixedpoint.validate().map_err(|e| field("fixedpoint", e))?;
        self.observability.validate().map_err(|e| field("observability", e))?;
        let c = &self.carleman;
        if !(c.lambda > 0.0) {
            return Err(field("carleman.lambda", "must be positive"));
        }
        if c.k < 2 {
            return Err(field("carleman.k", "must be at least 2"));
        }
        if c.battery == 0 || c.modes == 0 {
            return Err(field("carleman.battery", "battery size and mode count must be positive"));
        }
        if c.s_exponents[0] > c.s_exponents[1] {
            return Err(field("carleman.s_exponents", "expected [low, high] with low <= high"));
        }
        if let PotentialSpec::Constant { value } = self.potential {
            if !value.is_finite() {
                return Err(field("potential.value", "must be finite"));
            }
        }
        let path = self
            .path
            .build(&self.physical, self.scheme.m)
            .map_err(|e| field("path", e))?;
        path.validate_bounds(self.physical.r_star, self.physical.e)
            .map_err(|e| field("path", e))?;
        if self.scenario == Scenario::Convergence && !matches!(self.physical.initial, stefan_core::InitialData::Sine { .. }) {
            return Err(field("physical.initial", "the convergence scenario needs a sine initial datum"));
        }
        if self.scenario == Scenario::Convergence && self.path != PathSpec::Constant {
            return Err(field("path", "the convergence scenario needs a constant path"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::parse(r#"{"scenario": "hum"}"#).unwrap();
        assert_eq!(cfg.physical, PhysicalSetup::default());
        assert_eq!(cfg.scheme, SchemeConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn parse_errors_name_the_field() {
        let err = ExperimentConfig::parse(r#"{"scenario": "hum", "scheme": {"n": "ten"}}"#).unwrap_err();
        match err {
            CliError::Config { field, .. } => assert_eq!(field, "scheme.n"),
            other => panic!("unexpected {other:?}"),
        }
        let err = ExperimentConfig::parse(r#"{"scenario": "hum", "physical": {"radius": 2}}"#).unwrap_err();
        assert!(matches!(err, CliError::Config { ref field, .. } if field.starts_with("physical")));
    }

    #[test]
    fn ordering_violation_is_reported() {
        let cfg = ExperimentConfig::parse(r#"{"scenario": "hum", "physical": {"b": 0.6}}"#).unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("physical") && msg.contains("0 < b0 < b < R_star < R0 < E"), "{msg}");
    }

    #[test]
    fn path_outside_band_is_rejected() {
        let cfg = ExperimentConfig::parse(
            r#"{"scenario": "hum", "path": {"kind": "sinusoid", "amplitude": 0.8, "frequency": 3.0}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config { ref field, .. }) if field == "path"));
    }
}
