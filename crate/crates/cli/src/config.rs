use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use repscatter_core::fock::{self, DensityMatrix, FockCutoff};
use repscatter_core::C64;

use crate::CliError;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_STEPS: usize = 10_000;
pub const DEFAULT_N_MAX: usize = 40;
pub const DEFAULT_OUTPUT_DIR: &str = "repscatter-out";
/// Largest van Hove `K` accepted; each run costs `K` collisions.
pub const MAX_VAN_HOVE_K: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Relax,
    ProductCompare,
    LambdaSweep,
    Vanhove,
    Measures,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Relax,
        Scenario::ProductCompare,
        Scenario::LambdaSweep,
        Scenario::Vanhove,
        Scenario::Measures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Relax => "relax",
            Scenario::ProductCompare => "product_compare",
            Scenario::LambdaSweep => "lambda_sweep",
            Scenario::Vanhove => "vanhove",
            Scenario::Measures => "measures",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Scenario::Relax => "iterate rho0 to the fixed point; writes relaxation.csv (step, trace_distance)",
            Scenario::ProductCompare => {
                "fixed-point characteristic function against the infinite product; writes chi_profile.csv"
            }
            Scenario::LambdaSweep => "fixed points over a list of couplings; writes lambda_sweep.csv",
            Scenario::Vanhove => "fixed-K van Hove schedules, lambda read as the list of K; writes vanhove.csv",
            Scenario::Measures => "purity, entropy and QCS of fixed points; writes measures_vs_lambda.csv",
        }
    }

    /// Scenarios that take exactly one coupling.
    fn single_lambda(self) -> bool {
        matches!(self, Scenario::Relax | Scenario::ProductCompare)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coherent amplitude, written either as a real number or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(f64),
    Complex([f64; 2]),
}

impl Amplitude {
    pub fn value(self) -> C64 {
        match self {
            Amplitude::Real(x) => C64::new(x, 0.0),
            Amplitude::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    /// Inverse temperature β.
    Thermal(f64),
    Fock(usize),
    Coherent(Amplitude),
}

impl StateSpec {
    pub fn build(self, cutoff: FockCutoff) -> repscatter_core::Result<DensityMatrix> {
        match self {
            StateSpec::Thermal(beta) => fock::thermal_state(beta, cutoff),
            StateSpec::Fock(n) => fock::fock_state(n, cutoff),
            StateSpec::Coherent(a) => fock::coherent_state(a.value(), cutoff),
        }
    }

    fn check(self, field: &'static str, n_max: usize) -> Result<(), CliError> {
        match self {
            StateSpec::Thermal(beta) if !(beta > 0.0 && beta.is_finite()) => {
                Err(CliError::validation(
                    field,
                    format!("thermal β must be positive and finite, got {beta}"),
                ))
            }
            StateSpec::Fock(n) if n + 2 > n_max => Err(CliError::validation(
                field,
                format!("fock({n}) needs n_max ≥ {}, got {n_max}", n + 2),
            )),
            StateSpec::Coherent(a) if !(a.value().re.is_finite() && a.value().im.is_finite()) => {
                Err(CliError::validation(
                    field,
                    "coherent amplitude must be finite",
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Initial probe state; `fock_default` is the vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Rho0Spec {
    #[default]
    FockDefault,
    Thermal(f64),
    Fock(usize),
    Coherent(Amplitude),
}

impl Rho0Spec {
    pub fn as_state(self) -> StateSpec {
        match self {
            Rho0Spec::FockDefault => StateSpec::Fock(0),
            Rho0Spec::Thermal(b) => StateSpec::Thermal(b),
            Rho0Spec::Fock(n) => StateSpec::Fock(n),
            Rho0Spec::Coherent(a) => StateSpec::Coherent(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Single(f64),
    List(Vec<f64>),
}

impl LambdaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            LambdaSpec::Single(x) => vec![*x],
            LambdaSpec::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGridSpec {
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_r_max() -> f64 {
    repscatter_core::charfn::GRID_RADIUS
}

fn default_points() -> usize {
    repscatter_core::charfn::GRID_POINTS
}

impl Default for ZGridSpec {
    fn default() -> Self {
        ZGridSpec {
            r_max: default_r_max(),
            points: default_points(),
        }
    }
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(DEFAULT_OUTPUT_DIR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub sigma_spec: Option<StateSpec>,
    #[serde(default)]
    pub rho0_spec: Rho0Spec,
    pub lambda: Option<LambdaSpec>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub z_grid: ZGridSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    /// The reservoir state; present on every validated config.
    pub fn sigma(&self) -> StateSpec {
        self.sigma_spec
            .expect("validated config has a reservoir state")
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.lambda
            .as_ref()
            .map(LambdaSpec::values)
            .unwrap_or_default()
    }

    /// For `vanhove`, the λ list holds the step counts `K`.
    pub fn van_hove_ks(&self) -> Vec<usize> {
        self.lambdas().into_iter().map(|k| k as usize).collect()
    }

    pub fn cutoff(&self) -> FockCutoff {
        FockCutoff::new(self.n_max).expect("validated n_max")
    }

    /// Canonical JSON echo: defaults filled, fixed key order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let lambdas = match &self.lambda {
            None => return Err(CliError::validation("lambda", "is required")),
            Some(l) => l.values(),
        };
        if lambdas.is_empty() {
            return Err(CliError::validation("lambda", "list must not be empty"));
        }
        if self.scenario.single_lambda() && lambdas.len() != 1 {
            return Err(CliError::validation(
                "lambda",
                format!(
                    "scenario {} takes a single coupling, got {} values",
                    self.scenario,
                    lambdas.len()
                ),
            ));
        }
        if self.scenario == Scenario::Vanhove {
            for &k in &lambdas {
                if !(k >= 1.0 && k.fract() == 0.0 && k <= MAX_VAN_HOVE_K as f64) {
                    return Err(CliError::validation(
                        "lambda",
                        format!("vanhove reads lambda as step counts K, each an integer in 1..={MAX_VAN_HOVE_K}; got {k}"),
                    ));
                }
            }
        } else {
            for &l in &lambdas {
                if !(l > 0.0 && l <= FRAC_PI_2) {
                    return Err(CliError::validation(
                        "lambda",
                        format!("must lie in (0, π/2], got {l}"),
                    ));
                }
            }
        }
        if self.n_max < 2 {
            return Err(CliError::validation(
                "n_max",
                format!("must be at least 2, got {}", self.n_max),
            ));
        }
        let joint = (self.n_max + 1) * (self.n_max + 1);
        let limit = fock::max_joint_dim();
        if joint > limit {
            return Err(CliError::validation(
                "n_max",
                format!(
                    "joint dimension {joint} exceeds the limit {limit}; raise it with {}",
                    fock::MAX_DIM_ENV
                ),
            ));
        }
        if !(self.tol >= 1e-12 && self.tol < 1.0) {
            return Err(CliError::validation(
                "tol",
                format!("must lie in [1e-12, 1), got {}", self.tol),
            ));
        }
        if self.max_steps == 0 {
            return Err(CliError::validation("max_steps", "must be positive"));
        }
        if !(self.z_grid.r_max > 0.0 && self.z_grid.r_max <= 10.0) {
            return Err(CliError::validation(
                "z_grid.r_max",
                format!("must lie in (0, 10], got {}", self.z_grid.r_max),
            ));
        }
        if !(1..=10_000).contains(&self.z_grid.points) {
            return Err(CliError::validation(
                "z_grid.points",
                format!("must lie in 1..=10000, got {}", self.z_grid.points),
            ));
        }
        match self.sigma_spec {
            None => return Err(CliError::validation("sigma_spec", "is required")),
            Some(s) => s.check("sigma_spec", self.n_max)?,
        }
        self.rho0_spec.as_state().check("rho0_spec", self.n_max)?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(CliError::validation("output_dir", "must not be empty"));
        }
        Ok(())
    }
}

/// Parses and validates a JSON config, filling defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| {
        if e.is_data() {
            CliError::Validation {
                field: "config".into(),
                message: format!("{e}"),
            }
        } else {
            CliError::Parse {
                line: e.line(),
                column: e.column(),
                message: format!("{e}"),
            }
        }
    })?;
    config.validate()?;
    Ok(config)
}
