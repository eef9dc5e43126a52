//! Scenario files: sections of key-value pairs, parsed as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Floquet,
    Adiabatic,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Original,
    Mapped,
}

/// Physical parameters of one point. Exactly one of `gamma` and `lambda`
/// must be given; `lambda = sqrt(gamma * width / 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
    pub dot_amplitude: f64,
    #[serde(default = "one")]
    pub amp_left: f64,
    #[serde(default = "one")]
    pub amp_right: f64,
    #[serde(default = "one")]
    pub eps0: f64,
    #[serde(default)]
    pub bias: f64,
    pub beta: f64,
    pub mu: f64,
    /// Lorentzian width `delta`; the residual baths are flat at `2 delta`.
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Time steps per period of the Floquet propagator.
    pub steps: usize,
    pub operator_tol: f64,
    pub generator_tol: f64,
    pub state_tol: f64,
    pub max_state_harmonics: usize,
    /// Drop Floquet-mode coherences (rate equations over mode populations).
    pub secular: bool,
    /// Grid points per period of the channel decomposition.
    pub points: usize,
    /// Run the adiabatic path even when the adiabaticity metric is large.
    pub force: bool,
    pub levels: usize,
    pub half_width: f64,
    pub residual_half_width: f64,
    pub steps_per_period: usize,
    pub relax_periods: usize,
    pub representation: Representation,
}

impl Default for Numerics {
    fn default() -> Self {
        let fme = rcpump::fme::FmeOptions {
            steps: 256,
            ..Default::default()
        };
        let oracle = rcpump::oracle::OracleSettings::default();
        Numerics {
            steps: fme.steps,
            operator_tol: fme.operator_tol,
            generator_tol: fme.generator_tol,
            state_tol: fme.state_tol,
            max_state_harmonics: fme.max_state_harmonics,
            secular: false,
            points: rcpump::adiabatic::DEFAULT_POINTS,
            force: false,
            levels: oracle.levels,
            half_width: oracle.half_width,
            residual_half_width: oracle.residual_half_width,
            steps_per_period: oracle.steps_per_period,
            relax_periods: oracle.relax_periods,
            representation: Representation::Original,
        }
    }
}

impl Numerics {
    pub fn fme_options(&self) -> rcpump::fme::FmeOptions {
        rcpump::fme::FmeOptions {
            steps: self.steps,
            operator_tol: self.operator_tol,
            generator_tol: self.generator_tol,
            state_tol: self.state_tol,
            max_state_harmonics: self.max_state_harmonics,
        }
    }

    pub fn oracle_settings(&self) -> rcpump::oracle::OracleSettings {
        rcpump::oracle::OracleSettings {
            levels: self.levels,
            half_width: self.half_width,
            residual_half_width: self.residual_half_width,
            steps_per_period: self.steps_per_period,
            relax_periods: self.relax_periods,
        }
    }
}

/// Names accepted as sweep parameters.
pub const AXIS_PARAMS: [&str; 12] = [
    "omega",
    "phase",
    "dot_amplitude",
    "amp_left",
    "amp_right",
    "eps0",
    "bias",
    "beta",
    "mu",
    "width",
    "gamma",
    "lambda",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    /// Geometric instead of linear spacing.
    #[serde(default)]
    pub log: bool,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.start];
        }
        (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                if self.log {
                    self.start * (self.stop / self.start).powf(s)
                } else {
                    self.start + s * (self.stop - self.start)
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Extra couplings listed by `rc-info`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma_list: Vec<f64>,
    pub physics: Physics,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, rename = "axis", skip_serializing_if = "Vec::is_empty")]
    pub axes: Vec<Axis>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.axes.len() > 2 {
            return Err(invalid(format!("at most two sweep axes, got {}", self.axes.len())));
        }
        let mut seen = Vec::new();
        for a in &self.axes {
            if !AXIS_PARAMS.contains(&a.param.as_str()) {
                return Err(invalid(format!("axis parameter `{}` is not one of {}", a.param, AXIS_PARAMS.join(", "))));
            }
            if seen.contains(&a.param) {
                return Err(invalid(format!("axis parameter `{}` appears twice", a.param)));
            }
            seen.push(a.param.clone());
            if a.points == 0 {
                return Err(invalid(format!("axis `{}` needs at least one point", a.param)));
            }
            if a.log && !(a.start > 0.0 && a.stop > 0.0) {
                return Err(invalid(format!("logarithmic axis `{}` needs positive bounds", a.param)));
            }
        }
        let p = &self.physics;
        let coupling_on_axis = seen.iter().any(|n| n == "gamma" || n == "lambda");
        match (p.gamma, p.lambda) {
            (Some(_), Some(_)) => return Err(invalid("give either `gamma` or `lambda`, not both")),
            (None, None) if !coupling_on_axis => return Err(invalid("missing coupling: set `gamma` or `lambda`")),
            _ => {}
        }
        if seen.contains(&"gamma".to_string()) && p.lambda.is_some() || seen.contains(&"lambda".to_string()) && p.gamma.is_some() {
            return Err(invalid("the swept coupling conflicts with the fixed one; drop the fixed value"));
        }
        if seen.contains(&"gamma".to_string()) && seen.contains(&"lambda".to_string()) {
            return Err(invalid("`gamma` and `lambda` cannot both be swept"));
        }
        for (name, v) in [("omega", p.omega), ("beta", p.beta), ("width", p.width)] {
            if !(v > 0.0) && !seen.iter().any(|n| n == name) {
                return Err(invalid(format!("`{name}` must be positive, got {v}")));
            }
        }
        let n = &self.numerics;
        match self.regime {
            Regime::Floquet => {
                if n.steps < 16 {
                    return Err(invalid(format!("`steps` must be at least 16, got {}", n.steps)));
                }
            }
            Regime::Adiabatic => {
                if n.points < 16 {
                    return Err(invalid(format!("`points` must be at least 16, got {}", n.points)));
                }
            }
            Regime::Oracle => {
                if n.levels == 0 || n.steps_per_period == 0 {
                    return Err(invalid("`levels` and `steps_per_period` must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Grid points in row-major order: the second axis varies fastest.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let first = self.axes.first().map(Axis::values).unwrap_or_else(|| vec![f64::NAN]);
        let second = self.axes.get(1).map(Axis::values).unwrap_or_else(|| vec![f64::NAN]);
        first.iter().flat_map(|&a| second.iter().map(move |&b| (a, b))).collect()
    }

    /// Physics at a grid point.
    pub fn physics_at(&self, point: (f64, f64)) -> Physics {
        let mut p = self.physics;
        for (axis, v) in self.axes.iter().zip([point.0, point.1]) {
            set_param(&mut p, &axis.param, v);
        }
        p
    }
}

fn set_param(p: &mut Physics, name: &str, v: f64) {
    match name {
        "omega" => p.omega = v,
        "phase" => p.phase = v,
        "dot_amplitude" => p.dot_amplitude = v,
        "amp_left" => p.amp_left = v,
        "amp_right" => p.amp_right = v,
        "eps0" => p.eps0 = v,
        "bias" => p.bias = v,
        "beta" => p.beta = v,
        "mu" => p.mu = v,
        "width" => p.width = v,
        "gamma" => p.gamma = Some(v),
        "lambda" => p.lambda = Some(v),
        _ => unreachable!("validated axis name"),
    }
}

impl Physics {
    pub fn lambda(&self) -> f64 {
        match (self.lambda, self.gamma) {
            (Some(l), _) => l,
            (None, Some(g)) => rcpump::model::rc_map_lorentzian(g, self.width, 0.0).coupling,
            (None, None) => 0.0,
        }
    }

    pub fn driving(&self) -> rcpump::model::DrivingProtocol {
        rcpump::model::DrivingProtocol {
            omega: self.omega,
            phase: self.phase,
            dot_amplitude: self.dot_amplitude,
            amp_left: self.amp_left,
            amp_right: self.amp_right,
            eps0: self.eps0,
        }
    }

    pub fn tqd(&self) -> rcpump::hamiltonian::TqdParams {
        rcpump::hamiltonian::TqdParams::symmetric(self.driving(), self.lambda(), self.bias)
    }
}
