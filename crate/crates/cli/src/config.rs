//! `key = value` run configuration files.
//!
//! Recognised keys and defaults:
//!
//! | key          | default | meaning |
//! |--------------|---------|---------|
//! | `gamma`      | required | nonlinearity exponent |
//! | `dim`        | 1       | velocity dimension (1, 2 or 3) |
//! | `r1`         | 1       | radius of the velocity domain |
//! | `n`          | required | number of mass grid points |
//! | `tau`        | required | time step |
//! | `t_final`    | required | final time |
//! | `eps`        | 0       | regularisation of the logarithmic term |
//! | `delta`      | 0       | diffusion regularisation near `S = 0` |
//! | `integrator` | `be`    | `be` (backward Euler) or `cn` (Crank–Nicolson) |
//! | `init`       | required | `gaussian(A, sigma[, v0, background])` |
//! | `mass`       | none    | rescale the amplitude so the datum carries this mass |
//!
//! Blank lines and lines starting with `#` are ignored.

use condensate_core::{Grid, InitialDatum, Integrator, ModelParams, SolverConfig};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// A parsed configuration: solver settings and the initial datum.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub init: InitialDatum,
}

#[derive(Default)]
struct Raw {
    gamma: Option<f64>,
    dim: Option<usize>,
    r1: Option<f64>,
    n: Option<usize>,
    tau: Option<f64>,
    t_final: Option<f64>,
    eps: Option<f64>,
    delta: Option<f64>,
    integrator: Option<Integrator>,
    init: Option<InitialDatum>,
    mass: Option<f64>,
}

fn number(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>()
        .map_err(|_| ConfigError::Line { line, message: format!("{key}: expected a number, got '{v}'") })
}

fn count(line: usize, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse::<usize>()
        .map_err(|_| ConfigError::Line { line, message: format!("{key}: expected a nonnegative integer, got '{v}'") })
}

fn parse_init(line: usize, v: &str) -> Result<InitialDatum, ConfigError> {
    let err = |m: String| ConfigError::Line { line, message: m };
    let inner = v
        .strip_prefix("gaussian(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| err(format!("init: expected gaussian(A, sigma[, v0, background]), got '{v}'")))?;
    let args = inner
        .split(',')
        .map(|s| number(line, "init", s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let d = match args.as_slice() {
        [a, s] => InitialDatum::gaussian(*a, *s),
        [a, s, v0] => InitialDatum { v0: *v0, ..InitialDatum::gaussian(*a, *s) },
        [a, s, v0, b] => InitialDatum { amp: *a, sigma: *s, v0: *v0, background: *b },
        _ => return Err(err(format!("init: gaussian takes 2 to 4 arguments, got {}", args.len()))),
    };
    d.validate().map_err(|e| err(e.to_string()))?;
    Ok(d)
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut raw = Raw::default();
    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| ConfigError::Line { line, message: format!("expected 'key = value', got '{content}'") })?;
        let dup = |set: bool| {
            if set {
                Err(ConfigError::Line { line, message: format!("duplicate key '{key}'") })
            } else {
                Ok(())
            }
        };
        match key {
            "gamma" => {
                dup(raw.gamma.is_some())?;
                raw.gamma = Some(number(line, key, value)?);
            }
            "dim" => {
                dup(raw.dim.is_some())?;
                raw.dim = Some(count(line, key, value)?);
            }
            "r1" => {
                dup(raw.r1.is_some())?;
                raw.r1 = Some(number(line, key, value)?);
            }
            "n" => {
                dup(raw.n.is_some())?;
                raw.n = Some(count(line, key, value)?);
            }
            "tau" => {
                dup(raw.tau.is_some())?;
                raw.tau = Some(number(line, key, value)?);
            }
            "t_final" => {
                dup(raw.t_final.is_some())?;
                raw.t_final = Some(number(line, key, value)?);
            }
            "eps" => {
                dup(raw.eps.is_some())?;
                raw.eps = Some(number(line, key, value)?);
            }
            "delta" => {
                dup(raw.delta.is_some())?;
                raw.delta = Some(number(line, key, value)?);
            }
            "mass" => {
                dup(raw.mass.is_some())?;
                raw.mass = Some(number(line, key, value)?);
            }
            "integrator" => {
                dup(raw.integrator.is_some())?;
                raw.integrator = Some(match value.to_ascii_lowercase().as_str() {
                    "be" | "backward_euler" => Integrator::BackwardEuler,
                    "cn" | "crank_nicolson" => Integrator::CrankNicolson,
                    _ => {
                        return Err(ConfigError::Line {
                            line,
                            message: format!("integrator: expected 'be' or 'cn', got '{value}'"),
                        })
                    }
                });
            }
            "init" => {
                dup(raw.init.is_some())?;
                if value.is_empty() {
                    return Err(ConfigError::Line { line, message: "initial datum required".into() });
                }
                raw.init = Some(parse_init(line, value)?);
            }
            _ => return Err(ConfigError::Line { line, message: format!("unknown key '{key}'") }),
        }
    }
    finish(raw)
}

fn finish(raw: Raw) -> Result<RunConfig, ConfigError> {
    let missing = |k: &str| ConfigError::Invalid(format!("missing required key '{k}'"));
    let mut init = raw.init.ok_or_else(|| ConfigError::Invalid("initial datum required".into()))?;
    let gamma = raw.gamma.ok_or_else(|| missing("gamma"))?;
    let n = raw.n.ok_or_else(|| missing("n"))?;
    let tau = raw.tau.ok_or_else(|| missing("tau"))?;
    let t_final = raw.t_final.ok_or_else(|| missing("t_final"))?;
    let invalid = |e: condensate_core::Error| ConfigError::Invalid(e.to_string());
    let params = ModelParams::new(gamma, raw.dim.unwrap_or(1), raw.r1.unwrap_or(1.0)).map_err(invalid)?;
    if let Some(target) = raw.mass {
        if !(target > 0.0 && target.is_finite()) {
            return Err(ConfigError::Invalid(format!("mass must be positive, got {target}")));
        }
        init.amp *= target / init.mass(&params);
    }
    let mass = init.mass(&params);
    let grid = Grid::new(n, mass).map_err(invalid)?;
    let mut solver = SolverConfig::new(params, grid, tau, t_final).map_err(invalid)?;
    solver.eps_reg = raw.eps.unwrap_or(0.0);
    solver.delta_reg = raw.delta.unwrap_or(0.0);
    solver.integrator = raw.integrator.unwrap_or(Integrator::BackwardEuler);
    solver.validate().map_err(invalid)?;
    Ok(RunConfig { solver, init })
}
