//! Flat key–value run configuration.
//!
//! The parameter space is small and flat, so the format is a plain list of
//! `key = value` lines with `#` comments.  Every key has a documented default
//! (the convergence-test setup), parse errors carry line numbers, and
//! [`serialize`](RunConfig::serialize) emits full-precision values so that a
//! config round-trips bit-exactly.

use std::fmt;
use std::str::FromStr;

use thermophase::experiments::TempProfile;
use thermophase::linalg::SolverKind;
use thermophase::model::{MobilityMatrix, ModelParams};
use thermophase::scheme::SolverConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: malformed line `{text}` (expected `key = value`)")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: value `{value}` for `{key}` is not a valid {expected}")]
    TypeMismatch { line: usize, key: String, value: String, expected: &'static str },
    #[error("line {line}: `{key} = {value}` violates an invariant: {reason}")]
    Invariant { line: usize, key: String, value: String, reason: &'static str },
    #[error("invalid configuration: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Single,
    Converge,
    Applied,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Single => "single",
            ExperimentKind::Converge => "converge",
            ExperimentKind::Applied => "applied",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilitySelection {
    Convergence,
    Applied,
}

impl MobilitySelection {
    pub fn matrix(self) -> MobilityMatrix {
        match self {
            MobilitySelection::Convergence => MobilityMatrix::convergence(),
            MobilitySelection::Applied => MobilityMatrix::applied(),
        }
    }
}

impl fmt::Display for MobilitySelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MobilitySelection::Convergence => "convergence",
            MobilitySelection::Applied => "applied",
        })
    }
}

/// A fully validated run configuration with defaults for every omitted key.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub tau: f64,
    pub t_final: f64,
    pub params: ModelParams,
    pub mobility: MobilitySelection,
    pub out_dir: String,
    pub snapshot_times: Vec<f64>,
    pub newton_rtol: f64,
    pub newton_atol: f64,
    /// Number of refinement levels for `converge` (levels 0..=levels).
    pub levels: usize,
    /// Initial temperature profile for `applied`.
    pub profile: TempProfile,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        RunConfig {
            kind: ExperimentKind::Single,
            n: 16,
            tau: solver.tau,
            t_final: solver.t_final,
            params: ModelParams::default(),
            mobility: MobilitySelection::Convergence,
            out_dir: "out".to_string(),
            snapshot_times: Vec::new(),
            newton_rtol: solver.newton_rtol,
            newton_atol: solver.newton_atol,
            levels: 3,
            profile: TempProfile::A,
        }
    }
}

impl RunConfig {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tau: self.tau,
            t_final: self.t_final,
            newton_rtol: self.newton_rtol,
            newton_atol: self.newton_atol,
            linear_solver: SolverKind::Auto,
            ..SolverConfig::default()
        }
    }

    /// Emits the configuration in the same flat format accepted by
    /// [`parse_config`]; numeric values keep 17 significant digits.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        let f = |x: f64| format!("{x:.16e}");
        kv("kind", self.kind.to_string());
        kv("n", self.n.to_string());
        kv("tau", f(self.tau));
        kv("t_final", f(self.t_final));
        kv("gamma_rho", f(self.params.gamma_rho));
        kv("gamma_eta", f(self.params.gamma_eta));
        kv("c1", f(self.params.c1));
        kv("c2", f(self.params.c2));
        kv("d1", f(self.params.d1));
        kv("d2", f(self.params.d2));
        kv("alpha", f(self.params.alpha));
        kv("lambda", f(self.params.lambda));
        kv("theta_min", f(self.params.theta_min));
        kv("theta_max", f(self.params.theta_max));
        kv("mobility", self.mobility.to_string());
        kv("out_dir", self.out_dir.clone());
        if !self.snapshot_times.is_empty() {
            let times: Vec<String> = self.snapshot_times.iter().map(|t| f(*t)).collect();
            kv("snapshot_times", times.join(","));
        }
        kv("newton_rtol", f(self.newton_rtol));
        kv("newton_atol", f(self.newton_atol));
        kv("levels", self.levels.to_string());
        kv("profile", format!("{:?}", self.profile));
        out
    }
}

fn parse_num<T: FromStr>(
    line: usize,
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::TypeMismatch {
        line,
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn require(
    ok: bool,
    line: usize,
    key: &str,
    value: &str,
    reason: &'static str,
) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invariant {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
            reason,
        })
    }
}

/// Parses a flat `key = value` configuration; an empty text yields the full
/// default configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line,
            text: content.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "kind" => {
                cfg.kind = match value {
                    "single" => ExperimentKind::Single,
                    "converge" => ExperimentKind::Converge,
                    "applied" => ExperimentKind::Applied,
                    _ => {
                        return Err(ConfigError::TypeMismatch {
                            line,
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "experiment kind (single | converge | applied)",
                        })
                    }
                };
            }
            "n" => {
                let n: usize = parse_num(line, key, value, "positive integer")?;
                require(n >= 2 && n % 2 == 0, line, key, value, "mesh resolution must be an even integer ≥ 2")?;
                cfg.n = n;
            }
            "tau" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v > 0.0, line, key, value, "time step must be positive")?;
                cfg.tau = v;
            }
            "t_final" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v > 0.0, line, key, value, "final time must be positive")?;
                cfg.t_final = v;
            }
            "gamma_rho" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v > 0.0, line, key, value, "interface parameter γ_ρ must be positive")?;
                cfg.params.gamma_rho = v;
            }
            "gamma_eta" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v > 0.0, line, key, value, "interface parameter γ_η must be positive")?;
                cfg.params.gamma_eta = v;
            }
            "c1" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v > 0.0, line, key, value, "potential coefficient C₁ must be positive")?;
                cfg.params.c1 = v;
            }
            "c2" => cfg.params.c2 = parse_num(line, key, value, "number")?,
            "d1" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v > 0.0, line, key, value, "potential coefficient D₁ must be positive")?;
                cfg.params.d1 = v;
            }
            "d2" => cfg.params.d2 = parse_num(line, key, value, "number")?,
            "alpha" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v >= 0.0, line, key, value, "split stabilizer α must be nonnegative")?;
                cfg.params.alpha = v;
            }
            "lambda" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v >= 0.0, line, key, value, "relative-entropy penalty λ must be nonnegative")?;
                cfg.params.lambda = v;
            }
            "theta_min" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v > 0.0, line, key, value, "inverse-temperature floor must be positive")?;
                cfg.params.theta_min = v;
            }
            "theta_max" => cfg.params.theta_max = parse_num(line, key, value, "number")?,
            "mobility" => {
                cfg.mobility = match value {
                    "convergence" => MobilitySelection::Convergence,
                    "applied" => MobilitySelection::Applied,
                    _ => {
                        return Err(ConfigError::TypeMismatch {
                            line,
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "mobility selection (convergence | applied)",
                        })
                    }
                };
            }
            "out_dir" => cfg.out_dir = value.to_string(),
            "snapshot_times" => {
                let mut times = Vec::new();
                for part in value.split(',') {
                    times.push(parse_num::<f64>(line, key, part, "comma-separated number list")?);
                }
                cfg.snapshot_times = times;
            }
            "newton_rtol" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v > 0.0, line, key, value, "Newton tolerance must be positive")?;
                cfg.newton_rtol = v;
            }
            "newton_atol" => {
                let v: f64 = parse_num(line, key, value, "number")?;
                require(v > 0.0, line, key, value, "Newton tolerance must be positive")?;
                cfg.newton_atol = v;
            }
            "levels" => cfg.levels = parse_num(line, key, value, "nonnegative integer")?,
            "profile" => {
                cfg.profile = value.parse().map_err(|_| ConfigError::TypeMismatch {
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                    expected: "temperature profile (A | B | C)",
                })?;
            }
            _ => {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
        }
    }
    if cfg.params.theta_max <= cfg.params.theta_min {
        return Err(ConfigError::Inconsistent(
            "theta_max must exceed theta_min".to_string(),
        ));
    }
    for &t in &cfg.snapshot_times {
        let steps = t / cfg.tau;
        if (steps - steps.round()).abs() > 1e-12 * (1.0 + steps.abs()) {
            return Err(ConfigError::Inconsistent(format!(
                "snapshot time {t} is not on the τ = {} time grid",
                cfg.tau
            )));
        }
    }
    Ok(cfg)
}
