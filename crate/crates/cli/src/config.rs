//! Run configuration: JSON schema, validation and normalization.

use std::path::{Path, PathBuf};

use freecir_core::{EquationKind, EquationSpec, Scheme, SchemeSpec, SdeError, SpectralFunction};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Named spectral function of `X0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionConfig {
    Sqrt,
    FourthRoot,
    Inverse,
    PositivePart,
    /// `alpha * X0 + beta`.
    Affine {
        alpha: f64,
        beta: f64,
    },
    Power {
        k: i32,
    },
    /// Shorthand for `affine(0, value)`; normalized away.
    Constant {
        value: f64,
    },
}

impl FunctionConfig {
    pub fn normalized(self) -> Self {
        match self {
            FunctionConfig::Constant { value } => FunctionConfig::Affine {
                alpha: 0.0,
                beta: value,
            },
            FunctionConfig::Power { k: 1 } => FunctionConfig::Affine {
                alpha: 1.0,
                beta: 0.0,
            },
            other => other,
        }
    }

    pub fn to_spectral(self) -> SpectralFunction<f64> {
        match self.normalized() {
            FunctionConfig::Sqrt => SpectralFunction::Sqrt,
            FunctionConfig::FourthRoot => SpectralFunction::FourthRoot,
            FunctionConfig::Inverse => SpectralFunction::Inverse,
            FunctionConfig::PositivePart => SpectralFunction::PositivePart,
            FunctionConfig::Affine { alpha, beta } => SpectralFunction::Affine { alpha, beta },
            FunctionConfig::Power { k } => SpectralFunction::Power(k),
            FunctionConfig::Constant { .. } => unreachable!(),
        }
    }

    pub fn identity() -> Self {
        FunctionConfig::Affine {
            alpha: 0.0,
            beta: 1.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        FunctionConfig::Affine {
            alpha: 0.0,
            beta: c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationConfig {
    pub kind: String,
    pub x0_spectrum: Vec<f64>,
    pub a: FunctionConfig,
    pub sigma: FunctionConfig,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub scheme: String,
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub equation: EquationConfig,
    pub scheme: SchemeConfig,
    pub dim: usize,
    pub runs: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Environment variable overriding `base_seed`.
pub const SEED_ENV: &str = "FREECIR_SEED";

/// A validated configuration with the objects built from it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub spec: EquationSpec<f64>,
    pub scheme: SchemeSpec<f64>,
    pub checkpoint_steps: Vec<usize>,
}

fn field(name: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: name.to_owned(),
        message: message.into(),
    }
}

fn sde_field(prefix: &str, e: SdeError) -> CliError {
    match e {
        SdeError::InvalidField { field: f, reason } => field(&format!("{prefix}.{f}"), reason),
        other => field(prefix, other.to_string()),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| field("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| field("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical spelling: lowercase snake-case names, shorthand functions
    /// expanded, checkpoints sorted without duplicates.
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        if let Ok(k) = c.equation.kind.parse::<EquationKind>() {
            c.equation.kind = k.as_str().to_owned();
        }
        if let Ok(s) = c.scheme.scheme.parse::<Scheme>() {
            c.scheme.scheme = s.as_str().to_owned();
        }
        c.equation.a = c.equation.a.normalized();
        c.equation.sigma = c.equation.sigma.normalized();
        c.checkpoints.sort_by(f64::total_cmp);
        c.checkpoints.dedup();
        c
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// `FREECIR_SEED`, when set, replaces `base_seed`.
    pub fn apply_env_seed(&mut self) -> Result<(), CliError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.base_seed = v.trim().parse().map_err(|_| {
                field(
                    "base_seed",
                    format!("{SEED_ENV}={v:?} is not an unsigned integer"),
                )
            })?;
        }
        Ok(())
    }

    /// Checks every field and builds the simulation objects.
    pub fn validate(&self) -> Result<Experiment, CliError> {
        let config = self.normalized();
        let eq = &config.equation;
        let kind: EquationKind = eq.kind.parse().map_err(|e| sde_field("equation", e))?;
        if config.dim == 0 {
            return Err(field("dim", "must be at least 1"));
        }
        if eq.x0_spectrum.is_empty() {
            return Err(field("equation.x0_spectrum", "must be nonempty"));
        }
        if config.dim % eq.x0_spectrum.len() != 0 {
            return Err(field(
                "dim",
                format!(
                    "{} is not a multiple of the x0_spectrum length {}",
                    config.dim,
                    eq.x0_spectrum.len()
                ),
            ));
        }
        if config.runs == 0 {
            return Err(field("runs", "must be at least 1"));
        }
        let spec = EquationSpec::new(
            kind,
            eq.a.to_spectral(),
            eq.sigma.to_spectral(),
            eq.b,
            eq.x0_spectrum.clone(),
            config.dim / eq.x0_spectrum.len(),
        )
        .map_err(|e| sde_field("equation", e))?;
        let scheme_kind: Scheme = config
            .scheme
            .scheme
            .parse()
            .map_err(|e| sde_field("scheme", e))?;
        let scheme = SchemeSpec::new(scheme_kind, config.scheme.dt, config.scheme.t_end)
            .map_err(|e| sde_field("scheme", e))?;
        let checkpoint_steps = config
            .checkpoints
            .iter()
            .map(|&t| {
                scheme.index_of(t).ok_or_else(|| {
                    field(
                        "checkpoints",
                        format!(
                            "{t} is not a grid time in [0, {}] with dt {}",
                            scheme.t_end, scheme.dt
                        ),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Experiment {
            config,
            spec,
            scheme,
            checkpoint_steps,
        })
    }
}

/// `a = sigma = X0 = id`, `b = 1`: the stationary configuration.
pub fn stationary(kind: EquationKind, dim: usize, runs: usize, dt: f64, t_end: f64) -> RunConfig {
    RunConfig {
        equation: EquationConfig {
            kind: kind.as_str().to_owned(),
            x0_spectrum: vec![1.0],
            a: FunctionConfig::identity(),
            sigma: FunctionConfig::identity(),
            b: 1.0,
        },
        scheme: SchemeConfig {
            scheme: Scheme::Euler.as_str().to_owned(),
            dt,
            t_end,
        },
        dim,
        runs,
        base_seed: 20240601,
        checkpoints: vec![0.25, 0.5, 1.0]
            .into_iter()
            .filter(|&t| t <= t_end)
            .collect(),
        output_dir: default_output_dir(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        stationary(EquationKind::FreeCirNonclassical, 8, 2, 0.01, 1.0)
    }

    #[test]
    fn stationary_config_validates() {
        let e = base().validate().unwrap();
        assert_eq!(e.spec.dim(), 8);
        assert_eq!(e.checkpoint_steps, vec![25, 50, 100]);
    }

    #[test]
    fn negative_b_names_the_field() {
        let mut c = base();
        c.equation.b = -1.0;
        let err = c.validate().unwrap_err();
        assert!(
            matches!(&err, CliError::Config { field, .. } if field == "equation.b"),
            "{err}"
        );
        assert!(err.to_string().contains("`equation.b`"));
    }

    #[test]
    fn field_level_messages() {
        let cases: Vec<(Box<dyn Fn(&mut RunConfig)>, &str)> = vec![
            (Box::new(|c| c.dim = 0), "dim"),
            (Box::new(|c| c.runs = 0), "runs"),
            (
                Box::new(|c| c.equation.kind = "heston".into()),
                "equation.kind",
            ),
            (
                Box::new(|c| c.equation.x0_spectrum = vec![1.0, 2.0, 3.0]),
                "dim",
            ),
            (
                Box::new(|c| c.equation.x0_spectrum = vec![-1.0]),
                "equation.x0_spectrum",
            ),
            (
                Box::new(|c| c.equation.a = FunctionConfig::constant(0.0)),
                "equation.a",
            ),
            (Box::new(|c| c.scheme.dt = 0.0), "scheme.dt"),
            (
                Box::new(|c| c.scheme.scheme = "milstein".into()),
                "scheme.scheme",
            ),
            (Box::new(|c| c.checkpoints = vec![0.333]), "checkpoints"),
            (Box::new(|c| c.checkpoints = vec![2.0]), "checkpoints"),
        ];
        for (mutate, expected) in cases {
            let mut c = base();
            mutate(&mut c);
            match c.validate() {
                Err(CliError::Config { field, .. }) => assert_eq!(field, expected),
                other => panic!("expected config error on {expected}, got {other:?}"),
            }
        }
    }

    #[test]
    fn normalization_is_idempotent_and_round_trips() {
        let text = r#"{
            "equation": {"kind": "Free-CIR-Nonclassical", "x0_spectrum": [1.0, 2.0],
                         "a": {"fn": "constant", "value": 2.0}, "sigma": {"fn": "power", "k": 1}, "b": 0.5},
            "scheme": {"scheme": "SPLITTING", "dt": 0.01, "t_end": 1.0},
            "dim": 4, "runs": 3, "base_seed": 7, "checkpoints": [1.0, 0.5, 0.5]
        }"#;
        let c = RunConfig::from_json(text).unwrap().normalized();
        assert_eq!(c.equation.kind, "free_cir_nonclassical");
        assert_eq!(c.scheme.scheme, "splitting");
        assert_eq!(
            c.equation.a,
            FunctionConfig::Affine {
                alpha: 0.0,
                beta: 2.0
            }
        );
        assert_eq!(
            c.equation.sigma,
            FunctionConfig::Affine {
                alpha: 1.0,
                beta: 0.0
            }
        );
        assert_eq!(c.checkpoints, vec![0.5, 1.0]);
        assert_eq!(c.output_dir, PathBuf::from("out"));
        let again = RunConfig::from_json(&c.to_json()).unwrap().normalized();
        assert_eq!(again, c);
        assert_eq!(again.to_json(), c.to_json());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = serde_json::to_value(base()).unwrap();
        v["colour"] = serde_json::json!("red");
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn function_tags() {
        let f: FunctionConfig =
            serde_json::from_str(r#"{"fn":"affine","alpha":0.5,"beta":0.2}"#).unwrap();
        assert_eq!(
            f.to_spectral(),
            SpectralFunction::Affine {
                alpha: 0.5,
                beta: 0.2
            }
        );
        let f: FunctionConfig = serde_json::from_str(r#"{"fn":"fourth_root"}"#).unwrap();
        assert_eq!(f.to_spectral(), SpectralFunction::FourthRoot);
    }
}
