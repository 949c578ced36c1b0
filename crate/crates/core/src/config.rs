//! Run configuration: one TOML file per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::damping::{DampingLaw, DampingProfile};
use crate::decay::ClassifyThresholds;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::initial::InitialData;
use crate::semigroup::StepSolver;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingConfig {
    #[serde(default)]
    pub law: DampingLaw,
    pub profile: DampingProfile,
}

fn default_linear_tol() -> f64 {
    1e-12
}

fn default_samples() -> usize {
    100
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Simulate {
        dt: f64,
        nsteps: usize,
        #[serde(default = "default_linear_tol")]
        linear_tol: f64,
        #[serde(default)]
        solver: StepSolver,
    },
    Spectrum {},
    Resolvent {
        /// Defaults to 0.5.
        #[serde(default)]
        beta_min: Option<f64>,
        /// Defaults to the resolved band limit `pi / (4 h)`.
        #[serde(default)]
        beta_max: Option<f64>,
        #[serde(default = "default_samples")]
        samples: usize,
        /// Defaults to `[1, beta_max]`.
        #[serde(default)]
        fit_window: Option<[f64; 2]>,
        /// Restrict to the kernel complement before sweeping.
        #[serde(default = "default_true")]
        deflate: bool,
    },
    Observability {
        horizon: f64,
        /// Defaults to the coarsest step with `dt * omega_max <= 1`.
        #[serde(default)]
        dt: Option<f64>,
        /// Collar widths to sweep; the damping profile's level is reused.
        #[serde(default)]
        widths: Option<Vec<f64>>,
        /// Additional horizons (same `dt`) for a `T` sweep.
        #[serde(default)]
        horizons: Option<Vec<f64>>,
        #[serde(default)]
        frequency_cutoff: Option<f64>,
    },
    DecayFit {
        dt: f64,
        nsteps: usize,
        #[serde(default = "default_linear_tol")]
        linear_tol: f64,
        #[serde(default)]
        exponential_window: Option<[f64; 2]>,
        #[serde(default)]
        polynomial_window: Option<[f64; 2]>,
        #[serde(default)]
        thresholds: ClassifyThresholds,
    },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate { .. } => "simulate",
            Experiment::Spectrum {} => "spectrum",
            Experiment::Resolvent { .. } => "resolvent",
            Experiment::Observability { .. } => "observability",
            Experiment::DecayFit { .. } => "decay-fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

fn default_dir() -> PathBuf {
    PathBuf::from("dampwave-out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn default_stride() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default = "default_stride")]
    pub state_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
            state_stride: default_stride(),
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Checks applied to the headline results; each is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertions {
    /// simulate, decay-fit: `max |ledger residual| / ||Z||²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ledger_violation: Option<f64>,
    /// simulate, decay-fit: `|E(T) - E(0)| / E(0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_relative_energy_change: Option<f64>,
    /// simulate, decay-fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<crate::decay::Classification>,
    /// decay-fit: exponential amplitude rate `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_decay_rate: Option<f64>,
    /// decay-fit: power `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_power: Option<f64>,
    /// spectrum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_dim: Option<usize>,
    /// spectrum: no eigenvalue on the imaginary axis away from zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clearance: Option<bool>,
    /// spectrum: upper bound on the spectral abscissa outside the kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_spectral_abscissa: Option<f64>,
    /// resolvent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_resolvent_exponent: Option<f64>,
    /// observability: every reported constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_observability_constant: Option<f64>,
}

impl Assertions {
    fn check_applicable(&self, exp: &Experiment) -> Result<()> {
        let name = exp.name();
        let mut bad = Vec::new();
        let series = matches!(exp, Experiment::Simulate { .. } | Experiment::DecayFit { .. });
        let fit = matches!(exp, Experiment::DecayFit { .. });
        let spectrum = matches!(exp, Experiment::Spectrum {});
        let flags = [
            ("max_ledger_violation", self.max_ledger_violation.is_some(), series),
            ("max_relative_energy_change", self.max_relative_energy_change.is_some(), series),
            ("classification", self.classification.is_some(), series),
            ("min_decay_rate", self.min_decay_rate.is_some(), fit),
            ("min_power", self.min_power.is_some(), fit),
            ("kernel_dim", self.kernel_dim.is_some(), spectrum),
            ("clearance", self.clearance.is_some(), spectrum),
            ("max_spectral_abscissa", self.max_spectral_abscissa.is_some(), spectrum),
            ("max_resolvent_exponent", self.max_resolvent_exponent.is_some(), matches!(exp, Experiment::Resolvent { .. })),
            (
                "min_observability_constant",
                self.min_observability_constant.is_some(),
                matches!(exp, Experiment::Observability { .. }),
            ),
        ];
        for (field, set, ok) in flags {
            if set && !ok {
                bad.push(field);
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "assertions.{} do not apply to a {name} experiment",
                bad.join(", assertions.")
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub damping: DampingConfig,
    #[serde(default)]
    pub initial: InitialData,
    pub experiment: Experiment,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub assertions: Assertions,
}

/// Schema violation, with the dotted path of the offending field.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, SchemaError> {
        let de = toml::Deserializer::parse(text).map_err(|e| SchemaError {
            path: "<document>".into(),
            message: e.to_string(),
        })?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| SchemaError {
            path: match e.path().to_string() {
                p if p == "." => "<root>".into(),
                p => p,
            },
            message: e.inner().message().to_string(),
        })?;
        cfg.validate().map_err(|e| SchemaError {
            path: e.0.into(),
            message: e.1,
        })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> std::result::Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|e| SchemaError {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Semantic checks beyond the schema; returns the offending field.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let g = self.grid.build().map_err(|e| ("grid", e.to_string()))?;
        self.damping
            .profile
            .validate(&g)
            .map_err(|e| ("damping.profile", e.to_string()))?;
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((name, format!("must be positive and finite, got {v}")))
            }
        };
        match &self.experiment {
            Experiment::Simulate { dt, nsteps, linear_tol, .. } | Experiment::DecayFit { dt, nsteps, linear_tol, .. } => {
                positive("experiment.dt", *dt)?;
                positive("experiment.linear_tol", *linear_tol)?;
                if *nsteps == 0 {
                    return Err(("experiment.nsteps", "must be at least 1".into()));
                }
            }
            Experiment::Spectrum {} => {}
            Experiment::Resolvent {
                beta_min,
                beta_max,
                samples,
                fit_window,
                ..
            } => {
                let lo = beta_min.unwrap_or(0.5);
                let hi = beta_max.unwrap_or_else(|| crate::spectral::resolved_band(&g));
                if !(lo >= 0.0 && hi > lo) {
                    return Err(("experiment.beta_max", format!("need 0 <= beta_min < beta_max, got [{lo}, {hi}]")));
                }
                if *samples < 2 {
                    return Err(("experiment.samples", "must be at least 2".into()));
                }
                if let Some([a, b]) = fit_window {
                    if !(a > &0.0 && b > a) {
                        return Err(("experiment.fit_window", format!("invalid window [{a}, {b}]")));
                    }
                }
            }
            Experiment::Observability {
                horizon,
                dt,
                widths,
                horizons,
                frequency_cutoff,
            } => {
                positive("experiment.horizon", *horizon)?;
                if let Some(dt) = dt {
                    positive("experiment.dt", *dt)?;
                }
                if let Some(c) = frequency_cutoff {
                    positive("experiment.frequency_cutoff", *c)?;
                }
                for w in widths.iter().flatten() {
                    if !(*w > 0.0 && *w <= 1.0) {
                        return Err(("experiment.widths", format!("collar widths must lie in (0, 1], got {w}")));
                    }
                }
                for t in horizons.iter().flatten() {
                    positive("experiment.horizons", *t)?;
                }
            }
        }
        if self.output.state_stride == 0 {
            return Err(("output.state_stride", "must be at least 1".into()));
        }
        self.assertions
            .check_applicable(&self.experiment)
            .map_err(|e| ("assertions", e.to_string()))
    }

    /// Canonical JSON of the resolved configuration (defaults filled in).
    pub fn resolved_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }
}
