//! Layered run configuration: compiled-in defaults, overridden by an
//! optional TOML file, overridden by command-line flags.
//!
//! The file mirrors the domain types section-by-section, so a config is a
//! readable record of an entire experiment.

use std::path::Path;

use elastid_core::elastic::{FEConfig, ParameterBox, ParameterPoint};
use elastid_core::estimator::{EstimatorConfig, ObjectiveConfig};
use elastid_core::geometry::DomainSpec;
use elastid_core::network::{TrainingConfig, DEFAULT_LAYOUT};
use elastid_core::observe::ObservationConfig;

use crate::{CliError, Result};

/// Parameter sweep for dataset generation.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Grid resolution along E for the training set.
    pub n_young: usize,
    /// Grid resolution along ν for the training set.
    pub n_poisson: usize,
    /// Randomly placed validation pairs.
    pub n_validation: usize,
    /// Seed for the validation sampler.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { n_young: 40, n_poisson: 25, n_validation: 200, seed: 42 }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_young < 2 || self.n_poisson < 2 {
            return Err(CliError::Usage(
                "sweep needs at least 2 grid points per parameter axis".into(),
            ));
        }
        Ok(())
    }
}

/// Network architecture plus the optimizer schedule.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    /// Layer sizes, input to output.
    pub layout: Vec<usize>,
    #[serde(flatten)]
    pub schedule: TrainingConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection { layout: DEFAULT_LAYOUT.to_vec(), schedule: TrainingConfig::default() }
    }
}

/// Regularization of the estimation objective.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub alpha: f64,
    /// Characteristic E for the regularizer; box midpoint when absent.
    pub e0: Option<f64>,
    /// Characteristic ν for the regularizer; box midpoint when absent.
    pub nu0: Option<f64>,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        ObjectiveSection { alpha: 0.0, e0: None, nu0: None }
    }
}

/// Descent-loop knobs; the admissible box lives in its own `[box]` section.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub grad_reduction_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub initial_step: f64,
    pub curvature_eps: f64,
    pub clamp_to_box: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let d = EstimatorConfig::default();
        EstimatorSection {
            grad_reduction_tol: d.grad_reduction_tol,
            max_iter: d.max_iter,
            armijo_c: d.armijo_c,
            armijo_shrink: d.armijo_shrink,
            initial_step: d.initial_step,
            curvature_eps: d.curvature_eps,
            clamp_to_box: d.clamp_to_box,
        }
    }
}

/// Full run configuration; every section falls back to its defaults.
#[derive(Clone, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub domain: DomainSpec,
    pub fe: FEConfig,
    /// Explicit observation stations and times; derived from `domain` and
    /// `fe` when absent.
    pub observation: Option<ObservationConfig>,
    #[serde(rename = "box")]
    pub bounds: ParameterBox,
    pub sweep: SweepConfig,
    pub training: TrainingSection,
    pub objective: ObjectiveSection,
    pub estimator: EstimatorSection,
}

impl AppConfig {
    /// Defaults, then the file at `path` when given.
    pub fn load(path: Option<&Path>) -> Result<AppConfig> {
        let Some(path) = path else {
            return Ok(AppConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: AppConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate().map_err(CliError::usage_from)?;
        self.fe.validate().map_err(CliError::usage_from)?;
        self.bounds.validate().map_err(CliError::usage_from)?;
        self.training.schedule.validate().map_err(CliError::usage_from)?;
        self.sweep.validate()?;
        self.estimator_config().validate().map_err(CliError::usage_from)?;
        if self.training.layout.first() != Some(&2) {
            return Err(CliError::Usage("network layout must start with 2 inputs".into()));
        }
        Ok(())
    }

    /// Observation stations/times: configured or derived.
    pub fn observation(&self) -> ObservationConfig {
        self.observation.clone().unwrap_or_else(|| ObservationConfig::for_domain(&self.domain, &self.fe))
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        let s = &self.estimator;
        EstimatorConfig {
            grad_reduction_tol: s.grad_reduction_tol,
            max_iter: s.max_iter,
            armijo_c: s.armijo_c,
            armijo_shrink: s.armijo_shrink,
            initial_step: s.initial_step,
            curvature_eps: s.curvature_eps,
            clamp_to_box: s.clamp_to_box,
            bounds: self.bounds,
        }
    }

    pub fn objective_config(&self, u_obs: Vec<f64>) -> Result<ObjectiveConfig> {
        let mid = self.bounds.midpoint();
        let cfg = ObjectiveConfig {
            alpha: self.objective.alpha,
            e0: self.objective.e0.unwrap_or(mid.young),
            nu0: self.objective.nu0.unwrap_or(mid.poisson),
            u_obs,
        };
        cfg.validate().map_err(CliError::usage_from)?;
        Ok(cfg)
    }
}

/// Parse an `E,NU` flag value into a parameter point.
pub fn parse_parameter_pair(text: &str) -> Result<ParameterPoint> {
    let bad = || CliError::Usage(format!("expected E,NU (two comma-separated numbers), got `{text}`"));
    let (e, nu) = text.split_once(',').ok_or_else(bad)?;
    let young: f64 = e.trim().parse().map_err(|_| bad())?;
    let poisson: f64 = nu.trim().parse().map_err(|_| bad())?;
    if !young.is_finite() || !poisson.is_finite() {
        return Err(bad());
    }
    Ok(ParameterPoint { young, poisson })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = AppConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.sweep.n_young * cfg.sweep.n_poisson, 1000);
        assert_eq!(cfg.training.layout, vec![2, 200, 100, 50]);
    }

    #[test]
    fn partial_toml_overrides_single_fields() {
        let cfg: AppConfig = toml::from_str(
            "[fe]\nn_steps = 10\n\n[sweep]\nn_young = 4\n\n[training]\ntotal_epochs = 20\n",
        )
        .unwrap();
        assert_eq!(cfg.fe.n_steps, 10);
        assert_eq!(cfg.fe.gamma_ratio, FEConfig::default().gamma_ratio);
        assert_eq!(cfg.sweep.n_young, 4);
        assert_eq!(cfg.sweep.n_poisson, 25);
        assert_eq!(cfg.training.schedule.total_epochs, 20);
        assert_eq!(cfg.training.schedule.block_epochs, 50);
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(toml::from_str::<AppConfig>("[nope]\nx = 1\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = AppConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: AppConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn parameter_pair_parsing() {
        let p = parse_parameter_pair("7.45e10, 0.3481").unwrap();
        assert_eq!(p.young, 7.45e10);
        assert_eq!(p.poisson, 0.3481);
        assert!(parse_parameter_pair("7.45e10").is_err());
        assert!(parse_parameter_pair("a,b").is_err());
        assert!(parse_parameter_pair("inf,0.3").is_err());
    }
}
