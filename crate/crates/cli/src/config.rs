//! Reconstruction settings resolved from three layers: built-in defaults,
//! an optional TOML file, and command-line flags (highest precedence).
//!
//! The file is flat `key = value` TOML with the same keys as [`ConfigLayer`]:
//!
//! ```toml
//! model = "ifv"            # ad | ifv | sv
//! regularizer = "tv"       # none | wavelet | tv
//! step_size = 3e-6
//! n_iter = 2000
//! n_reg = 10
//! threshold = 5e-4         # wavelet only
//! levels = 3               # wavelet only
//! threshold_mode = "hard"  # wavelet only: hard | soft
//! tv_weight = 1e-4         # tv only
//! tv_inner_iterations = 10 # tv only
//! stop_tol = 0.0
//! floor = 1e-8
//! overshoot_guard = true
//! ```
//!
//! Parameters of a regularizer other than the selected one are ignored.

use std::path::Path;

use octa_core::recon::{default_config, ReconConfig};
use octa_core::regularizers::{RegularizerKind, RegularizerSpec, ThresholdMode};
use octa_core::AngioModel;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_reg: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_inner_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overshoot_guard: Option<bool>,
}

impl ConfigLayer {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    fn apply(&self, cfg: &mut ReconConfig) -> Result<(), CliError> {
        if let Some(v) = self.step_size {
            cfg.step_size = v;
        }
        if let Some(v) = self.n_iter {
            cfg.n_iter = v;
        }
        if let Some(v) = self.n_reg {
            cfg.n_reg = v;
        }
        if let Some(v) = self.stop_tol {
            cfg.stop_tol = v;
        }
        if let Some(v) = self.floor {
            cfg.floor = v;
        }
        if let Some(v) = self.overshoot_guard {
            cfg.overshoot_guard = v;
        }
        match &mut cfg.regularizer {
            RegularizerSpec::None => {}
            RegularizerSpec::WaveletShrinkage {
                threshold,
                levels,
                mode,
            } => {
                if let Some(v) = self.threshold {
                    *threshold = v;
                }
                if let Some(v) = self.levels {
                    *levels = v;
                }
                if let Some(v) = &self.threshold_mode {
                    *mode = v.parse::<ThresholdMode>()?;
                }
            }
            RegularizerSpec::TotalVariation {
                weight,
                inner_iterations,
            } => {
                if let Some(v) = self.tv_weight {
                    *weight = v;
                }
                if let Some(v) = self.tv_inner_iterations {
                    *inner_iterations = v;
                }
            }
        }
        Ok(())
    }
}

/// Fully resolved settings, as echoed into run manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub model: String,
    pub regularizer: String,
    pub step_size: f64,
    pub n_iter: usize,
    pub n_reg: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_inner_iterations: Option<usize>,
    pub stop_tol: f64,
    pub floor: f64,
    pub overshoot_guard: bool,
}

impl From<&ReconConfig> for ResolvedConfig {
    fn from(c: &ReconConfig) -> Self {
        let mut r = ResolvedConfig {
            model: c.model.to_string(),
            regularizer: c.regularizer.kind().to_string(),
            step_size: c.step_size,
            n_iter: c.n_iter,
            n_reg: c.n_reg,
            threshold: None,
            levels: None,
            threshold_mode: None,
            tv_weight: None,
            tv_inner_iterations: None,
            stop_tol: c.stop_tol,
            floor: c.floor,
            overshoot_guard: c.overshoot_guard,
        };
        match c.regularizer {
            RegularizerSpec::None => {}
            RegularizerSpec::WaveletShrinkage {
                threshold,
                levels,
                mode,
            } => {
                r.threshold = Some(threshold);
                r.levels = Some(levels);
                r.threshold_mode = Some(mode.to_string());
            }
            RegularizerSpec::TotalVariation {
                weight,
                inner_iterations,
            } => {
                r.tv_weight = Some(weight);
                r.tv_inner_iterations = Some(inner_iterations);
            }
        }
        r
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigLayers {
    pub defaults: ResolvedConfig,
    pub file: Option<ConfigLayer>,
    pub flags: ConfigLayer,
    pub resolved: ResolvedConfig,
}

/// Model and regularizer pick the defaults; the remaining keys then
/// override them, file first and flags last.
pub fn resolve(
    file: Option<ConfigLayer>,
    flags: ConfigLayer,
) -> Result<(ReconConfig, ConfigLayers), CliError> {
    let pick = |f: &ConfigLayer| (f.model.clone(), f.regularizer.clone());
    let (file_model, file_reg) = file.as_ref().map(pick).unwrap_or_default();
    let model: AngioModel = match flags.model.clone().or(file_model) {
        Some(m) => m.parse()?,
        None => AngioModel::Ifv,
    };
    let kind: RegularizerKind = match flags.regularizer.clone().or(file_reg) {
        Some(r) => r.parse()?,
        None => RegularizerKind::TotalVariation,
    };
    let mut cfg = default_config(model, kind);
    let defaults = ResolvedConfig::from(&cfg);
    if let Some(f) = &file {
        f.apply(&mut cfg)?;
    }
    flags.apply(&mut cfg)?;
    cfg.validate()?;
    let layers = ConfigLayers {
        defaults,
        file,
        flags,
        resolved: ResolvedConfig::from(&cfg),
    };
    Ok((cfg, layers))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(text: &str) -> ConfigLayer {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn bare_model_and_regularizer_give_builtin_defaults() {
        let flags = ConfigLayer {
            model: Some("ifv".into()),
            regularizer: Some("tv".into()),
            ..Default::default()
        };
        let (cfg, _) = resolve(None, flags).unwrap();
        assert_eq!(
            cfg,
            default_config(AngioModel::Ifv, RegularizerKind::TotalVariation)
        );
        assert_eq!(cfg.step_size, 3e-6);
        assert_eq!(cfg.n_iter, 2000);
    }

    #[test]
    fn flags_override_file_overrides_defaults() {
        let file =
            layer("model = \"ad\"\nregularizer = \"wavelet\"\nn_iter = 50\nthreshold = 1e-3\n");
        let flags = ConfigLayer {
            n_iter: Some(7),
            ..Default::default()
        };
        let (cfg, layers) = resolve(Some(file), flags).unwrap();
        assert_eq!(cfg.model, AngioModel::Ad);
        assert_eq!(cfg.n_iter, 7);
        assert_eq!(cfg.step_size, 5e-6);
        assert!(matches!(
            cfg.regularizer,
            RegularizerSpec::WaveletShrinkage { threshold, levels: 3, .. } if threshold == 1e-3
        ));
        assert_eq!(layers.defaults.n_iter, 1000);
        assert_eq!(layers.resolved.n_iter, 7);
    }

    #[test]
    fn inactive_regularizer_keys_are_ignored() {
        let file = layer("regularizer = \"tv\"\nthreshold = 9.0\n");
        let (cfg, _) = resolve(Some(file), ConfigLayer::default()).unwrap();
        assert_eq!(
            cfg,
            default_config(AngioModel::Ifv, RegularizerKind::TotalVariation)
        );
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<ConfigLayer>("lambda = 1.0").is_err());
        let flags = ConfigLayer {
            model: Some("xyz".into()),
            ..Default::default()
        };
        assert!(matches!(resolve(None, flags), Err(CliError::Usage(_))));
        let flags = ConfigLayer {
            n_reg: Some(0),
            ..Default::default()
        };
        assert!(matches!(resolve(None, flags), Err(CliError::Usage(_))));
    }
}
