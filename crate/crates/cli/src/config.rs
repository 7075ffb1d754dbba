use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tlscene::calibration::{CalibrationFile, Calibrator};
use tlscene::search::{InvalidFramePolicy, SearchConfig};
use tlscene::validation::ValidationConfig;

use crate::Failure;

/// Engine settings, loadable from TOML or JSON. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub lambda: f64,
    pub prune_epsilon: f64,
    pub max_automaton_layers: usize,
    pub max_propositions: usize,
    pub invalid_frame_policy: InvalidFramePolicy,
    pub dead_state_reset: bool,
    pub merge_adjacent: bool,
    /// Calibration applied to every proposition without an override.
    pub calibration_file: Option<PathBuf>,
    pub calibration_overrides: BTreeMap<String, PathBuf>,
    pub validation: ValidationConfig,
    /// Frame rate assumed for annotation files; inferred from timestamps when absent.
    pub fps: Option<f64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let s = SearchConfig::<f64>::default();
        EngineConfig {
            lambda: s.lambda,
            prune_epsilon: s.prune_epsilon,
            max_automaton_layers: s.max_automaton_layers,
            max_propositions: s.max_propositions,
            invalid_frame_policy: s.invalid_frame_policy,
            dead_state_reset: s.dead_state_reset,
            merge_adjacent: s.merge_adjacent,
            calibration_file: None,
            calibration_overrides: BTreeMap::new(),
            validation: s.validation,
            fps: None,
        }
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let mut cfg: EngineConfig = if is_toml {
            toml::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
        };
        // Calibration paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.calibration_file.as_mut() {
            *p = base.join(&*p);
        }
        for p in cfg.calibration_overrides.values_mut() {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    pub fn search_config(&self) -> Result<SearchConfig<f64>, Failure> {
        let mut calibration = Calibrator::default();
        if let Some(p) = &self.calibration_file {
            calibration.default = read_calibration(p)?;
        }
        for (prop, p) in &self.calibration_overrides {
            calibration.overrides.insert(prop.clone(), read_calibration(p)?);
        }
        let cfg = SearchConfig {
            lambda: self.lambda,
            prune_epsilon: self.prune_epsilon,
            max_automaton_layers: self.max_automaton_layers,
            max_propositions: self.max_propositions,
            invalid_frame_policy: self.invalid_frame_policy,
            dead_state_reset: self.dead_state_reset,
            merge_adjacent: self.merge_adjacent,
            calibration,
            validation: self.validation,
        };
        cfg.validate().map_err(|e| Failure::data(e.to_string()))?;
        if let Some(fps) = self.fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(Failure::data(format!("fps must be positive, got {fps}")));
            }
        }
        Ok(cfg)
    }
}

fn read_calibration(path: &Path) -> Result<tlscene::calibration::CalibrationParams<f64>, Failure> {
    let f = File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let file = CalibrationFile::read(std::io::BufReader::new(f))
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    file.params().map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}
