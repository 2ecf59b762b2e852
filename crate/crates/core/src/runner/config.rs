use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{SchemeRegistry, SolverOptions};
use crate::channel::LargeScaleParams;
use crate::system::SystemParams;
use crate::topology::{integer_sqrt, DistributionMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("devices ({devices}) must be divisible by groups ({groups})")]
    GroupDivisibility { devices: usize, groups: usize },
    #[error("{field} = {value} is not a perfect square")]
    NotPerfectSquare { field: &'static str, value: usize },
    #[error("tau_p = {tau_p} is smaller than the {per_group} devices per group")]
    PilotShortage { tau_p: usize, per_group: usize },
    #[error("mode1 needs groups ({groups}) <= cells ({cells})")]
    TooManyGroups { groups: usize, cells: usize },
    #[error("cell-free antennas aps*ap_antennas = {cell_free} must equal cells*bs_antennas = {cellular}")]
    AntennaBudget { cell_free: usize, cellular: usize },
    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),
    #[error("omega has {got} entries for {groups} groups")]
    OmegaLength { got: usize, groups: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("{got} training tasks configured for {groups} groups")]
    TaskCount { got: usize, groups: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub architectures: Vec<String>,
    pub aps: usize,
    pub ap_antennas: usize,
    pub cells: usize,
    pub bs_antennas: usize,
    pub devices: usize,
    pub groups: usize,
    pub tau_p: usize,
    pub tau_u: usize,
    pub mode: DistributionMode,
    pub area_m: f64,
    pub max_power_dbm: f64,
    pub pilot_power_dbm: f64,
    pub noise_dbm: f64,
    pub asd_deg: f64,
    pub omega: Option<Vec<f64>>,
}

impl Default for SystemSection {
    fn default() -> Self {
        let d = SystemParams::desk();
        Self {
            architectures: ["level1", "level2", "level3", "errorfree"].map(String::from).to_vec(),
            aps: d.aps,
            ap_antennas: d.ap_antennas,
            cells: d.cells,
            bs_antennas: d.aps * d.ap_antennas / d.cells,
            devices: d.devices,
            groups: d.groups,
            tau_p: d.tau_p,
            tau_u: 50,
            mode: d.mode,
            area_m: d.area_m,
            max_power_dbm: d.max_power_dbm,
            pilot_power_dbm: d.pilot_power_dbm,
            noise_dbm: d.noise_dbm,
            asd_deg: d.asd_deg,
            omega: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub power_dbm: Vec<f64>,
    pub seeds: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            power_dbm: (0..=10).map(|i| -10.0 + 5.0 * i as f64).collect(),
            seeds: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Fnn,
    Ridge,
}

/// Where one group's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default = "default_features")]
        features: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Raw labels to keep, mapped to 0, 1, … in the order given.
        #[serde(default)]
        label_filter: Option<Vec<u8>>,
    },
}

fn default_features() -> usize {
    64
}

fn default_spread() -> f64 {
    0.25
}

impl Default for DataSource {
    fn default() -> Self {
        Self::Synthetic {
            features: default_features(),
            spread: default_spread(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub task: TaskKind,
    pub rounds: usize,
    pub seeds: usize,
    pub eta: f64,
    pub hidden: usize,
    pub classes: usize,
    pub samples_per_device: usize,
    pub test_samples: usize,
    /// Ridge regression dimension and regularization.
    pub ridge_dim: usize,
    pub ridge_lambda: f64,
    /// One entry per group; missing entries use synthetic data.
    pub tasks: Vec<DataSource>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            task: TaskKind::Fnn,
            rounds: 50,
            seeds: 10,
            eta: 0.005,
            hidden: 20,
            classes: 10,
            samples_per_device: 80,
            test_samples: 500,
            ridge_dim: 8,
            ridge_lambda: 0.1,
            tasks: Vec::new(),
        }
    }
}

/// A complete scenario. Every field has a default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub system: SystemSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
    pub training: TrainingSection,
    pub large_scale: LargeScaleParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            epsilon: d.epsilon,
            max_iters: d.max_iters,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn system_params(&self) -> SystemParams {
        let s = &self.system;
        SystemParams {
            area_m: s.area_m,
            aps: s.aps,
            ap_antennas: s.ap_antennas,
            cells: s.cells,
            bs_antennas: s.bs_antennas,
            devices: s.devices,
            groups: s.groups,
            tau_p: s.tau_p,
            mode: s.mode,
            max_power_dbm: s.max_power_dbm,
            pilot_power_dbm: s.pilot_power_dbm,
            noise_dbm: s.noise_dbm,
            asd_deg: s.asd_deg,
            large_scale: self.large_scale,
        }
    }

    pub fn solver_options(&self, tco: bool) -> SolverOptions {
        SolverOptions {
            epsilon: self.solver.epsilon,
            max_iters: self.solver.max_iters,
            tco,
        }
    }

    pub fn omega(&self) -> Vec<f64> {
        self.system
            .omega
            .clone()
            .unwrap_or_else(|| vec![1.0; self.system.groups])
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let s = &self.system;
        for (name, v) in [
            ("aps", s.aps),
            ("ap_antennas", s.ap_antennas),
            ("cells", s.cells),
            ("bs_antennas", s.bs_antennas),
            ("devices", s.devices),
            ("groups", s.groups),
            ("tau_p", s.tau_p),
            ("tau_u", s.tau_u),
        ] {
            if v == 0 {
                return Err(ValidationError::NonPositive(name));
            }
        }
        for (name, v) in [("area_m", s.area_m), ("solver.epsilon", self.solver.epsilon), ("training.eta", self.training.eta)] {
            if v.is_nan() || v <= 0.0 {
                return Err(ValidationError::NonPositive(name));
            }
        }
        if s.devices % s.groups != 0 {
            return Err(ValidationError::GroupDivisibility {
                devices: s.devices,
                groups: s.groups,
            });
        }
        for (field, value) in [("aps", s.aps), ("cells", s.cells)] {
            if integer_sqrt(value).is_none() {
                return Err(ValidationError::NotPerfectSquare { field, value });
            }
        }
        let per_group = s.devices / s.groups;
        if s.tau_p < per_group {
            return Err(ValidationError::PilotShortage { tau_p: s.tau_p, per_group });
        }
        let registry = SchemeRegistry::builtin();
        for a in &s.architectures {
            registry
                .get(a)
                .map_err(|_| ValidationError::UnknownArchitecture(a.clone()))?;
        }
        let cellular = s.architectures.iter().any(|a| a == "cellular");
        let cell_free = s.architectures.iter().any(|a| a.starts_with("level"));
        if (cellular || s.mode == DistributionMode::Mode1) && s.groups > s.cells {
            return Err(ValidationError::TooManyGroups {
                groups: s.groups,
                cells: s.cells,
            });
        }
        if cellular && cell_free && s.aps * s.ap_antennas != s.cells * s.bs_antennas {
            return Err(ValidationError::AntennaBudget {
                cell_free: s.aps * s.ap_antennas,
                cellular: s.cells * s.bs_antennas,
            });
        }
        if let Some(w) = &s.omega {
            if w.len() != s.groups {
                return Err(ValidationError::OmegaLength {
                    got: w.len(),
                    groups: s.groups,
                });
            }
            if w.iter().any(|x| x.is_nan() || *x <= 0.0) {
                return Err(ValidationError::NonPositive("omega"));
            }
        }
        if self.training.tasks.len() > s.groups {
            return Err(ValidationError::TaskCount {
                got: self.training.tasks.len(),
                groups: s.groups,
            });
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let cfg = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(cfg.system.max_power_dbm, 20.0);
        assert_eq!(cfg.system.noise_dbm, -96.0);
        assert_eq!(cfg.system.pilot_power_dbm, 20.0);
        assert_eq!(cfg.training.eta, 0.005);
        assert_eq!(cfg.solver.epsilon, 1e-10);
        assert_eq!(cfg.solver.max_iters, 500);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = ScenarioConfig::from_toml("[system]\naps = 4\nbogus = 1\n").unwrap_err();
        match err {
            ConfigError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn divisibility_is_checked() {
        let err = ScenarioConfig::from_toml("[system]\ndevices = 7\ngroups = 3\ntau_p = 3\n").unwrap_err();
        assert!(matches!(
            err,
            ConfigError::Validation(ValidationError::GroupDivisibility { devices: 7, groups: 3 })
        ));
    }

    #[test]
    fn structural_checks() {
        let bad = |t: &str| match ScenarioConfig::from_toml(t).unwrap_err() {
            ConfigError::Validation(v) => v,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(bad("[system]\naps = 5\n"), ValidationError::NotPerfectSquare { field: "aps", value: 5 });
        assert_eq!(bad("[system]\ntau_p = 2\n"), ValidationError::PilotShortage { tau_p: 2, per_group: 3 });
        assert_eq!(
            bad("[system]\nmode = \"mode1\"\ngroups = 6\ncells = 4\ntau_p = 3\n"),
            ValidationError::TooManyGroups { groups: 6, cells: 4 }
        );
        assert_eq!(
            bad("[system]\narchitectures = [\"level3\", \"cellular\"]\nbs_antennas = 8\n"),
            ValidationError::AntennaBudget { cell_free: 8, cellular: 32 }
        );
        assert_eq!(
            bad("[system]\narchitectures = [\"level9\"]\n"),
            ValidationError::UnknownArchitecture("level9".into())
        );
    }

    #[test]
    fn data_sources_parse() {
        let cfg = ScenarioConfig::from_toml(
            r#"
[[training.tasks]]
source = "idx"
train_images = "a"
train_labels = "b"
test_images = "c"
test_labels = "d"
label_filter = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]

[[training.tasks]]
source = "synthetic"
features = 16
"#,
        )
        .unwrap();
        assert!(matches!(cfg.training.tasks[0], DataSource::Idx { .. }));
        assert_eq!(cfg.training.tasks[1], DataSource::Synthetic { features: 16, spread: 0.25 });
    }
}
