//! Run configuration: flat key-value TOML with sections, no environment
//! overrides except BOOSTSEQ_THREADS (worker count, read by the binary).

use crate::boosting::{BoostConfig, JointWeightRule, Menus, StopConfig, Strategy};
use crate::learners::{
    cnn_menu, Architecture, CnnArch, CnnSpec, Direction, RnnCellKind, RnnSpec, TrainConfig,
};
use crate::synth::WorkflowConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Existing dataset directory.
    pub path: Option<PathBuf>,
    /// Generation settings for `synth`; the built-in default when absent.
    pub generate: Option<WorkflowConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostSection {
    pub strategy: String,
    /// Sequence-learner direction: "unidirectional" or "bidirectional".
    pub direction: String,
    /// Frame-learner catalog entries by architecture id (a, b, c).
    pub cnn_menu: Vec<String>,
    /// Sequence-learner catalog entries as "<cell>:<width>".
    pub rnn_menu: Vec<String>,
    /// Temporal subsampling factor.
    pub m: usize,
    pub alpha_max: f64,
    pub line_tol: f64,
    pub stop_rel_tol: f64,
    pub stop_patience: usize,
    pub max_iterations: usize,
    pub joint_rule: String,
    /// Ground truth used for training: "truth" or "union" (annotator union).
    pub train_labels: String,
}

impl Default for BoostSection {
    fn default() -> Self {
        BoostSection {
            strategy: "joint".into(),
            direction: "bidirectional".into(),
            cnn_menu: vec!["a".into(), "b".into(), "c".into()],
            rnn_menu: vec![
                "lstm:8".into(),
                "lstm:16".into(),
                "lstm:32".into(),
                "gru:8".into(),
                "gru:16".into(),
                "gru:32".into(),
            ],
            m: 4,
            alpha_max: 10.0,
            line_tol: 1e-4,
            stop_rel_tol: 1e-4,
            stop_patience: 1,
            max_iterations: 16,
            joint_rule: JointWeightRule::default().id().into(),
            train_labels: "truth".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub lr: f64,
    pub lr_decay: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// 0 disables the per-epoch item cap.
    pub max_items_per_epoch: usize,
}

impl TrainParams {
    fn cnn() -> Self {
        TrainParams::from(&TrainConfig::cnn_default())
    }

    fn rnn() -> Self {
        TrainParams::from(&TrainConfig::rnn_default())
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            lr_decay: self.lr_decay,
            rho: self.rho,
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            loss: crate::learners::LossKind::Nll,
            max_items_per_epoch: if self.max_items_per_epoch == 0 {
                None
            } else {
                Some(self.max_items_per_epoch)
            },
        }
    }
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams::cnn()
    }
}

impl From<&TrainConfig> for TrainParams {
    fn from(c: &TrainConfig) -> Self {
        TrainParams {
            lr: c.lr,
            lr_decay: c.lr_decay,
            rho: c.rho,
            epsilon: c.epsilon,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            patience: c.patience,
            max_items_per_epoch: c.max_items_per_epoch.unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub cnn: TrainParams,
    pub rnn: TrainParams,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            cnn: TrainParams::cnn(),
            rnn: TrainParams::rnn(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub radius_candidates: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            radius_candidates: vec![1, 2, 4, 8, 16, 32, 64],
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    /// All randomness derives from this seed; no wall-clock entropy.
    pub master: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub boost: BoostSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
    pub seeds: SeedsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if Strategy::parse(&self.boost.strategy).is_none() {
            return Err(ConfigError::Invalid(format!(
                "unknown strategy {}",
                self.boost.strategy
            )));
        }
        if self.direction().is_none() {
            return Err(ConfigError::Invalid(format!(
                "unknown direction {}",
                self.boost.direction
            )));
        }
        if JointWeightRule::parse(&self.boost.joint_rule).is_none() {
            return Err(ConfigError::Invalid(format!(
                "unknown joint_rule {}",
                self.boost.joint_rule
            )));
        }
        if !matches!(self.boost.train_labels.as_str(), "truth" | "union") {
            return Err(ConfigError::Invalid(format!(
                "train_labels must be truth or union, got {}",
                self.boost.train_labels
            )));
        }
        if self.boost.m == 0 {
            return Err(ConfigError::Invalid("m must be >= 1".into()));
        }
        if self.eval.radius_candidates.is_empty() {
            return Err(ConfigError::Invalid("radius_candidates is empty".into()));
        }
        if let Some(gen) = &self.dataset.generate {
            gen.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        for id in &self.boost.cnn_menu {
            if CnnArch::from_id(id).is_none() {
                return Err(ConfigError::Invalid(format!("unknown cnn menu entry {id}")));
            }
        }
        for entry in &self.boost.rnn_menu {
            parse_rnn_entry(entry).ok_or_else(|| {
                ConfigError::Invalid(format!("unknown rnn menu entry {entry}"))
            })?;
        }
        Ok(())
    }

    /// Referenced paths must exist by the time a run consumes them.
    pub fn validate_dataset_path(&self, path: &Path) -> Result<(), ConfigError> {
        if !path.exists() {
            return Err(ConfigError::Invalid(format!(
                "dataset path {} does not exist",
                path.display()
            )));
        }
        Ok(())
    }

    pub fn strategy(&self) -> Strategy {
        Strategy::parse(&self.boost.strategy).expect("validated")
    }

    pub fn direction(&self) -> Option<Direction> {
        match self.boost.direction.as_str() {
            "unidirectional" => Some(Direction::Unidirectional),
            "bidirectional" => Some(Direction::Bidirectional),
            _ => None,
        }
    }

    pub fn joint_rule(&self) -> JointWeightRule {
        JointWeightRule::parse(&self.boost.joint_rule).expect("validated")
    }

    /// Catalogs instantiated for the dataset's frame extents and tool count.
    pub fn menus(&self, height: usize, width: usize, channels: usize, tools: usize) -> Menus {
        let direction = self.direction().expect("validated");
        let frame = if self.boost.cnn_menu == ["a", "b", "c"] {
            cnn_menu(height, width, channels, tools)
        } else {
            self.boost
                .cnn_menu
                .iter()
                .map(|id| {
                    Architecture::Cnn(CnnSpec {
                        arch: CnnArch::from_id(id).expect("validated"),
                        height,
                        width,
                        channels,
                        outputs: tools,
                    })
                })
                .collect()
        };
        let sequence = self
            .boost
            .rnn_menu
            .iter()
            .map(|entry| {
                let (cell, width) = parse_rnn_entry(entry).expect("validated");
                Architecture::Rnn(RnnSpec {
                    cell,
                    layers: 2,
                    width,
                    direction,
                    io_width: tools,
                })
            })
            .collect();
        Menus { frame, sequence }
    }

    pub fn boost_config(&self) -> BoostConfig {
        let mut cnn_train = self.train.cnn.to_train_config();
        cnn_train.loss = crate::learners::LossKind::Nll;
        let rnn_train = self.train.rnn.to_train_config();
        BoostConfig {
            strategy: self.strategy(),
            alpha_max: self.boost.alpha_max,
            line_tol: self.boost.line_tol,
            stop: StopConfig {
                rel_tol: self.boost.stop_rel_tol,
                patience: self.boost.stop_patience,
                max_iterations: self.boost.max_iterations,
            },
            cnn_train,
            rnn_train,
            joint_rule: self.joint_rule(),
            seed: self.seeds.master,
        }
    }

    /// The generation settings, falling back to the built-in defaults.
    pub fn workflow(&self) -> WorkflowConfig {
        self.dataset
            .generate
            .clone()
            .unwrap_or_else(WorkflowConfig::default_desk)
    }
}

fn parse_rnn_entry(entry: &str) -> Option<(RnnCellKind, usize)> {
    let (cell, width) = entry.split_once(':')?;
    let cell = match cell {
        "lstm" => RnnCellKind::Lstm,
        "gru" => RnnCellKind::Gru,
        _ => return None,
    };
    width.parse().ok().map(|w| (cell, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: RunConfig = toml::from_str("[seeds]\nmaster = 7\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.strategy(), Strategy::Joint);
        assert_eq!(cfg.boost.m, 4);
        assert_eq!(cfg.train.cnn.lr, 0.01);
        assert_eq!(cfg.train.rnn.lr, 0.001);
        assert_eq!(cfg.eval.radius_candidates, vec![1, 2, 4, 8, 16, 32, 64]);
    }

    #[test]
    fn missing_seed_is_rejected() {
        assert!(toml::from_str::<RunConfig>("[boost]\nm = 4\n").is_err());
    }

    #[test]
    fn bad_values_rejected() {
        let cfg: Result<RunConfig, _> =
            toml::from_str("[seeds]\nmaster = 1\n[boost]\nstrategy = \"magic\"\n");
        let cfg = cfg.unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig =
            toml::from_str("[seeds]\nmaster = 1\n[boost]\nrnn_menu = [\"elman:8\"]\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn menus_follow_dataset_shape() {
        let cfg: RunConfig = toml::from_str("[seeds]\nmaster = 3\n").unwrap();
        let menus = cfg.menus(24, 24, 3, 8);
        assert_eq!(menus.frame.len(), 3);
        assert_eq!(menus.sequence.len(), 6);
        assert!(menus.frame.iter().all(|a| a.outputs() == 8));
    }

    #[test]
    fn unknown_keys_rejected() {
        let r = toml::from_str::<RunConfig>("[seeds]\nmaster = 1\nbogus = 2\n");
        assert!(r.is_err());
    }
}
