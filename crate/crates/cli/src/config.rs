use std::path::{Path, PathBuf};

use ensemble_alpha::backtest::{
    BacktestConfig, CostMode, FeatureSource, HierarchySpec, PipelineConfig, PredictionSource, ScreenLevel,
};
use ensemble_alpha::ensemble::{EnsembleConfig, SchemeId};
use ensemble_alpha::panel::{PanelSchema, SyntheticSpec};
use ensemble_alpha::predictors::{ModelKind, TrainConfig};
use ensemble_alpha::preprocess::PreprocessConfig;
use ensemble_alpha::screening::{CvRule, ScreenConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub synth: SyntheticSpec,
    pub preprocess: PreprocessConfig,
    pub hierarchy: HierarchySpec,
    pub screening: ScreeningSection,
    pub predictors: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub backtest: BacktestSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            data: DataSection::default(),
            synth: SyntheticSpec::default(),
            preprocess: PreprocessConfig::default(),
            hierarchy: HierarchySpec::default(),
            screening: ScreeningSection::default(),
            predictors: TrainConfig::default(),
            ensemble: EnsembleConfig::default(),
            backtest: BacktestSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// A panel file, or a synthetic panel from `[synth]` when `panel` is unset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub panel: Option<PathBuf>,
    pub schema: PanelSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningSection {
    pub enabled: bool,
    pub level: ScreenLevel,
    pub k_folds: usize,
    pub cv_rule: CvRule,
    pub grid_points: usize,
    pub min_ratio: f64,
}

impl Default for ScreeningSection {
    fn default() -> Self {
        let s = ScreenConfig::default();
        Self {
            enabled: true,
            level: ScreenLevel::default(),
            k_folds: s.k_folds,
            cv_rule: s.cv_rule,
            grid_points: s.grid_points,
            min_ratio: s.min_ratio,
        }
    }
}

impl ScreeningSection {
    pub fn screen_config(&self) -> ScreenConfig {
        ScreenConfig {
            k_folds: self.k_folds,
            cv_rule: self.cv_rule,
            grid_points: self.grid_points,
            min_ratio: self.min_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    #[default]
    Trained,
    Planted,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub train_window: usize,
    pub test_window: usize,
    pub cost_rate: f64,
    pub cost_mode: CostMode,
    pub top_n: usize,
    pub periods_per_year: usize,
    pub features: FeatureSource,
    /// Model and scheme names; every one of them when empty.
    pub schemes: Vec<String>,
    pub source: SourceKind,
    /// Rank correlations of the planted models.
    pub planted_rank_corr: Vec<f64>,
}

impl Default for BacktestSection {
    fn default() -> Self {
        let b = BacktestConfig::default();
        Self {
            train_window: b.train_window,
            test_window: b.test_window,
            cost_rate: b.cost_rate,
            cost_mode: b.cost_mode,
            top_n: b.top_n,
            periods_per_year: b.periods_per_year,
            features: FeatureSource::default(),
            schemes: Vec::new(),
            source: SourceKind::default(),
            planted_rank_corr: vec![0.12, 0.09, 0.06],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also render the equity curve as SVG.
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("ensemble-alpha-out"),
            svg: true,
        }
    }
}

/// Values given on the command line; each one beats the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub schemes: Option<Vec<String>>,
    pub top_n: Option<usize>,
    pub cost_rate: Option<f64>,
}

impl RunConfig {
    /// Parses a TOML file. Relative data paths resolve against the file's
    /// directory and must exist.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.data.panel.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(CliError::Config(format!("panel file {} not found", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(s) = &o.schemes {
            self.backtest.schemes = s.clone();
        }
        if let Some(n) = o.top_n {
            self.backtest.top_n = n;
        }
        if let Some(c) = o.cost_rate {
            self.backtest.cost_rate = c;
        }
    }

    pub fn backtest_config(&self) -> BacktestConfig {
        let b = &self.backtest;
        BacktestConfig {
            train_window: b.train_window,
            test_window: b.test_window,
            cost_rate: b.cost_rate,
            cost_mode: b.cost_mode,
            top_n: b.top_n,
            seed: self.seed,
            periods_per_year: b.periods_per_year,
            ensemble: self.ensemble.clone(),
        }
    }

    pub fn source(&self) -> PredictionSource {
        match self.backtest.source {
            SourceKind::Trained => PredictionSource::Trained(self.predictors.clone()),
            SourceKind::Planted => PredictionSource::Planted {
                rank_corr: self.backtest.planted_rank_corr.clone(),
            },
            SourceKind::Oracle => PredictionSource::Oracle,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            preprocess: self.preprocess.clone(),
            hierarchy: self.hierarchy.clone(),
            features: self.backtest.features,
            screen: self.screening.enabled,
            screen_level: self.screening.level,
            screening: self.screening.screen_config(),
            backtest: self.backtest_config(),
            source: self.source(),
        }
    }

    /// Requested strategy names, in request order; all of them when none are
    /// listed.
    pub fn strategy_names(&self) -> Vec<String> {
        if self.backtest.schemes.is_empty() {
            let models: Vec<String> = match self.backtest.source {
                SourceKind::Trained => ModelKind::ALL.iter().map(|k| k.name().to_string()).collect(),
                _ => self.source().model_names(),
            };
            models
                .into_iter()
                .chain(SchemeId::ALL.iter().map(|s| s.name().to_string()))
                .collect()
        } else {
            self.backtest.schemes.clone()
        }
    }
}
