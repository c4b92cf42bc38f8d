use serde::{Deserialize, Serialize};

use super::{run_matrix, BacktestConfig, MatrixResult, PredictionSource, Strategy};
use crate::error::Result;
use crate::factors::{rolling_synthesize, FactorHierarchy, Synthesis};
use crate::panel::FactorPanel;
use crate::preprocess::{preprocess_panel, PreprocessConfig, PreprocessReport};
use crate::screening::{screen_factors, ScreenConfig, ScreenResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    /// Entropy-weighted group scores.
    #[default]
    Synthesized,
    /// The preprocessed factors themselves.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScreenLevel {
    /// Screen the member factors before synthesis.
    #[default]
    Member,
    /// Screen the synthesized group scores.
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    pub members: Vec<String>,
}

/// Explicit groups, or the factor list cut into `n_groups` consecutive
/// groups when `groups` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchySpec {
    pub n_groups: usize,
    pub groups: Vec<GroupSpec>,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        Self {
            n_groups: 8,
            groups: Vec::new(),
        }
    }
}

impl HierarchySpec {
    pub fn resolve(&self, factor_names: &[String]) -> Result<FactorHierarchy> {
        if self.groups.is_empty() {
            FactorHierarchy::chunked(factor_names, self.n_groups.min(factor_names.len()))
        } else {
            FactorHierarchy::new(
                self.groups
                    .iter()
                    .map(|g| (g.name.clone(), g.members.clone()))
                    .collect(),
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub hierarchy: HierarchySpec,
    pub features: FeatureSource,
    /// Whether LASSO screening runs at all.
    pub screen: bool,
    pub screen_level: ScreenLevel,
    pub screening: ScreenConfig,
    pub backtest: BacktestConfig,
    pub source: PredictionSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            hierarchy: HierarchySpec::default(),
            features: FeatureSource::default(),
            screen: true,
            screen_level: ScreenLevel::default(),
            screening: ScreenConfig::default(),
            backtest: BacktestConfig::default(),
            source: PredictionSource::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub preprocess: PreprocessReport,
    pub screen: Option<ScreenResult>,
    /// Screening kept nothing, so every factor was used.
    pub screen_fallback: bool,
    pub hierarchy: Option<FactorHierarchy>,
    pub synthesis: Option<Synthesis>,
    pub features: FactorPanel,
    pub matrix: MatrixResult,
}

/// Preprocess, screen, synthesize and backtest. Screening fits on the whole
/// sample once, before the walk-forward loop.
pub fn run_pipeline(panel: &FactorPanel, cfg: &PipelineConfig, strategies: &[Strategy]) -> Result<PipelineResult> {
    cfg.backtest.validate()?;
    let (clean, preprocess) = preprocess_panel(panel, &cfg.preprocess)?;
    let mut screen = None;
    let mut screen_fallback = false;
    let mut keep_or_all = |result: ScreenResult, all: &[String]| -> Vec<String> {
        let kept = if result.kept.is_empty() {
            screen_fallback = true;
            all.to_vec()
        } else {
            result.kept.clone()
        };
        screen = Some(result);
        kept
    };

    let (features, hierarchy, synthesis) = match cfg.features {
        FeatureSource::Raw => {
            let features = if cfg.screen {
                let kept = keep_or_all(screen_factors(&clean, &cfg.screening)?, clean.factor_names());
                clean.select_factors(&kept)?
            } else {
                clean
            };
            (features, None, None)
        }
        FeatureSource::Synthesized => {
            let mut hierarchy = cfg.hierarchy.resolve(clean.factor_names())?;
            if cfg.screen && cfg.screen_level == ScreenLevel::Member {
                let members: Vec<String> = hierarchy.members().map(|(_, m)| m.to_string()).collect();
                let scoped = clean.select_factors(&members)?;
                let kept = keep_or_all(screen_factors(&scoped, &cfg.screening)?, &members);
                hierarchy = hierarchy.restrict(&kept)?;
            }
            let synthesis = rolling_synthesize(&clean, &hierarchy)?;
            let mut features = synthesis.scores.clone();
            if cfg.screen && cfg.screen_level == ScreenLevel::Group {
                let kept = keep_or_all(screen_factors(&features, &cfg.screening)?, features.factor_names());
                features = features.select_factors(&kept)?;
            }
            (features, Some(hierarchy), Some(synthesis))
        }
    };
    let matrix = run_matrix(panel, &features, &cfg.source, strategies, &cfg.backtest)?;
    Ok(PipelineResult {
        preprocess,
        screen,
        screen_fallback,
        hierarchy,
        synthesis,
        features,
        matrix,
    })
}
