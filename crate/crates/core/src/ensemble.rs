//! Forecast combination. Five schemes weight models by trailing evaluation
//! metrics; two weight them by trailing rank IC, clipping negative scores
//! to zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MonthMetrics;
use crate::stats::{mean, sample_std};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeId {
    Rmse,
    Mape,
    Precision,
    Recall,
    F1,
    IcMean,
    IcRatio,
}

impl SchemeId {
    pub const ALL: [SchemeId; 7] = [
        SchemeId::Rmse,
        SchemeId::Mape,
        SchemeId::Precision,
        SchemeId::Recall,
        SchemeId::F1,
        SchemeId::IcMean,
        SchemeId::IcRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Rmse => "RMSE",
            SchemeId::Mape => "MAPE",
            SchemeId::Precision => "Precision",
            SchemeId::Recall => "Recall",
            SchemeId::F1 => "F1",
            SchemeId::IcMean => "IC_Mean",
            SchemeId::IcRatio => "IC_Ratio",
        }
    }

    pub fn is_ic(self) -> bool {
        matches!(self, SchemeId::IcMean | SchemeId::IcRatio)
    }

    fn metric(self, m: &MonthMetrics) -> f64 {
        match self {
            SchemeId::Rmse => m.rmse,
            SchemeId::Mape => m.mape,
            SchemeId::Precision => m.precision,
            SchemeId::Recall => m.recall,
            SchemeId::F1 => m.f1,
            SchemeId::IcMean | SchemeId::IcRatio => m.ic.unwrap_or(0.0),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown weighting scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightFlag {
    #[default]
    None,
    /// Not enough history yet; equal weights.
    WarmUp,
    /// No positive score; every weight is zero.
    AllZero,
    /// No positive score; equal weights by configuration.
    EqualFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub flag: WeightFlag,
}

impl WeightVector {
    pub fn equal(n: usize, flag: WeightFlag) -> Self {
        Self {
            w: vec![1.0 / n as f64; n],
            flag,
        }
    }

    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Trailing months averaged by the metric schemes.
    pub metric_window: usize,
    /// IC observations `L` used by the IC schemes.
    pub ic_window: usize,
    pub ratio_eps: f64,
    /// Equal weights instead of all-zero weights when no score is positive.
    pub zero_weight_fallback: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            metric_window: 20,
            ic_window: 20,
            ratio_eps: 1e-8,
            zero_weight_fallback: false,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.metric_window == 0 || self.ic_window < 2 {
            return Err(Error::InvalidInput(
                "metric window must be ≥ 1 and IC window ≥ 2".into(),
            ));
        }
        if !(self.ratio_eps > 0.0) {
            return Err(Error::InvalidInput("IC ratio epsilon must be positive".into()));
        }
        Ok(())
    }
}

const RECIPROCAL_EPS: f64 = 1e-12;

/// Weights from the trailing mean of an evaluation metric. `history[k]`
/// holds model `k`'s values in chronological order; only the last `window`
/// are used. RMSE and MAPE are inverted month by month before averaging.
pub fn metric_weights(history: &[Vec<f64>], scheme: SchemeId, window: usize) -> Result<WeightVector> {
    if scheme.is_ic() {
        return Err(Error::InvalidInput(format!("{scheme} is not a metric scheme")));
    }
    if history.is_empty() || history.iter().any(Vec::is_empty) || window == 0 {
        return Err(Error::InsufficientHistory {
            required: 1,
            available: 0,
        });
    }
    let scores = metric_scores(history, scheme, window);
    let total: f64 = scores.iter().map(|s| s.max(0.0)).sum();
    if !(total > 0.0) {
        return Ok(WeightVector::equal(scores.len(), WeightFlag::EqualFallback));
    }
    Ok(WeightVector {
        w: scores.iter().map(|s| s.max(0.0) / total).collect(),
        flag: WeightFlag::None,
    })
}

/// Trailing-window means behind [`metric_weights`], before normalization.
pub fn metric_scores(history: &[Vec<f64>], scheme: SchemeId, window: usize) -> Vec<f64> {
    let invert = matches!(scheme, SchemeId::Rmse | SchemeId::Mape);
    history
        .iter()
        .map(|h| {
            let tail = &h[h.len().saturating_sub(window)..];
            let vals: Vec<f64> = tail
                .iter()
                .map(|v| if invert { 1.0 / v.max(RECIPROCAL_EPS) } else { *v })
                .collect();
            mean(&vals)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IcMode {
    Mean,
    Ratio,
}

/// IC score of each model over its last `l` observations: the mean, or the
/// mean over `sample std + eps`.
pub fn ic_scores(ic_history: &[Vec<f64>], mode: IcMode, l: usize, eps: f64) -> Result<Vec<f64>> {
    ic_history
        .iter()
        .map(|h| {
            let tail = &h[h.len().saturating_sub(l)..];
            let need = if mode == IcMode::Ratio { 2 } else { 1 };
            if tail.len() < need {
                return Err(Error::InsufficientHistory {
                    required: need,
                    available: tail.len(),
                });
            }
            let mu = mean(tail);
            Ok(match mode {
                IcMode::Mean => mu,
                IcMode::Ratio => mu / (sample_std(tail) + eps),
            })
        })
        .collect()
}

/// `w_i = max(s_i, 0) / Σ max(s_k, 0)`. With no positive score every weight
/// is zero, or equal when `fallback` is set.
pub fn normalize_scores(scores: &[f64], fallback: bool) -> WeightVector {
    let clipped: Vec<f64> = scores.iter().map(|s| if *s > 0.0 { *s } else { 0.0 }).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        WeightVector {
            w: clipped.iter().map(|c| c / total).collect(),
            flag: WeightFlag::None,
        }
    } else if fallback {
        WeightVector::equal(scores.len(), WeightFlag::EqualFallback)
    } else {
        WeightVector {
            w: vec![0.0; scores.len()],
            flag: WeightFlag::AllZero,
        }
    }
}

/// `Σ_i w_i · r̂_i` per stock; `predictions[i]` is model `i`'s vector.
pub fn combine(predictions: &[Vec<f64>], w: &WeightVector) -> Result<Vec<f64>> {
    if predictions.len() != w.w.len() || predictions.is_empty() {
        return Err(Error::Alignment(format!(
            "{} prediction sets for {} weights",
            predictions.len(),
            w.w.len()
        )));
    }
    let n = predictions[0].len();
    if predictions.iter().any(|p| p.len() != n) {
        return Err(Error::Alignment("models predict different stock sets".into()));
    }
    Ok((0..n)
        .map(|a| predictions.iter().zip(&w.w).map(|(p, wi)| wi * p[a]).sum())
        .collect())
}

/// Equal weights, flagged as warm-up, while fewer than `required`
/// observations exist.
pub fn warmup_policy(available: usize, required: usize, n_models: usize) -> Option<WeightVector> {
    (available < required).then(|| WeightVector::equal(n_models, WeightFlag::WarmUp))
}

/// Unnormalized scores of `scheme` at a month, or `None` during warm-up.
pub fn scheme_scores(
    scheme: SchemeId,
    history: &[Vec<MonthMetrics>],
    cfg: &EnsembleConfig,
) -> Result<Option<Vec<f64>>> {
    let available = history.iter().map(Vec::len).min().unwrap_or(0);
    let required = if scheme.is_ic() { cfg.ic_window } else { 1 };
    if available < required {
        return Ok(None);
    }
    let values: Vec<Vec<f64>> = history
        .iter()
        .map(|h| h.iter().map(|m| scheme.metric(m)).collect())
        .collect();
    Ok(Some(match scheme {
        SchemeId::IcMean => ic_scores(&values, IcMode::Mean, cfg.ic_window, cfg.ratio_eps)?,
        SchemeId::IcRatio => ic_scores(&values, IcMode::Ratio, cfg.ic_window, cfg.ratio_eps)?,
        _ => metric_scores(&values, scheme, cfg.metric_window),
    }))
}

/// Weights of `scheme` at a month, from per-model evaluation histories of
/// strictly earlier months (`history[k]` is chronological for model `k`).
pub fn scheme_weights(scheme: SchemeId, history: &[Vec<MonthMetrics>], cfg: &EnsembleConfig) -> Result<WeightVector> {
    let n_models = history.len();
    let available = history.iter().map(Vec::len).min().unwrap_or(0);
    let required = if scheme.is_ic() { cfg.ic_window } else { 1 };
    if let Some(w) = warmup_policy(available, required, n_models) {
        return Ok(w);
    }
    let values: Vec<Vec<f64>> = history
        .iter()
        .map(|h| h.iter().map(|m| scheme.metric(m)).collect())
        .collect();
    match scheme {
        SchemeId::IcMean | SchemeId::IcRatio => {
            let mode = if scheme == SchemeId::IcMean {
                IcMode::Mean
            } else {
                IcMode::Ratio
            };
            let scores = ic_scores(&values, mode, cfg.ic_window, cfg.ratio_eps)?;
            Ok(normalize_scores(&scores, cfg.zero_weight_fallback))
        }
        _ => metric_weights(&values, scheme, cfg.metric_window),
    }
}
