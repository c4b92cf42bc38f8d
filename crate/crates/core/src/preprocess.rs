//! Cross-sectional factor cleaning.
//!
//! Every (month, factor) cross-section of eligible stocks goes through
//! [`impute_missing`] → [`winsorize_mad`] → [`zscore`] → [`neutralize`] in
//! that order. Ineligible cells come out missing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::OrthoBasis;
use crate::panel::{universe_at, FactorPanel};
use crate::stats::{mean, median, sample_std};

/// One factor in one month. `industry` holds an industry code per stock.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub values: Vec<Option<f64>>,
    pub industry: Vec<usize>,
    pub log_mcap: Vec<f64>,
}

/// Fills each missing value with the median of its industry, or with the
/// median of the whole cross-section when its industry has no observations.
pub fn impute_missing(values: &[Option<f64>], industry: &[usize]) -> Result<Vec<f64>> {
    if values.len() != industry.len() {
        return Err(Error::Alignment(format!(
            "{} values but {} industry labels",
            values.len(),
            industry.len()
        )));
    }
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(Error::Unimputable);
    }
    if observed.len() == values.len() {
        return Ok(observed);
    }
    let pool = median(&observed);
    let mut cache: Vec<(usize, f64)> = Vec::new();
    let mut industry_median = |code: usize| -> f64 {
        if let Some(&(_, m)) = cache.iter().find(|(c, _)| *c == code) {
            return m;
        }
        let members: Vec<f64> = values
            .iter()
            .zip(industry)
            .filter(|(_, c)| **c == code)
            .filter_map(|(v, _)| *v)
            .collect();
        let m = if members.is_empty() { pool } else { median(&members) };
        cache.push((code, m));
        m
    };
    Ok(values
        .iter()
        .zip(industry)
        .map(|(v, &code)| v.unwrap_or_else(|| industry_median(code)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Winsorized {
    pub values: Vec<f64>,
    /// Set when the MAD is zero and the input was returned unchanged.
    pub degenerate: bool,
}

/// Clips values to `median ± k · MAD` (unscaled MAD).
///
/// Idempotent for `k ≥ 2`. Below that, clipping can shrink the MAD of an
/// even-length input and a second pass clips further.
pub fn winsorize_mad(values: &[f64], k: f64) -> Result<Winsorized> {
    if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "winsorization needs at least two finite values".into(),
        ));
    }
    let m = median(values);
    let deviations: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    let mad = median(&deviations);
    if mad == 0.0 {
        return Ok(Winsorized {
            values: values.to_vec(),
            degenerate: true,
        });
    }
    let (lo, hi) = (m - k * mad, m + k * mad);
    Ok(Winsorized {
        values: values.iter().map(|v| v.clamp(lo, hi)).collect(),
        degenerate: false,
    })
}

/// Standardizes to mean 0 and sample standard deviation 1.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InvalidInput("z-score needs at least two values".into()));
    }
    let m = mean(values);
    let sd = sample_std(values);
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(sd > 1e-14 * scale) {
        return Err(Error::ConstantVector);
    }
    let centered: Vec<f64> = values.iter().map(|v| (v - m) / sd).collect();
    // second centering pass removes rounding drift in the mean
    let drift = mean(&centered);
    Ok(centered.into_iter().map(|v| v - drift).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neutralized {
    pub residuals: Vec<f64>,
    /// Regressor columns dropped as collinear, as `(column index, name)`.
    pub dropped: Vec<(usize, String)>,
}

/// OLS residuals of `values` on an intercept, industry dummies (the first
/// industry in code order is the reference) and, when given, log market cap.
pub fn neutralize(values: &[f64], industry: &[usize], log_mcap: Option<&[f64]>) -> Result<Neutralized> {
    let n = values.len();
    if industry.len() != n || log_mcap.is_some_and(|l| l.len() != n) {
        return Err(Error::Alignment("neutralization inputs differ in length".into()));
    }
    let codes: BTreeSet<usize> = industry.iter().copied().collect();
    let mut columns = vec![vec![1.0; n]];
    let mut names = vec!["intercept".to_string()];
    for &code in codes.iter().skip(1) {
        columns.push(industry.iter().map(|&c| f64::from(u8::from(c == code))).collect());
        names.push(format!("industry[{code}]"));
    }
    if let Some(size) = log_mcap {
        columns.push(size.to_vec());
        names.push("log_mcap".into());
    }
    let basis = OrthoBasis::build(&columns);
    if n <= basis.rank() {
        return Err(Error::Underdetermined {
            rows: n,
            cols: basis.rank(),
        });
    }
    Ok(Neutralized {
        residuals: basis.residual(values),
        dropped: basis.dropped.iter().map(|&j| (j, names[j].clone())).collect(),
    })
}

/// Factor names neutralized on industry only; everything else also gets the
/// log-market-cap regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub mad_multiplier: f64,
    pub neutralize: bool,
    pub industry_only: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            mad_multiplier: 3.0,
            neutralize: true,
            industry_only: Vec::new(),
        }
    }
}

/// Counts of the degenerate cases met while cleaning a panel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PreprocessReport {
    pub imputed_cells: usize,
    pub mad_degenerate: usize,
    pub constant_sections: usize,
    pub unimputable_sections: usize,
    pub collinear_dropped: usize,
}

/// Runs the canonical cleaning order on every (month, factor) cross-section.
pub fn preprocess_panel(panel: &FactorPanel, config: &PreprocessConfig) -> Result<(FactorPanel, PreprocessReport)> {
    let n_s = panel.n_stocks();
    let n_f = panel.n_factors();
    let mut values = vec![None; panel.n_months() * n_s * n_f];
    let mut report = PreprocessReport::default();
    for m in 0..panel.n_months() {
        let idx = universe_at(panel, m).indices();
        if idx.is_empty() {
            continue;
        }
        let industry: Vec<usize> = idx.iter().map(|&s| panel.industry_code(m, s)).collect();
        let log_mcap: Vec<f64> = idx.iter().map(|&s| panel.market_cap(m, s).ln()).collect();
        for f in 0..n_f {
            let raw: Vec<Option<f64>> = idx.iter().map(|&s| panel.value(m, s, f)).collect();
            let size = (!config.industry_only.contains(&panel.factor_names()[f])).then_some(log_mcap.as_slice());
            let cleaned = clean_section(&raw, &industry, size, config, &mut report)?;
            for (&s, v) in idx.iter().zip(cleaned) {
                values[(m * n_s + s) * n_f + f] = Some(v);
            }
        }
    }
    Ok((panel.with_factors(panel.factor_names().to_vec(), values)?, report))
}

fn clean_section(
    raw: &[Option<f64>],
    industry: &[usize],
    log_mcap: Option<&[f64]>,
    config: &PreprocessConfig,
    report: &mut PreprocessReport,
) -> Result<Vec<f64>> {
    let neutral = || vec![0.0; raw.len()];
    let observed = raw.iter().flatten().count();
    if observed == 0 || raw.len() < 2 {
        report.unimputable_sections += 1;
        return Ok(neutral());
    }
    report.imputed_cells += raw.len() - observed;
    let filled = impute_missing(raw, industry)?;
    let clipped = winsorize_mad(&filled, config.mad_multiplier)?;
    report.mad_degenerate += usize::from(clipped.degenerate);
    let z = match zscore(&clipped.values) {
        Ok(z) => z,
        Err(Error::ConstantVector) => {
            report.constant_sections += 1;
            return Ok(neutral());
        }
        Err(e) => return Err(e),
    };
    if !config.neutralize {
        return Ok(z);
    }
    match neutralize(&z, industry, log_mcap) {
        Ok(n) => {
            report.collinear_dropped += n.dropped.len();
            Ok(n.residuals)
        }
        // too few stocks for the full design: fall back to demeaning
        Err(Error::Underdetermined { .. }) => Ok(z),
        Err(e) => Err(e),
    }
}
