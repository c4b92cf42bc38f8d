use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-weight holdings as `(stock index, weight)`, sorted by stock.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Holdings {
    pub positions: Vec<(usize, f64)>,
    /// Fewer eligible stocks than requested; all of them are held.
    pub shortfall: bool,
}

impl Holdings {
    pub fn stocks(&self) -> Vec<usize> {
        self.positions.iter().map(|(s, _)| *s).collect()
    }
}

/// The `top_n` eligible stocks by prediction, equally weighted. `eligible`
/// and `predictions` are aligned; ties go to the lower stock index, which
/// is ticker order in a loaded panel.
pub fn form_portfolio(predictions: &[f64], eligible: &[usize], top_n: usize) -> Result<Holdings> {
    if predictions.len() != eligible.len() {
        return Err(Error::Alignment(format!(
            "{} predictions for {} eligible stocks",
            predictions.len(),
            eligible.len()
        )));
    }
    if eligible.is_empty() {
        return Err(Error::Precondition("no eligible stock to hold".into()));
    }
    if top_n == 0 {
        return Err(Error::InvalidInput("top_n must be ≥ 1".into()));
    }
    if predictions.iter().any(|p| p.is_nan()) {
        return Err(Error::InvalidInput("NaN prediction".into()));
    }
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .total_cmp(&predictions[a])
            .then(eligible[a].cmp(&eligible[b]))
    });
    let n = top_n.min(eligible.len());
    let mut chosen: Vec<usize> = order[..n].iter().map(|&i| eligible[i]).collect();
    chosen.sort_unstable();
    Ok(Holdings {
        positions: chosen.into_iter().map(|s| (s, 1.0 / n as f64)).collect(),
        shortfall: eligible.len() < top_n,
    })
}

/// Weight bought relative to the previous holdings, `Σ max(w_new − w_old, 0)`;
/// 1 when there are no previous holdings.
pub fn turnover(previous: Option<&Holdings>, next: &Holdings) -> f64 {
    let Some(prev) = previous else { return 1.0 };
    let old = |s: usize| prev.positions.iter().find(|(p, _)| *p == s).map_or(0.0, |(_, w)| *w);
    let t: f64 = next.positions.iter().map(|&(s, w)| (w - old(s)).max(0.0)).sum();
    t.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    /// `cost_rate` is the round-trip rate charged on turnover.
    #[default]
    Total,
    /// `cost_rate` is charged on both the sold and the bought side.
    TwoSided,
    /// `cost_rate` every month regardless of trading.
    FlatFee,
}

pub fn apply_costs(gross: f64, turnover: f64, cost_rate: f64, mode: CostMode) -> Result<f64> {
    if !(0.0..=1.0).contains(&turnover) {
        return Err(Error::Precondition(format!("turnover {turnover} outside [0, 1]")));
    }
    Ok(match mode {
        CostMode::Total => gross - cost_rate * turnover,
        CostMode::TwoSided => gross - 2.0 * cost_rate * turnover,
        CostMode::FlatFee => gross - cost_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn portfolio_examples() {
        let h = form_portfolio(&[0.05, 0.01, 0.03], &[0, 1, 2], 2).unwrap();
        assert_eq!(h.positions, vec![(0, 0.5), (2, 0.5)]);
        assert!(!h.shortfall);
        let tie = form_portfolio(&[0.0; 5], &[3, 4, 5, 6, 7], 2).unwrap();
        assert_eq!(tie.stocks(), vec![3, 4]);
        let all = form_portfolio(&[0.3, 0.1], &[0, 9], 30).unwrap();
        assert_eq!(all.positions, vec![(0, 0.5), (9, 0.5)]);
        assert!(all.shortfall);
        assert!(form_portfolio(&[], &[], 3).is_err());
    }

    #[test]
    fn cost_examples() {
        let net = apply_costs(0.01, 1.0, 0.003, CostMode::Total).unwrap();
        assert!((net - 0.007).abs() < 1e-15);
        assert_eq!(apply_costs(0.02, 0.0, 0.003, CostMode::Total).unwrap(), 0.02);
        let half = apply_costs(0.0, 0.5, 0.003, CostMode::Total).unwrap();
        assert!((half + 0.0015).abs() < 1e-15);
        let two = apply_costs(0.0, 0.5, 0.003, CostMode::TwoSided).unwrap();
        assert!((two + 0.003).abs() < 1e-15);
        assert_eq!(apply_costs(0.01, 0.0, 0.003, CostMode::FlatFee).unwrap(), 0.01 - 0.003);
        assert!(apply_costs(0.0, 1.5, 0.003, CostMode::Total).is_err());
    }

    #[test]
    fn turnover_cases() {
        let a = form_portfolio(&[3.0, 2.0, 1.0, 0.0], &[0, 1, 2, 3], 2).unwrap();
        let b = form_portfolio(&[3.0, 0.0, 2.0, 1.0], &[0, 1, 2, 3], 2).unwrap();
        assert_eq!(turnover(None, &a), 1.0);
        assert_eq!(turnover(Some(&a), &a), 0.0);
        assert_eq!(turnover(Some(&a), &b), 0.5);
    }
}
