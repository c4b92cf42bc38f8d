use serde::Serialize;

use super::EquityCurve;
use crate::error::{Error, Result};
use crate::stats::{mean, sample_covariance, sample_std, sample_variance};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub strategy_return: f64,
    pub annualized_return: f64,
    pub annualized_volatility: f64,
    pub excess_return: f64,
    /// `None` when the return series has zero volatility.
    pub sharpe: Option<f64>,
    pub beta: f64,
    pub alpha: f64,
    pub max_drawdown: f64,
}

/// Largest peak-to-trough decline of a wealth path, as a fraction of the
/// peak. One linear scan.
pub fn max_drawdown(wealth: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &w in wealth {
        peak = peak.max(w);
        if peak > 0.0 {
            worst = worst.max((peak - w) / peak);
        }
    }
    worst
}

/// Summary statistics of a curve with `ppy` periods per year and a zero
/// risk-free rate. Alpha is the annualized intercept of net on benchmark.
pub fn performance_report(curve: &EquityCurve, ppy: f64) -> Result<BacktestReport> {
    let t = curve.net.len();
    if t < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            available: t,
        });
    }
    let wealth_final = curve.wealth.last().copied().unwrap_or(1.0);
    let strategy_return = wealth_final - 1.0;
    if wealth_final <= 0.0 {
        return Err(Error::UndefinedGrowth("wealth reached zero".into()));
    }
    let annualized_return = wealth_final.powf(ppy / t as f64) - 1.0;
    let annualized_volatility = sample_std(&curve.net) * ppy.sqrt();
    let bench_total = curve.benchmark.iter().fold(1.0, |w, r| w * (1.0 + r)) - 1.0;
    let var_b = sample_variance(&curve.benchmark);
    if !(var_b > 0.0) {
        return Err(Error::UndefinedBeta);
    }
    let beta = sample_covariance(&curve.net, &curve.benchmark) / var_b;
    let alpha = (mean(&curve.net) - beta * mean(&curve.benchmark)) * ppy;
    let mut path = Vec::with_capacity(t + 1);
    path.push(1.0);
    path.extend_from_slice(&curve.wealth);
    Ok(BacktestReport {
        strategy_return,
        annualized_return,
        annualized_volatility,
        excess_return: strategy_return - bench_total,
        sharpe: (annualized_volatility > 0.0).then(|| annualized_return / annualized_volatility),
        beta,
        alpha,
        max_drawdown: max_drawdown(&path),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::panel::MonthIndex;
    use proptest::prelude::*;

    pub(crate) fn brute_force_drawdown(w: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..w.len() {
            for i in 0..=j {
                if w[i] > 0.0 {
                    worst = worst.max((w[i] - w[j]) / w[i]);
                }
            }
        }
        worst
    }

    fn curve(net: &[f64], bench: &[f64]) -> EquityCurve {
        EquityCurve::from_returns(
            (0..net.len())
                .map(|i| MonthIndex::from_ordinal(24_000 + i as i64))
                .collect(),
            net.to_vec(),
            net.to_vec(),
            bench.to_vec(),
            vec![1.0; net.len()],
            vec![Vec::new(); net.len()],
        )
    }

    #[test]
    fn drawdown_example() {
        assert!((max_drawdown(&[1.0, 1.2, 0.9, 1.1]) - 0.25).abs() < 1e-15);
        assert_eq!(max_drawdown(&[1.0, 1.1, 1.2]), 0.0);
    }

    #[test]
    fn report_identities() {
        let bench = [0.01, -0.02, 0.03, 0.0, -0.01];
        let same = performance_report(&curve(&bench, &bench), 12.0).unwrap();
        assert!(same.excess_return.abs() < 1e-15);
        assert!((same.beta - 1.0).abs() < 1e-12);
        assert!(same.alpha.abs() < 1e-12);

        let zero_mean = [0.02, -0.02, 0.01, -0.01];
        let double: Vec<f64> = zero_mean.iter().map(|r| 2.0 * r).collect();
        let r = performance_report(&curve(&double, &zero_mean), 12.0).unwrap();
        assert!((r.beta - 2.0).abs() < 1e-12);

        let c = curve(&[0.1, -0.05, 0.02], &bench[..3]);
        let r = performance_report(&c, 12.0).unwrap();
        assert!((1.0 + r.strategy_return - c.wealth[2]).abs() <= 1e-12);
        let expected = (1.1f64 * 0.95 * 1.02).powf(4.0) - 1.0;
        assert!((r.annualized_return - expected).abs() < 1e-12);
    }

    #[test]
    fn report_errors() {
        assert!(matches!(
            performance_report(&curve(&[0.01, 0.02], &[0.01, 0.01]), 12.0),
            Err(Error::UndefinedBeta)
        ));
        assert!(matches!(
            performance_report(&curve(&[0.01], &[0.01]), 12.0),
            Err(Error::InsufficientHistory { .. })
        ));
        let flat = performance_report(&curve(&[0.0, 0.0, 0.0], &[0.01, 0.0, -0.01]), 12.0).unwrap();
        assert_eq!(flat.sharpe, None);
    }

    proptest! {
        #[test]
        fn linear_scan_matches_brute_force(w in proptest::collection::vec(0.01f64..3.0, 1..60)) {
            prop_assert_eq!(max_drawdown(&w), brute_force_drawdown(&w));
        }
    }
}
