//! Building blocks for second-level style factors computed from daily or
//! annual inputs.

use crate::error::{Error, Result};
use crate::stats::{mean, sample_std};

/// Daily observations keyed by trading-day number.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    dates: Vec<i64>,
    values: Vec<f64>,
}

impl DailySeries {
    pub fn new(dates: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Alignment(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("dates must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("daily values must be finite".into()));
        }
        Ok(Self { dates, values })
    }

    /// Consecutive day numbers starting at 0.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new((0..values.len() as i64).collect(), values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dates(&self) -> &[i64] {
        &self.dates
    }

    fn tail(&self, window: usize) -> Result<(&[i64], &[f64])> {
        if window == 0 || self.len() < window {
            return Err(Error::InsufficientHistory {
                required: window.max(1),
                available: self.len(),
            });
        }
        let start = self.len() - window;
        Ok((&self.dates[start..], &self.values[start..]))
    }
}

fn aligned_tails<'a>(a: &'a DailySeries, b: &'a DailySeries, window: usize) -> Result<(&'a [f64], &'a [f64])> {
    let (da, va) = a.tail(window)?;
    let (db, vb) = b.tail(window)?;
    if da != db {
        return Err(Error::Alignment("series do not cover the same trading days".into()));
    }
    Ok((va, vb))
}

/// Exponentially weighted mean of the last `window` values; the newest day
/// has weight 1 and weights halve every `halflife` days.
pub fn halflife_weighted_return(s: &DailySeries, window: usize, halflife: f64) -> Result<f64> {
    if !(halflife > 0.0) {
        return Err(Error::InvalidInput("halflife must be positive".into()));
    }
    let (_, tail) = s.tail(window)?;
    let lambda = 0.5f64.powf(1.0 / halflife);
    let (mut num, mut den, mut w) = (0.0, 0.0, 1.0);
    for r in tail.iter().rev() {
        num += w * r;
        den += w;
        w *= lambda;
    }
    Ok(num / den)
}

/// Mean over sample standard deviation of the stock's excess over its
/// industry average across the trailing window.
pub fn industry_excess_ir(s: &DailySeries, industry_mean: &DailySeries, window: usize) -> Result<f64> {
    let (vs, vi) = aligned_tails(s, industry_mean, window)?;
    if window < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            available: window,
        });
    }
    let excess: Vec<f64> = vs.iter().zip(vi).map(|(a, b)| a - b).collect();
    let sd = sample_std(&excess);
    let m = mean(&excess);
    let scale = excess.iter().fold(f64::MIN_POSITIVE, |a, v| a.max(v.abs()));
    if !(sd > 1e-12 * scale) {
        return Err(Error::UndefinedIr);
    }
    Ok(m / sd)
}

/// Compound growth rate across the last `years` annual values.
pub fn cgr(annual_values: &[f64], years: usize) -> Result<f64> {
    if years < 2 || annual_values.len() < years {
        return Err(Error::InsufficientHistory {
            required: years.max(2),
            available: annual_values.len(),
        });
    }
    let tail = &annual_values[annual_values.len() - years..];
    let (first, last) = (tail[0], tail[years - 1]);
    if first == 0.0 {
        return Err(Error::UndefinedGrowth("first value is zero".into()));
    }
    let ratio = last / first;
    if ratio < 0.0 {
        return Err(Error::UndefinedGrowth(
            "sign change between first and last value".into(),
        ));
    }
    Ok(ratio.powf(1.0 / (years - 1) as f64) - 1.0)
}

/// Keeps the return when the stock's metric is at least the market
/// average, flips its sign otherwise.
pub fn reversal_flip(stock_metric: f64, market_avg: f64, stock_return: f64) -> f64 {
    if stock_metric >= market_avg {
        stock_return
    } else {
        -stock_return
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaResidVol {
    pub beta: f64,
    pub resid_std: f64,
}

/// OLS of stock returns on benchmark returns (with intercept) over the
/// trailing window; residual dispersion is the sample standard deviation.
pub fn ts_beta_residvol(stock: &DailySeries, benchmark: &DailySeries, window: usize) -> Result<BetaResidVol> {
    let (y, x) = aligned_tails(stock, benchmark, window)?;
    if window < 3 {
        return Err(Error::InsufficientHistory {
            required: 3,
            available: window,
        });
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::UndefinedBeta);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - alpha - beta * a).collect();
    Ok(BetaResidVol {
        beta,
        resid_std: sample_std(&resid),
    })
}

/// Weighted variant of [`ts_beta_residvol`]: day weights halve every
/// `halflife` days, the newest day weighing 1. Residual dispersion uses the
/// reliability-weighted unbiased variance, so a very long halflife matches
/// the unweighted fit.
pub fn ts_beta_residvol_halflife(
    stock: &DailySeries,
    benchmark: &DailySeries,
    window: usize,
    halflife: f64,
) -> Result<BetaResidVol> {
    if !(halflife > 0.0) {
        return Err(Error::InvalidInput("halflife must be positive".into()));
    }
    let (y, x) = aligned_tails(stock, benchmark, window)?;
    if window < 3 {
        return Err(Error::InsufficientHistory {
            required: 3,
            available: window,
        });
    }
    let lambda = 0.5f64.powf(1.0 / halflife);
    let w: Vec<f64> = (0..window).map(|i| lambda.powi((window - 1 - i) as i32)).collect();
    let sw: f64 = w.iter().sum();
    let wmean = |v: &[f64]| v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mx, my) = (wmean(x), wmean(y));
    let sxx: f64 = x.iter().zip(&w).map(|(v, wi)| wi * (v - mx) * (v - mx)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::UndefinedBeta);
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((a, b), wi)| wi * (a - mx) * (b - my))
        .sum();
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((a, b), wi)| wi * (b - alpha - beta * a).powi(2))
        .sum();
    let sw2: f64 = w.iter().map(|v| v * v).sum();
    let dof = sw - sw2 / sw;
    Ok(BetaResidVol {
        beta,
        resid_std: (ss / dof).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn series(v: &[f64]) -> DailySeries {
        DailySeries::from_values(v.to_vec()).unwrap()
    }

    #[test]
    fn halflife_examples() {
        let flat = series(&[0.004; 30]);
        assert!((halflife_weighted_return(&flat, 20, 60.0).unwrap() - 0.004).abs() < 1e-15);

        let s = series(&[0.01, -0.02, 0.03, 0.05]);
        let simple = (0.01 - 0.02 + 0.03 + 0.05) / 4.0;
        assert!((halflife_weighted_return(&s, 4, 1e12).unwrap() - simple).abs() < 1e-12);

        // two-term oracle: 0.02 / (1 + λ) with λ = 0.5^(1/60)
        let lambda = (-(2f64.ln()) / 60.0).exp();
        let expected = 0.02 / (1.0 + lambda);
        let got = halflife_weighted_return(&series(&[0.0, 0.02]), 2, 60.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.010_057_761_622_6).abs() < 1e-12);

        assert!(matches!(
            halflife_weighted_return(&series(&[0.1]), 2, 60.0),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn excess_ir_examples() {
        let ind = series(&[0.01, 0.02, -0.01, 0.0]);
        let shifted = series(&[0.03, 0.04, 0.01, 0.02]);
        assert!(matches!(industry_excess_ir(&shifted, &ind, 4), Err(Error::UndefinedIr)));

        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let zero = series(&[0.0; 20]);
        assert_eq!(industry_excess_ir(&series(&alt), &zero, 20).unwrap(), 0.0);

        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        let ir = industry_excess_ir(&s, &series(&[0.0; 4]), 4).unwrap();
        assert!((ir - 2.5 / (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((ir - 1.936_491_673_1).abs() < 1e-9);
    }

    #[test]
    fn cgr_examples() {
        let g = cgr(&[1.0, 1.1, 1.3, 1.6, 2.0], 5).unwrap();
        assert!((g - (2f64.powf(0.25) - 1.0)).abs() < 1e-15);
        assert_eq!(cgr(&[3.0; 5], 5).unwrap(), 0.0);
        assert!(matches!(
            cgr(&[0.0, 1.0, 1.0, 1.0, 1.0], 5),
            Err(Error::UndefinedGrowth(_))
        ));
        assert!(matches!(
            cgr(&[1.0, 1.0, 1.0, 1.0, -1.0], 5),
            Err(Error::UndefinedGrowth(_))
        ));
    }

    #[test]
    fn reversal_examples() {
        assert_eq!(reversal_flip(0.5, 1.0, 0.03), -0.03);
        assert_eq!(reversal_flip(1.0, 1.0, 0.03), 0.03);
        assert_eq!(reversal_flip(2.0, 1.0, -0.01), -0.01);
    }

    #[test]
    fn beta_examples() {
        let bench = series(&[0.01, -0.02, 0.015, 0.0, 0.03, -0.01]);
        let stock = series(&bench.values().iter().map(|v| 2.0 * v).collect::<Vec<_>>());
        let b = ts_beta_residvol(&stock, &bench, 6).unwrap();
        assert!((b.beta - 2.0).abs() < 1e-12);
        assert!(b.resid_std < 1e-12);

        let flat = series(&[0.01; 6]);
        assert!(matches!(ts_beta_residvol(&stock, &flat, 6), Err(Error::UndefinedBeta)));
    }

    #[test]
    fn weighted_beta_limits() {
        let bench = series(&[0.01, -0.02, 0.015, 0.0, 0.03, -0.01, 0.02, -0.005]);
        let stock = series(&[0.02, -0.03, 0.02, 0.004, 0.05, -0.02, 0.03, 0.0]);
        let ols = ts_beta_residvol(&stock, &bench, 8).unwrap();
        let flat = ts_beta_residvol_halflife(&stock, &bench, 8, 1e12).unwrap();
        assert!((ols.beta - flat.beta).abs() < 1e-9);
        assert!((ols.resid_std - flat.resid_std).abs() < 1e-9);
        let doubled = series(&bench.values().iter().map(|v| 2.0 * v).collect::<Vec<_>>());
        let b = ts_beta_residvol_halflife(&doubled, &bench, 8, 3.0).unwrap();
        assert!((b.beta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn planted_residual_vol_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let market = Normal::new(0.0, 0.015).unwrap();
        let eps = Normal::new(0.0, 0.01).unwrap();
        let mut within = 0;
        for _ in 0..50 {
            let b: Vec<f64> = (0..250).map(|_| market.sample(&mut rng)).collect();
            let s: Vec<f64> = b.iter().map(|v| v + eps.sample(&mut rng)).collect();
            let fit = ts_beta_residvol(&series(&s), &series(&b), 250).unwrap();
            if (fit.resid_std - 0.01).abs() <= 0.002 {
                within += 1;
            }
        }
        assert_eq!(within, 50);
    }
}
