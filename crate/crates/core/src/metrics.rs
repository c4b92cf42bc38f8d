//! Forecast evaluation: error metrics, direction classification scores and
//! rank information coefficients.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{average_ranks, pearson};

fn check_aligned(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Arity("empty input".into()));
    }
    if pred.len() != actual.len() {
        return Err(Error::Arity(format!(
            "{} predictions for {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_aligned(pred, actual)?;
    let mse = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

pub const MAPE_EPS: f64 = 1e-8;

/// Mean of `|p − a| / max(|a|, eps)`.
pub fn mape(pred: &[f64], actual: &[f64], eps: f64) -> Result<f64> {
    check_aligned(pred, actual)?;
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs() / a.abs().max(eps))
        .sum::<f64>()
        / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DirectionOutcome {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl DirectionOutcome {
    pub fn tally(pred: &[f64], actual: &[f64], threshold: f64) -> Self {
        let mut out = Self::default();
        for (p, a) in pred.iter().zip(actual) {
            match (*p > threshold, *a > threshold) {
                (true, true) => out.tp += 1,
                (true, false) => out.fp += 1,
                (false, false) => out.tn += 1,
                (false, true) => out.fn_ += 1,
            }
        }
        out
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Precision, recall and F1 of "goes up" calls; a value is positive when it
/// exceeds `threshold`. Every 0/0 is defined as 0.
pub fn direction_metrics(pred: &[f64], actual: &[f64], threshold: f64) -> Result<DirectionScores> {
    if pred.len() != actual.len() {
        return Err(Error::Arity(format!(
            "{} predictions for {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    let o = DirectionOutcome::tally(pred, actual, threshold);
    let precision = ratio(o.tp as f64, (o.tp + o.fp) as f64);
    let recall = ratio(o.tp as f64, (o.tp + o.fn_) as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Ok(DirectionScores { precision, recall, f1 })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Arity(format!(
            "spearman needs two aligned vectors of length ≥ 2 (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or(Error::UndefinedCorrelation)
}

/// Rank IC between predictions formed at `t` and returns realized over
/// `t → t+1`, on the same stock set.
pub fn ic_at(predictions: &[f64], realized: &[f64]) -> Result<f64> {
    spearman(predictions, realized)
}

/// Per-model IC observations, in chronological order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IcSeries {
    pub models: Vec<String>,
    /// `ic[k][t]`: model `k`, observation `t`.
    pub ic: Vec<Vec<f64>>,
}

impl IcSeries {
    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        self.ic.iter().map(|s| cumulative_ic(s)).collect()
    }
}

/// Running sums of an IC series.
pub fn cumulative_ic(ic: &[f64]) -> Vec<f64> {
    ic.iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Every evaluation metric of one forecast cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonthMetrics {
    pub rmse: f64,
    pub mape: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when either side is constant.
    pub ic: Option<f64>,
}

impl MonthMetrics {
    pub fn evaluate(pred: &[f64], actual: &[f64]) -> Result<Self> {
        let d = direction_metrics(pred, actual, 0.0)?;
        let ic = match ic_at(pred, actual) {
            Ok(v) => Some(v),
            Err(Error::UndefinedCorrelation) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            rmse: rmse(pred, actual)?,
            mape: mape(pred, actual, MAPE_EPS)?,
            precision: d.precision,
            recall: d.recall,
            f1: d.f1,
            ic,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse(&[3.0, -4.0], &[0.0, 0.0]).unwrap();
        assert!((r - 12.5f64.sqrt()).abs() < 1e-15);
        let c = rmse(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0]).unwrap();
        assert!((c - 0.5).abs() < 1e-15);
        assert!(matches!(rmse(&[], &[]), Err(Error::Arity(_))));
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[2.0], &[1.0], MAPE_EPS).unwrap(), 1.0);
        assert_eq!(mape(&[0.3, -0.2], &[0.3, -0.2], MAPE_EPS).unwrap(), 0.0);
        let floor = mape(&[1.0], &[0.0], 1e-8).unwrap();
        assert!((floor - 1e8).abs() < 1e-6);
    }

    #[test]
    fn mape_is_not_symmetric() {
        let a = mape(&[2.0], &[1.0], MAPE_EPS).unwrap();
        let b = mape(&[1.0], &[2.0], MAPE_EPS).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn direction_examples() {
        let d = direction_metrics(&[1.0; 4], &[1.0, -1.0, 1.0, -1.0], 0.0).unwrap();
        assert_eq!(d.precision, 0.5);
        assert_eq!(d.recall, 1.0);
        assert!((d.f1 - 2.0 / 3.0).abs() < 1e-15);

        let p = direction_metrics(&[0.1, -0.2, 0.3], &[0.5, -0.1, 0.2], 0.0).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));

        let none = direction_metrics(&[-1.0, -1.0], &[1.0, -1.0], 0.0).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert!((spearman(&x, &rev).unwrap() + 1.0).abs() < 1e-15);
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        assert!((spearman(&x, &y).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(spearman(&x, &[2.0; 5]), Err(Error::UndefinedCorrelation)));
    }

    #[test]
    fn ic_examples() {
        let r = [0.02, -0.01, 0.05, 0.0];
        assert!((ic_at(&r, &r).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        assert!((ic_at(&neg, &r).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn ic_null_distribution() {
        use rand::{Rng, SeedableRng};
        let mut hits = 0;
        for seed in 0..200u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..300).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..300).map(|_| rng.random()).collect();
            if ic_at(&a, &b).unwrap().abs() < 0.2 {
                hits += 1;
            }
        }
        assert!(hits as f64 / 200.0 >= 0.95);
    }

    #[test]
    fn cumulative_examples() {
        let c = cumulative_ic(&[0.1, -0.05]);
        assert!((c[0] - 0.1).abs() < 1e-15 && (c[1] - 0.05).abs() < 1e-15);
        assert_eq!(cumulative_ic(&[0.0; 3]), vec![0.0; 3]);
        assert_eq!(cumulative_ic(&[0.3]), vec![0.3]);
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_maps(
            pairs in prop::collection::vec((-100i32..100, -100i32..100), 3..50)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            if let Ok(base) = spearman(&x, &y) {
                let tx: Vec<f64> = x.iter().map(|v| (v / 50.0).exp()).collect();
                let ty: Vec<f64> = y.iter().map(|v| v * v * v + 3.0 * v).collect();
                prop_assert!((spearman(&tx, &ty).unwrap() - base).abs() < 1e-12);
            }
        }

        #[test]
        fn direction_invariant_under_positive_scaling(
            pairs in prop::collection::vec((-1f64..1.0, -1f64..1.0), 1..40),
            scale in 0.01f64..100.0
        ) {
            let p: Vec<f64> = pairs.iter().map(|v| v.0).collect();
            let a: Vec<f64> = pairs.iter().map(|v| v.1).collect();
            let scaled: Vec<f64> = p.iter().map(|v| v * scale).collect();
            prop_assert_eq!(direction_metrics(&p, &a, 0.0).unwrap(), direction_metrics(&scaled, &a, 0.0).unwrap());
        }

        #[test]
        fn rmse_is_symmetric(pairs in prop::collection::vec((-1f64..1.0, -1f64..1.0), 1..40)) {
            let p: Vec<f64> = pairs.iter().map(|v| v.0).collect();
            let a: Vec<f64> = pairs.iter().map(|v| v.1).collect();
            prop_assert_eq!(rmse(&p, &a).unwrap(), rmse(&a, &p).unwrap());
        }
    }
}
