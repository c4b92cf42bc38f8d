use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_training, Features, ModelKind, Params, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeConfig {
    pub grid: Vec<f64>,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            grid: (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect(),
        }
    }
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput(
                "ridge grid must be non-empty, finite and ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeParams {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub lambda: f64,
}

impl RidgeParams {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.beta).map(|(x, b)| x * b).sum::<f64>()
    }
}

struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(x: &Features, y: &[f64]) -> Centered {
    let (n, p) = (x.n_rows(), x.n_cols());
    let x_mean: Vec<f64> = (0..p)
        .map(|j| x.rows().iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    Centered {
        x: DMatrix::from_fn(n, p, |i, j| x.rows()[i][j] - x_mean[j]),
        y: DVector::from_iterator(n, y.iter().map(|v| v - y_mean)),
        x_mean,
        y_mean,
    }
}

fn solve_centered(c: &Centered, lambda: f64) -> Result<RidgeParams> {
    let p = c.x.ncols();
    let gram = c.x.transpose() * &c.x + DMatrix::identity(p, p) * lambda;
    let rhs = c.x.transpose() * &c.y;
    let singular = || Error::Underdetermined {
        rows: c.x.nrows(),
        cols: p,
    };
    let scale = gram.diagonal().iter().fold(0.0f64, |a, v| a.max(*v));
    let chol = gram.cholesky().ok_or_else(singular)?;
    // rounding can let a rank-deficient matrix through with a tiny pivot
    if chol.l_dirty().diagonal().iter().any(|d| d * d <= 1e-12 * scale) {
        return Err(singular());
    }
    let beta = chol.solve(&rhs);
    let intercept = c.y_mean - beta.iter().zip(&c.x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(RidgeParams {
        intercept,
        beta: beta.iter().copied().collect(),
        lambda,
    })
}

/// `β = (X'X + λI)⁻¹ X'y` on centered data; the intercept is unpenalized.
pub fn ridge_solve(x: &Features, y: &[f64], lambda: f64) -> Result<RidgeParams> {
    check_training(x, y, 1)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge λ {lambda} must be ≥ 0")));
    }
    solve_centered(&center(x, y), lambda)
}

/// Generalized cross-validation score `n · RSS / (n − df)²` for every λ,
/// from one SVD of the centered design.
fn gcv_scores(c: &Centered, grid: &[f64]) -> Vec<f64> {
    let n = c.x.nrows() as f64;
    let svd = c.x.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let uty = u.transpose() * &c.y;
    let yy = c.y.norm_squared();
    let proj: f64 = uty.norm_squared();
    grid.iter()
        .map(|&lambda| {
            let mut rss = yy - proj;
            let mut df = 1.0;
            for (s, a) in svd.singular_values.iter().zip(uty.iter()) {
                let s2 = s * s;
                let shrink = if s2 + lambda > 0.0 { lambda / (s2 + lambda) } else { 1.0 };
                rss += (shrink * a).powi(2);
                if s2 + lambda > 0.0 {
                    df += s2 / (s2 + lambda);
                }
            }
            let dof = n - df;
            if dof <= 0.0 {
                f64::INFINITY
            } else {
                n * rss.max(0.0) / (dof * dof)
            }
        })
        .collect()
}

/// Ridge with λ chosen by generalized cross-validation over `grid`. A
/// singular system at λ = 0 falls back to the smallest positive grid value.
pub fn train_ridge(x: &Features, y: &[f64], grid: &[f64]) -> Result<TrainedModel> {
    check_training(x, y, 1)?;
    RidgeConfig { grid: grid.to_vec() }.validate()?;
    let c = center(x, y);
    let lambda = if grid.len() == 1 {
        grid[0]
    } else {
        let scores = gcv_scores(&c, grid);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            let better = *s < scores[best] * (1.0 - 1e-12);
            let tie_larger = (*s - scores[best]).abs() <= 1e-12 * scores[best].abs() && grid[i] > grid[best];
            if better || tie_larger {
                best = i;
            }
        }
        grid[best]
    };
    let params = match solve_centered(&c, lambda) {
        Err(Error::Underdetermined { .. }) if lambda == 0.0 => {
            let smallest = grid.iter().copied().filter(|l| *l > 0.0).fold(f64::INFINITY, f64::min);
            if !smallest.is_finite() {
                return Err(Error::Underdetermined {
                    rows: x.n_rows(),
                    cols: x.n_cols(),
                });
            }
            solve_centered(&c, smallest)?
        }
        other => other?,
    };
    Ok(TrainedModel {
        kind: ModelKind::Ridge,
        params: Params::Ridge(params),
        feature_names: x.names().to_vec(),
        train_months: None,
    })
}
