//! LASSO factor screening.
//!
//! The objective is `Σ(y − Xβ)² + λ Σ|β_j|` with no ½ on the loss, so the
//! coordinate update soft-thresholds at `λ / (2 Σ x²)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{universe_at, FactorPanel};
use nalgebra::{DMatrix, DVector};

use crate::stats::{mean, sample_std};

pub const LASSO_TOL: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 10_000;
/// Coefficients below this magnitude count as excluded.
pub const ZERO_COEF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub n_iter: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn nonzero(&self) -> usize {
        self.beta.iter().filter(|b| b.abs() >= ZERO_COEF).count()
    }

    pub fn predict_row(&self, row: impl Iterator<Item = f64>) -> f64 {
        self.intercept + row.zip(&self.beta).map(|(x, b)| x * b).sum::<f64>()
    }
}

/// Column-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    cols: Vec<Vec<f64>>,
    n: usize,
}

impl Design {
    pub fn from_columns(cols: Vec<Vec<f64>>) -> Result<Self> {
        let n = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Alignment("design columns differ in length".into()));
        }
        if cols.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design contains non-finite values".into()));
        }
        Ok(Self { cols, n })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Alignment("design rows differ in length".into()));
        }
        Self::from_columns((0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    fn take_rows(&self, rows: &[usize]) -> Self {
        Self {
            cols: self.cols.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            n: rows.len(),
        }
    }

    /// Z-scores every column; constant columns become all zeros.
    /// Returns the per-column `(mean, sd)` used, `sd = 0` for constants.
    pub fn standardize(&mut self) -> Vec<(f64, f64)> {
        self.cols
            .iter_mut()
            .map(|c| {
                let m = mean(c);
                let sd = sample_std(c);
                let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if sd > 1e-12 * scale.max(1e-300) {
                    c.iter_mut().for_each(|v| *v = (*v - m) / sd);
                    (m, sd)
                } else {
                    c.iter_mut().for_each(|v| *v = 0.0);
                    (m, 0.0)
                }
            })
            .collect()
    }

    fn check_standardized(&self) -> Result<()> {
        for (j, c) in self.cols.iter().enumerate() {
            let m = mean(c);
            let sd = sample_std(c);
            let constant_zero = c.iter().all(|v| *v == 0.0);
            if !constant_zero && (m.abs() > 1e-6 || (sd - 1.0).abs() > 1e-3) {
                return Err(Error::Precondition(format!(
                    "column {j} is not standardized (mean {m:.3e}, sd {sd:.6})"
                )));
            }
        }
        Ok(())
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on a standardized design. `y` is centered
/// internally; the intercept is its mean.
pub fn fit_lasso(x: &Design, y: &[f64], lambda: f64) -> Result<LassoFit> {
    x.check_standardized()?;
    fit_lasso_from(x, y, lambda, None)
}

fn fit_lasso_from(x: &Design, y: &[f64], lambda: f64, start: Option<&[f64]>) -> Result<LassoFit> {
    if y.len() != x.n_rows() {
        return Err(Error::Alignment(format!(
            "{} targets for {} design rows",
            y.len(),
            x.n_rows()
        )));
    }
    if x.n_rows() < 2 {
        return Err(Error::InvalidInput("lasso needs at least two rows".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda {lambda} must be finite and ≥ 0")));
    }
    let p = x.n_cols();
    let intercept = mean(y);
    let mut beta = start.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    let mut resid: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    for (j, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            for (r, xv) in resid.iter_mut().zip(x.column(j)) {
                *r -= xv * b;
            }
        }
    }
    let sxx: Vec<f64> = x.cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let half = lambda / 2.0;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            if sxx[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = x.column(j);
            let rho: f64 = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() + sxx[j] * beta[j];
            let new = soft_threshold(rho, half) / sxx[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, xv) in resid.iter_mut().zip(col) {
                    *r -= xv * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < LASSO_TOL {
            converged = true;
            break;
        }
    }
    Ok(LassoFit {
        beta,
        intercept,
        lambda,
        n_iter: sweeps,
        converged,
    })
}

/// Largest KKT violation of a fit against the unpenalized objective.
pub fn kkt_violation(x: &Design, y: &[f64], fit: &LassoFit) -> f64 {
    let resid: Vec<f64> = (0..x.n_rows())
        .map(|i| y[i] - fit.intercept - (0..x.n_cols()).map(|j| x.column(j)[i] * fit.beta[j]).sum::<f64>())
        .collect();
    (0..x.n_cols())
        .map(|j| {
            let g = 2.0 * x.column(j).iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>();
            let b = fit.beta[j];
            if b != 0.0 {
                (g - fit.lambda * b.signum()).abs()
            } else {
                (g.abs() - fit.lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Smallest λ at which every coefficient is zero: `max_j 2|x_j'(y − ȳ)|`.
pub fn lambda_max(x: &Design, y: &[f64]) -> f64 {
    let my = mean(y);
    x.cols
        .iter()
        .map(|c| 2.0 * c.iter().zip(y).map(|(a, b)| a * (b - my)).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// `n_points` log-spaced values from `lambda_max` down to
/// `lambda_max · min_ratio`, descending.
pub fn lambda_grid(x: &Design, y: &[f64], n_points: usize, min_ratio: f64) -> Result<Vec<f64>> {
    if n_points == 0 || !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(Error::InvalidInput(
            "grid needs at least one point and a ratio in (0, 1)".into(),
        ));
    }
    let top = lambda_max(x, y);
    if !(top > 0.0) {
        return Ok(vec![1.0]);
    }
    if n_points == 1 {
        return Ok(vec![top]);
    }
    let step = min_ratio.ln() / (n_points - 1) as f64;
    Ok((0..n_points).map(|i| top * (step * i as f64).exp()).collect())
}

/// How out-of-fold error is scored for each λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvRule {
    /// Error of the penalized fit itself.
    Penalized,
    /// Error of a least-squares refit on the fold's nonzero support.
    Refit,
    /// Largest λ within one standard error of the penalized minimum.
    OneSe,
    /// Refit scoring with the one-standard-error choice.
    #[default]
    RefitOneSe,
}

impl CvRule {
    fn refits(self) -> bool {
        matches!(self, CvRule::Refit | CvRule::RefitOneSe)
    }

    fn one_se(self) -> bool {
        matches!(self, CvRule::OneSe | CvRule::RefitOneSe)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean_error: f64,
    /// Nonzero coefficients of the full-sample fit at this λ.
    pub nonzero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvSelection {
    pub lambda: f64,
    pub curve: Vec<CvPoint>,
    /// Grid positions where the nonzero count rose as λ grew.
    pub monotonicity_breaks: Vec<usize>,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty λ grid".into()));
    }
    if grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput("λ grid values must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("λ grid must be strictly descending".into()));
    }
    Ok(())
}

/// Least-squares coefficients on the columns in `support` (intercept
/// handled by the caller's centering). Collinear columns get 0.
fn refit_ols(x: &Design, y_centered: &[f64], support: &[usize]) -> Vec<(usize, f64)> {
    if support.is_empty() {
        return Vec::new();
    }
    let n = x.n_rows();
    let m = DMatrix::from_fn(n, support.len(), |i, k| x.column(support[k])[i]);
    let v = DVector::from_column_slice(y_centered);
    let beta = m
        .svd(true, true)
        .solve(&v, 1e-10)
        .map(|b| b.iter().copied().collect::<Vec<_>>())
        .unwrap_or_else(|_| vec![0.0; support.len()]);
    support.iter().copied().zip(beta).collect()
}

/// Out-of-fold squared error of every grid λ for one held-out fold. The
/// training rows are restandardized and λ is scaled by `n_train / n` so the
/// penalty keeps its weight relative to the summed loss.
fn fold_errors(x: &Design, y: &[f64], grid: &[f64], held_out: &[usize], rule: CvRule) -> Result<Vec<f64>> {
    let n = x.n_rows();
    let mut is_test = vec![false; n];
    held_out.iter().for_each(|&i| is_test[i] = true);
    let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
    if train.len() < 2 || held_out.is_empty() {
        return Err(Error::Fold(format!(
            "fold has {} training and {} validation rows",
            train.len(),
            held_out.len()
        )));
    }
    let mut xt = x.take_rows(&train);
    let stats = xt.standardize();
    let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let my = mean(&yt);
    let yc: Vec<f64> = yt.iter().map(|v| v - my).collect();
    let scale = train.len() as f64 / n as f64;
    let validation: Vec<Vec<f64>> = held_out
        .iter()
        .map(|&i| {
            stats
                .iter()
                .enumerate()
                .map(|(j, &(m, sd))| if sd == 0.0 { 0.0 } else { (x.column(j)[i] - m) / sd })
                .collect()
        })
        .collect();
    let sse = |coefs: &[(usize, f64)]| -> f64 {
        held_out
            .iter()
            .zip(&validation)
            .map(|(&i, row)| {
                let e = y[i] - my - coefs.iter().map(|&(j, b)| row[j] * b).sum::<f64>();
                e * e
            })
            .sum()
    };
    let mut warm: Option<Vec<f64>> = None;
    let mut last: Option<(Vec<usize>, f64)> = None;
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let fit = fit_lasso_from(&xt, &yc, lambda * scale, warm.as_deref())?;
        let support: Vec<usize> = (0..fit.beta.len())
            .filter(|&j| fit.beta[j].abs() >= ZERO_COEF)
            .collect();
        let err = if rule.refits() {
            match &last {
                Some((prev, e)) if *prev == support => *e,
                _ => {
                    let e = sse(&refit_ols(&xt, &yc, &support));
                    last = Some((support, e));
                    e
                }
            }
        } else {
            let coefs: Vec<(usize, f64)> = support.iter().map(|&j| (j, fit.beta[j])).collect();
            sse(&coefs)
        };
        out.push(err);
        warm = Some(fit.beta);
    }
    Ok(out)
}

/// Cross-validates the grid over explicit folds (lists of held-out rows).
pub fn select_lambda_with_folds(
    x: &Design,
    y: &[f64],
    grid: &[f64],
    folds: &[Vec<usize>],
    rule: CvRule,
) -> Result<CvSelection> {
    validate_grid(grid)?;
    if folds.len() < 2 {
        return Err(Error::Fold("need at least two folds".into()));
    }
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|f| fold_errors(x, y, grid, f, rule))
        .collect::<Result<_>>()?;
    let total_rows: usize = folds.iter().map(Vec::len).sum();

    let mut warm: Option<Vec<f64>> = None;
    let mut curve = Vec::with_capacity(grid.len());
    for (g, &lambda) in grid.iter().enumerate() {
        let full = fit_lasso_from(x, y, lambda, warm.as_deref())?;
        let sse: f64 = per_fold.iter().map(|e| e[g]).sum();
        curve.push(CvPoint {
            lambda,
            mean_error: sse / total_rows as f64,
            nonzero: full.nonzero(),
        });
        warm = Some(full.beta);
    }
    let mut best = 0;
    for (g, pt) in curve.iter().enumerate() {
        // strict improvement only: on ties the earlier, larger λ stays
        if pt.mean_error < curve[best].mean_error * (1.0 - 1e-12) {
            best = g;
        }
    }
    if rule.one_se() {
        let fold_means: Vec<f64> = per_fold
            .iter()
            .zip(folds)
            .map(|(e, f)| e[best] / f.len() as f64)
            .collect();
        let se = sample_std(&fold_means) / (folds.len() as f64).sqrt();
        let limit = curve[best].mean_error + se;
        best = curve.iter().position(|c| c.mean_error <= limit).unwrap_or(best);
    }
    // grid descends, so the nonzero count should never shrink along it
    let monotonicity_breaks = (1..curve.len())
        .filter(|&g| curve[g].nonzero < curve[g - 1].nonzero)
        .collect();
    Ok(CvSelection {
        lambda: curve[best].lambda,
        curve,
        monotonicity_breaks,
    })
}

/// K-fold cross-validation over a seeded row shuffle; the grid must be
/// strictly descending.
pub fn select_lambda(
    x: &Design,
    y: &[f64],
    grid: &[f64],
    k_folds: usize,
    seed: u64,
    rule: CvRule,
) -> Result<CvSelection> {
    validate_grid(grid)?;
    if k_folds < 2 || x.n_rows() < k_folds {
        return Err(Error::Fold(format!(
            "{} rows cannot form {k_folds} non-empty folds",
            x.n_rows()
        )));
    }
    if grid.len() == 1 {
        return Ok(CvSelection {
            lambda: grid[0],
            curve: Vec::new(),
            monotonicity_breaks: Vec::new(),
        });
    }
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds: Vec<Vec<usize>> = (0..k_folds)
        .map(|k| order.iter().copied().skip(k).step_by(k_folds).collect())
        .collect();
    select_lambda_with_folds(x, y, grid, &folds, rule)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenConfig {
    pub k_folds: usize,
    pub cv_rule: CvRule,
    pub grid_points: usize,
    pub min_ratio: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            k_folds: 5,
            cv_rule: CvRule::default(),
            grid_points: 30,
            min_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenResult {
    pub kept: Vec<String>,
    pub excluded: Vec<String>,
    pub lambda_selected: f64,
    pub cv_curve: Vec<(f64, f64)>,
    pub coefficients: Vec<(String, f64)>,
    pub monotonicity_breaks: Vec<usize>,
}

/// Pools every eligible (month, stock) row with complete factors, regresses
/// next-month returns on the standardized factors, and drops factors whose
/// coefficient at the cross-validated λ is zero. Folds are contiguous month
/// blocks.
pub fn screen_factors(panel: &FactorPanel, cfg: &ScreenConfig) -> Result<ScreenResult> {
    let p = panel.n_factors();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut month_of_row = Vec::new();
    for m in 0..panel.n_months() {
        for s in universe_at(panel, m).indices() {
            let row: Option<Vec<f64>> = (0..p).map(|f| panel.value(m, s, f)).collect();
            let r = panel.next_return(m, s);
            if let Some(row) = row {
                if r.is_finite() {
                    rows.push(row);
                    y.push(r);
                    month_of_row.push(m);
                }
            }
        }
    }
    let months_used: Vec<usize> = {
        let mut v = month_of_row.clone();
        v.dedup();
        v
    };
    if months_used.len() < cfg.k_folds || cfg.k_folds < 2 {
        return Err(Error::Fold(format!(
            "{} months cannot form {} contiguous folds",
            months_used.len(),
            cfg.k_folds
        )));
    }
    let mut x = Design::from_rows(&rows)?;
    x.standardize();
    let my = mean(&y);
    let yc: Vec<f64> = y.iter().map(|v| v - my).collect();

    // contiguous blocks of months
    let k = cfg.k_folds;
    let block_of = |m: usize| -> usize {
        let pos = months_used.binary_search(&m).expect("month present");
        pos * k / months_used.len()
    };
    let mut folds = vec![Vec::new(); k];
    for (i, &m) in month_of_row.iter().enumerate() {
        folds[block_of(m)].push(i);
    }
    let grid = lambda_grid(&x, &yc, cfg.grid_points, cfg.min_ratio)?;
    let sel = if grid.len() == 1 {
        CvSelection {
            lambda: grid[0],
            curve: Vec::new(),
            monotonicity_breaks: Vec::new(),
        }
    } else {
        select_lambda_with_folds(&x, &yc, &grid, &folds, cfg.cv_rule)?
    };
    let fit = fit_lasso(&x, &yc, sel.lambda)?;
    let names = panel.factor_names();
    let (mut kept, mut excluded) = (Vec::new(), Vec::new());
    for (name, b) in names.iter().zip(&fit.beta) {
        if b.abs() < ZERO_COEF {
            excluded.push(name.clone());
        } else {
            kept.push(name.clone());
        }
    }
    Ok(ScreenResult {
        kept,
        excluded,
        lambda_selected: sel.lambda,
        cv_curve: sel.curve.iter().map(|c| (c.lambda, c.mean_error)).collect(),
        coefficients: names.iter().cloned().zip(fit.beta).collect(),
        monotonicity_breaks: sel.monotonicity_breaks,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn random_standardized(n: usize, p: usize, seed: u64) -> (Design, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = (0..p)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut x = Design::from_columns(cols).unwrap();
        x.standardize();
        (x, rng)
    }

    fn ols(x: &Design, y: &[f64]) -> Vec<f64> {
        let n = x.n_rows();
        let m = DMatrix::from_fn(n, x.n_cols(), |i, j| x.column(j)[i]);
        let my = mean(y);
        let v = DVector::from_iterator(n, y.iter().map(|t| t - my));
        let sol = m.svd(true, true).solve(&v, 1e-14).unwrap();
        sol.iter().copied().collect()
    }

    #[test]
    fn orthonormal_soft_threshold() {
        // columns are scaled unit vectors, centered so they stay standardized
        let raw = Design::from_columns(vec![vec![1.0, -1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, -1.0]]).unwrap();
        let mut x = raw.clone();
        x.standardize();
        let sxx: f64 = x.column(0).iter().map(|v| v * v).sum();
        // y = 3/√sxx · x0 gives OLS coefficient b = 3/√sxx on the unnormalized scale
        let y: Vec<f64> = (0..4).map(|i| 3.0 * x.column(0)[i] + 0.5 * x.column(1)[i]).collect();
        for lambda in [0.0, 0.7, 2.0, 5.0] {
            let fit = fit_lasso(&x, &y, lambda).unwrap();
            for (j, b) in [3.0, 0.5].iter().enumerate() {
                let expect = soft_threshold(*b, lambda / (2.0 * sxx));
                assert!((fit.beta[j] - expect).abs() < 1e-8, "λ {lambda} col {j}");
            }
        }
    }

    #[test]
    fn unit_norm_example() {
        // Σx² = 1, b = 3, λ = 2 → β = 2 (checked on the coordinate update itself)
        assert_eq!(soft_threshold(3.0, 2.0 / 2.0) / 1.0, 2.0);
    }

    #[test]
    fn lambda_zero_matches_least_squares() {
        for seed in 0..10 {
            let (x, mut rng) = random_standardized(200, 10, seed);
            let y: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let fit = fit_lasso(&x, &y, 0.0).unwrap();
            let oracle = ols(&x, &y);
            for (a, b) in fit.beta.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn huge_lambda_zeroes_everything() {
        let (x, mut rng) = random_standardized(50, 5, 3);
        let y: Vec<f64> = (0..50).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = fit_lasso(&x, &y, lambda_max(&x, &y) * 1.0001).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        assert!(fit.converged);
    }

    #[test]
    fn kkt_holds_on_random_instances() {
        for seed in 0..20 {
            let (x, mut rng) = random_standardized(200, 20, 100 + seed);
            let y: Vec<f64> = (0..200)
                .map(|i| x.column(0)[i] - 0.5 * x.column(3)[i] + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let lambda = lambda_max(&x, &y) * rng.random_range(0.01..0.9);
            let fit = fit_lasso(&x, &y, lambda).unwrap();
            assert!(fit.converged);
            assert!(kkt_violation(&x, &y, &fit) <= 1e-4);
        }
    }

    #[test]
    fn rejects_unstandardized() {
        let x = Design::from_columns(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            fit_lasso(&x, &[0.0, 1.0, 2.0], 1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn single_point_grid() {
        let (x, _) = random_standardized(20, 3, 1);
        let sel = select_lambda(&x, &[0.5; 20], &[0.3], 5, 0, CvRule::RefitOneSe).unwrap();
        assert_eq!(sel.lambda, 0.3);
        assert!(select_lambda(&x, &[0.5; 20], &[0.3, 0.5], 5, 0, CvRule::RefitOneSe).is_err());
        assert!(matches!(
            select_lambda(&x, &[0.5; 20], &[0.3], 30, 0, CvRule::RefitOneSe),
            Err(Error::Fold(_))
        ));
    }

    #[test]
    fn duplicate_column_keeps_at_most_one() {
        let (base, mut rng) = random_standardized(300, 4, 8);
        let mut cols: Vec<Vec<f64>> = (0..4).map(|j| base.column(j).to_vec()).collect();
        cols.push(cols[0].clone());
        let x = Design::from_columns(cols).unwrap();
        let y: Vec<f64> = (0..300)
            .map(|i| 0.8 * x.column(0)[i] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let grid = lambda_grid(&x, &y, 20, 1e-3).unwrap();
        let sel = select_lambda(&x, &y, &grid, 5, 1, CvRule::RefitOneSe).unwrap();
        let fit = fit_lasso(&x, &y, sel.lambda).unwrap();
        let both = fit.beta[0].abs() >= ZERO_COEF && fit.beta[4].abs() >= ZERO_COEF;
        assert!(!both, "{:?}", fit.beta);
    }
    fn planted(n: usize, seed: u64, signal: bool) -> (Design, Vec<f64>) {
        let (x, mut rng) = random_standardized(n, 20, 1000 + seed);
        let y = (0..n)
            .map(|i| {
                let s = if signal {
                    x.column(2)[i] + x.column(7)[i] + x.column(13)[i]
                } else {
                    0.0
                };
                s + 0.5 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        (x, y)
    }

    #[test]
    fn planted_support_recovered() {
        let mut hits = 0;
        for seed in 0..50 {
            let (x, y) = planted(200, seed, true);
            let grid = lambda_grid(&x, &y, 30, 1e-3).unwrap();
            let sel = select_lambda(&x, &y, &grid, 5, seed, CvRule::default()).unwrap();
            let fit = fit_lasso(&x, &y, sel.lambda).unwrap();
            let support: Vec<usize> = (0..20).filter(|&j| fit.beta[j].abs() >= ZERO_COEF).collect();
            hits += usize::from(support == [2, 7, 13]);
        }
        assert!(hits >= 45, "{hits}/50");
    }

    #[test]
    fn pure_noise_prefers_largest_lambda() {
        let mut top = 0;
        for seed in 0..30 {
            let (x, y) = planted(200, seed, false);
            let grid = lambda_grid(&x, &y, 30, 1e-3).unwrap();
            let sel = select_lambda(&x, &y, &grid, 5, seed, CvRule::default()).unwrap();
            top += usize::from(sel.lambda == grid[0]);
        }
        assert!(top > 15, "{top}/30");
    }

    #[test]
    fn screen_panel_keeps_signal() {
        use crate::panel::{generate_synthetic_panel, SyntheticSpec};
        let spec = SyntheticSpec {
            n_stocks: 80,
            n_months: 24,
            n_factors: 6,
            coefficients: vec![0.05, 0.0, 0.04, 0.0, 0.0, 0.0],
            noise_scale: 0.03,
            ..Default::default()
        };
        let panel = generate_synthetic_panel(&spec, 3).unwrap();
        let res = screen_factors(&panel, &ScreenConfig::default()).unwrap();
        assert!(res.kept.contains(&"f01".to_string()) && res.kept.contains(&"f03".to_string()));
        assert_eq!(res.kept.len() + res.excluded.len(), 6);
        assert!(res.kept.iter().all(|k| !res.excluded.contains(k)));
    }
}
