//! Walk-forward backtest: rolling training, per-month forecasts, ensemble
//! weighting, top-N portfolios, transaction costs and performance reports.

mod access;
mod pipeline;
mod portfolio;
mod report;
mod source;

pub use access::{AccessKind, AccessLog, AsOf, Violation};
pub use pipeline::{
    run_pipeline, FeatureSource, GroupSpec, HierarchySpec, PipelineConfig, PipelineResult, ScreenLevel,
};
pub use portfolio::{apply_costs, form_portfolio, turnover, CostMode, Holdings};
pub use report::{max_drawdown, performance_report, BacktestReport};
pub use source::{pearson_for_rank, planted_forecast, PredictionSource};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{combine, scheme_scores, scheme_weights, EnsembleConfig, SchemeId, WeightFlag, WeightVector};
use crate::error::{Error, Result};
use crate::metrics::{IcSeries, MonthMetrics};
use crate::panel::{universe_at, FactorPanel, MonthIndex, StockId};
use crate::predictors::{train, Features, ModelKind, TrainConfig};
use crate::stats::{mean, sample_std};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub train_window: usize,
    /// Months each trained model is used for before retraining.
    pub test_window: usize,
    pub cost_rate: f64,
    pub cost_mode: CostMode,
    pub top_n: usize,
    pub seed: u64,
    pub periods_per_year: usize,
    pub ensemble: EnsembleConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            train_window: 12,
            test_window: 1,
            cost_rate: 0.003,
            cost_mode: CostMode::Total,
            top_n: 30,
            seed: 0,
            periods_per_year: 12,
            ensemble: EnsembleConfig::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_window == 0 || self.test_window == 0 {
            return Err(Error::InvalidInput("train and test windows must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.cost_rate) {
            return Err(Error::InvalidInput(format!(
                "cost rate {} outside [0, 1)",
                self.cost_rate
            )));
        }
        if self.top_n == 0 || self.periods_per_year == 0 {
            return Err(Error::InvalidInput("top_n and periods_per_year must be ≥ 1".into()));
        }
        self.ensemble.validate()
    }
}

/// One row of a backtest matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Model at this position of the prediction source.
    Single(usize),
    Combined(SchemeId),
}

/// A strategy named as on the command line: a model name or a scheme name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrategyName {
    Model(String),
    Scheme(SchemeId),
}

impl FromStr for StrategyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(scheme) = s.parse::<SchemeId>() {
            return Ok(StrategyName::Scheme(scheme));
        }
        let t = s.trim();
        if t.is_empty() {
            return Err(Error::InvalidInput("empty strategy name".into()));
        }
        Ok(ModelKind::ALL
            .iter()
            .find(|k| k.name().eq_ignore_ascii_case(t))
            .map_or_else(
                || StrategyName::Model(t.to_string()),
                |k| StrategyName::Model(k.name().into()),
            ))
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyName::Model(m) => f.write_str(m),
            StrategyName::Scheme(s) => write!(f, "{s}"),
        }
    }
}

/// Every single model followed by every scheme.
pub fn all_strategies(n_models: usize) -> Vec<Strategy> {
    (0..n_models)
        .map(Strategy::Single)
        .chain(SchemeId::ALL.iter().map(|s| Strategy::Combined(*s)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquityCurve {
    pub months: Vec<MonthIndex>,
    pub gross: Vec<f64>,
    pub net: Vec<f64>,
    pub benchmark: Vec<f64>,
    /// Wealth after each month, from a basis of 1.
    pub wealth: Vec<f64>,
    pub turnover: Vec<f64>,
    pub holdings: Vec<Vec<StockId>>,
}

impl EquityCurve {
    pub fn from_returns(
        months: Vec<MonthIndex>,
        gross: Vec<f64>,
        net: Vec<f64>,
        benchmark: Vec<f64>,
        turnover: Vec<f64>,
        holdings: Vec<Vec<StockId>>,
    ) -> Self {
        let wealth = net
            .iter()
            .scan(1.0, |w, r| {
                *w *= 1.0 + r;
                Some(*w)
            })
            .collect();
        Self {
            months,
            gross,
            net,
            benchmark,
            wealth,
            turnover,
            holdings,
        }
    }

    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }
}

/// Forecasts of every model for one test month.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthForecast {
    /// Panel position of the decision month.
    pub month: usize,
    /// Eligible stocks, ascending.
    pub stocks: Vec<usize>,
    /// `predictions[k]` aligned with `stocks`.
    pub predictions: Vec<Vec<f64>>,
    pub realized: Vec<f64>,
    pub metrics: Vec<MonthMetrics>,
}

/// Forecasts shared by every strategy of a run.
#[derive(Debug)]
pub struct ForecastCache {
    pub models: Vec<String>,
    pub months: Vec<MonthForecast>,
    pub log: AccessLog,
}

impl ForecastCache {
    pub fn ic_series(&self) -> IcSeries {
        IcSeries {
            models: self.models.clone(),
            ic: (0..self.models.len())
                .map(|k| self.months.iter().map(|m| m.metrics[k].ic.unwrap_or(0.0)).collect())
                .collect(),
        }
    }
}

/// Columns standardized over the rows; constant columns become 0.
fn standardize_columns(rows: &mut [Vec<f64>]) {
    let Some(p) = rows.first().map(Vec::len) else { return };
    for j in 0..p {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let (mu, sd) = (mean(&col), sample_std(&col));
        for r in rows.iter_mut() {
            r[j] = if sd > 0.0 && sd.is_finite() {
                (r[j] - mu) / sd
            } else {
                0.0
            };
        }
    }
}

/// Eligible stocks with complete features at `m`, and their standardized
/// feature rows.
fn cross_section(view: &AsOf<'_>, m: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let p = view.features.n_factors();
    let mut stocks = Vec::new();
    let mut rows = Vec::new();
    for s in universe_at(view.panel, m).indices() {
        let row: Option<Vec<f64>> = (0..p).map(|f| view.feature(m, s, f)).collect();
        if let Some(row) = row {
            stocks.push(s);
            rows.push(row);
        }
    }
    standardize_columns(&mut rows);
    (stocks, rows)
}

fn training_set(view: &AsOf<'_>, first: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for m in first..view.t {
        let (stocks, rows) = cross_section(view, m);
        for (s, row) in stocks.into_iter().zip(rows) {
            let r = view.next_return(m, s);
            if r.is_finite() {
                x.push(row);
                y.push(r);
            }
        }
    }
    (x, y)
}

fn check_shapes(panel: &FactorPanel, features: &FactorPanel) -> Result<()> {
    if panel.months() != features.months() || panel.stocks() != features.stocks() {
        return Err(Error::Alignment("feature panel does not match the return panel".into()));
    }
    if features.n_factors() == 0 {
        return Err(Error::InvalidInput("no features".into()));
    }
    Ok(())
}

/// Test-month positions: every month with a full training window behind it.
pub fn test_months(n_months: usize, cfg: &BacktestConfig) -> Vec<usize> {
    (cfg.train_window..n_months).collect()
}

/// Trains (or plants) every model and forecasts every test month. Months
/// run in parallel; the result does not depend on the thread count.
pub fn forecast_all(
    panel: &FactorPanel,
    features: &FactorPanel,
    source: &PredictionSource,
    cfg: &BacktestConfig,
) -> Result<ForecastCache> {
    cfg.validate()?;
    check_shapes(panel, features)?;
    if let PredictionSource::Trained(tc) = source {
        tc.validate()?;
    }
    let months = test_months(panel.n_months(), cfg);
    if months.is_empty() {
        return Err(Error::InsufficientHistory {
            required: cfg.train_window + 1,
            available: panel.n_months(),
        });
    }
    let log = AccessLog::new();
    // retraining dates: the first test month and every test_window months after
    let fits: Vec<usize> = months.iter().copied().step_by(cfg.test_window).collect();
    let per_fit: Vec<Vec<MonthForecast>> = fits
        .par_iter()
        .map(|&t0| {
            let until = (t0 + cfg.test_window).min(panel.n_months());
            forecast_block(panel, features, source, cfg, t0, until, &log)
        })
        .collect::<Result<_>>()?;
    Ok(ForecastCache {
        models: source.model_names(),
        months: per_fit.into_iter().flatten().collect(),
        log,
    })
}

fn forecast_block(
    panel: &FactorPanel,
    features: &FactorPanel,
    source: &PredictionSource,
    cfg: &BacktestConfig,
    t0: usize,
    until: usize,
    log: &AccessLog,
) -> Result<Vec<MonthForecast>> {
    let fit_view = AsOf::new(panel, features, t0, log);
    let models = match source {
        PredictionSource::Trained(tc) => Some(fit_models(&fit_view, tc, cfg, t0)?),
        _ => None,
    };
    (t0..until)
        .map(|t| {
            let view = AsOf::new(panel, features, t, log);
            let (stocks, rows) = cross_section(&view, t);
            if stocks.is_empty() {
                return Err(Error::Precondition(format!(
                    "no eligible stock in {}",
                    panel.months()[t]
                )));
            }
            let predictions: Vec<Vec<f64>> = match source {
                PredictionSource::Trained(_) => {
                    let x = Features::new(features.factor_names().to_vec(), rows)?;
                    models
                        .as_ref()
                        .expect("trained source has models")
                        .iter()
                        .map(|m| m.predict(&x))
                        .collect::<Result<_>>()?
                }
                PredictionSource::Planted { rank_corr } => {
                    let realized: Vec<f64> = stocks.iter().map(|&s| view.next_return(t, s)).collect();
                    rank_corr
                        .iter()
                        .enumerate()
                        .map(|(k, &rho)| {
                            let mut rng = source::planted_rng(cfg.seed, k, panel.months()[t].ordinal());
                            planted_forecast(&realized, rho, &mut rng)
                        })
                        .collect()
                }
                PredictionSource::Oracle => {
                    vec![stocks.iter().map(|&s| view.next_return(t, s)).collect()]
                }
            };
            // realized after the decision; read outside the point-in-time view
            let realized: Vec<f64> = stocks.iter().map(|&s| panel.next_return(t, s)).collect();
            let metrics = predictions
                .iter()
                .map(|p| MonthMetrics::evaluate(p, &realized))
                .collect::<Result<_>>()?;
            Ok(MonthForecast {
                month: t,
                stocks,
                predictions,
                realized,
                metrics,
            })
        })
        .collect()
}

fn fit_models(
    view: &AsOf<'_>,
    tc: &TrainConfig,
    cfg: &BacktestConfig,
    t: usize,
) -> Result<Vec<crate::predictors::TrainedModel>> {
    let first = t - cfg.train_window;
    let (x, y) = training_set(view, first);
    if y.is_empty() {
        return Err(Error::InsufficientHistory {
            required: 1,
            available: 0,
        });
    }
    let x = Features::new(view.features.factor_names().to_vec(), x)?;
    let months = view.panel.months();
    let seeded = tc.seeded_for(cfg.seed, months[t]);
    ModelKind::ALL
        .iter()
        .map(|&k| Ok(train(k, &x, &y, &seeded)?.with_window(months[first], months[t - 1])))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRecord {
    pub month: MonthIndex,
    pub weights: Vec<f64>,
    pub flag: WeightFlag,
    /// Scores before normalization; `None` during warm-up.
    pub scores: Option<Vec<f64>>,
}

/// Mean evaluation metrics of a forecast series; IC over the months where
/// it is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub rmse: f64,
    pub mape: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ic: Option<f64>,
}

impl MetricSummary {
    pub fn of(months: &[MonthMetrics]) -> Self {
        let col = |f: fn(&MonthMetrics) -> f64| mean(&months.iter().map(f).collect::<Vec<_>>());
        let ics: Vec<f64> = months.iter().filter_map(|m| m.ic).collect();
        Self {
            rmse: col(|m| m.rmse),
            mape: col(|m| m.mape),
            precision: col(|m| m.precision),
            recall: col(|m| m.recall),
            f1: col(|m| m.f1),
            ic: (!ics.is_empty()).then(|| mean(&ics)),
        }
    }
}

/// Everything produced by one strategy over the test months.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRun {
    pub name: String,
    pub curve: EquityCurve,
    /// Ensemble weights per month; empty for single models.
    pub weights: Vec<WeightRecord>,
    /// Evaluation of the forecast actually traded, per month.
    pub metrics: Vec<MonthMetrics>,
    /// Months holding fewer than `top_n` stocks.
    pub shortfall_months: Vec<MonthIndex>,
}

/// Months run strictly in order: weights at a month see only the
/// evaluation history of earlier months.
pub fn run_strategy(
    panel: &FactorPanel,
    cache: &ForecastCache,
    strategy: Strategy,
    cfg: &BacktestConfig,
) -> Result<StrategyRun> {
    let n_models = cache.models.len();
    let name = match strategy {
        Strategy::Single(k) => cache
            .models
            .get(k)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("no model at position {k}")))?,
        Strategy::Combined(s) => s.name().to_string(),
    };
    let mut history: Vec<Vec<MonthMetrics>> = vec![Vec::new(); n_models];
    let mut previous: Option<Holdings> = None;
    let (mut gross, mut net, mut bench, mut turn, mut held) = (vec![], vec![], vec![], vec![], vec![]);
    let mut weights = Vec::new();
    let mut metrics = Vec::new();
    let mut shortfall_months = Vec::new();
    for (i, mf) in cache.months.iter().enumerate() {
        let month = panel.months()[mf.month];
        let view = AsOf::new(panel, panel, mf.month, &cache.log);
        let forecast = match strategy {
            Strategy::Single(k) => mf.predictions[k].clone(),
            Strategy::Combined(scheme) => {
                for earlier in &cache.months[..i] {
                    view.history(earlier.month);
                }
                let w: WeightVector = scheme_weights(scheme, &history, &cfg.ensemble)?;
                let combined = combine(&mf.predictions, &w)?;
                weights.push(WeightRecord {
                    month,
                    weights: w.w,
                    flag: w.flag,
                    scores: scheme_scores(scheme, &history, &cfg.ensemble)?,
                });
                combined
            }
        };
        let holdings = form_portfolio(&forecast, &mf.stocks, cfg.top_n)?;
        if holdings.shortfall {
            shortfall_months.push(month);
        }
        let g: f64 = holdings
            .positions
            .iter()
            .map(|&(s, w)| w * panel.next_return(mf.month, s))
            .sum();
        let tv = turnover(previous.as_ref(), &holdings);
        gross.push(g);
        net.push(apply_costs(g, tv, cfg.cost_rate, cfg.cost_mode)?);
        bench.push(panel.benchmark_return(mf.month));
        turn.push(tv);
        held.push(
            holdings
                .stocks()
                .into_iter()
                .map(|s| panel.stocks()[s].clone())
                .collect(),
        );
        metrics.push(MonthMetrics::evaluate(&forecast, &mf.realized)?);
        for (h, m) in history.iter_mut().zip(&mf.metrics) {
            h.push(*m);
        }
        previous = Some(holdings);
    }
    let months = cache.months.iter().map(|m| panel.months()[m.month]).collect();
    Ok(StrategyRun {
        name,
        curve: EquityCurve::from_returns(months, gross, net, bench, turn, held),
        weights,
        metrics,
        shortfall_months,
    })
}

/// The benchmark held through the test months of `cache`.
pub fn benchmark_curve(panel: &FactorPanel, cache: &ForecastCache) -> EquityCurve {
    let months: Vec<MonthIndex> = cache.months.iter().map(|m| panel.months()[m.month]).collect();
    let bench: Vec<f64> = cache.months.iter().map(|m| panel.benchmark_return(m.month)).collect();
    let n = bench.len();
    EquityCurve::from_returns(
        months,
        bench.clone(),
        bench.clone(),
        bench,
        vec![0.0; n],
        vec![Vec::new(); n],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixRow {
    pub name: String,
    pub report: BacktestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixResult {
    pub models: Vec<String>,
    /// Strategy rows in request order, then the benchmark row.
    pub rows: Vec<MatrixRow>,
    pub runs: Vec<StrategyRun>,
    pub benchmark: EquityCurve,
    /// Mean evaluation of the combined forecast per scheme.
    pub scheme_metrics: Vec<(SchemeId, MetricSummary)>,
    /// Per-model evaluation series, `model_metrics[k][month]`.
    pub model_metrics: Vec<Vec<MonthMetrics>>,
    pub ic: IcSeries,
    #[serde(skip)]
    pub forecasts: Vec<MonthForecast>,
    pub violations: Vec<Violation>,
}

impl MatrixResult {
    pub fn run(&self, name: &str) -> Option<&StrategyRun> {
        self.runs.iter().find(|r| r.name == name)
    }

    pub fn report(&self, name: &str) -> Option<&BacktestReport> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.report)
    }
}

/// Runs every strategy over one shared forecast cache. Rows run in
/// parallel; each row is sequential in time.
pub fn run_matrix(
    panel: &FactorPanel,
    features: &FactorPanel,
    source: &PredictionSource,
    strategies: &[Strategy],
    cfg: &BacktestConfig,
) -> Result<MatrixResult> {
    if strategies.is_empty() {
        return Err(Error::InvalidInput("no strategy requested".into()));
    }
    let cache = forecast_all(panel, features, source, cfg)?;
    matrix_from_cache(panel, &cache, strategies, cfg)
}

pub fn matrix_from_cache(
    panel: &FactorPanel,
    cache: &ForecastCache,
    strategies: &[Strategy],
    cfg: &BacktestConfig,
) -> Result<MatrixResult> {
    let ppy = cfg.periods_per_year as f64;
    let runs: Vec<StrategyRun> = strategies
        .par_iter()
        .map(|s| run_strategy(panel, cache, *s, cfg))
        .collect::<Result<_>>()?;
    let mut rows: Vec<MatrixRow> = runs
        .iter()
        .map(|r| {
            Ok(MatrixRow {
                name: r.name.clone(),
                report: performance_report(&r.curve, ppy)?,
            })
        })
        .collect::<Result<_>>()?;
    let benchmark = benchmark_curve(panel, cache);
    rows.push(MatrixRow {
        name: "Benchmark".into(),
        report: performance_report(&benchmark, ppy)?,
    });
    let scheme_metrics = strategies
        .iter()
        .zip(&runs)
        .filter_map(|(s, r)| match s {
            Strategy::Combined(id) => Some((*id, MetricSummary::of(&r.metrics))),
            Strategy::Single(_) => None,
        })
        .collect();
    let model_metrics = (0..cache.models.len())
        .map(|k| cache.months.iter().map(|m| m.metrics[k]).collect())
        .collect();
    Ok(MatrixResult {
        models: cache.models.clone(),
        rows,
        runs,
        benchmark,
        scheme_metrics,
        model_metrics,
        ic: cache.ic_series(),
        forecasts: cache.months.clone(),
        violations: cache.log.violations(),
    })
}

/// One strategy end to end: curve, report and the run's diagnostics.
pub fn rolling_run(
    panel: &FactorPanel,
    features: &FactorPanel,
    source: &PredictionSource,
    strategy: Strategy,
    cfg: &BacktestConfig,
) -> Result<(EquityCurve, BacktestReport, StrategyRun)> {
    let cache = forecast_all(panel, features, source, cfg)?;
    let run = run_strategy(panel, &cache, strategy, cfg)?;
    let report = performance_report(&run.curve, cfg.periods_per_year as f64)?;
    Ok((run.curve.clone(), report, run))
}
