//! Text renderings of results: delimited tables, plot data and an SVG
//! equity chart.

use std::fmt::Write;

use ensemble_alpha::backtest::{BacktestReport, EquityCurve, MatrixResult, MatrixRow, MetricSummary, StrategyRun};
use ensemble_alpha::ensemble::SchemeId;
use ensemble_alpha::factors::Synthesis;
use ensemble_alpha::metrics::{cumulative_ic, MonthMetrics};
use ensemble_alpha::panel::FactorPanel;

pub const REPORT_COLUMNS: [&str; 8] = [
    "Strategy Return",
    "Annualized Return",
    "Annualized Volatility",
    "Excess Return",
    "Sharpe",
    "Beta",
    "Alpha",
    "Maximum Drawdown",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn report_cells(r: &BacktestReport) -> [String; 8] {
    [
        r.strategy_return.to_string(),
        r.annualized_return.to_string(),
        r.annualized_volatility.to_string(),
        r.excess_return.to_string(),
        opt(r.sharpe),
        r.beta.to_string(),
        r.alpha.to_string(),
        r.max_drawdown.to_string(),
    ]
}

/// One row per strategy plus the benchmark, in the column order of the
/// summary table.
pub fn report_table(first_header: &str, rows: &[MatrixRow]) -> String {
    let mut out = format!("{first_header},{}\n", REPORT_COLUMNS.join(","));
    for row in rows {
        writeln!(out, "{},{}", row.name, report_cells(&row.report).join(",")).unwrap();
    }
    out
}

/// Metrics as rows, schemes as columns.
pub fn scheme_metric_table(metrics: &[(SchemeId, MetricSummary)]) -> String {
    let mut out = String::from("Metric");
    for (s, _) in metrics {
        write!(out, ",{s}").unwrap();
    }
    out.push('\n');
    type Cell = fn(&MetricSummary) -> Option<f64>;
    let lines: [(&str, Cell); 6] = [
        ("RMSE", |m| Some(m.rmse)),
        ("MAPE", |m| Some(m.mape)),
        ("Precision", |m| Some(m.precision)),
        ("Recall", |m| Some(m.recall)),
        ("F1", |m| Some(m.f1)),
        ("IC", |m| m.ic),
    ];
    for (name, get) in lines {
        out.push_str(name);
        for (_, m) in metrics {
            write!(out, ",{}", opt(get(m))).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn equity_csv(curve: &EquityCurve) -> String {
    let mut out = String::from("month,gross,net,benchmark,wealth,turnover\n");
    for i in 0..curve.len() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            curve.months[i], curve.gross[i], curve.net[i], curve.benchmark[i], curve.wealth[i], curve.turnover[i]
        )
        .unwrap();
    }
    out
}

pub fn holdings_csv(curve: &EquityCurve) -> String {
    let mut out = String::from("month,ticker\n");
    for (m, held) in curve.months.iter().zip(&curve.holdings) {
        for s in held {
            writeln!(out, "{m},{s}").unwrap();
        }
    }
    out
}

/// Ensemble weights and their unnormalized scores per month and model.
pub fn weights_csv(run: &StrategyRun, models: &[String]) -> String {
    let mut out = String::from("month,model,weight,score,flag\n");
    for rec in &run.weights {
        let flag = serde_json::to_value(rec.flag)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        for (k, model) in models.iter().enumerate() {
            let score = rec.scores.as_ref().map(|s| s[k]);
            writeln!(out, "{},{model},{},{},{flag}", rec.month, rec.weights[k], opt(score)).unwrap();
        }
    }
    out
}

pub fn ic_csv(m: &MatrixResult) -> String {
    let mut out = String::from("month,model,ic,cumulative_ic\n");
    for (k, model) in m.ic.models.iter().enumerate() {
        let cum = cumulative_ic(&m.ic.ic[k]);
        for (i, month) in m.benchmark.months.iter().enumerate() {
            writeln!(out, "{month},{model},{},{}", m.ic.ic[k][i], cum[i]).unwrap();
        }
    }
    out
}

fn metrics_line(out: &mut String, month: impl std::fmt::Display, model: &str, x: &MonthMetrics) {
    writeln!(
        out,
        "{month},{model},{},{},{},{},{},{}",
        x.rmse,
        x.mape,
        x.precision,
        x.recall,
        x.f1,
        opt(x.ic)
    )
    .unwrap();
}

/// Evaluation series of every single model and of every traded ensemble.
pub fn metrics_csv(m: &MatrixResult) -> String {
    let mut out = String::from("month,model,rmse,mape,precision,recall,f1,ic\n");
    for (k, model) in m.models.iter().enumerate() {
        for (i, x) in m.model_metrics[k].iter().enumerate() {
            metrics_line(&mut out, m.benchmark.months[i], model, x);
        }
    }
    for run in m.runs.iter().filter(|r| !r.weights.is_empty()) {
        for (i, x) in run.metrics.iter().enumerate() {
            metrics_line(&mut out, run.curve.months[i], &run.name, x);
        }
    }
    out
}

pub fn predictions_csv(m: &MatrixResult, panel: &FactorPanel) -> String {
    let mut out = String::from("month,ticker,model,prediction,realized\n");
    for f in &m.forecasts {
        let month = panel.months()[f.month];
        for (j, &s) in f.stocks.iter().enumerate() {
            for (k, model) in m.models.iter().enumerate() {
                writeln!(
                    out,
                    "{month},{},{model},{},{}",
                    panel.stocks()[s],
                    f.predictions[k][j],
                    f.realized[j]
                )
                .unwrap();
            }
        }
    }
    out
}

/// Member weights of every synthesis vintage.
pub fn entropy_weights_csv(s: &Synthesis) -> String {
    let mut out = String::from("applied_from,window_start,window_end,group,member,weight,entropy\n");
    for v in &s.vintages {
        for (g, (group, members)) in s.hierarchy.groups().iter().enumerate() {
            for (j, member) in members.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{group},{member},{},{}",
                    v.applied_from, v.window_start, v.window_end, v.weights[g][j], v.entropies[g][j]
                )
                .unwrap();
            }
        }
    }
    out
}

const PALETTE: [&str; 11] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#000000",
];

/// Wealth of every run against the benchmark as a static SVG line chart.
pub fn equity_svg(runs: &[StrategyRun], benchmark: &EquityCurve) -> String {
    let (w, h, pad, legend) = (900.0, 460.0, 50.0, 150.0);
    let mut series: Vec<(&str, Vec<f64>)> = runs.iter().map(|r| (r.name.as_str(), r.curve.wealth.clone())).collect();
    series.push(("Benchmark", benchmark.wealth.clone()));
    for s in series.iter_mut() {
        s.1.insert(0, 1.0);
    }
    let all = series.iter().flat_map(|s| s.1.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = series[0].1.len().max(2) - 1;
    let plot_w = w - 2.0 * pad - legend;
    let x = |i: usize| pad + plot_w * i as f64 / n as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / span;

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r##"<path d="M{pad} {pad} V{:.2} H{:.2}" fill="none" stroke="#444"/>"##,
        h - pad,
        pad + plot_w
    )
    .unwrap();
    for (v, label) in [(lo, lo), (hi, hi)] {
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end" font-family="sans-serif">{label:.2}</text>"#,
            pad - 4.0,
            y(v) + 4.0
        )
        .unwrap();
    }
    if let (Some(first), Some(last)) = (benchmark.months.first(), benchmark.months.last()) {
        for (xi, label, anchor) in [(x(0), first, "start"), (x(n), last, "end")] {
            writeln!(
                out,
                r#"<text x="{xi:.2}" y="{:.2}" font-size="11" text-anchor="{anchor}" font-family="sans-serif">{label}</text>"#,
                h - pad + 16.0
            )
            .unwrap();
        }
    }
    for (k, (name, wealth)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = wealth
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect();
        let dash = if *name == "Benchmark" {
            r#" stroke-dasharray="6 3""#
        } else {
            ""
        };
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = pad + 16.0 * k as f64;
        let lx = w - legend - pad / 2.0 + 10.0;
        writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"{dash}/>"#,
            lx + 18.0
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" font-family="sans-serif">{name}</text>"#,
            lx + 24.0,
            ly + 4.0
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_table_shape() {
        let m = MetricSummary {
            rmse: 0.1,
            mape: 2.0,
            precision: 0.5,
            recall: 0.25,
            f1: 0.3,
            ic: None,
        };
        let t = scheme_metric_table(&[(SchemeId::Rmse, m), (SchemeId::IcMean, m)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "Metric,RMSE,IC_Mean");
        assert_eq!(lines[1], "RMSE,0.1,0.1");
        assert_eq!(lines[6], "IC,,");
    }
}
