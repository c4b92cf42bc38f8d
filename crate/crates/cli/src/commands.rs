use std::collections::BTreeMap;
use std::path::Path;

use ensemble_alpha::backtest::{run_pipeline, MatrixRow, PipelineResult, Strategy, StrategyName};
use ensemble_alpha::ensemble::SchemeId;
use ensemble_alpha::panel::{generate_synthetic_panel, load_panel, write_panel, FactorPanel};
use ensemble_alpha::preprocess::preprocess_panel;
use ensemble_alpha::screening::{screen_factors, ScreenResult};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{OutputTree, MANIFEST};
use crate::render;

fn panel_for(cfg: &RunConfig) -> Result<FactorPanel, CliError> {
    match &cfg.data.panel {
        Some(path) => load_panel(path, &cfg.data.schema).map_err(|e| match e {
            ensemble_alpha::Error::Io(io) => {
                CliError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display())))
            }
            other => other.into(),
        }),
        None => Ok(generate_synthetic_panel(&cfg.synth, cfg.seed)?),
    }
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let panel = generate_synthetic_panel(&cfg.synth, cfg.seed)?;
    let mut buf = Vec::new();
    write_panel(&panel, &mut buf)?;
    let mut tree = OutputTree::new();
    tree.add("panel.csv", buf);
    tree.add_json("synth.json", &json!({ "seed": cfg.seed, "spec": cfg.synth }))?;
    tree.commit(&cfg.output.dir)?;
    let coefs: Vec<String> = cfg
        .synth
        .resolved_factor_names()
        .iter()
        .zip(cfg.synth.coefficients.iter().chain(std::iter::repeat(&0.0)))
        .filter(|(_, c)| **c != 0.0)
        .map(|(n, c)| format!("{n}={c}"))
        .collect();
    println!(
        "seed {}: {} stocks x {} months x {} factors; signal {}; noise {}",
        cfg.seed,
        panel.n_stocks(),
        panel.n_months(),
        panel.n_factors(),
        if coefs.is_empty() {
            "none".into()
        } else {
            coefs.join(" ")
        },
        cfg.synth.noise_scale
    );
    println!("wrote {}", cfg.output.dir.join("panel.csv").display());
    Ok(())
}

fn screen_files(tree: &mut OutputTree, prefix: &str, s: &ScreenResult, fallback: bool) -> Result<(), CliError> {
    tree.add_json(
        &format!("{prefix}screen.json"),
        &json!({
            "kept": s.kept,
            "excluded": s.excluded,
            "lambda": s.lambda_selected,
            "kept_nothing_so_all_used": fallback,
            "monotonicity_breaks": s.monotonicity_breaks,
        }),
    )?;
    let mut curve = String::from("lambda,cv_error\n");
    for (l, e) in &s.cv_curve {
        curve.push_str(&format!("{l},{e}\n"));
    }
    tree.add(format!("{prefix}cv_curve.csv"), curve);
    let mut coefs = String::from("factor,coefficient\n");
    for (n, c) in &s.coefficients {
        coefs.push_str(&format!("{n},{c}\n"));
    }
    tree.add(format!("{prefix}coefficients.csv"), coefs);
    Ok(())
}

pub fn screen(cfg: &RunConfig) -> Result<(), CliError> {
    let panel = panel_for(cfg)?;
    let (clean, _) = preprocess_panel(&panel, &cfg.preprocess)?;
    let result = screen_factors(&clean, &cfg.screening.screen_config())?;
    let mut tree = OutputTree::new();
    screen_files(&mut tree, "", &result, false)?;
    tree.commit(&cfg.output.dir)?;
    println!("lambda {}", result.lambda_selected);
    println!("kept ({}): {}", result.kept.len(), result.kept.join(" "));
    println!("excluded ({}): {}", result.excluded.len(), result.excluded.join(" "));
    Ok(())
}

fn resolve_strategies(cfg: &RunConfig) -> Result<Vec<Strategy>, CliError> {
    let models = cfg.source().model_names();
    let mut out = Vec::new();
    for name in cfg.strategy_names() {
        let s = match name.parse::<StrategyName>()? {
            StrategyName::Scheme(id) => Strategy::Combined(id),
            StrategyName::Model(m) => models
                .iter()
                .position(|x| x.eq_ignore_ascii_case(&m))
                .map(Strategy::Single)
                .ok_or_else(|| CliError::Config(format!("unknown model or scheme `{m}`")))?,
        };
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("scheme list is empty".into()));
    }
    Ok(out)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Serialize)]
struct ReportRow<'a> {
    name: &'a str,
    #[serde(flatten)]
    report: &'a ensemble_alpha::backtest::BacktestReport,
}

fn backtest_tree(cfg: &RunConfig, panel: &FactorPanel, r: &PipelineResult) -> Result<OutputTree, CliError> {
    let m = &r.matrix;
    let mut tree = OutputTree::new();
    let shortfalls: BTreeMap<&str, Vec<String>> = m
        .runs
        .iter()
        .filter(|run| !run.shortfall_months.is_empty())
        .map(|run| {
            (
                run.name.as_str(),
                run.shortfall_months.iter().map(|x| x.to_string()).collect(),
            )
        })
        .collect();
    let scheme_metrics: BTreeMap<&str, _> = m.scheme_metrics.iter().map(|(s, x)| (s.name(), x)).collect();
    tree.add_json(
        "report.json",
        &json!({
            "seed": cfg.seed,
            "test_months": m.benchmark.months.len(),
            "first_test_month": m.benchmark.months.first(),
            "last_test_month": m.benchmark.months.last(),
            "features": r.features.factor_names(),
            "rows": m.rows.iter().map(|x| ReportRow { name: &x.name, report: &x.report }).collect::<Vec<_>>(),
            "scheme_metrics": scheme_metrics,
            "preprocess": r.preprocess,
            "synthesis_flags": r.synthesis.as_ref().map(|s| &s.flags),
            "screening": r.screen.as_ref().map(|s| json!({ "kept": s.kept, "excluded": s.excluded, "lambda": s.lambda_selected })),
            "screen_kept_nothing": r.screen_fallback,
            "shortfall_months": shortfalls,
            "look_ahead_violations": m.violations.len(),
        }),
    )?;
    tree.add("performance.csv", render::report_table("Weighting", &m.rows));
    if !m.scheme_metrics.is_empty() {
        tree.add("forecast_metrics.csv", render::scheme_metric_table(&m.scheme_metrics));
    }
    for run in &m.runs {
        let stem = file_stem(&run.name);
        tree.add(format!("equity/{stem}.csv"), render::equity_csv(&run.curve));
        tree.add(format!("holdings/{stem}.csv"), render::holdings_csv(&run.curve));
        if !run.weights.is_empty() {
            tree.add(format!("weights/{stem}.csv"), render::weights_csv(run, &m.models));
        }
    }
    tree.add("equity/Benchmark.csv", render::equity_csv(&m.benchmark));
    tree.add("ic.csv", render::ic_csv(m));
    tree.add("metrics.csv", render::metrics_csv(m));
    tree.add("predictions.csv", render::predictions_csv(m, panel));
    if let Some(s) = &r.synthesis {
        tree.add("entropy_weights.csv", render::entropy_weights_csv(s));
    }
    if let Some(s) = &r.screen {
        screen_files(&mut tree, "screen/", s, r.screen_fallback)?;
    }
    if cfg.output.svg {
        tree.add("equity.svg", render::equity_svg(&m.runs, &m.benchmark));
    }
    Ok(tree)
}

pub fn backtest(cfg: &RunConfig, compare_screening: bool) -> Result<(), CliError> {
    let panel = panel_for(cfg)?;
    let strategies = resolve_strategies(cfg)?;
    let pipeline = cfg.pipeline();
    let result = run_pipeline(&panel, &pipeline, &strategies)?;
    let mut tree = backtest_tree(cfg, &panel, &result)?;
    if compare_screening {
        let ic_mean = [Strategy::Combined(SchemeId::IcMean)];
        let mut on = pipeline.clone();
        on.screen = true;
        let mut off = pipeline.clone();
        off.screen = false;
        let after = run_pipeline(&panel, &on, &ic_mean)?;
        let before = run_pipeline(&panel, &off, &ic_mean)?;
        let rows = [
            MatrixRow {
                name: "After screening".into(),
                report: after.matrix.rows[0].report.clone(),
            },
            MatrixRow {
                name: "Before screening".into(),
                report: before.matrix.rows[0].report.clone(),
            },
        ];
        tree.add("screening_effect.csv", render::report_table("IC_Mean weighted predictor", &rows));
    }
    tree.commit(&cfg.output.dir)?;
    print_table(&result.matrix.rows);
    if !result.matrix.violations.is_empty() {
        eprintln!(
            "note: {} reads past the decision month (expected for planted or oracle forecasts)",
            result.matrix.violations.len()
        );
    }
    println!(
        "wrote {} files to {}",
        tree.paths().count() + 1,
        cfg.output.dir.display()
    );
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "--".into(), |x| format!("{:.2}%", 100.0 * x))
}

fn print_table(rows: &[MatrixRow]) {
    let short = [
        "Return", "Ann.Ret", "Ann.Vol", "Excess", "Sharpe", "Beta", "Alpha", "MaxDD",
    ];
    print!("{:<12}", "Weighting");
    for h in short {
        print!("{h:>10}");
    }
    println!();
    for row in rows {
        let r = &row.report;
        print!("{:<12}", row.name);
        for v in [
            Some(r.strategy_return),
            Some(r.annualized_return),
            Some(r.annualized_volatility),
            Some(r.excess_return),
            r.sharpe,
            Some(r.beta),
            Some(r.alpha),
            Some(r.max_drawdown),
        ] {
            print!("{:>10}", pct(v));
        }
        println!();
    }
}

/// Checks every manifest digest of an output directory and prints its
/// summary table.
pub fn report(dir: &Path) -> Result<(), CliError> {
    let manifest: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.join(MANIFEST))
            .map_err(|e| CliError::Config(format!("{}: {e}", dir.join(MANIFEST).display())))?,
    )?;
    let files = manifest["files"]
        .as_array()
        .ok_or_else(|| CliError::Integrity("manifest has no file list".into()))?;
    for f in files {
        let path = f["path"].as_str().unwrap_or_default();
        let data = std::fs::read(dir.join(path))?;
        if hex::encode(Sha256::digest(&data)) != f["sha256"].as_str().unwrap_or_default() {
            return Err(CliError::Integrity(format!(
                "{path} does not match its manifest digest"
            )));
        }
    }
    println!("{} files verified", files.len());
    let report_path = dir.join("report.json");
    if !report_path.is_file() {
        return Ok(());
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(report_path)?)?;
    let rows: Vec<MatrixRow> = report["rows"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|r| {
            let num = |k: &str| r[k].as_f64();
            Some(MatrixRow {
                name: r["name"].as_str()?.to_string(),
                report: ensemble_alpha::backtest::BacktestReport {
                    strategy_return: num("strategy_return")?,
                    annualized_return: num("annualized_return")?,
                    annualized_volatility: num("annualized_volatility")?,
                    excess_return: num("excess_return")?,
                    sharpe: num("sharpe"),
                    beta: num("beta")?,
                    alpha: num("alpha")?,
                    max_drawdown: num("max_drawdown")?,
                },
            })
        })
        .collect();
    if let (Some(a), Some(b)) = (report["first_test_month"].as_str(), report["last_test_month"].as_str()) {
        println!("test months {a} .. {b} (seed {})", report["seed"]);
    }
    print_table(&rows);
    Ok(())
}
