//! Panel data model: stock × month × factor values with the per-cell
//! attributes needed downstream (industry, market cap, exclusion flags and
//! the realized next-month return).
//!
//! Panels are immutable after construction. Missing factor values are held as
//! `None`; on disk they are empty cells.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Calendar month. Ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthIndex {
    year: i32,
    month: u8,
}

impl MonthIndex {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidInput(format!("month {month} not in 1..=12")));
        }
        Ok(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    /// Months since year 0, used for contiguity checks.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        Self {
            year: ordinal.div_euclid(12) as i32,
            month: (ordinal.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn succ(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }
}

impl fmt::Display for MonthIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl serde::Serialize for MonthIndex {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl FromStr for MonthIndex {
    type Err = Error;

    /// Parses ISO `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("`{s}` is not a YYYY-MM month"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        MonthIndex::new(year, month).map_err(|_| bad())
    }
}

/// Opaque ticker such as `000002.SZ`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StockId(String);

impl StockId {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        if code.trim().is_empty() {
            return Err(Error::InvalidInput("empty ticker".into()));
        }
        Ok(Self(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl serde::Serialize for StockId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl fmt::Display for StockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StockFlags {
    pub is_st: bool,
    pub is_suspended: bool,
    pub is_new_listing: bool,
}

impl StockFlags {
    pub fn any(self) -> bool {
        self.is_st || self.is_suspended || self.is_new_listing
    }
}

/// Per-(month, stock) record that is not a factor value.
#[derive(Debug, Clone, PartialEq)]
struct CellInfo {
    present: bool,
    industry: usize,
    market_cap: f64,
    next_return: f64,
    flags: StockFlags,
}

impl CellInfo {
    fn absent() -> Self {
        Self {
            present: false,
            industry: 0,
            market_cap: f64::NAN,
            next_return: f64::NAN,
            flags: StockFlags::default(),
        }
    }
}

/// Dense month × stock × factor panel.
///
/// A stock may be absent in some months (a long-format file need not list
/// every ticker every month); absent cells carry no data and are never
/// eligible.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    stocks: Vec<StockId>,
    months: Vec<MonthIndex>,
    factor_names: Vec<String>,
    industry_labels: Vec<String>,
    values: Vec<Option<f64>>,
    cells: Vec<CellInfo>,
    benchmark_return: Vec<f64>,
}

impl FactorPanel {
    pub fn n_months(&self) -> usize {
        self.months.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factor_names.len()
    }

    pub fn months(&self) -> &[MonthIndex] {
        &self.months
    }

    pub fn stocks(&self) -> &[StockId] {
        &self.stocks
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factor_names.iter().position(|n| n == name)
    }

    pub fn month_position(&self, month: MonthIndex) -> Option<usize> {
        let first = *self.months.first()?;
        let pos = month.ordinal() - first.ordinal();
        (pos >= 0 && (pos as usize) < self.months.len()).then_some(pos as usize)
    }

    fn cell(&self, month: usize, stock: usize) -> &CellInfo {
        &self.cells[month * self.stocks.len() + stock]
    }

    fn value_offset(&self, month: usize, stock: usize, factor: usize) -> usize {
        (month * self.stocks.len() + stock) * self.factor_names.len() + factor
    }

    pub fn value(&self, month: usize, stock: usize, factor: usize) -> Option<f64> {
        self.values[self.value_offset(month, stock, factor)]
    }

    pub fn is_present(&self, month: usize, stock: usize) -> bool {
        self.cell(month, stock).present
    }

    pub fn industry(&self, month: usize, stock: usize) -> &str {
        &self.industry_labels[self.cell(month, stock).industry]
    }

    pub(crate) fn industry_code(&self, month: usize, stock: usize) -> usize {
        self.cell(month, stock).industry
    }

    pub fn market_cap(&self, month: usize, stock: usize) -> f64 {
        self.cell(month, stock).market_cap
    }

    /// Simple return realized over month → month + 1.
    pub fn next_return(&self, month: usize, stock: usize) -> f64 {
        self.cell(month, stock).next_return
    }

    pub fn flags(&self, month: usize, stock: usize) -> StockFlags {
        self.cell(month, stock).flags
    }

    pub fn benchmark_return(&self, month: usize) -> f64 {
        self.benchmark_return[month]
    }

    pub fn benchmark_returns(&self) -> &[f64] {
        &self.benchmark_return
    }

    /// Same cells with a different factor block. `values` is month × stock ×
    /// factor in row-major order.
    pub fn with_factors(&self, factor_names: Vec<String>, values: Vec<Option<f64>>) -> Result<Self> {
        let expected = self.n_months() * self.n_stocks() * factor_names.len();
        if values.len() != expected {
            return Err(Error::Structure(format!(
                "factor block has {} values, expected {expected}",
                values.len()
            )));
        }
        check_unique(&factor_names, "factor")?;
        if let Some(v) = values.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite factor value {v}")));
        }
        Ok(Self {
            factor_names,
            values,
            ..self.clone()
        })
    }

    /// Keeps the named factors, in the order given.
    pub fn select_factors(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.factor_index(n).ok_or_else(|| Error::Schema { column: n.clone() }))
            .collect::<Result<_>>()?;
        let cells = self.n_months() * self.n_stocks();
        let mut values = Vec::with_capacity(cells * idx.len());
        for c in 0..cells {
            let base = c * self.n_factors();
            values.extend(idx.iter().map(|&f| self.values[base + f]));
        }
        self.with_factors(names.to_vec(), values)
    }

    /// Factor column `factor` across all stocks for one month.
    pub fn cross_section(&self, month: usize, factor: usize) -> Vec<Option<f64>> {
        (0..self.n_stocks()).map(|s| self.value(month, s, factor)).collect()
    }
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::Structure(format!("duplicate {what} name `{n}`")));
        }
    }
    Ok(())
}

/// Eligibility per (month, stock) for one month.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniverseMask {
    pub month: MonthIndex,
    pub eligible: Vec<bool>,
}

impl UniverseMask {
    pub fn count(&self) -> usize {
        self.eligible.iter().filter(|e| **e).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.eligible
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.then_some(i))
            .collect()
    }
}

/// Drops ST, suspended and newly listed stocks (and stocks absent that month).
pub fn filter_universe(panel: &FactorPanel, month: MonthIndex) -> Result<UniverseMask> {
    let m = panel.month_position(month).ok_or(Error::MonthOutOfRange(month))?;
    Ok(universe_at(panel, m))
}

pub(crate) fn universe_at(panel: &FactorPanel, m: usize) -> UniverseMask {
    let eligible = (0..panel.n_stocks())
        .map(|s| {
            let c = panel.cell(m, s);
            c.present && !c.flags.any()
        })
        .collect();
    UniverseMask {
        month: panel.months[m],
        eligible,
    }
}

/// Column names of the long-format panel file.
#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelSchema {
    pub date: String,
    pub ticker: String,
    pub industry: String,
    pub market_cap: String,
    pub next_return: String,
    pub benchmark_return: String,
    pub is_st: String,
    pub is_suspended: String,
    pub is_new_listing: String,
    /// Factor columns; every remaining column when unset.
    pub factors: Option<Vec<String>>,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            ticker: "ticker".into(),
            industry: "industry".into(),
            market_cap: "market_cap".into(),
            next_return: "next_return".into(),
            benchmark_return: "benchmark_return".into(),
            is_st: "is_st".into(),
            is_suspended: "is_suspended".into(),
            is_new_listing: "is_new_listing".into(),
            factors: None,
        }
    }
}

impl PanelSchema {
    fn fixed_columns(&self) -> [&str; 9] {
        [
            &self.date,
            &self.ticker,
            &self.industry,
            &self.market_cap,
            &self.next_return,
            &self.benchmark_return,
            &self.is_st,
            &self.is_suspended,
            &self.is_new_listing,
        ]
    }
}

pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<FactorPanel> {
    let file = std::fs::File::open(path)?;
    read_panel(file, schema)
}

struct Row {
    line: u64,
    month: MonthIndex,
    ticker: String,
    industry: String,
    cell: CellInfo,
    benchmark: f64,
    factors: Vec<Option<f64>>,
}

pub fn read_panel<R: Read>(reader: R, schema: &PanelSchema) -> Result<FactorPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })
    };
    let fixed = schema.fixed_columns();
    let fixed_idx: Vec<usize> = fixed.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let factor_names: Vec<String> = match &schema.factors {
        Some(f) => f.clone(),
        None => headers
            .iter()
            .filter(|h| !fixed.contains(&h.as_str()))
            .cloned()
            .collect(),
    };
    if factor_names.is_empty() {
        return Err(Error::Schema {
            column: "<factor>".into(),
        });
    }
    check_unique(&factor_names, "factor")?;
    let factor_idx: Vec<usize> = factor_names.iter().map(|f| col(f)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let num = |i: usize, name: &str| -> Result<f64> {
            let raw = field(i);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line,
                    column: name.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        let flag = |i: usize, name: &str| -> Result<bool> {
            let raw = field(i);
            match raw.to_ascii_lowercase().as_str() {
                "1" | "true" => Ok(true),
                "0" | "false" => Ok(false),
                _ => Err(Error::Parse {
                    line,
                    column: name.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        let month: MonthIndex = field(fixed_idx[0]).parse().map_err(|_| Error::Parse {
            line,
            column: schema.date.clone(),
            value: field(fixed_idx[0]).to_string(),
        })?;
        let ticker = field(fixed_idx[1]).to_string();
        if ticker.is_empty() {
            return Err(Error::Parse {
                line,
                column: schema.ticker.clone(),
                value: String::new(),
            });
        }
        let market_cap = num(fixed_idx[3], &schema.market_cap)?;
        if market_cap <= 0.0 {
            return Err(Error::Parse {
                line,
                column: schema.market_cap.clone(),
                value: field(fixed_idx[3]).to_string(),
            });
        }
        let factors = factor_idx
            .iter()
            .zip(&factor_names)
            .map(|(&i, name)| {
                if field(i).is_empty() {
                    Ok(None)
                } else {
                    num(i, name).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row {
            line,
            month,
            ticker,
            industry: field(fixed_idx[2]).to_string(),
            cell: CellInfo {
                present: true,
                industry: 0,
                market_cap,
                next_return: num(fixed_idx[4], &schema.next_return)?,
                flags: StockFlags {
                    is_st: flag(fixed_idx[6], &schema.is_st)?,
                    is_suspended: flag(fixed_idx[7], &schema.is_suspended)?,
                    is_new_listing: flag(fixed_idx[8], &schema.is_new_listing)?,
                },
            },
            benchmark: num(fixed_idx[5], &schema.benchmark_return)?,
            factors,
        });
    }
    assemble(rows, factor_names)
}

fn assemble(rows: Vec<Row>, factor_names: Vec<String>) -> Result<FactorPanel> {
    if rows.is_empty() {
        return Err(Error::Structure("panel file has no data rows".into()));
    }
    let month_set: BTreeSet<MonthIndex> = rows.iter().map(|r| r.month).collect();
    let months: Vec<MonthIndex> = month_set.into_iter().collect();
    for pair in months.windows(2) {
        if pair[1].ordinal() != pair[0].ordinal() + 1 {
            return Err(Error::Structure(format!(
                "months are not contiguous: {} is followed by {}",
                pair[0], pair[1]
            )));
        }
    }
    let ticker_set: BTreeSet<&str> = rows.iter().map(|r| r.ticker.as_str()).collect();
    let stocks: Vec<StockId> = ticker_set.iter().map(|t| StockId::new(*t)).collect::<Result<_>>()?;
    let stock_pos: HashMap<&str, usize> = ticker_set.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let label_set: BTreeSet<&str> = rows.iter().map(|r| r.industry.as_str()).collect();
    let industry_labels: Vec<String> = label_set.iter().map(|s| s.to_string()).collect();
    let label_pos: HashMap<&str, usize> = label_set.iter().enumerate().map(|(i, l)| (*l, i)).collect();

    let n_s = stocks.len();
    let n_f = factor_names.len();
    let first = months[0].ordinal();
    let mut cells = vec![CellInfo::absent(); months.len() * n_s];
    let mut values = vec![None; months.len() * n_s * n_f];
    let mut bench: Vec<Option<f64>> = vec![None; months.len()];
    for row in &rows {
        let m = (row.month.ordinal() - first) as usize;
        let s = stock_pos[row.ticker.as_str()];
        let c = m * n_s + s;
        if cells[c].present {
            return Err(Error::DuplicateRow {
                line: row.line,
                date: row.month.to_string(),
                ticker: row.ticker.clone(),
            });
        }
        cells[c] = CellInfo {
            industry: label_pos[row.industry.as_str()],
            ..row.cell.clone()
        };
        values[c * n_f..(c + 1) * n_f].copy_from_slice(&row.factors);
        match bench[m] {
            None => bench[m] = Some(row.benchmark),
            Some(b) if b == row.benchmark => {}
            Some(b) => {
                return Err(Error::Structure(format!(
                    "line {}: benchmark return {} for {} disagrees with earlier value {b}",
                    row.line, row.benchmark, row.month
                )))
            }
        }
    }
    Ok(FactorPanel {
        stocks,
        months,
        factor_names,
        industry_labels,
        values,
        cells,
        benchmark_return: bench.into_iter().map(|b| b.unwrap_or(f64::NAN)).collect(),
    })
}

/// Writes the panel in the long format accepted by [`read_panel`], rows
/// ordered by month then ticker.
pub fn write_panel<W: Write>(panel: &FactorPanel, writer: W) -> Result<()> {
    let schema = PanelSchema::default();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = schema.fixed_columns().to_vec();
    header.extend(panel.factor_names.iter().map(String::as_str));
    w.write_record(&header)?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for m in 0..panel.n_months() {
        for s in 0..panel.n_stocks() {
            let c = panel.cell(m, s);
            if !c.present {
                continue;
            }
            let mut rec = vec![
                panel.months[m].to_string(),
                panel.stocks[s].to_string(),
                panel.industry_labels[c.industry].clone(),
                c.market_cap.to_string(),
                c.next_return.to_string(),
                panel.benchmark_return[m].to_string(),
                flag(c.flags.is_st).to_string(),
                flag(c.flags.is_suspended).to_string(),
                flag(c.flags.is_new_listing).to_string(),
            ];
            rec.extend((0..panel.n_factors()).map(|f| panel.value(m, s, f).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_panel(panel: &FactorPanel, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_panel(panel, std::io::BufWriter::new(file))
}

/// Parameters of a synthetic panel with a planted linear return signal:
/// `next_return = market + Σ coef_j · factor_j + noise_scale · ε`.
#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_stocks: usize,
    pub n_months: usize,
    pub n_factors: usize,
    /// One true coefficient per factor. Shorter lists are zero-padded.
    pub coefficients: Vec<f64>,
    pub noise_scale: f64,
    /// Volatility of the common monthly market move. It shifts every stock
    /// equally, so it never changes cross-sectional ranks.
    pub market_vol: f64,
    pub n_industries: usize,
    pub st_rate: f64,
    pub suspended_rate: f64,
    pub new_listing_rate: f64,
    pub missing_rate: f64,
    pub start: String,
    /// Factor names; `f01, f02, …` when empty.
    pub factor_names: Vec<String>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_stocks: 100,
            n_months: 48,
            n_factors: 16,
            coefficients: vec![0.01; 8],
            noise_scale: 0.08,
            market_vol: 0.04,
            n_industries: 5,
            st_rate: 0.0,
            suspended_rate: 0.0,
            new_listing_rate: 0.0,
            missing_rate: 0.0,
            start: "2019-01".into(),
            factor_names: Vec::new(),
        }
    }
}

impl SyntheticSpec {
    pub fn resolved_factor_names(&self) -> Vec<String> {
        if self.factor_names.is_empty() {
            let width = self.n_factors.to_string().len().max(2);
            (1..=self.n_factors).map(|i| format!("f{i:0width$}")).collect()
        } else {
            self.factor_names.clone()
        }
    }
}

/// Seeded synthetic panel. Identical `(spec, seed)` gives a bit-identical
/// panel.
pub fn generate_synthetic_panel(spec: &SyntheticSpec, seed: u64) -> Result<FactorPanel> {
    if spec.n_stocks < 2 || spec.n_months < 2 || spec.n_factors < 2 {
        return Err(Error::InvalidInput(format!(
            "synthetic panel needs at least 2 stocks, months and factors (got {}, {}, {})",
            spec.n_stocks, spec.n_months, spec.n_factors
        )));
    }
    if spec.coefficients.len() > spec.n_factors {
        return Err(Error::InvalidInput(format!(
            "{} coefficients for {} factors",
            spec.coefficients.len(),
            spec.n_factors
        )));
    }
    let coefs: Vec<f64> = (0..spec.n_factors)
        .map(|j| spec.coefficients.get(j).copied().unwrap_or(0.0))
        .collect();
    if spec.noise_scale == 0.0 && coefs.iter().all(|c| *c == 0.0) {
        return Err(Error::DegenerateSpec(
            "zero noise with zero coefficients yields constant returns".into(),
        ));
    }
    for (name, v) in [("noise_scale", spec.noise_scale), ("market_vol", spec.market_vol)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} must be finite and ≥ 0")));
        }
    }
    for (name, v) in [
        ("st_rate", spec.st_rate),
        ("suspended_rate", spec.suspended_rate),
        ("new_listing_rate", spec.new_listing_rate),
        ("missing_rate", spec.missing_rate),
    ] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("{name} must be in [0, 1)")));
        }
    }
    let n_industries = spec.n_industries.max(1);
    let factor_names = spec.resolved_factor_names();
    if factor_names.len() != spec.n_factors {
        return Err(Error::InvalidInput("factor_names length must equal n_factors".into()));
    }
    check_unique(&factor_names, "factor")?;
    let start: MonthIndex = spec.start.parse()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_s = spec.n_stocks;
    let n_f = spec.n_factors;
    let stocks: Vec<StockId> = (1..=n_s).map(|i| StockId(format!("{i:06}.SZ"))).collect();
    let industry_labels: Vec<String> = (1..=n_industries).map(|i| format!("IND{i:02}")).collect();
    let mut log_cap: Vec<f64> = (0..n_s)
        .map(|_| 23.0 + 1.2 * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let months: Vec<MonthIndex> = (0..spec.n_months).map(|m| start.offset(m as i64)).collect();
    let mut cells = Vec::with_capacity(spec.n_months * n_s);
    let mut values = Vec::with_capacity(spec.n_months * n_s * n_f);
    let mut benchmark_return = Vec::with_capacity(spec.n_months);
    let mut factors = vec![0.0; n_f];
    for _ in 0..spec.n_months {
        let market = spec.market_vol * rng.sample::<f64, _>(StandardNormal);
        let mut total = 0.0;
        for (s, cap) in log_cap.iter_mut().enumerate() {
            for f in factors.iter_mut() {
                *f = rng.sample(StandardNormal);
            }
            let eps: f64 = rng.sample(StandardNormal);
            let signal: f64 = factors.iter().zip(&coefs).map(|(f, c)| f * c).sum();
            let ret = market + signal + spec.noise_scale * eps;
            let flags = StockFlags {
                is_st: rng.random::<f64>() < spec.st_rate,
                is_suspended: rng.random::<f64>() < spec.suspended_rate,
                is_new_listing: rng.random::<f64>() < spec.new_listing_rate,
            };
            for &f in &factors {
                let missing = rng.random::<f64>() < spec.missing_rate;
                values.push((!missing).then_some(f));
            }
            cells.push(CellInfo {
                present: true,
                industry: s % n_industries,
                market_cap: cap.exp(),
                next_return: ret,
                flags,
            });
            total += ret;
            *cap += ret.clamp(-0.9, 0.9);
        }
        benchmark_return.push(total / n_s as f64);
    }
    Ok(FactorPanel {
        stocks,
        months,
        factor_names,
        industry_labels,
        values,
        cells,
        benchmark_return,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::spearman;

    const SMALL: &str = "\
date,ticker,industry,market_cap,next_return,benchmark_return,is_st,is_suspended,is_new_listing,f1,f2
2020-01,B.SZ,bank,2e9,0.01,0.005,0,0,0,1.5,
2020-01,A.SZ,tech,1e9,-0.02,0.005,1,0,0,0.5,2
2020-02,A.SZ,tech,1.1e9,0.03,0.01,0,0,0,0.7,1
2020-02,B.SZ,bank,2.1e9,0.00,0.01,0,0,1,1.1,3
2020-03,A.SZ,tech,1.2e9,0.02,-0.01,0,1,0,0.2,4
2020-03,B.SZ,bank,2.0e9,-0.01,-0.01,0,0,0,0.9,5
";

    #[test]
    fn loads_two_stocks_three_months() {
        let p = read_panel(SMALL.as_bytes(), &PanelSchema::default()).unwrap();
        assert_eq!((p.n_months(), p.n_stocks(), p.n_factors()), (3, 2, 2));
        assert_eq!(p.stocks()[0].as_str(), "A.SZ");
        assert_eq!(p.months()[0].to_string(), "2020-01");
        assert_eq!(p.value(0, 1, 1), None);
        assert_eq!(p.value(0, 0, 1), Some(2.0));
        assert_eq!(p.industry(0, 1), "bank");
        assert_eq!(p.benchmark_return(2), -0.01);
    }

    #[test]
    fn duplicate_row_rejected() {
        let dup = format!("{SMALL}2020-03,B.SZ,bank,2.0e9,-0.01,-0.01,0,0,0,0.9,5\n");
        let err = read_panel(dup.as_bytes(), &PanelSchema::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateRow { line: 8, .. }), "{err}");
    }

    #[test]
    fn missing_market_cap_column_named() {
        let text = SMALL.replace("market_cap", "mcap");
        match read_panel(text.as_bytes(), &PanelSchema::default()).unwrap_err() {
            Error::Schema { column } => assert_eq!(column, "market_cap"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_number_reports_line() {
        let text = SMALL.replace("0.7,1", "0.7,abc");
        match read_panel(text.as_bytes(), &PanelSchema::default()).unwrap_err() {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 4);
                assert_eq!(column, "f2");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn gap_in_months_rejected() {
        let text: String = SMALL
            .lines()
            .filter(|l| !l.starts_with("2020-02"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = read_panel(text.as_bytes(), &PanelSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn universe_flags() {
        let p = read_panel(SMALL.as_bytes(), &PanelSchema::default()).unwrap();
        let jan = filter_universe(&p, "2020-01".parse().unwrap()).unwrap();
        assert_eq!(jan.eligible, vec![false, true]); // A is ST
        let feb = filter_universe(&p, "2020-02".parse().unwrap()).unwrap();
        assert_eq!(feb.eligible, vec![true, false]); // B newly listed
        let mar = filter_universe(&p, "2020-03".parse().unwrap()).unwrap();
        assert_eq!(mar.eligible, vec![false, true]); // A suspended
        assert_eq!(filter_universe(&p, "2020-03".parse().unwrap()).unwrap(), mar);
        assert!(matches!(
            filter_universe(&p, "2021-01".parse().unwrap()),
            Err(Error::MonthOutOfRange(_))
        ));
    }

    #[test]
    fn write_then_read_round_trips() {
        let p = read_panel(SMALL.as_bytes(), &PanelSchema::default()).unwrap();
        let mut buf = Vec::new();
        write_panel(&p, &mut buf).unwrap();
        let q = read_panel(buf.as_slice(), &PanelSchema::default()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn synthetic_is_seed_deterministic() {
        let spec = SyntheticSpec {
            missing_rate: 0.05,
            st_rate: 0.02,
            ..Default::default()
        };
        let a = generate_synthetic_panel(&spec, 7).unwrap();
        let b = generate_synthetic_panel(&spec, 7).unwrap();
        let c = generate_synthetic_panel(&spec, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let (mut wa, mut wb) = (Vec::new(), Vec::new());
        write_panel(&a, &mut wa).unwrap();
        write_panel(&b, &mut wb).unwrap();
        assert_eq!(wa, wb);
        let back = read_panel(wa.as_slice(), &PanelSchema::default()).unwrap();
        assert_eq!(back.n_stocks(), 100);
        assert_eq!(back.n_months(), 48);
    }

    #[test]
    fn noiseless_single_factor_is_perfectly_ranked() {
        let spec = SyntheticSpec {
            n_stocks: 50,
            n_months: 6,
            n_factors: 3,
            coefficients: vec![1.0],
            noise_scale: 0.0,
            market_vol: 0.0,
            ..Default::default()
        };
        let p = generate_synthetic_panel(&spec, 3).unwrap();
        for m in 0..p.n_months() {
            let f: Vec<f64> = p.cross_section(m, 0).into_iter().flatten().collect();
            let r: Vec<f64> = (0..p.n_stocks()).map(|s| p.next_return(m, s)).collect();
            assert!((spearman(&f, &r).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn null_panel_has_no_mean_ic() {
        // Monte-Carlo over 100 seeds of 48 months each.
        let spec = SyntheticSpec {
            n_stocks: 60,
            n_months: 48,
            n_factors: 2,
            coefficients: vec![],
            noise_scale: 1.0,
            ..Default::default()
        };
        let mut means = Vec::new();
        for seed in 0..100 {
            let p = generate_synthetic_panel(&spec, seed).unwrap();
            let mut ics = Vec::new();
            for m in 0..p.n_months() {
                let f: Vec<f64> = p.cross_section(m, 0).into_iter().flatten().collect();
                let r: Vec<f64> = (0..p.n_stocks()).map(|s| p.next_return(m, s)).collect();
                ics.push(spearman(&f, &r).unwrap());
            }
            let mean = ics.iter().sum::<f64>() / ics.len() as f64;
            assert!(mean.abs() < 0.1, "seed {seed}: {mean}");
            means.push(mean);
        }
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        assert!(grand.abs() < 0.01);
    }

    #[test]
    fn degenerate_and_invalid_specs() {
        let spec = SyntheticSpec {
            coefficients: vec![],
            noise_scale: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            generate_synthetic_panel(&spec, 1),
            Err(Error::DegenerateSpec(_))
        ));
        let spec = SyntheticSpec {
            n_stocks: 0,
            ..Default::default()
        };
        assert!(matches!(
            generate_synthetic_panel(&spec, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn month_parsing() {
        let m: MonthIndex = "2021-12".parse().unwrap();
        assert_eq!(m.succ().to_string(), "2022-01");
        assert!("2021-13".parse::<MonthIndex>().is_err());
        assert!("2021/01".parse::<MonthIndex>().is_err());
    }
}
