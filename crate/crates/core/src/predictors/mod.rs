//! Return forecasters trained on one rolling window: ridge regression, a
//! multi-layer perceptron and a random forest.

mod forest;
mod mlp;
mod ridge;

pub use forest::{train_forest, Forest, ForestConfig, Tree};
pub use mlp::{train_mlp, Activation, MlpConfig, Network, Optimizer};
pub use ridge::{ridge_solve, train_ridge, RidgeConfig, RidgeParams};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::MonthIndex;

/// Row-major feature matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Features {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidInput("no feature columns".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != names.len()) {
            return Err(Error::Alignment(format!(
                "row {bad} has {} values for {} features",
                rows[bad].len(),
                names.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("features must be finite".into()));
        }
        Ok(Self { names, rows })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Ridge,
    Mlp,
    Forest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Ridge, ModelKind::Mlp, ModelKind::Forest];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ridge => "Ridge",
            ModelKind::Mlp => "MLP",
            ModelKind::Forest => "Forest",
        }
    }

    fn tag(self) -> u64 {
        match self {
            ModelKind::Ridge => 1,
            ModelKind::Mlp => 2,
            ModelKind::Forest => 3,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub ridge: RidgeConfig,
    pub mlp: MlpConfig,
    pub forest: ForestConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ridge.validate()?;
        self.mlp.validate()?;
        self.forest.validate()
    }

    /// Copy whose model seeds are derived from `(run seed, model, month)`.
    pub fn seeded_for(&self, run_seed: u64, month: MonthIndex) -> Self {
        let mut c = self.clone();
        c.mlp.seed = derive_seed(run_seed, &[ModelKind::Mlp.tag(), month.ordinal() as u64]);
        c.forest.seed = derive_seed(run_seed, &[ModelKind::Forest.tag(), month.ordinal() as u64]);
        c
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with stream identifiers into an independent seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, p| splitmix64(acc ^ splitmix64(*p)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Ridge(RidgeParams),
    Mlp(Network),
    Forest(Forest),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub params: Params,
    pub feature_names: Vec<String>,
    /// First and last training month, when known.
    pub train_months: Option<(MonthIndex, MonthIndex)>,
}

impl TrainedModel {
    pub fn with_window(mut self, first: MonthIndex, last: MonthIndex) -> Self {
        self.train_months = Some((first, last));
        self
    }

    pub fn predict(&self, x: &Features) -> Result<Vec<f64>> {
        if x.names() != self.feature_names.as_slice() {
            return Err(Error::FeatureMismatch {
                offending: mismatched_names(&self.feature_names, x.names()),
            });
        }
        let out: Vec<f64> = match &self.params {
            Params::Ridge(r) => x.rows().iter().map(|row| r.predict_row(row)).collect(),
            Params::Mlp(n) => x.rows().iter().map(|row| n.predict_row(row)).collect(),
            Params::Forest(f) => x.rows().iter().map(|row| f.predict_row(row)).collect(),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{} produced a non-finite prediction",
                self.kind
            )));
        }
        Ok(out)
    }
}

pub fn predict(model: &TrainedModel, x: &Features) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Names that are missing, unexpected, or out of position.
fn mismatched_names(expected: &[String], got: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |n: &String| {
        if !out.contains(n) {
            out.push(n.clone());
        }
    };
    for (i, n) in got.iter().enumerate() {
        if expected.get(i) != Some(n) {
            push(n);
        }
    }
    for (i, n) in expected.iter().enumerate() {
        if got.get(i) != Some(n) {
            push(n);
        }
    }
    out
}

fn check_training(x: &Features, y: &[f64], min_rows: usize) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::Alignment(format!(
            "{} feature rows for {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if y.len() < min_rows {
        return Err(Error::InsufficientHistory {
            required: min_rows,
            available: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("targets must be finite".into()));
    }
    Ok(())
}

/// Trains one model of `kind` with the matching part of `cfg`.
pub fn train(kind: ModelKind, x: &Features, y: &[f64], cfg: &TrainConfig) -> Result<TrainedModel> {
    match kind {
        ModelKind::Ridge => train_ridge(x, y, &cfg.ridge.grid),
        ModelKind::Mlp => train_mlp(x, y, &cfg.mlp),
        ModelKind::Forest => train_forest(x, y, &cfg.forest),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatch_lists_offenders() {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let model = TrainedModel {
            kind: ModelKind::Ridge,
            params: Params::Ridge(RidgeParams {
                intercept: 0.5,
                beta: vec![0.0, 0.0],
                lambda: 1.0,
            }),
            feature_names: names(&["a", "b"]),
            train_months: None,
        };
        let ok = Features::new(names(&["a", "b"]), vec![vec![1.0, 2.0]; 3]).unwrap();
        assert_eq!(model.predict(&ok).unwrap(), vec![0.5; 3]);
        let swapped = Features::new(names(&["b", "a"]), vec![vec![1.0, 2.0]]).unwrap();
        match model.predict(&swapped) {
            Err(Error::FeatureMismatch { offending }) => assert_eq!(offending, names(&["b", "a"])),
            other => panic!("{other:?}"),
        }
        let extra = Features::new(names(&["a", "c"]), vec![vec![1.0, 2.0]]).unwrap();
        match model.predict(&extra) {
            Err(Error::FeatureMismatch { offending }) => assert_eq!(offending, names(&["c", "b"])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(7, &[1, 100]);
        assert_eq!(a, derive_seed(7, &[1, 100]));
        assert_ne!(a, derive_seed(7, &[2, 100]));
        assert_ne!(a, derive_seed(8, &[1, 100]));
    }
}
