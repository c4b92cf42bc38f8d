use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::predictors::{derive_seed, ModelKind, TrainConfig};
use crate::stats::{mean, sample_std};

/// Where the per-model forecasts of a run come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionSource {
    /// Ridge, MLP and forest trained on the rolling window.
    Trained(TrainConfig),
    /// Noisy copies of the realized returns with the given rank
    /// correlations, one model per entry. Reads the future by design.
    Planted { rank_corr: Vec<f64> },
    /// A single model predicting the realized returns exactly.
    Oracle,
}

impl Default for PredictionSource {
    fn default() -> Self {
        PredictionSource::Trained(TrainConfig::default())
    }
}

impl PredictionSource {
    pub fn model_names(&self) -> Vec<String> {
        match self {
            PredictionSource::Trained(_) => ModelKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            PredictionSource::Planted { rank_corr } => (1..=rank_corr.len()).map(|i| format!("M{i}")).collect(),
            PredictionSource::Oracle => vec!["Oracle".into()],
        }
    }

    pub fn reads_future(&self) -> bool {
        !matches!(self, PredictionSource::Trained(_))
    }
}

/// Pearson correlation of a bivariate normal whose Spearman correlation
/// is `rho_s`.
pub fn pearson_for_rank(rho_s: f64) -> f64 {
    2.0 * (std::f64::consts::PI * rho_s / 6.0).sin()
}

/// A forecast whose rank correlation with `realized` is `rank_corr` in
/// expectation when returns are roughly normal: `ρ·z + √(1−ρ²)·ε` on the
/// standardized realized returns.
pub fn planted_forecast(realized: &[f64], rank_corr: f64, rng: &mut impl Rng) -> Vec<f64> {
    let rho = pearson_for_rank(rank_corr.clamp(-1.0, 1.0));
    let mu = mean(realized);
    let sd = sample_std(realized);
    let scale = (1.0 - rho * rho).max(0.0).sqrt();
    realized
        .iter()
        .map(|r| {
            let z = if sd > 0.0 { (r - mu) / sd } else { 0.0 };
            rho * z + scale * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// Seeded generator for planted model `k` at month ordinal `month`.
pub(crate) fn planted_rng(seed: u64, k: usize, month: i64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x504c_414e, k as u64, month as u64]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::spearman;
    use crate::stats::average_ranks;

    #[test]
    fn planted_rank_correlation_on_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let realized: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        for target in [0.5, 0.0, -0.3] {
            let f = planted_forecast(&realized, target, &mut rng);
            let got = spearman(&f, &realized).unwrap();
            assert!((got - target).abs() < 0.02, "{target} → {got}");
        }
    }

    #[test]
    fn perfect_rank_is_identity_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let realized = [0.3, -0.1, 0.2, 0.0];
        let f = planted_forecast(&realized, 1.0, &mut rng);
        assert_eq!(average_ranks(&f), average_ranks(&realized));
    }
}
