//! Entropy-weight synthesis of second-level factors into first-level scores.
//!
//! For each group member the trailing window (12 months × N stocks) is
//! min–max scaled, turned into a probability mass, and scored by its
//! normalized Shannon entropy. Members with lower entropy carry more weight.
//! The current month is scaled with the window's min and max and combined
//! with those weights.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{FactorPanel, MonthIndex};

/// Ordered first-level groups, each with its ordered second-level members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorHierarchy {
    groups: Vec<(String, Vec<String>)>,
}

impl FactorHierarchy {
    pub fn new(groups: Vec<(String, Vec<String>)>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidInput("hierarchy has no groups".into()));
        }
        let mut seen_groups = BTreeSet::new();
        let mut seen_members = BTreeSet::new();
        for (group, members) in &groups {
            if !seen_groups.insert(group.as_str()) {
                return Err(Error::InvalidInput(format!("group `{group}` listed twice")));
            }
            if members.is_empty() {
                return Err(Error::InvalidInput(format!("group `{group}` has no members")));
            }
            for m in members {
                if !seen_members.insert(m.as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "factor `{m}` belongs to more than one group"
                    )));
                }
            }
        }
        Ok(Self { groups })
    }

    /// Splits `names` into `n_groups` consecutive groups named `g1, g2, …`.
    pub fn chunked(names: &[String], n_groups: usize) -> Result<Self> {
        if n_groups == 0 || n_groups > names.len() {
            return Err(Error::InvalidInput(format!(
                "cannot split {} factors into {n_groups} groups",
                names.len()
            )));
        }
        let base = names.len() / n_groups;
        let extra = names.len() % n_groups;
        let mut start = 0;
        let groups = (0..n_groups)
            .map(|g| {
                let len = base + usize::from(g < extra);
                let members = names[start..start + len].to_vec();
                start += len;
                (format!("g{}", g + 1), members)
            })
            .collect();
        Self::new(groups)
    }

    pub fn groups(&self) -> &[(String, Vec<String>)] {
        &self.groups
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups.iter().map(|(g, _)| g.clone()).collect()
    }

    pub fn members(&self) -> impl Iterator<Item = (&str, &str)> {
        self.groups
            .iter()
            .flat_map(|(g, ms)| ms.iter().map(move |m| (g.as_str(), m.as_str())))
    }

    /// Drops members not in `keep`; groups left empty disappear.
    pub fn restrict(&self, keep: &[String]) -> Result<Self> {
        let groups: Vec<_> = self
            .groups
            .iter()
            .map(|(g, ms)| {
                let kept: Vec<String> = ms.iter().filter(|m| keep.contains(m)).cloned().collect();
                (g.clone(), kept)
            })
            .filter(|(_, ms)| !ms.is_empty())
            .collect();
        Self::new(groups)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub min: f64,
    pub max: f64,
    /// `max == min`: every scaled value is 0.
    pub degenerate: bool,
}

impl Scaled {
    /// Min and max over the historical window cells.
    pub fn fit(history: &[f64]) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::InsufficientHistory {
                required: 1,
                available: 0,
            });
        }
        let min = history.iter().copied().fold(f64::INFINITY, f64::min);
        let max = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            min,
            max,
            degenerate: max == min,
        })
    }

    /// `(x − min)/(max − min)` clipped to `[0, 1]`.
    pub fn apply(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        }
    }
}

/// Min–max scales `current` with bounds taken from `history`.
pub fn ewm_standardize(history: &[f64], current: &[f64]) -> Result<(Vec<f64>, bool)> {
    let s = Scaled::fit(history)?;
    Ok((current.iter().map(|&x| s.apply(x)).collect(), s.degenerate))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropy {
    pub value: f64,
    /// All cells were zero and the entropy defaulted to 1.
    pub degenerate: bool,
}

/// Normalized entropy `−Σ p ln p / ln(n)` of `p = z / Σz` over the `n`
/// window cells, with `0 · ln 0 = 0`.
pub fn ewm_entropy(z: &[f64]) -> Result<Entropy> {
    if z.len() < 2 {
        return Err(Error::InvalidInput("entropy needs at least two cells".into()));
    }
    if z.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("entropy inputs must be finite and ≥ 0".into()));
    }
    let total: f64 = z.iter().sum();
    if total == 0.0 {
        return Ok(Entropy {
            value: 1.0,
            degenerate: true,
        });
    }
    let h: f64 = z
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| {
            let p = v / total;
            p * p.ln()
        })
        .sum();
    let value = (-h / (z.len() as f64).ln()).clamp(0.0, 1.0);
    Ok(Entropy {
        value,
        degenerate: false,
    })
}

/// `w_j = (1 − e_j) / Σ(1 − e_k)`; equal weights (flagged) when every
/// entropy is 1.
pub fn ewm_weights(entropies: &[f64]) -> Result<(Vec<f64>, bool)> {
    if entropies.is_empty() {
        return Err(Error::InvalidInput("no group members".into()));
    }
    let info: Vec<f64> = entropies.iter().map(|e| (1.0 - e).max(0.0)).collect();
    let total: f64 = info.iter().sum();
    if total <= 0.0 {
        let m = entropies.len() as f64;
        return Ok((vec![1.0 / m; entropies.len()], true));
    }
    Ok((info.iter().map(|d| d / total).collect(), false))
}

/// `F = Σ_j w_j · z_j` per stock; `z[j][a]` is member `j`, stock `a`.
pub fn ewm_aggregate(z: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if z.len() != weights.len() || z.is_empty() {
        return Err(Error::Alignment(format!(
            "{} members scaled but {} weights",
            z.len(),
            weights.len()
        )));
    }
    let n = z[0].len();
    if z.iter().any(|col| col.len() != n) {
        return Err(Error::Alignment("members cover different stock sets".into()));
    }
    Ok((0..n)
        .map(|a| z.iter().zip(weights).map(|(col, w)| w * col[a]).sum())
        .collect())
}

/// Weights of one vintage: `weights[g][j]` follows the hierarchy order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyWeights {
    /// First month these weights are applied to.
    pub applied_from: MonthIndex,
    pub window_start: MonthIndex,
    pub window_end: MonthIndex,
    pub weights: Vec<Vec<f64>>,
    pub entropies: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SynthesisFlags {
    pub degenerate_ranges: usize,
    pub zero_entropy_inputs: usize,
    pub equal_weight_fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    /// Panel whose factors are the first-level group scores.
    pub scores: FactorPanel,
    pub hierarchy: FactorHierarchy,
    pub vintages: Vec<EntropyWeights>,
    /// Vintage index used for every panel month.
    pub vintage_of_month: Vec<usize>,
    pub flags: SynthesisFlags,
}

impl Synthesis {
    pub fn weights_for_month(&self, month: usize) -> &EntropyWeights {
        &self.vintages[self.vintage_of_month[month]]
    }

    /// Per-member weight averaged over every panel month, in hierarchy order
    /// as `(group, member, weight)`.
    pub fn mean_member_weights(&self) -> Vec<(String, String, f64)> {
        let n = self.vintage_of_month.len() as f64;
        let mut out = Vec::new();
        for (g, (group, members)) in self.hierarchy.groups().iter().enumerate() {
            for (j, member) in members.iter().enumerate() {
                let total: f64 = self
                    .vintage_of_month
                    .iter()
                    .map(|&v| self.vintages[v].weights[g][j])
                    .sum();
                out.push((group.clone(), member.clone(), total / n));
            }
        }
        out
    }
}

pub const SYNTHESIS_WINDOW: usize = 12;

struct MemberColumn {
    factor: usize,
}

impl MemberColumn {
    fn window_values(&self, panel: &FactorPanel, months: std::ops::Range<usize>) -> Vec<f64> {
        months
            .flat_map(|m| (0..panel.n_stocks()).filter_map(move |s| panel.value(m, s, self.factor)))
            .collect()
    }
}

/// Scale bounds and weights computed from one window.
fn vintage(
    panel: &FactorPanel,
    hierarchy: &FactorHierarchy,
    columns: &[Vec<MemberColumn>],
    window: std::ops::Range<usize>,
    applied_from: usize,
    flags: &mut SynthesisFlags,
) -> Result<(EntropyWeights, Vec<Vec<Scaled>>)> {
    let mut weights = Vec::new();
    let mut entropies = Vec::new();
    let mut scales = Vec::new();
    for (g, members) in columns.iter().enumerate() {
        let mut e_group = Vec::new();
        let mut s_group = Vec::new();
        for col in members {
            let hist = col.window_values(panel, window.clone());
            if hist.len() < 2 {
                return Err(Error::InsufficientHistory {
                    required: 2,
                    available: hist.len(),
                });
            }
            let scale = Scaled::fit(&hist)?;
            flags.degenerate_ranges += usize::from(scale.degenerate);
            let z: Vec<f64> = hist.iter().map(|&x| scale.apply(x)).collect();
            let e = ewm_entropy(&z)?;
            flags.zero_entropy_inputs += usize::from(e.degenerate);
            e_group.push(e.value);
            s_group.push(scale);
        }
        let (w, fallback) = ewm_weights(&e_group)?;
        flags.equal_weight_fallbacks += usize::from(fallback);
        debug_assert_eq!(w.len(), hierarchy.groups()[g].1.len());
        weights.push(w);
        entropies.push(e_group);
        scales.push(s_group);
    }
    let months = panel.months();
    Ok((
        EntropyWeights {
            applied_from: months[applied_from],
            window_start: months[window.start],
            window_end: months[window.end - 1],
            weights,
            entropies,
        },
        scales,
    ))
}

fn score_month(
    panel: &FactorPanel,
    columns: &[Vec<MemberColumn>],
    weights: &EntropyWeights,
    scales: &[Vec<Scaled>],
    month: usize,
    out: &mut [Option<f64>],
) {
    let n_g = columns.len();
    for s in 0..panel.n_stocks() {
        for (g, members) in columns.iter().enumerate() {
            let mut acc = 0.0;
            let mut complete = true;
            for (j, col) in members.iter().enumerate() {
                match panel.value(month, s, col.factor) {
                    Some(x) => acc += weights.weights[g][j] * scales[g][j].apply(x),
                    None => complete = false,
                }
            }
            out[(month * panel.n_stocks() + s) * n_g + g] = complete.then_some(acc);
        }
    }
}

/// Rolling entropy-weight synthesis with a 12-month window.
///
/// The first 12 months are scored with weights from those same 12 months.
/// From the 13th month on, month `t` is scored with weights and scale bounds
/// from months `t−12 ..= t−1`.
pub fn rolling_synthesize(panel: &FactorPanel, hierarchy: &FactorHierarchy) -> Result<Synthesis> {
    rolling_synthesize_with_window(panel, hierarchy, SYNTHESIS_WINDOW)
}

pub fn rolling_synthesize_with_window(
    panel: &FactorPanel,
    hierarchy: &FactorHierarchy,
    window: usize,
) -> Result<Synthesis> {
    if window == 0 || panel.n_months() < window + 1 {
        return Err(Error::InsufficientHistory {
            required: window + 1,
            available: panel.n_months(),
        });
    }
    let columns: Vec<Vec<MemberColumn>> = hierarchy
        .groups()
        .iter()
        .map(|(_, members)| {
            members
                .iter()
                .map(|m| {
                    panel
                        .factor_index(m)
                        .map(|factor| MemberColumn { factor })
                        .ok_or_else(|| Error::Schema { column: m.clone() })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let n_g = columns.len();
    let mut flags = SynthesisFlags::default();
    let mut values = vec![None; panel.n_months() * panel.n_stocks() * n_g];
    let mut vintages = Vec::new();
    let mut vintage_of_month = Vec::with_capacity(panel.n_months());

    let (initial, scales) = vintage(panel, hierarchy, &columns, 0..window, 0, &mut flags)?;
    for m in 0..window {
        score_month(panel, &columns, &initial, &scales, m, &mut values);
        vintage_of_month.push(0);
    }
    vintages.push(initial);
    for t in window..panel.n_months() {
        let (w, scales) = vintage(panel, hierarchy, &columns, t - window..t, t, &mut flags)?;
        score_month(panel, &columns, &w, &scales, t, &mut values);
        vintage_of_month.push(vintages.len());
        vintages.push(w);
    }
    Ok(Synthesis {
        scores: panel.with_factors(hierarchy.group_names(), values)?,
        hierarchy: hierarchy.clone(),
        vintages,
        vintage_of_month,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{generate_synthetic_panel, SyntheticSpec};
    use proptest::prelude::*;

    #[test]
    fn standardize_examples() {
        let (z, d) = ewm_standardize(&[2.0, 6.0, 3.0], &[2.0, 6.0, 5.0, 10.0, -1.0]).unwrap();
        assert_eq!(z, vec![0.0, 1.0, 0.75, 1.0, 0.0]);
        assert!(!d);
        let (z, d) = ewm_standardize(&[4.0, 4.0], &[4.0, 7.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(d);
    }

    #[test]
    fn entropy_examples() {
        assert!((ewm_entropy(&[0.3; 8]).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(ewm_entropy(&[0.0, 0.0, 0.7, 0.0]).unwrap().value, 0.0);
        let e = ewm_entropy(&[1.0, 3.0]).unwrap().value;
        let oracle = -(0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln()) / 2f64.ln();
        assert!((e - oracle).abs() < 1e-15);
        assert!((e - 0.811_278_124_459).abs() < 1e-12);
        let zero = ewm_entropy(&[0.0; 3]).unwrap();
        assert_eq!(zero.value, 1.0);
        assert!(zero.degenerate);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(ewm_weights(&[1.0, 0.5]).unwrap().0, vec![0.0, 1.0]);
        assert_eq!(ewm_weights(&[0.5, 0.5]).unwrap().0, vec![0.5, 0.5]);
        let (w, _) = ewm_weights(&[0.8113, 0.0]).unwrap();
        assert!((w[0] - 0.1887 / 1.1887).abs() < 1e-15);
        assert!((w[0] - 0.1587).abs() < 5e-5 && (w[1] - 0.8413).abs() < 5e-5);
        let (w, flagged) = ewm_weights(&[1.0, 1.0, 1.0]).unwrap();
        assert!(flagged);
        assert_eq!(w, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(ewm_aggregate(&[vec![0.3, 0.9]], &[1.0]).unwrap(), vec![0.3, 0.9]);
        assert_eq!(ewm_aggregate(&[vec![0.2], vec![0.8]], &[0.5, 0.5]).unwrap(), vec![0.5]);
        assert_eq!(
            ewm_aggregate(&[vec![0.0; 3], vec![0.0; 3]], &[0.4, 0.6]).unwrap(),
            vec![0.0; 3]
        );
    }

    fn small_panel(n_months: usize, seed: u64) -> FactorPanel {
        let spec = SyntheticSpec {
            n_stocks: 6,
            n_months,
            n_factors: 4,
            coefficients: vec![0.01, 0.02],
            ..Default::default()
        };
        generate_synthetic_panel(&spec, seed).unwrap()
    }

    #[test]
    fn thirteen_months_two_vintages() {
        let panel = small_panel(13, 1);
        let h = FactorHierarchy::chunked(panel.factor_names(), 2).unwrap();
        let s = rolling_synthesize(&panel, &h).unwrap();
        assert_eq!(s.scores.n_months(), 13);
        assert_eq!(s.vintages.len(), 2);
        assert_eq!(s.vintage_of_month, [vec![0; 12], vec![1]].concat());
        assert!(matches!(
            rolling_synthesize(&small_panel(12, 1), &h),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn stationary_panel_has_constant_weights() {
        let one = small_panel(2, 4);
        // repeat month 0 sixteen times
        let n_f = one.n_factors();
        let mut values = Vec::new();
        let base: Vec<Option<f64>> = (0..one.n_stocks())
            .flat_map(|s| (0..n_f).map(move |f| (s, f)))
            .map(|(s, f)| one.value(0, s, f))
            .collect();
        let spec = SyntheticSpec {
            n_stocks: 6,
            n_months: 16,
            n_factors: 4,
            coefficients: vec![0.01],
            ..Default::default()
        };
        let shell = generate_synthetic_panel(&spec, 9).unwrap();
        for _ in 0..16 {
            values.extend(base.iter().copied());
        }
        let panel = shell.with_factors(one.factor_names().to_vec(), values).unwrap();
        let h = FactorHierarchy::chunked(panel.factor_names(), 2).unwrap();
        let s = rolling_synthesize(&panel, &h).unwrap();
        for v in &s.vintages {
            assert_eq!(v.weights, s.vintages[0].weights);
        }
    }

    #[test]
    fn weights_sum_to_one_and_scores_bounded() {
        let panel = small_panel(20, 2);
        let h = FactorHierarchy::chunked(panel.factor_names(), 2).unwrap();
        let s = rolling_synthesize(&panel, &h).unwrap();
        for v in &s.vintages {
            for (w, e) in v.weights.iter().zip(&v.entropies) {
                assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                assert!(w.iter().all(|x| *x >= 0.0));
                assert!(e.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }
        for m in 0..20 {
            for st in 0..6 {
                for g in 0..2 {
                    let v = s.scores.value(m, st, g).unwrap();
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
        let mean = s.mean_member_weights();
        assert_eq!(mean.len(), 4);
    }

    #[test]
    fn hierarchy_validation() {
        let names: Vec<String> = (0..5).map(|i| format!("x{i}")).collect();
        let h = FactorHierarchy::chunked(&names, 2).unwrap();
        assert_eq!(h.groups()[0].1.len(), 3);
        assert!(FactorHierarchy::new(vec![("a".into(), vec!["x".into()]), ("b".into(), vec!["x".into()])]).is_err());
        let r = h.restrict(&["x0".into(), "x1".into()]).unwrap();
        assert_eq!(r.groups().len(), 1);
    }

    /// Direct evaluation on a tiny panel: 4 stocks, 13 months, one group of
    /// two members.
    #[test]
    fn matches_brute_force_oracle() {
        let spec = SyntheticSpec {
            n_stocks: 4,
            n_months: 13,
            n_factors: 2,
            coefficients: vec![0.02, 0.0],
            ..Default::default()
        };
        let panel = generate_synthetic_panel(&spec, 21).unwrap();
        let h = FactorHierarchy::new(vec![("g".into(), panel.factor_names().to_vec())]).unwrap();
        let got = rolling_synthesize(&panel, &h).unwrap();

        let x = |m: usize, s: usize, j: usize| panel.value(m, s, j).unwrap();
        for t in 0..13 {
            let (lo, hi) = if t < 12 { (0, 12) } else { (t - 12, t) };
            let mut info = [0.0; 2];
            let mut bounds = [(0.0, 0.0); 2];
            for j in 0..2 {
                let cells: Vec<f64> = (lo..hi)
                    .flat_map(|m| (0..4).map(move |s| (m, s)))
                    .map(|(m, s)| x(m, s, j))
                    .collect();
                let mn = cells.iter().cloned().fold(f64::MAX, f64::min);
                let mx = cells.iter().cloned().fold(f64::MIN, f64::max);
                let z: Vec<f64> = cells.iter().map(|v| (v - mn) / (mx - mn)).collect();
                let total: f64 = z.iter().sum();
                let mut h = 0.0;
                for v in &z {
                    if *v > 0.0 {
                        h -= v / total * (v / total).ln();
                    }
                }
                info[j] = 1.0 - h / (48f64).ln();
                bounds[j] = (mn, mx);
            }
            let w = [info[0] / (info[0] + info[1]), info[1] / (info[0] + info[1])];
            for s in 0..4 {
                let mut f = 0.0;
                for j in 0..2 {
                    let (mn, mx) = bounds[j];
                    f += w[j] * ((x(t, s, j) - mn) / (mx - mn)).clamp(0.0, 1.0);
                }
                let v = got.scores.value(t, s, 0).unwrap();
                assert!((v - f).abs() < 1e-12, "month {t} stock {s}: {v} vs {f}");
            }
        }
    }

    proptest! {
        #[test]
        fn entropy_scale_invariant(z in prop::collection::vec(0f64..10.0, 2..50), c in 0.01f64..100.0) {
            prop_assume!(z.iter().any(|v| *v > 0.0));
            let scaled: Vec<f64> = z.iter().map(|v| v * c).collect();
            let a = ewm_entropy(&z).unwrap().value;
            let b = ewm_entropy(&scaled).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
