//! Decade clustering of fitted Maxwell elements.
//!
//! A fit with an element budget `N` typically splits one physical mode
//! across several elements with nearly equal relaxation times. Elements are
//! grouped by the decade `k = floor(log10 tau)` of their relaxation time,
//! i.e. `tau` in `[10^k, 10^(k+1))`, and each group is replaced by a single
//! element with the summed stiffness and the stiffness-weighted mean
//! relaxation time. The number of non-empty groups is the recovered element
//! count.

use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{self, FitConfig, FitResult};
use crate::rheology::{MaterialModel, MaxwellElement};
use crate::synth::StressDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PostStep {
    #[default]
    Merge,
    Refit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub post_step: PostStep,
    /// Elements with stiffness at or below this value are discarded.
    pub drop_threshold: f64,
    /// When set, every decade below this one is folded into it.
    pub lowest_decade: Option<i32>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            post_step: PostStep::Merge,
            drop_threshold: 1e-6,
            lowest_decade: None,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.drop_threshold.is_finite() && self.drop_threshold >= 0.0) {
            return Err(Error::config("drop_threshold must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub decade: i32,
    pub members: Vec<MaxwellElement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Merge,
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub bins: Vec<Bin>,
    pub model: MaterialModel,
    pub element_count: usize,
    pub provenance: Provenance,
    /// Data term of the unclustered fit.
    pub residual_before: f64,
    /// Data term of the merged model.
    pub residual_merged: f64,
    /// Data term of the refit model, when a refit ran.
    pub residual_refit: Option<f64>,
    /// Data term of the returned model.
    pub residual_after: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Decade index `k` with `10^k <= tau < 10^(k+1)`.
pub fn decade_of(tau: f64) -> i32 {
    let mut k = tau.log10().floor() as i32;
    if 10f64.powi(k + 1) <= tau {
        k += 1;
    }
    if 10f64.powi(k) > tau {
        k -= 1;
    }
    k
}

/// Groups the model's elements by decade, dropping negligible stiffnesses.
pub fn assign_bins(mdl: &MaterialModel, cfg: &ClusterConfig) -> Vec<Bin> {
    let mut bins: BTreeMap<i32, Vec<MaxwellElement>> = BTreeMap::new();
    for e in mdl.elements() {
        if e.stiffness() <= cfg.drop_threshold {
            continue;
        }
        let mut k = decade_of(e.relaxation_time());
        if let Some(lowest) = cfg.lowest_decade {
            k = k.max(lowest);
        }
        bins.entry(k).or_default().push(*e);
    }
    bins.into_iter()
        .map(|(decade, members)| Bin { decade, members })
        .collect()
}

/// Summed stiffness and stiffness-weighted mean relaxation time; `None`
/// when the members carry no stiffness at all.
pub fn merge_bin(members: &[MaxwellElement]) -> Option<MaxwellElement> {
    let total: f64 = members.iter().map(|e| e.stiffness()).sum();
    if members.is_empty() || total <= 0.0 {
        return None;
    }
    if members.len() == 1 {
        return Some(members[0]);
    }
    let tau: f64 = members
        .iter()
        .map(|e| e.stiffness() / total * e.relaxation_time())
        .sum();
    // rounding can push the mean a hair outside the members' range
    let lo = members
        .iter()
        .map(|e| e.relaxation_time())
        .fold(f64::INFINITY, f64::min);
    let hi = members
        .iter()
        .map(|e| e.relaxation_time())
        .fold(0.0, f64::max);
    MaxwellElement::new(total, tau.clamp(lo, hi)).ok()
}

/// Merges every bin; returns the model and any warnings.
pub fn merge_bins(base_stiffness: f64, bins: &[Bin]) -> (MaterialModel, Vec<String>) {
    let mut warnings = Vec::new();
    let mut elements = Vec::with_capacity(bins.len());
    for b in bins {
        match merge_bin(&b.members) {
            Some(e) => elements.push(e),
            None => {
                let msg = format!("decade {} has no stiffness; bin dropped", b.decade);
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    let model = MaterialModel::new(base_stiffness, elements)
        .expect("merged elements keep a valid base stiffness");
    (model, warnings)
}

fn refit_starts(
    merged: &MaterialModel,
    d: &StressDataset,
    fit_cfg: &FitConfig,
) -> Result<Vec<MaterialModel>> {
    let n = merged.len();
    let bounds = fit_cfg.bounds.resolve(d)?;
    let total = fit_cfg.starts.max(1);
    let local = total.div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(fit_cfg.seed ^ 0x5eed_c1a5);
    let clamp_mu = |v: f64| v.clamp(0.0, bounds.stiffness_max);
    let clamp_tau = |v: f64| v.clamp(bounds.tau_min, bounds.tau_max);

    let mut starts = Vec::with_capacity(total);
    // the merged model itself, then jittered copies
    let exact = MaterialModel::new(
        clamp_mu(merged.base_stiffness()),
        merged
            .elements()
            .iter()
            .map(|e| MaxwellElement::new(clamp_mu(e.stiffness()), clamp_tau(e.relaxation_time())))
            .collect::<Result<Vec<_>>>()?,
    )?;
    starts.push(exact);
    while starts.len() < local {
        let mut jitter = |v: f64| v * (1.0 + rng.random_range(-0.2..0.2));
        let base = clamp_mu(jitter(merged.base_stiffness()));
        let elements = merged
            .elements()
            .iter()
            .map(|e| {
                MaxwellElement::new(
                    clamp_mu(jitter(e.stiffness())),
                    clamp_tau(jitter(e.relaxation_time())),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        starts.push(MaterialModel::new(base, elements)?);
    }
    starts.extend(optimize::global_starts(
        n,
        total - local,
        fit_cfg.seed,
        &bounds,
    ));
    Ok(starts)
}

/// Clusters a fit, optionally refitting with the recovered element count.
pub fn cluster(
    fit: &FitResult,
    d: &StressDataset,
    cfg: &ClusterConfig,
    fit_cfg: &FitConfig,
) -> Result<ClusterReport> {
    cfg.validate()?;
    let bins = assign_bins(&fit.model, cfg);
    let (merged, warnings) = merge_bins(fit.model.base_stiffness(), &bins);
    let residual_merged = optimize::residual_norm_sq(&merged, d)?;

    let mut report = ClusterReport {
        element_count: merged.len(),
        bins,
        model: merged.clone(),
        provenance: Provenance::Merge,
        residual_before: fit.residual,
        residual_merged,
        residual_refit: None,
        residual_after: residual_merged,
        warnings,
    };

    if cfg.post_step == PostStep::Refit {
        let starts = refit_starts(&merged, d, fit_cfg)?;
        let refit = optimize::fit_from_starts(d, fit_cfg, &starts)?;
        report.residual_refit = Some(refit.residual);
        let merged_cost = optimize::regularized_cost(&merged, d, &fit_cfg.regularizer)?;
        if refit.cost < merged_cost {
            report.model = refit.model;
            report.provenance = Provenance::Refit;
            report.residual_after = refit.residual;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(mu: f64, tau: f64) -> MaxwellElement {
        MaxwellElement::new(mu, tau).unwrap()
    }

    #[test]
    fn decade_boundaries() {
        assert_eq!(decade_of(10.0), 1);
        assert_eq!(decade_of(9.999_999), 0);
        assert_eq!(decade_of(1.0), 0);
        assert_eq!(decade_of(0.2), -1);
        assert_eq!(decade_of(1000.0), 3);
        assert_eq!(decade_of(0.001), -3);
        for k in -8..8 {
            assert_eq!(decade_of(10f64.powi(k)), k);
        }
    }

    #[test]
    fn bins_of_split_fit() {
        let mdl = MaterialModel::from_pairs(
            10.0,
            &[
                (4.0, 0.2),
                (3.685, 3.695),
                (1.621, 3.706),
                (1.694, 3.706),
                (1.0, 25.0),
            ],
        )
        .unwrap();
        let bins = assign_bins(&mdl, &ClusterConfig::default());
        let sizes: Vec<(i32, usize)> = bins.iter().map(|b| (b.decade, b.members.len())).collect();
        assert_eq!(sizes, vec![(-1, 1), (0, 3), (1, 1)]);
        assert!(assign_bins(
            &MaterialModel::new(1.0, vec![]).unwrap(),
            &ClusterConfig::default()
        )
        .is_empty());
    }

    #[test]
    fn negligible_elements_are_dropped() {
        let mdl =
            MaterialModel::from_pairs(1.0, &[(1e-9, 500.0), (2.0, 3.0), (0.0, 0.05)]).unwrap();
        let bins = assign_bins(&mdl, &ClusterConfig::default());
        assert_eq!(bins.len(), 1);
    }

    #[test]
    fn lowest_decade_folds_fast_modes() {
        let mdl = MaterialModel::from_pairs(1.0, &[(1.0, 0.002), (2.0, 0.3), (2.0, 3.0)]).unwrap();
        let cfg = ClusterConfig {
            lowest_decade: Some(-1),
            ..ClusterConfig::default()
        };
        let bins = assign_bins(&mdl, &cfg);
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0].decade, -1);
        assert_eq!(bins[0].members.len(), 2);
    }

    #[test]
    fn weighted_merge() {
        let merged = merge_bin(&[el(7.0, 4.0), el(1.0, 4.5), el(2.0, 3.75)]).unwrap();
        assert_eq!(merged.stiffness(), 10.0);
        assert!((merged.relaxation_time() - 4.0).abs() < 1e-14);

        let merged = merge_bin(&[el(3.685, 3.695), el(1.621, 3.706), el(1.694, 3.706)]).unwrap();
        assert_eq!(format!("{:.3}", merged.stiffness()), "7.000");
        assert_eq!(format!("{:.3}", merged.relaxation_time()), "3.700");

        assert_eq!(merge_bin(&[el(2.5, 0.7)]).unwrap(), el(2.5, 0.7));
        assert!(merge_bin(&[el(0.0, 1.0), el(0.0, 2.0)]).is_none());
        assert!(merge_bin(&[]).is_none());
    }

    #[test]
    fn zero_stiffness_bin_is_dropped_with_warning() {
        let bins = vec![
            Bin {
                decade: 0,
                members: vec![el(0.0, 2.0)],
            },
            Bin {
                decade: 1,
                members: vec![el(1.0, 20.0)],
            },
        ];
        let (model, warnings) = merge_bins(3.0, &bins);
        assert_eq!(model.len(), 1);
        assert_eq!(warnings.len(), 1);
    }
}
