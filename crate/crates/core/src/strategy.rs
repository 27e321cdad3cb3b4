//! Strategies for deciding which taxa carry an active relative mediation
//! effect.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::composition::PartitionScheme;
use crate::error::{Error, Result};
use crate::estimands::{direct_effect, overall_indirect, relative_indirect, subject_profiles, EffectSummary};
use crate::mcmc::rng::derive_seed;
use crate::mcmc::{run_chain_with, FitOptions, IndicatorFamily, PosteriorTrace, SamplerConfig};
use crate::model::{Dataset, Hyperparameters};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// One fit per taxon with that taxon leading the partition; select on
    /// the inclusion probabilities of its treatment term and first balance.
    CMbvs1,
    /// One fit; select when the relative effect's interval excludes zero.
    CMbvs2,
    /// Fit, drop weak treatment terms, refit, then apply the interval rule.
    CMbvs3,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::CMbvs1 => "cmbvs1",
            Strategy::CMbvs2 => "cmbvs2",
            Strategy::CMbvs3 => "cmbvs3",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cmbvs1" => Ok(Strategy::CMbvs1),
            "cmbvs2" => Ok(Strategy::CMbvs2),
            "cmbvs3" => Ok(Strategy::CMbvs3),
            other => Err(Error::Usage(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub mppi_threshold: f64,
    pub ci_level: f64,
    /// CMbvs1 only: refit every taxon instead of only those whose
    /// treatment term passed the threshold in the initial fit.
    pub exhaustive: bool,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            mppi_threshold: 0.5,
            ci_level: 0.95,
            exhaustive: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mppi threshold", self.mppi_threshold), ("credible level", self.ci_level)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} {v} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Outcome of a strategy run.
#[derive(Clone, Debug)]
pub struct Selection {
    pub strategy: Strategy,
    /// Taxon-level decision: selected under at least one profile.
    pub selected: Vec<bool>,
    /// `per_profile[p][j]`.
    pub per_profile: Vec<Vec<bool>>,
    pub profiles: Vec<Vec<f64>>,
    /// Relative effects, profile-major, each with `selected` filled in.
    pub relative: Vec<EffectSummary<f64>>,
    pub overall: Vec<EffectSummary<f64>>,
    pub direct: EffectSummary<f64>,
    /// Trace used for the direct and overall effects.
    pub trace: PosteriorTrace,
    pub fits: usize,
}

impl Selection {
    pub fn selected_taxa(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&j| self.selected[j]).collect()
    }
}

fn profile_arg(profiles: &[Vec<f64>], p: usize) -> Option<(usize, &[f64])> {
    if profiles.len() == 1 && profiles[0].is_empty() {
        None
    } else {
        Some((p, profiles[p].as_slice()))
    }
}

/// Applies the interval rule to every taxon under every profile.
fn interval_rule(trace: PosteriorTrace, profiles: Vec<Vec<f64>>, scfg: &StrategyConfig, fits: usize) -> Result<Selection> {
    let parts = trace.scheme.parts();
    let phi_mppi = trace.mppi(IndicatorFamily::Treatment)?;
    let mut relative = Vec::new();
    let mut overall = Vec::new();
    let mut per_profile = Vec::new();
    for p in 0..profiles.len() {
        let arg = profile_arg(&profiles, p);
        let mut rel = relative_indirect(&trace, arg, scfg.ci_level)?;
        let mut flags = vec![false; parts];
        for e in &mut rel {
            let j = e.taxon.expect("relative effects carry a taxon");
            e.selected = e.excludes_zero();
            e.mppi = Some(phi_mppi[j]);
            flags[j] = e.selected;
        }
        relative.extend(rel);
        overall.push(overall_indirect(&trace, arg, scfg.ci_level)?);
        per_profile.push(flags);
    }
    let selected = (0..parts).map(|j| per_profile.iter().any(|f| f[j])).collect();
    Ok(Selection {
        strategy: scfg.strategy,
        selected,
        per_profile,
        profiles,
        relative,
        overall,
        direct: direct_effect(&trace, scfg.ci_level)?,
        trace,
        fits,
    })
}

/// CMbvs2 on an existing fit.
pub fn select_cmbvs2(trace: PosteriorTrace, data: &Dataset, scfg: &StrategyConfig) -> Result<Selection> {
    scfg.validate()?;
    let profiles = subject_profiles(data);
    let mut s = interval_rule(trace, profiles, scfg, 1)?;
    s.strategy = Strategy::CMbvs2;
    Ok(s)
}

/// CMbvs3: taxa whose treatment term has MPPI below the threshold in a
/// first fit have it fixed at zero in a second fit, whose relative effects
/// are then judged by the interval rule.
pub fn select_cmbvs3(
    data: &Dataset,
    hp: &Hyperparameters,
    cfg: &SamplerConfig,
    scfg: &StrategyConfig,
) -> Result<Selection> {
    scfg.validate()?;
    let first = run_chain_with(data, hp, cfg, &FitOptions::default())?;
    select_cmbvs3_from(&first, data, hp, cfg, scfg)
}

/// CMbvs3 with the first-stage fit supplied.
pub fn select_cmbvs3_from(
    first: &PosteriorTrace,
    data: &Dataset,
    hp: &Hyperparameters,
    cfg: &SamplerConfig,
    scfg: &StrategyConfig,
) -> Result<Selection> {
    scfg.validate()?;
    let phi = first.mppi(IndicatorFamily::Treatment)?;
    let excluded: Vec<usize> = (0..phi.len()).filter(|&j| phi[j] < scfg.mppi_threshold).collect();
    let refit_cfg = SamplerConfig {
        seed: derive_seed(cfg.seed, 0),
        ..cfg.clone()
    };
    let opts = FitOptions {
        excluded_treatment: excluded,
        ..FitOptions::default()
    };
    let second = run_chain_with(data, hp, &refit_cfg, &opts)?;
    let mut s = interval_rule(second, subject_profiles(data), scfg, 2)?;
    s.strategy = Strategy::CMbvs3;
    Ok(s)
}

/// CMbvs1. The identity-ordered fit serves taxon 0 directly; every other
/// candidate is refitted with itself leading the partition. Refits run in
/// parallel with seeds derived from the taxon index.
pub fn select_cmbvs1(
    data: &Dataset,
    hp: &Hyperparameters,
    cfg: &SamplerConfig,
    scfg: &StrategyConfig,
) -> Result<Selection> {
    scfg.validate()?;
    let initial = run_chain_with(data, hp, cfg, &FitOptions::default())?;
    select_cmbvs1_from(initial, data, hp, cfg, scfg)
}

/// CMbvs1 with the identity-ordered fit supplied.
pub fn select_cmbvs1_from(
    initial: PosteriorTrace,
    data: &Dataset,
    hp: &Hyperparameters,
    cfg: &SamplerConfig,
    scfg: &StrategyConfig,
) -> Result<Selection> {
    scfg.validate()?;
    let parts = data.taxa_count();
    if initial.scheme != PartitionScheme::sequential(parts)? {
        return Err(Error::Usage("initial fit must use the identity ordering".into()));
    }
    let phi0 = initial.mppi(IndicatorFamily::Treatment)?;
    let candidates: Vec<usize> = (1..parts)
        .filter(|&j| scfg.exhaustive || phi0[j] >= scfg.mppi_threshold)
        .collect();

    let refits: Vec<(usize, PosteriorTrace)> = candidates
        .par_iter()
        .map(|&j| {
            let scheme = PartitionScheme::with_first(parts, j)?;
            let cfg_j = SamplerConfig {
                seed: derive_seed(cfg.seed, j as u64 + 1),
                ..cfg.clone()
            };
            run_chain_with(data, hp, &cfg_j, &FitOptions::with_scheme(scheme))
                .map(|t| (j, t))
                .map_err(|e| Error::TaxonFit {
                    taxon: j,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let profiles = subject_profiles(data);
    let mut lead: Vec<Option<&PosteriorTrace>> = vec![None; parts];
    lead[0] = Some(&initial);
    for (j, t) in &refits {
        lead[*j] = Some(t);
    }

    let mut selected = vec![false; parts];
    let mut mppi_pair = vec![(phi0[0], 0.0); parts];
    for j in 0..parts {
        if let Some(t) = lead[j] {
            let phi = t.mppi(IndicatorFamily::Treatment)?[j];
            let xi = t.mppi(IndicatorFamily::Balance)?[0];
            selected[j] = phi >= scfg.mppi_threshold && xi >= scfg.mppi_threshold;
            mppi_pair[j] = (phi, xi);
        } else {
            mppi_pair[j] = (phi0[j], 0.0);
        }
    }

    let mut relative = Vec::new();
    let mut overall = Vec::new();
    for p in 0..profiles.len() {
        let arg = profile_arg(&profiles, p);
        let base = relative_indirect(&initial, arg, scfg.ci_level)?;
        for j in 0..parts {
            let mut e = match lead[j] {
                Some(t) if j != 0 => relative_indirect(t, arg, scfg.ci_level)?.swap_remove(j),
                _ => base[j].clone(),
            };
            e.selected = selected[j];
            e.mppi = Some(mppi_pair[j].0.min(mppi_pair[j].1));
            relative.push(e);
        }
        overall.push(overall_indirect(&initial, arg, scfg.ci_level)?);
    }

    Ok(Selection {
        strategy: Strategy::CMbvs1,
        per_profile: vec![selected.clone(); profiles.len()],
        selected,
        profiles,
        relative,
        overall,
        direct: direct_effect(&initial, scfg.ci_level)?,
        trace: initial,
        fits: 1 + refits.len(),
    })
}

/// Runs the configured strategy end to end.
pub fn mediate(
    data: &Dataset,
    hp: &Hyperparameters,
    cfg: &SamplerConfig,
    scfg: &StrategyConfig,
) -> Result<Selection> {
    match scfg.strategy {
        Strategy::CMbvs1 => select_cmbvs1(data, hp, cfg, scfg),
        Strategy::CMbvs2 => {
            scfg.validate()?;
            let trace = run_chain_with(data, hp, cfg, &FitOptions::default())?;
            select_cmbvs2(trace, data, scfg)
        }
        Strategy::CMbvs3 => select_cmbvs3(data, hp, cfg, scfg),
    }
}
