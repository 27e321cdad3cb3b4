//! Metropolis-within-Gibbs sampler for the joint model.
//!
//! One sweep updates, in order: the augmentation scale `u`, the gamma
//! latents `k`, the count-level intercepts `α`, the count-level
//! spike-and-slab blocks (`φ`, `θ`) and the outcome block (`c0`, `c1`, `β`,
//! `κ`, `σ²`).

mod kernel;
pub mod rng;
pub mod trace;

use std::fmt;

use crate::composition::PartitionScheme;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Dataset, DmParams, Hyperparameters};

pub use kernel::Chain;
pub use trace::{write_trace, IndicatorFamily, PosteriorTrace, Snapshot};

/// How many Add-Delete proposals each indicator family gets per sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scan {
    /// One index chosen uniformly at random.
    Single,
    /// Every index in turn.
    Full,
}

/// Blocking of the gamma-latent update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KUpdate {
    /// One accept/reject per latent `k_ij`.
    PerTaxon,
    /// One accept/reject per subject for the whole row `k_i`.
    FullRow,
}

impl fmt::Display for Scan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scan::Single => "single",
            Scan::Full => "full",
        })
    }
}

impl std::str::FromStr for Scan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Scan::Single),
            "full" => Ok(Scan::Full),
            _ => Err(Error::Usage(format!("unknown scan `{s}` (single|full)"))),
        }
    }
}

impl fmt::Display for KUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KUpdate::PerTaxon => "per-taxon",
            KUpdate::FullRow => "full-row",
        })
    }
}

impl std::str::FromStr for KUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-taxon" => Ok(KUpdate::PerTaxon),
            "full-row" => Ok(KUpdate::FullRow),
            _ => Err(Error::Usage(format!("unknown k update `{s}` (per-taxon|full-row)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub rw_sd_alpha: f64,
    pub rw_sd_coef: f64,
    pub seed: u64,
    pub scan: Scan,
    pub k_update: KUpdate,
    /// Keep every retained `ψ` matrix, not only the running mean.
    pub store_psi: bool,
}

impl Default for SamplerConfig {
    /// 5000 iterations, 250 burn-in, thinned by 10.
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 250,
            thin: 10,
            rw_sd_alpha: 0.5,
            rw_sd_coef: 0.5,
            seed: 1,
            scan: Scan::Full,
            k_update: KUpdate::PerTaxon,
            store_psi: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.rw_sd_alpha > 0.0 && self.rw_sd_coef > 0.0) {
            return Err(Error::Config("random-walk standard deviations must be positive".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    #[inline]
    pub(crate) fn is_retained(&self, iteration: usize) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in).is_multiple_of(self.thin)
    }
}

/// Structural choices for one fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Balance ordering; identity when `None`.
    pub scheme: Option<PartitionScheme>,
    /// Taxa whose treatment term is removed (`φ_j ≡ 0`, no selection).
    pub excluded_treatment: Vec<usize>,
    /// Hold every count-level parameter at this value.
    pub fixed_dm: Option<DmParams>,
    /// Drop the balances from the outcome model (`β ≡ 0`).
    pub exclude_balances: bool,
    /// `false` samples the prior: every data term is treated as constant.
    pub likelihood: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            scheme: None,
            excluded_treatment: Vec::new(),
            fixed_dm: None,
            exclude_balances: false,
            likelihood: true,
        }
    }
}

impl FitOptions {
    pub fn with_scheme(scheme: PartitionScheme) -> Self {
        Self {
            scheme: Some(scheme),
            ..Self::default()
        }
    }
}

/// Proposal/acceptance counters for one update type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    #[inline]
    pub(crate) fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AcceptanceStats {
    pub k: Counter,
    pub alpha: Counter,
    pub phi_add_delete: Counter,
    pub phi_refresh: Counter,
    pub theta_add_delete: Counter,
    pub theta_refresh: Counter,
    pub beta_add_delete: Counter,
    pub kappa_add_delete: Counter,
}

impl AcceptanceStats {
    pub fn entries(&self) -> [(&'static str, Counter); 8] {
        [
            ("k", self.k),
            ("alpha", self.alpha),
            ("phi_add_delete", self.phi_add_delete),
            ("phi_refresh", self.phi_refresh),
            ("theta_add_delete", self.theta_add_delete),
            ("theta_refresh", self.theta_refresh),
            ("beta_add_delete", self.beta_add_delete),
            ("kappa_add_delete", self.kappa_add_delete),
        ]
    }
}

impl fmt::Display for AcceptanceStats {
    /// `key = value` block, one line per update type.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, c) in self.entries() {
            writeln!(f, "{name}.proposed = {}", c.proposed)?;
            writeln!(f, "{name}.accepted = {}", c.accepted)?;
            if c.proposed > 0 {
                writeln!(f, "{name}.rate = {}", c.rate())?;
            }
        }
        Ok(())
    }
}

/// Runs one chain with the identity balance ordering.
pub fn run_chain(data: &Dataset, hp: &Hyperparameters, cfg: &SamplerConfig) -> Result<PosteriorTrace> {
    run_chain_with(data, hp, cfg, &FitOptions::default())
}

pub fn run_chain_with(
    data: &Dataset,
    hp: &Hyperparameters,
    cfg: &SamplerConfig,
    opts: &FitOptions,
) -> Result<PosteriorTrace> {
    let mut chain = Chain::new(data, hp, cfg, opts)?;
    let retained = cfg.retained();
    let parts = data.taxa_count();
    let mut snapshots = Vec::with_capacity(retained);
    let mut psi_sum = Matrix::filled(data.n(), parts, 0.0);
    let mut psi_row = vec![0.0; parts];
    for iteration in 1..=cfg.iterations {
        chain.sweep().map_err(|e| Error::ChainAborted {
            iteration,
            last_good: iteration - 1,
            source: Box::new(e),
        })?;
        if cfg.is_retained(iteration) {
            let (outcome, dm) = chain.params();
            outcome.check_exclusion()?;
            dm.check_exclusion()?;
            let mut psi = cfg.store_psi.then(|| Matrix::filled(data.n(), parts, 0.0));
            for i in 0..data.n() {
                chain.augmentation().psi_row(i, &mut psi_row);
                for (acc, v) in psi_sum.row_mut(i).iter_mut().zip(&psi_row) {
                    *acc += v;
                }
                if let Some(m) = psi.as_mut() {
                    m.row_mut(i).copy_from_slice(&psi_row);
                }
            }
            snapshots.push(Snapshot {
                iteration,
                outcome: outcome.clone(),
                dm: dm.clone(),
                psi,
            });
        }
    }
    let count = snapshots.len().max(1) as f64;
    for v in psi_sum.as_mut_slice() {
        *v /= count;
    }
    Ok(PosteriorTrace {
        scheme: chain.scheme().clone(),
        snapshots,
        psi_mean: psi_sum,
        acceptance: *chain.stats(),
        config: cfg.clone(),
    })
}

/// Marginal posterior probability of inclusion for every indicator in a
/// family: the mean of its retained samples.
pub fn mppi(trace: &PosteriorTrace, which: IndicatorFamily) -> Result<Vec<f64>> {
    trace.mppi(which)
}

/// Shared by tests of the sampler and of downstream modules.
#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::model::Dataset;

    pub fn tiny_dataset() -> Dataset {
        let counts = Matrix::from_vec(
            6,
            3,
            vec![10, 3, 0, 8, 5, 1, 2, 9, 4, 12, 1, 1, 3, 3, 6, 7, 0, 2],
        );
        let outcome = vec![0.5, -0.2, 1.1, 0.3, -0.8, 0.0];
        let treatment = vec![true, false, true, true, false, false];
        Dataset::without_covariates(counts, outcome, treatment).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retained_count() {
        let cfg = SamplerConfig {
            iterations: 5000,
            burn_in: 250,
            thin: 10,
            ..SamplerConfig::default()
        };
        assert_eq!(cfg.retained(), 475);
        let kept = (1..=cfg.iterations).filter(|&it| cfg.is_retained(it)).count();
        assert_eq!(kept, 475);
    }

    #[test]
    fn config_validation() {
        let bad = SamplerConfig {
            burn_in: 10,
            iterations: 10,
            ..SamplerConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = SamplerConfig {
            thin: 0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_has_expected_length_and_is_deterministic() {
        let ds = testing::tiny_dataset();
        let hp = Hyperparameters::defaults(3);
        let cfg = SamplerConfig {
            iterations: 300,
            burn_in: 50,
            thin: 5,
            seed: 99,
            ..SamplerConfig::default()
        };
        let a = run_chain(&ds, &hp, &cfg).unwrap();
        let b = run_chain(&ds, &hp, &cfg).unwrap();
        assert_eq!(a.snapshots.len(), 50);
        assert_eq!(a, b);
        let c = run_chain(&ds, &hp, &SamplerConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.snapshots, c.snapshots);
    }

    #[test]
    fn mppi_requires_samples() {
        let ds = testing::tiny_dataset();
        let hp = Hyperparameters::defaults(3);
        let cfg = SamplerConfig {
            iterations: 20,
            burn_in: 0,
            thin: 1,
            ..SamplerConfig::default()
        };
        let mut trace = run_chain(&ds, &hp, &cfg).unwrap();
        assert_eq!(mppi(&trace, IndicatorFamily::Treatment).unwrap().len(), 3);
        trace.snapshots.clear();
        assert!(matches!(mppi(&trace, IndicatorFamily::Balance), Err(Error::Usage(_))));
    }
}
